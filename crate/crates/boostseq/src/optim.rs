//! Parameters and the RMSProp update.

use crate::scalar::Scalar;
use crate::tensor::Tensor;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient for parameter {index} ({name})")]
    NonFiniteGradient { index: usize, name: String },
    #[error("gradient shape {grad:?} does not match parameter shape {param:?}")]
    ShapeMismatch { grad: Vec<usize>, param: Vec<usize> },
    #[error("invalid hyperparameter: {0}")]
    BadHyper(&'static str),
}

/// A trainable tensor plus its accumulated squared-gradient state.
#[derive(Clone, Debug)]
pub struct Parameter<S = f64> {
    pub value: Tensor<S>,
    pub sq_grad: Tensor<S>,
}

impl<S: Scalar> Parameter<S> {
    pub fn new(value: Tensor<S>) -> Self {
        let sq_grad = Tensor::zeros(value.shape());
        Parameter { value, sq_grad }
    }
}

/// Named, ordered set of parameters for one model.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<S = f64> {
    params: Vec<Parameter<S>>,
    names: Vec<String>,
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        ParamSet {
            params: Vec::new(),
            names: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor<S>) -> usize {
        self.params.push(Parameter::new(value));
        self.names.push(name.into());
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, idx: usize) -> &Tensor<S> {
        &self.params[idx].value
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn param(&self, idx: usize) -> &Parameter<S> {
        &self.params[idx]
    }

    pub fn param_mut(&mut self, idx: usize) -> &mut Parameter<S> {
        &mut self.params[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter<S>)> {
        self.names
            .iter()
            .map(|n| n.as_str())
            .zip(self.params.iter())
    }

    /// Copy values (not optimizer state) from another set with the same layout.
    pub fn copy_values_from(&mut self, other: &ParamSet<S>) {
        assert_eq!(self.params.len(), other.params.len(), "layout mismatch");
        for (dst, src) in self.params.iter_mut().zip(other.params.iter()) {
            assert_eq!(dst.value.shape(), src.value.shape(), "layout mismatch");
            dst.value = src.value.clone();
        }
    }

    /// Reset accumulated squared gradients to zero.
    pub fn reset_optimizer_state(&mut self) {
        for p in &mut self.params {
            p.sq_grad = Tensor::zeros(p.value.shape());
        }
    }

    pub fn total_len(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Set every value of every parameter to zero (diagnostics).
    pub fn zero_values(&mut self) {
        for p in &mut self.params {
            p.value = Tensor::zeros(p.value.shape());
        }
    }
}

/// One RMSProp step:
/// s <- rho * s + (1 - rho) * g^2 ; theta <- theta - lr * g / sqrt(s + eps).
///
/// `grads` is aligned with the set by index; `None` entries count as zero
/// gradients and leave the value untouched.
pub fn rmsprop_step<S: Scalar>(
    set: &mut ParamSet<S>,
    grads: &[Option<Tensor<S>>],
    lr: f64,
    decay_rate: f64,
    epsilon: f64,
) -> Result<(), OptimError> {
    if !(lr > 0.0) {
        return Err(OptimError::BadHyper("lr must be > 0"));
    }
    if !(decay_rate > 0.0 && decay_rate < 1.0) {
        return Err(OptimError::BadHyper("decay_rate must be in (0, 1)"));
    }
    let rho = S::from_f64_lossy(decay_rate);
    let one_m_rho = S::one() - rho;
    let lr_s = S::from_f64_lossy(lr);
    let eps = S::from_f64_lossy(epsilon);
    for idx in 0..set.len() {
        match grads.get(idx).and_then(|g| g.as_ref()) {
            None => {
                // zero gradient: state decays, value is a fixed point
                set.param_mut(idx).sq_grad.scale_assign(rho);
            }
            Some(g) => {
                if g.shape() != set.param(idx).value.shape() {
                    return Err(OptimError::ShapeMismatch {
                        grad: g.shape().to_vec(),
                        param: set.param(idx).value.shape().to_vec(),
                    });
                }
                if !g.all_finite() {
                    let name = set.name(idx).to_string();
                    return Err(OptimError::NonFiniteGradient { index: idx, name });
                }
                let p = set.param_mut(idx);
                let Parameter { value, sq_grad } = p;
                for ((s, v), &gv) in sq_grad
                    .data_mut()
                    .iter_mut()
                    .zip(value.data_mut().iter_mut())
                    .zip(g.data())
                {
                    *s = rho * *s + one_m_rho * gv * gv;
                    *v = *v - lr_s * gv / (*s + eps).sqrt();
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut set = ParamSet::<f64>::new();
        set.push("w", Tensor::filled(&[3], 1.5));
        let grads = vec![Some(Tensor::zeros(&[3]))];
        rmsprop_step(&mut set, &grads, 0.1, 0.9, 1e-8).unwrap();
        assert_eq!(set.value(0).data(), &[1.5, 1.5, 1.5]);
        // absent gradient behaves the same
        rmsprop_step(&mut set, &[None], 0.1, 0.9, 1e-8).unwrap();
        assert_eq!(set.value(0).data(), &[1.5, 1.5, 1.5]);
    }

    #[test]
    fn closed_form_first_step() {
        // s=0, g=1, lr=0.1, rho=0.9 => delta = -0.1 / sqrt(0.1) ~ -0.31623
        let mut set = ParamSet::<f64>::new();
        set.push("w", Tensor::scalar(0.0));
        let grads = vec![Some(Tensor::scalar(1.0))];
        rmsprop_step(&mut set, &grads, 0.1, 0.9, 0.0).unwrap();
        let delta = set.value(0).data()[0];
        assert!((delta + 0.1 / 0.1f64.sqrt()).abs() < 1e-12, "delta={delta}");
        assert!((delta + 0.31622776601683794).abs() < 1e-12);
    }

    #[test]
    fn repeated_gradient_step_approaches_lr() {
        let mut set = ParamSet::<f64>::new();
        set.push("w", Tensor::scalar(0.0));
        let mut prev = 0.0;
        let mut delta = 0.0;
        for _ in 0..100 {
            let grads = vec![Some(Tensor::scalar(1.0))];
            rmsprop_step(&mut set, &grads, 0.05, 0.9, 0.0).unwrap();
            let cur = set.value(0).data()[0];
            delta = (cur - prev).abs();
            prev = cur;
        }
        assert!((delta - 0.05).abs() < 1e-4, "|delta|={delta}");
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut set = ParamSet::<f64>::new();
        set.push("w", Tensor::scalar(0.0));
        let grads = vec![Some(Tensor::scalar(f64::NAN))];
        assert!(matches!(
            rmsprop_step(&mut set, &grads, 0.1, 0.9, 1e-8),
            Err(OptimError::NonFiniteGradient { .. })
        ));
    }

    #[test]
    fn hyperparameters_validated() {
        let mut set = ParamSet::<f64>::new();
        set.push("w", Tensor::scalar(0.0));
        assert!(rmsprop_step(&mut set, &[None], 0.0, 0.9, 0.0).is_err());
        assert!(rmsprop_step(&mut set, &[None], 0.1, 1.0, 0.0).is_err());
    }
}
