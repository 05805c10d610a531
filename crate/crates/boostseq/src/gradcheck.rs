//! Central-difference verification of analytic gradients.

use crate::scalar::Scalar;
use crate::tensor::Tensor;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GradCheckError {
    #[error("non-finite function value at probe index {index}")]
    NonFinite { index: usize },
    #[error("step must be positive")]
    BadStep,
    #[error("gradient shape {grad:?} does not match point shape {point:?}")]
    ShapeMismatch { grad: Vec<usize>, point: Vec<usize> },
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Relative discrepancy with a unit floor, so near-zero entries are compared
/// absolutely.
pub fn rel_discrepancy(a: f64, n: f64) -> f64 {
    (a - n).abs() / 1.0f64.max(a.abs()).max(n.abs())
}

/// Checks an analytic gradient of a scalar-valued function against central
/// finite differences at `point`.
///
/// `f` evaluates the function; `analytic_grad` returns the gradient being
/// verified. The two must not share a differentiation path for the check to
/// mean anything.
pub fn grad_check<S: Scalar>(
    f: impl Fn(&Tensor<S>) -> S,
    analytic_grad: &Tensor<S>,
    point: &Tensor<S>,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport, GradCheckError> {
    if !(step > 0.0) {
        return Err(GradCheckError::BadStep);
    }
    if analytic_grad.shape() != point.shape() {
        return Err(GradCheckError::ShapeMismatch {
            grad: analytic_grad.shape().to_vec(),
            point: point.shape().to_vec(),
        });
    }
    let h = S::from_f64_lossy(step);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        tol,
        pass: true,
    };
    let mut probe = point.clone();
    for i in 0..point.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let fp = f(&probe);
        probe.data_mut()[i] = orig - h;
        let fm = f(&probe);
        probe.data_mut()[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(GradCheckError::NonFinite { index: i });
        }
        let numeric = (fp.to_f64_lossy() - fm.to_f64_lossy()) / (2.0 * step);
        let analytic = analytic_grad.data()[i].to_f64_lossy();
        let err = rel_discrepancy(analytic, numeric);
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_index = i;
            report.worst_analytic = analytic;
            report.worst_numeric = numeric;
        }
    }
    report.pass = report.max_rel_err <= tol;
    Ok(report)
}

/// Central-difference gradient of a scalar function, for test oracles.
pub fn numeric_gradient<S: Scalar>(
    f: impl Fn(&Tensor<S>) -> S,
    point: &Tensor<S>,
    step: f64,
) -> Tensor<S> {
    let h = S::from_f64_lossy(step);
    let two = S::from_f64_lossy(2.0 * step);
    let mut probe = point.clone();
    let mut out = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let fp = f(&probe);
        probe.data_mut()[i] = orig - h;
        let fm = f(&probe);
        probe.data_mut()[i] = orig;
        out.push((fp - fm) / two);
    }
    Tensor::new(point.shape().to_vec(), out).expect("gradient shape")
}
