//! Weak-learner training: negative log-likelihood for a family's first
//! boosting iteration, quadratic regression on sample weights afterwards.
//! RMSProp with per-epoch learning-rate decay, best-epoch checkpointing and
//! early stopping on a held-out validation split.

use super::{LearnerError, WeakLearner};
use crate::graph::NodeId;
use crate::matrix::SeqMatrix;
use crate::optim::{rmsprop_step, OptimError};
use crate::rng::SplitRng;
use crate::tensor::Tensor as GenericTensor;
use rand::seq::SliceRandom;
use thiserror::Error;

type Tensor = GenericTensor<f64>;
type Graph = crate::graph::Graph<f64>;

/// Probability clamp applied inside logarithms.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("invalid training config: {0}")]
    BadConfig(&'static str),
    #[error("invalid targets: {0}")]
    BadTargets(&'static str),
    #[error("target rows do not match data items")]
    TargetShape,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("empty validation set")]
    EmptyValidationSet,
    #[error("config.loss does not match the trainer entry point")]
    LossMismatch,
    #[error("warm-start learner has a different architecture")]
    WarmStartMismatch,
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Nll,
    L2,
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub lr: f64,
    /// Per-epoch multiplicative learning-rate decay (1.0 = constant).
    pub lr_decay: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub loss: LossKind,
    /// Optional cap on items visited per epoch (after shuffling).
    pub max_items_per_epoch: Option<usize>,
}

impl TrainConfig {
    /// Frame-learner settings: lr 0.01 decaying x0.95 per epoch.
    pub fn cnn_default() -> Self {
        TrainConfig {
            lr: 0.01,
            lr_decay: 0.95,
            rho: 0.9,
            epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 30,
            patience: 5,
            loss: LossKind::Nll,
            max_items_per_epoch: None,
        }
    }

    /// Sequence-learner settings: constant lr 0.001.
    pub fn rnn_default() -> Self {
        TrainConfig {
            lr: 0.001,
            lr_decay: 1.0,
            rho: 0.9,
            epsilon: 1e-8,
            batch_size: 4,
            max_epochs: 40,
            patience: 5,
            loss: LossKind::Nll,
            max_items_per_epoch: None,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lr > 0.0) {
            return Err(TrainError::BadConfig("lr must be > 0"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(TrainError::BadConfig("lr_decay must be in (0, 1]"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(TrainError::BadConfig("rho must be in (0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig("batch_size must be >= 1"));
        }
        if self.max_epochs == 0 {
            return Err(TrainError::BadConfig("max_epochs must be >= 1"));
        }
        if self.patience == 0 {
            return Err(TrainError::BadConfig("patience must be >= 1"));
        }
        Ok(())
    }
}

/// Per-frame training items; `targets` row i belongs to `frames[i]`.
pub struct FrameSet<'a> {
    pub frames: Vec<&'a Tensor>,
    pub targets: SeqMatrix,
}

/// Per-sequence training items; `targets[i]` is frame-aligned with `inputs[i]`.
pub struct SeqSet<'a> {
    pub inputs: Vec<&'a SeqMatrix>,
    pub targets: Vec<SeqMatrix>,
}

pub enum TrainData<'a> {
    Frames(FrameSet<'a>),
    Sequences(SeqSet<'a>),
}

impl<'a> TrainData<'a> {
    fn items(&self) -> usize {
        match self {
            TrainData::Frames(f) => f.frames.len(),
            TrainData::Sequences(s) => s.inputs.len(),
        }
    }

    fn check(&self) -> Result<(), TrainError> {
        match self {
            TrainData::Frames(f) => {
                if f.targets.rows() != f.frames.len() {
                    return Err(TrainError::TargetShape);
                }
            }
            TrainData::Sequences(s) => {
                if s.targets.len() != s.inputs.len() {
                    return Err(TrainError::TargetShape);
                }
                for (inp, tgt) in s.inputs.iter().zip(&s.targets) {
                    if inp.rows() != tgt.rows() {
                        return Err(TrainError::TargetShape);
                    }
                }
            }
        }
        Ok(())
    }

    fn for_each_target(&self, mut f: impl FnMut(f64)) {
        match self {
            TrainData::Frames(set) => set.targets.data().iter().for_each(|&v| f(v)),
            TrainData::Sequences(set) => set
                .targets
                .iter()
                .for_each(|m| m.data().iter().for_each(|&v| f(v))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub final_train_loss: f64,
}

/// Elementwise loss value and its derivative with respect to the logit.
#[inline]
fn loss_term(kind: LossKind, h: f64, target: f64) -> (f64, f64) {
    match kind {
        LossKind::Nll => {
            let y = 0.5 * (target + 1.0);
            let p = crate::scalar::sigmoid_scalar(h);
            let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            let loss = -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
            (loss, p - y)
        }
        LossKind::L2 => {
            let d = h - target;
            (d * d, 2.0 * d)
        }
    }
}

fn item_graph(
    learner: &WeakLearner,
    data: &TrainData,
    idx: usize,
) -> Result<(Graph, Vec<NodeId>), TrainError> {
    match data {
        TrainData::Frames(set) => {
            let mut g = Graph::with_capacity(32);
            let input = g.constant(set.frames[idx].clone());
            let logits = learner.frame_logits_node(&mut g, input)?;
            Ok((g, vec![logits]))
        }
        TrainData::Sequences(set) => {
            let inp = set.inputs[idx];
            let mut g = Graph::with_capacity(inp.rows() * 24);
            let nodes: Vec<NodeId> = (0..inp.rows())
                .map(|t| {
                    g.constant(Tensor::new(vec![inp.cols()], inp.row(t).to_vec()).expect("row"))
                })
                .collect();
            let outputs = learner.sequence_logits_nodes(&mut g, &nodes)?;
            Ok((g, outputs))
        }
    }
}

fn target_rows<'b>(data: &'b TrainData, idx: usize) -> Vec<&'b [f64]> {
    match data {
        TrainData::Frames(set) => vec![set.targets.row(idx)],
        TrainData::Sequences(set) => {
            let t = &set.targets[idx];
            (0..t.rows()).map(|r| t.row(r)).collect()
        }
    }
}

/// Loss and per-output seed tensors for one item.
fn item_loss_seeds(
    kind: LossKind,
    g: &Graph,
    outputs: &[NodeId],
    targets: &[&[f64]],
) -> (f64, Vec<Tensor>) {
    let mut loss = 0.0;
    let mut seeds = Vec::with_capacity(outputs.len());
    for (&node, row) in outputs.iter().zip(targets) {
        let h = g.value(node).data();
        let mut seed = Vec::with_capacity(h.len());
        for (&hv, &tv) in h.iter().zip(row.iter()) {
            let (l, d) = loss_term(kind, hv, tv);
            loss += l;
            seed.push(d);
        }
        seeds.push(Tensor::new(vec![h.len()], seed).expect("seed shape"));
    }
    (loss, seeds)
}

/// Total loss on a dataset, forward only.
pub fn evaluate_loss(
    learner: &WeakLearner,
    data: &TrainData,
    kind: LossKind,
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for idx in 0..data.items() {
        let (g, outputs) = item_graph(learner, data, idx)?;
        let targets = target_rows(data, idx);
        let (loss, _) = item_loss_seeds(kind, &g, &outputs, &targets);
        total += loss;
    }
    Ok(total)
}

fn train_impl(
    learner: &mut WeakLearner,
    train: &TrainData,
    val: &TrainData,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    train.check()?;
    val.check()?;
    if train.items() == 0 {
        return Err(TrainError::EmptyTrainingSet);
    }
    if val.items() == 0 {
        return Err(TrainError::EmptyValidationSet);
    }

    let root = SplitRng::new(seed);
    let n_params = learner.params.len();

    // the untouched learner is a valid checkpoint: a warm start that cannot
    // improve keeps its previous loss
    let mut best_val = evaluate_loss(learner, val, cfg.loss)?;
    let mut best_params = learner.params.clone();
    let mut best_epoch = 0usize;
    let mut bad_epochs = 0usize;
    let mut final_train_loss = f64::NAN;
    let mut epochs_run = 0usize;

    for epoch in 0..cfg.max_epochs {
        epochs_run = epoch + 1;
        let epoch_lr = cfg.lr * cfg.lr_decay.powi(epoch as i32);
        let mut order: Vec<usize> = (0..train.items()).collect();
        order.shuffle(root.split(epoch as u64 + 1).rng());
        if let Some(cap) = cfg.max_items_per_epoch {
            order.truncate(cap.max(1));
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut grads: Vec<Option<Tensor>> = (0..n_params).map(|_| None).collect();
            let mut batch_loss = 0.0;
            for &idx in chunk {
                let (g, outputs) = item_graph(learner, train, idx)?;
                let targets = target_rows(train, idx);
                let (loss, seeds) = item_loss_seeds(cfg.loss, &g, &outputs, &targets);
                batch_loss += loss;
                let mut item_grads =
                    g.backward_multi(outputs.iter().copied().zip(seeds.iter()))?;
                for &(param_id, node) in g.param_bindings() {
                    if let Some(grad) = item_grads.take(node) {
                        match &mut grads[param_id] {
                            Some(acc) => acc.add_assign(&grad).expect("grad shape"),
                            slot @ None => *slot = Some(grad),
                        }
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::Divergence { epoch });
            }
            let inv = 1.0 / chunk.len() as f64;
            for g in grads.iter_mut().flatten() {
                g.scale_assign(inv);
            }
            rmsprop_step(&mut learner.params, &grads, epoch_lr, cfg.rho, cfg.epsilon)?;
            epoch_loss += batch_loss;
        }
        final_train_loss = epoch_loss;

        let val_loss = evaluate_loss(learner, val, cfg.loss)?;
        if !val_loss.is_finite() {
            return Err(TrainError::Divergence { epoch });
        }
        if val_loss < best_val {
            best_val = val_loss;
            best_params = learner.params.clone();
            best_epoch = epoch + 1;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= cfg.patience {
                break;
            }
        }
    }

    learner.params = best_params;
    learner.params.reset_optimizer_state();
    Ok(TrainReport {
        best_val_loss: best_val,
        best_epoch,
        epochs_run,
        final_train_loss,
    })
}

/// First-iteration training: minimize the negative log-likelihood of the
/// labels (targets must be -1/+1).
pub fn train_nll(
    learner: &mut WeakLearner,
    train: &TrainData,
    val: &TrainData,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainReport, TrainError> {
    if cfg.loss != LossKind::Nll {
        return Err(TrainError::LossMismatch);
    }
    let mut ok = true;
    train.for_each_target(|v| ok &= v == 1.0 || v == -1.0);
    val.for_each_target(|v| ok &= v == 1.0 || v == -1.0);
    if !ok {
        return Err(TrainError::BadTargets("labels must be -1 or +1"));
    }
    train_impl(learner, train, val, cfg, seed)
}

/// Later-iteration training: quadratic regression onto sample weights,
/// optionally warm-started from the learner trained at the previous
/// boosting iteration.
pub fn train_l2(
    learner: &mut WeakLearner,
    train: &TrainData,
    val: &TrainData,
    cfg: &TrainConfig,
    seed: u64,
    init_from: Option<&WeakLearner>,
) -> Result<TrainReport, TrainError> {
    if cfg.loss != LossKind::L2 {
        return Err(TrainError::LossMismatch);
    }
    let mut ok = true;
    train.for_each_target(|v| ok &= v.is_finite());
    val.for_each_target(|v| ok &= v.is_finite());
    if !ok {
        return Err(TrainError::BadTargets("regression targets must be finite"));
    }
    if let Some(prev) = init_from {
        if prev.arch != learner.arch {
            return Err(TrainError::WarmStartMismatch);
        }
        learner.params.copy_values_from(&prev.params);
        learner.params.reset_optimizer_state();
        learner.provenance = prev.provenance.clone();
    }
    train_impl(learner, train, val, cfg, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{build, Architecture};

    fn labels_matrix(rows: &[Vec<f64>]) -> SeqMatrix {
        SeqMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn nll_known_values() {
        // single sample, single tool
        let (l, _) = loss_term(LossKind::Nll, 0.0, 1.0);
        assert!((l - 0.5f64.ln().abs()).abs() < 1e-12);
        let (l, _) = loss_term(LossKind::Nll, 3.0f64.ln(), 1.0);
        assert!((l + 0.75f64.ln()).abs() < 1e-12, "{l}");
        // gradient is sigmoid(h) - y
        let (_, d) = loss_term(LossKind::Nll, 0.0, 1.0);
        assert!((d + 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_learner_balanced_labels_nll_is_n_log2() {
        let arch = Architecture::BiasOnly { outputs: 2 };
        let learner = build(&arch, 0).unwrap();
        let frame = Tensor::zeros(&[2, 2, 1]);
        let frames = vec![&frame, &frame, &frame, &frame];
        let targets = labels_matrix(&[
            vec![1.0, -1.0],
            vec![-1.0, 1.0],
            vec![1.0, 1.0],
            vec![-1.0, -1.0],
        ]);
        let data = TrainData::Frames(FrameSet { frames, targets });
        let loss = evaluate_loss(&learner, &data, LossKind::Nll).unwrap();
        let expect = 8.0 * std::f64::consts::LN_2;
        assert!(
            (loss - expect).abs() <= 8.0 * f64::EPSILON * expect,
            "{loss} vs {expect}"
        );
    }

    #[test]
    fn l2_zero_targets_zero_learner_needs_no_update() {
        let arch = Architecture::BiasOnly { outputs: 3 };
        let mut learner = build(&arch, 0).unwrap();
        let frame = Tensor::zeros(&[2, 2, 1]);
        let frames = vec![&frame, &frame];
        let targets = labels_matrix(&[vec![0.0; 3], vec![0.0; 3]]);
        let data = TrainData::Frames(FrameSet { frames, targets });
        let mut cfg = TrainConfig::cnn_default();
        cfg.loss = LossKind::L2;
        cfg.max_epochs = 3;
        let frame2 = Tensor::zeros(&[2, 2, 1]);
        let val = TrainData::Frames(FrameSet {
            frames: vec![&frame2],
            targets: labels_matrix(&[vec![0.0; 3]]),
        });
        let report = train_l2(&mut learner, &data, &val, &cfg, 1, None).unwrap();
        assert_eq!(report.best_val_loss, 0.0);
        assert!(learner.params.value(0).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn l2_bias_only_fits_half() {
        // one sample, one tool, target 0.5: bias-only learner reaches it
        let arch = Architecture::BiasOnly { outputs: 1 };
        let mut learner = build(&arch, 0).unwrap();
        let frame = Tensor::zeros(&[2, 2, 1]);
        let mk = || TrainData::Frames(FrameSet {
            frames: vec![&frame],
            targets: labels_matrix(&[vec![0.5]]),
        });
        let mut cfg = TrainConfig::cnn_default();
        cfg.loss = LossKind::L2;
        cfg.lr = 0.05;
        cfg.lr_decay = 1.0;
        cfg.max_epochs = 400;
        cfg.patience = 400;
        let report = train_l2(&mut learner, &mk(), &mk(), &cfg, 1, None).unwrap();
        assert!(report.best_val_loss < 1e-4, "loss {}", report.best_val_loss);
    }

    #[test]
    fn warm_start_preserves_converged_loss() {
        let arch = Architecture::BiasOnly { outputs: 1 };
        let mut learner = build(&arch, 0).unwrap();
        let frame = Tensor::zeros(&[2, 2, 1]);
        let mk = || TrainData::Frames(FrameSet {
            frames: vec![&frame],
            targets: labels_matrix(&[vec![0.5]]),
        });
        let mut cfg = TrainConfig::cnn_default();
        cfg.loss = LossKind::L2;
        cfg.lr = 0.05;
        cfg.lr_decay = 1.0;
        cfg.max_epochs = 400;
        cfg.patience = 400;
        let first = train_l2(&mut learner, &mk(), &mk(), &cfg, 1, None).unwrap();
        let prior = learner.clone();
        let mut fresh = build(&arch, 7).unwrap();
        let initial = {
            let mut probe = fresh.clone();
            probe.params.copy_values_from(&prior.params);
            evaluate_loss(&probe, &mk(), LossKind::L2).unwrap()
        };
        assert_eq!(initial, first.best_val_loss);
        cfg.max_epochs = 1;
        let second = train_l2(&mut fresh, &mk(), &mk(), &cfg, 2, Some(&prior)).unwrap();
        assert!(second.best_val_loss <= first.best_val_loss);
    }

    #[test]
    fn nll_rejects_non_binary_targets() {
        let arch = Architecture::BiasOnly { outputs: 1 };
        let mut learner = build(&arch, 0).unwrap();
        let frame = Tensor::zeros(&[2, 2, 1]);
        let data = TrainData::Frames(FrameSet {
            frames: vec![&frame],
            targets: labels_matrix(&[vec![0.5]]),
        });
        let val = TrainData::Frames(FrameSet {
            frames: vec![&frame],
            targets: labels_matrix(&[vec![1.0]]),
        });
        let cfg = TrainConfig::cnn_default();
        assert!(matches!(
            train_nll(&mut learner, &data, &val, &cfg, 0),
            Err(TrainError::BadTargets(_))
        ));
    }

    #[test]
    fn trainers_are_deterministic() {
        let arch = Architecture::Rnn(crate::learners::RnnSpec {
            cell: crate::learners::RnnCellKind::Gru,
            layers: 1,
            width: 4,
            direction: crate::learners::Direction::Unidirectional,
            io_width: 2,
        });
        let inputs = SeqMatrix::from_rows(&[vec![0.2, 0.8], vec![0.9, 0.1], vec![0.5, 0.5]])
            .unwrap();
        let targets = labels_matrix(&[vec![1.0, -1.0], vec![-1.0, 1.0], vec![1.0, 1.0]]);
        let mut cfg = TrainConfig::rnn_default();
        cfg.max_epochs = 5;
        let run = || {
            let mut learner = build(&arch, 11).unwrap();
            let train = TrainData::Sequences(SeqSet {
                inputs: vec![&inputs],
                targets: vec![targets.clone()],
            });
            let val = TrainData::Sequences(SeqSet {
                inputs: vec![&inputs],
                targets: vec![targets.clone()],
            });
            train_nll(&mut learner, &train, &val, &cfg, 5).unwrap();
            learner.params.value(0).data().to_vec()
        };
        assert_eq!(run(), run());
    }
}
