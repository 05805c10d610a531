//! The boosting engine: per-iteration candidate training, weight line
//! search, selection, and the sequential / joint strategies with
//! validation-driven stopping.

use super::{
    joint_sample_weights, line_search_alpha, nll, sample_weights, BoostError, JointWeightRule,
    ScoredLearner, StrongLearner,
};
use crate::learners::{
    build, train_l2, train_nll, Architecture, Family, FrameSet, LossKind, Provenance, SeqSet,
    TrainConfig, TrainData, WeakLearner,
};
use crate::matrix::{LabelMatrix, SeqMatrix};
use crate::rng::derive_seed;
use crate::sequences::subsample_indices;
use crate::tensor::Tensor as GenericTensor;
use rayon::prelude::*;
use std::collections::HashMap;

type Tensor = GenericTensor<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Boost the frame block to stopping, then the sequence block.
    Sequential,
    /// One loop choosing freely between frame and sequence candidates.
    Joint,
}

impl Strategy {
    pub fn id(&self) -> &'static str {
        match self {
            Strategy::Sequential => "sequential",
            Strategy::Joint => "joint",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sequential" => Some(Strategy::Sequential),
            "joint" => Some(Strategy::Joint),
            _ => None,
        }
    }
}

/// Which loss the iteration optimized: the frame block's own likelihood or
/// the likelihood of the sequence-block outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossContext {
    FrameNll,
    ContextNll,
}

impl LossContext {
    pub fn id(&self) -> &'static str {
        match self {
            LossContext::FrameNll => "frame",
            LossContext::ContextNll => "context",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StopConfig {
    /// Stop when the best candidate improves validation loss by less than
    /// this relative amount.
    pub rel_tol: f64,
    /// Consecutive non-improving iterations tolerated before stopping.
    pub patience: usize,
    /// Hard cap on accepted iterations per boosting loop.
    pub max_iterations: usize,
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig {
            rel_tol: 1e-4,
            patience: 1,
            max_iterations: 16,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Menus {
    pub frame: Vec<Architecture>,
    pub sequence: Vec<Architecture>,
}

impl Menus {
    pub fn validate(&self) -> Result<(), BoostError> {
        if self.frame.is_empty() {
            return Err(BoostError::EmptyMenu("frame"));
        }
        if self.frame.iter().any(|a| a.family() != Family::Frame)
            || self.sequence.iter().any(|a| a.family() != Family::Sequence)
        {
            return Err(BoostError::BadConfig(
                "menu entry assigned to the wrong family".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct BoostConfig {
    pub strategy: Strategy,
    pub alpha_max: f64,
    pub line_tol: f64,
    pub stop: StopConfig,
    pub cnn_train: TrainConfig,
    pub rnn_train: TrainConfig,
    pub joint_rule: JointWeightRule,
    pub seed: u64,
}

impl BoostConfig {
    pub fn new(strategy: Strategy, seed: u64) -> Self {
        BoostConfig {
            strategy,
            alpha_max: 10.0,
            line_tol: 1e-4,
            stop: StopConfig::default(),
            cnn_train: TrainConfig::cnn_default(),
            rnn_train: TrainConfig::rnn_default(),
            joint_rule: JointWeightRule::default(),
            seed,
        }
    }
}

/// One video with its frame tensors and labels.
pub struct VideoData<'a> {
    pub id: String,
    pub frames: &'a [Tensor],
    pub labels: &'a LabelMatrix,
}

/// Learning and validation videos plus the temporal subsampling factor used
/// for sequence learners.
pub struct BoostData<'a> {
    pub learn: Vec<VideoData<'a>>,
    pub val: Vec<VideoData<'a>>,
    pub tools: usize,
    pub m: usize,
}

#[derive(Clone, Debug)]
pub struct CandidateReport {
    pub id: String,
    pub family: Family,
    pub param_count: usize,
    pub alpha: f64,
    /// Ensemble training loss at the searched weight.
    pub train_loss: f64,
    /// The weak learner's own best validation loss from training.
    pub weak_val_loss: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct IterationReport {
    pub index: usize,
    pub context: LossContext,
    pub candidates: Vec<CandidateReport>,
    /// Index into `candidates` of the selected learner.
    pub selected: Option<usize>,
    /// Ensemble training loss after the (provisional) acceptance.
    pub train_loss: f64,
    /// Ensemble validation loss after the (provisional) acceptance.
    pub val_loss: f64,
    pub accepted: bool,
}

#[derive(Debug)]
pub struct BoostState {
    pub strong: StrongLearner,
    pub iterations: Vec<IterationReport>,
    pub strategy: Strategy,
    pub tools: usize,
    pub m: usize,
    pub seed: u64,
}

impl BoostState {
    /// (context, training loss) of accepted iterations, in order.
    pub fn accepted_train_losses(&self) -> Vec<(LossContext, f64)> {
        self.iterations
            .iter()
            .filter(|it| it.accepted)
            .map(|it| (it.context, it.train_loss))
            .collect()
    }

    pub fn accepted_val_losses(&self) -> Vec<f64> {
        self.iterations
            .iter()
            .filter(|it| it.accepted)
            .map(|it| it.val_loss)
            .collect()
    }
}

/// Sequence caches for one split: frame-block logits per video, subsequence
/// index lists, per-subsequence labels, and sequence-block logits.
struct SplitCache {
    h: Vec<SeqMatrix>,
    subs: Vec<Vec<Vec<usize>>>,
    sub_labels: Vec<Vec<LabelMatrix>>,
    hq: Vec<Vec<SeqMatrix>>,
}

impl SplitCache {
    fn new(videos: &[VideoData], tools: usize, m: usize) -> Result<Self, BoostError> {
        let mut h = Vec::new();
        let mut subs = Vec::new();
        let mut sub_labels = Vec::new();
        let mut hq = Vec::new();
        for v in videos {
            let len = v.frames.len();
            if v.labels.rows() != len || v.labels.tools() != tools {
                return Err(BoostError::LengthMismatch);
            }
            h.push(SeqMatrix::zeros(len, tools));
            let idx = subsample_indices(len, m)?;
            sub_labels.push(idx.iter().map(|i| v.labels.gather_rows(i)).collect());
            hq.push(
                idx.iter()
                    .map(|i| SeqMatrix::zeros(i.len(), tools))
                    .collect(),
            );
            subs.push(idx);
        }
        Ok(SplitCache {
            h,
            subs,
            sub_labels,
            hq,
        })
    }

    /// Total NLL of the frame-block logits.
    fn frame_loss(&self, videos: &[VideoData]) -> Result<f64, BoostError> {
        let mut total = 0.0;
        for (h, v) in self.h.iter().zip(videos) {
            total += nll(h, v.labels)?;
        }
        Ok(total)
    }

    /// Total NLL of the sequence-block logits over subsequences.
    fn context_loss(&self) -> Result<f64, BoostError> {
        let mut total = 0.0;
        for (hqs, labs) in self.hq.iter().zip(&self.sub_labels) {
            for (hq, lab) in hqs.iter().zip(labs) {
                total += nll(hq, lab)?;
            }
        }
        Ok(total)
    }
}

/// NLL of base + alpha * delta without materializing the shifted logits.
fn nll_with_delta(
    base: &SeqMatrix,
    delta: &SeqMatrix,
    alpha: f64,
    labels: &LabelMatrix,
) -> Result<f64, BoostError> {
    if base.rows() != labels.rows() || base.rows() != delta.rows() {
        return Err(BoostError::LengthMismatch);
    }
    let mut total = 0.0;
    for t in 0..base.rows() {
        let b = base.row(t);
        let d = delta.row(t);
        let lab = labels.row(t);
        for j in 0..b.len() {
            let p = crate::scalar::sigmoid_scalar(b[j] + alpha * d[j])
                .clamp(crate::learners::PROB_CLAMP, 1.0 - crate::learners::PROB_CLAMP);
            total -= if lab[j] == 1 { p.ln() } else { (1.0 - p).ln() };
        }
    }
    Ok(total)
}

/// A trained candidate with its cached outputs on both splits.
struct EvaluatedCandidate {
    report: CandidateReport,
    learner: Option<WeakLearner>,
    /// Frame family: per learn video logits; sequence family: per (video,
    /// sub) logits flattened in video-major order.
    learn_out: Vec<SeqMatrix>,
    val_out: Vec<SeqMatrix>,
}

pub struct BoostRun<'a> {
    data: &'a BoostData<'a>,
    menus: Menus,
    cfg: BoostConfig,
    strong: StrongLearner,
    learn: SplitCache,
    val: SplitCache,
    trained: HashMap<String, WeakLearner>,
    iterations: Vec<IterationReport>,
    /// Validation loss of the current accepted state in its context.
    current_val: f64,
    misses: usize,
    iteration_index: usize,
}

impl<'a> BoostRun<'a> {
    pub fn new(data: &'a BoostData<'a>, menus: Menus, cfg: BoostConfig) -> Result<Self, BoostError> {
        menus.validate()?;
        if data.learn.is_empty() || data.val.is_empty() {
            return Err(BoostError::BadConfig("learn and val splits must be nonempty".into()));
        }
        if !(cfg.alpha_max > 0.0) || !(cfg.line_tol > 0.0) {
            return Err(BoostError::BadConfig("alpha_max and line_tol must be positive".into()));
        }
        if cfg.stop.patience == 0 || cfg.stop.max_iterations == 0 {
            return Err(BoostError::BadConfig("patience and max_iterations must be >= 1".into()));
        }
        cfg.cnn_train.validate().map_err(BoostError::Train)?;
        cfg.rnn_train.validate().map_err(BoostError::Train)?;
        let learn = SplitCache::new(&data.learn, data.tools, data.m)?;
        let val = SplitCache::new(&data.val, data.tools, data.m)?;
        let current_val = val.frame_loss(&data.val)?;
        Ok(BoostRun {
            data,
            menus,
            cfg,
            strong: StrongLearner::new(),
            learn,
            val,
            trained: HashMap::new(),
            iterations: Vec::new(),
            current_val,
            misses: 0,
            iteration_index: 0,
        })
    }

    pub fn strong(&self) -> &StrongLearner {
        &self.strong
    }

    fn flat_frames(videos: &[VideoData<'a>]) -> Vec<&'a Tensor> {
        videos.iter().flat_map(|v| v.frames.iter()).collect()
    }

    fn flat_label_targets(videos: &[VideoData]) -> SeqMatrix {
        let tools = videos[0].labels.tools();
        let rows: usize = videos.iter().map(|v| v.labels.rows()).sum();
        let mut out = SeqMatrix::zeros(rows, tools);
        let mut r = 0;
        for v in videos {
            for t in 0..v.labels.rows() {
                for (j, &l) in v.labels.row(t).iter().enumerate() {
                    out.set(r, j, l as f64);
                }
                r += 1;
            }
        }
        out
    }

    /// Frame-family regression targets, flattened video-major.
    fn frame_weight_targets(&self, split: &SplitCache, videos: &[VideoData]) -> Result<SeqMatrix, BoostError> {
        let tools = self.data.tools;
        let rows: usize = videos.iter().map(|v| v.frames.len()).sum();
        let mut out = SeqMatrix::zeros(rows, tools);
        let mut base = 0usize;
        if self.strong.rnn_block.is_empty() {
            for (h, v) in split.h.iter().zip(videos) {
                let w = sample_weights(h, v.labels)?;
                for t in 0..h.rows() {
                    out.row_mut(base + t).copy_from_slice(w.values.row(t));
                }
                base += h.rows();
            }
        } else {
            // supervised through the sequence block, one subsequence at a time
            for (vi, v) in videos.iter().enumerate() {
                let h = &split.h[vi];
                for (si, idx) in split.subs[vi].iter().enumerate() {
                    let h_sub = h.gather_rows(idx);
                    let labels = &split.sub_labels[vi][si];
                    let w = joint_sample_weights(
                        &self.strong,
                        &[h_sub],
                        &[labels],
                        self.cfg.joint_rule,
                    )?;
                    for (k, &t) in idx.iter().enumerate() {
                        out.row_mut(base + t).copy_from_slice(w[0].values.row(k));
                    }
                }
                base += v.frames.len();
            }
        }
        Ok(out)
    }

    /// Per-subsequence inputs (probabilities) for sequence learners.
    fn sub_inputs(split: &SplitCache) -> Vec<SeqMatrix> {
        let mut out = Vec::new();
        for (h, subs) in split.h.iter().zip(&split.subs) {
            let p = h.sigmoid();
            for idx in subs {
                out.push(p.gather_rows(idx));
            }
        }
        out
    }

    fn sub_label_targets(split: &SplitCache) -> Vec<SeqMatrix> {
        let mut out = Vec::new();
        for labs in &split.sub_labels {
            for lab in labs {
                let mut m = SeqMatrix::zeros(lab.rows(), lab.tools());
                for t in 0..lab.rows() {
                    for (j, &l) in lab.row(t).iter().enumerate() {
                        m.set(t, j, l as f64);
                    }
                }
                out.push(m);
            }
        }
        out
    }

    fn sub_weight_targets(split: &SplitCache) -> Result<Vec<SeqMatrix>, BoostError> {
        let mut out = Vec::new();
        for (hqs, labs) in split.hq.iter().zip(&split.sub_labels) {
            for (hq, lab) in hqs.iter().zip(labs) {
                out.push(sample_weights(hq, lab)?.values);
            }
        }
        Ok(out)
    }

    /// Composite training loss when shifting the frame block by
    /// alpha * candidate outputs: sequence learners are re-run on the
    /// shifted probabilities.
    fn composite_loss_with_frame_delta(
        &self,
        split: &SplitCache,
        cand: &[SeqMatrix],
        alpha: f64,
    ) -> Result<f64, BoostError> {
        let per_video: Result<Vec<f64>, BoostError> = split
            .h
            .par_iter()
            .zip(cand.par_iter())
            .zip(split.subs.par_iter().zip(split.sub_labels.par_iter()))
            .map(|((h, delta), (subs, labs))| {
                let mut shifted = h.clone();
                shifted.axpy(alpha, delta)?;
                let p = shifted.sigmoid();
                let mut total = 0.0;
                for (idx, lab) in subs.iter().zip(labs) {
                    let p_sub = p.gather_rows(idx);
                    let hq = self.strong.rnn_logits(&p_sub)?;
                    total += nll(&hq, lab)?;
                }
                Ok(total)
            })
            .collect();
        Ok(per_video?.iter().sum())
    }

    /// Trains, line-searches and reports every admissible candidate, then
    /// appends the loss minimizer if it improves validation loss enough.
    /// Returns false when the stopping rule fired.
    pub fn boost_step(&mut self, families: &[Family]) -> Result<bool, BoostError> {
        let iter_idx = self.iteration_index;
        self.iteration_index += 1;

        // targets, computed once per iteration and shared by all candidates
        let frame_nll = self.strong.cnn_block.is_empty();
        let seq_nll = self.strong.rnn_block.is_empty();
        let learn_frames = Self::flat_frames(&self.data.learn);
        let val_frames = Self::flat_frames(&self.data.val);
        let want_frames = families.contains(&Family::Frame);
        let want_seqs = families.contains(&Family::Sequence);

        let (learn_frame_targets, val_frame_targets) = if want_frames {
            if frame_nll {
                (
                    Some(Self::flat_label_targets(&self.data.learn)),
                    Some(Self::flat_label_targets(&self.data.val)),
                )
            } else {
                (
                    Some(self.frame_weight_targets(&self.learn, &self.data.learn)?),
                    Some(self.frame_weight_targets(&self.val, &self.data.val)?),
                )
            }
        } else {
            (None, None)
        };

        let (learn_inputs, val_inputs, learn_seq_targets, val_seq_targets) = if want_seqs {
            let li = Self::sub_inputs(&self.learn);
            let vi = Self::sub_inputs(&self.val);
            let (lt, vt) = if seq_nll {
                (
                    Self::sub_label_targets(&self.learn),
                    Self::sub_label_targets(&self.val),
                )
            } else {
                (
                    Self::sub_weight_targets(&self.learn)?,
                    Self::sub_weight_targets(&self.val)?,
                )
            };
            (li, vi, lt, vt)
        } else {
            (Vec::new(), Vec::new(), Vec::new(), Vec::new())
        };

        // admissible candidates in menu order, frame family first
        let mut archs: Vec<Architecture> = Vec::new();
        if want_frames {
            archs.extend(self.menus.frame.iter().cloned());
        }
        if want_seqs {
            archs.extend(self.menus.sequence.iter().cloned());
        }
        if archs.is_empty() {
            return Err(BoostError::EmptyMenu("admissible"));
        }

        let evaluated: Vec<EvaluatedCandidate> = archs
            .par_iter()
            .enumerate()
            .map(|(ci, arch)| {
                self.evaluate_candidate(
                    iter_idx,
                    ci,
                    arch,
                    learn_frame_targets.as_ref(),
                    val_frame_targets.as_ref(),
                    &learn_frames,
                    &val_frames,
                    &learn_inputs,
                    &val_inputs,
                    &learn_seq_targets,
                    &val_seq_targets,
                )
            })
            .collect();

        // refresh the warm-start store with everything that trained
        for cand in &evaluated {
            if let Some(l) = &cand.learner {
                self.trained.insert(cand.report.id.clone(), l.clone());
            }
        }

        // argmin by loss, then parameter count, then menu order
        let selected = evaluated
            .iter()
            .enumerate()
            .filter(|(_, c)| c.learner.is_some() && c.report.train_loss.is_finite())
            .min_by(|(ia, a), (ib, b)| {
                a.report
                    .train_loss
                    .partial_cmp(&b.report.train_loss)
                    .unwrap()
                    .then(a.report.param_count.cmp(&b.report.param_count))
                    .then(ia.cmp(ib))
            })
            .map(|(i, _)| i);
        let Some(sel_idx) = selected else {
            return Err(BoostError::AllCandidatesFailed { iteration: iter_idx });
        };

        // provisional acceptance: updated caches and validation loss
        let sel = &evaluated[sel_idx];
        let alpha = sel.report.alpha;
        let learner = sel.learner.clone().expect("selected candidate trained");
        let (new_learn, new_val_cache, new_strong) = self.provisional_state(
            &learner,
            alpha,
            &sel.learn_out,
            &sel.val_out,
        )?;
        // the context that train_loss and val_loss are measured in is the
        // one the ensemble has after the provisional acceptance
        let context = if new_strong.rnn_block.is_empty() {
            LossContext::FrameNll
        } else {
            LossContext::ContextNll
        };
        let val_loss = match context {
            LossContext::FrameNll => new_val_cache.frame_loss(&self.data.val)?,
            LossContext::ContextNll => new_val_cache.context_loss()?,
        };
        let train_loss = sel.report.train_loss;

        let improvement = (self.current_val - val_loss) / self.current_val.abs().max(1e-300);
        let accepted = improvement >= self.cfg.stop.rel_tol;
        self.iterations.push(IterationReport {
            index: iter_idx,
            context,
            candidates: evaluated.into_iter().map(|c| c.report).collect(),
            selected: Some(sel_idx),
            train_loss,
            val_loss,
            accepted,
        });
        if accepted {
            self.learn = new_learn;
            self.val = new_val_cache;
            self.strong = new_strong;
            self.current_val = val_loss;
            self.misses = 0;
            Ok(true)
        } else {
            self.misses += 1;
            Ok(self.misses < self.cfg.stop.patience)
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn evaluate_candidate(
        &self,
        iter_idx: usize,
        cand_idx: usize,
        arch: &Architecture,
        learn_frame_targets: Option<&SeqMatrix>,
        val_frame_targets: Option<&SeqMatrix>,
        learn_frames: &[&'a Tensor],
        val_frames: &[&'a Tensor],
        learn_inputs: &[SeqMatrix],
        val_inputs: &[SeqMatrix],
        learn_seq_targets: &[SeqMatrix],
        val_seq_targets: &[SeqMatrix],
    ) -> EvaluatedCandidate {
        let id = arch.id();
        let fail = |err: String| EvaluatedCandidate {
            report: CandidateReport {
                id: id.clone(),
                family: arch.family(),
                param_count: 0,
                alpha: 0.0,
                train_loss: f64::INFINITY,
                weak_val_loss: f64::INFINITY,
                error: Some(err),
            },
            learner: None,
            learn_out: Vec::new(),
            val_out: Vec::new(),
        };
        match self.train_and_search(
            iter_idx,
            cand_idx,
            arch,
            learn_frame_targets,
            val_frame_targets,
            learn_frames,
            val_frames,
            learn_inputs,
            val_inputs,
            learn_seq_targets,
            val_seq_targets,
        ) {
            Ok(c) => c,
            Err(e) => fail(e.to_string()),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn train_and_search(
        &self,
        iter_idx: usize,
        cand_idx: usize,
        arch: &Architecture,
        learn_frame_targets: Option<&SeqMatrix>,
        val_frame_targets: Option<&SeqMatrix>,
        learn_frames: &[&'a Tensor],
        val_frames: &[&'a Tensor],
        learn_inputs: &[SeqMatrix],
        val_inputs: &[SeqMatrix],
        learn_seq_targets: &[SeqMatrix],
        val_seq_targets: &[SeqMatrix],
    ) -> Result<EvaluatedCandidate, BoostError> {
        let id = arch.id();
        let build_seed = derive_seed(self.cfg.seed, (iter_idx as u64) << 20 | cand_idx as u64);
        let train_seed = derive_seed(build_seed, 1);
        let prior = self.trained.get(&id);
        let family = arch.family();

        let (mut learner, report) = match family {
            Family::Frame => {
                let first = self.strong.cnn_block.is_empty();
                let mut cfg = self.cfg.cnn_train.clone();
                cfg.loss = if first { LossKind::Nll } else { LossKind::L2 };
                let train = TrainData::Frames(FrameSet {
                    frames: learn_frames.to_vec(),
                    targets: learn_frame_targets.expect("frame targets").clone(),
                });
                let val = TrainData::Frames(FrameSet {
                    frames: val_frames.to_vec(),
                    targets: val_frame_targets.expect("frame targets").clone(),
                });
                let mut learner = match prior {
                    Some(p) if first => {
                        let mut l = p.clone();
                        l.provenance = Provenance::FineTuned {
                            from_iteration: iter_idx.saturating_sub(1),
                        };
                        l
                    }
                    _ => build(arch, build_seed)?,
                };
                let report = if first {
                    train_nll(&mut learner, &train, &val, &cfg, train_seed)?
                } else {
                    train_l2(&mut learner, &train, &val, &cfg, train_seed, prior)?
                };
                (learner, report)
            }
            Family::Sequence => {
                let first = self.strong.rnn_block.is_empty();
                let mut cfg = self.cfg.rnn_train.clone();
                cfg.loss = if first { LossKind::Nll } else { LossKind::L2 };
                let train = TrainData::Sequences(SeqSet {
                    inputs: learn_inputs.iter().collect(),
                    targets: learn_seq_targets.to_vec(),
                });
                let val = TrainData::Sequences(SeqSet {
                    inputs: val_inputs.iter().collect(),
                    targets: val_seq_targets.to_vec(),
                });
                let mut learner = match prior {
                    Some(p) if first => {
                        let mut l = p.clone();
                        l.provenance = Provenance::FineTuned {
                            from_iteration: iter_idx.saturating_sub(1),
                        };
                        l
                    }
                    _ => build(arch, build_seed)?,
                };
                let report = if first {
                    train_nll(&mut learner, &train, &val, &cfg, train_seed)?
                } else {
                    train_l2(&mut learner, &train, &val, &cfg, train_seed, prior)?
                };
                (learner, report)
            }
        };
        learner.params.reset_optimizer_state();

        // candidate outputs on both splits
        let (learn_out, val_out): (Vec<SeqMatrix>, Vec<SeqMatrix>) = match family {
            Family::Frame => {
                let mut lo = Vec::with_capacity(self.data.learn.len());
                for v in &self.data.learn {
                    lo.push(learner.cnn_forward(&v.frames.iter().collect::<Vec<_>>())?);
                }
                let mut vo = Vec::with_capacity(self.data.val.len());
                for v in &self.data.val {
                    vo.push(learner.cnn_forward(&v.frames.iter().collect::<Vec<_>>())?);
                }
                (lo, vo)
            }
            Family::Sequence => {
                let lo: Result<Vec<_>, _> =
                    learn_inputs.iter().map(|p| learner.rnn_forward(p)).collect();
                let vo: Result<Vec<_>, _> =
                    val_inputs.iter().map(|p| learner.rnn_forward(p)).collect();
                (lo?, vo?)
            }
        };

        // weight line search on the ensemble training loss
        let (alpha, train_loss) = match family {
            Family::Frame => {
                if self.strong.rnn_block.is_empty() {
                    let objective = |a: f64| {
                        let mut total = 0.0;
                        for ((h, delta), v) in
                            self.learn.h.iter().zip(&learn_out).zip(&self.data.learn)
                        {
                            total += nll_with_delta(h, delta, a, v.labels)?;
                        }
                        Ok(total)
                    };
                    line_search_alpha(objective, self.cfg.alpha_max, self.cfg.line_tol)?
                } else {
                    let objective = |a: f64| {
                        self.composite_loss_with_frame_delta(&self.learn, &learn_out, a)
                    };
                    line_search_alpha(objective, self.cfg.alpha_max, self.cfg.line_tol)?
                }
            }
            Family::Sequence => {
                let flat_hq: Vec<&SeqMatrix> = self.learn.hq.iter().flatten().collect();
                let flat_labels: Vec<&LabelMatrix> =
                    self.learn.sub_labels.iter().flatten().collect();
                let objective = |a: f64| {
                    let mut total = 0.0;
                    for ((hq, delta), lab) in
                        flat_hq.iter().zip(&learn_out).zip(&flat_labels)
                    {
                        total += nll_with_delta(hq, delta, a, lab)?;
                    }
                    Ok(total)
                };
                line_search_alpha(objective, self.cfg.alpha_max, self.cfg.line_tol)?
            }
        };

        Ok(EvaluatedCandidate {
            report: CandidateReport {
                id,
                family,
                param_count: learner.param_count(),
                alpha,
                train_loss,
                weak_val_loss: report.best_val_loss,
                error: None,
            },
            learner: Some(learner),
            learn_out,
            val_out,
        })
    }

    /// Caches and strong learner after appending `learner` with `alpha`.
    fn provisional_state(
        &self,
        learner: &WeakLearner,
        alpha: f64,
        learn_out: &[SeqMatrix],
        val_out: &[SeqMatrix],
    ) -> Result<(SplitCache, SplitCache, StrongLearner), BoostError> {
        let mut strong = self.strong.clone();
        let scored = ScoredLearner {
            learner: learner.clone(),
            weight: alpha,
        };
        let mut learn = SplitCache {
            h: self.learn.h.clone(),
            subs: self.learn.subs.clone(),
            sub_labels: self.learn.sub_labels.clone(),
            hq: self.learn.hq.clone(),
        };
        let mut val = SplitCache {
            h: self.val.h.clone(),
            subs: self.val.subs.clone(),
            sub_labels: self.val.sub_labels.clone(),
            hq: self.val.hq.clone(),
        };
        match learner.family() {
            Family::Frame => {
                strong.cnn_block.push(scored);
                for (h, delta) in learn.h.iter_mut().zip(learn_out) {
                    h.axpy(alpha, delta)?;
                }
                for (h, delta) in val.h.iter_mut().zip(val_out) {
                    h.axpy(alpha, delta)?;
                }
                // shifted probabilities invalidate every sequence-learner output
                if !strong.rnn_block.is_empty() {
                    for cache in [&mut learn, &mut val] {
                        let rebuilt: Result<Vec<Vec<SeqMatrix>>, BoostError> = cache
                            .h
                            .par_iter()
                            .zip(cache.subs.par_iter())
                            .map(|(h, subs)| {
                                let p = h.sigmoid();
                                subs.iter()
                                    .map(|idx| strong.rnn_logits(&p.gather_rows(idx)))
                                    .collect()
                            })
                            .collect();
                        cache.hq = rebuilt?;
                    }
                }
            }
            Family::Sequence => {
                strong.rnn_block.push(scored);
                let mut k = 0;
                for hqs in learn.hq.iter_mut() {
                    for hq in hqs.iter_mut() {
                        hq.axpy(alpha, &learn_out[k])?;
                        k += 1;
                    }
                }
                let mut k = 0;
                for hqs in val.hq.iter_mut() {
                    for hq in hqs.iter_mut() {
                        hq.axpy(alpha, &val_out[k])?;
                        k += 1;
                    }
                }
            }
        }
        strong.validate()?;
        Ok((learn, val, strong))
    }

    /// Runs one boosting loop over the given families until the stopping
    /// rule fires or `max_iterations` have been accepted.
    fn run_phase(
        &mut self,
        families: &[Family],
        first_frame_only: bool,
        baseline: LossContext,
    ) -> Result<(), BoostError> {
        // a new phase optimizes its own loss; reset the baseline and misses
        self.current_val = match baseline {
            LossContext::FrameNll => self.val.frame_loss(&self.data.val)?,
            LossContext::ContextNll => self.val.context_loss()?,
        };
        self.misses = 0;
        let mut accepted = 0usize;
        let mut first = true;
        while accepted < self.cfg.stop.max_iterations {
            let fams: &[Family] = if first && first_frame_only {
                &[Family::Frame]
            } else {
                families
            };
            let more = self.boost_step(fams)?;
            if self.iterations.last().map(|it| it.accepted).unwrap_or(false) {
                accepted += 1;
            }
            if !more {
                break;
            }
            first = false;
        }
        Ok(())
    }

    pub fn finish(self) -> BoostState {
        BoostState {
            strong: self.strong,
            iterations: self.iterations,
            strategy: self.cfg.strategy,
            tools: self.data.tools,
            m: self.data.m,
            seed: self.cfg.seed,
        }
    }
}

/// Runs the full boosting procedure under the configured strategy.
///
/// Sequential: boost the frame block to stopping, then (if the sequence menu
/// is nonempty) the sequence block. Joint: one loop over both menus, frame
/// candidates only in the first iteration; an empty sequence menu degrades
/// to frame-only boosting.
pub fn run_boosting(
    data: &BoostData,
    menus: &Menus,
    cfg: &BoostConfig,
) -> Result<BoostState, BoostError> {
    let mut run = BoostRun::new(data, menus.clone(), cfg.clone())?;
    match cfg.strategy {
        Strategy::Sequential => {
            run.run_phase(&[Family::Frame], false, LossContext::FrameNll)?;
            if !menus.sequence.is_empty() && !run.strong.cnn_block.is_empty() {
                run.run_phase(&[Family::Sequence], false, LossContext::ContextNll)?;
            }
        }
        Strategy::Joint => {
            if menus.sequence.is_empty() {
                run.run_phase(&[Family::Frame], false, LossContext::FrameNll)?;
            } else {
                run.run_phase(&[Family::Frame, Family::Sequence], true, LossContext::FrameNll)?;
            }
        }
    }
    Ok(run.finish())
}
