//! Gradient-boosting machinery: weighted blocks of weak learners, negative
//! log-likelihood of a block's logits, sample-weight computation (plain and
//! through the recurrent block), and the weight line search.

mod driver;
mod manifest;

pub use driver::{
    run_boosting, BoostConfig, BoostData, BoostRun, BoostState, CandidateReport, IterationReport,
    LossContext, Menus, StopConfig, Strategy, VideoData,
};
pub use manifest::{
    content_hash, load_strong_learner, read_manifest, write_run_artifacts, BlockEntry,
    ManifestError, RunManifest,
};

use crate::learners::{LearnerError, TrainError, WeakLearner, PROB_CLAMP};
use crate::matrix::{LabelMatrix, MatrixError, SeqMatrix};
use crate::scalar::sigmoid_scalar;
use crate::sequences::SequenceError;
use crate::tensor::Tensor as GenericTensor;
use thiserror::Error;

type Tensor = GenericTensor<f64>;

#[derive(Debug, Error)]
pub enum BoostError {
    #[error("the recurrent block is empty")]
    EmptyRnnBlock,
    #[error("sequence and label lengths disagree")]
    LengthMismatch,
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error("weak-learner weights must be nonnegative")]
    NegativeWeight,
    #[error("a strong learner with sequence learners needs a frame block")]
    RnnWithoutCnn,
    #[error("all candidates failed to train at iteration {iteration}")]
    AllCandidatesFailed { iteration: usize },
    #[error("{0} menu is empty")]
    EmptyMenu(&'static str),
    #[error("invalid boost config: {0}")]
    BadConfig(String),
    #[error("line search: {0}")]
    LineSearch(&'static str),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// A weak learner with its nonnegative ensemble weight.
#[derive(Clone, Debug)]
pub struct ScoredLearner {
    pub learner: WeakLearner,
    pub weight: f64,
}

/// Two ordered blocks of weighted weak learners: per-frame learners feeding
/// per-sequence learners.
#[derive(Clone, Debug, Default)]
pub struct StrongLearner {
    pub cnn_block: Vec<ScoredLearner>,
    pub rnn_block: Vec<ScoredLearner>,
}

impl StrongLearner {
    pub fn new() -> Self {
        StrongLearner::default()
    }

    pub fn validate(&self) -> Result<(), BoostError> {
        if self
            .cnn_block
            .iter()
            .chain(&self.rnn_block)
            .any(|s| s.weight < 0.0)
        {
            return Err(BoostError::NegativeWeight);
        }
        if !self.rnn_block.is_empty() && self.cnn_block.is_empty() {
            return Err(BoostError::RnnWithoutCnn);
        }
        Ok(())
    }

    /// Summed weighted logits of the frame block for one frame
    /// (zeros for an empty block).
    pub fn frame_block_logits(&self, frame: &Tensor, tools: usize) -> Result<Vec<f64>, BoostError> {
        block_frame_logits(&self.cnn_block, frame, tools)
    }

    /// Frame-block logits for a whole video.
    pub fn cnn_logits(&self, frames: &[Tensor], tools: usize) -> Result<SeqMatrix, BoostError> {
        let mut out = SeqMatrix::zeros(frames.len(), tools);
        for scored in &self.cnn_block {
            if scored.weight == 0.0 {
                continue;
            }
            for (t, frame) in frames.iter().enumerate() {
                let h = scored.learner.frame_logits(frame)?;
                for (j, v) in h.iter().enumerate() {
                    let cur = out.get(t, j);
                    out.set(t, j, cur + scored.weight * v);
                }
            }
        }
        Ok(out)
    }

    /// Summed weighted logits of the sequence block on an input track
    /// (zeros for an empty block).
    pub fn rnn_logits(&self, inputs: &SeqMatrix) -> Result<SeqMatrix, BoostError> {
        block_sequence_logits(&self.rnn_block, inputs)
    }
}

/// Weighted logit sum of a block of frame learners; empty blocks emit zeros
/// (probability one half per tool).
pub fn block_frame_logits(
    block: &[ScoredLearner],
    frame: &Tensor,
    tools: usize,
) -> Result<Vec<f64>, BoostError> {
    let mut out = vec![0.0; tools];
    for scored in block {
        if scored.weight == 0.0 {
            continue;
        }
        let h = scored.learner.frame_logits(frame)?;
        for (o, v) in out.iter_mut().zip(h) {
            *o += scored.weight * v;
        }
    }
    Ok(out)
}

/// Weighted logit sum of a block of sequence learners on one input track.
pub fn block_sequence_logits(
    block: &[ScoredLearner],
    inputs: &SeqMatrix,
) -> Result<SeqMatrix, BoostError> {
    let mut out = SeqMatrix::zeros(inputs.rows(), inputs.cols());
    for scored in block {
        if scored.weight == 0.0 {
            continue;
        }
        let h = scored.learner.rnn_forward(inputs)?;
        out.axpy(scored.weight, &h)?;
    }
    Ok(out)
}

/// Negative log-likelihood of logits against -1/+1 labels, summed over
/// frames and tools. Probabilities are clamped away from 0 and 1 inside the
/// logarithms.
pub fn nll(logits: &SeqMatrix, labels: &LabelMatrix) -> Result<f64, BoostError> {
    if logits.rows() != labels.rows() || logits.cols() != labels.tools() {
        return Err(BoostError::LengthMismatch);
    }
    let mut total = 0.0;
    for t in 0..logits.rows() {
        let row = logits.row(t);
        let lab = labels.row(t);
        for (h, &l) in row.iter().zip(lab) {
            let p = sigmoid_scalar(*h).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            total -= if l == 1 { p.ln() } else { (1.0 - p).ln() };
        }
    }
    Ok(total)
}

/// Per-frame, per-tool regression targets for the next weak learner.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleWeights {
    pub values: SeqMatrix,
}

/// Plain sample weights: 1 - sigmoid(H) on positive labels, -sigmoid(H) on
/// negative ones; equal to the negative gradient of the NLL at H.
pub fn sample_weights(
    logits: &SeqMatrix,
    labels: &LabelMatrix,
) -> Result<SampleWeights, BoostError> {
    if logits.rows() != labels.rows() || logits.cols() != labels.tools() {
        return Err(BoostError::LengthMismatch);
    }
    let mut values = SeqMatrix::zeros(logits.rows(), logits.cols());
    for t in 0..logits.rows() {
        for j in 0..logits.cols() {
            let s = sigmoid_scalar(logits.get(t, j));
            let w = if labels.get(t, j) == 1 { 1.0 - s } else { -s };
            debug_assert!((-1.0..=1.0).contains(&w));
            values.set(t, j, w);
        }
    }
    Ok(SampleWeights { values })
}

/// Which per-output factor enters the recurrent-block sample weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum JointWeightRule {
    /// Exact negative gradient of the composite NLL: per-output factors
    /// (1 - q) on positive labels and -q on negative ones.
    #[default]
    CompositeGradient,
    /// Alternate reading with an extra q(1 - q) factor inside each
    /// per-output term. Not the gradient of the composite loss; kept
    /// selectable for comparison.
    ExtraOutputSigmoid,
}

impl JointWeightRule {
    pub fn id(&self) -> &'static str {
        match self {
            JointWeightRule::CompositeGradient => "composite-gradient",
            JointWeightRule::ExtraOutputSigmoid => "extra-output-sigmoid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "composite-gradient" => Some(JointWeightRule::CompositeGradient),
            "extra-output-sigmoid" => Some(JointWeightRule::ExtraOutputSigmoid),
            _ => None,
        }
    }
}

/// Sample weights for frame learners supervised through the recurrent block:
/// for every frame and tool,
///   w = p (1 - p) * sum over outputs of the weighted input-gradients of the
///       sequence learners, seeded (1 - q) on positive-label outputs and q
///       on negative-label ones.
/// Computed with two vector-Jacobian backward passes per sequence per
/// learner; the full Jacobian is never materialized. For unidirectional
/// learners the contribution of outputs before a frame is structurally zero.
pub fn joint_sample_weights(
    strong: &StrongLearner,
    cnn_logits: &[SeqMatrix],
    labels: &[&LabelMatrix],
    rule: JointWeightRule,
) -> Result<Vec<SampleWeights>, BoostError> {
    if strong.rnn_block.is_empty() {
        return Err(BoostError::EmptyRnnBlock);
    }
    if cnn_logits.len() != labels.len() {
        return Err(BoostError::LengthMismatch);
    }
    let mut out = Vec::with_capacity(cnn_logits.len());
    for (h, lab) in cnn_logits.iter().zip(labels) {
        if h.rows() != lab.rows() || h.cols() != lab.tools() {
            return Err(BoostError::LengthMismatch);
        }
        let rows = h.rows();
        let cols = h.cols();
        let p = h.sigmoid();

        // forward every sequence learner once; values give the block logits,
        // the recorded graphs give the input gradients
        let mut graphs = Vec::with_capacity(strong.rnn_block.len());
        let mut hq = SeqMatrix::zeros(rows, cols);
        for scored in &strong.rnn_block {
            let (g, inputs, outputs) = scored.learner.sequence_graph(&p)?;
            for (t, &node) in outputs.iter().enumerate() {
                for (j, &v) in g.value(node).data().iter().enumerate() {
                    let cur = hq.get(t, j);
                    hq.set(t, j, cur + scored.weight * v);
                }
            }
            graphs.push((scored.weight, g, inputs, outputs));
        }
        let q = hq.sigmoid();

        let seed_factor = |t: usize, j: usize, positive: bool| -> f64 {
            let qv = q.get(t, j);
            let f = if positive { 1.0 - qv } else { qv };
            match rule {
                JointWeightRule::CompositeGradient => f,
                JointWeightRule::ExtraOutputSigmoid => f * qv * (1.0 - qv),
            }
        };

        let mut combined = SeqMatrix::zeros(rows, cols);
        for (weight, g, inputs, outputs) in &graphs {
            if *weight == 0.0 {
                continue;
            }
            let make_seeds = |positive: bool| -> Vec<Tensor> {
                (0..rows)
                    .map(|t| {
                        let data: Vec<f64> = (0..cols)
                            .map(|j| {
                                let hit = (lab.get(t, j) == 1) == positive;
                                if hit {
                                    seed_factor(t, j, positive)
                                } else {
                                    0.0
                                }
                            })
                            .collect();
                        Tensor::new(vec![cols], data).expect("seed")
                    })
                    .collect()
            };
            let pos_seeds = make_seeds(true);
            let neg_seeds = make_seeds(false);
            let pos = g.backward_multi(outputs.iter().copied().zip(pos_seeds.iter()))?;
            let neg = g.backward_multi(outputs.iter().copied().zip(neg_seeds.iter()))?;
            for (t, &node) in inputs.iter().enumerate() {
                for j in 0..cols {
                    let gpv = pos.node(node).map_or(0.0, |g| g.data()[j]);
                    let gnv = neg.node(node).map_or(0.0, |g| g.data()[j]);
                    let cur = combined.get(t, j);
                    combined.set(t, j, cur + weight * (gpv - gnv));
                }
            }
        }

        let mut values = SeqMatrix::zeros(rows, cols);
        for t in 0..rows {
            for j in 0..cols {
                let pv = p.get(t, j);
                values.set(t, j, pv * (1.0 - pv) * combined.get(t, j));
            }
        }
        out.push(SampleWeights { values });
    }
    Ok(out)
}

/// Instant and context-aware probability tracks for one video.
pub struct VideoPrediction {
    /// Frame-block probabilities.
    pub instant: crate::matrix::PredictionSequence,
    /// Sequence-block probabilities (equal to `instant` when the sequence
    /// block is empty).
    pub context: crate::matrix::PredictionSequence,
}

/// Full inference for one video: frame-block logits per frame, stride
/// subsampling into `m` tracks, sequence-block logits per track, and
/// interleaved reconstruction.
pub fn predict_video(
    strong: &StrongLearner,
    frames: &[Tensor],
    tools: usize,
    m: usize,
    video_id: &str,
) -> Result<VideoPrediction, BoostError> {
    use crate::matrix::{PredictionSequence, ValueKind};
    use crate::sequences::{interleave, subsample};

    let h = strong.cnn_logits(frames, tools)?;
    let p = h.sigmoid();
    let instant = PredictionSequence::new(p.clone(), ValueKind::Probabilities, video_id)?;
    if strong.rnn_block.is_empty() {
        let context = instant.clone();
        return Ok(VideoPrediction { instant, context });
    }
    let m_eff = m.clamp(1, frames.len());
    let parts = subsample(&instant, m_eff)?;
    let mut q_parts = Vec::with_capacity(parts.len());
    for part in &parts {
        let hq = strong.rnn_logits(&part.values)?;
        let mut q = PredictionSequence::new(hq.sigmoid(), ValueKind::Probabilities, video_id)?;
        q.subseq = part.subseq;
        q_parts.push(q);
    }
    let context = interleave(&q_parts, frames.len())?;
    Ok(VideoPrediction { instant, context })
}

/// Minimizes a convex objective over [0, alpha_max] by golden-section
/// search; exact ties and non-improving candidates resolve to alpha = 0.
pub fn line_search_alpha(
    objective: impl Fn(f64) -> Result<f64, BoostError>,
    alpha_max: f64,
    tol: f64,
) -> Result<(f64, f64), BoostError> {
    if !(alpha_max > 0.0) || !(tol > 0.0) {
        return Err(BoostError::LineSearch("alpha_max and tol must be positive"));
    }
    let eval = |x: f64| -> Result<f64, BoostError> {
        let v = objective(x)?;
        if !v.is_finite() {
            return Err(BoostError::NonFiniteLoss);
        }
        Ok(v)
    };
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut a = 0.0;
    let mut b = alpha_max;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d)?;
        }
    }
    let mid = 0.5 * (a + b);
    let f_mid = eval(mid)?;
    // endpoints beat the interior on monotone objectives; zero wins ties so
    // a useless candidate never enters the ensemble
    let f_zero = eval(0.0)?;
    let f_max = eval(alpha_max)?;
    let mut best = (0.0, f_zero);
    if f_mid < best.1 {
        best = (mid, f_mid);
    }
    if f_max < best.1 {
        best = (alpha_max, f_max);
    }
    Ok(best)
}
