//! Weak learners: per-frame convolutional networks and over-sequence
//! recurrent networks, plus a few tiny diagnostic architectures used by the
//! verification suites.

mod checkpoint;
mod cnn;
mod rnn;
mod train;

pub use checkpoint::{
    learner_from_bytes, learner_to_bytes, read_learner, write_learner, CheckpointError,
    LEARNER_MAGIC,
};
pub use train::{
    evaluate_loss, train_l2, train_nll, FrameSet, LossKind, SeqSet, TrainConfig, TrainData,
    TrainError, TrainReport, PROB_CLAMP,
};

use crate::graph::{GraphError, NodeId};
use crate::matrix::SeqMatrix;
use crate::optim::ParamSet as GenericParamSet;
use crate::rng::SplitRng;
use crate::tensor::Tensor as GenericTensor;
use rand::Rng;
use thiserror::Error;

type Tensor = GenericTensor<f64>;
type Graph = crate::graph::Graph<f64>;
type ParamSet = GenericParamSet<f64>;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("unknown architecture id: {0}")]
    UnknownArchitecture(String),
    #[error("invalid spec: {0}")]
    BadSpec(String),
    #[error("frame shape {got:?} does not match spec {want:?}")]
    FrameShape { want: Vec<usize>, got: Vec<usize> },
    #[error("sequence item width {got} does not match spec {want}")]
    SeqWidth { want: usize, got: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("operation not supported by the {0} family")]
    FamilyMismatch(&'static str),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Per-frame convolutional architectures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CnnArch {
    /// conv3x3x8 / pool / conv3x3x16 / pool / dense
    ConvPair,
    /// ConvPair with one extra conv3x3x16 stage before the dense layer
    ConvTriple,
    /// 4x-downsampled pixels / dense 32 / dense
    DownsampleDense,
}

impl CnnArch {
    pub fn id(&self) -> &'static str {
        match self {
            CnnArch::ConvPair => "a",
            CnnArch::ConvTriple => "b",
            CnnArch::DownsampleDense => "c",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        match id {
            "a" => Some(CnnArch::ConvPair),
            "b" => Some(CnnArch::ConvTriple),
            "c" => Some(CnnArch::DownsampleDense),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CnnSpec {
    pub arch: CnnArch,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub outputs: usize,
}

impl CnnSpec {
    pub fn validate(&self) -> Result<(), LearnerError> {
        if self.height % 4 != 0 || self.width % 4 != 0 {
            return Err(LearnerError::BadSpec(
                "frame extents must be multiples of 4".into(),
            ));
        }
        if self.channels == 0 || self.outputs == 0 {
            return Err(LearnerError::BadSpec("zero channels or outputs".into()));
        }
        Ok(())
    }

    pub fn frame_shape(&self) -> Vec<usize> {
        vec![self.height, self.width, self.channels]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RnnCellKind {
    Lstm,
    Gru,
}

impl RnnCellKind {
    pub fn id(&self) -> &'static str {
        match self {
            RnnCellKind::Lstm => "lstm",
            RnnCellKind::Gru => "gru",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Unidirectional,
    Bidirectional,
}

impl Direction {
    pub fn id(&self) -> &'static str {
        match self {
            Direction::Unidirectional => "uni",
            Direction::Bidirectional => "bi",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RnnSpec {
    pub cell: RnnCellKind,
    pub layers: usize,
    pub width: usize,
    pub direction: Direction,
    pub io_width: usize,
}

impl RnnSpec {
    pub fn validate(&self) -> Result<(), LearnerError> {
        if self.layers < 1 || self.width < 1 || self.io_width < 1 {
            return Err(LearnerError::BadSpec(
                "layers, width and io width must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Everything a weak learner can be. The `Seq*` and `BiasOnly` entries are
/// diagnostic architectures with known Jacobians.
#[derive(Clone, Debug, PartialEq)]
pub enum Architecture {
    Cnn(CnnSpec),
    Rnn(RnnSpec),
    /// Frame learner that outputs its bias regardless of the frame.
    BiasOnly { outputs: usize },
    /// Sequence learner that returns its input sequence unchanged.
    SeqIdentity { width: usize },
    /// Per-channel linear recurrence; channel j of the output depends only
    /// on channel j of the input.
    SeqLazy { width: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Frame,
    Sequence,
}

impl Architecture {
    pub fn family(&self) -> Family {
        match self {
            Architecture::Cnn(_) | Architecture::BiasOnly { .. } => Family::Frame,
            _ => Family::Sequence,
        }
    }

    /// Stable identifier used in menus, manifests and checkpoints.
    pub fn id(&self) -> String {
        match self {
            Architecture::Cnn(s) => format!(
                "cnn:{}:{}x{}x{}:{}",
                s.arch.id(),
                s.height,
                s.width,
                s.channels,
                s.outputs
            ),
            Architecture::Rnn(s) => format!(
                "rnn:{}:c{}:l{}:{}:{}",
                s.cell.id(),
                s.width,
                s.layers,
                s.direction.id(),
                s.io_width
            ),
            Architecture::BiasOnly { outputs } => format!("diag:bias:{outputs}"),
            Architecture::SeqIdentity { width } => format!("diag:identity:{width}"),
            Architecture::SeqLazy { width } => format!("diag:lazy:{width}"),
        }
    }

    /// Short display id without the shape suffix.
    pub fn short_id(&self) -> String {
        match self {
            Architecture::Cnn(s) => format!("cnn:{}", s.arch.id()),
            Architecture::Rnn(s) => format!(
                "rnn:{}:c{}:{}",
                s.cell.id(),
                s.width,
                s.direction.id()
            ),
            other => other.id(),
        }
    }

    pub fn parse(id: &str) -> Result<Architecture, LearnerError> {
        let parts: Vec<&str> = id.split(':').collect();
        let bad = || LearnerError::UnknownArchitecture(id.to_string());
        match parts.as_slice() {
            ["cnn", arch, dims, outputs] => {
                let arch = CnnArch::from_id(arch).ok_or_else(bad)?;
                let d: Vec<usize> = dims
                    .split('x')
                    .map(|v| v.parse().map_err(|_| bad()))
                    .collect::<Result<_, _>>()?;
                if d.len() != 3 {
                    return Err(bad());
                }
                Ok(Architecture::Cnn(CnnSpec {
                    arch,
                    height: d[0],
                    width: d[1],
                    channels: d[2],
                    outputs: outputs.parse().map_err(|_| bad())?,
                }))
            }
            ["rnn", cell, c, l, dir, io] => {
                let cell = match *cell {
                    "lstm" => RnnCellKind::Lstm,
                    "gru" => RnnCellKind::Gru,
                    _ => return Err(bad()),
                };
                let direction = match *dir {
                    "uni" => Direction::Unidirectional,
                    "bi" => Direction::Bidirectional,
                    _ => return Err(bad()),
                };
                Ok(Architecture::Rnn(RnnSpec {
                    cell,
                    width: c.strip_prefix('c').ok_or_else(bad)?.parse().map_err(|_| bad())?,
                    layers: l.strip_prefix('l').ok_or_else(bad)?.parse().map_err(|_| bad())?,
                    direction,
                    io_width: io.parse().map_err(|_| bad())?,
                }))
            }
            ["diag", "bias", n] => Ok(Architecture::BiasOnly {
                outputs: n.parse().map_err(|_| bad())?,
            }),
            ["diag", "identity", n] => Ok(Architecture::SeqIdentity {
                width: n.parse().map_err(|_| bad())?,
            }),
            ["diag", "lazy", n] => Ok(Architecture::SeqLazy {
                width: n.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        match self {
            Architecture::Cnn(s) => s.validate(),
            Architecture::Rnn(s) => s.validate(),
            Architecture::BiasOnly { outputs } if *outputs == 0 => {
                Err(LearnerError::BadSpec("zero outputs".into()))
            }
            Architecture::SeqIdentity { width } | Architecture::SeqLazy { width } if *width == 0 => {
                Err(LearnerError::BadSpec("zero width".into()))
            }
            _ => Ok(()),
        }
    }

    /// Output width per frame.
    pub fn outputs(&self) -> usize {
        match self {
            Architecture::Cnn(s) => s.outputs,
            Architecture::Rnn(s) => s.io_width,
            Architecture::BiasOnly { outputs } => *outputs,
            Architecture::SeqIdentity { width } | Architecture::SeqLazy { width } => *width,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Provenance {
    Fresh { seed: u64 },
    FineTuned { from_iteration: usize },
    Loaded,
}

/// A parameterized differentiable model emitting one logit per tool.
#[derive(Clone, Debug)]
pub struct WeakLearner {
    pub arch: Architecture,
    pub params: ParamSet,
    pub provenance: Provenance,
}

/// Seeded parameter initializer; every tensor gets its own derived stream so
/// layouts stay reproducible when unrelated tensors are added.
pub(crate) struct ParamInit {
    root: SplitRng,
    slot: u64,
    pub set: ParamSet,
}

impl ParamInit {
    fn new(seed: u64) -> Self {
        ParamInit {
            root: SplitRng::new(seed),
            slot: 0,
            set: ParamSet::new(),
        }
    }

    /// Uniform init in +/- sqrt(6 / (fan_in + fan_out)).
    pub fn glorot(&mut self, name: &str, shape: &[usize], fan_in: usize, fan_out: usize) {
        self.slot += 1;
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut rng = self.root.split(self.slot);
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n)
            .map(|_| rng.rng().random_range(-bound..bound))
            .collect();
        self.set
            .push(name, Tensor::new(shape.to_vec(), data).expect("init shape"));
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], v: f64) {
        self.slot += 1;
        self.set.push(name, Tensor::filled(shape, v));
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) {
        self.constant(name, shape, 0.0);
    }
}

/// Deterministically initialized learner for the given architecture.
pub fn build(arch: &Architecture, seed: u64) -> Result<WeakLearner, LearnerError> {
    arch.validate()?;
    let mut init = ParamInit::new(seed);
    match arch {
        Architecture::Cnn(spec) => cnn::init_params(spec, &mut init),
        Architecture::Rnn(spec) => rnn::init_params(spec, &mut init),
        Architecture::BiasOnly { outputs } => init.zeros("bias", &[*outputs]),
        Architecture::SeqIdentity { .. } => {}
        Architecture::SeqLazy { width } => {
            init.glorot("decay", &[*width], 1, 1);
            init.glorot("in", &[*width], 1, 1);
            init.glorot("out", &[*width], 1, 1);
            init.zeros("bias", &[*width]);
        }
    }
    Ok(WeakLearner {
        arch: arch.clone(),
        params: init.set,
        provenance: Provenance::Fresh { seed },
    })
}

impl WeakLearner {
    pub fn family(&self) -> Family {
        self.arch.family()
    }

    pub fn id(&self) -> String {
        self.arch.id()
    }

    pub fn outputs(&self) -> usize {
        self.arch.outputs()
    }

    /// Total scalar parameter count (tie-break key in candidate selection).
    pub fn param_count(&self) -> usize {
        self.params.total_len()
    }

    /// Builds the logit computation for one frame on an existing graph node.
    pub fn frame_logits_node(&self, g: &mut Graph, input: NodeId) -> Result<NodeId, LearnerError> {
        match &self.arch {
            Architecture::Cnn(spec) => {
                if g.value(input).shape() != spec.frame_shape().as_slice() {
                    return Err(LearnerError::FrameShape {
                        want: spec.frame_shape(),
                        got: g.value(input).shape().to_vec(),
                    });
                }
                cnn::logits_node(spec, &self.params, g, input)
            }
            Architecture::BiasOnly { .. } => {
                Ok(g.param(0, self.params.value(0).clone()))
            }
            _ => Err(LearnerError::FamilyMismatch("sequence")),
        }
    }

    /// Frame logits with the frame marked as a differentiable input.
    /// Returns (graph, input node, logits node).
    pub fn frame_graph(&self, frame: &Tensor) -> Result<(Graph, NodeId, NodeId), LearnerError> {
        let mut g = Graph::with_capacity(32);
        let input = g.input(frame.clone());
        let logits = self.frame_logits_node(&mut g, input)?;
        Ok((g, input, logits))
    }

    /// Logits for one frame.
    pub fn frame_logits(&self, frame: &Tensor) -> Result<Vec<f64>, LearnerError> {
        let mut g = Graph::with_capacity(32);
        let input = g.constant(frame.clone());
        let logits = self.frame_logits_node(&mut g, input)?;
        Ok(g.value(logits).data().to_vec())
    }

    /// Logits for a batch of frames, one row per frame.
    pub fn cnn_forward(&self, frames: &[&Tensor]) -> Result<SeqMatrix, LearnerError> {
        let mut out = SeqMatrix::zeros(frames.len(), self.outputs());
        for (i, f) in frames.iter().enumerate() {
            let row = self.frame_logits(f)?;
            out.row_mut(i).copy_from_slice(&row);
        }
        Ok(out)
    }

    /// Builds the whole-sequence computation; returns one logits node per step.
    /// `inputs` must already be nodes of `g`, one [width] vector per step.
    pub fn sequence_logits_nodes(
        &self,
        g: &mut Graph,
        inputs: &[NodeId],
    ) -> Result<Vec<NodeId>, LearnerError> {
        if inputs.is_empty() {
            return Err(LearnerError::EmptySequence);
        }
        let want = self.outputs();
        for &n in inputs {
            let shape = g.value(n).shape();
            if shape != [want] {
                return Err(LearnerError::SeqWidth {
                    want,
                    got: shape.iter().product(),
                });
            }
        }
        match &self.arch {
            Architecture::Rnn(spec) => rnn::logits_nodes(spec, &self.params, g, inputs),
            Architecture::SeqIdentity { .. } => Ok(inputs.to_vec()),
            Architecture::SeqLazy { width } => {
                rnn::lazy_logits_nodes(*width, &self.params, g, inputs)
            }
            _ => Err(LearnerError::FamilyMismatch("frame")),
        }
    }

    /// Sequence logits with inputs marked differentiable.
    /// Returns (graph, input nodes, output nodes).
    pub fn sequence_graph(
        &self,
        inputs: &SeqMatrix,
    ) -> Result<(Graph, Vec<NodeId>, Vec<NodeId>), LearnerError> {
        let mut g = Graph::with_capacity(inputs.rows() * 24);
        let input_nodes: Vec<NodeId> = (0..inputs.rows())
            .map(|t| {
                g.input(
                    Tensor::new(vec![inputs.cols()], inputs.row(t).to_vec()).expect("row shape"),
                )
            })
            .collect();
        let outputs = self.sequence_logits_nodes(&mut g, &input_nodes)?;
        Ok((g, input_nodes, outputs))
    }

    /// Output sequence for an input sequence of per-frame vectors.
    pub fn rnn_forward(&self, inputs: &SeqMatrix) -> Result<SeqMatrix, LearnerError> {
        if inputs.rows() == 0 {
            return Err(LearnerError::EmptySequence);
        }
        let mut g = Graph::with_capacity(inputs.rows() * 24);
        let input_nodes: Vec<NodeId> = (0..inputs.rows())
            .map(|t| {
                g.constant(
                    Tensor::new(vec![inputs.cols()], inputs.row(t).to_vec()).expect("row shape"),
                )
            })
            .collect();
        let outputs = self.sequence_logits_nodes(&mut g, &input_nodes)?;
        let mut out = SeqMatrix::zeros(inputs.rows(), self.outputs());
        for (t, &node) in outputs.iter().enumerate() {
            out.row_mut(t).copy_from_slice(g.value(node).data());
        }
        Ok(out)
    }
}

/// The three-entry convolutional catalog.
pub fn cnn_menu(height: usize, width: usize, channels: usize, outputs: usize) -> Vec<Architecture> {
    [CnnArch::ConvPair, CnnArch::ConvTriple, CnnArch::DownsampleDense]
        .into_iter()
        .map(|arch| {
            Architecture::Cnn(CnnSpec {
                arch,
                height,
                width,
                channels,
                outputs,
            })
        })
        .collect()
}

/// The six-entry recurrent catalog: {LSTM, GRU} x cell width {8, 16, 32},
/// two layers each.
pub fn rnn_menu(io_width: usize, direction: Direction) -> Vec<Architecture> {
    let mut out = Vec::new();
    for cell in [RnnCellKind::Lstm, RnnCellKind::Gru] {
        for width in [8usize, 16, 32] {
            out.push(Architecture::Rnn(RnnSpec {
                cell,
                layers: 2,
                width,
                direction,
                io_width,
            }));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cnn_spec() -> CnnSpec {
        CnnSpec {
            arch: CnnArch::ConvPair,
            height: 8,
            width: 8,
            channels: 3,
            outputs: 4,
        }
    }

    #[test]
    fn build_is_deterministic() {
        let arch = Architecture::Cnn(tiny_cnn_spec());
        let a = build(&arch, 42).unwrap();
        let b = build(&arch, 42).unwrap();
        for i in 0..a.params.len() {
            assert_eq!(a.params.value(i).data(), b.params.value(i).data());
        }
        let c = build(&arch, 43).unwrap();
        assert_ne!(a.params.value(0).data(), c.params.value(0).data());
    }

    #[test]
    fn zero_parameter_lstm_outputs_zero() {
        let arch = Architecture::Rnn(RnnSpec {
            cell: RnnCellKind::Lstm,
            layers: 2,
            width: 8,
            direction: Direction::Unidirectional,
            io_width: 3,
        });
        let mut l = build(&arch, 1).unwrap();
        l.params.zero_values();
        let inputs = SeqMatrix::from_rows(&[vec![0.4, -1.0, 2.0], vec![1.0, 1.0, 1.0]]).unwrap();
        let out = l.rnn_forward(&inputs).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_parameter_gru_outputs_zero() {
        let arch = Architecture::Rnn(RnnSpec {
            cell: RnnCellKind::Gru,
            layers: 2,
            width: 8,
            direction: Direction::Bidirectional,
            io_width: 3,
        });
        let mut l = build(&arch, 1).unwrap();
        l.params.zero_values();
        let inputs = SeqMatrix::from_rows(&[vec![0.4, -1.0, 2.0], vec![1.0, 1.0, 1.0]]).unwrap();
        let out = l.rnn_forward(&inputs).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_parameter_cnn_outputs_zero() {
        let arch = Architecture::Cnn(tiny_cnn_spec());
        let mut l = build(&arch, 9).unwrap();
        l.params.zero_values();
        let frame = Tensor::filled(&[8, 8, 3], 0.7);
        assert!(l.frame_logits(&frame).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_frames_identical_rows() {
        let arch = Architecture::Cnn(tiny_cnn_spec());
        let l = build(&arch, 5).unwrap();
        let frame = Tensor::filled(&[8, 8, 3], 0.3);
        let out = l.cnn_forward(&[&frame, &frame]).unwrap();
        assert_eq!(out.row(0), out.row(1));
    }

    #[test]
    fn frame_shape_checked() {
        let arch = Architecture::Cnn(tiny_cnn_spec());
        let l = build(&arch, 5).unwrap();
        let frame = Tensor::filled(&[8, 4, 3], 0.3);
        assert!(matches!(
            l.frame_logits(&frame),
            Err(LearnerError::FrameShape { .. })
        ));
    }

    #[test]
    fn empty_sequence_rejected() {
        let arch = Architecture::SeqIdentity { width: 3 };
        let l = build(&arch, 0).unwrap();
        let inputs = SeqMatrix::zeros(0, 3);
        assert!(matches!(
            l.rnn_forward(&inputs),
            Err(LearnerError::EmptySequence)
        ));
    }

    #[test]
    fn unidirectional_is_causal_bit_exact() {
        let arch = Architecture::Rnn(RnnSpec {
            cell: RnnCellKind::Gru,
            layers: 2,
            width: 8,
            direction: Direction::Unidirectional,
            io_width: 3,
        });
        let l = build(&arch, 3).unwrap();
        let mut rows: Vec<Vec<f64>> = (0..6)
            .map(|t| vec![0.1 * t as f64, -0.2, 0.05 * t as f64])
            .collect();
        let base = l.rnn_forward(&SeqMatrix::from_rows(&rows).unwrap()).unwrap();
        rows[5][1] += 10.0;
        let bumped = l.rnn_forward(&SeqMatrix::from_rows(&rows).unwrap()).unwrap();
        for t in 0..5 {
            assert_eq!(base.row(t), bumped.row(t), "step {t} changed");
        }
        assert_ne!(base.row(5), bumped.row(5));
    }

    #[test]
    fn bidirectional_sees_the_future() {
        let arch = Architecture::Rnn(RnnSpec {
            cell: RnnCellKind::Lstm,
            layers: 2,
            width: 8,
            direction: Direction::Bidirectional,
            io_width: 3,
        });
        let l = build(&arch, 3).unwrap();
        let mut rows: Vec<Vec<f64>> = (0..6)
            .map(|t| vec![0.1 * t as f64, -0.2, 0.05 * t as f64])
            .collect();
        let base = l.rnn_forward(&SeqMatrix::from_rows(&rows).unwrap()).unwrap();
        rows[5][0] += 5.0;
        let bumped = l.rnn_forward(&SeqMatrix::from_rows(&rows).unwrap()).unwrap();
        assert_ne!(base.row(0), bumped.row(0), "future change must reach step 0");
    }

    #[test]
    fn architecture_id_round_trip() {
        for arch in cnn_menu(24, 24, 3, 8)
            .into_iter()
            .chain(rnn_menu(8, Direction::Bidirectional))
            .chain([
                Architecture::BiasOnly { outputs: 4 },
                Architecture::SeqIdentity { width: 5 },
                Architecture::SeqLazy { width: 6 },
            ])
        {
            let id = arch.id();
            let parsed = Architecture::parse(&id).unwrap();
            assert_eq!(parsed, arch, "{id}");
        }
    }
}
