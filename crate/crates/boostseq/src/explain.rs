//! Model introspection: hue-constrained sensitivity heatmaps for frame
//! learners and the aggregated input-output gradient matrix of the sequence
//! block.

use crate::boosting::{BoostError, ScoredLearner};
use crate::learners::{Family, LearnerError, WeakLearner};
use crate::matrix::SeqMatrix;
use crate::tensor::Tensor as GenericTensor;
use thiserror::Error;

type Tensor = GenericTensor<f64>;
type Graph = crate::graph::Graph<f64>;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("frame shape {got:?} does not match the learner input {want:?}")]
    FrameShape { want: Vec<usize>, got: Vec<usize> },
    #[error("empty sequence block")]
    EmptyBlock,
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Boost(#[from] BoostError),
}

/// Nonnegative per-pixel sensitivity of a frame learner's summed logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub values: Tensor,
    pub learner_id: String,
    pub frame_id: String,
}

impl Heatmap {
    /// Min-max normalized 8-bit view (all-equal maps collapse to zero).
    pub fn to_gray8(&self) -> Vec<u8> {
        let data = self.values.data();
        let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        data.iter()
            .map(|&v| (255.0 * (v - lo) / span).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Portable graymap (P5) bytes of the normalized view.
    pub fn to_pgm(&self) -> Vec<u8> {
        let (h, w) = (self.values.shape()[0], self.values.shape()[1]);
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        out.extend(self.to_gray8());
        out
    }
}

fn mask_gradient(
    learner: &WeakLearner,
    frame: &Tensor,
) -> Result<Tensor, ExplainError> {
    if learner.family() != Family::Frame {
        return Err(ExplainError::Learner(LearnerError::FamilyMismatch(
            "sequence",
        )));
    }
    if frame.rank() != 3 {
        return Err(ExplainError::FrameShape {
            want: vec![0, 0, 3],
            got: frame.shape().to_vec(),
        });
    }
    let (h, w) = (frame.shape()[0], frame.shape()[1]);
    let mut g = Graph::with_capacity(40);
    // all-ones mask scaling every channel of each pixel; the masked frame
    // equals the frame itself, and one backward pass through the mask node
    // joins the three channel gradients per pixel
    let mask = g.input(Tensor::filled(&[h, w], 1.0));
    let image = g.constant(frame.clone());
    let masked = g.pixel_mask(mask, image)?;
    let logits = learner.frame_logits_node(&mut g, masked)?;
    let total = g.sum(logits);
    let grads = g.backward(total, &Tensor::scalar(1.0))?;
    Ok(grads
        .node(mask)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(&[h, w])))
}

/// Hue-constrained sensitivity: the absolute gradient of the summed logits
/// with respect to a per-pixel scalar mask multiplying all color channels,
/// evaluated at the identity mask.
pub fn hue_sensitivity(
    learner: &WeakLearner,
    frame: &Tensor,
    frame_id: &str,
) -> Result<Heatmap, ExplainError> {
    let grad = mask_gradient(learner, frame)?;
    Ok(Heatmap {
        values: grad.map(f64::abs),
        learner_id: learner.id(),
        frame_id: frame_id.to_string(),
    })
}

/// Weight-combined sensitivity over a whole frame block: the absolute value
/// of the weighted sum of per-learner mask gradients.
pub fn block_hue_sensitivity(
    block: &[ScoredLearner],
    frame: &Tensor,
    frame_id: &str,
) -> Result<Heatmap, ExplainError> {
    if frame.rank() != 3 {
        return Err(ExplainError::FrameShape {
            want: vec![0, 0, 3],
            got: frame.shape().to_vec(),
        });
    }
    let (h, w) = (frame.shape()[0], frame.shape()[1]);
    let mut acc = Tensor::zeros(&[h, w]);
    for scored in block {
        if scored.weight == 0.0 {
            continue;
        }
        let mut grad = mask_gradient(&scored.learner, frame)?;
        grad.scale_assign(scored.weight);
        acc.add_assign(&grad).expect("heatmap shape");
    }
    Ok(Heatmap {
        values: acc.map(f64::abs),
        learner_id: "ensemble".to_string(),
        frame_id: frame_id.to_string(),
    })
}

/// Accumulated gradients of sequence-block outputs with respect to the
/// per-frame inputs. Rows index the output label, columns the input label;
/// entries sum over videos and over all (output step, input step) pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMatrix {
    pub tools: usize,
    /// Row-major [output label][input label].
    pub values: Vec<f64>,
}

impl GradientMatrix {
    pub fn get(&self, out_label: usize, in_label: usize) -> f64 {
        self.values[out_label * self.tools + in_label]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for r in 0..self.tools {
            let row: Vec<String> = (0..self.tools)
                .map(|c| format!("{}", self.get(r, c)))
                .collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Gradient matrix of one sequence learner accumulated over a dataset of
/// input tracks: one backward pass per output label per track, seeded with
/// ones at that label across all steps.
pub fn rnn_gradient_matrix(
    learner: &WeakLearner,
    inputs: &[&SeqMatrix],
) -> Result<GradientMatrix, ExplainError> {
    if inputs.is_empty() {
        return Err(ExplainError::EmptyDataset);
    }
    let tools = learner.outputs();
    let mut values = vec![0.0; tools * tools];
    for track in inputs {
        let (g, input_nodes, output_nodes) = learner.sequence_graph(track)?;
        for out_label in 0..tools {
            let seeds: Vec<Tensor> = (0..track.rows())
                .map(|_| {
                    let mut d = vec![0.0; tools];
                    d[out_label] = 1.0;
                    Tensor::new(vec![tools], d).expect("seed")
                })
                .collect();
            let grads = g.backward_multi(output_nodes.iter().copied().zip(seeds.iter()))?;
            for &node in &input_nodes {
                if let Some(grad) = grads.node(node) {
                    for (in_label, &v) in grad.data().iter().enumerate() {
                        values[out_label * tools + in_label] += v;
                    }
                }
            }
        }
    }
    Ok(GradientMatrix { tools, values })
}

/// Weight-combined gradient matrix of a whole sequence block.
pub fn block_gradient_matrix(
    block: &[ScoredLearner],
    inputs: &[&SeqMatrix],
) -> Result<GradientMatrix, ExplainError> {
    if block.is_empty() {
        return Err(ExplainError::EmptyBlock);
    }
    if inputs.is_empty() {
        return Err(ExplainError::EmptyDataset);
    }
    let tools = block[0].learner.outputs();
    let mut values = vec![0.0; tools * tools];
    for scored in block {
        if scored.weight == 0.0 {
            continue;
        }
        let m = rnn_gradient_matrix(&scored.learner, inputs)?;
        for (acc, v) in values.iter_mut().zip(&m.values) {
            *acc += scored.weight * v;
        }
    }
    Ok(GradientMatrix { tools, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{build, Architecture, CnnArch, CnnSpec};

    fn tiny_cnn() -> WeakLearner {
        build(
            &Architecture::Cnn(CnnSpec {
                arch: CnnArch::ConvPair,
                height: 8,
                width: 8,
                channels: 3,
                outputs: 2,
            }),
            31,
        )
        .unwrap()
    }

    #[test]
    fn zero_first_layer_means_zero_heatmap() {
        let mut l = tiny_cnn();
        // zero the first convolution kernel and bias: no pixel influence
        l.params.param_mut(0).value = Tensor::zeros(&[3, 3, 3, 8]);
        l.params.param_mut(1).value = Tensor::zeros(&[8]);
        let frame = Tensor::filled(&[8, 8, 3], 0.5);
        let h = hue_sensitivity(&l, &frame, "f0").unwrap();
        assert!(h.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_model_closed_form() {
        // single-output dense over all pixels: the mask gradient at pixel
        // (y, x) is the channel sum of weight * value there
        let l = build(
            &Architecture::Cnn(CnnSpec {
                arch: CnnArch::DownsampleDense,
                height: 8,
                width: 8,
                channels: 3,
                outputs: 2,
            }),
            5,
        )
        .unwrap();
        let frame = Tensor::filled(&[8, 8, 3], 0.5);
        let map = hue_sensitivity(&l, &frame, "f").unwrap();
        // oracle by finite differences on the mask
        let step = 1e-6;
        for &(y, x) in &[(0usize, 0usize), (3, 5), (7, 7)] {
            let eval = |scale: f64| {
                let mut bumped = frame.clone();
                for c in 0..3 {
                    let idx = bumped.idx3(y, x, c);
                    bumped.data_mut()[idx] *= scale;
                }
                l.frame_logits(&bumped).unwrap().iter().sum::<f64>()
            };
            let numeric = (eval(1.0 + step) - eval(1.0 - step)) / (2.0 * step);
            let got = map.values.data()[y * 8 + x];
            assert!(
                (got - numeric.abs()).abs() < 1e-6,
                "({y},{x}): {got} vs {numeric}"
            );
        }
    }

    #[test]
    fn heatmap_invariant_to_output_bias() {
        let mut l = tiny_cnn();
        let frame = Tensor::filled(&[8, 8, 3], 0.3);
        let a = hue_sensitivity(&l, &frame, "f").unwrap();
        let n = l.params.len();
        let bias = l.params.param_mut(n - 1);
        bias.value = bias.value.map(|v| v + 7.5);
        let b = hue_sensitivity(&l, &frame, "f").unwrap();
        assert_eq!(a.values.data(), b.values.data());
    }

    #[test]
    fn identity_learner_gives_frame_count_diagonal() {
        let l = build(&Architecture::SeqIdentity { width: 3 }, 0).unwrap();
        let t1 = SeqMatrix::zeros(5, 3);
        let t2 = SeqMatrix::zeros(7, 3);
        let m = rnn_gradient_matrix(&l, &[&t1, &t2]).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let expect = if r == c { 12.0 } else { 0.0 };
                assert_eq!(m.get(r, c), expect);
            }
        }
    }

    #[test]
    fn lazy_learner_is_diagonal() {
        let l = build(&Architecture::SeqLazy { width: 4 }, 3).unwrap();
        let rows: Vec<Vec<f64>> = (0..6).map(|t| vec![0.1 * t as f64; 4]).collect();
        let track = SeqMatrix::from_rows(&rows).unwrap();
        let m = rnn_gradient_matrix(&l, &[&track]).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                if r != c {
                    assert_eq!(m.get(r, c), 0.0, "off-diagonal ({r},{c})");
                } else {
                    assert_ne!(m.get(r, c), 0.0, "diagonal ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn pgm_header_and_length() {
        let h = Heatmap {
            values: Tensor::new(vec![2, 3], vec![0.0, 0.5, 1.0, 0.2, 0.8, 0.4]).unwrap(),
            learner_id: "x".into(),
            frame_id: "y".into(),
        };
        let pgm = h.to_pgm();
        assert!(pgm.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(pgm.len(), b"P5\n3 2\n255\n".len() + 6);
        let gray = h.to_gray8();
        assert_eq!(gray[0], 0);
        assert_eq!(gray[2], 255);
    }
}
