//! Per-frame convolutional architectures.
//!
//! All three catalog entries map an [H, W, C] frame to one logit per tool:
//!   a: conv3x3x8 / relu / pool / conv3x3x16 / relu / pool / dense
//!   b: a with one extra conv3x3x16 / relu stage before the dense layer
//!   c: 4x mean-downsampled pixels / dense 32 / relu / dense

use super::{CnnArch, CnnSpec, LearnerError, ParamInit};
use crate::graph::NodeId;

type Graph = crate::graph::Graph<f64>;
type ParamSet = crate::optim::ParamSet<f64>;

pub(crate) fn init_params(spec: &CnnSpec, init: &mut ParamInit) {
    let (h, w, c) = (spec.height, spec.width, spec.channels);
    match spec.arch {
        CnnArch::ConvPair | CnnArch::ConvTriple => {
            init.glorot("conv1.kernel", &[3, 3, c, 8], 9 * c, 9 * 8);
            init.zeros("conv1.bias", &[8]);
            init.glorot("conv2.kernel", &[3, 3, 8, 16], 9 * 8, 9 * 16);
            init.zeros("conv2.bias", &[16]);
            if spec.arch == CnnArch::ConvTriple {
                init.glorot("conv3.kernel", &[3, 3, 16, 16], 9 * 16, 9 * 16);
                init.zeros("conv3.bias", &[16]);
            }
            let feat = (h / 4) * (w / 4) * 16;
            init.glorot("out.weight", &[spec.outputs, feat], feat, spec.outputs);
            init.zeros("out.bias", &[spec.outputs]);
        }
        CnnArch::DownsampleDense => {
            let feat = (h / 4) * (w / 4) * c;
            init.glorot("hidden.weight", &[32, feat], feat, 32);
            init.zeros("hidden.bias", &[32]);
            init.glorot("out.weight", &[spec.outputs, 32], 32, spec.outputs);
            init.zeros("out.bias", &[spec.outputs]);
        }
    }
}

/// Bind parameters in declaration order and assemble the network.
pub(crate) fn logits_node(
    spec: &CnnSpec,
    params: &ParamSet,
    g: &mut Graph,
    input: NodeId,
) -> Result<NodeId, LearnerError> {
    let mut slot = 0usize;
    let mut bind = |g: &mut Graph| {
        let id = g.param(slot, params.value(slot).clone());
        slot += 1;
        id
    };
    let (h, w, c) = (spec.height, spec.width, spec.channels);
    match spec.arch {
        CnnArch::ConvPair | CnnArch::ConvTriple => {
            let k1 = bind(g);
            let b1 = bind(g);
            let k2 = bind(g);
            let b2 = bind(g);
            let mut x = g.conv2d(input, k1, b1)?;
            x = g.relu(x);
            x = g.max_pool2(x)?;
            x = g.conv2d(x, k2, b2)?;
            x = g.relu(x);
            x = g.max_pool2(x)?;
            if spec.arch == CnnArch::ConvTriple {
                let k3 = bind(g);
                let b3 = bind(g);
                x = g.conv2d(x, k3, b3)?;
                x = g.relu(x);
            }
            let feat = (h / 4) * (w / 4) * 16;
            let flat = g.reshape(x, &[feat])?;
            let w_out = bind(g);
            let b_out = bind(g);
            Ok(g.dense(w_out, b_out, flat)?)
        }
        CnnArch::DownsampleDense => {
            // mean over 4x4 blocks via two reshape + mean-axis passes
            let rows = g.reshape(input, &[h / 4, 4, w, c])?;
            let rows = g.mean_axis(rows, 1)?;
            let cols = g.reshape(rows, &[h / 4, w / 4, 4, c])?;
            let down = g.mean_axis(cols, 2)?;
            let feat = (h / 4) * (w / 4) * c;
            let flat = g.reshape(down, &[feat])?;
            let w_h = bind(g);
            let b_h = bind(g);
            let hidden = g.dense(w_h, b_h, flat)?;
            let hidden = g.relu(hidden);
            let w_out = bind(g);
            let b_out = bind(g);
            Ok(g.dense(w_out, b_out, hidden)?)
        }
    }
}
