//! Recurrent architectures unrolled onto the differentiation graph.
//!
//! Cells are stacked `layers` deep with weights shared across time. The
//! bidirectional variant runs an independent reversed stack and fuses the two
//! per-step hidden states through a dense projection.

use super::{LearnerError, ParamInit, RnnCellKind, RnnSpec};
use crate::graph::NodeId;
use crate::tensor::Tensor as GenericTensor;

type Tensor = GenericTensor<f64>;
type Graph = crate::graph::Graph<f64>;
type ParamSet = crate::optim::ParamSet<f64>;

const LSTM_GATES: [&str; 4] = ["input", "forget", "cell", "output"];
const GRU_GATES: [&str; 3] = ["update", "reset", "candidate"];

fn tensors_per_layer(cell: RnnCellKind) -> usize {
    match cell {
        RnnCellKind::Lstm => 3 * LSTM_GATES.len(),
        RnnCellKind::Gru => 3 * GRU_GATES.len(),
    }
}

pub(crate) fn init_params(spec: &RnnSpec, init: &mut ParamInit) {
    let stacks: &[&str] = match spec.direction {
        super::Direction::Unidirectional => &["fwd"],
        super::Direction::Bidirectional => &["fwd", "bwd"],
    };
    for stack in stacks {
        for layer in 0..spec.layers {
            let d_in = if layer == 0 { spec.io_width } else { spec.width };
            let gates: &[&str] = match spec.cell {
                RnnCellKind::Lstm => &LSTM_GATES,
                RnnCellKind::Gru => &GRU_GATES,
            };
            for gate in gates {
                let prefix = format!("{stack}.l{layer}.{gate}");
                init.glorot(&format!("{prefix}.w"), &[spec.width, d_in], d_in, spec.width);
                init.glorot(
                    &format!("{prefix}.u"),
                    &[spec.width, spec.width],
                    spec.width,
                    spec.width,
                );
                // forget gate bias starts at +1
                if spec.cell == RnnCellKind::Lstm && *gate == "forget" {
                    init.constant(&format!("{prefix}.b"), &[spec.width], 1.0);
                } else {
                    init.zeros(&format!("{prefix}.b"), &[spec.width]);
                }
            }
        }
    }
    let fused = match spec.direction {
        super::Direction::Unidirectional => spec.width,
        super::Direction::Bidirectional => 2 * spec.width,
    };
    init.glorot("out.weight", &[spec.io_width, fused], fused, spec.io_width);
    init.zeros("out.bias", &[spec.io_width]);
}

struct GateRef {
    w: NodeId,
    u: NodeId,
    b: NodeId,
}

fn gate_pre(g: &mut Graph, gate: &GateRef, x: NodeId, h: NodeId) -> Result<NodeId, LearnerError> {
    let wx = g.matvec(gate.w, x)?;
    let uh = g.matvec(gate.u, h)?;
    let s = g.add(wx, uh)?;
    Ok(g.add(s, gate.b)?)
}

fn lstm_step(
    g: &mut Graph,
    gates: &[GateRef],
    x: NodeId,
    h: NodeId,
    c: NodeId,
) -> Result<(NodeId, NodeId), LearnerError> {
    let pre_i = gate_pre(g, &gates[0], x, h)?;
    let i = g.sigmoid(pre_i);
    let pre_f = gate_pre(g, &gates[1], x, h)?;
    let f = g.sigmoid(pre_f);
    let pre_g = gate_pre(g, &gates[2], x, h)?;
    let cand = g.tanh(pre_g);
    let pre_o = gate_pre(g, &gates[3], x, h)?;
    let o = g.sigmoid(pre_o);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_new = g.add(keep, write)?;
    let c_act = g.tanh(c_new);
    let h_new = g.mul(o, c_act)?;
    Ok((h_new, c_new))
}

fn gru_step(
    g: &mut Graph,
    gates: &[GateRef],
    ones: NodeId,
    x: NodeId,
    h: NodeId,
) -> Result<NodeId, LearnerError> {
    let pre_z = gate_pre(g, &gates[0], x, h)?;
    let z = g.sigmoid(pre_z);
    let pre_r = gate_pre(g, &gates[1], x, h)?;
    let r = g.sigmoid(pre_r);
    let rh = g.mul(r, h)?;
    let wn = g.matvec(gates[2].w, x)?;
    let un = g.matvec(gates[2].u, rh)?;
    let pre_n = g.add(wn, un)?;
    let pre_n = g.add(pre_n, gates[2].b)?;
    let cand = g.tanh(pre_n);
    let one_m_z = g.sub(ones, z)?;
    let keep = g.mul(one_m_z, h)?;
    let write = g.mul(z, cand)?;
    Ok(g.add(keep, write)?)
}

/// Runs one stack over the inputs (already ordered in processing direction);
/// returns the last layer's hidden node per step.
fn run_stack(
    spec: &RnnSpec,
    g: &mut Graph,
    gates: &[Vec<GateRef>],
    ones: NodeId,
    inputs: &[NodeId],
) -> Result<Vec<NodeId>, LearnerError> {
    let zero = g.constant(Tensor::zeros(&[spec.width]));
    let mut h: Vec<NodeId> = vec![zero; spec.layers];
    let mut c: Vec<NodeId> = vec![zero; spec.layers];
    let mut out = Vec::with_capacity(inputs.len());
    for &x0 in inputs {
        let mut x = x0;
        for layer in 0..spec.layers {
            match spec.cell {
                RnnCellKind::Lstm => {
                    let (h_new, c_new) = lstm_step(g, &gates[layer], x, h[layer], c[layer])?;
                    h[layer] = h_new;
                    c[layer] = c_new;
                }
                RnnCellKind::Gru => {
                    h[layer] = gru_step(g, &gates[layer], ones, x, h[layer])?;
                }
            }
            x = h[layer];
        }
        out.push(x);
    }
    Ok(out)
}

pub(crate) fn logits_nodes(
    spec: &RnnSpec,
    params: &ParamSet,
    g: &mut Graph,
    inputs: &[NodeId],
) -> Result<Vec<NodeId>, LearnerError> {
    // bind every parameter once, in declaration order
    let bound: Vec<NodeId> = (0..params.len())
        .map(|i| g.param(i, params.value(i).clone()))
        .collect();
    let per_layer = tensors_per_layer(spec.cell);
    let stack_len = spec.layers * per_layer;
    let gate_count = per_layer / 3;
    let stack_gates = |stack: usize| -> Vec<Vec<GateRef>> {
        (0..spec.layers)
            .map(|layer| {
                (0..gate_count)
                    .map(|k| {
                        let base = stack * stack_len + layer * per_layer + 3 * k;
                        GateRef {
                            w: bound[base],
                            u: bound[base + 1],
                            b: bound[base + 2],
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let ones = g.constant(Tensor::filled(&[spec.width], 1.0));
    let fwd = run_stack(spec, g, &stack_gates(0), ones, inputs)?;
    let (fused, n_stacks): (Vec<NodeId>, usize) = match spec.direction {
        super::Direction::Unidirectional => (fwd, 1),
        super::Direction::Bidirectional => {
            let rev_inputs: Vec<NodeId> = inputs.iter().rev().copied().collect();
            let mut bwd = run_stack(spec, g, &stack_gates(1), ones, &rev_inputs)?;
            bwd.reverse();
            let mut fused = Vec::with_capacity(inputs.len());
            for (f, b) in fwd.into_iter().zip(bwd) {
                fused.push(g.concat(f, b)?);
            }
            (fused, 2)
        }
    };
    let w_out = bound[n_stacks * stack_len];
    let b_out = bound[n_stacks * stack_len + 1];
    fused
        .into_iter()
        .map(|node| Ok(g.dense(w_out, b_out, node)?))
        .collect()
}

/// Per-channel linear recurrence: h_t = a.h_{t-1} + b.x_t, y_t = w.h_t + bias,
/// all elementwise, so output channel j depends only on input channel j.
pub(crate) fn lazy_logits_nodes(
    width: usize,
    params: &ParamSet,
    g: &mut Graph,
    inputs: &[NodeId],
) -> Result<Vec<NodeId>, LearnerError> {
    let _ = width;
    let decay = g.param(0, params.value(0).clone());
    let gain = g.param(1, params.value(1).clone());
    let w_out = g.param(2, params.value(2).clone());
    let bias = g.param(3, params.value(3).clone());
    let mut h = g.constant(Tensor::zeros(g.value(decay).shape()));
    let mut out = Vec::with_capacity(inputs.len());
    for &x in inputs {
        let keep = g.mul(decay, h)?;
        let write = g.mul(gain, x)?;
        h = g.add(keep, write)?;
        let scaled = g.mul(w_out, h)?;
        out.push(g.add(scaled, bias)?);
    }
    Ok(out)
}
