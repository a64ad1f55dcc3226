// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use crate::circuit::graph::Node;
use crate::error::Result;
use crate::ops::{attention_vjp, bandnorm_vjp, leaky_relu_derivative, BandNormOutput};
use crate::scalar::vec_add_assign;

use super::{ModelParams, Network, NodeTrace, NormParams, Trace};

fn norm_backward(g: &[f64], fwd: &BandNormOutput<f64>, p: &NormParams<f64>, gp: &mut NormParams<f64>) -> Vec<f64> {
    let grads = bandnorm_vjp(g, fwd, &p.gamma);
    vec_add_assign(&mut gp.gamma, &grads.gamma);
    vec_add_assign(&mut gp.beta, &grads.beta);
    grads.input
}

/// Accumulates into `grads` the parameter gradient of `⟨grad_logits, logits⟩`
/// along the branches recorded in `trace`.
pub fn backward(net: &Network<f64>, trace: &Trace<f64>, grad_logits: &[f64], grads: &mut ModelParams<f64>) {
    assert!(!net.prune_positions, "backward needs every position");
    let p = &net.params;
    let n = trace.tokens.len();
    let d = net.config.width;
    let mut g_out: BTreeMap<Node, Vec<Vec<f64>>> =
        trace.contributions.keys().map(|&k| (k, vec![vec![0.0; d]; n])).collect();

    let y = &trace.final_norm.output;
    let mut gy = vec![0.0; d];
    for (t, &gt) in grad_logits.iter().enumerate() {
        if gt == 0.0 {
            continue;
        }
        let row = p.tok_emb.row(t);
        for c in 0..d {
            gy[c] += gt * row[c];
            grads.tok_emb.data[t * d + c] += gt * y[c];
        }
    }
    let g_res = norm_backward(&gy, &trace.final_norm, &p.final_norm, &mut grads.final_norm);
    for e in trace.edges.iter().filter(|e| e.dst == Node::Logits) {
        vec_add_assign(&mut g_out.get_mut(&e.src).expect("live source")[n - 1], &g_res);
    }

    for node in net.graph.nodes.iter().rev() {
        let Some(t) = trace.nodes.get(node) else { continue };
        let node = *node;
        let g = g_out[&node].clone();
        let g_in: Vec<Vec<f64>> = match (node, t) {
            (Node::Embed, _) => {
                for (pos, (&tok, row)) in trace.tokens.iter().zip(&g).enumerate() {
                    vec_add_assign(&mut grads.tok_emb.data[tok as usize * d..(tok as usize + 1) * d], row);
                    vec_add_assign(&mut grads.pos_emb.data[pos * d..(pos + 1) * d], row);
                }
                continue;
            }
            (Node::Attn { layer, head }, NodeTrace::Attn(h)) => {
                let lp = &p.layers[layer];
                let hp = &lp.heads[head];
                let gl = &mut grads.layers[layer];
                let mut g_mixed = Vec::with_capacity(n);
                for (pos, gr) in g.iter().enumerate() {
                    vec_add_assign(&mut gl.heads[head].bo, gr);
                    g_mixed.push(hp.wo.backprop_left_mul(&h.attn.output[pos], gr, &mut gl.heads[head].wo));
                }
                let ga = attention_vjp(&g_mixed, &h.q, &h.k, &h.v, &h.attn, net.scale);
                let mut g_in = Vec::with_capacity(n);
                for pos in 0..n {
                    let gh = &mut gl.heads[head];
                    let y = &h.norm[pos].output;
                    vec_add_assign(&mut gh.bq, &ga.q[pos]);
                    vec_add_assign(&mut gh.bk, &ga.k[pos]);
                    vec_add_assign(&mut gh.bv, &ga.v[pos]);
                    let mut gy = hp.wq.backprop_left_mul(y, &ga.q[pos], &mut gh.wq);
                    vec_add_assign(&mut gy, &hp.wk.backprop_left_mul(y, &ga.k[pos], &mut gh.wk));
                    vec_add_assign(&mut gy, &hp.wv.backprop_left_mul(y, &ga.v[pos], &mut gh.wv));
                    g_in.push(norm_backward(&gy, &h.norm[pos], &lp.attn_norm, &mut gl.attn_norm));
                }
                g_in
            }
            (Node::Mlp { layer }, NodeTrace::Mlp(m)) => {
                let lp = &p.layers[layer];
                let gl = &mut grads.layers[layer];
                let mut g_in = Vec::with_capacity(n);
                for (pos, gr) in g.iter().enumerate() {
                    vec_add_assign(&mut gl.b2, gr);
                    let gh = lp.w2.backprop_left_mul(&m.hidden[pos], gr, &mut gl.w2);
                    let gpre: Vec<f64> = gh
                        .iter()
                        .zip(&m.pre[pos])
                        .map(|(g, x)| g * leaky_relu_derivative(x, &net.slope))
                        .collect();
                    vec_add_assign(&mut gl.b1, &gpre);
                    let gy = lp.w1.backprop_left_mul(&m.norm[pos].output, &gpre, &mut gl.w1);
                    g_in.push(norm_backward(&gy, &m.norm[pos], &lp.mlp_norm, &mut gl.mlp_norm));
                }
                g_in
            }
            _ => unreachable!("trace kind matches node kind"),
        };
        for e in trace.edges.iter().filter(|e| e.dst == node) {
            let dst = g_out.get_mut(&e.src).expect("live source");
            for (a, b) in dst.iter_mut().zip(&g_in) {
                vec_add_assign(a, b);
            }
        }
    }
}

/// Cross-entropy over the full vocabulary at the last position.
fn cross_entropy(logits: &[f64], target: u32) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = z.ln() + max - logits[target as usize];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / z).collect();
    grad[target as usize] -= 1.0;
    (loss, grad)
}

/// Mean loss over `batch` of `(tokens, target)` and its gradient.
pub fn loss_and_gradient(net: &Network<f64>, batch: &[(Vec<u32>, u32)]) -> Result<(f64, ModelParams<f64>)> {
    let mut grads = ModelParams::zeros_like(&net.config);
    let mut total = 0.0;
    let inv = 1.0 / batch.len() as f64;
    for (x, y) in batch {
        let trace = net.forward(x)?;
        let (loss, mut g) = cross_entropy(&trace.logits.0, *y);
        total += loss;
        g.iter_mut().for_each(|v| *v *= inv);
        backward(net, &trace, &g, &mut grads);
    }
    Ok((total * inv, grads))
}
