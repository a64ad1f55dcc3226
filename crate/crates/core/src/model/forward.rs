// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use crate::circuit::graph::{CoarseGraph, EdgeSet, Node};
use crate::error::{Error, Result};
use crate::ops::{
    attention_row, bandnorm, causal_sparsemax_attention, leaky_relu, AttentionOutput, BandNormBranch, BandNormOutput,
    SparsemaxBranch,
};
use crate::scalar::{vec_add_assign, Scalar};
use crate::tasks::LogitVector;

use super::{ModelConfig, ModelParams, NormParams};

/// Model parameters and operator constants in one scalar type.
#[derive(Clone, Debug)]
pub struct Network<S> {
    pub config: ModelConfig,
    pub graph: CoarseGraph,
    pub params: ModelParams<S>,
    pub full_edges: EdgeSet,
    pub slope: S,
    pub band_low: S,
    pub band_high: S,
    pub scale: S,
    /// Evaluate nodes only at positions some consumer reads. Traces produced
    /// this way cannot be differentiated.
    pub prune_positions: bool,
}

#[derive(Clone, Debug)]
pub struct HeadTrace<S> {
    /// `q`, `attn` and the contribution cover positions `first_position..`.
    pub first_position: usize,
    pub input: Vec<Vec<S>>,
    pub norm: Vec<BandNormOutput<S>>,
    pub q: Vec<Vec<S>>,
    pub k: Vec<Vec<S>>,
    pub v: Vec<Vec<S>>,
    pub attn: AttentionOutput<S>,
}

#[derive(Clone, Debug)]
pub struct MlpTrace<S> {
    /// Every row here covers positions `first_position..`.
    pub first_position: usize,
    pub input: Vec<Vec<S>>,
    pub norm: Vec<BandNormOutput<S>>,
    pub pre: Vec<Vec<S>>,
    pub hidden: Vec<Vec<S>>,
}

#[derive(Clone, Debug)]
pub enum NodeTrace<S> {
    Embed,
    Attn(HeadTrace<S>),
    Mlp(MlpTrace<S>),
}

/// Everything a forward pass computed. Only nodes with a retained path to
/// the logits are evaluated.
#[derive(Clone, Debug)]
pub struct Trace<S> {
    pub tokens: Vec<u32>,
    pub edges: EdgeSet,
    /// What each evaluated node writes to the residual stream, for its last
    /// `len()` positions (all of them unless position pruning skipped some).
    pub contributions: BTreeMap<Node, Vec<Vec<S>>>,
    pub nodes: BTreeMap<Node, NodeTrace<S>>,
    /// The residual the logits read at the last position.
    pub final_residual: Vec<S>,
    pub final_norm: BandNormOutput<S>,
    pub logits: LogitVector<S>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BranchRecord {
    Norm(BandNormBranch),
    Attention(SparsemaxBranch),
    Leaky(Vec<bool>),
}

/// Every data-dependent branch taken by one forward pass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchSignature(pub Vec<BranchRecord>);

impl<S: Scalar> Trace<S> {
    pub fn branch_signature(&self) -> BranchSignature {
        let mut out = Vec::new();
        for t in self.nodes.values() {
            match t {
                NodeTrace::Embed => {}
                NodeTrace::Attn(h) => {
                    out.extend(h.norm.iter().map(|n| BranchRecord::Norm(n.branch.clone())));
                    out.extend(h.attn.branches.iter().cloned().map(BranchRecord::Attention));
                }
                NodeTrace::Mlp(m) => {
                    out.extend(m.norm.iter().map(|n| BranchRecord::Norm(n.branch.clone())));
                    out.extend(
                        m.pre
                            .iter()
                            .map(|p| BranchRecord::Leaky(p.iter().map(|x| *x >= S::zero()).collect())),
                    );
                }
            }
        }
        out.push(BranchRecord::Norm(self.final_norm.branch.clone()));
        BranchSignature(out)
    }
}

fn affine_rows<S: Scalar>(rows: &[Vec<S>], w: &crate::scalar::Matrix<S>, b: &[S]) -> Vec<Vec<S>> {
    rows.iter()
        .map(|r| {
            let mut y = w.left_mul(r);
            vec_add_assign(&mut y, b);
            y
        })
        .collect()
}

impl<S: Scalar> Network<S> {
    pub fn from_f64(config: &ModelConfig, params: &ModelParams<f64>) -> Result<Self> {
        config.validate()?;
        let (low, high) = config.ops.band(config.width);
        let graph = CoarseGraph::new(config.layers, config.heads);
        let full_edges = graph.all_edges();
        Ok(Self {
            config: config.clone(),
            params: params.map(|v| S::from_f64(*v)),
            full_edges,
            graph,
            slope: S::from_exact(&config.ops.leaky_slope),
            band_low: S::from_exact(&low),
            band_high: S::from_exact(&high),
            scale: S::from_exact(&config.attention_scale()),
            prune_positions: false,
        })
    }

    pub fn with_position_pruning(mut self) -> Self {
        self.prune_positions = true;
        self
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput("forward"));
        }
        if tokens.len() > self.config.max_len {
            return Err(Error::SequenceTooLong {
                len: tokens.len(),
                max: self.config.max_len,
            });
        }
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::UnknownToken(t));
        }
        Ok(())
    }

    fn norm(&self, x: &[S], p: &NormParams<S>) -> Result<BandNormOutput<S>> {
        bandnorm(x, &p.gamma, &p.beta, &self.band_low, &self.band_high)
    }

    pub fn forward(&self, tokens: &[u32]) -> Result<Trace<S>> {
        self.forward_edges(tokens, &self.full_edges)
    }

    /// Zero-ablation forward: each node reads the sum of the contributions of
    /// the sources whose edge into it is retained.
    pub fn forward_edges(&self, tokens: &[u32], edges: &EdgeSet) -> Result<Trace<S>> {
        self.forward_reusing(tokens, edges, None)
    }

    /// Positions each live node must produce: all of them if some consumer
    /// is an attention head (keys and values span the prefix), otherwise
    /// only the last one. Without position pruning every node produces all.
    fn output_rows(&self, n: usize, edges: &EdgeSet, live: &BTreeSet<Node>) -> BTreeMap<Node, usize> {
        let mut rows = BTreeMap::from([(Node::Logits, 1)]);
        for &node in self.graph.nodes.iter().rev() {
            if node == Node::Logits || !live.contains(&node) {
                continue;
            }
            let all = !self.prune_positions
                || edges.iter().filter(|e| e.src == node && live.contains(&e.dst)).any(|e| match e.dst {
                    Node::Attn { .. } => true,
                    Node::Logits => false,
                    other => rows[&other] == n,
                });
            rows.insert(node, if all { n } else { 1 });
        }
        rows
    }

    /// [`Self::forward_edges`], copying from `base` every node whose inputs
    /// are provably the same as in `base` (same tokens, same retained edges
    /// into it and into everything upstream of it).
    pub fn forward_reusing(&self, tokens: &[u32], edges: &EdgeSet, base: Option<&Trace<S>>) -> Result<Trace<S>> {
        self.check_tokens(tokens)?;
        self.graph.validate_edges(edges)?;
        let base = base.filter(|b| b.tokens == tokens);
        let n = tokens.len();
        let d = self.config.width;
        let live = self.graph.live_nodes(edges);
        let rows = self.output_rows(n, edges, &live);
        let mut contributions: BTreeMap<Node, Vec<Vec<S>>> = BTreeMap::new();
        let mut nodes = BTreeMap::new();
        let mut dirty: BTreeSet<Node> = BTreeSet::new();

        let read = |dst: Node, contributions: &BTreeMap<Node, Vec<Vec<S>>>, positions: usize| {
            let sources: Vec<&Vec<Vec<S>>> = edges
                .iter()
                .filter(|e| e.dst == dst)
                .map(|e| &contributions[&e.src])
                .collect();
            (0..positions)
                .map(|p| {
                    let parts: Vec<&[S]> = sources.iter().map(|src| &src[src.len() - positions + p][..]).collect();
                    S::sum_rows(&parts, d)
                })
                .collect::<Vec<Vec<S>>>()
        };

        for &node in &self.graph.nodes {
            if !live.contains(&node) || node == Node::Logits {
                continue;
            }
            let in_edges = |set: &EdgeSet| -> Vec<Node> { set.iter().filter(|e| e.dst == node).map(|e| e.src).collect() };
            let mine = in_edges(edges);
            let reusable = base.filter(|b| {
                b.contributions.get(&node).is_some_and(|c| c.len() == rows[&node])
                    && in_edges(&b.edges) == mine
                    && mine.iter().all(|s| !dirty.contains(s))
            });
            if let Some(b) = reusable {
                contributions.insert(node, b.contributions[&node].clone());
                nodes.insert(node, b.nodes[&node].clone());
                continue;
            }
            dirty.insert(node);
            let out_rows = rows[&node];
            let first = n - out_rows;
            match node {
                Node::Embed => {
                    let out = tokens
                        .iter()
                        .enumerate()
                        .map(|(p, &t)| {
                            let mut row = self.params.tok_emb.row(t as usize).to_vec();
                            vec_add_assign(&mut row, self.params.pos_emb.row(p));
                            row
                        })
                        .collect();
                    contributions.insert(node, out);
                    nodes.insert(node, NodeTrace::Embed);
                }
                Node::Attn { layer, head } => {
                    let lp = &self.params.layers[layer];
                    let hp = &lp.heads[head];
                    let input = read(node, &contributions, n);
                    let norm = input
                        .iter()
                        .map(|x| self.norm(x, &lp.attn_norm))
                        .collect::<Result<Vec<_>>>()?;
                    let y: Vec<Vec<S>> = norm.iter().map(|o| o.output.clone()).collect();
                    let q = affine_rows(&y[first..], &hp.wq, &hp.bq);
                    let k = affine_rows(&y, &hp.wk, &hp.bk);
                    let v = affine_rows(&y, &hp.wv, &hp.bv);
                    let attn = if first == 0 {
                        causal_sparsemax_attention(&q, &k, &v, &self.scale)?
                    } else {
                        let (o, a, branch) = attention_row(&q[0], &k, &v, &self.scale)?;
                        AttentionOutput {
                            output: vec![o],
                            weights: vec![a],
                            branches: vec![branch],
                        }
                    };
                    let out = affine_rows(&attn.output, &hp.wo, &hp.bo);
                    contributions.insert(node, out);
                    nodes.insert(
                        node,
                        NodeTrace::Attn(HeadTrace {
                            first_position: first,
                            input,
                            norm,
                            q,
                            k,
                            v,
                            attn,
                        }),
                    );
                }
                Node::Mlp { layer } => {
                    let lp = &self.params.layers[layer];
                    let input = read(node, &contributions, out_rows);
                    let norm = input
                        .iter()
                        .map(|x| self.norm(x, &lp.mlp_norm))
                        .collect::<Result<Vec<_>>>()?;
                    let y: Vec<Vec<S>> = norm.iter().map(|o| o.output.clone()).collect();
                    let pre = affine_rows(&y, &lp.w1, &lp.b1);
                    let hidden: Vec<Vec<S>> = pre
                        .iter()
                        .map(|r| r.iter().map(|x| leaky_relu(x, &self.slope)).collect())
                        .collect();
                    let out = affine_rows(&hidden, &lp.w2, &lp.b2);
                    contributions.insert(node, out);
                    nodes.insert(
                        node,
                        NodeTrace::Mlp(MlpTrace {
                            first_position: first,
                            input,
                            norm,
                            pre,
                            hidden,
                        }),
                    );
                }
                Node::Logits => unreachable!(),
            }
        }

        let final_residual = read(Node::Logits, &contributions, 1).pop().expect("one row");
        let final_norm = self.norm(&final_residual, &self.params.final_norm)?;
        let logits = self.unembed(&final_norm.output);
        Ok(Trace {
            tokens: tokens.to_vec(),
            edges: edges.clone(),
            contributions,
            nodes,
            final_residual,
            final_norm,
            logits,
        })
    }

    /// `y · Eᵀ` with the tied embedding.
    pub fn unembed(&self, y: &[S]) -> LogitVector<S> {
        let e = &self.params.tok_emb;
        LogitVector((0..e.rows).map(|t| S::dot(y, e.row(t))).collect())
    }

    pub fn logits(&self, tokens: &[u32], edges: &EdgeSet) -> Result<LogitVector<S>> {
        Ok(self.forward_edges(tokens, edges)?.logits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::graph::Edge;
    use crate::exact::ExactScalar;
    use crate::model::ModelParams;
    use crate::tasks::{TaskName, TaskSpec, VOCAB_SIZE};

    fn net() -> (ModelConfig, ModelParams<f64>) {
        let cfg = ModelConfig::default();
        let p = ModelParams::init(&cfg);
        (cfg, p)
    }

    #[test]
    fn logits_cover_the_vocabulary() {
        let (cfg, p) = net();
        let n = Network::<f64>::from_f64(&cfg, &p).unwrap();
        let t = n.forward(&[2, 8, 9]).unwrap();
        assert_eq!(t.logits.0.len(), VOCAB_SIZE);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (cfg, p) = net();
        let n = Network::<f64>::from_f64(&cfg, &p).unwrap();
        assert!(matches!(n.forward(&[40]), Err(Error::UnknownToken(40))));
        assert!(matches!(n.forward(&[1; 9]), Err(Error::SequenceTooLong { len: 9, max: 8 })));
        assert!(n.forward(&[]).is_err());
    }

    #[test]
    fn trace_reconstructs_final_residual_exactly() {
        let (cfg, p) = net();
        let n = Network::<ExactScalar>::from_f64(&cfg, &p).unwrap();
        let t = n.forward(&[3, 8, 10, 11]).unwrap();
        let mut sum = vec![ExactScalar::zero(); cfg.width];
        for e in t.edges.iter().filter(|e| e.dst == Node::Logits) {
            vec_add_assign(&mut sum, t.contributions[&e.src].last().unwrap());
        }
        assert_eq!(sum, t.final_residual);
    }

    #[test]
    fn float_and_exact_forward_agree_closely() {
        let (cfg, p) = net();
        let nf = Network::<f64>::from_f64(&cfg, &p).unwrap();
        let ne = Network::<ExactScalar>::from_f64(&cfg, &p).unwrap();
        let spec = TaskSpec::builtin(TaskName::BracketType);
        for x in spec.generate_domain().iter().step_by(37) {
            let lf = nf.forward(x).unwrap().logits;
            let le = ne.forward(x).unwrap().logits;
            for (a, b) in lf.0.iter().zip(&le.0) {
                assert!((a - b.to_f64()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ablating_an_edge_leaves_upstream_untouched() {
        let (cfg, p) = net();
        let n = Network::<f64>::from_f64(&cfg, &p).unwrap();
        let x = [4, 12, 13, 14];
        let full = n.forward(&x).unwrap();
        let mut edges = n.full_edges.clone();
        edges.remove(&Edge::new(Node::Attn { layer: 0, head: 0 }, Node::Mlp { layer: 1 }));
        let cut = n.forward_edges(&x, &edges).unwrap();
        for node in [Node::Embed, Node::Attn { layer: 0, head: 0 }, Node::Mlp { layer: 0 }, Node::Attn { layer: 1, head: 0 }] {
            assert_eq!(full.contributions[&node], cut.contributions[&node], "{node}");
        }
        assert_ne!(full.contributions[&Node::Mlp { layer: 1 }], cut.contributions[&Node::Mlp { layer: 1 }]);
    }

    #[test]
    fn no_edges_into_logits_gives_input_independent_logits() {
        let (cfg, p) = net();
        let n = Network::<f64>::from_f64(&cfg, &p).unwrap();
        let edges: EdgeSet = n.full_edges.iter().filter(|e| e.dst != Node::Logits).copied().collect();
        let a = n.logits(&[2, 8, 8, 8], &edges).unwrap();
        let b = n.logits(&[3, 9, 10, 11], &edges).unwrap();
        assert_eq!(a, b);
    }
}
