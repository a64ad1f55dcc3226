// SPDX-License-Identifier: MIT OR Apache-2.0

//! Residual-stream components and the edges between them.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Ordered by residual write order, so maps keyed by node iterate
/// topologically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Embed,
    Attn { layer: usize, head: usize },
    Mlp { layer: usize },
    Logits,
}

impl Node {
    /// Position in the residual-stream write order. Heads of one layer share
    /// a stage, so they never feed each other.
    pub fn stage(&self, layers: usize) -> usize {
        match *self {
            Node::Embed => 0,
            Node::Attn { layer, .. } => 1 + 2 * layer,
            Node::Mlp { layer } => 2 + 2 * layer,
            Node::Logits => 1 + 2 * layers,
        }
    }
}

impl Node {
    fn order_key(&self) -> (usize, usize) {
        match *self {
            Node::Embed => (0, 0),
            Node::Attn { layer, head } => (1 + 2 * layer, head),
            Node::Mlp { layer } => (2 + 2 * layer, 0),
            Node::Logits => (usize::MAX, 0),
        }
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.order_key().cmp(&other.order_key())
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Embed => f.write_str("embed"),
            Node::Attn { layer, head } => write!(f, "attn.{layer}.{head}"),
            Node::Mlp { layer } => write!(f, "mlp.{layer}"),
            Node::Logits => f.write_str("logits"),
        }
    }
}

impl FromStr for Node {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad node name {s:?}"));
        let parts: Vec<&str> = s.split('.').collect();
        let num = |p: &str| p.parse::<usize>().map_err(|_| bad());
        match parts.as_slice() {
            ["embed"] => Ok(Node::Embed),
            ["logits"] => Ok(Node::Logits),
            ["mlp", l] => Ok(Node::Mlp { layer: num(l)? }),
            ["attn", l, h] => Ok(Node::Attn {
                layer: num(l)?,
                head: num(h)?,
            }),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Node {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Node {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `src` writes to the residual stream that `dst` reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: Node,
    pub dst: Node,
}

impl Edge {
    pub fn new(src: Node, dst: Node) -> Self {
        Self { src, dst }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.src, self.dst)
    }
}

impl FromStr for Edge {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once("->")
            .ok_or_else(|| Error::Parse(format!("bad edge {s:?}")))?;
        Ok(Edge::new(a.parse()?, b.parse()?))
    }
}

impl Serialize for Edge {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Edge {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub type EdgeSet = BTreeSet<Edge>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoarseGraph {
    pub layers: usize,
    pub heads: usize,
    /// Write order: embed, then per layer its heads and its MLP, then logits.
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl CoarseGraph {
    pub fn new(layers: usize, heads: usize) -> Self {
        let mut nodes = vec![Node::Embed];
        for layer in 0..layers {
            for head in 0..heads {
                nodes.push(Node::Attn { layer, head });
            }
            nodes.push(Node::Mlp { layer });
        }
        nodes.push(Node::Logits);
        let mut edges = Vec::new();
        for &dst in &nodes {
            for &src in &nodes {
                if src.stage(layers) < dst.stage(layers) {
                    edges.push(Edge::new(src, dst));
                }
            }
        }
        Self {
            layers,
            heads,
            nodes,
            edges,
        }
    }

    pub fn all_edges(&self) -> EdgeSet {
        self.edges.iter().copied().collect()
    }

    pub fn contains_node(&self, n: Node) -> bool {
        self.nodes.contains(&n)
    }

    pub fn validate_edges(&self, edges: &EdgeSet) -> Result<()> {
        for e in edges {
            if !self.edges.contains(e) {
                return Err(Error::InvalidConfig(format!("edge {e} is not in the graph")));
            }
        }
        Ok(())
    }

    pub fn stage(&self, n: Node) -> usize {
        n.stage(self.layers)
    }

    /// Nodes with a retained path to `logits` (including `logits`).
    pub fn live_nodes(&self, edges: &EdgeSet) -> BTreeSet<Node> {
        let mut live = BTreeSet::from([Node::Logits]);
        for &n in self.nodes.iter().rev() {
            if edges.iter().any(|e| e.src == n && live.contains(&e.dst)) {
                live.insert(n);
            }
        }
        live
    }

    /// Whether some retained path runs from `embed` to `logits`.
    pub fn connects_embed_to_logits(&self, edges: &EdgeSet) -> bool {
        self.live_nodes(edges).contains(&Node::Embed)
    }

    /// Removal order for pruning: destinations closest to the logits first,
    /// then by source and destination name.
    pub fn pruning_order(&self, edges: &EdgeSet) -> Vec<Edge> {
        let mut order: Vec<Edge> = edges.iter().copied().collect();
        order.sort_by(|a, b| {
            self.stage(b.dst)
                .cmp(&self.stage(a.dst))
                .then_with(|| a.src.to_string().cmp(&b.src.to_string()))
                .then_with(|| a.dst.to_string().cmp(&b.dst.to_string()))
        });
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_graph_has_fifteen_edges() {
        let g = CoarseGraph::new(2, 1);
        assert_eq!(g.nodes.len(), 6);
        // 6 nodes in a strict total order: 6·5/2 pairs.
        assert_eq!(g.edges.len(), 15);
        assert!(g.edges.iter().all(|e| e.src != Node::Logits));
        assert!(g.connects_embed_to_logits(&g.all_edges()));
    }

    #[test]
    fn heads_of_one_layer_are_not_connected() {
        let g = CoarseGraph::new(1, 2);
        let a = Node::Attn { layer: 0, head: 0 };
        let b = Node::Attn { layer: 0, head: 1 };
        assert!(!g.edges.contains(&Edge::new(a, b)));
        assert!(!g.edges.contains(&Edge::new(b, a)));
        // embed→{a,b,mlp,logits}, {a,b}→{mlp,logits}, mlp→logits
        assert_eq!(g.edges.len(), 4 + 4 + 1);
    }

    #[test]
    fn node_order_is_write_order() {
        let g = CoarseGraph::new(3, 2);
        let mut sorted = g.nodes.clone();
        sorted.sort();
        assert_eq!(sorted, g.nodes);
    }

    #[test]
    fn names_round_trip() {
        let g = CoarseGraph::new(2, 2);
        for e in &g.edges {
            let parsed: Edge = e.to_string().parse().unwrap();
            assert_eq!(parsed, *e);
        }
        let json = serde_json::to_string(&g.edges[3]).unwrap();
        let back: Edge = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g.edges[3]);
        assert!("attn.x.0".parse::<Node>().is_err());
    }

    #[test]
    fn live_nodes_follow_retained_paths() {
        let g = CoarseGraph::new(2, 1);
        let edges: EdgeSet = [Edge::new(Node::Embed, Node::Mlp { layer: 1 })].into_iter().collect();
        let live = g.live_nodes(&edges);
        assert_eq!(live, BTreeSet::from([Node::Logits]));
        let mut edges = edges;
        edges.insert(Edge::new(Node::Mlp { layer: 1 }, Node::Logits));
        assert!(g.connects_embed_to_logits(&edges));
    }

    #[test]
    fn pruning_order_starts_at_logits() {
        let g = CoarseGraph::new(2, 1);
        let order = g.pruning_order(&g.all_edges());
        assert_eq!(order[0], Edge::new(Node::Attn { layer: 0, head: 0 }, Node::Logits));
        assert_eq!(order.last().unwrap().dst, Node::Attn { layer: 0, head: 0 });
    }
}
