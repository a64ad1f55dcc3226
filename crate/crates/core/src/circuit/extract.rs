// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Network, Trace};
use crate::scalar::Scalar;
use crate::tasks::{projected_decision, TaskName, TaskSpec};

use super::graph::{CoarseGraph, Edge, EdgeSet};

/// A retained edge set over the model's coarse graph, for one task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circuit {
    pub task: TaskName,
    pub graph: CoarseGraph,
    pub edges: EdgeSet,
}

impl Circuit {
    pub fn full(graph: &CoarseGraph, task: TaskName) -> Self {
        Self {
            task,
            graph: graph.clone(),
            edges: graph.all_edges(),
        }
    }

    pub fn without(&self, edge: &Edge) -> Self {
        let mut c = self.clone();
        c.edges.remove(edge);
        c
    }

    pub fn with(&self, edge: Edge) -> Self {
        let mut c = self.clone();
        c.edges.insert(edge);
        c
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub circuit: Circuit,
    /// First domain input (in domain order) whose decision flips when the
    /// edge alone is removed.
    pub witnesses: BTreeMap<Edge, Option<Vec<u32>>>,
    pub greedy_passes: usize,
    pub diagnostics: Vec<String>,
}

pub fn circuit_forward<S: Scalar>(net: &Network<S>, circuit: &Circuit, x: &[u32]) -> Result<Trace<S>> {
    net.forward_edges(x, &circuit.edges)
}

/// Projected decisions over the whole task domain, in domain order.
pub fn decisions<S: Scalar>(net: &Network<S>, edges: &EdgeSet, task: &TaskSpec) -> Result<Vec<u32>> {
    task.generate_domain()
        .par_iter()
        .map(|x| {
            let logits = net.logits(x, edges)?;
            Ok(projected_decision(&logits.restrict(&task.candidates), &task.candidates))
        })
        .collect()
}

/// First input whose decision under `edges ∖ {edge}` differs from `current`.
pub fn find_witness<S: Scalar>(
    net: &Network<S>,
    edges: &EdgeSet,
    edge: &Edge,
    task: &TaskSpec,
    current: &[u32],
) -> Result<Option<Vec<u32>>> {
    let mut cut = edges.clone();
    cut.remove(edge);
    let after = decisions(net, &cut, task)?;
    let domain = task.generate_domain();
    Ok(after
        .iter()
        .zip(current)
        .position(|(a, b)| a != b)
        .map(|i| domain[i].clone()))
}

pub fn witnesses<S: Scalar>(
    net: &Network<S>,
    circuit: &Circuit,
    task: &TaskSpec,
) -> Result<BTreeMap<Edge, Option<Vec<u32>>>> {
    let current = decisions(net, &circuit.edges, task)?;
    circuit
        .edges
        .iter()
        .map(|e| Ok((*e, find_witness(net, &circuit.edges, e, task, &current)?)))
        .collect()
}

fn removable(graph: &CoarseGraph, edges: &EdgeSet, edge: &Edge) -> bool {
    let mut trial = edges.clone();
    trial.remove(edge);
    !trial.is_empty() && graph.connects_embed_to_logits(&trial)
}

/// Drops edges whose solo removal changes no decision until every edge has a
/// witness. A removal that would break faithfulness to `model_decisions` is
/// rolled back and noted in `diagnostics`.
pub fn necessity_filter<S: Scalar>(
    net: &Network<S>,
    circuit: &Circuit,
    task: &TaskSpec,
    model_decisions: &[u32],
    diagnostics: &mut Vec<String>,
) -> Result<Circuit> {
    let mut current = circuit.clone();
    let mut kept_for_faithfulness = std::collections::BTreeSet::new();
    loop {
        let now = decisions(net, &current.edges, task)?;
        let mut changed = false;
        for e in current.graph.pruning_order(&current.edges) {
            if kept_for_faithfulness.contains(&e) || !removable(&current.graph, &current.edges, &e) {
                continue;
            }
            if find_witness(net, &current.edges, &e, task, &now)?.is_some() {
                continue;
            }
            let trial = current.without(&e);
            if decisions(net, &trial.edges, task)? != model_decisions {
                diagnostics.push(format!("kept {e}: no witness, but removing it breaks faithfulness"));
                kept_for_faithfulness.insert(e);
                continue;
            }
            current = trial;
            changed = true;
            break;
        }
        if !changed {
            return Ok(current);
        }
    }
}

/// Greedy backward pruning to a fixpoint, then the necessity filter.
pub fn extract<S: Scalar>(net: &Network<S>, task: &TaskSpec) -> Result<ExtractionReport> {
    let full = Circuit::full(&net.graph, task.name);
    let model = decisions(net, &full.edges, task)?;
    let domain = task.generate_domain();
    for (x, d) in domain.iter().zip(&model) {
        if *d != task.reference_program(x)? {
            return Err(Error::InvalidConfig(format!(
                "model is not exact on {}: input {x:?} decides {d}",
                task.name
            )));
        }
    }

    let mut current = full;
    let mut passes = 0;
    loop {
        passes += 1;
        let mut changed = false;
        for e in current.graph.pruning_order(&current.edges) {
            if !removable(&current.graph, &current.edges, &e) {
                continue;
            }
            let trial = current.without(&e);
            if decisions(net, &trial.edges, task)? == model {
                current = trial;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut diagnostics = Vec::new();
    let filtered = necessity_filter(net, &current, task, &model, &mut diagnostics)?;
    if decisions(net, &filtered.edges, task)? != model {
        return Err(Error::UnfaithfulExtraction(task.name.to_string()));
    }
    let witnesses = witnesses(net, &filtered, task)?;
    Ok(ExtractionReport {
        circuit: filtered,
        witnesses,
        greedy_passes: passes,
        diagnostics,
    })
}
