// SPDX-License-Identifier: MIT OR Apache-2.0

use std::sync::OnceLock;
use std::time::Instant;

use rayon::prelude::*;

use crate::affine::RadiusBound;
use crate::circuit::{Circuit, Edge, EdgeSet};
use crate::error::{Error, Result};
use crate::exact::ExactScalar;
use crate::model::{Network, Trace};
use crate::tasks::{projected_decision, InvarianceRelation, TaskSpec};

use super::robust::{certify, RobustnessAnalysis};
use super::{Counterexample, Diagnostics, InputCertificate, Property, PropertyResult, RobustnessQuery, Verdict};

/// Exact traces of one circuit over its task domain, shared by every check.
pub struct Verifier<'a> {
    net: &'a Network<ExactScalar>,
    circuit: Circuit,
    task: TaskSpec,
    domain: Vec<Vec<u32>>,
    traces: Vec<Trace<ExactScalar>>,
    decisions: Vec<u32>,
    analyses: Vec<OnceLock<RobustnessAnalysis>>,
}

fn decide(task: &TaskSpec, trace: &Trace<ExactScalar>) -> u32 {
    projected_decision(&trace.logits.restrict(&task.candidates), &task.candidates)
}

impl<'a> Verifier<'a> {
    pub fn new(net: &'a Network<ExactScalar>, circuit: &Circuit, task: &TaskSpec) -> Result<Self> {
        if circuit.task != task.name {
            return Err(Error::InvalidConfig(format!(
                "circuit is for {}, not {}",
                circuit.task, task.name
            )));
        }
        let domain = task.generate_domain();
        let traces: Vec<Trace<ExactScalar>> = domain
            .par_iter()
            .map(|x| net.forward_edges(x, &circuit.edges))
            .collect::<Result<_>>()?;
        let decisions = traces.iter().map(|t| decide(task, t)).collect();
        Ok(Self {
            net,
            circuit: circuit.clone(),
            task: task.clone(),
            analyses: (0..domain.len()).map(|_| OnceLock::new()).collect(),
            domain,
            traces,
            decisions,
        })
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn network(&self) -> &Network<ExactScalar> {
        self.net
    }

    pub fn domain(&self) -> &[Vec<u32>] {
        &self.domain
    }

    pub fn decisions(&self) -> &[u32] {
        &self.decisions
    }

    pub fn trace(&self, index: usize) -> &Trace<ExactScalar> {
        &self.traces[index]
    }

    /// Decisions of the circuit with `edges` in place of its own, reusing
    /// every node the change cannot reach.
    pub fn decisions_with(&self, edges: &EdgeSet) -> Result<Vec<u32>> {
        self.domain
            .par_iter()
            .zip(&self.traces)
            .map(|(x, base)| Ok(decide(&self.task, &self.net.forward_reusing(x, edges, Some(base))?)))
            .collect()
    }

    pub fn decisions_without(&self, edge: &Edge) -> Result<Vec<u32>> {
        let mut edges = self.circuit.edges.clone();
        edges.remove(edge);
        self.decisions_with(&edges)
    }

    pub fn verify_equivalence(&self) -> Result<PropertyResult> {
        let start = Instant::now();
        let mut counterexample = None;
        for (i, (x, d)) in self.domain.iter().zip(&self.decisions).enumerate() {
            let expected = self.task.reference_program(x)?;
            if *d != expected {
                counterexample = Some(Counterexample::Input {
                    index: i,
                    tokens: x.clone(),
                    expected,
                    circuit: *d,
                });
                break;
            }
        }
        Ok(PropertyResult {
            property: Property::Equivalence,
            verdict: if counterexample.is_some() { Verdict::Refuted } else { Verdict::Verified },
            counterexample,
            diagnostics: Diagnostics::None,
            duration: start.elapsed(),
        })
    }

    pub fn verify_invariance(&self) -> PropertyResult {
        self.verify_invariance_with(self.task.invariance)
    }

    /// All related pairs `i < j` in domain order.
    pub fn verify_invariance_with(&self, relation: InvarianceRelation) -> PropertyResult {
        let start = Instant::now();
        let mut checked = 0;
        let mut counterexample = None;
        'outer: for i in 0..self.domain.len() {
            for j in i + 1..self.domain.len() {
                if !relation.related(&self.domain[i], &self.domain[j]) {
                    continue;
                }
                checked += 1;
                if self.decisions[i] != self.decisions[j] {
                    counterexample = Some(Counterexample::Pair {
                        first: self.domain[i].clone(),
                        second: self.domain[j].clone(),
                        first_decision: self.decisions[i],
                        second_decision: self.decisions[j],
                    });
                    break 'outer;
                }
            }
        }
        PropertyResult {
            property: Property::Invariance,
            verdict: if counterexample.is_some() { Verdict::Refuted } else { Verdict::Verified },
            counterexample,
            diagnostics: Diagnostics::Pairs { checked },
            duration: start.elapsed(),
        }
    }

    /// First input whose decision flips when `edge` alone is removed.
    pub fn witness(&self, edge: &Edge) -> Result<Option<(usize, Vec<u32>)>> {
        let after = self.decisions_without(edge)?;
        Ok(after
            .iter()
            .zip(&self.decisions)
            .position(|(a, b)| a != b)
            .map(|i| (i, self.domain[i].clone())))
    }

    pub fn verify_edge_necessity(&self) -> Result<PropertyResult> {
        let start = Instant::now();
        let mut witnesses = std::collections::BTreeMap::new();
        for e in &self.circuit.edges {
            witnesses.insert(*e, self.witness(e)?.map(|(_, x)| x));
        }
        let missing: Vec<Edge> = witnesses.iter().filter(|(_, w)| w.is_none()).map(|(e, _)| *e).collect();
        Ok(PropertyResult {
            property: Property::EdgeNecessity,
            verdict: if missing.is_empty() { Verdict::Verified } else { Verdict::Refuted },
            counterexample: (!missing.is_empty()).then_some(Counterexample::WitnessFree { edges: missing }),
            diagnostics: Diagnostics::Witnesses { witnesses },
            duration: start.elapsed(),
        })
    }

    pub fn analysis(&self, index: usize) -> Result<&RobustnessAnalysis> {
        if let Some(a) = self.analyses[index].get() {
            return Ok(a);
        }
        let built = RobustnessAnalysis::build(self.net, &self.task, &self.traces[index].final_residual)?;
        Ok(self.analyses[index].get_or_init(|| built))
    }

    fn prepare_analyses(&self) -> Result<()> {
        (0..self.domain.len())
            .into_par_iter()
            .try_for_each(|i| self.analysis(i).map(|_| ()))
    }

    pub fn certify_input(&self, query: &RobustnessQuery) -> Result<InputCertificate> {
        if query.epsilon.is_negative() {
            return Err(Error::NegativeEpsilon(query.epsilon.to_string()));
        }
        if query.index >= self.domain.len() {
            return Err(Error::InvalidConfig(format!("input index {} out of range", query.index)));
        }
        let a = self.analysis(query.index)?;
        Ok(certify(a, query.index, &self.domain[query.index], &query.epsilon))
    }

    pub fn max_certified_epsilon(&self, index: usize) -> Result<RadiusBound> {
        Ok(self.analysis(index)?.max_certified_epsilon())
    }

    /// Minimum certified radius over the domain.
    pub fn domain_radius(&self) -> Result<RadiusBound> {
        self.prepare_analyses()?;
        let mut acc = RadiusBound::Unbounded;
        for i in 0..self.domain.len() {
            acc = acc.min(self.max_certified_epsilon(i)?);
        }
        Ok(acc)
    }

    /// Half the domain radius; one when nothing depends on the residual.
    pub fn default_epsilon(&self) -> Result<ExactScalar> {
        Ok(match self.domain_radius()? {
            RadiusBound::Finite(r) => r * ExactScalar::ratio(1, 2),
            RadiusBound::Unbounded => ExactScalar::one(),
        })
    }

    /// Verified iff every input is; otherwise the first refuted input in
    /// domain order is the counterexample, and any remaining failure is
    /// unknown.
    pub fn verify_residual_robustness(&self, epsilon: &ExactScalar) -> Result<PropertyResult> {
        let start = Instant::now();
        if epsilon.is_negative() {
            return Err(Error::NegativeEpsilon(epsilon.to_string()));
        }
        self.prepare_analyses()?;
        let inputs: Vec<InputCertificate> = (0..self.domain.len())
            .into_par_iter()
            .map(|i| self.certify_input(&RobustnessQuery::new(i, epsilon.clone())?))
            .collect::<Result<_>>()?;
        let refuted = inputs.iter().find(|c| c.verdict == Verdict::Refuted);
        let verdict = if refuted.is_some() {
            Verdict::Refuted
        } else if inputs.iter().any(|c| c.verdict == Verdict::Unknown) {
            Verdict::Unknown
        } else {
            Verdict::Verified
        };
        let counterexample = refuted.map(|c| Counterexample::Perturbation {
            index: c.index,
            tokens: c.tokens.clone(),
            epsilon: epsilon.clone(),
            eta: c.eta.clone().expect("refuted certificates carry a vertex"),
            clean: c.decision,
            perturbed: c.flips_to.expect("refuted certificates name the flip"),
        });
        let domain_radius = inputs
            .iter()
            .fold(RadiusBound::Unbounded, |acc, c| acc.min(c.max_certified_epsilon.clone()));
        Ok(PropertyResult {
            property: Property::ResidualRobustness,
            verdict,
            counterexample,
            diagnostics: Diagnostics::Robustness {
                epsilon: epsilon.clone(),
                domain_radius,
                inputs,
            },
            duration: start.elapsed(),
        })
    }

    /// Replays a counterexample with fresh forward passes (no cached traces,
    /// no branch certificate) and reports whether it reproduces.
    pub fn recheck(&self, counterexample: &Counterexample) -> Result<bool> {
        let fresh = |x: &[u32], edges: &EdgeSet| -> Result<u32> {
            let logits = self.net.logits(x, edges)?;
            Ok(projected_decision(&logits.restrict(&self.task.candidates), &self.task.candidates))
        };
        let edges = &self.circuit.edges;
        Ok(match counterexample {
            Counterexample::Input {
                tokens,
                expected,
                circuit,
                ..
            } => {
                let d = fresh(tokens, edges)?;
                d == *circuit && d != *expected && *expected == self.task.reference_program(tokens)?
            }
            Counterexample::Pair {
                first,
                second,
                first_decision,
                second_decision,
            } => {
                fresh(first, edges)? == *first_decision
                    && fresh(second, edges)? == *second_decision
                    && first_decision != second_decision
            }
            Counterexample::WitnessFree { edges: free } => {
                let mut ok = true;
                for e in free {
                    let mut cut = edges.clone();
                    cut.remove(e);
                    for x in &self.domain {
                        if fresh(x, edges)? != fresh(x, &cut)? {
                            ok = false;
                        }
                    }
                }
                ok
            }
            Counterexample::Perturbation {
                tokens,
                epsilon,
                eta,
                clean,
                perturbed,
                ..
            } => {
                let trace = self.net.forward_edges(tokens, edges)?;
                let in_box = eta.iter().all(|e| e.abs() <= *epsilon);
                let before = super::resimulate_perturbation(self.net, &self.task, &trace.final_residual, &vec![ExactScalar::zero(); eta.len()])?;
                let after = super::resimulate_perturbation(self.net, &self.task, &trace.final_residual, eta)?;
                in_box && before == *clean && after == *perturbed && before != after
            }
        })
    }

    pub fn verify_all(&self, epsilon: &ExactScalar) -> Result<Vec<PropertyResult>> {
        Ok(vec![
            self.verify_equivalence()?,
            self.verify_invariance(),
            self.verify_edge_necessity()?,
            self.verify_residual_robustness(epsilon)?,
        ])
    }
}
