// SPDX-License-Identifier: MIT OR Apache-2.0

//! Distillation of a decision relation into a small symbolic program.
//!
//! A teacher relation over a bounded abstract domain is fitted by a one-hot
//! surrogate MLP, the surrogate is validated exhaustively in exact
//! arithmetic, and a template family of finite-state programs is searched
//! for one that matches the surrogate on every domain input.

mod program;
mod surrogate;
mod teacher;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::verify::Verdict;

pub use program::{Guard, Program, Rule, TemplateFamily, Update};
pub use surrogate::{fit_surrogate, validate_surrogate, Agreement, Surrogate, SurrogateConfig, SurrogateFit};
pub use teacher::{Symbol, TeacherRelation};

/// First domain index where `program` and `reference` disagree.
pub fn check_program_equivalence(program: &Program, reference: &[u32], teacher: &TeacherRelation) -> Option<usize> {
    teacher
        .inputs
        .iter()
        .zip(reference)
        .position(|(x, r)| program.run(x, &teacher.candidates) != *r)
}

fn count_agreement(program: &Program, reference: &[u32], teacher: &TeacherRelation, indices: &[usize]) -> usize {
    indices
        .iter()
        .filter(|&&i| program.run(&teacher.inputs[i], &teacher.candidates) == reference[i])
        .count()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillCounterexample {
    pub index: usize,
    pub abstract_input: Vec<u8>,
    pub tokens: Vec<u32>,
    pub rendered: String,
    pub teacher: u32,
    pub program: u32,
    pub surrogate: u32,
}

impl DistillCounterexample {
    /// The four-line human-readable form.
    pub fn block(&self, teacher: &TeacherRelation) -> Vec<String> {
        let tag = &teacher.tag;
        let list = |v: Vec<String>| format!("[{}]", v.join(", "));
        vec![
            format!(
                "[{tag}] counterexample (abstract domain): {}",
                list(self.abstract_input.iter().map(|a| a.to_string()).collect())
            ),
            format!(
                "[{tag}] counterexample (actual tokens): {}",
                list(self.tokens.iter().map(|t| t.to_string()).collect())
            ),
            format!("[{tag}] rendered: {}", self.rendered),
            format!(
                "[{tag}] teacher: {}, program: {}, surrogate: {}",
                teacher.label(self.teacher),
                teacher.label(self.program),
                teacher.label(self.surrogate)
            ),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilySearch {
    pub family: String,
    pub family_size: usize,
    pub verdict: Verdict,
    /// The equivalent program if one exists, otherwise the best candidate.
    pub program: Option<Program>,
    pub dataset_agreement: (usize, usize),
    pub domain_agreement: (usize, usize),
    pub counterexample: Option<DistillCounterexample>,
}

/// Exhaustive search of `family` against the exact surrogate decisions.
///
/// The first program in enumeration order that matches on every input is
/// returned as verified. Otherwise the best candidate is taken among the
/// programs that match the finite example set (all programs if none do),
/// ranked by bounded-domain agreement with ties to the earlier program, and
/// its first disagreement is the counterexample.
pub fn search_family(family: &TemplateFamily, teacher: &TeacherRelation, surrogate: &[u32]) -> FamilySearch {
    let programs = family.enumerate();
    let all: Vec<usize> = (0..teacher.inputs.len()).collect();
    let scored: Vec<(usize, usize)> = programs
        .par_iter()
        .map(|p| {
            (
                count_agreement(p, surrogate, teacher, &teacher.dataset),
                count_agreement(p, surrogate, teacher, &all),
            )
        })
        .collect();
    let nd = teacher.dataset.len();
    let nx = all.len();
    let mut result = FamilySearch {
        family: family.name.clone(),
        family_size: programs.len(),
        verdict: Verdict::Unknown,
        program: None,
        dataset_agreement: (0, nd),
        domain_agreement: (0, nx),
        counterexample: None,
    };
    if programs.is_empty() {
        return result;
    }
    let pool: Vec<usize> = if scored.iter().any(|s| s.0 == nd) {
        (0..programs.len()).filter(|&i| scored[i].0 == nd).collect()
    } else {
        (0..programs.len()).collect()
    };
    let mut best = pool[0];
    for &i in &pool[1..] {
        if scored[i].1 > scored[best].1 {
            best = i;
        }
    }
    if let Some(i) = (0..programs.len()).find(|&i| scored[i].1 == nx) {
        best = i;
    }
    let p = &programs[best];
    result.program = Some(p.clone());
    result.dataset_agreement = (scored[best].0, nd);
    result.domain_agreement = (scored[best].1, nx);
    match check_program_equivalence(p, surrogate, teacher) {
        None => result.verdict = Verdict::Verified,
        Some(i) => {
            let x = &teacher.inputs[i];
            result.verdict = Verdict::Refuted;
            result.counterexample = Some(DistillCounterexample {
                index: i,
                abstract_input: x.clone(),
                tokens: teacher.to_tokens(x),
                rendered: teacher.render(x),
                teacher: teacher.outputs[i],
                program: p.run(x, &teacher.candidates),
                surrogate: surrogate[i],
            });
        }
    }
    result
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkStatus {
    Established,
    Failed,
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub link: String,
    pub status: LinkStatus,
    pub detail: String,
}

/// Where the teacher came from, and whether its faithfulness is on record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TeacherSource {
    Table,
    Circuit { faithful: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillReport {
    pub teacher: String,
    pub teacher_description: String,
    pub teacher_source: TeacherSource,
    pub domain_size: usize,
    pub dataset_size: usize,
    pub surrogate_config: SurrogateConfig,
    pub surrogate_steps: usize,
    pub surrogate_agreement: Agreement,
    pub search: FamilySearch,
    pub program: Option<String>,
    pub counterexample_block: Vec<String>,
    pub links: Vec<Link>,
}

impl DistillReport {
    pub fn verdict(&self) -> Verdict {
        self.search.verdict
    }
}

pub fn distill(
    teacher: &TeacherRelation,
    source: TeacherSource,
    family: &TemplateFamily,
    config: &SurrogateConfig,
) -> Result<DistillReport> {
    let fit = fit_surrogate(teacher, config)?;
    let exact = fit.surrogate.to_exact()?;
    let agreement = validate_surrogate(&exact, teacher);
    let decisions: Vec<u32> = teacher.inputs.par_iter().map(|x| exact.decide(x)).collect();
    let search = search_family(family, teacher, &decisions);
    let counterexample_block = search
        .counterexample
        .as_ref()
        .map(|c| c.block(teacher))
        .unwrap_or_default();

    let faithfulness = match source {
        TeacherSource::Table => Link {
            link: "circuit_faithfulness".into(),
            status: LinkStatus::NotApplicable,
            detail: "teacher supplied as a relation table".into(),
        },
        TeacherSource::Circuit { faithful } => Link {
            link: "circuit_faithfulness".into(),
            status: if faithful { LinkStatus::Established } else { LinkStatus::Failed },
            detail: "circuit decisions against the task reference program".into(),
        },
    };
    let fidelity = Link {
        link: "surrogate_fidelity".into(),
        status: if agreement.is_total() { LinkStatus::Established } else { LinkStatus::Failed },
        detail: format!("exact agreement {}/{}", agreement.agree, agreement.total),
    };
    let equivalence = Link {
        link: "program_equivalence".into(),
        status: match search.verdict {
            Verdict::Verified => LinkStatus::Established,
            _ => LinkStatus::Failed,
        },
        detail: format!(
            "{} over family {} ({} programs)",
            search.verdict.as_str(),
            search.family,
            search.family_size
        ),
    };
    Ok(DistillReport {
        teacher: teacher.name.clone(),
        teacher_description: teacher.description.clone(),
        teacher_source: source,
        domain_size: teacher.inputs.len(),
        dataset_size: teacher.dataset.len(),
        surrogate_config: config.clone(),
        surrogate_steps: fit.steps,
        surrogate_agreement: agreement,
        program: search.program.as_ref().map(Program::canonical),
        search,
        counterexample_block,
        links: vec![faithfulness, fidelity, equivalence],
    })
}
