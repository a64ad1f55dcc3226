// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::model::Network;
use crate::scalar::Scalar;
use crate::tasks::{projected_decision, token, token_text, TaskName, TaskSpec};

/// One letter of an abstract alphabet and the real token it stands for.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Symbol {
    pub id: u8,
    pub token: u32,
}

/// A total function from a finite abstract domain to a two-token output set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeacherRelation {
    pub name: String,
    /// Prefix used when rendering counterexamples, e.g. `QUOTE`.
    pub tag: String,
    pub description: String,
    pub alphabet: Vec<Symbol>,
    pub seq_len: usize,
    /// Candidate tokens, ascending, and their printable names.
    pub candidates: [u32; 2],
    pub candidate_labels: [String; 2],
    /// The abstract domain `X`, in enumeration order.
    pub inputs: Vec<Vec<u8>>,
    /// `f(x)` for each input, as a token in `candidates`.
    pub outputs: Vec<u32>,
    /// Indices into `inputs` of the finite example set used to select programs.
    pub dataset: Vec<usize>,
}

fn all_sequences(alphabet: usize, len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..alphabet as u8).map(move |a| {
                    let mut p = prefix.clone();
                    p.push(a);
                    p
                })
            })
            .collect();
    }
    out
}

impl TeacherRelation {
    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() || self.inputs.len() != self.outputs.len() {
            return Err(Error::InvalidConfig(format!(
                "teacher {} must map every input: {} inputs, {} outputs",
                self.name,
                self.inputs.len(),
                self.outputs.len()
            )));
        }
        for (x, y) in self.inputs.iter().zip(&self.outputs) {
            if x.len() != self.seq_len || x.iter().any(|&a| a as usize >= self.alphabet.len()) {
                return Err(Error::InvalidConfig(format!("teacher input {x:?} is malformed")));
            }
            if !self.candidates.contains(y) {
                return Err(Error::InvalidConfig(format!("teacher output {y} is not a candidate")));
            }
        }
        if self.dataset.iter().any(|&i| i >= self.inputs.len()) {
            return Err(Error::InvalidConfig("dataset index out of range".into()));
        }
        Ok(())
    }

    pub fn to_tokens(&self, x: &[u8]) -> Vec<u32> {
        x.iter().map(|&a| self.alphabet[a as usize].token).collect()
    }

    pub fn label(&self, t: u32) -> &str {
        let i = self.candidates.iter().position(|&c| c == t).expect("candidate token");
        &self.candidate_labels[i]
    }

    pub fn index_of(&self, x: &[u8]) -> Option<usize> {
        self.inputs.iter().position(|y| y == x)
    }

    /// Length-3 sequences over {filler, single quote, double quote}; the
    /// output is the first quote present, single if there is none. The
    /// example set holds the sequences with at most one kind of quote.
    pub fn quote_first() -> Self {
        let alphabet = vec![
            Symbol { id: 0, token: token::BANG },
            Symbol { id: 1, token: token::SINGLE_QUOTE },
            Symbol { id: 2, token: token::DOUBLE_QUOTE },
        ];
        let inputs = all_sequences(3, 3);
        let outputs = inputs
            .iter()
            .map(|x| match x.iter().find(|&&a| a != 0) {
                Some(2) => token::DOUBLE_QUOTE,
                _ => token::SINGLE_QUOTE,
            })
            .collect();
        let dataset = inputs
            .iter()
            .enumerate()
            .filter(|(_, x)| !(x.contains(&1) && x.contains(&2)))
            .map(|(i, _)| i)
            .collect();
        Self {
            name: "quote_first".into(),
            tag: "QUOTE".into(),
            description: "first quote in a length-3 sequence over {'!', single quote, double quote}; single if none".into(),
            alphabet,
            seq_len: 3,
            candidates: [token::SINGLE_QUOTE, token::DOUBLE_QUOTE],
            candidate_labels: ["single-quote".into(), "double-quote".into()],
            inputs,
            outputs,
            dataset,
        }
    }

    fn opener_filler_alphabet(task: &TaskSpec) -> Vec<Symbol> {
        let mut alphabet: Vec<Symbol> = task
            .openers
            .iter()
            .enumerate()
            .map(|(i, &t)| Symbol { id: i as u8, token: t })
            .collect();
        for (i, &t) in task.fillers.iter().enumerate() {
            alphabet.push(Symbol {
                id: (task.openers.len() + i) as u8,
                token: t,
            });
        }
        alphabet
    }

    fn abstract_domain(task: &TaskSpec, alphabet: &[Symbol]) -> Vec<Vec<u8>> {
        task.generate_domain()
            .iter()
            .map(|x| {
                x.iter()
                    .map(|t| alphabet.iter().find(|s| s.token == *t).expect("domain token in alphabet").id)
                    .collect()
            })
            .collect()
    }

    /// Inputs whose content repeats a single filler.
    fn uniform_content(inputs: &[Vec<u8>]) -> Vec<usize> {
        inputs
            .iter()
            .enumerate()
            .filter(|(_, x)| x[1..].iter().all(|a| *a == x[1]))
            .map(|(i, _)| i)
            .collect()
    }

    /// The bracket task's reference relation over its abstract domain.
    pub fn bracket_reference() -> Self {
        let task = TaskSpec::builtin(TaskName::BracketType);
        let alphabet = Self::opener_filler_alphabet(&task);
        let inputs = Self::abstract_domain(&task, &alphabet);
        let outputs = task
            .generate_domain()
            .iter()
            .map(|x| task.reference_program(x).expect("domain input"))
            .collect();
        let dataset = Self::uniform_content(&inputs);
        Self {
            name: "bracket_reference".into(),
            tag: "BRACKET".into(),
            description: "closing bracket matching the opener of the bracket task".into(),
            alphabet,
            seq_len: task.seq_len(),
            candidates: task.candidates,
            candidate_labels: ["square".into(), "curly".into()],
            inputs,
            outputs,
            dataset,
        }
    }

    /// Projected decisions of an extracted circuit tabulated over its task
    /// domain, with openers and fillers as the abstract alphabet.
    pub fn from_circuit<S: Scalar>(net: &Network<S>, circuit: &Circuit, task: &TaskSpec) -> Result<Self> {
        if circuit.task != task.name {
            return Err(Error::InvalidConfig("circuit and task disagree".into()));
        }
        let alphabet = Self::opener_filler_alphabet(task);
        let inputs = Self::abstract_domain(task, &alphabet);
        let mut outputs = Vec::with_capacity(inputs.len());
        for x in task.generate_domain() {
            let logits = net.logits(&x, &circuit.edges)?;
            outputs.push(projected_decision(&logits.restrict(&task.candidates), &task.candidates));
        }
        let dataset = Self::uniform_content(&inputs);
        let (tag, labels) = match task.name {
            TaskName::QuoteClose => ("QUOTE", ["single-quote".to_string(), "double-quote".to_string()]),
            TaskName::BracketType => ("BRACKET", ["square".to_string(), "curly".to_string()]),
        };
        Ok(Self {
            name: format!("{}_circuit", task.name),
            tag: tag.into(),
            description: format!(
                "extracted {} circuit ({} edges) tabulated over its {}-input domain",
                task.name,
                circuit.edges.len(),
                inputs.len()
            ),
            alphabet,
            seq_len: task.seq_len(),
            candidates: task.candidates,
            candidate_labels: labels,
            inputs,
            outputs,
            dataset,
        })
    }

    /// Python-style repr of each token's text, e.g. `['!', '"', '!']`.
    pub fn render(&self, x: &[u8]) -> String {
        let items: Vec<String> = self.to_tokens(x).iter().map(|&t| py_repr(token_text(t))).collect();
        format!("[{}]", items.join(", "))
    }
}

fn py_repr(s: &str) -> String {
    if s.contains('\'') && !s.contains('"') {
        format!("\"{s}\"")
    } else {
        format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quote_teacher_is_total_over_27_inputs() {
        let t = TeacherRelation::quote_first();
        t.validate().unwrap();
        assert_eq!(t.inputs.len(), 27);
        let i = t.index_of(&[0, 2, 1]).unwrap();
        assert_eq!(t.outputs[i], token::DOUBLE_QUOTE);
        let i = t.index_of(&[0, 0, 0]).unwrap();
        assert_eq!(t.outputs[i], token::SINGLE_QUOTE);
        // 27 minus the 12 sequences holding both quote kinds.
        assert_eq!(t.dataset.len(), 15);
    }

    #[test]
    fn renders_like_python_reprs() {
        let t = TeacherRelation::quote_first();
        assert_eq!(t.render(&[0, 2, 0]), "['!', '\"', '!']");
        assert_eq!(t.render(&[1, 0, 0]), "[\"'\", '!', '!']");
    }

    #[test]
    fn bracket_reference_covers_task_domain() {
        let t = TeacherRelation::bracket_reference();
        t.validate().unwrap();
        assert_eq!(t.inputs.len(), 128);
        assert_eq!(t.alphabet.len(), 6);
        assert_eq!(t.to_tokens(&t.inputs[0]), vec![token::OPEN_SQUARE, 12, 12, 12]);
        assert_eq!(t.dataset.len(), 8);
    }
}
