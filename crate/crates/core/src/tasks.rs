// SPDX-License-Identifier: MIT OR Apache-2.0

//! Vocabulary, the two symbolic tasks, and projected decisions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const VOCAB_SIZE: usize = 32;

/// Printable form of every token id.
pub const VOCAB: [&str; VOCAB_SIZE] = [
    "<pad>", "<bos>", "'", "\"", "[", "]", "{", "}", "a", "b", "c", "d", "w", "x", "y", "z", "0",
    "1", "2", "3", "4", "5", "6", "7", "8", "9", "(", ")", "!", "?", ",", ".",
];

pub mod token {
    pub const SINGLE_QUOTE: u32 = 2;
    pub const DOUBLE_QUOTE: u32 = 3;
    pub const OPEN_SQUARE: u32 = 4;
    pub const CLOSE_SQUARE: u32 = 5;
    pub const OPEN_CURLY: u32 = 6;
    pub const CLOSE_CURLY: u32 = 7;
    pub const BANG: u32 = 28;
}

pub fn token_text(id: u32) -> &'static str {
    VOCAB.get(id as usize).copied().unwrap_or("<unk>")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskName {
    QuoteClose,
    BracketType,
}

impl TaskName {
    pub const ALL: [TaskName; 2] = [TaskName::QuoteClose, TaskName::BracketType];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskName::QuoteClose => "quote_close",
            TaskName::BracketType => "bracket_type",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "quote_close" | "quote" => Ok(TaskName::QuoteClose),
            "bracket_type" | "bracket" => Ok(TaskName::BracketType),
            other => Err(Error::InvalidConfig(format!("unknown task {other:?}"))),
        }
    }
}

impl std::fmt::Display for TaskName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which input pairs must receive the same decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvarianceRelation {
    /// Same length and same opener; content tokens are free.
    SameOpener,
    /// Every pair is related.
    Universal,
}

impl InvarianceRelation {
    pub fn related(self, a: &[u32], b: &[u32]) -> bool {
        match self {
            InvarianceRelation::SameOpener => a.len() == b.len() && a.first() == b.first(),
            InvarianceRelation::Universal => true,
        }
    }
}

/// A finite task: inputs are an opener followed by content tokens drawn
/// from a four-token filler alphabet, and the target is the matching closer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: TaskName,
    pub openers: [u32; 2],
    /// `closers[i]` closes `openers[i]`.
    pub closers: [u32; 2],
    pub fillers: [u32; 4],
    pub content_len: usize,
    /// Candidate set `T`, ascending token ids.
    pub candidates: [u32; 2],
    pub invariance: InvarianceRelation,
}

impl TaskSpec {
    pub fn builtin(name: TaskName) -> Self {
        use token::*;
        match name {
            TaskName::QuoteClose => TaskSpec {
                name,
                openers: [SINGLE_QUOTE, DOUBLE_QUOTE],
                closers: [SINGLE_QUOTE, DOUBLE_QUOTE],
                fillers: [8, 9, 10, 11],
                content_len: 3,
                candidates: [SINGLE_QUOTE, DOUBLE_QUOTE],
                invariance: InvarianceRelation::SameOpener,
            },
            TaskName::BracketType => TaskSpec {
                name,
                openers: [OPEN_SQUARE, OPEN_CURLY],
                closers: [CLOSE_SQUARE, CLOSE_CURLY],
                fillers: [12, 13, 14, 15],
                content_len: 3,
                candidates: [CLOSE_SQUARE, CLOSE_CURLY],
                invariance: InvarianceRelation::SameOpener,
            },
        }
    }

    pub fn all() -> Vec<TaskSpec> {
        TaskName::ALL.iter().map(|&n| TaskSpec::builtin(n)).collect()
    }

    pub fn seq_len(&self) -> usize {
        1 + self.content_len
    }

    /// Opener-major, then content in lexicographic filler order.
    pub fn generate_domain(&self) -> Vec<Vec<u32>> {
        let n_fill = self.fillers.len();
        let per_opener = n_fill.pow(self.content_len as u32);
        let mut out = Vec::with_capacity(self.openers.len() * per_opener);
        for &opener in &self.openers {
            for code in 0..per_opener {
                let mut seq = vec![opener];
                let mut rest = code;
                let mut content = vec![0u32; self.content_len];
                for slot in (0..self.content_len).rev() {
                    content[slot] = self.fillers[rest % n_fill];
                    rest /= n_fill;
                }
                seq.extend(content);
                out.push(seq);
            }
        }
        out
    }

    pub fn in_domain(&self, x: &[u32]) -> bool {
        x.len() == self.seq_len()
            && self.openers.contains(&x[0])
            && x[1..].iter().all(|t| self.fillers.contains(t))
    }

    /// The closer matching the opener.
    pub fn reference_program(&self, x: &[u32]) -> Result<u32> {
        if !self.in_domain(x) {
            return Err(Error::OutOfDomain(x.to_vec()));
        }
        let i = self.openers.iter().position(|&o| o == x[0]).expect("checked opener");
        Ok(self.closers[i])
    }

    pub fn candidate_index(&self, token: u32) -> Option<usize> {
        self.candidates.iter().position(|&c| c == token)
    }
}

/// Final-position logits over the full vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitVector<S>(pub Vec<S>);

impl<S: Scalar> LogitVector<S> {
    pub fn restrict(&self, candidates: &[u32]) -> Vec<S> {
        candidates.iter().map(|&t| self.0[t as usize].clone()).collect()
    }
}

/// `argmax_{t∈T}` over restricted logits; exact ties go to the lower token id.
pub fn projected_decision<S: Scalar>(restricted: &[S], candidates: &[u32]) -> u32 {
    assert_eq!(restricted.len(), candidates.len());
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&i| candidates[i]);
    let mut best = order[0];
    for &i in &order[1..] {
        if restricted[i] > restricted[best] {
            best = i;
        }
    }
    candidates[best]
}
