// SPDX-License-Identifier: MIT OR Apache-2.0

//! Exact verification of circuit properties.
//!
//! Finite-domain properties are decided by exhaustive rational evaluation.
//! Residual robustness perturbs the final residual inside an ℓ∞ box: a branch
//! certificate pins the final BandNorm to one affine piece, after which every
//! candidate logit is an affine form in the perturbation and the decision
//! margins are checked in closed form.

mod engine;
mod robust;
pub mod smt;

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::affine::RadiusBound;
use crate::circuit::Edge;
use crate::exact::ExactScalar;

pub use engine::Verifier;
pub use robust::{falsify_by_sampling, resimulate_perturbation, InputCertificate, RobustnessQuery};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Equivalence,
    Invariance,
    EdgeNecessity,
    ResidualRobustness,
}

impl Property {
    pub const ALL: [Property; 4] = [
        Property::Equivalence,
        Property::Invariance,
        Property::EdgeNecessity,
        Property::ResidualRobustness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Property::Equivalence => "equivalence",
            Property::Invariance => "invariance",
            Property::EdgeNecessity => "edge_necessity",
            Property::ResidualRobustness => "residual_robustness",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Verified,
    Refuted,
    Unknown,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Verified => "verified",
            Verdict::Refuted => "refuted",
            Verdict::Unknown => "unknown",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Counterexample {
    /// The circuit decides `circuit` where the reference program says `expected`.
    Input {
        index: usize,
        tokens: Vec<u32>,
        expected: u32,
        circuit: u32,
    },
    /// Two related inputs with different decisions.
    Pair {
        first: Vec<u32>,
        second: Vec<u32>,
        first_decision: u32,
        second_decision: u32,
    },
    /// Retained edges whose removal changes no domain decision.
    WitnessFree { edges: Vec<Edge> },
    /// A perturbation of the final residual that flips the decision.
    Perturbation {
        index: usize,
        tokens: Vec<u32>,
        epsilon: ExactScalar,
        eta: Vec<ExactScalar>,
        clean: u32,
        perturbed: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Diagnostics {
    None,
    /// Number of related pairs compared.
    Pairs { checked: usize },
    Witnesses { witnesses: BTreeMap<Edge, Option<Vec<u32>>> },
    Robustness {
        epsilon: ExactScalar,
        /// Minimum over the domain of each input's certified radius.
        domain_radius: RadiusBound,
        inputs: Vec<InputCertificate>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub property: Property,
    pub verdict: Verdict,
    pub counterexample: Option<Counterexample>,
    pub diagnostics: Diagnostics,
    /// Wall clock; kept out of the byte-stable results file.
    #[serde(skip)]
    pub duration: Duration,
}
