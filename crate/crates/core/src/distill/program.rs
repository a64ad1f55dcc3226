// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "symbol")]
pub enum Guard {
    /// The current symbol is `a`.
    Token(u8),
    /// The current symbol is `a` and the state still equals its initial value.
    TokenAtInit(u8),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Update {
    Set(u8),
    /// `0 ↦ 1`, anything else `↦ 0`.
    Toggle,
    /// Modulo `state_max + 1`.
    Increment,
    Decrement,
    /// Saturates at `state_max`.
    ClampIncrement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rule {
    pub guard: Guard,
    pub update: Update,
}

/// A finite-state scan: start in `init`, and for each symbol fire the first
/// rule whose guard holds. The final state indexes `output`, whose entries
/// index the candidate pair.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Program {
    pub state_max: u8,
    pub init: u8,
    pub rules: Vec<Rule>,
    pub output: Vec<u8>,
}

impl Program {
    pub fn validate(&self) -> Result<()> {
        if self.init > self.state_max || self.output.len() != self.state_max as usize + 1 {
            return Err(Error::InvalidConfig(format!("malformed program {self}")));
        }
        if self.output.iter().any(|o| *o > 1) {
            return Err(Error::InvalidConfig(format!("output index out of range in {self}")));
        }
        for r in &self.rules {
            if let Update::Set(v) = r.update {
                if v > self.state_max {
                    return Err(Error::InvalidConfig(format!("set {v} exceeds state bound in {self}")));
                }
            }
        }
        Ok(())
    }

    fn step(&self, state: u8, symbol: u8) -> u8 {
        let fires = |g: &Guard| match *g {
            Guard::Token(a) => a == symbol,
            Guard::TokenAtInit(a) => a == symbol && state == self.init,
        };
        let Some(rule) = self.rules.iter().find(|r| fires(&r.guard)) else {
            return state;
        };
        let n = self.state_max + 1;
        match rule.update {
            Update::Set(v) => v,
            Update::Toggle => u8::from(state == 0),
            Update::Increment => (state + 1) % n,
            Update::Decrement => (state + n - 1) % n,
            Update::ClampIncrement => (state + 1).min(self.state_max),
        }
    }

    pub fn final_state(&self, x: &[u8]) -> u8 {
        x.iter().fold(self.init, |s, &a| self.step(s, a))
    }

    /// Index into the candidate pair.
    pub fn output_index(&self, x: &[u8]) -> usize {
        self.output[self.final_state(x) as usize] as usize
    }

    pub fn run(&self, x: &[u8], candidates: &[u32; 2]) -> u32 {
        candidates[self.output_index(x)]
    }

    pub fn canonical(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::Token(a) => write!(f, "x=={a}"),
            Guard::TokenAtInit(a) => write!(f, "x=={a}&s==init"),
        }
    }
}

impl fmt::Display for Update {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Update::Set(v) => write!(f, "s:={v}"),
            Update::Toggle => f.write_str("s:=toggle(s)"),
            Update::Increment => f.write_str("s:=s+1"),
            Update::Decrement => f.write_str("s:=s-1"),
            Update::ClampIncrement => f.write_str("s:=min(s+1,max)"),
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s in 0..={} init {};", self.state_max, self.init)?;
        for r in &self.rules {
            write!(f, " if {} then {};", r.guard, r.update)?;
        }
        let out: Vec<String> = self.output.iter().map(|o| o.to_string()).collect();
        write!(f, " out [{}]", out.join(","))
    }
}

/// A finite, deterministically ordered set of programs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateFamily {
    pub name: String,
    pub state_max: u8,
    pub inits: Vec<u8>,
    pub guards: Vec<Guard>,
    pub updates: Vec<Update>,
    pub min_rules: usize,
    pub max_rules: usize,
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn tuples(base: usize, len: usize) -> Vec<Vec<usize>> {
    (0..base.pow(len as u32))
        .map(|mut code| {
            let mut t = vec![0; len];
            for slot in t.iter_mut().rev() {
                *slot = code % base;
                code /= base;
            }
            t
        })
        .collect()
}

impl TemplateFamily {
    /// Programs ordered by rule count, initial state, guard subset, update
    /// tuple and output map. Each rule uses a distinct guard and rules keep
    /// the family's guard order; duplicates by canonical string are dropped.
    pub fn enumerate(&self) -> Vec<Program> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        if self.updates.is_empty() && self.min_rules > 0 {
            return out;
        }
        let states = self.state_max as usize + 1;
        let maps = tuples(2, states);
        for k in self.min_rules..=self.max_rules.min(self.guards.len()) {
            for &init in &self.inits {
                if init > self.state_max {
                    continue;
                }
                for guards in subsets(self.guards.len(), k) {
                    for ups in tuples(self.updates.len().max(1), k) {
                        let rules: Vec<Rule> = guards
                            .iter()
                            .zip(&ups)
                            .map(|(&g, &u)| Rule {
                                guard: self.guards[g],
                                update: self.updates[u],
                            })
                            .collect();
                        for m in &maps {
                            let p = Program {
                                state_max: self.state_max,
                                init,
                                rules: rules.clone(),
                                output: m.iter().map(|&v| v as u8).collect(),
                            };
                            if p.validate().is_ok() && seen.insert(p.canonical()) {
                                out.push(p);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Programs whose state records only the most recent quote seen.
    pub fn quote_recent() -> Self {
        Self {
            name: "recent_quote".into(),
            state_max: 2,
            inits: vec![0, 1, 2],
            guards: vec![Guard::Token(1), Guard::Token(2)],
            updates: vec![Update::Set(0), Update::Set(1), Update::Set(2)],
            min_rules: 0,
            max_rules: 2,
        }
    }

    /// The recent-quote family plus guards that fire only while the state
    /// is still initial.
    pub fn quote_first_aware() -> Self {
        Self {
            name: "first_quote_aware".into(),
            guards: vec![
                Guard::Token(1),
                Guard::Token(2),
                Guard::TokenAtInit(1),
                Guard::TokenAtInit(2),
            ],
            ..Self::quote_recent()
        }
    }

    /// Small counters driven by one or two symbols of a six-letter alphabet.
    pub fn opener_counter() -> Self {
        Self {
            name: "opener_counter".into(),
            state_max: 2,
            inits: vec![0],
            guards: (0..6).map(Guard::Token).collect(),
            updates: vec![Update::Increment, Update::ClampIncrement, Update::Decrement, Update::Toggle],
            min_rules: 1,
            max_rules: 2,
        }
    }

    /// One toggle rule over a boolean state.
    pub fn toggle(alphabet: u8) -> Self {
        Self {
            name: "toggle".into(),
            state_max: 1,
            inits: vec![0],
            guards: (0..alphabet).map(Guard::Token).collect(),
            updates: vec![Update::Toggle],
            min_rules: 1,
            max_rules: 1,
        }
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "recent_quote" => Ok(Self::quote_recent()),
            "first_quote_aware" => Ok(Self::quote_first_aware()),
            "opener_counter" => Ok(Self::opener_counter()),
            "toggle" => Ok(Self::toggle(3)),
            other => Err(Error::InvalidConfig(format!("unknown template family {other}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toggle_family_size_is_predicates_times_maps() {
        let progs = TemplateFamily::toggle(3).enumerate();
        assert_eq!(progs.len(), 3 * 4);
    }

    #[test]
    fn enumeration_is_deterministic_and_unique() {
        let f = TemplateFamily::quote_first_aware();
        let a = f.enumerate();
        let b = f.enumerate();
        assert_eq!(a, b);
        let names: BTreeSet<String> = a.iter().map(Program::canonical).collect();
        assert_eq!(names.len(), a.len());
        // 3 inits × 8 maps × (1 + 4·3 + 6·9) rule lists.
        assert_eq!(a.len(), 3 * 8 * (1 + 12 + 54));
    }

    #[test]
    fn empty_family_is_empty() {
        let f = TemplateFamily {
            guards: vec![],
            min_rules: 1,
            ..TemplateFamily::toggle(3)
        };
        assert!(f.enumerate().is_empty());
    }

    #[test]
    fn semantics_of_updates() {
        let p = Program {
            state_max: 2,
            init: 0,
            rules: vec![
                Rule {
                    guard: Guard::Token(0),
                    update: Update::ClampIncrement,
                },
                Rule {
                    guard: Guard::Token(1),
                    update: Update::Decrement,
                },
            ],
            output: vec![0, 1, 1],
        };
        assert_eq!(p.final_state(&[0, 0, 0]), 2);
        assert_eq!(p.final_state(&[1]), 2);
        assert_eq!(p.final_state(&[0, 1]), 0);
        let first = Program {
            state_max: 2,
            init: 0,
            rules: vec![
                Rule {
                    guard: Guard::TokenAtInit(1),
                    update: Update::Set(1),
                },
                Rule {
                    guard: Guard::TokenAtInit(2),
                    update: Update::Set(2),
                },
            ],
            output: vec![0, 0, 1],
        };
        assert_eq!(first.final_state(&[0, 2, 1]), 2);
        assert_eq!(first.final_state(&[1, 2, 2]), 1);
        assert_eq!(first.to_string(), "s in 0..=2 init 0; if x==1&s==init then s:=1; if x==2&s==init then s:=2; out [0,0,1]");
    }
}
