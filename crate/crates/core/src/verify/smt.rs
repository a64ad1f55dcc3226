// SPDX-License-Identifier: MIT OR Apache-2.0

//! SMT-LIB v2 export in quantifier-free linear real arithmetic.
//!
//! Each script asserts the negation of one property piece; `unsat` means the
//! piece holds. Discrete inputs are one-hot Boolean selectors over the task
//! domain, each pinning the exact restricted logits the circuit produces on
//! that input. Robustness scripts declare the perturbation as real
//! variables, assert the box and the branch certificate, and ask for a
//! non-positive decision margin.

use std::fmt::Write as _;

use crate::affine::AffineForm;
use crate::circuit::Edge;
use crate::error::{Error, Result};
use crate::exact::ExactScalar;
use crate::tasks::InvarianceRelation;

use super::{RobustnessQuery, Verifier};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SmtQuery {
    Equivalence,
    Invariance(InvarianceRelation),
    EdgeNecessity(Edge),
    Robustness(RobustnessQuery),
}

impl SmtQuery {
    pub fn slug(&self) -> String {
        match self {
            SmtQuery::Equivalence => "equivalence".into(),
            SmtQuery::Invariance(InvarianceRelation::SameOpener) => "invariance".into(),
            SmtQuery::Invariance(InvarianceRelation::Universal) => "invariance_universal".into(),
            SmtQuery::EdgeNecessity(e) => format!("edge_necessity_{}", e.to_string().replace("->", "__")),
            SmtQuery::Robustness(q) => format!("robustness_{:03}", q.index),
        }
    }
}

/// SMT-LIB numeral for an exact rational.
pub fn real_literal(v: &ExactScalar) -> String {
    let n = v.numer().magnitude().to_string();
    let d = v.denom().to_string();
    let body = if d == "1" { format!("{n}.0") } else { format!("(/ {n}.0 {d}.0)") };
    if v.is_negative() {
        format!("(- {body})")
    } else {
        body
    }
}

fn linear(form: &AffineForm, vars: &[String]) -> String {
    let mut terms = vec![real_literal(&form.constant)];
    for (c, v) in form.coefficients.iter().zip(vars) {
        if !c.is_zero() {
            terms.push(format!("(* {} {v})", real_literal(c)));
        }
    }
    if terms.len() == 1 {
        terms.pop().expect("one term")
    } else {
        format!("(+ {})", terms.join(" "))
    }
}

fn header(out: &mut String, comment: &str) {
    let _ = writeln!(out, "; {comment}");
    out.push_str("(set-logic QF_LRA)\n");
}

fn exactly_one(out: &mut String, names: &[String]) {
    let terms: Vec<String> = names.iter().map(|n| format!("(ite {n} 1.0 0.0)")).collect();
    let _ = writeln!(out, "(assert (= (+ {}) 1.0))", terms.join(" "));
}

/// Selector `prefix_i` for every domain input, pinning `a`/`b` to its
/// restricted logits.
fn selector_table(out: &mut String, v: &Verifier<'_>, prefix: &str, a: &str, b: &str, extra: impl Fn(usize) -> String) {
    let names: Vec<String> = (0..v.domain().len()).map(|i| format!("{prefix}_{i}")).collect();
    for n in &names {
        let _ = writeln!(out, "(declare-const {n} Bool)");
    }
    let _ = writeln!(out, "(declare-const {a} Real)");
    let _ = writeln!(out, "(declare-const {b} Real)");
    exactly_one(out, &names);
    let cands = &v.task().candidates;
    for (i, n) in names.iter().enumerate() {
        let logits = v.trace(i).logits.restrict(cands);
        let _ = writeln!(
            out,
            "(assert (=> {n} (and (= {a} {}) (= {b} {}){})))",
            real_literal(&logits[0]),
            real_literal(&logits[1]),
            extra(i)
        );
    }
}

pub fn export_smtlib(v: &Verifier<'_>, query: &SmtQuery) -> Result<String> {
    let task = v.task();
    let mut out = String::new();
    let cands = task.candidates;
    match query {
        SmtQuery::Equivalence => {
            header(&mut out, &format!("{}: some input where the circuit disagrees with the reference", task.name));
            out.push_str("(declare-const ref_first Bool)\n");
            let refs: Vec<bool> = v
                .domain()
                .iter()
                .map(|x| task.reference_program(x).map(|t| t == cands[0]))
                .collect::<Result<_>>()?;
            selector_table(&mut out, v, "x", "la", "lb", |i| format!(" (= ref_first {})", refs[i]));
            // Ties go to the lower token id, which is the first candidate.
            out.push_str("(assert (not (= (>= la lb) ref_first)))\n");
        }
        SmtQuery::Invariance(relation) => {
            header(&mut out, &format!("{}: two related inputs with different decisions", task.name));
            out.push_str("(declare-const ox Real)\n(declare-const oy Real)\n");
            let opener = |i: usize| v.domain()[i][0];
            selector_table(&mut out, v, "x", "la", "lb", |i| format!(" (= ox {}.0)", opener(i)));
            selector_table(&mut out, v, "y", "ma", "mb", |i| format!(" (= oy {}.0)", opener(i)));
            if *relation == InvarianceRelation::SameOpener {
                out.push_str("(assert (= ox oy))\n");
            }
            out.push_str("(assert (not (= (>= la lb) (>= ma mb))))\n");
        }
        SmtQuery::EdgeNecessity(edge) => {
            header(&mut out, &format!("{}: no input separates the circuit from the circuit without {edge}", task.name));
            let after = {
                let mut edges = v.circuit().edges.clone();
                edges.remove(edge);
                v.domain()
                    .iter()
                    .zip(0..)
                    .map(|(x, i)| {
                        let t = v.network().forward_reusing(x, &edges, Some(v.trace(i)))?;
                        Ok(t.logits.restrict(&cands))
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            let mut facts = Vec::new();
            for (i, cut) in after.iter().enumerate() {
                let full = v.trace(i).logits.restrict(&cands);
                facts.push(format!(
                    "(= (>= {} {}) (>= {} {}))",
                    real_literal(&full[0]),
                    real_literal(&full[1]),
                    real_literal(&cut[0]),
                    real_literal(&cut[1])
                ));
            }
            let _ = writeln!(out, "(assert (and {}))", facts.join("\n  "));
        }
        SmtQuery::Robustness(q) => {
            if q.epsilon.is_negative() {
                return Err(Error::NegativeEpsilon(q.epsilon.to_string()));
            }
            let a = v.analysis(q.index)?;
            header(
                &mut out,
                &format!("{}: input {} flips within the certified branch at radius {}", task.name, q.index, q.epsilon),
            );
            let d = v.trace(q.index).final_residual.len();
            let vars: Vec<String> = (0..d).map(|i| format!("eta_{i}")).collect();
            let eps = real_literal(&q.epsilon);
            for n in &vars {
                let _ = writeln!(out, "(declare-const {n} Real)");
                let _ = writeln!(out, "(assert (<= (- {eps}) {n}))\n(assert (<= {n} {eps}))");
            }
            for c in &a.constraints {
                let _ = writeln!(out, "; {}\n(assert (> {} 0.0))", c.label, linear(&c.form, &vars));
            }
            let flips: Vec<String> = a
                .margins
                .iter()
                .map(|(_, m)| format!("(<= {} 0.0)", linear(m, &vars)))
                .collect();
            let disj = if flips.len() == 1 { flips[0].clone() } else { format!("(or {})", flips.join(" ")) };
            let _ = writeln!(out, "(assert {disj})");
        }
    }
    out.push_str("(check-sat)\n");
    Ok(out)
}

/// Index of the selector a solver model sets to true, e.g. from
/// `(define-fun x_17 () Bool true)`.
pub fn decode_selector(model: &str, prefix: &str) -> Option<usize> {
    let exprs = parse(model).ok()?;
    let mut stack: Vec<&Sexp> = exprs.iter().collect();
    while let Some(e) = stack.pop() {
        if let Sexp::List(items) = e {
            if let [Sexp::Atom(head), Sexp::Atom(name), Sexp::List(args), Sexp::Atom(ty), Sexp::Atom(value)] = &items[..] {
                if head == "define-fun" && args.is_empty() && ty == "Bool" && value == "true" {
                    if let Some(i) = name.strip_prefix(prefix).and_then(|r| r.strip_prefix('_')) {
                        if let Ok(i) = i.parse() {
                            return Some(i);
                        }
                    }
                }
            }
            stack.extend(items.iter());
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

impl std::fmt::Display for Sexp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Sexp::Atom(a) => f.write_str(a),
            Sexp::List(items) => {
                f.write_str("(")?;
                for (i, it) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{it}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Reads SMT-LIB s-expressions: comments, `|quoted|` symbols and string
/// literals are handled; anything unbalanced is an error.
pub fn parse(text: &str) -> Result<Vec<Sexp>> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    while i < chars.len() {
        let c = chars[i];
        match c {
            ';' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' => {
                stack.push(Vec::new());
                i += 1;
            }
            ')' => {
                let done = stack.pop().ok_or_else(|| Error::Parse("unbalanced ')'".into()))?;
                stack
                    .last_mut()
                    .ok_or_else(|| Error::Parse("unbalanced ')'".into()))?
                    .push(Sexp::List(done));
                i += 1;
            }
            c if c.is_whitespace() => i += 1,
            '|' | '"' => {
                let close = c;
                let start = i;
                i += 1;
                while i < chars.len() && chars[i] != close {
                    i += 1;
                }
                if i >= chars.len() {
                    return Err(Error::Parse(format!("unterminated {close}")));
                }
                i += 1;
                let atom: String = chars[start..i].iter().collect();
                stack.last_mut().expect("non-empty stack").push(Sexp::Atom(atom));
            }
            _ => {
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() && !matches!(chars[i], '(' | ')' | ';' | '|' | '"') {
                    i += 1;
                }
                let atom: String = chars[start..i].iter().collect();
                stack.last_mut().expect("non-empty stack").push(Sexp::Atom(atom));
            }
        }
        if stack.is_empty() {
            return Err(Error::Parse("unbalanced ')'".into()));
        }
    }
    if stack.len() != 1 {
        return Err(Error::Parse("unbalanced '('".into()));
    }
    Ok(stack.pop().expect("top level"))
}

const COMMANDS: [&str; 7] = [
    "set-logic",
    "declare-const",
    "declare-fun",
    "assert",
    "check-sat",
    "get-model",
    "set-option",
];

/// Parses a script and checks every top-level form is a known command.
pub fn validate_script(text: &str) -> Result<Vec<Sexp>> {
    let forms = parse(text)?;
    for f in &forms {
        match f {
            Sexp::List(items) => match items.first() {
                Some(Sexp::Atom(head)) if COMMANDS.contains(&head.as_str()) => {}
                _ => return Err(Error::Parse(format!("not a command: {f}"))),
            },
            Sexp::Atom(a) => return Err(Error::Parse(format!("stray atom at top level: {a}"))),
        }
    }
    Ok(forms)
}
