// SPDX-License-Identifier: MIT OR Apache-2.0

use vericircuit::distill::{
    check_program_equivalence, distill, fit_surrogate, search_family, validate_surrogate, Program, SurrogateConfig,
    TeacherRelation, TeacherSource, TemplateFamily,
};
use vericircuit::verify::Verdict;

/// Independent re-implementation of program semantics for cross-checking.
fn run_program(p: &Program, x: &[u8]) -> usize {
    use vericircuit::distill::{Guard, Update};
    let mut s = p.init;
    for &a in x {
        for r in &p.rules {
            let hit = match r.guard {
                Guard::Token(b) => a == b,
                Guard::TokenAtInit(b) => a == b && s == p.init,
            };
            if hit {
                s = match r.update {
                    Update::Set(v) => v,
                    Update::Toggle => {
                        if s == 0 {
                            1
                        } else {
                            0
                        }
                    }
                    Update::Increment => {
                        if s == p.state_max {
                            0
                        } else {
                            s + 1
                        }
                    }
                    Update::Decrement => {
                        if s == 0 {
                            p.state_max
                        } else {
                            s - 1
                        }
                    }
                    Update::ClampIncrement => {
                        if s < p.state_max {
                            s + 1
                        } else {
                            s
                        }
                    }
                };
                break;
            }
        }
    }
    p.output[s as usize] as usize
}

fn pipelines() -> Vec<(TeacherRelation, TemplateFamily)> {
    vec![
        (TeacherRelation::quote_first(), TemplateFamily::quote_recent()),
        (TeacherRelation::quote_first(), TemplateFamily::quote_first_aware()),
        (TeacherRelation::bracket_reference(), TemplateFamily::opener_counter()),
    ]
}

#[test]
fn counterexamples_reproduce_three_way_outputs() {
    for (teacher, family) in pipelines() {
        let config = SurrogateConfig::default();
        let report = distill(&teacher, TeacherSource::Table, &family, &config).unwrap();
        let Some(c) = &report.search.counterexample else {
            continue;
        };
        let fit = fit_surrogate(&teacher, &config).unwrap();
        let exact = fit.surrogate.to_exact().unwrap();
        let x = &teacher.inputs[c.index];
        assert_eq!(x, &c.abstract_input);
        assert_eq!(teacher.to_tokens(x), c.tokens);
        let p = report.search.program.as_ref().unwrap();
        assert_eq!(teacher.candidates[run_program(p, x)], c.program);
        assert_eq!(exact.decide(x), c.surrogate);
        assert_eq!(teacher.outputs[c.index], c.teacher);
        assert_ne!(c.program, c.surrogate);
    }
}

#[test]
fn verified_programs_survive_a_second_exhaustive_loop() {
    for (teacher, family) in pipelines() {
        let s = search_family(&family, &teacher, &teacher.outputs);
        if s.verdict != Verdict::Verified {
            continue;
        }
        let p = s.program.unwrap();
        let mut disagreements = 0;
        for (x, y) in teacher.inputs.iter().zip(&teacher.outputs) {
            if teacher.candidates[run_program(&p, x)] != *y {
                disagreements += 1;
            }
        }
        assert_eq!(disagreements, 0, "{}", p);
    }
}

#[test]
fn enumeration_order_matches_reported_first_success() {
    let teacher = TeacherRelation::quote_first();
    let family = TemplateFamily::quote_first_aware();
    let s = search_family(&family, &teacher, &teacher.outputs);
    let first = family
        .enumerate()
        .into_iter()
        .find(|p| check_program_equivalence(p, &teacher.outputs, &teacher).is_none())
        .unwrap();
    assert_eq!(s.program.unwrap(), first);
}

#[test]
fn dataset_agreement_is_reported_separately_from_domain_agreement() {
    let teacher = TeacherRelation::quote_first();
    let s = search_family(&TemplateFamily::quote_recent(), &teacher, &teacher.outputs);
    assert_eq!(s.dataset_agreement.0, s.dataset_agreement.1);
    assert!(s.domain_agreement.0 < s.domain_agreement.1);
    assert_eq!(s.domain_agreement.1, 27);
}

#[test]
fn flipping_an_output_weight_breaks_agreement_at_a_named_input() {
    let teacher = TeacherRelation::quote_first();
    let fit = fit_surrogate(&teacher, &SurrogateConfig::default()).unwrap();
    let mut found = false;
    for i in 0..fit.surrogate.w2.data.len() {
        let mut s = fit.surrogate.clone();
        s.w2.data[i] = -s.w2.data[i];
        let a = validate_surrogate(&s.to_exact().unwrap(), &teacher);
        if !a.is_total() {
            assert_eq!(a.total - a.agree, a.disagreements.len());
            let idx = a.disagreements[0];
            assert_ne!(s.decide(&teacher.inputs[idx]), teacher.outputs[idx]);
            found = true;
            break;
        }
    }
    assert!(found);
}

#[test]
fn constant_teacher_fits_trivially() {
    let mut teacher = TeacherRelation::quote_first();
    teacher.outputs = vec![teacher.candidates[1]; teacher.inputs.len()];
    let fit = fit_surrogate(&teacher, &SurrogateConfig::default()).unwrap();
    let a = validate_surrogate(&fit.surrogate.to_exact().unwrap(), &teacher);
    assert!(a.is_total());
    assert_eq!(a.percent(), 100.0);
    // Validation is deterministic.
    assert_eq!(a, validate_surrogate(&fit.surrogate.to_exact().unwrap(), &teacher));
}

#[test]
fn a_program_equal_to_its_own_outputs_is_equivalent() {
    let teacher = TeacherRelation::quote_first();
    for p in TemplateFamily::quote_recent().enumerate().iter().step_by(17) {
        let table: Vec<u32> = teacher.inputs.iter().map(|x| p.run(x, &teacher.candidates)).collect();
        assert_eq!(check_program_equivalence(p, &table, &teacher), None);
    }
}

#[test]
fn report_serializes_with_canonical_program_and_links() {
    let teacher = TeacherRelation::bracket_reference();
    let r = distill(
        &teacher,
        TeacherSource::Table,
        &TemplateFamily::opener_counter(),
        &SurrogateConfig::default(),
    )
    .unwrap();
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    assert_eq!(v["search"]["verdict"], "verified");
    assert_eq!(v["program"], r.search.program.as_ref().unwrap().canonical());
    assert_eq!(v["links"].as_array().unwrap().len(), 3);
    assert_eq!(v["links"][0]["status"], "not_applicable");
}
