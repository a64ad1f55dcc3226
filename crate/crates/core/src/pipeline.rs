// SPDX-License-Identifier: MIT OR Apache-2.0

//! The batch commands: train, extract, verify, distill, export-smt, report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::artifacts::{
    read_json, write_bytes, write_json, write_meta, CircuitArtifact, Layout, ResultArtifact, SanityCheck, Summary,
    SummaryRow,
};
use crate::circuit::{decisions, extract, Circuit, CoarseGraph, EdgeSet};
use crate::distill::{distill, DistillReport, SurrogateConfig, TeacherRelation, TeacherSource, TemplateFamily};
use crate::error::{Error, Result};
use crate::exact::ExactScalar;
use crate::model::{train, Checkpoint, ModelConfig, Network, TrainConfig};
use crate::tasks::{InvarianceRelation, TaskName, TaskSpec};
use crate::verify::smt::{export_smtlib, SmtQuery};
use crate::verify::{Property, RobustnessQuery, Verdict, Verifier};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Train,
    Extract,
    Verify,
    Distill,
    ExportSmt,
    Report,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Extract => "extract",
            Command::Verify => "verify",
            Command::Distill => "distill",
            Command::ExportSmt => "export-smt",
            Command::Report => "report",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Command::Train,
            Command::Extract,
            Command::Verify,
            Command::Distill,
            Command::ExportSmt,
            Command::Report,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown command {s}")))
    }
}

/// Which teacher the distill command uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TeacherChoice {
    /// Built-in table for the quote task, extracted circuit for the bracket task.
    #[default]
    Auto,
    Table,
    Circuit,
}

impl FromStr for TeacherChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "table" => Ok(Self::Table),
            "circuit" => Ok(Self::Circuit),
            other => Err(Error::InvalidConfig(format!("unknown teacher {other}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub tasks: Vec<TaskName>,
    pub epsilon: Option<ExactScalar>,
    pub workers: Option<usize>,
    pub teacher: TeacherChoice,
    /// Inputs per task that get a robustness script in export-smt.
    pub smt_robustness_inputs: usize,
}

impl RunConfig {
    pub fn new(command: Command, out: impl Into<PathBuf>) -> Self {
        Self {
            command,
            out: out.into(),
            seed: None,
            tasks: TaskName::ALL.to_vec(),
            epsilon: None,
            workers: None,
            teacher: TeacherChoice::Auto,
            smt_robustness_inputs: 8,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.command, Command::Train | Command::Distill) && self.seed.is_none() {
            return Err(Error::InvalidConfig(format!("{} requires --seed", self.command.as_str())));
        }
        if self.tasks.is_empty() {
            return Err(Error::InvalidConfig("no task selected".into()));
        }
        if let Some(e) = &self.epsilon {
            if e.is_negative() {
                return Err(Error::NegativeEpsilon(e.to_string()));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidConfig("--workers must be positive".into()));
        }
        Ok(())
    }
}

/// Runs one command and returns a short human-readable summary.
pub fn run(config: &RunConfig) -> Result<String> {
    config.validate()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    let layout = Layout::new(&config.out);
    pool.install(|| match config.command {
        Command::Train => run_train(config, &layout),
        Command::Extract => run_extract(config, &layout),
        Command::Verify => run_verify(config, &layout),
        Command::Distill => run_distill(config, &layout),
        Command::ExportSmt => run_export(config, &layout),
        Command::Report => run_report(&layout),
    })
}

struct Loaded {
    config: ModelConfig,
    float: Network<f64>,
    exact: Network<ExactScalar>,
    hash: String,
}

fn load_checkpoint(layout: &Layout) -> Result<Loaded> {
    let (ckpt, hash): (Checkpoint, String) = read_json(&layout.checkpoint(), "train")?;
    let params = ckpt.params()?;
    Ok(Loaded {
        float: Network::from_f64(&ckpt.config, &params)?,
        exact: Network::from_f64(&ckpt.config, &params)?.with_position_pruning(),
        config: ckpt.config,
        hash,
    })
}

fn load_circuit(layout: &Layout, loaded: &Loaded, task: TaskName) -> Result<(CircuitArtifact, Circuit, String)> {
    let path = layout.circuit(task);
    let (art, hash): (CircuitArtifact, String) = read_json(&path, "extract")?;
    if art.checkpoint_sha256 != loaded.hash {
        return Err(Error::MalformedArtifact {
            path,
            reason: "circuit was extracted from a different checkpoint; rerun `extract`".into(),
        });
    }
    let graph = CoarseGraph::new(loaded.config.layers, loaded.config.heads);
    let edges: EdgeSet = art.edges.iter().copied().collect();
    graph.validate_edges(&edges)?;
    let circuit = Circuit { task, graph, edges };
    Ok((art, circuit, hash))
}

fn run_train(config: &RunConfig, layout: &Layout) -> Result<String> {
    let start = Instant::now();
    let model = ModelConfig {
        seed: config.seed.expect("validated"),
        ..ModelConfig::default()
    };
    let tc = TrainConfig::default();
    let outcome = train(&model, &TaskSpec::all(), &tc)?;
    let ckpt = Checkpoint::new(&model, &tc, outcome.steps, &outcome.params)?;
    let hash = write_json(&layout.checkpoint(), &ckpt)?;
    write_json(&layout.metrics(), &outcome.metrics)?;
    write_meta(&layout.checkpoint(), "train", start.elapsed())?;
    Ok(format!(
        "trained {} parameters in {} steps; checkpoint {}",
        model.parameter_count(),
        outcome.steps,
        &hash[..12]
    ))
}

fn run_extract(config: &RunConfig, layout: &Layout) -> Result<String> {
    let loaded = load_checkpoint(layout)?;
    let mut out = String::new();
    for &name in &config.tasks {
        let start = Instant::now();
        let task = TaskSpec::builtin(name);
        let report = extract(&loaded.float, &task)?;
        let float_decisions = decisions(&loaded.float, &report.circuit.edges, &task)?;
        let exact_decisions = decisions(&loaded.exact, &report.circuit.edges, &task)?;
        let exact_model = decisions(&loaded.exact, &loaded.exact.full_edges, &task)?;
        let reference = task
            .generate_domain()
            .iter()
            .map(|x| task.reference_program(x))
            .collect::<Result<Vec<_>>>()?;
        let sanity = SanityCheck {
            float_exact_agree: float_decisions == exact_decisions,
            faithful: exact_decisions == exact_model,
            matches_reference: exact_decisions == reference,
        };
        let art = CircuitArtifact {
            task: name,
            checkpoint_sha256: loaded.hash.clone(),
            inputs: reference.len(),
            nodes: report.circuit.graph.live_nodes(&report.circuit.edges).into_iter().collect(),
            edges: report.circuit.edges.iter().copied().collect(),
            full_edges: report.circuit.graph.edges.len(),
            witnesses: report.witnesses,
            greedy_passes: report.greedy_passes,
            diagnostics: report.diagnostics,
            sanity,
        };
        let path = layout.circuit(name);
        write_json(&path, &art)?;
        write_meta(&path, "extract", start.elapsed())?;
        let edges: Vec<String> = art.edges.iter().map(|e| e.to_string()).collect();
        let _ = writeln!(
            out,
            "{name}: {} of {} edges [{}], sanity {}",
            art.edges.len(),
            art.full_edges,
            edges.join(", "),
            if art.sanity.passed() { "pass" } else { "FAIL" }
        );
    }
    Ok(out)
}

fn run_verify(config: &RunConfig, layout: &Layout) -> Result<String> {
    let start = Instant::now();
    let loaded = load_checkpoint(layout)?;
    let mut rows = Vec::new();
    for &name in &config.tasks {
        let task = TaskSpec::builtin(name);
        let (art, circuit, hash) = load_circuit(layout, &loaded, name)?;
        let verifier = Verifier::new(&loaded.exact, &circuit, &task)?;
        let epsilon = match &config.epsilon {
            Some(e) => e.clone(),
            None => verifier.default_epsilon()?,
        };
        let mut verdicts = BTreeMap::new();
        for result in verifier.verify_all(&epsilon)? {
            let property = result.property;
            verdicts.insert(property, result.verdict);
            let path = layout.result(name, property);
            write_json(
                &path,
                &ResultArtifact {
                    task: name,
                    circuit_sha256: hash.clone(),
                    epsilon: (property == Property::ResidualRobustness).then(|| epsilon.clone()),
                    result,
                },
            )?;
        }
        rows.push(SummaryRow {
            task: name,
            inputs: verifier.domain().len(),
            edges: circuit.edges.len(),
            sanity_check: art.sanity.passed(),
            verdicts,
            circuit_sha256: hash,
            epsilon_approx: epsilon.to_f64(),
            epsilon,
        });
    }
    let summary = Summary {
        checkpoint_sha256: loaded.hash,
        rows,
    };
    write_json(&layout.summary_json(), &summary)?;
    write_meta(&layout.summary_json(), "verify", start.elapsed())?;
    let table = summary.render();
    write_bytes(&layout.summary_txt(), table.as_bytes())?;
    Ok(table)
}

fn run_distill(config: &RunConfig, layout: &Layout) -> Result<String> {
    let surrogate = SurrogateConfig {
        seed: config.seed.expect("validated"),
        ..SurrogateConfig::default()
    };
    let mut loaded = None;
    let mut out = String::new();
    for &name in &config.tasks {
        let start = Instant::now();
        let use_circuit = match config.teacher {
            TeacherChoice::Circuit => true,
            TeacherChoice::Table => false,
            TeacherChoice::Auto => name == TaskName::BracketType,
        };
        let runs: Vec<(TeacherRelation, TeacherSource, TemplateFamily)> = if use_circuit {
            if loaded.is_none() {
                loaded = Some(load_checkpoint(layout)?);
            }
            let l = loaded.as_ref().expect("just loaded");
            let (art, circuit, _) = load_circuit(layout, l, name)?;
            let teacher = TeacherRelation::from_circuit(&l.exact, &circuit, &TaskSpec::builtin(name))?;
            let source = TeacherSource::Circuit {
                faithful: art.sanity.passed(),
            };
            vec![(teacher, source, TemplateFamily::opener_counter())]
        } else {
            match name {
                TaskName::QuoteClose => {
                    let t = TeacherRelation::quote_first();
                    vec![
                        (t.clone(), TeacherSource::Table, TemplateFamily::quote_recent()),
                        (t, TeacherSource::Table, TemplateFamily::quote_first_aware()),
                    ]
                }
                TaskName::BracketType => vec![(
                    TeacherRelation::bracket_reference(),
                    TeacherSource::Table,
                    TemplateFamily::opener_counter(),
                )],
            }
        };
        for (teacher, source, family) in runs {
            let report = distill(&teacher, source, &family, &surrogate)?;
            let path = layout.distill(name, &family.name);
            write_json(&path, &report)?;
            write_meta(&path, "distill", start.elapsed())?;
            out.push_str(&render_distill(name, &report));
        }
    }
    Ok(out)
}

fn render_distill(task: TaskName, r: &DistillReport) -> String {
    let mut out = String::new();
    let s = &r.search;
    let _ = writeln!(
        out,
        "{task} / {}: {} ({} programs); surrogate agreement {}/{}; dataset agreement {}/{}; domain agreement {}/{}",
        s.family,
        match s.verdict {
            Verdict::Verified => "verified",
            Verdict::Refuted => "refuted for restricted template",
            Verdict::Unknown => "unknown (empty family)",
        },
        s.family_size,
        r.surrogate_agreement.agree,
        r.surrogate_agreement.total,
        s.dataset_agreement.0,
        s.dataset_agreement.1,
        s.domain_agreement.0,
        s.domain_agreement.1,
    );
    if let Some(p) = &r.program {
        let _ = writeln!(out, "  program: {p}");
    }
    for line in &r.counterexample_block {
        let _ = writeln!(out, "{line}");
    }
    out
}

/// One exported script and the answer the internal checker implies.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmtEntry {
    pub file: String,
    pub internal_verdict: Verdict,
    /// `sat` or `unsat`; absent when the internal verdict is unknown.
    pub expected: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmtManifest {
    pub task: TaskName,
    pub circuit_sha256: String,
    pub epsilon: ExactScalar,
    pub entries: Vec<SmtEntry>,
}

fn expectation(holds: Verdict) -> Option<String> {
    match holds {
        Verdict::Verified => Some("unsat".into()),
        Verdict::Refuted => Some("sat".into()),
        Verdict::Unknown => None,
    }
}

fn run_export(config: &RunConfig, layout: &Layout) -> Result<String> {
    let loaded = load_checkpoint(layout)?;
    let mut out = String::new();
    for &name in &config.tasks {
        let start = Instant::now();
        let task = TaskSpec::builtin(name);
        let (_, circuit, hash) = load_circuit(layout, &loaded, name)?;
        let v = Verifier::new(&loaded.exact, &circuit, &task)?;
        let epsilon = match &config.epsilon {
            Some(e) => e.clone(),
            None => v.default_epsilon()?,
        };
        let mut queries = vec![
            (SmtQuery::Equivalence, v.verify_equivalence()?.verdict),
            (SmtQuery::Invariance(task.invariance), v.verify_invariance().verdict),
        ];
        if task.invariance != InvarianceRelation::Universal {
            let r = v.verify_invariance_with(InvarianceRelation::Universal).verdict;
            queries.push((SmtQuery::Invariance(InvarianceRelation::Universal), r));
        }
        for e in &circuit.edges {
            let holds = if v.witness(e)?.is_some() { Verdict::Verified } else { Verdict::Refuted };
            queries.push((SmtQuery::EdgeNecessity(*e), holds));
        }
        for i in 0..config.smt_robustness_inputs.min(v.domain().len()) {
            let q = RobustnessQuery::new(i, epsilon.clone())?;
            let verdict = v.certify_input(&q)?.verdict;
            queries.push((SmtQuery::Robustness(q), verdict));
        }
        let dir = layout.smt_dir(name);
        let mut entries = Vec::new();
        for (q, verdict) in &queries {
            let file = format!("{}.smt2", q.slug());
            write_bytes(&dir.join(&file), export_smtlib(&v, q)?.as_bytes())?;
            entries.push(SmtEntry {
                file,
                internal_verdict: *verdict,
                expected: expectation(*verdict),
            });
        }
        let manifest_path = dir.join("manifest.json");
        write_json(
            &manifest_path,
            &SmtManifest {
                task: name,
                circuit_sha256: hash,
                epsilon,
                entries,
            },
        )?;
        write_meta(&manifest_path, "export-smt", start.elapsed())?;
        let _ = writeln!(out, "{name}: {} scripts in {}", queries.len(), dir.display());
    }
    Ok(out)
}

fn run_report(layout: &Layout) -> Result<String> {
    let (summary, _): (Summary, String) = read_json(&layout.summary_json(), "verify")?;
    let mut out = String::from("Circuit verification\n\n");
    out.push_str(&summary.render());
    let dir = layout.distill_dir();
    if dir.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().is_some_and(|x| x == "json")
                    && !p.to_string_lossy().ends_with(".meta.json")
            })
            .collect();
        files.sort();
        if !files.is_empty() {
            out.push_str("\nDistillation\n\n");
        }
        for p in files {
            let (r, _): (DistillReport, String) = read_json(&p, "distill")?;
            let task = if r.teacher.starts_with("quote") { TaskName::QuoteClose } else { TaskName::BracketType };
            out.push_str(&render_distill(task, &r));
            for l in &r.links {
                let _ = writeln!(out, "  link {}: {:?} ({})", l.link, l.status, l.detail);
            }
        }
    }
    write_bytes(&layout.report(), out.as_bytes())?;
    Ok(out)
}
