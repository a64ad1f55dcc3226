// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vericircuit"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], out: &Path) -> String {
    let o = bin(args, out);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

/// Every primary artifact (sidecars excluded) keyed by relative path.
fn artifacts(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if !p.to_string_lossy().ends_with(".meta.json") {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn missing_upstream_artifacts_name_the_prior_command() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["extract"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("run `train` first"));

    let o = bin(&["train"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--seed"));

    ok(&["train", "--seed", "0"], dir.path());
    let o = bin(&["verify", "--task", "bracket_type"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("run `extract` first"));

    let o = bin(&["report"], dir.path());
    assert!(String::from_utf8_lossy(&o.stderr).contains("run `verify` first"));

    let o = bin(&["verify", "--epsilon=-1/2"], dir.path());
    assert!(!o.status.success());
}

#[test]
fn pipeline_is_byte_stable_and_verifies_the_bracket_task() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        ok(&["train", "--seed", "0"], dir);
        ok(&["extract", "--task", "bracket_type"], dir);
        let table = ok(&["verify", "--task", "bracket_type", "--workers", "1"], dir);
        assert!(table.contains("bracket_type  128"), "{table}");
        assert_eq!(table.matches("verified").count(), 4, "{table}");
        ok(&["distill", "--seed", "0", "--task", "bracket_type"], dir);
    }
    assert!(a.path().join("checkpoint.meta.json").exists());
    let (x, y) = (artifacts(a.path()), artifacts(b.path()));
    assert_eq!(x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>());
    for (k, v) in &x {
        assert!(v == &y[k], "{} differs between runs", k.display());
    }

    let summary: serde_json::Value = serde_json::from_slice(&x[Path::new("results/summary.json")]).unwrap();
    let circuit = &x[Path::new("circuits/bracket_type.json")];
    let circuit_json: serde_json::Value = serde_json::from_slice(circuit).unwrap();
    let checkpoint_hash = vericircuit::artifacts::sha256_hex(&x[Path::new("checkpoint.json")]);
    assert_eq!(circuit_json["checkpoint_sha256"], checkpoint_hash.as_str());
    assert_eq!(
        summary["rows"][0]["circuit_sha256"],
        vericircuit::artifacts::sha256_hex(circuit).as_str()
    );

    let report = ok(&["report"], a.path());
    assert!(report.contains("opener_counter: verified"), "{report}");
}

#[test]
fn quote_distillation_prints_the_counterexample_block() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&["distill", "--seed", "0", "--task", "quote_close"], dir.path());
    assert!(text.contains("refuted for restricted template"));
    assert!(text.contains("[QUOTE] counterexample (abstract domain): ["));
    assert!(text.contains("[QUOTE] rendered: ["));
    assert!(text.contains("first_quote_aware: verified"));
    assert!(dir.path().join("distill/quote_close.recent_quote.json").exists());
}
