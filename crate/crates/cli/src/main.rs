// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vericircuit::pipeline::{run, Command, RunConfig, TeacherChoice};
use vericircuit::tasks::TaskName;
use vericircuit::ExactScalar;

#[derive(Parser)]
#[command(name = "vericircuit", version, about = "Train, extract and exactly verify task circuits")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the model on both tasks and write the checkpoint.
    Train(Common),
    /// Extract one circuit per task from the checkpoint.
    Extract(Common),
    /// Check the four properties and write per-property results.
    Verify(Common),
    /// Fit surrogates and search program families.
    Distill(Common),
    /// Write SMT-LIB scripts for the verified properties.
    ExportSmt(Common),
    /// Print a summary of the artifacts in the output directory.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// `quote_close`, `bracket_type` or `all`.
    #[arg(long, default_value = "all")]
    task: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Robustness radius as a rational (`1/1000`) or decimal.
    #[arg(long)]
    epsilon: Option<ExactScalar>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Teacher for distill: `auto`, `table` or `circuit`.
    #[arg(long, default_value = "auto")]
    teacher: TeacherChoice,
    /// Inputs per task with a robustness script in export-smt.
    #[arg(long, default_value_t = 8)]
    smt_inputs: usize,
}

fn config(command: Command, c: Common) -> vericircuit::Result<RunConfig> {
    let tasks = if c.task == "all" {
        TaskName::ALL.to_vec()
    } else {
        c.task.split(',').map(TaskName::parse).collect::<vericircuit::Result<_>>()?
    };
    Ok(RunConfig {
        command,
        out: c.out,
        seed: c.seed,
        tasks,
        epsilon: c.epsilon,
        workers: c.workers,
        teacher: c.teacher,
        smt_robustness_inputs: c.smt_inputs,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::Train(c) => (Command::Train, c),
        Cmd::Extract(c) => (Command::Extract, c),
        Cmd::Verify(c) => (Command::Verify, c),
        Cmd::Distill(c) => (Command::Distill, c),
        Cmd::ExportSmt(c) => (Command::ExportSmt, c),
        Cmd::Report(c) => (Command::Report, c),
    };
    match config(command, common).and_then(|cfg| run(&cfg)) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
