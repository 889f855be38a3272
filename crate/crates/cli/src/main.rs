//! `regime` command-line driver.
//!
//! Exit status: 0 on success, 1 on a domain or I/O error, 2 on a usage error,
//! 3 when the run finished but an invariant attached to the pipeline failed.

mod args;
mod manifest;
mod run;

use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use args::{Cli, Command};
use manifest::RunManifest;
use run::UsageError;

fn error_kind(e: &regime::Error) -> &'static str {
    match e {
        regime::Error::Parameter(_) => "parameter",
        regime::Error::Domain(_) => "domain",
        regime::Error::Numerical(_) => "numerical",
        regime::Error::Diverged { .. } => "diverged",
        regime::Error::Infeasible(_) => "infeasible",
        regime::Error::Io(_) => "io",
        regime::Error::Csv(_) => "csv",
        regime::Error::Json(_) => "json",
    }
}

fn report(err: &anyhow::Error) -> ExitCode {
    if let Some(u) = err.downcast_ref::<UsageError>() {
        eprintln!("error: {u}");
        return ExitCode::from(2);
    }
    let kind = err.chain().find_map(|c| c.downcast_ref::<regime::Error>()).map_or("io", error_kind);
    let mut causes: Vec<String> = Vec::new();
    for c in err.chain().map(|c| c.to_string()) {
        if !causes.last().is_some_and(|prev| prev.contains(&c)) {
            causes.push(c);
        }
    }
    eprintln!("{}", json!({ "error": kind, "message": causes.join(": ") }));
    ExitCode::from(1)
}

fn resolve(cli: Cli) -> anyhow::Result<Command> {
    match (cli.rerun, cli.command) {
        (Some(path), None) => RunManifest::read(&path)?.to_command(),
        (None, Some(cmd)) => Ok(cmd),
        _ => Err(UsageError("give a subcommand or --rerun MANIFEST".into()).into()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads;
    if let Some(t) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    let outcome = resolve(cli).and_then(|cmd| run::execute(&cmd, threads));
    match outcome {
        Ok(violations) if violations.is_empty() => ExitCode::SUCCESS,
        Ok(violations) => {
            for v in &violations {
                eprintln!("invariant failed: {v}");
            }
            ExitCode::from(3)
        }
        Err(e) => report(&e),
    }
}
