mod commands;
mod config;

use clap::builder::PossibleValuesParser;
use clap::Parser;
use commands::{Report, Status, COMMANDS};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Rotation numbers, domination and perturbations of linear cocycles.
///
/// Exit status: 0 success, 2 inconclusive or nothing found, 1 error.
#[derive(Parser, Debug)]
#[command(name = "cocyrot", version)]
struct Cli {
    #[arg(value_parser = PossibleValuesParser::new(COMMANDS))]
    command: String,
    /// JSON configuration document for the command
    #[arg(long)]
    config: PathBuf,
    /// directory for <command>.json and <command>.csv; JSON goes to stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// overrides the configuration's seed
    #[arg(long)]
    seed: Option<u64>,
    /// worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

fn error_kind(e: &cocyrot::Error) -> &'static str {
    use cocyrot::Error::*;
    match e {
        UnsupportedBase(_) => "unsupported-base",
        Invalid { .. } => "invalid",
        DetFloor { .. } => "det-floor",
        NotSplittable { .. } => "not-splittable",
        InconclusiveSplitting { .. } => "inconclusive-splitting",
        ContinuationBroken { .. } => "continuation-broken",
        Orientation(_) => "orientation",
        RefinementRequired(_) => "refinement-required",
        DetMismatch { .. } => "det-mismatch",
        SpecTooCoarse(_) => "spec-too-coarse",
        PatternFailure { .. } => "pattern-failure",
        BudgetExhausted { .. } => "budget-exhausted",
        NotDominated { .. } => "not-dominated",
        NotUnimodular(_) => "not-unimodular",
        Io(_) => "io",
    }
}

fn diagnostic(e: &anyhow::Error) -> Value {
    if let Some(c) = e.downcast_ref::<config::ConfigError>() {
        return json!({ "kind": "config", "field": c.field, "message": c.message });
    }
    if let Some(c) = e.downcast_ref::<cocyrot::Error>() {
        let field = match c {
            cocyrot::Error::Invalid { field, .. } => Value::String(field.clone()),
            _ => Value::Null,
        };
        return json!({ "kind": error_kind(c), "field": field, "message": c.to_string() });
    }
    json!({ "kind": "io", "field": null, "message": format!("{e:#}") })
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn write_artifacts(dir: &Path, command: &str, doc: &Value, report: &Report) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{command}.json")), pretty(doc))?;
    std::fs::write(dir.join(format!("{command}.csv")), &report.csv)?;
    for (ext, bytes) in &report.extra {
        std::fs::write(dir.join(format!("{command}.{ext}")), bytes)?;
    }
    Ok(())
}

fn execute(cli: &Cli) -> anyhow::Result<(Value, Report)> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| cocyrot::Error::Io(format!("{}: {e}", cli.config.display())))?;
    let (report, seed) = commands::run(&cli.command, &text, cli.seed)?;
    let doc = json!({ "command": cli.command, "seed": seed, "status": report.status, "result": report.result });
    Ok((doc, report))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let doc = json!({ "status": "error", "error": { "kind": "usage", "field": null, "message": e.to_string() } });
            eprint!("{}", pretty(&doc));
            return ExitCode::from(1);
        }
    };
    let outcome = execute(&cli).and_then(|(doc, report)| {
        match &cli.out {
            Some(dir) => write_artifacts(dir, &cli.command, &doc, &report)?,
            None => print!("{}", pretty(&doc)),
        }
        Ok(report.status)
    });
    match outcome {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Inconclusive) => ExitCode::from(2),
        Err(e) => {
            let doc = json!({ "command": cli.command, "status": "error", "error": diagnostic(&e) });
            eprint!("{}", pretty(&doc));
            if let Some(dir) = &cli.out {
                let _ = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(dir.join("error.json"), pretty(&doc)));
            }
            ExitCode::from(1)
        }
    }
}
