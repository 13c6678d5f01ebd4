use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use linbandit::analytics::{
    fit_margin, gaussian_deviation_constant, policy_certificate, ExpansionTrace, MarginFit,
};
use linbandit::harness::{
    export_csv, read_trace, render_plot_svg, run_experiment_detailed, write_trace, RunArgs,
};
use linbandit::{PolicyKind, Result};

#[derive(Debug, Parser)]
#[command(name = "linbandit", version, about = "Linear bandit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write the regret curves.
    Run(RunArgs),
    /// Print regret-bound certificates for the configured policies as JSON.
    Bounds(RunArgs),
    /// Margin and expansion diagnostics on a raw trace file.
    Diagnose {
        /// Trace written by `run --out-trace`.
        trace: PathBuf,
        /// Gap level for the margin fit (default: 10th percentile of gaps).
        #[arg(long)]
        delta: Option<f64>,
    },
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = args.into_config()?;
    let run = run_experiment_detailed(&cfg)?;
    if let Some(path) = &cfg.outputs.csv {
        export_csv(&run.aggregate, path, cfg.outputs.thin)?;
    }
    if let Some(path) = &cfg.outputs.svg {
        render_plot_svg(&run.aggregate, path)?;
    }
    if let Some(path) = &cfg.outputs.trace {
        write_trace(&run, path)?;
    }
    println!("policy\tmean_final\tsd_final");
    for p in &run.aggregate.policies {
        println!("{}\t{:.3}\t{:.3}", p.label, p.final_mean(), p.final_sd());
    }
    Ok(())
}

fn bounds(args: RunArgs) -> Result<()> {
    let cfg = args.into_config()?;
    let params = cfg.radius_params();
    let deviation =
        gaussian_deviation_constant(params.action_bound, params.theta_bound, params.horizon);
    let certs = cfg
        .policies
        .iter()
        .filter(|p| p.kind != PolicyKind::Greedy)
        .map(|p| policy_certificate(p, &params, deviation))
        .collect::<Result<Vec<_>>>()?;
    println!(
        "{}",
        serde_json::to_string_pretty(&certs).expect("certificates serialize")
    );
    Ok(())
}

/// Gaps plus the recorded `(t, opnorm)` pairs of one policy.
#[derive(Default)]
struct PolicyRows {
    gaps: Vec<f64>,
    rounds: Vec<usize>,
    norms: Vec<f64>,
}

#[derive(Serialize)]
struct PolicyDiagnostics {
    policy: String,
    margin: MarginFit,
    expansion_c2: Option<f64>,
}

fn diagnose(trace: PathBuf, delta: Option<f64>) -> Result<()> {
    let rows = read_trace(&trace)?;
    let mut by_policy: BTreeMap<&str, PolicyRows> = BTreeMap::new();
    for row in &rows {
        let entry = by_policy.entry(&row.policy).or_default();
        entry.gaps.push(row.gap);
        if let Some(norm) = row.opnorm {
            entry.rounds.push(row.t);
            entry.norms.push(norm);
        }
    }
    let mut out = Vec::new();
    for (policy, rows) in by_policy {
        out.push(PolicyDiagnostics {
            policy: policy.to_string(),
            margin: fit_margin(&rows.gaps, delta)?,
            expansion_c2: ExpansionTrace::from_series(rows.rounds, rows.norms).c2,
        });
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&out).expect("diagnostics serialize")
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Bounds(args) => bounds(args),
        Command::Diagnose { trace, delta } => diagnose(trace, delta),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
