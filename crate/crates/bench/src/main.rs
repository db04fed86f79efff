use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rivmpl_bench::config::{parse_pairs, read_pairs};
use rivmpl_bench::{run_experiment, ExperimentConfig};

/// Runs RiVMPL experiments and writes traces and a JSON summary.
#[derive(Parser, Debug)]
#[command(name = "rivmpl-bench", version)]
struct Cli {
    /// ssc, gpca or psd
    #[arg(long)]
    problem: Option<String>,
    /// Flat `key = value` config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// sncg or apg
    #[arg(long)]
    inner: Option<String>,
    #[arg(long)]
    eps_star: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    /// Matrix file (.csv or binary) replacing the synthetic data.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Zero all timings so repeated runs give identical files.
    #[arg(long)]
    deterministic: bool,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn collect_pairs(cli: &Cli) -> Result<Vec<(String, String)>, String> {
    let mut pairs = match &cli.config {
        Some(p) => read_pairs(p).map_err(|e| e.to_string())?,
        None => Vec::new(),
    };
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            pairs.push((k.to_string(), v));
        }
    };
    push("problem", cli.problem.clone());
    push("seed", cli.seed.map(|v| v.to_string()));
    push("out", cli.out.as_ref().map(|p| p.display().to_string()));
    push("trials", cli.trials.map(|v| v.to_string()));
    push("inner", cli.inner.clone());
    push("eps_star", cli.eps_star.map(|v| v.to_string()));
    push("max_outer", cli.max_outer.map(|v| v.to_string()));
    push("data", cli.data.as_ref().map(|p| p.display().to_string()));
    if cli.deterministic {
        push("deterministic", Some("true".into()));
    }
    for s in &cli.set {
        pairs.extend(parse_pairs(s).map_err(|e| format!("--set {s}: {e}"))?);
    }
    Ok(pairs)
}

fn threads() -> Result<usize, String> {
    match std::env::var("RIVMPL_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(format!(
                "RIVMPL_THREADS must be a positive integer, got {v:?}"
            )),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = collect_pairs(&cli)
        .and_then(|p| ExperimentConfig::from_pairs(&p).map_err(|e| e.to_string()));
    let (cfg, threads) = match (cfg, threads()) {
        (Ok(c), Ok(t)) => (c, t),
        (Err(e), _) | (_, Err(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_experiment(&cfg, threads) {
        Ok(s) => {
            println!(
                "{}: {} trial(s), mean objective {:.10e}, mean iterations {:.1}; wrote {}",
                s.problem,
                s.trials.len(),
                s.mean.objective,
                s.mean.iterations,
                cfg.out.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
