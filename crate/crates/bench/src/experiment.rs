//! Runs trials and writes per-trial traces and a summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use rivmpl::problem::{
    gen_data_pca, gen_data_psd_type1, gen_data_ssc, make_group_pca, make_psd, make_ssc,
    off_diagonal_mask, read_matrix, CompositeProblem, ProblemError,
};
use rivmpl::solver::{run, IterateTrace, RunResult, SolverError};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, DataSource, ExperimentConfig, ProblemKind};
use crate::metrics::{self, MetricsError};

pub const TRACE_HEADER: &str = "iter,obj,vnorm,alpha,jk,inner_iters,beta,mu,feas_err,time_ms";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trial {trial}: {source}")]
    Problem {
        trial: usize,
        #[source]
        source: ProblemError,
    },
    #[error("trial {trial}: {source}")]
    Solver {
        trial: usize,
        #[source]
        source: SolverError,
    },
    #[error("trial {trial}: {source}")]
    Metrics {
        trial: usize,
        #[source]
        source: MetricsError,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    Pool(String),
}

type Result<T> = std::result::Result<T, ExperimentError>;

/// Metrics of one run; in the summary, the same fields hold means over trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub objective: f64,
    pub time_s: f64,
    pub iterations: f64,
    /// Mean number of subproblems solved per outer step.
    pub nsub: f64,
    /// Mean dual iterations per subproblem.
    pub inner_mean: f64,
    pub feas_err: f64,
    pub riem_residual: f64,
    pub lin_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row_sparsity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infeasibility: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reconstruction_error: Option<f64>,
}

impl MetricsRecord {
    fn mean(records: &[MetricsRecord]) -> MetricsRecord {
        let n = records.len() as f64;
        let avg = |f: &dyn Fn(&MetricsRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        let avg_opt = |f: &dyn Fn(&MetricsRecord) -> Option<f64>| {
            let vals: Option<Vec<f64>> = records.iter().map(f).collect();
            vals.map(|v| v.iter().sum::<f64>() / n)
        };
        MetricsRecord {
            objective: avg(&|r| r.objective),
            time_s: avg(&|r| r.time_s),
            iterations: avg(&|r| r.iterations),
            nsub: avg(&|r| r.nsub),
            inner_mean: avg(&|r| r.inner_mean),
            feas_err: avg(&|r| r.feas_err),
            riem_residual: avg(&|r| r.riem_residual),
            lin_residual: avg(&|r| r.lin_residual),
            sparsity: avg_opt(&|r| r.sparsity),
            row_sparsity: avg_opt(&|r| r.row_sparsity),
            infeasibility: avg_opt(&|r| r.infeasibility),
            nmi: avg_opt(&|r| r.nmi),
            reconstruction_error: avg_opt(&|r| r.reconstruction_error),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub status: String,
    pub trace_file: String,
    pub metrics: MetricsRecord,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub problem: String,
    pub n: usize,
    pub r: usize,
    pub m: usize,
    pub lambda: f64,
    pub rho: f64,
    pub inner: String,
    pub eps_star: f64,
    /// Norm used for the gpca `infeasibility` metric.
    pub infeasibility_norm: &'static str,
    pub mean: MetricsRecord,
    pub trials: Vec<TrialRecord>,
}

enum Instance {
    Ssc {
        problem: rivmpl::problem::SparseSpectralClustering,
        labels: Option<Vec<usize>>,
        clusters: usize,
    },
    Gpca(rivmpl::problem::GroupSparsePca),
    Psd(rivmpl::problem::SymplecticDecomposition),
}

impl Instance {
    fn problem(&self) -> &dyn CompositeProblem {
        match self {
            Self::Ssc { problem, .. } => problem,
            Self::Gpca(p) => p,
            Self::Psd(p) => p,
        }
    }
}

fn build_instance(cfg: &ExperimentConfig, trial: usize, seed: u64) -> Result<Instance> {
    let wrap = |source| ExperimentError::Problem { trial, source };
    let file = match &cfg.data {
        DataSource::File { path, .. } => Some(read_matrix(path).map_err(wrap)?),
        DataSource::Generated { .. } => None,
    };
    Ok(match cfg.problem {
        ProblemKind::Ssc => {
            let (a, labels) = match file {
                Some(a) => (a, None),
                None => {
                    let d = gen_data_ssc(cfg.n, cfg.clusters, seed).map_err(wrap)?;
                    (d.laplacian, Some(d.labels))
                }
            };
            Instance::Ssc {
                problem: make_ssc(a, cfg.lambda, cfg.r).map_err(wrap)?,
                labels,
                clusters: cfg.clusters,
            }
        }
        ProblemKind::Gpca => {
            let b = match file {
                Some(b) => b,
                None => gen_data_pca(cfg.m, cfg.n, seed).map_err(wrap)?,
            };
            Instance::Gpca(make_group_pca(&b, cfg.lambda, cfg.rho, cfg.r).map_err(wrap)?)
        }
        ProblemKind::Psd => {
            let a = file.unwrap_or_else(|| gen_data_psd_type1(cfg.m, cfg.n, seed));
            Instance::Psd(make_psd(a, cfg.lambda, cfg.r).map_err(wrap)?)
        }
    })
}

fn compute_metrics(
    cfg: &ExperimentConfig,
    inst: &Instance,
    res: &RunResult,
    time_s: f64,
    trial: usize,
    seed: u64,
) -> Result<MetricsRecord> {
    let subproblems: usize = res.trace.iter().map(|t| t.jk + 1).sum();
    let inner: usize = res.trace.iter().map(|t| t.inner_iters).sum();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mut rec = MetricsRecord {
        objective: res.objective,
        time_s,
        iterations: res.trace.len() as f64,
        nsub: ratio(subproblems, res.trace.len()),
        inner_mean: ratio(inner, subproblems),
        feas_err: inst
            .problem()
            .manifold()
            .feasibility_error(&res.x)
            .unwrap_or(f64::NAN),
        riem_residual: res.certificate.riem_residual,
        lin_residual: res.certificate.lin_residual,
        sparsity: None,
        row_sparsity: None,
        infeasibility: None,
        nmi: None,
        reconstruction_error: None,
    };
    match inst {
        Instance::Ssc {
            labels, clusters, ..
        } => {
            rec.sparsity = Some(metrics::sparsity_z(&res.x));
            if let Some(truth) = labels {
                let z = res.x.dot(&res.x.t());
                let found = metrics::kmeans(&z, *clusters, cfg.kmeans_restarts, seed)
                    .map_err(|source| ExperimentError::Metrics { trial, source })?;
                rec.nmi = Some(
                    metrics::nmi(truth, &found)
                        .map_err(|source| ExperimentError::Metrics { trial, source })?,
                );
            }
        }
        Instance::Gpca(p) => {
            rec.row_sparsity = Some(metrics::row_sparsity(&res.x));
            rec.infeasibility = Some(metrics::infeasibility(
                &res.x,
                p.covariance(),
                &off_diagonal_mask(res.x.ncols()),
            ));
        }
        Instance::Psd(p) => {
            rec.reconstruction_error = Some(p.reconstruction_error(&res.x));
        }
    }
    Ok(rec)
}

/// Writes the trace with one row per accepted outer step, floats in
/// 17-significant-digit scientific notation.
pub fn write_trace(path: &Path, trace: &[IterateTrace]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{TRACE_HEADER}")?;
    for t in trace {
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            t.k,
            t.objective,
            t.v_norm,
            t.alpha,
            t.jk,
            t.inner_iters,
            t.beta,
            t.mu,
            t.feas_err,
            t.time_ms
        )?;
    }
    w.flush()
}

fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialRecord> {
    let seed = cfg.data.seed().wrapping_add(trial as u64);
    let inst = build_instance(cfg, trial, seed)?;
    let problem = inst.problem();
    let x0 = problem.manifold().random_point(seed);
    let start = Instant::now();
    let res = run(problem, &x0, &cfg.solver)
        .map_err(|source| ExperimentError::Solver { trial, source })?;
    let time_s = if cfg.solver.timing {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    };
    let trace_file = format!("trace_{trial}.csv");
    let path = cfg.out.join(&trace_file);
    write_trace(&path, &res.trace).map_err(|source| ExperimentError::Io { path, source })?;
    let metrics = compute_metrics(cfg, &inst, &res, time_s, trial, seed)?;
    Ok(TrialRecord {
        trial,
        seed,
        status: res.status.to_string(),
        trace_file,
        metrics,
    })
}

/// Runs every trial on up to `threads` threads, writing `trace_<t>.csv` as
/// each trial finishes and `summary.json` once all are done.
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<Summary> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).map_err(|source| ExperimentError::Io {
        path: cfg.out.clone(),
        source,
    })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let records: Vec<TrialRecord> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, t))
            .collect::<Result<Vec<_>>>()
    })?;
    let metrics: Vec<MetricsRecord> = records.iter().map(|r| r.metrics.clone()).collect();
    let summary = Summary {
        problem: cfg.problem.to_string(),
        n: cfg.n,
        r: cfg.r,
        m: cfg.m,
        lambda: cfg.lambda,
        rho: cfg.rho,
        inner: cfg.solver.inner.to_string(),
        eps_star: cfg.solver.eps_star,
        infeasibility_norm: "entrywise_l1",
        mean: MetricsRecord::mean(&metrics),
        trials: records,
    };
    let path = cfg.out.join(SUMMARY_FILE);
    let io = |source| ExperimentError::Io {
        path: path.clone(),
        source,
    };
    let mut w = BufWriter::new(File::create(&path).map_err(io)?);
    serde_json::to_writer_pretty(&mut w, &summary).map_err(|e| io(e.into()))?;
    writeln!(w).map_err(io)?;
    w.flush().map_err(io)?;
    Ok(summary)
}
