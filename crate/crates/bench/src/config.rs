//! Experiment configuration from flat `key = value` text.
//!
//! Later assignments override earlier ones, so command-line flags are applied
//! by appending them after the file's entries.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rivmpl::SolverConfig;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value {value:?} for `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Ssc,
    Gpca,
    Psd,
}

impl FromStr for ProblemKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ssc" => Ok(Self::Ssc),
            "gpca" => Ok(Self::Gpca),
            "psd" => Ok(Self::Psd),
            _ => Err("expected ssc, gpca or psd".into()),
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ssc => "ssc",
            Self::Gpca => "gpca",
            Self::Psd => "psd",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Synthetic data; trial `t` uses `seed + t`.
    Generated { seed: u64 },
    /// A matrix file: the SSC similarity/Laplacian matrix, the gpca data
    /// matrix `B`, or the symplectic snapshot matrix `A`.
    File { path: PathBuf, seed: u64 },
}

impl DataSource {
    pub fn seed(&self) -> u64 {
        match self {
            Self::Generated { seed } | Self::File { seed, .. } => *seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    /// Points (ssc), features (gpca) or half the row count (psd).
    pub n: usize,
    pub r: usize,
    /// Samples (gpca) or half the column count (psd).
    pub m: usize,
    /// Ground-truth classes for synthetic ssc data.
    pub clusters: usize,
    pub lambda: f64,
    pub rho: f64,
    pub data: DataSource,
    pub solver: SolverConfig,
    pub trials: usize,
    pub out: PathBuf,
    pub kmeans_restarts: usize,
}

impl ExperimentConfig {
    /// Problem-specific defaults.
    pub fn defaults(problem: ProblemKind) -> Self {
        let (n, r, m, clusters, lambda, rho) = match problem {
            ProblemKind::Ssc => (100, 3, 0, 3, 0.01, 0.0),
            ProblemKind::Gpca => (100, 3, 20, 0, 2.0, 0.5),
            ProblemKind::Psd => (10, 2, 40, 0, 0.1, 0.0),
        };
        Self {
            problem,
            n,
            r,
            m,
            clusters,
            lambda,
            rho,
            data: DataSource::Generated { seed: 0 },
            solver: SolverConfig::default(),
            trials: 1,
            out: PathBuf::from("out"),
            kmeans_restarts: 10,
        }
    }

    /// Builds a config from ordered `(key, value)` pairs. `problem` must be
    /// among them; everything else defaults.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, ConfigError> {
        let problem = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "problem")
            .ok_or(ConfigError::Missing("problem"))?;
        let mut cfg = Self::defaults(parse_value(&problem.0, &problem.1)?);
        let mut seed = 0u64;
        let mut data_path: Option<PathBuf> = None;
        let mut clusters_set = false;
        for (key, value) in pairs {
            let v = value.as_str();
            let s = &mut cfg.solver;
            match key.as_str() {
                "problem" => {}
                "n" => cfg.n = parse_value(key, v)?,
                "r" => cfg.r = parse_value(key, v)?,
                "m" => cfg.m = parse_value(key, v)?,
                "clusters" => {
                    cfg.clusters = parse_value(key, v)?;
                    clusters_set = true;
                }
                "lambda" => cfg.lambda = parse_value(key, v)?,
                "rho" => cfg.rho = parse_value(key, v)?,
                "seed" => seed = parse_value(key, v)?,
                "data" => data_path = Some(PathBuf::from(v)),
                "trials" => cfg.trials = parse_value(key, v)?,
                "out" => cfg.out = PathBuf::from(v),
                "kmeans_restarts" => cfg.kmeans_restarts = parse_value(key, v)?,
                "inner" => s.inner = parse_value(key, v)?,
                "eps_star" => s.eps_star = parse_value(key, v)?,
                "max_outer" => s.max_outer = parse_value(key, v)?,
                "max_inner_j" => s.max_inner_j = parse_value(key, v)?,
                "inner_budget" => s.inner_budget = Some(parse_value(key, v)?),
                "alpha00" => s.alpha00 = Some(parse_value(key, v)?),
                "alpha_min" => s.alpha_min = parse_value(key, v)?,
                "alpha_max" => s.alpha_max = parse_value(key, v)?,
                "alpha_bar" => s.alpha_bar = parse_value(key, v)?,
                "sigma" => s.sigma = parse_value(key, v)?,
                "gamma_bar" => s.gamma_bar = parse_value(key, v)?,
                "mu_max" => s.mu_max = parse_value(key, v)?,
                "beta0" => s.beta0 = parse_value(key, v)?,
                "stationarity_tol" => s.stationarity_tol = Some(parse_value(key, v)?),
                "deterministic" => s.timing = !parse_value::<bool>(key, v)?,
                _ => return Err(ConfigError::UnknownKey(key.clone())),
            }
        }
        if cfg.problem == ProblemKind::Ssc && !clusters_set {
            cfg.clusters = cfg.r;
        }
        cfg.data = match data_path {
            None => DataSource::Generated { seed },
            Some(path) => DataSource::File { path, seed },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.r == 0 {
            return bad("r must be positive".into());
        }
        if self.kmeans_restarts == 0 {
            return bad("kmeans_restarts must be positive".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a nonnegative number".into());
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return bad("rho must be a nonnegative number".into());
        }
        match &self.data {
            DataSource::File { path, .. } => {
                if !path.is_file() {
                    return bad(format!("data file {} does not exist", path.display()));
                }
            }
            DataSource::Generated { .. } => {
                if self.n == 0 {
                    return bad("n must be positive".into());
                }
                if self.r > self.n {
                    return bad(format!("r = {} exceeds n = {}", self.r, self.n));
                }
                match self.problem {
                    ProblemKind::Ssc => {
                        if self.clusters == 0 || self.clusters > self.n {
                            return bad("need 1 <= clusters <= n".into());
                        }
                        if self.lambda == 0.0 {
                            return bad("ssc needs lambda > 0".into());
                        }
                    }
                    ProblemKind::Gpca | ProblemKind::Psd => {
                        if self.m < 2 {
                            return bad("m must be at least 2".into());
                        }
                    }
                }
            }
        }
        self.solver
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: e.to_string(),
        })
}

/// Splits config text into `(key, value)` pairs; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        }
        out.push((k.replace('-', "_"), v.to_string()));
    }
    Ok(out)
}

pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_pairs(&text)
}
