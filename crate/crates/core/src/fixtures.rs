//! Golden trajectories produced by the matrix-form recursion.
//!
//! A fixture file looks like
//!
//! ```text
//! # config_hash=<sha256 of the canonical config text>
//! # config: algorithm = odkla
//! # config: ...
//! checkpoint,matrix,agent,col,value
//! 10,theta,0,0,-0.0123...
//! ```
//!
//! `checkpoint` is the number of completed rounds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, SyntheticSpec};
use crate::engine::{Algorithm, EtaSchedule};
use crate::error::{Error, Result};
use crate::experiment::Experiment;
use crate::reference::{MatrixReference, MatrixState, Variant};

pub const GOLDEN_CHECKPOINTS: [usize; 3] = [1, 10, 100];

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub checkpoint: usize,
    pub theta: Array2<f64>,
    pub gamma: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenTrace {
    pub config: RunConfig,
    pub config_hash: String,
    pub snapshots: Vec<Snapshot>,
}

pub fn config_hash(config: &RunConfig) -> String {
    let digest = Sha256::digest(config.to_text().as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Small N=5, L=4 configuration used for golden traces.
pub fn golden_config(algorithm: Algorithm, seed: u64) -> RunConfig {
    let mut c = RunConfig {
        algorithm,
        n_agents: 5,
        seed,
        t_max: Some(*GOLDEN_CHECKPOINTS.last().unwrap()),
        ..RunConfig::default()
    };
    c.dataset = crate::config::DatasetSource::Synthetic(SyntheticSpec {
        samples: 600,
        dim: 3,
        sigma: 0.5,
        noise_std: 0.1,
        seed,
    });
    c.graph.edge_prob = 0.6;
    c.graph.seed = seed;
    c.rf.l_count = 4;
    c.rf.seed = seed;
    c.loss.lambda = 1e-3;
    c.hyper.rho = 0.3;
    c.hyper.eta = EtaSchedule::Constant(1.5);
    if algorithm == Algorithm::QcOdkla {
        c.censor.enabled = true;
        c.censor.alpha = 0.5;
        c.censor.beta = 0.95;
        c.quantizer.enabled = true;
        c.quantizer.bits = 8;
        c.quantizer.range = 2.0;
    }
    c
}

/// Runs the matrix-form oracle and keeps the checkpoint snapshots.
pub fn generate_golden(config: &RunConfig) -> Result<GoldenTrace> {
    let variant = match config.algorithm {
        Algorithm::Odkla => Variant::Odkla,
        Algorithm::QcOdkla => Variant::QcOdkla(config.hyper_params()?.comm()),
        other => {
            return Err(Error::config(
                "algorithm",
                format!("golden traces exist for odkla and qc-odkla only, not {other}"),
            ))
        }
    };
    let exp = Experiment::prepare(config)?;
    let reference = MatrixReference::new(&exp.topology, exp.hyper.rho, exp.hyper.eta, exp.hyper.loss, variant);
    let mut state = MatrixState::zeros(exp.topology.n(), exp.basis.feature_len());
    let mut snapshots = Vec::new();
    for (k, samples) in exp.rounds.iter().enumerate() {
        reference.step(&mut state, samples, k + 1)?;
        if GOLDEN_CHECKPOINTS.contains(&(k + 1)) {
            snapshots.push(Snapshot {
                checkpoint: k + 1,
                theta: state.theta.clone(),
                gamma: state.gamma.clone(),
            });
        }
    }
    Ok(GoldenTrace {
        config: config.clone(),
        config_hash: config_hash(config),
        snapshots,
    })
}

impl GoldenTrace {
    pub fn to_text(&self) -> String {
        let mut out = format!("# config_hash={}\n", self.config_hash);
        for line in self.config.to_text().lines() {
            out.push_str("# config: ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str("checkpoint,matrix,agent,col,value\n");
        for s in &self.snapshots {
            for (name, m) in [("theta", &s.theta), ("gamma", &s.gamma)] {
                for ((i, j), v) in m.indexed_iter() {
                    let _ = writeln!(out, "{},{name},{i},{j},{v}", s.checkpoint);
                }
            }
        }
        out
    }

    /// Parses a fixture and checks its stored hash against its embedded config.
    pub fn parse(text: &str) -> Result<Self> {
        let mut stored_hash = None;
        let mut config_text = String::new();
        let mut rows = Vec::new();
        for line in text.lines() {
            if let Some(h) = line.strip_prefix("# config_hash=") {
                stored_hash = Some(h.trim().to_string());
            } else if let Some(c) = line.strip_prefix("# config: ") {
                config_text.push_str(c);
                config_text.push('\n');
            } else if line.starts_with("checkpoint,") || line.trim().is_empty() {
                continue;
            } else {
                rows.push(line);
            }
        }
        let stored = stored_hash.ok_or_else(|| Error::Parse("fixture lacks a config_hash line".into()))?;
        let config = RunConfig::parse(&config_text)?;
        let current = config_hash(&config);
        if current != stored {
            return Err(Error::HashMismatch { stored, current });
        }
        let n = config.n_agents;
        let dim = 2 * config.rf.l_count;
        let mut snapshots: Vec<Snapshot> = Vec::new();
        for row in rows {
            let f: Vec<&str> = row.split(',').collect();
            let bad = || Error::Parse(format!("bad fixture row {row:?}"));
            if f.len() != 5 {
                return Err(bad());
            }
            let cp: usize = f[0].parse().map_err(|_| bad())?;
            let i: usize = f[2].parse().map_err(|_| bad())?;
            let j: usize = f[3].parse().map_err(|_| bad())?;
            let v: f64 = f[4].parse().map_err(|_| bad())?;
            if i >= n || j >= dim {
                return Err(bad());
            }
            if snapshots.last().is_none_or(|s| s.checkpoint != cp) {
                snapshots.push(Snapshot {
                    checkpoint: cp,
                    theta: Array2::zeros((n, dim)),
                    gamma: Array2::zeros((n, dim)),
                });
            }
            let snap = snapshots.last_mut().expect("pushed above");
            match f[1] {
                "theta" => snap.theta[[i, j]] = v,
                "gamma" => snap.gamma[[i, j]] = v,
                _ => return Err(bad()),
            }
        }
        Ok(GoldenTrace {
            config,
            config_hash: stored,
            snapshots,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// Writes `golden_<algorithm>_seed<k>.csv` for each seed and both
/// linearized algorithms. Returns the written paths.
pub fn regenerate_goldens(dir: &Path, seeds: &[u64]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for &seed in seeds {
        for algorithm in [Algorithm::Odkla, Algorithm::QcOdkla] {
            let trace = generate_golden(&golden_config(algorithm, seed))?;
            let path = dir.join(format!("golden_{}_seed{seed}.csv", algorithm.as_str().replace('-', "_")));
            std::fs::write(&path, trace.to_text()).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}
