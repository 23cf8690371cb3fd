//! End-to-end orchestration: data -> streams -> simulation -> metrics -> CSV.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use ndarray::Array1;

use crate::config::{DatasetSource, RunConfig};
use crate::data::{load_csv, normalize_minmax, shuffle_partition, synthesize, AgentStreams, Dataset};
use crate::engine::{Algorithm, HyperParams, Sample, Simulation};
use crate::error::{Error, Result};
use crate::features::RfBasis;
use crate::graph::{random_connected_graph, Topology};
use crate::losses::LossKind;
use crate::metrics::{centralized_oracle, error_bound, MetricsAccumulator, MetricsRecord};

/// Bit-exact header of per-round result files.
pub const RESULTS_HEADER: &str =
    "t,mse_inst,mse_running,regret_cum,triggers_cum,bits_cum,clip_events_cum,error_frob,error_bound,step_time_us";

/// Header of the long-format comparison file.
pub const COMPARE_HEADER: &str = "algorithm,t,mse_running,triggers_cum,bits_cum,regret_cum,step_time";

/// Everything a run needs, built from a [`RunConfig`] before any round runs.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub topology: Topology,
    pub basis: RfBasis,
    pub streams: AgentStreams,
    pub hyper: HyperParams,
    /// `rounds[t][i]`: agent `i`'s mapped sample at round `t + 1`.
    pub rounds: Vec<Vec<Sample>>,
}

impl Experiment {
    pub fn prepare(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let dataset = load_dataset(config)?;
        let dataset = if config.normalize {
            normalize_minmax(&dataset)
        } else {
            dataset
        };
        let mut streams = shuffle_partition(&dataset, config.n_agents, config.seed)?;
        if let Some(t_max) = config.t_max {
            streams = streams.truncated(t_max);
        }
        let topology = random_connected_graph(config.n_agents, config.graph.edge_prob, config.graph.seed)?;
        let basis = RfBasis::sample(config.rf.l_count, dataset.dim(), config.rf.sigma, config.rf.seed)?;
        let rounds = map_rounds(&streams, &basis)?;
        Ok(Experiment {
            topology,
            basis,
            streams,
            hyper: config.hyper_params()?,
            rounds,
        })
    }

    pub fn horizon(&self) -> usize {
        self.rounds.len()
    }
}

fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    match &config.dataset {
        DatasetSource::Synthetic(s) => synthesize(s.samples, s.dim, s.sigma, s.noise_std, s.seed),
        DatasetSource::Csv {
            path,
            label,
            delimiter,
        } => {
            let loaded = load_csv(path, label, *delimiter as u8)?;
            if loaded.dropped > 0 {
                log::warn!("{} malformed rows dropped from {}", loaded.dropped, path.display());
            }
            Ok(loaded.dataset)
        }
    }
}

/// Maps every stream sample into RF space, grouped by round.
pub fn map_rounds(streams: &AgentStreams, basis: &RfBasis) -> Result<Vec<Vec<Sample>>> {
    (0..streams.horizon())
        .map(|t| {
            streams
                .streams
                .iter()
                .map(|s| {
                    let (x, y) = s.sample(t);
                    Ok(Sample { z: basis.map(x)?, y })
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub rounds: usize,
    pub final_mse_running: f64,
    pub regret: f64,
    pub triggers: u64,
    pub bits: u64,
    pub clip_events: u64,
    pub clip_rounds: usize,
    pub bound_violations: usize,
    pub error_bound: f64,
    pub max_grad_norm: f64,
    pub max_theta_norm: f64,
    pub mean_step_time_us: f64,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "algorithm          {}", self.algorithm)?;
        writeln!(f, "rounds             {}", self.rounds)?;
        writeln!(f, "final mse          {:.6}", self.final_mse_running)?;
        writeln!(f, "regret R(T)        {:.6}", self.regret)?;
        writeln!(f, "triggers           {}", self.triggers)?;
        writeln!(f, "bits               {}", self.bits)?;
        writeln!(f, "clip events        {} ({} rounds)", self.clip_events, self.clip_rounds)?;
        writeln!(f, "error bound        {:.6} ({} violations)", self.error_bound, self.bound_violations)?;
        writeln!(f, "max |grad|         {:.6}", self.max_grad_norm)?;
        writeln!(f, "max |theta|        {:.6}", self.max_theta_norm)?;
        write!(f, "mean step time     {:.3} us", self.mean_step_time_us)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub summary: Summary,
    pub theta_star: Option<Array1<f64>>,
    pub simulation: Simulation,
}

/// Runs a prepared experiment without touching the filesystem.
pub fn simulate(config: &RunConfig, experiment: &Experiment) -> Result<RunOutput> {
    let theta_star = match config.loss.kind {
        LossKind::Squared => Some(centralized_oracle(
            &experiment.streams,
            &experiment.basis,
            &experiment.hyper.loss,
        )?),
        _ => None,
    };
    let hyper = experiment.hyper;
    let bound = match config.algorithm {
        Algorithm::QcOdkla => error_bound(
            experiment.topology.n(),
            experiment.basis.l_count(),
            &hyper.censor,
            hyper.quantizer.as_ref(),
        ),
        _ => 0.0,
    };
    let mut sim = Simulation::new(
        config.algorithm,
        experiment.topology.clone(),
        hyper,
        experiment.basis.feature_len(),
    )?;
    let mut acc = MetricsAccumulator::new(hyper.loss, theta_star.clone(), bound);
    let mut records = Vec::with_capacity(experiment.horizon());
    let mut total_us = 0.0;
    for samples in &experiment.rounds {
        let start = Instant::now();
        let report = sim.step(samples)?;
        let us = start.elapsed().as_secs_f64() * 1e6;
        total_us += us;
        records.push(acc.record(&report, samples, if config.timing { us } else { 0.0 }));
    }
    let last = records.last();
    let counters = acc.counters();
    let summary = Summary {
        algorithm: config.algorithm,
        rounds: records.len(),
        final_mse_running: last.map_or(f64::NAN, |r| r.mse_running),
        regret: last.map_or(f64::NAN, |r| r.regret_cum),
        triggers: counters.triggers,
        bits: counters.bits,
        clip_events: counters.clip_events,
        clip_rounds: acc.clip_rounds(),
        bound_violations: acc.bound_violations(),
        error_bound: bound,
        max_grad_norm: last.map_or(0.0, |r| r.max_grad_norm),
        max_theta_norm: last.map_or(0.0, |r| r.max_theta_norm),
        mean_step_time_us: total_us / records.len().max(1) as f64,
    };
    Ok(RunOutput {
        records,
        summary,
        theta_star,
        simulation: sim,
    })
}

/// Prepares, simulates, and writes the per-round CSV if `config.output` is set.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let experiment = Experiment::prepare(config)?;
    let out = simulate(config, &experiment)?;
    if let Some(path) = &config.output {
        write_results(path, &out.records)?;
    }
    Ok(out)
}

pub fn write_results_to<W: Write>(mut w: W, records: &[MetricsRecord]) -> std::io::Result<()> {
    writeln!(w, "{RESULTS_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.mse_inst,
            r.mse_running,
            r.regret_cum,
            r.triggers_cum,
            r.bits_cum,
            r.clip_events_cum,
            r.error_frob,
            r.error_bound,
            r.step_time_us
        )?;
    }
    w.flush()
}

pub fn write_results(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_results_to(BufWriter::new(file), records).map_err(|e| Error::io(path, e))
}

/// Fails unless all configs describe the same data, seeds and feature count.
pub fn check_comparable(configs: &[RunConfig]) -> Result<()> {
    let Some(first) = configs.first() else {
        return Err(Error::config("configs", "need at least one config"));
    };
    for c in &configs[1..] {
        let checks: [(&str, bool); 8] = [
            ("dataset", c.dataset == first.dataset),
            ("dataset.normalize", c.normalize == first.normalize),
            ("n_agents", c.n_agents == first.n_agents),
            ("seed", c.seed == first.seed),
            ("graph", c.graph == first.graph),
            ("rf.l_count", c.rf.l_count == first.rf.l_count),
            ("rf.seed", c.rf.seed == first.rf.seed && c.rf.sigma == first.rf.sigma),
            ("t_max", c.t_max == first.t_max),
        ];
        if let Some((field, _)) = checks.iter().find(|(_, same)| !same) {
            return Err(Error::MismatchedExperiment {
                field: field.to_string(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub runs: Vec<(Algorithm, RunOutput)>,
}

/// Runs every config on the same prepared data, one after another.
pub fn compare(configs: &[RunConfig]) -> Result<Comparison> {
    check_comparable(configs)?;
    let experiment = Experiment::prepare(&configs[0])?;
    let mut runs = Vec::with_capacity(configs.len());
    for c in configs {
        let mut exp = experiment.clone();
        exp.hyper = c.hyper_params()?;
        runs.push((c.algorithm, simulate(c, &exp)?));
    }
    Ok(Comparison { runs })
}

pub fn write_comparison_to<W: Write>(mut w: W, comparison: &Comparison) -> std::io::Result<()> {
    writeln!(w, "{COMPARE_HEADER}")?;
    for (algorithm, out) in &comparison.runs {
        for r in &out.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                algorithm, r.t, r.mse_running, r.triggers_cum, r.bits_cum, r.regret_cum, r.step_time_us
            )?;
        }
    }
    w.flush()
}

pub fn write_comparison(path: &Path, comparison: &Comparison) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_comparison_to(BufWriter::new(file), comparison).map_err(|e| Error::io(path, e))
}
