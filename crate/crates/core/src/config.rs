//! Run configuration in flat `section.key = value` text form.
//!
//! ```text
//! # comment
//! algorithm = qc-odkla   # trailing comments too
//! n_agents = 10
//! rf.l_count = 50
//! censor.alpha = 4
//! ```
//!
//! Every key is optional; omitted keys take the defaults of
//! [`RunConfig::default`]. [`RunConfig::to_text`] writes every key, so
//! `parse(to_text(c)) == c`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::comm::{CensorSpec, QuantizerSpec};
use crate::data::LabelColumn;
use crate::engine::{Algorithm, EtaSchedule, HyperParams};
use crate::error::{Error, Result};
use crate::losses::{LossKind, LossSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        label: LabelColumn,
        delimiter: char,
    },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub dim: usize,
    pub sigma: f64,
    pub noise_std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphConfig {
    pub edge_prob: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfConfig {
    pub l_count: usize,
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub kind: LossKind,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperConfig {
    pub rho: f64,
    pub eta: EtaSchedule,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CensorConfig {
    pub alpha: f64,
    pub beta: f64,
    pub enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerConfig {
    pub bits: u32,
    pub range: f64,
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub normalize: bool,
    pub algorithm: Algorithm,
    pub n_agents: usize,
    pub graph: GraphConfig,
    pub rf: RfConfig,
    pub loss: LossConfig,
    pub hyper: HyperConfig,
    pub censor: CensorConfig,
    pub quantizer: QuantizerConfig,
    pub t_max: Option<usize>,
    pub output: Option<PathBuf>,
    /// Write measured per-step times into the CSV. Off by default so that
    /// result files are reproducible byte for byte.
    pub timing: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetSource::Synthetic(SyntheticSpec {
                samples: 10_000,
                dim: 5,
                sigma: 0.5,
                noise_std: 0.1,
                seed: 1,
            }),
            normalize: true,
            algorithm: Algorithm::Odkla,
            n_agents: 5,
            graph: GraphConfig {
                edge_prob: 0.5,
                seed: 1,
            },
            rf: RfConfig {
                l_count: 50,
                sigma: 0.5,
                seed: 1,
            },
            loss: LossConfig {
                kind: LossKind::Squared,
                lambda: 1e-4,
            },
            hyper: HyperConfig {
                rho: 0.02,
                eta: EtaSchedule::Constant(3.0),
            },
            censor: CensorConfig {
                alpha: 4.0,
                beta: 0.99,
                enabled: false,
            },
            quantizer: QuantizerConfig {
                bits: 3,
                range: 4.0,
                enabled: false,
            },
            t_max: None,
            output: None,
            timing: false,
            seed: 1,
        }
    }
}

const KEYS: &[&str] = &[
    "algorithm",
    "n_agents",
    "seed",
    "t_max",
    "output",
    "timing",
    "dataset.kind",
    "dataset.path",
    "dataset.label",
    "dataset.delimiter",
    "dataset.normalize",
    "synthetic.samples",
    "synthetic.dim",
    "synthetic.sigma",
    "synthetic.noise_std",
    "synthetic.seed",
    "graph.edge_prob",
    "graph.seed",
    "rf.l_count",
    "rf.sigma",
    "rf.seed",
    "loss.kind",
    "loss.lambda",
    "hyper.rho",
    "hyper.eta",
    "hyper.eta_schedule",
    "censor.alpha",
    "censor.beta",
    "censor.enabled",
    "quantizer.bits",
    "quantizer.range",
    "quantizer.enabled",
];

struct Entries {
    map: BTreeMap<String, String>,
}

impl Entries {
    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.map.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse::<T>()
                .map_err(|e| Error::config(key, format!("cannot parse {raw:?}: {e}"))),
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }
}

/// Drops a trailing comment: `#` at line start or after whitespace, so
/// paths containing `#` survive.
fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = strip_comment(line).trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(
                    format!("line {}", lineno + 1),
                    format!("expected `key = value`, got {line:?}"),
                ));
            };
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(Error::config(key, "unknown key"));
            }
            if map.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::config(key, "key given more than once"));
            }
        }
        let e = Entries { map };
        let d = RunConfig::default();

        let algorithm = match e.raw("algorithm") {
            None => d.algorithm,
            Some(raw) => raw.parse().map_err(|m: String| Error::config("algorithm", m))?,
        };
        let dataset = match e.raw("dataset.kind").unwrap_or("synthetic") {
            "synthetic" => {
                let DatasetSource::Synthetic(s) = d.dataset else { unreachable!() };
                DatasetSource::Synthetic(SyntheticSpec {
                    samples: e.get("synthetic.samples", s.samples)?,
                    dim: e.get("synthetic.dim", s.dim)?,
                    sigma: e.get("synthetic.sigma", s.sigma)?,
                    noise_std: e.get("synthetic.noise_std", s.noise_std)?,
                    seed: e.get("synthetic.seed", s.seed)?,
                })
            }
            "csv" => {
                let path = e
                    .raw("dataset.path")
                    .filter(|p| !p.is_empty())
                    .ok_or_else(|| Error::config("dataset.path", "required when dataset.kind = csv"))?;
                let delimiter: char = e.get("dataset.delimiter", ',')?;
                DatasetSource::Csv {
                    path: PathBuf::from(path),
                    label: e.get("dataset.label", LabelColumn::Last)?,
                    delimiter,
                }
            }
            other => {
                return Err(Error::config(
                    "dataset.kind",
                    format!("expected csv or synthetic, got {other:?}"),
                ))
            }
        };
        let loss_kind = match e.raw("loss.kind") {
            None => d.loss.kind,
            Some(raw) => raw.parse().map_err(|m: String| Error::config("loss.kind", m))?,
        };
        let eta0: f64 = e.get("hyper.eta", d.hyper.eta.eta0())?;
        let eta = EtaSchedule::from_name(e.raw("hyper.eta_schedule").unwrap_or("constant"), eta0)
            .map_err(|m| Error::config("hyper.eta_schedule", m))?;
        let is_qc = algorithm == Algorithm::QcOdkla;
        let t_max = match e.raw("t_max") {
            None | Some("") | Some("none") => None,
            Some(_) => Some(e.get("t_max", 0usize)?),
        };
        let output = e.raw("output").filter(|p| !p.is_empty()).map(PathBuf::from);

        let config = RunConfig {
            dataset,
            normalize: e.get("dataset.normalize", d.normalize)?,
            algorithm,
            n_agents: e.get("n_agents", d.n_agents)?,
            graph: GraphConfig {
                edge_prob: e.get("graph.edge_prob", d.graph.edge_prob)?,
                seed: e.get("graph.seed", d.graph.seed)?,
            },
            rf: RfConfig {
                l_count: e.get("rf.l_count", d.rf.l_count)?,
                sigma: e.get("rf.sigma", d.rf.sigma)?,
                seed: e.get("rf.seed", d.rf.seed)?,
            },
            loss: LossConfig {
                kind: loss_kind,
                lambda: e.get("loss.lambda", d.loss.lambda)?,
            },
            hyper: HyperConfig {
                rho: e.get("hyper.rho", d.hyper.rho)?,
                eta,
            },
            censor: CensorConfig {
                alpha: e.get("censor.alpha", d.censor.alpha)?,
                beta: e.get("censor.beta", d.censor.beta)?,
                enabled: e.get("censor.enabled", is_qc)?,
            },
            quantizer: QuantizerConfig {
                bits: e.get("quantizer.bits", d.quantizer.bits)?,
                range: e.get("quantizer.range", d.quantizer.range)?,
                enabled: e.get("quantizer.enabled", is_qc)?,
            },
            t_max,
            output,
            timing: e.get("timing", d.timing)?,
            seed: e.get("seed", d.seed)?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical text form listing every key.
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("algorithm = {}", self.algorithm),
            format!("n_agents = {}", self.n_agents),
            format!("seed = {}", self.seed),
            format!(
                "t_max = {}",
                self.t_max.map_or_else(|| "none".to_string(), |t| t.to_string())
            ),
            format!(
                "output = {}",
                self.output.as_ref().map_or_else(String::new, |p| p.display().to_string())
            ),
            format!("timing = {}", self.timing),
        ];
        match &self.dataset {
            DatasetSource::Synthetic(s) => {
                lines.push("dataset.kind = synthetic".into());
                lines.push(format!("synthetic.samples = {}", s.samples));
                lines.push(format!("synthetic.dim = {}", s.dim));
                lines.push(format!("synthetic.sigma = {}", s.sigma));
                lines.push(format!("synthetic.noise_std = {}", s.noise_std));
                lines.push(format!("synthetic.seed = {}", s.seed));
            }
            DatasetSource::Csv {
                path,
                label,
                delimiter,
            } => {
                lines.push("dataset.kind = csv".into());
                lines.push(format!("dataset.path = {}", path.display()));
                lines.push(format!("dataset.label = {label}"));
                lines.push(format!("dataset.delimiter = {delimiter}"));
            }
        }
        lines.extend([
            format!("dataset.normalize = {}", self.normalize),
            format!("graph.edge_prob = {}", self.graph.edge_prob),
            format!("graph.seed = {}", self.graph.seed),
            format!("rf.l_count = {}", self.rf.l_count),
            format!("rf.sigma = {}", self.rf.sigma),
            format!("rf.seed = {}", self.rf.seed),
            format!("loss.kind = {}", self.loss.kind),
            format!("loss.lambda = {}", self.loss.lambda),
            format!("hyper.rho = {}", self.hyper.rho),
            format!("hyper.eta = {}", self.hyper.eta.eta0()),
            format!("hyper.eta_schedule = {}", self.hyper.eta.name()),
            format!("censor.alpha = {}", self.censor.alpha),
            format!("censor.beta = {}", self.censor.beta),
            format!("censor.enabled = {}", self.censor.enabled),
            format!("quantizer.bits = {}", self.quantizer.bits),
            format!("quantizer.range = {}", self.quantizer.range),
            format!("quantizer.enabled = {}", self.quantizer.enabled),
        ]);
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be positive, got {v}")))
            }
        };
        if self.n_agents == 0 {
            return Err(Error::config("n_agents", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.graph.edge_prob) {
            return Err(Error::config("graph.edge_prob", "must lie in [0, 1]"));
        }
        if self.rf.l_count == 0 {
            return Err(Error::config("rf.l_count", "must be at least 1"));
        }
        positive("rf.sigma", self.rf.sigma)?;
        if !(self.loss.lambda >= 0.0 && self.loss.lambda.is_finite()) {
            return Err(Error::config("loss.lambda", "must be >= 0"));
        }
        positive("hyper.rho", self.hyper.rho)?;
        positive("hyper.eta", self.hyper.eta.eta0())?;
        if let DatasetSource::Synthetic(s) = &self.dataset {
            if s.samples == 0 {
                return Err(Error::config("synthetic.samples", "must be at least 1"));
            }
            if s.dim == 0 {
                return Err(Error::config("synthetic.dim", "must be at least 1"));
            }
            positive("synthetic.sigma", s.sigma)?;
            if !(s.noise_std >= 0.0 && s.noise_std.is_finite()) {
                return Err(Error::config("synthetic.noise_std", "must be >= 0"));
            }
        }
        if let DatasetSource::Csv { delimiter, .. } = &self.dataset {
            if !delimiter.is_ascii() {
                return Err(Error::config("dataset.delimiter", "must be a single ASCII character"));
            }
        }
        if self.t_max == Some(0) {
            return Err(Error::config("t_max", "must be at least 1"));
        }
        if self.algorithm != Algorithm::QcOdkla {
            if self.censor.enabled {
                return Err(Error::config("censor.enabled", "censoring applies to qc-odkla only"));
            }
            if self.quantizer.enabled {
                return Err(Error::config("quantizer.enabled", "quantization applies to qc-odkla only"));
            }
        }
        if self.algorithm == Algorithm::Dokl && self.loss.kind != LossKind::Squared {
            return Err(Error::config("loss.kind", "dokl supports only the squared loss"));
        }
        if self.censor.enabled {
            positive("censor.alpha", self.censor.alpha)?;
            if !(self.censor.beta > 0.0 && self.censor.beta < 1.0) {
                return Err(Error::config("censor.beta", "must lie in (0, 1)"));
            }
        }
        if self.quantizer.enabled {
            if !(1..=31).contains(&self.quantizer.bits) {
                return Err(Error::config("quantizer.bits", "must lie in 1..=31"));
            }
            positive("quantizer.range", self.quantizer.range)?;
        }
        Ok(())
    }

    pub fn loss_spec(&self) -> Result<LossSpec> {
        LossSpec::new(self.loss.kind, self.loss.lambda, self.n_agents)
    }

    pub fn hyper_params(&self) -> Result<HyperParams> {
        let censor = if self.censor.enabled {
            CensorSpec::new(self.censor.alpha, self.censor.beta)?
        } else {
            CensorSpec::disabled()
        };
        let quantizer = if self.quantizer.enabled {
            Some(QuantizerSpec::symmetric(self.quantizer.bits, self.quantizer.range)?)
        } else {
            None
        };
        Ok(HyperParams::new(self.hyper.rho, self.hyper.eta, self.loss_spec()?)?
            .with_censor(censor)
            .with_quantizer(quantizer))
    }
}
