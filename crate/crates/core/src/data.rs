//! Dataset loading, normalization, partitioning into agent streams, and
//! synthetic regression data.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::RfBasis;

const SHUFFLE_STREAM: u64 = 0x5348;
const SYNTH_INPUT_STREAM: u64 = 0x5831;
const SYNTH_NOISE_STREAM: u64 = 0x5832;
const SYNTH_COEF_STREAM: u64 = 0x5833;

/// Random features in the hidden target function of [`synthesize`].
pub const SYNTH_HIDDEN_FEATURES: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Array1<f64>,
    pub feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Array1<f64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset labels",
                expected: features.nrows(),
                got: labels.len(),
            });
        }
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(Dataset {
            features,
            labels,
            feature_names: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Writes `features..., y` with a header row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let names: Vec<String> = match &self.feature_names {
            Some(n) => n.clone(),
            None => (0..self.dim()).map(|k| format!("x{k}")).collect(),
        };
        let write = |out: &mut std::io::BufWriter<File>| -> std::io::Result<()> {
            writeln!(out, "{},y", names.join(","))?;
            for (row, y) in self.features.rows().into_iter().zip(&self.labels) {
                for v in row {
                    write!(out, "{v},")?;
                }
                writeln!(out, "{y}")?;
            }
            out.flush()
        };
        write(&mut out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
    Last,
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "last" | "" => LabelColumn::Last,
            s => match s.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(s.to_string()),
            },
        })
    }
}

impl std::fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelColumn::Index(i) => write!(f, "{i}"),
            LabelColumn::Name(n) => f.write_str(n),
            LabelColumn::Last => f.write_str("last"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvLoad {
    pub dataset: Dataset,
    /// Rows skipped because a field was missing or not numeric.
    pub dropped: usize,
}

/// Loads a numeric CSV. A first row containing any non-numeric field is
/// treated as a header.
pub fn load_csv(path: &Path, label: &LabelColumn, delimiter: u8) -> Result<CsvLoad> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        records.push(rec);
    }
    let Some(first) = records.first() else {
        return Err(Error::EmptyDataset);
    };
    let header: Option<Vec<String>> = first
        .iter()
        .any(|f| f.parse::<f64>().is_err())
        .then(|| first.iter().map(str::to_string).collect());
    let width = first.len();
    let body = &records[usize::from(header.is_some())..];

    let label_idx = match label {
        LabelColumn::Last => width.checked_sub(1),
        LabelColumn::Index(i) => (*i < width).then_some(*i),
        LabelColumn::Name(name) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name)),
    }
    .ok_or_else(|| {
        Error::Parse(format!(
            "{}: label column `{label}` not found among {width} columns",
            path.display()
        ))
    })?;
    if width < 2 {
        return Err(Error::Parse(format!(
            "{}: need at least one feature column besides the label",
            path.display()
        )));
    }

    let mut feats = Vec::new();
    let mut labels = Vec::new();
    let mut dropped = 0;
    for rec in body {
        let parsed: Option<Vec<f64>> = (rec.len() == width)
            .then(|| rec.iter().map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite())).collect())
            .flatten();
        match parsed {
            Some(values) => {
                for (k, v) in values.into_iter().enumerate() {
                    if k == label_idx {
                        labels.push(v);
                    } else {
                        feats.push(v);
                    }
                }
            }
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} malformed rows", path.display());
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let features = Array2::from_shape_vec((labels.len(), width - 1), feats)
        .expect("row widths checked above");
    let mut dataset = Dataset::new(features, Array1::from(labels))?;
    dataset.feature_names = header.map(|mut h| {
        h.remove(label_idx);
        h
    });
    Ok(CsvLoad { dataset, dropped })
}

/// Per-column `(x - min) / (max - min)`; constant columns become 0.
pub fn normalize_minmax(dataset: &Dataset) -> Dataset {
    let mut features = dataset.features.clone();
    for mut col in features.axis_iter_mut(Axis(1)) {
        let min = col.fold(f64::INFINITY, |a, &b| a.min(b));
        let max = col.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let range = max - min;
        if range > 0.0 {
            col.mapv_inplace(|v| (v - min) / range);
        } else {
            col.fill(0.0);
        }
    }
    Dataset {
        features,
        labels: dataset.labels.clone(),
        feature_names: dataset.feature_names.clone(),
    }
}

/// One agent's ordered samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    /// Source row of each sample in the original dataset.
    pub rows: Vec<usize>,
    pub features: Array2<f64>,
    pub labels: Array1<f64>,
}

impl Stream {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn sample(&self, t: usize) -> (ArrayView1<'_, f64>, f64) {
        (self.features.row(t), self.labels[t])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentStreams {
    pub streams: Vec<Stream>,
}

impl AgentStreams {
    pub fn n_agents(&self) -> usize {
        self.streams.len()
    }

    /// Common stream length `T`.
    pub fn horizon(&self) -> usize {
        self.streams.first().map_or(0, Stream::len)
    }

    /// Streams cut to their first `t` samples.
    pub fn truncated(&self, t: usize) -> AgentStreams {
        let t = t.min(self.horizon());
        AgentStreams {
            streams: self
                .streams
                .iter()
                .map(|s| Stream {
                    rows: s.rows[..t].to_vec(),
                    features: s.features.slice(ndarray::s![..t, ..]).to_owned(),
                    labels: s.labels.slice(ndarray::s![..t]).to_owned(),
                })
                .collect(),
        }
    }
}

/// Shuffles rows with `seed` and deals contiguous blocks of `floor(len / n)`
/// rows to agents `0..n`. Leftover rows are dropped.
pub fn shuffle_partition(dataset: &Dataset, n_agents: usize, seed: u64) -> Result<AgentStreams> {
    if n_agents == 0 || dataset.len() < n_agents {
        return Err(Error::TooFewSamples {
            available: dataset.len(),
            required: n_agents.max(1),
        });
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(SHUFFLE_STREAM);
    order.shuffle(&mut rng);
    let t = dataset.len() / n_agents;
    let streams = order
        .chunks_exact(t)
        .take(n_agents)
        .map(|rows| Stream {
            rows: rows.to_vec(),
            features: dataset.features.select(Axis(0), rows),
            labels: dataset.labels.select(Axis(0), rows),
        })
        .collect();
    Ok(AgentStreams { streams })
}

/// Hidden regression function `f(x) = c . phi(x)` over a private RF basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTarget {
    pub basis: RfBasis,
    pub coef: Array1<f64>,
}

impl SyntheticTarget {
    pub fn eval(&self, x: ArrayView1<f64>) -> Result<f64> {
        Ok(self.basis.map(x)?.dot(&self.coef))
    }
}

/// `y = f(x) + noise`, `x` uniform on `[0, 1]^dim`, noise `N(0, noise_std^2)`.
pub fn synthesize(
    n_samples: usize,
    dim: usize,
    sigma_true: f64,
    noise_std: f64,
    seed: u64,
) -> Result<Dataset> {
    synthesize_with_target(n_samples, dim, sigma_true, noise_std, seed).map(|(d, _)| d)
}

pub fn synthesize_with_target(
    n_samples: usize,
    dim: usize,
    sigma_true: f64,
    noise_std: f64,
    seed: u64,
) -> Result<(Dataset, SyntheticTarget)> {
    if n_samples == 0 || dim == 0 {
        return Err(Error::InvalidParameter(format!(
            "synthetic data needs positive sizes (got {n_samples} x {dim})"
        )));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise_std must be >= 0, got {noise_std}")));
    }
    let basis = RfBasis::sample(SYNTH_HIDDEN_FEATURES, dim, sigma_true, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let mut coef_rng = ChaCha20Rng::seed_from_u64(seed);
    coef_rng.set_stream(SYNTH_COEF_STREAM);
    let coef = Array1::from_shape_simple_fn(basis.feature_len(), || {
        StandardNormal.sample(&mut coef_rng)
    });
    let target = SyntheticTarget { basis, coef };

    let mut x_rng = ChaCha20Rng::seed_from_u64(seed);
    x_rng.set_stream(SYNTH_INPUT_STREAM);
    let features = Array2::from_shape_simple_fn((n_samples, dim), || x_rng.random::<f64>());
    let mut noise_rng = ChaCha20Rng::seed_from_u64(seed);
    noise_rng.set_stream(SYNTH_NOISE_STREAM);
    let mut labels = Array1::zeros(n_samples);
    for (y, x) in labels.iter_mut().zip(features.rows()) {
        let eps: f64 = StandardNormal.sample(&mut noise_rng);
        *y = target.eval(x)? + noise_std * eps;
    }
    Ok((Dataset::new(features, labels)?, target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::collections::HashSet;

    fn toy(rows: usize) -> Dataset {
        let f = Array2::from_shape_fn((rows, 2), |(r, c)| (r * 2 + c) as f64);
        let y = Array1::from_shape_fn(rows, |r| r as f64);
        Dataset::new(f, y).unwrap()
    }

    #[test]
    fn minmax_examples() {
        let d = Dataset::new(
            array![[0.0, 7.0, 0.0], [5.0, 7.0, 1.0], [10.0, 7.0, 0.5]],
            array![1.0, 2.0, 3.0],
        )
        .unwrap();
        let n = normalize_minmax(&d);
        assert_eq!(n.features.column(0), array![0.0, 0.5, 1.0]);
        assert_eq!(n.features.column(1), array![0.0, 0.0, 0.0]);
        for (a, b) in n.features.column(2).iter().zip(d.features.column(2)) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert_eq!(n.labels, d.labels);
    }

    #[test]
    fn partition_floor_rule() {
        let s = shuffle_partition(&toy(10), 3, 1).unwrap();
        assert_eq!(s.n_agents(), 3);
        assert!(s.streams.iter().all(|x| x.len() == 3));
        let all: HashSet<usize> = s.streams.iter().flat_map(|x| x.rows.clone()).collect();
        assert_eq!(all.len(), 9);
    }

    #[test]
    fn single_agent_gets_permutation() {
        let d = toy(7);
        let s = shuffle_partition(&d, 1, 4).unwrap();
        let mut rows = s.streams[0].rows.clone();
        rows.sort_unstable();
        assert_eq!(rows, (0..7).collect::<Vec<_>>());
        for (k, &r) in s.streams[0].rows.iter().enumerate() {
            assert_eq!(s.streams[0].features.row(k), d.features.row(r));
            assert_eq!(s.streams[0].labels[k], d.labels[r]);
        }
    }

    #[test]
    fn partition_is_seeded() {
        let d = toy(50);
        assert_eq!(shuffle_partition(&d, 4, 9).unwrap(), shuffle_partition(&d, 4, 9).unwrap());
        assert_ne!(shuffle_partition(&d, 4, 9).unwrap(), shuffle_partition(&d, 4, 10).unwrap());
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            shuffle_partition(&toy(2), 3, 0),
            Err(Error::TooFewSamples { available: 2, required: 3 })
        ));
    }

    #[test]
    fn truncation_keeps_prefix() {
        let s = shuffle_partition(&toy(20), 2, 3).unwrap();
        let short = s.truncated(4);
        assert_eq!(short.horizon(), 4);
        assert_eq!(short.streams[1].rows, s.streams[1].rows[..4].to_vec());
    }

    #[test]
    fn noiseless_synthetic_labels_are_exact() {
        let (d, f) = synthesize_with_target(50, 3, 0.5, 0.0, 21).unwrap();
        for (x, y) in d.features.rows().into_iter().zip(&d.labels) {
            assert_eq!(f.eval(x).unwrap(), *y);
            assert!(x.iter().all(|v| (0.0..1.0).contains(v)));
        }
    }

    #[test]
    fn synthetic_is_seeded() {
        assert_eq!(
            synthesize(40, 2, 0.5, 0.1, 3).unwrap(),
            synthesize(40, 2, 0.5, 0.1, 3).unwrap()
        );
    }

    #[test]
    fn label_variance_grows_with_noise() {
        let var = |s: f64| synthesize(5000, 4, 0.5, s, 8).unwrap().labels.var(0.0);
        let (a, b, c) = (var(0.0), var(0.1), var(0.5));
        assert!(a < b && b < c, "{a} {b} {c}");
    }
}
