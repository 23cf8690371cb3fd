//! Online performance measurement: MSE, cumulative regret against the
//! batch ridge solution, the censoring/quantization error bound, and
//! communication counters.

use ndarray::{Array1, Array2};

use crate::comm::{CensorSpec, CommCounters, QuantizerSpec};
use crate::data::AgentStreams;
use crate::engine::{RoundReport, Sample};
use crate::error::{Error, Result};
use crate::features::RfBasis;
use crate::losses::{LossKind, LossSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub t: usize,
    pub mse_inst: f64,
    pub mse_running: f64,
    /// NaN when no comparator is available (non-squared losses).
    pub regret_cum: f64,
    pub triggers_cum: u64,
    pub bits_cum: u64,
    pub clip_events_cum: u64,
    pub max_grad_norm: f64,
    pub max_theta_norm: f64,
    pub error_frob: f64,
    pub error_bound: f64,
    pub step_time_us: f64,
}

/// Folds [`RoundReport`]s into a running [`MetricsRecord`] series.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    loss: LossSpec,
    theta_star: Option<Array1<f64>>,
    error_bound: f64,
    mse_sum: f64,
    regret: f64,
    counters: CommCounters,
    max_grad_norm: f64,
    max_theta_norm: f64,
    rounds: usize,
    clip_rounds: usize,
    bound_violations: usize,
}

impl MetricsAccumulator {
    pub fn new(loss: LossSpec, theta_star: Option<Array1<f64>>, error_bound: f64) -> Self {
        MetricsAccumulator {
            loss,
            theta_star,
            error_bound,
            mse_sum: 0.0,
            regret: 0.0,
            counters: CommCounters::default(),
            max_grad_norm: 0.0,
            max_theta_norm: 0.0,
            rounds: 0,
            clip_rounds: 0,
            bound_violations: 0,
        }
    }

    pub fn record(&mut self, report: &RoundReport, samples: &[Sample], step_time_us: f64) -> MetricsRecord {
        let n = samples.len() as f64;
        let mse_inst = report
            .margins
            .iter()
            .zip(samples)
            .map(|(m, s)| (m - s.y) * (m - s.y))
            .sum::<f64>()
            / n;
        self.rounds += 1;
        self.mse_sum += mse_inst;

        match &self.theta_star {
            Some(star) => {
                let online: f64 = report.costs.iter().sum();
                let comparator: f64 = samples
                    .iter()
                    .map(|s| self.loss.cost_unchecked(star.view(), s.z.view(), s.y))
                    .sum();
                self.regret += online - comparator;
            }
            None => self.regret = f64::NAN,
        }

        self.counters.add(&report.exchange.counters);
        self.max_grad_norm = self.max_grad_norm.max(report.max_grad_norm);
        self.max_theta_norm = self.max_theta_norm.max(report.max_theta_norm);
        if report.exchange.clipped() {
            self.clip_rounds += 1;
        } else if report.error_frob > self.error_bound + LEMMA1_SLACK {
            self.bound_violations += 1;
        }

        MetricsRecord {
            t: report.t,
            mse_inst,
            mse_running: self.mse_sum / self.rounds as f64,
            regret_cum: self.regret,
            triggers_cum: self.counters.triggers,
            bits_cum: self.counters.bits,
            clip_events_cum: self.counters.clip_events,
            max_grad_norm: self.max_grad_norm,
            max_theta_norm: self.max_theta_norm,
            error_frob: report.error_frob,
            error_bound: self.error_bound,
            step_time_us,
        }
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// Rounds in which some transmission clipped.
    pub fn clip_rounds(&self) -> usize {
        self.clip_rounds
    }

    /// Non-clipping rounds whose error exceeded the bound.
    pub fn bound_violations(&self) -> usize {
        self.bound_violations
    }

    pub fn counters(&self) -> CommCounters {
        self.counters
    }
}

/// Stacks `phi(x)` for every sample of every stream, with labels.
pub fn design_matrix(streams: &AgentStreams, basis: &RfBasis) -> Result<(Array2<f64>, Array1<f64>)> {
    let total: usize = streams.streams.iter().map(|s| s.len()).sum();
    let mut z = Array2::zeros((total, basis.feature_len()));
    let mut y = Array1::zeros(total);
    let mut row = 0;
    for s in &streams.streams {
        for t in 0..s.len() {
            let (x, label) = s.sample(t);
            z.row_mut(row).assign(&basis.map(x)?);
            y[row] = label;
            row += 1;
        }
    }
    Ok((z, y))
}

/// Batch comparator: the minimizer of `sum_{i,t} L_{i,t}(theta)` over all
/// streams. Every local cost carries `(lambda / N) |theta|^2`, so the ridge
/// weight is `lambda * (samples / N)`, i.e. `lambda * T` for equal streams.
pub fn centralized_oracle(streams: &AgentStreams, basis: &RfBasis, loss: &LossSpec) -> Result<Array1<f64>> {
    if loss.kind != LossKind::Squared {
        return Err(Error::UnsupportedLoss {
            operation: "centralized oracle",
            loss: loss.kind.to_string(),
        });
    }
    let (z, y) = design_matrix(streams, basis)?;
    let weight = loss.lambda * z.nrows() as f64 / loss.n_agents as f64;
    ridge_solve(&z, &y, weight)
}

/// Solves `(Z^T Z + lambda I) theta = Z^T y` by Cholesky factorization.
pub fn ridge_solve(z: &Array2<f64>, y: &Array1<f64>, lambda: f64) -> Result<Array1<f64>> {
    let mut gram = z.t().dot(z);
    for k in 0..gram.nrows() {
        gram[[k, k]] += lambda;
    }
    let rhs = z.t().dot(y);
    cholesky_solve(gram, rhs)
}

fn cholesky_solve(a: Array2<f64>, b: Array1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    let gram = nalgebra::DMatrix::from_fn(n, n, |i, j| a[[i, j]]);
    let chol = gram.cholesky().ok_or_else(|| {
        Error::InvalidParameter("ridge system is not positive definite; increase lambda".into())
    })?;
    let x = chol.solve(&nalgebra::DVector::from_iterator(n, b.iter().cloned()));
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "ridge system is not positive definite; increase lambda".into(),
        ));
    }
    Ok(Array1::from_iter(x.iter().cloned()))
}

/// Cumulative regret `R(T)` for every `T`, given the iterate `theta_{i,t}`
/// used at each round.
///
/// `trajectory[t][i]` is agent `i`'s state at round `t + 1`.
pub fn regret(
    trajectory: &[Vec<Array1<f64>>],
    streams: &AgentStreams,
    basis: &RfBasis,
    theta_star: &Array1<f64>,
    loss: &LossSpec,
) -> Result<Vec<f64>> {
    let mut curve = Vec::with_capacity(trajectory.len());
    let mut total = 0.0;
    for (t, thetas) in trajectory.iter().enumerate() {
        for (theta, stream) in thetas.iter().zip(&streams.streams) {
            let (x, y) = stream.sample(t);
            let z = basis.map(x)?;
            total += loss.cost(theta.view(), z.view(), y)? - loss.cost(theta_star.view(), z.view(), y)?;
        }
        curve.push(total);
    }
    Ok(curve)
}

/// Least-squares slope of `log R(T)` against `log T`.
///
/// `regret_curve[T - 1]` holds `R(T)`.
pub fn sublinearity_fit(regret_curve: &[f64], checkpoints: &[usize]) -> Result<f64> {
    if checkpoints.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "need at least 4 checkpoints, got {}",
            checkpoints.len()
        )));
    }
    let mut pts = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        let r = *regret_curve.get(t.wrapping_sub(1)).ok_or_else(|| {
            Error::InvalidParameter(format!("checkpoint {t} beyond curve length {}", regret_curve.len()))
        })?;
        if r.is_nan() || r <= 0.0 {
            return Err(Error::DegenerateRegret { checkpoint: t, value: r });
        }
        pts.push(((t as f64).ln(), r.ln()));
    }
    Ok(log_log_slope(&pts))
}

pub(crate) fn log_log_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Allowed slack when comparing the state error against its bound.
pub const LEMMA1_SLACK: f64 = 1e-9;

/// Bound on `|Theta_t - Theta_hat_t|_F`:
/// `max{ sqrt(N) alpha beta, sqrt(2 N L) delta / 2 }`, where a disabled
/// censor or quantizer contributes nothing.
pub fn error_bound(n: usize, l_count: usize, censor: &CensorSpec, quantizer: Option<&QuantizerSpec>) -> f64 {
    let n = n as f64;
    let censored = if censor.enabled {
        n.sqrt() * censor.alpha * censor.beta
    } else {
        0.0
    };
    let quantized = quantizer.map_or(0.0, |q| (2.0 * n * l_count as f64).sqrt() * q.delta() / 2.0);
    censored.max(quantized)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Check {
    pub pass: bool,
    pub zeta: f64,
}

pub fn lemma1_check(
    error_frob: f64,
    n: usize,
    l_count: usize,
    censor: &CensorSpec,
    quantizer: Option<&QuantizerSpec>,
) -> Lemma1Check {
    let zeta = error_bound(n, l_count, censor, quantizer);
    Lemma1Check {
        pass: error_frob <= zeta + LEMMA1_SLACK,
        zeta,
    }
}
