//! Per-agent update rules and the synchronous round driver.
//!
//! Four algorithms share one state layout:
//!
//! * `Odkla`: linearized ADMM with exact neighbor states.
//! * `QcOdkla`: the same recursion driven by broadcast states `theta_hat`
//!   maintained through censored, quantized differences.
//! * `RffDokl`: adapt-then-combine diffusion with Metropolis weights.
//! * `Dokl`: standard (non-linearized) online ADMM, squared loss only.
//!
//! A round follows observe -> primal -> exchange -> dual. Metrics about
//! `theta_t` are captured before the primal step.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, Zip};

use crate::comm::{round_exchange, CensorSpec, CommCounters, CommSpec, ExchangeOutcome, QuantizerSpec, FULL_PRECISION_BITS};
use crate::error::{check_len, Error, Result};
use crate::graph::{metropolis_weights, Topology};
use crate::losses::{LossKind, LossSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub theta: Array1<f64>,
    pub gamma: Array1<f64>,
    /// Last state this agent broadcast, as its neighbors know it.
    pub theta_hat_self: Array1<f64>,
    /// Broadcast state of each neighbor.
    pub theta_hat_neighbors: BTreeMap<usize, Array1<f64>>,
}

impl AgentState {
    /// Zero primal, dual and broadcast state.
    pub fn new(dim: usize, neighbors: &[usize]) -> Self {
        AgentState {
            theta: Array1::zeros(dim),
            gamma: Array1::zeros(dim),
            theta_hat_self: Array1::zeros(dim),
            theta_hat_neighbors: neighbors.iter().map(|&j| (j, Array1::zeros(dim))).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn degree(&self) -> usize {
        self.theta_hat_neighbors.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaSchedule {
    Constant(f64),
    /// `eta0 / sqrt(t)`
    InverseSqrt(f64),
    /// `eta0 * sqrt(t)`
    SqrtGrowth(f64),
}

impl EtaSchedule {
    pub fn eta0(&self) -> f64 {
        match *self {
            EtaSchedule::Constant(e) | EtaSchedule::InverseSqrt(e) | EtaSchedule::SqrtGrowth(e) => e,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EtaSchedule::Constant(_) => "constant",
            EtaSchedule::InverseSqrt(_) => "inverse_sqrt",
            EtaSchedule::SqrtGrowth(_) => "sqrt_growth",
        }
    }

    pub fn from_name(name: &str, eta0: f64) -> std::result::Result<Self, String> {
        match name {
            "constant" => Ok(EtaSchedule::Constant(eta0)),
            "inverse_sqrt" => Ok(EtaSchedule::InverseSqrt(eta0)),
            "sqrt_growth" => Ok(EtaSchedule::SqrtGrowth(eta0)),
            other => Err(format!(
                "unknown schedule `{other}` (expected constant, inverse_sqrt or sqrt_growth)"
            )),
        }
    }

    pub fn at(&self, t: usize) -> f64 {
        let t = t.max(1) as f64;
        match *self {
            EtaSchedule::Constant(e) => e,
            EtaSchedule::InverseSqrt(e) => e / t.sqrt(),
            EtaSchedule::SqrtGrowth(e) => e * t.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub rho: f64,
    pub eta: EtaSchedule,
    pub loss: LossSpec,
    pub censor: CensorSpec,
    pub quantizer: Option<QuantizerSpec>,
}

impl HyperParams {
    pub fn new(rho: f64, eta: EtaSchedule, loss: LossSpec) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho must be > 0, got {rho}")));
        }
        if !(eta.eta0() > 0.0 && eta.eta0().is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "eta must be > 0, got {}",
                eta.eta0()
            )));
        }
        Ok(HyperParams {
            rho,
            eta,
            loss,
            censor: CensorSpec::disabled(),
            quantizer: None,
        })
    }

    pub fn with_censor(mut self, censor: CensorSpec) -> Self {
        self.censor = censor;
        self
    }

    pub fn with_quantizer(mut self, quantizer: Option<QuantizerSpec>) -> Self {
        self.quantizer = quantizer;
        self
    }

    pub fn comm(&self) -> CommSpec {
        CommSpec {
            censor: self.censor,
            quantizer: self.quantizer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Odkla,
    QcOdkla,
    RffDokl,
    Dokl,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Odkla,
        Algorithm::QcOdkla,
        Algorithm::RffDokl,
        Algorithm::Dokl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Odkla => "odkla",
            Algorithm::QcOdkla => "qc-odkla",
            Algorithm::RffDokl => "rff-dokl",
            Algorithm::Dokl => "dokl",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}` (expected odkla, qc-odkla, rff-dokl or dokl)"))
    }
}

/// One mapped observation `(z, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub z: Array1<f64>,
    pub y: f64,
}

/// `theta - (grad + gamma + rho * sum_j (own - ref_j)) / (eta + 2 rho d)`.
fn linearized_step<'a>(
    theta: &Array1<f64>,
    gamma: &Array1<f64>,
    grad: ArrayView1<f64>,
    own_ref: &Array1<f64>,
    neighbor_refs: impl ExactSizeIterator<Item = ArrayView1<'a, f64>>,
    rho: f64,
    eta: f64,
) -> Array1<f64> {
    let degree = neighbor_refs.len();
    let mut acc = &grad + gamma;
    for r in neighbor_refs {
        Zip::from(&mut acc)
            .and(own_ref)
            .and(&r)
            .for_each(|a, &o, &n| *a += rho * (o - n));
    }
    let scale = 1.0 / (eta + 2.0 * rho * degree as f64);
    let mut out = theta.clone();
    out.scaled_add(-scale, &acc);
    out
}

/// [`linearized_step`] with the gradient `slope z + reg theta` folded in, so
/// no gradient vector is built. One allocation, `1 + d` passes.
#[allow(clippy::too_many_arguments)]
fn fused_linearized_step<'a>(
    theta: &Array1<f64>,
    gamma: &Array1<f64>,
    z: &Array1<f64>,
    slope: f64,
    reg: f64,
    own_ref: &Array1<f64>,
    neighbor_refs: impl ExactSizeIterator<Item = ArrayView1<'a, f64>>,
    rho: f64,
    eta: f64,
) -> Array1<f64> {
    let degree = neighbor_refs.len() as f64;
    let scale = 1.0 / (eta + 2.0 * rho * degree);
    let pull = rho * degree;
    let mut out = Zip::from(theta)
        .and(gamma)
        .and(z)
        .and(own_ref)
        .map_collect(|&t, &g, &zz, &o| t - scale * (slope * zz + reg * t + g + pull * o));
    for r in neighbor_refs {
        out.scaled_add(scale * rho, &r);
    }
    out
}

fn dual_step<'a>(
    gamma: &Array1<f64>,
    own: &Array1<f64>,
    neighbors: impl Iterator<Item = ArrayView1<'a, f64>>,
    rho: f64,
) -> Array1<f64> {
    let mut out = gamma.clone();
    for n in neighbors {
        Zip::from(&mut out)
            .and(own)
            .and(&n)
            .for_each(|g, &o, &v| *g += rho * (o - v));
    }
    out
}

fn check_views(context: &'static str, dim: usize, views: &[ArrayView1<f64>]) -> Result<()> {
    views.iter().try_for_each(|v| check_len(context, dim, v.len()))
}

/// ODKLA primal update from exact neighbor states `theta_j,t`.
pub fn odkla_primal(
    state: &AgentState,
    grad: ArrayView1<f64>,
    neighbor_thetas: &[ArrayView1<f64>],
    rho: f64,
    eta: f64,
) -> Result<Array1<f64>> {
    let dim = state.dim();
    check_len("odkla primal gradient", dim, grad.len())?;
    check_views("odkla primal neighbor state", dim, neighbor_thetas)?;
    Ok(linearized_step(
        &state.theta,
        &state.gamma,
        grad,
        &state.theta,
        neighbor_thetas.iter().cloned(),
        rho,
        eta,
    ))
}

/// ODKLA dual update; `state.theta` and `neighbor_thetas_new` are at `t+1`.
pub fn odkla_dual(
    state: &AgentState,
    neighbor_thetas_new: &[ArrayView1<f64>],
    rho: f64,
) -> Result<Array1<f64>> {
    check_views("odkla dual neighbor state", state.dim(), neighbor_thetas_new)?;
    Ok(dual_step(
        &state.gamma,
        &state.theta,
        neighbor_thetas_new.iter().cloned(),
        rho,
    ))
}

/// QC-ODKLA primal update, using broadcast states in place of exact ones.
/// The gradient is still evaluated at the agent's own `theta`.
pub fn qc_primal(
    state: &AgentState,
    grad: ArrayView1<f64>,
    rho: f64,
    eta: f64,
) -> Result<Array1<f64>> {
    check_len("qc primal gradient", state.dim(), grad.len())?;
    Ok(linearized_step(
        &state.theta,
        &state.gamma,
        grad,
        &state.theta_hat_self,
        state.theta_hat_neighbors.values().map(|v| v.view()),
        rho,
        eta,
    ))
}

/// QC-ODKLA dual update from the broadcast tables at `t+1`.
pub fn qc_dual(state: &AgentState, rho: f64) -> Array1<f64> {
    dual_step(
        &state.gamma,
        &state.theta_hat_self,
        state.theta_hat_neighbors.values().map(|v| v.view()),
        rho,
    )
}

/// Diffusion baseline: gradient step on every agent, then Metropolis averaging.
pub fn rff_dokl_step(
    thetas: &[Array1<f64>],
    samples: &[Sample],
    step_size: f64,
    combine: &Array2<f64>,
    loss: &LossSpec,
    topology: &Topology,
) -> Result<Vec<Array1<f64>>> {
    let n = topology.n();
    check_len("rff-dokl states", n, thetas.len())?;
    check_len("rff-dokl samples", n, samples.len())?;
    let mut adapted = Vec::with_capacity(n);
    for (theta, s) in thetas.iter().zip(samples) {
        let g = loss.gradient(theta.view(), s.z.view(), s.y)?;
        let mut psi = theta.clone();
        psi.scaled_add(-step_size, &g);
        adapted.push(psi);
    }
    Ok((0..n)
        .map(|i| {
            let mut out = &adapted[i] * combine[[i, i]];
            for &j in topology.neighbors(i) {
                out.scaled_add(combine[[i, j]], &adapted[j]);
            }
            out
        })
        .collect())
}

/// Exact ADMM primal for the squared loss:
///
/// `argmin (theta.z - y)^2 + (lambda/N)|theta|^2 + (eta/2)|theta - theta_i|^2
///  + gamma.theta + rho sum_j |theta - (theta_i + theta_j)/2|^2`.
///
/// The Hessian is `c I + 2 z z^T` with `c = eta + 2 lambda/N + 2 rho d`,
/// inverted with the Sherman–Morrison formula.
pub fn dokl_primal(
    state: &AgentState,
    sample: &Sample,
    neighbor_thetas: &[ArrayView1<f64>],
    rho: f64,
    eta: f64,
    loss: &LossSpec,
) -> Result<Array1<f64>> {
    if loss.kind != LossKind::Squared {
        return Err(Error::UnsupportedLoss {
            operation: "dokl",
            loss: loss.kind.to_string(),
        });
    }
    let dim = state.dim();
    check_len("dokl sample", dim, sample.z.len())?;
    check_views("dokl neighbor state", dim, neighbor_thetas)?;
    let degree = neighbor_thetas.len() as f64;
    let c = eta + 2.0 * loss.local_lambda() + 2.0 * rho * degree;

    // rhs = 2 y z + eta theta_i - gamma + rho (d theta_i + sum_j theta_j)
    let mut rhs = &state.theta * (eta + rho * degree) - &state.gamma;
    rhs.scaled_add(2.0 * sample.y, &sample.z);
    for n in neighbor_thetas {
        rhs.scaled_add(rho, n);
    }
    let z = &sample.z;
    let zz = z.dot(z);
    let zr = z.dot(&rhs);
    let mut out = rhs / c;
    out.scaled_add(-2.0 * zr / (c * (c + 2.0 * zz)), z);
    Ok(out)
}

/// Per-round quantities measured at `theta_{i,t}` before any update.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub t: usize,
    /// `theta_{i,t} . z_{i,t}` per agent.
    pub margins: Vec<f64>,
    /// `L_{i,t}(theta_{i,t})` per agent.
    pub costs: Vec<f64>,
    pub max_grad_norm: f64,
    pub max_theta_norm: f64,
    pub exchange: ExchangeOutcome,
    /// `|Theta_{t+1} - Theta_hat_{t+1}|_F` after this round's exchange.
    pub error_frob: f64,
}

/// Synchronous simulation of one algorithm over a fixed topology.
#[derive(Debug, Clone)]
pub struct Simulation {
    algorithm: Algorithm,
    topology: Topology,
    hyper: HyperParams,
    agents: Vec<AgentState>,
    combine: Option<Array2<f64>>,
    t: usize,
}

impl Simulation {
    pub fn new(
        algorithm: Algorithm,
        topology: Topology,
        hyper: HyperParams,
        dim: usize,
    ) -> Result<Self> {
        if algorithm == Algorithm::Dokl && hyper.loss.kind != LossKind::Squared {
            return Err(Error::UnsupportedLoss {
                operation: "dokl",
                loss: hyper.loss.kind.to_string(),
            });
        }
        let agents = (0..topology.n())
            .map(|i| AgentState::new(dim, topology.neighbors(i)))
            .collect();
        let combine = (algorithm == Algorithm::RffDokl).then(|| metropolis_weights(&topology));
        Ok(Simulation {
            algorithm,
            topology,
            hyper,
            agents,
            combine,
            t: 1,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.hyper
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    /// Index of the next round to run (starts at 1).
    pub fn round(&self) -> usize {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.agents.first().map_or(0, AgentState::dim)
    }

    /// Stacked `Theta` (agents as rows).
    pub fn theta_stack(&self) -> Array2<f64> {
        stack_rows(self.agents.iter().map(|a| &a.theta), self.dim())
    }

    pub fn gamma_stack(&self) -> Array2<f64> {
        stack_rows(self.agents.iter().map(|a| &a.gamma), self.dim())
    }

    pub fn theta_hat_stack(&self) -> Array2<f64> {
        stack_rows(self.agents.iter().map(|a| &a.theta_hat_self), self.dim())
    }

    /// `|Theta - Theta_hat|_F` for the current state.
    pub fn error_frob(&self) -> f64 {
        self.agents
            .iter()
            .map(|a| {
                a.theta
                    .iter()
                    .zip(&a.theta_hat_self)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Runs round `t` on one sample per agent and advances to `t+1`.
    pub fn step(&mut self, samples: &[Sample]) -> Result<RoundReport> {
        let n = self.agents.len();
        check_len("round samples", n, samples.len())?;
        let dim = self.dim();
        for s in samples {
            check_len("sample features", dim, s.z.len())?;
        }
        let t = self.t;
        let eta = self.hyper.eta.at(t);
        let rho = self.hyper.rho;
        let loss = self.hyper.loss;

        let mut margins = Vec::with_capacity(n);
        let mut costs = Vec::with_capacity(n);
        let mut max_grad_norm = 0.0f64;
        let mut max_theta_norm = 0.0f64;
        let mut slopes = Vec::with_capacity(n);
        let reg = 2.0 * loss.local_lambda();
        for (a, s) in self.agents.iter().zip(samples) {
            let margin = a.theta.dot(&s.z);
            let theta_sq = a.theta.dot(&a.theta);
            // |slope z + reg theta|^2 expanded, so no gradient vector is built here
            let slope = loss.data_loss_slope(margin, s.y);
            let grad_sq = slope * slope * s.z.dot(&s.z) + 2.0 * slope * reg * margin + reg * reg * theta_sq;
            margins.push(margin);
            slopes.push(slope);
            costs.push(loss.data_loss(margin, s.y) + loss.local_lambda() * theta_sq);
            max_grad_norm = max_grad_norm.max(grad_sq.max(0.0).sqrt());
            max_theta_norm = max_theta_norm.max(theta_sq.sqrt());
        }

        let exchange = match self.algorithm {
            Algorithm::Odkla => {
                let next = {
                    let agents = &self.agents;
                    let mut next = Vec::with_capacity(n);
                    for (i, (a, s)) in agents.iter().zip(samples).enumerate() {
                        let neighbors = self.topology.neighbors(i).iter().map(|&j| agents[j].theta.view());
                        next.push(fused_linearized_step(
                            &a.theta, &a.gamma, &s.z, slopes[i], reg, &a.theta, neighbors, rho, eta,
                        ));
                    }
                    next
                };
                self.install_thetas(next);
                let outcome = round_exchange(&mut self.agents, &self.topology, &CommSpec::lossless(), t)?;
                self.exact_dual(rho)?;
                outcome
            }
            Algorithm::QcOdkla => {
                let mut next = Vec::with_capacity(n);
                for ((a, s), &slope) in self.agents.iter().zip(samples).zip(&slopes) {
                    let neighbors = a.theta_hat_neighbors.values().map(|v| v.view());
                    next.push(fused_linearized_step(
                        &a.theta, &a.gamma, &s.z, slope, reg, &a.theta_hat_self, neighbors, rho, eta,
                    ));
                }
                self.install_thetas(next);
                let outcome = round_exchange(&mut self.agents, &self.topology, &self.hyper.comm(), t)?;
                for a in &mut self.agents {
                    a.gamma = qc_dual(a, rho);
                }
                outcome
            }
            Algorithm::RffDokl => {
                let thetas: Vec<_> = self.agents.iter().map(|a| a.theta.clone()).collect();
                let combine = self.combine.as_ref().expect("combine matrix built for rff-dokl");
                let next = rff_dokl_step(&thetas, samples, 1.0 / eta, combine, &loss, &self.topology)?;
                let mut outcome = ExchangeOutcome::default();
                for (a, theta) in self.agents.iter_mut().zip(next) {
                    a.theta_hat_self.assign(&theta);
                    a.theta = theta;
                }
                outcome.counters = CommCounters {
                    triggers: n as u64,
                    bits: n as u64 * dim as u64 * FULL_PRECISION_BITS,
                    clip_events: 0,
                };
                outcome
            }
            Algorithm::Dokl => {
                let next = {
                    let agents = &self.agents;
                    let mut next = Vec::with_capacity(n);
                    for (i, (a, s)) in agents.iter().zip(samples).enumerate() {
                        let neighbors: Vec<_> = self.topology.neighbors(i).iter().map(|&j| agents[j].theta.view()).collect();
                        next.push(dokl_primal(a, s, &neighbors, rho, eta, &loss)?);
                    }
                    next
                };
                self.install_thetas(next);
                let outcome = round_exchange(&mut self.agents, &self.topology, &CommSpec::lossless(), t)?;
                self.exact_dual(rho)?;
                outcome
            }
        };

        self.t += 1;
        Ok(RoundReport {
            t,
            margins,
            costs,
            max_grad_norm,
            max_theta_norm,
            exchange,
            error_frob: self.error_frob(),
        })
    }

    fn install_thetas(&mut self, next: Vec<Array1<f64>>) {
        for (a, theta) in self.agents.iter_mut().zip(next) {
            a.theta = theta;
        }
    }

    fn exact_dual(&mut self, rho: f64) -> Result<()> {
        let gammas = {
            let agents = &self.agents;
            (0..agents.len())
                .map(|i| {
                    let neighbors: Vec<_> = self.topology.neighbors(i).iter().map(|&j| agents[j].theta.view()).collect();
                    odkla_dual(&agents[i], &neighbors, rho)
                })
                .collect::<Result<Vec<_>>>()?
        };
        for (a, g) in self.agents.iter_mut().zip(gammas) {
            a.gamma = g;
        }
        Ok(())
    }
}

pub(crate) fn stack_rows<'a>(rows: impl Iterator<Item = &'a Array1<f64>>, dim: usize) -> Array2<f64> {
    let rows: Vec<_> = rows.collect();
    let mut out = Array2::zeros((rows.len(), dim));
    for (mut dst, src) in out.rows_mut().into_iter().zip(rows) {
        dst.assign(src);
    }
    out
}
