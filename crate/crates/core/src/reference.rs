//! Dense matrix-form recursions for ODKLA and QC-ODKLA.
//!
//! This is the stacked form of the per-agent updates:
//!
//! ```text
//! ODKLA:    Theta' = (eta I + 2 rho D)^-1 [(rho (D + W) + eta I) Theta - Gamma - G]
//!           Gamma' = Gamma + rho (D - W) Theta'
//! QC-ODKLA: Theta' = Theta - (eta I + 2 rho D)^-1 [G + rho (D - W) Theta_hat + Gamma]
//!           Gamma' = Gamma + rho (D - W) Theta_hat'
//! ```
//!
//! It shares no code with the per-agent engine beyond the loss gradient and
//! the quantizer, and serves as the correctness oracle for it.

use ndarray::{Array1, Array2, Axis};

use crate::comm::{CommSpec, QuantizerSpec};
use crate::engine::{EtaSchedule, Sample};
use crate::error::{check_len, Result};
use crate::graph::Topology;
use crate::losses::LossSpec;

/// Stacked state `(Theta_t, Gamma_t, Theta_hat_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixState {
    pub theta: Array2<f64>,
    pub gamma: Array2<f64>,
    pub theta_hat: Array2<f64>,
}

impl MatrixState {
    pub fn zeros(n: usize, dim: usize) -> Self {
        MatrixState {
            theta: Array2::zeros((n, dim)),
            gamma: Array2::zeros((n, dim)),
            theta_hat: Array2::zeros((n, dim)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    Odkla,
    QcOdkla(CommSpec),
}

#[derive(Debug, Clone)]
pub struct MatrixReference {
    degree: Array2<f64>,
    adjacency: Array2<f64>,
    laplacian: Array2<f64>,
    rho: f64,
    eta: EtaSchedule,
    loss: LossSpec,
    variant: Variant,
}

impl MatrixReference {
    pub fn new(topology: &Topology, rho: f64, eta: EtaSchedule, loss: LossSpec, variant: Variant) -> Self {
        let to_f64 = |m: Array2<i64>| m.mapv(|v| v as f64);
        MatrixReference {
            degree: to_f64(topology.degree_matrix()),
            adjacency: to_f64(topology.adjacency()),
            laplacian: to_f64(topology.laplacian()),
            rho,
            eta,
            loss,
            variant,
        }
    }

    /// Row-wise gradient stack `dL_t(Theta_t)`.
    pub fn gradient_stack(&self, theta: &Array2<f64>, samples: &[Sample]) -> Result<Array2<f64>> {
        check_len("reference samples", theta.nrows(), samples.len())?;
        let mut g = Array2::zeros(theta.raw_dim());
        for ((mut row, th), s) in g.rows_mut().into_iter().zip(theta.rows()).zip(samples) {
            row.assign(&self.loss.gradient(th, s.z.view(), s.y)?);
        }
        Ok(g)
    }

    /// Primal recursion, with the gradient stack supplied by the caller.
    pub fn primal(&self, state: &MatrixState, grad: &Array2<f64>, t: usize) -> Array2<f64> {
        let eta = self.eta.at(t);
        let n = state.theta.nrows();
        let inv_diag: Array1<f64> =
            Array1::from_shape_fn(n, |i| 1.0 / (eta + 2.0 * self.rho * self.degree[[i, i]]));
        match self.variant {
            Variant::Odkla => {
                let mix = &self.degree + &self.adjacency;
                let bracket = (&mix * self.rho).dot(&state.theta) + &state.theta * eta
                    - &state.gamma
                    - grad;
                scale_rows(&bracket, &inv_diag)
            }
            Variant::QcOdkla(_) => {
                let bracket =
                    grad + &(&self.laplacian * self.rho).dot(&state.theta_hat) + &state.gamma;
                &state.theta - &scale_rows(&bracket, &inv_diag)
            }
        }
    }

    /// Broadcast update `Theta_hat' = Theta_hat + M Q(Theta' - Theta_hat)`, with
    /// `M` the diagonal transmit mask. Returns the mask.
    pub fn broadcast(&self, state: &mut MatrixState, t: usize) -> Result<Vec<bool>> {
        match self.variant {
            Variant::Odkla => {
                state.theta_hat.assign(&state.theta);
                Ok(vec![true; state.theta.nrows()])
            }
            Variant::QcOdkla(comm) => {
                let diff = &state.theta - &state.theta_hat;
                let mut mask = Vec::with_capacity(diff.nrows());
                for (i, h) in diff.rows().into_iter().enumerate() {
                    let send = comm.censor.should_transmit(h.dot(&h).sqrt(), t);
                    mask.push(send);
                    if !send {
                        continue;
                    }
                    match comm.quantizer {
                        Some(q) => {
                            let step = dequantized(&q, h)?;
                            let mut row = state.theta_hat.row_mut(i);
                            row += &step;
                        }
                        None => state.theta_hat.row_mut(i).assign(&state.theta.row(i)),
                    }
                }
                Ok(mask)
            }
        }
    }

    pub fn dual(&self, state: &MatrixState) -> Array2<f64> {
        let source = match self.variant {
            Variant::Odkla => &state.theta,
            Variant::QcOdkla(_) => &state.theta_hat,
        };
        &state.gamma + &(&self.laplacian * self.rho).dot(source)
    }

    /// One full round: primal, broadcast, dual.
    pub fn step(&self, state: &mut MatrixState, samples: &[Sample], t: usize) -> Result<()> {
        let grad = self.gradient_stack(&state.theta, samples)?;
        state.theta = self.primal(state, &grad, t);
        self.broadcast(state, t)?;
        state.gamma = self.dual(state);
        Ok(())
    }
}

fn dequantized(q: &QuantizerSpec, h: ndarray::ArrayView1<f64>) -> Result<Array1<f64>> {
    q.dequantize(&q.quantize(h).codes)
}

fn scale_rows(m: &Array2<f64>, factors: &Array1<f64>) -> Array2<f64> {
    m * &factors.view().insert_axis(Axis(1))
}

/// Functional form of one ODKLA/QC-ODKLA round: `(Theta_t, Gamma_t, Theta_hat_t)`
/// to the state at `t+1`.
pub fn matrix_reference_step(
    state: &MatrixState,
    samples: &[Sample],
    reference: &MatrixReference,
    t: usize,
) -> Result<MatrixState> {
    let mut next = state.clone();
    reference.step(&mut next, samples, t)?;
    Ok(next)
}
