//! Instantaneous local costs `l(theta . z, y) + (lambda / N) |theta|^2`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `(theta . z - y)^2`, no one-half factor.
    Squared,
    /// `log(1 + exp(-y theta . z))`, labels in {-1, +1}.
    Logistic,
    /// `max(0, 1 - y theta . z)`, labels in {-1, +1}.
    Hinge,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Squared => "squared",
            LossKind::Logistic => "logistic",
            LossKind::Hinge => "hinge",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "squared" => Ok(LossKind::Squared),
            "logistic" => Ok(LossKind::Logistic),
            "hinge" => Ok(LossKind::Hinge),
            other => Err(format!("unknown loss `{other}` (expected squared, logistic or hinge)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub lambda: f64,
    pub n_agents: usize,
}

impl LossSpec {
    pub fn new(kind: LossKind, lambda: f64, n_agents: usize) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
        }
        if n_agents == 0 {
            return Err(Error::InvalidParameter("n_agents must be >= 1".into()));
        }
        Ok(LossSpec {
            kind,
            lambda,
            n_agents,
        })
    }

    pub fn squared(lambda: f64, n_agents: usize) -> Self {
        LossSpec {
            kind: LossKind::Squared,
            lambda,
            n_agents,
        }
    }

    /// Per-agent regularization weight `lambda / N`.
    pub fn local_lambda(&self) -> f64 {
        self.lambda / self.n_agents as f64
    }

    /// Loss of the raw prediction `margin = theta . z`, without the regularizer.
    pub fn data_loss(&self, margin: f64, y: f64) -> f64 {
        match self.kind {
            LossKind::Squared => (margin - y) * (margin - y),
            LossKind::Logistic => softplus(-y * margin),
            LossKind::Hinge => (1.0 - y * margin).max(0.0),
        }
    }

    /// Derivative of [`LossSpec::data_loss`] with respect to the margin.
    pub fn data_loss_slope(&self, margin: f64, y: f64) -> f64 {
        match self.kind {
            LossKind::Squared => 2.0 * (margin - y),
            // -y * e^{-ym} / (1 + e^{-ym}) = -y * sigmoid(-ym)
            LossKind::Logistic => -y * sigmoid(-y * margin),
            LossKind::Hinge => {
                if 1.0 - y * margin > 0.0 {
                    -y
                } else {
                    0.0
                }
            }
        }
    }

    pub fn cost(&self, theta: ArrayView1<f64>, z: ArrayView1<f64>, y: f64) -> Result<f64> {
        check_len("loss cost", theta.len(), z.len())?;
        Ok(self.cost_unchecked(theta, z, y))
    }

    pub(crate) fn cost_unchecked(&self, theta: ArrayView1<f64>, z: ArrayView1<f64>, y: f64) -> f64 {
        let margin = theta.dot(&z);
        self.data_loss(margin, y) + self.local_lambda() * theta.dot(&theta)
    }

    /// Gradient (a subgradient for hinge) of [`LossSpec::cost`] in `theta`.
    pub fn gradient(
        &self,
        theta: ArrayView1<f64>,
        z: ArrayView1<f64>,
        y: f64,
    ) -> Result<Array1<f64>> {
        check_len("loss gradient", theta.len(), z.len())?;
        let slope = self.data_loss_slope(theta.dot(&z), y);
        let reg = 2.0 * self.local_lambda();
        let mut g = Array1::zeros(theta.len());
        ndarray::Zip::from(&mut g)
            .and(&theta)
            .and(&z)
            .for_each(|g, &t, &zz| *g = slope * zz + reg * t);
        Ok(g)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
