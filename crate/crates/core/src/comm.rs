//! Censored, quantized broadcast of state differences.
//!
//! Each agent keeps `theta_hat`, the state its neighbors believe it has.
//! Per round it forms `h = theta - theta_hat`, decides whether `h` is worth
//! sending, and if so ships the quantizer codes of `h`. Sender and receivers
//! apply the same reconstructed increment, so every copy of `theta_hat_i`
//! stays bit-identical.

use std::io::Write;

use ndarray::{Array1, ArrayView1};

use crate::engine::AgentState;
use crate::error::{Error, Result};
use crate::graph::Topology;

/// Bits charged per element for unquantized transmissions.
pub const FULL_PRECISION_BITS: u64 = 32;

/// Uniform midpoint quantizer on `[lo, hi)` with `2^bits` levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerSpec {
    bits: u32,
    lo: f64,
    hi: f64,
    delta: f64,
}

impl QuantizerSpec {
    pub fn new(bits: u32, lo: f64, hi: f64) -> Result<Self> {
        if !(1..=31).contains(&bits) {
            return Err(Error::InvalidParameter(format!(
                "quantizer bits must be in 1..=31, got {bits}"
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidParameter(format!(
                "quantizer range [{lo}, {hi}) is empty or not finite"
            )));
        }
        let delta = (hi - lo) / (1u64 << bits) as f64;
        Ok(QuantizerSpec {
            bits,
            lo,
            hi,
            delta,
        })
    }

    /// Quantizer on `[-range, range)`.
    pub fn symmetric(bits: u32, range: f64) -> Result<Self> {
        Self::new(bits, -range, range)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn levels(&self) -> u32 {
        1 << self.bits
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Code of a single element and whether it had to be clipped.
    pub fn code(&self, value: f64) -> (u32, bool) {
        let top = self.hi - 0.5 * self.delta;
        let clipped = !(value >= self.lo && value < self.hi);
        let v = if value.is_nan() {
            self.lo
        } else {
            value.clamp(self.lo, top)
        };
        let k = ((v - self.lo) / self.delta).floor() as i64;
        (k.clamp(0, self.levels() as i64 - 1) as u32, clipped)
    }

    /// Midpoint of interval `code`.
    pub fn reconstruct(&self, code: u32) -> Result<f64> {
        if code >= self.levels() {
            return Err(Error::CodeOutOfRange {
                code,
                levels: self.levels(),
            });
        }
        Ok(self.lo + (code as f64 + 0.5) * self.delta)
    }

    pub fn quantize(&self, h: ArrayView1<f64>) -> Quantized {
        let mut clipped = 0;
        let codes = h
            .iter()
            .map(|&v| {
                let (k, c) = self.code(v);
                clipped += usize::from(c);
                k
            })
            .collect();
        Quantized { codes, clipped }
    }

    pub fn dequantize(&self, codes: &[u32]) -> Result<Array1<f64>> {
        codes.iter().map(|&k| self.reconstruct(k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Quantized {
    pub codes: Vec<u32>,
    /// Elements that fell outside `[lo, hi)` and were clamped.
    pub clipped: usize,
}

/// Transmit iff `|h| - alpha * beta^t >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CensorSpec {
    pub alpha: f64,
    pub beta: f64,
    pub enabled: bool,
}

impl CensorSpec {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("censor alpha must be > 0, got {alpha}")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "censor beta must lie in (0, 1), got {beta}"
            )));
        }
        Ok(CensorSpec {
            alpha,
            beta,
            enabled: true,
        })
    }

    pub fn disabled() -> Self {
        CensorSpec {
            alpha: 1.0,
            beta: 0.5,
            enabled: false,
        }
    }

    pub fn threshold(&self, t: usize) -> f64 {
        self.alpha * self.beta.powi(t as i32)
    }

    pub fn should_transmit(&self, h_norm: f64, t: usize) -> bool {
        !self.enabled || h_norm - self.threshold(t) >= 0.0
    }
}

pub fn censor_decision(h: ArrayView1<f64>, spec: &CensorSpec, t: usize) -> bool {
    spec.should_transmit(h.dot(&h).sqrt(), t)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Quantizer codes of the difference `h`.
    Codes(Vec<u32>),
    /// The new state itself, at full precision.
    Exact(Array1<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub sender: usize,
    pub round: usize,
    pub payload: Payload,
    pub clipped: usize,
}

impl Message {
    pub fn bits(&self, quantizer: Option<&QuantizerSpec>) -> u64 {
        match &self.payload {
            Payload::Codes(codes) => {
                codes.len() as u64 * quantizer.map_or(FULL_PRECISION_BITS, |q| q.bits() as u64)
            }
            Payload::Exact(v) => v.len() as u64 * FULL_PRECISION_BITS,
        }
    }
}

/// Censoring plus optional quantization. `quantizer: None` sends exact states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommSpec {
    pub censor: CensorSpec,
    pub quantizer: Option<QuantizerSpec>,
}

impl CommSpec {
    pub fn lossless() -> Self {
        CommSpec {
            censor: CensorSpec::disabled(),
            quantizer: None,
        }
    }

    /// Bits one transmission of a `len`-vector costs.
    pub fn bits_per_transmission(&self, len: usize) -> u64 {
        len as u64 * self.quantizer.map_or(FULL_PRECISION_BITS, |q| q.bits() as u64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CommCounters {
    pub triggers: u64,
    pub bits: u64,
    /// Transmissions in which at least one element was clipped.
    pub clip_events: u64,
}

impl CommCounters {
    pub fn add(&mut self, other: &CommCounters) {
        self.triggers += other.triggers;
        self.bits += other.bits;
        self.clip_events += other.clip_events;
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExchangeOutcome {
    pub messages: Vec<Message>,
    pub counters: CommCounters,
}

impl ExchangeOutcome {
    pub fn clipped(&self) -> bool {
        self.counters.clip_events > 0
    }
}

/// One synchronous communication round.
///
/// Every agent's `theta` must already hold `theta_{t+1}`. All decisions are
/// taken from the round-`t` broadcast state before any table is touched.
pub fn round_exchange(
    agents: &mut [AgentState],
    topology: &Topology,
    spec: &CommSpec,
    t: usize,
) -> Result<ExchangeOutcome> {
    let mut outcome = ExchangeOutcome::default();
    let mut increments: Vec<Option<Increment>> = Vec::with_capacity(agents.len());
    for (i, agent) in agents.iter().enumerate() {
        let h = &agent.theta - &agent.theta_hat_self;
        if !censor_decision(h.view(), &spec.censor, t) {
            increments.push(None);
            continue;
        }
        let (message, increment) = match &spec.quantizer {
            Some(q) => {
                let quantized = q.quantize(h.view());
                let step = q.dequantize(&quantized.codes)?;
                (
                    Message {
                        sender: i,
                        round: t,
                        payload: Payload::Codes(quantized.codes),
                        clipped: quantized.clipped,
                    },
                    Increment::Add(step),
                )
            }
            None => (
                Message {
                    sender: i,
                    round: t,
                    payload: Payload::Exact(agent.theta.clone()),
                    clipped: 0,
                },
                Increment::Replace(agent.theta.clone()),
            ),
        };
        outcome.counters.triggers += 1;
        outcome.counters.bits += message.bits(spec.quantizer.as_ref());
        if message.clipped > 0 {
            outcome.counters.clip_events += 1;
        }
        outcome.messages.push(message);
        increments.push(Some(increment));
    }

    for (i, increment) in increments.iter().enumerate() {
        let Some(increment) = increment else { continue };
        increment.apply(&mut agents[i].theta_hat_self);
        for &j in topology.neighbors(i) {
            let copy = agents[j]
                .theta_hat_neighbors
                .get_mut(&i)
                .expect("neighbor table covers every neighbor");
            increment.apply(copy);
        }
    }
    Ok(outcome)
}

enum Increment {
    Add(Array1<f64>),
    Replace(Array1<f64>),
}

impl Increment {
    fn apply(&self, target: &mut Array1<f64>) {
        match self {
            Increment::Add(step) => *target += step,
            Increment::Replace(value) => target.assign(value),
        }
    }
}

/// Writes one CSV line per transmission: `t,sender,bits,clipped_count`.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "t,sender,bits,clipped_count")?;
        Ok(TraceWriter { out })
    }

    pub fn record(
        &mut self,
        outcome: &ExchangeOutcome,
        quantizer: Option<&QuantizerSpec>,
    ) -> std::io::Result<()> {
        for m in &outcome.messages {
            writeln!(
                self.out,
                "{},{},{},{}",
                m.round,
                m.sender,
                m.bits(quantizer),
                m.clipped
            )?;
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn q3() -> QuantizerSpec {
        QuantizerSpec::symmetric(3, 4.0).unwrap()
    }

    #[test]
    fn quantizer_geometry() {
        let q = q3();
        assert_eq!(q.levels(), 8);
        assert_eq!(q.delta(), 1.0);
        assert!(QuantizerSpec::new(0, -1.0, 1.0).is_err());
        assert!(QuantizerSpec::new(3, 1.0, 1.0).is_err());
    }

    #[test]
    fn quantize_examples() {
        let q = q3();
        assert_eq!(q.code(0.3), (4, false));
        assert_eq!(q.reconstruct(4).unwrap(), 0.5);
        assert_eq!(q.code(-4.0), (0, false));
        assert_eq!(q.reconstruct(0).unwrap(), -3.5);
        assert_eq!(q.code(3.999), (7, false));
        assert_eq!(q.reconstruct(7).unwrap(), 3.5);
    }

    #[test]
    fn out_of_range_is_clipped_and_counted() {
        let q = q3();
        assert_eq!(q.code(4.0), (7, true));
        assert_eq!(q.code(100.0), (7, true));
        assert_eq!(q.code(-4.5), (0, true));
        let out = q.quantize(array![0.0, 9.0, -9.0].view());
        assert_eq!(out.clipped, 2);
        assert_eq!(out.codes, vec![4, 7, 0]);
    }

    #[test]
    fn dequantize_rejects_bad_codes() {
        assert!(matches!(
            q3().dequantize(&[1, 8]),
            Err(Error::CodeOutOfRange { code: 8, levels: 8 })
        ));
    }

    #[test]
    fn censor_examples() {
        let spec = CensorSpec::new(4.0, 0.99).unwrap();
        assert!(censor_decision(array![4.0, 0.0].view(), &spec, 1));
        assert!(!censor_decision(array![0.0, 3.9].view(), &spec, 1));
        assert!(!censor_decision(array![0.0, 0.0].view(), &spec, 1));
        assert!(!censor_decision(array![0.0, 0.0].view(), &spec, 500));
        assert!(censor_decision(array![0.0].view(), &CensorSpec::disabled(), 1));
    }

    #[test]
    fn censor_tie_transmits() {
        let spec = CensorSpec::new(2.0, 0.5).unwrap();
        assert!(spec.should_transmit(1.0, 1));
        assert!(CensorSpec::new(0.0, 0.5).is_err());
        assert!(CensorSpec::new(1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn reconstruction_error_within_half_step(h in prop::collection::vec(-4.0f64..4.0, 1..64)) {
            let q = q3();
            let h = Array1::from(h);
            let out = q.quantize(h.view());
            prop_assert_eq!(out.clipped, 0);
            let back = q.dequantize(&out.codes).unwrap();
            for (a, b) in back.iter().zip(&h) {
                prop_assert!((a - b).abs() <= q.delta() / 2.0);
            }
        }

        #[test]
        fn grid_points_are_fixed(codes in prop::collection::vec(0u32..32, 1..32), bits in 5u32..8) {
            let q = QuantizerSpec::new(bits, -1.5, 2.5).unwrap();
            let grid = q.dequantize(&codes).unwrap();
            let again = q.dequantize(&q.quantize(grid.view()).codes).unwrap();
            prop_assert_eq!(grid, again);
        }
    }
}
