//! Ring buffer holding the delayed velocity trace on the grid `s_j = j/N`.
//!
//! Lag `j` stores `u_t(1, t − j·dt)`, i.e. `w(j/N, t)`, with `dt = τ/N`.

use std::io::{self, Write};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DelayError {
    #[error("history needs at least one step, got {0}")]
    EmptyHistory(usize),
    #[error("delay must be positive, got {0}")]
    NonPositiveDelay(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer {
    samples: Vec<f64>,
    head: usize,
    n_hist: usize,
    tau: f64,
    dt: f64,
}

impl HistoryBuffer {
    /// Lag `j ≥ 1` is filled with `f0(−j·dt)`; lag 0 with `f0(0)` until the
    /// current trace is set.
    pub fn new(tau: f64, n_hist: usize, f0: impl Fn(f64) -> f64) -> Result<Self, DelayError> {
        if n_hist < 1 {
            return Err(DelayError::EmptyHistory(n_hist));
        }
        if !(tau > 0.0) {
            return Err(DelayError::NonPositiveDelay(tau));
        }
        let dt = tau / n_hist as f64;
        let samples = (0..=n_hist).map(|j| f0(-(j as f64) * dt) + 0.0).collect();
        Ok(HistoryBuffer { samples, head: 0, n_hist, tau, dt })
    }

    pub fn zeros(tau: f64, n_hist: usize) -> Result<Self, DelayError> {
        Self::new(tau, n_hist, |_| 0.0)
    }

    pub fn n_hist(&self) -> usize {
        self.n_hist
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn index(&self, lag: usize) -> usize {
        (self.head + lag) % (self.n_hist + 1)
    }

    /// Value pushed `lag` steps ago (`lag ≤ N`).
    pub fn sample(&self, lag: usize) -> f64 {
        assert!(lag <= self.n_hist, "lag {lag} beyond history length {}", self.n_hist);
        self.samples[self.index(lag)]
    }

    /// Overwrites the lag-0 value.
    pub fn set_current(&mut self, value: f64) {
        let i = self.index(0);
        self.samples[i] = value;
    }

    pub fn current(&self) -> f64 {
        self.sample(0)
    }

    /// `w(1, t) = u_t(1, t − τ)`.
    pub fn delayed(&self) -> f64 {
        self.sample(self.n_hist)
    }

    /// Mean of the delayed trace over the coming step, `(w_N + w_{N−1})/2`.
    pub fn delayed_mean(&self) -> f64 {
        0.5 * (self.sample(self.n_hist) + self.sample(self.n_hist - 1))
    }

    /// Stores `value` as the new lag 0 and returns the new `w(1, t)`.
    pub fn push_and_sample(&mut self, value: f64) -> f64 {
        self.head = (self.head + self.n_hist) % (self.n_hist + 1);
        self.samples[self.head] = value;
        self.delayed()
    }

    /// Samples ordered by lag 0..=N.
    pub fn to_vec(&self) -> Vec<f64> {
        (0..=self.n_hist).map(|j| self.sample(j)).collect()
    }

    /// `∫_0^1 ρ(s) w(s)² ds` by the cell-mean rule: each cell contributes
    /// `ρ(s_mid) · ((w_j + w_{j+1})/2)² / N`.
    ///
    /// With this rule one step of the history shifts the energy by exactly
    /// `dt·(new cell² − dropped cell²)/τ`, which matches the trapezoidal
    /// time discretization of the trace.
    pub fn weighted_square_integral(&self, weight: impl Fn(f64) -> f64) -> f64 {
        let n = self.n_hist as f64;
        (0..self.n_hist)
            .map(|j| {
                let m = 0.5 * (self.sample(j) + self.sample(j + 1));
                weight((j as f64 + 0.5) / n) * m * m
            })
            .sum::<f64>()
            / n
    }

    /// `(γτ/2) ∫ w²`.
    pub fn energy(&self, gamma: f64) -> f64 {
        0.5 * gamma * self.tau * self.weighted_square_integral(|_| 1.0)
    }

    /// `lag,value` rows with the lag in time units.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "lag,value")?;
        for j in 0..=self.n_hist {
            writeln!(out, "{},{}", j as f64 * self.dt, self.sample(j))?;
        }
        Ok(())
    }
}
