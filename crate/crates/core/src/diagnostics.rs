//! Energy, Lyapunov functional, dissipation residual, and decay-rate fit.

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::constants::{self, ConstantsReport};
use crate::delay::HistoryBuffer;
use crate::discretization::DiscreteOperators;
use crate::model::BeamProblem;

/// The four summands of the energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub bending: f64,
    pub tension: f64,
    pub history: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.kinetic + self.bending + self.tension + self.history
    }
}

/// `½ v·Mv`, `½ u·K_σu`, `½ u·K_qu`, `(γτ/2)∫w²`.
pub fn energy_parts(
    u: &DVector<f64>,
    v: &DVector<f64>,
    history: &HistoryBuffer,
    ops: &DiscreteOperators,
    gamma: f64,
) -> EnergyParts {
    EnergyParts {
        kinetic: 0.5 * v.dot(&(&ops.mass * v)),
        bending: 0.5 * u.dot(&(&ops.stiff_sigma * u)),
        tension: 0.5 * u.dot(&(&ops.stiff_q * u)),
        history: history.energy(gamma),
    }
}

pub fn energy(u: &DVector<f64>, v: &DVector<f64>, history: &HistoryBuffer, ops: &DiscreteOperators, gamma: f64) -> f64 {
    energy_parts(u, v, history, ops, gamma).total()
}

/// `G = ∫ v (2x u' + (ι/2) u) + γτ ∫ e^{-2τs} w²`.
pub fn lyapunov_g(
    u: &DVector<f64>,
    v: &DVector<f64>,
    history: &HistoryBuffer,
    ops: &DiscreteOperators,
    gamma: f64,
    iota_sigma_q: f64,
) -> f64 {
    let tau = history.tau();
    let cross = 2.0 * v.dot(&(&ops.cross * u)) + 0.5 * iota_sigma_q * v.dot(&(&ops.mass * u));
    cross + gamma * tau * history.weighted_square_integral(|s| (-2.0 * tau * s).exp())
}

/// `(E1 − E0)/dt + C (a² + b²)` with `a`, `b` the step means of the tip
/// velocity and of the delayed tip velocity.
pub fn dissipation_residual(e0: f64, e1: f64, dt: f64, c_k: f64, a: f64, b: f64) -> f64 {
    (e1 - e0) / dt + c_k * (a * a + b * b)
}

/// Residual between two consecutive output rows (stride 1).
pub fn row_residual(prev: &DiagnosticsRow, next: &DiagnosticsRow, c_k: f64) -> f64 {
    let a = 0.5 * (prev.ut_tip + next.ut_tip);
    let b = 0.5 * (prev.ut_delayed + next.ut_delayed);
    dissipation_residual(prev.energy, next.energy, next.t - prev.t, c_k, a, b)
}

/// Constants the diagnostics need, taken from a constants report or, for
/// runs outside the admissible set, from the problem alone (ε = 0).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsContext {
    pub gamma: f64,
    pub iota_sigma_q: f64,
    pub c_k1k2: f64,
    pub epsilon: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub m: Option<f64>,
}

impl DiagnosticsContext {
    pub fn from_report(report: &ConstantsReport) -> Self {
        DiagnosticsContext {
            gamma: report.gamma,
            iota_sigma_q: report.iota_sigma_q,
            c_k1k2: report.c_k1k2,
            epsilon: report.epsilon,
            theta1: report.theta1,
            theta2: report.theta2,
            m: Some(report.m),
        }
    }

    pub fn energy_only(problem: &BeamProblem) -> Self {
        DiagnosticsContext {
            gamma: problem.gamma,
            iota_sigma_q: problem.iota_sigma_q(),
            c_k1k2: constants::dissipation_constant(problem.kappa1, problem.kappa2, problem.gamma).unwrap_or(0.0),
            epsilon: 0.0,
            theta1: 1.0,
            theta2: 1.0,
            m: None,
        }
    }

    pub fn envelope(&self, e0: f64, t: f64) -> Option<f64> {
        self.m.filter(|&m| t >= m).map(|m| (1.0 - t / m).exp() * e0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "E_envelope")]
    pub envelope: Option<f64>,
    pub u_tip: f64,
    pub ut_tip: f64,
    pub ut_delayed: f64,
    /// Residual of the step ending at `t`; absent on the initial row.
    pub diss_residual: Option<f64>,
    pub sandwich_ok: bool,
}

impl DiagnosticsRow {
    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        t: f64,
        u: &DVector<f64>,
        v: &DVector<f64>,
        history: &HistoryBuffer,
        ops: &DiscreteOperators,
        ctx: &DiagnosticsContext,
        e0: Option<f64>,
        diss_residual: Option<f64>,
    ) -> Self {
        let e = energy(u, v, history, ops, ctx.gamma);
        let g = lyapunov_g(u, v, history, ops, ctx.gamma, ctx.iota_sigma_q);
        let l = e + ctx.epsilon * g;
        DiagnosticsRow {
            t,
            energy: e,
            g,
            l,
            envelope: ctx.envelope(e0.unwrap_or(e), t),
            u_tip: ops.trace_value.dot(u),
            ut_tip: ops.trace_value.dot(v),
            ut_delayed: history.delayed(),
            diss_residual,
            sandwich_ok: ctx.theta1 * e <= l && l <= ctx.theta2 * e,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("decay fit needs at least 10 points above the floor, got {0}")]
    TooFewPoints(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum FitStatus {
    Ok,
    /// E never fell below 0.9·E(0): the rate is unreliable.
    InsufficientDecay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EnvelopeStatus {
    Satisfied,
    /// First output time at which E exceeded the envelope.
    Violated { t: f64 },
    /// No output time reached M.
    NotReached,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub omega: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub n_points: usize,
    #[serde(rename = "M_theory")]
    pub m_theory: Option<f64>,
    pub envelope: EnvelopeStatus,
    pub envelope_satisfied: bool,
    pub status: FitStatus,
}

/// Least-squares rate of `log E` on `[t_start, last t]`, keeping points with
/// `E > 1e-14·E(0)`, plus the envelope check for `t ≥ M`.
pub fn fit_decay(rows: &[DiagnosticsRow], t_start: f64, m_theory: Option<f64>) -> Result<DecayFit, DiagnosticsError> {
    let e0 = rows.first().map(|r| r.energy).unwrap_or(0.0);
    let floor = 1e-14 * e0;
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.t >= t_start && r.energy > floor && r.energy > 0.0)
        .map(|r| (r.t, r.energy.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(DiagnosticsError::TooFewPoints(pts.len()));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };

    let envelope = match m_theory {
        None => EnvelopeStatus::NotReached,
        Some(m) => {
            let mut status = EnvelopeStatus::NotReached;
            for r in rows.iter().filter(|r| r.t >= m) {
                if r.energy > (1.0 - r.t / m).exp() * e0 {
                    status = EnvelopeStatus::Violated { t: r.t };
                    break;
                }
                status = EnvelopeStatus::Satisfied;
            }
            status
        }
    };
    let min_e = rows.iter().map(|r| r.energy).fold(f64::INFINITY, f64::min);
    Ok(DecayFit {
        omega: -slope,
        r2,
        window: (pts[0].0, pts[pts.len() - 1].0),
        n_points: pts.len(),
        m_theory,
        envelope_satisfied: envelope == EnvelopeStatus::Satisfied,
        envelope,
        status: if min_e < 0.9 * e0 { FitStatus::Ok } else { FitStatus::InsufficientDecay },
    })
}
