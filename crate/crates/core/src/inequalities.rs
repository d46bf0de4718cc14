//! Quadrature checks of the weighted Hardy and trace inequalities on random
//! polynomial probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{BeamProblem, Degeneracy};
use crate::quadrature::{integrate_unit, QuadratureError};

pub const MAX_DEGREE: usize = 8;
pub const QUAD_TOL: f64 = 1e-11;
/// A ratio above `1 + VIOLATION_SLACK` counts as a violation.
pub const VIOLATION_SLACK: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InequalityError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("probe has degree {0}, at most {MAX_DEGREE} supported")]
    DegreeTooHigh(usize),
    #[error("probe does not vanish at 0 (constant term {0})")]
    NonzeroAtOrigin(f64),
    #[error("probe slope at 0 is {0}, the weakly degenerate space requires 0")]
    NonzeroSlopeAtOrigin(f64),
}

/// `u(x) = Σ c_k x^k` with `c_0 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeFunction {
    pub coeffs: Vec<f64>,
}

impl ProbeFunction {
    pub fn new(coeffs: Vec<f64>) -> Result<Self, InequalityError> {
        let degree = coeffs.len().saturating_sub(1);
        if degree > MAX_DEGREE {
            return Err(InequalityError::DegreeTooHigh(degree));
        }
        match coeffs.first() {
            Some(&c) if c != 0.0 => Err(InequalityError::NonzeroAtOrigin(c)),
            _ => Ok(ProbeFunction { coeffs }),
        }
    }

    pub fn zero() -> Self {
        ProbeFunction { coeffs: vec![0.0] }
    }

    /// Random degree and coefficients in [−1, 1]. In the weakly degenerate
    /// space the linear term is dropped as well.
    pub fn random<R: Rng>(rng: &mut R, space: Degeneracy) -> Self {
        let lowest = match space {
            Degeneracy::WD => 2,
            Degeneracy::SD => 1,
        };
        let degree = rng.gen_range(lowest..=MAX_DEGREE);
        let mut coeffs = vec![0.0; degree + 1];
        for c in &mut coeffs[lowest..] {
            *c = rng.gen_range(-1.0..=1.0);
        }
        ProbeFunction { coeffs }
    }

    pub fn check_space(&self, space: Degeneracy) -> Result<(), InequalityError> {
        let slope = self.first(0.0);
        if space == Degeneracy::WD && slope != 0.0 {
            return Err(InequalityError::NonzeroSlopeAtOrigin(slope));
        }
        Ok(())
    }

    pub fn value(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn first(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + k as f64 * c)
    }

    pub fn second(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + (k * (k - 1)) as f64 * c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityPair {
    pub lhs: f64,
    pub rhs: f64,
}

impl InequalityPair {
    /// `lhs/rhs`, with `0/0 = 0`.
    pub fn ratio(&self) -> f64 {
        if self.rhs == 0.0 {
            if self.lhs == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.lhs / self.rhs
        }
    }

    pub fn holds(&self) -> bool {
        self.ratio() <= 1.0 + VIOLATION_SLACK
    }
}

/// Integrals shared by both checks.
#[derive(Debug, Clone, Copy)]
struct Norms {
    l2: f64,
    slope: f64,
    q_slope: f64,
    sigma_curv: f64,
}

fn norms(problem: &BeamProblem, p: &ProbeFunction) -> Result<Norms, InequalityError> {
    let l2 = integrate_unit(|x| p.value(x).powi(2), QUAD_TOL)?;
    let slope = integrate_unit(|x| p.first(x).powi(2), QUAD_TOL)?;
    let q_slope = integrate_unit(|x| problem.q.eval(x) * p.first(x).powi(2), QUAD_TOL)?;
    let sigma_curv = integrate_unit(|x| problem.sigma.eval(x) * p.second(x).powi(2), QUAD_TOL)?;
    Ok(Norms { l2, slope, q_slope, sigma_curv })
}

fn curvature_factor(problem: &BeamProblem) -> f64 {
    1.0 / (problem.sigma_at_tip() * (2.0 - problem.iota_sigma))
}

/// Hardy chain `‖u‖² ≤ ‖u'‖² ≤ ‖√q u'‖²/q0` and the tip-slope bound
/// `u'(1)² ≤ 2(‖√q u'‖²/q0 + ‖√σ u''‖²/(σ(1)(2 − ι_σ)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RemarkInequalities {
    pub hardy_l2: InequalityPair,
    pub hardy_weighted: InequalityPair,
    pub trace_slope: InequalityPair,
}

pub fn check_remark_inequalities(
    problem: &BeamProblem,
    probe: &ProbeFunction,
) -> Result<RemarkInequalities, InequalityError> {
    probe.check_space(problem.degeneracy)?;
    let n = norms(problem, probe)?;
    let q0 = problem.q0();
    Ok(RemarkInequalities {
        hardy_l2: InequalityPair { lhs: n.l2, rhs: n.slope },
        hardy_weighted: InequalityPair { lhs: n.slope, rhs: n.q_slope / q0 },
        trace_slope: InequalityPair {
            lhs: probe.first(1.0).powi(2),
            rhs: 2.0 * (n.q_slope / q0 + n.sigma_curv * curvature_factor(problem)),
        },
    })
}

/// Tip bounds in terms of `|||y|||² = ∫σy''² + qy'²`, each as a two-link chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceBounds {
    /// `y(1)² ≤ ‖√q y'‖²/q0`
    pub value_weighted: InequalityPair,
    /// `‖√q y'‖²/q0 ≤ |||y|||²/q0`
    pub value_energy: InequalityPair,
    /// `y'(1)² ≤ 2(‖√σ y''‖²/(σ(1)(2 − ι_σ)) + ‖√q y'‖²/q0)`
    pub slope_split: InequalityPair,
    /// split form `≤ 2 max{1/(σ(1)(2 − ι_σ)), 1/q0} |||y|||²`
    pub slope_energy: InequalityPair,
}

pub fn check_trace_bounds(
    problem: &BeamProblem,
    probe: &ProbeFunction,
) -> Result<TraceBounds, InequalityError> {
    probe.check_space(problem.degeneracy)?;
    let n = norms(problem, probe)?;
    let q0 = problem.q0();
    let cf = curvature_factor(problem);
    let energy = n.sigma_curv + n.q_slope;
    let split = 2.0 * (n.sigma_curv * cf + n.q_slope / q0);
    Ok(TraceBounds {
        value_weighted: InequalityPair { lhs: probe.value(1.0).powi(2), rhs: n.q_slope / q0 },
        value_energy: InequalityPair { lhs: n.q_slope / q0, rhs: energy / q0 },
        slope_split: InequalityPair { lhs: probe.first(1.0).powi(2), rhs: split },
        slope_energy: InequalityPair { lhs: split, rhs: 2.0 * cf.max(1.0 / q0) * energy },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityStats {
    pub inequality: &'static str,
    pub max_ratio: f64,
    pub violations: usize,
    pub probes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignSummary {
    pub sigma: String,
    pub degeneracy: Degeneracy,
    pub seed: u64,
    pub probes: usize,
    pub inequalities: Vec<InequalityStats>,
}

impl CampaignSummary {
    pub fn total_violations(&self) -> usize {
        self.inequalities.iter().map(|s| s.violations).sum()
    }

    pub fn max_ratio(&self) -> f64 {
        self.inequalities.iter().map(|s| s.max_ratio).fold(0.0, f64::max)
    }
}

const NAMES: [&str; 7] = [
    "hardy_l2",
    "hardy_weighted",
    "trace_slope",
    "value_weighted",
    "value_energy",
    "slope_split",
    "slope_energy",
];

fn probe_pairs(problem: &BeamProblem, probe: &ProbeFunction) -> Result<[InequalityPair; 7], InequalityError> {
    let r = check_remark_inequalities(problem, probe)?;
    let t = check_trace_bounds(problem, probe)?;
    Ok([
        r.hardy_l2,
        r.hardy_weighted,
        r.trace_slope,
        t.value_weighted,
        t.value_energy,
        t.slope_split,
        t.slope_energy,
    ])
}

/// Probe `i` draws from its own ChaCha stream, so the summary does not
/// depend on the thread count.
pub fn run_campaign(problem: &BeamProblem, n_probes: usize, seed: u64) -> Result<CampaignSummary, InequalityError> {
    let results: Vec<[InequalityPair; 7]> = (0..n_probes)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let probe = ProbeFunction::random(&mut rng, problem.degeneracy);
            probe_pairs(problem, &probe)
        })
        .collect::<Result<_, _>>()?;
    let inequalities = NAMES
        .iter()
        .enumerate()
        .map(|(k, &name)| InequalityStats {
            inequality: name,
            max_ratio: results.iter().map(|r| r[k].ratio()).fold(0.0, f64::max),
            violations: results.iter().filter(|r| !r[k].holds()).count(),
            probes: n_probes,
        })
        .collect();
    Ok(CampaignSummary {
        sigma: problem.sigma.label(),
        degeneracy: problem.degeneracy,
        seed,
        probes: n_probes,
        inequalities,
    })
}
