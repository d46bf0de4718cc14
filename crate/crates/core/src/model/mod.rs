//! Continuous beam model: coefficients, gains, delay, and the standing
//! hypotheses under which the closed loop is dissipative.

mod coefficient;
pub mod expr;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use coefficient::{CoefficientFn, Table};

/// Default number of uniform samples used to estimate sup-type quantities.
pub const DEFAULT_GRID_N: usize = 1024;

/// Geometric sampling toward the degeneracy: first cell and growth ratio.
const GEOMETRIC_FIRST: f64 = 1e-10;
const GEOMETRIC_RATIO: f64 = 1.2;

/// A sup above this bound is treated as divergent.
const DIVERGENT_SUP: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("flexural rigidity is not positive at x = {x:e} (value {value:e})")]
    NonPositiveSigma { x: f64, value: f64 },
    #[error("degeneracy index sup x|σ'|/σ diverges (reached {value} at x = {x:e})")]
    DivergentSup { x: f64, value: f64 },
    #[error("degeneracy index {iota} outside the admissible range (0, 2)")]
    OutOfAdmissibleRange { iota: f64 },
    #[error("gain condition κ1 > |κ2| fails: κ1 = {kappa1}, κ2 = {kappa2}")]
    GainConditionViolated { kappa1: f64, kappa2: f64 },
    #[error("sampling grid needs at least 64 points, got {0}")]
    GridTooCoarse(usize),
    #[error("bad coefficient table: {0}")]
    BadTable(String),
    #[error("cannot parse expression '{source_text}': {reason}")]
    BadExpression { source_text: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Degeneracy {
    /// Weakly degenerate: clamped slope at the origin.
    WD,
    /// Strongly degenerate: natural moment condition at the origin.
    SD,
}

impl fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Degeneracy::WD => write!(f, "WD"),
            Degeneracy::SD => write!(f, "SD"),
        }
    }
}

/// Closed interval `[lo, hi]` of admissible energy weights γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaWindow {
    pub lo: f64,
    pub hi: f64,
}

impl GammaWindow {
    pub fn contains(&self, gamma: f64) -> bool {
        gamma >= self.lo && gamma <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Bounds `q0 ≤ q ≤ q1`, `|q'| ≤ q2` of the axial force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QBounds {
    pub q0: f64,
    pub q1: f64,
    pub q2: f64,
    /// True when the values were supplied by the user rather than sampled.
    pub supplied: bool,
}

/// The validated continuous problem.
#[derive(Debug, Clone)]
pub struct BeamProblem {
    pub sigma: CoefficientFn,
    pub q: CoefficientFn,
    pub kappa1: f64,
    pub kappa2: f64,
    pub tau: f64,
    pub gamma: f64,
    pub q_bounds: QBounds,
    pub iota_sigma: f64,
    pub degeneracy: Degeneracy,
}

impl BeamProblem {
    /// Builds the problem, sampling ι_σ and the q bounds on the default grid.
    ///
    /// Only failures that make the coefficients unusable are errors; every
    /// standing hypothesis is checked by [`validate`] instead.
    pub fn new(
        sigma: CoefficientFn,
        q: CoefficientFn,
        kappa1: f64,
        kappa2: f64,
        tau: f64,
        gamma: f64,
    ) -> Result<Self, ModelError> {
        let iota_sigma = compute_iota_sigma(&sigma, DEFAULT_GRID_N)?;
        let q_bounds = sample_q_bounds(&q, DEFAULT_GRID_N);
        // Out-of-range indices are reported by `validate`; the boundary
        // treatment still needs a class, so fall back on the breakpoint.
        let degeneracy = classify_degeneracy(iota_sigma).unwrap_or(if iota_sigma < 1.0 {
            Degeneracy::WD
        } else {
            Degeneracy::SD
        });
        Ok(BeamProblem {
            sigma,
            q,
            kappa1,
            kappa2,
            tau,
            gamma,
            q_bounds,
            iota_sigma,
            degeneracy,
        })
    }

    /// Replaces the sampled q bounds with user-supplied values; `validate`
    /// cross-checks them against the coefficient.
    pub fn with_q_bounds(mut self, q0: f64, q1: f64, q2: f64) -> Self {
        self.q_bounds = QBounds {
            q0,
            q1,
            q2,
            supplied: true,
        };
        self
    }

    pub fn with_gains(mut self, kappa1: f64, kappa2: f64, gamma: f64) -> Self {
        self.kappa1 = kappa1;
        self.kappa2 = kappa2;
        self.gamma = gamma;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn q0(&self) -> f64 {
        self.q_bounds.q0
    }

    /// ι_{σ,q} = max{ι_σ, q2/q0}.
    pub fn iota_sigma_q(&self) -> f64 {
        self.iota_sigma.max(self.q_bounds.q2 / self.q_bounds.q0)
    }

    pub fn q_at_tip(&self) -> f64 {
        self.q.eval(1.0)
    }

    pub fn sigma_at_tip(&self) -> f64 {
        self.sigma.eval(1.0)
    }
}

/// Sample grid on (0, 1]: geometric cluster toward 0 merged with a uniform grid.
pub fn sampling_grid(grid_n: usize) -> Vec<f64> {
    let mut pts = Vec::with_capacity(grid_n + 160);
    let mut x = GEOMETRIC_FIRST;
    while x < 1.0 {
        pts.push(x);
        x *= GEOMETRIC_RATIO;
    }
    pts.extend((1..=grid_n).map(|i| i as f64 / grid_n as f64));
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    pts
}

/// ι_σ = sup over (0, 1] of x|σ'(x)|/σ(x).
///
/// Power coefficients return their exponent. Otherwise the ratio is sampled
/// on [`sampling_grid`]; when the maximum sits at the smallest sample the
/// limit x → 0 is estimated by linear extrapolation from the two smallest
/// samples and kept if larger.
pub fn compute_iota_sigma(sigma: &CoefficientFn, grid_n: usize) -> Result<f64, ModelError> {
    if grid_n < 64 {
        return Err(ModelError::GridTooCoarse(grid_n));
    }
    if let Some(alpha) = sigma.is_power() {
        return Ok(alpha);
    }
    let grid = sampling_grid(grid_n);
    let mut ratios = Vec::with_capacity(grid.len());
    let mut sup = f64::NEG_INFINITY;
    let mut arg = 0;
    for (k, &x) in grid.iter().enumerate() {
        let s = sigma.eval(x);
        if !(s > 0.0) {
            return Err(ModelError::NonPositiveSigma { x, value: s });
        }
        let r = x * sigma.deriv(x).abs() / s;
        if !r.is_finite() || r > DIVERGENT_SUP {
            return Err(ModelError::DivergentSup { x, value: r });
        }
        ratios.push(r);
        if r > sup {
            sup = r;
            arg = k;
        }
    }
    if arg == 0 {
        let (x1, x2) = (grid[0], grid[1]);
        let limit = ratios[0] - (ratios[1] - ratios[0]) * x1 / (x2 - x1);
        if limit.is_finite() && limit > sup {
            sup = limit.min(DIVERGENT_SUP);
        }
    }
    Ok(sup)
}

/// WD on (0, 1), SD on [1, 2).
pub fn classify_degeneracy(iota: f64) -> Result<Degeneracy, ModelError> {
    if !(iota > 0.0 && iota < 2.0) {
        return Err(ModelError::OutOfAdmissibleRange { iota });
    }
    Ok(if iota < 1.0 {
        Degeneracy::WD
    } else {
        Degeneracy::SD
    })
}

/// `[|κ2|, 2κ1 − |κ2|]`, nonempty exactly when κ1 > |κ2|.
pub fn gamma_window(kappa1: f64, kappa2: f64) -> Result<GammaWindow, ModelError> {
    if !(kappa1 > kappa2.abs()) {
        return Err(ModelError::GainConditionViolated { kappa1, kappa2 });
    }
    Ok(GammaWindow {
        lo: kappa2.abs(),
        hi: 2.0 * kappa1 - kappa2.abs(),
    })
}

fn sample_q_bounds(q: &CoefficientFn, grid_n: usize) -> QBounds {
    let mut q0 = q.eval(0.0);
    let mut q1 = q0;
    let mut q2 = q.deriv(0.0).abs();
    for x in sampling_grid(grid_n) {
        let v = q.eval(x);
        q0 = q0.min(v);
        q1 = q1.max(v);
        q2 = q2.max(q.deriv(x).abs());
    }
    QBounds {
        q0,
        q1,
        q2,
        supplied: false,
    }
}

/// One standing hypothesis of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Hypothesis {
    AxialForcePositive,
    AxialForceUpperBound,
    AxialForceSlopeBound,
    RigidityVanishesAtOrigin,
    RigidityPositive,
    DegeneracyIndexBelowTwo,
    DegeneracyClass,
    InstantaneousGainNonnegative,
    DelayedGainNonzero,
    GainCondition,
    PositiveDelay,
    GammaWindow,
    CombinedIndexBelowTwo,
}

impl Hypothesis {
    pub fn describe(&self) -> &'static str {
        match self {
            Hypothesis::AxialForcePositive => "axial force positivity 0 < q0 <= q(x)",
            Hypothesis::AxialForceUpperBound => "axial force upper bound q(x) <= q1",
            Hypothesis::AxialForceSlopeBound => "axial force slope bound |q'(x)| <= q2",
            Hypothesis::RigidityVanishesAtOrigin => "rigidity degenerates at the clamp, sigma(0) = 0",
            Hypothesis::RigidityPositive => "rigidity positive on (0, 1]",
            Hypothesis::DegeneracyIndexBelowTwo => "degeneracy index iota_sigma < 2",
            Hypothesis::DegeneracyClass => "degeneracy class WD (0,1) or SD [1,2)",
            Hypothesis::InstantaneousGainNonnegative => "instantaneous gain kappa1 >= 0",
            Hypothesis::DelayedGainNonzero => "delayed gain kappa2 != 0",
            Hypothesis::GainCondition => "gain condition kappa1 > |kappa2|",
            Hypothesis::PositiveDelay => "delay tau > 0",
            Hypothesis::GammaWindow => "gamma window |kappa2| <= gamma <= 2 kappa1 - |kappa2|",
            Hypothesis::CombinedIndexBelowTwo => "combined index iota_sigma_q = max(iota_sigma, q2/q0) < 2",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub hypothesis: Hypothesis,
    pub passed: bool,
    /// Sample point witnessing a failure, when the hypothesis is pointwise.
    pub witness: Option<f64>,
    pub detail: String,
}

impl fmt::Display for HypothesisCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "ok" } else { "violated" };
        write!(f, "{} {status}: {}", self.hypothesis.describe(), self.detail)?;
        if let Some(x) = self.witness {
            write!(f, " (at x = {x:e})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<HypothesisCheck>,
    pub degeneracy: Option<Degeneracy>,
    pub iota_sigma: f64,
    pub iota_sigma_q: f64,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &HypothesisCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn failed(&self, h: Hypothesis) -> bool {
        self.checks.iter().any(|c| c.hypothesis == h && !c.passed)
    }
}

fn check(h: Hypothesis, passed: bool, witness: Option<f64>, detail: String) -> HypothesisCheck {
    HypothesisCheck {
        hypothesis: h,
        passed,
        witness: if passed { None } else { witness },
        detail,
    }
}

/// Checks every standing hypothesis on a sampling grid. Failures are data.
pub fn validate(problem: &BeamProblem, grid_n: usize) -> ValidationReport {
    let grid = sampling_grid(grid_n.max(64));
    let mut grid0 = Vec::with_capacity(grid.len() + 1);
    grid0.push(0.0);
    grid0.extend_from_slice(&grid);
    let qb = problem.q_bounds;
    let tol = 1e-12;
    let mut checks = Vec::new();

    // axial force
    let q_min = grid0
        .iter()
        .map(|&x| (x, problem.q.eval(x)))
        .fold((0.0, f64::INFINITY), |acc, p| if p.1 < acc.1 { p } else { acc });
    let pos_ok = qb.q0 > 0.0 && q_min.1 >= qb.q0 * (1.0 - tol);
    checks.push(check(
        Hypothesis::AxialForcePositive,
        pos_ok,
        Some(q_min.0),
        format!("q0 = {}, min q = {}", qb.q0, q_min.1),
    ));
    let q_max = grid0
        .iter()
        .map(|&x| (x, problem.q.eval(x)))
        .fold((0.0, f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc });
    checks.push(check(
        Hypothesis::AxialForceUpperBound,
        q_max.1 <= qb.q1 * (1.0 + tol) + tol,
        Some(q_max.0),
        format!("q1 = {}, max q = {}", qb.q1, q_max.1),
    ));
    let dq_max = grid0
        .iter()
        .map(|&x| (x, problem.q.deriv(x).abs()))
        .fold((0.0, 0.0_f64), |acc, p| if p.1 > acc.1 { p } else { acc });
    checks.push(check(
        Hypothesis::AxialForceSlopeBound,
        dq_max.1 <= qb.q2 * (1.0 + tol) + tol && dq_max.1.is_finite(),
        Some(dq_max.0),
        format!("q2 = {}, max |q'| = {}", qb.q2, dq_max.1),
    ));

    // rigidity
    let sigma_scale = grid.iter().map(|&x| problem.sigma.eval(x).abs()).fold(1.0, f64::max);
    let s0 = problem.sigma.eval(0.0);
    checks.push(check(
        Hypothesis::RigidityVanishesAtOrigin,
        s0.abs() <= tol * sigma_scale,
        Some(0.0),
        format!("sigma(0) = {s0}"),
    ));
    let bad_sigma = grid.iter().map(|&x| (x, problem.sigma.eval(x))).find(|p| !(p.1 > 0.0));
    checks.push(check(
        Hypothesis::RigidityPositive,
        bad_sigma.is_none(),
        bad_sigma.map(|p| p.0),
        match bad_sigma {
            Some((_, v)) => format!("sigma = {v}"),
            None => "sigma > 0 at every sample".into(),
        },
    ));
    let iota = problem.iota_sigma;
    checks.push(check(
        Hypothesis::DegeneracyIndexBelowTwo,
        iota < 2.0,
        None,
        format!("iota_sigma = {iota}"),
    ));
    let class = classify_degeneracy(iota).ok();
    checks.push(check(
        Hypothesis::DegeneracyClass,
        class == Some(problem.degeneracy),
        None,
        match class {
            Some(c) => format!("iota_sigma = {iota} -> {c}"),
            None => format!("iota_sigma = {iota} is neither WD nor SD"),
        },
    ));

    // gains and delay
    let (k1, k2) = (problem.kappa1, problem.kappa2);
    checks.push(check(
        Hypothesis::InstantaneousGainNonnegative,
        k1 >= 0.0,
        None,
        format!("kappa1 = {k1}"),
    ));
    checks.push(check(
        Hypothesis::DelayedGainNonzero,
        k2 != 0.0,
        None,
        format!("kappa2 = {k2}"),
    ));
    checks.push(check(
        Hypothesis::GainCondition,
        k1 > k2.abs(),
        None,
        format!("kappa1 = {k1}, |kappa2| = {}", k2.abs()),
    ));
    checks.push(check(
        Hypothesis::PositiveDelay,
        problem.tau > 0.0 && problem.tau.is_finite(),
        None,
        format!("tau = {}", problem.tau),
    ));
    let (lo, hi) = (k2.abs(), 2.0 * k1 - k2.abs());
    let g = problem.gamma;
    checks.push(check(
        Hypothesis::GammaWindow,
        g >= lo && g <= hi,
        None,
        if g >= lo && g <= hi {
            format!("gamma = {g} in [{lo}, {hi}]")
        } else {
            format!("gamma = {g} not in [{lo}, {hi}]")
        },
    ));
    let iq = problem.iota_sigma_q();
    checks.push(check(
        Hypothesis::CombinedIndexBelowTwo,
        iq < 2.0,
        None,
        format!("iota_sigma_q = {iq}"),
    ));

    ValidationReport {
        checks,
        degeneracy: class,
        iota_sigma: iota,
        iota_sigma_q: iq,
    }
}
