//! The constant chain of the exponential-decay estimate, from the boundary
//! dissipation constant to the envelope constant `M`.
//!
//! Every function here is a straight evaluation of a closed-form expression
//! in the problem data; nothing is calibrated.

use serde::Serialize;
use thiserror::Error;

use crate::model::BeamProblem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstantsError {
    #[error("gamma = {gamma} outside the admissible window [{lo}, {hi}]")]
    GammaOutsideWindow { gamma: f64, lo: f64, hi: f64 },
    #[error("epsilon = {epsilon} is not below 1/C_iota = {limit}")]
    EpsilonTooLarge { epsilon: f64, limit: f64 },
    #[error("epsilon must be non-negative, got {0}")]
    NegativeEpsilon(f64),
    #[error("rigidity at the tip is not positive: sigma(1) = {0}")]
    DegenerateAtRightEnd(f64),
    #[error("axial force at the tip is not positive: q(1) = {0}")]
    NonPositiveTipForce(f64),
    #[error("degeneracy index {0} leaves no decay margin (needs < 2)")]
    InadmissibleIndex(f64),
    #[error("dissipation constant vanishes (gamma on the window edge); no admissible epsilon")]
    DegenerateDissipation,
    #[error("policy choice {name} = {value} outside (0, {limit})")]
    BadChoice { name: &'static str, value: f64, limit: f64 },
    #[error("envelope is asserted only for t >= M = {m}, got t = {t}")]
    TimeBelowM { t: f64, m: f64 },
    #[error("internal ordering check failed: {0}")]
    ChainViolated(&'static str),
}

/// `min{(γ − |κ2|)/2, κ1 − (γ + |κ2|)/2}`.
pub fn dissipation_constant(kappa1: f64, kappa2: f64, gamma: f64) -> Result<f64, ConstantsError> {
    let lo = kappa2.abs();
    let hi = 2.0 * kappa1 - kappa2.abs();
    if !(gamma >= lo && gamma <= hi) {
        return Err(ConstantsError::GammaOutsideWindow { gamma, lo, hi });
    }
    let c = f64::min((gamma - lo) / 2.0, kappa1 - (gamma + lo) / 2.0);
    Ok(c.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Equivalence {
    pub theta1: f64,
    pub theta2: f64,
    pub c_iota: f64,
}

/// `C_ι = 2 max{1, 1 + ι/4, (1 + ι/8)/q0}` with ι = ι_{σ,q}.
pub fn c_iota(iota_sigma_q: f64, q0: f64) -> f64 {
    2.0 * f64::max(
        1.0,
        f64::max(1.0 + iota_sigma_q / 4.0, (1.0 + iota_sigma_q / 8.0) / q0),
    )
}

/// Θ1 = 1 − εC_ι and Θ2 = 1 + εC_ι, with Θ1 > 0 required.
pub fn equivalence_constants(problem: &BeamProblem, epsilon: f64) -> Result<Equivalence, ConstantsError> {
    if epsilon < 0.0 {
        return Err(ConstantsError::NegativeEpsilon(epsilon));
    }
    let c = c_iota(problem.iota_sigma_q(), problem.q0());
    if epsilon * c >= 1.0 {
        return Err(ConstantsError::EpsilonTooLarge {
            epsilon,
            limit: 1.0 / c,
        });
    }
    Ok(Equivalence {
        theta1: 1.0 - epsilon * c,
        theta2: 1.0 + epsilon * c,
        c_iota: c,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observability {
    pub c0: f64,
    pub c1: f64,
    pub delta: f64,
    pub c2_delta: f64,
    pub c3: f64,
}

/// `max{1/q0, 2C1²}`, shared by δ, C2^δ and C3.
fn trace_factor(q0: f64, c1: f64) -> f64 {
    f64::max(1.0 / q0, 2.0 * c1 * c1)
}

/// `C0 = max{q(1)/2, q(1)ι²/4}`.
pub fn c0(problem: &BeamProblem) -> f64 {
    let q1 = problem.q_at_tip();
    let iq = problem.iota_sigma_q();
    f64::max(q1 / 2.0, q1 * iq * iq / 4.0)
}

/// `C1 = sqrt(max{1/q0, 1/(σ(1)(2 − ι_σ))})`.
pub fn c1(problem: &BeamProblem) -> Result<f64, ConstantsError> {
    let s1 = problem.sigma_at_tip();
    if !(s1 > 0.0) {
        return Err(ConstantsError::DegenerateAtRightEnd(s1));
    }
    if !(problem.iota_sigma < 2.0) {
        return Err(ConstantsError::InadmissibleIndex(problem.iota_sigma));
    }
    Ok(f64::max(1.0 / problem.q0(), 1.0 / (s1 * (2.0 - problem.iota_sigma))).sqrt())
}

/// C0, C1, δ, C2^δ, C3 for a chosen δ̃.
///
/// C2^δ mixes the chosen δ̃ with the fixed δ; both appear as written in the
/// observability estimate. The dissipation constant C_{κ1,κ2} enters both
/// C2^δ terms and must be positive.
pub fn observability_constants(problem: &BeamProblem, delta_tilde: f64) -> Result<Observability, ConstantsError> {
    let q0 = problem.q0();
    let s1 = problem.sigma_at_tip();
    let c1 = c1(problem)?;
    let ck = dissipation_constant(problem.kappa1, problem.kappa2, problem.gamma)?;
    if !(ck > 0.0) {
        return Err(ConstantsError::DegenerateDissipation);
    }
    let tf = trace_factor(q0, c1);
    let delta = (q0 / 2.0) / tf;
    let k_max = f64::max(problem.kappa1 * problem.kappa1, problem.kappa2 * problem.kappa2);
    let c2_delta = tf / (delta_tilde * q0 * ck) + (k_max / delta) / ck;
    let c3 = f64::max(
        1.0,
        2.0 * tf * f64::max(3.0 / q0, 2.0 / (s1 * (2.0 - problem.iota_sigma))),
    );
    Ok(Observability {
        c0: c0(problem),
        c1,
        delta,
        c2_delta,
        c3,
    })
}

/// `min{2 − ι_{σ,q}, 4e^{−2τ}}`.
pub fn min_term(problem: &BeamProblem) -> f64 {
    f64::min(2.0 - problem.iota_sigma_q(), 4.0 * (-2.0 * problem.tau).exp())
}

/// Supremum of admissible ε from the energy-derivative estimate:
/// `min{C q(1)/(2κ2²), C/(1 + γ + 2κ1²/q(1))}`.
pub fn eps_max_energy(problem: &BeamProblem) -> Result<f64, ConstantsError> {
    let ck = dissipation_constant(problem.kappa1, problem.kappa2, problem.gamma)?;
    let q1 = problem.q_at_tip();
    if !(q1 > 0.0) {
        return Err(ConstantsError::NonPositiveTipForce(q1));
    }
    let k1 = problem.kappa1;
    let k2 = problem.kappa2;
    let first = if k2 == 0.0 {
        f64::INFINITY
    } else {
        ck * q1 / (2.0 * k2 * k2)
    };
    Ok(f64::min(first, ck / (1.0 + problem.gamma + 2.0 * k1 * k1 / q1)))
}

/// How ε and δ̃ are picked inside their admissible open intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ChoicePolicy {
    /// Fractions of the suprema, each in (0, 1).
    Fractions { epsilon: f64, delta_tilde: f64 },
    /// Explicit values, checked against the suprema.
    Explicit { epsilon: f64, delta_tilde: f64 },
}

impl Default for ChoicePolicy {
    fn default() -> Self {
        ChoicePolicy::Fractions {
            epsilon: 0.5,
            delta_tilde: 0.5,
        }
    }
}

/// Every constant of the decay estimate plus the inputs it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub kappa1: f64,
    pub kappa2: f64,
    pub gamma: f64,
    pub tau: f64,
    pub q0: f64,
    pub q_tip: f64,
    pub sigma_tip: f64,
    pub iota_sigma: f64,
    pub iota_sigma_q: f64,
    #[serde(rename = "C_k1k2")]
    pub c_k1k2: f64,
    #[serde(rename = "C_iota")]
    pub c_iota: f64,
    pub epsilon: f64,
    #[serde(rename = "Theta1")]
    pub theta1: f64,
    #[serde(rename = "Theta2")]
    pub theta2: f64,
    #[serde(rename = "C0")]
    pub c0: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    pub delta: f64,
    #[serde(rename = "C2_delta")]
    pub c2_delta: f64,
    #[serde(rename = "C3")]
    pub c3: f64,
    pub delta_tilde: f64,
    pub eps_max_energy: f64,
    pub eps_max_equiv: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub min_term: f64,
}

/// Computes the full chain and the envelope constant
/// `M = ε⁻¹ (min_term − 2δ̃C0)⁻¹ (Θ2 + 2εC0C2^δ + 4εC0C3)`.
pub fn decay_constant(problem: &BeamProblem, policy: ChoicePolicy) -> Result<ConstantsReport, ConstantsError> {
    let ck = dissipation_constant(problem.kappa1, problem.kappa2, problem.gamma)?;
    if !(ck > 0.0) {
        return Err(ConstantsError::DegenerateDissipation);
    }
    let iq = problem.iota_sigma_q();
    if !(iq < 2.0) {
        return Err(ConstantsError::InadmissibleIndex(iq));
    }
    let c_iota = c_iota(iq, problem.q0());
    let eps_energy = eps_max_energy(problem)?;
    let eps_equiv = 1.0 / c_iota;
    let eps_sup = eps_energy.min(eps_equiv);
    let mt = min_term(problem);
    let c0v = c0(problem);
    let dt_sup = mt / (2.0 * c0v);

    let (epsilon, delta_tilde) = match policy {
        ChoicePolicy::Fractions { epsilon, delta_tilde } => {
            for (name, v) in [("epsilon fraction", epsilon), ("delta_tilde fraction", delta_tilde)] {
                if !(v > 0.0 && v < 1.0) {
                    return Err(ConstantsError::BadChoice { name, value: v, limit: 1.0 });
                }
            }
            (epsilon * eps_sup, delta_tilde * dt_sup)
        }
        ChoicePolicy::Explicit { epsilon, delta_tilde } => {
            if !(epsilon > 0.0 && epsilon < eps_sup) {
                return Err(ConstantsError::BadChoice { name: "epsilon", value: epsilon, limit: eps_sup });
            }
            if !(delta_tilde > 0.0 && delta_tilde < dt_sup) {
                return Err(ConstantsError::BadChoice { name: "delta_tilde", value: delta_tilde, limit: dt_sup });
            }
            (epsilon, delta_tilde)
        }
    };

    let eq = equivalence_constants(problem, epsilon)?;
    let obs = observability_constants(problem, delta_tilde)?;
    let margin = mt - 2.0 * delta_tilde * obs.c0;
    let m = (eq.theta2 + 2.0 * epsilon * obs.c0 * obs.c2_delta + 4.0 * epsilon * obs.c0 * obs.c3)
        / (epsilon * margin);

    if !(eq.theta1 > 0.0) {
        return Err(ConstantsError::ChainViolated("Theta1 > 0"));
    }
    if !(margin > 0.0) {
        return Err(ConstantsError::ChainViolated("min_term - 2 delta_tilde C0 > 0"));
    }
    if !(obs.c2_delta > 0.0 && obs.c3 >= 1.0) {
        return Err(ConstantsError::ChainViolated("C2_delta > 0 and C3 >= 1"));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(ConstantsError::ChainViolated("0 < M < inf"));
    }

    Ok(ConstantsReport {
        kappa1: problem.kappa1,
        kappa2: problem.kappa2,
        gamma: problem.gamma,
        tau: problem.tau,
        q0: problem.q0(),
        q_tip: problem.q_at_tip(),
        sigma_tip: problem.sigma_at_tip(),
        iota_sigma: problem.iota_sigma,
        iota_sigma_q: iq,
        c_k1k2: ck,
        c_iota,
        epsilon,
        theta1: eq.theta1,
        theta2: eq.theta2,
        c0: obs.c0,
        c1: obs.c1,
        delta: obs.delta,
        c2_delta: obs.c2_delta,
        c3: obs.c3,
        delta_tilde,
        eps_max_energy: eps_energy,
        eps_max_equiv: eps_equiv,
        m,
        min_term: mt,
    })
}

/// `e^{1 − t/M} E0`, defined for t ≥ M.
pub fn decay_envelope(report: &ConstantsReport, e0: f64, t: f64) -> Result<f64, ConstantsError> {
    if t < report.m {
        return Err(ConstantsError::TimeBelowM { t, m: report.m });
    }
    Ok((1.0 - t / report.m).exp() * e0)
}
