//! Crank–Nicolson time stepping of the closed-loop system with the delayed
//! tip feedback read from the history buffer.
//!
//! One step solves
//! `(M + dt²/4 K + dt κ1/2 e eᵀ) v⁺ = (M − dt²/4 K − dt κ1/2 e eᵀ) v − dt K u − dt κ2 w̄ e`
//! and sets `u⁺ = u + dt (v + v⁺)/2`, where `w̄` is the mean of the delayed
//! trace over the step.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::delay::{DelayError, HistoryBuffer};
use crate::diagnostics::{self, DiagnosticsContext, DiagnosticsRow};
use crate::discretization::{DiscreteOperators, DiscretizationError, ScaledSolver};
use crate::model::expr::Expr;
use crate::model::BeamProblem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(#[from] DiscretizationError),
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error("bad scheme configuration: {0}")]
    BadConfig(String),
    #[error("initial data: {0}")]
    InitialData(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scheme {
    Trapezoidal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeConfig {
    pub dt: f64,
    pub n_hist: usize,
    pub scheme: Scheme,
    pub theta: f64,
    pub t_final: f64,
    pub output_stride: usize,
}

impl SchemeConfig {
    /// `dt = τ/N_hist`.
    pub fn new(tau: f64, n_hist: usize, t_final: f64, output_stride: usize) -> Result<Self, IntegratorError> {
        if n_hist < 1 {
            return Err(IntegratorError::BadConfig("N_hist must be at least 1".into()));
        }
        if !(tau > 0.0) {
            return Err(IntegratorError::BadConfig(format!("delay must be positive, got {tau}")));
        }
        if !(t_final >= tau) {
            return Err(IntegratorError::BadConfig(format!("T_final = {t_final} below the delay {tau}")));
        }
        if output_stride < 1 {
            return Err(IntegratorError::BadConfig("output_stride must be at least 1".into()));
        }
        Ok(SchemeConfig {
            dt: tau / n_hist as f64,
            n_hist,
            scheme: Scheme::Trapezoidal,
            theta: 0.5,
            t_final,
            output_stride,
        })
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil() as usize
    }
}

/// Initial displacement or velocity.
#[derive(Debug, Clone)]
pub enum InitialData {
    Zero,
    /// Expression in `x`; slopes from the symbolic derivative.
    Expression(Expr),
    /// Free-dof coefficients.
    Dofs(DVector<f64>),
    /// Values at the mesh nodes; slopes from finite differences.
    Nodal(Vec<f64>),
}

impl InitialData {
    pub fn parse(src: &str) -> Result<Self, IntegratorError> {
        Expr::parse(src)
            .map(InitialData::Expression)
            .map_err(|e| IntegratorError::InitialData(e.to_string()))
    }

    pub fn to_dofs(&self, ops: &DiscreteOperators) -> Result<DVector<f64>, IntegratorError> {
        match self {
            InitialData::Zero => Ok(DVector::zeros(ops.dim())),
            InitialData::Expression(e) => {
                let d = e.derivative();
                Ok(ops.interpolate(|x| e.eval(x), |x| d.eval(x)))
            }
            InitialData::Dofs(v) => {
                if v.len() == ops.dim() {
                    Ok(v.clone())
                } else {
                    Err(IntegratorError::InitialData(format!("expected {} dofs, got {}", ops.dim(), v.len())))
                }
            }
            InitialData::Nodal(vals) => ops.interpolate_nodal(vals).map_err(|e| IntegratorError::InitialData(e.to_string())),
        }
    }
}

/// Past velocity trace `f0(θ)`, θ ∈ (−τ, 0).
#[derive(Debug, Clone)]
pub enum HistoryData {
    Zero,
    Expression(Expr),
}

impl HistoryData {
    pub fn parse(src: &str) -> Result<Self, IntegratorError> {
        Expr::parse(src)
            .map(HistoryData::Expression)
            .map_err(|e| IntegratorError::InitialData(e.to_string()))
    }

    fn eval(&self, theta: f64) -> f64 {
        match self {
            HistoryData::Zero => 0.0,
            HistoryData::Expression(e) => e.eval(theta),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub history: HistoryBuffer,
    pub t: f64,
    pub step_index: usize,
}

impl SimState {
    /// Lag 0 of the history is the initial tip velocity.
    pub fn new(
        ops: &DiscreteOperators,
        tau: f64,
        n_hist: usize,
        u0: &InitialData,
        u1: &InitialData,
        f0: &HistoryData,
    ) -> Result<Self, IntegratorError> {
        let u = u0.to_dofs(ops)?;
        let v = u1.to_dofs(ops)?;
        let mut history = HistoryBuffer::new(tau, n_hist, |t| f0.eval(t))?;
        history.set_current(ops.trace_value.dot(&v));
        Ok(SimState { u, v, history, t: 0.0, step_index: 0 })
    }
}

/// Step-mean tip traces: `a = (v(1) + v⁺(1))/2`, `b = w̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTraces {
    pub a: f64,
    pub b: f64,
}

/// The factored step operator; immutable and shareable across runs with
/// identical operators, gains, and dt.
#[derive(Debug, Clone)]
pub struct Stepper {
    ops: Arc<DiscreteOperators>,
    stiffness: DMatrix<f64>,
    explicit: DMatrix<f64>,
    solver: ScaledSolver,
    dt: f64,
    kappa2: f64,
}

impl Stepper {
    pub fn new(ops: Arc<DiscreteOperators>, problem: &BeamProblem, dt: f64) -> Result<Self, IntegratorError> {
        let k = ops.stiffness();
        let e = &ops.trace_value;
        let eet = e * e.transpose();
        let c = 0.25 * dt * dt;
        let b = 0.5 * dt * problem.kappa1;
        let implicit = &ops.mass + c * &k + b * &eet;
        let explicit = &ops.mass - c * &k - b * &eet;
        let solver = ScaledSolver::new(&implicit)?;
        Ok(Stepper { ops, stiffness: k, explicit, solver, dt, kappa2: problem.kappa2 })
    }

    pub fn ops(&self) -> &Arc<DiscreteOperators> {
        &self.ops
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, state: &mut SimState) -> Result<StepTraces, IntegratorError> {
        let e = &self.ops.trace_value;
        let w_bar = state.history.delayed_mean();
        let rhs = &self.explicit * &state.v - self.dt * (&self.stiffness * &state.u) - (self.dt * self.kappa2 * w_bar) * e;
        let v_new = self.solver.solve(&rhs)?;
        state.u += (0.5 * self.dt) * (&state.v + &v_new);
        let a = 0.5 * (e.dot(&state.v) + e.dot(&v_new));
        state.v = v_new;
        state.history.push_and_sample(e.dot(&state.v));
        state.step_index += 1;
        state.t = state.step_index as f64 * self.dt;
        Ok(StepTraces { a, b: w_bar })
    }
}

/// One step with a freshly factored operator.
pub fn step(
    state: &mut SimState,
    ops: Arc<DiscreteOperators>,
    problem: &BeamProblem,
    cfg: &SchemeConfig,
) -> Result<StepTraces, IntegratorError> {
    Stepper::new(ops, problem, cfg.dt)?.step(state)
}

/// Output rows plus per-step extremes over the whole run.
#[derive(Debug, Clone, Serialize)]
pub struct TimeSeries {
    pub rows: Vec<DiagnosticsRow>,
    pub e0: f64,
    pub n_steps: usize,
    /// max_k (E_{k+1} − E_k)
    pub max_energy_increase: f64,
    /// max_k of the dissipation residual
    pub max_residual: f64,
    /// max_k |E_k − E_0|
    pub max_energy_drift: f64,
    /// max_k (L_{k+1} − L_k)
    pub max_lyapunov_increase: f64,
    pub all_sandwich_ok: bool,
    #[serde(skip)]
    pub final_state: Option<SimState>,
}

/// Integrates to `cfg.t_final`, checking every step and recording a row
/// every `cfg.output_stride` steps (and at the final step).
pub fn run_with(
    stepper: &Stepper,
    mut state: SimState,
    cfg: &SchemeConfig,
    ctx: &DiagnosticsContext,
) -> Result<TimeSeries, IntegratorError> {
    let ops = stepper.ops().clone();
    let first = DiagnosticsRow::compute(state.t, &state.u, &state.v, &state.history, &ops, ctx, None, None);
    let e0 = first.energy;
    let mut prev_e = e0;
    let mut prev_l = first.l;
    let mut all_sandwich_ok = first.sandwich_ok;
    let mut rows = vec![first];
    let mut max_inc = f64::NEG_INFINITY;
    let mut max_res = f64::NEG_INFINITY;
    let mut max_drift: f64 = 0.0;
    let mut max_l_inc = f64::NEG_INFINITY;
    let n_steps = cfg.n_steps();
    for k in 1..=n_steps {
        let tr = stepper.step(&mut state)?;
        let row_needed = k % cfg.output_stride == 0 || k == n_steps;
        let e = diagnostics::energy(&state.u, &state.v, &state.history, &ops, ctx.gamma);
        let res = diagnostics::dissipation_residual(prev_e, e, stepper.dt(), ctx.c_k1k2, tr.a, tr.b);
        max_inc = max_inc.max(e - prev_e);
        max_res = max_res.max(res);
        max_drift = max_drift.max((e - e0).abs());
        let l = e + ctx.epsilon
            * diagnostics::lyapunov_g(&state.u, &state.v, &state.history, &ops, ctx.gamma, ctx.iota_sigma_q);
        max_l_inc = max_l_inc.max(l - prev_l);
        if ctx.epsilon > 0.0 && !(ctx.theta1 * e <= l && l <= ctx.theta2 * e) {
            all_sandwich_ok = false;
        }
        prev_e = e;
        prev_l = l;
        if row_needed {
            let row = DiagnosticsRow::compute(state.t, &state.u, &state.v, &state.history, &ops, ctx, Some(e0), Some(res));
            all_sandwich_ok &= row.sandwich_ok;
            rows.push(row);
        }
    }
    Ok(TimeSeries {
        rows,
        e0,
        n_steps,
        max_energy_increase: max_inc,
        max_residual: max_res,
        max_energy_drift: max_drift,
        max_lyapunov_increase: max_l_inc,
        all_sandwich_ok,
        final_state: Some(state),
    })
}

/// Builds the state and the stepper, then integrates.
pub fn run(
    problem: &BeamProblem,
    ops: Arc<DiscreteOperators>,
    cfg: &SchemeConfig,
    u0: &InitialData,
    u1: &InitialData,
    f0: &HistoryData,
    ctx: &DiagnosticsContext,
) -> Result<TimeSeries, IntegratorError> {
    let state = SimState::new(&ops, problem.tau, cfg.n_hist, u0, u1, f0)?;
    let stepper = Stepper::new(ops, problem, cfg.dt)?;
    run_with(&stepper, state, cfg, ctx)
}
