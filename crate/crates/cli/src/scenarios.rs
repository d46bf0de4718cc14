//! One function per scenario; each writes its artifacts and returns a
//! one-line summary.

use std::sync::Arc;

use degbeam::constants::{decay_constant, ConstantsReport};
use degbeam::diagnostics::{fit_decay, DecayFit, DiagnosticsContext, EnvelopeStatus};
use degbeam::discretization::{assemble, build_mesh, DiscreteOperators};
use degbeam::inequalities::run_campaign;
use degbeam::integrator::{run, TimeSeries};
use degbeam::model::{validate, BeamProblem, ValidationReport};
use degbeam::spectral::{assemble_generator, spectrum, SpectrumReport, UNSTABLE_TOL};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{linspace, ConfigError, GammaSetting, RunConfig, Scenario};
use crate::output::{num, opt, Artifacts};

pub const VALIDATION_GRID: usize = 4096;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
    #[error("{0}")]
    Runtime(String),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            _ => 2,
        }
    }
}

fn runtime(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Fails with the violated hypotheses unless `force` is set.
pub fn gate(problem: &BeamProblem, force: bool) -> Result<ValidationReport, CliError> {
    let report = validate(problem, VALIDATION_GRID);
    if !report.all_passed() && !force {
        return Err(CliError::Validation(report.failures().map(|f| f.to_string()).collect()));
    }
    Ok(report)
}

fn operators(cfg: &RunConfig, problem: &BeamProblem) -> Result<Arc<DiscreteOperators>, CliError> {
    let mesh = build_mesh(cfg.mesh.n, cfg.grading()?).map_err(runtime)?;
    Ok(Arc::new(assemble(problem, &mesh, cfg.mesh.quad_order).map_err(runtime)?))
}

/// The report, or the reason none exists for this parameter set.
#[derive(Debug, Serialize)]
pub struct ConstantsOutcome {
    pub report: Option<ConstantsReport>,
    pub error: Option<String>,
}

fn constants_outcome(cfg: &RunConfig, problem: &BeamProblem) -> ConstantsOutcome {
    match decay_constant(problem, cfg.policy()) {
        Ok(r) => ConstantsOutcome { report: Some(r), error: None },
        Err(e) => ConstantsOutcome { report: None, error: Some(e.to_string()) },
    }
}

fn context(problem: &BeamProblem, c: &ConstantsOutcome) -> DiagnosticsContext {
    match &c.report {
        Some(r) => DiagnosticsContext::from_report(r),
        None => DiagnosticsContext::energy_only(problem),
    }
}

fn simulate_problem(
    cfg: &RunConfig,
    problem: &BeamProblem,
    ops: &Arc<DiscreteOperators>,
    ctx: &DiagnosticsContext,
) -> Result<TimeSeries, CliError> {
    let scheme = cfg.scheme(problem.tau)?;
    let (u0, u1, f0) = cfg.initial_data()?;
    run(problem, ops.clone(), &scheme, &u0, &u1, &f0, ctx).map_err(runtime)
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    validation: &'a ValidationReport,
    n_steps: usize,
    dt: f64,
    e0: f64,
    max_energy_increase: f64,
    max_dissipation_residual: f64,
    max_lyapunov_increase: f64,
    sandwich_ok: bool,
    fit: Option<DecayFit>,
    fit_error: Option<String>,
}

pub const RUN_COLUMNS: [&str; 9] =
    ["t", "E", "G", "L", "E_envelope", "u(1,t)", "u_t(1,t)", "u_t(1,t-tau)", "dissipation_residual"];

pub fn simulate(cfg: &RunConfig, art: &mut Artifacts) -> Result<String, CliError> {
    let problem = cfg.problem()?;
    let validation = gate(&problem, cfg.force)?;
    let ops = operators(cfg, &problem)?;
    let constants = constants_outcome(cfg, &problem);
    let ctx = context(&problem, &constants);
    let ts = simulate_problem(cfg, &problem, &ops, &ctx)?;
    let fit = fit_decay(&ts.rows, cfg.fit_start(problem.tau), ctx.m);

    art.csv(
        "run.csv",
        &RUN_COLUMNS,
        ts.rows.iter().map(|r| {
            vec![
                num(r.t),
                num(r.energy),
                num(r.g),
                num(r.l),
                opt(r.envelope),
                num(r.u_tip),
                num(r.ut_tip),
                num(r.ut_delayed),
                opt(r.diss_residual),
            ]
        }),
    )?;
    let summary = RunSummary {
        validation: &validation,
        n_steps: ts.n_steps,
        dt: problem.tau / cfg.time.n_hist as f64,
        e0: ts.e0,
        max_energy_increase: ts.max_energy_increase,
        max_dissipation_residual: ts.max_residual,
        max_lyapunov_increase: ts.max_lyapunov_increase,
        sandwich_ok: ts.all_sandwich_ok,
        fit: fit.as_ref().ok().cloned(),
        fit_error: fit.as_ref().err().map(|e| e.to_string()),
    };
    art.json("decay_fit.json", &summary)?;
    art.json("constants.json", &constants)?;
    let e_end = ts.rows.last().map(|r| r.energy).unwrap_or(ts.e0);
    Ok(match &fit {
        Ok(f) => format!(
            "simulate: {} steps, E(T)/E(0) = {:.4e}, omega = {:.6e}, envelope {:?}",
            ts.n_steps,
            e_end / ts.e0,
            f.omega,
            f.envelope
        ),
        Err(e) => format!("simulate: {} steps, E(T)/E(0) = {:.4e}, no fit ({e})", ts.n_steps, e_end / ts.e0),
    })
}

pub fn constants(cfg: &RunConfig, art: &mut Artifacts) -> Result<String, CliError> {
    let problem = cfg.problem()?;
    gate(&problem, cfg.force)?;
    let report = decay_constant(&problem, cfg.policy()).map_err(runtime)?;
    art.json("constants.json", &report)?;
    Ok(format!("constants: M = {}, epsilon = {}, C_k1k2 = {}", report.m, report.epsilon, report.c_k1k2))
}

fn spectrum_of(cfg: &RunConfig, problem: &BeamProblem, ops: &DiscreteOperators, probes: usize) -> Result<SpectrumReport, CliError> {
    let gen = assemble_generator(problem, ops, cfg.time.n_hist).map_err(runtime)?;
    spectrum(&gen, probes, cfg.seed).map_err(runtime)
}

pub fn spectrum_scenario(cfg: &RunConfig, art: &mut Artifacts) -> Result<String, CliError> {
    let problem = cfg.problem()?;
    gate(&problem, cfg.force)?;
    let ops = operators(cfg, &problem)?;
    let rep = spectrum_of(cfg, &problem, &ops, cfg.spectrum.dissipativity_probes)?;
    art.csv(
        "spectrum.csv",
        &["Re", "Im"],
        rep.eigenvalues.iter().map(|&(re, im)| vec![num(re), num(im)]),
    )?;
    art.json("spectrum.json", &rep)?;
    Ok(format!(
        "spectrum: {} eigenvalues, abscissa = {:e}, unstable = {}, dissipativity max = {:e}",
        rep.eigenvalues.len(),
        rep.abscissa,
        rep.n_unstable,
        rep.dissipativity_max
    ))
}

#[derive(Debug, Clone, Serialize)]
struct GainPoint {
    kappa1: f64,
    kappa2: f64,
    gamma: f64,
    abscissa: f64,
    n_unstable: usize,
    admissible: bool,
}

/// Consecutive κ1 samples (same κ2) between which the abscissa crosses
/// the instability tolerance.
#[derive(Debug, Serialize)]
struct SignChange {
    kappa2: f64,
    kappa1_stable_side: f64,
    kappa1_unstable_side: f64,
}

#[derive(Debug, Serialize)]
struct GainSweep {
    points: Vec<GainPoint>,
    sign_changes: Vec<SignChange>,
}

pub fn sweep_gains(cfg: &RunConfig, art: &mut Artifacts) -> Result<String, CliError> {
    let base = cfg.problem()?;
    gate(&base, cfg.force)?;
    let ops = operators(cfg, &base)?;
    let k1s = linspace(cfg.sweep.kappa1);
    let k2s = linspace(cfg.sweep.kappa2);
    let grid: Vec<(f64, f64)> = k2s.iter().flat_map(|&k2| k1s.iter().map(move |&k1| (k1, k2))).collect();
    let points = grid
        .par_iter()
        .map(|&(k1, k2)| {
            let gamma = match &cfg.problem.gamma {
                GammaSetting::Value(g) => *g,
                rule => rule.resolve(k1)?,
            };
            let p = base.clone().with_gains(k1, k2, gamma);
            let rep = spectrum_of(cfg, &p, &ops, 0)?;
            Ok(GainPoint {
                kappa1: k1,
                kappa2: k2,
                gamma,
                abscissa: rep.abscissa,
                n_unstable: rep.n_unstable,
                admissible: validate(&p, VALIDATION_GRID).all_passed(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut sign_changes = Vec::new();
    for row in points.chunks(k1s.len()) {
        for w in row.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if (a.abscissa > UNSTABLE_TOL) != (b.abscissa > UNSTABLE_TOL) {
                let (s, u) = if a.abscissa > UNSTABLE_TOL { (b, a) } else { (a, b) };
                sign_changes.push(SignChange { kappa2: a.kappa2, kappa1_stable_side: s.kappa1, kappa1_unstable_side: u.kappa1 });
            }
        }
    }
    art.csv(
        "heatmap.csv",
        &["kappa1", "kappa2", "abscissa", "n_unstable", "admissible"],
        points.iter().map(|p| {
            vec![
                num(p.kappa1),
                num(p.kappa2),
                num(p.abscissa),
                p.n_unstable.to_string(),
                p.admissible.to_string(),
            ]
        }),
    )?;
    let n = points.len();
    let n_changes = sign_changes.len();
    art.json("sweep_gains.json", &GainSweep { points, sign_changes })?;
    Ok(format!("sweep_gains: {n} points, {n_changes} sign changes of the abscissa"))
}

#[derive(Debug, Clone, Serialize)]
struct TauPoint {
    tau: f64,
    dt: f64,
    admissible: bool,
    #[serde(rename = "M")]
    m: Option<f64>,
    omega: Option<f64>,
    envelope: Option<EnvelopeStatus>,
    abscissa: f64,
    error: Option<String>,
}

pub fn sweep_tau(cfg: &RunConfig, art: &mut Artifacts) -> Result<String, CliError> {
    let base = cfg.problem()?;
    gate(&base, cfg.force)?;
    let ops = operators(cfg, &base)?;
    let taus = linspace(cfg.sweep.tau);
    let points = taus
        .par_iter()
        .map(|&tau| {
            let p = base.clone().with_tau(tau);
            let c = constants_outcome(cfg, &p);
            let ctx = context(&p, &c);
            let ts = simulate_problem(cfg, &p, &ops, &ctx)?;
            let fit = fit_decay(&ts.rows, cfg.fit_start(tau), ctx.m);
            let rep = spectrum_of(cfg, &p, &ops, 0)?;
            Ok(TauPoint {
                tau,
                dt: tau / cfg.time.n_hist as f64,
                admissible: validate(&p, VALIDATION_GRID).all_passed(),
                m: ctx.m,
                omega: fit.as_ref().ok().map(|f| f.omega),
                envelope: fit.as_ref().ok().map(|f| f.envelope),
                abscissa: rep.abscissa,
                error: c.error.or_else(|| fit.err().map(|e| e.to_string())),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    art.csv(
        "sweep_tau.csv",
        &["tau", "M", "omega", "abscissa", "envelope"],
        points.iter().map(|p| {
            vec![
                num(p.tau),
                opt(p.m),
                opt(p.omega),
                num(p.abscissa),
                match p.envelope {
                    Some(EnvelopeStatus::Satisfied) => "satisfied".into(),
                    Some(EnvelopeStatus::Violated { .. }) => "violated".into(),
                    Some(EnvelopeStatus::NotReached) | None => "not_reached".into(),
                },
            ]
        }),
    )?;
    let n = points.len();
    art.json("sweep_tau.json", &points)?;
    Ok(format!("sweep_tau: {n} delays"))
}

pub fn inequalities(cfg: &RunConfig, art: &mut Artifacts) -> Result<String, CliError> {
    let problem = cfg.problem()?;
    gate(&problem, cfg.force)?;
    let summary = run_campaign(&problem, cfg.inequalities.probes, cfg.seed).map_err(runtime)?;
    art.json("inequalities.json", &summary)?;
    Ok(format!(
        "inequalities: {} probes, {} violations, max ratio {}",
        summary.probes,
        summary.total_violations(),
        summary.max_ratio()
    ))
}

pub fn dispatch(cfg: &RunConfig, art: &mut Artifacts) -> Result<String, CliError> {
    match cfg.scenario {
        Scenario::Simulate => simulate(cfg, art),
        Scenario::SweepGains => sweep_gains(cfg, art),
        Scenario::SweepTau => sweep_tau(cfg, art),
        Scenario::Spectrum => spectrum_scenario(cfg, art),
        Scenario::Inequalities => inequalities(cfg, art),
        Scenario::Constants => constants(cfg, art),
    }
}
