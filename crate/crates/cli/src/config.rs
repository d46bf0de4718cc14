//! TOML run configuration and its resolution into core types.

use std::path::{Path, PathBuf};

use degbeam::constants::ChoicePolicy;
use degbeam::discretization::{Grading, DEFAULT_QUAD_ORDER, DEFAULT_RATIO};
use degbeam::integrator::{HistoryData, InitialData, SchemeConfig};
use degbeam::model::{BeamProblem, CoefficientFn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config value for {key}: {reason}")]
    Invalid { key: &'static str, reason: String },
}

fn invalid(key: &'static str, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid { key, reason: reason.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Scenario {
    Simulate,
    SweepGains,
    SweepTau,
    Spectrum,
    Inequalities,
    Constants,
}

/// `γ`: a number or the string "auto-midpoint".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSetting {
    Value(f64),
    Rule(String),
}

impl GammaSetting {
    /// The midpoint of `[|κ2|, 2κ1 − |κ2|]` is κ1.
    pub fn resolve(&self, kappa1: f64) -> Result<f64, ConfigError> {
        match self {
            GammaSetting::Value(g) => Ok(*g),
            GammaSetting::Rule(s) if s == "auto-midpoint" => Ok(kappa1),
            GammaSetting::Rule(s) => Err(invalid("problem.gamma", format!("expected a number or \"auto-midpoint\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub sigma: String,
    pub q: String,
    pub kappa1: f64,
    pub kappa2: f64,
    pub tau: f64,
    pub gamma: GammaSetting,
    /// Optional `[q0, q1, q2]` overriding the sampled bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_bounds: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub n: usize,
    #[serde(default = "default_grading")]
    pub grading: String,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "default_quad_order")]
    pub quad_order: usize,
}

fn default_grading() -> String {
    "geometric".into()
}

fn default_ratio() -> f64 {
    DEFAULT_RATIO
}

fn default_quad_order() -> usize {
    DEFAULT_QUAD_ORDER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub n_hist: usize,
    pub t_final: f64,
    #[serde(default = "one")]
    pub output_stride: usize,
    /// Start of the decay-fit window, defaults to τ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_start: Option<f64>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default = "zero_expr")]
    pub u0: String,
    #[serde(default = "zero_expr")]
    pub u1: String,
    /// Past tip velocity as an expression in `t` on (−τ, 0).
    #[serde(default = "zero_expr")]
    pub f0: String,
}

fn zero_expr() -> String {
    "0".into()
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection { u0: zero_expr(), u1: zero_expr(), f0: zero_expr() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    #[serde(default = "half")]
    pub epsilon_fraction: f64,
    #[serde(default = "half")]
    pub delta_tilde_fraction: f64,
}

fn half() -> f64 {
    0.5
}

impl Default for ConstantsSection {
    fn default() -> Self {
        ConstantsSection { epsilon_fraction: 0.5, delta_tilde_fraction: 0.5 }
    }
}

/// `[start, end, count]`, count ≥ 1, endpoints included.
pub type Range = (f64, f64, usize);

pub fn linspace((a, b, n): Range) -> Vec<f64> {
    if n <= 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_k1_range")]
    pub kappa1: Range,
    #[serde(default = "default_k2_range")]
    pub kappa2: Range,
    #[serde(default = "default_tau_range")]
    pub tau: Range,
}

fn default_k1_range() -> Range {
    (0.5, 3.0, 11)
}

fn default_k2_range() -> Range {
    (1.0, 1.0, 1)
}

fn default_tau_range() -> Range {
    (0.1, 2.0, 8)
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { kappa1: default_k1_range(), kappa2: default_k2_range(), tau: default_tau_range() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    #[serde(default = "default_probes")]
    pub dissipativity_probes: usize,
}

fn default_probes() -> usize {
    1000
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection { dissipativity_probes: default_probes() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalitiesSection {
    #[serde(default = "default_campaign")]
    pub probes: usize,
}

fn default_campaign() -> usize {
    500
}

impl Default for InequalitiesSection {
    fn default() -> Self {
        InequalitiesSection { probes: default_campaign() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub force: bool,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub problem: ProblemSection,
    pub mesh: MeshSection,
    pub time: TimeSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub constants: ConstantsSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub inequalities: InequalitiesSection,
    /// Directory relative coefficient tables are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_seed() -> u64 {
    42
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn gamma(&self) -> Result<f64, ConfigError> {
        self.problem.gamma.resolve(self.problem.kappa1)
    }

    pub fn problem(&self) -> Result<BeamProblem, ConfigError> {
        let base = self.base_dir.as_deref();
        let sigma = CoefficientFn::from_spec(&self.problem.sigma, base).map_err(|e| invalid("problem.sigma", e))?;
        let q = CoefficientFn::from_spec(&self.problem.q, base).map_err(|e| invalid("problem.q", e))?;
        let p = &self.problem;
        let mut bp = BeamProblem::new(sigma, q, p.kappa1, p.kappa2, p.tau, self.gamma()?).map_err(|e| invalid("problem.sigma", e))?;
        if let Some([q0, q1, q2]) = p.q_bounds {
            bp = bp.with_q_bounds(q0, q1, q2);
        }
        Ok(bp)
    }

    pub fn grading(&self) -> Result<Grading, ConfigError> {
        match self.mesh.grading.as_str() {
            "uniform" => Ok(Grading::Uniform),
            "geometric" => Ok(Grading::Geometric(self.mesh.ratio)),
            other => Err(invalid("mesh.grading", format!("expected \"uniform\" or \"geometric\", got {other:?}"))),
        }
    }

    pub fn scheme(&self, tau: f64) -> Result<SchemeConfig, ConfigError> {
        SchemeConfig::new(tau, self.time.n_hist, self.time.t_final, self.time.output_stride).map_err(|e| invalid("time", e))
    }

    pub fn fit_start(&self, tau: f64) -> f64 {
        self.time.fit_start.unwrap_or(tau)
    }

    pub fn initial_data(&self) -> Result<(InitialData, InitialData, HistoryData), ConfigError> {
        let u0 = InitialData::parse(&self.initial.u0).map_err(|e| invalid("initial.u0", e))?;
        let u1 = InitialData::parse(&self.initial.u1).map_err(|e| invalid("initial.u1", e))?;
        let f0 = HistoryData::parse(&self.initial.f0).map_err(|e| invalid("initial.f0", e))?;
        Ok((u0, u1, f0))
    }

    pub fn policy(&self) -> ChoicePolicy {
        ChoicePolicy::Fractions {
            epsilon: self.constants.epsilon_fraction,
            delta_tilde: self.constants.delta_tilde_fraction,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
scenario = "constants"
[problem]
sigma = "power:0.5"
q = "1"
kappa1 = 2.0
kappa2 = 1.0
tau = 0.5
gamma = "auto-midpoint"
[mesh]
n = 8
[time]
n_hist = 10
t_final = 1.0
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.scenario, Scenario::Constants);
        assert_eq!(c.seed, 42);
        assert_eq!(c.gamma().unwrap(), 2.0);
        assert_eq!(c.grading().unwrap(), Grading::Geometric(DEFAULT_RATIO));
        assert_eq!(c.time.output_stride, 1);
        assert_eq!(c.initial.u0, "0");
        assert!(c.problem().is_ok());
    }

    #[test]
    fn numeric_gamma_and_bad_rule() {
        assert_eq!(GammaSetting::Value(1.5).resolve(2.0).unwrap(), 1.5);
        assert!(GammaSetting::Rule("middle".into()).resolve(2.0).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("[mesh]\nn = 8", "[mesh]\nn = 8\nbogus = 1");
        assert!(matches!(RunConfig::parse(&text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn bad_grading() {
        let c = RunConfig::parse(&MINIMAL.replace("n = 8", "n = 8\ngrading = \"chebyshev\"")).unwrap();
        assert!(c.grading().is_err());
    }

    #[test]
    fn linspace_endpoints() {
        assert_eq!(linspace((0.5, 3.0, 6)), vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0]);
        assert_eq!(linspace((1.0, 1.0, 1)), vec![1.0]);
    }

    #[test]
    fn roundtrip_through_json() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"gamma\":\"auto-midpoint\""));
        assert!(json.contains("\"scenario\":\"constants\""));
    }
}
