//! Strict run configuration: one TOML document, unknown keys rejected with
//! the parser's line/key diagnostics, all physical quantities in SI with the
//! unit spelled out in the key name.

use anyhow::{bail, Context, Result};
use rydpar::grape::{OptimizationConfig, RampConfig, TimeWeightConvention};
use rydpar::model::{build_geometry, AtomGeometry, GeometryKind, PhysicalParams};
use rydpar::motional::BudgetOptions;
use rydpar::propagate::KrylovConfig;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Optimize,
    QslScan,
    Simulate,
    Budget,
    Tomography,
    Robustness,
    ThetaSweep,
    RabiScan,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Optimize => "optimize",
            Command::QslScan => "qsl-scan",
            Command::Simulate => "simulate",
            Command::Budget => "budget",
            Command::Tomography => "tomography",
            Command::Robustness => "robustness",
            Command::ThetaSweep => "theta-sweep",
            Command::RabiScan => "rabi-scan",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub name: GeometryKind,
    /// Minimal interatomic spacing in meters.
    pub r_min_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsSection {
    pub c6_over_h_ghz_um6: Option<f64>,
    pub omega_max_rad_s: Option<f64>,
    pub gamma_d_per_s: Option<f64>,
    pub lambda_laser_m: Option<f64>,
    pub mass_kg: Option<f64>,
    pub omega_par_rad_s: Option<f64>,
    pub omega_perp_rad_s: Option<f64>,
    /// Inverse temperature in 1/K; omit for zero temperature.
    pub inv_temperature_beta_per_k: Option<f64>,
}

impl ParamsSection {
    pub fn resolve(&self) -> PhysicalParams {
        let mut p = PhysicalParams::default();
        if let Some(v) = self.c6_over_h_ghz_um6 {
            p.c6_over_h_ghz_um6 = v;
        }
        if let Some(v) = self.omega_max_rad_s {
            p.omega_max = v;
        }
        if let Some(v) = self.gamma_d_per_s {
            p.gamma_d = v;
        }
        if let Some(v) = self.lambda_laser_m {
            p.lambda_laser_m = v;
        }
        if let Some(v) = self.mass_kg {
            p.mass_kg = v;
        }
        if let Some(v) = self.omega_par_rad_s {
            p.omega_par = v;
        }
        if let Some(v) = self.omega_perp_rad_s {
            p.omega_perp = v;
        }
        p.inv_temperature_beta = self.inv_temperature_beta_per_k;
        p
    }
}

fn default_theta() -> f64 {
    FRAC_PI_4
}
fn default_eta_delta() -> f64 {
    1e-3
}
fn default_eta_r() -> f64 {
    1e-2
}
fn default_eta_rr() -> f64 {
    1e2
}
fn default_n_starts() -> usize {
    20
}
fn default_max_iters() -> usize {
    2000
}
fn default_grad_tolerance() -> f64 {
    1e-9
}
fn default_ramp_kappa() -> f64 {
    10.0
}
fn default_convention() -> TimeWeightConvention {
    TimeWeightConvention::Microseconds
}
fn default_substeps() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizationSection {
    pub theta_rad: f64,
    /// Gate duration in units of Ω₀T/(2π).
    pub duration_norm: f64,
    pub m_steps: Option<usize>,
    pub eta_delta: f64,
    pub eta_r: f64,
    pub eta_rr: f64,
    pub n_starts: usize,
    pub max_iters: usize,
    pub grad_tolerance: f64,
    pub ramp_enabled: bool,
    pub ramp_kappa: f64,
    pub ramp_tau_s: Option<f64>,
    pub optimize_rabi: bool,
    pub antisymmetric_phase: bool,
    pub time_weight_convention: TimeWeightConvention,
    pub quadrature_substeps: usize,
}

impl Default for OptimizationSection {
    fn default() -> Self {
        OptimizationSection {
            theta_rad: default_theta(),
            duration_norm: 0.0,
            m_steps: None,
            eta_delta: default_eta_delta(),
            eta_r: default_eta_r(),
            eta_rr: default_eta_rr(),
            n_starts: default_n_starts(),
            max_iters: default_max_iters(),
            grad_tolerance: default_grad_tolerance(),
            ramp_enabled: false,
            ramp_kappa: default_ramp_kappa(),
            ramp_tau_s: None,
            optimize_rabi: false,
            antisymmetric_phase: false,
            time_weight_convention: default_convention(),
            quadrature_substeps: default_substeps(),
        }
    }
}

impl OptimizationSection {
    pub fn resolve(&self, params: &PhysicalParams, seed: u64) -> OptimizationConfig {
        OptimizationConfig {
            eta_delta: self.eta_delta,
            eta_r: self.eta_r,
            eta_rr: self.eta_rr,
            n_starts: self.n_starts,
            max_iters: self.max_iters,
            grad_tolerance: self.grad_tolerance,
            seed,
            duration_t: params.duration_from_normalized(self.duration_norm),
            m_steps: self.m_steps,
            ramp: RampConfig {
                enabled: self.ramp_enabled,
                kappa: self.ramp_kappa,
                tau_ramp_s: self.ramp_tau_s,
            },
            optimize_rabi: self.optimize_rabi,
            antisymmetric_phase: self.antisymmetric_phase,
            time_weight_convention: self.time_weight_convention,
            quadrature_substeps: self.quadrature_substeps,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub n_fock: usize,
    pub taylor_order: usize,
    pub krylov_max_subspace_dim: usize,
    pub krylov_substeps_per_pulse_step: usize,
    pub krylov_tolerance: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            n_fock: 12,
            taylor_order: 10,
            krylov_max_subspace_dim: 30,
            krylov_substeps_per_pulse_step: 4,
            krylov_tolerance: 1e-10,
        }
    }
}

impl NoiseSection {
    pub fn krylov(&self) -> KrylovConfig {
        KrylovConfig {
            max_subspace_dim: self.krylov_max_subspace_dim,
            substeps_per_pulse_step: self.krylov_substeps_per_pulse_step,
            tolerance: self.krylov_tolerance,
        }
    }

    pub fn budget_options(&self) -> BudgetOptions {
        BudgetOptions {
            n_fock: self.n_fock,
            taylor_order: self.taylor_order,
            krylov: self.krylov(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct QslSection {
    pub durations_norm: Vec<f64>,
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SweepsSection {
    /// Decay rates for the ε(γ_d) sweep (1/s).
    pub gamma_d_grid_per_s: Vec<f64>,
    /// Parallel trap frequencies for the recoil fit (rad/s).
    pub omega_par_grid_rad_s: Vec<f64>,
    /// Perpendicular trap frequencies for the force sweep (rad/s).
    pub omega_perp_grid_rad_s: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TomographySection {
    pub circuits: Vec<String>,
    pub decay_rate_per_s: f64,
    pub dephasing_rate_per_s: f64,
    pub substeps: usize,
    /// Pulse implementing Z_2(π/4) for the decompositions.
    pub z2_pulse_path: Option<String>,
    pub z2_r_min_m: Option<f64>,
}

impl Default for TomographySection {
    fn default() -> Self {
        TomographySection {
            circuits: vec![
                "native".into(),
                "v-decomposition".into(),
                "x-decomposition".into(),
                "zz-decomposition".into(),
            ],
            decay_rate_per_s: 12.5e3,
            dephasing_rate_per_s: 0.1e3,
            substeps: 4,
            z2_pulse_path: None,
            z2_r_min_m: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessSection {
    pub epsilons: Vec<f64>,
    /// Channel-mode pairs, e.g. "rabi:quasi-static", "phase:time-varying".
    pub channels: Vec<String>,
    pub n_samples: usize,
}

impl Default for RobustnessSection {
    fn default() -> Self {
        RobustnessSection {
            epsilons: vec![0.0, 0.01, 0.02, 0.03, 0.04],
            channels: vec![
                "rabi:quasi-static".into(),
                "detuning:quasi-static".into(),
                "rabi:time-varying".into(),
                "detuning:time-varying".into(),
                "phase:time-varying".into(),
            ],
            n_samples: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ThetaSweepSection {
    /// Descending grid; empty derives 8 points from π/4 to 0.
    pub thetas_rad: Vec<f64>,
}

impl ThetaSweepSection {
    pub fn resolved_thetas(&self) -> Vec<f64> {
        if !self.thetas_rad.is_empty() {
            return self.thetas_rad.clone();
        }
        (0..8)
            .map(|i| FRAC_PI_4 * (1.0 - i as f64 / 7.0))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RabiScanSection {
    pub geometries: Vec<GeometryKind>,
    pub omega_maxes_rad_s: Vec<f64>,
    pub spacings_um: Vec<f64>,
    pub durations_norm: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    pub geometry: GeometrySection,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub optimization: OptimizationSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub qsl: QslSection,
    #[serde(default)]
    pub sweeps: SweepsSection,
    #[serde(default)]
    pub tomography: TomographySection,
    #[serde(default)]
    pub robustness: RobustnessSection,
    #[serde(default)]
    pub theta_sweep: ThetaSweepSection,
    #[serde(default)]
    pub rabi_scan: RabiScanSection,
    /// Input pulse for simulate/budget/tomography/robustness.
    #[serde(default)]
    pub pulse_path: Option<String>,
}

fn default_output_dir() -> String {
    "out".to_string()
}

impl RunConfig {
    pub fn geometry(&self) -> Result<AtomGeometry> {
        let r_um = self.geometry.r_min_m * 1.0e6;
        build_geometry(self.geometry.name, r_um).context("invalid [geometry]")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.geometry.r_min_m > 0.0) {
            bail!(
                "geometry.r_min_m must be positive, got {}",
                self.geometry.r_min_m
            );
        }
        if self.optimization.duration_norm < 0.0 {
            bail!(
                "optimization.duration_norm must be non-negative, got {}",
                self.optimization.duration_norm
            );
        }
        if let Some(p) = &self.pulse_path {
            if !Path::new(p).exists() {
                bail!("pulse_path `{p}` does not exist");
            }
        }
        if let Some(p) = &self.tomography.z2_pulse_path {
            if !Path::new(p).exists() {
                bail!("tomography.z2_pulse_path `{p}` does not exist");
            }
        }
        Ok(())
    }
}

/// Parse and validate a config file; unknown keys are rejected with the
/// parser's position diagnostics.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config `{}`", path.display()))?;
    let config: RunConfig = toml::from_str(&text)
        .with_context(|| format!("invalid config `{}`", path.display()))?;
    config.validate()?;
    Ok(config)
}
