//! Monte-Carlo robustness of optimized pulses under stochastic control
//! errors.
//!
//! Perturbations are Gaussian with σ = ε·Ω₀ for Rabi/detuning channels and
//! σ = ε·π for the laser phase. Quasi-static errors draw once per shot and
//! offset the whole pulse; time-varying errors draw independently for every
//! piece. Fidelity is the average gate fidelity, so leakage is not
//! over-weighted. Each (spec, shot) pair owns an RNG stream, which makes the
//! report deterministic under a fixed seed regardless of scheduling.

use crate::fidelity::avg_fidelity;
use crate::model::{
    build_parity_target, enumerate_blocks, AtomGeometry, ModelError, PhysicalParams, PulseSchedule,
};
use crate::propagate::{propagate_blocks_with, PropagateError};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RobustnessError {
    #[error("global phase offsets do not affect the gate; quasi-static phase noise is rejected")]
    StaticPhase,
    #[error("negative error strength {0}")]
    NegativeEpsilon(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Propagate(#[from] PropagateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    Rabi,
    Detuning,
    Phase,
}

impl Channel {
    pub fn name(&self) -> &'static str {
        match self {
            Channel::Rabi => "rabi",
            Channel::Detuning => "detuning",
            Channel::Phase => "phase",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    QuasiStatic,
    TimeVarying,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::QuasiStatic => "quasi-static",
            Mode::TimeVarying => "time-varying",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub channel: Channel,
    pub mode: Mode,
    /// Relative error strength ε ≥ 0.
    pub epsilon: f64,
}

impl PerturbationSpec {
    pub fn new(channel: Channel, mode: Mode, epsilon: f64) -> Result<Self, RobustnessError> {
        if epsilon < 0.0 {
            return Err(RobustnessError::NegativeEpsilon(epsilon));
        }
        if matches!(channel, Channel::Phase) && matches!(mode, Mode::QuasiStatic) {
            return Err(RobustnessError::StaticPhase);
        }
        Ok(PerturbationSpec {
            channel,
            mode,
            epsilon,
        })
    }

    /// Standard deviation of the Gaussian draws.
    pub fn sigma(&self, params: &PhysicalParams) -> f64 {
        match self.channel {
            Channel::Rabi | Channel::Detuning => self.epsilon * params.omega_max,
            Channel::Phase => self.epsilon * PI,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub channel: Channel,
    pub mode: Mode,
    pub epsilon: f64,
    /// Mean average-gate infidelity over the shots.
    pub mean: f64,
    /// Sample standard deviation of the stored per-shot values.
    pub std: f64,
    pub n_samples: usize,
    /// Number of Rabi draws clamped at zero.
    pub clamped_draws: usize,
    pub shots: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub rows: Vec<RobustnessRow>,
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; keeps the dependency set small and the draws reproducible.
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

fn perturb(
    pulse: &PulseSchedule,
    spec: &PerturbationSpec,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> (PulseSchedule, usize) {
    let mut out = pulse.clone();
    let m = pulse.m_steps;
    let mut clamped = 0usize;
    let draws: Vec<f64> = match spec.mode {
        Mode::QuasiStatic => {
            let d = sigma * standard_normal(rng);
            vec![d; m]
        }
        Mode::TimeVarying => (0..m).map(|_| sigma * standard_normal(rng)).collect(),
    };
    match spec.channel {
        Channel::Rabi => {
            for (r, d) in out.rabi.iter_mut().zip(&draws) {
                let v = *r + d;
                if v < 0.0 {
                    clamped += 1;
                }
                *r = v.max(0.0);
            }
        }
        Channel::Detuning => {
            for (x, d) in out.detuning.iter_mut().zip(&draws) {
                *x += d;
            }
        }
        Channel::Phase => {
            for (x, d) in out.phi.iter_mut().zip(&draws) {
                *x += d;
            }
        }
    }
    (out, clamped)
}

/// Evaluate the mean/std of the average gate infidelity over `n_samples`
/// perturbed propagations per spec. Deterministic under `seed`.
pub fn run_robustness(
    pulse: &PulseSchedule,
    geometry: &AtomGeometry,
    params: &PhysicalParams,
    specs: &[PerturbationSpec],
    n_samples: usize,
    seed: u64,
) -> Result<RobustnessReport, RobustnessError> {
    let blocks = enumerate_blocks(geometry, params)?;
    let target = build_parity_target(geometry.n_atoms(), std::f64::consts::FRAC_PI_4);

    let rows: Result<Vec<RobustnessRow>, RobustnessError> = specs
        .iter()
        .enumerate()
        .map(|(si, spec)| {
            if matches!(spec.channel, Channel::Phase) && matches!(spec.mode, Mode::QuasiStatic) {
                return Err(RobustnessError::StaticPhase);
            }
            let sigma = spec.sigma(params);
            let shots: Result<Vec<(f64, usize)>, RobustnessError> = (0..n_samples)
                .into_par_iter()
                .map(|shot| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(((si as u64) << 32) | shot as u64);
                    let (perturbed, clamped) = perturb(pulse, spec, sigma, &mut rng);
                    // Population traces are not needed here; a single sample
                    // per piece keeps the propagation lean.
                    let props = propagate_blocks_with(&perturbed, &blocks, None, 1)?;
                    Ok((1.0 - avg_fidelity(&props, &target), clamped))
                })
                .collect();
            let shots = shots?;
            let values: Vec<f64> = shots.iter().map(|(v, _)| *v).collect();
            let clamped: usize = shots.iter().map(|(_, c)| c).sum();
            let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
            let var = if values.len() > 1 {
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (values.len() - 1) as f64
            } else {
                0.0
            };
            Ok(RobustnessRow {
                channel: spec.channel,
                mode: spec.mode,
                epsilon: spec.epsilon,
                mean,
                std: var.sqrt(),
                n_samples,
                clamped_draws: clamped,
                shots: values,
            })
        })
        .collect();
    Ok(RobustnessReport { rows: rows? })
}
