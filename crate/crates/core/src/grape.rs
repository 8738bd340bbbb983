//! Gradient-based pulse optimization.
//!
//! The cost is the Bell-state infidelity plus a smoothness regularizer on the
//! piecewise-constant controls, optionally extended by Rydberg-time penalties
//! η_R·T_R + η_RR·T_RR (the noise-aware cost). Gradients are exact: each
//! step propagator is differentiated in its eigenbasis through the divided
//! differences of e^{-iλ dt}, and the quadrature of T_R/T_RR is part of the
//! differentiated graph. Multi-start optimization uses L-BFGS with a
//! strong-Wolfe line search, one RNG stream per start, so results are
//! reproducible regardless of thread scheduling.

use crate::model::{
    enumerate_blocks, AtomGeometry, BlockSpec, Blocks, GateTarget, ModelError, PhysicalParams,
    PulseSchedule,
};
use crate::motional::{error_budget, BudgetOptions, MotionalError};
use crate::optim::{minimize, LbfgsOptions};
use crate::propagate::PropagateError;
use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GrapeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Propagate(#[from] PropagateError),
    #[error(transparent)]
    Motional(#[from] MotionalError),
    #[error("pulse duration {t:.3e} s too short for two ramps of {tau:.3e} s")]
    RampTooLong { t: f64, tau: f64 },
    #[error("durations must be ascending")]
    DurationsNotAscending,
    #[error("negative duration {0}")]
    NegativeDuration(f64),
}

/// Unit convention for the Rydberg-time penalties: `Microseconds` weighs
/// T_R in μs (the natural choice for MHz/μs-unit numerics and the default),
/// `Normalized` weighs Ω₀·T_R/(2π), `Seconds` weighs raw seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeWeightConvention {
    Microseconds,
    Normalized,
    Seconds,
}

/// Smooth Rabi turn-on/turn-off configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RampConfig {
    pub enabled: bool,
    /// Steepness of the 1 - e^{-κ(t/τ)^4} profile.
    pub kappa: f64,
    /// Ramp duration; default π/Ω₀.
    pub tau_ramp_s: Option<f64>,
}

impl Default for RampConfig {
    fn default() -> Self {
        RampConfig {
            enabled: false,
            kappa: 10.0,
            tau_ramp_s: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationConfig {
    /// Smoothness weight η_δ.
    pub eta_delta: f64,
    /// Rydberg-time weight η_R.
    pub eta_r: f64,
    /// Double-excitation weight η_RR.
    pub eta_rr: f64,
    pub n_starts: usize,
    pub max_iters: usize,
    /// Gradient infinity-norm convergence threshold.
    pub grad_tolerance: f64,
    pub seed: u64,
    /// Total pulse duration (s).
    pub duration_t: f64,
    /// Number of pieces; `None` derives 50 per unit of Ω₀T/(2π).
    pub m_steps: Option<usize>,
    pub ramp: RampConfig,
    /// Optimize Ω(t) as well (off: only the laser phase is optimized).
    pub optimize_rabi: bool,
    /// Constrain phases to φ_j = -φ_{M-1-j}.
    pub antisymmetric_phase: bool,
    pub time_weight_convention: TimeWeightConvention,
    /// Population-quadrature samples per pulse piece.
    pub quadrature_substeps: usize,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        OptimizationConfig {
            eta_delta: 1e-3,
            eta_r: 1e-2,
            eta_rr: 1e2,
            n_starts: 20,
            max_iters: 2000,
            grad_tolerance: 1e-9,
            seed: 0,
            duration_t: 0.0,
            m_steps: None,
            ramp: RampConfig::default(),
            optimize_rabi: false,
            antisymmetric_phase: false,
            time_weight_convention: TimeWeightConvention::Microseconds,
            quadrature_substeps: 4,
        }
    }
}

impl OptimizationConfig {
    /// Piece count: 50 per unit of Ω₀T/(2π) unless set explicitly.
    pub fn resolved_m_steps(&self, params: &PhysicalParams) -> usize {
        if let Some(m) = self.m_steps {
            return m;
        }
        if self.duration_t <= 0.0 {
            return 0;
        }
        ((50.0 * params.normalized_time(self.duration_t)).round() as usize).max(1)
    }

    fn time_unit_scale(&self, params: &PhysicalParams) -> f64 {
        match self.time_weight_convention {
            TimeWeightConvention::Microseconds => 1.0e6,
            TimeWeightConvention::Normalized => params.omega_max / TAU,
            TimeWeightConvention::Seconds => 1.0,
        }
    }
}

/// Sample the ramped Rabi profile onto the pulse's step midpoints: smooth
/// rise over [0, τ], Ω₀ plateau, mirrored fall over [T-τ, T].
pub fn apply_ramp(
    pulse: &PulseSchedule,
    params: &PhysicalParams,
    kappa: f64,
    tau_ramp: f64,
) -> Result<PulseSchedule, GrapeError> {
    let t_total = pulse.duration();
    if t_total < 2.0 * tau_ramp {
        return Err(GrapeError::RampTooLong {
            t: t_total,
            tau: tau_ramp,
        });
    }
    let mut out = pulse.clone();
    for j in 0..pulse.m_steps {
        let t = (j as f64 + 0.5) * pulse.dt;
        out.rabi[j] = ramp_profile(t, t_total, params.omega_max, kappa, tau_ramp);
    }
    Ok(out)
}

/// Ω(t) of the ramp profile at continuous time t.
pub fn ramp_profile(t: f64, t_total: f64, omega_max: f64, kappa: f64, tau: f64) -> f64 {
    if t <= 0.0 || t >= t_total {
        return 0.0;
    }
    if t < tau {
        omega_max * (1.0 - (-kappa * (t / tau).powi(4)).exp())
    } else if t > t_total - tau {
        let tr = t_total - t;
        omega_max * (1.0 - (-kappa * (tr / tau).powi(4)).exp())
    } else {
        omega_max
    }
}

fn template_pulse(
    params: &PhysicalParams,
    config: &OptimizationConfig,
) -> Result<PulseSchedule, GrapeError> {
    if config.duration_t < 0.0 {
        return Err(GrapeError::NegativeDuration(config.duration_t));
    }
    let m = config.resolved_m_steps(params);
    let dt = if m == 0 {
        1.0
    } else {
        config.duration_t / m as f64
    };
    let pulse = PulseSchedule::with_phases(vec![0.0; m], params.omega_max, dt);
    if config.ramp.enabled && m > 0 {
        let tau = config.ramp.tau_ramp_s.unwrap_or(PI / params.omega_max);
        apply_ramp(&pulse, params, config.ramp.kappa, tau)
    } else {
        Ok(pulse)
    }
}

// ---------------------------------------------------------------------------
// Cost model with exact gradients.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct CostParts {
    pub cost: f64,
    pub bell_infidelity: f64,
    pub smoothness_phi: f64,
    pub smoothness_rabi: f64,
    /// Seconds.
    pub t_r: f64,
    /// Seconds.
    pub t_rr: f64,
}

struct ClassData {
    spec: BlockSpec,
    mult: f64,
    /// conj(target phase) of every member block.
    g: C64,
    /// Excitation-count / pair-count diagonals.
    w_r: Vec<f64>,
    w_rr: Vec<f64>,
}

/// Differentiable evaluation of the (noise-aware) cost for a fixed step
/// template. Free parameters are the phases (possibly antisymmetric-reduced)
/// and, when enabled, the Rabi values in units of Ω₀.
pub struct CostModel {
    classes: Vec<ClassData>,
    n_atoms: usize,
    eta_delta: f64,
    /// Effective weights multiplying T in seconds.
    kappa_r: f64,
    kappa_rr: f64,
    substeps: usize,
    optimize_rabi: bool,
    antisymmetric: bool,
    template: PulseSchedule,
    omega_max: f64,
    /// Indices of steps whose Rabi value is free (empty unless optimizing Ω).
    free_rabi: Vec<usize>,
}

impl CostModel {
    pub fn new(
        blocks: &Blocks,
        target: &GateTarget,
        params: &PhysicalParams,
        config: &OptimizationConfig,
        template: PulseSchedule,
    ) -> Self {
        let classes = blocks
            .classes
            .iter()
            .map(|class| {
                let spec = blocks.specs[class.representative].clone();
                let mu = crate::model::mask_to_basis_index(spec.mask, blocks.n_atoms);
                let dim = spec.dim;
                let mut w_r = vec![0.0; dim];
                let mut w_rr = vec![0.0; dim];
                for b in 0..dim {
                    let c = (b as u32).count_ones() as f64;
                    w_r[b] = c;
                    w_rr[b] = 0.5 * c * (c - 1.0);
                }
                ClassData {
                    mult: class.members.len() as f64,
                    g: target.phases[mu].conj(),
                    spec,
                    w_r,
                    w_rr,
                }
            })
            .collect();
        let scale = config.time_unit_scale(params);
        let m = template.m_steps;
        let free_rabi = if config.optimize_rabi {
            if config.ramp.enabled {
                let tau = config.ramp.tau_ramp_s.unwrap_or(PI / params.omega_max);
                (0..m)
                    .filter(|&j| {
                        let t = (j as f64 + 0.5) * template.dt;
                        t >= tau && t <= template.duration() - tau
                    })
                    .collect()
            } else {
                (0..m).collect()
            }
        } else {
            Vec::new()
        };
        CostModel {
            classes,
            n_atoms: blocks.n_atoms,
            eta_delta: config.eta_delta,
            kappa_r: config.eta_r * scale,
            kappa_rr: config.eta_rr * scale,
            substeps: config.quadrature_substeps.max(1),
            optimize_rabi: config.optimize_rabi,
            antisymmetric: config.antisymmetric_phase,
            template,
            omega_max: params.omega_max,
            free_rabi,
        }
    }

    pub fn m_steps(&self) -> usize {
        self.template.m_steps
    }

    fn n_phase_params(&self) -> usize {
        if self.antisymmetric {
            self.template.m_steps / 2
        } else {
            self.template.m_steps
        }
    }

    pub fn n_free(&self) -> usize {
        self.n_phase_params() + self.free_rabi.len()
    }

    /// Free-parameter vector reproducing `pulse` (projecting onto the
    /// antisymmetric subspace when that constraint is active).
    pub fn params_from_pulse(&self, pulse: &PulseSchedule) -> Vec<f64> {
        let m = self.template.m_steps;
        let mut x = Vec::with_capacity(self.n_free());
        if self.antisymmetric {
            for j in 0..m / 2 {
                x.push(0.5 * (pulse.phi[j] - pulse.phi[m - 1 - j]));
            }
        } else {
            x.extend_from_slice(&pulse.phi);
        }
        for &j in &self.free_rabi {
            x.push(pulse.rabi[j] / self.omega_max);
        }
        x
    }

    /// Build the full pulse from a free-parameter vector.
    pub fn emit_pulse(&self, x: &[f64]) -> PulseSchedule {
        let m = self.template.m_steps;
        let mut pulse = self.template.clone();
        if self.antisymmetric {
            let half = m / 2;
            for j in 0..half {
                pulse.phi[j] = x[j];
                pulse.phi[m - 1 - j] = -x[j];
            }
            if m % 2 == 1 {
                pulse.phi[m / 2] = 0.0;
            }
        } else {
            pulse.phi[..m].copy_from_slice(&x[..m]);
        }
        for (slot, &j) in self.free_rabi.iter().enumerate() {
            pulse.rabi[j] = (x[self.n_phase_params() + slot] * self.omega_max).max(0.0);
        }
        pulse
    }

    /// Lower/upper bounds for the free parameters (phases unbounded, Rabi
    /// fractions in [0, 1]).
    pub fn bounds(&self) -> Option<Vec<(f64, f64)>> {
        if self.free_rabi.is_empty() {
            return None;
        }
        let mut b = vec![(f64::NEG_INFINITY, f64::INFINITY); self.n_phase_params()];
        b.extend(std::iter::repeat((0.0, 1.0)).take(self.free_rabi.len()));
        Some(b)
    }

    pub fn eval(&self, x: &[f64]) -> CostParts {
        self.evaluate(x, None)
    }

    pub fn eval_grad(&self, x: &[f64], grad: &mut [f64]) -> CostParts {
        self.evaluate(x, Some(grad))
    }

    fn evaluate(&self, x: &[f64], grad: Option<&mut [f64]>) -> CostParts {
        let pulse = self.emit_pulse(x);
        let m = pulse.m_steps;
        let s_sub = self.substeps;
        let n_basis = (1usize << self.n_atoms) as f64;
        let dim_factor = 4f64.powi(self.n_atoms as i32);
        let want_grad = grad.is_some();

        // Forward pass per class (parallel, deterministic order).
        let forwards: Vec<ClassForward> = self
            .classes
            .par_iter()
            .map(|c| class_forward(c, &pulse, s_sub, want_grad))
            .collect();

        let mut trace = C64::new(0.0, 0.0);
        let mut t_r = 0.0;
        let mut t_rr = 0.0;
        for (c, fwd) in self.classes.iter().zip(&forwards) {
            trace += c.g * fwd.corner * c.mult;
            t_r += c.mult * fwd.t_r_raw / n_basis;
            t_rr += c.mult * fwd.t_rr_raw / n_basis;
        }
        let bell_fidelity = trace.norm_sqr() / dim_factor;
        let eps_bell = 1.0 - bell_fidelity;

        let smooth_phi = smoothness(&pulse.phi);
        let rabi_frac: Vec<f64> = pulse.rabi.iter().map(|r| r / self.omega_max).collect();
        let smooth_rabi = if self.optimize_rabi {
            smoothness(&rabi_frac)
        } else {
            0.0
        };

        let cost = eps_bell
            + self.eta_delta * (smooth_phi + smooth_rabi)
            + self.kappa_r * t_r
            + self.kappa_rr * t_rr;

        let parts = CostParts {
            cost,
            bell_infidelity: eps_bell,
            smoothness_phi: smooth_phi,
            smoothness_rabi: smooth_rabi,
            t_r,
            t_rr,
        };

        let Some(grad) = grad else {
            return parts;
        };

        // Reverse pass: accumulate d cost / d phi_j and d cost / d rabi_j.
        let mut g_phi = vec![0.0; m];
        let mut g_rabi = vec![0.0; m];
        let per_class: Vec<(Vec<f64>, Vec<f64>)> = self
            .classes
            .par_iter()
            .zip(forwards.par_iter())
            .map(|(c, fwd)| {
                class_reverse(
                    c,
                    fwd,
                    &pulse,
                    s_sub,
                    trace,
                    dim_factor,
                    n_basis,
                    self.kappa_r,
                    self.kappa_rr,
                    self.optimize_rabi,
                )
            })
            .collect();
        for (gp, go) in &per_class {
            for j in 0..m {
                g_phi[j] += gp[j];
                g_rabi[j] += go[j];
            }
        }

        // Smoothness gradients on the emitted sequences.
        add_smoothness_grad(&pulse.phi, self.eta_delta, &mut g_phi);
        if self.optimize_rabi {
            let mut g_frac = vec![0.0; m];
            add_smoothness_grad(&rabi_frac, self.eta_delta, &mut g_frac);
            // d/d rabi_j = (1/omega_max) d/d frac_j, applied below via chain.
            for j in 0..m {
                g_rabi[j] += g_frac[j] / self.omega_max;
            }
        }

        // Map to free parameters.
        for v in grad.iter_mut() {
            *v = 0.0;
        }
        if self.antisymmetric {
            let half = m / 2;
            for j in 0..half {
                grad[j] = g_phi[j] - g_phi[m - 1 - j];
            }
        } else {
            grad[..m].copy_from_slice(&g_phi[..m]);
        }
        for (slot, &j) in self.free_rabi.iter().enumerate() {
            grad[self.n_phase_params() + slot] = g_rabi[j] * self.omega_max;
        }
        parts
    }
}

fn smoothness(u: &[f64]) -> f64 {
    u.windows(2).map(|w| (0.5 * (w[1] - w[0])).powi(2)).sum()
}

fn add_smoothness_grad(u: &[f64], eta: f64, grad: &mut [f64]) {
    let m = u.len();
    for j in 0..m {
        let mut g = 0.0;
        if j > 0 {
            g += 0.5 * (u[j] - u[j - 1]);
        }
        if j + 1 < m {
            g -= 0.5 * (u[j + 1] - u[j]);
        }
        grad[j] += eta * g;
    }
}

struct StepData {
    w: Array1<f64>,
    v: Array2<C64>,
    /// Substep states χ_0..χ_S (χ_0 is the step's input state).
    chi: Vec<Array1<C64>>,
}

struct ClassForward {
    steps: Vec<StepData>,
    corner: C64,
    t_r_raw: f64,
    t_rr_raw: f64,
}

fn class_forward(c: &ClassData, pulse: &PulseSchedule, s_sub: usize, keep: bool) -> ClassForward {
    let dim = c.spec.dim;
    let m = pulse.m_steps;
    let h = if m == 0 { 0.0 } else { pulse.dt / s_sub as f64 };
    let mut psi: Array1<C64> = Array1::zeros(dim);
    psi[0] = C64::new(1.0, 0.0);
    let mut t_r_raw = 0.0;
    let mut t_rr_raw = 0.0;
    let mut steps = Vec::with_capacity(if keep { m } else { 0 });

    let weigh = |state: &Array1<C64>, wv: &[f64]| -> f64 {
        state
            .iter()
            .zip(wv)
            .map(|(z, w)| z.norm_sqr() * w)
            .sum::<f64>()
    };

    for j in 0..m {
        let hmat = crate::propagate::block_hamiltonian(
            &c.spec,
            pulse.phi[j],
            pulse.rabi[j],
            pulse.detuning[j],
            None,
        );
        let (w, v) = crate::linalg::hermitian_eig(&hmat);
        let vt = crate::linalg::adjoint(&v);
        let mut chi = Vec::with_capacity(s_sub + 1);
        chi.push(psi.clone());
        // Substep evolution in the eigenbasis.
        let coeff = vt.dot(&psi);
        for s in 1..=s_sub {
            let mut rotated = coeff.clone();
            for (k, r) in rotated.iter_mut().enumerate() {
                *r *= C64::from_polar(1.0, -w[k] * h * s as f64);
            }
            chi.push(v.dot(&rotated));
        }
        psi = chi[s_sub].clone();

        // Trapezoid within the step; shared boundaries accumulate halves.
        for (s, state) in chi.iter().enumerate() {
            let wgt = if s == 0 || s == s_sub { 0.5 } else { 1.0 };
            t_r_raw += wgt * h * weigh(state, &c.w_r);
            t_rr_raw += wgt * h * weigh(state, &c.w_rr);
        }
        if keep {
            steps.push(StepData { w, v, chi });
        }
    }

    ClassForward {
        steps,
        corner: psi[0],
        t_r_raw,
        t_rr_raw,
    }
}

/// Divided differences of f(λ) = e^{-iλh}: Γ_kl such that the derivative of
/// the substep propagator in direction B is V (Γ ∘ V†BV) V†.
fn phase_divided_differences(w: &Array1<f64>, h: f64) -> Array2<C64> {
    let n = w.len();
    let mut g = Array2::zeros((n, n));
    for k in 0..n {
        for l in 0..n {
            let mid = C64::from_polar(1.0, -0.5 * (w[k] + w[l]) * h);
            let x = 0.5 * (w[k] - w[l]) * h;
            let sinc = if x.abs() < 1e-8 {
                1.0 - x * x / 6.0
            } else {
                x.sin() / x
            };
            g[[k, l]] = C64::new(0.0, -h) * mid * sinc;
        }
    }
    g
}

#[allow(clippy::too_many_arguments)]
fn class_reverse(
    c: &ClassData,
    fwd: &ClassForward,
    pulse: &PulseSchedule,
    s_sub: usize,
    trace: C64,
    dim_factor: f64,
    n_basis: f64,
    kappa_r: f64,
    kappa_rr: f64,
    want_rabi: bool,
) -> (Vec<f64>, Vec<f64>) {
    let m = pulse.m_steps;
    let dim = c.spec.dim;
    let h = if m == 0 { 0.0 } else { pulse.dt / s_sub as f64 };
    let mut g_phi = vec![0.0; m];
    let mut g_rabi = vec![0.0; m];
    if m == 0 {
        return (g_phi, g_rabi);
    }

    // Bell-term cotangent at the final state (ε = 1 - |τ|²/4^N).
    let mut a: Array1<C64> = Array1::zeros(dim);
    a[0] = -trace * c.g.conj() * (c.mult / dim_factor);

    // Quadrature cotangent q_s = wgt·h·(κ_R D_R + κ_RR D_RR)·χ_s, weighted by
    // the class multiplicity and the 1/2^N basis average.
    let coef = c.mult / n_basis;
    let qvec = |state: &Array1<C64>, wgt: f64| -> Array1<C64> {
        let mut q: Array1<C64> = Array1::zeros(dim);
        for k in 0..dim {
            let wsum = kappa_r * c.w_r[k] + kappa_rr * c.w_rr[k];
            q[k] = state[k] * (coef * wgt * h * wsum);
        }
        q
    };

    for j in (0..m).rev() {
        let sd = &fwd.steps[j];
        let vt = crate::linalg::adjoint(&sd.v);
        let gamma = phase_divided_differences(&sd.w, h);

        // dH/dφ and dH/dΩ projected into the eigenbasis.
        let b_phi = crate::propagate::block_hamiltonian_dphi(&c.spec, pulse.phi[j], pulse.rabi[j]);
        let g_phi_eig = vt.dot(&b_phi).dot(&sd.v);
        let g_rabi_eig = if want_rabi {
            let b_rabi = crate::propagate::block_hamiltonian_drabi(&c.spec, pulse.phi[j]);
            Some(vt.dot(&b_rabi).dot(&sd.v))
        } else {
            None
        };

        // ã_S = a_{j+1} + q_S.
        let mut atil = &a + &qvec(&sd.chi[s_sub], 0.5);
        for s in (0..s_sub).rev() {
            let atil_eig = vt.dot(&atil);
            let chi_eig = vt.dot(&sd.chi[s]);
            // Gradient sandwich 2 Re[ã† V (Γ∘G) V† χ].
            let mut acc_phi = C64::new(0.0, 0.0);
            let mut acc_rabi = C64::new(0.0, 0.0);
            for k in 0..dim {
                for l in 0..dim {
                    let weight = atil_eig[k].conj() * gamma[[k, l]] * chi_eig[l];
                    acc_phi += weight * g_phi_eig[[k, l]];
                    if let Some(gr) = &g_rabi_eig {
                        acc_rabi += weight * gr[[k, l]];
                    }
                }
            }
            g_phi[j] += 2.0 * acc_phi.re;
            if want_rabi {
                g_rabi[j] += 2.0 * acc_rabi.re;
            }
            // ã_s = Q† ã_{s+1} + q_s.
            let mut pulled = atil_eig;
            for (k, p) in pulled.iter_mut().enumerate() {
                *p *= C64::from_polar(1.0, sd.w[k] * h);
            }
            let wgt = if s == 0 { 0.5 } else { 1.0 };
            atil = sd.v.dot(&pulled) + qvec(&sd.chi[s], wgt);
        }
        a = atil;
    }
    (g_phi, g_rabi)
}

// ---------------------------------------------------------------------------
// Public cost/gradient entry points.
// ---------------------------------------------------------------------------

/// Noise-free cost: ε_Bell + η_δ Σ_j ((φ_{j+1}-φ_j)/2)². The Ω smoothness
/// sum enters only when Ω is an optimized control (a constant Ω contributes
/// zero either way).
pub fn cost_noise_free(
    pulse: &PulseSchedule,
    blocks: &Blocks,
    target: &GateTarget,
    eta_delta: f64,
) -> f64 {
    let config = OptimizationConfig {
        eta_delta,
        eta_r: 0.0,
        eta_rr: 0.0,
        ..OptimizationConfig::default()
    };
    // Rydberg-time weights are zero, so the unit scale is irrelevant here.
    let model = CostModel::new(blocks, target, &PhysicalParams::default(), &config, pulse.clone());
    let x = model.params_from_pulse(pulse);
    model.eval(&x).cost
}

/// Noise-aware cost: the noise-free cost plus η_R·T_R + η_RR·T_RR in the
/// configured unit convention (normalized against Ω₀ from `params` by
/// default).
pub fn cost_noise_aware(
    pulse: &PulseSchedule,
    blocks: &Blocks,
    target: &GateTarget,
    params: &PhysicalParams,
    config: &OptimizationConfig,
) -> f64 {
    let model = CostModel::new(blocks, target, params, config, pulse.clone());
    let x = model.params_from_pulse(pulse);
    model.eval(&x).cost
}

/// Exact gradient of the configured cost with respect to the free controls
/// (phases, then Rabi fractions in units of Ω₀ when `optimize_rabi` is set).
pub fn gradient(
    pulse: &PulseSchedule,
    blocks: &Blocks,
    target: &GateTarget,
    params: &PhysicalParams,
    config: &OptimizationConfig,
) -> Vec<f64> {
    let model = CostModel::new(blocks, target, params, config, pulse.clone());
    let x = model.params_from_pulse(pulse);
    let mut grad = vec![0.0; model.n_free()];
    model.eval_grad(&x, &mut grad);
    grad
}

// ---------------------------------------------------------------------------
// Multi-start optimization.
// ---------------------------------------------------------------------------

/// Outcome of one optimization start.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartSummary {
    pub start_index: usize,
    pub cost: f64,
    pub bell_infidelity: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub pulse: PulseSchedule,
    pub cost: f64,
    pub bell_infidelity: f64,
    /// Seconds.
    pub t_r: f64,
    /// Seconds.
    pub t_rr: f64,
    pub iterations: usize,
    pub start_index: usize,
    pub converged: bool,
    /// Free-parameter vector of the winning start (for warm restarts).
    pub free_params: Vec<f64>,
    pub starts: Vec<StartSummary>,
}

/// Smoothness-continuation prefactor for the warm-up stage of random
/// starts. Uniform random phases start far from any bandwidth-limited
/// solution; briefly over-weighting the smoothness term funnels them toward
/// smooth basins before the exact cost is minimized, which multiplies the
/// per-start success rate without changing any optimum.
const ANNEAL_FACTOR: f64 = 30.0;
const ANNEAL_ITERS: usize = 800;

/// Multi-start local optimization from uniform random initial phases in
/// [-π, π). Deterministic for a fixed seed: every start draws from its own
/// ChaCha stream and ties are broken by the lowest start index.
pub fn optimize(
    geometry: &AtomGeometry,
    params: &PhysicalParams,
    target: &GateTarget,
    config: &OptimizationConfig,
) -> Result<OptimizationResult, GrapeError> {
    let blocks = enumerate_blocks(geometry, params)?;
    let template = template_pulse(params, config)?;
    let model = CostModel::new(&blocks, target, params, config, template.clone());
    let warmup = if config.eta_delta > 0.0 {
        let heavy = OptimizationConfig {
            eta_delta: config.eta_delta * ANNEAL_FACTOR,
            ..config.clone()
        };
        Some(CostModel::new(&blocks, target, params, &heavy, template))
    } else {
        None
    };
    optimize_with_model(&model, warmup.as_ref(), config, None)
}

fn optimize_with_model(
    model: &CostModel,
    warmup: Option<&CostModel>,
    config: &OptimizationConfig,
    warm_start: Option<&[f64]>,
) -> Result<OptimizationResult, GrapeError> {
    let n_free = model.n_free();
    let n_phase = model.n_phase_params();
    let opts = LbfgsOptions {
        max_iters: config.max_iters,
        grad_inf_tol: config.grad_tolerance,
        cost_rel_tol: 1e-12,
        bounds: model.bounds(),
        ..LbfgsOptions::default()
    };
    let n_starts = if warm_start.is_some() {
        1
    } else {
        config.n_starts.max(1)
    };

    let runs: Vec<(StartSummary, Vec<f64>)> = (0..n_starts)
        .into_par_iter()
        .map(|start| {
            let x0 = match warm_start {
                Some(x) => x.to_vec(),
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                    rng.set_stream(start as u64 + 1);
                    let mut x0 = vec![0.0; n_free];
                    for v in x0.iter_mut().take(n_phase) {
                        *v = rng.gen_range(-PI..PI);
                    }
                    // Rabi fractions start from the template profile.
                    let tpl = model.params_from_pulse(&model.template);
                    x0[n_phase..].copy_from_slice(&tpl[n_phase..]);
                    x0
                }
            };
            let x0 = match (warm_start, warmup) {
                (None, Some(heavy)) => {
                    let pre_opts = LbfgsOptions {
                        max_iters: ANNEAL_ITERS.min(config.max_iters),
                        grad_inf_tol: config.grad_tolerance,
                        cost_rel_tol: 1e-12,
                        bounds: heavy.bounds(),
                        ..LbfgsOptions::default()
                    };
                    minimize(|x, g| heavy.eval_grad(x, g).cost, x0, &pre_opts).x
                }
                _ => x0,
            };
            let res = minimize(|x, g| model.eval_grad(x, g).cost, x0, &opts);
            let parts = model.eval(&res.x);
            (
                StartSummary {
                    start_index: start,
                    cost: res.cost,
                    bell_infidelity: parts.bell_infidelity,
                    iterations: res.iterations,
                    converged: res.converged,
                },
                res.x,
            )
        })
        .collect();

    let best = runs
        .iter()
        .enumerate()
        .min_by(|(_, (a, _)), (_, (b, _))| {
            a.cost
                .partial_cmp(&b.cost)
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .map(|(i, _)| i)
        .expect("at least one start");

    let (summary, x) = &runs[best];
    let pulse = model.emit_pulse(x);
    let parts = model.eval(x);
    Ok(OptimizationResult {
        pulse,
        cost: summary.cost,
        bell_infidelity: parts.bell_infidelity,
        t_r: parts.t_r,
        t_rr: parts.t_rr,
        iterations: summary.iterations,
        start_index: summary.start_index,
        converged: summary.converged,
        free_params: x.clone(),
        starts: runs.iter().map(|(s, _)| s.clone()).collect(),
    })
}

// ---------------------------------------------------------------------------
// Scans and pulse families.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QslScanPoint {
    pub duration_norm: f64,
    pub duration_s: f64,
    pub best_infidelity: f64,
    pub best_cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QslScan {
    pub points: Vec<QslScanPoint>,
}

impl QslScan {
    /// Minimal scanned duration whose best infidelity crosses `threshold`.
    pub fn t_star(&self, threshold: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.best_infidelity <= threshold)
            .map(|p| p.duration_norm)
    }
}

/// Optimize at each duration of an ascending grid (Ω₀T/(2π) units). With
/// η_δ = 0 and no ramps this estimates the quantum speed limit.
pub fn qsl_scan(
    geometry: &AtomGeometry,
    params: &PhysicalParams,
    target: &GateTarget,
    durations_norm: &[f64],
    config: &OptimizationConfig,
) -> Result<QslScan, GrapeError> {
    if durations_norm.windows(2).any(|w| w[1] <= w[0]) {
        return Err(GrapeError::DurationsNotAscending);
    }
    let mut points = Vec::with_capacity(durations_norm.len());
    for &tn in durations_norm {
        let mut cfg = config.clone();
        cfg.duration_t = params.duration_from_normalized(tn);
        let res = optimize(geometry, params, target, &cfg)?;
        points.push(QslScanPoint {
            duration_norm: tn,
            duration_s: cfg.duration_t,
            best_infidelity: res.bell_infidelity,
            best_cost: res.cost,
        });
    }
    Ok(QslScan { points })
}

#[derive(Debug, Clone)]
pub struct ThetaSweepPoint {
    pub theta: f64,
    pub result: OptimizationResult,
}

/// Warm-started re-optimization over a descending θ grid, seeding each angle
/// with the previous solution. With the antisymmetric constraint only the
/// first half of the phases is free and every emitted pulse obeys
/// φ_j = -φ_{M-1-j} exactly; a non-antisymmetric base is projected onto the
/// constraint and re-optimized at the first grid point.
pub fn theta_sweep(
    geometry: &AtomGeometry,
    params: &PhysicalParams,
    base: &OptimizationResult,
    base_theta: f64,
    thetas: &[f64],
    config: &OptimizationConfig,
) -> Result<Vec<ThetaSweepPoint>, GrapeError> {
    let blocks = enumerate_blocks(geometry, params)?;
    let mut points: Vec<ThetaSweepPoint> = Vec::with_capacity(thetas.len());
    let mut warm: Option<Vec<f64>> = None;

    for (i, &theta) in thetas.iter().enumerate() {
        let target = crate::model::build_parity_target(geometry.n_atoms(), theta);
        let model = CostModel::new(
            &blocks,
            &target,
            params,
            config,
            base.pulse.clone(),
        );
        if i == 0 && (theta - base_theta).abs() < 1e-12 && !config.antisymmetric_phase {
            points.push(ThetaSweepPoint {
                theta,
                result: base.clone(),
            });
            warm = Some(model.params_from_pulse(&base.pulse));
            continue;
        }
        let x0 = warm
            .clone()
            .unwrap_or_else(|| model.params_from_pulse(&base.pulse));
        let result = optimize_with_model(&model, None, config, Some(&x0))?;
        warm = Some(result.free_params.clone());
        points.push(ThetaSweepPoint { theta, result });
    }
    Ok(points)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RabiScanRow {
    pub geometry: String,
    pub omega_max_rad_s: f64,
    pub r_min_um: f64,
    pub duration_norm: f64,
    pub duration_s: f64,
    pub eps_bell: f64,
    pub eps_total: f64,
    pub eps_decay: f64,
    pub t_r_norm: f64,
}

/// Grid sweep over Rabi frequencies, spacings and durations (Ω₀T/(2π) ≤ 7),
/// reporting the total infidelity of the noise-aware optimum of each cell
/// from the full noisy simulation.
#[allow(clippy::too_many_arguments)]
pub fn rabi_tradeoff_scan(
    geometry_kinds: &[crate::model::GeometryKind],
    omega_maxes: &[f64],
    spacings_um: &[f64],
    durations_norm: &[f64],
    base_params: &PhysicalParams,
    theta: f64,
    config: &OptimizationConfig,
    budget: &BudgetOptions,
) -> Result<Vec<RabiScanRow>, GrapeError> {
    let mut rows = Vec::new();
    for &kind in geometry_kinds {
        for &omega in omega_maxes {
            for &r in spacings_um {
                let geometry = crate::model::build_geometry(kind, r)?;
                let mut params = base_params.clone();
                params.omega_max = omega;
                let target = crate::model::build_parity_target(geometry.n_atoms(), theta);
                for &tn in durations_norm {
                    if tn > 7.0 + 1e-12 {
                        continue;
                    }
                    let mut cfg = config.clone();
                    cfg.duration_t = params.duration_from_normalized(tn);
                    let res = optimize(&geometry, &params, &target, &cfg)?;
                    let bud = error_budget(&res.pulse, &geometry, &params, budget)?;
                    rows.push(RabiScanRow {
                        geometry: kind.name().to_string(),
                        omega_max_rad_s: omega,
                        r_min_um: r,
                        duration_norm: tn,
                        duration_s: cfg.duration_t,
                        eps_bell: res.bell_infidelity,
                        eps_total: bud.eps_total,
                        eps_decay: bud.eps_decay,
                        t_r_norm: params.normalized_time(res.t_r),
                    });
                }
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fidelity;
    use crate::model::{build_geometry, build_parity_target, GeometryKind};
    use crate::propagate::propagate_blocks_with;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_4;

    fn z2_setup() -> (AtomGeometry, PhysicalParams, GateTarget, Blocks) {
        let params = PhysicalParams::default();
        let g = build_geometry(GeometryKind::LinearPair, 2.0).unwrap();
        let blocks = enumerate_blocks(&g, &params).unwrap();
        let target = build_parity_target(2, FRAC_PI_4);
        (g, params, target, blocks)
    }

    #[test]
    fn smoothness_single_jump_value() {
        let (_, params, target, blocks) = z2_setup();
        let pulse = PulseSchedule::with_phases(vec![0.0, PI], params.omega_max, 2e-9);
        let c0 = cost_noise_free(&pulse, &blocks, &target, 0.0);
        let c1 = cost_noise_free(&pulse, &blocks, &target, 1e-3);
        assert_relative_eq!(c1 - c0, 1e-3 * (PI / 2.0).powi(2), epsilon = 1e-15);
    }

    #[test]
    fn noise_aware_reduces_to_noise_free_without_weights() {
        let (_, params, target, blocks) = z2_setup();
        let pulse = PulseSchedule::with_phases(vec![0.1, -0.4, 0.7], params.omega_max, 2e-9);
        let config = OptimizationConfig {
            eta_delta: 1e-3,
            eta_r: 0.0,
            eta_rr: 0.0,
            ..OptimizationConfig::default()
        };
        let a = cost_noise_aware(&pulse, &blocks, &target, &params, &config);
        let b = cost_noise_free(&pulse, &blocks, &target, 1e-3);
        assert_relative_eq!(a, b, epsilon = 1e-15);
    }

    #[test]
    fn zero_drive_cost_is_identity_infidelity() {
        let (_, params, target, blocks) = z2_setup();
        let pulse = PulseSchedule::with_phases(vec![0.0; 8], 0.0, 2e-9);
        let config = OptimizationConfig::default();
        let c = cost_noise_aware(&pulse, &blocks, &target, &params, &config);
        assert_relative_eq!(c, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn cost_matches_propagation_report() {
        // The model's internal quadrature must agree with the propagation
        // engine's population traces.
        let (_, params, target, blocks) = z2_setup();
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let phi: Vec<f64> = (0..20).map(|_| rng.gen_range(-PI..PI)).collect();
        let pulse = PulseSchedule::with_phases(phi, params.omega_max, 2e-9);
        let config = OptimizationConfig {
            time_weight_convention: TimeWeightConvention::Normalized,
            ..OptimizationConfig::default()
        };
        let cost = cost_noise_aware(&pulse, &blocks, &target, &params, &config);

        let props = propagate_blocks_with(&pulse, &blocks, None, 4).unwrap();
        let rep = fidelity::report(&props, &target);
        let scale = params.omega_max / TAU;
        let want = (1.0 - rep.bell_fidelity)
            + 1e-3 * smoothness(&pulse.phi)
            + 1e-2 * scale * rep.t_r
            + 1e2 * scale * rep.t_rr;
        assert_relative_eq!(cost, want, epsilon = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (_, params, target, blocks) = z2_setup();
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let m = 20;
        let phi: Vec<f64> = (0..m).map(|_| rng.gen_range(-PI..PI)).collect();
        let pulse = PulseSchedule::with_phases(phi, params.omega_max, 2e-9);

        for (eta_r, eta_rr) in [(0.0, 0.0), (1e-2, 1e2)] {
            let config = OptimizationConfig {
                eta_delta: 1e-3,
                eta_r,
                eta_rr,
                ..OptimizationConfig::default()
            };
            let grad = gradient(&pulse, &blocks, &target, &params, &config);
            let h = 1e-6;
            let mut fd = vec![0.0; m];
            for j in 0..m {
                let mut up = pulse.clone();
                up.phi[j] += h;
                let mut dn = pulse.clone();
                dn.phi[j] -= h;
                fd[j] = (cost_noise_aware(&up, &blocks, &target, &params, &config)
                    - cost_noise_aware(&dn, &blocks, &target, &params, &config))
                    / (2.0 * h);
            }
            let norm_fd: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
            let err: f64 = grad
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(
                err / norm_fd < 1e-5,
                "relative gradient error {} (η_R={eta_r})",
                err / norm_fd
            );
        }
    }

    #[test]
    fn gradient_with_rabi_controls_matches_fd() {
        let (_, params, target, blocks) = z2_setup();
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let m = 12;
        let phi: Vec<f64> = (0..m).map(|_| rng.gen_range(-PI..PI)).collect();
        let mut pulse = PulseSchedule::with_phases(phi, params.omega_max, 2e-9);
        for r in pulse.rabi.iter_mut() {
            *r *= rng.gen_range(0.3..1.0);
        }
        let config = OptimizationConfig {
            optimize_rabi: true,
            ..OptimizationConfig::default()
        };
        let grad = gradient(&pulse, &blocks, &target, &params, &config);
        assert_eq!(grad.len(), 2 * m);

        let model = CostModel::new(&blocks, &target, &params, &config, pulse.clone());
        let x = model.params_from_pulse(&pulse);
        let h = 1e-6;
        for j in 0..2 * m {
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let fd = (model.eval(&xp).cost - model.eval(&xm).cost) / (2.0 * h);
            let denom = fd.abs().max(1e-4);
            assert!(
                (grad[j] - fd).abs() / denom < 1e-4,
                "param {j}: analytic {} vs fd {fd}",
                grad[j]
            );
        }
    }

    #[test]
    fn ramp_profile_values() {
        let params = PhysicalParams::default();
        let tau = PI / params.omega_max;
        let t_total = 10.0 * tau;
        // t = τ: Ω = Ω0(1 - e^{-10}).
        let w = ramp_profile(tau - 1e-18, t_total, params.omega_max, 10.0, tau);
        assert_relative_eq!(w / params.omega_max, 1.0 - (-10.0f64).exp(), epsilon = 1e-9);
        assert_eq!(ramp_profile(0.0, t_total, params.omega_max, 10.0, tau), 0.0);
        // Symmetry Ω(t) = Ω(T-t).
        for frac in [0.1, 0.3, 0.5, 0.8] {
            let t = frac * t_total;
            let a = ramp_profile(t, t_total, params.omega_max, 10.0, tau);
            let b = ramp_profile(t_total - t, t_total, params.omega_max, 10.0, tau);
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn ramp_rejects_short_pulses() {
        let params = PhysicalParams::default();
        let pulse = PulseSchedule::with_phases(vec![0.0; 4], params.omega_max, 1e-9);
        let tau = PI / params.omega_max;
        assert!(matches!(
            apply_ramp(&pulse, &params, 10.0, tau),
            Err(GrapeError::RampTooLong { .. })
        ));
    }

    #[test]
    fn zero_duration_optimize_returns_identity_infidelity() {
        let (g, params, target, _) = z2_setup();
        let config = OptimizationConfig {
            duration_t: 0.0,
            n_starts: 2,
            ..OptimizationConfig::default()
        };
        let res = optimize(&g, &params, &target, &config).unwrap();
        assert_relative_eq!(res.bell_infidelity, 0.5, epsilon = 1e-12);
        assert!(res.converged);
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn optimize_is_seed_reproducible() {
        let (g, params, target, _) = z2_setup();
        let config = OptimizationConfig {
            duration_t: params.duration_from_normalized(1.4),
            m_steps: Some(40),
            n_starts: 3,
            max_iters: 60,
            eta_r: 0.0,
            eta_rr: 0.0,
            eta_delta: 0.0,
            seed: 7,
            ..OptimizationConfig::default()
        };
        let a = optimize(&g, &params, &target, &config).unwrap();
        let b = optimize(&g, &params, &target, &config).unwrap();
        assert_eq!(a.pulse.phi, b.pulse.phi);
        assert_eq!(a.cost, b.cost);
        assert_eq!(a.start_index, b.start_index);
        assert!(a.cost >= a.bell_infidelity - 1e-15);
    }

    #[test]
    fn antisymmetric_emission_is_exact() {
        let (_, params, target, blocks) = z2_setup();
        let config = OptimizationConfig {
            antisymmetric_phase: true,
            ..OptimizationConfig::default()
        };
        for m in [8usize, 9] {
            let template = PulseSchedule::with_phases(vec![0.0; m], params.omega_max, 2e-9);
            let model = CostModel::new(&blocks, &target, &params, &config, template);
            let x: Vec<f64> = (0..model.n_free()).map(|i| 0.3 * (i as f64 + 1.0)).collect();
            let pulse = model.emit_pulse(&x);
            for j in 0..m {
                assert_eq!(pulse.phi[j], -pulse.phi[m - 1 - j]);
            }
        }
    }

    #[test]
    fn antisymmetric_gradient_matches_fd() {
        let (_, params, target, blocks) = z2_setup();
        let config = OptimizationConfig {
            antisymmetric_phase: true,
            ..OptimizationConfig::default()
        };
        let template = PulseSchedule::with_phases(vec![0.0; 14], params.omega_max, 2e-9);
        let model = CostModel::new(&blocks, &target, &params, &config, template);
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..model.n_free()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut grad = vec![0.0; model.n_free()];
        model.eval_grad(&x, &mut grad);
        let h = 1e-6;
        for j in 0..x.len() {
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let fd = (model.eval(&xp).cost - model.eval(&xm).cost) / (2.0 * h);
            assert!(
                (grad[j] - fd).abs() / fd.abs().max(1e-6) < 1e-4,
                "param {j}: {} vs {}",
                grad[j],
                fd
            );
        }
    }
}
