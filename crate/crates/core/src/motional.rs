//! Intrinsic-noise simulation with motional degrees of freedom.
//!
//! Each atom carries one truncated oscillator mode along a chosen 1D trap
//! axis. Photon recoil enters as the exact phase factor e^{ikx̃} on the
//! drive (parallel axis), the van der Waals interaction is Taylor-expanded
//! in the relative displacement up to a configurable order, and Rydberg
//! decay is the non-Hermitian -iγ_d/2 Σ n_j term. Block structure over the
//! internal states survives, so each block is propagated independently with
//! the matrix-free Krylov stepper; atoms in |0⟩ stay in the motional ground
//! state exactly and are dropped from the block's phonon space.

use crate::fidelity;
use crate::linalg::hermitian_eig;
use crate::model::{
    build_parity_target, canonical_pair_key, enumerate_blocks, mask_to_basis_index, AtomGeometry,
    GateTarget, ModelError, PhysicalParams, PulseSchedule, HBAR,
};
use crate::propagate::{
    krylov_evolve_adaptive, propagate_blocks, KrylovConfig, OperatorAction, PropagateError,
};
use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MotionalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Propagate(#[from] PropagateError),
    #[error("empty frequency grid")]
    EmptyGrid,
    #[error("fit failed: all model values vanish (residual {residual:.3e})")]
    DegenerateFit { residual: f64 },
}

/// Simulated 1D trap axis relative to the drive laser (which points along x).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrapAxis {
    Parallel,
    Perpendicular,
}

impl TrapAxis {
    fn direction(self) -> [f64; 3] {
        match self {
            TrapAxis::Parallel => [1.0, 0.0, 0.0],
            TrapAxis::Perpendicular => [0.0, 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotionalConfig {
    /// Motional states per atom.
    pub n_fock: usize,
    /// Taylor order of the VdW expansion in the relative displacement.
    pub taylor_order: usize,
    pub trap_axis: TrapAxis,
    pub include_decay: bool,
    pub include_recoil: bool,
    pub include_vdw_gradient: bool,
    pub krylov: KrylovConfig,
}

impl Default for MotionalConfig {
    fn default() -> Self {
        MotionalConfig::full(12, 10)
    }
}

impl MotionalConfig {
    /// Full run: recoil phase, displaced VdW potential and decay, all along
    /// the drive axis.
    pub fn full(n_fock: usize, taylor_order: usize) -> Self {
        MotionalConfig {
            n_fock,
            taylor_order,
            trap_axis: TrapAxis::Parallel,
            include_decay: true,
            include_recoil: true,
            include_vdw_gradient: true,
            krylov: KrylovConfig::default(),
        }
    }

    /// Recoil-only run: parallel axis, no decay, no VdW displacement.
    pub fn recoil(n_fock: usize) -> Self {
        MotionalConfig {
            n_fock,
            taylor_order: 10,
            trap_axis: TrapAxis::Parallel,
            include_decay: false,
            include_recoil: true,
            include_vdw_gradient: false,
            krylov: KrylovConfig::default(),
        }
    }

    /// Force-only run: perpendicular axis, displaced VdW potential, no decay;
    /// the recoil factor is the identity for this axis.
    pub fn force(n_fock: usize, taylor_order: usize) -> Self {
        MotionalConfig {
            n_fock,
            taylor_order,
            trap_axis: TrapAxis::Perpendicular,
            include_decay: false,
            include_recoil: false,
            include_vdw_gradient: true,
            krylov: KrylovConfig::default(),
        }
    }

    fn trap_frequency(&self, params: &PhysicalParams) -> f64 {
        match self.trap_axis {
            TrapAxis::Parallel => params.omega_par,
            TrapAxis::Perpendicular => params.omega_perp,
        }
    }
}

// ---------------------------------------------------------------------------
// Operators in the truncated Fock basis.
// ---------------------------------------------------------------------------

/// Position operator x_zpf (a + a†) in meters.
fn position_matrix(n_fock: usize, x_zpf: f64) -> Array2<C64> {
    let mut x = Array2::zeros((n_fock, n_fock));
    for n in 0..n_fock.saturating_sub(1) {
        let v = x_zpf * ((n + 1) as f64).sqrt();
        x[[n, n + 1]] = C64::new(v, 0.0);
        x[[n + 1, n]] = C64::new(v, 0.0);
    }
    x
}

/// Recoil factor exp(i k x̃), computed exactly in the truncated basis.
fn recoil_matrix(n_fock: usize, k: f64, x_zpf: f64) -> Array2<C64> {
    let x = position_matrix(n_fock, x_zpf);
    let (w, v) = hermitian_eig(&x);
    let mut phased = Array2::zeros((n_fock, n_fock));
    for col in 0..n_fock {
        let ph = C64::from_polar(1.0, k * w[col]);
        for row in 0..n_fock {
            phased[[row, col]] = v[[row, col]] * ph;
        }
    }
    phased.dot(&crate::linalg::adjoint(&v))
}

/// Gegenbauer coefficients C_n^{(3)}(x): (1 - 2xt + t²)^{-3} = Σ C_n(x) tⁿ.
fn gegenbauer3(order: usize, x: f64) -> Vec<f64> {
    let mut c = vec![0.0; order + 1];
    c[0] = 1.0;
    if order >= 1 {
        c[1] = 6.0 * x;
    }
    for n in 2..=order {
        let nf = n as f64;
        c[n] = (2.0 * x * (nf + 2.0) * c[n - 1] - (nf + 4.0) * c[n - 2]) / nf;
    }
    c
}

/// Displaced pair interaction V(R + (x̃_a - x̃_b)·cosθ …) on the two-mode
/// space, Taylor-expanded to `order`:
/// V0 Σ_n C_n^{(3)}(-c) (δ/R)ⁿ with δ = x̃_a - x̃_b and c the direction
/// cosine of the interatomic vector against the trap axis.
fn displaced_pair_operator(
    n_fock: usize,
    x_zpf: f64,
    v0: f64,
    r_m: f64,
    cosine: f64,
    order: usize,
) -> Array2<C64> {
    let dim = n_fock * n_fock;
    let x = position_matrix(n_fock, x_zpf);
    // δ/R = (x⊗I - I⊗x)/R
    let mut d = Array2::zeros((dim, dim));
    for i in 0..n_fock {
        for j in 0..n_fock {
            for k in 0..n_fock {
                for l in 0..n_fock {
                    let mut val = C64::new(0.0, 0.0);
                    if j == l {
                        val += x[[i, k]];
                    }
                    if i == k {
                        val -= x[[j, l]];
                    }
                    d[[i * n_fock + j, k * n_fock + l]] = val / C64::new(r_m, 0.0);
                }
            }
        }
    }
    let coeff = gegenbauer3(order, -cosine);
    // Horner evaluation: P = c_n I + (δ/R)·P.
    let mut p: Array2<C64> = Array2::eye(dim) * C64::new(coeff[order], 0.0);
    for n in (0..order).rev() {
        p = d.dot(&p) + Array2::<C64>::eye(dim) * C64::new(coeff[n], 0.0);
    }
    p * C64::new(v0, 0.0)
}

// ---------------------------------------------------------------------------
// Per-block motional model.
// ---------------------------------------------------------------------------

struct PairOp {
    q1: usize,
    q2: usize,
    w: Array2<C64>,
}

struct MotionalClass {
    members: Vec<usize>,
    rep_mask: usize,
    n_active: usize,
    dim_int: usize,
    dim_ph: usize,
    /// Trap energy ω Σ_q f_q per phonon index.
    trap_diag: Vec<f64>,
    /// Rydberg excitation count per internal state.
    int_count: Vec<u32>,
    /// Bare Σ V_jk over doubly excited pairs, per internal state.
    vdw_const: Vec<f64>,
    pair_ops: Vec<PairOp>,
    kmat: Option<Array2<C64>>,
    /// Phonon indices with any mode in the top Fock state.
    top_mode: Vec<bool>,
    /// Spectral-radius estimate for substep selection (rad/s).
    radius_est: f64,
}

/// Motional system: one propagation model per symmetry class of blocks.
/// Classes are coarser or finer than the noise-free ones because the VdW
/// displacement couples through geometry-specific direction cosines.
pub struct MotionalSystem {
    pub n_atoms: usize,
    pub config: MotionalConfig,
    pub n_fock: usize,
    classes: Vec<MotionalClass>,
}

impl MotionalSystem {
    pub fn new(
        geometry: &AtomGeometry,
        params: &PhysicalParams,
        config: &MotionalConfig,
    ) -> Result<Self, MotionalError> {
        let n = geometry.n_atoms();
        let nf = config.n_fock.max(1);
        let omega_trap = config.trap_frequency(params);
        let x_zpf = (HBAR / (2.0 * params.mass_kg * omega_trap)).sqrt();
        let axis = config.trap_axis.direction();
        let v_full = crate::model::pairwise_interaction(geometry, params)?;
        let scale = geometry.r_min_um;

        let cosine = |i: usize, j: usize| -> f64 {
            // û·(R_i - R_j)/R, dimensionless.
            let dir = geometry.direction(i, j);
            axis[0] * dir[0] + axis[1] * dir[1] + axis[2] * dir[2]
        };

        // Group masks by congruence of (distance, cosine) pair features; the
        // cosine matters only when the VdW displacement term is active.
        let mut classes: Vec<(Vec<i64>, Vec<usize>)> = Vec::new();
        for mask in 0..(1usize << n) {
            let active: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let key = canonical_pair_key(active.len(), |a, b| {
                let i = active[a];
                let j = active[b];
                let mut f = vec![(geometry.distance_um(i, j) / scale * 1.0e9).round() as i64];
                if config.include_vdw_gradient {
                    f.push((cosine(i, j) * 1.0e9).round() as i64);
                }
                f
            });
            match classes.iter_mut().find(|(k, _)| *k == key) {
                Some((_, members)) => members.push(mask),
                None => classes.push((key, vec![mask])),
            }
        }

        let kmat = if config.include_recoil && config.trap_axis == TrapAxis::Parallel {
            Some(recoil_matrix(nf, params.wave_number(), x_zpf))
        } else {
            None
        };

        let built = classes
            .into_iter()
            .map(|(_, members)| {
                let rep_mask = members[0];
                let active: Vec<usize> = (0..n).filter(|i| rep_mask & (1 << i) != 0).collect();
                let a = active.len();
                let dim_int = 1usize << a;
                let dim_ph = nf.pow(a as u32);

                let mut trap_diag = vec![0.0; dim_ph];
                let mut top_mode = vec![false; dim_ph];
                for (p, (td, tm)) in trap_diag.iter_mut().zip(top_mode.iter_mut()).enumerate() {
                    let mut rest = p;
                    let mut e = 0.0;
                    for _ in 0..a {
                        let f = rest % nf;
                        rest /= nf;
                        e += omega_trap * f as f64;
                        if f == nf - 1 {
                            *tm = true;
                        }
                    }
                    *td = e;
                }

                let mut int_count = vec![0u32; dim_int];
                let mut vdw_const = vec![0.0; dim_int];
                for b in 0..dim_int {
                    int_count[b] = (b as u32).count_ones();
                    for q1 in 0..a {
                        for q2 in (q1 + 1)..a {
                            if b & (1 << q1) != 0 && b & (1 << q2) != 0 {
                                vdw_const[b] += v_full[[active[q1], active[q2]]];
                            }
                        }
                    }
                }

                let mut pair_ops = Vec::new();
                if config.include_vdw_gradient {
                    for q1 in 0..a {
                        for q2 in (q1 + 1)..a {
                            let i = active[q1];
                            let j = active[q2];
                            let w = displaced_pair_operator(
                                nf,
                                x_zpf,
                                v_full[[i, j]],
                                geometry.distance_um(i, j) * 1.0e-6,
                                cosine(i, j),
                                config.taylor_order.max(1),
                            );
                            pair_ops.push(PairOp { q1, q2, w });
                        }
                    }
                }

                let spread = vdw_const
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v.abs()));
                let radius_est = 0.5 * spread
                    + omega_trap * (nf as f64) * (a as f64)
                    + params.omega_max * (a as f64).sqrt();

                MotionalClass {
                    members,
                    rep_mask,
                    n_active: a,
                    dim_int,
                    dim_ph,
                    trap_diag,
                    int_count,
                    vdw_const,
                    pair_ops,
                    kmat: kmat.clone(),
                    top_mode,
                    radius_est,
                }
            })
            .collect();

        Ok(MotionalSystem {
            n_atoms: n,
            config: config.clone(),
            n_fock: nf,
            classes: built,
        })
    }

    /// Operator-action callback for one class and one set of step controls;
    /// acts on the (internal ⊗ Fock^a) space of the class.
    pub fn step_applier(
        &self,
        class_index: usize,
        phi: f64,
        rabi: f64,
        detuning: f64,
        params: &PhysicalParams,
    ) -> StepApplier<'_> {
        let class = &self.classes[class_index];
        let nf = self.n_fock;
        let gamma = if self.config.include_decay {
            params.gamma_d
        } else {
            0.0
        };
        // Diagonal: trap + (-Δ - iγ/2)·count + bare VdW (when the displaced
        // operator is not active). Shift by the midpoint of the real range
        // to halve the spectral radius seen by the Krylov stepper.
        let dim = class.dim_int * class.dim_ph;
        let mut diag = vec![C64::new(0.0, 0.0); dim];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for b in 0..class.dim_int {
            let cnt = class.int_count[b] as f64;
            let base = C64::new(
                -detuning * cnt
                    + if class.pair_ops.is_empty() {
                        -class.vdw_const[b]
                    } else {
                        0.0
                    },
                -0.5 * gamma * cnt,
            );
            for p in 0..class.dim_ph {
                let v = base + C64::new(class.trap_diag[p], 0.0);
                lo = lo.min(v.re);
                hi = hi.max(v.re);
                diag[b * class.dim_ph + p] = v;
            }
        }
        // The displaced pair operators contribute their own diagonal range.
        if !class.pair_ops.is_empty() {
            for b in 0..class.dim_int {
                let v = -class.vdw_const[b];
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let shift = 0.5 * (lo + hi);
        for d in diag.iter_mut() {
            *d -= C64::new(shift, 0.0);
        }
        StepApplier {
            class,
            nf,
            drive: C64::from_polar(0.5 * rabi, phi),
            diag,
            shift,
        }
    }

    /// Population in the top Fock mode for a class state.
    fn top_mode_population(class: &MotionalClass, state: &[C64]) -> f64 {
        let mut s = 0.0;
        for b in 0..class.dim_int {
            let base = b * class.dim_ph;
            for p in 0..class.dim_ph {
                if class.top_mode[p] {
                    s += state[base + p].norm_sqr();
                }
            }
        }
        s
    }
}

/// One piecewise-constant segment of the motional Hamiltonian.
pub struct StepApplier<'a> {
    class: &'a MotionalClass,
    nf: usize,
    drive: C64,
    diag: Vec<C64>,
    /// Real diagonal shift applied inside the operator; the propagated state
    /// must be rotated back by e^{-i·shift·t}.
    pub shift: f64,
}

impl OperatorAction for StepApplier<'_> {
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let class = self.class;
        let nf = self.nf;
        let dim_ph = class.dim_ph;
        let a = class.n_active;

        for (yi, (xi, di)) in y.iter_mut().zip(x.iter().zip(self.diag.iter())) {
            *yi = xi * di;
        }

        // Drive: (Ω/2) e^{iφ} K |r⟩⟨1| + h.c. per active atom; the VdW pair
        // operator acts on the modes of doubly excited pairs.
        let mut gather = vec![C64::new(0.0, 0.0); nf];
        let mut result = vec![C64::new(0.0, 0.0); nf];
        for q in 0..a {
            let stride = nf.pow((a - 1 - q) as u32);
            let n_outer = dim_ph / (stride * nf);
            for b0 in 0..class.dim_int {
                if b0 & (1 << q) != 0 {
                    continue;
                }
                let b1 = b0 | (1 << q);
                let base0 = b0 * dim_ph;
                let base1 = b1 * dim_ph;
                for outer in 0..n_outer {
                    let block_off = outer * stride * nf;
                    for inner in 0..stride {
                        let off = block_off + inner;
                        match &class.kmat {
                            Some(k) => {
                                for f in 0..nf {
                                    gather[f] = x[base0 + off + f * stride];
                                }
                                for fp in 0..nf {
                                    let mut acc = C64::new(0.0, 0.0);
                                    for f in 0..nf {
                                        acc += k[[fp, f]] * gather[f];
                                    }
                                    result[fp] = acc;
                                }
                                for fp in 0..nf {
                                    y[base1 + off + fp * stride] += self.drive * result[fp];
                                }
                                // h.c.: conj(drive)·K† from |r⟩ to |1⟩.
                                for f in 0..nf {
                                    gather[f] = x[base1 + off + f * stride];
                                }
                                for fp in 0..nf {
                                    let mut acc = C64::new(0.0, 0.0);
                                    for f in 0..nf {
                                        acc += k[[f, fp]].conj() * gather[f];
                                    }
                                    y[base0 + off + fp * stride] += self.drive.conj() * acc;
                                }
                            }
                            None => {
                                for f in 0..nf {
                                    let i0 = base0 + off + f * stride;
                                    let i1 = base1 + off + f * stride;
                                    y[i1] += self.drive * x[i0];
                                    y[i0] += self.drive.conj() * x[i1];
                                }
                            }
                        }
                    }
                }
            }
        }

        if !class.pair_ops.is_empty() {
            let dim_pair = nf * nf;
            let mut pg = vec![C64::new(0.0, 0.0); dim_pair];
            for op in &class.pair_ops {
                let s1 = nf.pow((a - 1 - op.q1) as u32);
                let s2 = nf.pow((a - 1 - op.q2) as u32);
                let both = (1 << op.q1) | (1 << op.q2);
                for b in 0..class.dim_int {
                    if b & both != both {
                        continue;
                    }
                    let base = b * dim_ph;
                    for rest in 0..dim_ph {
                        // `rest` ranges over configurations with f_{q1}=f_{q2}=0.
                        if (rest / s1) % nf != 0 || (rest / s2) % nf != 0 {
                            continue;
                        }
                        for f1 in 0..nf {
                            for f2 in 0..nf {
                                pg[f1 * nf + f2] = x[base + rest + f1 * s1 + f2 * s2];
                            }
                        }
                        for fp in 0..dim_pair {
                            let mut acc = C64::new(0.0, 0.0);
                            for fq in 0..dim_pair {
                                acc += op.w[[fp, fq]] * pg[fq];
                            }
                            // Subtract the bare constant only implicitly: the
                            // full displaced operator replaces the diagonal
                            // V term entirely, so add as-is with a minus sign
                            // from the Hamiltonian convention.
                            let f1 = fp / nf;
                            let f2 = fp % nf;
                            y[base + rest + f1 * s1 + f2 * s2] -= acc;
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Noisy pulse simulation and error budgets.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoisySimResult {
    /// 1 - F_Bell of the noisy evolution.
    pub infidelity: f64,
    pub bell_fidelity: f64,
    /// Largest population observed in the top Fock mode of any block.
    pub max_top_mode_population: f64,
    /// Set when that population exceeds 1e-6.
    pub truncation_flag: bool,
}

/// Propagate the uniform superposition ⊗ motional ground state through the
/// noisy Hamiltonian and evaluate the Bell-state fidelity against the parity
/// target; decay norm loss counts as infidelity.
pub fn simulate_noisy(
    pulse: &PulseSchedule,
    geometry: &AtomGeometry,
    params: &PhysicalParams,
    config: &MotionalConfig,
) -> Result<NoisySimResult, MotionalError> {
    simulate_noisy_target(
        pulse,
        geometry,
        params,
        config,
        &build_parity_target(geometry.n_atoms(), std::f64::consts::FRAC_PI_4),
    )
}

/// As [`simulate_noisy`] with an explicit diagonal target.
pub fn simulate_noisy_target(
    pulse: &PulseSchedule,
    geometry: &AtomGeometry,
    params: &PhysicalParams,
    config: &MotionalConfig,
    target: &GateTarget,
) -> Result<NoisySimResult, MotionalError> {
    pulse.assert_consistent();
    let system = MotionalSystem::new(geometry, params, config)?;
    let n = system.n_atoms;

    let per_class: Result<Vec<(C64, f64, f64)>, MotionalError> = system
        .classes
        .par_iter()
        .enumerate()
        .map(|(ci, class)| {
            let dim = class.dim_int * class.dim_ph;
            let mut state = vec![C64::new(0.0, 0.0); dim];
            state[0] = C64::new(1.0, 0.0);
            let mut top = 0.0f64;
            if class.n_active > 0 {
                for j in 0..pulse.m_steps {
                    let applier = system.step_applier(
                        ci,
                        pulse.phi[j],
                        pulse.rabi[j],
                        pulse.detuning[j],
                        params,
                    );
                    let base = config.krylov.substeps_per_pulse_step.max(1);
                    let needed =
                        ((pulse.dt * class.radius_est) / 10.0).ceil().max(1.0) as usize;
                    let substeps = base.max(needed);
                    let h = pulse.dt / substeps as f64;
                    let back_phase = C64::from_polar(1.0, -applier.shift * h);
                    for _ in 0..substeps {
                        state = krylov_evolve_adaptive(&applier, &state, h, &config.krylov)?;
                        for s in state.iter_mut() {
                            *s *= back_phase;
                        }
                    }
                    top = top.max(MotionalSystem::top_mode_population(class, &state));
                }
            }
            let mu = mask_to_basis_index(class.rep_mask, n);
            let g = target.phases[mu].conj();
            let contrib = g * state[0] * (class.members.len() as f64);
            Ok((contrib, top, 0.0))
        })
        .collect();

    let per_class = per_class?;
    let mut trace = C64::new(0.0, 0.0);
    let mut max_top = 0.0f64;
    for (contrib, top, _) in per_class {
        trace += contrib;
        max_top = max_top.max(top);
    }
    let f = trace.norm_sqr() / 4f64.powi(n as i32);
    Ok(NoisySimResult {
        infidelity: 1.0 - f,
        bell_fidelity: f,
        max_top_mode_population: max_top,
        truncation_flag: max_top > 1e-6,
    })
}

/// Options shared by the error-budget style runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetOptions {
    pub n_fock: usize,
    pub taylor_order: usize,
    pub krylov: KrylovConfig,
}

impl Default for BudgetOptions {
    fn default() -> Self {
        BudgetOptions {
            n_fock: 12,
            taylor_order: 10,
            krylov: KrylovConfig::default(),
        }
    }
}

/// Per-mechanism infidelities (components floored at zero after subtracting
/// the noiseless infidelity) and normalized time budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub eps_bell: f64,
    pub eps_decay: f64,
    pub eps_recoil: f64,
    pub eps_force: f64,
    pub eps_total: f64,
    /// |ε_total - Σ components|.
    pub additivity_residual: f64,
    /// Ω₀T/(2π).
    pub t_norm: f64,
    pub t_r_norm: f64,
    pub t_rr_norm: f64,
    pub truncation_flag: bool,
}

fn bell_infidelity_dense(
    pulse: &PulseSchedule,
    geometry: &AtomGeometry,
    params: &PhysicalParams,
    decay: Option<f64>,
) -> Result<(f64, f64, f64), MotionalError> {
    let blocks = enumerate_blocks(geometry, params)?;
    let props = propagate_blocks(pulse, &blocks, decay)?;
    let target = build_parity_target(geometry.n_atoms(), std::f64::consts::FRAC_PI_4);
    let rep = fidelity::report(&props, &target);
    Ok((1.0 - rep.bell_fidelity, rep.t_r, rep.t_rr))
}

/// Error budget of a pulse: decay via the dense non-Hermitian run, recoil
/// via the parallel-axis phonon run (no decay, no VdW displacement), force
/// via the perpendicular-axis run (no decay, no recoil phase), total via the
/// full run.
pub fn error_budget(
    pulse: &PulseSchedule,
    geometry: &AtomGeometry,
    params: &PhysicalParams,
    opts: &BudgetOptions,
) -> Result<ErrorBudget, MotionalError> {
    let (eps_bell, t_r, t_rr) = bell_infidelity_dense(pulse, geometry, params, None)?;
    let (eps_with_decay, _, _) =
        bell_infidelity_dense(pulse, geometry, params, Some(params.gamma_d))?;
    let eps_decay = (eps_with_decay - eps_bell).max(0.0);

    let mut recoil_cfg = MotionalConfig::recoil(opts.n_fock);
    recoil_cfg.krylov = opts.krylov.clone();
    let mut force_cfg = MotionalConfig::force(opts.n_fock, opts.taylor_order);
    force_cfg.krylov = opts.krylov.clone();
    let mut full_cfg = MotionalConfig::full(opts.n_fock, opts.taylor_order);
    full_cfg.krylov = opts.krylov.clone();

    let recoil = simulate_noisy(pulse, geometry, params, &recoil_cfg)?;
    let force = simulate_noisy(pulse, geometry, params, &force_cfg)?;
    let full = simulate_noisy(pulse, geometry, params, &full_cfg)?;

    let eps_recoil = (recoil.infidelity - eps_bell).max(0.0);
    let eps_force = (force.infidelity - eps_bell).max(0.0);
    let eps_total = full.infidelity;
    let additivity_residual =
        (eps_total - (eps_bell + eps_decay + eps_recoil + eps_force)).abs();

    Ok(ErrorBudget {
        eps_bell,
        eps_decay,
        eps_recoil,
        eps_force,
        eps_total,
        additivity_residual,
        t_norm: params.normalized_time(pulse.duration()),
        t_r_norm: params.normalized_time(t_r),
        t_rr_norm: params.normalized_time(t_rr),
        truncation_flag: recoil.truncation_flag || force.truncation_flag || full.truncation_flag,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecaySweepPoint {
    pub gamma_d: f64,
    /// Simulated decay infidelity (noiseless part subtracted).
    pub eps_decay: f64,
    /// Analytic approximation γ_d·T_R.
    pub gamma_t_r: f64,
}

/// Simulated decay infidelity across a rate grid against the analytic
/// linear model γ_d·T_R.
pub fn decay_sweep(
    pulse: &PulseSchedule,
    geometry: &AtomGeometry,
    params: &PhysicalParams,
    gamma_grid: &[f64],
) -> Result<Vec<DecaySweepPoint>, MotionalError> {
    let (eps_bell, t_r, _) = bell_infidelity_dense(pulse, geometry, params, None)?;
    gamma_grid
        .iter()
        .map(|&gamma| {
            let eps = if gamma == 0.0 {
                0.0
            } else {
                let (e, _, _) = bell_infidelity_dense(pulse, geometry, params, Some(gamma))?;
                (e - eps_bell).max(0.0)
            };
            Ok(DecaySweepPoint {
                gamma_d: gamma,
                eps_decay: eps,
                gamma_t_r: gamma * t_r,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoilFit {
    /// Dimensionless fit coefficient of ε = α (ħk²/2m) ω T_R² coth(ħβω/2).
    pub alpha: f64,
    pub omega_grid: Vec<f64>,
    pub eps_values: Vec<f64>,
    /// Coefficient of determination of the zero-temperature fit.
    pub r_squared: f64,
    /// Extrapolation of the fitted model to the requested temperature.
    pub finite_t_curve: Vec<(f64, f64)>,
}

/// Zero-temperature recoil infidelity over a trap-frequency grid with a
/// least-squares fit of the analytic model, plus a finite-temperature
/// extrapolation at inverse temperature `inv_beta` (1/K; `None` keeps the
/// zero-temperature curve).
pub fn recoil_fit(
    pulse: &PulseSchedule,
    geometry: &AtomGeometry,
    params: &PhysicalParams,
    omega_par_grid: &[f64],
    inv_beta: Option<f64>,
    opts: &BudgetOptions,
) -> Result<RecoilFit, MotionalError> {
    if omega_par_grid.is_empty() {
        return Err(MotionalError::EmptyGrid);
    }
    let (eps_bell, t_r, _) = bell_infidelity_dense(pulse, geometry, params, None)?;
    let recoil_freq = params.recoil_frequency();

    let eps_values: Result<Vec<f64>, MotionalError> = omega_par_grid
        .iter()
        .map(|&omega| {
            let mut p = params.clone();
            p.omega_par = omega;
            let mut cfg = MotionalConfig::recoil(opts.n_fock);
            cfg.krylov = opts.krylov.clone();
            let run = simulate_noisy(pulse, geometry, &p, &cfg)?;
            Ok((run.infidelity - eps_bell).max(0.0))
        })
        .collect();
    let eps_values = eps_values?;

    // Least squares through the origin: ε_i = α·m_i.
    let model: Vec<f64> = omega_par_grid
        .iter()
        .map(|&omega| recoil_freq * omega * t_r * t_r)
        .collect();
    let mm: f64 = model.iter().map(|m| m * m).sum();
    if mm == 0.0 {
        return Err(MotionalError::DegenerateFit {
            residual: eps_values.iter().map(|e| e * e).sum::<f64>().sqrt(),
        });
    }
    let me: f64 = model.iter().zip(&eps_values).map(|(m, e)| m * e).sum();
    let alpha = me / mm;

    let mean = eps_values.iter().sum::<f64>() / eps_values.len() as f64;
    let ss_tot: f64 = eps_values.iter().map(|e| (e - mean).powi(2)).sum();
    let ss_res: f64 = eps_values
        .iter()
        .zip(&model)
        .map(|(e, m)| (e - alpha * m).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    let thermal = |omega: f64| -> f64 {
        match inv_beta {
            None => 1.0,
            Some(beta) => {
                let x = HBAR * omega * beta / (2.0 * crate::model::KB);
                1.0 / x.tanh()
            }
        }
    };
    let finite_t_curve = omega_par_grid
        .iter()
        .zip(&model)
        .map(|(&omega, m)| (omega, alpha * m * thermal(omega)))
        .collect();

    Ok(RecoilFit {
        alpha,
        omega_grid: omega_par_grid.to_vec(),
        eps_values,
        r_squared,
        finite_t_curve,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForceSweep {
    pub omega_grid: Vec<f64>,
    pub eps_values: Vec<f64>,
    /// Attempted fit coefficient of ε = α'(1/2mħω)(C6 T_RR/R^7)².
    pub alpha_prime: f64,
    /// Residual of that fit; reported without asserting quality.
    pub r_squared: f64,
}

/// VdW-force infidelity over a perpendicular trap-frequency grid. The
/// analytic single-parameter fit is attempted and its residual reported; no
/// quality is asserted (the model is known to miss higher-order terms).
pub fn force_sweep(
    pulse: &PulseSchedule,
    geometry: &AtomGeometry,
    params: &PhysicalParams,
    omega_perp_grid: &[f64],
    opts: &BudgetOptions,
) -> Result<ForceSweep, MotionalError> {
    if omega_perp_grid.is_empty() {
        return Err(MotionalError::EmptyGrid);
    }
    let (eps_bell, _, t_rr) = bell_infidelity_dense(pulse, geometry, params, None)?;

    let eps_values: Result<Vec<f64>, MotionalError> = omega_perp_grid
        .iter()
        .map(|&omega| {
            let mut p = params.clone();
            p.omega_perp = omega;
            let mut cfg = MotionalConfig::force(opts.n_fock, opts.taylor_order);
            cfg.krylov = opts.krylov.clone();
            let run = simulate_noisy(pulse, geometry, &p, &cfg)?;
            Ok((run.infidelity - eps_bell).max(0.0))
        })
        .collect();
    let eps_values = eps_values?;

    // C6 in J·m^6 and R in meters for the dimensional prefactor.
    let c6_j_m6 = params.c6_over_h_ghz_um6 * 1.0e9 * (TAU * HBAR) * 1.0e-36;
    let r_m = geometry.r_min_um * 1.0e-6;
    let model: Vec<f64> = omega_perp_grid
        .iter()
        .map(|&omega| {
            let force_scale = c6_j_m6 * t_rr / r_m.powi(7);
            force_scale * force_scale / (2.0 * params.mass_kg * HBAR * omega)
        })
        .collect();
    let mm: f64 = model.iter().map(|m| m * m).sum();
    let alpha_prime = if mm > 0.0 {
        model.iter().zip(&eps_values).map(|(m, e)| m * e).sum::<f64>() / mm
    } else {
        0.0
    };
    let mean = eps_values.iter().sum::<f64>() / eps_values.len() as f64;
    let ss_tot: f64 = eps_values.iter().map(|e| (e - mean).powi(2)).sum();
    let ss_res: f64 = eps_values
        .iter()
        .zip(&model)
        .map(|(e, m)| (e - alpha_prime * m).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    Ok(ForceSweep {
        omega_grid: omega_perp_grid.to_vec(),
        eps_values,
        alpha_prime,
        r_squared,
    })
}
