//! Time evolution engines.
//!
//! Noise-free (and decay-only) dynamics run per block with dense matrix
//! exponentials: Hermitian steps by eigendecomposition, non-Hermitian steps
//! by Padé scaling-and-squaring. Large motional Hamiltonians are propagated
//! through the matrix-free Arnoldi/Krylov stepper at the bottom of this
//! module.

use crate::linalg::{expm, hermitian_eig};
use crate::model::{BlockSpec, Blocks, PulseSchedule};
use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of population samples per pulse piece.
pub const DEFAULT_SUBSTEPS: usize = 4;

#[derive(Debug, Error)]
pub enum PropagateError {
    #[error("non-finite control input at step {0}")]
    NonFinite(usize),
    #[error("krylov solver did not converge at subspace dimension {dim} (residual {residual:.3e})")]
    KrylovNonConverged { dim: usize, residual: f64 },
    #[error("krylov solver requires a nonzero state")]
    ZeroState,
}

/// Block Hamiltonian H/ħ in rad/s for one piecewise-constant segment.
///
/// Basis: bit q of the index is 1 when atom `block.active[q]` is in |r⟩;
/// index 0 is the computational corner (all active atoms in |1⟩). Contains
/// the drive (Ω/2)(e^{iφ}|r⟩⟨1| + h.c.) per active atom, the interaction
/// -V_jk n_j n_k, the detuning -Δ Σ n_j and optionally -iγ_d/2 Σ n_j.
pub fn block_hamiltonian(
    block: &BlockSpec,
    phi: f64,
    rabi: f64,
    detuning: f64,
    decay: Option<f64>,
) -> Array2<C64> {
    let k = block.active.len();
    let dim = block.dim;
    let mut h = Array2::zeros((dim, dim));
    let half_omega = 0.5 * rabi;
    let drive = C64::from_polar(half_omega, phi);
    for b in 0..dim {
        // Diagonal: interactions, detuning, decay.
        let mut diag = C64::new(0.0, 0.0);
        for p in 0..k {
            if b & (1 << p) == 0 {
                continue;
            }
            diag += C64::new(-detuning, 0.0);
            if let Some(g) = decay {
                diag += C64::new(0.0, -0.5 * g);
            }
            for q in (p + 1)..k {
                if b & (1 << q) != 0 {
                    diag -= C64::new(block.interactions[[p, q]], 0.0);
                }
            }
        }
        h[[b, b]] = diag;
        // Drive: |1⟩ -> |r⟩ on each active atom.
        for q in 0..k {
            if b & (1 << q) == 0 {
                let up = b | (1 << q);
                h[[up, b]] += drive;
                h[[b, up]] += drive.conj();
            }
        }
    }
    h
}

/// Derivative of the block Hamiltonian with respect to the laser phase.
pub fn block_hamiltonian_dphi(block: &BlockSpec, phi: f64, rabi: f64) -> Array2<C64> {
    let dim = block.dim;
    let k = block.active.len();
    let mut h = Array2::zeros((dim, dim));
    let d = C64::from_polar(0.5 * rabi, phi) * C64::new(0.0, 1.0);
    for b in 0..dim {
        for q in 0..k {
            if b & (1 << q) == 0 {
                let up = b | (1 << q);
                h[[up, b]] += d;
                h[[b, up]] += d.conj();
            }
        }
    }
    h
}

/// Derivative of the block Hamiltonian with respect to the Rabi frequency.
pub fn block_hamiltonian_drabi(block: &BlockSpec, phi: f64) -> Array2<C64> {
    let dim = block.dim;
    let k = block.active.len();
    let mut h = Array2::zeros((dim, dim));
    let d = C64::from_polar(0.5, phi);
    for b in 0..dim {
        for q in 0..k {
            if b & (1 << q) == 0 {
                let up = b | (1 << q);
                h[[up, b]] += d;
                h[[b, up]] += d.conj();
            }
        }
    }
    h
}

/// Single-step propagator exp(-i H dt) for one block.
///
/// Hermitian steps use eigendecomposition; with decay the matrix is
/// non-Hermitian and Padé scaling-and-squaring is used instead.
pub fn step_matrix(
    block: &BlockSpec,
    phi: f64,
    rabi: f64,
    detuning: f64,
    decay: Option<f64>,
    dt: f64,
) -> Result<Array2<C64>, PropagateError> {
    if !(phi.is_finite() && rabi.is_finite() && detuning.is_finite() && dt.is_finite()) {
        return Err(PropagateError::NonFinite(0));
    }
    let h = block_hamiltonian(block, phi, rabi, detuning, decay);
    Ok(match decay {
        None => {
            let (w, v) = hermitian_eig(&h);
            unitary_from_eig(&w, &v, dt)
        }
        Some(_) => expm(&h.mapv(|z| z * C64::new(0.0, -dt))),
    })
}

/// exp(-i diag(w) dt) conjugated back: v · e^{-i w dt} · v†.
pub fn unitary_from_eig(w: &Array1<f64>, v: &Array2<C64>, dt: f64) -> Array2<C64> {
    let n = w.len();
    let mut out = Array2::zeros((n, n));
    for col in 0..n {
        let ph = C64::from_polar(1.0, -w[col] * dt);
        for row in 0..n {
            out[[row, col]] = v[[row, col]] * ph;
        }
    }
    let vt = crate::linalg::adjoint(v);
    out.dot(&vt)
}

/// Propagation record of one symmetry class of blocks.
#[derive(Debug, Clone)]
pub struct BlockPropagation {
    /// Mask of the propagated representative.
    pub mask: usize,
    /// Masks of all blocks sharing this propagation.
    pub members: Vec<usize>,
    /// Slot permutation per member (see [`crate::model::BlockClass`]).
    pub member_perms: Vec<Vec<usize>>,
    pub active: Vec<usize>,
    pub dim: usize,
    /// Cumulative propagators at the M+1 step boundaries.
    pub unitaries: Vec<Array2<C64>>,
    /// ⟨Σ_i n_i⟩ along the corner-state trajectory, sampled every
    /// `sample_dt` (length M·substeps + 1). Not yet basis-averaged.
    pub pops_r: Vec<f64>,
    /// ⟨Σ_{i<j} n_i n_j⟩ along the same trajectory.
    pub pops_rr: Vec<f64>,
    pub sample_dt: f64,
}

impl BlockPropagation {
    pub fn multiplicity(&self) -> usize {
        self.members.len()
    }

    /// Final diagonal matrix element ⟨μ|U(T)|μ⟩ of the representative.
    pub fn final_corner(&self) -> C64 {
        self.unitaries.last().map(|u| u[[0, 0]]).unwrap_or(C64::new(1.0, 0.0))
    }
}

fn excitation_weights(dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut w_r = vec![0.0; dim];
    let mut w_rr = vec![0.0; dim];
    for (b, (wr, wrr)) in w_r.iter_mut().zip(w_rr.iter_mut()).enumerate() {
        let c = (b as u32).count_ones() as f64;
        *wr = c;
        *wrr = 0.5 * c * (c - 1.0);
    }
    (w_r, w_rr)
}

/// Propagate all symmetry classes of `blocks` through `pulse`, recording
/// cumulative propagators at step boundaries and population traces at
/// substep resolution. Classes are propagated in parallel; only one
/// representative per class is evolved and then replicated over members.
pub fn propagate_blocks(
    pulse: &PulseSchedule,
    blocks: &Blocks,
    decay: Option<f64>,
) -> Result<Vec<BlockPropagation>, PropagateError> {
    propagate_blocks_with(pulse, blocks, decay, DEFAULT_SUBSTEPS)
}

/// As [`propagate_blocks`] with an explicit population sampling density.
pub fn propagate_blocks_with(
    pulse: &PulseSchedule,
    blocks: &Blocks,
    decay: Option<f64>,
    substeps: usize,
) -> Result<Vec<BlockPropagation>, PropagateError> {
    pulse.assert_consistent();
    let substeps = substeps.max(1);
    for j in 0..pulse.m_steps {
        if !(pulse.phi[j].is_finite() && pulse.rabi[j].is_finite() && pulse.detuning[j].is_finite())
        {
            return Err(PropagateError::NonFinite(j));
        }
    }
    blocks
        .classes
        .par_iter()
        .map(|class| {
            let spec = &blocks.specs[class.representative];
            propagate_single_block(
                pulse,
                spec,
                class.members.clone(),
                class.member_perms.clone(),
                decay,
                substeps,
            )
        })
        .collect()
}

fn propagate_single_block(
    pulse: &PulseSchedule,
    spec: &BlockSpec,
    members: Vec<usize>,
    member_perms: Vec<Vec<usize>>,
    decay: Option<f64>,
    substeps: usize,
) -> Result<BlockPropagation, PropagateError> {
    let dim = spec.dim;
    let m = pulse.m_steps;
    let (w_r, w_rr) = excitation_weights(dim);
    let h_sub = if m == 0 { 0.0 } else { pulse.dt / substeps as f64 };

    let mut unitaries = Vec::with_capacity(m + 1);
    unitaries.push(Array2::<C64>::eye(dim));
    let mut pops_r = Vec::with_capacity(m * substeps + 1);
    let mut pops_rr = Vec::with_capacity(m * substeps + 1);

    let mut psi: Array1<C64> = Array1::zeros(dim);
    psi[0] = C64::new(1.0, 0.0);
    record_pops(&psi, &w_r, &w_rr, &mut pops_r, &mut pops_rr);

    for j in 0..m {
        let h = block_hamiltonian(spec, pulse.phi[j], pulse.rabi[j], pulse.detuning[j], decay);
        let (step, sub) = match decay {
            None => {
                let (w, v) = hermitian_eig(&h);
                (
                    unitary_from_eig(&w, &v, pulse.dt),
                    unitary_from_eig(&w, &v, h_sub),
                )
            }
            Some(_) => {
                let sub = expm(&h.mapv(|z| z * C64::new(0.0, -h_sub)));
                let step = expm(&h.mapv(|z| z * C64::new(0.0, -pulse.dt)));
                (step, sub)
            }
        };
        for _ in 0..substeps {
            psi = sub.dot(&psi);
            record_pops(&psi, &w_r, &w_rr, &mut pops_r, &mut pops_rr);
        }
        let u_next = step.dot(unitaries.last().unwrap());
        // Re-anchor the sampled trajectory to the cumulative propagator to
        // avoid drift between the two product orderings.
        for (b, p) in psi.iter_mut().enumerate() {
            *p = u_next[[b, 0]];
        }
        unitaries.push(u_next);
    }

    Ok(BlockPropagation {
        mask: spec.mask,
        members,
        member_perms,
        active: spec.active.clone(),
        dim,
        unitaries,
        pops_r,
        pops_rr,
        sample_dt: h_sub,
    })
}

fn record_pops(
    psi: &Array1<C64>,
    w_r: &[f64],
    w_rr: &[f64],
    pops_r: &mut Vec<f64>,
    pops_rr: &mut Vec<f64>,
) {
    let mut r = 0.0;
    let mut rr = 0.0;
    for (b, amp) in psi.iter().enumerate() {
        let p = amp.norm_sqr();
        r += p * w_r[b];
        rr += p * w_rr[b];
    }
    pops_r.push(r);
    pops_rr.push(rr);
}

// ---------------------------------------------------------------------------
// Full 3^N-space embedding.
// ---------------------------------------------------------------------------

/// Dimension of the full internal space (three levels per atom).
pub fn full_dim(n_atoms: usize) -> usize {
    3usize.pow(n_atoms as u32)
}

/// Trits of a full-space basis index; atom 0 is the most significant trit.
/// 0 = |0⟩, 1 = |1⟩, 2 = |r⟩.
pub fn full_index_trits(index: usize, n_atoms: usize) -> Vec<u8> {
    let mut trits = vec![0u8; n_atoms];
    let mut rest = index;
    for i in (0..n_atoms).rev() {
        trits[i] = (rest % 3) as u8;
        rest /= 3;
    }
    trits
}

/// Map a full-space basis index to its (block mask, in-block index) pair.
pub fn full_index_to_block(index: usize, n_atoms: usize) -> (usize, usize) {
    let trits = full_index_trits(index, n_atoms);
    let mut mask = 0usize;
    for (i, &t) in trits.iter().enumerate() {
        if t >= 1 {
            mask |= 1 << i;
        }
    }
    let mut b = 0usize;
    let mut q = 0;
    for (_, &t) in trits.iter().enumerate().filter(|(_, &t)| t >= 1) {
        if t == 2 {
            b |= 1 << q;
        }
        q += 1;
    }
    (mask, b)
}

/// Assemble the block-diagonal full-space unitary from per-mask block
/// matrices (`get(mask)` must return a `dim(mask)`-sized matrix).
pub fn assemble_full_unitary<'a>(
    n_atoms: usize,
    get: impl Fn(usize) -> &'a Array2<C64>,
) -> Array2<C64> {
    let dim = full_dim(n_atoms);
    let mut map = Vec::with_capacity(dim);
    for t in 0..dim {
        map.push(full_index_to_block(t, n_atoms));
    }
    let mut u = Array2::zeros((dim, dim));
    for col in 0..dim {
        let (mask_c, b_c) = map[col];
        let block = get(mask_c);
        for row in 0..dim {
            let (mask_r, b_r) = map[row];
            if mask_r == mask_c {
                u[[row, col]] = block[[b_r, b_c]];
            }
        }
    }
    u
}

/// Full-space unitary at step boundary `step` from class propagations; the
/// member-slot permutations translate each representative's matrix into its
/// members' bases.
pub fn full_unitary_at(props: &[BlockPropagation], n_atoms: usize, step: usize) -> Array2<C64> {
    let dim = full_dim(n_atoms);
    let mut by_mask: Vec<Option<(&Array2<C64>, &[usize])>> = vec![None; 1 << n_atoms];
    for prop in props {
        for (m, perm) in prop.members.iter().zip(&prop.member_perms) {
            by_mask[*m] = Some((&prop.unitaries[step], perm));
        }
    }
    let mut map = Vec::with_capacity(dim);
    for t in 0..dim {
        map.push(full_index_to_block(t, n_atoms));
    }
    let mut u = Array2::zeros((dim, dim));
    for col in 0..dim {
        let (mask_c, b_c) = map[col];
        let (block, perm) = by_mask[mask_c].expect("block cover");
        let bc_rep = crate::model::unpermute_bits(b_c, perm);
        for row in 0..dim {
            let (mask_r, b_r) = map[row];
            if mask_r == mask_c {
                let br_rep = crate::model::unpermute_bits(b_r, perm);
                u[[row, col]] = block[[br_rep, bc_rep]];
            }
        }
    }
    u
}

// ---------------------------------------------------------------------------
// Krylov propagation for matrix-free (motional) Hamiltonians.
// ---------------------------------------------------------------------------

/// Matrix-free operator action y = H x (H in rad/s, possibly non-Hermitian).
/// Implementations must be re-entrant; propagation runs are parallelized.
pub trait OperatorAction: Sync {
    fn apply(&self, x: &[C64], y: &mut [C64]);
}

impl<F: Fn(&[C64], &mut [C64]) + Sync> OperatorAction for F {
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self(x, y)
    }
}

/// Arnoldi/Krylov stepper configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KrylovConfig {
    /// Hard cap on the Krylov subspace dimension.
    pub max_subspace_dim: usize,
    /// Number of Krylov applications per pulse piece.
    pub substeps_per_pulse_step: usize,
    /// Residual bound for adaptive subspace growth.
    pub tolerance: f64,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig {
            max_subspace_dim: 30,
            substeps_per_pulse_step: 4,
            tolerance: 1e-10,
        }
    }
}

/// Arnoldi approximation of exp(-i H dt)·state.
///
/// Grows the subspace until the generalized residual falls below
/// `config.tolerance`; an exact invariant subspace (happy breakdown)
/// terminates early. Non-Hermitian H is supported; with decay terms the
/// returned norm may shrink.
pub fn krylov_evolve(
    hamiltonian: &dyn OperatorAction,
    state: &[C64],
    dt: f64,
    config: &KrylovConfig,
) -> Result<Vec<C64>, PropagateError> {
    assert!(dt > 0.0, "krylov_evolve requires dt > 0");
    let n = state.len();
    let beta = norm(state);
    if beta == 0.0 {
        return Err(PropagateError::ZeroState);
    }
    let m_max = config.max_subspace_dim.max(2).min(n);

    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m_max + 1);
    basis.push(state.iter().map(|z| z / beta).collect());
    // Projected Hamiltonian (row-major, (m_max+1) x m_max).
    let mut hm = vec![C64::new(0.0, 0.0); (m_max + 1) * m_max];
    let mut w = vec![C64::new(0.0, 0.0); n];

    let mut m = 0usize;
    let mut breakdown = false;
    let mut residual = f64::INFINITY;
    while m < m_max {
        hamiltonian.apply(&basis[m], &mut w);
        // Modified Gram-Schmidt with one reorthogonalization pass.
        for _pass in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let c = dotc(v, &w);
                hm[i * m_max + m] += c;
                axpy(&mut w, v, -c);
            }
        }
        let h_next = norm(&w);
        m += 1;
        let scale = dt * h_next;
        if h_next <= 1e-14 || scale < 1e-16 {
            breakdown = true;
            break;
        }
        hm[m * m_max + (m - 1)] = C64::new(h_next, 0.0);
        basis.push(w.iter().map(|z| z / h_next).collect());

        if m >= 2 || m == m_max {
            let f = small_exp(&hm, m, m_max, dt);
            residual = beta * scale * f[m - 1].norm();
            if residual <= config.tolerance {
                let out = combine(&basis, &f, beta, n, m);
                return Ok(out);
            }
        }
    }
    let f = small_exp(&hm, m, m_max, dt);
    if breakdown {
        return Ok(combine(&basis, &f, beta, n, m));
    }
    if residual <= config.tolerance {
        return Ok(combine(&basis, &f, beta, n, m));
    }
    Err(PropagateError::KrylovNonConverged { dim: m, residual })
}

/// [`krylov_evolve`] with automatic halving of the time step on
/// non-convergence. Used by the motional simulator, where a pessimistic
/// substep count would be wasteful.
pub fn krylov_evolve_adaptive(
    hamiltonian: &dyn OperatorAction,
    state: &[C64],
    dt: f64,
    config: &KrylovConfig,
) -> Result<Vec<C64>, PropagateError> {
    match krylov_evolve(hamiltonian, state, dt, config) {
        Ok(out) => Ok(out),
        Err(PropagateError::KrylovNonConverged { .. }) if dt > 1e-18 => {
            let half = 0.5 * dt;
            let mid = krylov_evolve_adaptive(hamiltonian, state, half, config)?;
            krylov_evolve_adaptive(hamiltonian, &mid, half, config)
        }
        Err(e) => Err(e),
    }
}

fn small_exp(hm: &[C64], m: usize, stride: usize, dt: f64) -> Vec<C64> {
    // exp(-i dt H_m) e_1, first column of the projected exponential.
    let mut a = Array2::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            a[[i, j]] = hm[i * stride + j] * C64::new(0.0, -dt);
        }
    }
    let e = expm(&a);
    (0..m).map(|i| e[[i, 0]]).collect()
}

fn combine(basis: &[Vec<C64>], f: &[C64], beta: f64, n: usize, m: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (i, &fi) in f.iter().enumerate().take(m) {
        let c = fi * beta;
        for (o, &b) in out.iter_mut().zip(basis[i].iter()) {
            *o += c * b;
        }
    }
    out
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

fn axpy(y: &mut [C64], x: &[C64], a: C64) {
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += a * xi;
    }
}
