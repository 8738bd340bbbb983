//! Independent reference implementations for the test suites.
//!
//! Everything here deliberately avoids the production code paths: the full
//! 3^N-space propagator is built directly from the Hamiltonian definition
//! with a Padé exponential (no block decomposition, no eigendecomposition),
//! the average-fidelity oracle evaluates the general Haar-integral formula,
//! and the Lindblad oracle evolves the full density matrix.

use crate::model::{AtomGeometry, GateTarget, PhysicalParams, PulseSchedule};
use crate::propagate::{full_dim, full_index_trits};
use ndarray::Array2;
use num_complex::Complex64 as C64;

/// Full-space Hamiltonian H/ħ (rad/s) on the 3^N basis, straight from its
/// definition: drive on every |1⟩↔|r⟩ pair, VdW shifts on doubly excited
/// pairs, detuning and optional non-Hermitian decay on Rydberg populations.
pub fn full_space_hamiltonian(
    geometry: &AtomGeometry,
    params: &PhysicalParams,
    phi: f64,
    rabi: f64,
    detuning: f64,
    decay: Option<f64>,
) -> Array2<C64> {
    let n = geometry.n_atoms();
    let dim = full_dim(n);
    let v = crate::model::pairwise_interaction(geometry, params).expect("valid geometry");
    let mut h = Array2::zeros((dim, dim));
    let drive = C64::from_polar(0.5 * rabi, phi);
    for col in 0..dim {
        let trits = full_index_trits(col, n);
        let mut diag = C64::new(0.0, 0.0);
        for i in 0..n {
            if trits[i] == 2 {
                diag += C64::new(-detuning, 0.0);
                if let Some(g) = decay {
                    diag += C64::new(0.0, -0.5 * g);
                }
                for j in (i + 1)..n {
                    if trits[j] == 2 {
                        diag -= C64::new(v[[i, j]], 0.0);
                    }
                }
            }
        }
        h[[col, col]] += diag;
        for i in 0..n {
            if trits[i] == 1 {
                // |1⟩ -> |r⟩ on atom i.
                let row = col + 3usize.pow((n - 1 - i) as u32);
                h[[row, col]] += drive;
                h[[col, row]] += drive.conj();
            }
        }
    }
    h
}

/// Final propagator of a piecewise-constant pulse on the full 3^N space,
/// one Padé exponential per piece.
pub fn full_space_propagate(
    pulse: &PulseSchedule,
    geometry: &AtomGeometry,
    params: &PhysicalParams,
    decay: Option<f64>,
) -> Array2<C64> {
    let dim = full_dim(geometry.n_atoms());
    let mut u = Array2::eye(dim);
    for j in 0..pulse.m_steps {
        let h = full_space_hamiltonian(
            geometry,
            params,
            pulse.phi[j],
            pulse.rabi[j],
            pulse.detuning[j],
            decay,
        );
        let step = crate::linalg::expm(&h.mapv(|z| z * C64::new(0.0, -pulse.dt)));
        u = step.dot(&u);
    }
    u
}

/// Bell-state fidelity |Tr[U_target† P U P]|²/d² evaluated on a full-space
/// propagator.
pub fn full_space_bell_fidelity(u: &Array2<C64>, target: &GateTarget) -> f64 {
    let n = target.n_qubits;
    let d = (1usize << n) as f64;
    let mut trace = C64::new(0.0, 0.0);
    for mu in 0..(1usize << n) {
        let t = computational_to_full_index(mu, n);
        trace += target.phases[mu].conj() * u[[t, t]];
    }
    (trace.norm_sqr()) / (d * d)
}

/// Average gate fidelity from the general Haar-integral formula
/// (|Tr O|² + Tr O O†)/(d(d+1)) with O = U_target† P U P on the full space.
pub fn haar_avg_fidelity(u: &Array2<C64>, target: &GateTarget) -> f64 {
    let n = target.n_qubits;
    let dcomp = 1usize << n;
    let d = dcomp as f64;
    let mut trace = C64::new(0.0, 0.0);
    let mut hs = 0.0;
    for mu in 0..dcomp {
        let tm = computational_to_full_index(mu, n);
        trace += target.phases[mu].conj() * u[[tm, tm]];
        for nu in 0..dcomp {
            let tn = computational_to_full_index(nu, n);
            hs += u[[tm, tn]].norm_sqr();
        }
    }
    (trace.norm_sqr() + hs) / (d * (d + 1.0))
}

/// Full-space index of the computational basis state with bits `mu`
/// (atom 0 = most significant bit; bit 1 means |1⟩).
pub fn computational_to_full_index(mu: usize, n: usize) -> usize {
    let mut idx = 0usize;
    for i in 0..n {
        let bit = (mu >> (n - 1 - i)) & 1;
        idx = idx * 3 + bit;
    }
    idx
}

// ---------------------------------------------------------------------------
// Lindblad master-equation oracle.
// ---------------------------------------------------------------------------

/// Kronecker product.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ra, ca) = (a.nrows(), a.ncols());
    let (rb, cb) = (b.nrows(), b.ncols());
    let mut out = Array2::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            for k in 0..rb {
                for l in 0..cb {
                    out[[i * rb + k, j * cb + l]] = a[[i, j]] * b[[k, l]];
                }
            }
        }
    }
    out
}

/// Lindblad superoperator on row-major vec(ρ) (index i·dim + j for ⟨i|ρ|j⟩):
/// -i(H⊗I - I⊗Hᵀ) + Σ_k γ_k (L⊗L̄ - ½ L†L⊗I - ½ I⊗(L†L)ᵀ).
pub fn lindblad_superoperator(
    hamiltonian: &Array2<C64>,
    jumps: &[(Array2<C64>, f64)],
) -> Array2<C64> {
    let dim = hamiltonian.nrows();
    let eye: Array2<C64> = Array2::eye(dim);
    let minus_i = C64::new(0.0, -1.0);
    let mut sup = kron(hamiltonian, &eye) * minus_i;
    sup = sup + kron(&eye, &hamiltonian.t().to_owned()) * C64::new(0.0, 1.0);
    for (l, gamma) in jumps {
        let g = C64::new(*gamma, 0.0);
        let lbar = l.mapv(|z| z.conj());
        let ldl = crate::linalg::adjoint(l).dot(l);
        sup = sup + kron(l, &lbar) * g;
        sup = sup - kron(&ldl, &eye) * (g * 0.5);
        sup = sup - kron(&eye, &ldl.t().to_owned()) * (g * 0.5);
    }
    sup
}

/// Evolve the full process map of a piecewise-constant single-atom pulse
/// under the master equation: returns the superoperator S with
/// vec(ρ_f) = S vec(ρ_i) on the 3-level space.
pub fn lindblad_process_map(
    pulse: &PulseSchedule,
    jump: &Array2<C64>,
    gamma: f64,
) -> Array2<C64> {
    let dim = 3usize;
    let mut s: Array2<C64> = Array2::eye(dim * dim);
    for j in 0..pulse.m_steps {
        let mut h = Array2::zeros((dim, dim));
        let drive = C64::from_polar(0.5 * pulse.rabi[j], pulse.phi[j]);
        // Single atom: |0⟩,|1⟩,|r⟩ at indices 0,1,2.
        h[[2, 1]] = drive;
        h[[1, 2]] = drive.conj();
        h[[2, 2]] = C64::new(-pulse.detuning[j], 0.0);
        let sup = lindblad_superoperator(&h, &[(jump.clone(), gamma)]);
        let step = crate::linalg::expm(&sup.mapv(|z| z * C64::new(pulse.dt, 0.0)));
        s = step.dot(&s);
    }
    s
}

/// Pauli-twirled error-channel diagonals of a single driven atom:
/// χ_mm = ⟨v_m|J|v_m⟩/d² for m ∈ {I, X, Y, Z} on the computational
/// subspace, with the error channel taken in the errors-before-the-gate
/// frame Λ = U_ideal† ∘ S.
pub fn lindblad_pauli_twirl_diagonals(
    pulse: &PulseSchedule,
    jump: &Array2<C64>,
    gamma: f64,
) -> [f64; 4] {
    let dim = 3usize;
    let s = lindblad_process_map(pulse, jump, gamma);

    // Ideal (noise-free) unitary of the same pulse on the 3-level space.
    let mut u: Array2<C64> = Array2::eye(dim);
    for j in 0..pulse.m_steps {
        let mut h: Array2<C64> = Array2::zeros((dim, dim));
        let drive = C64::from_polar(0.5 * pulse.rabi[j], pulse.phi[j]);
        h[[2, 1]] = drive;
        h[[1, 2]] = drive.conj();
        h[[2, 2]] = C64::new(-pulse.detuning[j], 0.0);
        let step = crate::linalg::expm(&h.mapv(|z| z * C64::new(0.0, -pulse.dt)));
        u = step.dot(&u);
    }

    // Λ(ρ) = U† S(ρ) U, assembled column by column on basis matrices.
    let mut lambda: Vec<Array2<C64>> = Vec::with_capacity(dim * dim);
    for k in 0..dim {
        for l in 0..dim {
            let mut rho = Array2::zeros((dim, dim));
            rho[[k, l]] = C64::new(1.0, 0.0);
            let mut out = Array2::zeros((dim, dim));
            let vin: Vec<C64> = (0..dim * dim).map(|i| rho[[i / dim, i % dim]]).collect();
            for (idx, val) in out.indexed_iter_mut() {
                let row = idx.0 * dim + idx.1;
                let mut acc = C64::new(0.0, 0.0);
                for (cidx, vi) in vin.iter().enumerate() {
                    acc += s[[row, cidx]] * vi;
                }
                *val = acc;
            }
            let rotated = crate::linalg::adjoint(&u).dot(&out).dot(&u);
            lambda.push(rotated);
        }
    }

    // Choi matrix J[(k,i),(l,j)] = Λ(|k⟩⟨l|)[i,j].
    let mut choi: Array2<C64> = Array2::zeros((dim * dim, dim * dim));
    for k in 0..dim {
        for l in 0..dim {
            let block = &lambda[k * dim + l];
            for i in 0..dim {
                for j in 0..dim {
                    choi[[k * dim + i, l * dim + j]] = block[[i, j]];
                }
            }
        }
    }

    // Computational Paulis embedded in the 3-level space (zero on |r⟩).
    let paulis = single_qubit_paulis_embedded();
    let mut out = [0.0; 4];
    for (m, e) in paulis.iter().enumerate() {
        // v_m[i·dim + j] = E_m[j, i]
        let mut v = vec![C64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                v[i * dim + j] = e[[j, i]];
            }
        }
        let mut acc = C64::new(0.0, 0.0);
        for (r, vr) in v.iter().enumerate() {
            for (c, vc) in v.iter().enumerate() {
                acc += vr.conj() * choi[[r, c]] * vc;
            }
        }
        out[m] = acc.re / 4.0;
    }
    out
}

/// I, X, Y, Z on the {|0⟩,|1⟩} subspace of a 3-level atom.
pub fn single_qubit_paulis_embedded() -> [Array2<C64>; 4] {
    let mut i3: Array2<C64> = Array2::zeros((3, 3));
    i3[[0, 0]] = C64::new(1.0, 0.0);
    i3[[1, 1]] = C64::new(1.0, 0.0);
    let mut x: Array2<C64> = Array2::zeros((3, 3));
    x[[0, 1]] = C64::new(1.0, 0.0);
    x[[1, 0]] = C64::new(1.0, 0.0);
    let mut y: Array2<C64> = Array2::zeros((3, 3));
    y[[0, 1]] = C64::new(0.0, -1.0);
    y[[1, 0]] = C64::new(0.0, 1.0);
    let mut z: Array2<C64> = Array2::zeros((3, 3));
    z[[0, 0]] = C64::new(1.0, 0.0);
    z[[1, 1]] = C64::new(-1.0, 0.0);
    [i3, x, y, z]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_parity_target;
    use approx::assert_relative_eq;

    #[test]
    fn full_space_identity_fidelities() {
        let target = build_parity_target(2, 0.0);
        let u: Array2<C64> = Array2::eye(9);
        assert_relative_eq!(full_space_bell_fidelity(&u, &target), 1.0, epsilon = 1e-14);
        assert_relative_eq!(haar_avg_fidelity(&u, &target), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn haar_oracle_on_random_diagonal_unitary() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let n = 2;
        let target = build_parity_target(n, std::f64::consts::FRAC_PI_4);
        let mut u: Array2<C64> = Array2::eye(9);
        let mut trace = C64::new(0.0, 0.0);
        let mut sumsq = 0.0;
        for mu in 0..4usize {
            let ph = C64::from_polar(1.0, rng.gen_range(-3.0..3.0));
            let t = computational_to_full_index(mu, n);
            u[[t, t]] = ph;
            trace += target.phases[mu].conj() * ph;
            sumsq += 1.0;
        }
        let d = 4.0;
        let want = (trace.norm_sqr() + sumsq) / (d * (d + 1.0));
        assert_relative_eq!(haar_avg_fidelity(&u, &target), want, epsilon = 1e-13);
    }

    #[test]
    fn lindblad_preserves_trace_and_decays_coherence() {
        let params = crate::model::PhysicalParams::default();
        let pulse = crate::model::PulseSchedule::with_phases(
            vec![0.0; 10],
            params.omega_max,
            2e-9,
        );
        let mut jump: Array2<C64> = Array2::zeros((3, 3));
        jump[[1, 1]] = C64::new(1.0, 0.0);
        jump[[2, 2]] = C64::new(-1.0, 0.0);
        let gamma = 1e4;
        let s = lindblad_process_map(&pulse, &jump, gamma);
        // Trace preservation: for every basis matrix, Tr Λ(E_kl) = δ_kl.
        for k in 0..3 {
            for l in 0..3 {
                let col = k * 3 + l;
                let mut tr = C64::new(0.0, 0.0);
                for i in 0..3 {
                    tr += s[[i * 3 + i, col]];
                }
                let want = if k == l { 1.0 } else { 0.0 };
                assert!((tr - C64::new(want, 0.0)).norm() < 1e-9, "({k},{l})");
            }
        }
    }
}
