//! Fidelity metrics and Rydberg-time functionals from block propagations.
//!
//! The parity target is diagonal, so both fidelities depend only on the
//! diagonal matrix elements ⟨μ|U(T)|μ⟩ of the block propagators — one entry
//! per block, the computational corner. This is exact, not an approximation:
//! off-diagonal elements enter only through normalization.

use crate::model::{mask_to_basis_index, GateTarget};
use crate::propagate::BlockPropagation;
use num_complex::Complex64 as C64;

/// Summary of gate quality for one propagated pulse.
#[derive(Debug, Clone)]
pub struct FidelityReport {
    pub bell_fidelity: f64,
    pub avg_fidelity: f64,
    /// Time-integrated, basis-averaged population of Rydberg states (s).
    pub t_r: f64,
    /// Same for simultaneous double excitations (s).
    pub t_rr: f64,
    /// Σ_μ e^{-iθ_μ} ⟨μ|U(T)|μ⟩.
    pub trace_term: C64,
}

fn coverage(props: &[BlockPropagation]) -> usize {
    props.iter().map(|p| p.multiplicity()).sum()
}

/// Σ_μ conj(target_μ)·⟨μ|U(T)|μ⟩ over all 2^N blocks.
pub fn bell_trace(props: &[BlockPropagation], target: &GateTarget) -> C64 {
    let n = target.n_qubits;
    debug_assert_eq!(coverage(props), 1 << n, "propagations must cover all blocks");
    let mut trace = C64::new(0.0, 0.0);
    for prop in props {
        let mu = mask_to_basis_index(prop.mask, n);
        let g = target.phases[mu].conj();
        trace += g * prop.final_corner() * (prop.multiplicity() as f64);
    }
    trace
}

/// Bell-state fidelity |Σ_μ e^{-iθ_μ}⟨μ|U|μ⟩|² / 4^N.
pub fn bell_fidelity(props: &[BlockPropagation], target: &GateTarget) -> f64 {
    let n = target.n_qubits;
    let trace = bell_trace(props, target);
    trace.norm_sqr() / (4f64.powi(n as i32))
}

/// Average gate fidelity for phase gates,
/// (|Σ_μ D_μ|² + Σ_μ |D_μ|²) / (2^N (2^N + 1)) with D_μ = e^{-iθ_μ}⟨μ|U|μ⟩.
/// Leakage out of the computational subspace is penalized through the
/// projected diagonal.
pub fn avg_fidelity(props: &[BlockPropagation], target: &GateTarget) -> f64 {
    let n = target.n_qubits;
    let d = (1usize << n) as f64;
    let trace = bell_trace(props, target);
    let mut sum_sq = 0.0;
    for prop in props {
        sum_sq += prop.final_corner().norm_sqr() * (prop.multiplicity() as f64);
    }
    (trace.norm_sqr() + sum_sq) / (d * (d + 1.0))
}

/// Time-integrated Rydberg populations (T_R, T_RR) in seconds, by
/// trapezoidal quadrature over the recorded substep samples.
pub fn rydberg_times(props: &[BlockPropagation]) -> (f64, f64) {
    let n_states = coverage(props) as f64;
    let mut t_r = 0.0;
    let mut t_rr = 0.0;
    for prop in props {
        let w = prop.multiplicity() as f64;
        t_r += w * trapezoid(&prop.pops_r, prop.sample_dt);
        t_rr += w * trapezoid(&prop.pops_rr, prop.sample_dt);
    }
    (t_r / n_states, t_rr / n_states)
}

fn trapezoid(samples: &[f64], h: f64) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let inner: f64 = samples[1..samples.len() - 1].iter().sum();
    h * (0.5 * (samples[0] + samples[samples.len() - 1]) + inner)
}

/// Full report for one propagated pulse.
pub fn report(props: &[BlockPropagation], target: &GateTarget) -> FidelityReport {
    let (t_r, t_rr) = rydberg_times(props);
    FidelityReport {
        bell_fidelity: bell_fidelity(props, target),
        avg_fidelity: avg_fidelity(props, target),
        t_r,
        t_rr,
        trace_term: bell_trace(props, target),
    }
}
