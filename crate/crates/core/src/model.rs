//! Atom geometries, physical parameters, pulse schedules, gate targets and
//! the block decomposition of the Rydberg Hamiltonian.
//!
//! The global drive couples only |1⟩↔|r⟩, so the N-atom Hamiltonian splits
//! into 2^N independent blocks indexed by which atoms start in |1⟩. Blocks
//! whose active atoms form congruent point sets generate identical dynamics;
//! they are grouped into symmetry classes so that only one representative per
//! class needs to be propagated.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054571817e-34;
/// Boltzmann constant (J/K).
pub const KB: f64 = 1.380649e-23;
/// Atomic mass unit (kg).
pub const ATOMIC_MASS_KG: f64 = 1.66053906660e-27;
/// Sr-88 atomic mass (u); standard tabulated value, overridable in config.
pub const SR88_MASS_U: f64 = 87.9056;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown geometry name `{0}`")]
    UnknownGeometry(String),
    #[error("r_min must be positive, got {0}")]
    NonPositiveRMin(f64),
    #[error("atoms {0} and {1} are coincident")]
    CoincidentAtoms(usize, usize),
    #[error("geometry needs at least 2 atoms, got {0}")]
    TooFewAtoms(usize),
}

/// Named atom arrangements studied by this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryKind {
    LinearPair,
    EquilateralTriangle,
    RightTriangle,
    Tetrahedron,
    Square,
    /// User-supplied coordinates; accepted but outside the tested set.
    Custom,
}

impl GeometryKind {
    pub fn parse(name: &str) -> Result<Self, ModelError> {
        match name {
            "linear-pair" => Ok(Self::LinearPair),
            "equilateral-triangle" => Ok(Self::EquilateralTriangle),
            "right-triangle" => Ok(Self::RightTriangle),
            "tetrahedron" => Ok(Self::Tetrahedron),
            "square" => Ok(Self::Square),
            other => Err(ModelError::UnknownGeometry(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::LinearPair => "linear-pair",
            Self::EquilateralTriangle => "equilateral-triangle",
            Self::RightTriangle => "right-triangle",
            Self::Tetrahedron => "tetrahedron",
            Self::Square => "square",
            Self::Custom => "custom",
        }
    }
}

/// Atom positions (μm) with a fixed, documented orientation: first atom at
/// the origin, second along +x, planar shapes in the z = 0 plane.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtomGeometry {
    pub kind: GeometryKind,
    /// Positions in μm.
    pub positions: Vec<[f64; 3]>,
    /// Minimal pairwise distance (μm).
    pub r_min_um: f64,
}

/// Canonical coordinates for a named arrangement with minimal spacing `r_min_um`.
pub fn build_geometry(kind: GeometryKind, r_min_um: f64) -> Result<AtomGeometry, ModelError> {
    if r_min_um <= 0.0 {
        return Err(ModelError::NonPositiveRMin(r_min_um));
    }
    let r = r_min_um;
    let positions: Vec<[f64; 3]> = match kind {
        GeometryKind::LinearPair => vec![[0.0, 0.0, 0.0], [r, 0.0, 0.0]],
        GeometryKind::EquilateralTriangle => vec![
            [0.0, 0.0, 0.0],
            [r, 0.0, 0.0],
            [0.5 * r, 0.5 * r * 3f64.sqrt(), 0.0],
        ],
        // Isosceles right triangle: legs r along the axes meeting at atom 1.
        GeometryKind::RightTriangle => {
            vec![[0.0, 0.0, 0.0], [r, 0.0, 0.0], [r, r, 0.0]]
        }
        GeometryKind::Tetrahedron => vec![
            [0.0, 0.0, 0.0],
            [r, 0.0, 0.0],
            [0.5 * r, 0.5 * r * 3f64.sqrt(), 0.0],
            [0.5 * r, r * 3f64.sqrt() / 6.0, r * (2f64 / 3.0).sqrt()],
        ],
        GeometryKind::Square => vec![
            [0.0, 0.0, 0.0],
            [r, 0.0, 0.0],
            [r, r, 0.0],
            [0.0, r, 0.0],
        ],
        GeometryKind::Custom => return Err(ModelError::UnknownGeometry("custom".into())),
    };
    Ok(AtomGeometry {
        kind,
        positions,
        r_min_um,
    })
}

impl AtomGeometry {
    /// Geometry from explicit coordinates (μm); `r_min_um` is derived.
    /// A single atom is accepted (no pair interactions).
    pub fn custom(positions: Vec<[f64; 3]>) -> Result<Self, ModelError> {
        if positions.is_empty() {
            return Err(ModelError::TooFewAtoms(0));
        }
        if positions.len() == 1 {
            return Ok(AtomGeometry {
                kind: GeometryKind::Custom,
                positions,
                r_min_um: 1.0,
            });
        }
        let mut r_min = f64::INFINITY;
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                let d = dist(&positions[i], &positions[j]);
                if d == 0.0 {
                    return Err(ModelError::CoincidentAtoms(i, j));
                }
                r_min = r_min.min(d);
            }
        }
        Ok(AtomGeometry {
            kind: GeometryKind::Custom,
            positions,
            r_min_um: r_min,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.positions.len()
    }

    /// Pairwise distance in μm.
    pub fn distance_um(&self, i: usize, j: usize) -> f64 {
        dist(&self.positions[i], &self.positions[j])
    }

    /// Unit vector from atom `j` to atom `i` (r_i - r_j normalized).
    pub fn direction(&self, i: usize, j: usize) -> [f64; 3] {
        let a = self.positions[i];
        let b = self.positions[j];
        let d = self.distance_um(i, j);
        [(a[0] - b[0]) / d, (a[1] - b[1]) / d, (a[2] - b[2]) / d]
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Physical constants of the driven Rydberg system. Angular frequencies are
/// in rad/s, rates in 1/s, lengths in SI units unless noted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Van der Waals coefficient divided by Planck's constant (GHz·μm^6),
    /// negative for the repulsive convention used throughout.
    pub c6_over_h_ghz_um6: f64,
    /// Peak Rabi angular frequency Ω₀ (rad/s).
    pub omega_max: f64,
    /// Rydberg decay rate γ_d (1/s).
    pub gamma_d: f64,
    /// Rydberg transition wavelength (m).
    pub lambda_laser_m: f64,
    /// Atomic mass (kg).
    pub mass_kg: f64,
    /// Trap angular frequency along the drive axis (rad/s).
    pub omega_par: f64,
    /// Trap angular frequency perpendicular to the drive axis (rad/s).
    pub omega_perp: f64,
    /// Inverse temperature (1/K); `None` means zero temperature.
    pub inv_temperature_beta: Option<f64>,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            c6_over_h_ghz_um6: -150.0,
            omega_max: TAU * 10.0e6,
            gamma_d: 1.0 / 80.0e-6,
            lambda_laser_m: 323.0e-9,
            mass_kg: SR88_MASS_U * ATOMIC_MASS_KG,
            omega_par: TAU * 100.0e3,
            omega_perp: TAU * 100.0e3,
            inv_temperature_beta: None,
        }
    }
}

impl PhysicalParams {
    /// Drive-photon wave number k = 2π/λ (1/m).
    pub fn wave_number(&self) -> f64 {
        TAU / self.lambda_laser_m
    }

    /// Recoil angular frequency ħk²/(2m) (rad/s).
    pub fn recoil_frequency(&self) -> f64 {
        let k = self.wave_number();
        HBAR * k * k / (2.0 * self.mass_kg)
    }

    /// coth(ħωβ/2) occupation factor; 1 at zero temperature.
    pub fn thermal_factor(&self, omega: f64) -> f64 {
        match self.inv_temperature_beta {
            None => 1.0,
            Some(beta_per_k) => {
                let x = HBAR * omega * beta_per_k / (2.0 * KB);
                1.0 / x.tanh()
            }
        }
    }

    /// Normalized time Ω₀·t/(2π) for a duration in seconds.
    pub fn normalized_time(&self, t_s: f64) -> f64 {
        self.omega_max * t_s / TAU
    }

    /// Duration in seconds for a normalized time Ω₀·T/(2π).
    pub fn duration_from_normalized(&self, t_norm: f64) -> f64 {
        t_norm * TAU / self.omega_max
    }
}

/// Soft validation ranges; violations are reported as warnings, not errors,
/// since sweeps deliberately explore beyond the default hardware window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationRanges {
    pub rabi_max_rad_s: f64,
    pub detuning_abs_max_rad_s: f64,
    pub r_min_um: f64,
}

impl Default for ValidationRanges {
    fn default() -> Self {
        ValidationRanges {
            rabi_max_rad_s: TAU * 10.0e6,
            detuning_abs_max_rad_s: TAU * 10.0e6,
            r_min_um: 1.5,
        }
    }
}

impl ValidationRanges {
    pub fn check_geometry(&self, geometry: &AtomGeometry) -> Vec<String> {
        let mut warnings = Vec::new();
        if geometry.r_min_um < self.r_min_um {
            warnings.push(format!(
                "minimal spacing {:.3} um below recommended {:.3} um",
                geometry.r_min_um, self.r_min_um
            ));
        }
        warnings
    }

    pub fn check_pulse(&self, pulse: &PulseSchedule) -> Vec<String> {
        let mut warnings = Vec::new();
        if let Some(max) = pulse.rabi.iter().cloned().fold(None, |m: Option<f64>, v| {
            Some(m.map_or(v, |m| m.max(v)))
        }) {
            if max > self.rabi_max_rad_s * (1.0 + 1e-12) {
                warnings.push(format!(
                    "peak Rabi frequency {:.4e} rad/s exceeds recommended {:.4e} rad/s",
                    max, self.rabi_max_rad_s
                ));
            }
        }
        if pulse
            .detuning
            .iter()
            .any(|d| d.abs() > self.detuning_abs_max_rad_s * (1.0 + 1e-12))
        {
            warnings.push("detuning outside the recommended window".to_string());
        }
        warnings
    }
}

/// Piecewise-constant controls over `m_steps` pieces of length `dt`.
///
/// Phases are plain reals on the unwrapped line (no modular reduction), so
/// the smoothness penalty of the optimizer cost is well defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub m_steps: usize,
    /// Step duration (s).
    pub dt: f64,
    /// Laser phase per piece (rad).
    pub phi: Vec<f64>,
    /// Rabi frequency per piece (rad/s), in [0, Ω₀].
    pub rabi: Vec<f64>,
    /// Laser detuning per piece (rad/s).
    pub detuning: Vec<f64>,
}

impl PulseSchedule {
    /// Constant-Ω pulse with the given phases.
    pub fn with_phases(phi: Vec<f64>, rabi0: f64, dt: f64) -> Self {
        let m = phi.len();
        PulseSchedule {
            m_steps: m,
            dt,
            phi,
            rabi: vec![rabi0; m],
            detuning: vec![0.0; m],
        }
    }

    pub fn duration(&self) -> f64 {
        self.m_steps as f64 * self.dt
    }

    pub fn assert_consistent(&self) {
        assert_eq!(self.phi.len(), self.m_steps);
        assert_eq!(self.rabi.len(), self.m_steps);
        assert_eq!(self.detuning.len(), self.m_steps);
        assert!(self.dt > 0.0 || self.m_steps == 0);
    }
}

/// Diagonal target gate: 2^N unit-modulus phases keyed by bitstring parity.
#[derive(Debug, Clone)]
pub struct GateTarget {
    pub n_qubits: usize,
    pub theta: f64,
    /// Diagonal entries, index = bitstring (atom 0 = most significant bit).
    pub phases: Vec<C64>,
}

/// Parity phase gate on `n` qubits: even-parity basis states acquire
/// exp(-iθ), odd-parity ones exp(+iθ).
///
/// The argument of the exponential follows the σ^z ⊗ … ⊗ σ^z generator with
/// |0⟩ the +1 eigenstate of σ^z; the opposite sign convention differs only by
/// a global phase, which no fidelity in this crate is sensitive to. Use
/// [`GateTarget::normalize_global`] when a fixed representative is wanted.
pub fn build_parity_target(n: usize, theta: f64) -> GateTarget {
    assert!(n >= 1, "parity target needs at least one qubit");
    let dim = 1usize << n;
    let phases = (0..dim)
        .map(|mu| {
            let parity = (mu as u32).count_ones() % 2;
            let sign = if parity == 0 { -1.0 } else { 1.0 };
            C64::from_polar(1.0, sign * theta)
        })
        .collect();
    GateTarget {
        n_qubits: n,
        theta,
        phases,
    }
}

impl GateTarget {
    /// Multiply all phases by a single global factor so the all-zeros entry
    /// equals 1. Global phase never affects any fidelity in this crate.
    pub fn normalize_global(mut self) -> Self {
        let g = self.phases[0].conj();
        for p in &mut self.phases {
            *p *= g;
        }
        self
    }
}

/// Interaction matrix V_jk = C6/(ħ R_jk^6) in rad/s (negative, repulsive
/// convention); symmetric with zero diagonal.
pub fn pairwise_interaction(
    geometry: &AtomGeometry,
    params: &PhysicalParams,
) -> Result<Array2<f64>, ModelError> {
    let n = geometry.n_atoms();
    let mut v = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let r = geometry.distance_um(i, j);
            if r == 0.0 {
                return Err(ModelError::CoincidentAtoms(i, j));
            }
            // GHz·μm^6 / μm^6 → GHz → rad/s
            let value = params.c6_over_h_ghz_um6 / r.powi(6) * 1.0e9 * TAU;
            v[[i, j]] = value;
            v[[j, i]] = value;
        }
    }
    Ok(v)
}

/// One subspace H_μ of the block-diagonal Hamiltonian.
#[derive(Debug, Clone)]
pub struct BlockSpec {
    /// Bitmask μ; atom i participates iff bit (n-1-i) ... see `active`.
    pub mask: usize,
    /// Indices of atoms in the {|1⟩,|r⟩} subspace, ascending.
    pub active: Vec<usize>,
    /// 2^(number of active atoms).
    pub dim: usize,
    /// Pairwise interactions over active atoms (rad/s), k×k.
    pub interactions: Array2<f64>,
    /// Canonical congruence key; equal keys ⇒ identical block dynamics.
    pub symmetry_key: Vec<i64>,
    /// The all-zero block evolves trivially.
    pub stationary: bool,
}

/// A group of blocks sharing identical dynamics.
///
/// A member's Hamiltonian equals the representative's after relabeling the
/// active-atom slots by the stored permutation: slot i of the representative
/// plays the role of slot `perm[i]` of the member. Scalar quantities read
/// off the permutation-symmetric corner state (diagonal matrix elements,
/// excitation counts) need no relabeling; full matrices do.
#[derive(Debug, Clone)]
pub struct BlockClass {
    pub key: Vec<i64>,
    /// Mask of the propagated representative.
    pub representative: usize,
    /// Masks of all members (including the representative).
    pub members: Vec<usize>,
    /// Slot permutation per member (identity for the representative).
    pub member_perms: Vec<Vec<usize>>,
}

/// Map a representative-basis index to the member basis: bit i goes to bit
/// `perm[i]`.
pub fn permute_bits(b: usize, perm: &[usize]) -> usize {
    let mut out = 0usize;
    for (i, &p) in perm.iter().enumerate() {
        if b & (1 << i) != 0 {
            out |= 1 << p;
        }
    }
    out
}

/// Inverse of [`permute_bits`]: member-basis index to representative basis.
pub fn unpermute_bits(b: usize, perm: &[usize]) -> usize {
    let mut out = 0usize;
    for (i, &p) in perm.iter().enumerate() {
        if b & (1 << p) != 0 {
            out |= 1 << i;
        }
    }
    out
}

/// The full block decomposition of an N-atom system.
#[derive(Debug, Clone)]
pub struct Blocks {
    pub n_atoms: usize,
    /// All 2^N blocks, indexed by mask.
    pub specs: Vec<BlockSpec>,
    /// Symmetry classes in first-seen (mask-ascending) order.
    pub classes: Vec<BlockClass>,
}

/// Mask convention: atom i is active in `mask` iff `mask & (1 << i) != 0`.
/// The basis-state index μ used by gate targets maps atom 0 to the most
/// significant bit; [`mask_to_basis_index`] converts between the two.
pub fn mask_to_basis_index(mask: usize, n: usize) -> usize {
    let mut mu = 0usize;
    for i in 0..n {
        if mask & (1 << i) != 0 {
            mu |= 1 << (n - 1 - i);
        }
    }
    mu
}

/// Canonical key over atom permutations for pair features (lexicographic
/// minimum of the flattened upper triangle). Sound for any feature set:
/// blocks merge only when an explicit relabeling matches all features.
pub(crate) fn canonical_pair_key<F>(k: usize, feature: F) -> Vec<i64>
where
    F: Fn(usize, usize) -> Vec<i64>,
{
    let mut best: Option<Vec<i64>> = None;
    let mut perm: Vec<usize> = (0..k).collect();
    permute(&mut perm, 0, &mut |p| {
        let mut key = Vec::with_capacity(k * k.saturating_sub(1));
        for i in 0..k {
            for j in (i + 1)..k {
                key.extend(feature(p[i], p[j]));
            }
        }
        match &best {
            Some(b) if *b <= key => {}
            _ => best = Some(key),
        }
    });
    let mut out = vec![k as i64];
    out.extend(best.unwrap_or_default());
    out
}

fn permute(items: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}

/// Enumerate all 2^N blocks, grouped into symmetry classes by the canonical
/// multiset of pairwise distances among active atoms (relative tolerance
/// 1e-9 against the minimal spacing).
pub fn enumerate_blocks(
    geometry: &AtomGeometry,
    params: &PhysicalParams,
) -> Result<Blocks, ModelError> {
    let n = geometry.n_atoms();
    let v_full = pairwise_interaction(geometry, params)?;
    let scale = geometry.r_min_um;

    let rounded = |i: usize, j: usize| (geometry.distance_um(i, j) / scale * 1.0e9).round() as i64;

    let mut specs: Vec<BlockSpec> = Vec::with_capacity(1 << n);
    let mut classes: Vec<BlockClass> = Vec::new();
    for mask in 0..(1usize << n) {
        let active: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let k = active.len();
        let mut interactions = Array2::zeros((k, k));
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    interactions[[a, b]] = v_full[[active[a], active[b]]];
                }
            }
        }
        let key = canonical_pair_key(k, |a, b| vec![rounded(active[a], active[b])]);
        let spec = BlockSpec {
            mask,
            active,
            dim: 1 << k,
            interactions,
            symmetry_key: key.clone(),
            stationary: mask == 0,
        };
        match classes.iter_mut().find(|c| c.key == key) {
            Some(c) => {
                let rep_active = &specs[c.representative].active;
                let perm = matching_permutation(k, |i, j| rounded(rep_active[i], rep_active[j]), |i, j| {
                    rounded(spec.active[i], spec.active[j])
                })
                .expect("equal keys imply a matching relabeling");
                c.members.push(mask);
                c.member_perms.push(perm);
            }
            None => classes.push(BlockClass {
                key,
                representative: mask,
                members: vec![mask],
                member_perms: vec![(0..k).collect()],
            }),
        }
        specs.push(spec);
    }
    Ok(Blocks {
        n_atoms: n,
        specs,
        classes,
    })
}

/// Permutation σ with member_feature(σ(i), σ(j)) == rep_feature(i, j) for
/// all pairs; exists whenever the canonical keys match.
pub(crate) fn matching_permutation(
    k: usize,
    rep_feature: impl Fn(usize, usize) -> i64,
    member_feature: impl Fn(usize, usize) -> i64,
) -> Option<Vec<usize>> {
    let mut found: Option<Vec<usize>> = None;
    let mut perm: Vec<usize> = (0..k).collect();
    permute(&mut perm, 0, &mut |p| {
        if found.is_some() {
            return;
        }
        for i in 0..k {
            for j in (i + 1)..k {
                if member_feature(p[i], p[j]) != rep_feature(i, j) {
                    return;
                }
            }
        }
        found = Some(p.to_vec());
    });
    found
}
