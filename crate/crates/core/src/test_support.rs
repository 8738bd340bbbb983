//! Shared fixtures for the unit tests: a cheaply optimized Z_2 pulse that
//! behaves like a real gate (tiny Bell infidelity, sensible T_R) without the
//! full Table-I settings.

use crate::grape::{optimize, OptimizationConfig};
use crate::model::{
    build_geometry, build_parity_target, AtomGeometry, GeometryKind, PhysicalParams, PulseSchedule,
};
use std::f64::consts::FRAC_PI_4;
use std::sync::OnceLock;

pub(crate) fn quick_z2() -> &'static (AtomGeometry, PhysicalParams, PulseSchedule) {
    static CELL: OnceLock<(AtomGeometry, PhysicalParams, PulseSchedule)> = OnceLock::new();
    CELL.get_or_init(|| {
        let params = PhysicalParams::default();
        let geometry = build_geometry(GeometryKind::LinearPair, 2.0).unwrap();
        let target = build_parity_target(2, FRAC_PI_4);
        let config = OptimizationConfig {
            duration_t: params.duration_from_normalized(2.0),
            m_steps: Some(80),
            n_starts: 6,
            max_iters: 1500,
            seed: 2024,
            ..OptimizationConfig::default()
        };
        let res = optimize(&geometry, &params, &target, &config).unwrap();
        assert!(
            res.bell_infidelity < 1e-6,
            "fixture pulse should be near-perfect, got {}",
            res.bell_infidelity
        );
        (geometry, params, res.pulse)
    })
}
