use rydpar::grape::{optimize, OptimizationConfig, RampConfig, TimeWeightConvention};
use rydpar::model::{build_geometry, build_parity_target, GeometryKind, PhysicalParams};
use std::f64::consts::FRAC_PI_4;

fn main() {
    let params = PhysicalParams::default();

    // Microsecond-weighted cost: scale = 1e6 (T_R in μs).
    for (label, kind, n, tn, starts, seed) in [
        ("Z2 s0", GeometryKind::LinearPair, 2usize, 2.1, 60usize, 0u64),
        ("Z3eq s0", GeometryKind::EquilateralTriangle, 3, 3.2, 24, 0),
    ] {
        let geometry = build_geometry(kind, 2.0).unwrap();
        let target = build_parity_target(n, FRAC_PI_4);
        let config = OptimizationConfig {
            duration_t: params.duration_from_normalized(tn),
            m_steps: None,
            n_starts: starts,
            max_iters: 3000,
            seed,
            ramp: RampConfig { enabled: true, ..RampConfig::default() },
            quadrature_substeps: 4,
            time_weight_convention: TimeWeightConvention::Microseconds,
            ..OptimizationConfig::default()
        };
        let t0 = std::time::Instant::now();
        let res = optimize(&geometry, &params, &target, &config).unwrap();
        let blocks = rydpar::model::enumerate_blocks(&geometry, &params).unwrap();
        let props = rydpar::propagate::propagate_blocks_with(&res.pulse, &blocks, None, 8).unwrap();
        let (tr_true, trr_true) = rydpar::fidelity::rydberg_times(&props);
        println!(
            "{label}: cost {:.3e} eps_bell {:.3e} TRn {:.4} TRRn {:.3e} true TRn {:.4} TRRn {:.3e} iters {} conv {} [{:?}]",
            res.cost,
            res.bell_infidelity,
            params.normalized_time(res.t_r),
            params.normalized_time(res.t_rr),
            params.normalized_time(tr_true),
            params.normalized_time(trr_true),
            res.iterations,
            res.converged,
            t0.elapsed()
        );
        let best = res.cost;
        let hits = res
            .starts
            .iter()
            .filter(|s| s.cost < best * 1.2)
            .count();
        let mut costs: Vec<f64> = res.starts.iter().map(|s| s.cost).collect();
        costs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!(
            "   {hits}/{} starts within 20% of best; cost quartiles {:.3e} {:.3e} {:.3e}",
            res.starts.len(),
            costs[costs.len() / 4],
            costs[costs.len() / 2],
            costs[3 * costs.len() / 4]
        );
    }
}
