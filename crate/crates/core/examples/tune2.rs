use rydpar::grape::{CostModel, OptimizationConfig, RampConfig};
use rydpar::model::{
    build_geometry, build_parity_target, enumerate_blocks, GeometryKind, PhysicalParams,
    PulseSchedule,
};
use rydpar::optim::{minimize, LbfgsOptions};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::{FRAC_PI_4, PI};

fn main() {
    let params = PhysicalParams::default();
    for (label, kind, n, tn) in [
        ("Z2", GeometryKind::LinearPair, 2usize, 2.1),
        ("Z3eq", GeometryKind::EquilateralTriangle, 3, 3.2),
        ("Z3right", GeometryKind::RightTriangle, 3, 3.2),
    ] {
        let geometry = build_geometry(kind, 2.0).unwrap();
        let blocks = enumerate_blocks(&geometry, &params).unwrap();
        let target = build_parity_target(n, FRAC_PI_4);
        let config = OptimizationConfig {
            duration_t: params.duration_from_normalized(tn),
            ramp: RampConfig {
                enabled: true,
                ..RampConfig::default()
            },
            seed: 424242,
            ..OptimizationConfig::default()
        };
        let m = config.resolved_m_steps(&params);
        let dt = config.duration_t / m as f64;
        let template = {
            let pulse = PulseSchedule::with_phases(vec![0.0; m], params.omega_max, dt);
            rydpar::grape::apply_ramp(&pulse, &params, 10.0, PI / params.omega_max).unwrap()
        };
        // Stage 1: heavy smoothing; Stage 2: target cost.
        let heavy = OptimizationConfig {
            eta_delta: config.eta_delta * 30.0,
            ..config.clone()
        };
        let model_bare = CostModel::new(&blocks, &target, &params, &heavy, template.clone());
        let model_full = CostModel::new(&blocks, &target, &params, &config, template.clone());

        let t0 = std::time::Instant::now();
        let n_starts = 20;
        let results: Vec<(f64, f64)> = (0..n_starts)
            .into_par_iter()
            .map(|start| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(start as u64 + 1);
                let x0: Vec<f64> = (0..model_bare.n_free())
                    .map(|_| rng.gen_range(-PI..PI))
                    .collect();
                let opts1 = LbfgsOptions {
                    max_iters: 800,
                    grad_inf_tol: 1e-9,
                    ..LbfgsOptions::default()
                };
                let stage1 = minimize(|x, g| model_bare.eval_grad(x, g).cost, x0, &opts1);
                let opts2 = LbfgsOptions {
                    max_iters: 3000,
                    grad_inf_tol: 1e-9,
                    ..LbfgsOptions::default()
                };
                let stage2 = minimize(
                    |x, g| model_full.eval_grad(x, g).cost,
                    stage1.x.clone(),
                    &opts2,
                );
                let parts = model_full.eval(&stage2.x);
                (stage2.cost, parts.bell_infidelity)
            })
            .collect();
        let best = results
            .iter()
            .cloned()
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
            .unwrap();
        let hits = results.iter().filter(|(c, _)| *c < best.0 * 1.2).count();
        let mut costs: Vec<f64> = results.iter().map(|(c, _)| *c).collect();
        costs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!(
            "{label}: best cost {:.4e} eps {:.3e}; {hits}/{n_starts} within 20%; median {:.3e} [{:?}]",
            best.0,
            best.1,
            costs[n_starts / 2],
            t0.elapsed()
        );
    }
}
