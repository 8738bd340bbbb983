//! Command dispatch and artifact persistence.
//!
//! Every run writes a resolved-config echo and a manifest (seed, config
//! hash, library version, output list) next to its results. Writes are
//! atomic: temp file in the target directory, then rename.

use crate::config::{Command, RunConfig};
use anyhow::{bail, Context, Result};
use rydpar::fidelity;
use rydpar::grape::{self, OptimizationResult};
use rydpar::model::{
    build_geometry, build_parity_target, enumerate_blocks, AtomGeometry, GeometryKind,
    PhysicalParams, PulseSchedule, ValidationRanges,
};
use rydpar::motional::{self, MotionalConfig};
use rydpar::propagate::propagate_blocks;
use rydpar::robustness::{self, Channel, Mode, PerturbationSpec};
use rydpar::tomography::{self, ChannelKind, CircuitKind, NoiseChannelSpec};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::f64::consts::FRAC_PI_4;
use std::path::{Path, PathBuf};

pub fn run(config: &RunConfig) -> Result<()> {
    let out_dir = PathBuf::from(&config.output_dir);
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("cannot create output dir `{}`", out_dir.display()))?;

    let mut outputs: Vec<String> = Vec::new();
    let geometry = config.geometry()?;
    let params = config.params.resolve();

    for w in ValidationRanges::default().check_geometry(&geometry) {
        eprintln!("warning: {w}");
    }

    match config.command {
        Command::Optimize => cmd_optimize(config, &geometry, &params, &out_dir, &mut outputs)?,
        Command::QslScan => cmd_qsl_scan(config, &geometry, &params, &out_dir, &mut outputs)?,
        Command::Simulate => cmd_simulate(config, &geometry, &params, &out_dir, &mut outputs)?,
        Command::Budget => cmd_budget(config, &geometry, &params, &out_dir, &mut outputs)?,
        Command::Tomography => cmd_tomography(config, &geometry, &params, &out_dir, &mut outputs)?,
        Command::Robustness => cmd_robustness(config, &geometry, &params, &out_dir, &mut outputs)?,
        Command::ThetaSweep => cmd_theta_sweep(config, &geometry, &params, &out_dir, &mut outputs)?,
        Command::RabiScan => cmd_rabi_scan(config, &params, &out_dir, &mut outputs)?,
    }

    let echo = toml::to_string_pretty(config).context("config echo")?;
    write_atomic(&out_dir.join("config_echo.toml"), echo.as_bytes())?;
    outputs.push("config_echo.toml".into());

    let manifest = Manifest {
        command: config.command.name().to_string(),
        seed: config.seed,
        config_sha256: config_hash(config)?,
        version: env!("CARGO_PKG_VERSION").to_string(),
        outputs,
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    seed: u64,
    config_sha256: String,
    version: String,
    outputs: Vec<String>,
}

fn config_hash(config: &RunConfig) -> Result<String> {
    let canonical = serde_json::to_vec(config)?;
    let mut hasher = Sha256::new();
    hasher.update(&canonical);
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("write `{}`", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("rename to `{}`", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn load_pulse(path: &str) -> Result<PulseSchedule> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read pulse `{path}`"))?;
    let pulse: PulseSchedule =
        serde_json::from_str(&text).with_context(|| format!("invalid pulse json `{path}`"))?;
    pulse.assert_consistent();
    Ok(pulse)
}

fn require_pulse(config: &RunConfig) -> Result<PulseSchedule> {
    match &config.pulse_path {
        Some(p) => load_pulse(p),
        None => bail!("this command requires `pulse_path` in the config"),
    }
}

#[derive(Serialize)]
struct OptimizeSummary {
    eps_bell: f64,
    cost: f64,
    t_norm: f64,
    t_r_norm: f64,
    t_rr_norm: f64,
    eps_decay_estimate: f64,
    iterations: usize,
    start_index: usize,
    converged: bool,
    starts: Vec<rydpar::grape::StartSummary>,
}

fn summarize(res: &OptimizationResult, params: &PhysicalParams) -> OptimizeSummary {
    OptimizeSummary {
        eps_bell: res.bell_infidelity,
        cost: res.cost,
        t_norm: params.normalized_time(res.pulse.duration()),
        t_r_norm: params.normalized_time(res.t_r),
        t_rr_norm: params.normalized_time(res.t_rr),
        eps_decay_estimate: params.gamma_d * res.t_r,
        iterations: res.iterations,
        start_index: res.start_index,
        converged: res.converged,
        starts: res.starts.clone(),
    }
}

fn cmd_optimize(
    config: &RunConfig,
    geometry: &AtomGeometry,
    params: &PhysicalParams,
    out_dir: &Path,
    outputs: &mut Vec<String>,
) -> Result<()> {
    let opt = config.optimization.resolve(params, config.seed);
    let target = build_parity_target(geometry.n_atoms(), config.optimization.theta_rad);
    let res = grape::optimize(geometry, params, &target, &opt)?;
    for w in ValidationRanges::default().check_pulse(&res.pulse) {
        eprintln!("warning: {w}");
    }
    write_json(&out_dir.join("pulse.json"), &res.pulse)?;
    outputs.push("pulse.json".into());
    write_json(&out_dir.join("summary.json"), &summarize(&res, params))?;
    outputs.push("summary.json".into());
    println!(
        "optimize: eps_bell {:.3e}, T_R_norm {:.4}, cost {:.4e}",
        res.bell_infidelity,
        params.normalized_time(res.t_r),
        res.cost
    );
    Ok(())
}

fn cmd_qsl_scan(
    config: &RunConfig,
    geometry: &AtomGeometry,
    params: &PhysicalParams,
    out_dir: &Path,
    outputs: &mut Vec<String>,
) -> Result<()> {
    if config.qsl.durations_norm.is_empty() {
        bail!("qsl-scan requires `qsl.durations_norm`");
    }
    let opt = config.optimization.resolve(params, config.seed);
    let target = build_parity_target(geometry.n_atoms(), config.optimization.theta_rad);
    let scan = grape::qsl_scan(geometry, params, &target, &config.qsl.durations_norm, &opt)?;

    let mut csv = String::from("duration_norm,best_infidelity,best_cost\n");
    for p in &scan.points {
        csv.push_str(&format!(
            "{:.12e},{:.12e},{:.12e}\n",
            p.duration_norm, p.best_infidelity, p.best_cost
        ));
    }
    write_atomic(&out_dir.join("qsl_scan.csv"), csv.as_bytes())?;
    outputs.push("qsl_scan.csv".into());

    #[derive(Serialize)]
    struct QslSummary {
        thresholds: Vec<f64>,
        t_star_norm: Vec<Option<f64>>,
    }
    let thresholds = if config.qsl.thresholds.is_empty() {
        vec![1e-6, 1e-4]
    } else {
        config.qsl.thresholds.clone()
    };
    let t_star_norm = thresholds.iter().map(|&t| scan.t_star(t)).collect();
    write_json(
        &out_dir.join("summary.json"),
        &QslSummary {
            thresholds,
            t_star_norm,
        },
    )?;
    outputs.push("summary.json".into());
    Ok(())
}

fn cmd_simulate(
    config: &RunConfig,
    geometry: &AtomGeometry,
    params: &PhysicalParams,
    out_dir: &Path,
    outputs: &mut Vec<String>,
) -> Result<()> {
    let pulse = require_pulse(config)?;
    let blocks = enumerate_blocks(geometry, params)?;
    let target = build_parity_target(geometry.n_atoms(), config.optimization.theta_rad);
    let props = propagate_blocks(&pulse, &blocks, None)?;
    let report = fidelity::report(&props, &target);

    let mut full_cfg = MotionalConfig::full(config.noise.n_fock, config.noise.taylor_order);
    full_cfg.krylov = config.noise.krylov();
    let noisy = motional::simulate_noisy_target(&pulse, geometry, params, &full_cfg, &target)?;

    #[derive(Serialize)]
    struct SimulateSummary {
        eps_bell: f64,
        avg_infidelity: f64,
        t_norm: f64,
        t_r_norm: f64,
        t_rr_norm: f64,
        eps_total: f64,
        truncation_flag: bool,
        max_top_mode_population: f64,
    }
    write_json(
        &out_dir.join("summary.json"),
        &SimulateSummary {
            eps_bell: 1.0 - report.bell_fidelity,
            avg_infidelity: 1.0 - report.avg_fidelity,
            t_norm: params.normalized_time(pulse.duration()),
            t_r_norm: params.normalized_time(report.t_r),
            t_rr_norm: params.normalized_time(report.t_rr),
            eps_total: noisy.infidelity,
            truncation_flag: noisy.truncation_flag,
            max_top_mode_population: noisy.max_top_mode_population,
        },
    )?;
    outputs.push("summary.json".into());
    println!(
        "simulate: eps_bell {:.3e}, eps_total {:.3e}",
        1.0 - report.bell_fidelity,
        noisy.infidelity
    );
    Ok(())
}

fn cmd_budget(
    config: &RunConfig,
    geometry: &AtomGeometry,
    params: &PhysicalParams,
    out_dir: &Path,
    outputs: &mut Vec<String>,
) -> Result<()> {
    let pulse = require_pulse(config)?;
    let opts = config.noise.budget_options();
    let budget = motional::error_budget(&pulse, geometry, params, &opts)?;

    let mut csv = String::from("quantity,value\n");
    for (name, value) in [
        ("eps_bell", budget.eps_bell),
        ("eps_decay", budget.eps_decay),
        ("eps_recoil", budget.eps_recoil),
        ("eps_force", budget.eps_force),
        ("eps_total", budget.eps_total),
        ("omega0_T_over_2pi", budget.t_norm),
        ("omega0_TR_over_2pi", budget.t_r_norm),
        ("omega0_TRR_over_2pi", budget.t_rr_norm),
    ] {
        csv.push_str(&format!("{name},{value:.12e}\n"));
    }
    write_atomic(&out_dir.join("budget.csv"), csv.as_bytes())?;
    outputs.push("budget.csv".into());
    write_json(&out_dir.join("summary.json"), &budget)?;
    outputs.push("summary.json".into());

    if !config.sweeps.gamma_d_grid_per_s.is_empty() {
        let points =
            motional::decay_sweep(&pulse, geometry, params, &config.sweeps.gamma_d_grid_per_s)?;
        let mut csv = String::from("gamma_d_per_s,eps_decay,gamma_t_r\n");
        for p in &points {
            csv.push_str(&format!(
                "{:.12e},{:.12e},{:.12e}\n",
                p.gamma_d, p.eps_decay, p.gamma_t_r
            ));
        }
        write_atomic(&out_dir.join("decay_sweep.csv"), csv.as_bytes())?;
        outputs.push("decay_sweep.csv".into());
    }
    if !config.sweeps.omega_par_grid_rad_s.is_empty() {
        let fit = motional::recoil_fit(
            &pulse,
            geometry,
            params,
            &config.sweeps.omega_par_grid_rad_s,
            params.inv_temperature_beta,
            &opts,
        )?;
        let mut csv = String::from("omega_par_rad_s,eps_recoil,model_finite_t\n");
        for ((omega, eps), (_, model)) in fit
            .omega_grid
            .iter()
            .zip(&fit.eps_values)
            .zip(&fit.finite_t_curve)
        {
            csv.push_str(&format!("{omega:.12e},{eps:.12e},{model:.12e}\n"));
        }
        write_atomic(&out_dir.join("recoil_fit.csv"), csv.as_bytes())?;
        outputs.push("recoil_fit.csv".into());
        #[derive(Serialize)]
        struct RecoilSummary {
            alpha: f64,
            r_squared: f64,
        }
        write_json(
            &out_dir.join("recoil_fit.json"),
            &RecoilSummary {
                alpha: fit.alpha,
                r_squared: fit.r_squared,
            },
        )?;
        outputs.push("recoil_fit.json".into());
    }
    if !config.sweeps.omega_perp_grid_rad_s.is_empty() {
        let sweep = motional::force_sweep(
            &pulse,
            geometry,
            params,
            &config.sweeps.omega_perp_grid_rad_s,
            &opts,
        )?;
        let mut csv = String::from("omega_perp_rad_s,eps_force\n");
        for (omega, eps) in sweep.omega_grid.iter().zip(&sweep.eps_values) {
            csv.push_str(&format!("{omega:.12e},{eps:.12e}\n"));
        }
        write_atomic(&out_dir.join("force_sweep.csv"), csv.as_bytes())?;
        outputs.push("force_sweep.csv".into());
    }
    Ok(())
}

fn parse_circuit(name: &str) -> Result<CircuitKind> {
    Ok(match name {
        "native" => CircuitKind::Native,
        "v-decomposition" => CircuitKind::VDecomposition,
        "x-decomposition" => CircuitKind::XDecomposition,
        "zz-decomposition" => CircuitKind::ZzDecomposition,
        other => bail!("unknown circuit `{other}`"),
    })
}

fn cmd_tomography(
    config: &RunConfig,
    geometry: &AtomGeometry,
    params: &PhysicalParams,
    out_dir: &Path,
    outputs: &mut Vec<String>,
) -> Result<()> {
    let tomo = &config.tomography;
    let native_pulse = require_pulse(config)?;
    let z2_pulse = match &tomo.z2_pulse_path {
        Some(p) => Some(load_pulse(p)?),
        None => None,
    };
    let pair_geometry = build_geometry(
        GeometryKind::LinearPair,
        tomo.z2_r_min_m.unwrap_or(config.geometry.r_min_m) * 1.0e6,
    )?;

    let channels = [
        ("decay", ChannelKind::DecayRTo1, tomo.decay_rate_per_s),
        ("dephase-1r", ChannelKind::Dephase1R, tomo.dephasing_rate_per_s),
        ("dephase-01", ChannelKind::Dephase01, tomo.dephasing_rate_per_s),
    ];

    #[derive(Serialize)]
    struct TomoEntry {
        circuit: String,
        channel: String,
        total_error: f64,
        leakage: f64,
        process_infidelity: f64,
        avg_infidelity: f64,
        non_z_mass: f64,
        warnings: Vec<String>,
    }
    let mut summary: Vec<TomoEntry> = Vec::new();

    for name in &tomo.circuits {
        let kind = parse_circuit(name)?;
        let circuit = match kind {
            CircuitKind::Native => {
                tomography::build_native(&native_pulse, geometry, FRAC_PI_4)?
            }
            other => {
                let Some(z2) = &z2_pulse else {
                    bail!("decomposition circuits need `tomography.z2_pulse_path`");
                };
                tomography::build_decomposition(other, z2, &pair_geometry, FRAC_PI_4)?
            }
        };
        for (cname, ckind, rate) in channels {
            let profile = tomography::pauli_error_diagonals(
                &circuit,
                &[NoiseChannelSpec { kind: ckind, rate }],
                params,
                tomo.substeps,
            )?;
            let mut csv = String::from("pauli_string,probability\n");
            for (label, p) in &profile.probabilities {
                csv.push_str(&format!("{label},{p:.12e}\n"));
            }
            csv.push_str(&format!("total,{:.12e}\n", profile.total_error));
            csv.push_str(&format!("leakage,{:.12e}\n", profile.leakage));
            csv.push_str(&format!("E_chi,{:.12e}\n", profile.process_infidelity));
            csv.push_str(&format!("E_avg,{:.12e}\n", profile.avg_infidelity));
            let file = format!("tomography_{}_{}.csv", kind.name(), cname);
            write_atomic(&out_dir.join(&file), csv.as_bytes())?;
            outputs.push(file);
            for w in &profile.warnings {
                eprintln!("warning: {w}");
            }
            summary.push(TomoEntry {
                circuit: kind.name().to_string(),
                channel: cname.to_string(),
                total_error: profile.total_error,
                leakage: profile.leakage,
                process_infidelity: profile.process_infidelity,
                avg_infidelity: profile.avg_infidelity,
                non_z_mass: profile.non_z_mass(),
                warnings: profile.warnings.clone(),
            });
        }
    }
    write_json(&out_dir.join("summary.json"), &summary)?;
    outputs.push("summary.json".into());
    Ok(())
}

fn parse_channel_mode(s: &str) -> Result<(Channel, Mode)> {
    let (c, m) = s
        .split_once(':')
        .with_context(|| format!("channel spec `{s}` must look like `rabi:quasi-static`"))?;
    let channel = match c {
        "rabi" => Channel::Rabi,
        "detuning" => Channel::Detuning,
        "phase" => Channel::Phase,
        other => bail!("unknown channel `{other}`"),
    };
    let mode = match m {
        "quasi-static" => Mode::QuasiStatic,
        "time-varying" => Mode::TimeVarying,
        other => bail!("unknown mode `{other}`"),
    };
    Ok((channel, mode))
}

fn cmd_robustness(
    config: &RunConfig,
    geometry: &AtomGeometry,
    params: &PhysicalParams,
    out_dir: &Path,
    outputs: &mut Vec<String>,
) -> Result<()> {
    let pulse = require_pulse(config)?;
    let mut specs = Vec::new();
    for cm in &config.robustness.channels {
        let (channel, mode) = parse_channel_mode(cm)?;
        for &eps in &config.robustness.epsilons {
            specs.push(PerturbationSpec::new(channel, mode, eps)?);
        }
    }
    let report = robustness::run_robustness(
        &pulse,
        geometry,
        params,
        &specs,
        config.robustness.n_samples,
        config.seed,
    )?;
    let mut csv = String::from("channel,mode,epsilon,mean,std,n\n");
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{:.6e},{:.12e},{:.12e},{}\n",
            row.channel.name(),
            row.mode.name(),
            row.epsilon,
            row.mean,
            row.std,
            row.n_samples
        ));
    }
    write_atomic(&out_dir.join("robustness.csv"), csv.as_bytes())?;
    outputs.push("robustness.csv".into());
    Ok(())
}

fn cmd_theta_sweep(
    config: &RunConfig,
    geometry: &AtomGeometry,
    params: &PhysicalParams,
    out_dir: &Path,
    outputs: &mut Vec<String>,
) -> Result<()> {
    let opt = config.optimization.resolve(params, config.seed);
    let thetas = config.theta_sweep.resolved_thetas();
    let base_theta = thetas.first().copied().unwrap_or(FRAC_PI_4);
    let target = build_parity_target(geometry.n_atoms(), base_theta);
    let base = grape::optimize(geometry, params, &target, &opt)?;
    let family = grape::theta_sweep(geometry, params, &base, base_theta, &thetas, &opt)?;

    let mut csv = String::from("theta_rad,eps_bell,cost\n");
    for (i, point) in family.iter().enumerate() {
        csv.push_str(&format!(
            "{:.12e},{:.12e},{:.12e}\n",
            point.theta, point.result.bell_infidelity, point.result.cost
        ));
        let file = format!("pulse_theta_{i:03}.json");
        write_json(&out_dir.join(&file), &point.result.pulse)?;
        outputs.push(file);
    }
    write_atomic(&out_dir.join("theta_sweep.csv"), csv.as_bytes())?;
    outputs.push("theta_sweep.csv".into());
    Ok(())
}

fn cmd_rabi_scan(
    config: &RunConfig,
    params: &PhysicalParams,
    out_dir: &Path,
    outputs: &mut Vec<String>,
) -> Result<()> {
    let rs = &config.rabi_scan;
    if rs.geometries.is_empty()
        || rs.omega_maxes_rad_s.is_empty()
        || rs.spacings_um.is_empty()
        || rs.durations_norm.is_empty()
    {
        bail!("rabi-scan requires `rabi_scan.{{geometries, omega_maxes_rad_s, spacings_um, durations_norm}}`");
    }
    let opt = config.optimization.resolve(params, config.seed);
    let rows = grape::rabi_tradeoff_scan(
        &rs.geometries,
        &rs.omega_maxes_rad_s,
        &rs.spacings_um,
        &rs.durations_norm,
        params,
        config.optimization.theta_rad,
        &opt,
        &config.noise.budget_options(),
    )?;
    let mut csv =
        String::from("geometry,omega_max_rad_s,r_min_um,duration_norm,duration_s,eps_bell,eps_total,eps_decay,t_r_norm\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{:.12e},{:.6},{:.6},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            r.geometry,
            r.omega_max_rad_s,
            r.r_min_um,
            r.duration_norm,
            r.duration_s,
            r.eps_bell,
            r.eps_total,
            r.eps_decay,
            r.t_r_norm
        ));
    }
    write_atomic(&out_dir.join("rabi_scan.csv"), csv.as_bytes())?;
    outputs.push("rabi_scan.csv".into());
    Ok(())
}
