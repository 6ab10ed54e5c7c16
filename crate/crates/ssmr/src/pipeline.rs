//! Config-driven pipeline commands: data generation, fitting, validation,
//! closed-loop control, and report emission. Each command is re-runnable
//! from persisted artifacts alone.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::config::{PipelineConfig, PlantConfig, TimeSemanticsChoice};
use crate::control::{
    assemble_control_regression, assemble_control_regression_discrete, assemble_model,
    fit_control_matrix, random_control_sequence, SSMRModel,
};
use crate::data::{
    assemble_regression_data, check_embedding_dimension, embed, estimate_equilibrium,
    truncate_transient, EmbeddingSpec, Trajectory, TrajectoryKind,
};
use crate::error::{Error, Result};
use crate::io::{
    bytes_hash, file_hash, read_trajectory_csv, write_trajectory_csv, DatasetManifest,
    ManifestEntry,
};
use crate::model::{load_model, save_model, Provenance};
use crate::mpc::{
    run_receding_horizon, tracking_mse, ClosedLoopLog, OCPConfig, Polytope, TrustRegionParams,
};
use crate::plant::{
    assemble_first_order, build_benchmark_plant, sample_decay_initial_conditions_with_mode,
    simulate_controlled, simulate_decay, FirstOrderSystem, MechanicalPlant,
};
use crate::ssm::{
    fit_discrete_dynamics, fit_geometry, fit_pca, fit_reduced_dynamics, invariance_error,
};

/// Builds the plant described by the config.
pub fn build_plant(config: &PipelineConfig) -> Result<FirstOrderSystem> {
    let mut system = match &config.plant.plant {
        PlantConfig::Benchmark {
            reduced_dim,
            full_dim,
            seed,
        } => build_benchmark_plant(*reduced_dim, *full_dim, *seed)?
            .system()
            .clone(),
        PlantConfig::Chain {
            dof,
            stiffness,
            rayleigh,
            cubic,
            input_dofs,
        } => {
            let plant = MechanicalPlant::chain(*dof, *stiffness, *rayleigh, *cubic, input_dofs)?;
            assemble_first_order(&plant, config.plant.epsilon)?
        }
    };
    system.epsilon = config.plant.epsilon;
    system.dt = config.plant.dt;
    Ok(system)
}

/// Generates the decay and excitation datasets plus the manifest.
pub fn cmd_generate_data(config: &PipelineConfig, out_dir: &Path) -> Result<DatasetManifest> {
    fs::create_dir_all(out_dir)?;
    config.save_effective(out_dir)?;
    let system = build_plant(config)?;
    let data = &config.data;
    let mut entries = Vec::new();

    let ics = sample_decay_initial_conditions_with_mode(
        &system,
        data.decay_count,
        data.decay_amplitude,
        data.seed,
        data.ic_mode,
    )?;
    for (i, x0) in ics.iter().enumerate() {
        let traj = simulate_decay(&system, x0, data.decay_duration, data.sample_period)?;
        let file = format!("decay_{i:03}.csv");
        write_trajectory_csv(&out_dir.join(&file), &traj)?;
        entries.push(ManifestEntry {
            file,
            kind: TrajectoryKind::Decay,
            samples: traj.len(),
        });
    }

    let cf = &config.control_fit;
    let lo = DVector::from_column_slice(&cf.excitation_lo);
    let hi = DVector::from_column_slice(&cf.excitation_hi);
    for i in 0..cf.count {
        let schedule = random_control_sequence(
            system.input_dim(),
            cf.duration,
            cf.hold_period,
            (&lo, &hi),
            cf.seed.wrapping_add(i as u64),
        )?;
        let traj = simulate_controlled(
            &system,
            &DVector::zeros(system.state_dim()),
            &schedule,
            cf.sample_period,
        )?;
        let file = format!("controlled_{i:03}.csv");
        write_trajectory_csv(&out_dir.join(&file), &traj)?;
        entries.push(ManifestEntry {
            file,
            kind: TrajectoryKind::Controlled,
            samples: traj.len(),
        });
    }

    let manifest = DatasetManifest {
        sample_period: data.sample_period,
        controlled_sample_period: cf.sample_period,
        seed: data.seed,
        truncate_samples: (data.truncate_seconds / data.sample_period).round() as usize,
        delays: data.delays,
        stride: data.stride,
        holdout_fraction: data.holdout_fraction,
        entries,
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

fn load_decay_split(
    manifest: &DatasetManifest,
    dir: &Path,
) -> Result<(Vec<Trajectory>, Vec<Trajectory>)> {
    let files = manifest.files_of_kind(dir, TrajectoryKind::Decay);
    if files.is_empty() {
        return Err(Error::InvalidInput("manifest lists no decay trajectories".into()));
    }
    let mut trajs = Vec::with_capacity(files.len());
    for f in &files {
        trajs.push(read_trajectory_csv(f, TrajectoryKind::Decay)?);
    }
    let holdout = ((trajs.len() as f64 * manifest.holdout_fraction).round() as usize)
        .min(trajs.len().saturating_sub(1));
    let split = trajs.len() - holdout;
    let held_out = trajs.split_off(split);
    Ok((trajs, held_out))
}

fn preprocess_decay(
    trajs: &[Trajectory],
    manifest: &DatasetManifest,
    weights: Option<&[f64]>,
) -> Result<Vec<Trajectory>> {
    trajs
        .iter()
        .map(|t| {
            let t = truncate_transient(t, manifest.truncate_samples)?;
            apply_weights(&t, weights)
        })
        .collect()
}

fn apply_weights(traj: &Trajectory, weights: Option<&[f64]>) -> Result<Trajectory> {
    let Some(w) = weights else {
        return Ok(traj.clone());
    };
    if w.len() != traj.raw_dim() {
        return Err(Error::DimensionMismatch {
            context: "observation weights",
            expected: traj.raw_dim(),
            got: w.len(),
        });
    }
    let mut obs = traj.observations().clone();
    for (i, &wi) in w.iter().enumerate() {
        for k in 0..obs.ncols() {
            obs[(i, k)] *= wi;
        }
    }
    Trajectory::new(
        traj.timestamps().to_vec(),
        obs,
        traj.controls().cloned(),
        traj.kind(),
    )
}

/// Summary of a fit, for logging and validation.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct FitSummary {
    pub variance_ratios: Vec<f64>,
    pub leading_variance: f64,
    pub invertibility_linear: f64,
    pub invertibility_nonlinear: f64,
    pub control_residual_before: f64,
    pub control_residual_after: f64,
    pub excitation_condition: f64,
    pub training_amplitude: f64,
}

/// Fits the full model from a generated dataset and writes `model.json`.
pub fn cmd_fit(config: &PipelineConfig, out_dir: &Path) -> Result<(SSMRModel, FitSummary)> {
    let manifest = DatasetManifest::load(&out_dir.join("manifest.json"))?;
    let (train, _) = load_decay_split(&manifest, out_dir)?;
    let weights = config.fit.observation_weights.as_deref();
    let train = preprocess_decay(&train, &manifest, weights)?;

    let raw_dim = train[0].raw_dim();
    let spec = EmbeddingSpec {
        delays: manifest.delays,
        raw_dim,
        stride: manifest.stride,
    };
    let n = config.fit.reduced_dim;
    let verdict = check_embedding_dimension(spec.embedded_dim(), n);
    if !verdict.admissible {
        return Err(Error::InvalidConfig(format!(
            "embedded dimension {} < 2n+1 = {}; need at least {} delays",
            spec.embedded_dim(),
            2 * n + 1,
            verdict.min_delays
        )));
    }

    let equilibrium = estimate_equilibrium(&train, 50)?;
    let assembled = assemble_regression_data(&train, &spec, &equilibrium)?;
    let (v, variance_ratios) = fit_pca(&assembled.y, n)?;
    let x = v.transpose() * &assembled.y;

    // The lift regression and geometry carry the embedded equilibrium.
    let mut embedded_equilibrium = DVector::zeros(spec.embedded_dim());
    for d in 0..=spec.delays {
        embedded_equilibrium
            .rows_mut(d * raw_dim, raw_dim)
            .copy_from(&equilibrium);
    }
    let mut geometry = fit_geometry(
        &assembled.y,
        &x,
        &v,
        &embedded_equilibrium,
        config.fit.geometry_order,
        config.fit.ridge,
    )?;
    if config.fit.enforce_invertibility {
        geometry.enforce_invertibility();
    }
    let dynamics = match config.fit.time_semantics {
        TimeSemanticsChoice::Continuous => {
            let xdot = v.transpose() * &assembled.ydot;
            fit_reduced_dynamics(&x, &xdot, config.fit.dynamics_order, config.fit.ridge)?
        }
        TimeSemanticsChoice::Discrete => {
            let projected = crate::data::AssembledData {
                y: x.clone(),
                ydot: DMatrix::zeros(n, x.ncols()),
                controls: None,
                columns_per_trajectory: assembled.columns_per_trajectory.clone(),
                sample_period: assembled.sample_period,
            };
            let (x_now, x_next) = projected.shift_pairs();
            fit_discrete_dynamics(
                &x_now,
                &x_next,
                config.fit.dynamics_order,
                assembled.sample_period,
                config.fit.ridge,
            )?
        }
    };

    // Control matrix from the excitation set.
    let controlled_files = manifest.files_of_kind(out_dir, TrajectoryKind::Controlled);
    if controlled_files.is_empty() {
        return Err(Error::InvalidInput(
            "manifest lists no controlled trajectories".into(),
        ));
    }
    let mut controlled = Vec::new();
    for f in &controlled_files {
        let traj = read_trajectory_csv(f, TrajectoryKind::Controlled)?;
        let traj = apply_weights(&traj, weights)?;
        controlled.push(embed(&traj, &spec)?);
    }
    // Continuous models regress against finite-difference derivatives;
    // discrete models regress the one-step residual.
    let regression = match config.fit.time_semantics {
        TimeSemanticsChoice::Continuous => {
            assemble_control_regression(&controlled, &geometry)?
        }
        TimeSemanticsChoice::Discrete => {
            if (manifest.controlled_sample_period - manifest.sample_period).abs() > 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "discrete-time control fit needs matching sample periods: decay {} s vs controlled {} s",
                    manifest.sample_period, manifest.controlled_sample_period
                )));
            }
            assemble_control_regression_discrete(&controlled, &geometry)?
        }
    };
    let (control_matrix, control_report) = fit_control_matrix(
        &regression.x,
        &regression.xdot,
        &regression.controls,
        &dynamics,
    )?;

    // Performance selector over the embedded observation (current block).
    let o = config.fit.performance_axes.len();
    if o == 0 {
        return Err(Error::InvalidConfig("no performance axes selected".into()));
    }
    let mut performance_matrix = DMatrix::zeros(o, spec.embedded_dim());
    for (r, &axis) in config.fit.performance_axes.iter().enumerate() {
        if axis >= raw_dim {
            return Err(Error::InvalidConfig(format!(
                "performance axis {axis} out of range for raw dimension {raw_dim}"
            )));
        }
        performance_matrix[(r, axis)] = 1.0;
    }
    let performance_equilibrium = &performance_matrix * &embedded_equilibrium;

    let training_amplitude = x
        .column_iter()
        .map(|c| c.norm())
        .fold(0.0f64, f64::max);

    let mut model = assemble_model(
        geometry,
        dynamics,
        control_matrix,
        performance_matrix,
        performance_equilibrium,
        spec,
        manifest.sample_period,
    )?;
    model.training_amplitude = training_amplitude;

    let provenance = Provenance {
        dataset_manifest_hash: file_hash(&out_dir.join("manifest.json"))?,
        config_hash: bytes_hash(config.emit()?.as_bytes()),
    };
    save_model(&model, provenance, &out_dir.join("model.json"))?;

    let leading_variance = variance_ratios.iter().take(n).sum();
    let (invertibility_linear, invertibility_nonlinear) =
        model.geometry.invertibility_residuals();
    let summary = FitSummary {
        variance_ratios: variance_ratios.clone(),
        leading_variance,
        invertibility_linear,
        invertibility_nonlinear,
        control_residual_before: control_report.residual_before,
        control_residual_after: control_report.residual_after,
        excitation_condition: control_report.excitation_condition,
        training_amplitude,
    };
    fs::write(
        out_dir.join("fit_summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok((model, summary))
}

/// Validation report of a fitted model on held-out data.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ValidationReport {
    pub geometry_median: f64,
    pub geometry_p95: f64,
    pub dynamics_median: f64,
    pub dynamics_p95: f64,
    pub held_out_trajectories: usize,
    /// `(re, im)` pairs of the reduced linear spectrum.
    pub reduced_spectrum: Vec<(f64, f64)>,
    pub dominant_mode_period: Option<f64>,
    pub embedding_admissible: bool,
}

/// Runs invariance diagnostics on the held-out split.
pub fn cmd_validate(config: &PipelineConfig, out_dir: &Path) -> Result<ValidationReport> {
    let manifest = DatasetManifest::load(&out_dir.join("manifest.json"))?;
    let model = load_model(&out_dir.join("model.json"))?;
    let (_, held_out) = load_decay_split(&manifest, out_dir)?;
    if held_out.is_empty() {
        return Err(Error::InvalidInput(
            "holdout fraction left no validation trajectories".into(),
        ));
    }
    let weights = config.fit.observation_weights.as_deref();
    let held_out = preprocess_decay(&held_out, &manifest, weights)?;
    let spec = model.embedding;
    let embedded: Vec<Trajectory> = held_out
        .iter()
        .map(|t| embed(t, &spec))
        .collect::<Result<_>>()?;
    let report = invariance_error(&model.geometry, &model.dynamics, &embedded)?;
    let verdict = check_embedding_dimension(spec.embedded_dim(), model.reduced_dim());
    let out = ValidationReport {
        geometry_median: report.geometry_median,
        geometry_p95: report.geometry_p95,
        dynamics_median: report.dynamics_median,
        dynamics_p95: report.dynamics_p95,
        held_out_trajectories: embedded.len(),
        reduced_spectrum: model.dynamics.linear_spectrum(),
        dominant_mode_period: model.dominant_mode_period(),
        embedding_admissible: verdict.admissible,
    };
    fs::write(
        out_dir.join("validation.json"),
        serde_json::to_string_pretty(&out)? + "\n",
    )?;
    Ok(out)
}

/// Builds the OCP configuration from the config file and a fitted model,
/// resolving the automatic defaults.
pub fn resolve_ocp_config(config: &PipelineConfig, model: &SSMRModel) -> Result<OCPConfig> {
    let mpc = &config.mpc;
    let o = model.performance_dim();
    let m = model.input_dim();
    if mpc.stage_weight.len() != o || mpc.terminal_weight.len() != o {
        return Err(Error::InvalidConfig(format!(
            "cost weights must have {o} entries (performance dimension)"
        )));
    }
    if mpc.control_weight.len() != m || mpc.control_lo.len() != m || mpc.control_hi.len() != m {
        return Err(Error::InvalidConfig(format!(
            "control weights and bounds must have {m} entries"
        )));
    }
    let diag = |v: &[f64]| DMatrix::from_diagonal(&DVector::from_column_slice(v));
    let stage_weight = diag(&mpc.stage_weight);
    let soft_penalty = if mpc.soft_penalty > 0.0 {
        mpc.soft_penalty
    } else {
        1e4 * mpc.stage_weight.iter().cloned().fold(0.0, f64::max).max(1e-12)
    };
    let trust_radius = if mpc.trust_initial_radius > 0.0 {
        mpc.trust_initial_radius
    } else {
        0.1 * model.training_amplitude.max(1e-6)
    };
    let control_polytope = Some(Polytope::from_box(
        &DVector::from_column_slice(&mpc.control_lo),
        &DVector::from_column_slice(&mpc.control_hi),
    ));
    let performance_polytope = match (&mpc.performance_lo, &mpc.performance_hi) {
        (Some(lo), Some(hi)) => {
            if lo.len() != o || hi.len() != o {
                return Err(Error::InvalidConfig(format!(
                    "performance bounds must have {o} entries"
                )));
            }
            Some(Polytope::from_box(
                &DVector::from_column_slice(lo),
                &DVector::from_column_slice(hi),
            ))
        }
        (None, None) => None,
        _ => {
            return Err(Error::InvalidConfig(
                "performance bounds need both lo and hi".into(),
            ))
        }
    };
    Ok(OCPConfig {
        stage_weight,
        terminal_weight: diag(&mpc.terminal_weight),
        control_weight: diag(&mpc.control_weight),
        horizon: mpc.horizon,
        dt: mpc.dt,
        rollout_horizon: mpc.rollout_horizon,
        control_polytope,
        performance_polytope,
        soft_penalty,
        trust_region: TrustRegionParams {
            initial_radius: trust_radius,
            shrink: mpc.trust_shrink,
            grow: mpc.trust_grow,
            acceptance_ratio: mpc.trust_acceptance,
        },
        scp_tolerance: mpc.scp_tolerance,
        scp_max_iters: mpc.scp_max_iters,
    })
}

/// Per-task closed-loop summary.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TaskSummary {
    pub task: String,
    pub mse_total: f64,
    pub mse_per_axis: Vec<f64>,
    pub qp_ms_mean: f64,
    pub qp_ms_p50: f64,
    pub qp_ms_p95: f64,
    pub scp_iters_mean: f64,
    pub slack_max: f64,
    pub faults: usize,
    pub steps: usize,
}

/// Closed-loop summary across tasks; the single source of truth for reports.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ControlSummary {
    pub tasks: Vec<TaskSummary>,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

/// Writes one closed-loop log as CSV.
pub fn write_log_csv(path: &Path, log: &ClosedLoopLog) -> Result<()> {
    let mut out = String::new();
    let o = log.steps.first().map(|s| s.performance.len()).unwrap_or(0);
    let m = log.steps.first().map(|s| s.control.len()).unwrap_or(0);
    out.push_str("t");
    for i in 1..=o {
        out.push_str(&format!(",z_{i}"));
    }
    for i in 1..=o {
        out.push_str(&format!(",zbar_{i}"));
    }
    for i in 1..=m {
        out.push_str(&format!(",u_{i}"));
    }
    out.push_str(",scp_iters,qp_ms,slack_max\n");
    for step in &log.steps {
        out.push_str(&crate::io::format_float(step.time));
        for i in 0..o {
            out.push(',');
            out.push_str(&crate::io::format_float(step.performance[i]));
        }
        for i in 0..o {
            out.push(',');
            out.push_str(&crate::io::format_float(step.reference[i]));
        }
        for i in 0..m {
            out.push(',');
            out.push_str(&crate::io::format_float(step.control[i]));
        }
        out.push_str(&format!(
            ",{},{},{}\n",
            step.scp_iterations,
            crate::io::format_float(step.qp_time_ms),
            crate::io::format_float(step.slack_max),
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Runs every configured task in closed loop and writes logs plus the
/// summary JSON.
pub fn cmd_control(config: &PipelineConfig, out_dir: &Path) -> Result<ControlSummary> {
    let model = load_model(&out_dir.join("model.json"))?;
    let plant = build_plant(config)?;
    let ocp = resolve_ocp_config(config, &model)?;
    let mut tasks = Vec::new();
    for entry in &config.mpc.tasks {
        let reference = entry.task.resolve(&model)?;
        let log = run_receding_horizon(&plant, &model, &reference, &ocp, config.mpc.duration)?;
        write_log_csv(&out_dir.join(format!("log_{}.csv", entry.name)), &log)?;
        let mse = tracking_mse(&log, config.mpc.transient_window);
        let mut qp_times: Vec<f64> = log.steps.iter().map(|s| s.qp_time_ms).collect();
        qp_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let scp_mean = log
            .steps
            .iter()
            .map(|s| s.scp_iterations as f64)
            .sum::<f64>()
            / log.steps.len().max(1) as f64;
        let slack_max = log
            .steps
            .iter()
            .map(|s| s.slack_max)
            .fold(0.0f64, f64::max);
        tasks.push(TaskSummary {
            task: entry.name.clone(),
            mse_total: mse.total,
            mse_per_axis: mse.per_axis,
            qp_ms_mean: qp_times.iter().sum::<f64>() / qp_times.len().max(1) as f64,
            qp_ms_p50: percentile(&qp_times, 0.5),
            qp_ms_p95: percentile(&qp_times, 0.95),
            scp_iters_mean: scp_mean,
            slack_max,
            faults: log.faults,
            steps: log.steps.len(),
        });
    }
    let summary = ControlSummary { tasks };
    fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(summary)
}

/// Renders tracking plots and the markdown summary table from persisted
/// artifacts.
pub fn cmd_report(out_dir: &Path) -> Result<()> {
    crate::report::render_report(out_dir)
}
