//! Receding-horizon control loop around a plant, reference tasks, and
//! tracking metrics.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::control::SSMRModel;
use crate::error::{Error, Result};
use crate::mpc::scp::{scp_solve, ScpResult};
use crate::mpc::{discretize_dynamics, OCPConfig};
use crate::plant::{step_rk4, FirstOrderSystem};

/// Reference trajectory task in performance space; axes index into the
/// performance vector and untasked axes hold the equilibrium value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReferenceTask {
    /// Hold the equilibrium.
    Equilibrium,
    /// 1:2 Lissajous figure eight in two axes.
    FigureEight {
        amplitudes: (f64, f64),
        period: f64,
        axes: (usize, usize),
    },
    /// Circle of fixed radius in two axes.
    Circle {
        radius: f64,
        period: f64,
        axes: (usize, usize),
    },
}

impl ReferenceTask {
    /// Reference sample at time `t`.
    pub fn eval(&self, t: f64, equilibrium: &DVector<f64>) -> DVector<f64> {
        let mut z = equilibrium.clone();
        match self {
            ReferenceTask::Equilibrium => z,
            ReferenceTask::FigureEight {
                amplitudes,
                period,
                axes,
            } => {
                let theta = 2.0 * std::f64::consts::PI * t / period;
                z[axes.0] += amplitudes.0 * theta.sin();
                z[axes.1] += amplitudes.1 * (2.0 * theta).sin();
                z
            }
            ReferenceTask::Circle {
                radius,
                period,
                axes,
            } => {
                let theta = 2.0 * std::f64::consts::PI * t / period;
                z[axes.0] += radius * theta.cos();
                z[axes.1] += radius * theta.sin();
                z
            }
        }
    }

    /// Period of the task, when it has one.
    pub fn period(&self) -> Option<f64> {
        match self {
            ReferenceTask::Equilibrium => None,
            ReferenceTask::FigureEight { period, .. } | ReferenceTask::Circle { period, .. } => {
                Some(*period)
            }
        }
    }

    /// Circle task tuned to the model's slowest oscillatory mode.
    pub fn near_resonance_circle(radius: f64, axes: (usize, usize), model: &SSMRModel) -> Result<Self> {
        let period = model.dominant_mode_period().ok_or_else(|| {
            Error::InvalidInput("model has no oscillatory mode to resonate with".into())
        })?;
        Ok(ReferenceTask::Circle {
            radius,
            period,
            axes,
        })
    }
}

/// One logged control step.
#[derive(Debug, Clone)]
pub struct ClosedLoopStep {
    pub time: f64,
    /// Plant observation at the start of the step.
    pub observation: DVector<f64>,
    /// Performance value at the start of the step.
    pub performance: DVector<f64>,
    pub reference: DVector<f64>,
    /// First control applied during this step.
    pub control: DVector<f64>,
    /// Predicted reduced trajectory from the SCP solve.
    pub predicted: Vec<DVector<f64>>,
    pub scp_iterations: usize,
    pub qp_time_ms: f64,
    /// Worst softened performance-constraint violation of the prediction.
    pub slack_max: f64,
    pub fault: bool,
}

/// Complete closed-loop record at the controller sampling period
/// `T_c = N_r * dt`.
#[derive(Debug, Clone)]
pub struct ClosedLoopLog {
    pub steps: Vec<ClosedLoopStep>,
    pub control_period: f64,
    /// Number of controller faults (two consecutive failed solves).
    pub faults: usize,
}

/// Per-axis and total mean squared tracking error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MseReport {
    pub total: f64,
    pub per_axis: Vec<f64>,
    pub samples: usize,
}

/// Mean of `|z - z_ref|^2` over logged steps after `skip_transient` seconds.
pub fn tracking_mse(log: &ClosedLoopLog, skip_transient: f64) -> MseReport {
    let start = log.steps.first().map(|s| s.time).unwrap_or(0.0);
    let kept: Vec<&ClosedLoopStep> = log
        .steps
        .iter()
        .filter(|s| s.time - start >= skip_transient)
        .collect();
    let o = kept
        .first()
        .map(|s| s.performance.len())
        .unwrap_or(0);
    let mut per_axis = vec![0.0; o];
    let mut total = 0.0;
    for step in &kept {
        let err = &step.performance - &step.reference;
        total += err.norm_squared();
        for i in 0..o {
            per_axis[i] += err[i] * err[i];
        }
    }
    let count = kept.len().max(1) as f64;
    MseReport {
        total: total / count,
        per_axis: per_axis.into_iter().map(|v| v / count).collect(),
        samples: kept.len(),
    }
}

/// Per-channel bounds implied by single-coefficient polytope rows; used to
/// saturate controls before they reach the plant so hard bounds hold exactly.
fn box_bounds(config: &OCPConfig, m: usize) -> (DVector<f64>, DVector<f64>) {
    let mut lo = DVector::from_element(m, f64::NEG_INFINITY);
    let mut hi = DVector::from_element(m, f64::INFINITY);
    if let Some(poly) = &config.control_polytope {
        for r in 0..poly.rows() {
            let nonzero: Vec<usize> = (0..m).filter(|&j| poly.a[(r, j)] != 0.0).collect();
            if let [j] = nonzero[..] {
                let coeff = poly.a[(r, j)];
                let bound = poly.b[r] / coeff;
                if coeff > 0.0 {
                    hi[j] = hi[j].min(bound);
                } else {
                    lo[j] = lo[j].max(bound);
                }
            }
        }
    }
    (lo, hi)
}

/// History buffer reconstructing time-delay-embedded observations inside the
/// closed loop. Raw observations are recorded on the embedding lag grid.
struct DelayBuffer {
    lag_substeps: usize,
    capacity: usize,
    history: Vec<DVector<f64>>,
    substep: usize,
}

impl DelayBuffer {
    fn new(model: &SSMRModel, plant_dt: f64, initial: &DVector<f64>) -> Result<Self> {
        let spec = &model.embedding;
        let lag = spec.stride as f64 * model.sample_period;
        let ratio = lag / plant_dt;
        if spec.delays > 0 && (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "embedding lag {lag} s is not a multiple of the plant step {plant_dt} s"
            )));
        }
        let lag_substeps = (ratio.round() as usize).max(1);
        let capacity = spec.delays + 1;
        Ok(DelayBuffer {
            lag_substeps,
            capacity,
            history: vec![initial.clone(); capacity],
            substep: 0,
        })
    }

    /// Records one plant step; keeps one raw sample per lag interval.
    fn push(&mut self, observation: &DVector<f64>) {
        self.substep += 1;
        if self.substep % self.lag_substeps == 0 {
            self.history.push(observation.clone());
            if self.history.len() > self.capacity {
                self.history.remove(0);
            }
        }
    }

    /// Embedded observation, current sample first.
    fn embedded(&self, current: &DVector<f64>, raw_dim: usize, delays: usize) -> DVector<f64> {
        let mut out = DVector::zeros(raw_dim * (delays + 1));
        out.rows_mut(0, raw_dim).copy_from(current);
        for d in 1..=delays {
            let idx = self.history.len().saturating_sub(d);
            let sample = &self.history[idx.min(self.history.len() - 1)];
            out.rows_mut(d * raw_dim, raw_dim).copy_from(sample);
        }
        out
    }
}

/// Runs the receding-horizon loop for `duration` seconds: observe, project,
/// solve, apply the first `N_r` controls, repeat. A failed solve applies zero
/// control; two consecutive failures count as a controller fault and the
/// loop continues fail-safe.
pub fn run_receding_horizon(
    plant: &FirstOrderSystem,
    model: &SSMRModel,
    reference: &ReferenceTask,
    config: &OCPConfig,
    duration: f64,
) -> Result<ClosedLoopLog> {
    config.validate()?;
    let discrete = discretize_dynamics(model, config.dt)?;
    let control_period = config.rollout_horizon as f64 * config.dt;
    let plant_substeps = {
        let ratio = config.dt / plant.dt;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "controller dt {} s is not a multiple of the plant step {} s",
                config.dt, plant.dt
            )));
        }
        ratio.round() as usize
    };
    let raw_dim = model.embedding.raw_dim;
    if plant.state_dim() != raw_dim {
        return Err(Error::DimensionMismatch {
            context: "plant observation vs model raw dimension",
            expected: raw_dim,
            got: plant.state_dim(),
        });
    }
    let (lo, hi) = box_bounds(config, model.input_dim());

    let total_steps = (duration / control_period).floor() as usize;
    let mut log = ClosedLoopLog {
        steps: Vec::with_capacity(total_steps),
        control_period,
        faults: 0,
    };
    let mut y = DVector::zeros(plant.state_dim());
    let mut buffer = DelayBuffer::new(model, plant.dt, &y)?;
    let mut warm: Option<Vec<DVector<f64>>> = None;
    let mut consecutive_failures = 0usize;

    for step_idx in 0..total_steps {
        let t = step_idx as f64 * control_period;
        let y_embedded = buffer.embedded(&y, raw_dim, model.embedding.delays);
        let x0 = model.initial_condition(&y_embedded)?;
        let horizon_refs: Vec<DVector<f64>> = (0..config.horizon)
            .map(|k| reference.eval(t + k as f64 * config.dt, &model.performance_equilibrium))
            .collect();

        let solve: Result<ScpResult> =
            scp_solve(&discrete, &x0, &horizon_refs, config, warm.as_deref());
        let (controls, predicted, scp_iterations, qp_ms, slack_max, fault) = match solve {
            Ok(result) => {
                consecutive_failures = 0;
                let slack_max = config
                    .performance_polytope
                    .as_ref()
                    .map(|poly| {
                        let mut worst: f64 = 0.0;
                        for x in result.states.iter().skip(1) {
                            if let Ok(z) = model.performance(x) {
                                let violation = &poly.a * z - &poly.b;
                                worst =
                                    worst.max(violation.iter().cloned().fold(0.0, f64::max));
                            }
                        }
                        worst
                    })
                    .unwrap_or(0.0);
                // Shifted warm start for the next solve.
                let mut shifted = result.controls.clone();
                if config.rollout_horizon < shifted.len() {
                    shifted.rotate_left(config.rollout_horizon);
                    let tail = shifted.len() - config.rollout_horizon;
                    let last = shifted[tail - 1].clone();
                    for slot in shifted.iter_mut().skip(tail) {
                        *slot = last.clone();
                    }
                } else {
                    shifted = vec![DVector::zeros(model.input_dim()); shifted.len()];
                }
                warm = Some(shifted);
                (
                    result.controls.clone(),
                    result.states.clone(),
                    result.iterations,
                    result.qp_time.as_secs_f64() * 1e3,
                    slack_max,
                    false,
                )
            }
            Err(_) => {
                consecutive_failures += 1;
                let fault = consecutive_failures >= 2;
                if fault {
                    log.faults += 1;
                }
                warm = None;
                (
                    vec![DVector::zeros(model.input_dim()); config.horizon - 1],
                    Vec::new(),
                    0,
                    0.0,
                    0.0,
                    fault,
                )
            }
        };

        let z_now = model.performance_from_observation(&y_embedded)?;
        let mut applied_first = DVector::zeros(model.input_dim());
        for roll in 0..config.rollout_horizon {
            let mut u = controls[roll.min(controls.len() - 1)].clone();
            // Saturation guard: hard bounds hold exactly on the plant side.
            for i in 0..u.len() {
                u[i] = u[i].clamp(lo[i], hi[i]);
            }
            if roll == 0 {
                applied_first = u.clone();
            }
            for _ in 0..plant_substeps {
                y = step_rk4(plant, &y, &u, plant.dt)?;
                buffer.push(&y);
            }
        }

        log.steps.push(ClosedLoopStep {
            time: t,
            observation: y_embedded,
            performance: z_now,
            reference: reference.eval(t, &model.performance_equilibrium),
            control: applied_first,
            predicted,
            scp_iterations,
            qp_time_ms: qp_ms,
            slack_max,
            fault,
        });
    }
    Ok(log)
}
