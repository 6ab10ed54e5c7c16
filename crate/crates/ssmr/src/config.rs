//! Declarative pipeline configuration.
//!
//! One TOML file drives the whole workflow; every command writes an
//! effective-config copy next to its outputs so runs are reproducible from
//! artifacts alone. Parsing then emitting then parsing again yields an
//! identical configuration.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::closed_loop::ReferenceTask;
use crate::plant::InitialConditionMode;
use crate::ssm::TimeSemantics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlantConfig {
    /// Synthetic plant with a known invariant manifold.
    Benchmark {
        reduced_dim: usize,
        full_dim: usize,
        seed: u64,
    },
    /// Mass-spring chain with Rayleigh damping and cubic springs.
    Chain {
        dof: usize,
        stiffness: f64,
        rayleigh: (f64, f64),
        cubic: f64,
        input_dofs: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSection {
    #[serde(flatten)]
    pub plant: PlantConfig,
    pub epsilon: f64,
    /// Integrator step of the plant.
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSection {
    pub decay_count: usize,
    pub decay_duration: f64,
    pub decay_amplitude: f64,
    pub sample_period: f64,
    pub ic_mode: InitialConditionMode,
    /// Leading seconds dropped from each decay trajectory before fitting.
    pub truncate_seconds: f64,
    pub delays: usize,
    pub stride: usize,
    /// Fraction of decay trajectories (from the end) held out for validation.
    pub holdout_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSection {
    pub reduced_dim: usize,
    pub geometry_order: u32,
    pub dynamics_order: u32,
    pub ridge: f64,
    pub time_semantics: TimeSemanticsChoice,
    /// Post-hoc projection enforcing the chart/lift invertibility relations.
    pub enforce_invertibility: bool,
    /// Observed-state coordinates forming the performance variable.
    pub performance_axes: Vec<usize>,
    /// Optional per-coordinate weights applied to raw observations before
    /// PCA and fitting (all ones when omitted).
    #[serde(default)]
    pub observation_weights: Option<Vec<f64>>,
}

/// Declarative counterpart of [`TimeSemantics`] (the discrete period comes
/// from the dataset, not the config).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeSemanticsChoice {
    Continuous,
    Discrete,
}

impl TimeSemanticsChoice {
    pub fn realize(self, dt: f64) -> TimeSemantics {
        match self {
            TimeSemanticsChoice::Continuous => TimeSemantics::Continuous,
            TimeSemanticsChoice::Discrete => TimeSemantics::Discrete { dt },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlFitSection {
    pub excitation_lo: Vec<f64>,
    pub excitation_hi: Vec<f64>,
    pub hold_period: f64,
    pub duration: f64,
    pub count: usize,
    pub sample_period: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub name: String,
    #[serde(flatten)]
    pub task: TaskConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case")]
pub enum TaskConfig {
    Equilibrium,
    FigureEight {
        amplitudes: (f64, f64),
        period: f64,
        axes: (usize, usize),
    },
    Circle {
        radius: f64,
        period: f64,
        axes: (usize, usize),
    },
    /// Circle whose period locks onto the learned dominant mode.
    NearResonanceCircle { radius: f64, axes: (usize, usize) },
}

impl TaskConfig {
    /// Resolves the task against a learned model (near-resonance tasks read
    /// the dominant-mode period from it).
    pub fn resolve(&self, model: &crate::control::SSMRModel) -> Result<ReferenceTask> {
        Ok(match self {
            TaskConfig::Equilibrium => ReferenceTask::Equilibrium,
            TaskConfig::FigureEight {
                amplitudes,
                period,
                axes,
            } => ReferenceTask::FigureEight {
                amplitudes: *amplitudes,
                period: *period,
                axes: *axes,
            },
            TaskConfig::Circle {
                radius,
                period,
                axes,
            } => ReferenceTask::Circle {
                radius: *radius,
                period: *period,
                axes: *axes,
            },
            TaskConfig::NearResonanceCircle { radius, axes } => {
                ReferenceTask::near_resonance_circle(*radius, *axes, model)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcSection {
    /// Diagonal of the stage weight Q.
    pub stage_weight: Vec<f64>,
    pub terminal_weight: Vec<f64>,
    pub control_weight: Vec<f64>,
    pub horizon: usize,
    pub dt: f64,
    pub rollout_horizon: usize,
    pub control_lo: Vec<f64>,
    pub control_hi: Vec<f64>,
    /// Optional performance-variable bounds (softened in the OCP).
    #[serde(default)]
    pub performance_lo: Option<Vec<f64>>,
    #[serde(default)]
    pub performance_hi: Option<Vec<f64>>,
    /// l1 slack penalty; 0 selects the default `1e4 * max eig(Q)`.
    pub soft_penalty: f64,
    /// Initial trust radius; 0 selects 10% of the training amplitude.
    pub trust_initial_radius: f64,
    pub trust_shrink: f64,
    pub trust_grow: f64,
    pub trust_acceptance: f64,
    pub scp_tolerance: f64,
    pub scp_max_iters: usize,
    /// Closed-loop run length per task.
    pub duration: f64,
    /// Leading seconds excluded from the MSE metric.
    pub transient_window: f64,
    pub tasks: Vec<TaskEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    pub dir: String,
    pub plots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub plant: PlantSection,
    pub data: DataSection,
    pub fit: FitSection,
    pub control_fit: ControlFitSection,
    pub mpc: MpcSection,
    pub output: OutputSection,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn emit(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Writes the effective config next to the outputs for provenance.
    pub fn save_effective(&self, dir: &Path) -> Result<String> {
        let text = self.emit()?;
        fs::write(dir.join("config.effective.toml"), &text)?;
        Ok(text)
    }

    /// Benchmark config used by tests and examples: a small ground-truth
    /// plant with three tracking tasks.
    pub fn benchmark_default() -> Self {
        PipelineConfig {
            plant: PlantSection {
                plant: PlantConfig::Benchmark {
                    reduced_dim: 2,
                    full_dim: 8,
                    seed: 7,
                },
                epsilon: 1.0,
                dt: 1e-4,
            },
            data: DataSection {
                decay_count: 12,
                decay_duration: 6.0,
                decay_amplitude: 0.5,
                sample_period: 1e-3,
                ic_mode: InitialConditionMode::Auto,
                truncate_seconds: 0.05,
                delays: 0,
                stride: 1,
                holdout_fraction: 0.2,
                seed: 21,
            },
            fit: FitSection {
                reduced_dim: 2,
                geometry_order: 3,
                dynamics_order: 3,
                ridge: 0.0,
                time_semantics: TimeSemanticsChoice::Continuous,
                enforce_invertibility: false,
                performance_axes: vec![0, 1],
                observation_weights: None,
            },
            control_fit: ControlFitSection {
                excitation_lo: vec![-0.08, -0.08],
                excitation_hi: vec![0.08, 0.08],
                hold_period: 0.01,
                duration: 6.0,
                count: 3,
                sample_period: 1e-3,
                seed: 33,
            },
            mpc: MpcSection {
                stage_weight: vec![1.0, 1.0],
                terminal_weight: vec![1.0, 1.0],
                control_weight: vec![1e-6, 1e-6],
                horizon: 3,
                dt: 0.01,
                rollout_horizon: 1,
                control_lo: vec![-6.0, -6.0],
                control_hi: vec![6.0, 6.0],
                performance_lo: None,
                performance_hi: None,
                soft_penalty: 0.0,
                trust_initial_radius: 0.0,
                trust_shrink: 0.5,
                trust_grow: 2.0,
                trust_acceptance: 0.1,
                scp_tolerance: 1e-4,
                scp_max_iters: 30,
                duration: 6.0,
                transient_window: 1.0,
                tasks: vec![
                    TaskEntry {
                        name: "figure-eight".into(),
                        task: TaskConfig::FigureEight {
                            amplitudes: (0.15, 0.1),
                            period: 3.0,
                            axes: (0, 1),
                        },
                    },
                    TaskEntry {
                        name: "circle".into(),
                        task: TaskConfig::Circle {
                            radius: 0.12,
                            period: 3.0,
                            axes: (0, 1),
                        },
                    },
                    TaskEntry {
                        name: "near-resonance-circle".into(),
                        task: TaskConfig::NearResonanceCircle {
                            radius: 0.12,
                            axes: (0, 1),
                        },
                    },
                ],
            },
            output: OutputSection {
                dir: "out".into(),
                plots: true,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips() {
        let config = PipelineConfig::benchmark_default();
        let text = config.emit().unwrap();
        let parsed = PipelineConfig::parse(&text).unwrap();
        assert_eq!(parsed, config);
        let text2 = parsed.emit().unwrap();
        assert_eq!(text, text2);
    }

    #[test]
    fn rejects_malformed_toml() {
        assert!(PipelineConfig::parse("this is not toml = [").is_err());
    }
}
