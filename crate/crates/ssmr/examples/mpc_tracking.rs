//! Closed-loop tracking with the learned model: figure-eight and circle
//! references under receding-horizon SCP, compared against the zero-control
//! baseline.
//!
//! ```bash
//! cargo run --example mpc_tracking
//! ```

use ssmr::config::PipelineConfig;
use ssmr::model::load_model;
use ssmr::mpc::{run_receding_horizon, tracking_mse, ReferenceTask};
use ssmr::pipeline::{build_plant, cmd_fit, cmd_generate_data, resolve_ocp_config};

fn main() -> ssmr::Result<()> {
    let mut config = PipelineConfig::benchmark_default();
    config.mpc.duration = 6.0;
    let dir = std::env::temp_dir().join("ssmr_mpc_tracking");
    std::fs::create_dir_all(&dir)?;

    println!("generating data and fitting the model...");
    cmd_generate_data(&config, &dir)?;
    cmd_fit(&config, &dir)?;
    let model = load_model(&dir.join("model.json"))?;
    let plant = build_plant(&config)?;
    let ocp = resolve_ocp_config(&config, &model)?;

    for task in [
        ReferenceTask::FigureEight {
            amplitudes: (0.15, 0.1),
            period: 3.0,
            axes: (0, 1),
        },
        ReferenceTask::Circle {
            radius: 0.12,
            period: 3.0,
            axes: (0, 1),
        },
    ] {
        let log = run_receding_horizon(&plant, &model, &task, &ocp, config.mpc.duration)?;
        let mse = tracking_mse(&log, config.mpc.transient_window);

        // Zero-control baseline: the plant just sits at equilibrium.
        let mut baseline = 0.0;
        let mut count = 0usize;
        for step in &log.steps {
            if step.time >= config.mpc.transient_window {
                baseline += (&step.reference - &model.performance_equilibrium).norm_squared();
                count += 1;
            }
        }
        baseline /= count.max(1) as f64;

        let mean_qp: f64 =
            log.steps.iter().map(|s| s.qp_time_ms).sum::<f64>() / log.steps.len() as f64;
        println!(
            "{task:?}\n  MSE {:.4e} (baseline {:.4e}, ratio {:.1}x), mean QP {:.3} ms, faults {}",
            mse.total,
            baseline,
            baseline / mse.total,
            mean_qp,
            log.faults
        );
    }
    Ok(())
}
