//! The whole workflow through the pipeline API: generate data, fit, validate,
//! run all configured tracking tasks, and render the report. Equivalent to
//! the `ssmr` CLI subcommands run in sequence.
//!
//! ```bash
//! cargo run --example full_pipeline
//! ```

use ssmr::config::PipelineConfig;
use ssmr::pipeline;

fn main() -> ssmr::Result<()> {
    let config = PipelineConfig::benchmark_default();
    let dir = std::env::temp_dir().join("ssmr_full_pipeline");
    std::fs::create_dir_all(&dir)?;

    let manifest = pipeline::cmd_generate_data(&config, &dir)?;
    println!("generated {} trajectories", manifest.entries.len());

    let (_, fit) = pipeline::cmd_fit(&config, &dir)?;
    println!(
        "fit: leading variance {:.4}, excitation condition {:.2e}",
        fit.leading_variance, fit.excitation_condition
    );

    let validation = pipeline::cmd_validate(&config, &dir)?;
    println!(
        "validation: geometry median {:.3e}, dynamics median {:.3e}",
        validation.geometry_median, validation.dynamics_median
    );
    if let Some(period) = validation.dominant_mode_period {
        println!("dominant mode period {period:.3} s");
    }

    let summary = pipeline::cmd_control(&config, &dir)?;
    for task in &summary.tasks {
        println!(
            "{}: MSE {:.4e}, mean QP {:.3} ms, faults {}",
            task.task, task.mse_total, task.qp_ms_mean, task.faults
        );
    }

    pipeline::cmd_report(&dir)?;
    println!("artifacts in {}", dir.display());
    Ok(())
}
