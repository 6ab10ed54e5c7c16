//! Pipeline driver: `generate-data`, `fit`, `validate`, `control`, `report`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ssmr::config::PipelineConfig;
use ssmr::pipeline;

#[derive(Parser)]
#[command(name = "ssmr", about = "Reduced-order modeling and MPC on spectral submanifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate decay and excitation datasets into the output directory.
    GenerateData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the reduced model from a generated dataset.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the fitted model on held-out trajectories.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the configured closed-loop tracking tasks.
    Control {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render plots and the markdown summary from persisted logs.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn run() -> Result<(), (String, ssmr::Error)> {
    let cli = Cli::parse();
    let stage = |name: &str| name.to_string();
    match cli.command {
        Command::GenerateData { config, out } => {
            let config = PipelineConfig::load(&config).map_err(|e| (stage("generate-data"), e))?;
            let manifest = pipeline::cmd_generate_data(&config, &out)
                .map_err(|e| (stage("generate-data"), e))?;
            println!(
                "wrote {} trajectories to {}",
                manifest.entries.len(),
                out.display()
            );
        }
        Command::Fit { config, out } => {
            let config = PipelineConfig::load(&config).map_err(|e| (stage("fit"), e))?;
            let (_, summary) = pipeline::cmd_fit(&config, &out).map_err(|e| (stage("fit"), e))?;
            println!(
                "leading variance: {:.6}",
                summary.leading_variance
            );
            println!(
                "invertibility residuals: linear {:.3e}, nonlinear {:.3e}",
                summary.invertibility_linear, summary.invertibility_nonlinear
            );
            println!(
                "control residual: {:.6e} -> {:.6e}",
                summary.control_residual_before, summary.control_residual_after
            );
        }
        Command::Validate { config, out } => {
            let config = PipelineConfig::load(&config).map_err(|e| (stage("validate"), e))?;
            let report = pipeline::cmd_validate(&config, &out).map_err(|e| (stage("validate"), e))?;
            println!(
                "geometry residual median {:.3e} (p95 {:.3e})",
                report.geometry_median, report.geometry_p95
            );
            println!(
                "dynamics residual median {:.3e} (p95 {:.3e})",
                report.dynamics_median, report.dynamics_p95
            );
            if let Some(period) = report.dominant_mode_period {
                println!("dominant mode period: {period:.4} s");
            }
        }
        Command::Control { config, out } => {
            let config = PipelineConfig::load(&config).map_err(|e| (stage("control"), e))?;
            let summary = pipeline::cmd_control(&config, &out).map_err(|e| (stage("control"), e))?;
            for task in &summary.tasks {
                println!(
                    "{}: MSE {:.6e}, QP {:.3} ms mean, {} faults",
                    task.task, task.mse_total, task.qp_ms_mean, task.faults
                );
            }
        }
        Command::Report { out } => {
            pipeline::cmd_report(&out).map_err(|e| (stage("report"), e))?;
            println!("report written to {}", out.join("report.md").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err((stage, err)) => {
            eprintln!("error[{stage}]: {err}");
            ExitCode::FAILURE
        }
    }
}
