//! Learn the manifold geometry and the autonomous reduced dynamics from
//! decay data, then compare against the planted ground truth: tangent-space
//! angle, coefficient recovery, and invariance diagnostics on held-out
//! trajectories.
//!
//! ```bash
//! cargo run --example learn_dynamics
//! ```

use ssmr::data::{assemble_regression_data, estimate_equilibrium, EmbeddingSpec};
use ssmr::plant::{build_benchmark_plant, sample_decay_initial_conditions, simulate_decay};
use ssmr::ssm::{fit_geometry, fit_pca, fit_reduced_dynamics, invariance_error};

fn main() -> ssmr::Result<()> {
    let n = 2;
    let n_f = 10;
    let plant = build_benchmark_plant(n, n_f, 11)?;

    // Decay dataset: displaced initial conditions, unforced ring-down.
    let ics = sample_decay_initial_conditions(plant.system(), 12, 0.5, 5)?;
    let trajs: Vec<_> = ics
        .iter()
        .map(|x0| simulate_decay(plant.system(), x0, 6.0, 1e-3))
        .collect::<ssmr::Result<_>>()?;
    let (train, held_out) = trajs.split_at(10);

    let spec = EmbeddingSpec::new(0, n_f);
    let equilibrium = estimate_equilibrium(train, 50)?;
    println!("estimated equilibrium norm: {:.3e}", equilibrium.norm());

    let data = assemble_regression_data(train, &spec, &equilibrium)?;
    let (v, ratios) = fit_pca(&data.y, n)?;
    println!(
        "leading-{n} variance: {:.4}",
        ratios[..n].iter().sum::<f64>()
    );
    println!(
        "tangent-space principal angle: {:.4} deg",
        plant.principal_angle(&v).to_degrees()
    );

    let x = v.transpose() * &data.y;
    let xdot = v.transpose() * &data.ydot;
    let geometry = fit_geometry(&data.y, &x, &v, &equilibrium, 3, 0.0)?;
    let dynamics = fit_reduced_dynamics(&x, &xdot, 3, 0.0)?;

    let (r0_true, r_true) = plant.conjugated_reduced_truth(&v)?;
    println!(
        "linear coefficient error:    {:.3e} (relative Frobenius)",
        (&dynamics.linear - &r0_true).norm() / r0_true.norm()
    );
    println!(
        "nonlinear coefficient error: {:.3e} (relative Frobenius)",
        (&dynamics.nonlinear - &r_true).norm() / r_true.norm()
    );

    let report = invariance_error(&geometry, &dynamics, held_out)?;
    println!(
        "held-out geometry residual: median {:.3e}, p95 {:.3e}",
        report.geometry_median, report.geometry_p95
    );
    println!(
        "held-out dynamics residual: median {:.3e}, p95 {:.3e}",
        report.dynamics_median, report.dynamics_p95
    );
    println!(
        "learned spectrum: {:?}",
        dynamics
            .linear_spectrum()
            .iter()
            .map(|(re, im)| format!("{re:.3} + {im:.3}i"))
            .collect::<Vec<_>>()
    );
    Ok(())
}
