//! Partial observation: only a few coordinates of the full state are
//! measured, so the manifold cannot embed in the raw observation space.
//! Time-delay embedding lifts the observations past the Whitney/Takens
//! threshold and the same learning pipeline applies.
//!
//! ```bash
//! cargo run --example delay_embedding
//! ```

use nalgebra::DMatrix;
use ssmr::data::{
    assemble_regression_data, check_embedding_dimension, embed, EmbeddingSpec, Trajectory,
};
use ssmr::plant::{build_benchmark_plant, sample_decay_initial_conditions, simulate_decay};
use ssmr::ssm::{fit_geometry, fit_pca, fit_reduced_dynamics, invariance_error};

fn main() -> ssmr::Result<()> {
    let n = 2;
    let n_f = 10;
    let observed = 2usize; // coordinates 0 and 1 only
    let plant = build_benchmark_plant(n, n_f, 3)?;

    let verdict = check_embedding_dimension(observed, n);
    println!(
        "raw observation dim {observed}: admissible = {}, need >= {} delays",
        verdict.admissible, verdict.min_delays
    );
    let spec = EmbeddingSpec {
        delays: verdict.min_delays.max(2),
        raw_dim: observed,
        stride: 8,
    };
    println!(
        "embedding: {} delays, stride {}, embedded dim {}",
        spec.delays,
        spec.stride,
        spec.embedded_dim()
    );

    let restrict = |traj: &Trajectory| -> ssmr::Result<Trajectory> {
        let obs = DMatrix::from_fn(observed, traj.len(), |i, k| traj.observations()[(i, k)]);
        Trajectory::new(traj.timestamps().to_vec(), obs, None, traj.kind())
    };

    let ics = sample_decay_initial_conditions(plant.system(), 12, 0.5, 9)?;
    let trajs: Vec<_> = ics
        .iter()
        .map(|x0| restrict(&simulate_decay(plant.system(), x0, 6.0, 1e-3)?))
        .collect::<ssmr::Result<_>>()?;
    let (train, held_out) = trajs.split_at(10);

    let equilibrium = nalgebra::DVector::zeros(observed);
    let data = assemble_regression_data(train, &spec, &equilibrium)?;
    let (v, ratios) = fit_pca(&data.y, n)?;
    println!(
        "leading-{n} variance of embedded data: {:.4}",
        ratios[..n].iter().sum::<f64>()
    );

    let x = v.transpose() * &data.y;
    let xdot = v.transpose() * &data.ydot;
    let embedded_eq = nalgebra::DVector::zeros(spec.embedded_dim());
    let geometry = fit_geometry(&data.y, &x, &v, &embedded_eq, 3, 0.0)?;
    let dynamics = fit_reduced_dynamics(&x, &xdot, 3, 0.0)?;

    let held_out_embedded: Vec<_> = held_out
        .iter()
        .map(|t| embed(t, &spec))
        .collect::<ssmr::Result<_>>()?;
    let report = invariance_error(&geometry, &dynamics, &held_out_embedded)?;
    println!(
        "held-out geometry residual median {:.3e}, dynamics median {:.3e}",
        report.geometry_median, report.dynamics_median
    );
    println!(
        "learned spectrum: {:?}",
        dynamics
            .linear_spectrum()
            .iter()
            .map(|(re, im)| format!("{re:.3} {im:+.3}i"))
            .collect::<Vec<_>>()
    );
    println!(
        "true slow eigenvalues: {:.3} +- {:.3}i",
        plant.true_reduced_linear()[(0, 0)],
        plant.true_reduced_linear()[(0, 1)]
    );
    Ok(())
}
