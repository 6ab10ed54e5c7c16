//! Disambiguate the effect of control from the autonomous dynamics: excite
//! the plant with random piecewise-constant inputs and regress the linear
//! control matrix on the reduced coordinates.
//!
//! ```bash
//! cargo run --example learn_control
//! ```

use nalgebra::DVector;
use ssmr::control::{assemble_control_regression, fit_control_matrix, random_control_sequence};
use ssmr::data::{assemble_regression_data, EmbeddingSpec};
use ssmr::plant::{
    build_benchmark_plant, sample_decay_initial_conditions, simulate_controlled, simulate_decay,
};
use ssmr::ssm::{fit_geometry, fit_pca, fit_reduced_dynamics};

fn main() -> ssmr::Result<()> {
    let n = 2;
    let n_f = 8;
    let plant = build_benchmark_plant(n, n_f, 23)?;

    // Autonomous model from decay data.
    let ics = sample_decay_initial_conditions(plant.system(), 10, 0.5, 1)?;
    let decays: Vec<_> = ics
        .iter()
        .map(|x0| simulate_decay(plant.system(), x0, 6.0, 1e-3))
        .collect::<ssmr::Result<_>>()?;
    let spec = EmbeddingSpec::new(0, n_f);
    let data = assemble_regression_data(&decays, &spec, &DVector::zeros(n_f))?;
    let (v, _) = fit_pca(&data.y, n)?;
    let x = v.transpose() * &data.y;
    let xdot = v.transpose() * &data.ydot;
    let geometry = fit_geometry(&data.y, &x, &v, &DVector::zeros(n_f), 3, 0.0)?;
    let dynamics = fit_reduced_dynamics(&x, &xdot, 3, 0.0)?;

    // Excitation data: random inputs held for 10 ms, states sampled at 1 ms.
    let lo = DVector::from_element(2, -0.08);
    let hi = DVector::from_element(2, 0.08);
    let mut controlled = Vec::new();
    for run in 0..3 {
        let schedule = random_control_sequence(2, 6.0, 0.01, (&lo, &hi), 40 + run)?;
        controlled.push(simulate_controlled(
            plant.system(),
            &DVector::zeros(n_f),
            &schedule,
            1e-3,
        )?);
    }

    let regression = assemble_control_regression(&controlled, &geometry)?;
    println!("usable regression samples: {}", regression.x.ncols());
    let (b_r, report) =
        fit_control_matrix(&regression.x, &regression.xdot, &regression.controls, &dynamics)?;
    println!(
        "residual before/after control term: {:.4e} -> {:.4e}",
        report.residual_before, report.residual_after
    );
    println!(
        "excitation condition number: {:.3e}",
        report.excitation_condition
    );

    let truth = plant.planted_control_matrix(&v);
    println!(
        "planted control-matrix recovery error: {:.3e} (relative Frobenius)",
        (&b_r - &truth).norm() / truth.norm()
    );
    println!("learned B_r:\n{b_r:.4}");
    Ok(())
}
