//! The ground-truth benchmark plant: a high-dimensional system whose slow
//! invariant manifold is known exactly. Demonstrates the invariance of the
//! manifold under rollouts and the exponential attraction of off-manifold
//! states.
//!
//! ```bash
//! cargo run --example benchmark_manifold
//! ```

use nalgebra::DVector;
use ssmr::plant::{build_benchmark_plant, step_rk4};

fn main() -> ssmr::Result<()> {
    let plant = build_benchmark_plant(2, 12, 7)?;
    println!(
        "reduced dim {}, full dim {}, fast time constant {:.3} s",
        plant.reduced_dim,
        plant.full_dim,
        plant.fast_time_constant()
    );

    // A trajectory started exactly on the manifold stays there.
    let u = DVector::zeros(plant.system().input_dim());
    let mut on = plant.lift_to_full(&DVector::from_column_slice(&[0.4, -0.25]));
    let mut worst: f64 = 0.0;
    for _ in 0..5000 {
        on = step_rk4(plant.system(), &on, &u, 1e-4)?;
        worst = worst.max(plant.transverse_residual(&on));
    }
    println!("on-manifold invariance residual over 0.5 s: {worst:.3e}");

    // An off-manifold start is attracted at the transverse rate.
    let mut off = plant.lift_to_full(&DVector::from_column_slice(&[0.3, 0.1]));
    let mut kick = DVector::zeros(plant.full_dim);
    for i in plant.reduced_dim..plant.full_dim {
        kick[i] = 0.04;
    }
    off += plant.composed().rotation() * kick;
    println!("\n  t (s)   |s - phi(x)|");
    for block in 0..8 {
        println!(
            "  {:.2}    {:.3e}",
            block as f64 * 0.1,
            plant.transverse_residual(&off)
        );
        for _ in 0..1000 {
            off = step_rk4(plant.system(), &off, &u, 1e-4)?;
        }
        let _ = block;
    }
    Ok(())
}
