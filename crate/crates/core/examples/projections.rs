//! The projection kernels behind the relaxed attack.
//!
//! cargo run --example projections

use catrobust::projections::{
    constraint_violation, dykstra_project_traced, project_feasible_from_vertex, project_simplex,
    project_weighted_l1, BlockLayout,
};

fn main() -> catrobust::Result<()> {
    println!("simplex: {:?}", project_simplex(&[0.6, 0.6, -0.2]));
    println!(
        "weighted l1 (eps 1): {:?}",
        project_weighted_l1(&[0.8, -0.5, 0.3], &[1.0, 2.0, 0.0], 1.0)?
    );

    // Two features with 2 and 3 values; the clean row is (0, 1).
    let layout = BlockLayout::from_cardinalities(&[2, 3]);
    let x = [1.0, 0.0, 0.0, 1.0, 0.0];
    let w = [0.0, 2.0, 1.0, 0.0, 3.0];
    let delta = [-0.3, 0.9, 0.8, -0.5, 0.4];
    let eps = 1.0;

    let (dykstra, trace) = dykstra_project_traced(&x, &delta, &w, eps, &layout, 20)?;
    for (k, v) in trace.iter().enumerate().step_by(4) {
        println!("dykstra iteration {k:>2}: violation {v:.2e}");
    }
    let exact = project_feasible_from_vertex(&x, &delta, &w, eps, &layout)?;
    println!("dykstra: {dykstra:.4?}");
    println!("exact:   {exact:.4?}");
    println!(
        "final violations: dykstra {:.2e}, exact {:.2e}",
        constraint_violation(&x, &dykstra, &w, eps, &layout),
        constraint_violation(&x, &exact, &w, eps, &layout)
    );
    Ok(())
}
