//! Price a few edits under a hand-written cost model.
//!
//! cargo run --example cost_model

use catrobust::cost_model::{fit_bins, relaxed_cost, CostMatrix, CostModel, FeatureSpec};

fn main() -> catrobust::Result<()> {
    let card = FeatureSpec::new("card", vec!["visa".into(), "amex".into(), "mc".into()])?;
    // amex -> visa is impossible.
    let card_costs = CostMatrix::from_rows(&[
        vec![Some(0.0), Some(5.0), Some(3.0)],
        vec![None, Some(0.0), Some(2.0)],
        vec![Some(1.0), Some(1.0), Some(0.0)],
    ])?;

    let amounts = [12.0, 40.0, 75.0, 18.0, 99.0, 55.0, 31.0, 64.0];
    let bins = fit_bins(&amounts, 4)?;
    let amount = FeatureSpec::indexed("amount", bins.n_bins(), "bin")?;
    println!("amount bin midpoints: {:?}", bins.midpoints());
    let amount_costs = CostMatrix::from_per_unit(&bins.midpoints(), 0.1)?;

    let cm = CostModel::new(vec![card, amount], vec![card_costs, amount_costs], 1)?;
    let x = [1, bins.bin_of(40.0)];
    for target in [[2, x[1]], [0, x[1]], [2, 3]] {
        println!("{x:?} -> {target:?}: ${}", cm.cost(&x, &target)?);
    }

    // Half the card mass moved to "mc" costs half the price.
    let xbar = cm.one_hot(&x)?;
    let mut moved = xbar.clone();
    moved[1] = 0.5;
    moved[2] = 0.5;
    let w = cm.cost_weights(&x)?;
    println!("relaxed cost of a half move: ${}", relaxed_cost(&xbar, &moved, &w)?);
    Ok(())
}
