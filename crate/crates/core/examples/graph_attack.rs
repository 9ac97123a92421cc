//! Discrete attacks on a boosted-stump model: exact search against the beam,
//! and a robust-accuracy curve.
//!
//! cargo run --release --example graph_attack

use catrobust::attack_graph::{graph_attack, robust_accuracy_curve, SearchMode, TreeScorer};
use catrobust::bench::{gen_synthetic, train_test_split, SyntheticSpec, EPS_GRID};
use catrobust::trees::{train_tree_classifier, RowEncoder, TreeLearner};

fn main() -> catrobust::Result<()> {
    let s = gen_synthetic(&SyntheticSpec { n_samples: 2000, ..SyntheticSpec::default() }, 1)?;
    let (train, test) = train_test_split(&s.data.dataset, 1, 0.2)?;
    let cm = &s.data.cost_model;
    let clf = train_tree_classifier(&train, RowEncoder::one_hot(train.features()), &TreeLearner::default_gbs())?;
    let scorer = TreeScorer(&clf);

    let (row, y) = test
        .rows()
        .iter()
        .zip(test.labels())
        .find(|(_, &y)| y == cm.target_class())
        .expect("test split has target-class rows");
    for mode in [SearchMode::Exact, SearchMode::default()] {
        let r = graph_attack(row, *y, &scorer, cm, 5.0, mode)?;
        println!("{mode:?}: success {} cost {:.2} after {} evaluations", r.success, r.cost, r.evaluations);
    }

    let curve = robust_accuracy_curve(&test, &scorer, cm, &EPS_GRID, SearchMode::default(), true)?;
    for (eps, acc) in EPS_GRID.iter().zip(curve) {
        println!("eps {eps:>5}: robust accuracy {acc:.3}");
    }
    Ok(())
}
