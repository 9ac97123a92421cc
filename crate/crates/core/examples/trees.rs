//! Fit the three tree learners on one-hot rows and on random embeddings.
//!
//! cargo run --release --example trees

use catrobust::bench::{gen_synthetic, train_test_split, SyntheticSpec};
use catrobust::net::EmbeddingSet;
use catrobust::trees::{train_tree_classifier, RowEncoder, TreeLearner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> catrobust::Result<()> {
    let s = gen_synthetic(&SyntheticSpec { n_samples: 2000, ..SyntheticSpec::default() }, 1)?;
    let (train, test) = train_test_split(&s.data.dataset, 1, 0.2)?;
    let cards = train.layout().lengths().to_vec();
    let random = EmbeddingSet::random(&cards, 4, &mut ChaCha8Rng::seed_from_u64(9));

    let learners = [
        TreeLearner::default_gbs(),
        TreeLearner::Gbt { depth: 3, n_estimators: 50, lr: 0.1 },
        TreeLearner::default_rf(9),
    ];
    for learner in &learners {
        for (tag, enc) in [
            ("onehot", RowEncoder::one_hot(train.features())),
            ("random", RowEncoder::embedded(random.clone())),
        ] {
            let clf = train_tree_classifier(&train, enc, learner)?;
            println!("{}_{tag:<7} test accuracy {:.3}", learner.name(), clf.accuracy(&test)?);
        }
    }
    Ok(())
}
