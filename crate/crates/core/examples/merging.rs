//! Merge nearby embedding columns at several percentiles.
//!
//! cargo run --example merging

use catrobust::merging::{merge_embeddings, merge_embeddings_with, ThresholdMode};
use catrobust::net::EmbeddingSet;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> catrobust::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q = EmbeddingSet::random(&[6, 4, 9], 4, &mut rng);
    for p in [0.0, 0.05, 0.1, 0.15, 0.5] {
        let m = merge_embeddings(&q, p)?;
        println!(
            "p = {p:.2}: threshold {:.3}, {} clusters from 19 values, maps {:?}",
            m.thresholds[0],
            m.n_clusters(),
            m.cluster_maps
        );
    }
    let per = merge_embeddings_with(&q, 0.15, ThresholdMode::PerFeature)?;
    println!("per-feature thresholds at p = 0.15: {:.3?}", per.thresholds);
    Ok(())
}
