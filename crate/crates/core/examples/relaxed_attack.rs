//! Relaxed attack on a clean-trained network, across budgets.
//!
//! cargo run --release --example relaxed_attack

use catrobust::attack_pgd::{attack_batch, PgdConfig};
use catrobust::bench::{gen_synthetic, train_test_split, SyntheticSpec};
use catrobust::training::{train_clean, TrainConfig};

fn main() -> catrobust::Result<()> {
    let s = gen_synthetic(&SyntheticSpec { n_samples: 2000, ..SyntheticSpec::default() }, 1)?;
    let (train, test) = train_test_split(&s.data.dataset, 1, 0.2)?;
    let cm = &s.data.cost_model;
    let net = train_clean(&train, &TrainConfig { epochs: 10, lr_theta: 0.2, lr_q: 0.2, ..TrainConfig::default() })?.net;

    for eps in [0.0, 1.0, 5.0, 20.0] {
        let cfg = PgdConfig { alpha: Some(5.0), ..PgdConfig::with_eps(eps) };
        let out = attack_batch(&test, &net, cm, &cfg, true)?;
        let attacked: Vec<_> = out.iter().filter(|r| r.attacked).collect();
        let n = attacked.len() as f64;
        let before = attacked.iter().map(|r| r.loss_before).sum::<f64>() / n;
        let after = attacked.iter().map(|r| r.loss_after).sum::<f64>() / n;
        let spent = attacked.iter().map(|r| r.spent_cost).sum::<f64>() / n;
        println!("eps {eps:>4}: mean loss {before:.3} -> {after:.3}, mean spend ${spent:.2} over {} rows", attacked.len());
    }
    Ok(())
}
