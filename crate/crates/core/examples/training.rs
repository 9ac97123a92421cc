//! Clean, adversarial and bilevel training on the synthetic benchmark.
//!
//! cargo run --release --example training

use catrobust::attack_graph::{robust_accuracy, NetScorer, SearchMode};
use catrobust::bench::{gen_synthetic, train_test_split, SyntheticSpec};
use catrobust::training::{accuracy, train_adversarial, train_bilevel, train_clean, TrainConfig};

fn main() -> catrobust::Result<()> {
    let s = gen_synthetic(&SyntheticSpec { n_samples: 2000, ..SyntheticSpec::default() }, 1)?;
    let (train, test) = train_test_split(&s.data.dataset, 1, 0.2)?;
    let cm = &s.data.cost_model;
    let mut cfg = TrainConfig { epochs: 8, lr_theta: 0.2, lr_q: 0.2, ..TrainConfig::default() };
    cfg.pgd.eps = 5.0;
    cfg.pgd.alpha = Some(5.0);

    let clean = train_clean(&train, &cfg)?.net;
    let adv = train_adversarial(&train, cm, &cfg)?.net;
    let bilevel = train_bilevel(&train, cm, &TrainConfig { lr_q: 0.5, q_steps: 2, ..cfg.clone() })?;

    for (name, net) in [("clean", &clean), ("adversarial", &adv), ("bilevel", &bilevel.net)] {
        let robust = robust_accuracy(&test, &NetScorer(net), cm, 5.0, SearchMode::default())?;
        println!("{name:<12} clean {:.3}  robust@5 {robust:.3}", accuracy(net, &test));
    }
    println!("bilevel loss by epoch: {:.3?}", bilevel.log.epoch_loss);
    Ok(())
}
