//! Training loops: clean SGD, cost-aware adversarial training, and bilevel
//! alternating minimization for robust first-layer embeddings.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack_pgd::{PgdConfig, PgdWorkspace};
use crate::cost_model::{CostModel, Dataset};
use crate::error::{invalid, Result};
use crate::net::{backward_into, EmbeddingNet, EmbeddingSet, GradMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Step size for the dense head.
    pub lr_theta: f64,
    /// Step size for the embedding tables.
    pub lr_q: f64,
    /// Consecutive head updates per outer bilevel iteration.
    pub theta_steps: usize,
    /// Consecutive embedding updates per outer bilevel iteration.
    pub q_steps: usize,
    pub pgd: PgdConfig,
    pub seed: u64,
    pub embedding_dim: usize,
    pub hidden: Vec<usize>,
    /// Bilevel only: update the head on adversarial instead of clean inputs.
    pub theta_adv: bool,
    /// Generate attacks on the rayon pool. Off means strictly serial.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            lr_theta: 0.05,
            lr_q: 0.05,
            theta_steps: 1,
            q_steps: 1,
            pgd: PgdConfig::default(),
            seed: 0,
            embedding_dim: 4,
            hidden: vec![32, 32],
            theta_adv: false,
            parallel: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.embedding_dim == 0 {
            return Err(invalid("epochs, batch_size and embedding_dim must be positive"));
        }
        if !(self.lr_theta > 0.0) || !(self.lr_q >= 0.0) {
            return Err(invalid("learning rates must be positive"));
        }
        if self.theta_steps + self.q_steps == 0 {
            return Err(invalid("theta_steps + q_steps must be positive"));
        }
        self.pgd.validate()
    }
}

/// Mean training loss per epoch, measured on the inputs actually used for the
/// updates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub net: EmbeddingNet,
    pub log: TrainLog,
}

fn init_net(dataset: &Dataset, cfg: &TrainConfig) -> (EmbeddingNet, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cards = dataset.layout().lengths().to_vec();
    let net = EmbeddingNet::init(&cards, cfg.embedding_dim, &cfg.hidden, &mut rng);
    (net, rng)
}

/// Shuffled minibatches, reshuffled on every pass. The last partial batch of
/// a pass is kept.
struct BatchStream {
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BatchStream {
    fn new(n: usize, batch_size: usize, rng: ChaCha8Rng) -> Self {
        Self {
            order: (0..n).collect(),
            batch_size,
            pos: n,
            rng,
        }
    }

    fn batches_per_epoch(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    fn next_batch(&mut self) -> Vec<usize> {
        if self.pos >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let b = self.order[self.pos..end].to_vec();
        self.pos = end;
        b
    }
}

/// Inputs for a batch: clean one-hot encodings, or Cat-PGD outputs.
fn batch_inputs(
    batch: &[usize],
    dataset: &Dataset,
    net: &EmbeddingNet,
    cost_model: Option<&CostModel>,
    pgd: &PgdConfig,
    parallel: bool,
) -> Vec<Vec<f64>> {
    let layout = dataset.layout();
    let encode = |i: usize, ws: Option<&mut PgdWorkspace>| -> Vec<f64> {
        let row = &dataset.rows()[i];
        let y = dataset.labels()[i];
        let xbar = crate::cost_model::one_hot(row, dataset.features()).expect("validated row");
        match (cost_model, ws) {
            (Some(cm), Some(ws)) if y == cm.target_class() => {
                let w = cm.cost_weights(row).expect("validated row");
                ws.run(&xbar, &w, y, net, &layout, pgd).xtilde_prime
            }
            _ => xbar,
        }
    };
    if cost_model.is_none() {
        return batch.iter().map(|&i| encode(i, None)).collect();
    }
    if parallel {
        batch
            .par_iter()
            .map_init(|| PgdWorkspace::new(net), |ws, &i| encode(i, Some(ws)))
            .collect()
    } else {
        let mut ws = PgdWorkspace::new(net);
        batch.iter().map(|&i| encode(i, Some(&mut ws))).collect()
    }
}

/// One averaged SGD step over `inputs` on the groups in `mask`. Returns the
/// mean loss before the update.
pub(crate) fn sgd_step(
    net: &mut EmbeddingNet,
    inputs: &[Vec<f64>],
    labels: &[u8],
    mask: GradMask,
    lr_theta: f64,
    lr_q: f64,
) -> f64 {
    let mut grads = net.grads_zero();
    let scale = 1.0 / inputs.len() as f64;
    let mut loss = 0.0;
    for (x, &y) in inputs.iter().zip(labels) {
        loss += backward_into(x, &net.embeddings, &net.params, y, mask, scale, &mut grads).loss;
    }
    if mask.theta {
        net.params.sgd_step(&grads.d_theta, lr_theta);
    }
    if mask.q {
        net.embeddings.sgd_step(&grads.d_q, lr_q);
    }
    loss * scale
}

fn check_inputs(dataset: &Dataset, cost_model: Option<&CostModel>, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(invalid("cannot train on an empty dataset"));
    }
    if let Some(cm) = cost_model {
        if cm.layout() != &dataset.layout() {
            return Err(invalid("cost model features do not match the dataset"));
        }
    }
    Ok(())
}

fn train_joint(dataset: &Dataset, cost_model: Option<&CostModel>, cfg: &TrainConfig) -> Result<Trained> {
    check_inputs(dataset, cost_model, cfg)?;
    let (mut net, rng) = init_net(dataset, cfg);
    let mut stream = BatchStream::new(dataset.len(), cfg.batch_size, rng);
    let mut log = TrainLog::default();
    for _ in 0..cfg.epochs {
        let mut total = 0.0;
        let n_batches = stream.batches_per_epoch();
        for _ in 0..n_batches {
            let batch = stream.next_batch();
            let inputs = batch_inputs(&batch, dataset, &net, cost_model, &cfg.pgd, cfg.parallel);
            let labels: Vec<u8> = batch.iter().map(|&i| dataset.labels()[i]).collect();
            total += sgd_step(&mut net, &inputs, &labels, GradMask::THETA_Q, cfg.lr_theta, cfg.lr_q);
        }
        log.epoch_loss.push(total / n_batches as f64);
    }
    Ok(Trained { net, log })
}

/// Minibatch SGD on the BCE loss of clean encodings, updating head and
/// embeddings together.
pub fn train_clean(dataset: &Dataset, cfg: &TrainConfig) -> Result<Trained> {
    train_joint(dataset, None, cfg)
}

/// Like [`train_clean`], but every minibatch is first replaced by its Cat-PGD
/// adversarial counterpart under the current parameters.
pub fn train_adversarial(dataset: &Dataset, cost_model: &CostModel, cfg: &TrainConfig) -> Result<Trained> {
    train_joint(dataset, Some(cost_model), cfg)
}

/// Bilevel alternating minimization. Each outer iteration runs `theta_steps`
/// head updates on clean batches with the embeddings fixed, then `q_steps`
/// embedding updates on Cat-PGD batches with the head fixed. The number of
/// outer iterations is chosen so that `epochs` passes over the data are
/// consumed in total.
pub fn train_bilevel(dataset: &Dataset, cost_model: &CostModel, cfg: &TrainConfig) -> Result<BilevelOutcome> {
    check_inputs(dataset, Some(cost_model), cfg)?;
    let (mut net, rng) = init_net(dataset, cfg);
    let mut stream = BatchStream::new(dataset.len(), cfg.batch_size, rng);
    let total_steps = cfg.epochs * stream.batches_per_epoch();
    let per_iter = cfg.theta_steps + cfg.q_steps;
    let n_iters = total_steps.div_ceil(per_iter);
    let mut log = TrainLog::default();
    let mut epoch_total = 0.0;
    let mut epoch_count = 0usize;
    let mut steps = 0usize;
    let batches_per_epoch = stream.batches_per_epoch();
    let mut record = |loss: f64, log: &mut TrainLog| {
        epoch_total += loss;
        epoch_count += 1;
        steps += 1;
        if steps % batches_per_epoch == 0 {
            log.epoch_loss.push(epoch_total / epoch_count as f64);
            epoch_total = 0.0;
            epoch_count = 0;
        }
    };
    for _ in 0..n_iters {
        for _ in 0..cfg.theta_steps {
            let batch = stream.next_batch();
            let cm = cfg.theta_adv.then_some(cost_model);
            let inputs = batch_inputs(&batch, dataset, &net, cm, &cfg.pgd, cfg.parallel);
            let labels: Vec<u8> = batch.iter().map(|&i| dataset.labels()[i]).collect();
            let loss = sgd_step(&mut net, &inputs, &labels, GradMask::THETA, cfg.lr_theta, cfg.lr_q);
            record(loss, &mut log);
        }
        for _ in 0..cfg.q_steps {
            let batch = stream.next_batch();
            let inputs = batch_inputs(&batch, dataset, &net, Some(cost_model), &cfg.pgd, cfg.parallel);
            let labels: Vec<u8> = batch.iter().map(|&i| dataset.labels()[i]).collect();
            let loss = sgd_step(&mut net, &inputs, &labels, GradMask::Q, cfg.lr_theta, cfg.lr_q);
            record(loss, &mut log);
        }
    }
    Ok(BilevelOutcome {
        embeddings: net.embeddings.clone(),
        net,
        log,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilevelOutcome {
    pub embeddings: EmbeddingSet,
    /// Final head and embeddings together, for diagnostics.
    pub net: EmbeddingNet,
    pub log: TrainLog,
}

/// Fraction of rows the network classifies correctly.
pub fn accuracy(net: &EmbeddingNet, dataset: &Dataset) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    let correct = dataset
        .rows()
        .iter()
        .zip(dataset.labels())
        .filter(|(r, &y)| {
            let logit = net.logit_row(r).expect("validated row");
            u8::from(logit > 0.0) == y
        })
        .count();
    correct as f64 / dataset.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost_model::{CostMatrix, FeatureSpec};

    fn toy() -> (Dataset, CostModel) {
        let specs: Vec<FeatureSpec> = (0..3)
            .map(|i| FeatureSpec::indexed(format!("f{i}"), 2, "v").unwrap())
            .collect();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    for _ in 0..4 {
                        rows.push(vec![a, b, c]);
                        labels.push(u8::from(a == 1 && b == 1));
                    }
                }
            }
        }
        let d = Dataset::new(specs.clone(), rows, labels).unwrap();
        let mats = (0..3).map(|_| CostMatrix::uniform(2, 1.0).unwrap()).collect();
        (d, CostModel::new(specs, mats, 1).unwrap())
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            epochs: 5,
            batch_size: 8,
            hidden: vec![8],
            parallel: false,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn theta_phase_leaves_embeddings_untouched() {
        let (d, _) = toy();
        let (mut net, _) = init_net(&d, &cfg());
        let before = net.embeddings.clone();
        let inputs: Vec<Vec<f64>> = d.rows().iter().map(|r| crate::cost_model::one_hot(r, d.features()).unwrap()).collect();
        sgd_step(&mut net, &inputs, d.labels(), GradMask::THETA, 0.1, 0.1);
        assert_eq!(net.embeddings, before);
    }

    #[test]
    fn q_phase_leaves_head_untouched() {
        let (d, _) = toy();
        let (mut net, _) = init_net(&d, &cfg());
        let before = net.params.clone();
        let inputs: Vec<Vec<f64>> = d.rows().iter().map(|r| crate::cost_model::one_hot(r, d.features()).unwrap()).collect();
        sgd_step(&mut net, &inputs, d.labels(), GradMask::Q, 0.1, 0.1);
        assert_eq!(net.params, before);
    }

    #[test]
    fn zero_q_steps_keeps_initial_embeddings() {
        let (d, cm) = toy();
        let c = TrainConfig { q_steps: 0, theta_steps: 1, ..cfg() };
        let (init, _) = init_net(&d, &c);
        let out = train_bilevel(&d, &cm, &c).unwrap();
        assert_eq!(out.embeddings, init.embeddings);
    }

    #[test]
    fn zero_budget_adversarial_equals_clean() {
        let (d, cm) = toy();
        let c = TrainConfig { pgd: PgdConfig::with_eps(0.0), ..cfg() };
        let a = train_adversarial(&d, &cm, &c).unwrap();
        let b = train_clean(&d, &c).unwrap();
        assert_eq!(a.net, b.net);
    }

    #[test]
    fn parallel_and_serial_attacks_agree() {
        let (d, cm) = toy();
        let c = TrainConfig { pgd: PgdConfig::with_eps(1.0), epochs: 2, ..cfg() };
        let serial = train_adversarial(&d, &cm, &c).unwrap();
        let par = train_adversarial(&d, &cm, &TrainConfig { parallel: true, ..c }).unwrap();
        assert_eq!(serial.net, par.net);
    }

    #[test]
    fn rejects_bad_config() {
        let (d, _) = toy();
        assert!(train_clean(&d, &TrainConfig { epochs: 0, ..cfg() }).is_err());
    }
}
