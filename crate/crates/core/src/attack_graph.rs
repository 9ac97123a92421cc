//! Discrete cost-bounded evaluation attack.
//!
//! Nodes of the search graph are rows; an edge changes one feature that still
//! holds its original value to another value, at the price given by that
//! feature's cost matrix. Every row within budget is reachable by changing its
//! differing features in increasing feature order, and every prefix of that
//! path is cheaper than the row itself, so expanding only features past the
//! last changed one visits each row exactly once. The accumulated path cost
//! is then the additive cost of the row, summed in the same order as
//! [`CostModel::cost`]. Nodes are popped cheapest first and the first
//! misclassified row is returned, which makes the exact mode optimal.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost_model::{CostModel, Dataset};
use crate::error::{invalid, Result};
use crate::net::EmbeddingNet;
use crate::trees::TreeClassifier;

/// Anything that can classify a categorical row. Positive score means class 1.
pub trait Scorer: Sync {
    fn score(&self, row: &[usize]) -> f64;

    fn predict(&self, row: &[usize]) -> u8 {
        u8::from(self.score(row) > 0.0)
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn score(&self, row: &[usize]) -> f64 {
        (**self).score(row)
    }
}

/// The network's logit on the one-hot encoding.
pub struct NetScorer<'a>(pub &'a EmbeddingNet);

impl Scorer for NetScorer<'_> {
    fn score(&self, row: &[usize]) -> f64 {
        self.0.logit_row(row).expect("row validated against the cost model")
    }
}

/// A tree classifier, with whatever encoder it was trained on (one-hot,
/// embeddings, or merged embeddings).
pub struct TreeScorer<'a>(pub &'a TreeClassifier);

impl Scorer for TreeScorer<'_> {
    fn score(&self, row: &[usize]) -> f64 {
        self.0.margin_row(row).expect("row validated against the cost model")
    }
}

/// Any closure over rows.
pub struct FnScorer<F>(pub F);

impl<F: Fn(&[usize]) -> f64 + Sync> Scorer for FnScorer<F> {
    fn score(&self, row: &[usize]) -> f64 {
        (self.0)(row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Cheapest-first over every row within budget. Finds a misclassified row
    /// whenever one exists, and the cheapest such row.
    Exact,
    /// Best-first on the model's margin toward the true label, keeping at
    /// most `width` frontier nodes and expanding at most `max_expansions`.
    /// Any row it reports is within budget, but it may miss attacks.
    Beam { width: usize, max_expansions: usize },
}

pub const DEFAULT_BEAM_WIDTH: usize = 1000;
pub const DEFAULT_BEAM_EXPANSIONS: usize = 100;

impl SearchMode {
    pub fn beam(width: usize) -> Self {
        Self::Beam {
            width,
            max_expansions: DEFAULT_BEAM_EXPANSIONS,
        }
    }
}

impl Default for SearchMode {
    fn default() -> Self {
        Self::beam(DEFAULT_BEAM_WIDTH)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    /// The adversarial row on success, otherwise the original row.
    pub row: Vec<usize>,
    pub cost: f64,
    pub success: bool,
    /// False when the row is outside the adversary's target class.
    pub attacked: bool,
    /// Rows scored during the search.
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Key {
    primary: f64,
    cost: f64,
    seq: u64,
}

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.primary
            .total_cmp(&other.primary)
            .then(self.cost.total_cmp(&other.cost))
            .then(self.seq.cmp(&other.seq))
    }
}

/// A frontier entry: the row and the first feature it may still change.
struct SearchNode {
    row: Vec<usize>,
    next_feature: usize,
}

pub fn graph_attack(
    row: &[usize],
    y: u8,
    scorer: &impl Scorer,
    cost_model: &CostModel,
    eps: f64,
    mode: SearchMode,
) -> Result<AttackResult> {
    cost_model.check_row(row)?;
    if !(eps >= 0.0) {
        return Err(invalid(format!("cost bound must be nonnegative, got {eps}")));
    }
    if let SearchMode::Beam { width, max_expansions } = mode {
        if width == 0 || max_expansions == 0 {
            return Err(invalid("beam width and expansion budget must be positive"));
        }
    }
    let unattacked = |evaluations| AttackResult {
        row: row.to_vec(),
        cost: 0.0,
        success: false,
        attacked: y == cost_model.target_class(),
        evaluations,
    };
    if y != cost_model.target_class() {
        return Ok(unattacked(0));
    }
    let mut search = Search {
        origin: row,
        cost_model,
        eps,
        frontier: BTreeMap::new(),
        seq: 0,
    };
    match mode {
        SearchMode::Exact => Ok(search.cheapest_first(y, scorer).unwrap_or_else(|n| unattacked(n))),
        SearchMode::Beam { width, max_expansions } => Ok(search
            .best_first(y, scorer, width, max_expansions)
            .unwrap_or_else(|n| unattacked(n))),
    }
}

struct Search<'a> {
    origin: &'a [usize],
    cost_model: &'a CostModel,
    eps: f64,
    frontier: BTreeMap<Key, SearchNode>,
    seq: u64,
}

impl Search<'_> {
    /// Rows one change past `node`, with their cost, in a fixed order.
    fn children<'n>(&'n self, node: &'n SearchNode, cost: f64) -> impl Iterator<Item = (Vec<usize>, usize, f64)> + 'n {
        let matrices = self.cost_model.matrices();
        (node.next_feature..self.origin.len()).flat_map(move |i| {
            let from = self.origin[i];
            (0..matrices[i].dim()).filter_map(move |to| {
                let price = matrices[i].price(from, to);
                // Impossible edges have infinite price and fail the bound.
                let total = cost + price;
                if to == from || total > self.eps {
                    return None;
                }
                let mut next = node.row.clone();
                next[i] = to;
                Some((next, i + 1, total))
            })
        })
    }

    fn push(&mut self, primary: f64, cost: f64, row: Vec<usize>, next_feature: usize) {
        self.seq += 1;
        self.frontier.insert(
            Key {
                primary,
                cost,
                seq: self.seq,
            },
            SearchNode { row, next_feature },
        );
    }

    /// Uniform-cost search; `Err` carries the evaluation count on failure.
    fn cheapest_first(&mut self, y: u8, scorer: &impl Scorer) -> std::result::Result<AttackResult, usize> {
        self.push(0.0, 0.0, self.origin.to_vec(), 0);
        let mut evaluations = 0;
        while let Some((key, node)) = self.frontier.pop_first() {
            evaluations += 1;
            if scorer.predict(&node.row) != y {
                return Ok(AttackResult {
                    row: node.row,
                    cost: key.cost,
                    success: true,
                    attacked: true,
                    evaluations,
                });
            }
            let kids: Vec<_> = self.children(&node, key.cost).collect();
            for (row, next, cost) in kids {
                self.push(cost, cost, row, next);
            }
        }
        Err(evaluations)
    }

    fn best_first(
        &mut self,
        y: u8,
        scorer: &impl Scorer,
        width: usize,
        max_expansions: usize,
    ) -> std::result::Result<AttackResult, usize> {
        // Margin toward the true label: nonpositive means misclassified.
        let margin = |r: &[usize]| {
            let s = scorer.score(r);
            if scorer.predict(r) != y {
                f64::NEG_INFINITY
            } else if y == 1 {
                s
            } else {
                -s
            }
        };
        let mut evaluations = 1;
        let m0 = margin(self.origin);
        if m0 == f64::NEG_INFINITY {
            return Ok(AttackResult {
                row: self.origin.to_vec(),
                cost: 0.0,
                success: true,
                attacked: true,
                evaluations,
            });
        }
        self.push(m0, 0.0, self.origin.to_vec(), 0);
        for _ in 0..max_expansions {
            let Some((key, node)) = self.frontier.pop_first() else {
                break;
            };
            let kids: Vec<_> = self.children(&node, key.cost).collect();
            let mut best: Option<(f64, Vec<usize>)> = None;
            for (row, next, cost) in kids {
                evaluations += 1;
                let m = margin(&row);
                if m == f64::NEG_INFINITY {
                    if best.as_ref().map_or(true, |b| cost < b.0) {
                        best = Some((cost, row));
                    }
                    continue;
                }
                self.push(m, cost, row, next);
            }
            if let Some((cost, row)) = best {
                return Ok(AttackResult {
                    row,
                    cost,
                    success: true,
                    attacked: true,
                    evaluations,
                });
            }
            while self.frontier.len() > width {
                self.frontier.pop_last();
            }
        }
        Err(evaluations)
    }
}

/// Per-example attack outcomes for a dataset.
pub fn attack_dataset(
    dataset: &Dataset,
    scorer: &impl Scorer,
    cost_model: &CostModel,
    eps: f64,
    mode: SearchMode,
    parallel: bool,
) -> Result<Vec<AttackResult>> {
    let run = |(r, &y): (&Vec<usize>, &u8)| graph_attack(r, y, scorer, cost_model, eps, mode);
    if parallel {
        dataset.rows().par_iter().zip(dataset.labels().par_iter()).map(run).collect()
    } else {
        dataset.rows().iter().zip(dataset.labels()).map(run).collect()
    }
}

/// Fraction of rows still classified correctly after the attack. Rows outside
/// the target class are evaluated clean.
pub fn robust_accuracy(
    dataset: &Dataset,
    scorer: &impl Scorer,
    cost_model: &CostModel,
    eps: f64,
    mode: SearchMode,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(invalid("robust accuracy of an empty dataset"));
    }
    let results = attack_dataset(dataset, scorer, cost_model, eps, mode, true)?;
    let correct = results
        .iter()
        .zip(dataset.rows().iter().zip(dataset.labels()))
        .filter(|(res, (row, &y))| {
            if res.attacked {
                !res.success
            } else {
                scorer.predict(row) == y
            }
        })
        .count();
    Ok(correct as f64 / dataset.len() as f64)
}

/// Robust accuracy at every budget of an ascending grid. A row broken at some
/// budget counts as broken at all larger ones, since the same modification
/// stays within budget; only unbroken rows are searched again.
pub fn robust_accuracy_curve(
    dataset: &Dataset,
    scorer: &impl Scorer,
    cost_model: &CostModel,
    eps_grid: &[f64],
    mode: SearchMode,
    parallel: bool,
) -> Result<Vec<f64>> {
    if dataset.is_empty() {
        return Err(invalid("robust accuracy of an empty dataset"));
    }
    if eps_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(invalid("eps grid must be ascending"));
    }
    let per_row = |(row, &y): (&Vec<usize>, &u8)| -> Result<Vec<bool>> {
        let mut correct = Vec::with_capacity(eps_grid.len());
        let mut broken = false;
        for &eps in eps_grid {
            if !broken {
                let res = graph_attack(row, y, scorer, cost_model, eps, mode)?;
                broken = if res.attacked { res.success } else { scorer.predict(row) != y };
            }
            correct.push(!broken);
        }
        Ok(correct)
    };
    let rows = dataset.rows().iter().zip(dataset.labels());
    let outcomes: Vec<Vec<bool>> = if parallel {
        dataset
            .rows()
            .par_iter()
            .zip(dataset.labels().par_iter())
            .map(per_row)
            .collect::<Result<_>>()?
    } else {
        rows.map(per_row).collect::<Result<_>>()?
    };
    let n = dataset.len() as f64;
    Ok((0..eps_grid.len())
        .map(|k| outcomes.iter().filter(|o| o[k]).count() as f64 / n)
        .collect())
}

/// Plain accuracy of a scorer.
pub fn clean_accuracy(dataset: &Dataset, scorer: &impl Scorer) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    let correct = dataset
        .rows()
        .par_iter()
        .zip(dataset.labels().par_iter())
        .filter(|(r, &y)| scorer.predict(r) == y)
        .count();
    correct as f64 / dataset.len() as f64
}
