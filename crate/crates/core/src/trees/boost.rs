use serde::{Deserialize, Serialize};

use super::tree::{Columns, Node, Tree};
use crate::error::{invalid, Result};
use crate::net::{bce_with_logit, sigmoid};

/// L2 term in the Newton leaf value `-G / (H + lambda)`.
pub const NEWTON_LAMBDA: f64 = 1e-6;

/// Logistic gradient boosting: `margin = base + lr * sum(tree outputs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub base_score: f64,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub trees: Vec<Tree>,
}

impl BoostedEnsemble {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.margin(x) > 0.0)
    }
}

fn check_xy(x: &[Vec<f64>], y: &[u8]) -> Result<()> {
    if x.is_empty() || x.len() != y.len() {
        return Err(invalid(format!(
            "need a non-empty sample matrix with one label per row ({} rows, {} labels)",
            x.len(),
            y.len()
        )));
    }
    let width = x[0].len();
    if x.iter().any(|r| r.len() != width) {
        return Err(invalid("sample rows differ in length"));
    }
    Ok(())
}

/// Gradient-boosted stumps.
pub fn fit_gbs(x: &[Vec<f64>], y: &[u8], n_estimators: usize, lr: f64) -> Result<BoostedEnsemble> {
    fit_boosted_trees(x, y, 1, n_estimators, lr)
}

pub fn fit_boosted_trees(
    x: &[Vec<f64>],
    y: &[u8],
    depth: usize,
    n_estimators: usize,
    lr: f64,
) -> Result<BoostedEnsemble> {
    fit_boosted_trees_traced(x, y, depth, n_estimators, lr).map(|(e, _)| e)
}

/// Also returns the mean training log-loss before the first round and after
/// every round.
pub fn fit_boosted_trees_traced(
    x: &[Vec<f64>],
    y: &[u8],
    depth: usize,
    n_estimators: usize,
    lr: f64,
) -> Result<(BoostedEnsemble, Vec<f64>)> {
    check_xy(x, y)?;
    if depth == 0 {
        return Err(invalid("tree depth must be at least 1"));
    }
    if !(lr > 0.0) {
        return Err(invalid(format!("learning rate must be positive, got {lr}")));
    }
    let n = x.len();
    let pos = y.iter().filter(|&&v| v == 1).count() as f64 / n as f64;
    let pos = pos.clamp(1e-6, 1.0 - 1e-6);
    let base_score = (pos / (1.0 - pos)).ln();
    let cols = Columns::new(x);
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let mut margin = vec![base_score; n];
    let mean_loss = |m: &[f64]| m.iter().zip(&yf).map(|(&z, &t)| bce_with_logit(z, t)).sum::<f64>() / n as f64;
    let mut losses = vec![mean_loss(&margin)];
    let mut trees = Vec::with_capacity(n_estimators);
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    for _ in 0..n_estimators {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            g[i] = p - yf[i];
            h[i] = p * (1.0 - p);
        }
        let tree = fit_newton_tree(&cols, &g, &h, depth);
        for (i, m) in margin.iter_mut().enumerate() {
            *m += lr * tree.predict(&x[i]);
        }
        trees.push(tree);
        losses.push(mean_loss(&margin));
    }
    Ok((
        BoostedEnsemble {
            base_score,
            learning_rate: lr,
            max_depth: depth,
            trees,
        },
        losses,
    ))
}

/// Regression tree on second-order gradient statistics with exact split
/// search over sorted unique values.
pub(crate) fn fit_newton_tree(cols: &Columns, g: &[f64], h: &[f64], depth: usize) -> Tree {
    let mut nodes = Vec::new();
    build(cols, g, h, cols.sorted.clone(), depth, &mut nodes);
    Tree { nodes }
}

fn score(gs: f64, hs: f64) -> f64 {
    gs * gs / (hs + NEWTON_LAMBDA)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Best Newton-gain split over the presorted member lists of one node.
pub(crate) fn best_split(cols: &Columns, g: &[f64], h: &[f64], members: &[Vec<usize>]) -> Option<SplitChoice> {
    let order0 = members.first()?;
    let (gt, ht): (f64, f64) = order0.iter().fold((0.0, 0.0), |(a, b), &i| (a + g[i], b + h[i]));
    let parent = score(gt, ht);
    let mut best: Option<SplitChoice> = None;
    for (f, order) in members.iter().enumerate() {
        let col = &cols.cols[f];
        let (mut gl, mut hl) = (0.0, 0.0);
        for w in 0..order.len().saturating_sub(1) {
            let i = order[w];
            gl += g[i];
            hl += h[i];
            let (a, b) = (col[i], col[order[w + 1]]);
            if a == b {
                continue;
            }
            let gain = score(gl, hl) + score(gt - gl, ht - hl) - parent;
            if gain > best.map_or(1e-12, |s| s.gain) {
                best = Some(SplitChoice {
                    feature: f,
                    threshold: midpoint(a, b),
                    gain,
                });
            }
        }
    }
    best
}

/// A threshold strictly separating `a < b`.
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + 0.5 * (b - a);
    if m < b {
        m
    } else {
        a
    }
}

fn build(cols: &Columns, g: &[f64], h: &[f64], members: Vec<Vec<usize>>, depth: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    let leaf_value = || {
        let (gs, hs) = members[0].iter().fold((0.0, 0.0), |(a, b), &i| (a + g[i], b + h[i]));
        -gs / (hs + NEWTON_LAMBDA)
    };
    let split = if depth == 0 || members.first().map_or(0, Vec::len) < 2 {
        None
    } else {
        best_split(cols, g, h, &members)
    };
    let Some(split) = split else {
        nodes.push(Node::Leaf { value: leaf_value() });
        return id;
    };
    nodes.push(Node::Leaf { value: 0.0 });
    let col = &cols.cols[split.feature];
    let (left, right): (Vec<Vec<usize>>, Vec<Vec<usize>>) = members
        .into_iter()
        .map(|order| order.into_iter().partition(|&i| col[i] <= split.threshold))
        .unzip();
    let l = build(cols, g, h, left, depth - 1, nodes);
    let r = build(cols, g, h, right, depth - 1, nodes);
    nodes[id] = Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: l,
        right: r,
    };
    id
}
