use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::boost::midpoint;
use super::tree::{Node, Tree};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Fraction(f64),
}

impl MaxFeatures {
    fn count(self, n: usize) -> usize {
        let k = match self {
            Self::All => n,
            Self::Sqrt => (n as f64).sqrt().round() as usize,
            Self::Fraction(f) => (n as f64 * f).round() as usize,
        };
        k.clamp(1, n.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

/// Gini CART trees on bootstrap samples; leaves store the positive fraction
/// and the forest averages them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub tree_seeds: Vec<u64>,
    pub params: ForestParams,
}

impl Forest {
    pub fn probability(&self, x: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return 0.5;
        }
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Mean vote shifted so that positive means class 1.
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.probability(x) - 0.5
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.margin(x) > 0.0)
    }
}

pub fn fit_forest(x: &[Vec<f64>], y: &[u8], n_trees: usize, max_depth: Option<usize>, seed: u64) -> Result<Forest> {
    fit_forest_with(
        x,
        y,
        &ForestParams {
            n_trees,
            max_depth,
            seed,
            ..ForestParams::default()
        },
    )
}

pub fn fit_forest_with(x: &[Vec<f64>], y: &[u8], params: &ForestParams) -> Result<Forest> {
    if x.is_empty() || x.len() != y.len() {
        return Err(invalid("need a non-empty sample matrix with one label per row"));
    }
    let mut master = ChaCha8Rng::seed_from_u64(params.seed);
    let tree_seeds: Vec<u64> = (0..params.n_trees).map(|_| master.gen()).collect();
    let trees = tree_seeds
        .iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let members: Vec<usize> = if params.bootstrap {
                (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect()
            } else {
                (0..x.len()).collect()
            };
            fit_gini_tree(x, y, members, params.max_depth, params.max_features, &mut rng)
        })
        .collect();
    Ok(Forest {
        trees,
        tree_seeds,
        params: params.clone(),
    })
}

fn gini(pos: f64, total: f64) -> f64 {
    if total == 0.0 {
        return 0.0;
    }
    let p = pos / total;
    2.0 * p * (1.0 - p)
}

/// Single classification tree; `members` may repeat indices (bootstrap).
pub(crate) fn fit_gini_tree(
    x: &[Vec<f64>],
    y: &[u8],
    members: Vec<usize>,
    max_depth: Option<usize>,
    max_features: MaxFeatures,
    rng: &mut impl Rng,
) -> Tree {
    let mut nodes = Vec::new();
    grow(x, y, members, 0, max_depth, max_features, rng, &mut nodes);
    Tree { nodes }
}

#[allow(clippy::too_many_arguments)]
fn grow(
    x: &[Vec<f64>],
    y: &[u8],
    mut members: Vec<usize>,
    depth: usize,
    max_depth: Option<usize>,
    max_features: MaxFeatures,
    rng: &mut impl Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    let n = members.len() as f64;
    let pos = members.iter().filter(|&&i| y[i] == 1).count() as f64;
    let leaf = Node::Leaf { value: if n > 0.0 { pos / n } else { 0.5 } };
    if pos == 0.0 || pos == n || members.len() < 2 || max_depth.is_some_and(|d| depth >= d) {
        nodes.push(leaf);
        return id;
    }
    let n_features = x[0].len();
    let candidates = sample(rng, n_features, max_features.count(n_features)).into_vec();
    let parent = gini(pos, n);
    let mut best: Option<(f64, usize, f64)> = None;
    for &f in &candidates {
        members.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let mut left_pos = 0.0;
        for w in 0..members.len() - 1 {
            let i = members[w];
            left_pos += f64::from(y[i]);
            let (a, b) = (x[i][f], x[members[w + 1]][f]);
            if a == b {
                continue;
            }
            let nl = (w + 1) as f64;
            let nr = n - nl;
            let child = (nl * gini(left_pos, nl) + nr * gini(pos - left_pos, nr)) / n;
            let improvement = parent - child;
            if improvement > best.map_or(1e-12, |b| b.0) {
                best = Some((improvement, f, midpoint(a, b)));
            }
        }
    }
    let Some((_, feature, threshold)) = best else {
        nodes.push(leaf);
        return id;
    };
    nodes.push(Node::Leaf { value: 0.0 });
    let (left, right): (Vec<usize>, Vec<usize>) = members.into_iter().partition(|&i| x[i][feature] <= threshold);
    let l = grow(x, y, left, depth + 1, max_depth, max_features, rng, nodes);
    let r = grow(x, y, right, depth + 1, max_depth, max_features, rng, nodes);
    nodes[id] = Node::Split {
        feature,
        threshold,
        left: l,
        right: r,
    };
    id
}
