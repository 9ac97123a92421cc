//! Feature spaces, per-feature cost matrices, and the additive cost function.
//!
//! A row is a vector of value indices, one per feature. The adversary pays
//! `C_i[j][k]` dollars to move feature `i` from value `j` to value `k`, and the
//! total price of a modification is the sum over features. Impossible
//! transitions are stored as `f64::INFINITY` so that discrete sums stay exact;
//! continuous solvers see them through [`CostMatrix::weight`], which caps them
//! at [`COST_CAP`].

mod binning;

pub use binning::{apply_bins, fit_bins, Binner};

use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::projections::BlockLayout;

/// Smallest nonzero price after clamping.
pub const COST_FLOOR: f64 = 0.1;
/// Largest finite price, also the stand-in weight for impossible transitions.
pub const COST_CAP: f64 = 10_000.0;
/// Marker for transitions the adversary cannot perform.
pub const IMPOSSIBLE: f64 = f64::INFINITY;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub values: Vec<String>,
}

impl FeatureSpec {
    pub fn new(name: impl Into<String>, values: Vec<String>) -> Result<Self> {
        let name = name.into();
        if values.len() < 2 {
            return Err(invalid(format!(
                "feature '{name}' needs at least two values, got {}",
                values.len()
            )));
        }
        let mut seen = HashSet::new();
        for v in &values {
            if !seen.insert(v.as_str()) {
                return Err(invalid(format!("feature '{name}' repeats value '{v}'")));
            }
        }
        Ok(Self { name, values })
    }

    /// A feature whose labels are just `prefix0, prefix1, ...`.
    pub fn indexed(name: impl Into<String>, cardinality: usize, prefix: &str) -> Result<Self> {
        Self::new(
            name,
            (0..cardinality).map(|k| format!("{prefix}{k}")).collect(),
        )
    }

    pub fn cardinality(&self) -> usize {
        self.values.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.values.iter().position(|v| v == label)
    }
}

/// Square matrix of transition prices for one feature, row = current value.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    /// Builds a matrix from rows where `None` marks an impossible transition.
    ///
    /// Nonzero finite prices are clamped into `[COST_FLOOR, COST_CAP]`; the
    /// diagonal must be zero.
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(invalid(format!(
                    "cost matrix row {j} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (k, e) in row.iter().enumerate() {
                let price = match *e {
                    None if j == k => {
                        return Err(invalid("diagonal cost entries cannot be impossible"))
                    }
                    None => IMPOSSIBLE,
                    Some(x) if x.is_nan() || x < 0.0 => {
                        return Err(invalid(format!("invalid cost {x} at ({j}, {k})")))
                    }
                    Some(x) if j == k && x != 0.0 => {
                        return Err(invalid(format!("diagonal cost at ({j}, {j}) must be 0, got {x}")))
                    }
                    Some(x) if x.is_infinite() => IMPOSSIBLE,
                    Some(x) => clamp_price(x),
                };
                entries.push(price);
            }
        }
        Ok(Self { n, entries })
    }

    /// Same price for every off-diagonal transition.
    pub fn uniform(n: usize, price: f64) -> Result<Self> {
        let rows: Vec<Vec<Option<f64>>> = (0..n)
            .map(|j| (0..n).map(|k| Some(if j == k { 0.0 } else { price })).collect())
            .collect();
        Self::from_rows(&rows)
    }

    /// Prices for a binned numeric feature: `per_unit * |mid_j - mid_k|`.
    pub fn from_per_unit(midpoints: &[f64], per_unit: f64) -> Result<Self> {
        if !(per_unit >= 0.0) || !per_unit.is_finite() {
            return Err(invalid(format!("per-unit cost must be finite and >= 0, got {per_unit}")));
        }
        let rows: Vec<Vec<Option<f64>>> = midpoints
            .iter()
            .enumerate()
            .map(|(j, a)| {
                midpoints
                    .iter()
                    .enumerate()
                    .map(|(k, b)| Some(if j == k { 0.0 } else { per_unit * (a - b).abs() }))
                    .collect()
            })
            .collect();
        Self::from_rows(&rows)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Exact price, `IMPOSSIBLE` for forbidden transitions.
    pub fn price(&self, from: usize, to: usize) -> f64 {
        self.entries[from * self.n + to]
    }

    /// Price with impossible transitions replaced by the cap.
    pub fn weight(&self, from: usize, to: usize) -> f64 {
        self.price(from, to).min(COST_CAP)
    }

    pub fn is_possible(&self, from: usize, to: usize) -> bool {
        self.price(from, to).is_finite()
    }

    pub fn to_rows(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.n)
            .map(|j| {
                (0..self.n)
                    .map(|k| {
                        let p = self.price(j, k);
                        p.is_finite().then_some(p)
                    })
                    .collect()
            })
            .collect()
    }
}

fn clamp_price(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.clamp(COST_FLOOR, COST_CAP)
    }
}

#[derive(Debug, Clone)]
pub struct CostModel {
    features: Arc<[FeatureSpec]>,
    matrices: Vec<CostMatrix>,
    target_class: u8,
    layout: BlockLayout,
}

impl CostModel {
    pub fn new(
        features: impl Into<Arc<[FeatureSpec]>>,
        matrices: Vec<CostMatrix>,
        target_class: u8,
    ) -> Result<Self> {
        let features = features.into();
        if features.len() != matrices.len() {
            return Err(invalid(format!(
                "{} features but {} cost matrices",
                features.len(),
                matrices.len()
            )));
        }
        for (f, c) in features.iter().zip(&matrices) {
            if f.cardinality() != c.dim() {
                return Err(invalid(format!(
                    "feature '{}' has {} values but a {}x{} cost matrix",
                    f.name,
                    f.cardinality(),
                    c.dim(),
                    c.dim()
                )));
            }
        }
        if target_class > 1 {
            return Err(invalid(format!("target class must be 0 or 1, got {target_class}")));
        }
        let cards: Vec<usize> = features.iter().map(FeatureSpec::cardinality).collect();
        Ok(Self {
            features,
            matrices,
            target_class,
            layout: BlockLayout::from_cardinalities(&cards),
        })
    }

    pub fn features(&self) -> &Arc<[FeatureSpec]> {
        &self.features
    }

    pub fn matrices(&self) -> &[CostMatrix] {
        &self.matrices
    }

    pub fn target_class(&self) -> u8 {
        self.target_class
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn check_row(&self, row: &[usize]) -> Result<()> {
        check_row(&self.features, row)
    }

    /// Per-coordinate prices of leaving the current value: block `i` holds
    /// row `row[i]` of `C_i`, with impossible transitions at the cap.
    pub fn cost_weights(&self, row: &[usize]) -> Result<Vec<f64>> {
        self.check_row(row)?;
        let mut w = Vec::with_capacity(self.layout.width());
        for (c, &j) in self.matrices.iter().zip(row) {
            w.extend((0..c.dim()).map(|k| c.weight(j, k)));
        }
        Ok(w)
    }

    /// Additive cost of turning `from` into `to`; `IMPOSSIBLE` if any feature
    /// change is forbidden.
    pub fn cost(&self, from: &[usize], to: &[usize]) -> Result<f64> {
        self.check_row(from)?;
        self.check_row(to)?;
        Ok(self
            .matrices
            .iter()
            .zip(from.iter().zip(to))
            .map(|(c, (&j, &k))| c.price(j, k))
            .sum())
    }

    pub fn one_hot(&self, row: &[usize]) -> Result<Vec<f64>> {
        one_hot(row, &self.features)
    }
}

fn check_row(specs: &[FeatureSpec], row: &[usize]) -> Result<()> {
    if row.len() != specs.len() {
        return Err(invalid(format!(
            "row has {} entries, expected {}",
            row.len(),
            specs.len()
        )));
    }
    for (i, (&v, f)) in row.iter().zip(specs).enumerate() {
        if v >= f.cardinality() {
            return Err(invalid(format!(
                "value index {v} out of range for feature {i} ('{}', {} values)",
                f.name,
                f.cardinality()
            )));
        }
    }
    Ok(())
}

/// Concatenated one-hot encoding of a row.
pub fn one_hot(row: &[usize], specs: &[FeatureSpec]) -> Result<Vec<f64>> {
    check_row(specs, row)?;
    let width: usize = specs.iter().map(FeatureSpec::cardinality).sum();
    let mut out = vec![0.0; width];
    let mut offset = 0;
    for (&v, f) in row.iter().zip(specs) {
        out[offset + v] = 1.0;
        offset += f.cardinality();
    }
    Ok(out)
}

/// Weighted l1 distance `sum_j w_j |xbar_j - xtilde_j|`.
pub fn relaxed_cost(xbar: &[f64], xtilde: &[f64], w: &[f64]) -> Result<f64> {
    if xbar.len() != xtilde.len() || xbar.len() != w.len() {
        return Err(invalid("relaxed_cost: vectors differ in length"));
    }
    Ok(xbar
        .iter()
        .zip(xtilde)
        .zip(w)
        .map(|((a, b), wj)| wj * (a - b).abs())
        .sum())
}

/// Categorical rows with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<Vec<usize>>,
    labels: Vec<u8>,
    features: Arc<[FeatureSpec]>,
}

impl Dataset {
    pub fn new(
        features: impl Into<Arc<[FeatureSpec]>>,
        rows: Vec<Vec<usize>>,
        labels: Vec<u8>,
    ) -> Result<Self> {
        let features = features.into();
        if rows.len() != labels.len() {
            return Err(invalid(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        for row in &rows {
            check_row(&features, row)?;
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(invalid(format!("labels must be 0 or 1, got {bad}")));
        }
        Ok(Self {
            rows,
            labels,
            features,
        })
    }

    pub fn features(&self) -> &Arc<[FeatureSpec]> {
        &self.features
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let pos = self.labels.iter().filter(|&&y| y == 1).count();
        [self.labels.len() - pos, pos]
    }

    pub fn layout(&self) -> BlockLayout {
        let cards: Vec<usize> = self.features.iter().map(FeatureSpec::cardinality).collect();
        BlockLayout::from_cardinalities(&cards)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            features: Arc::clone(&self.features),
        }
    }

    /// Shuffled split into `(first, second)` with `fraction` of rows in `first`.
    pub fn split(&self, fraction: f64, seed: u64) -> (Self, Self) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = ((self.len() as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
        let (a, b) = idx.split_at(cut);
        let (mut a, mut b) = (a.to_vec(), b.to_vec());
        a.sort_unstable();
        b.sort_unstable();
        (self.subset(&a), self.subset(&b))
    }
}

/// Random undersampling of the majority class down to the minority count.
/// Minority rows are all kept and the original row order is preserved.
pub fn balance_undersample(dataset: &Dataset, seed: u64) -> Result<Dataset> {
    let counts = dataset.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::InvalidInput(
            "cannot balance a dataset with a single class".into(),
        ));
    }
    let majority: u8 = if counts[1] > counts[0] { 1 } else { 0 };
    let keep = counts[0].min(counts[1]);
    let majority_idx: Vec<usize> = (0..dataset.len())
        .filter(|&i| dataset.labels[i] == majority)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: HashSet<usize> = majority_idx
        .choose_multiple(&mut rng, keep)
        .copied()
        .collect();
    let selected: Vec<usize> = (0..dataset.len())
        .filter(|&i| dataset.labels[i] != majority || chosen.contains(&i))
        .collect();
    Ok(dataset.subset(&selected))
}
