//! Seeded synthetic benchmark with cheap and expensive features.
//!
//! The world (cost matrices, hidden per-value utilities) is drawn from
//! `label_seed`; the sampled rows come from the run seed, so several seeds
//! share one cost configuration. Labels threshold the summed utility plus
//! Gaussian noise at its median. A few categorical features are cheap to
//! change yet informative, so an unprotected model can be flipped for a few
//! dollars.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{load_csv, CostConfig, FeatureConfig, LoadedData};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_categorical: usize,
    pub min_cardinality: usize,
    pub max_cardinality: usize,
    pub n_numeric: usize,
    pub n_bins: usize,
    /// Seed for cost matrices and the labelling rule.
    pub label_seed: u64,
    /// Number of categorical features whose changes are cheap.
    pub n_cheap: usize,
    /// Utility scale of cheap features relative to the others.
    pub cheap_weight: f64,
    pub cheap_prices: [f64; 2],
    pub expensive_prices: [f64; 2],
    /// Fraction of off-diagonal categorical transitions that are impossible.
    pub impossible_fraction: f64,
    /// Standard deviation of the label noise; each feature's utility has unit variance.
    pub label_noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            n_categorical: 8,
            min_cardinality: 3,
            max_cardinality: 10,
            n_numeric: 4,
            n_bins: 10,
            label_seed: 7,
            n_cheap: 2,
            cheap_weight: 1.0,
            cheap_prices: [0.1, 2.0],
            expensive_prices: [10.0, 50.0],
            impossible_fraction: 0.1,
            label_noise: 1.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let price_ok = |[lo, hi]: [f64; 2]| lo > 0.0 && lo <= hi && hi.is_finite();
        if self.n_samples < 2
            || self.n_categorical + self.n_numeric == 0
            || self.min_cardinality < 2
            || self.max_cardinality < self.min_cardinality
            || self.n_bins < 2
        {
            return Err(invalid("synthetic spec needs positive counts and cardinalities of at least 2"));
        }
        if self.n_cheap > self.n_categorical {
            return Err(invalid("more cheap features than categorical features"));
        }
        if !(0.0..1.0).contains(&self.impossible_fraction) || !(self.cheap_weight >= 0.0) {
            return Err(invalid("impossible fraction must lie in [0, 1) and cheap weight be nonnegative"));
        }
        if !price_ok(self.cheap_prices) || !price_ok(self.expensive_prices) {
            return Err(invalid("synthetic price ranges must be positive and ordered"));
        }
        if !(self.label_noise >= 0.0) {
            return Err(invalid("label noise must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub data: LoadedData,
    pub config: CostConfig,
    /// The table as written to disk, header included.
    pub csv: String,
    /// Whether each feature was drawn with cheap prices.
    pub cheap: Vec<bool>,
}

enum Utility {
    Table(Vec<f64>),
    /// Standardized linear response on `[0, 100)`.
    Slope(f64),
}

pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Synthetic> {
    spec.validate()?;
    let mut world = ChaCha8Rng::seed_from_u64(spec.label_seed);
    let n_features = spec.n_categorical + spec.n_numeric;
    let mut cheap = vec![false; n_features];
    cheap[..spec.n_cheap].iter_mut().for_each(|c| *c = true);
    cheap[..spec.n_categorical].shuffle(&mut world);
    let mut features = Vec::with_capacity(n_features);
    let mut utilities = Vec::with_capacity(n_features);
    for (f, &is_cheap) in cheap.iter().enumerate() {
        let [lo, hi] = if is_cheap { spec.cheap_prices } else { spec.expensive_prices };
        if f < spec.n_categorical {
            let card = world.gen_range(spec.min_cardinality..=spec.max_cardinality);
            let cost_matrix = (0..card)
                .map(|j| {
                    (0..card)
                        .map(|k| {
                            if j == k {
                                Some(0.0)
                            } else if world.gen_bool(spec.impossible_fraction) {
                                None
                            } else {
                                Some(round_cents(world.gen_range(lo..=hi)))
                            }
                        })
                        .collect()
                })
                .collect();
            let mut table: Vec<f64> = (0..card).map(|_| world.sample(StandardNormal)).collect();
            standardize(&mut table);
            if is_cheap {
                table.iter_mut().for_each(|u| *u *= spec.cheap_weight);
            }
            utilities.push(Utility::Table(table));
            features.push(FeatureConfig::Categorical {
                name: format!("cat{f}"),
                values: (0..card).map(|k| format!("v{k}")).collect(),
                cost_matrix,
            });
        } else {
            // Full-range moves cost between lo and hi dollars.
            let per_unit = round_cents(world.gen_range(lo..=hi)) / 100.0;
            let sign = if world.gen_bool(0.5) { 1.0 } else { -1.0 };
            utilities.push(Utility::Slope(sign * 12f64.sqrt() / 100.0));
            features.push(FeatureConfig::Numeric {
                name: format!("num{}", f - spec.n_categorical),
                n_bins: spec.n_bins,
                per_unit_cost: Some(per_unit),
                cost_matrix: None,
            });
        }
    }
    let config = CostConfig {
        label_column: "label".into(),
        target_class: 1,
        features,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells: Vec<Vec<String>> = Vec::with_capacity(spec.n_samples);
    let mut scores = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let mut score = 0.0;
        let mut row = Vec::with_capacity(n_features);
        for u in &utilities {
            match u {
                Utility::Table(t) => {
                    let k = rng.gen_range(0..t.len());
                    score += t[k];
                    row.push(format!("v{k}"));
                }
                Utility::Slope(s) => {
                    let x: f64 = rng.gen_range(0.0..100.0);
                    let x = (x * 1e4).round() / 1e4;
                    score += s * (x - 50.0);
                    row.push(format!("{x:.4}"));
                }
            }
        }
        let noise: f64 = rng.sample(StandardNormal);
        scores.push(score + spec.label_noise * noise);
        cells.push(row);
    }
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];

    let mut csv = String::new();
    let names: Vec<&str> = config.features.iter().map(FeatureConfig::name).collect();
    csv.push_str(&names.join(","));
    csv.push_str(",label\n");
    for (row, s) in cells.iter().zip(&scores) {
        csv.push_str(&row.join(","));
        csv.push_str(if *s >= median { ",1\n" } else { ",0\n" });
    }
    let data = load_csv(csv.as_bytes(), &config)?;
    Ok(Synthetic { data, config, csv, cheap })
}

fn round_cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    for x in v.iter_mut() {
        *x = if sd > 0.0 { (*x - mean) / sd } else { 0.0 };
    }
}
