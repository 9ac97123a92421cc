use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Equal-frequency binning of one numeric column.
///
/// `edges` are the interior cut points; a value lands in the bin equal to the
/// number of edges strictly below it, so the mapping is total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binner {
    pub edges: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

impl Binner {
    pub fn n_bins(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn bin_of(&self, value: f64) -> usize {
        self.edges.partition_point(|&e| e < value)
    }

    /// Center of each bin, using the observed column range for the outer bins.
    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.n_bins())
            .map(|b| {
                let lo = if b == 0 { self.min } else { self.edges[b - 1] };
                let hi = if b == self.edges.len() { self.max } else { self.edges[b] };
                0.5 * (lo + hi)
            })
            .collect()
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn fit_bins(column: &[f64], n_bins: usize) -> Result<Binner> {
    if n_bins < 2 {
        return Err(invalid(format!("need at least 2 bins, got {n_bins}")));
    }
    if column.is_empty() {
        return Err(invalid("cannot bin an empty column"));
    }
    if column.iter().any(|x| !x.is_finite()) {
        return Err(invalid("numeric column contains non-finite values"));
    }
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (1..n_bins)
        .map(|b| quantile(&sorted, b as f64 / n_bins as f64))
        .collect();
    edges.dedup();
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    if min == max {
        log::warn!("constant numeric column binned into one usable bin plus an empty one");
    } else if edges.len() + 1 < n_bins {
        log::warn!(
            "numeric column has repeated quantiles: {} bins instead of {n_bins}",
            edges.len() + 1
        );
    }
    Ok(Binner { edges, min, max })
}

pub fn apply_bins(column: &[f64], binner: &Binner) -> Vec<usize> {
    column.iter().map(|&v| binner.bin_of(v)).collect()
}
