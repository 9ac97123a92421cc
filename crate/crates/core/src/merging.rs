//! Merging of nearby embedding columns.
//!
//! Pairwise distances between the columns of every `Q_i` are pooled into one
//! sorted list, a percentile of that list becomes the threshold, and each
//! feature is clustered by complete linkage so that no cluster has diameter
//! above the threshold. Every cluster's columns are replaced by their mean, so
//! a downstream tree sees identical inputs for merged values and cannot split
//! between them.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::net::{EmbeddingSet, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ThresholdMode {
    /// One threshold from the distances of all features pooled together.
    #[default]
    Global,
    /// A separate percentile threshold per feature.
    PerFeature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeResult {
    /// Tables with every cluster's columns replaced by the cluster mean. The
    /// cluster maps are attached.
    pub merged: EmbeddingSet,
    /// `cluster_maps[i][v]` is the cluster of value `v` of feature `i`.
    /// Cluster ids are numbered by their smallest member.
    pub cluster_maps: Vec<Vec<usize>>,
    /// Threshold applied to each feature (all equal in global mode).
    pub thresholds: Vec<f64>,
    pub n_distances: usize,
}

impl MergeResult {
    pub fn n_clusters(&self) -> usize {
        self.cluster_maps
            .iter()
            .map(|m| m.iter().max().map_or(0, |c| c + 1))
            .sum()
    }
}

pub fn merge_embeddings(q: &EmbeddingSet, p: f64) -> Result<MergeResult> {
    merge_embeddings_with(q, p, ThresholdMode::Global)
}

pub fn merge_embeddings_with(q: &EmbeddingSet, p: f64, mode: ThresholdMode) -> Result<MergeResult> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("percentile must lie in [0, 1], got {p}")));
    }
    let dists: Vec<Vec<Vec<f64>>> = q.tables.iter().map(pairwise_distances).collect();
    let pooled = |feature: Option<usize>| -> Vec<f64> {
        let mut d: Vec<f64> = dists
            .iter()
            .enumerate()
            .filter(|(i, _)| feature.map_or(true, |f| f == *i))
            .flat_map(|(_, m)| upper_triangle(m))
            .collect();
        d.sort_by(f64::total_cmp);
        d
    };
    let all = pooled(None);
    let thresholds: Vec<f64> = match mode {
        ThresholdMode::Global => vec![quantile(&all, p); q.n_features()],
        ThresholdMode::PerFeature => (0..q.n_features())
            .map(|i| quantile(&pooled(Some(i)), p))
            .collect(),
    };

    let cluster_maps: Vec<Vec<usize>> = dists
        .iter()
        .zip(&thresholds)
        .map(|(d, &t)| {
            if p == 0.0 {
                (0..d.len()).collect()
            } else {
                complete_linkage(d, t)
            }
        })
        .collect();

    let tables = q
        .tables
        .iter()
        .zip(&cluster_maps)
        .map(|(table, map)| average_clusters(table, map))
        .collect();
    let mut merged = EmbeddingSet::new(q.dim, tables)?;
    merged.cluster_maps = Some(cluster_maps.clone());
    Ok(MergeResult {
        merged,
        cluster_maps,
        thresholds,
        n_distances: all.len(),
    })
}

/// Embeds a row through the merged tables.
pub fn apply_merged(row: &[usize], result: &MergeResult) -> Result<Vec<f64>> {
    result.merged.embed_row(row)
}

fn pairwise_distances(table: &Matrix) -> Vec<Vec<f64>> {
    let cols: Vec<Vec<f64>> = (0..table.cols()).map(|c| table.column(c)).collect();
    cols.iter()
        .map(|a| {
            cols.iter()
                .map(|b| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
                .collect()
        })
        .collect()
}

fn upper_triangle(d: &[Vec<f64>]) -> impl Iterator<Item = f64> + '_ {
    d.iter()
        .enumerate()
        .flat_map(|(j, row)| row.iter().skip(j + 1).copied())
}

/// Linear-interpolation quantile of a sorted list; 0 for an empty list.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Agglomerative complete-linkage clustering, stopping once the closest pair of
/// clusters is farther apart than `t`. Ties go to the pair with the smallest
/// member indices.
pub(crate) fn complete_linkage(d: &[Vec<f64>], t: f64) -> Vec<usize> {
    let n = d.len();
    // Each cluster is a sorted list of members; clusters kept sorted by first member.
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|j| vec![j]).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let link = clusters[a]
                    .iter()
                    .flat_map(|&j| clusters[b].iter().map(move |&k| (j, k)))
                    .map(|(j, k)| d[j][k])
                    .fold(0.0, f64::max);
                if best.map_or(true, |(l, _, _)| link < l) {
                    best = Some((link, a, b));
                }
            }
        }
        match best {
            Some((link, a, b)) if link <= t => {
                let moved = clusters.remove(b);
                clusters[a].extend(moved);
                clusters[a].sort_unstable();
            }
            _ => break,
        }
    }
    let mut map = vec![0; n];
    for (c, members) in clusters.iter().enumerate() {
        for &j in members {
            map[j] = c;
        }
    }
    map
}

fn average_clusters(table: &Matrix, map: &[usize]) -> Matrix {
    let n_clusters = map.iter().max().map_or(0, |c| c + 1);
    let mut out = table.clone();
    for c in 0..n_clusters {
        let members: Vec<usize> = (0..map.len()).filter(|&v| map[v] == c).collect();
        if members.len() < 2 {
            continue;
        }
        for r in 0..table.rows() {
            let mean = members.iter().map(|&v| table.get(r, v)).sum::<f64>() / members.len() as f64;
            for &v in &members {
                out.set(r, v, mean);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(cols: &[&[f64]]) -> EmbeddingSet {
        let d = cols[0].len();
        let mut m = Matrix::zeros(d, cols.len());
        for (c, col) in cols.iter().enumerate() {
            for (r, &v) in col.iter().enumerate() {
                m.set(r, c, v);
            }
        }
        EmbeddingSet::new(d, vec![m]).unwrap()
    }

    #[test]
    fn zero_percentile_is_identity() {
        let q = set(&[&[0.0, 0.0], &[0.0, 0.0], &[1.0, 2.0]]);
        let r = merge_embeddings(&q, 0.0).unwrap();
        assert_eq!(r.merged.tables, q.tables);
        assert_eq!(r.cluster_maps, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn identical_columns_always_merge() {
        let q = set(&[&[0.5, -1.0], &[3.0, 3.0], &[0.5, -1.0], &[9.0, 0.0]]);
        for p in [0.01, 0.1, 0.15] {
            let r = merge_embeddings(&q, p).unwrap();
            assert_eq!(r.cluster_maps[0][0], r.cluster_maps[0][2]);
            assert_eq!(r.merged.column(0, 0), vec![0.5, -1.0]);
        }
    }

    #[test]
    fn complete_linkage_pairs_by_lowest_index() {
        // a=0, b=1, c=2 on a line: d(a,b)=1, d(b,c)=1, d(a,c)=2.
        let d = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]];
        assert_eq!(complete_linkage(&d, 1.5), vec![0, 0, 1]);
    }

    #[test]
    fn merged_column_is_pair_midpoint() {
        let q = set(&[&[0.0], &[1.0], &[2.0]]);
        // pooled distances (1, 1, 2); p = 0.5 gives t = 1.
        let r = merge_embeddings(&q, 0.5).unwrap();
        assert_eq!(r.thresholds, vec![1.0]);
        assert_eq!(r.cluster_maps[0], vec![0, 0, 1]);
        assert_eq!(r.merged.column(0, 0), vec![0.5]);
        assert_eq!(r.merged.column(0, 1), vec![0.5]);
        assert_eq!(r.merged.column(0, 2), vec![2.0]);
    }

    #[test]
    fn full_percentile_respects_diameter() {
        let q = set(&[&[0.0], &[1.0], &[2.0], &[10.0]]);
        let r = merge_embeddings(&q, 1.0).unwrap();
        assert_eq!(r.thresholds[0], 10.0);
        assert_eq!(r.n_clusters(), 1);
    }

    #[test]
    fn rejects_out_of_range_percentile() {
        let q = set(&[&[0.0], &[1.0]]);
        assert!(merge_embeddings(&q, -0.1).is_err());
        assert!(merge_embeddings(&q, 1.5).is_err());
    }

    #[test]
    fn singleton_clusters_embed_like_original() {
        let q = set(&[&[0.0, 1.0], &[5.0, 5.0]]);
        let r = merge_embeddings(&q, 0.0).unwrap();
        assert_eq!(apply_merged(&[1], &r).unwrap(), q.embed_row(&[1]).unwrap());
    }
}
