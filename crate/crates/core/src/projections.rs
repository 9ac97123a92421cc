//! Euclidean projections used by the relaxed attack.
//!
//! Everything here operates on flat `t`-vectors made of `m` contiguous blocks,
//! one block per categorical feature. The relaxed attack keeps its state as a
//! perturbation `delta` around a block-feasible point `xtilde`, so the simplex
//! constraint is applied to `xtilde + delta` while the cost ball is centered at
//! zero in perturbation space.

use serde::{Deserialize, Serialize};

use crate::cost_model::COST_CAP;
use crate::error::{invalid, Result};

/// Offsets and lengths of the one-hot blocks inside a `t`-vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    offsets: Vec<usize>,
    lengths: Vec<usize>,
}

impl BlockLayout {
    pub fn from_cardinalities(cards: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(cards.len());
        let mut acc = 0;
        for &c in cards {
            offsets.push(acc);
            acc += c;
        }
        Self {
            offsets,
            lengths: cards.to_vec(),
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.lengths.len()
    }

    /// Total width `t`.
    pub fn width(&self) -> usize {
        self.offsets
            .last()
            .zip(self.lengths.last())
            .map(|(o, l)| o + l)
            .unwrap_or(0)
    }

    pub fn offset(&self, block: usize) -> usize {
        self.offsets[block]
    }

    pub fn len_of(&self, block: usize) -> usize {
        self.lengths[block]
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn range(&self, block: usize) -> std::ops::Range<usize> {
        self.offsets[block]..self.offsets[block] + self.lengths[block]
    }

    pub fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        (0..self.n_blocks()).map(|b| self.range(b))
    }

    pub fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.width() {
            return Err(invalid(format!(
                "vector of length {} does not match layout width {}",
                v.len(),
                self.width()
            )));
        }
        Ok(())
    }
}

/// Euclidean projection onto the probability simplex `{z >= 0, sum z = 1}`.
///
/// Sort-and-threshold: sort descending, find the largest `k` with
/// `u_k - (sum_{i<=k} u_i - 1) / k > 0`, then shift by that threshold and clip.
/// Ties are broken by index order through a stable sort.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    project_simplex_into(v, &mut out);
    out
}

pub(crate) fn project_simplex_into(v: &[f64], out: &mut [f64]) {
    let n = v.len();
    if n == 0 {
        return;
    }
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - theta).max(0.0);
    }
}

const L1_BISECTION_TOL: f64 = 1e-10;
const L1_BISECTION_MAX_ITERS: usize = 200;

/// Weighted cost of a perturbation: `sum_j w_j |v_j|`.
pub fn weighted_l1(v: &[f64], w: &[f64]) -> f64 {
    v.iter().zip(w).map(|(x, wj)| wj * x.abs()).sum()
}

/// Euclidean projection onto `{z : sum_j w_j |z_j| <= eps}`.
///
/// Soft-thresholding `z_j = sign(v_j) max(|v_j| - lambda w_j, 0)` with the dual
/// variable `lambda` found by bisection. Coordinates with zero weight are never
/// touched. Feasible inputs are returned unchanged.
pub fn project_weighted_l1(v: &[f64], w: &[f64], eps: f64) -> Result<Vec<f64>> {
    if v.len() != w.len() {
        return Err(invalid("value and weight vectors differ in length"));
    }
    if !(eps >= 0.0) {
        return Err(invalid(format!("cost bound must be nonnegative, got {eps}")));
    }
    if w.iter().any(|&x| !(x >= 0.0)) {
        return Err(invalid("weights must be nonnegative"));
    }
    let mut out = v.to_vec();
    project_weighted_l1_in_place(&mut out, w, eps);
    Ok(out)
}

pub(crate) fn project_weighted_l1_in_place(v: &mut [f64], w: &[f64], eps: f64) {
    if weighted_l1(v, w) <= eps {
        return;
    }
    let shrunk_cost = |lambda: f64| -> f64 {
        v.iter()
            .zip(w)
            .map(|(&x, &wj)| wj * (x.abs() - lambda * wj).max(0.0))
            .sum()
    };
    // At lambda_hi every weighted coordinate is zeroed.
    let lambda_hi = v
        .iter()
        .zip(w)
        .filter(|(_, &wj)| wj > 0.0)
        .map(|(&x, &wj)| x.abs() / wj)
        .fold(0.0, f64::max);
    let (mut lo, mut hi) = (0.0, lambda_hi);
    for _ in 0..L1_BISECTION_MAX_ITERS {
        if hi - lo <= L1_BISECTION_TOL * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if shrunk_cost(mid) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // `hi` is always on the feasible side.
    let lambda = hi;
    for (x, &wj) in v.iter_mut().zip(w) {
        if wj > 0.0 {
            let mag = (x.abs() - lambda * wj).max(0.0);
            *x = mag.copysign(*x);
            if wj >= COST_CAP && x.abs() < 1e-12 {
                *x = 0.0;
            }
        }
    }
}

/// Dykstra's alternating projection onto (product of simplices around
/// `xtilde`) ∩ (weighted-l1 ball of radius `eps`), in perturbation space.
///
/// Runs exactly `d_steps` iterations with no early exit and returns the final
/// perturbation, which is always the output of the cost-ball projection.
pub fn dykstra_project(
    xtilde: &[f64],
    delta: &[f64],
    w: &[f64],
    eps: f64,
    layout: &BlockLayout,
    d_steps: usize,
) -> Result<Vec<f64>> {
    layout.check(xtilde)?;
    layout.check(delta)?;
    layout.check(w)?;
    if d_steps == 0 {
        return Err(invalid("d_steps must be at least 1"));
    }
    if !(eps >= 0.0) {
        return Err(invalid(format!("cost bound must be nonnegative, got {eps}")));
    }
    let mut state = delta.to_vec();
    let mut scratch = DykstraScratch::new(layout.width());
    dykstra_in_place(xtilde, &mut state, w, eps, layout, d_steps, &mut scratch, |_, _| {});
    Ok(state)
}

/// Same as [`dykstra_project`] but also reports the constraint violation of
/// `xtilde + delta` after every iteration.
pub fn dykstra_project_traced(
    xtilde: &[f64],
    delta: &[f64],
    w: &[f64],
    eps: f64,
    layout: &BlockLayout,
    d_steps: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    layout.check(xtilde)?;
    layout.check(delta)?;
    layout.check(w)?;
    if d_steps == 0 {
        return Err(invalid("d_steps must be at least 1"));
    }
    let mut state = delta.to_vec();
    let mut scratch = DykstraScratch::new(layout.width());
    let mut trace = Vec::with_capacity(d_steps);
    dykstra_in_place(xtilde, &mut state, w, eps, layout, d_steps, &mut scratch, |d, _| {
        trace.push(constraint_violation(xtilde, d, w, eps, layout));
    });
    Ok((state, trace))
}

pub(crate) struct DykstraScratch {
    p: Vec<f64>,
    q: Vec<f64>,
    z: Vec<f64>,
    shifted: Vec<f64>,
}

impl DykstraScratch {
    pub(crate) fn new(width: usize) -> Self {
        Self {
            p: vec![0.0; width],
            q: vec![0.0; width],
            z: vec![0.0; width],
            shifted: vec![0.0; width],
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dykstra_in_place(
    xtilde: &[f64],
    delta: &mut [f64],
    w: &[f64],
    eps: f64,
    layout: &BlockLayout,
    d_steps: usize,
    s: &mut DykstraScratch,
    mut on_iter: impl FnMut(&[f64], usize),
) {
    s.p.iter_mut().for_each(|x| *x = 0.0);
    s.q.iter_mut().for_each(|x| *x = 0.0);
    for it in 0..d_steps {
        // z := Π_simplices(xtilde + delta + p) - xtilde
        for j in 0..delta.len() {
            s.shifted[j] = xtilde[j] + delta[j] + s.p[j];
        }
        for r in layout.ranges() {
            project_simplex_into(&s.shifted[r.clone()], &mut s.z[r]);
        }
        for j in 0..delta.len() {
            s.z[j] -= xtilde[j];
            s.p[j] = delta[j] + s.p[j] - s.z[j];
        }
        // delta := Π_cost(z + q)
        for j in 0..delta.len() {
            delta[j] = s.z[j] + s.q[j];
        }
        project_weighted_l1_in_place(delta, w, eps);
        for j in 0..delta.len() {
            s.q[j] = s.z[j] + s.q[j] - delta[j];
        }
        on_iter(delta, it);
    }
}

/// Exact Euclidean projection of `xtilde + delta` onto the feasible set when
/// `xtilde` is one-hot in every block.
///
/// Around a vertex the cost is linear on the product of simplices, so the
/// projection is `Π_simplices(xtilde + delta - lambda c)` with the scalar
/// `lambda` found by bisection. Returns the projected perturbation.
pub fn project_feasible_from_vertex(
    xtilde: &[f64],
    delta: &[f64],
    w: &[f64],
    eps: f64,
    layout: &BlockLayout,
) -> Result<Vec<f64>> {
    layout.check(xtilde)?;
    layout.check(delta)?;
    layout.check(w)?;
    if !(eps >= 0.0) {
        return Err(invalid(format!("cost bound must be nonnegative, got {eps}")));
    }
    for r in layout.ranges() {
        let block = &xtilde[r];
        let ones = block.iter().filter(|&&x| x == 1.0).count();
        let zeros = block.iter().filter(|&&x| x == 0.0).count();
        if ones != 1 || ones + zeros != block.len() {
            return Err(invalid("xtilde must be one-hot in every block"));
        }
    }
    let mut out = delta.to_vec();
    let mut scratch = vec![0.0; xtilde.len()];
    project_from_vertex_in_place(xtilde, &mut out, w, eps, layout, &mut scratch);
    Ok(out)
}

pub(crate) fn project_from_vertex_in_place(
    xtilde: &[f64],
    delta: &mut [f64],
    w: &[f64],
    eps: f64,
    layout: &BlockLayout,
    scratch: &mut [f64],
) {
    // cost(x') = sum_j c_j x'_j + k with c = w off the original value, -w on it.
    let fixed: f64 = xtilde.iter().zip(w).map(|(x, wj)| x * wj).sum();
    let c = |j: usize| if xtilde[j] == 1.0 { -w[j] } else { w[j] };
    let z: Vec<f64> = xtilde.iter().zip(delta.iter()).map(|(x, d)| x + d).collect();
    let mut eval = |lambda: f64, out: &mut [f64]| -> f64 {
        for (j, s) in scratch.iter_mut().enumerate() {
            *s = z[j] - lambda * c(j);
        }
        for r in layout.ranges() {
            project_simplex_into(&scratch[r.clone()], &mut out[r]);
        }
        (0..out.len()).map(|j| c(j) * out[j]).sum::<f64>() + fixed
    };
    let mut x = vec![0.0; z.len()];
    if eval(0.0, &mut x) > eps {
        let mut lo = 0.0;
        let mut hi = 1.0;
        while eval(hi, &mut x) > eps && hi < 1e300 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..L1_BISECTION_MAX_ITERS {
            if hi - lo <= 1e-14 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if eval(mid, &mut x) > eps {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        eval(hi, &mut x);
    }
    for j in 0..delta.len() {
        delta[j] = x[j] - xtilde[j];
    }
}

/// Largest violation of either constraint family by `xtilde + delta`:
/// block-sum deviation, negative mass, or cost in excess of `eps`.
pub fn constraint_violation(
    xtilde: &[f64],
    delta: &[f64],
    w: &[f64],
    eps: f64,
    layout: &BlockLayout,
) -> f64 {
    let mut worst: f64 = 0.0;
    for r in layout.ranges() {
        let mut sum = 0.0;
        for j in r {
            let x = xtilde[j] + delta[j];
            sum += x;
            worst = worst.max(-x);
        }
        worst = worst.max((sum - 1.0).abs());
    }
    worst.max(weighted_l1(delta, w) - eps)
}
