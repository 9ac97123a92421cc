#![allow(dead_code)]

use catrobust::cost_model::{CostMatrix, CostModel, FeatureSpec};
use catrobust::net::EmbeddingNet;
use rand::Rng;

/// Random prices in `[lo, hi]` with a fraction of impossible transitions.
pub fn random_cost_model(rng: &mut impl Rng, cards: &[usize], lo: f64, hi: f64, impossible: f64) -> CostModel {
    let features: Vec<FeatureSpec> = cards
        .iter()
        .enumerate()
        .map(|(i, &t)| FeatureSpec::indexed(format!("f{i}"), t, "v").unwrap())
        .collect();
    let matrices = cards
        .iter()
        .map(|&t| {
            let rows: Vec<Vec<Option<f64>>> = (0..t)
                .map(|j| {
                    (0..t)
                        .map(|k| {
                            if j == k {
                                Some(0.0)
                            } else if rng.gen::<f64>() < impossible {
                                None
                            } else {
                                Some(rng.gen_range(lo..hi))
                            }
                        })
                        .collect()
                })
                .collect();
            CostMatrix::from_rows(&rows).unwrap()
        })
        .collect();
    CostModel::new(features, matrices, 1).unwrap()
}

pub fn random_row(rng: &mut impl Rng, cards: &[usize]) -> Vec<usize> {
    cards.iter().map(|&t| rng.gen_range(0..t)).collect()
}

/// Freshly initialised net with random biases, so no ReLU sits exactly at
/// its kink the way zero biases on dead units do.
pub fn random_net(rng: &mut impl Rng, cards: &[usize], dim: usize, hidden: &[usize]) -> EmbeddingNet {
    let mut net = EmbeddingNet::init(cards, dim, hidden, rng);
    for layer in &mut net.params.layers {
        for b in &mut layer.bias {
            *b = rng.gen_range(-0.5..0.5);
        }
    }
    net
}

/// Every row of the space, in lexicographic order.
pub fn all_rows(cards: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &t in cards {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..t).map(move |v| {
                    let mut r = prefix.clone();
                    r.push(v);
                    r
                })
            })
            .collect();
    }
    out
}

/// Rows reachable from `row` with total cost at most `eps`.
pub fn reachable(cm: &CostModel, row: &[usize], eps: f64) -> Vec<(Vec<usize>, f64)> {
    let cards: Vec<usize> = cm.features().iter().map(|f| f.cardinality()).collect();
    all_rows(&cards)
        .into_iter()
        .filter_map(|r| {
            let c = cm.cost(row, &r).unwrap();
            (c <= eps).then_some((r, c))
        })
        .collect()
}

/// Simplex projection by enumerating supports: on a support `S` the
/// projection is `v_S - (sum v_S - 1) / |S|`; keep the nearest nonnegative
/// candidate.
pub fn simplex_oracle(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|j| mask >> j & 1 == 1).collect();
        let shift = (members.iter().map(|&j| v[j]).sum::<f64>() - 1.0) / members.len() as f64;
        let mut z = vec![0.0; n];
        for &j in &members {
            z[j] = v[j] - shift;
        }
        if z.iter().any(|&x| x < 0.0) {
            continue;
        }
        let d = dist2(&z, v);
        if best.as_ref().map_or(true, |(b, _)| d < *b) {
            best = Some((d, z));
        }
    }
    best.unwrap().1
}

/// Weighted-l1 projection by scanning the dual variable over the intervals
/// between breakpoints `|v_j| / w_j`; inside each interval the cost is linear
/// in `lambda` and the root is solved in closed form.
pub fn weighted_l1_oracle(v: &[f64], w: &[f64], eps: f64) -> Vec<f64> {
    let cost = |z: &[f64]| z.iter().zip(w).map(|(x, wj)| wj * x.abs()).sum::<f64>();
    if cost(v) <= eps {
        return v.to_vec();
    }
    let mut breaks: Vec<f64> = v
        .iter()
        .zip(w)
        .filter(|(_, &wj)| wj > 0.0)
        .map(|(x, wj)| x.abs() / wj)
        .collect();
    breaks.push(0.0);
    breaks.sort_by(f64::total_cmp);
    let shrink = |lambda: f64| -> Vec<f64> {
        v.iter()
            .zip(w)
            .map(|(&x, &wj)| (x.abs() - lambda * wj).max(0.0).copysign(x))
            .collect()
    };
    for pair in breaks.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        if cost(&shrink(hi)) > eps {
            continue;
        }
        // Active set on (lo, hi): coordinates with |v_j| / w_j >= hi.
        let (mut a, mut b) = (0.0, 0.0);
        for (&x, &wj) in v.iter().zip(w) {
            if wj > 0.0 && x.abs() / wj >= hi {
                a += wj * x.abs();
                b += wj * wj;
            }
        }
        let lambda = if b > 0.0 { ((a - eps) / b).clamp(lo, hi) } else { hi };
        return shrink(lambda);
    }
    shrink(*breaks.last().unwrap())
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

/// A random point on every block's simplex; half the time a vertex.
pub fn random_block_point(rng: &mut impl Rng, layout: &catrobust::projections::BlockLayout) -> Vec<f64> {
    let vertex = rng.gen_bool(0.5);
    let mut x = vec![0.0; layout.width()];
    for r in layout.ranges() {
        if vertex {
            x[rng.gen_range(r)] = 1.0;
        } else {
            let raw: Vec<f64> = r.clone().map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
            let s: f64 = raw.iter().sum();
            for (j, v) in r.zip(raw) {
                x[j] = v / s;
            }
        }
    }
    x
}

/// Cheapest misclassified row within budget by full enumeration, or `None`.
pub fn enumerate_attack(
    cm: &CostModel,
    row: &[usize],
    y: u8,
    eps: f64,
    scorer: &impl catrobust::attack_graph::Scorer,
) -> Option<f64> {
    reachable(cm, row, eps)
        .into_iter()
        .filter(|(r, _)| scorer.predict(r) != y)
        .map(|(_, c)| c)
        .min_by(f64::total_cmp)
}

/// Largest relative error between analytic and central-difference gradients
/// over every parameter group. Relative errors use a floor of 1e-6 on the
/// magnitude so exactly-zero gradients are compared absolutely.
pub fn gradient_check(net: &EmbeddingNet, xtilde: &[f64], y: u8, h: f64) -> f64 {
    use catrobust::net::{backward, forward};
    let g = backward(xtilde, &net.embeddings, &net.params, y).unwrap();
    let loss = |n: &EmbeddingNet, x: &[f64]| forward(x, &n.embeddings, &n.params, y).unwrap().loss;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
    let mut worst: f64 = 0.0;
    for (l, layer) in net.params.layers.iter().enumerate() {
        for k in 0..layer.weight.as_slice().len() {
            let fd = central(net, h, |n, d| n.params.layers[l].weight.as_mut_slice()[k] += d, |n| loss(n, xtilde));
            worst = worst.max(rel(g.d_theta.layers[l].weight.as_slice()[k], fd));
        }
        for k in 0..layer.bias.len() {
            let fd = central(net, h, |n, d| n.params.layers[l].bias[k] += d, |n| loss(n, xtilde));
            worst = worst.max(rel(g.d_theta.layers[l].bias[k], fd));
        }
    }
    for (i, table) in net.embeddings.tables.iter().enumerate() {
        for k in 0..table.as_slice().len() {
            let fd = central(net, h, |n, d| n.embeddings.tables[i].as_mut_slice()[k] += d, |n| loss(n, xtilde));
            worst = worst.max(rel(g.d_q[i].as_slice()[k], fd));
        }
    }
    for k in 0..xtilde.len() {
        let mut x = xtilde.to_vec();
        x[k] += h;
        let up = loss(net, &x);
        x[k] -= 2.0 * h;
        let down = loss(net, &x);
        worst = worst.max(rel(g.d_input[k], (up - down) / (2.0 * h)));
    }
    worst
}

fn central(
    net: &EmbeddingNet,
    h: f64,
    nudge: impl Fn(&mut EmbeddingNet, f64),
    loss: impl Fn(&EmbeddingNet) -> f64,
) -> f64 {
    let mut n = net.clone();
    nudge(&mut n, h);
    let up = loss(&n);
    nudge(&mut n, -2.0 * h);
    let down = loss(&n);
    (up - down) / (2.0 * h)
}

/// Best first-round stump by brute force over every (feature, threshold)
/// pair, thresholds at midpoints of adjacent distinct values. Returns the
/// gain of the best split.
pub fn best_stump_gain(x: &[Vec<f64>], y: &[u8], lambda: f64) -> Option<(usize, f64, f64)> {
    let n = x.len() as f64;
    let pos = (y.iter().filter(|&&v| v == 1).count() as f64 / n).clamp(1e-6, 1.0 - 1e-6);
    let p = pos;
    let g: Vec<f64> = y.iter().map(|&v| p - f64::from(v)).collect();
    let h = p * (1.0 - p);
    let score = |gs: f64, count: f64| gs * gs / (count * h + lambda);
    let total: f64 = g.iter().sum();
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..x[0].len() {
        let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let (mut gl, mut nl) = (0.0, 0.0);
            for (r, gi) in x.iter().zip(&g) {
                if r[f] <= t {
                    gl += gi;
                    nl += 1.0;
                }
            }
            let gain = score(gl, nl) + score(total - gl, n - nl) - score(total, n);
            if best.map_or(true, |(_, _, b)| gain > b + 1e-12) {
                best = Some((f, t, gain));
            }
        }
    }
    best
}

/// Checks a merge against the complete-linkage certificate: every cluster has
/// diameter at most the threshold, no two clusters could still be joined, and
/// merged columns are the cluster means. Returns (clusters, violations).
pub fn check_clusters(q: &catrobust::net::EmbeddingSet, r: &catrobust::merging::MergeResult) -> (usize, usize) {
    let (mut clusters, mut violations) = (0, 0);
    for (i, map) in r.cluster_maps.iter().enumerate() {
        let t = r.thresholds[i];
        let n_c = map.iter().max().map_or(0, |c| c + 1);
        let members: Vec<Vec<usize>> = (0..n_c).map(|c| (0..map.len()).filter(|&v| map[v] == c).collect()).collect();
        let d = |a: usize, b: usize| l2(&q.column(i, a), &q.column(i, b));
        let link = |a: &[usize], b: &[usize]| {
            a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).map(|(x, y)| d(x, y)).fold(0.0, f64::max)
        };
        for (c, m) in members.iter().enumerate() {
            clusters += 1;
            if m.is_empty() || link(m, m) > t + 1e-12 {
                violations += 1;
            }
            let mean: Vec<f64> = (0..q.dim)
                .map(|row| m.iter().map(|&v| q.column(i, v)[row]).sum::<f64>() / m.len() as f64)
                .collect();
            if m.iter().any(|&v| l2(&r.merged.column(i, v), &mean) > 1e-12) {
                violations += 1;
            }
            for other in &members[c + 1..] {
                if link(m, other) <= t {
                    violations += 1;
                }
            }
        }
    }
    (clusters, violations)
}
