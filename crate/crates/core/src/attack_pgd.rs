//! Relaxed projected gradient attack on the one-hot convex hull.
//!
//! The perturbation `delta` starts at zero, takes raw gradient-ascent steps on
//! the BCE loss, and after every step is pulled back onto
//! (product of simplices around the clean encoding) ∩ (cost ball) by Dykstra's
//! alternating projections.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost_model::{CostModel, Dataset, COST_CAP};
use crate::error::{invalid, Result};
use crate::net::{backward_into, EmbeddingNet, GradBundle, GradMask};
use crate::projections::{
    dykstra_in_place, project_from_vertex_in_place, weighted_l1, BlockLayout, DykstraScratch,
};

pub const DEFAULT_PGD_STEPS: usize = 20;
pub const DEFAULT_DYKSTRA_STEPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgdConfig {
    /// Step size. `None` picks `2.5 * eps / (pgd_steps * mean finite weight)`
    /// per example.
    pub alpha: Option<f64>,
    pub pgd_steps: usize,
    pub d_steps: usize,
    /// Budget in dollars.
    pub eps: f64,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            alpha: None,
            pgd_steps: DEFAULT_PGD_STEPS,
            d_steps: DEFAULT_DYKSTRA_STEPS,
            eps: 1.0,
        }
    }
}

impl PgdConfig {
    pub fn with_eps(eps: f64) -> Self {
        Self {
            eps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.alpha {
            if !(a > 0.0) || !a.is_finite() {
                return Err(invalid(format!("step size must be positive, got {a}")));
            }
        }
        if self.pgd_steps == 0 || self.d_steps == 0 {
            return Err(invalid("pgd_steps and d_steps must be at least 1"));
        }
        if !(self.eps >= 0.0) {
            return Err(invalid(format!("cost bound must be nonnegative, got {}", self.eps)));
        }
        Ok(())
    }

    /// Step size actually used for an example with cost weights `w`.
    pub fn step_size(&self, w: &[f64]) -> f64 {
        if let Some(a) = self.alpha {
            return a;
        }
        let (sum, n) = w
            .iter()
            .filter(|&&x| x > 0.0 && x < COST_CAP)
            .fold((0.0, 0usize), |(s, n), &x| (s + x, n + 1));
        if n == 0 || self.eps == 0.0 {
            return 0.0;
        }
        2.5 * self.eps / (self.pgd_steps as f64 * (sum / n as f64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedAdvExample {
    pub xtilde_prime: Vec<f64>,
    pub spent_cost: f64,
    pub loss_before: f64,
    pub loss_after: f64,
    /// False for rows outside the adversary's target class.
    pub attacked: bool,
}

/// Attack one row. Rows whose label differs from the cost model's target
/// class are returned unperturbed.
pub fn cat_pgd(
    row: &[usize],
    y: u8,
    net: &EmbeddingNet,
    cost_model: &CostModel,
    cfg: &PgdConfig,
) -> Result<RelaxedAdvExample> {
    cfg.validate()?;
    net.validate()?;
    if net.embeddings.cardinalities() != cost_model.layout().lengths() {
        return Err(invalid("embedding tables do not match the cost model's features"));
    }
    let xbar = cost_model.one_hot(row)?;
    let w = cost_model.cost_weights(row)?;
    if y != cost_model.target_class() {
        let loss = net.forward(&xbar, y)?.loss;
        return Ok(RelaxedAdvExample {
            xtilde_prime: xbar,
            spent_cost: 0.0,
            loss_before: loss,
            loss_after: loss,
            attacked: false,
        });
    }
    let mut ws = PgdWorkspace::new(net);
    Ok(ws.run(&xbar, &w, y, net, cost_model.layout(), cfg))
}

/// Reusable buffers for repeated attacks against one network shape.
pub(crate) struct PgdWorkspace {
    grads: GradBundle,
    dykstra: DykstraScratch,
    point: Vec<f64>,
}

impl PgdWorkspace {
    pub(crate) fn new(net: &EmbeddingNet) -> Self {
        let width = net.embeddings.layout().width();
        Self {
            grads: net.grads_zero(),
            dykstra: DykstraScratch::new(width),
            point: vec![0.0; width],
        }
    }

    pub(crate) fn run(
        &mut self,
        xbar: &[f64],
        w: &[f64],
        y: u8,
        net: &EmbeddingNet,
        layout: &BlockLayout,
        cfg: &PgdConfig,
    ) -> RelaxedAdvExample {
        let alpha = cfg.step_size(w);
        let mut delta = vec![0.0; xbar.len()];
        let mut loss_before = f64::NAN;
        for step in 0..cfg.pgd_steps {
            for ((p, x), d) in self.point.iter_mut().zip(xbar).zip(&delta) {
                *p = x + d;
            }
            let fwd = backward_into(
                &self.point,
                &net.embeddings,
                &net.params,
                y,
                GradMask::INPUT,
                1.0,
                &mut self.grads,
            );
            if step == 0 {
                loss_before = fwd.loss;
            }
            if alpha == 0.0 {
                break;
            }
            for (d, g) in delta.iter_mut().zip(&self.grads.d_input) {
                *d += alpha * g;
            }
            dykstra_in_place(xbar, &mut delta, w, cfg.eps, layout, cfg.d_steps, &mut self.dykstra, |_, _| {});
        }
        // A finite Dykstra run is only approximately feasible.
        project_from_vertex_in_place(xbar, &mut delta, w, cfg.eps, layout, &mut self.point);
        let xtilde_prime: Vec<f64> = xbar.iter().zip(&delta).map(|(x, d)| x + d).collect();
        let loss_after = net
            .forward(&xtilde_prime, y)
            .map(|f| f.loss)
            .unwrap_or(f64::NAN);
        RelaxedAdvExample {
            spent_cost: weighted_l1(&delta, w),
            xtilde_prime,
            loss_before,
            loss_after,
            attacked: true,
        }
    }
}

/// Runs [`cat_pgd`] on every row. `parallel = false` forces serial order;
/// results are identical either way.
pub fn attack_batch(
    dataset: &Dataset,
    net: &EmbeddingNet,
    cost_model: &CostModel,
    cfg: &PgdConfig,
    parallel: bool,
) -> Result<Vec<RelaxedAdvExample>> {
    cfg.validate()?;
    let attack = |(row, &y): (&Vec<usize>, &u8)| cat_pgd(row, y, net, cost_model, cfg);
    if parallel {
        dataset
            .rows()
            .par_iter()
            .zip(dataset.labels().par_iter())
            .map(attack)
            .collect()
    } else {
        dataset.rows().iter().zip(dataset.labels()).map(attack).collect()
    }
}
