//! Batched construction of the document × label plan and hardening of plans
//! into discrete cluster labelings.

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ot::{
    sinkhorn_complete, sinkhorn_partial, validate_mass, CostMatrix, Marginal, SolverConfig,
    TransportPlan,
};

/// Slack added before flooring `p * n`, so that e.g. `0.7 * 10` selects 7.
const FLOOR_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchSchedule {
    pub batch_size: usize,
    pub epochs: usize,
    pub shuffle_seed: u64,
}

impl Default for BatchSchedule {
    fn default() -> Self {
        BatchSchedule {
            batch_size: 500,
            epochs: 3,
            shuffle_seed: 0,
        }
    }
}

impl BatchSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::input("batch_size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::input("epochs must be at least 1"));
        }
        Ok(())
    }

    /// Document order for every epoch, split into batches.
    pub fn batches(&self, n: usize) -> Vec<Vec<Vec<usize>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.shuffle_seed);
        (0..self.epochs)
            .map(|_| {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                order.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
            })
            .collect()
    }
}

/// Hard assignment of each document (by position) to a label index.
/// `None` marks a document left unassigned by a partial hardening.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    pub assignments: Vec<Option<usize>>,
}

impl Clustering {
    pub fn new(assignments: Vec<Option<usize>>) -> Self {
        Clustering { assignments }
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn assigned_count(&self) -> usize {
        self.assignments.iter().filter(|a| a.is_some()).count()
    }

    pub fn assigned_fraction(&self) -> f64 {
        if self.assignments.is_empty() {
            return 0.0;
        }
        self.assigned_count() as f64 / self.assignments.len() as f64
    }
}

/// Complete plan assembled from per-batch solves (see [`batched_assign`]).
pub fn batched_complete_assign(
    cost: &CostMatrix,
    schedule: &BatchSchedule,
    cfg: &SolverConfig,
) -> Result<TransportPlan> {
    let cfg = SolverConfig {
        mass_p: None,
        ..*cfg
    };
    batched_assign(cost, schedule, &cfg)
}

/// Solve each batch with uniform marginals over its documents and over all
/// labels, accumulate the batch plans into the rows they cover, and divide
/// by `batches per epoch × epochs`.
///
/// With `cfg.mass_p = Some(p)` each batch is a partial solve carrying mass
/// `p`, so the global plan carries mass `p`; otherwise it carries mass 1.
/// `converged` is true only if every batch converged; `iterations` and
/// `residual` report the worst batch.
pub fn batched_assign(
    cost: &CostMatrix,
    schedule: &BatchSchedule,
    cfg: &SolverConfig,
) -> Result<TransportPlan> {
    schedule.validate()?;
    cfg.validate()?;
    let (n, m) = cost.dim();
    let labels = Marginal::uniform(m)?;
    let epochs = schedule.batches(n);
    let per_epoch = epochs[0].len();

    let mut values = Array2::<f64>::zeros((n, m));
    let mut converged = true;
    let mut iterations = 0;
    let mut residual: f64 = 0.0;
    for (epoch, batches) in epochs.iter().enumerate() {
        let solved: Vec<Result<TransportPlan>> = batches
            .par_iter()
            .enumerate()
            .map(|(batch, rows)| {
                solve_batch(cost, rows, &labels, cfg).map_err(|e| Error::Batch {
                    epoch,
                    batch,
                    source: Box::new(e),
                })
            })
            .collect();
        for (rows, plan) in batches.iter().zip(solved) {
            let plan = plan?;
            converged &= plan.converged;
            iterations = iterations.max(plan.iterations);
            residual = residual.max(plan.residual);
            for (k, &i) in rows.iter().enumerate() {
                let mut dst = values.row_mut(i);
                dst += &plan.values.row(k);
            }
        }
    }
    values /= (per_epoch * schedule.epochs) as f64;
    if !converged {
        tracing::warn!(iterations, residual, "some batches did not converge");
    }
    Ok(TransportPlan {
        total_mass: values.sum(),
        values,
        converged,
        iterations,
        residual,
    })
}

fn solve_batch(
    cost: &CostMatrix,
    rows: &[usize],
    labels: &Marginal,
    cfg: &SolverConfig,
) -> Result<TransportPlan> {
    let sub = cost.select_rows(rows);
    let docs = Marginal::uniform(rows.len())?;
    match cfg.mass_p {
        Some(_) => sinkhorn_partial(&sub, &docs, labels, cfg),
        None => sinkhorn_complete(&sub, &docs, labels, cfg),
    }
}

/// Index of the largest entry; the first one wins ties.
fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Every document goes to the label with the most mass in its row.
pub fn harden_complete(plan: &TransportPlan) -> Result<Clustering> {
    let assignments = plan
        .values
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            if row.iter().all(|&v| v <= 0.0) {
                Err(Error::EmptyRow { row: i })
            } else {
                Ok(Some(argmax(row)))
            }
        })
        .collect::<Result<_>>()?;
    Ok(Clustering { assignments })
}

/// Keep the `floor(p * n)` documents with the largest row mass (lower index
/// first on ties) and give each its row argmax; the rest stay unassigned.
pub fn harden_partial(plan: &TransportPlan, p: f64) -> Result<Clustering> {
    validate_mass(p)?;
    let n = plan.values.nrows();
    let keep = selected_count(p, n);
    let marginal = plan.row_sums();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| marginal[y].total_cmp(&marginal[x]).then(x.cmp(&y)));

    let mut assignments = vec![None; n];
    for &i in &order[..keep] {
        assignments[i] = Some(argmax(plan.values.row(i)));
    }
    Ok(Clustering { assignments })
}

/// Number of documents a partial hardening keeps.
pub fn selected_count(p: f64, n: usize) -> usize {
    ((p * n as f64 + FLOOR_SLACK).floor() as usize).min(n)
}

/// Greedy nearest-label baseline: per-row argmin of the cost.
pub fn nearest_label(cost: &CostMatrix) -> Clustering {
    let assignments = cost
        .view()
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &c) in row.iter().enumerate() {
                if c < row[best] {
                    best = j;
                }
            }
            Some(best)
        })
        .collect();
    Clustering { assignments }
}
