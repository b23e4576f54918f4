//! Entropy-regularized optimal transport between documents and labels.
//!
//! Both solvers minimize `<C, Q> - H(Q) / lambda` over a feasible set of
//! non-negative plans:
//!
//! - [`sinkhorn_complete`]: rows sum to `a`, columns sum to `b`.
//! - [`sinkhorn_partial`]: rows sum to at most `a`, columns to at most `b`,
//!   and the plan carries exactly `p` units of mass.
//!
//! All iterations run on log-domain dual potentials, so large `lambda`
//! (sharp plans) does not underflow the scaling vectors.

mod newton;
mod partial;
mod sinkhorn;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use partial::sinkhorn_partial;
pub use sinkhorn::sinkhorn_complete;

/// Tolerance on the total of a [`Marginal`].
pub const MARGINAL_SUM_TOLERANCE: f64 = 1e-9;

/// Dense non-negative document × label cost table.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(Array2<f64>);

impl CostMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (n, m) = values.dim();
        if n == 0 || m == 0 {
            return Err(Error::input(format!("cost matrix must be non-empty, got {n}x{m}")));
        }
        if let Some(((i, j), v)) = values
            .indexed_iter()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::input(format!(
                "cost entry ({i}, {j}) = {v} is not a finite non-negative number"
            )));
        }
        Ok(CostMatrix(values))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::input("cost rows have unequal lengths"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((rows.len(), m), flat)
            .map_err(|e| Error::input(e.to_string()))?;
        Self::new(values)
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    /// Sub-problem restricted to the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> CostMatrix {
        CostMatrix(self.0.select(Axis(0), rows))
    }

    pub fn select_cols(&self, cols: &[usize]) -> CostMatrix {
        CostMatrix(self.0.select(Axis(1), cols))
    }

    /// Multiply every entry by a positive factor.
    pub fn scaled(&self, factor: f64) -> Result<CostMatrix> {
        CostMatrix::new(&self.0 * factor)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Probability weights over the points on one side of a transport problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal(Array1<f64>);

impl Marginal {
    pub fn new(weights: Array1<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::input("marginal must have at least one point"));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::input(format!("marginal weight {i} = {w} is invalid")));
        }
        let total = weights.sum();
        if (total - 1.0).abs() > MARGINAL_SUM_TOLERANCE {
            return Err(Error::input(format!("marginal sums to {total}, expected 1")));
        }
        Ok(Marginal(weights))
    }

    pub fn from_slice(weights: &[f64]) -> Result<Self> {
        Self::new(Array1::from(weights.to_vec()))
    }

    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::input("marginal must have at least one point"));
        }
        Ok(Marginal(Array1::from_elem(len, 1.0 / len as f64)))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    /// Same weights, reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Marginal {
        Marginal(self.0.select(Axis(0), order))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Inverse entropy weight. Larger values give sharper plans.
    pub lambda: f64,
    pub max_iters: usize,
    /// Convergence threshold on the max-norm marginal residual.
    pub tolerance: f64,
    /// Mass to transport in a partial solve.
    pub mass_p: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 1.0,
            max_iters: 1000,
            tolerance: 1e-8,
            mass_p: None,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_mass(mut self, p: f64) -> Self {
        self.mass_p = Some(p);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::input(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::input(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::input("max_iters must be at least 1"));
        }
        if let Some(p) = self.mass_p {
            validate_mass(p)?;
        }
        Ok(())
    }
}

pub fn validate_mass(p: f64) -> Result<()> {
    if p.is_finite() && p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!("mass p must lie in (0, 1], got {p}")))
    }
}

/// Soft document × label assignment produced by a solver.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub values: Array2<f64>,
    pub total_mass: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Largest marginal-constraint violation of `values`.
    pub residual: f64,
}

impl TransportPlan {
    /// Wraps externally produced plan values (e.g. loaded from disk).
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::input("plan entries must be finite and non-negative"));
        }
        Ok(TransportPlan {
            total_mass: values.sum(),
            values,
            converged: true,
            iterations: 0,
            residual: 0.0,
        })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn row_sums(&self) -> Array1<f64> {
        self.values.sum_axis(Axis(1))
    }

    pub fn col_sums(&self) -> Array1<f64> {
        self.values.sum_axis(Axis(0))
    }
}

/// Transport cost `<C, Q>` of a plan.
pub fn wasserstein_cost(plan: &TransportPlan, cost: &CostMatrix) -> Result<f64> {
    if plan.dim() != cost.dim() {
        return Err(Error::input(format!(
            "plan is {:?} but cost is {:?}",
            plan.dim(),
            cost.dim()
        )));
    }
    Ok(plan
        .values
        .iter()
        .zip(cost.view().iter())
        .map(|(q, c)| q * c)
        .sum())
}

pub(crate) fn check_dims(cost: &CostMatrix, a: &Marginal, b: &Marginal) -> Result<()> {
    if cost.nrows() != a.len() || cost.ncols() != b.len() {
        return Err(Error::input(format!(
            "cost is {}x{} but marginals have lengths {} and {}",
            cost.nrows(),
            cost.ncols(),
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `log(sum(exp(x)))` over the finite terms; `-inf` when there are none.
pub(crate) fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = terms.map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

fn log_weights(m: &Marginal) -> Vec<f64> {
    m.weights()
        .iter()
        .map(|&w| if w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
        .collect()
}

/// Materialize `exp(f_i + g_j + shift - lambda C_ij)`.
pub(crate) fn plan_from_potentials(
    scaled_cost: &Array2<f64>,
    f: &[f64],
    g: &[f64],
    shift: f64,
) -> Array2<f64> {
    let mut q = Array2::zeros(scaled_cost.dim());
    for ((i, j), out) in q.indexed_iter_mut() {
        let e = f[i] + g[j] + shift - scaled_cost[[i, j]];
        *out = if e == f64::NEG_INFINITY { 0.0 } else { e.exp() };
    }
    q
}
