use ndarray::Array2;

use super::{
    check_dims, log_sum_exp, log_weights, plan_from_potentials, CostMatrix, Marginal,
    SolverConfig, TransportPlan,
};
use crate::error::{Error, Result};

/// Balanced entropic OT: rows of the plan sum to `a`, columns to `b`.
///
/// Runs log-domain Sinkhorn sweeps (alternating exact row and column
/// updates of the dual potentials). Sinkhorn slows to a crawl when the
/// optimal plan is nearly sparse, which is typical at large `lambda`; if
/// the sweeps have not converged after [`SINKHORN_SWEEPS`], the remaining
/// budget goes to damped Newton steps on the column potentials with the
/// row potentials eliminated in closed form. Both phases optimize the same
/// dual, so the returned plan does not depend on where the switch happens.
///
/// Each sweep or Newton step counts as one iteration. A plan is returned
/// even when `max_iters` runs out; check `converged`.
pub fn sinkhorn_complete(
    cost: &CostMatrix,
    a: &Marginal,
    b: &Marginal,
    cfg: &SolverConfig,
) -> Result<TransportPlan> {
    cfg.validate()?;
    check_dims(cost, a, b)?;

    let (n, m) = cost.dim();
    let scaled = cost.view().mapv(|c| c * cfg.lambda);
    let log_a = log_weights(a);
    let log_b = log_weights(b);

    let mut f = vec![0.0; n];
    let mut g = log_b.clone();
    let sweeps_allowed = cfg.max_iters.min(SINKHORN_SWEEPS);
    let (mut iterations, done) = iterate(
        &scaled,
        a,
        &log_a,
        &log_b,
        &mut f,
        &mut g,
        cfg.tolerance,
        sweeps_allowed,
    );
    if !done && iterations < cfg.max_iters {
        iterations += super::newton::polish(
            &scaled,
            a,
            b,
            &mut f,
            &mut g,
            cfg.tolerance,
            cfg.max_iters - iterations,
        );
    }

    if f.iter().chain(g.iter()).any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::Solver(
            "non-finite dual potentials; check the cost matrix and lambda".into(),
        ));
    }

    let values = plan_from_potentials(&scaled, &f, &g, 0.0);
    debug_assert_eq!(values.dim(), (n, m));
    let residual = balanced_residual(&values, a, b);
    Ok(TransportPlan {
        total_mass: values.sum(),
        converged: residual <= cfg.tolerance,
        iterations,
        residual,
        values,
    })
}

/// Sinkhorn sweeps attempted before switching to Newton steps.
pub const SINKHORN_SWEEPS: usize = 200;

/// Sinkhorn sweeps at a fixed scaled cost. Leaves `g` freshly updated, so
/// column sums are exact. Returns the sweeps performed and whether the row
/// residual reached `tolerance`.
#[allow(clippy::too_many_arguments)]
fn iterate(
    scaled: &Array2<f64>,
    a: &Marginal,
    log_a: &[f64],
    log_b: &[f64],
    f: &mut [f64],
    g: &mut [f64],
    tolerance: f64,
    budget: usize,
) -> (usize, bool) {
    let n = f.len();
    let a_w = a.weights();
    let mut row_lse = vec![0.0; n];
    let mut sweeps = 0;
    loop {
        for (i, lse) in row_lse.iter_mut().enumerate() {
            let row = scaled.row(i);
            *lse = log_sum_exp(g.iter().zip(row.iter()).map(|(gj, kij)| gj - kij));
        }
        if sweeps > 0 {
            let residual = (0..n)
                .filter(|&i| log_a[i].is_finite())
                .map(|i| ((f[i] + row_lse[i]).exp() - a_w[i]).abs())
                .fold(0.0, f64::max);
            if residual <= tolerance {
                return (sweeps, true);
            }
        }
        if sweeps == budget {
            return (sweeps, false);
        }
        for i in 0..n {
            f[i] = log_a[i] - row_lse[i];
        }
        column_update(scaled, f, log_b, g);
        sweeps += 1;
    }
}

/// `g_j = log b_j - logsumexp_i(f_i - K_ij)`, accumulated row-major.
fn column_update(scaled: &Array2<f64>, f: &[f64], log_b: &[f64], g: &mut [f64]) {
    let m = g.len();
    let mut max = vec![f64::NEG_INFINITY; m];
    for (i, row) in scaled.rows().into_iter().enumerate() {
        for (j, k) in row.iter().enumerate() {
            max[j] = max[j].max(f[i] - k);
        }
    }
    let mut sum = vec![0.0; m];
    for (i, row) in scaled.rows().into_iter().enumerate() {
        if f[i] == f64::NEG_INFINITY {
            continue;
        }
        for (j, k) in row.iter().enumerate() {
            sum[j] += (f[i] - k - max[j]).exp();
        }
    }
    for j in 0..m {
        g[j] = if log_b[j] == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            log_b[j] - (max[j] + sum[j].ln())
        };
    }
}

pub(crate) fn balanced_residual(values: &Array2<f64>, a: &Marginal, b: &Marginal) -> f64 {
    let rows = values.sum_axis(ndarray::Axis(1));
    let cols = values.sum_axis(ndarray::Axis(0));
    let row_err = rows
        .iter()
        .zip(a.weights())
        .map(|(r, w)| (r - w).abs())
        .fold(0.0, f64::max);
    let col_err = cols
        .iter()
        .zip(b.weights())
        .map(|(c, w)| (c - w).abs())
        .fold(0.0, f64::max);
    row_err.max(col_err)
}
