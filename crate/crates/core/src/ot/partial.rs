use ndarray::{Array2, Axis};

use super::{
    check_dims, log_sum_exp, log_weights, plan_from_potentials, validate_mass, CostMatrix,
    Marginal, SolverConfig, TransportPlan,
};
use crate::error::{Error, Result};

/// Partial entropic OT: move exactly `p` units of mass with row sums capped
/// by `a` and column sums capped by `b`.
///
/// The plan has the form `Q_ij = exp(f_i + g_j + h - lambda C_ij)` with
/// `f, g <= 0`. Each sweep applies three exact scaling steps: clip rows to
/// their caps, clip columns to their caps, then rescale the whole plan to
/// mass `p`. This is block coordinate ascent on the concave dual, i.e. the
/// iterated Bregman projection scheme for partial transport written in log
/// space. Convergence is measured by the KKT residual: cap violations,
/// total-mass error, and slack on rows/columns whose potential is active.
pub fn sinkhorn_partial(
    cost: &CostMatrix,
    a: &Marginal,
    b: &Marginal,
    cfg: &SolverConfig,
) -> Result<TransportPlan> {
    cfg.validate()?;
    check_dims(cost, a, b)?;
    let p = cfg
        .mass_p
        .ok_or_else(|| Error::input("partial solve requires mass_p"))?;
    validate_mass(p)?;

    let (n, m) = cost.dim();
    let scaled = cost.view().mapv(|c| c * cfg.lambda);
    let log_a = log_weights(a);
    let log_b = log_weights(b);
    let log_p = p.ln();

    let mut f: Vec<f64> = log_a.iter().map(|la| if la.is_finite() { 0.0 } else { *la }).collect();
    let mut g: Vec<f64> = log_b.iter().map(|lb| if lb.is_finite() { 0.0 } else { *lb }).collect();
    let mut h = log_p - total_lse(&scaled, &f, &g);

    let mut iterations = 0;
    let mut residual = kkt_residual(&scaled, &f, &g, h, a, b, p);
    while residual > cfg.tolerance && iterations < cfg.max_iters {
        for i in 0..n {
            if log_a[i].is_finite() {
                let lse = log_sum_exp(scaled.row(i).iter().zip(&g).map(|(k, gj)| gj - k)) + h;
                f[i] = (log_a[i] - lse).min(0.0);
            }
        }
        for j in 0..m {
            if log_b[j].is_finite() {
                let lse = log_sum_exp(scaled.column(j).iter().zip(&f).map(|(k, fi)| fi - k)) + h;
                g[j] = (log_b[j] - lse).min(0.0);
            }
        }
        h = log_p - total_lse(&scaled, &f, &g);
        iterations += 1;
        residual = kkt_residual(&scaled, &f, &g, h, a, b, p);
    }

    if !h.is_finite() || f.iter().chain(g.iter()).any(|v| v.is_nan()) {
        return Err(Error::Solver(
            "non-finite dual potentials; check the cost matrix and lambda".into(),
        ));
    }

    let values = plan_from_potentials(&scaled, &f, &g, h);
    Ok(TransportPlan {
        total_mass: values.sum(),
        converged: residual <= cfg.tolerance,
        iterations,
        residual,
        values,
    })
}

fn total_lse(scaled: &Array2<f64>, f: &[f64], g: &[f64]) -> f64 {
    let row_lse: Vec<f64> = scaled
        .rows()
        .into_iter()
        .zip(f)
        .map(|(row, fi)| fi + log_sum_exp(row.iter().zip(g).map(|(k, gj)| gj - k)))
        .collect();
    log_sum_exp(row_lse.iter().copied())
}

fn kkt_residual(
    scaled: &Array2<f64>,
    f: &[f64],
    g: &[f64],
    h: f64,
    a: &Marginal,
    b: &Marginal,
    p: f64,
) -> f64 {
    let q = plan_from_potentials(scaled, f, g, h);
    let rows = q.sum_axis(Axis(1));
    let cols = q.sum_axis(Axis(0));
    let side = |sums: &ndarray::Array1<f64>, caps: ndarray::ArrayView1<f64>, pot: &[f64]| {
        sums.iter()
            .zip(caps)
            .zip(pot)
            .map(|((s, cap), u)| {
                if *u < 0.0 && u.is_finite() {
                    (s - cap).abs()
                } else {
                    (s - cap).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    };
    let mass_err = (q.sum() - p).abs();
    side(&rows, a.weights(), f)
        .max(side(&cols, b.weights(), g))
        .max(mass_err)
}
