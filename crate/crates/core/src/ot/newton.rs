//! Newton steps on the semi-dual of balanced entropic OT.
//!
//! With the row potentials eliminated (`f_i = log a_i - lse_j(g_j - K_ij)`),
//! rows are exact and the concave objective
//! `J(g) = sum_j b_j g_j - sum_i a_i lse_j(g_j - K_ij)` has gradient
//! `b - colsums` and negative Hessian `sum_i a_i (diag(pi_i) - pi_i pi_i^T)`,
//! where `pi_i` is the softmax of row `i`.

use ndarray::{Array1, Array2};

use super::Marginal;

/// Largest change of any log potential in a single Newton step.
const MAX_STEP: f64 = 10.0;

struct Eval {
    objective: f64,
    /// `b_j - colsum_j` on active columns.
    gradient: Array1<f64>,
    /// Row softmax over active columns, active rows only.
    softmax: Array2<f64>,
    row_lse: Vec<f64>,
}

/// Improve `g` (and set `f` consistently) until the column residual drops
/// below `tolerance` or `budget` steps are spent. Returns steps taken.
pub(super) fn polish(
    scaled: &Array2<f64>,
    a: &Marginal,
    b: &Marginal,
    f: &mut [f64],
    g: &mut [f64],
    tolerance: f64,
    budget: usize,
) -> usize {
    let rows: Vec<usize> = (0..f.len()).filter(|&i| a.weights()[i] > 0.0).collect();
    let cols: Vec<usize> = (0..g.len()).filter(|&j| b.weights()[j] > 0.0).collect();
    let a_act: Vec<f64> = rows.iter().map(|&i| a.weights()[i]).collect();
    let b_act: Vec<f64> = cols.iter().map(|&j| b.weights()[j]).collect();
    let cost = |i: usize, j: usize| scaled[[rows[i], cols[j]]];

    let evaluate = |g_act: &[f64]| -> Eval {
        let (nr, nc) = (rows.len(), cols.len());
        let mut softmax = Array2::zeros((nr, nc));
        let mut row_lse = vec![0.0; nr];
        let mut colsum = Array1::<f64>::zeros(nc);
        for i in 0..nr {
            let max = (0..nc).map(|j| g_act[j] - cost(i, j)).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for j in 0..nc {
                let e = (g_act[j] - cost(i, j) - max).exp();
                softmax[[i, j]] = e;
                total += e;
            }
            row_lse[i] = max + total.ln();
            for j in 0..nc {
                softmax[[i, j]] /= total;
                colsum[j] += a_act[i] * softmax[[i, j]];
            }
        }
        let objective = b_act.iter().zip(g_act).map(|(bj, gj)| bj * gj).sum::<f64>()
            - a_act.iter().zip(&row_lse).map(|(ai, l)| ai * l).sum::<f64>();
        let gradient = Array1::from_iter(b_act.iter().zip(colsum.iter()).map(|(bj, cj)| bj - cj));
        Eval {
            objective,
            gradient,
            softmax,
            row_lse,
        }
    };
    let max_abs = |v: &Array1<f64>| v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));

    let mut g_act: Vec<f64> = cols.iter().map(|&j| g[j]).collect();
    let mut current = evaluate(&g_act);
    let mut steps = 0;
    while steps < budget && max_abs(&current.gradient) > tolerance {
        let mut direction = match newton_direction(&current, &a_act) {
            Some(d) => d,
            None => break,
        };
        // Saturated softmax rows make the Hessian tiny and the raw step
        // astronomically long; cap it in the max norm.
        let longest = max_abs(&direction);
        if longest > MAX_STEP {
            direction *= MAX_STEP / longest;
        }
        let slope: f64 = direction.iter().zip(current.gradient.iter()).map(|(d, r)| d * r).sum();
        let residual = max_abs(&current.gradient);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let trial: Vec<f64> = g_act.iter().zip(direction.iter()).map(|(x, d)| x + step * d).collect();
            let eval = evaluate(&trial);
            if eval.objective >= current.objective + 1e-4 * step * slope
                || max_abs(&eval.gradient) < residual
            {
                accepted = Some((trial, eval));
                break;
            }
            step *= 0.5;
        }
        steps += 1;
        match accepted {
            Some((trial, eval)) => {
                g_act = trial;
                current = eval;
            }
            None => break,
        }
    }

    for (k, &j) in cols.iter().enumerate() {
        g[j] = g_act[k];
    }
    for (k, &i) in rows.iter().enumerate() {
        f[i] = a_act[k].ln() - current.row_lse[k];
    }
    steps
}

/// Solve `(H + ridge I) d = gradient` by Cholesky factorization.
fn newton_direction(eval: &Eval, a_act: &[f64]) -> Option<Array1<f64>> {
    let nc = eval.gradient.len();
    // Off-diagonals first; each diagonal is minus its row's off-diagonal
    // sum, which keeps the Laplacian structure exact when rows are nearly
    // one-hot (w p (1 - p) would cancel catastrophically).
    let mut h = Array2::<f64>::zeros((nc, nc));
    for (i, pi) in eval.softmax.rows().into_iter().enumerate() {
        let w = a_act[i];
        for j in 0..nc {
            let pj = pi[j];
            if pj == 0.0 {
                continue;
            }
            for k in j + 1..nc {
                let v = w * pj * pi[k];
                h[[j, k]] -= v;
                h[[k, j]] -= v;
            }
        }
    }
    for j in 0..nc {
        let off: f64 = (0..nc).filter(|&k| k != j).map(|k| h[[j, k]]).sum();
        h[[j, j]] = -off;
    }
    let diag_max = (0..nc).map(|j| h[[j, j]]).fold(0.0f64, f64::max);
    let ridge = diag_max * 1e-12 + f64::MIN_POSITIVE;
    for j in 0..nc {
        h[[j, j]] += ridge;
    }
    cholesky_solve(h, eval.gradient.clone())
}

fn cholesky_solve(mut h: Array2<f64>, mut rhs: Array1<f64>) -> Option<Array1<f64>> {
    let n = rhs.len();
    for j in 0..n {
        let mut d = h[[j, j]];
        for k in 0..j {
            d -= h[[j, k]] * h[[j, k]];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        h[[j, j]] = d;
        for i in j + 1..n {
            let mut s = h[[i, j]];
            for k in 0..j {
                s -= h[[i, k]] * h[[j, k]];
            }
            h[[i, j]] = s / d;
        }
    }
    for i in 0..n {
        let mut s = rhs[i];
        for k in 0..i {
            s -= h[[i, k]] * rhs[k];
        }
        rhs[i] = s / h[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for k in i + 1..n {
            s -= h[[k, i]] * rhs[k];
        }
        rhs[i] = s / h[[i, i]];
    }
    Some(rhs)
}
