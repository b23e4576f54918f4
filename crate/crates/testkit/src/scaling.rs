//! Plain-domain scaling iterations, written independently of the log-domain
//! solvers they check.

use crate::Rows;

/// Classic Sinkhorn fixed point `u = a / Kv`, `v = b / K'u` with
/// `K = exp(-lambda C)`, iterated until the scaling vectors move by less
/// than `tol` (relative).
pub fn sinkhorn_fixed_point(cost: &Rows, a: &[f64], b: &[f64], lambda: f64, tol: f64) -> Rows {
    let (n, m) = (a.len(), b.len());
    let k: Rows = cost
        .iter()
        .map(|r| r.iter().map(|c| (-lambda * c).exp()).collect())
        .collect();
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; m];
    for _ in 0..1_000_000 {
        let u_new: Vec<f64> = (0..n)
            .map(|i| a[i] / (0..m).map(|j| k[i][j] * v[j]).sum::<f64>())
            .collect();
        let v_new: Vec<f64> = (0..m)
            .map(|j| b[j] / (0..n).map(|i| k[i][j] * u_new[i]).sum::<f64>())
            .collect();
        let delta = u_new
            .iter()
            .zip(&u)
            .chain(v_new.iter().zip(&v))
            .map(|(x, y)| ((x - y) / x.abs().max(1e-300)).abs())
            .fold(0.0, f64::max);
        u = u_new;
        v = v_new;
        if delta < tol {
            break;
        }
    }
    (0..n)
        .map(|i| (0..m).map(|j| u[i] * k[i][j] * v[j]).collect())
        .collect()
}

/// Iterated Bregman projections with Dykstra corrections for entropic
/// partial transport, in the multiplicative form used by common OT
/// toolkits. Stops when the plan changes by less than `tol` (max-norm).
pub fn partial_dykstra(cost: &Rows, a: &[f64], b: &[f64], p: f64, lambda: f64, tol: f64) -> Rows {
    let (n, m) = (a.len(), b.len());
    let mut k: Rows = cost
        .iter()
        .map(|r| r.iter().map(|c| (-lambda * c).exp()).collect())
        .collect();
    let total: f64 = k.iter().flatten().sum();
    k.iter_mut().flatten().for_each(|v| *v *= p / total);

    let ones = || vec![vec![1.0; m]; n];
    let (mut q1, mut q2, mut q3) = (ones(), ones(), ones());
    for _ in 0..1_000_000 {
        let prev = k.clone();

        // Rows: project onto { Q 1 <= a }.
        let mut k1 = k.clone();
        for i in 0..n {
            k1[i].iter_mut().zip(&q1[i]).for_each(|(x, q)| *x *= q);
        }
        for (i, row) in k1.iter_mut().enumerate() {
            let s: f64 = row.iter().sum();
            let scale = if s > 0.0 { (a[i] / s).min(1.0) } else { 1.0 };
            row.iter_mut().for_each(|x| *x *= scale);
        }
        update_correction(&mut q1, &prev, &k1);

        // Columns: project onto { Q' 1 <= b }.
        let mut k2 = k1.clone();
        for i in 0..n {
            k2[i].iter_mut().zip(&q2[i]).for_each(|(x, q)| *x *= q);
        }
        for j in 0..m {
            let s: f64 = (0..n).map(|i| k2[i][j]).sum();
            let scale = if s > 0.0 { (b[j] / s).min(1.0) } else { 1.0 };
            (0..n).for_each(|i| k2[i][j] *= scale);
        }
        update_correction(&mut q2, &k1, &k2);

        // Mass: project onto { 1'Q1 = p }.
        let mut k3 = k2.clone();
        for i in 0..n {
            k3[i].iter_mut().zip(&q3[i]).for_each(|(x, q)| *x *= q);
        }
        let s: f64 = k3.iter().flatten().sum();
        k3.iter_mut().flatten().for_each(|x| *x *= p / s);
        update_correction(&mut q3, &k2, &k3);

        let delta = k3
            .iter()
            .flatten()
            .zip(prev.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        k = k3;
        if delta < tol {
            break;
        }
    }
    k
}

// q <- q * before / after, guarding 0/0.
fn update_correction(q: &mut Rows, before: &Rows, after: &Rows) {
    for ((qr, br), ar) in q.iter_mut().zip(before).zip(after) {
        for ((qv, bv), av) in qr.iter_mut().zip(br).zip(ar) {
            if *av > 0.0 {
                *qv *= bv / av;
            }
        }
    }
}
