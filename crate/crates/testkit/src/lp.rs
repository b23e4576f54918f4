//! Exact linear-programming oracles for small transport problems.

/// `min c·x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0`.
#[derive(Debug, Clone, Default)]
pub struct Lp {
    pub c: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
}

const EPS: f64 = 1e-11;

/// Balanced transport LP over `n*m` row-major variables.
pub fn transport_lp(cost: &[Vec<f64>], a: &[f64], b: &[f64]) -> Lp {
    let (n, m) = (a.len(), b.len());
    let mut lp = Lp {
        c: cost.iter().flatten().copied().collect(),
        ..Lp::default()
    };
    for i in 0..n {
        let mut row = vec![0.0; n * m];
        row[i * m..(i + 1) * m].iter_mut().for_each(|v| *v = 1.0);
        lp.a_eq.push(row);
        lp.b_eq.push(a[i]);
    }
    for j in 0..m {
        let mut row = vec![0.0; n * m];
        (0..n).for_each(|i| row[i * m + j] = 1.0);
        lp.a_eq.push(row);
        lp.b_eq.push(b[j]);
    }
    lp
}

/// Partial transport LP: capped rows/columns, total mass `p`.
pub fn partial_lp(cost: &[Vec<f64>], a: &[f64], b: &[f64], p: f64) -> Lp {
    let balanced = transport_lp(cost, a, b);
    let nv = balanced.c.len();
    Lp {
        c: balanced.c,
        a_eq: vec![vec![1.0; nv]],
        b_eq: vec![p],
        a_ub: balanced.a_eq,
        b_ub: balanced.b_eq,
    }
}

/// Two-phase dense tableau simplex with Bland's rule.
/// Returns `(objective, x)` or `None` when infeasible or unbounded.
pub fn simplex(lp: &Lp) -> Option<(f64, Vec<f64>)> {
    let nv = lp.c.len();
    let ne = lp.a_eq.len();
    let nu = lp.a_ub.len();
    let r = ne + nu;
    let art0 = nv + nu;
    let ncol = art0 + r;

    let mut t = vec![vec![0.0; ncol + 1]; r];
    for (k, row) in lp.a_eq.iter().enumerate() {
        t[k][..nv].copy_from_slice(row);
        t[k][ncol] = lp.b_eq[k];
    }
    for (k, row) in lp.a_ub.iter().enumerate() {
        t[ne + k][..nv].copy_from_slice(row);
        t[ne + k][nv + k] = 1.0;
        t[ne + k][ncol] = lp.b_ub[k];
    }
    for (i, row) in t.iter_mut().enumerate() {
        if row[ncol] < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        row[art0 + i] = 1.0;
    }
    let mut basis: Vec<usize> = (art0..art0 + r).collect();

    let mut phase1 = vec![0.0; ncol];
    phase1[art0..].iter_mut().for_each(|v| *v = 1.0);
    run(&mut t, &mut basis, &phase1, ncol)?;
    let infeasibility: f64 = (0..r)
        .filter(|&i| basis[i] >= art0)
        .map(|i| t[i][ncol])
        .sum();
    if infeasibility > 1e-9 {
        return None;
    }
    for i in 0..r {
        if basis[i] >= art0 {
            if let Some(j) = (0..art0).find(|&j| t[i][j].abs() > EPS) {
                pivot(&mut t, &mut basis, i, j);
            }
        }
    }

    let mut phase2 = lp.c.clone();
    phase2.resize(ncol, 0.0);
    run(&mut t, &mut basis, &phase2, art0)?;

    let mut x = vec![0.0; nv];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < nv {
            x[bv] = t[i][ncol];
        }
    }
    let obj = x.iter().zip(&lp.c).map(|(a, b)| a * b).sum();
    Some((obj, x))
}

/// Pivot until optimal. Only columns `< enter_limit` may enter the basis.
fn run(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], enter_limit: usize) -> Option<()> {
    let rhs = t[0].len() - 1;
    loop {
        let entering = (0..enter_limit).find(|&j| {
            let reduced = cost[j]
                - basis
                    .iter()
                    .enumerate()
                    .map(|(i, &bv)| cost[bv] * t[i][j])
                    .sum::<f64>();
            reduced < -1e-10
        });
        let Some(j) = entering else { return Some(()) };
        let mut best: Option<(usize, f64)> = None;
        for i in 0..t.len() {
            if t[i][j] > EPS {
                let ratio = t[i][rhs] / t[i][j];
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - EPS || ((ratio - br).abs() <= EPS && basis[i] < basis[bi]) {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
        }
        let (i, _) = best?;
        pivot(t, basis, i, j);
    }
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let p = t[row][col];
    t[row].iter_mut().for_each(|v| *v /= p);
    let pivot_row = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i != row {
            let f = r[col];
            if f != 0.0 {
                r.iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
            }
        }
    }
    basis[row] = col;
}

/// Brute-force LP optimum by enumerating every vertex of the feasible set.
/// Exponential; meant for a handful of variables.
pub fn vertex_enumeration(lp: &Lp) -> Option<(f64, Vec<f64>)> {
    let nv = lp.c.len();
    // Inequalities as rows `g·x <= h`: x_k >= 0 first, then the caps.
    let mut ineq: Vec<(Vec<f64>, f64)> = (0..nv)
        .map(|k| {
            let mut g = vec![0.0; nv];
            g[k] = -1.0;
            (g, 0.0)
        })
        .collect();
    ineq.extend(lp.a_ub.iter().cloned().zip(lp.b_ub.iter().copied()));
    let eq_rank = rank(&lp.a_eq, nv);
    let need = nv - eq_rank;

    let mut best: Option<(f64, Vec<f64>)> = None;
    for subset in combinations(ineq.len(), need) {
        let mut rows: Vec<Vec<f64>> = lp.a_eq.clone();
        let mut rhs: Vec<f64> = lp.b_eq.clone();
        for &s in &subset {
            rows.push(ineq[s].0.clone());
            rhs.push(ineq[s].1);
        }
        let Some(x) = unique_solution(&rows, &rhs, nv) else { continue };
        let feasible = ineq
            .iter()
            .all(|(g, h)| g.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() <= h + 1e-9);
        if !feasible {
            continue;
        }
        let obj: f64 = x.iter().zip(&lp.c).map(|(a, b)| a * b).sum();
        if best.as_ref().is_none_or(|(bo, _)| obj < *bo) {
            best = Some((obj, x));
        }
    }
    best
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Row-reduce `[A | b]`; returns the pivot count of `A`.
fn reduce(aug: &mut [Vec<f64>], ncols: usize) -> usize {
    let mut r = 0;
    for c in 0..ncols {
        let Some(p) = (r..aug.len()).max_by(|&x, &y| aug[x][c].abs().total_cmp(&aug[y][c].abs()))
        else {
            break;
        };
        if aug[p][c].abs() < 1e-10 {
            continue;
        }
        aug.swap(r, p);
        let pv = aug[r][c];
        aug[r].iter_mut().for_each(|v| *v /= pv);
        let pr = aug[r].clone();
        for (i, row) in aug.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                row.iter_mut().zip(&pr).for_each(|(v, q)| *v -= f * q);
            }
        }
        r += 1;
        if r == aug.len() {
            break;
        }
    }
    r
}

fn rank(rows: &[Vec<f64>], ncols: usize) -> usize {
    let mut m = rows.to_vec();
    reduce(&mut m, ncols)
}

fn unique_solution(rows: &[Vec<f64>], rhs: &[f64], nv: usize) -> Option<Vec<f64>> {
    let mut aug: Vec<Vec<f64>> = rows
        .iter()
        .zip(rhs)
        .map(|(r, b)| {
            let mut v = r.clone();
            v.push(*b);
            v
        })
        .collect();
    if reduce(&mut aug, nv) != nv {
        return None;
    }
    // Leftover rows must be consistent (0 = 0).
    if aug[nv..].iter().any(|row| row[nv].abs() > 1e-9) {
        return None;
    }
    Some((0..nv).map(|k| aug[k][nv]).collect())
}
