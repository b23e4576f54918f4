//! Clustering metrics computed directly from per-point label lists.

use std::collections::HashMap;

fn joint(pred: &[usize], gold: &[usize]) -> HashMap<(usize, usize), usize> {
    let mut counts = HashMap::new();
    for (&p, &g) in pred.iter().zip(gold) {
        *counts.entry((p, g)).or_insert(0) += 1;
    }
    counts
}

fn tally(labels: &[usize]) -> HashMap<usize, usize> {
    let mut counts = HashMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    counts
}

/// Number of points agreeing with the majority gold class of their
/// predicted cluster (purity numerator).
pub fn purity_hits(pred: &[usize], gold: &[usize]) -> usize {
    let mut best: HashMap<usize, usize> = HashMap::new();
    for ((p, _), c) in joint(pred, gold) {
        let e = best.entry(p).or_insert(0);
        *e = (*e).max(c);
    }
    best.values().sum()
}

pub fn purity(pred: &[usize], gold: &[usize]) -> f64 {
    purity_hits(pred, gold) as f64 / pred.len() as f64
}

pub fn inverse_purity(pred: &[usize], gold: &[usize]) -> f64 {
    purity(gold, pred)
}

pub fn p1(pred: &[usize], gold: &[usize]) -> f64 {
    let (p, ip) = (purity(pred, gold), inverse_purity(pred, gold));
    2.0 * p * ip / (p + ip)
}

/// Mutual information in nats from the definition, summing over points.
pub fn mutual_information(pred: &[usize], gold: &[usize]) -> f64 {
    let n = pred.len() as f64;
    let pc = tally(pred);
    let gc = tally(gold);
    let mut mi = 0.0;
    for ((p, g), c) in joint(pred, gold) {
        let pxy = c as f64 / n;
        let px = pc[&p] as f64 / n;
        let py = gc[&g] as f64 / n;
        mi += pxy * (pxy / (px * py)).ln();
    }
    mi
}

pub fn entropy(labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    tally(labels)
        .values()
        .map(|&c| {
            let q = c as f64 / n;
            -q * q.ln()
        })
        .sum()
}
