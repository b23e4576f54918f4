//! Extrinsic clustering metrics: purity, inverse purity, their harmonic mean
//! P1, and mutual information in nats.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::assignment::Clustering;
use crate::error::{Error, Result};

/// Co-occurrence counts, rows indexed by predicted cluster and columns by
/// gold class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Array2<u64>,
    n_total: u64,
}

impl ContingencyTable {
    pub fn new(counts: Array2<u64>) -> Self {
        let n_total = counts.sum();
        ContingencyTable { counts, n_total }
    }

    /// Tally aligned `(predicted, gold)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let pairs: Vec<_> = pairs.into_iter().collect();
        let k = pairs.iter().map(|p| p.0 + 1).max().unwrap_or(0);
        let g = pairs.iter().map(|p| p.1 + 1).max().unwrap_or(0);
        let mut counts = Array2::zeros((k, g));
        for (p, t) in pairs {
            counts[[p, t]] += 1;
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn n_total(&self) -> u64 {
        self.n_total
    }

    pub fn transposed(&self) -> ContingencyTable {
        ContingencyTable {
            counts: self.counts.t().to_owned(),
            n_total: self.n_total,
        }
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.n_total == 0 {
            Err(Error::Evaluation("contingency table is empty".into()))
        } else {
            Ok(())
        }
    }
}

/// Fraction of points that fall in their predicted cluster's majority class.
pub fn purity(table: &ContingencyTable) -> Result<f64> {
    table.check_nonempty()?;
    let hits: u64 = table
        .counts
        .rows()
        .into_iter()
        .map(|r| r.iter().copied().max().unwrap_or(0))
        .sum();
    Ok(hits as f64 / table.n_total as f64)
}

pub fn inverse_purity(table: &ContingencyTable) -> Result<f64> {
    purity(&table.transposed())
}

pub fn p1(table: &ContingencyTable) -> Result<f64> {
    let p = purity(table)?;
    let ip = inverse_purity(table)?;
    Ok(2.0 * p * ip / (p + ip))
}

/// `sum p_kj ln(p_kj / (p_k p_j))`, in nats.
pub fn mutual_information(table: &ContingencyTable) -> Result<f64> {
    table.check_nonempty()?;
    let n = table.n_total as f64;
    let rows = table.counts.sum_axis(Axis(1));
    let cols = table.counts.sum_axis(Axis(0));
    let mut mi = 0.0;
    for ((k, j), &c) in table.counts.indexed_iter() {
        if c == 0 {
            continue;
        }
        let c = c as f64;
        mi += c / n * (c * n / (rows[k] as f64 * cols[j] as f64)).ln();
    }
    Ok(mi.max(0.0))
}

/// Entropy (nats) of the predicted side of a table.
pub fn entropy(table: &ContingencyTable) -> Result<f64> {
    table.check_nonempty()?;
    let n = table.n_total as f64;
    Ok(table
        .counts
        .sum_axis(Axis(1))
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub purity: f64,
    pub inverse_purity: f64,
    pub p1: f64,
    pub mi_nats: f64,
    pub assigned_fraction: f64,
    pub n_evaluated: usize,
}

impl MetricsReport {
    pub fn from_table(table: &ContingencyTable, assigned_fraction: f64) -> Result<Self> {
        Ok(MetricsReport {
            purity: purity(table)?,
            inverse_purity: inverse_purity(table)?,
            p1: p1(table)?,
            mi_nats: mutual_information(table)?,
            assigned_fraction,
            n_evaluated: table.n_total as usize,
        })
    }
}

/// Score `pred` against `gold` over documents that have both a predicted
/// and a gold label. Unassigned predictions are excluded.
pub fn evaluate(pred: &Clustering, gold: &Clustering) -> Result<MetricsReport> {
    if pred.len() != gold.len() {
        return Err(Error::Evaluation(format!(
            "prediction covers {} documents but gold covers {}",
            pred.len(),
            gold.len()
        )));
    }
    let pairs: Vec<(usize, usize)> = pred
        .assignments
        .iter()
        .zip(&gold.assignments)
        .filter_map(|(p, g)| Some(((*p)?, (*g)?)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Evaluation(
            "no document has both a predicted and a gold label".into(),
        ));
    }
    MetricsReport::from_table(&ContingencyTable::from_pairs(pairs), pred.assigned_fraction())
}
