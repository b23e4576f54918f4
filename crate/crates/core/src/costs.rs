//! Cost matrices derived from embeddings or relevance scores.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::corpus::LabelSpec;
use crate::error::{Error, Result};
use crate::ot::CostMatrix;

/// Seed documents averaged per label by default.
pub const DEFAULT_SEED_DOCS: usize = 5;

/// One embedding vector per row. Stored as `f32`, the precision of the
/// matrix file format and the embedding service.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix(Array2<f32>);

impl EmbeddingMatrix {
    pub fn new(values: Array2<f32>) -> Result<Self> {
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::input(format!("embedding entry ({i}, {j}) = {v} is not finite")));
        }
        Ok(EmbeddingMatrix(values))
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::provider(format!(
                "vector {i} has dimension {}, expected {dim}",
                rows[i].len()
            )));
        }
        let flat = rows.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((rows.len(), dim), flat)
            .map_err(|e| Error::input(e.to_string()))?;
        Self::new(values)
    }

    pub fn count(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &Array2<f32> {
        &self.0
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f32> {
        self.0.row(i)
    }

    pub fn select(&self, rows: &[usize]) -> EmbeddingMatrix {
        EmbeddingMatrix(self.0.select(Axis(0), rows))
    }

    pub fn into_inner(self) -> Array2<f32> {
        self.0
    }
}

/// Relevance probabilities, one row per document and one column per label.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix(Array2<f64>);

impl ScoreMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input("score matrix must be non-empty"));
        }
        if let Some(((i, j), v)) = values
            .indexed_iter()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::input(format!("score ({i}, {j}) = {v} is outside [0, 1]")));
        }
        Ok(ScoreMatrix(values))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn select_cols(&self, cols: &[usize]) -> ScoreMatrix {
        ScoreMatrix(self.0.select(Axis(1), cols))
    }
}

/// Euclidean distance between every document and every label vector.
pub fn l2_costs(docs: &EmbeddingMatrix, labels: &EmbeddingMatrix) -> Result<CostMatrix> {
    if docs.dim() != labels.dim() {
        return Err(Error::input(format!(
            "document vectors have dimension {} but label vectors {}",
            docs.dim(),
            labels.dim()
        )));
    }
    let mut out = Array2::zeros((docs.count(), labels.count()));
    for ((i, j), c) in out.indexed_iter_mut() {
        let sq: f64 = docs
            .row(i)
            .iter()
            .zip(labels.row(j))
            .map(|(&x, &y)| {
                let d = f64::from(x) - f64::from(y);
                d * d
            })
            .sum();
        *c = sq.sqrt();
    }
    CostMatrix::new(out)
}

/// `1 - P / max_row(P)` per document, so each row's best label costs 0.
pub fn ce_costs(scores: &ScoreMatrix) -> Result<CostMatrix> {
    let mut out = scores.values().clone();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let max = row.iter().copied().fold(0.0, f64::max);
        if max <= 0.0 {
            return Err(Error::provider(format!(
                "document {i} has zero relevance to every label"
            )));
        }
        row.mapv_inplace(|s| 1.0 - s / max);
    }
    CostMatrix::new(out)
}

/// Label vectors as the mean of each spec's first `min(k, available)` seed
/// documents. `doc_ids[i]` names row `i` of `docs`.
pub fn seed_doc_label_embeddings(
    docs: &EmbeddingMatrix,
    doc_ids: &[String],
    specs: &[LabelSpec],
    k: usize,
) -> Result<EmbeddingMatrix> {
    if doc_ids.len() != docs.count() {
        return Err(Error::input(format!(
            "{} document ids for {} embeddings",
            doc_ids.len(),
            docs.count()
        )));
    }
    if k == 0 {
        return Err(Error::input("seed document count k must be at least 1"));
    }
    let index: HashMap<&str, usize> = doc_ids.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
    let mut out = Array2::<f32>::zeros((specs.len(), docs.dim()));
    for (row, spec) in out.rows_mut().into_iter().zip(specs) {
        if spec.seed_doc_ids.is_empty() {
            return Err(Error::input(format!("label {:?} has no seed documents", spec.id)));
        }
        let seeds = spec
            .seed_doc_ids
            .iter()
            .take(k)
            .map(|id| {
                index.get(id.as_str()).copied().ok_or_else(|| {
                    Error::input(format!("label {:?}: unknown seed document {id:?}", spec.id))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut sum = Array1::<f64>::zeros(docs.dim());
        for &s in &seeds {
            sum.zip_mut_with(&docs.row(s), |acc, &x| *acc += f64::from(x));
        }
        let count = seeds.len() as f64;
        for (dst, total) in row.into_iter().zip(sum.iter()) {
            *dst = (total / count) as f32;
        }
    }
    EmbeddingMatrix::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn l2_examples() {
        let doc = EmbeddingMatrix::new(array![[0.0f32, 0.0]]).unwrap();
        let labels = EmbeddingMatrix::new(array![[3.0f32, 4.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
        let c = l2_costs(&doc, &labels).unwrap();
        assert_eq!(c.view(), array![[5.0, 1.0, 0.0]]);

        let wrong = EmbeddingMatrix::new(array![[1.0f32]]).unwrap();
        assert!(l2_costs(&doc, &wrong).is_err());
    }

    #[test]
    fn ce_examples() {
        let s = ScoreMatrix::new(array![[0.8, 0.4], [0.3, 0.3]]).unwrap();
        assert_eq!(ce_costs(&s).unwrap().view(), array![[0.0, 0.5], [0.0, 0.0]]);

        let dead = ScoreMatrix::new(array![[0.5, 0.1], [0.0, 0.0]]).unwrap();
        let err = ce_costs(&dead).unwrap_err();
        assert!(matches!(err, Error::Provider(ref m) if m.contains("document 1")));

        assert!(ScoreMatrix::new(array![[1.5]]).is_err());
        assert!(ScoreMatrix::new(array![[f64::NAN]]).is_err());
    }

    fn seeded(id: &str, seeds: &[&str]) -> LabelSpec {
        LabelSpec {
            seed_doc_ids: seeds.iter().map(|s| s.to_string()).collect(),
            ..LabelSpec::named(id, id)
        }
    }

    #[test]
    fn seed_doc_means() {
        let docs = EmbeddingMatrix::new(array![[1.0f32, 0.0], [0.0, 1.0], [4.0, 4.0]]).unwrap();
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let specs = [seeded("one", &["c"]), seeded("mid", &["a", "b"]), seeded("cut", &["a", "b", "c"])];
        let out = seed_doc_label_embeddings(&docs, &ids, &specs, 2).unwrap();
        assert_eq!(out.values(), &array![[4.0f32, 4.0], [0.5, 0.5], [0.5, 0.5]]);

        assert!(seed_doc_label_embeddings(&docs, &ids, &[seeded("none", &[])], 5).is_err());
        let err = seed_doc_label_embeddings(&docs, &ids, &[seeded("x", &["zz"])], 5).unwrap_err();
        assert!(err.to_string().contains("zz"));
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(EmbeddingMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(EmbeddingMatrix::from_rows(&[vec![f32::INFINITY]]).is_err());
    }
}
