use edtm_core::corpus::{render_label, LabelSpec};
use edtm_core::costs::{
    ce_costs, l2_costs, seed_doc_label_embeddings, EmbeddingMatrix, ScoreMatrix,
};
use edtm_testkit::fixtures;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_embeddings(rng: &mut impl Rng, count: usize, dim: usize) -> EmbeddingMatrix {
    let values = Array2::from_shape_fn((count, dim), |_| rng.random_range(-3.0f32..3.0));
    EmbeddingMatrix::new(values).unwrap()
}

fn as_f64_rows(e: &EmbeddingMatrix) -> Vec<Vec<f64>> {
    e.values()
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|&x| f64::from(x)).collect())
        .collect()
}

#[test]
fn l2_matches_double_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let docs = random_embeddings(&mut rng, 4, 6);
    let labels = random_embeddings(&mut rng, 3, 6);
    let c = l2_costs(&docs, &labels).unwrap();
    let (d, l) = (as_f64_rows(&docs), as_f64_rows(&labels));
    for i in 0..4 {
        for j in 0..3 {
            assert!((c.view()[[i, j]] - fixtures::euclidean(&d[i], &l[j])).abs() < 1e-12);
        }
    }
}

#[test]
fn seed_mean_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let docs = random_embeddings(&mut rng, 9, 5);
    let ids: Vec<String> = (0..9).map(|i| format!("d{i}")).collect();
    let picks = [7usize, 2, 4, 0, 8];
    let spec = LabelSpec {
        seed_doc_ids: picks.iter().map(|&i| ids[i].clone()).collect(),
        ..LabelSpec::named("x", "x")
    };
    let out = seed_doc_label_embeddings(&docs, &ids, &[spec], 5).unwrap();
    let rows = as_f64_rows(&docs);
    for k in 0..5 {
        let mean: f64 = picks.iter().map(|&i| rows[i][k]).sum::<f64>() / 5.0;
        // The mean is formed in f64 and stored at f32 precision.
        assert!((f64::from(out.values()[[0, k]]) - mean).abs() <= f64::from(f32::EPSILON) * 3.0);
        assert!((f64::from(out.values()[[0, k]]) - f64::from(mean as f32)).abs() < 1e-12);
    }
}

#[test]
fn seed_docs_beyond_k_are_ignored() {
    let docs = EmbeddingMatrix::new(ndarray::array![[0.0f32], [2.0], [100.0]]).unwrap();
    let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let spec = LabelSpec {
        seed_doc_ids: ids.clone(),
        ..LabelSpec::named("x", "x")
    };
    let out = seed_doc_label_embeddings(&docs, &ids, &[spec], 2).unwrap();
    assert_eq!(out.values()[[0, 0]], 1.0);
}

fn score_matrix() -> impl Strategy<Value = Array2<f64>> {
    (1usize..8, 1usize..6).prop_flat_map(|(n, m)| {
        prop::collection::vec(0.0f64..=1.0, n * m).prop_map(move |mut v| {
            // Guarantee a positive entry per row.
            for i in 0..n {
                if v[i * m..(i + 1) * m].iter().all(|&x| x == 0.0) {
                    v[i * m] = 0.5;
                }
            }
            Array2::from_shape_vec((n, m), v).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn ce_costs_follow_the_formula(values in score_matrix()) {
        let c = ce_costs(&ScoreMatrix::new(values.clone()).unwrap()).unwrap();
        for (i, row) in c.view().rows().into_iter().enumerate() {
            let max = values.row(i).iter().copied().fold(0.0, f64::max);
            prop_assert_eq!(row.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
            for (j, &v) in row.iter().enumerate() {
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert_eq!(v, 1.0 - values[[i, j]] / max);
            }
        }
    }

    #[test]
    fn self_distances_are_a_metric_table(seed in any::<u64>(), n in 1usize..8, dim in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_embeddings(&mut rng, n, dim);
        let c = l2_costs(&e, &e).unwrap();
        for i in 0..n {
            prop_assert_eq!(c.view()[[i, i]], 0.0);
            for j in 0..n {
                prop_assert_eq!(c.view()[[i, j]], c.view()[[j, i]]);
            }
        }
    }

    #[test]
    fn rendering_is_injective(
        a in "[A-Za-z][a-z ]{0,12}",
        b in "[A-Za-z][a-z ]{0,12}",
        ta in prop::collection::vec("[A-Za-z]{1,6}", 0..3),
        tb in prop::collection::vec("[A-Za-z]{1,6}", 0..3),
    ) {
        let template = "Is this a Wikipedia article about LABEL?".to_string();
        let spec = |name: &str, terms: &[String]| LabelSpec {
            description_terms: terms.to_vec(),
            template: template.clone(),
            ..LabelSpec::named("x", name)
        };
        // Names and terms that themselves contain " or " make the join ambiguous.
        prop_assume!(!a.contains(" or ") && !b.contains(" or "));
        prop_assume!(!a.ends_with(" or") && !b.ends_with(" or"));
        let ra = render_label(&spec(&a, &ta)).unwrap();
        let rb = render_label(&spec(&b, &tb)).unwrap();
        prop_assert_eq!(ra == rb, a == b && ta == tb);
        prop_assert_eq!(&ra, &render_label(&spec(&a, &ta)).unwrap());
    }
}
