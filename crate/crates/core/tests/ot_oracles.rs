//! Solver outputs checked against independent oracles and invariants.

use edtm_core::ot::{
    sinkhorn_complete, sinkhorn_partial, wasserstein_cost, CostMatrix, Marginal, SolverConfig,
};
use edtm_testkit::{fixtures, lp, scaling};
use ndarray::Array2;
use proptest::prelude::*;

fn to_rows(q: &Array2<f64>) -> Vec<Vec<f64>> {
    q.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn max_abs_diff(x: &Array2<f64>, y: &[Vec<f64>]) -> f64 {
    x.indexed_iter()
        .map(|((i, j), v)| (v - y[i][j]).abs())
        .fold(0.0, f64::max)
}

#[test]
fn complete_matches_frozen_fixed_point_oracle() {
    // Plain-domain Sinkhorn iterated to 1e-12; equals 0.5 e / (1 + e).
    let frozen = [
        [0.36552928931500245, 0.13447071068499758],
        [0.13447071068499758, 0.36552928931500245],
    ];
    let cost = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let half = Marginal::uniform(2).unwrap();
    let plan = sinkhorn_complete(&cost, &half, &half, &SolverConfig::default()).unwrap();
    let frozen: Vec<Vec<f64>> = frozen.iter().map(|r| r.to_vec()).collect();
    assert!(max_abs_diff(&plan.values, &frozen) < 1e-6);
    assert!(plan.converged);
}

#[test]
fn partial_matches_lp_and_dykstra_oracles() {
    let c = vec![vec![0.0, 5.0], vec![5.0, 0.0], vec![1.0, 1.0]];
    let a = [1.0 / 3.0; 3];
    let b = [0.5, 0.5];
    // Vertex enumeration over the partial polytope.
    let lp_vertex = [[1.0 / 3.0, 0.0], [0.0, 1.0 / 3.0], [0.0, 1.0 / 30.0]];
    // Multiplicative Dykstra projections run to a 1e-14 plan change.
    let dykstra = [
        [0.333333333334, 0.0],
        [0.0, 0.333333333334],
        [0.016666666666, 0.016666666666],
    ];

    let cost = CostMatrix::from_rows(&c).unwrap();
    let cfg = SolverConfig::default().with_lambda(10.0).with_mass(0.7);
    let plan = sinkhorn_partial(
        &cost,
        &Marginal::from_slice(&a).unwrap(),
        &Marginal::from_slice(&b).unwrap(),
        &cfg,
    )
    .unwrap();
    assert!(plan.converged, "residual {}", plan.residual);

    let lp_rows: Vec<Vec<f64>> = lp_vertex.iter().map(|r| r.to_vec()).collect();
    assert!(max_abs_diff(&plan.values, &lp_rows) < 2e-2);
    let dykstra_rows: Vec<Vec<f64>> = dykstra.iter().map(|r| r.to_vec()).collect();
    assert!(max_abs_diff(&plan.values, &dykstra_rows) < 1e-7, "{:?}", plan.values);

    let (lp_opt, _) = lp::vertex_enumeration(&lp::partial_lp(&c, &a, &b, 0.7)).unwrap();
    let w = wasserstein_cost(&plan, &cost).unwrap();
    assert!(w >= lp_opt - 1e-7 && w - lp_opt < 1e-3);
}

#[test]
fn regularization_limit_on_a_fixed_instance() {
    let c = vec![
        vec![0.9, 0.1, 0.5, 0.7],
        vec![0.2, 0.8, 0.6, 0.3],
        vec![0.4, 0.6, 0.1, 0.9],
        vec![0.7, 0.3, 0.8, 0.2],
    ];
    let u = [0.25; 4];
    let (exact, _) = lp::vertex_enumeration(&lp::transport_lp(&c, &u, &u)).unwrap();
    let (simplex_opt, _) = lp::simplex(&lp::transport_lp(&c, &u, &u)).unwrap();
    assert!((exact - simplex_opt).abs() < 1e-12);

    let cost = CostMatrix::from_rows(&c).unwrap();
    let m = Marginal::uniform(4).unwrap();
    let costs: Vec<f64> = [1.0, 10.0, 100.0]
        .iter()
        .map(|&lambda| {
            let plan =
                sinkhorn_complete(&cost, &m, &m, &SolverConfig::default().with_lambda(lambda))
                    .unwrap();
            assert!(plan.converged);
            wasserstein_cost(&plan, &cost).unwrap()
        })
        .collect();
    assert!(costs[0] >= costs[1] && costs[1] >= costs[2], "{costs:?}");
    assert!((costs[2] - exact).abs() < 1e-3, "{} vs {exact}", costs[2]);
}

#[test]
fn fixed_point_oracle_agrees_on_random_instances() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = 2 + (rand::Rng::random::<u32>(&mut rng) % 5) as usize;
        let m = 2 + (rand::Rng::random::<u32>(&mut rng) % 3) as usize;
        let c = fixtures::random_matrix(&mut rng, n, m, 0.0, 1.0);
        let a = fixtures::random_simplex(&mut rng, n, 0.1);
        let b = fixtures::random_simplex(&mut rng, m, 0.1);
        let oracle = scaling::sinkhorn_fixed_point(&c, &a, &b, 5.0, 1e-13);
        let plan = sinkhorn_complete(
            &CostMatrix::from_rows(&c).unwrap(),
            &Marginal::from_slice(&a).unwrap(),
            &Marginal::from_slice(&b).unwrap(),
            &SolverConfig::default().with_lambda(5.0),
        )
        .unwrap();
        assert!(max_abs_diff(&plan.values, &oracle) < 1e-7);
    }
}

fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    (1usize..=6, 1usize..=4).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(prop::collection::vec(0.0f64..1.0, m), n),
            prop::collection::vec(0.1f64..1.0, n),
            prop::collection::vec(0.1f64..1.0, m),
        )
            .prop_map(|(c, a, b)| {
                let sa: f64 = a.iter().sum();
                let sb: f64 = b.iter().sum();
                (
                    c,
                    a.iter().map(|x| x / sa).collect(),
                    b.iter().map(|x| x / sb).collect(),
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn complete_plans_are_feasible((c, a, b) in instance(), lambda in prop::sample::select(vec![0.5, 1.0, 10.0, 100.0])) {
        let cfg = SolverConfig::default().with_lambda(lambda);
        let plan = sinkhorn_complete(
            &CostMatrix::from_rows(&c).unwrap(),
            &Marginal::from_slice(&a).unwrap(),
            &Marginal::from_slice(&b).unwrap(),
            &cfg,
        ).unwrap();
        prop_assert!(plan.values.iter().all(|&v| v >= 0.0));
        prop_assert!(plan.converged, "residual {}", plan.residual);
        for (r, w) in plan.row_sums().iter().zip(&a) {
            prop_assert!((r - w).abs() <= cfg.tolerance);
        }
        for (s, w) in plan.col_sums().iter().zip(&b) {
            prop_assert!((s - w).abs() <= cfg.tolerance);
        }
        prop_assert!((plan.total_mass - plan.values.sum()).abs() < 1e-12);
    }

    #[test]
    fn partial_plans_respect_caps_and_budget((c, a, b) in instance(), p in 0.05f64..1.0) {
        let cfg = SolverConfig::default().with_mass(p);
        let plan = sinkhorn_partial(
            &CostMatrix::from_rows(&c).unwrap(),
            &Marginal::from_slice(&a).unwrap(),
            &Marginal::from_slice(&b).unwrap(),
            &cfg,
        ).unwrap();
        prop_assert!(plan.converged, "residual {}", plan.residual);
        prop_assert!((plan.total_mass - p).abs() <= cfg.tolerance);
        for (r, w) in plan.row_sums().iter().zip(&a) {
            prop_assert!(*r <= w + cfg.tolerance);
        }
        for (s, w) in plan.col_sums().iter().zip(&b) {
            prop_assert!(*s <= w + cfg.tolerance);
        }
    }

    #[test]
    fn full_mass_partial_equals_complete((c, a, b) in instance()) {
        let cost = CostMatrix::from_rows(&c).unwrap();
        let (a, b) = (Marginal::from_slice(&a).unwrap(), Marginal::from_slice(&b).unwrap());
        let cfg = SolverConfig::default();
        let complete = sinkhorn_complete(&cost, &a, &b, &cfg).unwrap();
        let partial = sinkhorn_partial(&cost, &a, &b, &cfg.with_mass(1.0)).unwrap();
        prop_assert!(max_abs_diff(&complete.values, &to_rows(&partial.values)) < 1e-6);
    }

    #[test]
    fn permuting_rows_permutes_the_plan((c, a, b) in instance(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let n = a.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let cost = CostMatrix::from_rows(&c).unwrap();
        let (ma, mb) = (Marginal::from_slice(&a).unwrap(), Marginal::from_slice(&b).unwrap());
        let cfg = SolverConfig::default().with_lambda(3.0);
        let base = sinkhorn_complete(&cost, &ma, &mb, &cfg).unwrap();
        let perm = sinkhorn_complete(&cost.select_rows(&order), &ma.permuted(&order), &mb, &cfg).unwrap();
        for (k, &i) in order.iter().enumerate() {
            for j in 0..b.len() {
                prop_assert!((perm.values[[k, j]] - base.values[[i, j]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cost_scale_with_matching_lambda_leaves_plan_unchanged((c, a, b) in instance(), k in 0.1f64..10.0) {
        let cost = CostMatrix::from_rows(&c).unwrap();
        let (ma, mb) = (Marginal::from_slice(&a).unwrap(), Marginal::from_slice(&b).unwrap());
        let base = sinkhorn_complete(&cost, &ma, &mb, &SolverConfig::default().with_lambda(2.0)).unwrap();
        let scaled = sinkhorn_complete(
            &cost.scaled(k).unwrap(), &ma, &mb,
            &SolverConfig::default().with_lambda(2.0 / k),
        ).unwrap();
        prop_assert!(max_abs_diff(&scaled.values, &to_rows(&base.values)) < 1e-7);
    }
}
