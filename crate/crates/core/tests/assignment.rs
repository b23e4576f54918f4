use edtm_core::assignment::{
    batched_assign, batched_complete_assign, harden_complete, harden_partial, BatchSchedule,
};
use edtm_core::ot::{sinkhorn_complete, sinkhorn_partial, CostMatrix, Marginal, SolverConfig};
use edtm_testkit::fixtures;
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_cost(seed: u64, n: usize, m: usize) -> CostMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CostMatrix::from_rows(&fixtures::random_matrix(&mut rng, n, m, 0.0, 1.0)).unwrap()
}

fn argmaxes(values: &Array2<f64>) -> Vec<usize> {
    values
        .rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (j, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[test]
fn single_batch_equals_unbatched_solve() {
    let cost = random_cost(3, 12, 4);
    let cfg = SolverConfig::default();
    let schedule = BatchSchedule {
        batch_size: 12,
        epochs: 1,
        shuffle_seed: 5,
    };
    let batched = batched_complete_assign(&cost, &schedule, &cfg).unwrap();
    let direct = sinkhorn_complete(
        &cost,
        &Marginal::uniform(12).unwrap(),
        &Marginal::uniform(4).unwrap(),
        &cfg,
    )
    .unwrap();
    let diff = (&batched.values - &direct.values).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
    assert!(diff < 1e-9, "max difference {diff}");
}

#[test]
fn extra_epochs_over_one_batch_keep_the_argmax() {
    let cost = random_cost(11, 20, 5);
    let cfg = SolverConfig::default().with_lambda(10.0);
    let one = BatchSchedule {
        batch_size: 64,
        epochs: 1,
        shuffle_seed: 0,
    };
    let three = BatchSchedule { epochs: 3, ..one };
    let a = harden_complete(&batched_complete_assign(&cost, &one, &cfg).unwrap()).unwrap();
    let b = harden_complete(&batched_complete_assign(&cost, &three, &cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn partial_plan_hardens_to_the_floor_count() {
    let cost = random_cost(21, 10, 3);
    let cfg = SolverConfig::default().with_mass(0.7);
    let plan = sinkhorn_partial(
        &cost,
        &Marginal::uniform(10).unwrap(),
        &Marginal::uniform(3).unwrap(),
        &cfg,
    )
    .unwrap();
    let c = harden_partial(&plan, 0.7).unwrap();
    assert_eq!(c.assigned_count(), 7);
    assert_eq!(c.assigned_fraction(), 0.7);
}

#[test]
fn batched_partial_carries_mass_p() {
    let cost = random_cost(8, 28, 4);
    let schedule = BatchSchedule {
        batch_size: 7,
        epochs: 2,
        shuffle_seed: 1,
    };
    let cfg = SolverConfig::default().with_mass(0.6);
    let plan = batched_assign(&cost, &schedule, &cfg).unwrap();
    assert!((plan.total_mass - 0.6).abs() < 1e-6);
    assert!(plan.row_sums().iter().all(|&r| r <= 1.0 / 28.0 + 1e-6));
}

#[test]
fn invalid_solver_config_is_rejected_up_front() {
    let cost = random_cost(2, 6, 2);
    let schedule = BatchSchedule {
        batch_size: 2,
        epochs: 1,
        shuffle_seed: 0,
    };
    let bad = SolverConfig {
        max_iters: 0,
        ..SolverConfig::default()
    };
    assert!(batched_complete_assign(&cost, &schedule, &bad).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn full_batches_reproduce_unbatched_argmax(
        seed in any::<u64>(),
        n in 1usize..=32,
        m in 1usize..=8,
        epochs in 1usize..=3,
        lambda in prop::sample::select(vec![1.0, 10.0]),
    ) {
        let cost = random_cost(seed, n, m);
        let cfg = SolverConfig::default().with_lambda(lambda);
        let schedule = BatchSchedule { batch_size: n + (seed % 5) as usize, epochs, shuffle_seed: seed };
        let batched = batched_complete_assign(&cost, &schedule, &cfg).unwrap();
        let direct = sinkhorn_complete(
            &cost,
            &Marginal::uniform(n).unwrap(),
            &Marginal::uniform(m).unwrap(),
            &cfg,
        ).unwrap();
        prop_assert_eq!(argmaxes(&batched.values), argmaxes(&direct.values));
    }

    #[test]
    fn labels_receive_equal_mass(
        seed in any::<u64>(),
        n in 2usize..=40,
        m in 1usize..=6,
        batch_size in 1usize..=16,
        epochs in 1usize..=3,
    ) {
        let cost = random_cost(seed, n, m);
        let schedule = BatchSchedule { batch_size, epochs, shuffle_seed: seed };
        let plan = batched_complete_assign(&cost, &schedule, &SolverConfig::default()).unwrap();
        prop_assert!(plan.converged);
        for c in plan.col_sums().iter() {
            prop_assert!((c - 1.0 / m as f64).abs() <= 1e-6, "column mass {}", c);
        }
        prop_assert!((plan.total_mass - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn batching_is_deterministic(seed in any::<u64>(), n in 2usize..=30, batch_size in 1usize..=10) {
        let cost = random_cost(seed, n, 3);
        let schedule = BatchSchedule { batch_size, epochs: 2, shuffle_seed: seed };
        let cfg = SolverConfig::default();
        let a = batched_complete_assign(&cost, &schedule, &cfg).unwrap();
        let b = batched_complete_assign(&cost, &schedule, &cfg).unwrap();
        prop_assert_eq!(&a.values, &b.values);
        prop_assert_eq!(harden_complete(&a).unwrap(), harden_complete(&b).unwrap());
    }

    #[test]
    fn raising_p_never_unassigns(seed in any::<u64>(), n in 1usize..=25, p in 0.01f64..1.0, dp in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = fixtures::random_matrix(&mut rng, n, 3, 0.0, 1.0);
        let plan = edtm_core::ot::TransportPlan::from_values(
            Array2::from_shape_vec((n, 3), rows.concat()).unwrap(),
        ).unwrap();
        let low = harden_partial(&plan, p).unwrap();
        let high = harden_partial(&plan, (p + dp).min(1.0)).unwrap();
        for (l, h) in low.assignments.iter().zip(&high.assignments) {
            if l.is_some() {
                prop_assert_eq!(l, h);
            }
        }
    }

    #[test]
    fn full_mass_hardening_matches_complete(seed in any::<u64>(), n in 1usize..=20, m in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = fixtures::random_matrix(&mut rng, n, m, 0.01, 1.0);
        let plan = edtm_core::ot::TransportPlan::from_values(
            Array2::from_shape_vec((n, m), rows.concat()).unwrap(),
        ).unwrap();
        prop_assert_eq!(harden_partial(&plan, 1.0).unwrap(), harden_complete(&plan).unwrap());
    }
}
