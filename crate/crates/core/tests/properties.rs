//! Property tests against brute-force oracles written independently of the
//! library code.

use noisylab::netcore::{
    self, backward, ce_logit_gradient, ce_loss, forward, softmax, NetworkParams, TargetDistribution,
};
use noisylab::oodeval::{aupr, auroc, fpr_at_tpr, ScoreSet};
use noisylab::rng;
use proptest::prelude::*;
use rand::Rng;

mod common;
use common::{oracle_aupr, oracle_auroc, oracle_fpr, relative_error};

const FD_STEP: f64 = 1e-5;

fn random_net(sizes: &[usize], seed: u64) -> NetworkParams {
    let mut r = rng::stream(seed, "prop-net");
    let values = (0..netcore::parameter_count(sizes))
        .map(|_| r.gen_range(-1.0..1.0))
        .collect();
    NetworkParams::from_values(sizes, values).unwrap()
}

/// Central differences computed here, not through the library helper.
fn oracle_gradient(params: &NetworkParams, x: &[f64], target: &TargetDistribution) -> Vec<f64> {
    let loss = |p: &NetworkParams| ce_loss(&forward(p, x).unwrap(), target);
    (0..params.len())
        .map(|i| {
            let mut plus = params.clone();
            plus.values_mut()[i] += FD_STEP;
            let mut minus = params.clone();
            minus.values_mut()[i] -= FD_STEP;
            (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP)
        })
        .collect()
}

fn sizes_strategy() -> impl Strategy<Value = Vec<usize>> {
    (1usize..5, prop::collection::vec(1usize..6, 0..3), 2usize..5).prop_map(|(d, hidden, k)| {
        let mut s = vec![d];
        s.extend(hidden);
        s.push(k);
        s
    })
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..10), shift in -100.0f64..100.0) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| *v >= 0.0));
        let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_survives_huge_logits(big in 500.0f64..1e6) {
        let p = softmax(&[big, 0.0, -big]);
        prop_assert!(p.iter().all(|v| v.is_finite()));
        prop_assert!((p[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn backprop_matches_central_differences(sizes in sizes_strategy(), seed in 0u64..10_000) {
        let params = random_net(&sizes, seed);
        let mut r = rng::stream(seed, "prop-input");
        let x: Vec<f64> = (0..sizes[0]).map(|_| r.gen_range(-2.0..2.0)).collect();
        let trace = forward(&params, &x).unwrap();
        // a kink within reach of the difference stencil makes the oracle invalid
        prop_assume!(trace.min_hidden_margin() > 10.0 * FD_STEP);
        let k = params.num_classes();
        let raw: Vec<f64> = (0..k).map(|_| r.gen_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let target = TargetDistribution::from_values(raw.iter().map(|v| v / total).collect());
        let exact = backward(&params, &trace, &target);
        let err = relative_error(&exact.0, &oracle_gradient(&params, &x, &target));
        prop_assert!(err <= 1e-5, "relative error {err}");
    }

    #[test]
    fn cross_entropy_is_linear_in_the_target(
        logits in prop::collection::vec(-5.0f64..5.0, 3),
        t1 in prop::collection::vec(-1.0f64..1.0, 3),
        t2 in prop::collection::vec(-1.0f64..1.0, 3),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let p = softmax(&logits);
        let ce = |t: &[f64]| -t.iter().zip(&p).map(|(ti, pi)| ti * pi.ln()).sum::<f64>();
        let mixed: Vec<f64> = t1.iter().zip(&t2).map(|(x, y)| a * x + b * y).collect();
        prop_assert!((ce(&mixed) - (a * ce(&t1) + b * ce(&t2))).abs() < 1e-9);

        let g = |t: &[f64]| ce_logit_gradient(&p, &TargetDistribution::from_values(t.to_vec()));
        let (g1, g2, gm) = (g(&t1), g(&t2), g(&mixed));
        for m in 0..3 {
            prop_assert!((gm[m] - (a * g1[m] + b * g2[m])).abs() < 1e-9);
        }
    }
}

fn score_sets() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    // coarse grids force ties, the continuous arm keeps sets tie-free
    prop_oneof![
        (
            prop::collection::vec((0u32..6).prop_map(|v| v as f64 / 5.0), 1..50),
            prop::collection::vec((0u32..6).prop_map(|v| v as f64 / 5.0), 1..50)
        ),
        (
            prop::collection::vec(0.0f64..1.0, 1..50),
            prop::collection::vec(0.0f64..1.0, 1..50)
        ),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn metrics_equal_exhaustive_oracles((ins, outs) in score_sets(), tpr in 0.05f64..=1.0) {
        let s = ScoreSet::new(ins.clone(), outs.clone()).unwrap();
        prop_assert_eq!(fpr_at_tpr(&s, tpr), oracle_fpr(&ins, &outs, tpr));
        prop_assert_eq!(fpr_at_tpr(&s, 0.95), oracle_fpr(&ins, &outs, 0.95));
        prop_assert_eq!(auroc(&s), oracle_auroc(&ins, &outs));
        prop_assert_eq!(aupr(&s), oracle_aupr(&ins, &outs));
    }

    #[test]
    fn metrics_ignore_strictly_increasing_transforms(
        ins in prop::collection::vec(0u32..40, 1..40),
        outs in prop::collection::vec(0u32..40, 1..40),
    ) {
        let raw = |v: &[u32]| v.iter().map(|x| *x as f64).collect::<Vec<_>>();
        let warp = |v: &[u32]| v.iter().map(|x| (*x as f64).powi(3) + (*x as f64 / 10.0).exp()).collect::<Vec<_>>();
        let a = ScoreSet::new(raw(&ins), raw(&outs)).unwrap();
        let b = ScoreSet::new(warp(&ins), warp(&outs)).unwrap();
        prop_assert_eq!(fpr_at_tpr(&a, 0.95), fpr_at_tpr(&b, 0.95));
        prop_assert_eq!(auroc(&a), auroc(&b));
        prop_assert_eq!(aupr(&a), aupr(&b));
    }

    #[test]
    fn auroc_swap_symmetry_without_ties(
        ins in prop::collection::vec(0.0f64..1.0, 1..60),
        outs in prop::collection::vec(0.0f64..1.0, 1..60),
    ) {
        let mut all: Vec<f64> = ins.iter().chain(&outs).copied().collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        prop_assume!(all.len() == ins.len() + outs.len());
        let s = ScoreSet::new(ins, outs).unwrap();
        prop_assert!((auroc(&s) + auroc(&s.swapped()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fpr_does_not_increase_as_tpr_target_drops((ins, outs) in score_sets(), mut targets in prop::collection::vec(0.01f64..=1.0, 2..8)) {
        let s = ScoreSet::new(ins, outs).unwrap();
        targets.sort_by(|a, b| b.total_cmp(a));
        let fprs: Vec<f64> = targets.iter().map(|t| fpr_at_tpr(&s, *t)).collect();
        prop_assert!(fprs.windows(2).all(|w| w[1] <= w[0]), "{targets:?} -> {fprs:?}");
    }
}
