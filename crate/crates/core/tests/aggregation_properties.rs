mod common;

use common::oracle::{oracle_weights, oracle_windowed_weights, OracleStrategy};
use common::{random_instance, rng, Instance};
use fedcost::params::convex_combine;
use fedcost::{
    aggregate, fedavg_weights, fedcostwavg_weights, fedcostwintavg_weights, ClientUpdate,
    CostHistory, ParamVector, StrategyConfig,
};
use proptest::prelude::*;

fn build(inst: &Instance, dim: usize) -> (Vec<ClientUpdate>, CostHistory) {
    let mut history = CostHistory::new();
    let updates = (0..inst.samples.len())
        .map(|j| {
            history.insert(j as u64 * 3 + 1, inst.prev[j]);
            ClientUpdate {
                client_id: j as u64 * 3 + 1,
                params: ParamVector::new((0..dim).map(|t| (j * dim + t) as f64 * 0.1).collect())
                    .unwrap(),
                sample_count: inst.samples[j],
                cost: inst.curr[j],
            }
        })
        .collect();
    (updates, history)
}

fn samples_f64(inst: &Instance) -> Vec<f64> {
    inst.samples.iter().map(|&s| s as f64).collect()
}

fn instance() -> impl Strategy<Value = Instance> {
    (1usize..=5).prop_flat_map(|n| {
        (
            prop::collection::vec(1u64..1000, n),
            prop::collection::vec(1e-4f64..1e4, n),
            prop::collection::vec(1e-4f64..1e4, n),
            0.0f64..=1.0,
        )
            .prop_map(|(samples, prev, curr, alpha)| Instance {
                samples,
                prev,
                curr,
                alpha,
            })
    })
}

proptest! {
    #[test]
    fn weights_match_oracle(inst in instance(), dim in 0usize..=8) {
        let (updates, history) = build(&inst, dim);
        let s = samples_f64(&inst);

        let got = fedavg_weights(&updates).unwrap();
        let want = oracle_weights(OracleStrategy::FedAvg, &s, &inst.prev, &inst.curr, inst.alpha);
        for (g, w) in got.weights().iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-12);
        }

        let cfg = StrategyConfig::fedcostwavg(inst.alpha);
        let got = fedcostwavg_weights(&updates, &history, &cfg).unwrap();
        let want = oracle_weights(OracleStrategy::FedCostWAvg, &s, &inst.prev, &inst.curr, inst.alpha);
        for (g, w) in got.weights().iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-12);
        }

        let model = aggregate(&updates, &got).unwrap();
        prop_assert_eq!(model.dim(), dim);
        for t in 0..dim {
            let direct: f64 = (0..updates.len()).map(|j| want[j] * updates[j].params[t]).sum();
            prop_assert!((model[t] - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn normalised_and_non_negative(inst in instance()) {
        let (updates, history) = build(&inst, 1);
        let w = fedcostwavg_weights(&updates, &history, &StrategyConfig::fedcostwavg(inst.alpha)).unwrap();
        prop_assert!(w.weights().iter().all(|&x| x >= 0.0));
        prop_assert!((w.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn alpha_one_is_fedavg(inst in instance()) {
        let (updates, history) = build(&inst, 1);
        let a = fedcostwavg_weights(&updates, &history, &StrategyConfig::fedcostwavg(1.0)).unwrap();
        let b = fedavg_weights(&updates).unwrap();
        for (x, y) in a.weights().iter().zip(b.weights()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn cost_scale_invariant(inst in instance(), log_scale in -6.0f64..6.0) {
        let lambda = 10f64.powf(log_scale);
        let scaled = Instance {
            prev: inst.prev.iter().map(|c| c * lambda).collect(),
            curr: inst.curr.iter().map(|c| c * lambda).collect(),
            ..inst.clone()
        };
        let cfg = StrategyConfig::fedcostwavg(inst.alpha);
        let (u1, h1) = build(&inst, 1);
        let (u2, h2) = build(&scaled, 1);
        let a = fedcostwavg_weights(&u1, &h1, &cfg).unwrap();
        let b = fedcostwavg_weights(&u2, &h2, &cfg).unwrap();
        for (x, y) in a.weights().iter().zip(b.weights()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn larger_improvement_gains_weight(
        inst in instance().prop_filter("needs two clients", |i| i.samples.len() >= 2),
        pick in any::<prop::sample::Index>(),
        factor in 1.01f64..10.0,
        alpha in 0.0f64..0.99,
    ) {
        let equal = Instance { samples: vec![10; inst.samples.len()], alpha, ..inst };
        let j = pick.index(equal.samples.len());
        let mut better = equal.clone();
        better.prev[j] *= factor;
        let cfg = StrategyConfig::fedcostwavg(alpha);
        let (u1, h1) = build(&equal, 1);
        let (u2, h2) = build(&better, 1);
        let before = fedcostwavg_weights(&u1, &h1, &cfg).unwrap();
        let after = fedcostwavg_weights(&u2, &h2, &cfg).unwrap();
        for i in 0..equal.samples.len() {
            if i == j {
                prop_assert!(after.weights()[i] > before.weights()[i]);
            } else {
                prop_assert!(after.weights()[i] < before.weights()[i]);
            }
        }
    }

    #[test]
    fn permutation_equivariant(inst in instance(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let n = inst.samples.len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng(seed));
        let (updates, history) = build(&inst, 3);
        let permuted: Vec<ClientUpdate> = perm.iter().map(|&p| updates[p].clone()).collect();
        let cfg = StrategyConfig::fedcostwavg(inst.alpha);
        let a = fedcostwavg_weights(&updates, &history, &cfg).unwrap();
        let b = fedcostwavg_weights(&permuted, &history, &cfg).unwrap();
        for (pos, &p) in perm.iter().enumerate() {
            prop_assert!((b.weights()[pos] - a.weights()[p]).abs() <= 1e-12);
            prop_assert_eq!(b.client_ids()[pos], a.client_ids()[p]);
        }
        let ma = aggregate(&updates, &a).unwrap();
        let mb = aggregate(&permuted, &b).unwrap();
        for t in 0..3 {
            prop_assert!((ma[t] - mb[t]).abs() <= 1e-12);
        }
    }

    #[test]
    fn windowed_matches_oracle(
        inst in instance(),
        rounds in prop::collection::vec(prop::collection::vec(0.1f64..10.0, 5), 1..6),
        window in 1usize..5,
    ) {
        let n = inst.samples.len();
        let history: Vec<Vec<f64>> = rounds.iter().map(|r| r[..n].to_vec()).collect();
        let (updates, _) = build(&inst, 1);
        let cfg = StrategyConfig::fedcostwintavg(inst.alpha, window);
        let got = fedcostwintavg_weights(&updates, &history, &cfg).unwrap();
        let used = &history[history.len().saturating_sub(window)..];
        let want = oracle_windowed_weights(&samples_f64(&inst), used, inst.alpha);
        for (g, w) in got.weights().iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn convex_combine_properties(
        rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 1..6),
        raw in prop::collection::vec(0.0f64..1.0, 6),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let n = rows.len();
        let total: f64 = raw[..n].iter().sum::<f64>() + 1e-9;
        let weights: Vec<f64> = raw[..n].iter().map(|w| (w + 1e-9 / n as f64) / total).collect();
        let vectors: Vec<ParamVector> = rows.iter().map(|r| ParamVector::new(r.clone()).unwrap()).collect();
        let refs: Vec<&ParamVector> = vectors.iter().collect();
        let out = convex_combine(&refs, &weights).unwrap();

        for t in 0..4 {
            let bound = rows.iter().map(|r| r[t].abs()).fold(0.0, f64::max);
            prop_assert!(out[t].abs() <= bound * (1.0 + 1e-12));
        }

        let same: Vec<&ParamVector> = vec![&vectors[0]; n];
        let fixed = convex_combine(&same, &weights).unwrap();
        for t in 0..4 {
            prop_assert!((fixed[t] - vectors[0][t]).abs() <= 1e-12 * (1.0 + vectors[0][t].abs()));
        }

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng(seed));
        let prefs: Vec<&ParamVector> = perm.iter().map(|&p| &vectors[p]).collect();
        let pw: Vec<f64> = perm.iter().map(|&p| weights[p]).collect();
        let permuted = convex_combine(&prefs, &pw).unwrap();
        for t in 0..4 {
            prop_assert!((permuted[t] - out[t]).abs() <= 1e-12 * (1.0 + out[t].abs()));
        }
    }
}

#[test]
fn oracle_uniform_when_ratios_equal() {
    let w = oracle_weights(
        OracleStrategy::FedCostWAvg,
        &[1., 5., 9.],
        &[2., 4., 6.],
        &[1., 2., 3.],
        0.0,
    );
    for x in w {
        assert!((x - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn thousand_random_instances_match_oracle() {
    let mut r = rng(2024);
    for _ in 0..1000 {
        let inst = random_instance(&mut r, 5);
        let (updates, history) = build(&inst, 2);
        let s = samples_f64(&inst);
        let got = fedcostwavg_weights(&updates, &history, &StrategyConfig::fedcostwavg(inst.alpha))
            .unwrap();
        let want = oracle_weights(
            OracleStrategy::FedCostWAvg,
            &s,
            &inst.prev,
            &inst.curr,
            inst.alpha,
        );
        for (g, w) in got.weights().iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12, "{inst:?}");
        }
    }
}
