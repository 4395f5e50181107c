//! Naive reference implementations used only as test oracles.
//!
//! Written as direct transcriptions of the averaging formulas and of central
//! differences. Nothing here calls into the crate's aggregation code.

use fedcost::models::{self, Batch, ModelSpec};
use fedcost::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleStrategy {
    FedAvg,
    FedCostWAvg,
}

/// `M_{i+1}` coefficients.
///
/// FedAvg:      w_j = s_j / S,                       S = sum_j s_j
/// FedCostWAvg: w_j = a s_j / S + (1 - a) k_j / K,   k_j = prev_j / curr_j, K = sum_j k_j
pub fn oracle_weights(
    strategy: OracleStrategy,
    s: &[f64],
    prev: &[f64],
    curr: &[f64],
    alpha: f64,
) -> Vec<f64> {
    assert!(!s.is_empty());
    assert!(s.iter().all(|&x| x > 0.0));
    let big_s: f64 = s.iter().sum();
    match strategy {
        OracleStrategy::FedAvg => s.iter().map(|sj| sj / big_s).collect(),
        OracleStrategy::FedCostWAvg => {
            assert_eq!(s.len(), prev.len());
            assert_eq!(s.len(), curr.len());
            assert!(prev.iter().chain(curr).all(|&c| c > 0.0));
            let mut k = Vec::new();
            for j in 0..s.len() {
                k.push(prev[j] / curr[j]);
            }
            let big_k: f64 = k.iter().sum();
            let mut w = Vec::new();
            for j in 0..s.len() {
                w.push(alpha * s[j] / big_s + (1.0 - alpha) * k[j] / big_k);
            }
            w
        }
    }
}

/// Windowed variant: k_j replaced by the mean of the client's ratios over the
/// given rounds (oldest first, current last).
pub fn oracle_windowed_weights(s: &[f64], ratio_rounds: &[Vec<f64>], alpha: f64) -> Vec<f64> {
    let n = s.len();
    let big_s: f64 = s.iter().sum();
    let mut k = vec![0.0; n];
    for round in ratio_rounds {
        for j in 0..n {
            k[j] += round[j];
        }
    }
    for kj in k.iter_mut() {
        *kj /= ratio_rounds.len() as f64;
    }
    let big_k: f64 = k.iter().sum();
    (0..n)
        .map(|j| alpha * s[j] / big_s + (1.0 - alpha) * k[j] / big_k)
        .collect()
}

/// Central differences of an arbitrary scalar function.
pub fn fd_gradient_fn(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0);
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central-difference gradient of a model's mean loss.
pub fn fd_gradient(spec: &ModelSpec, params: &ParamVector, batch: &Batch, h: f64) -> Vec<f64> {
    fd_gradient_fn(
        |p| {
            let pv = ParamVector::new(p.to_vec()).unwrap();
            models::loss(spec, &pv, batch).unwrap()
        },
        params.as_slice(),
        h,
    )
}
