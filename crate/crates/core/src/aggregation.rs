//! Averaging weights and global model aggregation.
//!
//! FedAvg weights client `j` by `s_j / S`. FedCostWAvg adds a cost
//! improvement term:
//!
//! ```text
//! w_j = alpha * s_j / S + (1 - alpha) * k_j / K
//! k_j = c_prev_j / c_curr_j,  K = sum_j k_j
//! ```
//!
//! where `c_prev_j` is the client's cost reported in the previous round and
//! `c_curr_j` the cost it reports now. A client whose local loss dropped a
//! lot pulls the global model towards its parameters more than one whose
//! loss barely moved.
//!
//! FedCostWIntAvg (experimental) replaces `k_j` by its mean over the last
//! `window` rounds.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{check_weights, convex_combine, ParamVector};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_MIN_COST_FLOOR: f64 = 1e-12;
pub const DEFAULT_WINDOW: usize = 3;

/// One center's report at the end of a round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: u64,
    pub params: ParamVector,
    pub sample_count: u64,
    /// Mean local loss after this round's local training.
    pub cost: f64,
}

impl ClientUpdate {
    pub fn validate(&self) -> Result<()> {
        if self.sample_count == 0 {
            return Err(Error::EmptyClient {
                client_id: self.client_id,
            });
        }
        if !(self.cost.is_finite() && self.cost > 0.0) {
            return Err(Error::InvalidCost {
                client_id: self.client_id,
                cost: self.cost,
            });
        }
        Ok(())
    }
}

/// Each client's cost from the previous round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostHistory {
    prev_cost_by_client: BTreeMap<u64, f64>,
}

impl CostHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_updates(updates: &[ClientUpdate]) -> Self {
        CostHistory {
            prev_cost_by_client: updates.iter().map(|u| (u.client_id, u.cost)).collect(),
        }
    }

    pub fn insert(&mut self, client_id: u64, cost: f64) {
        self.prev_cost_by_client.insert(client_id, cost);
    }

    pub fn get(&self, client_id: u64) -> Option<f64> {
        self.prev_cost_by_client.get(&client_id).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.prev_cost_by_client.is_empty()
    }

    pub fn len(&self) -> usize {
        self.prev_cost_by_client.len()
    }

    pub fn covers(&self, updates: &[ClientUpdate]) -> bool {
        updates
            .iter()
            .all(|u| self.prev_cost_by_client.contains_key(&u.client_id))
    }

    pub fn client_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.prev_cost_by_client.keys().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    FedAvg,
    FedCostWAvg,
    /// Windowed mean of the cost ratio. Experimental.
    FedCostWIntAvg,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::FedAvg => "fedavg",
            StrategyKind::FedCostWAvg => "fedcostwavg",
            StrategyKind::FedCostWIntAvg => "fedcostwintavg",
        }
    }

    pub fn is_experimental(self) -> bool {
        self == StrategyKind::FedCostWIntAvg
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fedavg" => Ok(StrategyKind::FedAvg),
            "fedcostwavg" => Ok(StrategyKind::FedCostWAvg),
            "fedcostwintavg" => Ok(StrategyKind::FedCostWIntAvg),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub alpha: f64,
    /// Rounds averaged by the windowed variant.
    pub window: usize,
    /// Lower bound applied to the current cost before dividing.
    pub min_cost_floor: f64,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        StrategyConfig {
            kind,
            alpha: DEFAULT_ALPHA,
            window: DEFAULT_WINDOW,
            min_cost_floor: DEFAULT_MIN_COST_FLOOR,
        }
    }

    pub fn fedavg() -> Self {
        Self::new(StrategyKind::FedAvg)
    }

    pub fn fedcostwavg(alpha: f64) -> Self {
        StrategyConfig {
            alpha,
            ..Self::new(StrategyKind::FedCostWAvg)
        }
    }

    pub fn fedcostwintavg(alpha: f64, window: usize) -> Self {
        StrategyConfig {
            alpha,
            window,
            ..Self::new(StrategyKind::FedCostWIntAvg)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        if !(self.min_cost_floor.is_finite() && self.min_cost_floor > 0.0) {
            return Err(Error::Config(format!(
                "min_cost_floor {} must be positive",
                self.min_cost_floor
            )));
        }
        Ok(())
    }

    fn expect_kind(&self, kind: StrategyKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Config(format!(
                "expected a {kind} config, got {}",
                self.kind
            )));
        }
        self.validate()
    }
}

/// Averaging weights aligned with a list of client ids.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    client_ids: Vec<u64>,
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(client_ids: Vec<u64>, weights: Vec<f64>) -> Result<Self> {
        if client_ids.len() != weights.len() {
            return Err(Error::Dimension {
                expected: client_ids.len(),
                got: weights.len(),
            });
        }
        check_weights(&weights)?;
        Ok(WeightVector {
            client_ids,
            weights,
        })
    }

    pub fn client_ids(&self) -> &[u64] {
        &self.client_ids
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, client_id: u64) -> Option<f64> {
        self.client_ids
            .iter()
            .position(|&id| id == client_id)
            .map(|pos| self.weights[pos])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn validate_updates(updates: &[ClientUpdate]) -> Result<()> {
    if updates.is_empty() {
        return Err(Error::EmptyRound);
    }
    updates.iter().try_for_each(ClientUpdate::validate)
}

fn ids(updates: &[ClientUpdate]) -> Vec<u64> {
    updates.iter().map(|u| u.client_id).collect()
}

/// `s_j / S`, in input order.
pub fn fedavg_weights(updates: &[ClientUpdate]) -> Result<WeightVector> {
    validate_updates(updates)?;
    let total: f64 = updates.iter().map(|u| u.sample_count as f64).sum();
    let weights = updates
        .iter()
        .map(|u| u.sample_count as f64 / total)
        .collect();
    WeightVector::new(ids(updates), weights)
}

/// Cost ratios `k_j = c_prev_j / max(c_curr_j, floor)`.
pub fn cost_ratios(
    updates: &[ClientUpdate],
    history: &CostHistory,
    floor: f64,
) -> Result<Vec<f64>> {
    validate_updates(updates)?;
    updates
        .iter()
        .map(|u| {
            let prev = history.get(u.client_id).ok_or(Error::MissingHistory {
                client_id: u.client_id,
            })?;
            if !(prev.is_finite() && prev > 0.0) {
                return Err(Error::InvalidCost {
                    client_id: u.client_id,
                    cost: prev,
                });
            }
            let k = prev / u.cost.max(floor);
            if !k.is_finite() {
                return Err(Error::Numeric(format!(
                    "cost ratio for client {} overflowed",
                    u.client_id
                )));
            }
            Ok(k)
        })
        .collect()
}

fn mix_weights(updates: &[ClientUpdate], ratios: &[f64], alpha: f64) -> Result<WeightVector> {
    let total_samples: f64 = updates.iter().map(|u| u.sample_count as f64).sum();
    let total_ratio: f64 = ratios.iter().sum();
    let weights = updates
        .iter()
        .zip(ratios)
        .map(|(u, k)| {
            alpha * (u.sample_count as f64 / total_samples) + (1.0 - alpha) * (k / total_ratio)
        })
        .collect();
    WeightVector::new(ids(updates), weights)
}

/// `alpha * s_j / S + (1 - alpha) * k_j / K`.
pub fn fedcostwavg_weights(
    updates: &[ClientUpdate],
    history: &CostHistory,
    config: &StrategyConfig,
) -> Result<WeightVector> {
    config.expect_kind(StrategyKind::FedCostWAvg)?;
    let ratios = cost_ratios(updates, history, config.min_cost_floor)?;
    mix_weights(updates, &ratios, config.alpha)
}

/// FedCostWAvg with each `k_j` replaced by its mean over the most recent
/// `config.window` entries of `ratio_history`.
///
/// `ratio_history` holds one ratio vector per round, oldest first, aligned
/// with `updates`; the last entry must be the current round's ratios.
pub fn fedcostwintavg_weights(
    updates: &[ClientUpdate],
    ratio_history: &[Vec<f64>],
    config: &StrategyConfig,
) -> Result<WeightVector> {
    config.expect_kind(StrategyKind::FedCostWIntAvg)?;
    validate_updates(updates)?;
    if ratio_history.is_empty() {
        return Err(Error::MissingHistory {
            client_id: updates[0].client_id,
        });
    }
    let window = &ratio_history[ratio_history.len().saturating_sub(config.window)..];
    let mut mean = vec![0.0; updates.len()];
    for round in window {
        if round.len() != updates.len() {
            return Err(Error::Dimension {
                expected: updates.len(),
                got: round.len(),
            });
        }
        for (m, &k) in mean.iter_mut().zip(round) {
            if !(k.is_finite() && k > 0.0) {
                return Err(Error::Numeric(format!("invalid cost ratio {k} in history")));
            }
            *m += k;
        }
    }
    let count = window.len() as f64;
    mean.iter_mut().for_each(|m| *m /= count);
    mix_weights(updates, &mean, config.alpha)
}

/// New global model: the weighted average of the clients' parameters.
pub fn aggregate(updates: &[ClientUpdate], weights: &WeightVector) -> Result<ParamVector> {
    if updates.is_empty() {
        return Err(Error::EmptyRound);
    }
    if weights.len() != updates.len() {
        return Err(Error::Dimension {
            expected: updates.len(),
            got: weights.len(),
        });
    }
    if ids(updates) != weights.client_ids {
        return Err(Error::Config(
            "weights are not aligned with the updates".into(),
        ));
    }
    let params: Vec<&ParamVector> = updates.iter().map(|u| &u.params).collect();
    convex_combine(&params, &weights.weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn update(client_id: u64, sample_count: u64, cost: f64) -> ClientUpdate {
        ClientUpdate {
            client_id,
            params: ParamVector::zeros(2),
            sample_count,
            cost,
        }
    }

    fn updates(samples: &[u64], curr: &[f64]) -> Vec<ClientUpdate> {
        samples
            .iter()
            .zip(curr)
            .enumerate()
            .map(|(j, (&s, &c))| update(j as u64, s, c))
            .collect()
    }

    fn history(prev: &[f64]) -> CostHistory {
        let mut h = CostHistory::new();
        for (j, &c) in prev.iter().enumerate() {
            h.insert(j as u64, c);
        }
        h
    }

    fn assert_close(got: &[f64], want: &[f64], tol: f64) {
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() <= tol, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn fedavg_examples() {
        let w = fedavg_weights(&updates(&[1, 3], &[1., 1.])).unwrap();
        assert_close(w.weights(), &[0.25, 0.75], 1e-15);
        let w = fedavg_weights(&updates(&[7], &[1.])).unwrap();
        assert_eq!(w.weights(), &[1.0]);
        let w = fedavg_weights(&updates(&[2, 2, 2], &[1., 1., 1.])).unwrap();
        assert_close(w.weights(), &[1. / 3.; 3], 1e-15);
    }

    #[test]
    fn fedavg_rejects_empty_and_invalid() {
        assert!(matches!(fedavg_weights(&[]), Err(Error::EmptyRound)));
        assert!(matches!(
            fedavg_weights(&updates(&[0], &[1.])),
            Err(Error::EmptyClient { client_id: 0 })
        ));
        assert!(matches!(
            fedavg_weights(&updates(&[1], &[0.])),
            Err(Error::InvalidCost { .. })
        ));
        assert!(matches!(
            fedavg_weights(&updates(&[1], &[f64::NAN])),
            Err(Error::InvalidCost { .. })
        ));
    }

    #[test]
    fn cost_ratio_examples() {
        let k = cost_ratios(&updates(&[1, 1], &[1., 1.]), &history(&[2., 1.]), 1e-12).unwrap();
        assert_eq!(k, vec![2.0, 1.0]);
        let k = cost_ratios(&updates(&[1, 1, 1], &[0.3; 3]), &history(&[0.3; 3]), 1e-12).unwrap();
        assert_eq!(k, vec![1.0; 3]);
        let k = cost_ratios(&updates(&[1], &[6.]), &history(&[3.]), 1e-12).unwrap();
        assert_eq!(k, vec![0.5]);
    }

    #[test]
    fn cost_ratio_floor_and_errors() {
        let k = cost_ratios(&updates(&[1], &[1e-20]), &history(&[1.]), 1e-12).unwrap();
        assert_eq!(k, vec![1e12]);
        assert!(matches!(
            cost_ratios(&updates(&[1, 1], &[1., 1.]), &history(&[1.]), 1e-12),
            Err(Error::MissingHistory { client_id: 1 })
        ));
        assert!(matches!(
            cost_ratios(&updates(&[1], &[1.]), &history(&[-1.]), 1e-12),
            Err(Error::InvalidCost { client_id: 0, .. })
        ));
        assert!(matches!(
            cost_ratios(&updates(&[1], &[1e-20]), &history(&[1e300]), 1e-12),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn fedcostwavg_worked_instance() {
        let cfg = StrategyConfig::fedcostwavg(0.5);
        let w =
            fedcostwavg_weights(&updates(&[1, 1], &[1., 1.]), &history(&[2., 1.]), &cfg).unwrap();
        assert_close(w.weights(), &[7. / 12., 5. / 12.], 1e-12);
    }

    #[test]
    fn fedcostwavg_symmetric_and_alpha_one() {
        let cfg = StrategyConfig::fedcostwavg(0.5);
        let w =
            fedcostwavg_weights(&updates(&[4, 4], &[1., 1.]), &history(&[1., 1.]), &cfg).unwrap();
        assert_eq!(w.weights(), &[0.5, 0.5]);

        let ups = updates(&[3, 9, 1], &[0.2, 5.0, 1.0]);
        let h = history(&[1.0, 0.1, 7.0]);
        let w = fedcostwavg_weights(&ups, &h, &StrategyConfig::fedcostwavg(1.0)).unwrap();
        assert_eq!(w, fedavg_weights(&ups).unwrap());
    }

    #[test]
    fn fedcostwavg_config_errors() {
        let ups = updates(&[1], &[1.]);
        let h = history(&[1.]);
        for alpha in [-0.1, 1.1, f64::NAN] {
            assert!(matches!(
                fedcostwavg_weights(&ups, &h, &StrategyConfig::fedcostwavg(alpha)),
                Err(Error::Config(_))
            ));
        }
        assert!(matches!(
            fedcostwavg_weights(&ups, &h, &StrategyConfig::fedavg()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn windowed_examples() {
        let ups = updates(&[1, 1], &[1., 1.]);
        let cfg = StrategyConfig::fedcostwintavg(0.0, 2);
        let w = fedcostwintavg_weights(&ups, &[vec![2., 1.], vec![1., 1.]], &cfg).unwrap();
        assert_close(w.weights(), &[0.6, 0.4], 1e-12);

        // Window of one only sees the current round.
        let h = history(&[2., 1.]);
        let k = cost_ratios(&ups, &h, 1e-12).unwrap();
        let one = StrategyConfig::fedcostwintavg(0.5, 1);
        let got = fedcostwintavg_weights(&ups, &[vec![9., 9.], k], &one).unwrap();
        let want = fedcostwavg_weights(&ups, &h, &StrategyConfig::fedcostwavg(0.5)).unwrap();
        assert_eq!(got, want);

        let flat = fedcostwintavg_weights(
            &updates(&[1, 1, 1], &[1.; 3]),
            &[vec![1.5; 3], vec![0.5; 3]],
            &StrategyConfig::fedcostwintavg(0.0, 5),
        )
        .unwrap();
        assert_close(flat.weights(), &[1. / 3.; 3], 1e-15);
    }

    #[test]
    fn windowed_errors() {
        let ups = updates(&[1, 1], &[1., 1.]);
        let cfg = StrategyConfig::fedcostwintavg(0.5, 2);
        assert!(matches!(
            fedcostwintavg_weights(&ups, &[], &cfg),
            Err(Error::MissingHistory { .. })
        ));
        assert!(matches!(
            fedcostwintavg_weights(&ups, &[vec![1.]], &cfg),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            fedcostwintavg_weights(
                &ups,
                &[vec![1., 1.]],
                &StrategyConfig::fedcostwintavg(0.5, 0)
            ),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn aggregate_examples() {
        let mut ups = updates(&[1, 3], &[1., 1.]);
        ups[0].params = ParamVector::new(vec![0., 0.]).unwrap();
        ups[1].params = ParamVector::new(vec![4., 8.]).unwrap();
        let w = fedavg_weights(&ups).unwrap();
        assert_eq!(aggregate(&ups, &w).unwrap().as_slice(), &[3., 6.]);

        let one = &ups[1..];
        let w = WeightVector::new(vec![1], vec![1.0]).unwrap();
        assert_eq!(aggregate(one, &w).unwrap(), ups[1].params);

        let misaligned = WeightVector::new(vec![1, 0], vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            aggregate(&ups, &misaligned),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn strategy_names_roundtrip() {
        for kind in [
            StrategyKind::FedAvg,
            StrategyKind::FedCostWAvg,
            StrategyKind::FedCostWIntAvg,
        ] {
            assert_eq!(kind.name().parse::<StrategyKind>().unwrap(), kind);
        }
        assert!("fedprox".parse::<StrategyKind>().is_err());
    }
}
