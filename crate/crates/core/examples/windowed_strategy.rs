// The experimental windowed variant: cost ratios are averaged over the last
// few rounds before they enter the weights.
//
// ```bash
// cargo run --example windowed_strategy
// ```

use fedcost::{
    fedcostwavg_weights, fedcostwintavg_weights, ClientUpdate, CostHistory, ParamVector,
    StrategyConfig,
};

pub fn run_example() -> fedcost::Result<()> {
    // Per-round costs for two equally sized clients. Client 1 has one
    // lucky round and then stalls.
    let costs = [[1.0, 1.0], [0.8, 0.5], [0.7, 0.5], [0.6, 0.5]];
    let window = 3;

    let mut ratio_history: Vec<Vec<f64>> = Vec::new();
    for round in 1..costs.len() {
        let mut history = CostHistory::new();
        let updates: Vec<ClientUpdate> = (0..2)
            .map(|j| {
                history.insert(j as u64, costs[round - 1][j]);
                ClientUpdate {
                    client_id: j as u64,
                    params: ParamVector::zeros(1),
                    sample_count: 10,
                    cost: costs[round][j],
                }
            })
            .collect();
        ratio_history.push(
            (0..2)
                .map(|j| costs[round - 1][j] / costs[round][j])
                .collect(),
        );

        let plain = fedcostwavg_weights(&updates, &history, &StrategyConfig::fedcostwavg(0.5))?;
        let windowed = fedcostwintavg_weights(
            &updates,
            &ratio_history,
            &StrategyConfig::fedcostwintavg(0.5, window),
        )?;
        println!(
            "round {}: fedcostwavg {:.4?}  fedcostwintavg(window={window}) {:.4?}",
            round + 1,
            plain.weights(),
            windowed.weights()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> fedcost::Result<()> {
    run_example()
}
