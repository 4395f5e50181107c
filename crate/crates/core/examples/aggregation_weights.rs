// FedAvg and FedCostWAvg weights for a hand-made round of three clients.
//
// ```bash
// cargo run --example aggregation_weights
// ```

use fedcost::{
    aggregate, cost_ratios, fedavg_weights, fedcostwavg_weights, ClientUpdate, CostHistory,
    ParamVector, StrategyConfig,
};

pub fn run_example() -> fedcost::Result<()> {
    // (client id, samples, previous cost, current cost, local model)
    let clients = [
        (0, 120, 0.90, 0.45, [1.0, 0.0]),
        (1, 40, 0.80, 0.70, [0.0, 1.0]),
        (2, 40, 0.50, 0.49, [-1.0, -1.0]),
    ];

    let mut history = CostHistory::new();
    let mut updates = Vec::new();
    for (id, samples, prev, curr, params) in clients {
        history.insert(id, prev);
        updates.push(ClientUpdate {
            client_id: id,
            params: ParamVector::new(params.to_vec())?,
            sample_count: samples,
            cost: curr,
        });
    }

    let floor = StrategyConfig::fedcostwavg(0.5).min_cost_floor;
    println!("cost ratios: {:?}", cost_ratios(&updates, &history, floor)?);

    let fedavg = fedavg_weights(&updates)?;
    println!("fedavg      {:?}", fedavg.weights());
    for alpha in [0.0, 0.5, 1.0] {
        let w = fedcostwavg_weights(&updates, &history, &StrategyConfig::fedcostwavg(alpha))?;
        println!("alpha={alpha:<4} {:?}", w.weights());
    }

    let w = fedcostwavg_weights(&updates, &history, &StrategyConfig::fedcostwavg(0.5))?;
    let global = aggregate(&updates, &w)?;
    println!("aggregated model: {:?}", global.as_slice());
    Ok(())
}

#[allow(dead_code)]
fn main() -> fedcost::Result<()> {
    run_example()
}
