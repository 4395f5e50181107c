// Drive the round loop by hand: local clients train, the coordinator side
// averages with `run_round`, and validation loss is printed per round.
//
// ```bash
// cargo run --example manual_rounds
// ```

use fedcost::federation::{prepare, run_round, ExperimentConfig, LocalClient, RoundState};
use fedcost::models;
use fedcost::StrategyConfig;

pub fn run_example() -> fedcost::Result<()> {
    let config = ExperimentConfig {
        n_centers: 4,
        rounds: 6,
        ..Default::default()
    };
    let prepared = prepare(&config)?;
    let clients: Vec<LocalClient> = (0..config.n_centers as u64)
        .map(|id| LocalClient::new(&config, &prepared, id))
        .collect::<fedcost::Result<_>>()?;
    let ids: Vec<u64> = (0..config.n_centers as u64).collect();

    let mut state = RoundState::new(
        prepared.initial_model.clone(),
        StrategyConfig::fedcostwavg(0.5),
    );
    for round in 0..config.rounds as u64 {
        let updates = clients
            .iter()
            .map(|c| c.train_round(round, &state.global_model))
            .collect::<fedcost::Result<Vec<_>>>()?;
        let (next, record) = run_round(state, updates, &ids)?;
        state = next;
        let val = models::loss(
            &prepared.spec,
            &state.global_model,
            &prepared.validation.examples,
        )?;
        let weights: Vec<String> = record
            .clients
            .iter()
            .map(|c| format!("{:.3}", c.weight))
            .collect();
        println!(
            "round {} val_loss {val:.4} weights [{}]{}",
            record.round,
            weights.join(" "),
            if record.used_fedavg_fallback {
                " (fedavg bootstrap)"
            } else {
                ""
            }
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> fedcost::Result<()> {
    run_example()
}
