// Coordinator and clients talking over loopback TCP, wired up by hand.
// The same thing across processes is `fedcost serve` plus `fedcost client`.
//
// ```bash
// cargo run --example tcp_federation
// ```

use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use fedcost::federation::{accept_clients, prepare, Coordinator, ExperimentConfig, LocalClient};
use fedcost::transport::TcpSession;
use fedcost::StrategyConfig;

pub fn run_example() -> fedcost::Result<()> {
    let config = ExperimentConfig {
        n_centers: 3,
        rounds: 5,
        strategies: vec![StrategyConfig::fedavg(), StrategyConfig::fedcostwavg(0.5)],
        ..Default::default()
    };
    let prepared = prepare(&config)?;
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    println!("coordinator listening on {addr}");

    thread::scope(|scope| {
        for id in 0..config.n_centers as u64 {
            let (config, prepared) = (&config, &prepared);
            scope.spawn(move || -> fedcost::Result<()> {
                let client = LocalClient::new(config, prepared, id)?;
                client.serve(&mut TcpSession::connect(addr)?)
            });
        }
        let mut registered = accept_clients(&listener, config.n_centers, Duration::from_secs(10))?;
        for r in &registered {
            println!(
                "client {} joined with {} samples",
                r.client_id, r.sample_count
            );
        }
        let report = Coordinator::new(&config, &prepared).run(&mut registered)?;
        for run in &report.runs {
            println!(
                "{:<12} final val_loss {:.4}",
                run.strategy.kind.name(),
                run.final_val_loss()
            );
        }
        Ok(())
    })
}

#[allow(dead_code)]
fn main() -> fedcost::Result<()> {
    run_example()
}
