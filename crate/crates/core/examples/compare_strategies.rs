// The default comparison: 17 centers, 30 rounds, FedAvg against
// FedCostWAvg. Writes metrics.csv and summary.json.
//
// ```bash
// cargo run --release --example compare_strategies -- out/compare
// ```

use std::path::PathBuf;

use fedcost::federation::{run_experiment, ExperimentConfig};
use fedcost::metrics::{write_outputs, Summary};

pub fn run_example(out_dir: Option<PathBuf>) -> fedcost::Result<()> {
    let config = ExperimentConfig::default();
    let report = run_experiment(&config)?;
    for run in &report.runs {
        println!(
            "{:<12} val_loss {:.4} -> {:.4}  val_acc {:.3}",
            run.strategy.kind.name(),
            run.initial_val_loss,
            run.final_val_loss(),
            run.final_val_acc().unwrap_or(f64::NAN)
        );
    }
    match out_dir {
        Some(dir) => {
            write_outputs(&report, &dir)?;
            println!("wrote {}", dir.display());
        }
        None => print!("{}", Summary::new(&report).to_json()?),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> fedcost::Result<()> {
    run_example(std::env::args_os().nth(1).map(PathBuf::from))
}
