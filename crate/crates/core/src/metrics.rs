//! Experiment output files.
//!
//! `metrics.csv` has one row per client per round per strategy, with the
//! round's global validation metrics repeated on every row:
//!
//! ```text
//! round,strategy,client_id,client_cost,client_weight,val_loss,val_acc,wall_ms
//! ```
//!
//! `val_acc` is `NaN` for regression tasks and `wall_ms` is `0` unless
//! timing is enabled. `summary.json` holds the final validation metrics of
//! each strategy, the configuration, and the gap between each strategy and
//! the FedAvg baseline.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::aggregation::StrategyKind;
use crate::error::Result;
use crate::federation::{ExperimentConfig, ExperimentReport, StrategyRun};

pub const METRICS_HEADER: [&str; 8] = [
    "round",
    "strategy",
    "client_id",
    "client_cost",
    "client_weight",
    "val_loss",
    "val_acc",
    "wall_ms",
];
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn write_metrics_csv<W: Write>(report: &ExperimentReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(METRICS_HEADER)?;
    for run in &report.runs {
        for rec in &run.records {
            let acc = rec.val_acc.unwrap_or(f64::NAN);
            for c in &rec.clients {
                w.write_record([
                    rec.round.to_string(),
                    rec.strategy.name().to_string(),
                    c.client_id.to_string(),
                    c.cost.to_string(),
                    c.weight.to_string(),
                    rec.val_loss.to_string(),
                    acc.to_string(),
                    rec.wall_ms.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct StrategySummary {
    pub strategy: StrategyKind,
    pub alpha: f64,
    pub window: usize,
    pub experimental: bool,
    pub status: &'static str,
    pub error: Option<String>,
    pub rounds_completed: usize,
    pub initial_val_loss: f64,
    pub final_val_loss: f64,
    pub final_val_acc: Option<f64>,
}

impl From<&StrategyRun> for StrategySummary {
    fn from(run: &StrategyRun) -> Self {
        StrategySummary {
            strategy: run.strategy.kind,
            alpha: run.strategy.alpha,
            window: run.strategy.window,
            experimental: run.strategy.kind.is_experimental(),
            status: if run.succeeded() { "ok" } else { "failed" },
            error: run.error.clone(),
            rounds_completed: run.records.len(),
            initial_val_loss: run.initial_val_loss,
            final_val_loss: run.final_val_loss(),
            final_val_acc: run.final_val_acc(),
        }
    }
}

/// Final validation loss of a strategy relative to the FedAvg baseline.
#[derive(Debug, Serialize)]
pub struct Gap {
    pub strategy: StrategyKind,
    pub alpha: f64,
    /// `final_val_loss(strategy) - final_val_loss(fedavg)`; negative means
    /// the strategy ended with the lower loss.
    pub val_loss_delta: f64,
    pub val_acc_delta: Option<f64>,
    pub lower_final_loss: StrategyKind,
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub config: &'a ExperimentConfig,
    pub strategies: Vec<StrategySummary>,
    pub gaps_vs_fedavg: Vec<Gap>,
}

impl<'a> Summary<'a> {
    pub fn new(report: &'a ExperimentReport) -> Self {
        let baseline = report
            .runs
            .iter()
            .find(|r| r.strategy.kind == StrategyKind::FedAvg && r.succeeded());
        let gaps = match baseline {
            None => Vec::new(),
            Some(base) => report
                .runs
                .iter()
                .filter(|r| r.strategy.kind != StrategyKind::FedAvg && r.succeeded())
                .map(|r| {
                    let delta = r.final_val_loss() - base.final_val_loss();
                    Gap {
                        strategy: r.strategy.kind,
                        alpha: r.strategy.alpha,
                        val_loss_delta: delta,
                        val_acc_delta: r
                            .final_val_acc()
                            .zip(base.final_val_acc())
                            .map(|(a, b)| a - b),
                        lower_final_loss: if delta < 0.0 {
                            r.strategy.kind
                        } else {
                            StrategyKind::FedAvg
                        },
                    }
                })
                .collect(),
        };
        Summary {
            config: &report.config,
            strategies: report.runs.iter().map(StrategySummary::from).collect(),
            gaps_vs_fedavg: gaps,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Writes `metrics.csv` and `summary.json` into `out_dir`, creating it if needed.
pub fn write_outputs(report: &ExperimentReport, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_metrics_csv(
        report,
        BufWriter::new(File::create(out_dir.join(METRICS_FILE))?),
    )?;
    fs::write(out_dir.join(SUMMARY_FILE), Summary::new(report).to_json()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::StrategyConfig;
    use crate::federation::{ClientMetrics, MetricsRecord};
    use crate::params::ParamVector;

    fn run(strategy: StrategyConfig, final_loss: f64) -> StrategyRun {
        StrategyRun {
            strategy,
            initial_val_loss: 1.0,
            initial_val_acc: None,
            records: vec![MetricsRecord {
                round: 1,
                strategy: strategy.kind,
                clients: vec![
                    ClientMetrics {
                        client_id: 0,
                        cost: 0.5,
                        weight: 0.25,
                    },
                    ClientMetrics {
                        client_id: 1,
                        cost: 0.125,
                        weight: 0.75,
                    },
                ],
                val_loss: final_loss,
                val_acc: None,
                wall_ms: 0,
                used_fedavg_fallback: false,
            }],
            final_model: ParamVector::zeros(1),
            error: None,
        }
    }

    fn report() -> ExperimentReport {
        ExperimentReport {
            config: ExperimentConfig::default(),
            runs: vec![
                run(StrategyConfig::fedavg(), 0.5),
                run(StrategyConfig::fedcostwavg(0.5), 0.25),
            ],
        }
    }

    #[test]
    fn csv_rows() {
        let mut buf = Vec::new();
        write_metrics_csv(&report(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER.join(","));
        assert_eq!(lines[1], "1,fedavg,0,0.5,0.25,0.5,NaN,0");
        assert_eq!(lines[4], "1,fedcostwavg,1,0.125,0.75,0.25,NaN,0");
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn summary_reports_gap() {
        let r = report();
        let json: serde_json::Value =
            serde_json::from_str(&Summary::new(&r).to_json().unwrap()).unwrap();
        assert_eq!(json["strategies"][1]["strategy"], "fedcostwavg");
        assert_eq!(json["strategies"][0]["status"], "ok");
        assert_eq!(json["gaps_vs_fedavg"][0]["val_loss_delta"], -0.25);
        assert_eq!(json["gaps_vs_fedavg"][0]["lower_final_loss"], "fedcostwavg");
        assert_eq!(json["config"]["n_centers"], 17);
    }
}
