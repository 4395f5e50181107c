//! Synchronous round orchestration.
//!
//! Each round the coordinator broadcasts the global model, every client
//! trains it on its own partition and reports parameters, sample count and
//! cost, and only once *all* registered clients have reported does the
//! coordinator compute averaging weights and aggregate. A missing or
//! malformed report is a [`Error::BarrierViolation`]; nothing is averaged
//! over a partial set.
//!
//! The first round of every run has no previous costs, so it is averaged
//! with FedAvg whatever the configured strategy.

use std::collections::VecDeque;
use std::fmt;
use std::net::{SocketAddr, TcpListener};
use std::str::FromStr;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use serde::Serialize;

use crate::aggregation::{
    aggregate, cost_ratios, fedavg_weights, fedcostwavg_weights, fedcostwintavg_weights,
    ClientUpdate, CostHistory, StrategyConfig, StrategyKind, WeightVector,
};
use crate::data::{self, Dataset, GenerateOptions, Partition, Task};
use crate::error::{Error, Result};
use crate::models::{self, Batch, ModelKind, ModelSpec, TrainOptions};
use crate::params::ParamVector;
use crate::seed::{self, stream};
use crate::transport::{inproc_pair, Message, Session, TcpSession};

/// Which data a client evaluates its reported cost on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CostOn {
    /// The client's full training partition.
    Train,
    /// A held-out slice of the client's partition.
    LocalVal,
}

impl FromStr for CostOn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(CostOn::Train),
            "local_val" => Ok(CostOn::LocalVal),
            other => Err(Error::Config(format!("unknown cost_on `{other}`"))),
        }
    }
}

impl fmt::Display for CostOn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostOn::Train => "train",
            CostOn::LocalVal => "local_val",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub model: ModelKind,
    pub hidden_dim: usize,
    pub n_samples: usize,
    pub input_dim: usize,
    pub n_classes: usize,
    pub noise: f64,
    pub n_centers: usize,
    /// Dirichlet concentration of the label skew.
    pub beta: f64,
    pub train_fraction: f64,
    pub rounds: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub strategies: Vec<StrategyConfig>,
    pub seed: u64,
    pub cost_on: CostOn,
    /// Record wall-clock round times. Off by default so that metrics are
    /// byte-for-byte reproducible.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: Task::Blobs,
            model: ModelKind::LogisticRegression,
            hidden_dim: 16,
            n_samples: 369,
            input_dim: 8,
            n_classes: 3,
            noise: 1.5,
            n_centers: 17,
            beta: 0.5,
            train_fraction: 0.8,
            rounds: 30,
            epochs: 10,
            lr: 0.05,
            batch_size: 8,
            strategies: vec![StrategyConfig::fedavg(), StrategyConfig::fedcostwavg(0.5)],
            seed: 7,
            cost_on: CostOn::Train,
            timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn model_spec(&self) -> ModelSpec {
        let output_dim = match self.model {
            ModelKind::LinearRegression => 1,
            _ => self.n_classes,
        };
        ModelSpec {
            kind: self.model,
            input_dim: self.input_dim,
            output_dim,
            hidden_dim: self.hidden_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.rounds == 0 {
            return fail("rounds must be at least 1".into());
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.n_centers == 0 {
            return fail("n_centers must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return fail(format!("lr {} must be positive", self.lr));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return fail(format!(
                "train_fraction {} outside (0, 1)",
                self.train_fraction
            ));
        }
        if self.strategies.is_empty() {
            return fail("at least one strategy is required".into());
        }
        for s in &self.strategies {
            s.validate()?;
        }
        match (self.task, self.model.is_classifier()) {
            (Task::Blobs, false) => return fail("blobs needs a classification model".into()),
            (Task::LinearRegression, true) => {
                return fail("linear_regression task needs the linear_regression model".into())
            }
            _ => {}
        }
        if self.model.is_classifier() && self.n_classes < 2 {
            return fail("classification needs n_classes >= 2".into());
        }
        self.model_spec().validate()
    }

    fn generate_options(&self) -> GenerateOptions {
        GenerateOptions {
            task: self.task,
            n: self.n_samples,
            input_dim: self.input_dim,
            n_classes: self.n_classes,
            noise: self.noise,
            seed: seed::derive(self.seed, &[stream::DATA]),
        }
    }
}

/// Everything derived deterministically from an [`ExperimentConfig`].
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spec: ModelSpec,
    pub train: Dataset,
    /// Global validation set, evaluated by the coordinator every round.
    pub validation: Dataset,
    pub partition: Partition,
    pub initial_model: ParamVector,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let full = data::generate(&config.generate_options())?;
    let (train, validation) = data::split_train_val(
        &full,
        config.train_fraction,
        seed::derive(config.seed, &[stream::SPLIT]),
    )?;
    let partition = data::partition_dirichlet(
        &train,
        config.n_centers,
        config.beta,
        seed::derive(config.seed, &[stream::PARTITION]),
    )?;
    let spec = config.model_spec();
    let initial_model = models::init_params(&spec, seed::derive(config.seed, &[stream::INIT]));
    Ok(Prepared {
        spec,
        train,
        validation,
        partition,
        initial_model,
    })
}

/// One simulated center: owns its data and trains whatever it is sent.
#[derive(Debug, Clone)]
pub struct LocalClient {
    pub client_id: u64,
    spec: ModelSpec,
    train: Batch,
    cost_data: Option<Batch>,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    master_seed: u64,
    rounds_per_run: u64,
}

impl LocalClient {
    pub fn new(config: &ExperimentConfig, prepared: &Prepared, client_id: u64) -> Result<Self> {
        let indices = prepared
            .partition
            .centers()
            .get(client_id as usize)
            .ok_or_else(|| Error::Config(format!("no partition for client {client_id}")))?;
        let local = prepared.train.subset(indices)?;
        let (train, cost_data) = match config.cost_on {
            CostOn::Train => (local.examples, None),
            CostOn::LocalVal if local.len() < 2 => {
                warn!(
                    "client {client_id} has {} example(s); reporting training cost",
                    local.len()
                );
                (local.examples, None)
            }
            CostOn::LocalVal => {
                let split_seed = seed::derive(config.seed, &[stream::LOCAL_VAL, client_id]);
                let (t, v) = data::split_train_val(&local, config.train_fraction, split_seed)?;
                (t.examples, Some(v.examples))
            }
        };
        Ok(LocalClient {
            client_id,
            spec: prepared.spec,
            train,
            cost_data,
            epochs: config.epochs,
            lr: config.lr,
            batch_size: config.batch_size,
            master_seed: config.seed,
            rounds_per_run: config.rounds as u64,
        })
    }

    pub fn sample_count(&self) -> u64 {
        self.train.len() as u64
    }

    /// Trains `global` for one round. `round` is the 0-based round within
    /// the current strategy run.
    pub fn train_round(&self, round: u64, global: &ParamVector) -> Result<ClientUpdate> {
        let opts = TrainOptions {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            seed: seed::client_seed(self.master_seed, self.client_id, round),
        };
        let (params, train_cost) = models::local_train(&self.spec, global, &self.train, &opts)?;
        let cost = match &self.cost_data {
            Some(held_out) => models::loss(&self.spec, &params, held_out)?,
            None => train_cost,
        };
        Ok(ClientUpdate {
            client_id: self.client_id,
            params,
            sample_count: self.sample_count(),
            cost,
        })
    }

    /// Client side of the protocol: join, then answer every broadcast until
    /// shutdown.
    ///
    /// Wire round numbers keep increasing across consecutive strategy runs
    /// on one connection; the round within the run is `wire % rounds`.
    pub fn serve<S: Session>(&self, session: &mut S) -> Result<()> {
        session.send(&Message::Join {
            client_id: self.client_id,
            sample_count: self.sample_count(),
        })?;
        loop {
            match session.recv()? {
                Message::GlobalModel { round, params } => {
                    let update = self.train_round(round % self.rounds_per_run, &params)?;
                    session.send(&Message::Update {
                        round,
                        client_id: update.client_id,
                        sample_count: update.sample_count,
                        cost: update.cost,
                        params: update.params,
                    })?;
                }
                Message::Shutdown => return Ok(()),
                other => {
                    return Err(Error::Protocol(format!(
                        "client {} got unexpected {}",
                        self.client_id,
                        other.kind()
                    )))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundState {
    /// Completed rounds.
    pub round_index: u64,
    pub global_model: ParamVector,
    /// Costs reported in the last completed round.
    pub cost_history: CostHistory,
    /// Cost ratio vectors of recent rounds, oldest first, for the windowed strategy.
    pub ratio_history: VecDeque<Vec<f64>>,
    pub strategy: StrategyConfig,
}

impl RoundState {
    pub fn new(global_model: ParamVector, strategy: StrategyConfig) -> Self {
        RoundState {
            round_index: 0,
            global_model,
            cost_history: CostHistory::new(),
            ratio_history: VecDeque::new(),
            strategy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientMetrics {
    pub client_id: u64,
    pub cost: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    /// 1-based round number.
    pub round: u64,
    pub strategy: StrategyKind,
    pub clients: Vec<ClientMetrics>,
    /// Validation metrics of the aggregated model; filled in by the driver.
    pub val_loss: f64,
    pub val_acc: Option<f64>,
    pub wall_ms: u64,
    /// Weights fell back to FedAvg because no usable cost history existed.
    pub used_fedavg_fallback: bool,
}

/// Averages one complete set of updates.
///
/// `registered` lists every client id taking part; `updates` must hold
/// exactly one entry for each of them. Validation fields of the returned
/// record are left as NaN / `None`.
pub fn run_round(
    mut state: RoundState,
    mut updates: Vec<ClientUpdate>,
    registered: &[u64],
) -> Result<(RoundState, MetricsRecord)> {
    updates.sort_by_key(|u| u.client_id);
    let mut expected = registered.to_vec();
    expected.sort_unstable();
    let got: Vec<u64> = updates.iter().map(|u| u.client_id).collect();
    if got != expected {
        return Err(Error::BarrierViolation(format!(
            "round {} expected updates from {expected:?}, got {got:?}",
            state.round_index + 1
        )));
    }
    for u in &updates {
        if u.params.dim() != state.global_model.dim() {
            return Err(Error::Dimension {
                expected: state.global_model.dim(),
                got: u.params.dim(),
            });
        }
    }

    let strategy = state.strategy;
    let has_history = !state.cost_history.is_empty() && state.cost_history.covers(&updates);
    if !state.cost_history.is_empty() && !has_history {
        warn!("cost history does not cover this round's clients; using FedAvg weights");
    }
    let weights: WeightVector = match strategy.kind {
        StrategyKind::FedAvg => fedavg_weights(&updates)?,
        _ if !has_history => fedavg_weights(&updates)?,
        StrategyKind::FedCostWAvg => fedcostwavg_weights(&updates, &state.cost_history, &strategy)?,
        StrategyKind::FedCostWIntAvg => {
            let k = cost_ratios(&updates, &state.cost_history, strategy.min_cost_floor)?;
            state.ratio_history.push_back(k);
            while state.ratio_history.len() > strategy.window {
                state.ratio_history.pop_front();
            }
            fedcostwintavg_weights(&updates, state.ratio_history.make_contiguous(), &strategy)?
        }
    };

    state.global_model = aggregate(&updates, &weights)?;
    state.cost_history = CostHistory::from_updates(&updates);
    state.round_index += 1;

    let clients = updates
        .iter()
        .zip(weights.weights())
        .map(|(u, &weight)| ClientMetrics {
            client_id: u.client_id,
            cost: u.cost,
            weight,
        })
        .collect();
    let record = MetricsRecord {
        round: state.round_index,
        strategy: strategy.kind,
        clients,
        val_loss: f64::NAN,
        val_acc: None,
        wall_ms: 0,
        used_fedavg_fallback: strategy.kind != StrategyKind::FedAvg && !has_history,
    };
    Ok((state, record))
}

/// A connected client as seen by the coordinator.
pub struct Registered {
    pub client_id: u64,
    pub sample_count: u64,
    pub session: Box<dyn Session>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyRun {
    pub strategy: StrategyConfig,
    pub initial_val_loss: f64,
    pub initial_val_acc: Option<f64>,
    pub records: Vec<MetricsRecord>,
    #[serde(skip)]
    pub final_model: ParamVector,
    /// Set when the run aborted.
    pub error: Option<String>,
}

impl StrategyRun {
    pub fn final_val_loss(&self) -> f64 {
        self.records
            .last()
            .map_or(self.initial_val_loss, |r| r.val_loss)
    }

    pub fn final_val_acc(&self) -> Option<f64> {
        self.records
            .last()
            .map_or(self.initial_val_acc, |r| r.val_acc)
    }

    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub runs: Vec<StrategyRun>,
}

impl ExperimentReport {
    pub fn all_succeeded(&self) -> bool {
        self.runs.iter().all(StrategyRun::succeeded)
    }
}

/// Drives the rounds of every configured strategy over registered clients.
pub struct Coordinator<'a> {
    config: &'a ExperimentConfig,
    prepared: &'a Prepared,
}

impl<'a> Coordinator<'a> {
    pub fn new(config: &'a ExperimentConfig, prepared: &'a Prepared) -> Self {
        Coordinator { config, prepared }
    }

    fn evaluate(&self, params: &ParamVector) -> Result<(f64, Option<f64>)> {
        let spec = &self.prepared.spec;
        let val = &self.prepared.validation.examples;
        Ok((
            models::loss(spec, params, val)?,
            models::accuracy(spec, params, val)?,
        ))
    }

    /// Runs every strategy in turn and then shuts the clients down.
    pub fn run(&self, clients: &mut [Registered]) -> Result<ExperimentReport> {
        clients.sort_by_key(|c| c.client_id);
        let mut runs = Vec::new();
        for (index, strategy) in self.config.strategies.iter().enumerate() {
            if strategy.kind.is_experimental() {
                warn!("{} is EXPERIMENTAL", strategy.kind);
            }
            let wire_base = (index * self.config.rounds) as u64;
            runs.push(self.run_strategy(*strategy, wire_base, clients)?);
        }
        for c in clients.iter_mut() {
            if let Err(e) = c.session.send(&Message::Shutdown) {
                debug!("shutdown to client {} failed: {e}", c.client_id);
            }
        }
        Ok(ExperimentReport {
            config: self.config.clone(),
            runs,
        })
    }

    fn run_strategy(
        &self,
        strategy: StrategyConfig,
        wire_base: u64,
        clients: &mut [Registered],
    ) -> Result<StrategyRun> {
        let (initial_val_loss, initial_val_acc) = self.evaluate(&self.prepared.initial_model)?;
        let mut run = StrategyRun {
            strategy,
            initial_val_loss,
            initial_val_acc,
            records: Vec::new(),
            final_model: self.prepared.initial_model.clone(),
            error: None,
        };
        let mut state = RoundState::new(self.prepared.initial_model.clone(), strategy);
        info!("{}: round 0 val_loss {initial_val_loss:.6}", strategy.kind);
        for round in 0..self.config.rounds as u64 {
            match self.one_round(state.clone(), wire_base + round, clients) {
                Ok((next, record)) => {
                    info!(
                        "{}: round {} val_loss {:.6}",
                        strategy.kind, record.round, record.val_loss
                    );
                    run.records.push(record);
                    state = next;
                }
                Err(e) => {
                    warn!("{} aborted in round {}: {e}", strategy.kind, round + 1);
                    run.error = Some(e.to_string());
                    break;
                }
            }
        }
        run.final_model = state.global_model;
        Ok(run)
    }

    fn one_round(
        &self,
        state: RoundState,
        wire_round: u64,
        clients: &mut [Registered],
    ) -> Result<(RoundState, MetricsRecord)> {
        let started = Instant::now();
        let broadcast = Message::GlobalModel {
            round: wire_round,
            params: state.global_model.clone(),
        };
        for c in clients.iter_mut() {
            c.session.send(&broadcast).map_err(|e| {
                Error::BarrierViolation(format!("broadcast to client {} failed: {e}", c.client_id))
            })?;
        }
        let mut updates = Vec::with_capacity(clients.len());
        for c in clients.iter_mut() {
            updates.push(collect_update(c, wire_round)?);
        }
        let registered: Vec<u64> = clients.iter().map(|c| c.client_id).collect();
        let (state, mut record) = run_round(state, updates, &registered)?;
        let (val_loss, val_acc) = self.evaluate(&state.global_model)?;
        record.val_loss = val_loss;
        record.val_acc = val_acc;
        if self.config.timing {
            record.wall_ms = started.elapsed().as_millis() as u64;
        }
        Ok((state, record))
    }
}

fn collect_update(client: &mut Registered, wire_round: u64) -> Result<ClientUpdate> {
    let id = client.client_id;
    match client.session.recv() {
        Ok(Message::Update {
            round,
            client_id,
            sample_count,
            cost,
            params,
        }) if round == wire_round && client_id == id => Ok(ClientUpdate {
            client_id,
            params,
            sample_count,
            cost,
        }),
        Ok(other) => Err(Error::BarrierViolation(format!(
            "client {id} sent {} instead of its round {wire_round} update",
            other.kind()
        ))),
        Err(e) => Err(Error::BarrierViolation(format!(
            "client {id} failed to report: {e}"
        ))),
    }
}

/// Reads the `Join` that opens a session.
pub fn read_join(session: &mut dyn Session) -> Result<(u64, u64)> {
    match session.recv()? {
        Message::Join {
            client_id,
            sample_count,
        } => Ok((client_id, sample_count)),
        other => Err(Error::Protocol(format!(
            "expected Join, got {}",
            other.kind()
        ))),
    }
}

/// Runs a full experiment with clients on threads of this process, wired up
/// through in-process channels.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let prepared = prepare(config)?;
    let clients = build_clients(config, &prepared)?;
    thread::scope(|scope| {
        let mut registered = Vec::new();
        let mut handles = Vec::new();
        for client in &clients {
            let (coord_end, mut client_end) = inproc_pair();
            handles.push(scope.spawn(move || client.serve(&mut client_end)));
            let mut session: Box<dyn Session> = Box::new(coord_end);
            let (client_id, sample_count) = read_join(session.as_mut())?;
            registered.push(Registered {
                client_id,
                sample_count,
                session,
            });
        }
        let report = Coordinator::new(config, &prepared).run(&mut registered);
        drop(registered);
        join_clients(handles);
        report
    })
}

/// Same as [`run_experiment`] but every client talks to the coordinator
/// over a loopback TCP connection.
pub fn run_experiment_tcp(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let prepared = prepare(config)?;
    let clients = build_clients(config, &prepared)?;
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    thread::scope(|scope| {
        let handles: Vec<_> = clients
            .iter()
            .map(|client| {
                scope.spawn(move || -> Result<()> {
                    let mut session = TcpSession::connect(addr)?;
                    client.serve(&mut session)
                })
            })
            .collect();
        let result = accept_clients(&listener, config.n_centers, Duration::from_secs(30))
            .and_then(|mut registered| Coordinator::new(config, &prepared).run(&mut registered));
        join_clients(handles);
        result
    })
}

fn build_clients(config: &ExperimentConfig, prepared: &Prepared) -> Result<Vec<LocalClient>> {
    (0..config.n_centers as u64)
        .map(|id| LocalClient::new(config, prepared, id))
        .collect()
}

fn join_clients(handles: Vec<thread::ScopedJoinHandle<'_, Result<()>>>) {
    for h in handles {
        match h.join() {
            Ok(Ok(())) => {}
            Ok(Err(e)) => debug!("client exited with error: {e}"),
            Err(_) => warn!("client thread panicked"),
        }
    }
}

/// Accepts TCP clients until `expected` distinct ids in `0..expected` have
/// joined. Connections that do not open with a valid `Join` are dropped and
/// the listener keeps waiting until `timeout` elapses.
pub fn accept_clients(
    listener: &TcpListener,
    expected: usize,
    timeout: Duration,
) -> Result<Vec<Registered>> {
    if expected == 0 {
        return Err(Error::Config(
            "expected client count must be at least 1".into(),
        ));
    }
    let deadline = Instant::now() + timeout;
    listener.set_nonblocking(true)?;
    let mut registered: Vec<Registered> = Vec::new();
    while registered.len() < expected {
        let now = Instant::now();
        if now >= deadline {
            listener.set_nonblocking(false)?;
            return Err(Error::BarrierViolation(format!(
                "only {} of {expected} clients joined within {timeout:?}",
                registered.len()
            )));
        }
        let (stream, peer) = match listener.accept() {
            Ok(conn) => conn,
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(5));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        match register(stream, peer, deadline - now, expected, &registered) {
            Ok(r) => {
                info!(
                    "client {} joined from {peer} with {} samples",
                    r.client_id, r.sample_count
                );
                registered.push(r);
            }
            Err(e) => warn!("rejected connection from {peer}: {e}"),
        }
    }
    listener.set_nonblocking(false)?;
    Ok(registered)
}

fn register(
    stream: std::net::TcpStream,
    _peer: SocketAddr,
    remaining: Duration,
    expected: usize,
    registered: &[Registered],
) -> Result<Registered> {
    stream.set_nonblocking(false)?;
    let mut session = TcpSession::new(stream)?;
    session.set_read_timeout(Some(remaining.max(Duration::from_millis(1))))?;
    let (client_id, sample_count) = read_join(&mut session)?;
    session.set_read_timeout(None)?;
    if client_id >= expected as u64 {
        return Err(Error::Protocol(format!(
            "client id {client_id} out of range 0..{expected}"
        )));
    }
    if registered.iter().any(|r| r.client_id == client_id) {
        return Err(Error::Protocol(format!(
            "client id {client_id} already joined"
        )));
    }
    Ok(Registered {
        client_id,
        sample_count,
        session: Box::new(session),
    })
}
