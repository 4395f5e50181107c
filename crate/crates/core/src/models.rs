//! Small trainable models with analytic gradients.
//!
//! Parameters are flattened in this canonical order:
//!
//! * linear / logistic regression: `W` (`output_dim x input_dim`, row-major), then `b`.
//! * MLP: `W1` (`hidden x input`), `b1`, `W2` (`output x hidden`), `b2`.
//!
//! Classification models use a sigmoid output when `output_dim == 1` and a
//! softmax otherwise. Losses are means over the batch.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{check_dim, ParamVector};
use crate::seed;

/// Lower bound on reported losses and on probabilities inside the log.
pub const LOSS_FLOOR: f64 = 1e-12;
/// Half-width of the uniform initialisation range.
pub const INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Mean squared error.
    LinearRegression,
    /// Cross-entropy.
    LogisticRegression,
    /// One tanh hidden layer, cross-entropy.
    Mlp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::LinearRegression => "linear_regression",
            ModelKind::LogisticRegression => "logistic_regression",
            ModelKind::Mlp => "mlp",
        }
    }

    pub fn is_classifier(self) -> bool {
        self != ModelKind::LinearRegression
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "linear_regression" | "linear" => Ok(ModelKind::LinearRegression),
            "logistic_regression" | "logistic" => Ok(ModelKind::LogisticRegression),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Only used by [`ModelKind::Mlp`].
    pub hidden_dim: usize,
}

impl ModelSpec {
    pub fn linear_regression(input_dim: usize, output_dim: usize) -> Self {
        ModelSpec {
            kind: ModelKind::LinearRegression,
            input_dim,
            output_dim,
            hidden_dim: 0,
        }
    }

    pub fn logistic_regression(input_dim: usize, output_dim: usize) -> Self {
        ModelSpec {
            kind: ModelKind::LogisticRegression,
            input_dim,
            output_dim,
            hidden_dim: 0,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        ModelSpec {
            kind: ModelKind::Mlp,
            input_dim,
            output_dim,
            hidden_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("model dimensions must be at least 1".into()));
        }
        if self.kind == ModelKind::Mlp && self.hidden_dim == 0 {
            return Err(Error::Config("mlp hidden_dim must be at least 1".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        match self.kind {
            ModelKind::LinearRegression | ModelKind::LogisticRegression => {
                self.output_dim * (self.input_dim + 1)
            }
            ModelKind::Mlp => {
                self.hidden_dim * (self.input_dim + 1) + self.output_dim * (self.hidden_dim + 1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// Real-valued targets, `dim` per example, row-major.
    Values { dim: usize, values: Vec<f64> },
    /// Class labels.
    Labels(Vec<usize>),
}

impl Targets {
    fn len(&self) -> usize {
        match self {
            Targets::Values { dim, values } => values.len() / dim.max(&1),
            Targets::Labels(l) => l.len(),
        }
    }
}

/// A set of examples. Also used to hold whole datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    inputs: Vec<f64>,
    input_dim: usize,
    targets: Targets,
}

impl Batch {
    pub fn new(inputs: Vec<f64>, input_dim: usize, targets: Targets) -> Result<Self> {
        if input_dim == 0 || !inputs.len().is_multiple_of(input_dim) {
            return Err(Error::Config(format!(
                "{} input values do not form rows of width {input_dim}",
                inputs.len()
            )));
        }
        let n = inputs.len() / input_dim;
        if n == 0 {
            return Err(Error::Config(
                "batch must contain at least one example".into(),
            ));
        }
        if let Targets::Values { dim, values } = &targets {
            if *dim == 0 || values.len() != n * dim {
                return Err(Error::Dimension {
                    expected: n * dim,
                    got: values.len(),
                });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("non-finite target".into()));
            }
        }
        check_dim(n, targets.len())?;
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite input".into()));
        }
        Ok(Batch {
            inputs,
            input_dim,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_dim
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Labels(l) => Some(l),
            Targets::Values { .. } => None,
        }
    }

    /// The examples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Batch> {
        let mut inputs = Vec::with_capacity(indices.len() * self.input_dim);
        for &i in indices {
            inputs.extend_from_slice(self.row(i));
        }
        let targets = match &self.targets {
            Targets::Values { dim, values } => Targets::Values {
                dim: *dim,
                values: indices
                    .iter()
                    .flat_map(|&i| values[i * dim..(i + 1) * dim].iter().copied())
                    .collect(),
            },
            Targets::Labels(l) => Targets::Labels(indices.iter().map(|&i| l[i]).collect()),
        };
        Batch::new(inputs, self.input_dim, targets)
    }

    /// This batch followed by `other`.
    pub fn concat(&self, other: &Batch) -> Result<Batch> {
        check_dim(self.input_dim, other.input_dim)?;
        let mut inputs = self.inputs.clone();
        inputs.extend_from_slice(&other.inputs);
        let targets = match (&self.targets, &other.targets) {
            (
                Targets::Values { dim, values },
                Targets::Values {
                    dim: d2,
                    values: v2,
                },
            ) => {
                check_dim(*dim, *d2)?;
                let mut values = values.clone();
                values.extend_from_slice(v2);
                Targets::Values { dim: *dim, values }
            }
            (Targets::Labels(a), Targets::Labels(b)) => {
                Targets::Labels(a.iter().chain(b).copied().collect())
            }
            _ => {
                return Err(Error::Config(
                    "cannot concatenate labels with values".into(),
                ))
            }
        };
        Batch::new(inputs, self.input_dim, targets)
    }

    fn check_compatible(&self, spec: &ModelSpec) -> Result<()> {
        check_dim(spec.input_dim, self.input_dim)?;
        match (&self.targets, spec.kind) {
            (Targets::Values { dim, .. }, ModelKind::LinearRegression) => {
                check_dim(spec.output_dim, *dim)
            }
            (Targets::Labels(labels), kind) if kind.is_classifier() => {
                let classes = spec.output_dim.max(2);
                match labels.iter().find(|&&l| l >= classes) {
                    Some(l) => Err(Error::Config(format!(
                        "label {l} out of range for {classes} classes"
                    ))),
                    None => Ok(()),
                }
            }
            _ => Err(Error::Config(format!(
                "targets do not match a {} model",
                spec.kind
            ))),
        }
    }
}

/// Uniform draws in `[-INIT_SCALE, INIT_SCALE]`.
pub fn init_params(spec: &ModelSpec, seed: u64) -> ParamVector {
    let mut rng = seed::rng(seed);
    let values = (0..spec.param_count())
        .map(|_| rng.random_range(-INIT_SCALE..=INIT_SCALE))
        .collect();
    ParamVector::new(values).expect("uniform draws are finite")
}

/// Mean loss over `batch`, floored at [`LOSS_FLOOR`].
pub fn loss(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<f64> {
    let rows: Vec<usize> = (0..batch.len()).collect();
    let (l, _) = evaluate(spec, params, batch, &rows, false)?;
    Ok(l.max(LOSS_FLOOR))
}

/// Analytic gradient of the mean loss.
///
/// The probability floor inside the log is treated as inactive; the result
/// differs from the true derivative only where a predicted class
/// probability is below [`LOSS_FLOOR`].
pub fn gradient(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<ParamVector> {
    let rows: Vec<usize> = (0..batch.len()).collect();
    let (_, g) = evaluate(spec, params, batch, &rows, true)?;
    ParamVector::new(g).map_err(|_| Error::Numeric("non-finite gradient".into()))
}

/// Fraction of correctly classified examples; `None` for regression.
pub fn accuracy(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<Option<f64>> {
    check_dim(spec.param_count(), params.dim())?;
    batch.check_compatible(spec)?;
    let Some(labels) = batch.labels() else {
        return Ok(None);
    };
    let mut scratch = Scratch::new(spec);
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(i, &label)| {
            forward(spec, params.as_slice(), batch.row(i), &mut scratch);
            predicted_class(&scratch.out) == label
        })
        .count();
    Ok(Some(correct as f64 / labels.len() as f64))
}

fn predicted_class(logits: &[f64]) -> usize {
    if logits.len() == 1 {
        return usize::from(logits[0] > 0.0);
    }
    logits
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &z)| {
            if z > best.1 {
                (i, z)
            } else {
                best
            }
        })
        .0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

/// Plain minibatch SGD with a seeded shuffle every epoch.
///
/// Returns the trained parameters and the mean loss over all of `data` at
/// those parameters.
pub fn local_train(
    spec: &ModelSpec,
    start: &ParamVector,
    data: &Batch,
    opts: &TrainOptions,
) -> Result<(ParamVector, f64)> {
    if opts.epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    if !(opts.lr.is_finite() && opts.lr >= 0.0) {
        return Err(Error::Config(format!("invalid learning rate {}", opts.lr)));
    }
    if opts.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let mut params = start.clone().into_inner();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = seed::rng(opts.seed);
    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        for rows in order.chunks(opts.batch_size) {
            let (_, grad) = evaluate_raw(spec, &params, data, rows, true)?;
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= opts.lr * g;
            }
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Numeric(format!(
                    "local training diverged in epoch {epoch} (lr = {})",
                    opts.lr
                )));
            }
        }
    }
    let params = ParamVector::new(params)?;
    let cost = loss(spec, &params, data)?;
    Ok((params, cost))
}

fn evaluate(
    spec: &ModelSpec,
    params: &ParamVector,
    batch: &Batch,
    rows: &[usize],
    want_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    check_dim(spec.param_count(), params.dim())?;
    evaluate_raw(spec, params.as_slice(), batch, rows, want_grad)
}

struct Scratch {
    hidden: Vec<f64>,
    out: Vec<f64>,
    delta_out: Vec<f64>,
    delta_hidden: Vec<f64>,
}

impl Scratch {
    fn new(spec: &ModelSpec) -> Self {
        Scratch {
            hidden: vec![0.0; spec.hidden_dim],
            out: vec![0.0; spec.output_dim],
            delta_out: vec![0.0; spec.output_dim],
            delta_hidden: vec![0.0; spec.hidden_dim],
        }
    }
}

/// `out = b + W x` with `W` row-major `out.len() x x.len()` followed by `b`.
fn affine(block: &[f64], x: &[f64], out: &mut [f64]) {
    let (w, b) = block.split_at(out.len() * x.len());
    for (o, z) in out.iter_mut().enumerate() {
        *z = b[o];
        for (k, xk) in x.iter().enumerate() {
            *z += w[o * x.len() + k] * xk;
        }
    }
}

/// Accumulates `delta x^T` and `delta` into a gradient block laid out like `affine`.
fn affine_grad(grad: &mut [f64], x: &[f64], delta: &[f64]) {
    let (gw, gb) = grad.split_at_mut(delta.len() * x.len());
    for (o, d) in delta.iter().enumerate() {
        gb[o] += d;
        for (k, xk) in x.iter().enumerate() {
            gw[o * x.len() + k] += d * xk;
        }
    }
}

/// Fills `scratch.out` with logits (or predictions for regression).
fn forward(spec: &ModelSpec, params: &[f64], x: &[f64], scratch: &mut Scratch) {
    match spec.kind {
        ModelKind::LinearRegression | ModelKind::LogisticRegression => {
            affine(params, x, &mut scratch.out)
        }
        ModelKind::Mlp => {
            let split = spec.hidden_dim * (spec.input_dim + 1);
            affine(&params[..split], x, &mut scratch.hidden);
            scratch.hidden.iter_mut().for_each(|h| *h = h.tanh());
            affine(&params[split..], &scratch.hidden, &mut scratch.out);
        }
    }
}

/// Cross-entropy of `logits` against `label`; writes dL/dlogits to `delta`.
fn cross_entropy(logits: &[f64], label: usize, delta: &mut [f64]) -> f64 {
    if logits.len() == 1 {
        let z = logits[0];
        let p = 1.0 / (1.0 + (-z).exp());
        let y = label as f64;
        delta[0] = p - y;
        return -(y * p.max(LOSS_FLOOR).ln() + (1.0 - y) * (1.0 - p).max(LOSS_FLOOR).ln());
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (d, z) in delta.iter_mut().zip(logits) {
        *d = (z - max).exp();
        total += *d;
    }
    for d in delta.iter_mut() {
        *d /= total;
    }
    let p = delta[label];
    delta[label] -= 1.0;
    -p.max(LOSS_FLOOR).ln()
}

fn evaluate_raw(
    spec: &ModelSpec,
    params: &[f64],
    batch: &Batch,
    rows: &[usize],
    want_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    batch.check_compatible(spec)?;
    let mut scratch = Scratch::new(spec);
    let mut grad = if want_grad {
        vec![0.0; params.len()]
    } else {
        Vec::new()
    };
    let mut total = 0.0;
    for &i in rows {
        let x = batch.row(i);
        forward(spec, params, x, &mut scratch);
        let Scratch {
            hidden,
            out,
            delta_out,
            delta_hidden,
        } = &mut scratch;
        total += match batch.targets() {
            Targets::Values { dim, values } => {
                let y = &values[i * dim..(i + 1) * dim];
                let scale = 1.0 / *dim as f64;
                let mut l = 0.0;
                for ((d, z), t) in delta_out.iter_mut().zip(out.iter()).zip(y) {
                    let r = z - t;
                    l += r * r;
                    *d = 2.0 * scale * r;
                }
                l * scale
            }
            Targets::Labels(labels) => cross_entropy(out, labels[i], delta_out),
        };
        if !want_grad {
            continue;
        }
        match spec.kind {
            ModelKind::LinearRegression | ModelKind::LogisticRegression => {
                affine_grad(&mut grad, x, delta_out)
            }
            ModelKind::Mlp => {
                let split = spec.hidden_dim * (spec.input_dim + 1);
                let w2 = &params[split..split + spec.output_dim * spec.hidden_dim];
                let (g1, g2) = grad.split_at_mut(split);
                affine_grad(g2, hidden, delta_out);
                for (h, (dh, act)) in delta_hidden.iter_mut().zip(hidden.iter()).enumerate() {
                    let back: f64 = (0..spec.output_dim)
                        .map(|o| w2[o * spec.hidden_dim + h] * delta_out[o])
                        .sum();
                    *dh = back * (1.0 - act * act);
                }
                affine_grad(g1, x, delta_hidden);
            }
        }
    }
    let n = rows.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((total / n, grad))
}
