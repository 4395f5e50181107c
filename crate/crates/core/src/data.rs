//! Synthetic datasets and uneven, label-skewed partitioning across centers.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Batch, Targets};
use crate::params::ParamVector;
use crate::seed;

/// Resampling budget for partitions with an empty center.
pub const MAX_PARTITION_ATTEMPTS: u64 = 1000;
/// Spread of the class centres around the origin.
const CLASS_CENTER_SPREAD: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Gaussian clusters, one per class.
    Blobs,
    /// Noisy linear map with a single real target.
    LinearRegression,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Blobs => "blobs",
            Task::LinearRegression => "linear_regression",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "blobs" | "blobs_classification" => Ok(Task::Blobs),
            "linear_regression" | "regression" => Ok(Task::LinearRegression),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Batch,
    /// Number of classes; 1 for regression.
    pub n_classes: usize,
    /// Parameters of the generating linear map (regression only), in the
    /// layout of a `linear_regression(input_dim, 1)` model.
    pub true_params: Option<ParamVector>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Class of every example, or all zeros for regression.
    pub fn classes(&self) -> Vec<usize> {
        match self.examples.labels() {
            Some(l) => l.to_vec(),
            None => vec![0; self.len()],
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Ok(Dataset {
            examples: self.examples.select(indices)?,
            n_classes: self.n_classes,
            true_params: self.true_params.clone(),
        })
    }

    /// Writes a header row (`x0..x{d-1}` then `label` or `y`) and one row per example.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let d = self.examples.input_dim();
        let mut header: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
        match self.examples.targets() {
            Targets::Labels(_) => header.push("label".into()),
            Targets::Values { dim: 1, .. } => header.push("y".into()),
            Targets::Values { dim, .. } => header.extend((0..*dim).map(|k| format!("y{k}"))),
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.examples.row(i).iter().map(f64::to_string).collect();
            match self.examples.targets() {
                Targets::Labels(l) => row.push(l[i].to_string()),
                Targets::Values { dim, values } => {
                    row.extend(values[i * dim..(i + 1) * dim].iter().map(f64::to_string))
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`Dataset::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let input_dim = header.iter().take_while(|h| h.starts_with('x')).count();
        let target_cols = header.len() - input_dim;
        let labelled = target_cols == 1 && &header[input_dim] == "label";
        if input_dim == 0 || target_cols == 0 {
            return Err(Error::Config(
                "dataset csv needs x* columns and a target".into(),
            ));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad number `{s}`: {e}")))
        };
        let (mut inputs, mut labels, mut values) = (Vec::new(), Vec::new(), Vec::new());
        for record in r.records() {
            let record = record?;
            for field in record.iter().take(input_dim) {
                inputs.push(parse(field)?);
            }
            for field in record.iter().skip(input_dim) {
                if labelled {
                    labels.push(
                        field
                            .trim()
                            .parse::<usize>()
                            .map_err(|e| Error::Config(format!("bad label `{field}`: {e}")))?,
                    );
                } else {
                    values.push(parse(field)?);
                }
            }
        }
        let (targets, n_classes) = if labelled {
            let classes = labels.iter().max().map_or(1, |m| m + 1);
            (Targets::Labels(labels), classes)
        } else {
            (
                Targets::Values {
                    dim: target_cols,
                    values,
                },
                1,
            )
        };
        Ok(Dataset {
            examples: Batch::new(inputs, input_dim, targets)?,
            n_classes,
            true_params: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOptions {
    pub task: Task,
    pub n: usize,
    pub input_dim: usize,
    pub n_classes: usize,
    /// Standard deviation of the Gaussian noise.
    pub noise: f64,
    pub seed: u64,
}

/// Deterministic synthetic data.
///
/// Blobs: example `i` has class `i mod n_classes` (then shuffled), features
/// drawn around a per-class centre. Regression: `y = b + w.x + noise`.
pub fn generate(opts: &GenerateOptions) -> Result<Dataset> {
    let classes = match opts.task {
        Task::Blobs => opts.n_classes,
        Task::LinearRegression => 1,
    };
    if classes == 0 || opts.n < classes {
        return Err(Error::Config(format!(
            "need n >= n_classes >= 1 (n = {}, n_classes = {classes})",
            opts.n
        )));
    }
    if opts.input_dim == 0 {
        return Err(Error::Config("input_dim must be at least 1".into()));
    }
    if !(opts.noise.is_finite() && opts.noise >= 0.0) {
        return Err(Error::Config(format!("invalid noise {}", opts.noise)));
    }
    let mut rng = seed::rng(opts.seed);
    let d = opts.input_dim;
    let normal = |rng: &mut seed::Rng| -> f64 { StandardNormal.sample(rng) };
    match opts.task {
        Task::Blobs => {
            let centers: Vec<f64> = (0..classes * d)
                .map(|_| CLASS_CENTER_SPREAD * normal(&mut rng))
                .collect();
            let mut labels: Vec<usize> = (0..opts.n).map(|i| i % classes).collect();
            labels.shuffle(&mut rng);
            let mut inputs = Vec::with_capacity(opts.n * d);
            for &label in &labels {
                for k in 0..d {
                    inputs.push(centers[label * d + k] + opts.noise * normal(&mut rng));
                }
            }
            Ok(Dataset {
                examples: Batch::new(inputs, d, Targets::Labels(labels))?,
                n_classes: classes,
                true_params: None,
            })
        }
        Task::LinearRegression => {
            let weights: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
            let bias = normal(&mut rng);
            let mut inputs = Vec::with_capacity(opts.n * d);
            let mut targets = Vec::with_capacity(opts.n);
            for _ in 0..opts.n {
                let x: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
                // Same summation order as the model's forward pass.
                let mut y = bias;
                for (w, xk) in weights.iter().zip(&x) {
                    y += w * xk;
                }
                targets.push(y + opts.noise * normal(&mut rng));
                inputs.extend(x);
            }
            let mut true_params = weights;
            true_params.push(bias);
            Ok(Dataset {
                examples: Batch::new(
                    inputs,
                    d,
                    Targets::Values {
                        dim: 1,
                        values: targets,
                    },
                )?,
                n_classes: 1,
                true_params: Some(ParamVector::new(true_params)?),
            })
        }
    }
}

/// Disjoint, covering index lists, one per center.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    centers: Vec<Vec<usize>>,
}

impl Partition {
    /// Validates that `centers` partitions `0..n` into non-empty parts.
    pub fn new(centers: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for (c, idx) in centers.iter().enumerate() {
            if idx.is_empty() {
                return Err(Error::Config(format!("center {c} has no examples")));
            }
            for &i in idx {
                if i >= n || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Config(format!("index {i} out of range or repeated")));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config(
                "partition does not cover every example".into(),
            ));
        }
        Ok(Partition { centers })
    }

    pub fn centers(&self) -> &[Vec<usize>] {
        &self.centers
    }

    pub fn n_centers(&self) -> usize {
        self.centers.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.centers.iter().map(Vec::len).collect()
    }
}

/// Label-skewed split: for every class, center shares are drawn from a
/// symmetric Dirichlet(`beta`) and that class's examples are dealt out
/// accordingly. Draws that leave a center empty are retried with the next
/// seed offset.
pub fn partition_dirichlet(
    dataset: &Dataset,
    n_centers: usize,
    beta: f64,
    seed: u64,
) -> Result<Partition> {
    if n_centers == 0 || n_centers > dataset.len() {
        return Err(Error::Config(format!(
            "cannot split {} examples across {n_centers} centers",
            dataset.len()
        )));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Config(format!(
            "dirichlet beta {beta} must be positive"
        )));
    }
    let classes = dataset.classes();
    let n_classes = classes.iter().max().map_or(1, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in classes.iter().enumerate() {
        by_class[c].push(i);
    }
    let gamma = Gamma::new(beta, 1.0).map_err(|e| Error::Config(e.to_string()))?;

    for attempt in 0..MAX_PARTITION_ATTEMPTS {
        let mut rng = seed::rng(seed::derive(seed, &[attempt]));
        let mut centers: Vec<Vec<usize>> = vec![Vec::new(); n_centers];
        let mut degenerate = false;
        for members in &by_class {
            let mut members = members.clone();
            members.shuffle(&mut rng);
            let draws: Vec<f64> = (0..n_centers).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = draws.iter().sum();
            if !(total.is_finite() && total > 0.0) {
                degenerate = true;
                break;
            }
            let mut cumulative = 0.0;
            let mut start = 0;
            for (c, g) in draws.iter().enumerate() {
                cumulative += g / total;
                let end = if c + 1 == n_centers {
                    members.len()
                } else {
                    ((cumulative * members.len() as f64) as usize).clamp(start, members.len())
                };
                centers[c].extend_from_slice(&members[start..end]);
                start = end;
            }
        }
        if degenerate || centers.iter().any(Vec::is_empty) {
            continue;
        }
        for c in &mut centers {
            c.sort_unstable();
        }
        return Partition::new(centers, dataset.len());
    }
    Err(Error::Config(format!(
        "no partition with every center non-empty after {MAX_PARTITION_ATTEMPTS} attempts \
         (n = {}, centers = {n_centers}, beta = {beta})",
        dataset.len()
    )))
}

/// Shuffled split with `floor(fraction * n)` training examples, clamped so
/// that both sides are non-empty when `n >= 2`.
pub fn split_train_val(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "split fraction {fraction} outside (0, 1)"
        )));
    }
    let n = dataset.len();
    if n < 2 {
        return Err(Error::Config("need at least two examples to split".into()));
    }
    let train_n = ((fraction * n as f64).floor() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let (train, val) = order.split_at(train_n);
    Ok((dataset.subset(train)?, dataset.subset(val)?))
}
