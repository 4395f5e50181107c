// Train each model family locally with minibatch SGD and compare one
// analytic gradient coordinate with a central difference.
//
// ```bash
// cargo run --example gradient_check
// ```

use fedcost::data::{generate, GenerateOptions, Task};
use fedcost::models::{self, ModelSpec, TrainOptions};
use fedcost::ParamVector;

pub fn run_example() -> fedcost::Result<()> {
    let blobs = generate(&GenerateOptions {
        task: Task::Blobs,
        n: 200,
        input_dim: 4,
        n_classes: 3,
        noise: 1.0,
        seed: 1,
    })?;
    let line = generate(&GenerateOptions {
        task: Task::LinearRegression,
        n: 200,
        input_dim: 4,
        n_classes: 1,
        noise: 0.1,
        seed: 1,
    })?;

    let cases = [
        (ModelSpec::linear_regression(4, 1), &line),
        (ModelSpec::logistic_regression(4, 3), &blobs),
        (ModelSpec::mlp(4, 8, 3), &blobs),
    ];
    for (spec, data) in cases {
        let start = models::init_params(&spec, 3);
        let before = models::loss(&spec, &start, &data.examples)?;
        let opts = TrainOptions {
            epochs: 20,
            lr: 0.05,
            batch_size: 8,
            seed: 3,
        };
        let (trained, cost) = models::local_train(&spec, &start, &data.examples, &opts)?;
        println!(
            "{:<20} loss {before:.4} -> {cost:.4}",
            spec.kind.to_string()
        );

        let grad = models::gradient(&spec, &trained, &data.examples)?;
        let h = 1e-5;
        let shifted = |d: f64| -> fedcost::Result<f64> {
            let mut p = trained.clone().into_inner();
            p[0] += d;
            models::loss(&spec, &ParamVector::new(p)?, &data.examples)
        };
        let numeric = (shifted(h)? - shifted(-h)?) / (2.0 * h);
        println!(
            "{:<20} d/dw0 analytic {:+.8} numeric {numeric:+.8}",
            "", grad[0]
        );

        if let Some(acc) = models::accuracy(&spec, &trained, &data.examples)? {
            println!("{:<20} train accuracy {acc:.3}", "");
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> fedcost::Result<()> {
    run_example()
}
