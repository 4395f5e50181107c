// Generate a synthetic classification set, split off validation data and
// deal the rest to centers with Dirichlet label skew.
//
// ```bash
// cargo run --example partition_data
// ```

use fedcost::data::{generate, partition_dirichlet, split_train_val, GenerateOptions, Task};

pub fn run_example() -> fedcost::Result<()> {
    let data = generate(&GenerateOptions {
        task: Task::Blobs,
        n: 369,
        input_dim: 8,
        n_classes: 3,
        noise: 1.5,
        seed: 7,
    })?;
    let (train, validation) = split_train_val(&data, 0.8, 7)?;
    println!(
        "{} train / {} validation examples",
        train.len(),
        validation.len()
    );

    for beta in [0.1, 0.5, 100.0] {
        let partition = partition_dirichlet(&train, 17, beta, 7)?;
        println!("beta={beta:<5} center sizes {:?}", partition.sizes());
    }

    let partition = partition_dirichlet(&train, 5, 0.5, 7)?;
    let labels = train.examples.labels().expect("classification data");
    for (c, indices) in partition.centers().iter().enumerate() {
        let mut per_class = vec![0; train.n_classes];
        for &i in indices {
            per_class[labels[i]] += 1;
        }
        println!("center {c}: class counts {per_class:?}");
    }

    let mut csv = Vec::new();
    train.subset(&partition.centers()[0])?.write_csv(&mut csv)?;
    println!("first lines of center 0 as CSV:");
    for line in String::from_utf8_lossy(&csv).lines().take(3) {
        println!("  {line}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> fedcost::Result<()> {
    run_example()
}
