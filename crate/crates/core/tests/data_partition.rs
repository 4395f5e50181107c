use fedcost::data::{
    generate, partition_dirichlet, split_train_val, Dataset, GenerateOptions, Task,
};
use proptest::prelude::*;

fn blobs(n: usize, classes: usize, seed: u64) -> Dataset {
    generate(&GenerateOptions {
        task: Task::Blobs,
        n,
        input_dim: 3,
        n_classes: classes,
        noise: 1.0,
        seed,
    })
    .unwrap()
}

fn assert_exact(centers: &[Vec<usize>], n: usize) {
    assert!(centers.iter().all(|c| !c.is_empty()));
    let mut all: Vec<usize> = centers.iter().flatten().copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..n).collect::<Vec<_>>());
}

#[test]
fn default_scale_partitions_are_exact() {
    let data = blobs(295, 3, 0);
    for seed in 0..200 {
        let p = partition_dirichlet(&data, 17, 0.5, seed).unwrap();
        assert_eq!(p.n_centers(), 17);
        assert_exact(p.centers(), 295);
    }
}

#[test]
fn small_beta_is_uneven() {
    let data = blobs(295, 3, 0);
    let p = partition_dirichlet(&data, 17, 0.5, 1).unwrap();
    let sizes = p.sizes();
    let (min, max) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
    assert!(*max >= 3 * *min, "{sizes:?}");
}

#[test]
fn huge_beta_is_nearly_even() {
    // 2 classes x 500 examples over 10 centers: 100 examples each at the limit.
    let data = blobs(1000, 2, 3);
    for seed in 0..20 {
        let sizes = partition_dirichlet(&data, 10, 1e6, seed).unwrap().sizes();
        let (min, max) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
        assert!((max as f64) / (min as f64) < 1.5, "seed {seed}: {sizes:?}");
    }
}

#[test]
fn regression_data_is_split_by_size_only() {
    let data = generate(&GenerateOptions {
        task: Task::LinearRegression,
        n: 100,
        input_dim: 2,
        n_classes: 1,
        noise: 0.1,
        seed: 0,
    })
    .unwrap();
    let p = partition_dirichlet(&data, 5, 0.5, 2).unwrap();
    assert_exact(p.centers(), 100);
}

#[test]
fn dataset_csv_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let data = blobs(20, 2, 9);
    data.write_csv(std::fs::File::create(&path).unwrap())
        .unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("x0,x1,x2,label\n"));
    let back = Dataset::read_csv(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back.examples, data.examples);
    assert_eq!(back.n_classes, 2);
}

proptest! {
    #[test]
    fn any_partition_is_exact(
        n in 5usize..120,
        classes in 1usize..5,
        centers in 1usize..6,
        beta in 0.05f64..50.0,
        seed in any::<u64>(),
    ) {
        prop_assume!(n >= classes && centers <= n);
        let data = blobs(n, classes, seed);
        if let Ok(p) = partition_dirichlet(&data, centers, beta, seed) {
            assert_exact(p.centers(), n);
            prop_assert_eq!(p, partition_dirichlet(&data, centers, beta, seed).unwrap());
        }
    }

    #[test]
    fn split_is_disjoint_and_covering(n in 2usize..200, fraction in 0.01f64..0.99, seed in any::<u64>()) {
        let data = blobs(n, 1, seed);
        let (train, val) = split_train_val(&data, fraction, seed).unwrap();
        prop_assert_eq!(train.len() + val.len(), n);
        prop_assert!(!train.is_empty() && !val.is_empty());
        let expected = ((fraction * n as f64).floor() as usize).clamp(1, n - 1);
        prop_assert_eq!(train.len(), expected);
        // Rows are unique with probability 1, so compare as sets of rows.
        let key = |d: &Dataset, i: usize| d.examples.row(i).iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        let mut rows: Vec<Vec<u64>> = (0..train.len()).map(|i| key(&train, i))
            .chain((0..val.len()).map(|i| key(&val, i))).collect();
        let mut orig: Vec<Vec<u64>> = (0..n).map(|i| key(&data, i)).collect();
        rows.sort();
        orig.sort();
        prop_assert_eq!(rows, orig);
    }
}
