//! Instance builders shared by the benchmarks.

use otconf::{class_means, gen_clusters, ClusterShape, ClusterSpec, DiscreteMeasure, FeatureTable};

/// `m` Gaussian clusters in `d` dimensions with `n` samples in total, and
/// their class means as prototypes.
pub fn clustered(n: usize, m: usize, d: usize, seed: u64) -> (FeatureTable, DiscreteMeasure) {
    assert!(m >= 1 && n >= m && d >= 1);
    let centers = (0..m)
        .map(|c| (0..d).map(|j| if j == c % d { 6.0 * (c / d + 1) as f64 } else { 0.0 }).collect())
        .collect();
    let mut counts = vec![n / m; m];
    counts[0] += n % m;
    let spec = ClusterSpec {
        centers,
        scales: vec![1.0; m],
        counts,
        shape: ClusterShape::Gaussian,
        seed,
    };
    let table = gen_clusters(&spec).expect("valid spec");
    let means = class_means(&table).expect("every cluster is sampled");
    (table.without_labels(), means)
}

/// Two point clouds for the exact solver.
pub fn point_clouds(n: usize, d: usize, seed: u64) -> (FeatureTable, FeatureTable) {
    let (a, _) = clustered(n, 2, d, seed);
    let (b, _) = clustered(n, 2, d, seed + 1);
    (a, b)
}
