//! Lloyd's k-means with greedy k-means++ seeding and best-of-N restarts.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng, TaskRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iterations: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iterations: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Sum of squared distances of points to their assigned centroid.
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every centroid update of the winning restart.
    pub inertia_trace: Vec<f64>,
    /// Final inertia of every restart, in restart order.
    pub restart_inertias: Vec<f64>,
}

impl ClusterResult {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: ArrayView1<'_, f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.axis_iter(Axis(0)).enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Greedy k-means++: each new center is the best of `2 + ln k` candidates
/// drawn proportionally to squared distance from the current centers.
fn seed_centroids(x: ArrayView2<'_, f64>, k: usize, rng: &mut TaskRng) -> Array2<f64> {
    let n = x.nrows();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centroids = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&x.row(first));
    let mut closest: Vec<f64> = x.axis_iter(Axis(0)).map(|p| sq_dist(p, x.row(first))).collect();

    for c in 1..k {
        let potential: f64 = closest.iter().sum();
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for _ in 0..trials {
            let candidate = if potential > 0.0 {
                let target = rng.random::<f64>() * potential;
                let mut acc = 0.0;
                let mut pick = n - 1;
                for (i, d) in closest.iter().enumerate() {
                    acc += d;
                    if acc > target {
                        pick = i;
                        break;
                    }
                }
                pick
            } else {
                rng.random_range(0..n)
            };
            let updated: Vec<f64> = x
                .axis_iter(Axis(0))
                .zip(&closest)
                .map(|(p, &d)| d.min(sq_dist(p, x.row(candidate))))
                .collect();
            let new_potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|b| new_potential < b.1) {
                best = Some((candidate, new_potential, updated));
            }
        }
        let (chosen, _, updated) = best.expect("at least one trial");
        centroids.row_mut(c).assign(&x.row(chosen));
        closest = updated;
    }
    centroids
}

fn assign(x: ArrayView2<'_, f64>, centroids: &Array2<f64>) -> Vec<usize> {
    x.axis_iter(Axis(0)).map(|p| nearest(p, centroids).0).collect()
}

/// Fills empty clusters by moving the point farthest from its centroid
/// (taken only from clusters with more than one member).
fn repair_empty(x: ArrayView2<'_, f64>, assignments: &mut [usize], centroids: &Array2<f64>) {
    let k = centroids.nrows();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    while let Some(empty) = sizes.iter().position(|&s| s == 0) {
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (i, &a) in assignments.iter().enumerate() {
            if sizes[a] < 2 {
                continue;
            }
            let d = sq_dist(x.row(i), centroids.row(a));
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let i = far.expect("n >= k guarantees a donor cluster");
        sizes[assignments[i]] -= 1;
        assignments[i] = empty;
        sizes[empty] += 1;
    }
}

fn means(x: ArrayView2<'_, f64>, assignments: &[usize], k: usize) -> Array2<f64> {
    let mut sums = Array2::zeros((k, x.ncols()));
    let mut counts = vec![0usize; k];
    for (p, &a) in x.axis_iter(Axis(0)).zip(assignments) {
        let mut row = sums.row_mut(a);
        row += &p;
        counts[a] += 1;
    }
    for (mut row, &c) in sums.axis_iter_mut(Axis(0)).zip(&counts) {
        if c > 0 {
            row /= c as f64;
        }
    }
    sums
}

pub fn inertia(x: ArrayView2<'_, f64>, assignments: &[usize], centroids: &Array2<f64>) -> f64 {
    x.axis_iter(Axis(0))
        .zip(assignments)
        .map(|(p, &a)| sq_dist(p, centroids.row(a)))
        .sum()
}

fn lloyd(x: ArrayView2<'_, f64>, k: usize, max_iterations: usize, seed: u64) -> ClusterResult {
    let mut rng = rng(seed);
    let mut centroids = seed_centroids(x, k, &mut rng);
    let mut assignments = assign(x, &centroids);
    repair_empty(x, &mut assignments, &centroids);
    let mut trace = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iterations.max(1) {
        iterations += 1;
        centroids = means(x, &assignments, k);
        trace.push(inertia(x, &assignments, &centroids));
        let mut next = assign(x, &centroids);
        repair_empty(x, &mut next, &centroids);
        if next == assignments {
            break;
        }
        assignments = next;
    }
    let final_inertia = inertia(x, &assignments, &centroids);
    ClusterResult {
        assignments,
        centroids,
        inertia: final_inertia,
        iterations,
        inertia_trace: trace,
        restart_inertias: Vec::new(),
    }
}

/// Best-inertia result over `config.restarts` Lloyd runs. Restart `r` is
/// seeded from `derive_seed(seed, r)`; ties keep the earliest restart.
pub fn kmeans_cluster(x: ArrayView2<'_, f64>, k: usize, config: &KMeansConfig, seed: u64) -> Result<ClusterResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if x.nrows() < k {
        return Err(Error::InvalidArgument(format!(
            "k-means needs at least k = {k} points, got {}",
            x.nrows()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means input".into()));
    }
    let restarts = config.restarts.max(1);
    let runs: Vec<ClusterResult> = (0..restarts)
        .into_par_iter()
        .map(|r| lloyd(x, k, config.max_iterations, derive_seed(seed, r as u64)))
        .collect();
    let restart_inertias: Vec<f64> = runs.iter().map(|r| r.inertia).collect();
    let mut best = runs
        .into_iter()
        .reduce(|best, run| if run.inertia < best.inertia { run } else { best })
        .expect("at least one restart");
    best.restart_inertias = restart_inertias;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_cluster_is_the_mean() {
        let x = array![[0.0, 0.0], [2.0, 0.0], [4.0, 3.0]];
        let r = kmeans_cluster(x.view(), 1, &KMeansConfig::default(), 0).unwrap();
        assert_eq!(r.centroids, array![[2.0, 1.0]]);
        // 4+1 + 0+1 + 4+4
        assert!((r.inertia - 14.0).abs() < 1e-12);
    }

    #[test]
    fn separated_clouds_are_recovered() {
        let x = array![
            [0.0, 0.0],
            [0.1, -0.1],
            [-0.1, 0.05],
            [10.0, 10.0],
            [10.1, 9.9],
            [9.95, 10.05]
        ];
        let r = kmeans_cluster(x.view(), 2, &KMeansConfig::default(), 3).unwrap();
        let a = &r.assignments;
        assert!(a[0] == a[1] && a[1] == a[2]);
        assert!(a[3] == a[4] && a[4] == a[5]);
        assert_ne!(a[0], a[3]);
    }

    #[test]
    fn identical_points_keep_clusters_nonempty() {
        let x = Array2::from_elem((6, 3), 1.5);
        let r = kmeans_cluster(x.view(), 2, &KMeansConfig::default(), 9).unwrap();
        assert!(r.cluster_sizes().iter().all(|&s| s > 0));
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn too_few_points() {
        let x = array![[1.0], [2.0]];
        assert!(kmeans_cluster(x.view(), 3, &KMeansConfig::default(), 0).is_err());
    }

    #[test]
    fn trace_is_non_increasing_and_best_is_minimal() {
        let mut g = rng(5);
        let x = Array2::from_shape_fn((60, 4), |_| g.random_range(-3.0..3.0));
        let r = kmeans_cluster(x.view(), 4, &KMeansConfig::default(), 1).unwrap();
        for w in r.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", r.inertia_trace);
        }
        assert!(r.restart_inertias.iter().all(|&i| r.inertia <= i));
        let recomputed = inertia(x.view(), &r.assignments, &r.centroids);
        assert!((recomputed - r.inertia).abs() < 1e-12);
    }

    #[test]
    fn deterministic_per_seed() {
        let mut g = rng(6);
        let x = Array2::from_shape_fn((40, 3), |_| g.random_range(-1.0..1.0));
        let a = kmeans_cluster(x.view(), 3, &KMeansConfig::default(), 77).unwrap();
        let b = kmeans_cluster(x.view(), 3, &KMeansConfig::default(), 77).unwrap();
        assert_eq!(a, b);
    }
}
