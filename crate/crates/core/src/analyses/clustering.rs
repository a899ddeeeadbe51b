use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlcore::kmeans::{kmeans_cluster, KMeansConfig};

pub const DEFAULT_CLUSTERS: usize = 2;

/// Share of abstract concepts in each k-means cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub cluster_abstract_proportions: Vec<f64>,
    pub dataset_abstract_proportion: f64,
    pub cluster_sizes: Vec<usize>,
    pub inertia: f64,
    pub assignments: Vec<usize>,
}

/// Clusters the labeled concepts and reports how abstract each cluster is.
/// `labels` are class signs; `-1` marks abstract.
pub fn cluster_composition(
    x: ArrayView2<'_, f64>,
    labels: &[f64],
    k: usize,
    config: &KMeansConfig,
    seed: u64,
) -> Result<ClusterReport> {
    if labels.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            context: "cluster labels".into(),
            expected: x.nrows(),
            found: labels.len(),
        });
    }
    let result = kmeans_cluster(x, k, config, seed)?;
    let sizes = result.cluster_sizes();
    let mut abstract_counts = vec![0usize; k];
    for (&a, &l) in result.assignments.iter().zip(labels) {
        if l < 0.0 {
            abstract_counts[a] += 1;
        }
    }
    let total_abstract: usize = abstract_counts.iter().sum();
    Ok(ClusterReport {
        cluster_abstract_proportions: abstract_counts
            .iter()
            .zip(&sizes)
            .map(|(&a, &s)| a as f64 / s as f64)
            .collect(),
        dataset_abstract_proportion: total_abstract as f64 / labels.len() as f64,
        cluster_sizes: sizes,
        inertia: result.inertia,
        assignments: result.assignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn label_aligned_blobs() {
        let labels: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let x = Array2::from_shape_fn((20, 3), |(i, j)| labels[i] * 10.0 + (i * 3 + j) as f64 * 0.01);
        let r = cluster_composition(x.view(), &labels, 2, &KMeansConfig::default(), 1).unwrap();
        let mut p = r.cluster_abstract_proportions.clone();
        p.sort_by(f64::total_cmp);
        assert_eq!(p, vec![0.0, 1.0]);
        assert_eq!(r.dataset_abstract_proportion, 0.5);
    }

    #[test]
    fn identical_points_still_weight_to_dataset_share() {
        let labels = vec![1.0, -1.0, -1.0, 1.0, -1.0];
        let x = Array2::from_elem((5, 2), 4.0);
        let r = cluster_composition(x.view(), &labels, 2, &KMeansConfig::default(), 0).unwrap();
        assert!(r.cluster_sizes.iter().all(|&s| s > 0));
        let weighted: f64 = r
            .cluster_abstract_proportions
            .iter()
            .zip(&r.cluster_sizes)
            .map(|(p, &s)| p * s as f64)
            .sum::<f64>()
            / 5.0;
        assert!((weighted - r.dataset_abstract_proportion).abs() < 1e-12);
        assert_eq!(r.dataset_abstract_proportion, 0.6);
    }
}
