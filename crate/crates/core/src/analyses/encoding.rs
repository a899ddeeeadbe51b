//! Encoding: ridge maps from concept vectors to voxel patterns, scored by
//! single-match pairwise accuracy under cosine distance.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyses::folds::FoldPlan;
use crate::error::{Error, Result};
use crate::mlcore::ridge::{ridge_fit, ridge_predict, RidgeConfig};
use crate::seed::{derive_seed, rng};

pub const DEFAULT_RANDOM_DIMENSION: usize = 300;
pub const DEFAULT_RANDOM_INITIALIZATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingResult {
    pub representation: String,
    pub per_concept: Vec<f64>,
    pub mean_abstract: f64,
    pub mean_concrete: f64,
    pub mean_overall: f64,
}

impl EncodingResult {
    fn from_per_concept(representation: String, per_concept: Vec<f64>, labels: &[f64]) -> Self {
        let mean_of = |keep: &dyn Fn(f64) -> bool| {
            let picked: Vec<f64> = per_concept
                .iter()
                .zip(labels)
                .filter(|&(_, &l)| keep(l))
                .map(|(&a, _)| a)
                .collect();
            if picked.is_empty() {
                f64::NAN
            } else {
                picked.iter().sum::<f64>() / picked.len() as f64
            }
        };
        Self {
            representation,
            mean_abstract: mean_of(&|l| l < 0.0),
            mean_concrete: mean_of(&|l| l > 0.0),
            mean_overall: mean_of(&|_| true),
            per_concept,
        }
    }
}

fn norm(v: ArrayView1<'_, f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine_with_norms(u: ArrayView1<'_, f64>, nu: f64, v: ArrayView1<'_, f64>, nv: f64) -> f64 {
    let dot: f64 = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
    (1.0 - dot / (nu * nv)).clamp(0.0, 2.0)
}

fn row_norms(observed: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    observed
        .axis_iter(Axis(0))
        .enumerate()
        .map(|(j, row)| {
            let n = norm(row);
            if n == 0.0 {
                Err(Error::ZeroNorm(j))
            } else {
                Ok(n)
            }
        })
        .collect()
}

fn pairwise_with_norms(
    prediction: ArrayView1<'_, f64>,
    observed: ArrayView2<'_, f64>,
    norms: &[f64],
    i: usize,
) -> Result<f64> {
    let np = norm(prediction);
    if np == 0.0 {
        return Err(Error::ZeroNorm(i));
    }
    let own = cosine_with_norms(prediction, np, observed.row(i), norms[i]);
    let wins = (0..observed.nrows())
        .filter(|&j| j != i)
        .filter(|&j| own < cosine_with_norms(prediction, np, observed.row(j), norms[j]))
        .count();
    Ok(wins as f64 / (observed.nrows() - 1) as f64)
}

/// Fraction of other concepts `j` whose observed pattern is strictly farther
/// (cosine distance) from `prediction` than concept `i`'s own pattern. Ties
/// count as failures.
pub fn pairwise_accuracy_single(
    prediction: ArrayView1<'_, f64>,
    observed: ArrayView2<'_, f64>,
    i: usize,
) -> Result<f64> {
    if i >= observed.nrows() {
        return Err(Error::InvalidArgument(format!(
            "concept {i} out of range for {} observed rows",
            observed.nrows()
        )));
    }
    if observed.nrows() < 2 {
        return Err(Error::InvalidArgument(
            "pairwise accuracy needs at least 2 concepts".into(),
        ));
    }
    if prediction.len() != observed.ncols() {
        return Err(Error::DimensionMismatch {
            context: "prediction vs observed voxels".into(),
            expected: observed.ncols(),
            found: prediction.len(),
        });
    }
    let norms = row_norms(observed)?;
    pairwise_with_norms(prediction, observed, &norms, i)
}

/// Cross-validated encoding. `embeddings` and `x` are row-aligned over the
/// labeled concepts; `labels` are their class signs.
pub fn encode_cv(
    representation: &str,
    embeddings: ArrayView2<'_, f64>,
    x: ArrayView2<'_, f64>,
    labels: &[f64],
    folds: &FoldPlan,
    config: &RidgeConfig,
) -> Result<EncodingResult> {
    let n = x.nrows();
    for (what, len) in [
        ("embedding rows", embeddings.nrows()),
        ("labels", labels.len()),
        ("fold plan", folds.n_items),
    ] {
        if len != n {
            return Err(Error::DimensionMismatch {
                context: format!("encoding {what}"),
                expected: n,
                found: len,
            });
        }
    }
    let norms = row_norms(x)?;
    let mut per_concept = vec![0.0; n];
    for f in 0..folds.n_folds {
        let train = folds.train_indices(f);
        let test = folds.test_indices(f);
        let encoder = ridge_fit(
            embeddings.select(Axis(0), &train).view(),
            x.select(Axis(0), &train).view(),
            config.lambda,
        )?;
        let predicted = ridge_predict(&encoder, embeddings.select(Axis(0), &test).view())?;
        for (row, &item) in predicted.axis_iter(Axis(0)).zip(&test) {
            per_concept[item] = pairwise_with_norms(row, x, &norms, item)?;
        }
    }
    Ok(EncodingResult::from_per_concept(
        representation.to_string(),
        per_concept,
        labels,
    ))
}

/// i.i.d. standard-normal concept vectors.
pub fn random_embeddings(n: usize, dimension: usize, seed: u64) -> Array2<f64> {
    let mut g = rng(seed);
    Array2::from_shape_fn((n, dimension), |_| StandardNormal.sample(&mut g))
}

/// Encoding with random vectors, averaged over `n_initializations` draws.
/// Draw `r` uses `random_embeddings(n, dimension, derive_seed(seed, r))`.
pub fn random_baseline_accuracy(
    x: ArrayView2<'_, f64>,
    labels: &[f64],
    folds: &FoldPlan,
    dimension: usize,
    n_initializations: usize,
    seed: u64,
    config: &RidgeConfig,
) -> Result<EncodingResult> {
    if n_initializations == 0 {
        return Err(Error::InvalidArgument("n_initializations must be at least 1".into()));
    }
    if dimension == 0 {
        return Err(Error::InvalidArgument(
            "random embedding dimension must be positive".into(),
        ));
    }
    let runs: Vec<EncodingResult> = (0..n_initializations)
        .into_par_iter()
        .map(|r| {
            let e = random_embeddings(x.nrows(), dimension, derive_seed(seed, r as u64));
            encode_cv("random", e.view(), x, labels, folds, config)
        })
        .collect::<Result<_>>()?;
    let mut per_concept = vec![0.0; x.nrows()];
    for run in &runs {
        for (acc, v) in per_concept.iter_mut().zip(&run.per_concept) {
            *acc += v;
        }
    }
    for v in &mut per_concept {
        *v /= n_initializations as f64;
    }
    Ok(EncodingResult::from_per_concept("random".into(), per_concept, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyses::folds::make_folds;
    use crate::mlcore::stats::cosine_distance;
    use ndarray::array;

    #[test]
    fn exact_prediction_wins_everything() {
        let observed = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.5], [0.2, 0.1, 3.0]];
        for i in 0..4 {
            assert_eq!(
                pairwise_accuracy_single(observed.row(i), observed.view(), i).unwrap(),
                1.0
            );
        }
    }

    #[test]
    fn equidistant_prediction_scores_zero() {
        let observed = array![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        // (1,1) ties rows 0 and 1 and is closer to both than to rows 2 and 3
        let p = array![1.0, 1.0];
        let acc = pairwise_accuracy_single(p.view(), observed.view(), 0).unwrap();
        assert!((acc - 2.0 / 3.0).abs() < 1e-15);
        // collinear rows: every comparison is a tie
        let eq = array![[1.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        assert_eq!(
            pairwise_accuracy_single(array![0.5, 0.5].view(), eq.view(), 0).unwrap(),
            0.0
        );
    }

    #[test]
    fn three_concepts_by_enumeration() {
        let observed = array![[1.0, 2.0, 0.0], [0.5, -1.0, 1.0], [2.0, 1.0, 1.0]];
        let p = array![1.0, 1.0, 1.0];
        let d: Vec<f64> = (0..3)
            .map(|j| cosine_distance(p.as_slice().unwrap(), observed.row(j).as_slice().unwrap()).unwrap())
            .collect();
        for i in 0..3 {
            let expected = (0..3).filter(|&j| j != i && d[i] < d[j]).count() as f64 / 2.0;
            assert_eq!(
                pairwise_accuracy_single(p.view(), observed.view(), i).unwrap(),
                expected
            );
        }
    }

    #[test]
    fn zero_norm_rejected() {
        let observed = array![[1.0, 0.0], [0.0, 0.0]];
        assert!(matches!(
            pairwise_accuracy_single(array![1.0, 1.0].view(), observed.view(), 0),
            Err(Error::ZeroNorm(1))
        ));
        let ok = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(
            pairwise_accuracy_single(array![0.0, 0.0].view(), ok.view(), 0),
            Err(Error::ZeroNorm(0))
        ));
    }

    #[test]
    fn single_init_equals_encode_cv() {
        let x = random_embeddings(24, 10, 1);
        let labels: Vec<f64> = (0..24).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        let folds = make_folds(24, 4, 2).unwrap();
        let cfg = RidgeConfig::default();
        let base = random_baseline_accuracy(x.view(), &labels, &folds, 7, 1, 99, &cfg).unwrap();
        let direct = encode_cv(
            "random",
            random_embeddings(24, 7, derive_seed(99, 0)).view(),
            x.view(),
            &labels,
            &folds,
            &cfg,
        )
        .unwrap();
        assert_eq!(base, direct);
    }

    #[test]
    fn identity_relation_encodes_perfectly() {
        let e = random_embeddings(33, 6, 5);
        let labels: Vec<f64> = (0..33).map(|i| if i < 16 { -1.0 } else { 1.0 }).collect();
        let folds = make_folds(33, 11, 0).unwrap();
        let r = encode_cv(
            "identity",
            e.view(),
            e.view(),
            &labels,
            &folds,
            &RidgeConfig { lambda: 1e-6 },
        )
        .unwrap();
        assert!(r.mean_abstract >= 0.99 && r.mean_concrete >= 0.99, "{r:?}");
    }
}
