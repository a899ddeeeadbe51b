//! Cross-validated SVM decoding and the label-permutation significance test.
//!
//! The RBF kernel depends on the data only through pairwise squared distances
//! and the per-fold `gamma`, neither of which involves the labels. A
//! [`DecodingProblem`] therefore precomputes every fold's kernel once and can
//! then score any number of label vectors, which is what makes a
//! 1000-permutation test affordable.

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyses::folds::FoldPlan;
use crate::error::{Error, Result};
use crate::mlcore::svm::{self, check_binary_labels, decision_label, solve_dual, SvmConfig};
use crate::seed::{derive_seed, rng};

pub const DEFAULT_PERMUTATIONS: usize = 1000;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone)]
struct FoldKernels {
    train: Vec<usize>,
    test: Vec<usize>,
    /// `train x train`, row-major
    train_kernel: Vec<f64>,
    /// `test x train`, row-major
    test_kernel: Vec<f64>,
}

/// Per-fold RBF kernels for one data matrix and fold plan.
#[derive(Debug, Clone)]
pub struct DecodingProblem {
    folds: Vec<FoldKernels>,
    n_items: usize,
    config: SvmConfig,
}

/// Accuracy of one cross-validation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvAccuracy {
    /// Fold-size weighted mean of `per_fold`, i.e. correct / total.
    pub accuracy: f64,
    pub per_fold: Vec<f64>,
    pub fold_sizes: Vec<usize>,
}

impl DecodingProblem {
    pub fn new(x: ArrayView2<'_, f64>, folds: &FoldPlan, config: &SvmConfig) -> Result<Self> {
        if x.nrows() != folds.n_items {
            return Err(Error::DimensionMismatch {
                context: "decoding rows vs fold plan".into(),
                expected: folds.n_items,
                found: x.nrows(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("decoding features".into()));
        }
        let n = x.nrows();
        let sq = svm::pairwise_squared_distances(x);
        let folds = (0..folds.n_folds)
            .map(|f| {
                let train = folds.train_indices(f);
                let test = folds.test_indices(f);
                let gamma = config.resolve_gamma(x.select(Axis(0), &train).view());
                let train_kernel = train
                    .iter()
                    .flat_map(|&a| train.iter().map(move |&b| (a, b)))
                    .map(|(a, b)| (-gamma * sq[a * n + b]).exp())
                    .collect();
                let test_kernel = test
                    .iter()
                    .flat_map(|&a| train.iter().map(move |&b| (a, b)))
                    .map(|(a, b)| (-gamma * sq[a * n + b]).exp())
                    .collect();
                FoldKernels {
                    train,
                    test,
                    train_kernel,
                    test_kernel,
                }
            })
            .collect();
        Ok(Self {
            folds,
            n_items: n,
            config: *config,
        })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Trains on each fold's complement and scores the held-out items.
    pub fn evaluate(&self, labels: &[f64]) -> Result<CvAccuracy> {
        if labels.len() != self.n_items {
            return Err(Error::DimensionMismatch {
                context: "decoding labels".into(),
                expected: self.n_items,
                found: labels.len(),
            });
        }
        let mut per_fold = Vec::with_capacity(self.folds.len());
        let mut fold_sizes = Vec::with_capacity(self.folds.len());
        let mut correct_total = 0usize;
        for (f, fold) in self.folds.iter().enumerate() {
            let y: Vec<f64> = fold.train.iter().map(|&i| labels[i]).collect();
            check_binary_labels(&y).map_err(|e| match e {
                Error::Degenerate(_) => Error::SingleClassFold { fold: f },
                other => other,
            })?;
            let max_iter = svm::max_iterations(&self.config, y.len());
            let solution = solve_dual(&fold.train_kernel, &y, self.config.c, self.config.tolerance, max_iter);
            let coef: Vec<f64> = solution.alpha.iter().zip(&y).map(|(a, y)| a * y).collect();
            let n_train = fold.train.len();
            let correct = fold
                .test
                .iter()
                .enumerate()
                .filter(|&(t, &item)| {
                    let row = &fold.test_kernel[t * n_train..(t + 1) * n_train];
                    let value: f64 = row.iter().zip(&coef).map(|(k, c)| k * c).sum::<f64>() + solution.bias;
                    decision_label(value) == labels[item]
                })
                .count();
            correct_total += correct;
            per_fold.push(correct as f64 / fold.test.len() as f64);
            fold_sizes.push(fold.test.len());
        }
        Ok(CvAccuracy {
            accuracy: correct_total as f64 / self.n_items as f64,
            per_fold,
            fold_sizes,
        })
    }
}

/// Per fold: fit on the other folds, score on this one.
pub fn decode_cv(x: ArrayView2<'_, f64>, labels: &[f64], folds: &FoldPlan, config: &SvmConfig) -> Result<CvAccuracy> {
    DecodingProblem::new(x, folds, config)?.evaluate(labels)
}

/// Add-one empirical p-value: `(1 + #{permuted >= observed}) / (1 + N)`.
pub fn empirical_p_value(observed: f64, permuted: &[f64]) -> f64 {
    let exceed = permuted.iter().filter(|&&p| p >= observed).count();
    (1 + exceed) as f64 / (1 + permuted.len()) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingResult {
    pub accuracy: f64,
    pub per_fold_accuracies: Vec<f64>,
    pub fold_sizes: Vec<usize>,
    pub p_value: f64,
    pub n_permutations: usize,
    pub alpha: f64,
    pub significant: bool,
    pub null_accuracies: Vec<f64>,
}

/// Permutation `p` shuffles the labels with a generator seeded from
/// `derive_seed(seed, p)` and reuses the same fold plan.
pub fn permuted_accuracies(
    problem: &DecodingProblem,
    labels: &[f64],
    n_permutations: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..n_permutations)
        .into_par_iter()
        .map(|p| {
            let mut shuffled = labels.to_vec();
            shuffled.shuffle(&mut rng(derive_seed(seed, p as u64)));
            problem.evaluate(&shuffled).map(|r| r.accuracy)
        })
        .collect()
}

/// Observed cross-validated accuracy against a label-permutation null.
pub fn permutation_pvalue(
    x: ArrayView2<'_, f64>,
    labels: &[f64],
    folds: &FoldPlan,
    n_permutations: usize,
    alpha: f64,
    seed: u64,
    config: &SvmConfig,
) -> Result<DecodingResult> {
    if n_permutations == 0 {
        return Err(Error::InvalidArgument("n_permutations must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must be in (0, 1], got {alpha}")));
    }
    let problem = DecodingProblem::new(x, folds, config)?;
    let observed = problem.evaluate(labels)?;
    let null = permuted_accuracies(&problem, labels, n_permutations, seed)?;
    let p_value = empirical_p_value(observed.accuracy, &null);
    Ok(DecodingResult {
        accuracy: observed.accuracy,
        per_fold_accuracies: observed.per_fold,
        fold_sizes: observed.fold_sizes,
        p_value,
        n_permutations,
        alpha,
        significant: p_value < alpha,
        null_accuracies: null,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyses::folds::make_folds;
    use crate::mlcore::svm::svm_fit;
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    fn planted(n: usize, d: usize, shift: f64, seed: u64) -> (Array2<f64>, Vec<f64>) {
        let mut g = rng(seed);
        let labels: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let x = Array2::from_shape_fn((n, d), |(i, j)| {
            let noise: f64 = StandardNormal.sample(&mut g);
            noise + if j < 5 { labels[i] * shift / 2.0 } else { 0.0 }
        });
        (x, labels)
    }

    #[test]
    fn p_value_counting() {
        let null = vec![0.5; 1000];
        assert_eq!(empirical_p_value(0.9, &null), 1.0 / 1001.0);
        assert_eq!(empirical_p_value(0.1, &null), 1.0);
        assert_eq!(empirical_p_value(0.5, &null), 1.0);
        assert_eq!(empirical_p_value(0.6, &[0.5, 0.7, 0.6]), 3.0 / 4.0);
    }

    #[test]
    fn precomputed_path_matches_plain_svm() {
        let (x, labels) = planted(40, 8, 1.0, 3);
        let folds = make_folds(40, 4, 1).unwrap();
        let config = SvmConfig::default();
        let cv = decode_cv(x.view(), &labels, &folds, &config).unwrap();
        let mut correct = 0;
        for f in 0..4 {
            let train = folds.train_indices(f);
            let test = folds.test_indices(f);
            let y: Vec<f64> = train.iter().map(|&i| labels[i]).collect();
            let model = svm_fit(x.select(Axis(0), &train).view(), &y, &config).unwrap();
            let pred = svm::svm_classify(&model, x.select(Axis(0), &test).view()).unwrap();
            correct += test.iter().zip(&pred).filter(|(&i, &p)| labels[i] == p).count();
        }
        assert_eq!(cv.accuracy, correct as f64 / 40.0);
    }

    #[test]
    fn weighted_recombination() {
        let (x, labels) = planted(23, 6, 0.5, 4);
        let folds = make_folds(23, 5, 2).unwrap();
        let cv = decode_cv(x.view(), &labels, &folds, &SvmConfig::default()).unwrap();
        let recombined: f64 = cv
            .per_fold
            .iter()
            .zip(&cv.fold_sizes)
            .map(|(a, &s)| a * s as f64)
            .sum::<f64>()
            / 23.0;
        assert!((recombined - cv.accuracy).abs() < 1e-12);
        assert!(cv.per_fold.iter().all(|a| (0.0..=1.0).contains(a)));
    }

    #[test]
    fn identical_rows_stay_in_range() {
        let x = Array2::from_elem((12, 4), 0.3);
        let labels: Vec<f64> = (0..12).map(|i| if i < 6 { 1.0 } else { -1.0 }).collect();
        let folds = make_folds(12, 3, 0).unwrap();
        let cv = decode_cv(x.view(), &labels, &folds, &SvmConfig::default()).unwrap();
        assert!((0.0..=1.0).contains(&cv.accuracy));
    }

    #[test]
    fn single_class_training_fold_is_named() {
        let x = Array2::from_shape_fn((6, 2), |(i, j)| (i * 2 + j) as f64);
        // both negatives in fold 0, so fold 0's training split is all positive
        let folds = FoldPlan {
            n_items: 6,
            n_folds: 3,
            assignment: vec![0, 0, 1, 1, 2, 2],
        };
        let labels = vec![-1.0, -1.0, 1.0, 1.0, 1.0, 1.0];
        let err = decode_cv(x.view(), &labels, &folds, &SvmConfig::default()).unwrap_err();
        assert!(matches!(err, Error::SingleClassFold { fold: 0 }));
    }

    #[test]
    fn permutation_result_bounds() {
        let (x, labels) = planted(30, 6, 3.0, 5);
        let folds = make_folds(30, 5, 1).unwrap();
        let r = permutation_pvalue(x.view(), &labels, &folds, 50, 0.05, 11, &SvmConfig::default()).unwrap();
        assert!(r.p_value >= 1.0 / 51.0 && r.p_value <= 1.0);
        assert!(r.significant);
        assert!(permutation_pvalue(x.view(), &labels, &folds, 0, 0.05, 11, &SvmConfig::default()).is_err());
        let again = permutation_pvalue(x.view(), &labels, &folds, 50, 0.05, 11, &SvmConfig::default()).unwrap();
        assert_eq!(r, again);
    }
}
