//! The four analyses run over any voxel selection: cross-validated decoding
//! with a permutation test, cluster composition, encoding with pairwise
//! accuracy, and representational similarity analysis.

pub mod clustering;
pub mod decoding;
pub mod encoding;
pub mod folds;
pub mod rsa;

pub use clustering::{cluster_composition, ClusterReport};
pub use decoding::{decode_cv, empirical_p_value, permutation_pvalue, CvAccuracy, DecodingProblem, DecodingResult};
pub use encoding::{encode_cv, pairwise_accuracy_single, random_baseline_accuracy, EncodingResult};
pub use folds::{make_folds, FoldPlan};
pub use rsa::{compute_rdm, rsa_by_class, rsa_correlate, RsaResult};

use ndarray::{Array2, ArrayView2, Axis};

use crate::dataset::ConceptSet;

/// Rows of the labeled (non-excluded) concepts, their class signs
/// (+1 concrete, -1 abstract) and their canonical indices.
pub fn labeled_rows(x: ArrayView2<'_, f64>, concepts: &ConceptSet) -> (Array2<f64>, Vec<f64>, Vec<usize>) {
    let indices = concepts.labeled_indices();
    (x.select(Axis(0), &indices), concepts.labeled_signs(), indices)
}
