//! Numerical kernels written from scratch: SMO-trained RBF SVM, k-means,
//! ridge regression and the distance/correlation primitives used by the
//! analyses.

pub mod kmeans;
pub mod ridge;
pub mod stats;
pub mod svm;

pub use kmeans::{kmeans_cluster, ClusterResult, KMeansConfig};
pub use ridge::{ridge_fit, ridge_predict, LinearEncoder, RidgeConfig};
pub use stats::{average_ranks, cosine_distance, pearson, spearman_rho};
pub use svm::{svm_classify, svm_fit, GammaMode, SvmConfig, SvmModel};
