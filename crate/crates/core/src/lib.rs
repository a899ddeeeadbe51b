//! Multi-voxel pattern analysis of concept representations.
//!
//! The crate covers the whole battery used to ask whether a semantic
//! category (concrete vs. abstract) is present in fMRI activation patterns:
//!
//! * [`dataset`]: data model, on-disk interchange format and concreteness labels.
//! * [`selection`]: voxel subsets from ROI masks, cross-paradigm stability and
//!   searchlight spheres.
//! * [`mlcore`]: SMO-trained RBF SVM, k-means, ridge regression, cosine
//!   distance and Spearman correlation, all written from scratch.
//! * [`analyses`]: cross-validated decoding with permutation tests, cluster
//!   composition, encoding with pairwise accuracy, and RSA.
//! * [`searchlight`]: whole-volume sphere decoding, area aggregation and ranking.
//! * [`synth`]: synthetic subjects with planted effects of known size.
//! * [`report`]: `report.json` / `report.csv` records.

pub mod analyses;
pub mod dataset;
pub mod error;
pub mod mlcore;
pub mod report;
pub mod searchlight;
pub mod seed;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};
