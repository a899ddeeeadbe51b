//! Whole-volume searchlight decoding, per-area aggregation and cross-subject
//! area ranking.
//!
//! Every voxel serves once as the center of a sphere; the sphere's columns
//! are decoded with the same cross-validation used for any other selection
//! and the accuracy is written to the center. Sphere jobs are independent
//! and collected in center order, so the map does not depend on the number
//! of worker threads.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyses::decoding::decode_cv;
use crate::analyses::folds::FoldPlan;
use crate::analyses::labeled_rows;
use crate::dataset::{ConceptSet, Paradigm, SubjectData, VolumeGeometry};
use crate::error::{Error, Result};
use crate::mlcore::stats::average_ranks;
use crate::mlcore::svm::SvmConfig;
use crate::selection::{SphereTemplate, DEFAULT_RADIUS_MM};

pub const DEFAULT_ACCURACY_THRESHOLD: f64 = 0.52;
pub const ACCURACY_MAP_FILE: &str = "accuracy_map.f32";
pub const AREA_RANKING_FILE: &str = "area_ranking.csv";

/// Accuracy recorded for a sphere that could not be decoded.
pub const FLAGGED_ACCURACY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchlightConfig {
    pub radius_mm: f64,
    pub svm: SvmConfig,
}

impl Default for SearchlightConfig {
    fn default() -> Self {
        Self {
            radius_mm: DEFAULT_RADIUS_MM,
            svm: SvmConfig::default(),
        }
    }
}

/// Per-center decoding accuracy over the whole volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMap {
    pub accuracies: Vec<f64>,
    pub sphere_sizes: Vec<usize>,
    /// Spheres that were degenerate or failed; their accuracy is [`FLAGGED_ACCURACY`].
    pub flagged: Vec<bool>,
}

impl AccuracyMap {
    pub fn len(&self) -> usize {
        self.accuracies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accuracies.is_empty()
    }

    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereOutcome {
    pub accuracy: f64,
    pub size: usize,
    pub flagged: bool,
}

fn all_columns_constant(x: ArrayView2<'_, f64>) -> bool {
    x.axis_iter(Axis(1)).all(|col| col.iter().all(|&v| v == col[0]))
}

/// Decodes one sphere. `x` holds the labeled rows over all voxels.
pub fn decode_sphere(
    x: ArrayView2<'_, f64>,
    labels: &[f64],
    geometry: &VolumeGeometry,
    template: &SphereTemplate,
    folds: &FoldPlan,
    svm: &SvmConfig,
    center: usize,
) -> SphereOutcome {
    let members = template.members(geometry, center);
    let columns = x.select(Axis(1), &members);
    let flagged = |size| SphereOutcome {
        accuracy: FLAGGED_ACCURACY,
        size,
        flagged: true,
    };
    if all_columns_constant(columns.view()) {
        return flagged(members.len());
    }
    match decode_cv(columns.view(), labels, folds, svm) {
        Ok(cv) => SphereOutcome {
            accuracy: cv.accuracy,
            size: members.len(),
            flagged: false,
        },
        Err(_) => flagged(members.len()),
    }
}

/// Searchlight over a labeled data matrix (`x`: labeled concepts x voxels).
pub fn searchlight_matrix(
    x: ArrayView2<'_, f64>,
    labels: &[f64],
    geometry: &VolumeGeometry,
    folds: &FoldPlan,
    config: &SearchlightConfig,
) -> Result<AccuracyMap> {
    if x.ncols() != geometry.voxel_count() {
        return Err(Error::DimensionMismatch {
            context: "searchlight voxels".into(),
            expected: geometry.voxel_count(),
            found: x.ncols(),
        });
    }
    if x.nrows() != labels.len() || x.nrows() != folds.n_items {
        return Err(Error::DimensionMismatch {
            context: "searchlight labeled rows".into(),
            expected: x.nrows(),
            found: if labels.len() != x.nrows() {
                labels.len()
            } else {
                folds.n_items
            },
        });
    }
    let template = SphereTemplate::new(config.radius_mm, geometry.voxel_size_mm())?;
    let outcomes: Vec<SphereOutcome> = (0..geometry.voxel_count())
        .into_par_iter()
        .map(|c| decode_sphere(x, labels, geometry, &template, folds, &config.svm, c))
        .collect();
    Ok(AccuracyMap {
        accuracies: outcomes.iter().map(|o| o.accuracy).collect(),
        sphere_sizes: outcomes.iter().map(|o| o.size).collect(),
        flagged: outcomes.iter().map(|o| o.flagged).collect(),
    })
}

/// Searchlight for one subject and paradigm over its labeled concepts.
pub fn run_searchlight(
    subject: &SubjectData,
    paradigm: Paradigm,
    concepts: &ConceptSet,
    folds: &FoldPlan,
    config: &SearchlightConfig,
) -> Result<AccuracyMap> {
    let (x, labels, _) = labeled_rows(subject.activations(paradigm)?.view(), concepts);
    searchlight_matrix(x.view(), &labels, subject.geometry(), folds, config)
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Mean center accuracy per area label; unlabeled voxels are ignored.
pub fn aggregate_by_area(map: &AccuracyMap, geometry: &VolumeGeometry) -> Result<BTreeMap<String, f64>> {
    if map.len() != geometry.voxel_count() {
        return Err(Error::DimensionMismatch {
            context: "accuracy map vs geometry".into(),
            expected: geometry.voxel_count(),
            found: map.len(),
        });
    }
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (acc, label) in map.accuracies.iter().zip(geometry.area_labels()) {
        if let Some(area) = label {
            let e = sums.entry(area.clone()).or_insert((0.0, 0));
            e.0 += acc;
            e.1 += 1;
        }
    }
    Ok(sums.into_iter().map(|(a, (s, n))| (a, s / n as f64)).collect())
}

/// How the accuracy threshold selects areas for the ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Keep an area when its accuracy averaged over subjects passes.
    #[default]
    CrossSubjectMean,
    /// Average an area's ranks only over the subjects where it passes.
    PerSubject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaRank {
    pub area: String,
    pub mean_accuracy: f64,
    pub mean_rank: f64,
    /// Subjects contributing to `mean_rank`.
    pub n_subjects: usize,
    pub subject_accuracies: Vec<f64>,
    /// 1 = best; tied accuracies share the average of their ranks.
    pub subject_ranks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaRanking {
    pub threshold: f64,
    pub mode: ThresholdMode,
    /// Areas passing the threshold, best mean rank first.
    pub areas: Vec<AreaRank>,
}

impl AreaRanking {
    pub fn area(&self, name: &str) -> Option<&AreaRank> {
        self.areas.iter().find(|a| a.area == name)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
        let io = |e: csv::Error| Error::parse(path.display().to_string(), e);
        w.write_record(["area", "mean_accuracy", "mean_rank", "n_subjects"])
            .map_err(io)?;
        for a in &self.areas {
            w.write_record([
                a.area.clone(),
                a.mean_accuracy.to_string(),
                a.mean_rank.to_string(),
                a.n_subjects.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Ranks areas within each subject (descending accuracy) over the areas
/// present for every subject, then averages ranks across subjects.
pub fn rank_areas_across_subjects(
    per_subject: &[BTreeMap<String, f64>],
    threshold: f64,
    mode: ThresholdMode,
) -> Result<AreaRanking> {
    let first = per_subject
        .first()
        .ok_or_else(|| Error::InvalidArgument("area ranking needs at least one subject".into()))?;
    let areas: Vec<String> = first
        .keys()
        .filter(|a| per_subject.iter().all(|s| s.contains_key(*a)))
        .cloned()
        .collect();
    if areas.is_empty() {
        return Err(Error::EmptySelection("no area is shared by all subjects".into()));
    }
    let accuracies: Vec<Vec<f64>> = per_subject
        .iter()
        .map(|s| areas.iter().map(|a| s[a]).collect())
        .collect();
    let ranks: Vec<Vec<f64>> = accuracies
        .iter()
        .map(|acc| average_ranks(&acc.iter().map(|v| -v).collect::<Vec<_>>()))
        .collect();

    let n_subjects = per_subject.len();
    let mut out = Vec::new();
    for (k, area) in areas.iter().enumerate() {
        let subject_accuracies: Vec<f64> = accuracies.iter().map(|a| a[k]).collect();
        let subject_ranks: Vec<f64> = ranks.iter().map(|r| r[k]).collect();
        let mean_accuracy = subject_accuracies.iter().sum::<f64>() / n_subjects as f64;
        let contributing: Vec<usize> = match mode {
            ThresholdMode::CrossSubjectMean if mean_accuracy >= threshold => (0..n_subjects).collect(),
            ThresholdMode::CrossSubjectMean => Vec::new(),
            ThresholdMode::PerSubject => (0..n_subjects)
                .filter(|&s| subject_accuracies[s] >= threshold)
                .collect(),
        };
        if contributing.is_empty() {
            continue;
        }
        let mean_rank = contributing.iter().map(|&s| subject_ranks[s]).sum::<f64>() / contributing.len() as f64;
        out.push(AreaRank {
            area: area.clone(),
            mean_accuracy,
            mean_rank,
            n_subjects: contributing.len(),
            subject_accuracies,
            subject_ranks,
        });
    }
    out.sort_by(|a, b| a.mean_rank.total_cmp(&b.mean_rank).then_with(|| a.area.cmp(&b.area)));
    Ok(AreaRanking {
        threshold,
        mode,
        areas: out,
    })
}

/// Writes accuracies as little-endian `f32`, one per voxel.
pub fn write_accuracy_map(path: &Path, map: &AccuracyMap) -> Result<()> {
    let bytes: Vec<u8> = map.accuracies.iter().flat_map(|&a| (a as f32).to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_accuracy_map(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::parse(
            path.display().to_string(),
            "length is not a multiple of 4",
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect())
}
