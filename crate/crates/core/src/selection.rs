//! Voxel subsets: ROI masks, cross-paradigm stability, and searchlight spheres.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{SubjectData, VolumeGeometry};
use crate::error::{Error, Result};
use crate::mlcore::stats::pearson;

/// Regions reported to separate concrete from abstract concepts.
pub const CANONICAL_ROIS: [&str; 6] = ["IFG", "MTG", "FFG", "PCC", "PCUN", "PHG"];

pub const DEFAULT_STABLE_VOXELS: usize = 500;
pub const DEFAULT_RADIUS_MM: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    Roi,
    Stable,
    Sphere,
}

/// Parameters a selection was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Provenance {
    Roi {
        regions: Vec<String>,
    },
    Stable {
        top_k: usize,
        /// Stability of each selected voxel, aligned with `indices`.
        scores: Vec<f64>,
        /// Voxel/paradigm-pair correlations that were undefined (a constant
        /// column) and scored as 0.
        zero_variance_pairs: usize,
    },
    Sphere {
        center: usize,
        radius_mm: f64,
    },
}

/// Strictly increasing, nonempty list of voxel indices plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelSelection {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub indices: Vec<usize>,
}

impl VoxelSelection {
    pub fn method(&self) -> SelectionMethod {
        match self.provenance {
            Provenance::Roi { .. } => SelectionMethod::Roi,
            Provenance::Stable { .. } => SelectionMethod::Stable,
            Provenance::Sphere { .. } => SelectionMethod::Sphere,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Checks the index invariants against a voxel count.
    pub fn validate(&self, voxel_count: usize) -> Result<()> {
        if self.indices.is_empty() {
            return Err(Error::EmptySelection(format!("{:?} selection", self.method())));
        }
        if self.indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "selection indices must be strictly increasing".into(),
            ));
        }
        if let Some(&last) = self.indices.last() {
            if last >= voxel_count {
                return Err(Error::InvalidArgument(format!(
                    "selection index {last} out of range for {voxel_count} voxels"
                )));
            }
        }
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| Error::parse("selection.json", e))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::parse(path.display().to_string(), e))
    }

    /// Selects this subset's columns from a concepts x voxels matrix.
    pub fn columns(&self, x: ArrayView2<'_, f64>) -> ndarray::Array2<f64> {
        x.select(Axis(1), &self.indices)
    }
}

/// Sorted union of voxels carrying any of the requested ROI labels.
pub fn select_roi<S: AsRef<str>>(geometry: &VolumeGeometry, regions: &[S]) -> Result<VoxelSelection> {
    let known = geometry.roi_names();
    let mut wanted: Vec<String> = Vec::with_capacity(regions.len());
    for r in regions {
        let r = r.as_ref();
        if !known.iter().any(|k| k == r) {
            return Err(Error::UnknownRegion(r.to_string()));
        }
        if !wanted.iter().any(|w| w == r) {
            wanted.push(r.to_string());
        }
    }
    let indices: Vec<usize> = geometry
        .roi_labels()
        .iter()
        .enumerate()
        .filter(|(_, labels)| labels.iter().any(|l| wanted.contains(l)))
        .map(|(i, _)| i)
        .collect();
    if indices.is_empty() {
        return Err(Error::EmptySelection(format!("regions {wanted:?}")));
    }
    Ok(VoxelSelection {
        provenance: Provenance::Roi { regions: wanted },
        indices,
    })
}

/// Per-voxel stability: mean Pearson correlation, over all unordered pairs of
/// paradigms, of the voxel's across-concept activation vectors. A pair with a
/// constant vector contributes 0. Returns the scores and the number of such
/// pairs.
pub fn stability_scores(subject: &SubjectData) -> Result<(Vec<f64>, usize)> {
    let matrices: Vec<_> = subject.paradigms().values().collect();
    if matrices.len() < 2 {
        return Err(Error::InvalidArgument(
            "stable voxel selection needs at least 2 paradigms".into(),
        ));
    }
    let pairs: Vec<(usize, usize)> = (0..matrices.len())
        .flat_map(|a| ((a + 1)..matrices.len()).map(move |b| (a, b)))
        .collect();
    let n_voxels = subject.geometry().voxel_count();
    let per_voxel: Vec<(f64, usize)> = (0..n_voxels)
        .into_par_iter()
        .map(|v| {
            let columns: Vec<Vec<f64>> = matrices.iter().map(|m| m.column(v).to_vec()).collect();
            let mut sum = 0.0;
            let mut undefined = 0;
            for &(a, b) in &pairs {
                match pearson(&columns[a], &columns[b]) {
                    Some(r) => sum += r,
                    None => undefined += 1,
                }
            }
            (sum / pairs.len() as f64, undefined)
        })
        .collect();
    let zero_variance = per_voxel.iter().map(|p| p.1).sum();
    Ok((per_voxel.into_iter().map(|p| p.0).collect(), zero_variance))
}

/// The `top_k` most stable voxels; ties go to the lower voxel index.
pub fn select_stable(subject: &SubjectData, top_k: usize) -> Result<VoxelSelection> {
    let n_voxels = subject.geometry().voxel_count();
    if top_k == 0 || top_k > n_voxels {
        return Err(Error::InvalidArgument(format!(
            "top_k must be in 1..={n_voxels}, got {top_k}"
        )));
    }
    let (scores, zero_variance_pairs) = stability_scores(subject)?;
    let mut order: Vec<usize> = (0..n_voxels).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut indices = order[..top_k].to_vec();
    indices.sort_unstable();
    Ok(VoxelSelection {
        provenance: Provenance::Stable {
            top_k,
            scores: indices.iter().map(|&i| scores[i]).collect(),
            zero_variance_pairs,
        },
        indices,
    })
}

/// Integer grid offsets inside a sphere of a given radius.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereTemplate {
    pub radius_mm: f64,
    pub voxel_size_mm: f64,
    pub offsets: Vec<[i64; 3]>,
}

impl SphereTemplate {
    /// All `(dx, dy, dz)` with `(dx^2 + dy^2 + dz^2) * size^2 <= radius^2`,
    /// boundary inclusive.
    pub fn new(radius_mm: f64, voxel_size_mm: f64) -> Result<Self> {
        if !(radius_mm.is_finite() && radius_mm > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "radius must be positive, got {radius_mm}"
            )));
        }
        if !(voxel_size_mm.is_finite() && voxel_size_mm > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "voxel size must be positive, got {voxel_size_mm}"
            )));
        }
        let reach = (radius_mm / voxel_size_mm).floor() as i64;
        let limit = radius_mm * radius_mm * (1.0 + 1e-12);
        let mut offsets = Vec::new();
        for dz in -reach..=reach {
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let cells = (dx * dx + dy * dy + dz * dz) as f64;
                    if cells * voxel_size_mm * voxel_size_mm <= limit {
                        offsets.push([dx, dy, dz]);
                    }
                }
            }
        }
        Ok(Self {
            radius_mm,
            voxel_size_mm,
            offsets,
        })
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Sorted indices of existing voxels covered by the template around `center`.
    pub fn members(&self, geometry: &VolumeGeometry, center: usize) -> Vec<usize> {
        let c = geometry.grid_cell(center);
        let mut members: Vec<usize> = self
            .offsets
            .iter()
            .filter_map(|o| geometry.voxel_at([c[0] + o[0], c[1] + o[1], c[2] + o[2]]))
            .collect();
        members.sort_unstable();
        members
    }
}

pub fn sphere_members(geometry: &VolumeGeometry, center: usize, radius_mm: f64) -> Result<VoxelSelection> {
    if center >= geometry.voxel_count() {
        return Err(Error::InvalidArgument(format!(
            "center {center} out of range for {} voxels",
            geometry.voxel_count()
        )));
    }
    let template = SphereTemplate::new(radius_mm, geometry.voxel_size_mm())?;
    Ok(VoxelSelection {
        provenance: Provenance::Sphere { center, radius_mm },
        indices: template.members(geometry, center),
    })
}

/// Sorted union of index lists.
pub fn sorted_union(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter()
        .chain(b)
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}
