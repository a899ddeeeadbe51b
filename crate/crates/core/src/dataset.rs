//! Data model and the dataset directory interchange format.
//!
//! A dataset directory holds one subject:
//!
//! ```text
//! manifest.json                 subject id, sizes, file names, embedding dimensions
//! concepts.csv                  id,word,rating (canonical concept order)
//! voxels.csv                    index,x_mm,y_mm,z_mm,area_label,roi_labels
//! activations_<paradigm>.f32    row-major little-endian f32, n_concepts x n_voxels
//! embeddings_<name>.f32         row-major little-endian f32, n_concepts x dimension
//! ```
//!
//! Matrices are stored as f32 and widened to f64 on load; everything
//! downstream computes in f64.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONCEPTS_FILE: &str = "concepts.csv";
pub const VOXELS_FILE: &str = "voxels.csv";

/// Default multiple of the rating standard deviation used for thresholds.
pub const HALF_STD: f64 = 0.5;

const REFERENCE_RATINGS: &str = include_str!("../data/concreteness_180.csv");

/// Stimulus presentation context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    Sentence,
    Picture,
    Wordcloud,
}

impl Paradigm {
    pub const ALL: [Paradigm; 3] = [Paradigm::Sentence, Paradigm::Picture, Paradigm::Wordcloud];

    pub fn as_str(self) -> &'static str {
        match self {
            Paradigm::Sentence => "sentence",
            Paradigm::Picture => "picture",
            Paradigm::Wordcloud => "wordcloud",
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Paradigm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sentence" => Ok(Paradigm::Sentence),
            "picture" => Ok(Paradigm::Picture),
            "wordcloud" => Ok(Paradigm::Wordcloud),
            other => Err(Error::UnknownParadigm(other.to_string())),
        }
    }
}

/// Voxel grid: millimeter coordinates plus anatomical and ROI labels.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGeometry {
    coordinates: Vec<[f64; 3]>,
    voxel_size_mm: f64,
    area_labels: Vec<Option<String>>,
    roi_labels: Vec<Vec<String>>,
    grid: Vec<[i64; 3]>,
    lookup: HashMap<[i64; 3], usize>,
}

impl VolumeGeometry {
    pub fn new(
        coordinates: Vec<[f64; 3]>,
        voxel_size_mm: f64,
        area_labels: Vec<Option<String>>,
        roi_labels: Vec<Vec<String>>,
    ) -> Result<Self> {
        let n = coordinates.len();
        if n == 0 {
            return Err(Error::InvalidArgument("geometry has no voxels".into()));
        }
        if !(voxel_size_mm.is_finite() && voxel_size_mm > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "voxel size must be positive, got {voxel_size_mm}"
            )));
        }
        for (what, len) in [("area_labels", area_labels.len()), ("roi_labels", roi_labels.len())] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    context: what.into(),
                    expected: n,
                    found: len,
                });
            }
        }

        let mut origin = [f64::INFINITY; 3];
        for c in &coordinates {
            for axis in 0..3 {
                if !c[axis].is_finite() {
                    return Err(Error::NonFinite("voxel coordinates".into()));
                }
                origin[axis] = origin[axis].min(c[axis]);
            }
        }

        let mut grid = Vec::with_capacity(n);
        let mut lookup = HashMap::with_capacity(n);
        for (index, c) in coordinates.iter().enumerate() {
            let mut cell = [0i64; 3];
            for axis in 0..3 {
                let steps = (c[axis] - origin[axis]) / voxel_size_mm;
                let rounded = steps.round();
                if (steps - rounded).abs() > 1e-6 {
                    return Err(Error::InvalidArgument(format!(
                        "voxel {index} coordinate {} is off the {voxel_size_mm}mm grid",
                        c[axis]
                    )));
                }
                cell[axis] = rounded as i64;
            }
            if lookup.insert(cell, index).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "voxel {index} duplicates the coordinates of another voxel"
                )));
            }
            grid.push(cell);
        }

        Ok(Self {
            coordinates,
            voxel_size_mm,
            area_labels,
            roi_labels,
            grid,
            lookup,
        })
    }

    /// Full rectangular grid in x-fastest order with no labels.
    pub fn full_grid(shape: [usize; 3], voxel_size_mm: f64) -> Result<Self> {
        let n = shape[0] * shape[1] * shape[2];
        let mut coordinates = Vec::with_capacity(n);
        for z in 0..shape[2] {
            for y in 0..shape[1] {
                for x in 0..shape[0] {
                    coordinates.push([
                        x as f64 * voxel_size_mm,
                        y as f64 * voxel_size_mm,
                        z as f64 * voxel_size_mm,
                    ]);
                }
            }
        }
        Self::new(coordinates, voxel_size_mm, vec![None; n], vec![Vec::new(); n])
    }

    pub fn voxel_count(&self) -> usize {
        self.coordinates.len()
    }

    pub fn voxel_size_mm(&self) -> f64 {
        self.voxel_size_mm
    }

    pub fn coordinates(&self) -> &[[f64; 3]] {
        &self.coordinates
    }

    pub fn area_labels(&self) -> &[Option<String>] {
        &self.area_labels
    }

    pub fn roi_labels(&self) -> &[Vec<String>] {
        &self.roi_labels
    }

    /// Integer grid cell of a voxel, relative to the per-axis minimum coordinate.
    pub fn grid_cell(&self, index: usize) -> [i64; 3] {
        self.grid[index]
    }

    pub fn voxel_at(&self, cell: [i64; 3]) -> Option<usize> {
        self.lookup.get(&cell).copied()
    }

    pub fn set_area_label(&mut self, index: usize, label: Option<String>) {
        self.area_labels[index] = label;
    }

    pub fn add_roi_label(&mut self, index: usize, label: &str) {
        let labels = &mut self.roi_labels[index];
        if !labels.iter().any(|l| l == label) {
            labels.push(label.to_string());
        }
    }

    /// Distinct area names in order of first appearance.
    pub fn area_names(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.area_labels
            .iter()
            .flatten()
            .filter(|a| seen.insert(a.as_str()))
            .cloned()
            .collect()
    }

    /// Distinct ROI names in order of first appearance.
    pub fn roi_names(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.roi_labels
            .iter()
            .flatten()
            .filter(|r| seen.insert(r.as_str()))
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConcretenessLabel {
    Concrete,
    Abstract,
    Excluded,
}

impl ConcretenessLabel {
    /// Class sign used by the classifiers: concrete = +1, abstract = -1.
    pub fn sign(self) -> Option<f64> {
        match self {
            ConcretenessLabel::Concrete => Some(1.0),
            ConcretenessLabel::Abstract => Some(-1.0),
            ConcretenessLabel::Excluded => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concept {
    pub id: String,
    pub word: String,
    pub rating: f64,
}

/// Mean, population std and the two cut points derived from a rating list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcretenessThresholds {
    pub mean: f64,
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ConcretenessThresholds {
    pub fn from_ratings(ratings: &[f64], half_std_factor: f64) -> Result<Self> {
        if ratings.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 ratings, got {}",
                ratings.len()
            )));
        }
        if ratings.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("ratings".into()));
        }
        if !(half_std_factor.is_finite() && half_std_factor >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "threshold factor must be nonnegative, got {half_std_factor}"
            )));
        }
        let n = ratings.len() as f64;
        let mean = ratings.iter().sum::<f64>() / n;
        let var = ratings.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        if var == 0.0 {
            return Err(Error::Degenerate("all ratings are equal".into()));
        }
        let std = var.sqrt();
        Ok(Self {
            mean,
            std,
            lower: mean - half_std_factor * std,
            upper: mean + half_std_factor * std,
        })
    }

    pub fn label(&self, rating: f64) -> ConcretenessLabel {
        // With a zero factor both cut points equal the mean; a rating sitting
        // exactly on it is neither above nor below and stays excluded.
        if rating >= self.upper && rating > self.lower {
            ConcretenessLabel::Concrete
        } else if rating <= self.lower && rating < self.upper {
            ConcretenessLabel::Abstract
        } else {
            ConcretenessLabel::Excluded
        }
    }
}

/// Concrete iff `rating >= mean + f*std`, abstract iff `rating <= mean - f*std`,
/// excluded otherwise. Mean and population std come from `ratings` itself.
pub fn label_concreteness(ratings: &[f64], half_std_factor: f64) -> Result<Vec<ConcretenessLabel>> {
    let thresholds = ConcretenessThresholds::from_ratings(ratings, half_std_factor)?;
    Ok(ratings.iter().map(|&r| thresholds.label(r)).collect())
}

/// Concepts in canonical order with their derived labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptSet {
    concepts: Vec<Concept>,
    labels: Vec<ConcretenessLabel>,
    thresholds: ConcretenessThresholds,
}

impl ConceptSet {
    pub fn new(concepts: Vec<Concept>, half_std_factor: f64) -> Result<Self> {
        let mut seen = HashSet::with_capacity(concepts.len());
        for c in &concepts {
            if !seen.insert(c.id.as_str()) {
                return Err(Error::DuplicateConcept(c.id.clone()));
            }
        }
        let ratings: Vec<f64> = concepts.iter().map(|c| c.rating).collect();
        let thresholds = ConcretenessThresholds::from_ratings(&ratings, half_std_factor)?;
        let labels = ratings.iter().map(|&r| thresholds.label(r)).collect();
        Ok(Self {
            concepts,
            labels,
            thresholds,
        })
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn labels(&self) -> &[ConcretenessLabel] {
        &self.labels
    }

    pub fn thresholds(&self) -> ConcretenessThresholds {
        self.thresholds
    }

    pub fn count(&self, label: ConcretenessLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Indices of concrete and abstract concepts, in canonical order.
    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.labels[i] != ConcretenessLabel::Excluded)
            .collect()
    }

    /// Class signs (+1 concrete, -1 abstract) aligned with [`Self::labeled_indices`].
    pub fn labeled_signs(&self) -> Vec<f64> {
        self.labels.iter().filter_map(|l| l.sign()).collect()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.concepts.iter().position(|c| c.id == id)
    }
}

/// The 180 stimulus concepts with their concreteness ratings, shipped with the crate.
pub fn reference_concepts() -> Result<ConceptSet> {
    let concepts = parse_concepts(REFERENCE_RATINGS.as_bytes(), "reference ratings")?;
    ConceptSet::new(concepts, HALF_STD)
}

/// Per-paradigm activation matrices for one participant.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectData {
    subject_id: String,
    geometry: VolumeGeometry,
    paradigms: BTreeMap<Paradigm, Array2<f64>>,
}

impl SubjectData {
    pub fn new(
        subject_id: impl Into<String>,
        geometry: VolumeGeometry,
        paradigms: BTreeMap<Paradigm, Array2<f64>>,
    ) -> Result<Self> {
        if paradigms.is_empty() {
            return Err(Error::InvalidArgument("subject has no paradigms".into()));
        }
        let n_concepts = paradigms.values().next().map(|m| m.nrows()).unwrap_or(0);
        for (paradigm, matrix) in &paradigms {
            if matrix.nrows() != n_concepts {
                return Err(Error::DimensionMismatch {
                    context: format!("{paradigm} activation rows"),
                    expected: n_concepts,
                    found: matrix.nrows(),
                });
            }
            if matrix.ncols() != geometry.voxel_count() {
                return Err(Error::DimensionMismatch {
                    context: format!("{paradigm} activation columns"),
                    expected: geometry.voxel_count(),
                    found: matrix.ncols(),
                });
            }
        }
        Ok(Self {
            subject_id: subject_id.into(),
            geometry,
            paradigms,
        })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn n_concepts(&self) -> usize {
        self.paradigms.values().next().map(|m| m.nrows()).unwrap_or(0)
    }

    pub fn paradigm_names(&self) -> Vec<Paradigm> {
        self.paradigms.keys().copied().collect()
    }

    pub fn paradigms(&self) -> &BTreeMap<Paradigm, Array2<f64>> {
        &self.paradigms
    }

    pub fn activations(&self, paradigm: Paradigm) -> Result<&Array2<f64>> {
        self.paradigms
            .get(&paradigm)
            .ok_or_else(|| Error::InvalidArgument(format!("subject has no {paradigm} paradigm")))
    }
}

/// Precomputed concept vectors (textual, visual, random...), rows in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    name: String,
    vectors: Array2<f64>,
}

impl EmbeddingSet {
    pub fn new(name: impl Into<String>, vectors: Array2<f64>) -> Result<Self> {
        if vectors.ncols() == 0 {
            return Err(Error::InvalidArgument("embedding dimension is zero".into()));
        }
        for (i, row) in vectors.axis_iter(Axis(0)).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("embedding row {i}")));
            }
            if row.iter().all(|&v| v == 0.0) {
                return Err(Error::ZeroNorm(i));
            }
        }
        Ok(Self {
            name: name.into(),
            vectors,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }
}

/// One subject plus the concept set and any embeddings named in its manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub subject: SubjectData,
    pub concepts: ConceptSet,
    pub embeddings: Vec<EmbeddingSet>,
}

impl Dataset {
    pub fn new(subject: SubjectData, concepts: ConceptSet, embeddings: Vec<EmbeddingSet>) -> Result<Self> {
        if subject.n_concepts() != concepts.len() {
            return Err(Error::DimensionMismatch {
                context: "activation rows vs concept count".into(),
                expected: concepts.len(),
                found: subject.n_concepts(),
            });
        }
        for e in &embeddings {
            if e.vectors().nrows() != concepts.len() {
                return Err(Error::DimensionMismatch {
                    context: format!("embedding {} rows", e.name()),
                    expected: concepts.len(),
                    found: e.vectors().nrows(),
                });
            }
        }
        Ok(Self {
            subject,
            concepts,
            embeddings,
        })
    }

    pub fn embedding(&self, name: &str) -> Option<&EmbeddingSet> {
        self.embeddings.iter().find(|e| e.name() == name)
    }
}

/// Arithmetic mean over repeated presentations.
///
/// `per_concept[c]` holds the repetitions of concept `c` as rows
/// (repetitions x voxels). Returns a concepts x voxels matrix.
pub fn average_repetitions(per_concept: &[Array2<f64>]) -> Result<Array2<f64>> {
    let Some(first) = per_concept.first() else {
        return Err(Error::InvalidArgument("no concepts to average".into()));
    };
    let n_voxels = first.ncols();
    let mut out = Array2::zeros((per_concept.len(), n_voxels));
    for (c, reps) in per_concept.iter().enumerate() {
        if reps.ncols() != n_voxels {
            return Err(Error::DimensionMismatch {
                context: format!("repetitions of concept {c}"),
                expected: n_voxels,
                found: reps.ncols(),
            });
        }
        if reps.nrows() == 0 {
            return Err(Error::InvalidArgument(format!("concept {c} has no repetitions")));
        }
        let n = reps.nrows() as f64;
        let mut row = out.row_mut(c);
        for rep in reps.axis_iter(Axis(0)) {
            row += &rep;
        }
        row /= n;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParadigmEntry {
    pub name: String,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingEntry {
    pub name: String,
    pub file: String,
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub subject_id: String,
    pub n_concepts: usize,
    pub n_voxels: usize,
    pub voxel_size_mm: f64,
    #[serde(default = "default_concepts_file")]
    pub concepts_file: String,
    #[serde(default = "default_voxels_file")]
    pub voxels_file: String,
    pub paradigms: Vec<ParadigmEntry>,
    #[serde(default)]
    pub embeddings: Vec<EmbeddingEntry>,
}

fn default_concepts_file() -> String {
    CONCEPTS_FILE.into()
}

fn default_voxels_file() -> String {
    VOXELS_FILE.into()
}

#[derive(Debug, Serialize, Deserialize)]
struct VoxelRecord {
    index: usize,
    x_mm: f64,
    y_mm: f64,
    z_mm: f64,
    area_label: String,
    roi_labels: String,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn parse_concepts(bytes: &[u8], what: &str) -> Result<Vec<Concept>> {
    let mut reader = csv::Reader::from_reader(bytes);
    let headers = reader.headers().map_err(|e| Error::parse(what, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "word", "rating"] {
        return Err(Error::parse(what, "header must be id,word,rating"));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::parse(what, e)))
        .collect()
}

/// Reads `concepts.csv` (header `id,word,rating`).
pub fn load_concepts(path: &Path, half_std_factor: f64) -> Result<ConceptSet> {
    let bytes = read_file(path)?;
    let concepts = parse_concepts(&bytes, &path.display().to_string())?;
    ConceptSet::new(concepts, half_std_factor)
}

fn load_geometry(path: &Path, voxel_size_mm: f64) -> Result<VolumeGeometry> {
    let bytes = read_file(path)?;
    let what = path.display().to_string();
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let mut coordinates = Vec::new();
    let mut areas = Vec::new();
    let mut rois = Vec::new();
    for (row, record) in reader.deserialize::<VoxelRecord>().enumerate() {
        let record = record.map_err(|e| Error::parse(&what, e))?;
        if record.index != row {
            return Err(Error::parse(
                &what,
                format!(
                    "row {row} has index {}; voxels must be listed in index order",
                    record.index
                ),
            ));
        }
        coordinates.push([record.x_mm, record.y_mm, record.z_mm]);
        areas.push((!record.area_label.is_empty()).then_some(record.area_label));
        rois.push(
            record
                .roi_labels
                .split('|')
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect(),
        );
    }
    VolumeGeometry::new(coordinates, voxel_size_mm, areas, rois)
}

/// Reads a raw row-major little-endian f32 matrix.
pub fn read_f32_matrix(path: &Path, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let bytes = read_file(path)?;
    let expected = rows * cols * 4;
    if bytes.len() != expected {
        return Err(Error::DimensionMismatch {
            context: format!("byte length of {}", path.display()),
            expected,
            found: bytes.len(),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked above"))
}

/// Writes a matrix as raw row-major little-endian f32 (values are narrowed).
pub fn write_f32_matrix(path: &Path, matrix: ArrayView2<'_, f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(matrix.len() * 4);
    for v in matrix.iter() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = read_file(&path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::parse(path.display().to_string(), e))
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    load_dataset_with_factor(dir, HALF_STD)
}

pub fn load_dataset_with_factor(dir: &Path, half_std_factor: f64) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;

    let concepts = load_concepts(&dir.join(&manifest.concepts_file), half_std_factor)?;
    if concepts.len() != manifest.n_concepts {
        return Err(Error::DimensionMismatch {
            context: "concepts.csv rows vs manifest n_concepts".into(),
            expected: manifest.n_concepts,
            found: concepts.len(),
        });
    }

    let geometry = load_geometry(&dir.join(&manifest.voxels_file), manifest.voxel_size_mm)?;
    if geometry.voxel_count() != manifest.n_voxels {
        return Err(Error::DimensionMismatch {
            context: "voxels.csv rows vs manifest n_voxels".into(),
            expected: manifest.n_voxels,
            found: geometry.voxel_count(),
        });
    }

    let mut paradigms = BTreeMap::new();
    for entry in &manifest.paradigms {
        let paradigm: Paradigm = entry.name.parse()?;
        let matrix = read_f32_matrix(&dir.join(&entry.file), manifest.n_concepts, manifest.n_voxels)?;
        if paradigms.insert(paradigm, matrix).is_some() {
            return Err(Error::parse(MANIFEST_FILE, format!("paradigm {paradigm} listed twice")));
        }
    }
    let subject = SubjectData::new(manifest.subject_id.clone(), geometry, paradigms)?;

    let embeddings = manifest
        .embeddings
        .iter()
        .map(|entry| {
            let vectors = read_f32_matrix(&dir.join(&entry.file), manifest.n_concepts, entry.dimension)?;
            EmbeddingSet::new(entry.name.clone(), vectors)
        })
        .collect::<Result<Vec<_>>>()?;

    Dataset::new(subject, concepts, embeddings)
}

/// Writes a dataset directory that [`load_dataset`] reads back unchanged
/// (for matrices whose values are exactly representable as f32).
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let subject = &dataset.subject;
    let geometry = subject.geometry();

    let manifest = Manifest {
        subject_id: subject.subject_id().to_string(),
        n_concepts: dataset.concepts.len(),
        n_voxels: geometry.voxel_count(),
        voxel_size_mm: geometry.voxel_size_mm(),
        concepts_file: CONCEPTS_FILE.into(),
        voxels_file: VOXELS_FILE.into(),
        paradigms: subject
            .paradigm_names()
            .into_iter()
            .map(|p| ParadigmEntry {
                name: p.to_string(),
                file: format!("activations_{p}.f32"),
            })
            .collect(),
        embeddings: dataset
            .embeddings
            .iter()
            .map(|e| EmbeddingEntry {
                name: e.name().to_string(),
                file: format!("embeddings_{}.f32", e.name()),
                dimension: e.dimension(),
            })
            .collect(),
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::parse(MANIFEST_FILE, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;

    let concepts_path = dir.join(CONCEPTS_FILE);
    let mut writer = csv::Writer::from_path(&concepts_path).map_err(|e| Error::parse(CONCEPTS_FILE, e))?;
    for c in dataset.concepts.concepts() {
        writer.serialize(c).map_err(|e| Error::parse(CONCEPTS_FILE, e))?;
    }
    writer.flush().map_err(|e| Error::io(&concepts_path, e))?;

    let voxels_path = dir.join(VOXELS_FILE);
    let mut writer = csv::Writer::from_path(&voxels_path).map_err(|e| Error::parse(VOXELS_FILE, e))?;
    for (index, c) in geometry.coordinates().iter().enumerate() {
        writer
            .serialize(VoxelRecord {
                index,
                x_mm: c[0],
                y_mm: c[1],
                z_mm: c[2],
                area_label: geometry.area_labels()[index].clone().unwrap_or_default(),
                roi_labels: geometry.roi_labels()[index].join("|"),
            })
            .map_err(|e| Error::parse(VOXELS_FILE, e))?;
    }
    writer.flush().map_err(|e| Error::io(&voxels_path, e))?;

    for (p, matrix) in subject.paradigms() {
        write_f32_matrix(&dir.join(format!("activations_{p}.f32")), matrix.view())?;
    }
    for e in &dataset.embeddings {
        write_f32_matrix(&dir.join(format!("embeddings_{}.f32", e.name())), e.vectors().view())?;
    }
    Ok(())
}

/// Loads a text embedding file keyed by concept id and reorders it into the
/// canonical concept order.
///
/// Each non-empty line is `<id> <v1> <v2> ...` separated by whitespace (the
/// usual GloVe text layout); lines starting with `#` are ignored. Every
/// concept must be present; extra ids are ignored.
pub fn load_embeddings(path: &Path, name: &str, concepts: &ConceptSet) -> Result<EmbeddingSet> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::parse(path.display().to_string(), e))?;
    let what = path.display().to_string();
    let mut rows: HashMap<&str, Vec<f64>> = HashMap::new();
    let mut dimension = None;
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let id = fields.next().expect("line is non-empty");
        let values = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(&what, format!("line {}: {e}", line_no + 1)))?;
        let expected = *dimension.get_or_insert(values.len());
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                context: format!("{what} line {}", line_no + 1),
                expected,
                found: values.len(),
            });
        }
        rows.insert(id, values);
    }
    let dimension = dimension.unwrap_or(0);
    let mut vectors = Array2::zeros((concepts.len(), dimension));
    for (i, c) in concepts.concepts().iter().enumerate() {
        let row = rows
            .get(c.id.as_str())
            .ok_or_else(|| Error::MissingConcept(c.id.clone()))?;
        vectors.row_mut(i).assign(&ndarray::ArrayView1::from(row.as_slice()));
    }
    EmbeddingSet::new(name, vectors)
}
