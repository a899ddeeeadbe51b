//! Synthetic subjects with planted effects of known size.
//!
//! Activations are seeded Gaussian noise plus additive effects, so the ground
//! truth of every effect is exact. Each source of randomness (noise per
//! paradigm, ratings, each effect) draws from its own derived stream: adding
//! or removing an effect leaves every other draw unchanged.
//!
//! [`oracles`] holds exhaustive reference implementations used by tests.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    Concept, ConceptSet, ConcretenessLabel, Dataset, EmbeddingSet, Paradigm, SubjectData, VolumeGeometry, HALF_STD,
};
use crate::error::{Error, Result};
use crate::seed::{derive_path, label_hash, rng};

const STREAM_NOISE: u64 = 1;
const STREAM_RATINGS: u64 = 2;
const STREAM_EMBEDDINGS: u64 = 3;
const STREAM_EFFECTS: u64 = 4;
const RATING_ATTEMPTS: u64 = 256;

/// Intended number of concepts per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSplit {
    pub concrete: usize,
    #[serde(rename = "abstract")]
    pub abstract_: usize,
    pub excluded: usize,
}

impl ClassSplit {
    pub fn total(&self) -> usize {
        self.concrete + self.abstract_ + self.excluded
    }
}

/// A set of voxels, by flat index or by grid cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoxelSet {
    /// Half-open index range `[start, end)`.
    Range {
        start: usize,
        end: usize,
    },
    Indices(Vec<usize>),
    /// Inclusive box of grid cells.
    Box {
        min: [usize; 3],
        max: [usize; 3],
    },
}

impl VoxelSet {
    pub fn resolve(&self, geometry: &VolumeGeometry) -> Result<Vec<usize>> {
        let n = geometry.voxel_count();
        let out_of_grid = |what: String| Error::InvalidArgument(format!("voxel set {what} lies outside the grid"));
        let mut v = match self {
            VoxelSet::Range { start, end } => {
                if start > end || *end > n {
                    return Err(out_of_grid(format!("{start}..{end}")));
                }
                (*start..*end).collect()
            }
            VoxelSet::Indices(ix) => {
                if let Some(bad) = ix.iter().find(|&&i| i >= n) {
                    return Err(out_of_grid(format!("index {bad}")));
                }
                ix.clone()
            }
            VoxelSet::Box { min, max } => {
                let mut v = Vec::new();
                for z in min[2]..=max[2] {
                    for y in min[1]..=max[1] {
                        for x in min[0]..=max[0] {
                            let cell = [x as i64, y as i64, z as i64];
                            v.push(
                                geometry
                                    .voxel_at(cell)
                                    .ok_or_else(|| out_of_grid(format!("cell {cell:?}")))?,
                            );
                        }
                    }
                }
                v
            }
        };
        v.sort_unstable();
        v.dedup();
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub name: String,
    pub dimension: usize,
}

/// Additive effects. Sizes are in units of the background `noise_sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Effect {
    /// Concrete concepts get `+effect_size/2`, abstract ones `-effect_size/2`,
    /// so the class means differ by `effect_size` noise units.
    ClassSeparation {
        voxels: VoxelSet,
        effect_size: f64,
        #[serde(default)]
        paradigms: Option<Vec<Paradigm>>,
    },
    /// A binary factor split evenly within each class (so it carries no label
    /// information), shifting its two halves by `±effect_size/2`.
    LatentFactor { voxels: VoxelSet, effect_size: f64 },
    /// `X[:, voxels] += E W`, `W ~ N(0, weight_scale^2)`, plus independent
    /// `N(0, noise_sigma^2)` per entry (absolute units).
    LinearMap {
        embedding: String,
        voxels: VoxelSet,
        weight_scale: f64,
        #[serde(default)]
        noise_sigma: f64,
    },
    /// One random concept profile per voxel, added identically to every
    /// paradigm with scale `effect_size`.
    CrossParadigmStability { voxels: VoxelSet, effect_size: f64 },
}

fn default_subject_id() -> String {
    "synthetic".into()
}

fn default_voxel_size() -> f64 {
    2.0
}

fn default_paradigms() -> Vec<Paradigm> {
    Paradigm::ALL.to_vec()
}

fn default_noise() -> f64 {
    1.0
}

/// Full description of a synthetic subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    #[serde(default = "default_subject_id")]
    pub subject_id: String,
    pub n_concepts: usize,
    pub split: ClassSplit,
    pub grid_shape: [usize; 3],
    #[serde(default = "default_voxel_size")]
    pub voxel_size_mm: f64,
    #[serde(default = "default_paradigms")]
    pub paradigms: Vec<Paradigm>,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    pub seed: u64,
    /// Area labels; a voxel listed by several areas takes the last one in name order.
    #[serde(default)]
    pub areas: BTreeMap<String, VoxelSet>,
    #[serde(default)]
    pub rois: BTreeMap<String, VoxelSet>,
    #[serde(default)]
    pub embeddings: Vec<EmbeddingSpec>,
    #[serde(default)]
    pub effects: Vec<Effect>,
}

impl PlantSpec {
    /// A spec with no areas, embeddings or effects.
    pub fn new(n_concepts: usize, split: ClassSplit, grid_shape: [usize; 3], seed: u64) -> Self {
        Self {
            subject_id: default_subject_id(),
            n_concepts,
            split,
            grid_shape,
            voxel_size_mm: default_voxel_size(),
            paradigms: default_paradigms(),
            noise_sigma: default_noise(),
            seed,
            areas: BTreeMap::new(),
            rois: BTreeMap::new(),
            embeddings: Vec::new(),
            effects: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.split.total() != self.n_concepts {
            return Err(Error::InvalidArgument(format!(
                "class split sums to {}, expected {} concepts",
                self.split.total(),
                self.n_concepts
            )));
        }
        if self.n_concepts < 2 {
            return Err(Error::InvalidArgument("need at least 2 concepts".into()));
        }
        if self.paradigms.is_empty() {
            return Err(Error::InvalidArgument("need at least one paradigm".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Ratings for the intended split: concrete around 4, abstract around 2,
/// excluded tightly around 3. Draws are repeated (deterministically) until
/// thresholding reproduces the split; splits that thresholding can never
/// produce are rejected.
pub fn generate_ratings(split: ClassSplit, seed: u64) -> Result<(Vec<f64>, Vec<ConcretenessLabel>)> {
    let mut intended: Vec<ConcretenessLabel> = std::iter::repeat_n(ConcretenessLabel::Concrete, split.concrete)
        .chain(std::iter::repeat_n(ConcretenessLabel::Abstract, split.abstract_))
        .chain(std::iter::repeat_n(ConcretenessLabel::Excluded, split.excluded))
        .collect();
    intended.shuffle(&mut rng(derive_path(seed, &[0])));
    let concrete = Normal::new(4.0, 0.15).expect("valid");
    let abstract_ = Normal::new(2.0, 0.15).expect("valid");
    let excluded = Normal::new(3.0, 0.05).expect("valid");
    for attempt in 0..RATING_ATTEMPTS {
        let mut g = rng(derive_path(seed, &[1, attempt]));
        let ratings: Vec<f64> = intended
            .iter()
            .map(|l| match l {
                ConcretenessLabel::Concrete => concrete.sample(&mut g),
                ConcretenessLabel::Abstract => abstract_.sample(&mut g),
                ConcretenessLabel::Excluded => excluded.sample(&mut g),
            })
            .collect();
        if let Ok(labels) = crate::dataset::label_concreteness(&ratings, HALF_STD) {
            if labels == intended {
                return Ok((ratings, intended));
            }
        }
    }
    Err(Error::InvalidArgument(format!(
        "thresholding cannot reproduce the split {}/{}/{}",
        split.concrete, split.abstract_, split.excluded
    )))
}

fn gauss(g: &mut crate::seed::TaskRng) -> f64 {
    StandardNormal.sample(g)
}

fn round_f32(m: &mut Array2<f64>) {
    m.mapv_inplace(|v| f64::from(v as f32));
}

/// Generates the subject described by `spec`. Deterministic per seed.
pub fn generate_subject(spec: &PlantSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut geometry = VolumeGeometry::full_grid(spec.grid_shape, spec.voxel_size_mm)?;
    for (name, set) in &spec.areas {
        for v in set.resolve(&geometry)? {
            geometry.set_area_label(v, Some(name.clone()));
        }
    }
    for (name, set) in &spec.rois {
        for v in set.resolve(&geometry)? {
            geometry.add_roi_label(v, name);
        }
    }

    let (ratings, labels) = generate_ratings(spec.split, derive_path(spec.seed, &[STREAM_RATINGS]))?;
    let concepts: Vec<Concept> = ratings
        .iter()
        .enumerate()
        .map(|(i, &rating)| Concept {
            id: format!("c{i:04}"),
            word: format!("concept{i}"),
            rating,
        })
        .collect();
    let concepts = ConceptSet::new(concepts, HALF_STD)?;
    debug_assert_eq!(concepts.labels(), &labels[..]);

    let n = spec.n_concepts;
    let voxels = geometry.voxel_count();
    let mut embeddings = Vec::with_capacity(spec.embeddings.len());
    for e in &spec.embeddings {
        let mut g = rng(derive_path(spec.seed, &[STREAM_EMBEDDINGS, label_hash(&e.name)]));
        let mut vectors = Array2::from_shape_fn((n, e.dimension), |_| gauss(&mut g));
        round_f32(&mut vectors);
        embeddings.push(EmbeddingSet::new(e.name.clone(), vectors)?);
    }

    let sigma = spec.noise_sigma;
    let mut activations: BTreeMap<Paradigm, Array2<f64>> = BTreeMap::new();
    for &p in &spec.paradigms {
        let mut g = rng(derive_path(spec.seed, &[STREAM_NOISE, label_hash(p.as_str())]));
        let m = Array2::from_shape_fn((n, voxels), |_| sigma * gauss(&mut g));
        if activations.insert(p, m).is_some() {
            return Err(Error::InvalidArgument(format!("paradigm {p} listed twice")));
        }
    }

    for (k, effect) in spec.effects.iter().enumerate() {
        let mut g = rng(derive_path(spec.seed, &[STREAM_EFFECTS, k as u64]));
        match effect {
            Effect::ClassSeparation {
                voxels: set,
                effect_size,
                paradigms,
            } => {
                let cols = set.resolve(&geometry)?;
                let shift = effect_size * sigma / 2.0;
                for (p, m) in activations.iter_mut() {
                    if paradigms.as_ref().is_some_and(|ps| !ps.contains(p)) {
                        continue;
                    }
                    for (i, l) in labels.iter().enumerate() {
                        if let Some(sign) = l.sign() {
                            for &v in &cols {
                                m[[i, v]] += sign * shift;
                            }
                        }
                    }
                }
            }
            Effect::LatentFactor {
                voxels: set,
                effect_size,
            } => {
                let cols = set.resolve(&geometry)?;
                let mut factor = vec![0.0; n];
                for class in [
                    ConcretenessLabel::Concrete,
                    ConcretenessLabel::Abstract,
                    ConcretenessLabel::Excluded,
                ] {
                    let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
                    members.shuffle(&mut g);
                    let half = members.len() / 2;
                    for (r, &i) in members.iter().enumerate() {
                        // odd-sized classes put the spare member on a random side
                        factor[i] = if r < half || (r == 2 * half && g.random::<bool>()) {
                            1.0
                        } else {
                            -1.0
                        };
                    }
                }
                let shift = effect_size * sigma / 2.0;
                for m in activations.values_mut() {
                    for (i, f) in factor.iter().enumerate() {
                        for &v in &cols {
                            m[[i, v]] += f * shift;
                        }
                    }
                }
            }
            Effect::LinearMap {
                embedding,
                voxels: set,
                weight_scale,
                noise_sigma,
            } => {
                let cols = set.resolve(&geometry)?;
                let e = embeddings.iter().find(|e| e.name() == embedding).ok_or_else(|| {
                    Error::InvalidArgument(format!("linear map references unknown embedding {embedding}"))
                })?;
                let w = Array2::from_shape_fn((e.dimension(), cols.len()), |_| weight_scale * gauss(&mut g));
                let signal = e.vectors().dot(&w);
                for m in activations.values_mut() {
                    for i in 0..n {
                        for (c, &v) in cols.iter().enumerate() {
                            let eps = gauss(&mut g);
                            m[[i, v]] += signal[[i, c]] + noise_sigma * eps;
                        }
                    }
                }
            }
            Effect::CrossParadigmStability {
                voxels: set,
                effect_size,
            } => {
                let cols = set.resolve(&geometry)?;
                let profile = Array2::from_shape_fn((n, cols.len()), |_| effect_size * sigma * gauss(&mut g));
                for m in activations.values_mut() {
                    for i in 0..n {
                        for (c, &v) in cols.iter().enumerate() {
                            m[[i, v]] += profile[[i, c]];
                        }
                    }
                }
            }
        }
    }

    for m in activations.values_mut() {
        round_f32(m);
    }
    let subject = SubjectData::new(spec.subject_id.clone(), geometry, activations)?;
    Dataset::new(subject, concepts, embeddings)
}

/// Exhaustive reference implementations for small inputs.
pub mod oracles {
    use ndarray::ArrayView2;

    /// Maximum item count accepted by the enumerating oracles.
    pub const MAX_ITEMS: usize = 12;

    /// Minimum k-means inertia over every assignment of rows to `k`
    /// non-empty clusters.
    pub fn exhaustive_kmeans_inertia(x: ArrayView2<'_, f64>, k: usize) -> f64 {
        let n = x.nrows();
        assert!(
            n <= MAX_ITEMS && k >= 1 && k <= n,
            "oracle limited to {MAX_ITEMS} items"
        );
        let mut assignment = vec![0usize; n];
        let mut best = f64::INFINITY;
        // restricted growth strings enumerate each partition exactly once
        fn walk(x: ArrayView2<'_, f64>, k: usize, i: usize, used: usize, a: &mut Vec<usize>, best: &mut f64) {
            let n = x.nrows();
            if i == n {
                if used == k {
                    *best = best.min(partition_inertia(x, a, k));
                }
                return;
            }
            if used + (n - i) < k {
                return;
            }
            for c in 0..(used + 1).min(k) {
                a[i] = c;
                walk(x, k, i + 1, used.max(c + 1), a, best);
            }
        }
        walk(x, k, 0, 0, &mut assignment, &mut best);
        best
    }

    fn partition_inertia(x: ArrayView2<'_, f64>, a: &[usize], k: usize) -> f64 {
        let d = x.ncols();
        let mut total = 0.0;
        for c in 0..k {
            let rows: Vec<usize> = (0..a.len()).filter(|&i| a[i] == c).collect();
            let mean: Vec<f64> = (0..d)
                .map(|j| rows.iter().map(|&i| x[[i, j]]).sum::<f64>() / rows.len() as f64)
                .collect();
            for &i in &rows {
                total += (0..d).map(|j| (x[[i, j]] - mean[j]).powi(2)).sum::<f64>();
            }
        }
        total
    }

    fn cosine(u: &[f64], v: &[f64]) -> f64 {
        let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        1.0 - dot / (nu * nv)
    }

    /// Pairwise accuracy by listing every comparison `(i, j)` explicitly.
    pub fn pairwise_accuracy_enumerated(prediction: &[f64], observed: &[Vec<f64>], i: usize) -> f64 {
        let comparisons: Vec<bool> = observed
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, other)| cosine(prediction, &observed[i]) < cosine(prediction, other))
            .collect();
        comparisons.iter().filter(|&&won| won).count() as f64 / comparisons.len() as f64
    }

    /// Rank of each value from an explicit comparison table: one plus the
    /// number of smaller values plus half the number of other equal values.
    pub fn rank_table(x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|&v| {
                let less = x.iter().filter(|&&w| w < v).count() as f64;
                let equal = x.iter().filter(|&&w| w == v).count() as f64;
                1.0 + less + (equal - 1.0) / 2.0
            })
            .collect()
    }

    /// Spearman correlation from [`rank_table`] with the textbook Pearson sum.
    pub fn spearman_rank_table(x: &[f64], y: &[f64]) -> f64 {
        let (rx, ry) = (rank_table(x), rank_table(y));
        let n = x.len() as f64;
        let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for (a, b) in rx.iter().zip(&ry) {
            sxy += (a - mx) * (b - my);
            sxx += (a - mx) * (a - mx);
            syy += (b - my) * (b - my);
        }
        sxy / (sxx * syy).sqrt()
    }

    /// Largest violation of the soft-margin dual optimality conditions for
    /// `alpha` and decision values `f(x_i) = sum_j alpha_j y_j K_ij + b`:
    /// `alpha = 0 => y f >= 1`, `0 < alpha < C => y f = 1`, `alpha = C => y f <= 1`,
    /// plus `|sum alpha_i y_i|` and box feasibility.
    pub fn kkt_violation(kernel: &[f64], y: &[f64], alpha: &[f64], bias: f64, c: f64) -> f64 {
        let n = y.len();
        let bound_tol = 1e-8 * c.max(1.0);
        let mut worst = alpha.iter().zip(y).map(|(a, y)| a * y).sum::<f64>().abs();
        for i in 0..n {
            let f: f64 = (0..n).map(|j| alpha[j] * y[j] * kernel[i * n + j]).sum::<f64>() + bias;
            let margin = y[i] * f;
            let v = if alpha[i] <= bound_tol {
                (1.0 - margin).max(0.0)
            } else if alpha[i] >= c - bound_tol {
                (margin - 1.0).max(0.0)
            } else {
                (margin - 1.0).abs()
            };
            worst = worst.max(v).max((-alpha[i]).max(alpha[i] - c).max(0.0));
        }
        worst
    }
}
