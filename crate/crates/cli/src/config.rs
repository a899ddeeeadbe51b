//! Experiment configuration (JSON). Every numeric default mirrors the
//! original study's settings.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use mvpa_core::analyses::clustering::DEFAULT_CLUSTERS;
use mvpa_core::analyses::decoding::{DEFAULT_ALPHA, DEFAULT_PERMUTATIONS};
use mvpa_core::analyses::encoding::{DEFAULT_RANDOM_DIMENSION, DEFAULT_RANDOM_INITIALIZATIONS};
use mvpa_core::analyses::folds::DEFAULT_FOLDS;
use mvpa_core::dataset::{Dataset, Paradigm};
use mvpa_core::mlcore::{KMeansConfig, RidgeConfig, SvmConfig};
use mvpa_core::searchlight::{ThresholdMode, DEFAULT_ACCURACY_THRESHOLD};
use mvpa_core::selection::{DEFAULT_RADIUS_MM, DEFAULT_STABLE_VOXELS};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset directories, one per subject. Relative paths resolve against
    /// the config file's directory.
    pub subjects: Vec<PathBuf>,
    #[serde(default = "all_paradigms")]
    pub paradigms: Vec<Paradigm>,
    #[serde(default)]
    pub selections: Vec<SelectionSpec>,
    #[serde(default)]
    pub analyses: AnalysesConfig,
    /// Text embedding files (`<id> v1 v2 ...` per line) by name. Names not
    /// listed here are looked up in each dataset's manifest.
    #[serde(default)]
    pub embedding_files: BTreeMap<String, PathBuf>,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn all_paradigms() -> Vec<Paradigm> {
    Paradigm::ALL.to_vec()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SelectionSpec {
    Roi {
        regions: Vec<String>,
        #[serde(default)]
        name: Option<String>,
    },
    Stable {
        #[serde(default = "default_top_k")]
        top_k: usize,
        #[serde(default)]
        name: Option<String>,
    },
    Searchlight {
        #[serde(default = "default_radius")]
        radius_mm: f64,
        #[serde(default = "default_threshold")]
        threshold: f64,
        #[serde(default)]
        filter: ThresholdMode,
    },
}

fn default_top_k() -> usize {
    DEFAULT_STABLE_VOXELS
}

fn default_radius() -> f64 {
    DEFAULT_RADIUS_MM
}

fn default_threshold() -> f64 {
    DEFAULT_ACCURACY_THRESHOLD
}

impl SelectionSpec {
    /// Label used in reports and output paths.
    pub fn label(&self) -> String {
        match self {
            SelectionSpec::Roi { name: Some(n), .. } | SelectionSpec::Stable { name: Some(n), .. } => n.clone(),
            SelectionSpec::Roi { regions, .. } => regions.join("+"),
            SelectionSpec::Stable { .. } => "stable".into(),
            SelectionSpec::Searchlight { .. } => "searchlight".into(),
        }
    }

    pub fn is_searchlight(&self) -> bool {
        matches!(self, SelectionSpec::Searchlight { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysesConfig {
    #[serde(default)]
    pub decoding: Option<DecodingConfig>,
    #[serde(default)]
    pub clustering: Option<ClusteringConfig>,
    #[serde(default)]
    pub encoding: Option<EncodingConfig>,
    #[serde(default)]
    pub rsa: Option<RsaConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodingConfig {
    pub folds: usize,
    pub permutations: usize,
    pub alpha: f64,
    pub svm: SvmConfig,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self {
            folds: DEFAULT_FOLDS,
            permutations: DEFAULT_PERMUTATIONS,
            alpha: DEFAULT_ALPHA,
            svm: SvmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub k: usize,
    pub kmeans: KMeansConfig,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_CLUSTERS,
            kmeans: KMeansConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodingConfig {
    pub folds: usize,
    pub embeddings: Vec<String>,
    pub ridge: RidgeConfig,
    /// Random-vector baseline; `null` disables it.
    pub random_baseline: Option<RandomBaselineConfig>,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            folds: DEFAULT_FOLDS,
            embeddings: Vec::new(),
            ridge: RidgeConfig::default(),
            random_baseline: Some(RandomBaselineConfig::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomBaselineConfig {
    pub dimension: usize,
    pub initializations: usize,
}

impl Default for RandomBaselineConfig {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_RANDOM_DIMENSION,
            initializations: DEFAULT_RANDOM_INITIALIZATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RsaConfig {
    pub embeddings: Vec<String>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for s in &mut config.subjects {
            if s.is_relative() {
                *s = base.join(&*s);
            }
        }
        for p in config.embedding_files.values_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        Ok(config)
    }

    /// Checks that don't need the datasets.
    pub fn validate_schema(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::Config(m));
        if self.subjects.is_empty() {
            return fail("at least one subject is required".into());
        }
        if self.paradigms.is_empty() {
            return fail("at least one paradigm is required".into());
        }
        let mut seen = BTreeSet::new();
        for p in &self.paradigms {
            if !seen.insert(p) {
                return fail(format!("paradigm {p} listed twice"));
            }
        }
        let mut labels = BTreeSet::new();
        for s in &self.selections {
            if !labels.insert(s.label()) {
                return fail(format!("selection name {} used twice", s.label()));
            }
            match s {
                SelectionSpec::Roi { regions, .. } if regions.is_empty() => {
                    return fail("roi selection with no regions".into());
                }
                SelectionSpec::Stable { top_k: 0, .. } => return fail("stable selection needs top_k >= 1".into()),
                SelectionSpec::Searchlight { radius_mm, .. } if radius_mm.is_nan() || *radius_mm <= 0.0 => {
                    return fail(format!("searchlight radius must be positive, got {radius_mm}"));
                }
                _ => {}
            }
        }
        if self.selections.iter().filter(|s| s.is_searchlight()).count() > 1 {
            return fail("at most one searchlight selection".into());
        }
        if let Some(d) = &self.analyses.decoding {
            if d.folds < 2 {
                return fail("decoding needs at least 2 folds".into());
            }
            if d.permutations == 0 {
                return fail("decoding needs at least 1 permutation".into());
            }
            if !(d.alpha > 0.0 && d.alpha <= 1.0) {
                return fail(format!("alpha must be in (0, 1], got {}", d.alpha));
            }
        }
        if let Some(c) = &self.analyses.clustering {
            if c.k == 0 {
                return fail("clustering needs k >= 1".into());
            }
        }
        if let Some(e) = &self.analyses.encoding {
            if e.folds < 2 {
                return fail("encoding needs at least 2 folds".into());
            }
            if let Some(r) = e.random_baseline {
                if r.dimension == 0 || r.initializations == 0 {
                    return fail("random baseline needs dimension and initializations >= 1".into());
                }
            }
        }
        if self.selections.iter().any(|s| s.is_searchlight()) && self.analyses.decoding.is_none() {
            return fail("a searchlight selection needs the decoding analysis (its folds and SVM settings)".into());
        }
        Ok(())
    }

    /// Embedding names referenced by any analysis.
    pub fn embedding_names(&self) -> BTreeSet<String> {
        let mut names = BTreeSet::new();
        if let Some(e) = &self.analyses.encoding {
            names.extend(e.embeddings.iter().cloned());
        }
        if let Some(r) = &self.analyses.rsa {
            names.extend(r.embeddings.iter().cloned());
        }
        names
    }

    /// Checks that referenced regions, paradigms and embeddings exist in a
    /// loaded subject.
    pub fn validate_against(&self, dataset: &Dataset, subject: &Path) -> Result<(), CliError> {
        let where_ = subject.display();
        for p in &self.paradigms {
            if dataset.subject.activations(*p).is_err() {
                return Err(CliError::Config(format!("subject {where_} has no {p} paradigm")));
            }
        }
        let rois: BTreeSet<String> = dataset.subject.geometry().roi_names().into_iter().collect();
        for s in &self.selections {
            if let SelectionSpec::Roi { regions, .. } = s {
                for r in regions {
                    if !rois.contains(r) {
                        return Err(CliError::Config(format!(
                            "unknown region {r} (subject {where_} has {rois:?})"
                        )));
                    }
                }
            }
            if let SelectionSpec::Stable { top_k, .. } = s {
                if *top_k > dataset.subject.geometry().voxel_count() {
                    return Err(CliError::Config(format!(
                        "top_k {top_k} exceeds the voxel count of {where_}"
                    )));
                }
            }
        }
        for name in self.embedding_names() {
            if !self.embedding_files.contains_key(&name) && dataset.embedding(&name).is_none() {
                return Err(CliError::Config(format!(
                    "unknown embedding {name} for subject {where_}"
                )));
            }
        }
        Ok(())
    }
}
