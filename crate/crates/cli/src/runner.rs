//! Expands a config into tasks (subject x paradigm x selection x analysis),
//! runs them in parallel and writes the outputs. Task results are collected
//! in plan order and every task draws from its own derived seed, so outputs
//! do not depend on the thread count.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use mvpa_core::analyses::{
    cluster_composition, encode_cv, labeled_rows, make_folds, permutation_pvalue, random_baseline_accuracy,
    rsa_by_class, FoldPlan,
};
use mvpa_core::dataset::{load_dataset, load_embeddings, Dataset, EmbeddingSet, Paradigm};
use mvpa_core::report::{Report, ReportRecord, REPORT_CSV, REPORT_JSON};
use mvpa_core::searchlight::{
    aggregate_by_area, rank_areas_across_subjects, run_searchlight, write_accuracy_map, SearchlightConfig,
    ACCURACY_MAP_FILE, AREA_RANKING_FILE,
};
use mvpa_core::seed::{derive_path, label_hash};
use mvpa_core::selection::{select_roi, select_stable, Provenance, VoxelSelection, DEFAULT_STABLE_VOXELS};
use ndarray::Axis;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{AnalysesConfig, DecodingConfig, ExperimentConfig, SelectionSpec};
use crate::error::CliError;

pub const SELECTION_FILE: &str = "selection.json";

/// Which part of a config a command runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    All,
    Decode,
    Cluster,
    Encode,
    Rsa,
    Searchlight,
    SelectStable,
}

impl ExperimentConfig {
    /// The config reduced to one stage. Missing analysis sections fall back
    /// to their defaults.
    pub fn restricted_to(&self, stage: Stage) -> Result<ExperimentConfig, CliError> {
        let mut c = self.clone();
        let a = &self.analyses;
        let non_searchlight = |c: &mut ExperimentConfig| c.selections.retain(|s| !s.is_searchlight());
        match stage {
            Stage::All => {}
            Stage::Decode => {
                non_searchlight(&mut c);
                c.analyses = AnalysesConfig {
                    decoding: Some(a.decoding.clone().unwrap_or_default()),
                    ..Default::default()
                };
            }
            Stage::Cluster => {
                non_searchlight(&mut c);
                c.analyses = AnalysesConfig {
                    clustering: Some(a.clustering.clone().unwrap_or_default()),
                    ..Default::default()
                };
            }
            Stage::Encode => {
                non_searchlight(&mut c);
                c.analyses = AnalysesConfig {
                    encoding: Some(a.encoding.clone().unwrap_or_default()),
                    ..Default::default()
                };
            }
            Stage::Rsa => {
                non_searchlight(&mut c);
                let rsa = a.rsa.clone().unwrap_or_default();
                if rsa.embeddings.is_empty() {
                    return Err(CliError::Config("rsa needs at least one embedding".into()));
                }
                c.analyses = AnalysesConfig {
                    rsa: Some(rsa),
                    ..Default::default()
                };
            }
            Stage::Searchlight => {
                c.selections.retain(|s| s.is_searchlight());
                if c.selections.is_empty() {
                    c.selections.push(SelectionSpec::Searchlight {
                        radius_mm: mvpa_core::selection::DEFAULT_RADIUS_MM,
                        threshold: mvpa_core::searchlight::DEFAULT_ACCURACY_THRESHOLD,
                        filter: Default::default(),
                    });
                }
                c.analyses = AnalysesConfig {
                    decoding: Some(a.decoding.clone().unwrap_or_default()),
                    ..Default::default()
                };
            }
            Stage::SelectStable => {
                c.selections.retain(|s| matches!(s, SelectionSpec::Stable { .. }));
                if c.selections.is_empty() {
                    c.selections.push(SelectionSpec::Stable {
                        top_k: DEFAULT_STABLE_VOXELS,
                        name: None,
                    });
                }
                c.analyses = AnalysesConfig::default();
            }
        }
        Ok(c)
    }
}

/// A loaded subject plus the free-standing embeddings named in the config.
pub struct Subject {
    pub label: String,
    pub dir: PathBuf,
    pub dataset: Dataset,
    pub extra_embeddings: Vec<EmbeddingSet>,
}

impl Subject {
    pub fn embedding(&self, name: &str) -> Option<&EmbeddingSet> {
        self.extra_embeddings
            .iter()
            .find(|e| e.name() == name)
            .or_else(|| self.dataset.embedding(name))
    }
}

/// Loads and validates every subject. Labels are subject ids, suffixed with
/// the subject's position when ids repeat.
pub fn load_subjects(config: &ExperimentConfig) -> Result<Vec<Subject>, CliError> {
    config.validate_schema()?;
    let used = config.embedding_names();
    let mut subjects = Vec::with_capacity(config.subjects.len());
    for dir in &config.subjects {
        let dataset = load_dataset(dir)?;
        let mut extra = Vec::new();
        for (name, path) in &config.embedding_files {
            if used.contains(name) {
                extra.push(load_embeddings(path, name, &dataset.concepts)?);
            }
        }
        config.validate_against(&dataset, dir)?;
        subjects.push(Subject {
            label: dataset.subject.subject_id().to_string(),
            dir: dir.clone(),
            dataset,
            extra_embeddings: extra,
        });
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for s in &subjects {
        *counts.entry(s.label.clone()).or_default() += 1;
    }
    for (i, s) in subjects.iter_mut().enumerate() {
        if counts[&s.label] > 1 {
            s.label = format!("{}-{}", s.label, i + 1);
        }
    }
    Ok(subjects)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Analysis {
    Decoding,
    Clustering,
    Encoding(String),
    RandomBaseline,
    Rsa(String),
}

impl Analysis {
    pub fn name(&self) -> String {
        match self {
            Analysis::Decoding => "decoding".into(),
            Analysis::Clustering => "clustering".into(),
            Analysis::Encoding(e) => format!("encoding:{e}"),
            Analysis::RandomBaseline => "encoding:random".into(),
            Analysis::Rsa(e) => format!("rsa:{e}"),
        }
    }
}

pub fn analyses_of(config: &AnalysesConfig) -> Vec<Analysis> {
    let mut out = Vec::new();
    if config.decoding.is_some() {
        out.push(Analysis::Decoding);
    }
    if config.clustering.is_some() {
        out.push(Analysis::Clustering);
    }
    if let Some(e) = &config.encoding {
        out.extend(e.embeddings.iter().cloned().map(Analysis::Encoding));
        if e.random_baseline.is_some() {
            out.push(Analysis::RandomBaseline);
        }
    }
    if let Some(r) = &config.rsa {
        out.extend(r.embeddings.iter().cloned().map(Analysis::Rsa));
    }
    out
}

#[derive(Debug, Clone)]
struct Task {
    subject: usize,
    paradigm: Paradigm,
    selection: usize,
    analysis: Analysis,
}

/// What a run would do; printed by `--dry-run`.
#[derive(Debug, Clone, Serialize)]
pub struct Plan {
    pub subjects: Vec<String>,
    pub paradigms: Vec<Paradigm>,
    pub selections: Vec<String>,
    pub analyses: Vec<String>,
    pub tasks: usize,
    pub searchlight_runs: usize,
    pub output_dir: PathBuf,
}

pub fn plan(config: &ExperimentConfig, subjects: &[Subject]) -> Plan {
    let selections: Vec<String> = config.selections.iter().map(SelectionSpec::label).collect();
    let analyses: Vec<String> = analyses_of(&config.analyses).iter().map(Analysis::name).collect();
    let regular = config.selections.iter().filter(|s| !s.is_searchlight()).count();
    let with_searchlight = config.selections.iter().any(SelectionSpec::is_searchlight);
    let cells = subjects.len() * config.paradigms.len();
    Plan {
        subjects: subjects.iter().map(|s| s.label.clone()).collect(),
        paradigms: config.paradigms.clone(),
        selections,
        tasks: cells * regular * analyses.len(),
        analyses,
        searchlight_runs: if with_searchlight { cells } else { 0 },
        output_dir: config.output_dir.clone(),
    }
}

/// Seed of one task; identical across runs, thread counts and task order.
pub fn task_seed(master: u64, subject: usize, paradigm: Paradigm, selection: usize, analysis: &str) -> u64 {
    derive_path(
        master,
        &[
            subject as u64,
            label_hash(paradigm.as_str()),
            selection as u64,
            label_hash(analysis),
        ],
    )
}

/// Fold plan shared by every paradigm, selection and permutation of a subject.
pub fn subject_folds(master: u64, subject: usize, n_items: usize, n_folds: usize) -> mvpa_core::Result<FoldPlan> {
    make_folds(
        n_items,
        n_folds,
        derive_path(master, &[label_hash("folds"), subject as u64, n_folds as u64]),
    )
}

/// Runs the config and writes every output. Task failures are recorded in
/// the report; only configuration and output errors abort.
pub fn execute(config: &ExperimentConfig, subjects: &[Subject]) -> Result<Report, CliError> {
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| mvpa_core::Error::io(out, e))?;
    let selections = resolve_selections(config, subjects, out)?;

    let analyses = analyses_of(&config.analyses);
    let mut tasks = Vec::new();
    for subject in 0..subjects.len() {
        for &paradigm in &config.paradigms {
            for (selection, spec) in config.selections.iter().enumerate() {
                if spec.is_searchlight() {
                    continue;
                }
                for analysis in &analyses {
                    tasks.push(Task {
                        subject,
                        paradigm,
                        selection,
                        analysis: analysis.clone(),
                    });
                }
            }
        }
    }
    let mut records: Vec<ReportRecord> = Vec::new();
    for (s, row) in subjects.iter().zip(&selections) {
        for (spec, sel) in config.selections.iter().zip(row) {
            if let SelectionSpec::Stable { .. } = spec {
                let record = ReportRecord::new(&s.label, "all", &spec.label(), "selection");
                records.push(match sel {
                    Ok(sel) => {
                        let zero = match &sel.provenance {
                            Provenance::Stable {
                                zero_variance_pairs, ..
                            } => *zero_variance_pairs,
                            _ => 0,
                        };
                        record
                            .metric("n_voxels", sel.len() as f64)
                            .metric("zero_variance_pairs", zero as f64)
                    }
                    Err(e) => record.failed(e.clone()),
                });
            }
        }
    }
    records.extend(
        tasks
            .par_iter()
            .map(|t| {
                let s = &subjects[t.subject];
                let name = t.analysis.name();
                let record = ReportRecord::new(
                    &s.label,
                    t.paradigm.as_str(),
                    &config.selections[t.selection].label(),
                    &name,
                );
                let outcome = selections[t.subject][t.selection]
                    .as_ref()
                    .map_err(|e| e.clone())
                    .and_then(|sel| run_task(config, t, s, sel, record.clone()).map_err(|e| e.to_string()));
                outcome.unwrap_or_else(|e| record.failed(e))
            })
            .collect::<Vec<_>>(),
    );

    if let Some(SelectionSpec::Searchlight {
        radius_mm,
        threshold,
        filter,
    }) = config.selections.iter().find(|s| s.is_searchlight())
    {
        let decoding = config.analyses.decoding.clone().unwrap_or_default();
        records.extend(run_searchlights(
            config,
            subjects,
            &decoding,
            SearchlightConfig {
                radius_mm: *radius_mm,
                svm: decoding.svm,
            },
            *threshold,
            *filter,
        )?);
    }

    let report = Report {
        generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        records,
    };
    report.write_json(&out.join(REPORT_JSON))?;
    report.write_csv(&out.join(REPORT_CSV))?;
    Ok(report)
}

type Resolved = Vec<Vec<Result<VoxelSelection, String>>>;

/// Resolves every non-searchlight selection per subject and writes
/// `selections/<subject>/<selection>/selection.json`.
fn resolve_selections(config: &ExperimentConfig, subjects: &[Subject], out: &Path) -> Result<Resolved, CliError> {
    let resolved: Resolved = subjects
        .par_iter()
        .map(|s| {
            config
                .selections
                .iter()
                .map(|spec| {
                    let r = match spec {
                        SelectionSpec::Roi { regions, .. } => select_roi(s.dataset.subject.geometry(), regions),
                        SelectionSpec::Stable { top_k, .. } => select_stable(&s.dataset.subject, *top_k),
                        SelectionSpec::Searchlight { .. } => {
                            return Err("searchlight is not a fixed selection".to_string())
                        }
                    };
                    r.map_err(|e| format!("selection {}: {e}", spec.label()))
                })
                .collect()
        })
        .collect();
    for (s, row) in subjects.iter().zip(&resolved) {
        for (spec, sel) in config.selections.iter().zip(row) {
            if let Ok(sel) = sel {
                let dir = out.join("selections").join(&s.label).join(spec.label());
                fs::create_dir_all(&dir).map_err(|e| mvpa_core::Error::io(&dir, e))?;
                sel.write_json(&dir.join(SELECTION_FILE))?;
            }
        }
    }
    Ok(resolved)
}

fn run_task(
    config: &ExperimentConfig,
    task: &Task,
    subject: &Subject,
    selection: &VoxelSelection,
    record: ReportRecord,
) -> mvpa_core::Result<ReportRecord> {
    let data = &subject.dataset;
    let columns = selection.columns(data.subject.activations(task.paradigm)?.view());
    let (x, labels, indices) = labeled_rows(columns.view(), &data.concepts);
    let seed = task_seed(
        config.seed,
        task.subject,
        task.paradigm,
        task.selection,
        &task.analysis.name(),
    );
    let record = record.metric("n_voxels", selection.len() as f64);
    let embedding_rows = |name: &str| -> mvpa_core::Result<ndarray::Array2<f64>> {
        let e = subject
            .embedding(name)
            .ok_or_else(|| mvpa_core::Error::InvalidArgument(format!("unknown embedding {name}")))?;
        Ok(e.vectors().select(Axis(0), &indices))
    };
    let analyses = &config.analyses;
    Ok(match &task.analysis {
        Analysis::Decoding => {
            let d = analyses.decoding.as_ref().expect("decoding configured");
            let folds = subject_folds(config.seed, task.subject, x.nrows(), d.folds)?;
            let r = permutation_pvalue(x.view(), &labels, &folds, d.permutations, d.alpha, seed, &d.svm)?;
            record
                .metric("accuracy", r.accuracy)
                .metric("p_value", r.p_value)
                .metric("significant", if r.significant { 1.0 } else { 0.0 })
                .metric("n_permutations", r.n_permutations as f64)
                .with_detail(&r)
        }
        Analysis::Clustering => {
            let c = analyses.clustering.as_ref().expect("clustering configured");
            let r = cluster_composition(x.view(), &labels, c.k, &c.kmeans, seed)?;
            let mut record = record
                .metric("dataset_abstract_proportion", r.dataset_abstract_proportion)
                .metric("inertia", r.inertia);
            for (i, p) in r.cluster_abstract_proportions.iter().enumerate() {
                record = record.metric(&format!("cluster{i}_abstract_proportion"), *p);
            }
            record.with_detail(&r)
        }
        Analysis::Encoding(name) => {
            let e = analyses.encoding.as_ref().expect("encoding configured");
            let folds = subject_folds(config.seed, task.subject, x.nrows(), e.folds)?;
            let emb = embedding_rows(name)?;
            let r = encode_cv(name, emb.view(), x.view(), &labels, &folds, &e.ridge)?;
            encoding_metrics(record, &r)
        }
        Analysis::RandomBaseline => {
            let e = analyses.encoding.as_ref().expect("encoding configured");
            let b = e.random_baseline.expect("random baseline configured");
            let folds = subject_folds(config.seed, task.subject, x.nrows(), e.folds)?;
            let r = random_baseline_accuracy(
                x.view(),
                &labels,
                &folds,
                b.dimension,
                b.initializations,
                seed,
                &e.ridge,
            )?;
            encoding_metrics(record, &r)
        }
        Analysis::Rsa(name) => {
            let emb = embedding_rows(name)?;
            let r = rsa_by_class(name, x.view(), emb.view(), &labels)?;
            record
                .metric("rho_abstract", r.rho_abstract)
                .metric("rho_concrete", r.rho_concrete)
                .with_detail(&r)
        }
    })
}

fn encoding_metrics(record: ReportRecord, r: &mvpa_core::analyses::EncodingResult) -> ReportRecord {
    record
        .metric("mean_abstract", r.mean_abstract)
        .metric("mean_concrete", r.mean_concrete)
        .metric("mean_overall", r.mean_overall)
        .with_detail(r)
}

/// Searchlight per subject and paradigm, then the cross-subject area
/// ranking per paradigm. Writes `searchlight/<subject>/<paradigm>/accuracy_map.f32`
/// and `searchlight/<paradigm>/area_ranking.csv`.
fn run_searchlights(
    config: &ExperimentConfig,
    subjects: &[Subject],
    decoding: &DecodingConfig,
    sl: SearchlightConfig,
    threshold: f64,
    filter: mvpa_core::searchlight::ThresholdMode,
) -> Result<Vec<ReportRecord>, CliError> {
    let root = config.output_dir.join("searchlight");
    let mut records = Vec::new();
    for &paradigm in &config.paradigms {
        let mut areas: Vec<BTreeMap<String, f64>> = Vec::new();
        let mut contributors: BTreeSet<String> = BTreeSet::new();
        for (i, s) in subjects.iter().enumerate() {
            let record = ReportRecord::new(&s.label, paradigm.as_str(), "searchlight", "searchlight");
            let data = &s.dataset;
            let outcome = subject_folds(config.seed, i, data.concepts.labeled_indices().len(), decoding.folds)
                .and_then(|folds| run_searchlight(&data.subject, paradigm, &data.concepts, &folds, &sl))
                .and_then(|map| {
                    let dir = root.join(&s.label).join(paradigm.as_str());
                    fs::create_dir_all(&dir).map_err(|e| mvpa_core::Error::io(&dir, e))?;
                    write_accuracy_map(&dir.join(ACCURACY_MAP_FILE), &map)?;
                    let by_area = aggregate_by_area(&map, data.subject.geometry())?;
                    Ok((map, by_area))
                });
            match outcome {
                Ok((map, by_area)) => {
                    let mean = map.accuracies.iter().sum::<f64>() / map.len() as f64;
                    let mut r = record
                        .metric("mean_accuracy", mean)
                        .metric("flagged_spheres", map.flagged_count() as f64);
                    for (area, acc) in &by_area {
                        r = r.metric(&format!("area_accuracy:{area}"), *acc);
                    }
                    records.push(r);
                    areas.push(by_area);
                    contributors.insert(s.label.clone());
                }
                Err(e) => records.push(record.failed(e.to_string())),
            }
        }
        let record = ReportRecord::new("all", paradigm.as_str(), "searchlight", "area_ranking");
        match rank_areas_across_subjects(&areas, threshold, filter) {
            Ok(ranking) => {
                let dir = root.join(paradigm.as_str());
                fs::create_dir_all(&dir).map_err(|e| mvpa_core::Error::io(&dir, e))?;
                ranking.write_csv(&dir.join(AREA_RANKING_FILE))?;
                let mut r = record.metric("n_subjects", contributors.len() as f64);
                for a in &ranking.areas {
                    r = r
                        .metric(&format!("mean_rank:{}", a.area), a.mean_rank)
                        .metric(&format!("mean_accuracy:{}", a.area), a.mean_accuracy);
                }
                records.push(r.with_detail(&ranking));
            }
            Err(e) => records.push(record.failed(e.to_string())),
        }
    }
    Ok(records)
}
