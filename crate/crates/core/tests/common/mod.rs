#![allow(dead_code)]

use mvpa_core::analyses::{labeled_rows, make_folds, FoldPlan};
use mvpa_core::dataset::{Dataset, Paradigm};
use mvpa_core::synth::{generate_subject, ClassSplit, Effect, PlantSpec, VoxelSet};
use ndarray::Array2;

/// The concept split of the real stimulus set: 132 labeled of 180.
pub const STUDY_SPLIT: ClassSplit = ClassSplit {
    concrete: 69,
    abstract_: 63,
    excluded: 48,
};

pub fn study_spec(grid_shape: [usize; 3], seed: u64) -> PlantSpec {
    PlantSpec::new(STUDY_SPLIT.total(), STUDY_SPLIT, grid_shape, seed)
}

pub fn class_separation(start: usize, end: usize, effect_size: f64) -> Effect {
    Effect::ClassSeparation {
        voxels: VoxelSet::Range { start, end },
        effect_size,
        paradigms: None,
    }
}

/// Labeled rows of one paradigm, their signs, and an 11-fold plan.
pub fn labeled(dataset: &Dataset, paradigm: Paradigm, fold_seed: u64) -> (Array2<f64>, Vec<f64>, FoldPlan) {
    let (x, y, _) = labeled_rows(dataset.subject.activations(paradigm).unwrap().view(), &dataset.concepts);
    let folds = make_folds(x.nrows(), 11, fold_seed).unwrap();
    (x, y, folds)
}

pub fn generate(spec: &PlantSpec) -> Dataset {
    generate_subject(spec).unwrap()
}
