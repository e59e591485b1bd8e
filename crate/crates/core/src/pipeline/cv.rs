//! Nested cross-validation: outer folds for testing, an inner validation
//! split for fine-tuning epoch selection, pretraining restricted to
//! train+validation subjects, and per-fold leakage instrumentation.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{zscore_normalize, Dataset, SplitTag};
use crate::error::{Error, Result};
use crate::nn::{EncoderConfig, Task};
use crate::pipeline::metrics::{evaluate, MetricsReport, RunMetrics};
use crate::pipeline::{finetune_with_validation, predict_dataset, pretrain, TrainConfig};

/// Outcome of one (repetition, fold) cell.
#[derive(Debug, Clone)]
pub struct FoldRecord {
    pub repetition: usize,
    pub fold: usize,
    pub metrics: RunMetrics,
    /// Subject ids seen by pretraining or fine-tuning.
    pub touched_subjects: Vec<String>,
    pub test_subjects: Vec<String>,
}

/// Aggregated nested-CV result.
#[derive(Debug, Clone)]
pub struct CvReport {
    pub report: MetricsReport,
    pub folds: Vec<FoldRecord>,
}

/// Fold assignment, stratified by class for binary labels so every fold
/// carries both classes.
pub fn assign_folds<R: rand::Rng>(
    d: &Dataset,
    folds: usize,
    rng: &mut R,
) -> Vec<usize> {
    let m = d.n_subjects();
    let mut assignment = vec![0usize; m];
    let stratify = d.binary_labels() == Some(true);
    if stratify {
        let labels = d.labels().expect("binary labels checked");
        for class in [0.0, 1.0] {
            let mut idx: Vec<usize> = (0..m).filter(|&i| labels[i] == class).collect();
            idx.shuffle(rng);
            for (pos, &i) in idx.iter().enumerate() {
                assignment[i] = pos % folds;
            }
        }
    } else {
        let mut idx: Vec<usize> = (0..m).collect();
        idx.shuffle(rng);
        for (pos, &i) in idx.iter().enumerate() {
            assignment[i] = pos % folds;
        }
    }
    assignment
}

fn fraction_subset<R: rand::Rng>(
    indices: &[usize],
    labels: &[f64],
    fraction: f64,
    task: Task,
    rng: &mut R,
) -> Vec<usize> {
    if fraction >= 1.0 {
        return indices.to_vec();
    }
    match task {
        Task::Classification => {
            // stratified subsample keeping at least one subject per class
            let mut chosen = Vec::new();
            for class in [0.0, 1.0] {
                let mut pool: Vec<usize> = indices
                    .iter()
                    .cloned()
                    .filter(|&i| labels[i] == class)
                    .collect();
                pool.shuffle(rng);
                let keep = ((pool.len() as f64 * fraction).ceil() as usize).max(1);
                chosen.extend(pool.into_iter().take(keep));
            }
            chosen.sort_unstable();
            chosen
        }
        Task::Regression => {
            let mut pool = indices.to_vec();
            pool.shuffle(rng);
            let keep = ((pool.len() as f64 * fraction).ceil() as usize).max(2);
            pool.truncate(keep);
            pool.sort_unstable();
            pool
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    d: &Dataset,
    enc_cfg: &EncoderConfig,
    cfg: &TrainConfig,
    task: Task,
    assignment: &[usize],
    folds: usize,
    repetition: usize,
    fold: usize,
    seed: u64,
) -> Result<FoldRecord> {
    let m = d.n_subjects();
    let val_fold = (fold + 1) % folds;
    let tags: Vec<SplitTag> = (0..m)
        .map(|i| {
            if assignment[i] == fold {
                SplitTag::Test
            } else if assignment[i] == val_fold {
                SplitTag::Validation
            } else {
                SplitTag::Train
            }
        })
        .collect();
    let tagged = d.with_split_tags(tags.clone())?;
    let (normalized, _) = zscore_normalize(&tagged)?;

    let train_idx: Vec<usize> = (0..m).filter(|&i| tags[i] == SplitTag::Train).collect();
    let val_idx: Vec<usize> = (0..m).filter(|&i| tags[i] == SplitTag::Validation).collect();
    let test_idx: Vec<usize> = (0..m).filter(|&i| tags[i] == SplitTag::Test).collect();
    let pretrain_idx: Vec<usize> = train_idx.iter().chain(&val_idx).cloned().collect();

    let pretrain_set = normalized.subset(&pretrain_idx)?;
    let mut fold_cfg = cfg.clone();
    fold_cfg.seed = seed;
    let (enc, _history) = pretrain(&pretrain_set, enc_cfg, &fold_cfg)?;

    let labels = d.labels().expect("nested_cv needs labels");
    let mut frac_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0xF0D));
    let finetune_idx = fraction_subset(&train_idx, labels, cfg.label_fraction, task, &mut frac_rng);
    let finetune_set = normalized.subset(&finetune_idx)?;
    let val_set = normalized.subset(&val_idx)?;
    let (model, _trace) =
        finetune_with_validation(&enc, &finetune_set, Some(&val_set), task, &fold_cfg)?;

    let test_set = normalized.subset(&test_idx)?;
    let preds = predict_dataset(&model, &test_set)?;
    let test_labels: Vec<f64> = test_idx.iter().map(|&i| labels[i]).collect();
    let metrics = evaluate(&preds, &test_labels, task)?;

    let touched: Vec<String> = pretrain_idx
        .iter()
        .chain(&finetune_idx)
        .chain(&val_idx)
        .map(|&i| d.maps()[i].subject_id().to_string())
        .collect();
    let test_subjects: Vec<String> = test_idx
        .iter()
        .map(|&i| d.maps()[i].subject_id().to_string())
        .collect();
    let test_set_ids: HashSet<&String> = test_subjects.iter().collect();
    if touched.iter().any(|id| test_set_ids.contains(id)) {
        return Err(Error::InvalidArgument(format!(
            "leakage: a test subject of fold {fold} was touched during training"
        )));
    }
    Ok(FoldRecord {
        repetition,
        fold,
        metrics,
        touched_subjects: touched,
        test_subjects,
    })
}

/// Nested k-fold cross-validation, repeated. Folds and repetitions run in
/// parallel; records are sorted before aggregation so results do not depend
/// on scheduling.
pub fn nested_cv(
    d: &Dataset,
    enc_cfg: &EncoderConfig,
    cfg: &TrainConfig,
    task: Task,
    folds: usize,
    repetitions: usize,
) -> Result<CvReport> {
    let m = d.n_subjects();
    if folds < 2 || folds > m {
        return Err(Error::InvalidArgument(format!(
            "folds must be in [2, {m}], got {folds}"
        )));
    }
    if repetitions < 1 {
        return Err(Error::InvalidArgument("repetitions must be >= 1".into()));
    }
    let labels = d
        .labels()
        .ok_or_else(|| Error::LabelTaskMismatch("nested_cv needs labels".into()))?;
    if task == Task::Classification {
        let n1 = labels.iter().filter(|&&l| l == 1.0).count();
        if n1 < folds || m - n1 < folds {
            return Err(Error::InvalidArgument(format!(
                "each class needs >= {folds} subjects for stratified {folds}-fold CV"
            )));
        }
    }
    let mut cells = Vec::new();
    for rep in 0..repetitions {
        let mut fold_rng = ChaCha8Rng::seed_from_u64(
            cfg.seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(rep as u64),
        );
        let assignment = assign_folds(d, folds, &mut fold_rng);
        for fold in 0..folds {
            let cell_seed = cfg
                .seed
                .wrapping_add(1_000_003u64.wrapping_mul((rep * folds + fold) as u64 + 1));
            cells.push((rep, fold, assignment.clone(), cell_seed));
        }
    }
    let mut records: Vec<FoldRecord> = cells
        .into_par_iter()
        .map(|(rep, fold, assignment, seed)| {
            run_fold(d, enc_cfg, cfg, task, &assignment, folds, rep, fold, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| (r.repetition, r.fold));
    let runs: Vec<RunMetrics> = records.iter().map(|r| r.metrics).collect();
    Ok(CvReport {
        report: MetricsReport::new(task, runs),
        folds: records,
    })
}
