//! Classification and regression metrics with mean/SD aggregation across
//! folds and repetitions.

use crate::error::{Error, Result};
use crate::nn::Task;

/// Area under the ROC curve via the pairwise rank statistic; ties count 1/2.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1.0)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 0.0)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidArgument(
            "AUC needs both classes present".into(),
        ));
    }
    let mut favorable = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                favorable += 1.0;
            } else if p == n {
                favorable += 0.5;
            }
        }
    }
    Ok(favorable / (pos.len() as f64 * neg.len() as f64))
}

/// Metrics of a single evaluation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunMetrics {
    Classification {
        ba: f64,
        sen: f64,
        spe: f64,
        auc: f64,
    },
    Regression {
        mae: f64,
        r2: f64,
    },
}

impl RunMetrics {
    pub fn names(task: Task) -> &'static [&'static str] {
        match task {
            Task::Classification => &["ba", "sen", "spe", "auc"],
            Task::Regression => &["mae", "r2"],
        }
    }

    pub fn get(&self, name: &str) -> f64 {
        match (self, name) {
            (RunMetrics::Classification { ba, .. }, "ba") => *ba,
            (RunMetrics::Classification { sen, .. }, "sen") => *sen,
            (RunMetrics::Classification { spe, .. }, "spe") => *spe,
            (RunMetrics::Classification { auc, .. }, "auc") => *auc,
            (RunMetrics::Regression { mae, .. }, "mae") => *mae,
            (RunMetrics::Regression { r2, .. }, "r2") => *r2,
            _ => panic!("unknown metric {name}"),
        }
    }
}

/// Score predictions against labels. Classification scores are P(class 1)
/// thresholded at 0.5 for sensitivity/specificity.
pub fn evaluate(preds: &[f64], labels: &[f64], task: Task) -> Result<RunMetrics> {
    if preds.len() != labels.len() || preds.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "evaluate needs equal-length inputs of >= 2, got {} and {}",
            preds.len(),
            labels.len()
        )));
    }
    match task {
        Task::Classification => {
            if labels.iter().any(|&l| l != 0.0 && l != 1.0) {
                return Err(Error::LabelTaskMismatch(
                    "classification labels must be in {0, 1}".into(),
                ));
            }
            let auc = auc(preds, labels)?;
            let (mut tp, mut fn_, mut tn, mut fp) = (0.0, 0.0, 0.0, 0.0);
            for (&p, &l) in preds.iter().zip(labels) {
                let hat = if p >= 0.5 { 1.0 } else { 0.0 };
                match (l == 1.0, hat == 1.0) {
                    (true, true) => tp += 1.0,
                    (true, false) => fn_ += 1.0,
                    (false, false) => tn += 1.0,
                    (false, true) => fp += 1.0,
                }
            }
            let sen = tp / (tp + fn_);
            let spe = tn / (tn + fp);
            Ok(RunMetrics::Classification {
                ba: 0.5 * (sen + spe),
                sen,
                spe,
                auc,
            })
        }
        Task::Regression => {
            let n = labels.len() as f64;
            let mae = preds
                .iter()
                .zip(labels)
                .map(|(p, l)| (p - l).abs())
                .sum::<f64>()
                / n;
            let mean = labels.iter().sum::<f64>() / n;
            let ss_tot: f64 = labels.iter().map(|l| (l - mean) * (l - mean)).sum();
            let ss_res: f64 = preds
                .iter()
                .zip(labels)
                .map(|(p, l)| (p - l) * (p - l))
                .sum();
            let r2 = if ss_tot <= 1e-300 {
                if ss_res <= 1e-12 {
                    1.0
                } else {
                    f64::NEG_INFINITY
                }
            } else {
                1.0 - ss_res / ss_tot
            };
            Ok(RunMetrics::Regression { mae, r2 })
        }
    }
}

/// Per-metric mean and spread over folds and repetitions.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub task: Task,
    pub runs: Vec<RunMetrics>,
}

impl MetricsReport {
    pub fn new(task: Task, runs: Vec<RunMetrics>) -> Self {
        Self { task, runs }
    }

    pub fn mean(&self, name: &str) -> f64 {
        let n = self.runs.len() as f64;
        self.runs.iter().map(|r| r.get(name)).sum::<f64>() / n
    }

    pub fn sd(&self, name: &str) -> f64 {
        if self.runs.len() < 2 {
            return 0.0;
        }
        let mean = self.mean(name);
        let n = self.runs.len() as f64;
        (self
            .runs
            .iter()
            .map(|r| (r.get(name) - mean) * (r.get(name) - mean))
            .sum::<f64>()
            / (n - 1.0))
            .sqrt()
    }

    /// `(name, mean, sd)` for every metric of the task.
    pub fn summary(&self) -> Vec<(&'static str, f64, f64)> {
        RunMetrics::names(self.task)
            .iter()
            .map(|&name| (name, self.mean(name), self.sd(name)))
            .collect()
    }
}

/// Median helper used by the ablation analyses.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
