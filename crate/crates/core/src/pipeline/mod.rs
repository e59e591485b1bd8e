//! Pretraining loop, downstream fine-tuning, metrics, nested
//! cross-validation and the ablation harness.

pub mod ablate;
pub mod cv;
pub mod metrics;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augment::{make_views, sample_batch_subjects};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::graph::{discrimination_loss_node, recon_loss_node, DiscEntry};
use crate::losses::LossWeights;
use crate::nn::encoder::{
    build_downstream_graph, build_encoder_graph, build_recon_graph, init_encoder,
};
use crate::nn::graph::Graph;
use crate::nn::layout::ParamBinding;
use crate::nn::{attach_downstream_head, predict, EncoderConfig, EncoderState, ModelState, Task};

pub use metrics::{evaluate, median, MetricsReport, RunMetrics};

/// Which pretext objectives are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskMode {
    /// Reconstruction + lambda * discrimination (the collaborative objective).
    Both,
    /// Reconstruction alone (equivalent to lambda = 0).
    ReconOnly,
    /// Discrimination alone (the reconstruction path is disabled).
    DiscOnly,
}

impl TaskMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(TaskMode::Both),
            "recon_only" => Ok(TaskMode::ReconOnly),
            "disc_only" => Ok(TaskMode::DiscOnly),
            other => Err(Error::InvalidArgument(format!("unknown task mode {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TaskMode::Both => "both",
            TaskMode::ReconOnly => "recon_only",
            TaskMode::DiscOnly => "disc_only",
        }
    }
}

/// Which rows the reconstruction loss covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconTarget {
    /// The full original map (the default objective).
    Full,
    /// Only the masked rows of each view (masked-autoencoder style contrast).
    MaskedRows,
}

/// Training hyperparameters shared by pretraining and fine-tuning.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub loss_weights: LossWeights,
    /// Masked-ROI count is drawn uniformly from [1, k_max] each step.
    pub k_max: usize,
    /// Views per subject per step.
    pub big_k: usize,
    pub seed: u64,
    pub mode: TaskMode,
    pub recon_target: ReconTarget,
    /// Fine-tuning epochs; defaults to `epochs` when zero is given.
    pub finetune_epochs: usize,
    /// Fraction of labeled training subjects used for fine-tuning.
    pub label_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 8,
            learning_rate: 0.001,
            weight_decay: 0.001,
            loss_weights: LossWeights::default(),
            k_max: 30,
            big_k: 50,
            seed: 0,
            mode: TaskMode::Both,
            recon_target: ReconTarget::Full,
            finetune_epochs: 500,
            label_fraction: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.finetune_epochs < 1 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument(
                "batch_size must be >= 2 (the contrastive loss needs two subjects)".into(),
            ));
        }
        if self.learning_rate <= 0.0 || self.weight_decay < 0.0 {
            return Err(Error::InvalidArgument(
                "learning_rate must be > 0 and weight_decay >= 0".into(),
            ));
        }
        if self.k_max < 1 {
            return Err(Error::InvalidArgument("k_max must be >= 1".into()));
        }
        if self.big_k < 1 {
            return Err(Error::InvalidArgument("K must be >= 1".into()));
        }
        if self.mode != TaskMode::ReconOnly && self.big_k < 2 {
            return Err(Error::InvalidArgument(
                "discrimination needs K >= 2 views per subject".into(),
            ));
        }
        if !(0.0 < self.label_fraction && self.label_fraction <= 1.0) {
            return Err(Error::InvalidArgument(
                "label_fraction must be in (0, 1]".into(),
            ));
        }
        self.loss_weights.validate()
    }
}

/// Adam with decoupled weight decay.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
    lr: f64,
    wd: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64, wd: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
            wd,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grads[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grads[i] * grads[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * (mhat / (vhat.sqrt() + Self::EPS) + self.wd * params[i]);
        }
    }
}

/// Pretrain the encoder on the two collaborative pretext tasks. Returns the
/// trained state and one aggregate loss per epoch.
pub fn pretrain(
    d: &Dataset,
    enc_cfg: &EncoderConfig,
    cfg: &TrainConfig,
) -> Result<(EncoderState, Vec<f64>)> {
    cfg.validate()?;
    enc_cfg.validate()?;
    let m = d.n_subjects();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "pretraining needs >= 2 subjects, got {m}"
        )));
    }
    if enc_cfg.d_model != d.n_feat() {
        return Err(Error::InvalidArgument(format!(
            "d_model {} does not match feature count {}",
            enc_cfg.d_model,
            d.n_feat()
        )));
    }
    let k_cap = cfg.k_max.min(d.n_roi() - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = init_encoder(enc_cfg, &mut rng)?;
    let layout = enc_cfg.encoder_layout();
    let mut adam = Adam::new(layout.param_count(), cfg.learning_rate, cfg.weight_decay);
    let steps_per_epoch = m.div_ceil(cfg.batch_size);
    let mut history = Vec::with_capacity(cfg.epochs);
    let lw = cfg.loss_weights;

    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..steps_per_epoch {
            let subjects = sample_batch_subjects(m, cfg.batch_size, &mut rng);
            let k = rng.random_range(1..=k_cap);
            let mut g = Graph::new();
            let binding = ParamBinding::bind(&mut g, &layout, &state.params);
            let mut recon_terms = Vec::new();
            let mut disc_entries = Vec::new();
            for (slot, &si) in subjects.iter().enumerate() {
                let map = &d.maps()[si];
                let views = make_views(map, k, cfg.big_k, &mut rng)?;
                let x = g.leaf(map.values().clone());
                let mut recons = Vec::new();
                let mut masks = Vec::new();
                for view in &views {
                    let input = g.leaf(view.values.clone());
                    let nodes = build_encoder_graph(&mut g, &binding, enc_cfg, input)?;
                    if cfg.mode != TaskMode::DiscOnly {
                        recons.push(build_recon_graph(&mut g, &binding, nodes.per_roi));
                        masks.push(view.mask.clone());
                    }
                    if cfg.mode != TaskMode::ReconOnly {
                        disc_entries.push(DiscEntry {
                            subject: slot,
                            flat: nodes.flat,
                        });
                    }
                }
                if cfg.mode != TaskMode::DiscOnly {
                    let mask_arg = match cfg.recon_target {
                        ReconTarget::Full => None,
                        ReconTarget::MaskedRows => Some(masks.as_slice()),
                    };
                    recon_terms.push(recon_loss_node(&mut g, x, &recons, mask_arg, lw.beta));
                }
            }
            let total = match cfg.mode {
                TaskMode::Both => {
                    let recon = g.sum_many(&recon_terms);
                    let disc = discrimination_loss_node(&mut g, &disc_entries, lw.tau);
                    let scaled = g.scale(disc, lw.lambda);
                    g.add(recon, scaled)
                }
                TaskMode::ReconOnly => g.sum_many(&recon_terms),
                TaskMode::DiscOnly => discrimination_loss_node(&mut g, &disc_entries, lw.tau),
            };
            let loss = g.scalar(total);
            if !loss.is_finite() {
                return Err(Error::DivergedLoss { epoch });
            }
            epoch_loss += loss;
            let grads = g.backward(total);
            let flat = binding.flat_grad(&layout, &grads);
            adam.step(&mut state.params, &flat);
        }
        history.push(epoch_loss / steps_per_epoch as f64);
    }
    Ok((state, history))
}

/// Inverse-frequency class weights for a binary label vector.
pub fn class_weights(labels: &[f64]) -> Result<(f64, f64)> {
    let n1 = labels.iter().filter(|&&l| l == 1.0).count();
    let n0 = labels.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::LabelTaskMismatch(
            "class weighting needs both classes present".into(),
        ));
    }
    Ok((1.0 / n0 as f64, 1.0 / n1 as f64))
}

fn check_task_labels(labels: &[f64], task: Task) -> Result<()> {
    match task {
        Task::Classification => {
            if labels.iter().any(|&l| l != 0.0 && l != 1.0) {
                return Err(Error::LabelTaskMismatch(
                    "classification needs labels in {0, 1}".into(),
                ));
            }
            Ok(())
        }
        Task::Regression => {
            if labels.iter().any(|l| !l.is_finite()) {
                return Err(Error::LabelTaskMismatch("regression labels must be finite".into()));
            }
            Ok(())
        }
    }
}

fn finetune_batch_loss(
    g: &mut Graph,
    binding: &ParamBinding,
    cfg: &EncoderConfig,
    task: Task,
    inputs: &[(Array2<f64>, f64)],
    weights: Option<(f64, f64)>,
) -> Result<crate::nn::graph::NodeId> {
    let mut terms = Vec::new();
    let mut weight_sum = 0.0;
    for (values, label) in inputs {
        let x = g.leaf(values.clone());
        let nodes = build_encoder_graph(g, binding, cfg, x)?;
        let out = build_downstream_graph(g, binding, nodes.per_roi);
        match task {
            Task::Classification => {
                // weighted cross-entropy from logits: w * (lse - logit_y)
                let l0 = g.slice_cols(out, 0, 1);
                let l1 = g.slice_cols(out, 1, 1);
                let lse = g.log_sum_exp_many(&[l0, l1]);
                let target = if *label == 1.0 { l1 } else { l0 };
                let nll = g.sub(lse, target);
                let (w0, w1) = weights.expect("classification weights");
                let w = if *label == 1.0 { w1 } else { w0 };
                weight_sum += w;
                terms.push(g.scale(nll, w));
            }
            Task::Regression => {
                let y = g.leaf(Array2::from_elem((1, 1), *label));
                let diff = g.sub(out, y);
                let sq = g.mul(diff, diff);
                weight_sum += 1.0;
                terms.push(sq);
            }
        }
    }
    let total = g.sum_many(&terms);
    Ok(g.scale(total, 1.0 / weight_sum))
}

/// Progress record of one fine-tuning run.
#[derive(Debug, Clone)]
pub struct FinetuneTrace {
    pub train_loss: Vec<f64>,
    /// Validation metric per epoch (BA for classification, MAE for
    /// regression) when a validation set was supplied.
    pub val_metric: Vec<f64>,
    /// Epoch whose parameters were returned.
    pub selected_epoch: usize,
}

/// Fine-tune a pretrained encoder on labeled data, using the original
/// unmasked maps as input. With a validation set, the returned model is the
/// epoch snapshot with the best validation BA (classification) or MAE
/// (regression).
pub fn finetune_with_validation(
    enc: &EncoderState,
    d: &Dataset,
    val: Option<&Dataset>,
    task: Task,
    cfg: &TrainConfig,
) -> Result<(ModelState, FinetuneTrace)> {
    cfg.validate()?;
    let labels = d
        .labels()
        .ok_or_else(|| Error::LabelTaskMismatch("fine-tuning needs labels".into()))?;
    check_task_labels(labels, task)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5EED));
    let mut model = attach_downstream_head(enc, task, &mut rng);
    let layout = model.config.model_layout(task);
    let mut adam = Adam::new(layout.param_count(), cfg.learning_rate, cfg.weight_decay);
    let weights = match task {
        Task::Classification => Some(class_weights(labels)?),
        Task::Regression => None,
    };
    let m = d.n_subjects();
    let mut order: Vec<usize> = (0..m).collect();
    let mut trace = FinetuneTrace {
        train_loss: Vec::new(),
        val_metric: Vec::new(),
        selected_epoch: cfg.finetune_epochs - 1,
    };
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    for epoch in 0..cfg.finetune_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let inputs: Vec<(Array2<f64>, f64)> = chunk
                .iter()
                .map(|&i| (d.maps()[i].values().clone(), labels[i]))
                .collect();
            let mut g = Graph::new();
            let binding = ParamBinding::bind(&mut g, &layout, &model.params);
            let loss_node =
                finetune_batch_loss(&mut g, &binding, &model.config, task, &inputs, weights)?;
            let loss = g.scalar(loss_node);
            if !loss.is_finite() {
                return Err(Error::DivergedLoss { epoch });
            }
            epoch_loss += loss;
            batches += 1;
            let grads = g.backward(loss_node);
            let flat = binding.flat_grad(&layout, &grads);
            adam.step(&mut model.params, &flat);
        }
        trace.train_loss.push(epoch_loss / batches as f64);
        if let Some(val_d) = val {
            let val_labels = val_d
                .labels()
                .ok_or_else(|| Error::LabelTaskMismatch("validation set needs labels".into()))?;
            let preds = predict_dataset(&model, val_d)?;
            let metric = match task {
                Task::Classification => {
                    match evaluate(&preds, val_labels, Task::Classification) {
                        Ok(RunMetrics::Classification { ba, .. }) => ba,
                        // single-class validation folds fall back to accuracy
                        _ => {
                            let correct = preds
                                .iter()
                                .zip(val_labels)
                                .filter(|(p, l)| (**p >= 0.5) == (**l == 1.0))
                                .count();
                            correct as f64 / preds.len() as f64
                        }
                    }
                }
                Task::Regression => {
                    let mae = preds
                        .iter()
                        .zip(val_labels)
                        .map(|(p, l)| (p - l).abs())
                        .sum::<f64>()
                        / preds.len() as f64;
                    -mae // maximize
                }
            };
            trace.val_metric.push(metric);
            // ties go to the later (more converged) epoch
            if best.as_ref().is_none_or(|(b, _, _)| metric >= *b) {
                best = Some((metric, model.params.clone(), epoch));
            }
        }
    }
    if let Some((_, params, epoch)) = best {
        model.params = params;
        trace.selected_epoch = epoch;
    }
    Ok((model, trace))
}

/// [`finetune_with_validation`] without a validation set: trains for the
/// configured epochs and returns the final model.
pub fn finetune(
    enc: &EncoderState,
    d: &Dataset,
    task: Task,
    cfg: &TrainConfig,
) -> Result<(ModelState, FinetuneTrace)> {
    finetune_with_validation(enc, d, None, task, cfg)
}

/// Predictions for every subject of a dataset.
pub fn predict_dataset(model: &ModelState, d: &Dataset) -> Result<Vec<f64>> {
    d.maps()
        .iter()
        .map(|m| predict(model, m.values()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureMap;
    use crate::sim;

    fn toy_encoder() -> EncoderConfig {
        EncoderConfig {
            n_blocks: 1,
            n_heads: 2,
            d_model: 8,
            d_embed: 4,
            d_recon_hidden: 8,
            use_position_encoding: false,
        }
    }

    fn toy_train(epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 4,
            learning_rate: 0.005,
            weight_decay: 0.0005,
            k_max: 2,
            big_k: 2,
            seed,
            finetune_epochs: epochs,
            ..Default::default()
        }
    }

    fn sim_dataset(n: usize, seed: u64) -> Dataset {
        let spec = sim::default_spec(4, 8);
        let cfg = sim::SimConfig {
            n_samples: n,
            theta: 0.01,
            separated_rois: vec![1],
            noise_sd: 1.0,
            seed,
        };
        sim::generate(&spec, &cfg).unwrap()
    }

    #[test]
    fn pretraining_reduces_the_loss() {
        let d = sim_dataset(24, 5);
        let (norm, _) = crate::data::zscore_normalize(&d).unwrap();
        let (_, history) = pretrain(&norm, &toy_encoder(), &toy_train(20, 3)).unwrap();
        // median over the last 10% of epochs below the median over the first 10%
        let head = 2.max(history.len() / 10);
        let early = crate::pipeline::median(&history[..head]);
        let late = crate::pipeline::median(&history[history.len() - head..]);
        assert!(late < early, "late {late} vs early {early}");
    }

    #[test]
    fn lambda_zero_changes_the_trajectory() {
        let d = sim_dataset(12, 6);
        let (norm, _) = crate::data::zscore_normalize(&d).unwrap();
        let cfg = toy_train(2, 9);
        let mut cfg0 = cfg.clone();
        cfg0.loss_weights.lambda = 0.0;
        let (s1, _) = pretrain(&norm, &toy_encoder(), &cfg).unwrap();
        let (s2, _) = pretrain(&norm, &toy_encoder(), &cfg0).unwrap();
        assert!(s1
            .params
            .iter()
            .zip(&s2.params)
            .any(|(a, b)| (a - b).abs() > 1e-9));
    }

    #[test]
    fn recon_only_equals_lambda_zero() {
        let d = sim_dataset(12, 7);
        let (norm, _) = crate::data::zscore_normalize(&d).unwrap();
        let mut zero = toy_train(2, 11);
        zero.loss_weights.lambda = 0.0;
        let mut recon_only = toy_train(2, 11);
        recon_only.mode = TaskMode::ReconOnly;
        let (s1, h1) = pretrain(&norm, &toy_encoder(), &zero).unwrap();
        let (s2, h2) = pretrain(&norm, &toy_encoder(), &recon_only).unwrap();
        for (a, b) in s1.params.iter().zip(&s2.params) {
            assert!((a - b).abs() <= 1e-12);
        }
        for (a, b) in h1.iter().zip(&h2) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn masked_rows_target_trains_and_differs_from_full() {
        let d = sim_dataset(12, 31);
        let (norm, _) = crate::data::zscore_normalize(&d).unwrap();
        let full = toy_train(2, 17);
        let masked = TrainConfig {
            recon_target: ReconTarget::MaskedRows,
            ..toy_train(2, 17)
        };
        let (s1, _) = pretrain(&norm, &toy_encoder(), &full).unwrap();
        let (s2, _) = pretrain(&norm, &toy_encoder(), &masked).unwrap();
        assert!(s1
            .params
            .iter()
            .zip(&s2.params)
            .any(|(a, b)| (a - b).abs() > 1e-9));
    }

    #[test]
    fn batch_size_one_is_rejected() {
        let cfg = TrainConfig {
            batch_size: 1,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn pretraining_is_deterministic() {
        let d = sim_dataset(10, 8);
        let (norm, _) = crate::data::zscore_normalize(&d).unwrap();
        let (s1, _) = pretrain(&norm, &toy_encoder(), &toy_train(2, 21)).unwrap();
        let (s2, _) = pretrain(&norm, &toy_encoder(), &toy_train(2, 21)).unwrap();
        assert_eq!(s1.params, s2.params);
    }

    #[test]
    fn class_weights_are_inverse_frequency() {
        let labels: Vec<f64> = std::iter::repeat_n(0.0, 90)
            .chain(std::iter::repeat_n(1.0, 10))
            .collect();
        let (w0, w1) = class_weights(&labels).unwrap();
        assert!((w1 / w0 - 9.0).abs() < 1e-12);
    }

    #[test]
    fn finetune_separable_toy_reaches_perfect_training_ba() {
        // two clearly separated clusters in feature space
        let n = 16;
        let maps: Vec<FeatureMap> = (0..n)
            .map(|i| {
                let label_shift = if i % 2 == 0 { -2.0 } else { 2.0 };
                let values = Array2::from_shape_fn((3, 8), |(r, c)| {
                    label_shift + 0.01 * ((i + r * 8 + c) % 7) as f64
                });
                FeatureMap::new(
                    format!("s{i}"),
                    values,
                    (0..3).map(|r| format!("r{r}")).collect(),
                    (0..8).map(|c| format!("f{c}")).collect(),
                )
                .unwrap()
            })
            .collect();
        let labels: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let d = Dataset::new(maps, Some(labels.clone()), None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let enc = init_encoder(&toy_encoder(), &mut rng).unwrap();
        let cfg = TrainConfig {
            finetune_epochs: 200,
            ..toy_train(200, 4)
        };
        let (model, _) = finetune(&enc, &d, Task::Classification, &cfg).unwrap();
        let preds = predict_dataset(&model, &d).unwrap();
        if let RunMetrics::Classification { ba, .. } =
            evaluate(&preds, &labels, Task::Classification).unwrap()
        {
            assert_eq!(ba, 1.0, "training BA should reach 1.0");
        }
    }

    #[test]
    fn finetune_updates_encoder_parameters() {
        let d = sim_dataset(8, 9);
        let (norm, _) = crate::data::zscore_normalize(&d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let enc = init_encoder(&toy_encoder(), &mut rng).unwrap();
        let cfg = TrainConfig {
            finetune_epochs: 1,
            ..toy_train(1, 5)
        };
        let (model, _) = finetune(&enc, &norm, Task::Classification, &cfg).unwrap();
        let enc_layout = enc.config.encoder_layout();
        let model_layout = model.config.model_layout(Task::Classification);
        let before = enc_layout.extract(&enc.params, "blk0_wq");
        let after = model_layout.extract(&model.params, "blk0_wq");
        assert!(before.iter().zip(after.iter()).any(|(a, b)| (a - b).abs() > 1e-12));
    }

    #[test]
    fn regression_on_constant_targets_converges() {
        let d = sim_dataset(8, 10);
        let (norm, _) = crate::data::zscore_normalize(&d).unwrap();
        let maps = norm.maps().to_vec();
        let constant = Dataset::new(maps, Some(vec![1.5; 8]), None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let enc = init_encoder(&toy_encoder(), &mut rng).unwrap();
        let cfg = TrainConfig {
            finetune_epochs: 150,
            ..toy_train(150, 6)
        };
        let (model, _) = finetune(&enc, &constant, Task::Regression, &cfg).unwrap();
        let preds = predict_dataset(&model, &constant).unwrap();
        let mae: f64 = preds.iter().map(|p| (p - 1.5).abs()).sum::<f64>() / 8.0;
        assert!(mae < 0.05, "mae {mae}");
    }

    #[test]
    fn label_task_mismatch_is_rejected() {
        let d = sim_dataset(8, 11);
        let maps = d.maps().to_vec();
        let scores = Dataset::new(maps, Some(vec![0.3; 8]), None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let enc = init_encoder(&toy_encoder(), &mut rng).unwrap();
        let err = finetune(&enc, &scores, Task::Classification, &toy_train(1, 7));
        assert!(matches!(err, Err(Error::LabelTaskMismatch(_))));
    }
}
