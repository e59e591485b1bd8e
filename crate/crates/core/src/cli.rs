//! Command-line entry point: simulate / pretrain / finetune / evaluate /
//! ablate / verify, each writing a run manifest plus results files.
//!
//! Run configs are flat `key=value` text files; results files carry no
//! timestamps so identical inputs produce byte-identical outputs (the
//! timestamp lives only in the manifest).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bregman;
use crate::data::{format_f64, load_dataset, save_dataset, Dataset};
use crate::error::{Error, Result};
use crate::losses;
use crate::nn::{load_encoder, save_encoder, save_model, EncoderConfig, Task};
use crate::pipeline::ablate::{ablate, Sweep};
use crate::pipeline::cv::{nested_cv, CvReport};
use crate::pipeline::{
    finetune, median, predict_dataset, pretrain, ReconTarget, RunMetrics, TaskMode, TrainConfig,
};
use crate::sim;

#[derive(Parser)]
#[command(
    name = "radiomic-ssl",
    about = "Collaborative self-supervised learning for radiomic feature maps",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset with controllable class separation
    Simulate(SimulateArgs),
    /// Pretrain the encoder on the collaborative pretext tasks
    Pretrain(RunArgs),
    /// Fine-tune a pretrained encoder on labeled data
    Finetune(RunArgs),
    /// Nested cross-validation of the full pipeline
    Evaluate(RunArgs),
    /// Sweep one parameter grid with a full train/evaluate cycle per point
    Ablate(AblateArgs),
    /// Run the algebraic divergence and loss property suites
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of samples (even; labels are split 50/50)
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Class-separation difficulty; small theta = easy task
    #[arg(long, default_value_t = 0.01)]
    theta: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// How many ROIs receive separation noise
    #[arg(long = "separated-rois", default_value_t = 5)]
    separated_rois: usize,
    #[arg(long = "noise-sd", default_value_t = 1.0)]
    noise_sd: f64,
    #[arg(long = "n-roi", default_value_t = 87)]
    n_roi: usize,
    #[arg(long = "n-feat", default_value_t = 100)]
    n_feat: usize,
    /// Estimate target moments from this dataset manifest instead of the
    /// built-in template
    #[arg(long = "from-data")]
    from_data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Flat key=value run config
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Grid, e.g. `beta=0,0.2,0.5,0.7,1.0`, `lambda=0,0.5,1,1.5,2`,
    /// `k_max=10,20,30`, `label_fraction=0.1,0.2,0.4`,
    /// `task_mode=both,recon_only,disc_only`
    #[arg(long)]
    sweep: String,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 99)]
    seed: u64,
    /// Also write the report to <out>/verify.txt
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parsed run configuration.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub datasets: Vec<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub task: Task,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub folds: usize,
    pub repetitions: usize,
    /// d_model tracks the data unless the config pins it.
    pub d_model_pinned: bool,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            checkpoint: None,
            task: Task::Classification,
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            folds: 10,
            repetitions: 5,
            d_model_pinned: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        Error::InvalidArgument(format!("config key {key}: cannot parse {value:?}"))
    })
}

/// Parse a flat key=value config file. `#` starts a comment.
pub fn parse_config(path: &Path) -> Result<RunSpec> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut spec = RunSpec::default();
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("config line {line:?} is not key=value"))
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "dataset" => spec.datasets.push(base.join(value)),
            "datasets" => {
                for part in value.split(';').filter(|p| !p.trim().is_empty()) {
                    spec.datasets.push(base.join(part.trim()));
                }
            }
            "checkpoint" => spec.checkpoint = Some(base.join(value)),
            "task" => spec.task = Task::parse(value)?,
            "n_blocks" => spec.encoder.n_blocks = parse_num(key, value)?,
            "n_heads" => spec.encoder.n_heads = parse_num(key, value)?,
            "d_model" => {
                spec.encoder.d_model = parse_num(key, value)?;
                spec.d_model_pinned = true;
            }
            "d_embed" => spec.encoder.d_embed = parse_num(key, value)?,
            "d_recon_hidden" => spec.encoder.d_recon_hidden = parse_num(key, value)?,
            "use_position_encoding" => {
                spec.encoder.use_position_encoding = value == "true";
            }
            "epochs" => spec.train.epochs = parse_num(key, value)?,
            "finetune_epochs" => spec.train.finetune_epochs = parse_num(key, value)?,
            "batch_size" => spec.train.batch_size = parse_num(key, value)?,
            "learning_rate" => spec.train.learning_rate = parse_num(key, value)?,
            "weight_decay" => spec.train.weight_decay = parse_num(key, value)?,
            "beta" => spec.train.loss_weights.beta = parse_num(key, value)?,
            "lambda" => spec.train.loss_weights.lambda = parse_num(key, value)?,
            "tau" => spec.train.loss_weights.tau = parse_num(key, value)?,
            "k_max" => spec.train.k_max = parse_num(key, value)?,
            "big_k" | "K" => spec.train.big_k = parse_num(key, value)?,
            "seed" => spec.train.seed = parse_num(key, value)?,
            "task_mode" => spec.train.mode = TaskMode::parse(value)?,
            "recon_target" => {
                spec.train.recon_target = match value {
                    "full" => ReconTarget::Full,
                    "masked_rows" => ReconTarget::MaskedRows,
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "unknown recon_target {other:?}"
                        )))
                    }
                }
            }
            "label_fraction" => spec.train.label_fraction = parse_num(key, value)?,
            "folds" => spec.folds = parse_num(key, value)?,
            "repetitions" => spec.repetitions = parse_num(key, value)?,
            other => {
                return Err(Error::InvalidArgument(format!("unknown config key {other:?}")));
            }
        }
    }
    Ok(spec)
}

/// FNV-1a hash of the canonical config text, for the reproducibility stamp.
pub fn config_hash(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

struct RunManifest {
    subcommand: String,
    config_path: Option<PathBuf>,
    config_hash: u64,
    seed: u64,
    emitted: Vec<(String, PathBuf)>,
}

impl RunManifest {
    fn new(subcommand: &str, config_path: Option<&Path>, seed: u64) -> Result<Self> {
        let config_hash = match config_path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| Error::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                config_hash(&text)
            }
            None => 0,
        };
        Ok(Self {
            subcommand: subcommand.to_string(),
            config_path: config_path.map(Path::to_path_buf),
            config_hash,
            seed,
            emitted: Vec::new(),
        })
    }

    fn emit(&mut self, role: &str, path: PathBuf) {
        self.emitted.push((role.to_string(), path));
    }

    fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let mut s = String::new();
        let _ = writeln!(s, "subcommand={}", self.subcommand);
        if let Some(p) = &self.config_path {
            let _ = writeln!(s, "config_path={}", p.display());
        }
        let _ = writeln!(s, "config_hash={:016x}", self.config_hash);
        let _ = writeln!(s, "seed={}", self.seed);
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let _ = writeln!(s, "timestamp_unix={timestamp}");
        for (role, path) in &self.emitted {
            let _ = writeln!(s, "emitted={role}:{}", path.display());
        }
        let path = out_dir.join("manifest.txt");
        std::fs::write(&path, s).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(path)
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load_first_dataset(spec: &RunSpec) -> Result<Dataset> {
    let path = spec.datasets.first().ok_or_else(|| {
        Error::InvalidArgument("config needs a `dataset = <manifest>` entry".into())
    })?;
    load_dataset(path)
}

fn fit_encoder_to_data(spec: &mut RunSpec, d: &Dataset) -> Result<()> {
    if !spec.d_model_pinned {
        spec.encoder.d_model = d.n_feat();
    } else if spec.encoder.d_model != d.n_feat() {
        return Err(Error::InvalidArgument(format!(
            "config pins d_model={} but the dataset has {} features",
            spec.encoder.d_model,
            d.n_feat()
        )));
    }
    Ok(())
}

fn cv_metrics_csv(report: &CvReport) -> String {
    let names = RunMetrics::names(report.report.task);
    let mut s = String::from("repetition,fold");
    for n in names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for fold in &report.folds {
        let _ = write!(s, "{},{}", fold.repetition, fold.fold);
        for n in names {
            let _ = write!(s, ",{}", format_f64(fold.metrics.get(n)));
        }
        s.push('\n');
    }
    for (name, mean, sd) in report.report.summary() {
        let _ = writeln!(s, "summary,{name},{},{}", format_f64(mean), format_f64(sd));
    }
    s
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let spec = match &args.from_data {
        Some(path) => {
            let d = load_dataset(path)?;
            sim::estimate_moments(&d)?.spec
        }
        None => sim::default_spec(args.n_roi, args.n_feat),
    };
    if args.separated_rois == 0 || args.separated_rois > spec.n_roi {
        return Err(Error::InvalidArgument(format!(
            "--separated-rois must be in [1, {}]",
            spec.n_roi
        )));
    }
    let cfg = sim::SimConfig {
        n_samples: args.n,
        theta: args.theta,
        separated_rois: (0..args.separated_rois).collect(),
        noise_sd: args.noise_sd,
        seed: args.seed,
    };
    let dataset = sim::generate(&spec, &cfg)?;
    let manifest_path = save_dataset(&args.out, &dataset)?;
    let mut manifest = RunManifest::new("simulate", None, args.seed)?;
    manifest.emit("dataset_manifest", manifest_path);
    manifest.write(&args.out)?;
    println!(
        "simulated {} subjects ({} x {}) into {}",
        dataset.n_subjects(),
        dataset.n_roi(),
        dataset.n_feat(),
        args.out.display()
    );
    Ok(())
}

fn cmd_pretrain(args: &RunArgs) -> Result<()> {
    let mut spec = parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        spec.train.seed = seed;
    }
    ensure_dir(&args.out)?;
    let d = load_first_dataset(&spec)?;
    fit_encoder_to_data(&mut spec, &d)?;
    let (normalized, _) = crate::data::zscore_normalize(&d)?;
    let (state, history) = pretrain(&normalized, &spec.encoder, &spec.train)?;
    let ckpt = args.out.join("encoder.ckpt");
    save_encoder(&ckpt, &state)?;
    let mut hist = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        let _ = writeln!(hist, "{i},{}", format_f64(*l));
    }
    let hist_path = args.out.join("loss_history.csv");
    write_file(&hist_path, &hist)?;
    let mut manifest = RunManifest::new("pretrain", Some(&args.config), spec.train.seed)?;
    manifest.emit("encoder_checkpoint", ckpt);
    manifest.emit("loss_history", hist_path);
    manifest.write(&args.out)?;
    println!(
        "pretrained {} epochs; final loss {:.6}",
        history.len(),
        history.last().unwrap_or(&f64::NAN)
    );
    Ok(())
}

fn cmd_finetune(args: &RunArgs) -> Result<()> {
    let mut spec = parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        spec.train.seed = seed;
    }
    ensure_dir(&args.out)?;
    let d = load_first_dataset(&spec)?;
    fit_encoder_to_data(&mut spec, &d)?;
    let ckpt_path = spec.checkpoint.clone().ok_or_else(|| {
        Error::InvalidArgument("finetune needs a `checkpoint = <path>` config entry".into())
    })?;
    let enc = load_encoder(&ckpt_path)?;
    if enc.config != spec.encoder {
        return Err(Error::InvalidArgument(
            "checkpoint config differs from run config".into(),
        ));
    }
    let (normalized, _) = crate::data::zscore_normalize(&d)?;
    let (model, trace) = finetune(&enc, &normalized, spec.task, &spec.train)?;
    let model_path = args.out.join("model.ckpt");
    save_model(&model_path, &model)?;
    let preds = predict_dataset(&model, &normalized)?;
    let labels = normalized.labels().unwrap_or(&[]);
    let mut s = String::from("subject_id,label,prediction\n");
    for (i, map) in normalized.maps().iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{}",
            map.subject_id(),
            format_f64(labels[i]),
            format_f64(preds[i])
        );
    }
    let preds_path = args.out.join("predictions.csv");
    write_file(&preds_path, &s)?;
    let mut manifest = RunManifest::new("finetune", Some(&args.config), spec.train.seed)?;
    manifest.emit("model_checkpoint", model_path);
    manifest.emit("predictions", preds_path);
    manifest.write(&args.out)?;
    println!(
        "finetuned {} epochs; final training loss {:.6}",
        trace.train_loss.len(),
        trace.train_loss.last().unwrap_or(&f64::NAN)
    );
    Ok(())
}

fn cmd_evaluate(args: &RunArgs) -> Result<()> {
    let mut spec = parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        spec.train.seed = seed;
    }
    ensure_dir(&args.out)?;
    if spec.datasets.is_empty() {
        return Err(Error::InvalidArgument(
            "config needs at least one `dataset = <manifest>` entry".into(),
        ));
    }
    let mut manifest = RunManifest::new("evaluate", Some(&args.config), spec.train.seed)?;
    let mut curve = String::from("n_subjects,auc_mean,auc_sd,ba_mean\n");
    for (i, path) in spec.datasets.clone().iter().enumerate() {
        let d = load_dataset(path)?;
        fit_encoder_to_data(&mut spec, &d)?;
        let report = nested_cv(
            &d,
            &spec.encoder,
            &spec.train,
            spec.task,
            spec.folds,
            spec.repetitions,
        )?;
        let csv = cv_metrics_csv(&report);
        let metrics_path = args.out.join(format!("metrics_{i}.csv"));
        write_file(&metrics_path, &csv)?;
        manifest.emit("metrics", metrics_path);
        if spec.task == Task::Classification {
            let _ = writeln!(
                curve,
                "{},{},{},{}",
                d.n_subjects(),
                format_f64(report.report.mean("auc")),
                format_f64(report.report.sd("auc")),
                format_f64(report.report.mean("ba"))
            );
        }
        for (name, mean, sd) in report.report.summary() {
            println!("dataset {i}: {name} = {mean:.4} (sd {sd:.4})");
        }
    }
    if spec.task == Task::Classification {
        let curve_path = args.out.join("plot_auc_vs_n.csv");
        write_file(&curve_path, &curve)?;
        manifest.emit("plot_auc_vs_n", curve_path);
    }
    manifest.write(&args.out)?;
    Ok(())
}

fn parse_sweep(text: &str) -> Result<Sweep> {
    let (name, grid) = text.split_once('=').ok_or_else(|| {
        Error::InvalidArgument(format!("sweep {text:?} must look like name=v1,v2,..."))
    })?;
    let values: Vec<&str> = grid.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(Error::InvalidArgument("empty sweep grid".into()));
    }
    let floats = || -> Result<Vec<f64>> {
        values
            .iter()
            .map(|v| parse_num::<f64>(name, v))
            .collect::<Result<Vec<_>>>()
    };
    match name.trim() {
        "beta" => Ok(Sweep::Beta(floats()?)),
        "lambda" => Ok(Sweep::Lambda(floats()?)),
        "k_max" | "k" => Ok(Sweep::KMax(
            values
                .iter()
                .map(|v| parse_num::<usize>(name, v))
                .collect::<Result<Vec<_>>>()?,
        )),
        "label_fraction" => Ok(Sweep::LabelFraction(floats()?)),
        "task_mode" => Ok(Sweep::TaskMode(
            values
                .iter()
                .map(|v| TaskMode::parse(v))
                .collect::<Result<Vec<_>>>()?,
        )),
        other => Err(Error::InvalidArgument(format!("unknown sweep parameter {other:?}"))),
    }
}

fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let mut spec = parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        spec.train.seed = seed;
    }
    ensure_dir(&args.out)?;
    let sweep = parse_sweep(&args.sweep)?;
    let d = load_first_dataset(&spec)?;
    fit_encoder_to_data(&mut spec, &d)?;
    let rows = ablate(
        &d,
        &spec.encoder,
        &spec.train,
        spec.task,
        &sweep,
        spec.folds,
        spec.repetitions,
    )?;
    let names = RunMetrics::names(spec.task);
    let mut table = String::from("param,value");
    for n in names {
        let _ = write!(table, ",{n}_mean,{n}_sd");
    }
    table.push('\n');
    let mut plot = String::from("x,auc_median\n");
    for row in &rows {
        let _ = write!(table, "{},{}", row.param, row.value);
        for n in names {
            let _ = write!(
                table,
                ",{},{}",
                format_f64(row.result.report.mean(n)),
                format_f64(row.result.report.sd(n))
            );
        }
        table.push('\n');
        if spec.task == Task::Classification {
            let aucs: Vec<f64> = row.result.report.runs.iter().map(|r| r.get("auc")).collect();
            let _ = writeln!(plot, "{},{}", row.value, format_f64(median(&aucs)));
        }
        println!("{} = {}:", row.param, row.value);
        for (name, mean, sd) in row.result.report.summary() {
            println!("  {name} = {mean:.4} (sd {sd:.4})");
        }
    }
    let table_path = args.out.join("ablation.csv");
    write_file(&table_path, &table)?;
    let mut manifest = RunManifest::new("ablate", Some(&args.config), spec.train.seed)?;
    manifest.emit("ablation_table", table_path);
    if spec.task == Task::Classification {
        let plot_path = args.out.join(match sweep {
            Sweep::LabelFraction(_) => "plot_label_fraction.csv",
            _ => "plot_sweep.csv",
        });
        write_file(&plot_path, &plot)?;
        manifest.emit("plot_data", plot_path);
    }
    manifest.write(&args.out)?;
    Ok(())
}

/// Run the algebraic verification suites; returns (report text, all passed).
pub fn verification_report(trials: usize, seed: u64) -> (String, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = Vec::new();
    let mut all_pass = true;
    let mut check = |name: &str, pass: bool, detail: String| {
        lines.push(format!("{}: {} ({detail})", name, if pass { "PASS" } else { "FAIL" }));
        all_pass &= pass;
    };

    let r7 = bregman::verify_eq7(trials, &mut rng);
    check(
        "squared-norm reduction",
        r7.passed,
        format!("max deviation {:.3e}", r7.max_deviation),
    );
    let r8 = bregman::verify_eq8(trials, &mut rng);
    check(
        "negative-entropy reduction",
        r8.passed,
        format!("max deviation {:.3e}", r8.max_deviation),
    );

    // JS bounds and symmetry on random simplex pairs
    let mut max_js: f64 = 0.0;
    let mut js_ok = true;
    for _ in 0..trials {
        let p = losses::ProbVector::new(bregman::random_simplex(20, &mut rng)).expect("simplex");
        let q = losses::ProbVector::new(bregman::random_simplex(20, &mut rng)).expect("simplex");
        let js = losses::js_div(&p, &q);
        js_ok &= (0.0..=std::f64::consts::LN_2 + 1e-12).contains(&js);
        js_ok &= js == losses::js_div(&q, &p);
        max_js = max_js.max(js);
    }
    check(
        "JS divergence bounds [0, ln 2] and symmetry",
        js_ok,
        format!("max value {max_js:.6}"),
    );

    // KL non-negativity with equality iff p = q
    let mut kl_ok = true;
    for _ in 0..trials {
        let p = losses::ProbVector::new(bregman::random_simplex(10, &mut rng)).expect("simplex");
        let q = losses::ProbVector::new(bregman::random_simplex(10, &mut rng)).expect("simplex");
        let kl = losses::kl_div(&p, &q).expect("interior");
        kl_ok &= kl >= 0.0;
        kl_ok &= losses::kl_div(&p, &p).expect("identity").abs() <= 1e-12;
    }
    check("KL non-negativity", kl_ok, "equality at identity".into());

    // Taylor surrogate: rank agreement at small arguments
    let tau = 1.0;
    let batch: Vec<(String, crate::nn::ViewEmbedding)> = (0..2)
        .flat_map(|subject| {
            (0..2).map(move |view| (subject, view)).collect::<Vec<_>>()
        })
        .enumerate()
        .map(|(i, (subject, _view))| {
            let mut raw = [0.0; 8];
            raw[i] = 1.0;
            raw[7] = (0.02 * (1.0 + 0.3 * i as f64)).sqrt();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            let unit: Vec<f64> = raw.iter().map(|v| v / norm).collect();
            (
                format!("s{subject}"),
                crate::nn::ViewEmbedding {
                    per_roi: ndarray::Array2::from_shape_vec((2, 4), unit.clone()).expect("shape"),
                    flat_normalized: unit,
                },
            )
        })
        .collect();
    match bregman::taylor_gap(&batch, tau) {
        Ok(report) => check(
            "Taylor surrogate rank agreement",
            report.rank_agreement && report.max_relative_gap <= 0.05,
            format!(
                "max relative gap {:.4}, max |argument| {:.4}",
                report.max_relative_gap, report.max_abs_argument
            ),
        ),
        Err(e) => check("Taylor surrogate rank agreement", false, e.to_string()),
    }

    (lines.join("\n") + "\n", all_pass)
}

fn cmd_verify(args: &VerifyArgs) -> Result<()> {
    let (report, all_pass) = verification_report(args.trials, args.seed);
    print!("{report}");
    if let Some(out) = &args.out {
        ensure_dir(out)?;
        let path = out.join("verify.txt");
        write_file(&path, &report)?;
        let mut manifest = RunManifest::new("verify", None, args.seed)?;
        manifest.emit("verify_report", path);
        manifest.write(out)?;
    }
    if all_pass {
        Ok(())
    } else {
        Err(Error::InvalidArgument("verification suite failed".into()))
    }
}

/// Dispatch a full argument vector (including the binary name). Returns the
/// process exit status.
pub fn run(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders --help/--version through the error path too
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Pretrain(args) => cmd_pretrain(args),
        Command::Finetune(args) => cmd_finetune(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
