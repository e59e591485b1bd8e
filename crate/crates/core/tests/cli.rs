//! End-to-end CLI tests driven through the library dispatch.

use std::path::Path;

use radiomic_ssl::cli::run;
use radiomic_ssl::data::load_dataset;

fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["radiomic-ssl".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    run(&argv)
}

fn write_config(path: &Path, dataset: &Path, extra: &str) {
    let body = format!(
        "dataset = {}\n\
         task = classification\n\
         n_blocks = 1\n\
         n_heads = 2\n\
         d_embed = 4\n\
         d_recon_hidden = 8\n\
         epochs = 3\n\
         finetune_epochs = 5\n\
         batch_size = 4\n\
         k_max = 2\n\
         big_k = 2\n\
         seed = 5\n\
         folds = 4\n\
         repetitions = 1\n\
         {extra}",
        dataset.display()
    );
    std::fs::write(path, body).unwrap();
}

fn simulate_into(dir: &Path, n: usize) {
    let status = cli(&[
        "simulate",
        "--n",
        &n.to_string(),
        "--theta",
        "0.01",
        "--seed",
        "7",
        "--separated-rois",
        "1",
        "--noise-sd",
        "1.0",
        "--n-roi",
        "5",
        "--n-feat",
        "6",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(status, 0);
}

#[test]
fn simulate_writes_a_loadable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), 20);
    let manifest = dir.path().join("manifest.csv");
    assert!(manifest.exists());
    assert!(dir.path().join("manifest.txt").exists(), "run manifest missing");
    let d = load_dataset(&manifest).unwrap();
    assert_eq!(d.n_subjects(), 20);
    assert_eq!(d.n_roi(), 5);
    assert_eq!(d.n_feat(), 6);
    let ones = d.labels().unwrap().iter().filter(|&&l| l == 1.0).count();
    assert_eq!(ones, 10);
}

#[test]
fn simulate_from_data_estimates_moments() {
    let src = tempfile::tempdir().unwrap();
    simulate_into(src.path(), 30);
    let dst = tempfile::tempdir().unwrap();
    let status = cli(&[
        "simulate",
        "--n",
        "10",
        "--theta",
        "1.0",
        "--seed",
        "3",
        "--separated-rois",
        "1",
        "--noise-sd",
        "0.0",
        "--from-data",
        src.path().join("manifest.csv").to_str().unwrap(),
        "--out",
        dst.path().to_str().unwrap(),
    ]);
    assert_eq!(status, 0);
    let d = load_dataset(dst.path().join("manifest.csv")).unwrap();
    assert_eq!(d.n_subjects(), 10);
    // estimated spec carries the source shape
    assert_eq!(d.n_roi(), 5);
    assert_eq!(d.n_feat(), 6);
}

#[test]
fn verify_passes_on_a_fresh_checkout() {
    let dir = tempfile::tempdir().unwrap();
    let status = cli(&["verify", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(status, 0);
    let report = std::fs::read_to_string(dir.path().join("verify.txt")).unwrap();
    assert!(report.contains("PASS"));
    assert!(!report.contains("FAIL"));
}

#[test]
fn pretrain_then_finetune_round_trip() {
    let data_dir = tempfile::tempdir().unwrap();
    simulate_into(data_dir.path(), 16);
    let manifest = data_dir.path().join("manifest.csv");

    let run_dir = tempfile::tempdir().unwrap();
    let config = run_dir.path().join("run.cfg");
    write_config(&config, &manifest, "");
    let pretrain_out = run_dir.path().join("pretrain");
    let status = cli(&[
        "pretrain",
        "--config",
        config.to_str().unwrap(),
        "--out",
        pretrain_out.to_str().unwrap(),
    ]);
    assert_eq!(status, 0);
    let ckpt = pretrain_out.join("encoder.ckpt");
    assert!(ckpt.exists());
    assert!(pretrain_out.join("loss_history.csv").exists());

    let ft_config = run_dir.path().join("ft.cfg");
    write_config(
        &ft_config,
        &manifest,
        &format!("checkpoint = {}\n", ckpt.display()),
    );
    let ft_out = run_dir.path().join("finetune");
    let status = cli(&[
        "finetune",
        "--config",
        ft_config.to_str().unwrap(),
        "--out",
        ft_out.to_str().unwrap(),
    ]);
    assert_eq!(status, 0);
    assert!(ft_out.join("model.ckpt").exists());
    assert!(ft_out.join("predictions.csv").exists());
}

#[test]
fn evaluate_emits_metrics_and_plot_data_byte_identically() {
    let data_dir = tempfile::tempdir().unwrap();
    simulate_into(data_dir.path(), 20);
    let manifest = data_dir.path().join("manifest.csv");
    let run_dir = tempfile::tempdir().unwrap();
    let config = run_dir.path().join("run.cfg");
    write_config(&config, &manifest, "");

    let out1 = run_dir.path().join("eval1");
    let out2 = run_dir.path().join("eval2");
    for out in [&out1, &out2] {
        let status = cli(&[
            "evaluate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(status, 0);
    }
    for file in ["metrics_0.csv", "plot_auc_vs_n.csv"] {
        let a = std::fs::read(out1.join(file)).unwrap();
        let b = std::fs::read(out2.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    let metrics = std::fs::read_to_string(out1.join("metrics_0.csv")).unwrap();
    assert!(metrics.starts_with("repetition,fold,ba,sen,spe,auc"));
    assert!(metrics.contains("summary,auc"));
}

#[test]
fn ablate_runs_a_task_mode_sweep() {
    let data_dir = tempfile::tempdir().unwrap();
    simulate_into(data_dir.path(), 16);
    let manifest = data_dir.path().join("manifest.csv");
    let run_dir = tempfile::tempdir().unwrap();
    let config = run_dir.path().join("run.cfg");
    write_config(&config, &manifest, "");
    let out = run_dir.path().join("ablate");
    let status = cli(&[
        "ablate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--sweep",
        "task_mode=both,recon_only",
    ]);
    assert_eq!(status, 0);
    let table = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
    assert!(table.contains("task_mode,both"));
    assert!(table.contains("task_mode,recon_only"));
    assert!(out.join("plot_sweep.csv").exists());
}

#[test]
fn label_fraction_sweep_emits_fig6_style_plot() {
    let data_dir = tempfile::tempdir().unwrap();
    simulate_into(data_dir.path(), 24);
    let manifest = data_dir.path().join("manifest.csv");
    let run_dir = tempfile::tempdir().unwrap();
    let config = run_dir.path().join("run.cfg");
    write_config(&config, &manifest, "");
    let out = run_dir.path().join("fractions");
    let status = cli(&[
        "ablate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--sweep",
        "label_fraction=0.5,1.0",
    ]);
    assert_eq!(status, 0);
    let plot = std::fs::read_to_string(out.join("plot_label_fraction.csv")).unwrap();
    assert!(plot.starts_with("x,auc_median"));
    assert!(plot.lines().count() >= 3);
}

#[test]
fn bad_invocations_exit_nonzero_with_diagnostics() {
    assert_ne!(cli(&["unknown-subcommand"]), 0);
    // missing dataset path in config
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("empty.cfg");
    std::fs::write(&config, "task = classification\n").unwrap();
    let status = cli(&[
        "pretrain",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(status, 1);
    // config referencing a missing file
    let config2 = dir.path().join("missing.cfg");
    std::fs::write(&config2, "dataset = does_not_exist/manifest.csv\n").unwrap();
    let status = cli(&[
        "pretrain",
        "--config",
        config2.to_str().unwrap(),
        "--out",
        dir.path().join("out2").to_str().unwrap(),
    ]);
    assert_eq!(status, 1);
}

#[test]
fn help_exits_zero_for_every_subcommand() {
    assert_eq!(cli(&["--help"]), 0);
    for sub in ["simulate", "pretrain", "finetune", "evaluate", "ablate", "verify"] {
        assert_eq!(cli(&[sub, "--help"]), 0, "{sub} --help");
    }
}
