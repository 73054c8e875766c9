use std::fs;
use std::path::Path;
use std::process::Command;

use uwbloc_cli::ablate::ablate;
use uwbloc_cli::baseline::baseline;
use uwbloc_cli::evaluate::{evaluate, GO_METHOD};
use uwbloc_cli::learn::train_models;
use uwbloc_cli::prepare::prepare;
use uwbloc_cli::probe::probe_windows;
use uwbloc_cli::simulate::simulate;
use uwbloc_cli::{CliError, ModelKind, Run, RunConfig};

const TINY: &str = r#"
[trajectory]
n_trials = 4
n_test = 1
waypoint_count = 3

[dataset]
window = 8

[model.mamba]
d_model = 4
n_blocks = 1
d_state = 2

[model.rnn]
hidden_size = 4
n_layers = 1

[train]
epochs = 2
windows_per_epoch = 64
repeats = 2

[eval]
ablation_epochs = 1
ablation_repeats = 1
"#;

fn tiny() -> RunConfig {
    RunConfig::from_toml(TINY).unwrap()
}

fn full_run(dir: &Path, seed: u64) {
    let run = Run::new(tiny(), seed, dir, false);
    simulate(&run).unwrap();
    prepare(&run).unwrap();
    train_models(&run, &[ModelKind::Mamba, ModelKind::Bilstm]).unwrap();
    baseline(&run).unwrap();
    let eval = evaluate(&run).unwrap();
    for m in ["mamba", "bilstm", GO_METHOD] {
        let v = eval.rmse(m).unwrap();
        assert!(v.is_finite() && v > 0.0, "{m}: {v}");
    }
    let a = ablate(&run).unwrap();
    assert_eq!(a.runs.len(), 8);
    assert!(a.report.is_complete());
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn tiny_pipeline_runs_end_to_end_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    full_run(&a, 5);
    full_run(&b, 5);
    let (ta, tb) = (tree(&a), tree(&b));
    assert_eq!(ta.len(), tb.len());
    for (x, y) in ta.iter().zip(&tb) {
        assert_eq!(x.0, y.0);
        assert!(x.1 == y.1, "{} differs", x.0);
    }
    for name in [
        "reports/metrics.json",
        "reports/comparison.csv",
        "reports/comparison.txt",
        "reports/errors_long.csv",
        "models/mamba/repeat_2.ckpt",
        "models/bilstm/loss_1.csv",
        "ablation/report.txt",
    ] {
        assert!(a.join(name).exists(), "{name}");
    }
    let csv = fs::read_to_string(a.join("reports/comparison.csv")).unwrap();
    assert!(csv.starts_with("# config_hash="), "{csv}");

    full_run(&c, 6);
    let metrics = |d: &Path| fs::read_to_string(d.join("reports/metrics.json")).unwrap();
    assert_ne!(metrics(&a), metrics(&c));
}

#[test]
fn steps_name_the_missing_prerequisite() {
    let tmp = tempfile::tempdir().unwrap();
    let run = Run::new(tiny(), 1, tmp.path(), false);
    let step = |e: CliError| match e {
        CliError::Missing { step, .. } => step,
        other => panic!("unexpected {other}"),
    };
    assert_eq!(step(prepare(&run).unwrap_err()), "simulate");
    assert_eq!(step(baseline(&run).unwrap_err()), "simulate");
    simulate(&run).unwrap();
    assert_eq!(step(train_models(&run, &[ModelKind::Mamba]).unwrap_err()), "prepare");
    prepare(&run).unwrap();
    let err = evaluate(&run).unwrap_err();
    assert!(matches!(err, CliError::Missing { .. }), "{err}");
}

#[test]
fn artifacts_from_another_config_are_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let run = Run::new(tiny(), 1, tmp.path(), false);
    simulate(&run).unwrap();
    prepare(&run).unwrap();
    let mut other = tiny();
    other.train.epochs = 3;
    let stale = Run::new(other, 1, tmp.path(), false);
    assert!(matches!(train_models(&stale, &[ModelKind::Mamba]), Err(CliError::Stale { step: "prepare", .. })));
    let reseeded = Run::new(tiny(), 2, tmp.path(), false);
    assert!(matches!(prepare(&reseeded), Err(CliError::Stale { .. })));
}

#[test]
fn outputs_are_not_overwritten_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let run = Run::new(tiny(), 1, tmp.path(), false);
    simulate(&run).unwrap();
    assert!(matches!(simulate(&run), Err(CliError::Exists(_))));
    let forced = Run::new(tiny(), 1, tmp.path(), true);
    simulate(&forced).unwrap();
}

#[test]
fn probe_uses_sixty_four_evenly_spaced_windows() {
    let tmp = tempfile::tempdir().unwrap();
    let run = Run::new(RunConfig::profile("desk").unwrap(), 1, tmp.path(), false);
    let ds = probe_windows(&run).unwrap();
    assert_eq!(ds.len(), 64);
    assert_eq!(ds.s, 20);
    assert!(ds.windows.windows(2).all(|w| w[0].start < w[1].start));
    assert_eq!(ds.trials.len(), 1);
}

fn uwbloc(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_uwbloc"))
        .arg("--workdir")
        .arg(dir)
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn binary_reports_errors_with_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("tiny.toml");
    fs::write(&config, TINY).unwrap();
    let cfg = config.to_str().unwrap();

    let out = uwbloc(tmp.path(), &["--config", cfg, "prepare"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("simulate"), "{err}");

    let out = uwbloc(tmp.path(), &["--config", cfg, "simulate", "--n-trials", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("3 trials"));

    let out = uwbloc(tmp.path(), &["--profile", "nonexistent", "simulate"]);
    assert!(!out.status.success());

    let out = uwbloc(tmp.path(), &["--config", cfg, "train", "--model", "transformer"]);
    assert!(!out.status.success());

    let out = uwbloc(tmp.path(), &["--config", cfg, "show-config"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("# config_hash="), "{text}");
    assert!(text.contains("[model.mamba]"), "{text}");
}
