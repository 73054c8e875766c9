use uwbloc_autodiff::{read_checkpoint, write_checkpoint, ParamStore};
use uwbloc_core::dataset::{trial_sequence, Layout, Normalizer, TrialSequence, WindowedDataset};
use uwbloc_core::geometry::{TagMount, Vec3};
use uwbloc_core::sim::{
    generate_campus, generate_street_trajectory, ground_truth_labels, sample_measurements, CampusParams, NoiseModel,
};
use uwbloc_models::{
    batch_gradients, loss_curve_csv, predict_trial, predict_windows, train, train_repeats, CellKind, MambaConfig,
    ModelConfig, ModelError, RnnConfig, TrainConfig,
};

const S: usize = 10;

fn trials(n: usize) -> (Vec<TrialSequence>, usize) {
    let (env, grid) = generate_campus(&CampusParams::default(), 3).unwrap();
    let mounts = vec![
        TagMount::new(0, Vec3::new(0.5, 0.0, 0.0)),
        TagMount::new(1, Vec3::new(-0.5, 0.0, 0.0)),
    ];
    let layout = Layout::new(vec![0, 1], env.anchor_ids());
    let out = (0..n as u64)
        .map(|i| {
            let traj = generate_street_trajectory(&grid, 2, 8.0, 0.01, 40 + i).unwrap();
            let log = sample_measurements(&env, &traj, &NoiseModel::noiseless(), 20.0, &mounts, 40 + i).unwrap();
            trial_sequence(&format!("t{i}"), &log, &ground_truth_labels(&traj, &mounts), &layout).unwrap()
        })
        .collect();
    (out, env.anchor_ids().len())
}

fn dataset() -> (WindowedDataset, usize) {
    let (seqs, n_anchors) = trials(2);
    let norm = Normalizer::fit(&seqs).unwrap();
    (WindowedDataset::build(&seqs, S, norm).unwrap(), n_anchors)
}

fn mamba(input_dim: usize) -> ModelConfig {
    ModelConfig::Mamba(MambaConfig {
        input_dim,
        d_model: 8,
        n_blocks: 1,
        d_state: 4,
        s: S,
        ..MambaConfig::default()
    })
}

fn quick() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        windows_per_epoch: 128,
        lr0: 0.005,
        repeats: 2,
        ..TrainConfig::default()
    }
}

fn max_diff(a: &ParamStore, b: &ParamStore) -> f64 {
    a.iter()
        .map(|(k, t)| {
            let u = b.get(k).unwrap();
            t.data().iter().zip(u.data()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        })
        .fold(0.0, f64::max)
}

#[test]
fn loss_curve_is_finite_every_epoch_and_falls() {
    let (data, _) = dataset();
    let model = mamba(data.input_dim);
    let mut seen = Vec::new();
    let out = train(&model, &data, &quick(), 1, |e, p| {
        seen.push(e);
        assert!(p.is_finite());
        Ok(Some(e as f64))
    })
    .unwrap();
    assert_eq!(seen, vec![0, 1, 2]);
    assert_eq!(out.log.len(), 3);
    assert_eq!(out.steps, 3 * 2);
    assert!(out.log.iter().all(|l| l.train_loss.is_finite()));
    assert!(out.log[2].train_loss < out.log[0].train_loss);
    let csv = loss_curve_csv(&out.log, &["config_hash=abc seed=1".into()]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "# config_hash=abc seed=1");
    assert_eq!(lines[1], "epoch,lr,train_loss,test_rmse");
    assert_eq!(lines.len(), 5);
}

#[test]
fn same_seed_is_bit_identical_and_repeats_differ() {
    let (data, _) = dataset();
    let model = mamba(data.input_dim);
    let a = train(&model, &data, &quick(), 9, |_, _| Ok(None)).unwrap();
    let b = train(&model, &data, &quick(), 9, |_, _| Ok(None)).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.log, b.log);
    let reps = train_repeats(&model, &data, &quick(), 9, |_, _, _| Ok(None)).unwrap();
    assert_eq!(reps.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![10, 11]);
    assert_ne!(reps[0].params, reps[1].params);
}

#[test]
fn sharded_gradients_are_deterministic_and_agree_with_one_tape() {
    let (data, _) = dataset();
    let model = mamba(data.input_dim);
    let p = model.init(4);
    let idx: Vec<usize> = (0..40).map(|i| i * 3).collect();
    let (l_full, g_full) = batch_gradients(&model, &p, &data, &idx, 1.0).unwrap();
    let (l1, mut g1) = batch_gradients(&model, &p, &data, &idx[..20], 0.5).unwrap();
    let (l2, g2) = batch_gradients(&model, &p, &data, &idx[20..], 0.5).unwrap();
    g1.add_assign(&g2).unwrap();
    assert!((l_full - (l1 + l2)).abs() < 1e-12 * l_full);
    assert!(max_diff(&g_full, &g1) < 1e-12);

    let cfg = TrainConfig {
        shards: 3,
        ..quick()
    };
    let a = train(&model, &data, &cfg, 2, |_, _| Ok(None)).unwrap();
    let b = train(&model, &data, &cfg, 2, |_, _| Ok(None)).unwrap();
    assert_eq!(a.params, b.params);
    let serial = train(&model, &data, &quick(), 2, |_, _| Ok(None)).unwrap();
    assert!(max_diff(&a.params, &serial.params) < 1e-9);
}

#[test]
fn non_finite_loss_aborts_with_diagnostic() {
    let (mut data, _) = dataset();
    data.trials[0].frames.iter_mut().for_each(|v| *v = f64::NAN);
    let model = mamba(data.input_dim);
    let err = train(&model, &data, &TrainConfig { windows_per_epoch: 0, ..quick() }, 1, |_, _| Ok(None)).unwrap_err();
    assert!(matches!(err, ModelError::Diverged { epoch: 0, .. }), "{err}");
}

#[test]
fn rejects_empty_or_mismatched_data() {
    let (mut data, _) = dataset();
    let wrong = mamba(data.input_dim + 1);
    assert!(matches!(
        train(&wrong, &data, &quick(), 1, |_, _| Ok(None)),
        Err(ModelError::BadConfig(_))
    ));
    data.windows.clear();
    assert!(matches!(
        train(&mamba(data.input_dim), &data, &quick(), 1, |_, _| Ok(None)),
        Err(ModelError::EmptyDataset)
    ));
}

#[test]
fn trial_predictions_follow_window_convention() {
    let (data, _) = dataset();
    let model = ModelConfig::Rnn(RnnConfig {
        cell: CellKind::Gru,
        hidden_size: 5,
        n_layers: 1,
        input_dim: data.input_dim,
        label_dim: data.label_dim,
    });
    let p = model.init(6);
    let trial = &data.trials[0];
    let (k, din, dl) = (trial.len(), data.input_dim, data.label_dim);
    let pred = predict_trial(&model, &p, trial, S).unwrap();
    assert_eq!(pred.len(), k * dl);
    let first = predict_windows(&model, &p, &trial.frames[..S * din], 1, S).unwrap();
    assert_eq!(&pred[..S * dl], &first[..]);
    for t in [S, S + 7, k - 1] {
        let w = t + 1 - S;
        let y = predict_windows(&model, &p, &trial.frames[w * din..(t + 1) * din], 1, S).unwrap();
        let got = &pred[t * dl..(t + 1) * dl];
        let want = &y[(S - 1) * dl..];
        assert!(got.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-12), "frame {t}");
    }
    let mut short = trial.clone();
    short.stamps.truncate(S - 1);
    assert!(predict_trial(&model, &p, &short, S).is_err());
}

#[test]
fn trained_model_reads_anchor_absence() {
    let (data, n_anchors) = dataset();
    let model = mamba(data.input_dim);
    let out = train(&model, &data, &quick(), 3, |_, _| Ok(None)).unwrap();
    let trial = &data.trials[1];
    let base = predict_trial(&model, &out.params, trial, S).unwrap();
    for anchor in 0..n_anchors {
        let mut masked = trial.clone();
        for k in 0..masked.len() {
            for tag in 0..2 {
                masked.frames[k * data.input_dim + tag * n_anchors + anchor] = 0.0;
            }
        }
        let pred = predict_trial(&model, &out.params, &masked, S).unwrap();
        let diff = base.iter().zip(&pred).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let used = masked.frames != trial.frames;
        assert_eq!(diff > 0.0, used, "anchor {anchor}: diff {diff}");
    }
}

#[test]
fn checkpoint_restores_identical_predictions() {
    let (data, _) = dataset();
    let model = mamba(data.input_dim);
    let out = train(&model, &data, &TrainConfig { epochs: 1, ..quick() }, 5, |_, _| Ok(None)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    write_checkpoint(&path, &out.params, "h").unwrap();
    let (back, hash) = read_checkpoint(&path).unwrap();
    assert_eq!(hash, "h");
    let trial = &data.trials[0];
    assert_eq!(
        predict_trial(&model, &out.params, trial, S).unwrap(),
        predict_trial(&model, &back, trial, S).unwrap()
    );
}
