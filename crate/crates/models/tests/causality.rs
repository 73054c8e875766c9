use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uwbloc_autodiff::{ParamStore, Tape, Tensor};
use uwbloc_models::{CellKind, MambaConfig, ModelConfig, RnnConfig};

type Forward<'a> = dyn Fn(&ParamStore, &Tensor) -> Tensor + 'a;

/// Perturbs every time step in turn and reports, for each perturbed step `t`,
/// whether any output before `t` moved and whether the output at `t` moved.
fn sweep(f: &Forward, p: &ParamStore, x: &Tensor) -> Vec<(bool, bool)> {
    let (b, s, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let base = f(p, x);
    let dl = base.shape()[2];
    (0..s)
        .map(|t| {
            let mut xp = x.clone();
            for bi in 0..b {
                for k in 0..d {
                    xp.data_mut()[(bi * s + t) * d + k] += 0.37 + k as f64 * 0.1;
                }
            }
            let y = f(p, &xp);
            let mut past = false;
            let mut now = false;
            for bi in 0..b {
                for tt in 0..=t {
                    let r = (bi * s + tt) * dl..(bi * s + tt + 1) * dl;
                    let moved = base.data()[r.clone()] != y.data()[r];
                    if tt < t {
                        past |= moved;
                    } else {
                        now |= moved;
                    }
                }
            }
            (past, now)
        })
        .collect()
}

fn rnd(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

#[test]
fn mamba_block_never_looks_ahead() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for conv_width in [0, 2, 4] {
        let cfg = MambaConfig {
            d_model: 8,
            d_state: 4,
            conv_width,
            s: 12,
            ..MambaConfig::default()
        };
        let p = cfg.init(rng.random());
        let x = rnd(&[2, 12, 8], &mut rng);
        let f = |p: &ParamStore, x: &Tensor| {
            let tape = Tape::new();
            let b = p.bind_frozen(&tape);
            (*cfg.block(&b, 0, tape.constant(x.clone())).unwrap().value()).clone()
        };
        for (t, (past, now)) in sweep(&f, &p, &x).into_iter().enumerate() {
            assert!(!past, "conv {conv_width}: step {t} leaked backwards");
            assert!(now, "conv {conv_width}: step {t} had no effect");
        }
    }
}

#[test]
fn full_models_respect_their_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let models = [
        ModelConfig::Mamba(MambaConfig {
            input_dim: 5,
            d_model: 8,
            n_blocks: 2,
            d_state: 4,
            label_dim: 3,
            s: 10,
            ..MambaConfig::default()
        }),
        ModelConfig::Rnn(RnnConfig {
            cell: CellKind::Gru,
            hidden_size: 6,
            n_layers: 2,
            input_dim: 5,
            label_dim: 3,
        }),
        ModelConfig::Rnn(RnnConfig {
            cell: CellKind::Lstm,
            hidden_size: 6,
            n_layers: 2,
            input_dim: 5,
            label_dim: 3,
        }),
    ];
    for model in &models {
        let p = model.init(rng.random());
        let x = rnd(&[2, 10, 5], &mut rng);
        let f = |p: &ParamStore, x: &Tensor| {
            let tape = Tape::new();
            let b = p.bind_frozen(&tape);
            (*model.forward(&b, tape.constant(x.clone())).unwrap().value()).clone()
        };
        for (t, (past, now)) in sweep(&f, &p, &x).into_iter().enumerate() {
            assert!(!past, "{}: step {t} leaked backwards", model.name());
            assert!(now, "{}: step {t} had no effect", model.name());
        }
    }
}

#[test]
fn bidirectional_model_sees_the_future() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let model = ModelConfig::Rnn(RnnConfig {
        cell: CellKind::BiLstm,
        hidden_size: 6,
        n_layers: 2,
        input_dim: 5,
        label_dim: 3,
    });
    let p = model.init(3);
    let x = rnd(&[1, 10, 5], &mut rng);
    let f = |p: &ParamStore, x: &Tensor| {
        let tape = Tape::new();
        let b = p.bind_frozen(&tape);
        (*model.forward(&b, tape.constant(x.clone())).unwrap().value()).clone()
    };
    let flags = sweep(&f, &p, &x);
    assert!(flags[1..].iter().all(|(past, _)| *past));
}

#[test]
fn forward_is_deterministic_and_shaped_per_step() {
    let model = ModelConfig::Mamba(MambaConfig {
        d_model: 16,
        s: 20,
        ..MambaConfig::default()
    });
    let p = model.init(5);
    let x = Tensor::from_fn(&[3, 20, 20], |i| (i as f64 * 0.37).sin());
    let run = || {
        let tape = Tape::new();
        let b = p.bind_frozen(&tape);
        (*model.forward(&b, tape.constant(x.clone())).unwrap().value()).clone()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.shape(), &[3, 20, 6]);
    assert_eq!(a, b);
}
