use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tactile_diffusion::conditioning::{ConditionTensor, ForceEncoding};
use tactile_diffusion::dataset::SensorType;
use tactile_diffusion::diffusion::*;
use tactile_diffusion::tensor::Tensor;
use tactile_diffusion::Error;

fn random_example(seed: u64, h: usize, w: usize) -> Example<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = ConditionTensor(Tensor::<f64>::randn(4, h, w, &mut rng).map(|v| v.tanh()));
    let y0 = Tensor::<f64>::randn(3, h, w, &mut rng).map(|v| v.tanh());
    (x, y0)
}

/// Compares analytic and central-difference gradients on every parameter
/// index in `indices`; returns the worst relative error.
fn worst_grad_error<D: Denoiser<f64>>(denoiser: &mut D, ex: &Example<f64>, t: usize, indices: &[usize]) -> f64 {
    let s = ScheduleSpec::default().build().unwrap();
    let eps = Tensor::<f64>::randn(3, ex.1.height(), ex.1.width(), &mut ChaCha8Rng::seed_from_u64(77));
    let mut grads = vec![0.0; denoiser.num_params()];
    training_loss_and_grad(denoiser, &ex.0, &ex.1, t, &eps, &s, &mut grads).unwrap();
    let mut worst: f64 = 0.0;
    let h = 1e-4;
    for &i in indices {
        let orig = denoiser.params()[i];
        denoiser.params_mut()[i] = orig + h;
        let up = training_loss(denoiser, &ex.0, &ex.1, t, &eps, &s).unwrap();
        denoiser.params_mut()[i] = orig - h;
        let down = training_loss(denoiser, &ex.0, &ex.1, t, &eps, &s).unwrap();
        denoiser.params_mut()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let scale = grads[i].abs().max(fd.abs()).max(1e-7);
        worst = worst.max((grads[i] - fd).abs() / scale);
    }
    worst
}

#[test]
fn toy_gradients_match_central_differences() {
    let mut toy = ToyDenoiser::<f64>::new(5, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for p in toy.params_mut() {
        *p = rng.random_range(-0.8..0.8);
    }
    let ex = random_example(1, 5, 6);
    let all: Vec<usize> = (0..toy.num_params()).collect();
    for t in [1, 50, 200] {
        let e = worst_grad_error(&mut toy, &ex, t, &all);
        assert!(e < 1e-4, "t={t}: {e}");
    }
}

#[test]
fn unet_gradients_match_central_differences() {
    let cfg = UNetConfig { base_channels: 4, channel_mults: vec![1, 2], embed_dim: 8 };
    let mut net = UNet::<f64>::new(cfg, 9).unwrap();
    // the output conv starts at zero, which would hide upstream errors
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for p in net.params_mut() {
        *p += rng.random_range(-0.05..0.05);
    }
    let ex = random_example(2, 8, 8);
    let n = net.num_params();
    let idx: Vec<usize> = (0..150).map(|_| rng.random_range(0..n)).collect();
    let e = worst_grad_error(&mut net, &ex, 120, &idx);
    assert!(e < 1e-4, "{e}");
}

#[test]
fn forward_moments_match_theory() {
    let s = ScheduleSpec::default().build().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for t in [1, 37, 120, 200] {
        let (mut sum, mut sq, mut n) = (0.0, 0.0, 0usize);
        for _ in 0..10_000 {
            let y0 = Tensor::<f64>::randn(1, 8, 8, &mut rng);
            let eps = Tensor::<f64>::randn(1, 8, 8, &mut rng);
            let yt = forward_noise(&y0, t, &s, &eps).unwrap();
            for v in yt.data() {
                sum += v;
                sq += v * v;
                n += 1;
            }
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "t={t} mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "t={t} var {var}");
    }
}

#[test]
fn composed_single_steps_match_the_closed_form_marginal() {
    let s = build_schedule(40, ScheduleKind::Linear, 1e-3, 0.2).unwrap();
    let t = 25;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    // fixed non-trivial clean image; compare per-pixel moments pooled over the image
    let y0 = Tensor::<f64>::from_vec(1, 8, 8, (0..64).map(|i| (i as f64 / 32.0) - 1.0).collect());
    let (mut a_sum, mut a_sq, mut b_sum, mut b_sq) = (vec![0.0; 64], vec![0.0; 64], vec![0.0; 64], vec![0.0; 64]);
    let draws = 10_000;
    for _ in 0..draws {
        let mut y = y0.clone();
        for step in 1..=t {
            let e = Tensor::randn(1, 8, 8, &mut rng);
            y = forward_step(&y, step, &s, &e).unwrap();
        }
        let e = Tensor::randn(1, 8, 8, &mut rng);
        let z = forward_noise(&y0, t, &s, &e).unwrap();
        for i in 0..64 {
            a_sum[i] += y.data()[i];
            a_sq[i] += y.data()[i] * y.data()[i];
            b_sum[i] += z.data()[i];
            b_sq[i] += z.data()[i] * z.data()[i];
        }
    }
    let gb = s.gamma_bar(t);
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for i in 0..64 {
        let (ma, mb) = (a_sum[i] / draws as f64, b_sum[i] / draws as f64);
        let expect = gb.sqrt() * y0.data()[i];
        assert!((ma - expect).abs() < 0.05 && (mb - expect).abs() < 0.05);
        var_a += a_sq[i] / draws as f64 - ma * ma;
        var_b += b_sq[i] / draws as f64 - mb * mb;
    }
    let (var_a, var_b) = (var_a / 64.0, var_b / 64.0);
    assert!((var_a - (1.0 - gb)).abs() / (1.0 - gb) < 0.02, "{var_a}");
    assert!((var_a - var_b).abs() / var_b < 0.02, "{var_a} vs {var_b}");
}

fn small_unet() -> AnyDenoiser<f32> {
    AnyDenoiser::build(&Architecture::Unet(UNetConfig { base_channels: 8, channel_mults: vec![1, 2], embed_dim: 16 }), 1).unwrap()
}

#[test]
fn sampling_is_a_pure_function_of_its_inputs() {
    let s = build_schedule(20, ScheduleKind::Linear, 1e-3, 0.3).unwrap();
    let mut d = small_unet();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in d.params_mut() {
        *p += rng.random_range(-0.02f32..0.02);
    }
    let x = ConditionTensor(Tensor::<f32>::randn(4, 8, 8, &mut rng));
    let a = sample(&d, &x, &s, 5, SampleOptions::default()).unwrap();
    let b = sample(&d, &x, &s, 5, SampleOptions::default()).unwrap();
    let c = sample(&d, &x, &s, 6, SampleOptions::default()).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.shape(), (3, 8, 8));
    assert!(a.data().iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn sampling_rejects_sizes_the_unet_cannot_pool() {
    let s = build_schedule(5, ScheduleKind::Linear, 1e-3, 0.3).unwrap();
    let x = ConditionTensor(Tensor::<f32>::zeros(4, 7, 8));
    assert!(sample(&small_unet(), &x, &s, 0, SampleOptions::default()).is_err());
}

fn context() -> ModelContext {
    ModelContext {
        init_seed: 1,
        encoding: ForceEncoding::default(),
        image_size: (8, 8),
        sensor_type: SensorType::RgbMarker,
        train: TrainConfig::default(),
        sample: SampleOptions::default(),
        experiment_config: Some("[train]\nsteps = 3\n".into()),
    }
}

fn trained_state(steps: u64) -> TrainState<f32, AnyDenoiser<f32>> {
    let s = build_schedule(30, ScheduleKind::Linear, 1e-3, 0.2).unwrap();
    let mut st = TrainState::new(small_unet(), s, AdamConfig::default(), 4);
    let data: Vec<Example<f32>> = (0..2)
        .map(|i| {
            let (x, y) = random_example(i, 8, 8);
            (ConditionTensor(x.0.cast()), y.cast())
        })
        .collect();
    st.fit(&data, 2, steps, |_| {}).unwrap();
    st
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let st = trained_state(3);
    let ckpt = Checkpoint::from_state(&st, &context());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    ckpt.save(&path).unwrap();
    let back = Checkpoint::<f32>::load(&path).unwrap();
    assert_eq!(back, ckpt);
    assert!(!path.with_extension("partial").exists());

    let restored = back.to_state().unwrap();
    assert_eq!(restored.step, 3);
    let x = ConditionTensor(Tensor::<f32>::randn(4, 8, 8, &mut ChaCha8Rng::seed_from_u64(8)));
    let a = sample(&st.denoiser, &x, &st.schedule, 2, SampleOptions::default()).unwrap();
    let b = sample(&restored.denoiser, &x, &restored.schedule, 2, SampleOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn resumed_training_continues_bit_identically() {
    let straight = trained_state(6);
    let half = trained_state(3);
    let mut resumed = Checkpoint::from_state(&half, &context()).to_state().unwrap();
    let data: Vec<Example<f32>> = (0..2)
        .map(|i| {
            let (x, y) = random_example(i, 8, 8);
            (ConditionTensor(x.0.cast()), y.cast())
        })
        .collect();
    resumed.fit(&data, 2, 3, |_| {}).unwrap();
    assert_eq!(resumed.denoiser.params(), straight.denoiser.params());
    assert_eq!(resumed.last_loss, straight.last_loss);
}

#[test]
fn checkpoint_rejects_corruption_and_wrong_width() {
    let ckpt = Checkpoint::from_state(&trained_state(1), &context());
    let bytes = ckpt.to_bytes().unwrap();
    assert!(Checkpoint::<f32>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(Checkpoint::<f32>::from_bytes(&bad).is_err());
    assert!(matches!(Checkpoint::<f64>::from_bytes(&bytes), Err(Error::Compatibility(_))));
}

#[test]
fn schedule_mismatch_is_a_compatibility_error() {
    let ckpt = Checkpoint::from_state(&trained_state(1), &context());
    let other = ScheduleSpec { steps: 31, ..*ckpt.meta.schedule.clone().build().unwrap().spec() };
    assert!(matches!(ckpt.check_compatible(&other, &ForceEncoding::default()), Err(Error::Compatibility(_))));
    ckpt.check_compatible(&ckpt.meta.schedule, &ForceEncoding::default()).unwrap();
}

#[test]
fn single_record_smoke_run_cuts_the_loss_tenfold() {
    let s = ScheduleSpec::default().build().unwrap();
    let net = AnyDenoiser::<f32>::build(&Architecture::Unet(UNetConfig { base_channels: 16, channel_mults: vec![1, 2, 2], embed_dim: 32 }), 0).unwrap();
    let mut st = TrainState::new(net, s, AdamConfig { learning_rate: 2e-3, ..Default::default() }, 1);
    let (x, _) = random_example(5, 16, 16);
    // a smooth target the network can memorize
    let y = Tensor::<f32>::from_vec(3, 16, 16, (0..768).map(|i| ((i % 16) as f32 / 8.0 - 1.0) * if i < 256 { 1.0 } else { -0.5 }).collect());
    let data = vec![(ConditionTensor(x.0.cast()), y)];
    // fixed evaluation draws across the whole step range
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let evals: Vec<(usize, Tensor<f32>)> = (0..64).map(|_| (rng.random_range(1..=200), Tensor::randn(3, 16, 16, &mut rng))).collect();
    let eval = |st: &TrainState<f32, AnyDenoiser<f32>>| {
        evals.iter().map(|(t, e)| training_loss(&st.denoiser, &data[0].0, &data[0].1, *t, e, &st.schedule).unwrap() as f64).sum::<f64>() / 64.0
    };
    let before = eval(&st);
    st.fit(&data, 4, 200, |_| {}).unwrap();
    let after = eval(&st);
    assert!(after < 0.1 * before, "{before} -> {after}");
}

#[test]
fn same_seed_gives_identical_loss_curves() {
    let run = || {
        let s = build_schedule(30, ScheduleKind::Linear, 1e-3, 0.2).unwrap();
        let mut st = TrainState::new(small_unet(), s, AdamConfig::default(), 8);
        let data: Vec<Example<f32>> = (0..3)
            .map(|i| {
                let (x, y) = random_example(i, 8, 8);
                (ConditionTensor(x.0.cast()), y.cast())
            })
            .collect();
        let mut curve = Vec::new();
        st.fit(&data, 2, 10, |r| curve.push(r.loss)).unwrap();
        curve
    };
    assert_eq!(run(), run());
}

#[test]
fn divergence_leaves_parameters_untouched() {
    let s = build_schedule(10, ScheduleKind::Linear, 1e-3, 0.2).unwrap();
    let mut st = TrainState::new(ToyDenoiser::<f64>::new(4, 0), s, AdamConfig::default(), 0);
    for p in st.denoiser.params_mut() {
        *p = 1e6;
    }
    let before = st.denoiser.params().to_vec();
    let ex = random_example(0, 4, 4);
    let err = st.train_step(&[&ex]).unwrap_err();
    assert!(matches!(err, Error::Diverged { step: 0, .. } | Error::Numerical { .. }), "{err:?}");
    assert_eq!(st.denoiser.params(), &before[..]);
    assert_eq!(st.step, 0);
}

proptest! {
    #[test]
    fn schedule_invariants_hold(steps in 1usize..400, a in 1e-5f64..0.05, span in 0.0f64..0.5) {
        let b = (a + span).min(0.999);
        let s = build_schedule(steps, ScheduleKind::Linear, a, b).unwrap();
        prop_assert_eq!(s.gamma_bar(0), 1.0);
        for t in 1..=steps {
            prop_assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0);
            prop_assert!(s.gamma_bar(t) < s.gamma_bar(t - 1));
            prop_assert!(s.posterior_variance(t) >= 0.0);
        }
    }

    #[test]
    fn loss_is_non_negative(seed in any::<u64>(), t in 1usize..=200) {
        let s = ScheduleSpec::default().build().unwrap();
        let toy = ToyDenoiser::<f64>::new(3, seed);
        let (x, y0) = random_example(seed, 4, 4);
        let eps = Tensor::randn(3, 4, 4, &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        prop_assert!(training_loss(&toy, &x, &y0, t, &eps, &s).unwrap() >= 0.0);
    }

    #[test]
    fn unet_preserves_spatial_shape(k in 1usize..4, j in 1usize..4, seed in any::<u64>()) {
        let (h, w) = (4 * k, 4 * j);
        let net = UNet::<f32>::new(UNetConfig { base_channels: 4, channel_mults: vec![1, 1, 2], embed_dim: 8 }, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = net.predict(&Tensor::randn(4, h, w, &mut rng), &Tensor::randn(3, h, w, &mut rng), 0.3);
        prop_assert_eq!(out.shape(), (3, h, w));
    }
}
