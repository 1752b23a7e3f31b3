use learnability::constructions::{build_fft_net, complex_l0, fft_net_l0, Activation, Layer, NetParams};
use learnability::experiments::{
    basin_sweep, best_within_l0, budgeted_sparsification, optimal_sparsification, perturb,
    sparsify_curve, write_curve_csv, write_scaling_csv, NoiseSpec, ScalingPoint, Condition,
    SweepOptions,
};
use learnability::math::{glorot_std, Matrix, Rng};
use learnability::training::{relative_frobenius_error, Task, TrainConfig};

#[test]
fn perturbation_std_follows_glorot_rule() {
    let layer = |rows, cols| Layer {
        weights: Matrix::zeros(rows, cols),
        bias: Some(vec![0.0; rows]),
        activation: Activation::Sigmoid,
    };
    let net = NetParams::new(vec![layer(100, 100), layer(50, 100)], 10.0).unwrap();
    for scale in [0.1, 1.0, 2.0] {
        let p = perturb(&net, scale, &mut Rng::new(8));
        let w = p.layers()[0].weights.data();
        let std = (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt();
        let expect = scale * glorot_std(100, 100);
        assert!((std / expect - 1.0).abs() < 0.05, "scale {scale}: {std} vs {expect}");
        let w = p.layers()[1].weights.data();
        let std = (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt();
        assert!((std / (scale * glorot_std(100, 50)) - 1.0).abs() < 0.05);
        assert!(p.layers()[0].bias.as_ref().unwrap().iter().any(|b| *b != 0.0));
    }
    assert_eq!(perturb(&net, 0.0, &mut Rng::new(8)), net);
}

#[test]
fn sparsify_examples() {
    let target = Task::Fft { n: 8 }.linear_target().unwrap();
    let exact = build_fft_net(8).unwrap();
    let curve = sparsify_curve(&exact, &target).unwrap();
    assert_eq!(optimal_sparsification(&curve).unwrap().l0, 56);

    let noisy = perturb(&exact, 1e-3, &mut Rng::new(21));
    let curve = sparsify_curve(&noisy, &target).unwrap();
    let baseline = relative_frobenius_error(&noisy, &target).unwrap();
    assert_eq!(curve[0].rel_error, baseline);
    assert_eq!(curve[0].l0, complex_l0(&noisy).unwrap());
    assert!(curve.windows(2).all(|w| w[0].l0 >= w[1].l0));
    assert!(curve.iter().any(|p| p.l0 == 56 && p.rel_error < baseline));
    let best = optimal_sparsification(&curve).unwrap();
    assert_eq!(best.l0, 56);
    assert_eq!(budgeted_sparsification(&curve).unwrap().l0, 56);
    assert_eq!(best_within_l0(&curve, 56).unwrap(), best);
    assert!(best_within_l0(&curve, 10).unwrap().rel_error > 0.5);
}

#[test]
fn dense_layer_l0_is_n_squared() {
    let dense = Task::Fft { n: 32 }.linear_target().unwrap();
    let net = NetParams::new(
        vec![Layer {
            weights: dense,
            bias: None,
            activation: Activation::Linear,
        }],
        1.0,
    )
    .unwrap();
    assert_eq!(complex_l0(&net).unwrap(), 1024);
    assert_eq!(fft_net_l0(32), 352);
}

#[test]
fn parity_basin_regimes_at_low_and_high_noise() {
    let cfg = TrainConfig {
        steps: 2_000,
        ..TrainConfig::parity()
    };
    let noise = NoiseSpec {
        scales: vec![0.01, 2.0],
        seeds: vec![0],
    };
    let recs = basin_sweep(&Task::Parity { n: 16 }, &noise, &cfg, false, &SweepOptions::default()).unwrap();
    assert_eq!(recs.len(), 2);
    assert!(recs[0].final_bit_error.unwrap() < 0.01, "{:?}", recs[0].final_bit_error);
    assert!(recs[1].final_bit_error.unwrap() > 0.3, "{:?}", recs[1].final_bit_error);
}

#[test]
fn sweep_records_do_not_depend_on_thread_count() {
    let cfg = TrainConfig {
        steps: 50,
        batch_size: 100,
        eval_every: 25,
        test_samples: 500,
        ..TrainConfig::parity()
    };
    let noise = NoiseSpec {
        scales: vec![0.1, 0.5, 1.0],
        seeds: vec![2, 0, 1],
    };
    let task = Task::Parity { n: 8 };
    let one = basin_sweep(&task, &noise, &cfg, true, &SweepOptions::default()).unwrap();
    let three = basin_sweep(&task, &noise, &cfg, true, &SweepOptions { threads: 3, ..Default::default() }).unwrap();
    assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&three).unwrap());
    assert!(one.iter().all(|r| r.masked));
}

#[test]
fn csv_writers_have_stable_headers() {
    let mut buf = Vec::new();
    write_curve_csv(&mut buf, &[]).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "threshold,l0,rel_error\n");
    let mut buf = Vec::new();
    let p = ScalingPoint {
        n: 8,
        condition: Condition::Near,
        l0: 56,
        rel_error: 0.0,
        scaling_factor: 56.0 / 24.0,
    };
    write_scaling_csv(&mut buf, &[p]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("n,condition,l0,scaling_factor\n8,near,56,2.33"));
}
