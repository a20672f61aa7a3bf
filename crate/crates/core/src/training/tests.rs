use super::*;
use crate::data::{synthetic_clusters, Dataset, Labels, Provenance};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::network::{xavier_init, Activation, InitSnapshot, NetParams, NetShape};

/// Mean loss through the per-example forward path and the public loss
/// functions, independent of the batched gradient code.
fn reference_loss(p: &NetParams, data: &Dataset, batch: &[usize], loss: Loss) -> f64 {
    let k = p.shape().output_dim;
    let mut total = 0.0;
    for &i in batch {
        let out = p.forward(&DenseVector::from(data.input(i))).unwrap();
        total += match loss {
            Loss::Squared => {
                let mut y = vec![0.0; k];
                data.write_target(i, &mut y);
                squared_loss(&out, &DenseVector::from(y)).unwrap()
            }
            Loss::CrossEntropy => cross_entropy_loss(&out, data.class(i).unwrap()).unwrap(),
        };
    }
    total / batch.len() as f64
}

fn max_fd_error(p: &NetParams, data: &Dataset, batch: &[usize], loss: Loss) -> f64 {
    let (_, grads) = backprop(p, data, batch, loss).unwrap();
    let analytic = grads.to_flat();
    let base = p.to_flat();
    let h = 1e-5;
    let mut q = p.clone();
    let mut worst = 0.0f64;
    for (idx, &g) in analytic.iter().enumerate() {
        let mut plus = base.clone();
        plus[idx] += h;
        q.set_flat(&plus).unwrap();
        let lp = reference_loss(&q, data, batch, loss);
        let mut minus = base.clone();
        minus[idx] -= h;
        q.set_flat(&minus).unwrap();
        let lm = reference_loss(&q, data, batch, loss);
        let fd = (lp - lm) / (2.0 * h);
        let err = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-4);
        worst = worst.max(err);
    }
    worst
}

fn toy_classes(seed: u64, m: usize, n: usize, k: usize) -> Dataset {
    synthetic_clusters(&mut Rng::new(seed), m, n, k, 1.0).unwrap()
}

#[test]
fn backprop_matches_finite_differences() {
    for (seed, act, loss) in [
        (1, Activation::Relu, Loss::Squared),
        (2, Activation::Linear, Loss::Squared),
        (3, Activation::Relu, Loss::CrossEntropy),
        (4, Activation::Linear, Loss::CrossEntropy),
    ] {
        let data = toy_classes(seed, 6, 4, 3);
        let shape = NetShape::new(4, 8, 3, 3, act).unwrap();
        let mut p = xavier_init(&mut Rng::new(seed + 100), shape).unwrap();
        for l in 0..3 {
            for (j, b) in p.bias_mut(l).as_mut_slice().iter_mut().enumerate() {
                *b = 0.1 * ((j + l) as f64).sin();
            }
        }
        let err = max_fd_error(&p, &data, &[0, 1, 2, 3, 4, 5], loss);
        assert!(err < 1e-5, "{act:?}/{loss:?}: {err}");
    }
}

#[test]
fn zero_weight_linear_bias_gradient_is_closed_form() {
    let shape = NetShape::new(2, 3, 2, 2, Activation::Linear).unwrap();
    let mut p = NetParams::zeros(shape).unwrap();
    p.bias_mut(1).as_mut_slice().copy_from_slice(&[0.5, -0.25]);
    let inputs = DenseMatrix::from_vec(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
    let data = Dataset::new(inputs, Labels::Classes(vec![0, 1, 1]), 2, Provenance::Synthetic)
        .unwrap();
    let (_, g) = backprop(&p, &data, &[0, 1, 2], Loss::Squared).unwrap();
    // d/db (1/k)‖b − y‖² = (2/k)(b − y), averaged over the batch.
    let b = [0.5, -0.25];
    let ys = [[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
    for j in 0..2 {
        let expect = ys.iter().map(|y| b[j] - y[j]).sum::<f64>() / 3.0;
        assert!((g.biases[1][j] - expect).abs() < 1e-15);
    }
    assert!(g.weights.iter().all(|w| w.frobenius_norm() == 0.0));
}

#[test]
fn backprop_rejects_bad_batches() {
    let data = toy_classes(1, 6, 4, 3);
    let p = xavier_init(&mut Rng::new(0), NetShape::new(4, 5, 2, 3, Activation::Relu).unwrap())
        .unwrap();
    assert!(backprop(&p, &data, &[], Loss::Squared).is_err());
    assert!(backprop(&p, &data, &[6], Loss::Squared).is_err());
    let wrong = xavier_init(&mut Rng::new(0), NetShape::new(3, 5, 2, 3, Activation::Relu).unwrap())
        .unwrap();
    assert!(backprop(&wrong, &data, &[0], Loss::Squared).is_err());
}

#[test]
fn output_gradient_matches_finite_differences() {
    let shape = NetShape::new(3, 6, 3, 2, Activation::Relu).unwrap();
    let mut p = xavier_init(&mut Rng::new(5), shape).unwrap();
    // Nonzero biases keep every pre-activation away from the ReLU kink.
    let mut rng = Rng::new(6);
    for l in 0..3 {
        for b in p.bias_mut(l).as_mut_slice() {
            *b = 0.2 * rng.standard_normal();
        }
    }
    let x = DenseVector::from(vec![0.3, 0.8, 0.1]);
    let g = output_gradient(&p, &x, 1).unwrap().to_flat();
    let base = p.to_flat();
    let mut q = p.clone();
    let h = 1e-6;
    for idx in 0..base.len() {
        let mut v = base.clone();
        v[idx] += h;
        q.set_flat(&v).unwrap();
        let fp = q.forward(&x).unwrap()[1];
        v[idx] -= 2.0 * h;
        q.set_flat(&v).unwrap();
        let fm = q.forward(&x).unwrap()[1];
        let fd = (fp - fm) / (2.0 * h);
        assert!((fd - g[idx]).abs() < 1e-7, "coordinate {idx}: {fd} vs {}", g[idx]);
    }
    assert!(output_gradient(&p, &x, 2).is_err());
}

/// `y ≈ 2x + 0.5` fitted by a two-layer linear network; the composite map
/// must match the ordinary least-squares line.
#[test]
fn linear_net_converges_to_least_squares() {
    let xs = [0.0, 0.25, 0.5, 0.75, 1.0];
    let ys = [0.52, 0.98, 1.51, 2.03, 2.49];
    let inputs = DenseMatrix::from_vec(5, 1, xs.to_vec()).unwrap();
    let data =
        Dataset::new(inputs, Labels::Targets(ys.to_vec()), 2, Provenance::Synthetic).unwrap();

    let mx = xs.iter().sum::<f64>() / 5.0;
    let my = ys.iter().sum::<f64>() / 5.0;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;

    let shape = NetShape::new(1, 1, 2, 1, Activation::Linear).unwrap();
    let mut p = NetParams::zeros(shape).unwrap();
    p.weight_mut(0).set(0, 0, 1.0);
    p.weight_mut(1).set(0, 0, 1.0);
    let z = InitSnapshot::new(p.clone());
    let cfg = TrainConfig {
        learning_rate: 0.1,
        momentum: 0.0,
        batch_size: 5,
        max_epochs: 20_000,
        stop: StopRule::EpochLimit,
        loss: Loss::Squared,
        seed: 1,
    };
    let trace = sgd_train(&mut p, &z, &data, &cfg).unwrap();
    assert_eq!(trace.status, TrainStatus::EpochLimitHit);

    let (w1, b1) = (p.weight(0).get(0, 0), p.bias(0)[0]);
    let (w2, b2) = (p.weight(1).get(0, 0), p.bias(1)[0]);
    assert!((w2 * w1 - slope).abs() < 1e-6, "{} vs {slope}", w2 * w1);
    assert!((w2 * b1 + b2 - intercept).abs() < 1e-6);

    let direct = ((w1 - 1.0).powi(2) + b1.powi(2) + (w2 - 1.0).powi(2) + b2.powi(2)).sqrt();
    assert!((trace.last().distance_from_init - direct).abs() < 1e-12);
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let data = toy_classes(2, 40, 3, 2);
    let shape = NetShape::new(3, 6, 3, 2, Activation::Relu).unwrap();
    let mut p = xavier_init(&mut Rng::new(1), shape).unwrap();
    let z = InitSnapshot::new(p.clone());
    let cfg = TrainConfig {
        learning_rate: 0.0,
        momentum: 0.9,
        max_epochs: 5,
        stop: StopRule::EpochLimit,
        ..TrainConfig::default()
    };
    let trace = sgd_train(&mut p, &z, &data, &cfg).unwrap();
    assert_eq!(&p, z.params());
    assert_eq!(trace.records.len(), 6);
    assert!(trace.records.iter().all(|r| r.distance_from_init == 0.0));
}

#[test]
fn training_is_deterministic_and_trace_consistent() {
    let data = toy_classes(3, 200, 5, 3);
    let shape = NetShape::new(5, 16, 3, 3, Activation::Relu).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.5,
        momentum: 0.5,
        batch_size: 16,
        max_epochs: 30,
        stop: StopRule::LossFractionOfInitial(0.5),
        loss: Loss::Squared,
        seed: 42,
    };
    let run = || {
        let mut p = xavier_init(&mut Rng::new(9), shape).unwrap();
        let z = InitSnapshot::new(p.clone());
        let trace = sgd_train(&mut p, &z, &data, &cfg).unwrap();
        (p, z, trace)
    };
    let (p1, z1, mut t1) = run();
    let (p2, _, mut t2) = run();
    assert_eq!(p1, p2);
    for r in t1.records.iter_mut().chain(t2.records.iter_mut()) {
        r.wall_time = 0.0;
    }
    assert_eq!(t1, t2);
    assert_eq!(t1.status, TrainStatus::Converged);
    assert!(t1.last().train_loss <= 0.5 * t1.initial_loss());
    let recomputed = distance_from_init(&p1, &z1).unwrap();
    assert!((t1.last().distance_from_init - recomputed).abs() <= 1e-9);
    assert!(t1.records.iter().all(|r| r.distance_from_init >= 0.0));
}

#[test]
fn margin_rule_holds_post_hoc() {
    let data = synthetic_clusters(&mut Rng::new(4), 120, 5, 3, 4.0).unwrap();
    let shape = NetShape::new(5, 32, 3, 3, Activation::Relu).unwrap();
    let mut p = xavier_init(&mut Rng::new(2), shape).unwrap();
    let z = InitSnapshot::new(p.clone());
    let cfg = TrainConfig {
        learning_rate: 0.05,
        momentum: 0.9,
        batch_size: 16,
        max_epochs: 3000,
        stop: StopRule::MarginSatisfied {
            margin: 1.0,
            fraction: 0.9,
        },
        loss: Loss::CrossEntropy,
        seed: 3,
    };
    let trace = sgd_train(&mut p, &z, &data, &cfg).unwrap();
    assert_eq!(trace.status, TrainStatus::Converged);
    // Recheck from the final parameters through the per-example path.
    let satisfied = (0..data.len())
        .filter(|&i| {
            let out = p.forward(&DenseVector::from(data.input(i))).unwrap();
            let c = data.class(i).unwrap();
            let other = (0..3).filter(|&j| j != c).map(|j| out[j]).fold(f64::MIN, f64::max);
            out[c] - other >= 1.0
        })
        .count();
    assert!(satisfied as f64 >= 0.9 * data.len() as f64);
}

#[test]
fn divergence_is_reported() {
    let data = toy_classes(5, 64, 4, 2);
    let shape = NetShape::new(4, 32, 4, 2, Activation::Relu).unwrap();
    let mut p = xavier_init(&mut Rng::new(1), shape).unwrap();
    for l in 0..4 {
        let w = p.weight(l).scaled(6.0);
        *p.weight_mut(l) = w;
    }
    let z = InitSnapshot::new(p.clone());
    let cfg = TrainConfig {
        learning_rate: 50.0,
        max_epochs: 50,
        stop: StopRule::EpochLimit,
        ..TrainConfig::default()
    };
    let trace = sgd_train(&mut p, &z, &data, &cfg).unwrap();
    assert_eq!(trace.status, TrainStatus::Diverged);
}

#[test]
fn config_validation() {
    let bad = [
        TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        },
        TrainConfig {
            momentum: 1.0,
            ..TrainConfig::default()
        },
        TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            stop: StopRule::LossFractionOfInitial(0.0),
            ..TrainConfig::default()
        },
        TrainConfig {
            stop: StopRule::MarginSatisfied {
                margin: -1.0,
                fraction: 0.5,
            },
            ..TrainConfig::default()
        },
    ];
    for cfg in bad {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
}

#[test]
fn stop_rule_text_round_trip() {
    for rule in [
        StopRule::LossBelow(0.001),
        StopRule::LossFractionOfInitial(0.1),
        StopRule::MarginSatisfied {
            margin: 10.0,
            fraction: 0.99,
        },
        StopRule::EpochLimit,
    ] {
        assert_eq!(rule.describe().parse::<StopRule>().unwrap(), rule);
    }
    assert!("loss<-1".parse::<StopRule>().is_err());
    assert!("whenever".parse::<StopRule>().is_err());
}

#[test]
fn partial_flip_level_zero_is_identity() {
    let data = toy_classes(1, 50, 3, 4);
    let out = corrupt_labels(&data, Corruption::PartialFlip(0.0), &mut Rng::new(1)).unwrap();
    assert_eq!(out, data);
    assert!(corrupt_labels(&data, Corruption::PartialFlip(1.5), &mut Rng::new(1)).is_err());
    assert!(corrupt_labels(&data, Corruption::PartialFlip(-0.1), &mut Rng::new(1)).is_err());
}

#[test]
fn partial_flip_full_level_matches_chance() {
    let k = 10;
    let data = toy_classes(2, 10_000, 2, k);
    let out = corrupt_labels(&data, Corruption::PartialFlip(1.0), &mut Rng::new(7)).unwrap();
    let same = (0..data.len())
        .filter(|&i| data.class(i) == out.class(i))
        .count() as f64;
    let m = data.len() as f64;
    let p = 1.0 / k as f64;
    let sigma = (p * (1.0 - p) / m).sqrt();
    assert!((same / m - p).abs() <= 3.0 * sigma, "{}", same / m);
    assert_eq!(
        out.provenance(),
        &Provenance::Corrupted(Box::new(Provenance::Synthetic))
    );
    // the source is untouched
    assert_eq!(data, toy_classes(2, 10_000, 2, k));
}

#[test]
fn partial_flip_changes_exactly_the_chosen_count() {
    let data = synthetic_clusters(&mut Rng::new(3), 1000, 2, 2, 1.0).unwrap();
    let signs = crate::data::two_class_filter(&data, 0, 1).unwrap();
    let out = corrupt_labels(&signs, Corruption::PartialFlip(0.3), &mut Rng::new(2)).unwrap();
    let (Labels::Targets(a), Labels::Targets(b)) = (signs.labels(), out.labels()) else {
        panic!()
    };
    let changed = a.iter().zip(b).filter(|(x, y)| x != y).count();
    // 300 relabelled uniformly; about half keep their sign.
    assert!(changed <= 300);
    assert!((changed as f64 - 150.0).abs() <= 3.0 * (300.0f64 * 0.25).sqrt());
}

#[test]
fn full_random_sign_is_balanced() {
    let data = toy_classes(3, 10_000, 2, 3);
    let out = corrupt_labels(&data, Corruption::FullRandomSign, &mut Rng::new(5)).unwrap();
    let Labels::Targets(s) = out.labels() else { panic!() };
    let pos = s.iter().filter(|&&v| v == 1.0).count() as f64;
    assert!(s.iter().all(|&v| v == 1.0 || v == -1.0));
    let m = s.len() as f64;
    assert!((pos / m - 0.5).abs() <= 3.0 * (0.25 / m).sqrt());
    assert_eq!(out.target_dim(), 1);
}
