use super::*;
use crate::linalg::{DenseMatrix, Rng};
use crate::network::{xavier_init, NetShape};
use crate::training::output_gradient;
use proptest::prelude::*;

fn net(seed: u64, n: usize, h: usize, d: usize, k: usize, act: Activation) -> NetParams {
    xavier_init(&mut Rng::new(seed), NetShape::new(n, h, d, k, act).unwrap()).unwrap()
}

/// `z` plus i.i.d. Gaussian noise of standard deviation `scale` on every
/// parameter, biases included.
fn perturb(z: &NetParams, scale: f64, rng: &mut Rng) -> NetParams {
    let mut flat = z.to_flat();
    for v in &mut flat {
        *v += scale * rng.standard_normal();
    }
    let mut p = z.clone();
    p.set_flat(&flat).unwrap();
    p
}

fn random_input(n: usize, rng: &mut Rng) -> DenseVector {
    DenseVector::from((0..n).map(|_| rng.uniform() * 2.0 - 0.5).collect::<Vec<_>>())
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn diag_net(diags: &[f64]) -> NetParams {
    let h = 2;
    let d = diags.len();
    let shape = NetShape::new(h, h, d, h, Activation::Linear).unwrap();
    let weights = diags
        .iter()
        .map(|&a| DenseMatrix::identity(h).scaled(a))
        .collect();
    let biases = vec![DenseVector::zeros(h); d];
    NetParams::from_parts(shape, weights, biases).unwrap()
}

#[test]
fn l2_product_examples() {
    let shape = NetShape::new(2, 2, 3, 2, Activation::Relu).unwrap();
    let e = |a: f64| DenseMatrix::from_rows(&[&[a, 0.0], &[0.0, 0.0]]).unwrap();
    let unit = NetParams::from_parts(
        shape,
        vec![e(1.0), e(1.0), e(1.0)],
        vec![DenseVector::zeros(2); 3],
    )
    .unwrap();
    assert_eq!(l2_product(&unit), 1.0);
    let p = NetParams::from_parts(
        shape,
        vec![e(2.0), e(3.0), e(1.0)],
        vec![DenseVector::zeros(2); 3],
    )
    .unwrap();
    assert!((l2_product(&p) - 36.0).abs() < 1e-12);
}

#[test]
fn spectral_examples() {
    let p = diag_net(&[2.0, 3.0]);
    assert!((spectral_product(&p) - 6.0).abs() < 1e-9);
    assert!((spectral_measure(&p) - 12.0).abs() < 1e-9);
}

#[test]
fn spectral_from_distance_is_exact_at_init() {
    let z = InitSnapshot::new(net(3, 5, 16, 3, 2, Activation::Relu));
    let b = spectral_from_distance_bound(z.params(), &z).unwrap();
    assert_eq!(b, z.spectral_norms().iter().product::<f64>());
    assert_eq!(spectral_product(z.params()), b);
}

#[test]
fn spectral_from_distance_dominates_ball_samples() {
    // d = 2 with both ‖Z_k‖₂ = 1 and r = 0.5: bound 1.5² = 2.25.
    let z = InitSnapshot::new(diag_net(&[1.0, 1.0]));
    assert!((spectral_bound_at_radius(&z, 0.5) - 2.25).abs() < 1e-9);
    let mut rng = Rng::new(9);
    let dim = z.shape().num_params();
    for _ in 0..2000 {
        let mut dir: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let radius = 0.5 * rng.uniform().powf(1.0 / dim as f64);
        dir.iter_mut().for_each(|v| *v *= radius / norm);
        let mut flat = z.params().to_flat();
        flat.iter_mut().zip(&dir).for_each(|(a, b)| *a += b);
        let mut p = z.params().clone();
        p.set_flat(&flat).unwrap();
        assert!(spectral_product(&p) <= 2.25 + 1e-9);
        assert!(dominates(
            spectral_from_distance_bound(&p, &z).unwrap(),
            spectral_product(&p)
        ));
    }
}

#[test]
fn output_bound_at_init_linear() {
    let z = InitSnapshot::new(net(4, 3, 8, 2, 1, Activation::Linear));
    let x = DenseVector::from(vec![0.3, -0.4, 1.2]);
    let b = output_bound(z.params(), &z, &x).unwrap();
    let expect = z.spectral_norms()[1] * z.spectral_norms()[0] * x.norm();
    assert!((b - expect).abs() < 1e-12);
    assert!(z.params().forward(&x).unwrap()[0].abs() <= b);
}

#[test]
fn output_bound_zero_input() {
    let z = InitSnapshot::new(net(5, 4, 8, 3, 1, Activation::Relu));
    let x = DenseVector::zeros(4);
    assert_eq!(output_bound(z.params(), &z, &x).unwrap(), 0.0);
    assert_eq!(z.params().forward(&x).unwrap()[0], 0.0);
}

#[test]
fn output_bound_dominates_every_layer() {
    let mut rng = Rng::new(11);
    for trial in 0..1000u64 {
        let h = 1 + rng.below(128);
        let d = 2 + rng.below(3);
        let n = 1 + rng.below(6);
        let k = 1 + rng.below(3);
        let act = if trial % 2 == 0 { Activation::Relu } else { Activation::Linear };
        let mut z0 = net(trial, n, h, d, k, act);
        if trial % 5 == 0 {
            // Exercise the initial-bias term as well.
            for l in 0..d {
                for b in z0.bias_mut(l).as_mut_slice() {
                    *b = 0.1 * rng.standard_normal();
                }
            }
        }
        let z = InitSnapshot::new(z0);
        let p = perturb(z.params(), 0.3 * rng.uniform() / (h as f64).sqrt(), &mut rng);
        let x = random_input(n, &mut rng);
        let trace = output_bound_trace(&p, &z, &x).unwrap();
        for (layer, bound) in trace.iter().enumerate() {
            let measured = p.layer_output(&x, layer).unwrap().norm();
            assert!(dominates(*bound, measured), "trial {trial} layer {layer}: {measured} > {bound}");
        }
        let r = distance_from_init(&p, &z).unwrap();
        assert!(output_bound_at_radius(&z, r, &x).unwrap() >= trace[d] * (1.0 - 1e-12));
    }
}

#[test]
fn gradient_bound_dominates_autodiff() {
    let mut rng = Rng::new(12);
    for trial in 0..1000u64 {
        let h = 1 + rng.below(64);
        let d = 2 + rng.below(3);
        let n = 1 + rng.below(5);
        let k = 1 + rng.below(2);
        let z = InitSnapshot::new(net(trial + 7000, n, h, d, k, Activation::Relu));
        let p = perturb(z.params(), 0.5 * rng.uniform() / (h as f64).sqrt(), &mut rng);
        let x = random_input(n, &mut rng);
        let layer = 1 + rng.below(d);
        let bound = gradient_bound(&p, &z, &x, layer).unwrap();
        let bias_bound = bias_gradient_bound(&p, &z, layer).unwrap();
        for i in 0..k {
            let g = output_gradient(&p, &x, i).unwrap();
            let gw = g.weight_norm(layer - 1);
            let gb = g.biases[layer - 1].norm();
            assert!(dominates(bound, gw), "trial {trial}: {gw} > {bound}");
            assert!(dominates(bias_bound, gb), "trial {trial}: bias {gb} > {bias_bound}");
        }
    }
}

#[test]
fn gradient_bound_last_layer_is_previous_output_bound() {
    let z = InitSnapshot::new(net(13, 3, 10, 3, 1, Activation::Relu));
    let p = perturb(z.params(), 0.05, &mut Rng::new(1));
    let x = DenseVector::from(vec![0.2, 0.9, 0.4]);
    let trace = output_bound_trace(&p, &z, &x).unwrap();
    let b = gradient_bound(&p, &z, &x, 3).unwrap();
    assert_eq!(b, trace[2]);
    // ∂f/∂W_d = φ(f⁽ᵈ⁻¹⁾)ᵀ exactly.
    let g = output_gradient(&p, &x, 0).unwrap();
    let hidden: f64 = p
        .layer_output(&x, 2)
        .unwrap()
        .iter()
        .map(|v| v.max(0.0).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!((g.weight_norm(2) - hidden).abs() < 1e-12);
    assert!(hidden <= b);
}

#[test]
fn gradient_bound_zero_input() {
    let z = InitSnapshot::new(net(14, 3, 6, 3, 1, Activation::Relu));
    let x = DenseVector::zeros(3);
    for l in 2..=3 {
        assert_eq!(gradient_bound(z.params(), &z, &x, l).unwrap(), 0.0);
    }
    let g = output_gradient(z.params(), &x, 0).unwrap();
    assert_eq!(g.weight_norm(1), 0.0);
    assert_eq!(g.weight_norm(2), 0.0);
    assert!(gradient_bound(z.params(), &z, &x, 0).is_err());
    assert!(gradient_bound(z.params(), &z, &x, 4).is_err());
}

#[test]
fn initial_loss_bound_examples() {
    let shape = NetShape::new(2, 4, 3, 1, Activation::Relu).unwrap();
    let z = InitSnapshot::new(NetParams::zeros(shape).unwrap());
    let xs: Vec<Vec<f64>> = vec![vec![0.1, 0.5], vec![0.9, 0.2], vec![0.4, 0.4]];
    let ys = [0.3, 1.0, 0.7];
    let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
    let bound = initial_loss_bound(&z, &refs, 1.0).unwrap();
    let measured = ys.iter().map(|y| y * y).sum::<f64>() / 3.0;
    assert!(bound >= 1.0 && measured <= bound);
}

#[test]
fn initial_loss_bound_dominates_measured_loss() {
    let mut rng = Rng::new(15);
    for trial in 0..200u64 {
        let n = 1 + rng.below(8);
        let k = 1 + rng.below(4);
        let z = InitSnapshot::new(net(trial, n, 4 + rng.below(60), 2 + rng.below(3), k, Activation::Relu));
        let xs: Vec<DenseVector> = (0..10).map(|_| random_input(n, &mut rng)).collect();
        let classes: Vec<usize> = (0..10).map(|_| rng.below(k)).collect();
        let mut loss = 0.0;
        for (x, &c) in xs.iter().zip(&classes) {
            let mut y = vec![0.0; k];
            y[c] = 1.0;
            let out = z.params().forward(x).unwrap();
            loss += crate::training::squared_loss(&out, &DenseVector::from(y)).unwrap();
        }
        loss /= 10.0;
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        assert!(loss <= initial_loss_bound(&z, &refs, 1.0).unwrap());
    }
}

#[test]
fn certificates_are_width_independent_at_fixed_radius() {
    let x = DenseVector::from(vec![0.5, 0.2, 0.8]);
    let xs: Vec<&[f64]> = vec![x.as_slice(); 4];
    let (mut out, mut rad, mut init) = (Vec::new(), Vec::new(), Vec::new());
    for (i, h) in [64usize, 128, 256, 512, 1024].into_iter().enumerate() {
        let z = InitSnapshot::new(net(100 + i as u64, 3, h, 3, 1, Activation::Linear));
        out.push(output_bound_at_radius(&z, 1.0, &x).unwrap());
        rad.push(linear_rademacher_bound(&z, 1.0, &xs).unwrap());
        init.push(initial_loss_bound(&z, &xs, 1.0).unwrap());
    }
    for series in [&out, &rad, &init] {
        let max = series.iter().cloned().fold(f64::MIN, f64::max);
        let min = series.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min < 2.0, "{series:?}");
    }
}

#[test]
fn linear_rademacher_bound_at_zero_radius() {
    let z = InitSnapshot::new(net(16, 2, 8, 3, 1, Activation::Linear));
    let xs: Vec<Vec<f64>> = vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 2.0]];
    let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
    let b = linear_rademacher_bound(&z, 0.0, &refs).unwrap();
    let sum_sq: f64 = xs.iter().flatten().map(|v| v * v).sum();
    let expect = z.spectral_norms().iter().product::<f64>() * sum_sq.sqrt();
    assert!((b - expect).abs() < 1e-12);

    // Exact E_ξ |Σ ξ_i f_Z(x_i)| by enumeration of the 8 sign vectors.
    let f: Vec<f64> = xs
        .iter()
        .map(|x| z.params().forward(&DenseVector::from(x.clone())).unwrap()[0])
        .collect();
    let mut mean_abs = 0.0;
    for mask in 0..8u32 {
        let s: f64 = (0..3)
            .map(|i| if mask >> i & 1 == 1 { f[i] } else { -f[i] })
            .sum();
        mean_abs += s.abs() / 8.0;
    }
    assert!(mean_abs <= b);
}

#[test]
fn linear_rademacher_bound_degree_in_r() {
    let z = InitSnapshot::new(net(17, 2, 8, 3, 1, Activation::Linear));
    let x = [0.3, 0.4];
    let xs: Vec<&[f64]> = vec![&x; 5];
    let r1 = 1e4;
    let r2 = 1e5;
    let b1 = linear_rademacher_bound(&z, r1, &xs).unwrap();
    let b2 = linear_rademacher_bound(&z, r2, &xs).unwrap();
    let s = (b2.ln() - b1.ln()) / (r2.ln() - r1.ln());
    assert!((s - 3.0).abs() < 0.01, "{s}");
}

#[test]
fn linear_rademacher_bound_rejects_relu_and_bad_input() {
    let relu = InitSnapshot::new(net(18, 2, 4, 2, 1, Activation::Relu));
    assert!(linear_rademacher_bound(&relu, 1.0, &[&[0.0, 1.0]]).is_err());
    let lin = InitSnapshot::new(net(18, 2, 4, 2, 1, Activation::Linear));
    assert!(linear_rademacher_bound(&lin, -1.0, &[&[0.0, 1.0]]).is_err());
    assert!(linear_rademacher_bound(&lin, 1.0, &[]).is_err());
    assert!(linear_rademacher_bound(&lin, 1.0, &[&[0.0]]).is_err());
}

#[test]
fn init_scaling_slopes() {
    let hs = [64usize, 128, 256, 512];
    let log_h: Vec<f64> = hs.iter().map(|&h| (h as f64).ln()).collect();
    let (mut l2, mut sp, mut sm) = (Vec::new(), Vec::new(), Vec::new());
    for &h in &hs {
        let reps = 2;
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for rep in 0..reps {
            let p = net(h as u64 * 31 + rep, 2, h, 4, 1, Activation::Relu);
            a += l2_product(&p).ln();
            b += spectral_product(&p).ln();
            c += spectral_measure(&p).ln();
        }
        l2.push(a / reps as f64);
        sp.push(b / reps as f64);
        sm.push(c / reps as f64);
    }
    assert!((slope(&log_h, &l2) - 2.0).abs() <= 0.2);
    assert!(slope(&log_h, &sp).abs() <= 0.1);
    assert!((slope(&log_h, &sm) - 3.0).abs() <= 0.2);
}

#[test]
fn report_on_fresh_init() {
    let z = InitSnapshot::new(net(19, 3, 12, 3, 1, Activation::Linear));
    let probes: Vec<&[f64]> = vec![&[0.1, 0.2, 0.3], &[0.9, 0.0, 0.4]];
    let rep = CapacityReport::compute(z.params(), &z, &probes).unwrap();
    assert_eq!(rep.r, 0.0);
    assert!(rep.violations().is_empty());
    assert!(rep.all_finite());
    assert_eq!(rep.spectral_from_distance.bound, rep.spectral_product);
    let (total, per) = rep.linear_rademacher.unwrap();
    assert!((total / 2.0 - per).abs() < 1e-15);
    let cols = rep.columns();
    assert_eq!(cols[0].0, "r");
    assert_eq!(cols.len(), 7 + 2 * 3 + 3 * 3);
    assert!(CapacityReport::compute(z.params(), &z, &[]).is_err());
}

#[test]
fn report_detects_post_hoc_scaling() {
    let z = InitSnapshot::new(net(20, 3, 12, 3, 1, Activation::Relu));
    let mut p = perturb(z.params(), 0.01, &mut Rng::new(3));
    let probes: Vec<&[f64]> = vec![&[0.1, 0.2, 0.3]];
    assert!(CapacityReport::compute(&p, &z, &probes).unwrap().violations().is_empty());
    let r = distance_from_init(&p, &z).unwrap();
    *p.weight_mut(1) = p.weight(1).scaled(100.0);
    // Against the radius recorded before the corruption the spectral
    // certificate no longer holds.
    assert!(!dominates(spectral_bound_at_radius(&z, r), spectral_product(&p)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn certificates_monotone_in_r(seed in 0u64..1000, t1 in 0.0f64..2.0, dt in 0.0f64..2.0) {
        let z = InitSnapshot::new(net(seed, 3, 6, 3, 1, Activation::Linear));
        let mut rng = Rng::new(seed + 1);
        let x = random_input(3, &mut rng);
        let xs: Vec<&[f64]> = vec![x.as_slice()];
        let t2 = t1 + dt;
        prop_assert!(spectral_bound_at_radius(&z, t2) >= spectral_bound_at_radius(&z, t1));
        prop_assert!(output_bound_at_radius(&z, t2, &x).unwrap() >= output_bound_at_radius(&z, t1, &x).unwrap());
        prop_assert!(linear_rademacher_bound(&z, t2, &xs).unwrap() >= linear_rademacher_bound(&z, t1, &xs).unwrap());

        // Along a ray p_t = z + tΔ every per-network certificate grows with t.
        let dir = perturb(z.params(), 0.1, &mut rng);
        let along = |t: f64| {
            let flat: Vec<f64> = z.params().to_flat().iter().zip(dir.to_flat())
                .map(|(a, b)| a + t * (b - a)).collect();
            let mut p = z.params().clone();
            p.set_flat(&flat).unwrap();
            p
        };
        let (p1, p2) = (along(t1), along(t2));
        prop_assert!(output_bound(&p2, &z, &x).unwrap() >= output_bound(&p1, &z, &x).unwrap());
        prop_assert!(spectral_from_distance_bound(&p2, &z).unwrap() >= spectral_from_distance_bound(&p1, &z).unwrap());
        for l in 1..=3 {
            prop_assert!(gradient_bound(&p2, &z, &x, l).unwrap() >= gradient_bound(&p1, &z, &x, l).unwrap());
        }
    }

    #[test]
    fn report_entries_nonnegative(seed in 0u64..1000, scale in 0.0f64..0.5) {
        let z = InitSnapshot::new(net(seed, 2, 5, 3, 2, Activation::Relu));
        let p = perturb(z.params(), scale, &mut Rng::new(seed));
        let probes: Vec<&[f64]> = vec![&[0.3, 0.7], &[1.0, 0.0]];
        let rep = CapacityReport::compute(&p, &z, &probes).unwrap();
        prop_assert!(rep.all_finite());
        prop_assert!(rep.columns().iter().all(|(_, v)| *v >= 0.0));
        prop_assert!(rep.violations().is_empty());
    }
}
