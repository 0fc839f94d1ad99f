use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use svct_core::baselines::{estimate_lipschitz, fista_tv, linear_fbp_baseline, FistaConfig};
use svct_core::filtering::{apply_ramp_with, fbp, ramp_kernel, FilterMethod, FrequencyRamp};
use svct_core::geometry::{flip_detectors, uniform_angles};
use svct_core::metrics::psnr_roi;
use svct_core::phantom::{make_phantom, PhantomSpec, SHEPP_LOGAN};
use svct_core::sinogram_ops::{
    build_cascade, linear_upsample_angular, sparse_sample, two_ends_extend,
};
use svct_core::{backproject, radon_forward, Execution, Geometry, Image, Sinogram};

fn asymmetric_phantom(n: usize) -> Image {
    let c = (n as f64 - 1.0) / 2.0;
    Image::from_fn(n, |r, k| {
        let (y, x) = ((r as f64 - c) / c, (k as f64 - c) / c);
        let blob = (-((x - 0.3).powi(2) + (y + 0.2).powi(2)) / 0.05).exp();
        let bar = if (-0.5..-0.1).contains(&x) && (0.1..0.6).contains(&y) { 0.5 } else { 0.0 };
        blob + bar
    })
}

#[test]
fn flip_identity_holds_for_simulated_projections() {
    let n = 64;
    let img = asymmetric_phantom(n);
    let thetas: Vec<f64> = (0..12).map(|i| i as f64 * PI / 12.0 + 0.013).collect();
    let shifted: Vec<f64> = thetas.iter().map(|t| t + PI).collect();
    let a = radon_forward(&img, &Geometry::new(n, n, 1.0, thetas).unwrap()).unwrap();
    let b = radon_forward(&img, &Geometry::new(n, n, 1.0, shifted).unwrap()).unwrap();
    let tol = 1e-3 * a.max_abs();
    for i in 0..a.num_angles() {
        let flipped = flip_detectors(a.column(i));
        for (j, (x, y)) in flipped.iter().zip(b.column(i)).enumerate().take(n - 1).skip(1) {
            assert!((x - y).abs() <= tol, "angle {i} det {j}: {x} vs {y}");
        }
    }
}

#[test]
fn two_ends_columns_match_out_of_range_projections() {
    let n = 48;
    let img = asymmetric_phantom(n);
    let g = Geometry::parallel(n, 180).unwrap();
    let ext = two_ends_extend(&radon_forward(&img, &g).unwrap(), 6).unwrap();
    let direct = radon_forward(&img, &Geometry::new(n, n, 1.0, ext.angles.clone()).unwrap()).unwrap();
    let tol = 1e-3 * direct.max_abs();
    for a in (0..6).chain(186..192) {
        for j in 1..n - 1 {
            assert!((ext.get(j, a) - direct.get(j, a)).abs() <= tol, "view {a} det {j}");
        }
    }
}

#[test]
fn rotationally_symmetric_phantom_has_constant_columns() {
    let n = 64;
    let c = 31.5;
    let img = Image::from_fn(n, |r, k| {
        let d2 = (r as f64 - c).powi(2) + (k as f64 - c).powi(2);
        (-d2 / 120.0).exp()
    });
    let sino = radon_forward(&img, &Geometry::parallel(n, 90).unwrap()).unwrap();
    let tol = 1e-2 * sino.max_abs();
    for a in 1..sino.num_angles() {
        for j in 0..n {
            assert!((sino.get(j, a) - sino.get(j, 0)).abs() <= tol);
        }
    }
}

#[test]
fn ramp_spectrum_follows_abs_frequency() {
    let s = 64;
    let k = ramp_kernel(s - 1, 1.0).unwrap();
    let len = 4096;
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for n in -(s as isize - 1)..s as isize {
        buf[n.rem_euclid(len as isize) as usize].re = k.tap(n);
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    // continuous frequency f in cycles/sample maps to |f|; Nyquist is 0.5
    let nyquist = buf[len / 2].re;
    assert!((nyquist - 0.5).abs() / 0.5 <= 0.05, "H(Nyquist) = {nyquist}");
    for i in (len / 16..len / 2).step_by(len / 64) {
        let f = i as f64 / len as f64;
        assert!((buf[i].re - f).abs() / f <= 0.05, "f {f}: {}", buf[i].re);
    }
    let fr = FrequencyRamp::new(&k, s);
    let response = fr.response();
    assert_eq!(response.len(), fr.padded_len());
    assert!(response.iter().all(|&h| h >= -1e-6));
}

#[test]
fn spatial_and_frequency_ramps_agree() {
    use rand::{Rng, SeedableRng};
    for seed in 0..4u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..64 * 45).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sino = Sinogram::from_data(64, uniform_angles(45), data).unwrap();
        let a = apply_ramp_with(&sino, FilterMethod::Spatial, Execution::Sequential);
        let b = apply_ramp_with(&sino, FilterMethod::Frequency, Execution::Sequential);
        let scale = a.max_abs();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() <= 1e-4 * scale);
        }
    }
}

#[test]
fn kernel_tap_sum_matches_truncated_series() {
    // The closed-form taps are not exactly zero-sum once truncated: the
    // missing tail is 2·Σ_{odd n > W} 1/(π²n²) ≈ 1/(π²(W+1)), and the full odd
    // series sums to π²/8.
    for w in [7usize, 31, 63, 319] {
        let k = ramp_kernel(w, 1.0).unwrap();
        let sum: f64 = k.taps.iter().sum();
        let head: f64 = (1..=w).step_by(2).map(|n| 1.0 / (n * n) as f64).sum();
        let tail = 2.0 / (PI * PI) * (PI * PI / 8.0 - head);
        assert!(tail > 1.0 / (PI * PI * (w + 2) as f64) && tail < 1.0 / (PI * PI * w as f64));
        assert!((sum - tail).abs() < 1e-9, "w {w}: {sum} vs {tail}");
        for i in 0..k.taps.len() {
            assert_eq!(k.taps[i], k.taps[k.taps.len() - 1 - i]);
        }
    }
}

#[test]
fn phantom_mass_matches_supersampled_rasterizer() {
    let n = 320;
    let img = make_phantom(&PhantomSpec::shepp_logan(n));
    let mass: f64 = img.pixels.iter().sum();
    // 4×4 supersampling, membership via the rotated quadratic form.
    let sub = 4;
    let half = n as f64 / 2.0;
    let mut oracle = 0.0;
    for r in 0..n {
        for k in 0..n {
            for sr in 0..sub {
                for sk in 0..sub {
                    let px = k as f64 + (sk as f64 + 0.5) / sub as f64 - 0.5;
                    let py = r as f64 + (sr as f64 + 0.5) / sub as f64 - 0.5;
                    let x = (px - (n as f64 - 1.0) / 2.0) / half;
                    let y = ((n as f64 - 1.0) / 2.0 - py) / half;
                    let mut v = 0.0;
                    for e in SHEPP_LOGAN.iter() {
                        let phi = e.angle_deg * PI / 180.0;
                        let (c, s) = (phi.cos(), phi.sin());
                        let (dx, dy) = (x - e.center_x, y - e.center_y);
                        let q = ((c * dx + s * dy) / e.semi_x).powi(2)
                            + ((s * dx - c * dy) / e.semi_y).powi(2);
                        if q <= 1.0 {
                            v += e.intensity;
                        }
                    }
                    oracle += v.clamp(0.0, 1.0) / (sub * sub) as f64;
                }
            }
        }
    }
    assert!((mass - oracle).abs() / oracle <= 0.005, "{mass} vs {oracle}");
}

#[test]
fn trailing_angles_follow_flip_interpolation() {
    let n = 64;
    let c = 31.5;
    let img = Image::from_fn(n, |r, k| {
        let (y, x) = (r as f64 - c, k as f64 - c);
        (-((x - 4.0).powi(2) + (y + 3.0).powi(2)) / 300.0).exp()
    });
    let g = Geometry::parallel(n, 180).unwrap();
    let full = radon_forward(&img, &g).unwrap();
    let up = linear_upsample_angular(&sparse_sample(&full, 8).unwrap(), 180).unwrap();
    for a in 177..180 {
        let num: f64 = (0..n).map(|j| (up.get(j, a) - full.get(j, a)).powi(2)).sum();
        let den: f64 = (0..n).map(|j| full.get(j, a).powi(2)).sum();
        assert!((num / den).sqrt() <= 0.05, "view {a}: rel {}", (num / den).sqrt());
    }
}

#[test]
fn cascade_channels_improve_with_view_count() {
    let n = 64;
    let truth = make_phantom(&PhantomSpec::shepp_logan(n));
    let g = Geometry::parallel(n, 180).unwrap();
    let full = radon_forward(&truth, &g).unwrap();
    let sparse = sparse_sample(&full, 8).unwrap();
    let stack = build_cascade(&sparse, &full, &g).unwrap();
    assert_eq!(stack.source_view_counts, [23, 45, 90, 180]);
    assert_eq!(stack.channels[3], fbp(&full, &g).unwrap());
    let scores: Vec<f64> = stack
        .channels
        .iter()
        .map(|ch| psnr_roi(ch, &truth).unwrap())
        .collect();
    assert!(scores.windows(2).all(|w| w[1] >= w[0]), "{scores:?}");
}

#[test]
fn linear_fbp_baseline_properties() {
    let n = 64;
    let truth = make_phantom(&PhantomSpec::shepp_logan(n));
    let g = Geometry::parallel(n, 180).unwrap();
    let full = radon_forward(&truth, &g).unwrap();
    assert_eq!(linear_fbp_baseline(&full, &g).unwrap(), fbp(&full, &g).unwrap());
    let sparse = sparse_sample(&full, 8).unwrap();
    let lin = linear_fbp_baseline(&sparse, &g).unwrap();
    assert_eq!(lin.size, n);
    let p_lin = psnr_roi(&lin, &truth).unwrap();
    let p_sparse = psnr_roi(&fbp(&sparse, &g).unwrap(), &truth).unwrap();
    assert!(p_lin > p_sparse, "{p_lin} vs {p_sparse}");
}

#[test]
fn lipschitz_bounds_normal_operator() {
    use rand::{Rng, SeedableRng};
    let g = Geometry::parallel(32, 30).unwrap();
    let l = estimate_lipschitz(&g, 200, 3).unwrap();
    for seed in 0..5u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v = Image::from_fn(32, |_, _| rng.gen_range(-1.0..1.0));
        let w = backproject(&radon_forward(&v, &g).unwrap(), &g).unwrap();
        let nv = v.pixels.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nw = w.pixels.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(nw <= 1.01 * l * nv, "{nw} > {l}·{nv}");
    }
}

#[test]
fn fista_without_tv_shrinks_residual() {
    let n = 32;
    let truth = make_phantom(&PhantomSpec::random(n, 6, 5));
    let g = Geometry::parallel(n, 90).unwrap();
    let sino = radon_forward(&truth, &g).unwrap();
    let residual = |x: &Image| {
        let ax = radon_forward(x, &g).unwrap();
        ax.data.iter().zip(&sino.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    let init = residual(&fbp(&sino, &g).unwrap());
    let cfg = FistaConfig {
        tv_weight: 0.0,
        outer_iterations: 150,
        ..Default::default()
    };
    let res = fista_tv(&sino, &g, &cfg).unwrap();
    let last = residual(&res.image);
    assert!(last * 10.0 <= init, "{init} -> {last}");
    assert!(res.objective.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn fista_tv_improves_on_sparse_fbp() {
    let n = 64;
    let truth = make_phantom(&PhantomSpec::shepp_logan(n));
    let g = Geometry::parallel(n, 16).unwrap();
    let sino = radon_forward(&truth, &g).unwrap();
    let base = psnr_roi(&fbp(&sino, &g).unwrap(), &truth).unwrap();
    let res = fista_tv(&sino, &g, &FistaConfig::default()).unwrap();
    assert!(res.objective.last().unwrap() < &res.objective[0]);
    assert!(psnr_roi(&res.image, &truth).unwrap() >= base + 3.0);
}
