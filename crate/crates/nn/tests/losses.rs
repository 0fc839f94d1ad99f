use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use svct_core::filtering::{apply_ramp_with, ramp_kernel, FilterMethod};
use svct_core::geometry::uniform_angles;
use svct_core::{Execution, Sinogram};
use svct_nn::builders::{build_patch_discriminator, random_patch};
use svct_nn::losses::{
    adv_loss_discriminator, adv_loss_generator, content_loss, dp_loss, hf_loss, local_adv_losses,
    ramp_filter_rows, sin_objective, LossParts, LossWeights,
};
use svct_nn::{Network, Tensor};

fn scalar(v: f64) -> Tensor<f64> {
    Tensor::from_vec([1, 1, 1, 1], vec![v]).unwrap()
}

fn random(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

#[test]
fn dp_fixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = vec![random([1, 2, 3, 3], &mut rng), random([1, 4, 2, 2], &mut rng)];
    assert_eq!(dp_loss(&a, &a).unwrap().0, 0.0);
    assert!((dp_loss(&[scalar(2.0)], &[scalar(0.0)]).unwrap().0 - 4.0).abs() <= 1e-9);
    // layer MSEs 0.5 and 1.5
    let x = Tensor::from_vec([1, 1, 1, 2], vec![1.0, 0.0]).unwrap();
    let y = Tensor::from_vec([1, 1, 1, 2], vec![0.0, 0.0]).unwrap();
    let u = Tensor::from_vec([1, 2, 1, 1], vec![1.0, 2.0]).unwrap();
    let v = Tensor::from_vec([1, 2, 1, 1], vec![0.0, 2.0 - 2f64.sqrt()]).unwrap();
    let two = dp_loss(&[x, u], &[y, v]).unwrap().0;
    assert!((two - 1.0).abs() <= 1e-9, "{two}");
    assert!(dp_loss(&[scalar(1.0)], &[]).is_err());
    assert!(dp_loss(&[scalar(1.0)], &[Tensor::zeros([1, 1, 1, 2])]).is_err());
}

#[test]
fn zero_cases_and_log_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = random([2, 1, 16, 12], &mut rng);
    assert_eq!(content_loss(&s, &s).unwrap().0, 0.0);
    assert_eq!(hf_loss(&s, &s, &ramp_kernel(15, 1.0).unwrap()).unwrap().0, 0.0);
    let half = Tensor::full([1, 1, 4, 4], 0.5);
    assert!((adv_loss_discriminator(&half, &half).unwrap().0 - 2f64.ln()).abs() <= 1e-9);
    assert!((adv_loss_generator(&half).unwrap().0 + 2f64.ln()).abs() <= 1e-9);
    let parts = LossParts { adversarial: 0.1, content: 0.2, dp: 0.3, hf: 0.4, ..Default::default() };
    assert!((sin_objective(&parts, &LossWeights::default()) - 36.1).abs() <= 1e-9);
}

#[test]
fn hf_loss_is_content_loss_of_ramp_filtered_sinograms() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (s, p) = (24, 10);
    let a: Vec<f64> = (0..s * p).map(|_| rng.gen_range(0.0..1.0)).collect();
    let b: Vec<f64> = (0..s * p).map(|_| rng.gen_range(0.0..1.0)).collect();
    let ramp = |d: &[f64]| {
        let sino = Sinogram::from_data(s, uniform_angles(p), d.to_vec()).unwrap();
        apply_ramp_with(&sino, FilterMethod::Spatial, Execution::Sequential).data
    };
    let (ra, rb) = (ramp(&a), ramp(&b));
    let expected = ra.iter().zip(&rb).map(|(x, y)| (x - y).abs()).sum::<f64>() / (s * p) as f64;
    // sinograms are angle-major; tensors put detectors on the height axis
    let tensor = |d: &[f64]| Tensor::from_fn([1, 1, s, p], |i| d[(i % p) * s + i / p]);
    let got = hf_loss(&tensor(&a), &tensor(&b), &ramp_kernel(s - 1, 1.0).unwrap()).unwrap().0;
    assert!((got - expected).abs() <= 1e-10 * expected, "{got} vs {expected}");
}

#[test]
fn ramp_rows_is_self_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let k = ramp_kernel(11, 1.0).unwrap();
    let (x, y) = (random([2, 1, 12, 5], &mut rng), random([2, 1, 12, 5], &mut rng));
    let dot = |a: &Tensor<f64>, b: &Tensor<f64>| a.data.iter().zip(&b.data).map(|(p, q)| p * q).sum::<f64>();
    let lhs = dot(&ramp_filter_rows(&x, &k), &y);
    let rhs = dot(&x, &ramp_filter_rows(&y, &k));
    assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
}

#[test]
fn local_losses_on_a_fixed_window_match_the_global_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gen = Tensor::from_fn([2, 1, 32, 48], |_| rng.gen_range(0.0..1.0));
    let tgt = Tensor::from_fn([2, 1, 32, 48], |_| rng.gen_range(0.0..1.0));
    let mut d = Network::<f64>::new(build_patch_discriminator(4, 1).unwrap(), 3);
    let ((pg, pt), window) = random_patch((&gen, &tgt), 11).unwrap();
    assert_eq!(pg.shape, [2, 1, 8, 12]);
    let (g, dl) = local_adv_losses(&gen, &tgt, &mut d, window).unwrap();
    let fake = d.forward(&pg, svct_nn::Mode::Train).unwrap().output;
    let real = d.forward(&pt, svct_nn::Mode::Train).unwrap().output;
    assert_eq!(g, adv_loss_generator(&fake).unwrap().0);
    assert_eq!(dl, adv_loss_discriminator(&real, &fake).unwrap().0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dp_loss_scales_quadratically_and_ignores_layer_order(seed in any::<u64>(), c in -4.0f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = vec![random([1, 2, 3, 3], &mut rng), random([2, 1, 2, 5], &mut rng)];
        let b = vec![random([1, 2, 3, 3], &mut rng), random([2, 1, 2, 5], &mut rng)];
        let base = dp_loss(&a, &b).unwrap().0;
        let scaled = |v: &[Tensor<f64>]| v.iter().map(|t| t.scale(c)).collect::<Vec<_>>();
        let s = dp_loss(&scaled(&a), &scaled(&b)).unwrap().0;
        prop_assert!((s - c * c * base).abs() <= 1e-12 * base.max(1.0) * c.abs().max(1.0).powi(2));
        let (ra, rb): (Vec<_>, Vec<_>) = (a.iter().rev().cloned().collect(), b.iter().rev().cloned().collect());
        prop_assert!((dp_loss(&ra, &rb).unwrap().0 - base).abs() <= 1e-15 * base.max(1.0));
    }

    #[test]
    fn losses_are_non_negative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random([1, 1, 8, 6], &mut rng), random([1, 1, 8, 6], &mut rng));
        prop_assert!(content_loss(&a, &b).unwrap().0 >= 0.0);
        prop_assert!(hf_loss(&a, &b, &ramp_kernel(7, 1.0).unwrap()).unwrap().0 >= 0.0);
        let p = Tensor::from_fn([1, 1, 4, 4], |_| rng.gen_range(0.0..=1.0));
        let q = Tensor::from_fn([1, 1, 4, 4], |_| rng.gen_range(0.0..=1.0));
        prop_assert!(adv_loss_discriminator(&p, &q).unwrap().0 >= 0.0);
        prop_assert!(adv_loss_generator(&q).unwrap().0 <= 0.0);
    }
}
