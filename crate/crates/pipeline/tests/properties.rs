use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use svct_core::geometry::uniform_angles;
use svct_core::{Image, Sinogram};
use svct_pipeline::augment::{apply_affine, random_affine, sample_affine, AffineParams};
use svct_pipeline::data::{sinogram_to_tensor, tensor_to_sinogram};
use svct_pipeline::train::disc_updates;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schedule_is_a_ceiling(i in 1usize..10_000, k in 1usize..50) {
        let d = disc_updates(i, k);
        prop_assert!(d * k >= i && (d - 1) * k < i);
        prop_assert!(disc_updates(i + 1, k) >= d);
    }

    #[test]
    fn sinogram_tensor_round_trip(seed in any::<u64>(), d in 2usize..20, p in 1usize..20, scale in 0.5f64..100.0) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..d * p).map(|_| rng.gen_range(0.0..10.0)).collect();
        let s = Sinogram::from_data(d, uniform_angles(p), data).unwrap();
        let t = sinogram_to_tensor(&s, scale);
        prop_assert_eq!(t.shape, [1, 1, d, p]);
        prop_assert_eq!(t.at(0, 0, d - 1, 0) as f64, ((s.get(d - 1, 0) / scale) as f32) as f64);
        let back = tensor_to_sinogram(&t, 0, s.angles.clone(), scale).unwrap();
        for (a, b) in back.data.iter().zip(&s.data) {
            prop_assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
    }

    #[test]
    fn identity_augmentation_keeps_the_image(seed in any::<u64>(), n in 4usize..32) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = Image::from_fn(n, |_, _| rng.gen_range(0.0..1.0));
        let out = random_affine(&img, &AffineParams::identity(), &mut rng);
        for (a, b) in out.pixels.iter().zip(&img.pixels) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn sampled_affines_stay_in_range(seed in any::<u64>()) {
        let p = AffineParams::default();
        let a = sample_affine(&p, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(a.rotation_deg.abs() <= 30.0 && a.shear_deg.abs() <= 20.0);
        prop_assert!(a.tx.abs() <= 0.1 && a.ty.abs() <= 0.1);
        prop_assert!((0.5..=1.1).contains(&a.scale));
    }

    #[test]
    fn augmentation_keeps_values_in_the_input_range(seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = Image::from_fn(24, |_, _| rng.gen_range(0.0..1.0));
        let a = sample_affine(&AffineParams::default(), &mut rng);
        let out = apply_affine(&img, &a);
        prop_assert!(out.pixels.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
