use svct_core::filtering::fbp;
use svct_core::metrics::psnr_roi;
use svct_core::phantom::{make_phantom, PhantomSpec};
use svct_core::sinogram_ops::sparse_sample;
use svct_core::{radon_forward, Geometry};

#[test]
fn fbp_psnr_grows_with_view_count() {
    let g = Geometry::parallel(320, 180).unwrap();
    let truth = make_phantom(&PhantomSpec::shepp_logan(320));
    let full = radon_forward(&truth, &g).unwrap();
    let mut scores = Vec::new();
    for step in [8, 4, 2, 1] {
        let sino = sparse_sample(&full, step).unwrap();
        let rec = fbp(&sino, &g).unwrap();
        scores.push((sino.num_angles(), psnr_roi(&rec, &truth).unwrap()));
    }
    assert!(scores.windows(2).all(|w| w[1].1 >= w[0].1 + 0.5), "{scores:?}");
    assert!(scores[3].1 >= scores[0].1 + 8.0, "{scores:?}");
}
