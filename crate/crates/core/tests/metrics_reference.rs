use std::path::PathBuf;

use svct_core::io::{find, load_records};
use svct_core::metrics::{psnr, ssim, GridRef, Roi, DEFAULT_DATA_RANGE};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn metrics_match_reference_fixtures() {
    let records = load_records(&fixture("metric_pairs.ctt")).unwrap();
    let expected = std::fs::read_to_string(fixture("metric_expected.txt")).unwrap();
    let mut checked = 0;
    for line in expected.lines().filter(|l| !l.starts_with('#')) {
        let f: Vec<&str> = line.split_whitespace().collect();
        let (name, roi) = (f[0], if f[1] == "disk" { Roi::Disk } else { Roi::Full });
        let want_psnr: f64 = f[2].parse().unwrap();
        let want_ssim: f64 = f[3].parse().unwrap();
        let pred = find(&records, &format!("{name}/pred")).unwrap();
        let target = find(&records, &format!("{name}/target")).unwrap();
        let (p, t) = (pred.to_f64(), target.to_f64());
        let (rows, cols) = (pred.dims[0], pred.dims[1]);
        let grid = |data| GridRef { rows, cols, data };
        let got_psnr = psnr(grid(&p), grid(&t), roi, DEFAULT_DATA_RANGE).unwrap();
        let got_ssim = ssim(grid(&p), grid(&t), roi, DEFAULT_DATA_RANGE).unwrap();
        assert!((got_psnr - want_psnr).abs() <= 1e-9, "{name}: psnr {got_psnr} vs {want_psnr}");
        assert!((got_ssim - want_ssim).abs() <= 1e-6, "{name}: ssim {got_ssim} vs {want_ssim}");
        checked += 1;
    }
    assert_eq!(checked, 4);
}
