mod common;

use common::{load_fixture, oracle_mse, oracle_psnr, oracle_ssim, random_image};
use purikit::metrics::{attenuation_ratio, mse, perturbation_stats, psnr, ssim};
use purikit::transforms::{ResampleKernel, TransformChain};
use purikit::{Error, ImageF};

#[test]
fn psnr_mse_match_straight_loop() {
    for seed in 0..5 {
        let a = random_image(40, 30, 3, seed);
        let b = random_image(40, 30, 3, seed + 100);
        assert!((mse(&a, &b).unwrap() - oracle_mse(&a, &b)).abs() < 1e-12);
        assert!((psnr(&a, &b).unwrap().value - oracle_psnr(&a, &b)).abs() < 1e-9);
    }
}

#[test]
fn ssim_matches_per_window_oracle_on_natural_image() {
    let a = load_fixture("face64.png");
    let b = a.map(|v| (v * 0.9 + 0.03).min(1.0));
    assert!((ssim(&a, &b).unwrap().value - oracle_ssim(&a, &b)).abs() < 1e-9);
}

#[test]
fn ssim_symmetric_and_bounded() {
    let a = random_image(32, 32, 3, 1);
    let b = random_image(32, 32, 3, 2);
    let ab = ssim(&a, &b).unwrap().value;
    assert_eq!(ab, ssim(&b, &a).unwrap().value);
    assert!((-1.0..=1.0).contains(&ab));
    assert!((ssim(&a, &a).unwrap().value - 1.0).abs() < 1e-12);
}

#[test]
fn psnr_caps_identical_images() {
    let a = random_image(16, 16, 3, 4);
    assert_eq!(psnr(&a, &a).unwrap().value, 100.0);
}

#[test]
fn ssim_rejects_tiny_images() {
    let a = ImageF::filled(10, 40, 3, 0.5).unwrap();
    assert!(matches!(ssim(&a, &a), Err(Error::TooSmall(_))));
}

#[test]
fn attenuation_identity_is_one() {
    let x = load_fixture("face64.png");
    let xh = x.map(|v| (v + 0.02).min(1.0));
    let r = attenuation_ratio(&x, &xh, &TransformChain::identity(), ResampleKernel::default()).unwrap();
    assert_eq!(r, 1.0);
    assert!(matches!(
        attenuation_ratio(&x, &x, &TransformChain::identity(), ResampleKernel::default()),
        Err(Error::ZeroPerturbation)
    ));
}

#[test]
fn perturbation_stats_by_hand() {
    let x = ImageF::filled(2, 1, 1, 0.5).unwrap();
    let y = ImageF::new(2, 1, 1, vec![0.6, 0.3]).unwrap();
    let st = perturbation_stats(&x, &y).unwrap();
    assert!((st.linf - 0.2).abs() < 1e-15);
    assert!((st.l2 - (0.01f64 + 0.04).sqrt()).abs() < 1e-15);
    assert!((st.mean_abs - 0.15).abs() < 1e-15);
}
