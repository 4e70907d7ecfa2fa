mod common;

use common::{load_fixture, random_image, synthetic_portrait};
use proptest::prelude::*;
use purikit::masking::RegionMask;
use purikit::metrics::ssim;
use purikit::perturbsim::{generate, PerturbKind, PerturbSpec};
use purikit::purify::{background_path, face_path, fuse, purify, purify_with_mask, BlendMode, PurifyParams};
use purikit::srbackend::SrBackendSpec;
use purikit::transforms::{jpeg_roundtrip, resample, ResampleKernel, Subsampling};
use purikit::{Error, ImageF};

fn l2(a: &ImageF, b: &ImageF) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn ones(img: &ImageF) -> RegionMask {
    RegionMask::constant(img.width(), img.height(), 1.0).unwrap()
}

#[test]
fn degenerate_config_is_identity() {
    for img in [load_fixture("face64.png"), random_image(33, 17, 3, 1), random_image(20, 20, 1, 2)] {
        assert_eq!(purify(&img, &PurifyParams::degenerate(), false).unwrap().image, img);
    }
}

#[test]
fn extreme_masks_select_one_path() {
    let img = load_fixture("face64.png");
    let p = PurifyParams::default();
    let x_f = face_path(&img, &p).unwrap();
    let x_g = background_path(&img, &p).unwrap();
    assert_eq!(purify_with_mask(&img, &p, &ones(&img), false).unwrap().image, x_f);
    let zeros = RegionMask::constant(64, 64, 0.0).unwrap();
    assert_eq!(purify_with_mask(&img, &p, &zeros, false).unwrap().image, x_g);
}

#[test]
fn face_path_matches_composed_oracle() {
    let img = load_fixture("cat128.png");
    let p = PurifyParams { lambda: 0.3, ..PurifyParams::default() };
    let k = ResampleKernel::Lanczos(3);
    let j = jpeg_roundtrip(&img, 75, Subsampling::S420).unwrap();
    let d = resample(&j, 64, 64, k).unwrap();
    let s = resample(&d, 128, 128, k).unwrap();
    let expect = s.zip_map(&img, |s, x| (0.7 * s + 0.3 * x).clamp(0.0, 1.0)).unwrap();
    let got = face_path(&img, &p).unwrap();
    assert!(l2(&got, &expect) / (128.0 * 128.0 * 3.0f64).sqrt() < 1e-9);
}

#[test]
fn background_path_matches_composed_oracle() {
    let img = load_fixture("face64.png");
    let k = ResampleKernel::Lanczos(3);
    let expect = resample(&resample(&img, 128, 128, k).unwrap(), 64, 64, k).unwrap();
    let got = background_path(&img, &PurifyParams::default()).unwrap();
    let worst = got.data().iter().zip(expect.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-6);
}

#[test]
fn jpeg_none_skips_compression() {
    let img = random_image(24, 24, 3, 5);
    let p = PurifyParams { jpeg_q: None, lambda: 0.0, ..PurifyParams::default() };
    let k = ResampleKernel::Lanczos(3);
    let expect = resample(&resample(&img, 12, 12, k).unwrap(), 24, 24, k).unwrap();
    assert_eq!(face_path(&img, &p).unwrap(), expect);
}

#[test]
fn lambda_pulls_toward_input() {
    for seed in 0..4 {
        let img = random_image(32, 32, 3, seed);
        let d = |l: f64| {
            let p = PurifyParams { lambda: l, ..PurifyParams::default() };
            l2(&purify_with_mask(&img, &p, &ones(&img), false).unwrap().image, &img)
        };
        let (a, b, c) = (d(0.8), d(0.4), d(0.0));
        assert!(a <= b + 1e-9 && b <= c + 1e-9, "{a} {b} {c}");
        assert!(d(1.0) < 1e-12);
    }
}

#[test]
fn literal_blend_is_clamped_sum() {
    let img = random_image(16, 16, 3, 9);
    let conv = PurifyParams { lambda: 0.0, ..PurifyParams::default() };
    let lit = PurifyParams { lambda: 0.5, blend_mode: BlendMode::Literal, ..PurifyParams::default() };
    let s = face_path(&img, &conv).unwrap();
    let expect = s.zip_map(&img, |s, x| (s + 0.5 * x).clamp(0.0, 1.0)).unwrap();
    assert_eq!(face_path(&img, &lit).unwrap(), expect);
}

#[test]
fn odd_sizes_come_back_at_input_size() {
    let img = random_image(37, 21, 3, 11);
    let out = purify(&img, &PurifyParams::default(), true).unwrap();
    assert_eq!(out.image.dims(), (37, 21));
    let trace = out.trace.unwrap();
    assert_eq!(trace.x_jd.dims(), (18, 10));
    assert!(trace.total_s() > 0.0);
}

#[test]
fn invalid_parameters_are_rejected() {
    let img = random_image(16, 16, 3, 0);
    let bad_lambda = PurifyParams { lambda: 1.5, ..PurifyParams::default() };
    assert!(purify(&img, &bad_lambda, false).is_err());
    let bad_scale = PurifyParams { face_sr: SrBackendSpec::interp(ResampleKernel::default(), 4).unwrap(), ..PurifyParams::default() };
    assert!(matches!(purify(&img, &bad_scale, false), Err(Error::ScaleMismatch { .. })));
    let small = RegionMask::constant(8, 8, 1.0).unwrap();
    assert!(matches!(
        purify_with_mask(&img, &PurifyParams::default(), &small, false),
        Err(Error::MaskShapeMismatch { .. })
    ));
}

#[test]
fn default_params_improve_ssim_on_portrait() {
    let x = synthetic_portrait(256, 3);
    let xh = generate(&x, &PerturbSpec::new(PerturbKind::Sign, 8.0 / 255.0, 3).unwrap()).unwrap();
    let p = purify(&xh, &PurifyParams::default(), false).unwrap().image;
    let (before, after) = (ssim(&xh, &x).unwrap().value, ssim(&p, &x).unwrap().value);
    println!("ssim protected {before:.4} purified {after:.4}");
    assert!(after > before);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fusion_stays_between_inputs(seed in 0u64..10_000, w in 1usize..20, h in 1usize..20) {
        let a = random_image(w, h, 3, seed);
        let b = random_image(w, h, 3, seed + 1);
        let m = RegionMask::new(w, h, random_image(w, h, 1, seed + 2).data().to_vec()).unwrap();
        let f = fuse(&m, &a, &b).unwrap();
        for ((v, x), y) in f.data().iter().zip(a.data()).zip(b.data()) {
            prop_assert!(*v >= x.min(*y) - 1e-12 && *v <= x.max(*y) + 1e-12);
        }
    }
}
