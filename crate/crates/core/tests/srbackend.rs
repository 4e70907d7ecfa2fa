mod common;

use std::time::Instant;

use common::{nearest_sr_stub, random_image, stub_script};
use purikit::srbackend::{upscale, validate_pipeline_scales, SrBackendSpec};
use purikit::transforms::{resample, ResampleKernel};
use purikit::Error;

#[test]
fn external_stub_upscales_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = nearest_sr_stub(dir.path());
    let img = random_image(9, 7, 3, 1);
    let spec = SrBackendSpec::external(cmd, 2, 30.0).unwrap();
    let out = upscale(&img, &spec).unwrap();
    assert_eq!(out.image.dims(), (18, 14));
    // PNG quantization is the only loss: compare against the quantized input.
    let q = purikit::imgcore::to_float(&purikit::imgcore::to_u8(&img));
    let expect = resample(&q, 18, 14, ResampleKernel::Nearest).unwrap();
    assert_eq!(out.image, expect);
}

#[test]
fn interp_backend_matches_resample() {
    let img = random_image(10, 6, 3, 2);
    let spec = SrBackendSpec::interp(ResampleKernel::Bicubic, 3).unwrap();
    let out = upscale(&img, &spec).unwrap();
    assert_eq!(out.image, resample(&img, 30, 18, ResampleKernel::Bicubic).unwrap());
    assert_eq!(upscale(&img, &SrBackendSpec::identity()).unwrap().image, img);
}

#[test]
fn wrong_size_output_violates_scale_contract() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = stub_script(dir.path(), "same.sh", "cp \"$1\" \"$2\"");
    let img = random_image(8, 8, 3, 3);
    let err = upscale(&img, &SrBackendSpec::external(cmd, 2, 30.0).unwrap()).unwrap_err();
    assert!(
        matches!(err, Error::ScaleContractViolated { expected: (16, 16), actual: (8, 8) }),
        "{err}"
    );
}

#[test]
fn nonzero_exit_is_backend_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = stub_script(dir.path(), "fail.sh", "echo 'model missing' >&2; exit 7");
    let err = upscale(&random_image(4, 4, 3, 0), &SrBackendSpec::external(cmd, 2, 30.0).unwrap()).unwrap_err();
    match err {
        Error::BackendFailed { code, stderr } => {
            assert_eq!(code, Some(7));
            assert!(stderr.contains("model missing"));
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn hanging_backend_times_out_after_one_retry() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = stub_script(dir.path(), "hang.sh", "sleep 30");
    let t = Instant::now();
    let err = upscale(&random_image(4, 4, 3, 0), &SrBackendSpec::external(cmd, 2, 0.3).unwrap()).unwrap_err();
    assert!(matches!(err, Error::BackendTimeout(_)), "{err}");
    let el = t.elapsed().as_secs_f64();
    assert!((0.5..10.0).contains(&el), "elapsed {el}");
}

#[test]
fn cache_skips_second_invocation() {
    let dir = tempfile::tempdir().unwrap();
    let counter = dir.path().join("calls");
    let inner = nearest_sr_stub(dir.path());
    let cmd = stub_script(dir.path(), "counting.sh", &format!("echo x >> '{}'; exec '{inner}' \"$@\"", counter.display()));
    let spec = SrBackendSpec::external(cmd, 2, 30.0).unwrap().with_cache_dir(Some(dir.path().join("cache")));
    let img = random_image(6, 5, 3, 4);
    let a = upscale(&img, &spec).unwrap().image;
    let b = upscale(&img, &spec).unwrap().image;
    assert_eq!(a, b);
    assert_eq!(std::fs::read_to_string(&counter).unwrap().lines().count(), 1);
}

#[test]
fn pipeline_scales_must_match_down_factor() {
    let s2 = SrBackendSpec::interp(ResampleKernel::default(), 2).unwrap();
    let s4 = SrBackendSpec::interp(ResampleKernel::default(), 4).unwrap();
    assert!(validate_pipeline_scales(&s2, &s2, 2).is_ok());
    assert!(matches!(
        validate_pipeline_scales(&s2, &s4, 2),
        Err(Error::ScaleMismatch { ref role, expected: 2, actual: 4 }) if role == "general"
    ));
}
