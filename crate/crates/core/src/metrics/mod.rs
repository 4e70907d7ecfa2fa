//! Full-reference quality metrics, perturbation norms and the external-metric hook.

mod external;
mod registry;

pub use external::external_metric;
pub use registry::{MetricKind, MetricRegistry, MetricSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{luma, ImageF};
use crate::transforms::{resample, ResampleKernel, TransformChain};

/// PSNR reported for (near-)identical images.
pub const PSNR_CAP_DB: f64 = 100.0;
const PSNR_MSE_FLOOR: f64 = 1e-10;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub name: String,
    pub value: f64,
    pub higher_is_better: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerturbationStats {
    pub linf: f64,
    pub l2: f64,
    pub mean_abs: f64,
}

/// Mean of squared sample differences.
pub fn mse(a: &ImageF, b: &ImageF) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// `10 log10(1 / MSE)` with peak 1.0, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &ImageF, b: &ImageF) -> Result<MetricValue> {
    let m = mse(a, b)?;
    let value = if m < PSNR_MSE_FLOOR {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / m).log10()).min(PSNR_CAP_DB)
    };
    Ok(MetricValue {
        name: "psnr".into(),
        value,
        higher_is_better: true,
    })
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let mut w: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - c;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Valid-mode separable filtering of a single plane.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = taps.iter().zip(&row[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(j, t)| t * tmp[(y + j) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean SSIM over all valid 11x11 Gaussian windows of the luma planes.
pub fn ssim(a: &ImageF, b: &ImageF) -> Result<MetricValue> {
    a.ensure_same_shape(b)?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::TooSmall(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let (la, lb) = (luma(a), luma(b));
    let (pa, pb) = (la.plane(0), lb.plane(0));
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        pa.iter().zip(pb).map(|(&x, &y)| f(x, y)).collect()
    };
    let mu_a = filter_valid(pa, w, h, &taps);
    let mu_b = filter_valid(pb, w, h, &taps);
    let e_aa = filter_valid(&prod(&|x, _| x * x), w, h, &taps);
    let e_bb = filter_valid(&prod(&|_, y| y * y), w, h, &taps);
    let e_ab = filter_valid(&prod(&|x, y| x * y), w, h, &taps);
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        total += num / den;
    }
    Ok(MetricValue {
        name: "ssim".into(),
        value: (total / n as f64).clamp(-1.0, 1.0),
        higher_is_better: true,
    })
}

/// Norms of `xhat - x` over all samples.
pub fn perturbation_stats(x: &ImageF, xhat: &ImageF) -> Result<PerturbationStats> {
    x.ensure_same_shape(xhat)?;
    let mut stats = PerturbationStats::default();
    let mut sq = 0.0;
    for (&a, &b) in x.data().iter().zip(xhat.data()) {
        let d = (b - a).abs();
        stats.linf = stats.linf.max(d);
        stats.mean_abs += d;
        sq += d * d;
    }
    stats.l2 = sq.sqrt();
    stats.mean_abs /= x.data().len() as f64;
    Ok(stats)
}

fn l2_diff(a: &ImageF, b: &ImageF) -> Result<f64> {
    a.ensure_same_shape(b)?;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Applies `chain`, then resamples back to the input size with `re_up` if the
/// chain changed the resolution.
pub fn transform_at_reference(
    img: &ImageF,
    chain: &TransformChain,
    re_up: ResampleKernel,
) -> Result<ImageF> {
    let out = chain.apply(img)?;
    if out.dims() == img.dims() {
        Ok(out)
    } else {
        resample(&out, img.width(), img.height(), re_up)
    }
}

/// `||T(xhat) - T(x)||_2 / ||xhat - x||_2`: the fraction of perturbation
/// energy that survives the transformation `T`.
pub fn attenuation_ratio(
    x: &ImageF,
    xhat: &ImageF,
    chain: &TransformChain,
    re_up: ResampleKernel,
) -> Result<f64> {
    let before = l2_diff(xhat, x)?;
    if before == 0.0 {
        return Err(Error::ZeroPerturbation);
    }
    let tx = transform_at_reference(x, chain, re_up)?;
    let txhat = transform_at_reference(xhat, chain, re_up)?;
    Ok(l2_diff(&txhat, &tx)? / before)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(w: usize, h: usize, ch: usize, seed: u64) -> ImageF {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ImageF::from_fn(w, h, ch, |_, _, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
        .unwrap()
    }

    #[test]
    fn mse_examples() {
        let a = ImageF::filled(8, 8, 3, 0.3).unwrap();
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let b = ImageF::filled(8, 8, 3, 0.4).unwrap();
        assert!((mse(&a, &b).unwrap() - 0.01).abs() < 1e-15);
        let c = ImageF::filled(8, 7, 3, 0.4).unwrap();
        assert!(matches!(mse(&a, &c), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn psnr_examples() {
        let a = ImageF::filled(8, 8, 1, 0.5).unwrap();
        assert_eq!(psnr(&a, &a).unwrap().value, 100.0);
        let b = ImageF::filled(8, 8, 1, 0.6).unwrap();
        assert!((psnr(&a, &b).unwrap().value - 20.0).abs() < 1e-9);
        let c = ImageF::from_fn(8, 8, 1, |_, x, _| if x < 4 { 0.6 } else { 0.4 }).unwrap();
        assert!((psnr(&a, &c).unwrap().value - 20.0).abs() < 1e-9);
        assert!(psnr(&a, &b).unwrap().higher_is_better);
    }

    #[test]
    fn ssim_constant_closed_form() {
        let a = ImageF::filled(16, 16, 1, 0.25).unwrap();
        let b = ImageF::filled(16, 16, 1, 0.75).unwrap();
        let expected = (2.0 * 0.1875 + 1e-4) / (0.0625 + 0.5625 + 1e-4);
        let v = ssim(&a, &b).unwrap().value;
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
        assert!((v - 0.6001).abs() < 1e-4);
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = noise(32, 24, 3, 1);
        let b = noise(32, 24, 3, 2);
        assert_eq!(ssim(&a, &a).unwrap().value, 1.0);
        assert_eq!(ssim(&a, &b).unwrap().value, ssim(&b, &a).unwrap().value);
        assert_eq!(psnr(&a, &b).unwrap().value, psnr(&b, &a).unwrap().value);
    }

    #[test]
    fn ssim_too_small() {
        let a = ImageF::filled(10, 20, 1, 0.5).unwrap();
        assert!(matches!(ssim(&a, &a), Err(Error::TooSmall(_))));
    }

    #[test]
    fn perturbation_stats_examples() {
        let x = ImageF::filled(4, 4, 3, 0.5).unwrap();
        assert_eq!(perturbation_stats(&x, &x).unwrap(), PerturbationStats::default());
        let eps = 8.0 / 255.0;
        let xh = ImageF::filled(4, 4, 3, 0.5 + eps).unwrap();
        let s = perturbation_stats(&x, &xh).unwrap();
        assert!((s.linf - eps).abs() < 1e-15 && (s.mean_abs - eps).abs() < 1e-15);
        let xh = ImageF::from_fn(4, 4, 3, |c, x, y| {
            if (c, x, y) == (1, 2, 3) {
                0.5 + eps
            } else {
                0.5
            }
        })
        .unwrap();
        let s = perturbation_stats(&x, &xh).unwrap();
        assert!((s.l2 - eps).abs() < 1e-15);
        assert!((s.mean_abs - eps / 48.0).abs() < 1e-15);
    }

    #[test]
    fn attenuation_identity_and_zero() {
        let x = noise(16, 16, 3, 3);
        let xh = noise(16, 16, 3, 4);
        let id = TransformChain::identity();
        assert_eq!(
            attenuation_ratio(&x, &xh, &id, ResampleKernel::Lanczos(3)).unwrap(),
            1.0
        );
        assert!(matches!(
            attenuation_ratio(&x, &x, &id, ResampleKernel::Lanczos(3)),
            Err(Error::ZeroPerturbation)
        ));
    }
}
