//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use purikit::imgcore::{load_image, ImageF};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

pub fn load_fixture(name: &str) -> ImageF {
    load_image(fixture(name)).unwrap()
}

pub fn random_image(w: usize, h: usize, ch: usize, seed: u64) -> ImageF {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageF::from_fn(w, h, ch, |_, _, _| rng.random::<f64>()).unwrap()
}

/// Straight-loop MSE.
pub fn oracle_mse(a: &ImageF, b: &ImageF) -> f64 {
    let mut s = 0.0;
    for c in 0..a.channels() {
        for y in 0..a.height() {
            for x in 0..a.width() {
                let d = a.get(c, x, y) - b.get(c, x, y);
                s += d * d;
            }
        }
    }
    s / (a.width() * a.height() * a.channels()) as f64
}

pub fn oracle_psnr(a: &ImageF, b: &ImageF) -> f64 {
    let m = oracle_mse(a, b);
    if m < 1e-10 {
        100.0
    } else {
        10.0 * (1.0 / m).log10()
    }
}

fn oracle_luma(img: &ImageF, x: usize, y: usize) -> f64 {
    if img.channels() == 1 {
        img.get(0, x, y)
    } else {
        0.299 * img.get(0, x, y) + 0.587 * img.get(1, x, y) + 0.114 * img.get(2, x, y)
    }
}

/// Per-window SSIM with an explicit 11x11 Gaussian (sigma 1.5), centered moments.
pub fn oracle_ssim(a: &ImageF, b: &ImageF) -> f64 {
    let k = 11usize;
    let sigma = 1.5f64;
    let mut win = vec![0.0; k * k];
    let mut total = 0.0;
    for j in 0..k {
        for i in 0..k {
            let (dx, dy) = (i as f64 - 5.0, j as f64 - 5.0);
            win[j * k + i] = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            total += win[j * k + i];
        }
    }
    win.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let (w, h) = (a.width(), a.height());
    let mut acc = 0.0;
    let mut count = 0usize;
    for y0 in 0..=h - k {
        for x0 in 0..=w - k {
            let (mut ma, mut mb) = (0.0, 0.0);
            for j in 0..k {
                for i in 0..k {
                    let wt = win[j * k + i];
                    ma += wt * oracle_luma(a, x0 + i, y0 + j);
                    mb += wt * oracle_luma(b, x0 + i, y0 + j);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for j in 0..k {
                for i in 0..k {
                    let wt = win[j * k + i];
                    let da = oracle_luma(a, x0 + i, y0 + j) - ma;
                    let db = oracle_luma(b, x0 + i, y0 + j) - mb;
                    va += wt * da * da;
                    vb += wt * db * db;
                    cov += wt * da * db;
                }
            }
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    acc / count as f64
}

fn oracle_lanczos3(t: f64) -> f64 {
    let s = |v: f64| {
        if v == 0.0 {
            1.0
        } else {
            (std::f64::consts::PI * v).sin() / (std::f64::consts::PI * v)
        }
    };
    if t.abs() < 3.0 {
        s(t) * s(t / 3.0)
    } else {
        0.0
    }
}

/// Dense 2-D Lanczos-3 resize: every output sample is a direct weighted sum
/// over the full 2-D footprint with a single 2-D normalization.
pub fn oracle_resize_lanczos3(img: &ImageF, ow: usize, oh: usize) -> ImageF {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let (rx, ry) = (w / ow as f64, h / oh as f64);
    let (sx, sy) = (rx.max(1.0), ry.max(1.0));
    ImageF::from_fn(ow, oh, img.channels(), |c, x, y| {
        let cx = (x as f64 + 0.5) * rx - 0.5;
        let cy = (y as f64 + 0.5) * ry - 0.5;
        let (mut num, mut den) = (0.0, 0.0);
        let jy0 = (cy - 3.0 * sy).ceil() as i64;
        let jy1 = (cy + 3.0 * sy).floor() as i64;
        let jx0 = (cx - 3.0 * sx).ceil() as i64;
        let jx1 = (cx + 3.0 * sx).floor() as i64;
        for jy in jy0..=jy1 {
            for jx in jx0..=jx1 {
                let wt = oracle_lanczos3((jx as f64 - cx) / sx) * oracle_lanczos3((jy as f64 - cy) / sy);
                let px = jx.clamp(0, img.width() as i64 - 1) as usize;
                let py = jy.clamp(0, img.height() as i64 - 1) as usize;
                num += wt * img.get(c, px, py);
                den += wt;
            }
        }
        num / den
    })
    .unwrap()
}

/// Dense 2-D Gaussian blur (sigma = radius / 2, taps within 3 sigma), clamp-to-edge.
pub fn oracle_gaussian_blur(plane: &[f64], w: usize, h: usize, radius: f64) -> Vec<f64> {
    let sigma = radius / 2.0;
    let r = (3.0 * sigma).ceil() as i64;
    let mut out = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let (mut num, mut den) = (0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let wt = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
                    let px = (x + dx).clamp(0, w as i64 - 1) as usize;
                    let py = (y + dy).clamp(0, h as i64 - 1) as usize;
                    num += wt * plane[py * w + px];
                    den += wt;
                }
            }
            out[y as usize * w + x as usize] = num / den;
        }
    }
    out
}

/// Synthetic portrait: smooth background gradient, shaded elliptical face,
/// darker hair cap, eyes and mouth, and mild seeded texture.
pub fn synthetic_portrait(size: usize, seed: u64) -> ImageF {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg0: [f64; 3] = [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)];
    let bg1: [f64; 3] = [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)];
    let skin: [f64; 3] = [
        rng.random_range(0.55..0.9),
        rng.random_range(0.4..0.7),
        rng.random_range(0.3..0.6),
    ];
    let hair: [f64; 3] = {
        let v = rng.random_range(0.05..0.4);
        [v, v * 0.8, v * 0.6]
    };
    let cx = 0.5 + rng.random_range(-0.04..0.04);
    let cy = 0.5 + rng.random_range(-0.04..0.04);
    let (rx, ry) = (rng.random_range(0.26..0.33), rng.random_range(0.34..0.42));
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let freq: f64 = rng.random_range(4.0..9.0);
    let s = size as f64;
    ImageF::from_fn(size, size, 3, |c, x, y| {
        let u = (x as f64 + 0.5) / s;
        let v = (y as f64 + 0.5) / s;
        let t = 0.5 * (u + v);
        let mut val = bg0[c] * (1.0 - t) + bg1[c] * t;
        val += 0.03 * (freq * std::f64::consts::TAU * u + phase).sin() * (freq * 4.0 * v).cos();
        let d = ((u - cx) / rx).powi(2) + ((v - cy) / ry).powi(2);
        // hair: slightly larger ellipse, upper half
        let dh = ((u - cx) / (rx * 1.15)).powi(2) + ((v - cy + 0.04) / (ry * 1.1)).powi(2);
        if dh < 1.0 && v < cy - 0.05 {
            val = hair[c] + 0.04 * (40.0 * u + phase).sin();
        }
        if d < 1.0 {
            let shade = 1.0 - 0.25 * d;
            val = skin[c] * shade;
            let eye = |ex: f64| ((u - ex) / 0.045).powi(2) + ((v - (cy - 0.08)) / 0.025).powi(2);
            if eye(cx - 0.11) < 1.0 || eye(cx + 0.11) < 1.0 {
                val = 0.12;
            }
            let mouth = ((u - cx) / 0.09).powi(2) + ((v - (cy + 0.18)) / 0.02).powi(2);
            if mouth < 1.0 {
                val = [0.6, 0.25, 0.25][c];
            }
        }
        val
    })
    .unwrap()
}

/// Writes an executable shell script and returns its path as a command string.
pub fn stub_script(dir: &std::path::Path, name: &str, body: &str) -> String {
    use std::os::unix::fs::PermissionsExt;
    let p = dir.join(name);
    std::fs::write(&p, format!("#!/bin/sh\n{body}\n")).unwrap();
    std::fs::set_permissions(&p, std::fs::Permissions::from_mode(0o755)).unwrap();
    p.to_string_lossy().into_owned()
}

/// The CLI binary under test.
pub fn cli_bin() -> &'static str {
    env!("CARGO_BIN_EXE_purikit")
}

/// Stub SR backend that upscales by nearest neighbour through the CLI.
pub fn nearest_sr_stub(dir: &std::path::Path) -> String {
    stub_script(
        dir,
        "sr_nearest.sh",
        &format!("exec \"{}\" transform --in \"$1\" --out \"$2\" --chain \"resize:f=$3,k=nearest\"", cli_bin()),
    )
}
