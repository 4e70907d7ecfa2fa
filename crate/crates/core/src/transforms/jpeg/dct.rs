//! Floating-point 8x8 type-II DCT and its inverse, with the JPEG normalization
//! `F(u,v) = 1/4 C(u) C(v) sum f(x,y) cos((2x+1)u pi/16) cos((2y+1)v pi/16)`.

use std::sync::OnceLock;

/// Row-major 8x8 block.
pub type Block = [f64; 64];

/// Zigzag scan position -> natural index.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

/// `basis[u][x] = C(u)/2 * cos((2x+1) u pi / 16)`; the transform is orthonormal.
fn basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut t = [[0.0; 8]; 8];
        for (u, row) in t.iter_mut().enumerate() {
            let cu = if u == 0 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
            for (x, v) in row.iter_mut().enumerate() {
                *v = 0.5
                    * cu
                    * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        t
    })
}

pub fn forward(block: &Block) -> Block {
    let t = basis();
    let mut tmp = [0.0; 64];
    // rows: tmp[y][u] = sum_x t[u][x] f[y][x]
    for y in 0..8 {
        for u in 0..8 {
            let mut s = 0.0;
            for x in 0..8 {
                s += t[u][x] * block[y * 8 + x];
            }
            tmp[y * 8 + u] = s;
        }
    }
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            let mut s = 0.0;
            for y in 0..8 {
                s += t[v][y] * tmp[y * 8 + u];
            }
            out[v * 8 + u] = s;
        }
    }
    out
}

#[cfg(test)]
pub fn inverse(coeffs: &Block) -> Block {
    let t = basis();
    let mut tmp = [0.0; 64];
    // columns: tmp[y][u] = sum_v t[v][y] F[v][u]
    for y in 0..8 {
        for u in 0..8 {
            let mut s = 0.0;
            for v in 0..8 {
                s += t[v][y] * coeffs[v * 8 + u];
            }
            tmp[y * 8 + u] = s;
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for u in 0..8 {
                s += t[u][x] * tmp[y * 8 + u];
            }
            out[y * 8 + x] = s;
        }
    }
    out
}

const CONST_BITS: i32 = 13;
const PASS1_BITS: i32 = 2;
const FIX_0_298631336: i32 = 2446;
const FIX_0_390180644: i32 = 3196;
const FIX_0_541196100: i32 = 4433;
const FIX_0_765366865: i32 = 6270;
const FIX_0_899976223: i32 = 7373;
const FIX_1_175875602: i32 = 9633;
const FIX_1_501321110: i32 = 12299;
const FIX_1_847759065: i32 = 15137;
const FIX_1_961570560: i32 = 16069;
const FIX_2_053119869: i32 = 16819;
const FIX_2_562915447: i32 = 20995;
const FIX_3_072711026: i32 = 25172;

#[inline]
fn descale(x: i32, n: i32) -> i32 {
    (x + (1 << (n - 1))) >> n
}

/// One 8-point pass of the slow-but-accurate integer IDCT; `v` holds the
/// eight inputs in frequency order, the result the eight spatial outputs
/// before the final descale.
#[inline]
fn islow_1d(v: [i32; 8], shift_in: i32) -> [i32; 8] {
    let (z2, z3) = (v[2], v[6]);
    let z1 = (z2 + z3) * FIX_0_541196100;
    let tmp2 = z1 + z3 * -FIX_1_847759065;
    let tmp3 = z1 + z2 * FIX_0_765366865;
    let tmp0 = (v[0] + v[4]) << shift_in;
    let tmp1 = (v[0] - v[4]) << shift_in;
    let tmp10 = tmp0 + tmp3;
    let tmp13 = tmp0 - tmp3;
    let tmp11 = tmp1 + tmp2;
    let tmp12 = tmp1 - tmp2;

    let (mut t0, mut t1, mut t2, mut t3) = (v[7], v[5], v[3], v[1]);
    let mut z1 = t0 + t3;
    let mut z2 = t1 + t2;
    let mut z3 = t0 + t2;
    let mut z4 = t1 + t3;
    let z5 = (z3 + z4) * FIX_1_175875602;
    t0 *= FIX_0_298631336;
    t1 *= FIX_2_053119869;
    t2 *= FIX_3_072711026;
    t3 *= FIX_1_501321110;
    z1 *= -FIX_0_899976223;
    z2 *= -FIX_2_562915447;
    z3 *= -FIX_1_961570560;
    z4 *= -FIX_0_390180644;
    z3 += z5;
    z4 += z5;
    t0 += z1 + z3;
    t1 += z2 + z4;
    t2 += z2 + z3;
    t3 += z1 + z4;
    [
        tmp10 + t3,
        tmp11 + t2,
        tmp12 + t1,
        tmp13 + t0,
        tmp13 - t0,
        tmp12 - t1,
        tmp11 - t2,
        tmp10 - t3,
    ]
}

/// Integer inverse DCT with dequantization, bit-compatible with libjpeg's
/// `jpeg_idct_islow`. Returns level-shifted, range-limited 8-bit samples.
pub fn inverse_islow(coeffs: &[i32; 64], qt: &[u16; 64]) -> [u8; 64] {
    let mut ws = [0i32; 64];
    for col in 0..8 {
        let deq = |row: usize| coeffs[row * 8 + col] * i32::from(qt[row * 8 + col]);
        if (1..8).all(|row| coeffs[row * 8 + col] == 0) {
            let dc = deq(0) << PASS1_BITS;
            for row in 0..8 {
                ws[row * 8 + col] = dc;
            }
            continue;
        }
        let out = islow_1d(std::array::from_fn(deq), CONST_BITS);
        for row in 0..8 {
            ws[row * 8 + col] = descale(out[row], CONST_BITS - PASS1_BITS);
        }
    }
    let mut px = [0u8; 64];
    for row in 0..8 {
        let r = &ws[row * 8..row * 8 + 8];
        let out = islow_1d(std::array::from_fn(|i| r[i]), CONST_BITS);
        for x in 0..8 {
            let v = descale(out[x], CONST_BITS + PASS1_BITS + 3) + 128;
            px[row * 8 + x] = v.clamp(0, 255) as u8;
        }
    }
    px
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zigzag_is_a_permutation() {
        let mut seen = [false; 64];
        for &i in &ZIGZAG {
            assert!(!seen[i]);
            seen[i] = true;
        }
    }

    #[test]
    fn matches_direct_formula_and_inverts() {
        let mut block = [0.0; 64];
        for (i, v) in block.iter_mut().enumerate() {
            *v = ((i * 73 + 11) % 255) as f64 - 128.0;
        }
        let f = forward(&block);
        for v in 0..8 {
            for u in 0..8 {
                let cu = if u == 0 { 1.0 / 2f64.sqrt() } else { 1.0 };
                let cv = if v == 0 { 1.0 / 2f64.sqrt() } else { 1.0 };
                let mut s = 0.0;
                for y in 0..8 {
                    for x in 0..8 {
                        s += block[y * 8 + x]
                            * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0).cos()
                            * ((2 * y + 1) as f64 * v as f64 * std::f64::consts::PI / 16.0).cos();
                    }
                }
                assert!((f[v * 8 + u] - 0.25 * cu * cv * s).abs() < 1e-9);
            }
        }
        let back = inverse(&f);
        for i in 0..64 {
            assert!((back[i] - block[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn islow_tracks_float_idct() {
        let qt = [1u16; 64];
        let mut coeffs = [0i32; 64];
        for (i, c) in coeffs.iter_mut().enumerate() {
            *c = ((i as i32 * 37) % 61) - 30;
        }
        coeffs[0] = -200;
        let exact = inverse(&std::array::from_fn(|i| f64::from(coeffs[i])));
        let fast = inverse_islow(&coeffs, &qt);
        for i in 0..64 {
            let e = (exact[i] + 128.0).round().clamp(0.0, 255.0);
            assert!((e - f64::from(fast[i])).abs() <= 1.0, "{i}: {e} vs {}", fast[i]);
        }
        let mut dc = [0i32; 64];
        dc[0] = 80;
        assert!(inverse_islow(&dc, &qt).iter().all(|&v| v == 138));
    }

    #[test]
    fn constant_block_is_dc_only() {
        let f = forward(&[10.0; 64]);
        assert!((f[0] - 80.0).abs() < 1e-9);
        assert!(f[1..].iter().all(|v| v.abs() < 1e-9));
    }
}
