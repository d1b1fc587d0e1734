//! Cached basis matrices and the per-plane transform kernels.
//!
//! Every transform here runs separably on one `h×w` plane at a time: a row
//! pass followed by a column pass. Planes are extracted from the interleaved
//! `[H,W,C]` layout used by [`crate::image::Image`] and autograd tensors.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::numerics::kernels::{gemm_nn, gemm_nt, gemm_tn};

type Cache = Mutex<HashMap<usize, Arc<Vec<f64>>>>;

fn cached(cache: &'static OnceLock<Cache>, n: usize, build: impl FnOnce(usize) -> Vec<f64>) -> Arc<Vec<f64>> {
    let map = cache.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(m) = map.lock().expect("basis cache poisoned").get(&n) {
        return Arc::clone(m);
    }
    // Built outside the lock; concurrent builders produce identical matrices.
    let built = Arc::new(build(n));
    let mut guard = map.lock().expect("basis cache poisoned");
    Arc::clone(guard.entry(n).or_insert(built))
}

/// Orthonormal DCT-II matrix `D[k][x] = s(k)·cos(π·k·(x+½)/n)` with
/// `s(0) = √(1/n)` and `s(k) = √(2/n)` otherwise.
pub fn dct_matrix(n: usize) -> Arc<Vec<f64>> {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    cached(&CACHE, n, |n| {
        let nf = n as f64;
        let mut d = vec![0.0; n * n];
        for k in 0..n {
            let c = if k == 0 { 1.0 / 2f64.sqrt() } else { 1.0 };
            let scale = c * (2.0 / nf).sqrt();
            for x in 0..n {
                d[k * n + x] = scale * (PI / nf * k as f64 * (x as f64 + 0.5)).cos();
            }
        }
        d
    })
}

/// Cosine and sine tables of the unnormalized DFT kernel `e^{-2πi·k·x/n}`,
/// stored as `[cos | sin]`, each `n×n`.
pub fn dft_tables(n: usize) -> Arc<Vec<f64>> {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    cached(&CACHE, n, |n| {
        let mut t = vec![0.0; 2 * n * n];
        for k in 0..n {
            for x in 0..n {
                // reduce k·x mod n first so large products keep full precision
                let phase = 2.0 * PI * ((k * x) % n) as f64 / n as f64;
                t[k * n + x] = phase.cos();
                t[n * n + k * n + x] = phase.sin();
            }
        }
        t
    })
}

pub(crate) fn extract_plane(data: &[f64], h: usize, w: usize, c: usize, ch: usize) -> Vec<f64> {
    (0..h * w).map(|p| data[p * c + ch]).collect()
}

pub(crate) fn store_plane(plane: &[f64], out: &mut [f64], c: usize, ch: usize) {
    for (p, v) in plane.iter().enumerate() {
        out[p * c + ch] = *v;
    }
}

/// `D_h · X · D_wᵀ` on one plane.
pub fn dct2_plane(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let dh = dct_matrix(h);
    let dw = dct_matrix(w);
    let mut rows = vec![0.0; h * w];
    gemm_nt(plane, &dw, &mut rows, h, w, w);
    let mut out = vec![0.0; h * w];
    gemm_nn(&dh, &rows, &mut out, h, h, w);
    out
}

/// `D_hᵀ · F · D_w` on one plane.
pub fn idct2_plane(coeffs: &[f64], h: usize, w: usize) -> Vec<f64> {
    let dh = dct_matrix(h);
    let dw = dct_matrix(w);
    let mut rows = vec![0.0; h * w];
    gemm_nn(coeffs, &dw, &mut rows, h, w, w);
    let mut out = vec![0.0; h * w];
    gemm_tn(&dh, &rows, &mut out, h, h, w);
    out
}

pub fn dct2_interleaved(data: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    map_planes(data, h, w, c, dct2_plane)
}

pub fn idct2_interleaved(data: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    map_planes(data, h, w, c, idct2_plane)
}

fn map_planes(data: &[f64], h: usize, w: usize, c: usize, f: fn(&[f64], usize, usize) -> Vec<f64>) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for ch in 0..c {
        let plane = extract_plane(data, h, w, c, ch);
        store_plane(&f(&plane, h, w), &mut out, c, ch);
    }
    out
}

/// Unnormalized forward 2D DFT of a complex plane, `Σ z(x,y)·e^{-2πi(ux/h + vy/w)}`.
pub fn dft2_plane(re: &[f64], im: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let th = dft_tables(h);
    let tw = dft_tables(w);
    let (ch, sh) = th.split_at(h * h);
    let (cw, sw) = tw.split_at(w * w);
    // row pass: T[x,v] = Σ_y z[x,y]·(cos − i·sin)(v·y)
    let mut tr = vec![0.0; h * w];
    let mut ti = vec![0.0; h * w];
    gemm_nt(re, cw, &mut tr, h, w, w);
    gemm_nt(im, sw, &mut tr, h, w, w);
    gemm_nt(im, cw, &mut ti, h, w, w);
    let mut neg = vec![0.0; h * w];
    gemm_nt(re, sw, &mut neg, h, w, w);
    ti.iter_mut().zip(&neg).for_each(|(a, b)| *a -= b);
    // column pass: F[u,v] = Σ_x (cos − i·sin)(u·x)·T[x,v]
    let mut fr = vec![0.0; h * w];
    let mut fi = vec![0.0; h * w];
    gemm_nn(ch, &tr, &mut fr, h, h, w);
    gemm_nn(sh, &ti, &mut fr, h, h, w);
    gemm_nn(ch, &ti, &mut fi, h, h, w);
    neg.iter_mut().for_each(|v| *v = 0.0);
    gemm_nn(sh, &tr, &mut neg, h, h, w);
    fi.iter_mut().zip(&neg).for_each(|(a, b)| *a -= b);
    (fr, fi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dct_matrix_rows_are_orthonormal() {
        for n in [1, 2, 3, 5, 8] {
            let d = dct_matrix(n);
            for a in 0..n {
                for b in 0..n {
                    let g: f64 = (0..n).map(|x| d[a * n + x] * d[b * n + x]).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((g - want).abs() < 1e-12, "n={n} a={a} b={b} g={g}");
                }
            }
        }
    }

    #[test]
    fn cache_returns_shared_matrix() {
        let a = dct_matrix(7);
        let b = dct_matrix(7);
        assert!(Arc::ptr_eq(&a, &b));
    }
}
