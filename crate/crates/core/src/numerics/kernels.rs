//! Raw slice kernels shared by the autograd ops. No shape checking here;
//! callers validate extents.

/// `out[m,n] += a[m,k] · b[k,n]`
pub fn gemm_nn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for r in 0..m {
        let a_row = &a[r * k..(r + 1) * k];
        let out_row = &mut out[r * n..(r + 1) * n];
        for (i, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out[k,n] += a[m,k]ᵀ · g[m,n]`
pub fn gemm_tn(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for r in 0..m {
        let a_row = &a[r * k..(r + 1) * k];
        let g_row = &g[r * n..(r + 1) * n];
        for (i, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o += av * gv;
            }
        }
    }
}

/// `out[m,k] += g[m,n] · b[k,n]ᵀ`
pub fn gemm_nt(g: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for r in 0..m {
        let g_row = &g[r * n..(r + 1) * n];
        for i in 0..k {
            out[r * k + i] += dot(g_row, &b[i * n..(i + 1) * n]);
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Geometry of a stride-1 2D convolution over a `[C,H,W]` map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding).saturating_sub(self.dilation * (self.kernel - 1))
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding).saturating_sub(self.dilation * (self.kernel - 1))
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }
}

/// Lowers `[C,H,W]` into columns `[C·k·k, Ho·Wo]`, zero padded.
pub fn im2col(input: &[f64], geo: &ConvGeometry) -> Vec<f64> {
    let (ho, wo) = (geo.out_height(), geo.out_width());
    let cols = ho * wo;
    let mut out = vec![0.0; geo.patch_len() * cols];
    for c in 0..geo.channels {
        let plane = &input[c * geo.height * geo.width..(c + 1) * geo.height * geo.width];
        for ki in 0..geo.kernel {
            for kj in 0..geo.kernel {
                let row = (c * geo.kernel + ki) * geo.kernel + kj;
                let dst = &mut out[row * cols..(row + 1) * cols];
                for y in 0..ho {
                    let sy = (y + ki * geo.dilation) as isize - geo.padding as isize;
                    if sy < 0 || sy >= geo.height as isize {
                        continue;
                    }
                    let src_row = &plane[sy as usize * geo.width..(sy as usize + 1) * geo.width];
                    for x in 0..wo {
                        let sx = (x + kj * geo.dilation) as isize - geo.padding as isize;
                        if sx >= 0 && sx < geo.width as isize {
                            dst[y * wo + x] = src_row[sx as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatters column gradients back onto `[C,H,W]`.
pub fn col2im(cols: &[f64], geo: &ConvGeometry, out: &mut [f64]) {
    let (ho, wo) = (geo.out_height(), geo.out_width());
    let ncols = ho * wo;
    for c in 0..geo.channels {
        let base = c * geo.height * geo.width;
        for ki in 0..geo.kernel {
            for kj in 0..geo.kernel {
                let row = (c * geo.kernel + ki) * geo.kernel + kj;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for y in 0..ho {
                    let sy = (y + ki * geo.dilation) as isize - geo.padding as isize;
                    if sy < 0 || sy >= geo.height as isize {
                        continue;
                    }
                    for x in 0..wo {
                        let sx = (x + kj * geo.dilation) as isize - geo.padding as isize;
                        if sx >= 0 && sx < geo.width as isize {
                            out[base + sy as usize * geo.width + sx as usize] += src[y * wo + x];
                        }
                    }
                }
            }
        }
    }
}

pub fn transpose(src: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_variants_agree_with_naive_products() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut c = vec![0.0; m * n];
        gemm_nn(&a, &b, &mut c, m, k, n);
        for r in 0..m {
            for j in 0..n {
                let want: f64 = (0..k).map(|i| a[r * k + i] * b[i * n + j]).sum();
                assert!((c[r * n + j] - want).abs() < 1e-12);
            }
        }
        // aᵀ·c has shape k×n
        let mut atc = vec![0.0; k * n];
        gemm_tn(&a, &c, &mut atc, m, k, n);
        let at = transpose(&a, m, k);
        let mut want = vec![0.0; k * n];
        gemm_nn(&at, &c, &mut want, k, m, n);
        for (x, y) in atc.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
        // c·bᵀ has shape m×k
        let mut cbt = vec![0.0; m * k];
        gemm_nt(&c, &b, &mut cbt, m, k, n);
        let bt = transpose(&b, k, n);
        let mut want = vec![0.0; m * k];
        gemm_nn(&c, &bt, &mut want, m, n, k);
        for (x, y) in cbt.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let geo = ConvGeometry { channels: 2, height: 5, width: 4, kernel: 3, dilation: 2, padding: 2 };
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).sin()).collect();
        let cols = im2col(&x, &geo);
        let y: Vec<f64> = (0..cols.len()).map(|i| (i as f64 * 0.7).cos()).collect();
        let mut back = vec![0.0; x.len()];
        col2im(&y, &geo, &mut back);
        let lhs = dot(&cols, &y);
        let rhs = dot(&x, &back);
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
