//! Slice-level kernels used by the layer implementations.

/// `c = beta * c + a · b` for an m×k by k×n product with explicit strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    if k > 0 {
        assert!(a.len() > last(m, k, rsa, csa) && b.len() > last(k, n, rsb, csb));
    }
    assert!(c.len() > last(m, n, rsc, csc));
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub pt: usize,
    pub pl: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    /// Rows of the column matrix (C·kh·kw).
    pub fn k(&self) -> usize {
        self.c * self.kh * self.kw
    }

    /// Output positions per filter (oh·ow).
    pub fn p(&self) -> usize {
        self.oh * self.ow
    }

    fn source(&self, o: usize, stride: usize, tap: usize, pad: usize, limit: usize) -> Option<usize> {
        let pos = (o * stride + tap).checked_sub(pad)?;
        (pos < limit).then_some(pos)
    }
}

/// Unfolds one sample (C×H×W) into a K×P column matrix.
pub(crate) fn im2col(g: &ConvGeom, input: &[f64], cols: &mut [f64]) {
    let p = g.p();
    let mut row = 0;
    for ci in 0..g.c {
        let plane = &input[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let out = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    let Some(iy) = g.source(oy, g.sh, i, g.pt, g.h) else {
                        out.fill(0.0);
                        continue;
                    };
                    let src = &plane[iy * g.w..(iy + 1) * g.w];
                    for (ox, v) in out.iter_mut().enumerate() {
                        *v = match g.source(ox, g.sw, j, g.pl, g.w) {
                            Some(ix) => src[ix],
                            None => 0.0,
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adds a K×P column-gradient matrix back onto one sample's input gradient.
pub(crate) fn col2im(g: &ConvGeom, cols: &[f64], grad: &mut [f64]) {
    let p = g.p();
    let mut row = 0;
    for ci in 0..g.c {
        let plane = &mut grad[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let Some(iy) = g.source(oy, g.sh, i, g.pt, g.h) else {
                        continue;
                    };
                    let dst = &mut plane[iy * g.w..(iy + 1) * g.w];
                    for ox in 0..g.ow {
                        if let Some(ix) = g.source(ox, g.sw, j, g.pl, g.w) {
                            dst[ix] += src[oy * g.ow + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Numerically stable softmax of one row.
pub(crate) fn softmax_row(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// 64-bit mixing function for deriving independent seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_with_transposed_views() {
        let a: Vec<f64> = (0..6).map(f64::from).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| f64::from(v) * 0.5).collect(); // 3x4
        let mut c = vec![0.0; 8];
        gemm(2, 3, 4, &a, (3, 1), &b, (4, 1), 0.0, &mut c, (4, 1));
        for i in 0..2 {
            for j in 0..4 {
                let expect: f64 = (0..3).map(|k| a[i * 3 + k] * b[k * 4 + j]).sum();
                assert_eq!(c[i * 4 + j], expect);
            }
        }
        // aᵀ (3x2) · c (2x4) using a column-major view of a
        let mut d = vec![0.0; 12];
        gemm(3, 2, 4, &a, (1, 3), &c, (4, 1), 0.0, &mut d, (4, 1));
        for i in 0..3 {
            for j in 0..4 {
                let expect: f64 = (0..2).map(|k| a[k * 3 + i] * c[k * 4 + j]).sum();
                assert!((d[i * 4 + j] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeom { c: 2, h: 3, w: 7, kh: 3, kw: 3, sh: 1, sw: 2, pt: 1, pl: 1, oh: 3, ow: 4 };
        let x: Vec<f64> = (0..g.c * g.h * g.w).map(|v| (v as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..g.k() * g.p()).map(|v| (v as f64 * 0.11).cos()).collect();
        let mut cols = vec![0.0; g.k() * g.p()];
        im2col(&g, &x, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&g, &y, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
