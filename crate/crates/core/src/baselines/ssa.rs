use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

/// Elementary SSA components of a series, strongest first.
#[derive(Clone, Debug, PartialEq)]
pub struct SsaDecomposition {
    pub components: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub window_length: usize,
}

impl SsaDecomposition {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// Eigenpairs of the lag-covariance `X Xᵀ` of the trajectory matrix, sorted
/// by descending eigenvalue (stable for ties).
fn lag_eigen(x: &[f64], l: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let t = x.len();
    if l < 2 || 2 * l > t {
        return Err(Error::DegenerateInput(format!(
            "window length {l} must satisfy 2 <= L <= T/2 for T = {t}"
        )));
    }
    let k = t - l + 1;
    let mut s = DMatrix::<f64>::zeros(l, l);
    for i in 0..l {
        for j in i..l {
            let v: f64 = (0..k).map(|c| x[i + c] * x[j + c]).sum();
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let sigma = order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
    let u = DMatrix::from_fn(l, l, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((sigma, u))
}

/// Diagonal average of the elementary matrix `u (uᵀ X)`.
fn elementary(x: &[f64], u: &[f64]) -> Vec<f64> {
    let (t, l) = (x.len(), u.len());
    let k = t - l + 1;
    let v: Vec<f64> = (0..k).map(|j| u.iter().enumerate().map(|(i, ui)| ui * x[i + j]).sum()).collect();
    let mut out = vec![0.0; t];
    let mut count = vec![0u32; t];
    for (i, ui) in u.iter().enumerate() {
        for (j, vj) in v.iter().enumerate() {
            out[i + j] += ui * vj;
            count[i + j] += 1;
        }
    }
    for (o, c) in out.iter_mut().zip(count) {
        *o /= f64::from(c);
    }
    out
}

/// Full decomposition into `L` components.
pub fn ssa_decompose(x: &[f64], window_length: usize) -> Result<SsaDecomposition> {
    ssa_decompose_leading(x, window_length, window_length)
}

/// Only the `d` strongest components.
pub fn ssa_decompose_leading(x: &[f64], window_length: usize, d: usize) -> Result<SsaDecomposition> {
    let (sigma, u) = lag_eigen(x, window_length)?;
    let d = d.min(window_length);
    let components = (0..d).map(|c| elementary(x, u.column(c).as_slice())).collect();
    Ok(SsaDecomposition {
        components,
        singular_values: sigma,
        window_length,
    })
}

/// Sum of the first `d` components.
pub fn ssa_reconstruct(decomp: &SsaDecomposition, d: usize) -> Result<Vec<f64>> {
    if d == 0 || d > decomp.components.len() {
        return Err(Error::Index(format!("component count {d} outside 1..={}", decomp.components.len())));
    }
    let mut out = vec![0.0; decomp.components[0].len()];
    for comp in &decomp.components[..d] {
        for (o, v) in out.iter_mut().zip(comp) {
            *o += v;
        }
    }
    Ok(out)
}

/// Keeps the `d` leading components of `x`.
pub fn ssa_smooth(x: &[f64], window_length: usize, d: usize) -> Result<Vec<f64>> {
    ssa_reconstruct(&ssa_decompose_leading(x, window_length, d)?, d)
}
