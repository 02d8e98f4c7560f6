//! Spectral machinery: symmetric eigendecomposition, graph Fourier
//! transform, frequency-bucket histograms, filter kernel responses, and
//! the Dirichlet smoothness measure.

use crate::error::{Error, Result};
use crate::sparse::SparseSymMatrix;
use ndarray::Array2;

/// Eigendecomposition of a symmetric operator: ascending eigenvalues and
/// the matching column-orthonormal eigenvectors. Column i of
/// `eigenvectors` pairs with `eigenvalues[i]`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Array2<f64>,
}

impl Spectrum {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Dense symmetric eigendecomposition. Eigenvalues within -1e-10 of zero
/// are clamped to exactly zero.
pub fn sym_eigendecompose(m: &SparseSymMatrix) -> Result<Spectrum> {
    m.validate()?;
    let n = m.n();
    if n == 0 {
        return Ok(Spectrum {
            eigenvalues: Vec::new(),
            eigenvectors: Array2::zeros((0, 0)),
        });
    }
    let dense = nalgebra::DMatrix::<f64>::from_fn(n, n, |i, j| m.get(i, j));
    let eig = nalgebra::linalg::SymmetricEigen::try_new(dense, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::EigenFailed("iteration cap exceeded".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = Array2::<f64>::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        let mut lambda = eig.eigenvalues[src];
        if lambda < 0.0 && lambda > -1e-10 {
            lambda = 0.0;
        }
        eigenvalues.push(lambda);
        for row in 0..n {
            eigenvectors[[row, col]] = eig.eigenvectors[(row, src)];
        }
    }
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// Graph Fourier transform: f = E' x, the projection of a node signal
/// onto the eigenbasis.
pub fn graph_fourier_transform(s: &Spectrum, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != s.n() {
        return Err(Error::DimensionMismatch(format!(
            "gft: spectrum has n={} but signal has length {}",
            s.n(),
            x.len()
        )));
    }
    let n = s.n();
    let mut f = vec![0.0; n];
    for l in 0..n {
        let mut acc = 0.0;
        for i in 0..n {
            acc += s.eigenvectors[[i, l]] * x[i];
        }
        f[l] = acc;
    }
    Ok(f)
}

/// Inverse transform: x = E f.
pub fn inverse_gft(s: &Spectrum, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != s.n() {
        return Err(Error::DimensionMismatch(format!(
            "inverse gft: spectrum has n={} but coefficients have length {}",
            s.n(),
            f.len()
        )));
    }
    let n = s.n();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for l in 0..n {
            acc += s.eigenvectors[[i, l]] * f[l];
        }
        x[i] = acc;
    }
    Ok(x)
}

/// How spectral coefficients are weighted when bucketing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralWeight {
    /// f(lambda)^2 — basis-stable, consistent with Parseval. The default.
    Energy,
    /// |f(lambda)|.
    Amplitude,
}

/// Normalized distribution of spectral mass over uniform frequency
/// buckets spanning [0, 2].
#[derive(Debug, Clone)]
pub struct FrequencyHistogram {
    /// `buckets + 1` uniform edges over [0, 2].
    pub bucket_edges: Vec<f64>,
    /// Normalized mass per bucket. All zeros when the signal is zero.
    pub mass: Vec<f64>,
    /// Total unnormalized mass; 0 flags a degenerate (zero) signal.
    pub total: f64,
}

impl FrequencyHistogram {
    pub fn is_degenerate(&self) -> bool {
        self.total == 0.0
    }
}

/// Bucket spectral mass into `buckets` uniform bins over [0, 2]. Buckets
/// are half-open [lo, hi), the last closed; eigenvalues outside the range
/// (numerical slack) are clamped into the end bins.
pub fn frequency_histogram(
    s: &Spectrum,
    x: &[f64],
    buckets: usize,
    weight: SpectralWeight,
) -> Result<FrequencyHistogram> {
    assert!(buckets >= 1);
    let f = graph_fourier_transform(s, x)?;
    let width = 2.0 / buckets as f64;
    let bucket_edges: Vec<f64> = (0..=buckets).map(|b| b as f64 * width).collect();
    let mut mass = vec![0.0; buckets];
    let mut total = 0.0;
    for (l, &lambda) in s.eigenvalues.iter().enumerate() {
        let w = match weight {
            SpectralWeight::Energy => f[l] * f[l],
            SpectralWeight::Amplitude => f[l].abs(),
        };
        let b = ((lambda / width).floor() as isize).clamp(0, buckets as isize - 1) as usize;
        mass[b] += w;
        total += w;
    }
    if total > 0.0 {
        for m in &mut mass {
            *m /= total;
        }
    } else {
        mass.iter_mut().for_each(|m| *m = 0.0);
    }
    Ok(FrequencyHistogram {
        bucket_edges,
        mass,
        total,
    })
}

/// Energy-weighted mean eigenvalue of a signal's spectral distribution,
/// sum(lambda_i f_i^2) / sum(f_i^2). Returns 0 for a zero signal.
pub fn spectral_mean(s: &Spectrum, x: &[f64]) -> Result<f64> {
    let f = graph_fourier_transform(s, x)?;
    let energy: f64 = f.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Ok(0.0);
    }
    let weighted: f64 = s
        .eigenvalues
        .iter()
        .zip(f.iter())
        .map(|(&l, &v)| l * v * v)
        .sum();
    Ok(weighted / energy)
}

/// Low-pass filter kernel of a K-layer GCN stack: g(lambda) = (1 - lambda)^K.
pub fn lgf_kernel_response(lambda: f64, k: u32) -> f64 {
    (1.0 - lambda).powi(k as i32)
}

/// High-pass filter kernel of a K-layer stack: g(lambda) = lambda^K.
pub fn hgf_kernel_response(lambda: f64, k: u32) -> f64 {
    lambda.powi(k as i32)
}

/// Dirichlet energy x'(D - A)x = sum over edges of (x_i - x_j)^2; zero iff
/// x is constant on every connected component.
pub fn smoothness(a: &SparseSymMatrix, x: &[f64]) -> Result<f64> {
    if x.len() != a.n() {
        return Err(Error::DimensionMismatch(format!(
            "smoothness: matrix is {}x{} but x has length {}",
            a.n(),
            a.n(),
            x.len()
        )));
    }
    let mut acc = 0.0;
    for i in 0..a.n() {
        for (j, w) in a.row(i) {
            if j > i {
                let d = x[i] - x[j];
                acc += w * d * d;
            }
        }
    }
    Ok(acc)
}
