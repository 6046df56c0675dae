//! Set-to-set evaluation metrics over flattened normalized sequences.
//!
//! Every sequence is a flat `[lat_0, lon_0, lat_1, lon_1, ...]` vector; all
//! sequences in one call must have the same length.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("sequence length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} sequences per set, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("covariance has eigenvalue {0} below the PSD tolerance")]
    CovarianceNotPsd(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub mse: f64,
    pub dm: f64,
    pub mmd: f64,
    pub n_generated: usize,
    pub n_reference: usize,
    pub mmd_bandwidth: f64,
}

fn common_dim<S: AsRef<[f64]>>(a: &[S], b: &[S]) -> Result<usize, MetricError> {
    let d = a.first().or(b.first()).map_or(0, |s| s.as_ref().len());
    for s in a.iter().chain(b) {
        if s.as_ref().len() != d {
            return Err(MetricError::LengthMismatch(d, s.as_ref().len()));
        }
    }
    Ok(d)
}

/// Mean over the `n x m` pair matrix of per-pair mean absolute and mean
/// squared coordinate differences.
pub fn pairwise_errors<S: AsRef<[f64]>>(gen: &[S], reference: &[S]) -> Result<(f64, f64), MetricError> {
    let d = common_dim(gen, reference)?;
    if gen.is_empty() || reference.is_empty() {
        return Err(MetricError::TooFewSamples { need: 1, got: 0 });
    }
    let mut mae = 0.0;
    let mut mse = 0.0;
    for g in gen {
        for r in reference {
            let mut abs = 0.0;
            let mut sq = 0.0;
            for (x, y) in g.as_ref().iter().zip(r.as_ref()) {
                let e = x - y;
                abs += e.abs();
                sq += e * e;
            }
            mae += abs / d as f64;
            mse += sq / d as f64;
        }
    }
    let pairs = (gen.len() * reference.len()) as f64;
    Ok((mae / pairs, mse / pairs))
}

fn mean_and_factor<S: AsRef<[f64]>>(set: &[S], d: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = set.len();
    let mut mean = DVector::zeros(d);
    for s in set {
        mean += DVector::from_column_slice(s.as_ref());
    }
    mean /= n as f64;
    // rows are centred samples scaled so that factor^T factor = covariance
    let scale = 1.0 / ((n - 1) as f64).sqrt();
    let factor = DMatrix::from_fn(n, d, |i, j| (set[i].as_ref()[j] - mean[j]) * scale);
    (mean, factor)
}

/// Sample mean and unbiased covariance.
pub fn mean_and_covariance<S: AsRef<[f64]>>(set: &[S]) -> Result<(DVector<f64>, DMatrix<f64>), MetricError> {
    if set.len() < 2 {
        return Err(MetricError::TooFewSamples { need: 2, got: set.len() });
    }
    let d = common_dim(set, &[] as &[S])?;
    let (mean, factor) = mean_and_factor(set, d);
    Ok((mean, factor.transpose() * &factor))
}

/// Gaussian Frechet (2-Wasserstein) distance between fitted moments, via the
/// symmetric eigendecomposition of `S1^{1/2} S2 S1^{1/2}`.
pub fn frechet_from_moments(
    mu1: &DVector<f64>,
    cov1: &DMatrix<f64>,
    mu2: &DVector<f64>,
    cov2: &DMatrix<f64>,
) -> Result<f64, MetricError> {
    const PSD_TOL: f64 = -1e-10;
    let clamp = |v: f64| -> Result<f64, MetricError> {
        if v < PSD_TOL {
            Err(MetricError::CovarianceNotPsd(v))
        } else {
            Ok(v.max(0.0))
        }
    };
    let e1 = SymmetricEigen::new(cov1.clone());
    let mut sqrt_vals = e1.eigenvalues.clone();
    for v in sqrt_vals.iter_mut() {
        *v = clamp(*v)?.sqrt();
    }
    let s1h = &e1.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * e1.eigenvectors.transpose();
    let mid = &s1h * cov2 * &s1h;
    let mid = (&mid + mid.transpose()) * 0.5;
    let mut tr_sqrt = 0.0;
    for v in SymmetricEigen::new(mid).eigenvalues.iter() {
        tr_sqrt += clamp(*v)?.sqrt();
    }
    let d2 = (mu1 - mu2).norm_squared() + cov1.trace() + cov2.trace() - 2.0 * tr_sqrt;
    Ok(d2.max(0.0).sqrt())
}

fn triangular_factor(a: DMatrix<f64>) -> DMatrix<f64> {
    // a^T a = r^T r, with r having at most min(n, d) rows
    if a.nrows() > a.ncols() {
        a.qr().r()
    } else {
        a
    }
}

/// Gaussian Frechet distance between two sample sets.
///
/// With covariance factors `A1^T A1 = S1`, `A2^T A2 = S2`, the trace term
/// `tr (S1^{1/2} S2 S1^{1/2})^{1/2}` equals the nuclear norm of `A1 A2^T`.
/// Working with the factors avoids square roots of rounding noise in the
/// null space of rank-deficient covariances.
pub fn frechet_dm<S: AsRef<[f64]>>(gen: &[S], reference: &[S]) -> Result<f64, MetricError> {
    let d = common_dim(gen, reference)?;
    for set in [gen, reference] {
        if set.len() < 2 {
            return Err(MetricError::TooFewSamples { need: 2, got: set.len() });
        }
    }
    let (mu1, a1) = mean_and_factor(gen, d);
    let (mu2, a2) = mean_and_factor(reference, d);
    let r1 = triangular_factor(a1);
    let r2 = triangular_factor(a2);
    let cross = &r1 * r2.transpose();
    let nuclear: f64 = cross.singular_values().iter().sum();
    let d2 = (&mu1 - &mu2).norm_squared() + r1.norm_squared() + r2.norm_squared() - 2.0 * nuclear;
    Ok(d2.max(0.0).sqrt())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median pairwise Euclidean distance over the pooled set.
pub fn median_heuristic<S: AsRef<[f64]>>(x: &[S], y: &[S]) -> f64 {
    let pooled: Vec<&[f64]> = x.iter().chain(y).map(|s| s.as_ref()).collect();
    let mut d: Vec<f64> = Vec::with_capacity(pooled.len() * pooled.len().saturating_sub(1) / 2);
    for i in 0..pooled.len() {
        for j in (i + 1)..pooled.len() {
            d.push(sq_dist(pooled[i], pooled[j]));
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let med_sq = if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) };
    let med = med_sq.sqrt();
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Unbiased squared MMD with the exponentiated quadratic kernel
/// `exp(-|x - y|^2 / (2 sigma^2))`. Returns `(mmd2, sigma)`.
///
/// Kernel sums are accumulated in sorted order, so the estimate is exactly
/// symmetric in its arguments and invariant to permutations of either set.
pub fn mmd_squared<S: AsRef<[f64]>>(x: &[S], y: &[S], bandwidth: Option<f64>) -> Result<(f64, f64), MetricError> {
    common_dim(x, y)?;
    for set in [x, y] {
        if set.len() < 2 {
            return Err(MetricError::TooFewSamples { need: 2, got: set.len() });
        }
    }
    let sigma = bandwidth.unwrap_or_else(|| median_heuristic(x, y));
    let gamma = 1.0 / (2.0 * sigma * sigma);
    let k = |a: &[f64], b: &[f64]| (-gamma * sq_dist(a, b)).exp();
    let within = |s: &[S]| -> f64 {
        let mut v = Vec::with_capacity(s.len() * (s.len() - 1) / 2);
        for i in 0..s.len() {
            for j in (i + 1)..s.len() {
                v.push(k(s[i].as_ref(), s[j].as_ref()));
            }
        }
        // off-diagonal sum counts each unordered pair twice
        2.0 * sorted_sum(v)
    };
    let (m, n) = (x.len() as f64, y.len() as f64);
    let mut cross = Vec::with_capacity(x.len() * y.len());
    for a in x {
        for b in y {
            cross.push(k(a.as_ref(), b.as_ref()));
        }
    }
    let kxx = within(x) / (m * (m - 1.0));
    let kyy = within(y) / (n * (n - 1.0));
    let kxy = sorted_sum(cross) * 2.0 / (m * n);
    Ok((kxx + kyy - kxy, sigma))
}

/// All four metrics with a shared median-heuristic bandwidth.
pub fn evaluate<S: AsRef<[f64]>>(gen: &[S], reference: &[S]) -> Result<MetricsReport, MetricError> {
    let (mae, mse) = pairwise_errors(gen, reference)?;
    let dm = frechet_dm(gen, reference)?;
    let (mmd, mmd_bandwidth) = mmd_squared(gen, reference, None)?;
    Ok(MetricsReport { mae, mse, dm, mmd, n_generated: gen.len(), n_reference: reference.len(), mmd_bandwidth })
}
