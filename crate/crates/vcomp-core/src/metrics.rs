//! Distribution metrics over externally extracted feature vectors: Gaussian
//! summaries and the Frechet distance between them, plus simple per-frame
//! statistics for reports.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::grid::RgbGrid;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty feature set")]
    EmptyInput,
    #[error("feature dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix square root failed to stabilize: {0}")]
    NumericalFailure(String),
}

/// Relative threshold below which negative eigenvalues are treated as
/// rounding and clamped; anything more negative is an error.
const EIGEN_CLAMP_REL: f64 = 1e-10;

/// Gaussian summary (sample mean, unbiased covariance) of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub count: usize,
}

impl FeatureStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased covariance (`n - 1` denominator; zero matrix
/// for a single sample).
pub fn feature_stats(features: &[Vec<f32>]) -> Result<FeatureStats, MetricsError> {
    let n = features.len();
    if n == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let d = features[0].len();
    for f in features {
        if f.len() != d {
            return Err(MetricsError::DimensionMismatch(f.len(), d));
        }
    }
    let mut mean = DVector::<f64>::zeros(d);
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += *v as f64;
        }
    }
    mean /= n as f64;

    let mut covariance = DMatrix::<f64>::zeros(d, d);
    if n > 1 {
        for f in features {
            let centered =
                DVector::from_iterator(d, f.iter().map(|&v| v as f64)) - &mean;
            covariance += &centered * centered.transpose();
        }
        covariance /= (n - 1) as f64;
    }
    Ok(FeatureStats {
        mean,
        covariance,
        count: n,
    })
}

/// Square root of a symmetric PSD matrix via eigen-decomposition; tiny
/// negative eigenvalues clamp to zero, larger negativity is an error.
fn sqrtm_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>, MetricsError> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let floor = -EIGEN_CLAMP_REL * max_eig.max(1.0);
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < floor {
            return Err(MetricsError::NumericalFailure(format!(
                "eigenvalue {v} below clamp threshold {floor}"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&roots) * q.transpose())
}

/// Frechet distance between two Gaussian summaries:
/// `||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2})`.
///
/// The cross term uses the symmetric reduction
/// `tr((S_a S_b)^{1/2}) = tr((S_a^{1/2} S_b S_a^{1/2})^{1/2})`.
pub fn fid_score(a: &FeatureStats, b: &FeatureStats) -> Result<f64, MetricsError> {
    if a.dim() != b.dim() {
        return Err(MetricsError::DimensionMismatch(a.dim(), b.dim()));
    }
    let mean_term = (&a.mean - &b.mean).norm_squared();
    let a_half = sqrtm_psd(&a.covariance)?;
    let inner = &a_half * &b.covariance * &a_half;
    let cross = sqrtm_psd(&inner)?;
    let trace_term = a.covariance.trace() + b.covariance.trace() - 2.0 * cross.trace();
    Ok(mean_term + trace_term)
}

/// Per-frame summary statistics for inspection reports.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FrameStats {
    pub mean_rgb: [f64; 3],
    pub min: f64,
    pub max: f64,
}

pub fn frame_stats(image: &RgbGrid) -> FrameStats {
    let mut mean = [0.0f64; 3];
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for (_, _, p) in image.iter_pixels() {
        for c in 0..3 {
            mean[c] += p[c] as f64;
            min = min.min(p[c] as f64);
            max = max.max(p[c] as f64);
        }
    }
    let n = (image.width() * image.height()) as f64;
    for m in &mut mean {
        *m /= n;
    }
    FrameStats {
        mean_rgb: mean,
        min,
        max,
    }
}
