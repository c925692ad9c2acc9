//! Fréchet distance between Gaussians fitted to windowed kinematic features.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra::Vector3;

use super::MetricsError;
use crate::motion::{global_positions, Motion};
use crate::skeleton::Skeleton;

pub const FID_WINDOW: usize = 32;

/// Per window of `window` frames (stride `window / 2`): the mean and the
/// population standard deviation of every joint's frame-to-frame speed,
/// laid out as `[mean_0 .. mean_J, std_0 .. std_J]`.
pub fn kinematic_features(
    skeleton: &Skeleton,
    motion: &Motion,
    window: usize,
) -> Result<Vec<DVector<f64>>, MetricsError> {
    let positions = global_positions(skeleton, motion, Vector3::zeros())?;
    let j = skeleton.joint_count();
    let frames = positions.len();
    let stride = (window / 2).max(1);
    let mut out = Vec::new();
    if window < 2 || frames < window {
        return Ok(out);
    }
    let mut start = 0;
    while start + window <= frames {
        let mut v = DVector::zeros(2 * j);
        for joint in 0..j {
            let speeds: Vec<f64> = (start..start + window - 1)
                .map(|f| (positions[f + 1][joint] - positions[f][joint]).norm())
                .collect();
            let n = speeds.len() as f64;
            let mean = speeds.iter().sum::<f64>() / n;
            let var = speeds.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
            v[joint] = mean;
            v[j + joint] = var.sqrt();
        }
        out.push(v);
        start += stride;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Sample mean and unbiased covariance.
pub fn gaussian(samples: &[DVector<f64>]) -> Gaussian {
    let n = samples.len();
    let d = samples.first().map_or(0, |s| s.len());
    let mut mean = DVector::zeros(d);
    for s in samples {
        mean += s;
    }
    mean /= n.max(1) as f64;
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        let c = s - &mean;
        cov += &c * c.transpose();
    }
    if n > 1 {
        cov /= (n - 1) as f64;
    }
    Gaussian { mean, cov }
}

fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `|mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2))`.
///
/// The trace of the cross term is the sum of singular values of
/// `S1^(1/2) S2^(1/2)`, with both roots taken by eigendecomposition and
/// negative eigenvalues clamped to zero.
pub fn frechet_distance(a: &Gaussian, b: &Gaussian) -> f64 {
    let diff = &a.mean - &b.mean;
    let ra = sqrt_psd(&a.cov);
    let rb = sqrt_psd(&b.cov);
    let cross: f64 = (&ra * &rb).singular_values().sum();
    let value = diff.dot(&diff) + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    value.max(0.0)
}

fn pooled_features(skeleton: &Skeleton, motions: &[Motion], window: usize) -> Result<Vec<DVector<f64>>, MetricsError> {
    let mut out = Vec::new();
    for m in motions {
        out.extend(kinematic_features(skeleton, m, window)?);
    }
    Ok(out)
}

/// FID between real and generated motions of one skeleton.
pub fn fid(skeleton: &Skeleton, real: &[Motion], generated: &[Motion], window: usize) -> Result<f64, MetricsError> {
    let a = pooled_features(skeleton, real, window)?;
    if a.len() < 2 {
        return Err(MetricsError::InsufficientWindows {
            side: "real",
            windows: a.len(),
        });
    }
    let b = pooled_features(skeleton, generated, window)?;
    if b.len() < 2 {
        return Err(MetricsError::InsufficientWindows {
            side: "generated",
            windows: b.len(),
        });
    }
    Ok(frechet_distance(&gaussian(&a), &gaussian(&b)))
}
