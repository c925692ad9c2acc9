//! Evaluation metrics for transferred motions.

mod contact;
mod fid;
mod spectral;

use std::time::Instant;

use nalgebra::Vector3;
use thiserror::Error;

use crate::correspondence::BindingError;
use crate::motion::{global_positions, Motion, MotionError};
use crate::skeleton::Skeleton;

pub use contact::{contact_consistency, detect_contacts, ContactThresholds, ContactTrack};
pub use fid::{fid, frechet_distance, gaussian, kinematic_features, Gaussian, FID_WINDOW};
pub use spectral::{dominant_phase, frequency_alignment, frequency_alignment_channels, phase_at, psd, psd_cosine};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{side} set yields {windows} feature windows, at least 2 are needed")]
    InsufficientWindows { side: &'static str, windows: usize },
    #[error("no bound channels to compare")]
    NoBoundChannels,
    #[error("sequences have different lengths ({left} and {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("joint {0} does not exist")]
    UnknownJoint(usize),
    #[error("at least {needed} inputs are required, got {found}")]
    TooFew { needed: usize, found: usize },
    #[error("signal has no non-constant frequency content")]
    FlatSignal,
    #[error("signal of {0} samples is too short, at least 8 are needed")]
    TooShort(usize),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Binding(#[from] BindingError),
}

/// Mean over unordered pairs of the mean per-frame, per-joint distance.
///
/// Each entry of `variants` holds global joint positions per frame.
pub fn diversity_positions(variants: &[Vec<Vec<Vector3<f64>>>]) -> Result<f64, MetricsError> {
    if variants.len() < 2 {
        return Err(MetricsError::TooFew {
            needed: 2,
            found: variants.len(),
        });
    }
    for v in &variants[1..] {
        if v.len() != variants[0].len() {
            return Err(MetricsError::LengthMismatch {
                left: variants[0].len(),
                right: v.len(),
            });
        }
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..variants.len() {
        for k in i + 1..variants.len() {
            let mut sum = 0.0;
            let mut count = 0usize;
            for (fa, fb) in variants[i].iter().zip(&variants[k]) {
                for (a, b) in fa.iter().zip(fb) {
                    sum += (a - b).norm();
                    count += 1;
                }
            }
            total += sum / count.max(1) as f64;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Diversity of several 6D motions on one skeleton starting at the same root
/// position.
pub fn diversity(skeleton: &Skeleton, variants: &[Motion], initial_root: Vector3<f64>) -> Result<f64, MetricsError> {
    let positions = variants
        .iter()
        .map(|m| global_positions(skeleton, m, initial_root))
        .collect::<Result<Vec<_>, _>>()?;
    diversity_positions(&positions)
}

/// `2 |M| / (J_S + J_T) * 100`.
pub fn binding_rate(pairs: usize, source_joints: usize, target_joints: usize) -> f64 {
    let total = source_joints + target_joints;
    if total == 0 {
        return 0.0;
    }
    200.0 * pairs as f64 / total as f64
}

/// Frames per second of a workload producing `frames` frames: one warm-up,
/// then the median wall-clock time of five runs.
pub fn measure_fps(frames: usize, mut workload: impl FnMut()) -> f64 {
    workload();
    let mut times: Vec<f64> = (0..5)
        .map(|_| {
            let t = Instant::now();
            workload();
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    frames as f64 / times[2].max(1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binding_rate_values() {
        assert!((binding_rate(6, 41, 76) - 10.26).abs() < 0.005);
        assert_eq!(binding_rate(0, 41, 76), 0.0);
        assert_eq!(binding_rate(22, 22, 22), 100.0);
    }

    #[test]
    fn diversity_cases() {
        let a: Vec<Vec<Vector3<f64>>> = (0..4).map(|f| (0..3).map(|j| Vector3::new(f as f64, j as f64, 0.0)).collect()).collect();
        let shifted: Vec<Vec<Vector3<f64>>> = a.iter().map(|f| f.iter().map(|p| p + Vector3::x()).collect()).collect();
        assert_eq!(diversity_positions(&[a.clone(), a.clone()]).unwrap(), 0.0);
        assert!((diversity_positions(&[a.clone(), shifted.clone()]).unwrap() - 1.0).abs() < 1e-12);
        let forward = diversity_positions(&[a.clone(), shifted.clone(), a.clone()]).unwrap();
        let backward = diversity_positions(&[a.clone(), a.clone(), shifted]).unwrap();
        assert!((forward - backward).abs() < 1e-12);
        assert!(matches!(diversity_positions(&[a]), Err(MetricsError::TooFew { .. })));
    }

    #[test]
    fn fps_is_positive() {
        let fps = measure_fps(10, || {
            std::hint::black_box((0..1000).sum::<u64>());
        });
        assert!(fps > 0.0);
    }
}
