//! Sliding-window patches, the pooled target database and overlap-average
//! blending.

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

use crate::motion::{FeatureMode, Motion, MotionError, NormalizationStats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatchError {
    #[error("{} has {frames} frames, fewer than the patch size {patch_size}", motion_label(*.motion))]
    TooShort {
        motion: Option<usize>,
        frames: usize,
        patch_size: usize,
    },
    #[error("patch size must be at least 2, got {0}")]
    InvalidPatchSize(usize),
    #[error("step must be at least 1")]
    InvalidStep,
    #[error("frame {frame} is not covered by any patch")]
    CoverageGap { frame: usize },
    #[error("patch width {found} does not match {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("patch database is empty")]
    EmptyDatabase,
    #[error(transparent)]
    Motion(#[from] MotionError),
}

fn motion_label(m: Option<usize>) -> String {
    match m {
        Some(i) => format!("target motion {i}"),
        None => "motion".to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PatchRef {
    pub motion: usize,
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub values: Array2<f64>,
    pub motion: usize,
    pub start: usize,
}

pub fn patch_count(frames: usize, patch_size: usize, step: usize) -> usize {
    if frames < patch_size || step == 0 {
        0
    } else {
        (frames - patch_size + 1) / step
    }
}

/// Start frames `0, step, 2 step, ...` of every full window.
pub fn patch_starts(frames: usize, patch_size: usize, step: usize) -> Result<Vec<usize>, PatchError> {
    if patch_size < 2 {
        return Err(PatchError::InvalidPatchSize(patch_size));
    }
    if step == 0 {
        return Err(PatchError::InvalidStep);
    }
    if frames < patch_size {
        return Err(PatchError::TooShort {
            motion: None,
            frames,
            patch_size,
        });
    }
    Ok((0..patch_count(frames, patch_size, step)).map(|i| i * step).collect())
}

pub fn patchify(motion: &Motion, patch_size: usize, step: usize) -> Result<Vec<Patch>, PatchError> {
    let starts = patch_starts(motion.frames(), patch_size, step)?;
    Ok(starts
        .into_iter()
        .map(|start| Patch {
            values: motion.features.slice(ndarray::s![start..start + patch_size, ..]).to_owned(),
            motion: 0,
            start,
        })
        .collect())
}

/// Averages overlapping windows into an `frames x width` matrix.
///
/// Each output value is the running mean of the patch values covering it, so
/// consistent overlaps reproduce their common value exactly.
pub fn blend_views<'a>(
    patches: impl IntoIterator<Item = (usize, ArrayView2<'a, f64>)>,
    frames: usize,
    width: usize,
) -> Result<Array2<f64>, PatchError> {
    let mut out = Array2::<f64>::zeros((frames, width));
    let mut counts = vec![0u32; frames];
    for (start, values) in patches {
        if values.ncols() != width {
            return Err(PatchError::ShapeMismatch {
                expected: width,
                found: values.ncols(),
            });
        }
        for (k, row) in values.rows().into_iter().enumerate() {
            let f = start + k;
            if f >= frames {
                break;
            }
            counts[f] += 1;
            let n = counts[f] as f64;
            for (o, v) in out.row_mut(f).iter_mut().zip(row.iter()) {
                *o += (v - *o) / n;
            }
        }
    }
    if let Some(frame) = counts.iter().position(|&c| c == 0) {
        return Err(PatchError::CoverageGap { frame });
    }
    Ok(out)
}

pub fn blend(patches: &[Patch], frames: usize) -> Result<Array2<f64>, PatchError> {
    let width = patches.first().map_or(0, |p| p.values.ncols());
    blend_views(patches.iter().map(|p| (p.start, p.values.view())), frames, width)
}

/// Pooled, normalised windows over all target motions.
///
/// Windows are stored as references into the normalised motions. An optional
/// payload holds a second representation of the same frames (raw 6D
/// rotations when matching runs on positions or velocities).
#[derive(Debug, Clone)]
pub struct PatchDatabase {
    motions: Vec<Array2<f64>>,
    payload: Option<Vec<Array2<f64>>>,
    refs: Vec<PatchRef>,
    patch_size: usize,
    step: usize,
    width: usize,
    stats: NormalizationStats,
    mode: FeatureMode,
}

impl PatchDatabase {
    pub fn build(
        targets: &[Motion],
        patch_size: usize,
        step: usize,
        stats: &NormalizationStats,
    ) -> Result<Self, PatchError> {
        let first = targets.first().ok_or(PatchError::EmptyDatabase)?;
        let width = first.width();
        if stats.width() != width {
            return Err(PatchError::ShapeMismatch {
                expected: width,
                found: stats.width(),
            });
        }
        let mut refs = Vec::new();
        let mut motions = Vec::with_capacity(targets.len());
        for (i, t) in targets.iter().enumerate() {
            if t.width() != width || t.mode != first.mode {
                return Err(PatchError::Motion(MotionError::LayoutMismatch));
            }
            let starts = patch_starts(t.frames(), patch_size, step).map_err(|e| match e {
                PatchError::TooShort { frames, patch_size, .. } => PatchError::TooShort {
                    motion: Some(i),
                    frames,
                    patch_size,
                },
                other => other,
            })?;
            refs.extend(starts.into_iter().map(|start| PatchRef { motion: i, start }));
            motions.push(stats.apply(&t.features));
        }
        Ok(Self {
            motions,
            payload: None,
            refs,
            patch_size,
            step,
            width,
            stats: stats.clone(),
            mode: first.mode,
        })
    }

    /// Attaches one payload matrix per motion with matching frame counts.
    pub fn with_payload(mut self, payload: Vec<Array2<f64>>) -> Result<Self, PatchError> {
        if payload.len() != self.motions.len() {
            return Err(PatchError::ShapeMismatch {
                expected: self.motions.len(),
                found: payload.len(),
            });
        }
        for (p, m) in payload.iter().zip(&self.motions) {
            if p.nrows() != m.nrows() {
                return Err(PatchError::ShapeMismatch {
                    expected: m.nrows(),
                    found: p.nrows(),
                });
            }
        }
        self.payload = Some(payload);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn refs(&self) -> &[PatchRef] {
        &self.refs
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn stats(&self) -> &NormalizationStats {
        &self.stats
    }

    pub fn mode(&self) -> FeatureMode {
        self.mode
    }

    pub fn motion_count(&self) -> usize {
        self.motions.len()
    }

    /// Normalised frames of one target motion.
    pub fn motion(&self, index: usize) -> &Array2<f64> {
        &self.motions[index]
    }

    pub fn patch(&self, index: usize) -> ArrayView2<'_, f64> {
        let r = self.refs[index];
        self.motions[r.motion].slice(ndarray::s![r.start..r.start + self.patch_size, ..])
    }

    pub fn payload(&self) -> Option<&[Array2<f64>]> {
        self.payload.as_deref()
    }

    pub fn payload_patch(&self, index: usize) -> Option<ArrayView2<'_, f64>> {
        let r = self.refs[index];
        self.payload
            .as_ref()
            .map(|p| p[r.motion].slice(ndarray::s![r.start..r.start + self.patch_size, ..]))
    }

    pub fn to_patches(&self) -> Vec<Patch> {
        (0..self.len())
            .map(|i| Patch {
                values: self.patch(i).to_owned(),
                motion: self.refs[i].motion,
                start: self.refs[i].start,
            })
            .collect()
    }
}

pub fn build_database(
    targets: &[Motion],
    patch_size: usize,
    step: usize,
    stats: &NormalizationStats,
) -> Result<PatchDatabase, PatchError> {
    PatchDatabase::build(targets, patch_size, step, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(frames: usize, width: usize) -> Motion {
        let f = Array2::from_shape_fn((frames, width), |(i, c)| (i * 7 + c) as f64 * 0.25);
        Motion::new(f, 30.0, FeatureMode::Rotation6d).unwrap()
    }

    #[test]
    fn counts() {
        assert_eq!(patchify(&ramp(100, 9), 11, 1).unwrap().len(), 90);
        let one = patchify(&ramp(11, 9), 11, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].values, ramp(11, 9).features);
        let stepped = patchify(&ramp(20, 9), 11, 4).unwrap();
        assert_eq!(stepped.iter().map(|p| p.start).collect::<Vec<_>>(), vec![0, 4]);
        assert!(matches!(
            patchify(&ramp(10, 9), 11, 1),
            Err(PatchError::TooShort { frames: 10, .. })
        ));
    }

    #[test]
    fn blend_cases() {
        let p = Patch {
            values: Array2::from_elem((3, 1), 1.0),
            motion: 0,
            start: 0,
        };
        let q = Patch {
            values: Array2::from_elem((3, 1), 3.0),
            motion: 0,
            start: 2,
        };
        let out = blend(&[p.clone(), q], 5).unwrap();
        assert_eq!(out.column(0).to_vec(), vec![1.0, 1.0, 2.0, 3.0, 3.0]);
        assert_eq!(blend(std::slice::from_ref(&p), 3).unwrap(), p.values);
        assert_eq!(blend(&[p], 4).unwrap_err(), PatchError::CoverageGap { frame: 3 });
    }

    #[test]
    fn database_pooling() {
        let stats = NormalizationStats::identity(9);
        let db = build_database(&[ramp(11, 9)], 11, 1, &stats).unwrap();
        assert_eq!(db.len(), 1);
        let three = build_database(&[ramp(40, 9), ramp(40, 9), ramp(40, 9)], 11, 1, &stats).unwrap();
        assert_eq!(three.len(), 3 * 30);
        let sorted = three.refs().windows(2).all(|w| w[0] < w[1]);
        assert!(sorted);
        let err = build_database(&[ramp(40, 9), ramp(5, 9)], 11, 1, &stats).unwrap_err();
        assert_eq!(
            err,
            PatchError::TooShort {
                motion: Some(1),
                frames: 5,
                patch_size: 11
            }
        );
    }

    #[test]
    fn growth_is_monotone() {
        let stats = NormalizationStats::identity(9);
        let a = build_database(&[ramp(30, 9)], 11, 2, &stats).unwrap();
        let b = build_database(&[ramp(30, 9), ramp(25, 9)], 11, 2, &stats).unwrap();
        assert_eq!(&b.refs()[..a.len()], a.refs());
        assert_eq!(b.len(), a.len() + patch_count(25, 11, 2));
    }

    proptest! {
        #[test]
        fn patchify_blend_identity(frames in 2usize..60, ps in 2usize..12, width in 1usize..8, seed in any::<u64>()) {
            prop_assume!(frames >= ps);
            let f = Array2::from_shape_fn((frames, 3 + 6 * width), |(i, c)| {
                ((seed.wrapping_mul(31).wrapping_add((i * 97 + c) as u64) % 1000) as f64) / 37.0
            });
            let m = Motion::new(f, 30.0, FeatureMode::Rotation6d).unwrap();
            let patches = patchify(&m, ps, 1).unwrap();
            prop_assert_eq!(patches.len(), frames - ps + 1);
            prop_assert_eq!(blend(&patches, frames).unwrap(), m.features);
        }

        #[test]
        fn blend_permutation_invariant(order in Just((0..8usize).collect::<Vec<_>>()).prop_shuffle()) {
            let patches: Vec<Patch> = (0..8)
                .map(|i| Patch {
                    values: Array2::from_shape_fn((4, 2), |(k, c)| ((i * 13 + k * 5 + c) % 7) as f64 * 0.3),
                    motion: 0,
                    start: i,
                })
                .collect();
            let shuffled: Vec<Patch> = order.iter().map(|&i| patches[i].clone()).collect();
            let a = blend(&patches, 11).unwrap();
            let b = blend(&shuffled, 11).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
