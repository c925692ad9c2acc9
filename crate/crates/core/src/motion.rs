//! Feature representation of a motion: root velocity followed by one block
//! per joint, plus conversions to and from raw BVH channels.

use nalgebra::Vector3;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bvh::RawMotion;
use crate::rotation::{self, RotationError};
use crate::skeleton::{ChannelLayout, Skeleton, SkeletonError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("raw motion has {found} channels, the skeleton declares {expected}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("feature matrix has width {found}, expected {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("motion must have at least one frame")]
    Empty,
    #[error("motion contains non-finite values")]
    NonFinite,
    #[error("operation requires {expected:?} features, got {found:?}")]
    WrongMode { expected: FeatureMode, found: FeatureMode },
    #[error("motions do not share a layout")]
    LayoutMismatch,
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error(transparent)]
    Rotation(#[from] RotationError),
}

/// Which per-joint quantity fills the joint blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Local joint rotations as 6D vectors.
    #[default]
    Rotation6d,
    /// Root-relative global joint positions.
    LocalPosition,
    /// Frame differences of root-relative joint positions.
    Velocity,
}

impl FeatureMode {
    pub fn joint_width(self) -> usize {
        match self {
            FeatureMode::Rotation6d => 6,
            FeatureMode::LocalPosition | FeatureMode::Velocity => 3,
        }
    }

    pub fn layout(self, joint_count: usize) -> ChannelLayout {
        ChannelLayout {
            joint_count,
            joint_width: self.joint_width(),
        }
    }

    /// Channels holding per-frame differences, which scale with the frame rate.
    pub fn rate_channels(self, layout: &ChannelLayout) -> std::ops::Range<usize> {
        match self {
            FeatureMode::Velocity => 0..layout.width(),
            _ => 0..3,
        }
    }
}

/// `F x D` feature matrix with its frame rate and mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Motion {
    pub features: Array2<f64>,
    pub fps: f64,
    pub mode: FeatureMode,
    joint_count: usize,
}

impl Motion {
    pub fn new(features: Array2<f64>, fps: f64, mode: FeatureMode) -> Result<Self, MotionError> {
        let width = features.ncols();
        let jw = mode.joint_width();
        if width < 3 || !(width - 3).is_multiple_of(jw) {
            return Err(MotionError::ShapeMismatch {
                expected: 3 + jw * ((width.saturating_sub(3)) / jw),
                found: width,
            });
        }
        if features.nrows() == 0 {
            return Err(MotionError::Empty);
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(MotionError::NonFinite);
        }
        Ok(Self {
            features,
            fps,
            mode,
            joint_count: (width - 3) / jw,
        })
    }

    pub fn frames(&self) -> usize {
        self.features.nrows()
    }

    pub fn width(&self) -> usize {
        self.features.ncols()
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    pub fn layout(&self) -> ChannelLayout {
        self.mode.layout(self.joint_count)
    }

    /// Copy of the same motion with new feature values.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self, MotionError> {
        if features.ncols() != self.width() {
            return Err(MotionError::ShapeMismatch {
                expected: self.width(),
                found: features.ncols(),
            });
        }
        Motion::new(features, self.fps, self.mode)
    }
}

/// Flags frames whose Euler extraction hit gimbal lock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GimbalWarning {
    pub frame: usize,
    pub joint: usize,
}

fn root_position(skeleton: &Skeleton, row: ndarray::ArrayView1<'_, f64>) -> Vector3<f64> {
    let root = &skeleton.joints()[0];
    let mut p = root.offset;
    for (c, ch) in root.channels.iter().enumerate() {
        if ch.is_position() {
            p[ch.axis()] += row[c];
        }
    }
    p
}

/// Converts raw channels to 6D rotation features.
///
/// Returns the motion and the root position of the first frame, which
/// together with the integrated root velocity reconstructs the trajectory.
pub fn raw_to_features(skeleton: &Skeleton, raw: &RawMotion) -> Result<(Motion, Vector3<f64>), MotionError> {
    let expected = skeleton.raw_channel_count();
    if raw.values.ncols() != expected {
        return Err(MotionError::ChannelMismatch {
            expected,
            found: raw.values.ncols(),
        });
    }
    let frames = raw.frame_count();
    if frames == 0 {
        return Err(MotionError::Empty);
    }
    let layout = skeleton.layout();
    let mut features = Array2::<f64>::zeros((frames, layout.width()));

    let root_positions: Vec<Vector3<f64>> = raw.values.rows().into_iter().map(|r| root_position(skeleton, r)).collect();
    for f in 0..frames {
        let v = if frames == 1 {
            Vector3::zeros()
        } else if f + 1 < frames {
            root_positions[f + 1] - root_positions[f]
        } else {
            root_positions[f] - root_positions[f - 1]
        };
        for k in 0..3 {
            features[[f, k]] = v[k];
        }
    }

    let mut column = 0;
    let mut axes = Vec::with_capacity(3);
    let mut degrees = Vec::with_capacity(3);
    for (j, joint) in skeleton.joints().iter().enumerate() {
        let range = layout.channel_range(j)?;
        for f in 0..frames {
            axes.clear();
            degrees.clear();
            for (c, ch) in joint.channels.iter().enumerate() {
                if ch.is_rotation() {
                    axes.push(ch.axis());
                    degrees.push(raw.values[[f, column + c]]);
                }
            }
            let r = rotation::euler_to_matrix(&axes, &degrees);
            let six = rotation::encode_6d(&r)?;
            for (k, v) in range.clone().zip(six) {
                features[[f, k]] = v;
            }
        }
        column += joint.channels.len();
    }
    Ok((Motion::new(features, raw.fps(), crate::motion::FeatureMode::Rotation6d)?, root_positions[0]))
}

/// Root trajectory obtained by integrating the root velocity channels.
pub fn integrate_root(motion: &Motion, initial: Vector3<f64>) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(motion.frames());
    let mut p = initial;
    for f in 0..motion.frames() {
        out.push(p);
        let row = motion.features.row(f);
        p += Vector3::new(row[0], row[1], row[2]);
    }
    out
}

/// Inverse of [`raw_to_features`].
///
/// Non-root position channels are written as the joint's rest offset. Euler
/// angles use the principal branch, so values outside (-180, 180] or a middle
/// angle beyond +-90 degrees come back as an equivalent triple.
pub fn features_to_raw(
    skeleton: &Skeleton,
    motion: &Motion,
    initial_root_position: Vector3<f64>,
) -> Result<(RawMotion, Vec<GimbalWarning>), MotionError> {
    if motion.mode != FeatureMode::Rotation6d {
        return Err(MotionError::WrongMode {
            expected: FeatureMode::Rotation6d,
            found: motion.mode,
        });
    }
    let layout = skeleton.layout();
    if motion.width() != layout.width() {
        return Err(MotionError::ShapeMismatch {
            expected: layout.width(),
            found: motion.width(),
        });
    }
    let frames = motion.frames();
    let mut values = Array2::<f64>::zeros((frames, skeleton.raw_channel_count()));
    let mut warnings = Vec::new();
    let roots = integrate_root(motion, initial_root_position);

    let mut column = 0;
    for (j, joint) in skeleton.joints().iter().enumerate() {
        let range = layout.channel_range(j)?;
        let axes = joint.rotation_axes();
        for f in 0..frames {
            let row = motion.features.row(f);
            let six: Vec<f64> = row.slice(ndarray::s![range.clone()]).to_vec();
            let r = rotation::decode_6d(&six)?;
            let euler = rotation::matrix_to_euler(&r, &axes);
            if euler.gimbal {
                warnings.push(GimbalWarning { frame: f, joint: j });
            }
            let mut next_angle = euler.degrees.iter();
            for (c, ch) in joint.channels.iter().enumerate() {
                values[[f, column + c]] = if ch.is_rotation() {
                    *next_angle.next().expect("one angle per rotation channel")
                } else if j == 0 {
                    roots[f][ch.axis()] - joint.offset[ch.axis()]
                } else {
                    joint.offset[ch.axis()]
                };
            }
        }
        column += joint.channels.len();
    }
    Ok((
        RawMotion {
            frame_time: 1.0 / motion.fps,
            values,
        },
        warnings,
    ))
}

/// Global joint positions for every frame of a 6D motion.
pub fn global_positions(
    skeleton: &Skeleton,
    motion: &Motion,
    initial_root_position: Vector3<f64>,
) -> Result<Vec<Vec<Vector3<f64>>>, MotionError> {
    if motion.mode != FeatureMode::Rotation6d {
        return Err(MotionError::WrongMode {
            expected: FeatureMode::Rotation6d,
            found: motion.mode,
        });
    }
    let roots = integrate_root(motion, initial_root_position);
    let mut out = Vec::with_capacity(motion.frames());
    for (f, root) in roots.into_iter().enumerate() {
        let row = motion.features.row(f);
        let pose = row.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| row.to_vec());
        out.push(skeleton.forward_kinematics(&pose, root)?);
    }
    Ok(out)
}

/// Re-expresses a 6D motion in another matching feature mode.
///
/// `LocalPosition` holds root-relative joint positions (root rotation
/// applied); `Velocity` holds their frame differences, with the last frame
/// repeating the previous difference. Root velocity stays in `[0, 3)`.
pub fn to_feature_mode(skeleton: &Skeleton, motion: &Motion, mode: FeatureMode) -> Result<Motion, MotionError> {
    if motion.mode != FeatureMode::Rotation6d {
        return Err(MotionError::WrongMode {
            expected: FeatureMode::Rotation6d,
            found: motion.mode,
        });
    }
    if mode == FeatureMode::Rotation6d {
        return Ok(motion.clone());
    }
    let j = skeleton.joint_count();
    if motion.width() != skeleton.layout().width() {
        return Err(MotionError::ShapeMismatch {
            expected: skeleton.layout().width(),
            found: motion.width(),
        });
    }
    let frames = motion.frames();
    let mut local = Array2::<f64>::zeros((frames, 3 + 3 * j));
    for f in 0..frames {
        let row = motion.features.row(f);
        let pose = row.to_vec();
        let positions = skeleton.forward_kinematics(&pose, Vector3::zeros())?;
        for k in 0..3 {
            local[[f, k]] = row[k];
        }
        for (i, p) in positions.iter().enumerate() {
            for k in 0..3 {
                local[[f, 3 + 3 * i + k]] = p[k];
            }
        }
    }
    if mode == FeatureMode::Velocity {
        let mut vel = local.clone();
        for f in 0..frames {
            let (a, b) = match frames {
                1 => (0, 0),
                _ if f + 1 < frames => (f, f + 1),
                _ => (f - 1, f),
            };
            for c in 3..vel.ncols() {
                vel[[f, c]] = local[[b, c]] - local[[a, c]];
            }
        }
        local = vel;
    }
    Motion::new(local, motion.fps, mode)
}

/// Per-channel standardisation statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-6;

impl NormalizationStats {
    /// Mean 0, std 1: applying it is a no-op.
    pub fn identity(width: usize) -> Self {
        Self {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    /// Mean and population std over all frames of all inputs.
    pub fn fit(motions: &[&Motion]) -> Result<Self, MotionError> {
        let first = motions.first().ok_or(MotionError::Empty)?;
        if motions.iter().any(|m| m.width() != first.width() || m.mode != first.mode) {
            return Err(MotionError::LayoutMismatch);
        }
        let views: Vec<ArrayView2<'_, f64>> = motions.iter().map(|m| m.features.view()).collect();
        let all = ndarray::concatenate(Axis(0), &views).map_err(|_| MotionError::LayoutMismatch)?;
        let mean: Array1<f64> = all.mean_axis(Axis(0)).ok_or(MotionError::Empty)?;
        let std = all.std_axis(Axis(0), 0.0).mapv(|s| s.max(STD_FLOOR));
        Ok(Self {
            mean: mean.to_vec(),
            std: std.to_vec(),
        })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    pub fn invert(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        out
    }
}
