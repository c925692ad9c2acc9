//! Foot-contact detection and agreement.

use nalgebra::Vector3;
use serde::Serialize;

use super::MetricsError;
use crate::motion::{global_positions, Motion};
use crate::skeleton::Skeleton;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactThresholds {
    /// Speed limit in units per frame.
    pub velocity: f64,
    /// Height limit above the sequence floor.
    pub height: f64,
}

impl ContactThresholds {
    /// `0.05` and `0.1` times the skeleton's median bone length.
    pub fn for_skeleton(skeleton: &Skeleton) -> Self {
        let scale = skeleton.median_bone_length();
        Self {
            velocity: 0.05 * scale,
            height: 0.1 * scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContactTrack {
    pub joints: Vec<usize>,
    /// `contacts[i][f]` for joint `joints[i]` at frame `f`.
    pub contacts: Vec<Vec<bool>>,
}

impl ContactTrack {
    pub fn frames(&self) -> usize {
        self.contacts.first().map_or(0, Vec::len)
    }
}

fn percentile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let pos = q * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    values[lo] * (1.0 - t) + values[hi] * t
}

/// Flags frames where a joint is both slow and close to the floor.
///
/// Speed is the distance to the next frame's position (the last frame reuses
/// the previous step). The floor is the 5th percentile of the labelled
/// joints' heights (Y) over the whole sequence.
pub fn detect_contacts(
    skeleton: &Skeleton,
    motion: &Motion,
    initial_root: Vector3<f64>,
    joints: &[usize],
    thresholds: ContactThresholds,
) -> Result<ContactTrack, MetricsError> {
    if let Some(&bad) = joints.iter().find(|&&j| j >= skeleton.joint_count()) {
        return Err(MetricsError::UnknownJoint(bad));
    }
    let positions = global_positions(skeleton, motion, initial_root)?;
    let frames = positions.len();
    if joints.is_empty() {
        return Ok(ContactTrack {
            joints: Vec::new(),
            contacts: Vec::new(),
        });
    }
    let mut heights: Vec<f64> = joints.iter().flat_map(|&j| positions.iter().map(move |p| p[j].y)).collect();
    let floor = percentile(&mut heights, 0.05);
    let contacts = joints
        .iter()
        .map(|&j| {
            (0..frames)
                .map(|f| {
                    let speed = match frames {
                        1 => 0.0,
                        _ if f + 1 < frames => (positions[f + 1][j] - positions[f][j]).norm(),
                        _ => (positions[f][j] - positions[f - 1][j]).norm(),
                    };
                    speed < thresholds.velocity && positions[f][j].y - floor < thresholds.height
                })
                .collect()
        })
        .collect();
    Ok(ContactTrack {
        joints: joints.to_vec(),
        contacts,
    })
}

/// `100 x` fraction of (frame, pair) cells whose contact flags agree.
/// `pairing` holds `(source row, result row)` indices into the two tracks.
pub fn contact_consistency(
    source: &ContactTrack,
    result: &ContactTrack,
    pairing: &[(usize, usize)],
) -> Result<f64, MetricsError> {
    if source.frames() != result.frames() {
        return Err(MetricsError::LengthMismatch {
            left: source.frames(),
            right: result.frames(),
        });
    }
    if pairing.is_empty() {
        return Err(MetricsError::TooFew { needed: 1, found: 0 });
    }
    let mut agree = 0usize;
    let mut total = 0usize;
    for &(a, b) in pairing {
        let ta = source.contacts.get(a).ok_or(MetricsError::UnknownJoint(a))?;
        let tb = result.contacts.get(b).ok_or(MetricsError::UnknownJoint(b))?;
        agree += ta.iter().zip(tb).filter(|(x, y)| x == y).count();
        total += ta.len();
    }
    Ok(100.0 * agree as f64 / total.max(1) as f64)
}
