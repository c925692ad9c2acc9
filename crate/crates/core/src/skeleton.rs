//! Typed skeleton, channel layout and forward kinematics.

use std::ops::Range;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bvh::{Channel, RawJoint};
use crate::rotation::{self, RotationError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkeletonError {
    #[error("joint index {index} out of range for {count} joints")]
    OutOfRange { index: usize, count: usize },
    #[error("pose has {found} values, the layout expects {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("bone of joint {joint} (`{name}`) has zero length")]
    DegenerateBone { joint: usize, name: String },
    #[error("invalid skeleton: {0}")]
    Invalid(String),
    #[error(transparent)]
    Rotation(#[from] RotationError),
}

/// A non-end-site joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: Vector3<f64>,
    /// BVH channels in declaration order.
    pub channels: Vec<Channel>,
}

impl Joint {
    /// Axis indices of the rotation channels, in composition order.
    pub fn rotation_axes(&self) -> Vec<usize> {
        self.channels.iter().filter(|c| c.is_rotation()).map(|c| c.axis()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndSite {
    pub parent: usize,
    pub offset: Vector3<f64>,
}

/// Joint hierarchy with rest offsets, topologically sorted (parent < child).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    joints: Vec<Joint>,
    end_sites: Vec<EndSite>,
}

/// Where each joint's channels live in a feature row.
///
/// Channels `[0, 3)` hold the root velocity; joint `j` occupies
/// `[3 + w*j, 3 + w*(j+1))` where `w` is 6 for 6D rotations and 3 for the
/// position-style feature modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelLayout {
    pub joint_count: usize,
    pub joint_width: usize,
}

pub const ROOT_VELOCITY: Range<usize> = 0..3;

impl ChannelLayout {
    pub fn rotation(joint_count: usize) -> Self {
        Self { joint_count, joint_width: 6 }
    }

    pub fn position(joint_count: usize) -> Self {
        Self { joint_count, joint_width: 3 }
    }

    /// Total row width `D`.
    pub fn width(&self) -> usize {
        3 + self.joint_width * self.joint_count
    }

    pub fn root_velocity_range(&self) -> Range<usize> {
        ROOT_VELOCITY
    }

    pub fn channel_range(&self, joint: usize) -> Result<Range<usize>, SkeletonError> {
        if joint >= self.joint_count {
            return Err(SkeletonError::OutOfRange {
                index: joint,
                count: self.joint_count,
            });
        }
        let start = 3 + self.joint_width * joint;
        Ok(start..start + self.joint_width)
    }
}

impl Skeleton {
    /// Builds a skeleton, checking there is one root and parents precede children.
    pub fn new(joints: Vec<Joint>, end_sites: Vec<EndSite>) -> Result<Self, SkeletonError> {
        if joints.is_empty() {
            return Err(SkeletonError::Invalid("a skeleton needs at least one joint".into()));
        }
        if joints[0].parent.is_some() {
            return Err(SkeletonError::Invalid("joint 0 must be the root".into()));
        }
        for (i, j) in joints.iter().enumerate().skip(1) {
            match j.parent {
                Some(p) if p < i => {}
                Some(_) => {
                    return Err(SkeletonError::Invalid(format!(
                        "joint {i} (`{}`) has a parent that does not precede it",
                        j.name
                    )))
                }
                None => return Err(SkeletonError::Invalid("exactly one root is allowed".into())),
            }
        }
        for e in &end_sites {
            if e.parent >= joints.len() {
                return Err(SkeletonError::OutOfRange {
                    index: e.parent,
                    count: joints.len(),
                });
            }
        }
        Ok(Self { joints, end_sites })
    }

    /// Builds a skeleton from parsed BVH joints, separating end sites.
    pub fn from_raw(raw: &[RawJoint]) -> Result<Self, SkeletonError> {
        let mut index_map = vec![usize::MAX; raw.len()];
        let mut joints = Vec::new();
        let mut end_sites = Vec::new();
        for (i, r) in raw.iter().enumerate() {
            let parent = match r.parent {
                Some(p) if p < i && index_map[p] != usize::MAX => Some(index_map[p]),
                Some(_) => return Err(SkeletonError::Invalid(format!("joint `{}` has an invalid parent", r.name))),
                None => None,
            };
            let offset = Vector3::from(r.offset);
            if r.is_end_site {
                let parent = parent.ok_or_else(|| SkeletonError::Invalid("end site without parent".into()))?;
                end_sites.push(EndSite { parent, offset });
            } else {
                index_map[i] = joints.len();
                joints.push(Joint {
                    name: r.name.clone(),
                    parent,
                    offset,
                    channels: r.channels.clone(),
                });
            }
        }
        Self::new(joints, end_sites)
    }

    /// Hierarchy in BVH order (each joint followed by its end sites and
    /// children), suitable for [`crate::bvh::write_bvh`].
    pub fn to_raw(&self) -> Vec<RawJoint> {
        let children = self.children();
        let mut out = Vec::with_capacity(self.joints.len() + self.end_sites.len());
        self.push_raw(0, None, &children, &mut out);
        out
    }

    fn push_raw(&self, joint: usize, parent: Option<usize>, children: &[Vec<usize>], out: &mut Vec<RawJoint>) {
        let j = &self.joints[joint];
        let me = out.len();
        out.push(RawJoint {
            name: j.name.clone(),
            parent,
            offset: [j.offset.x, j.offset.y, j.offset.z],
            channels: j.channels.clone(),
            is_end_site: false,
        });
        for &c in &children[joint] {
            self.push_raw(c, Some(me), children, out);
        }
        for e in self.end_sites.iter().filter(|e| e.parent == joint) {
            out.push(RawJoint {
                name: "End Site".into(),
                parent: Some(me),
                offset: [e.offset.x, e.offset.y, e.offset.z],
                channels: Vec::new(),
                is_end_site: true,
            });
        }
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn end_sites(&self) -> &[EndSite] {
        &self.end_sites
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn names(&self) -> Vec<&str> {
        self.joints.iter().map(|j| j.name.as_str()).collect()
    }

    pub fn parents(&self) -> Vec<Option<usize>> {
        self.joints.iter().map(|j| j.parent).collect()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.joints.len()];
        for (i, j) in self.joints.iter().enumerate() {
            if let Some(p) = j.parent {
                out[p].push(i);
            }
        }
        out
    }

    /// Number of channels declared by the BVH hierarchy.
    pub fn raw_channel_count(&self) -> usize {
        self.joints.iter().map(|j| j.channels.len()).sum()
    }

    pub fn layout(&self) -> ChannelLayout {
        ChannelLayout::rotation(self.joints.len())
    }

    /// Length of every non-root bone, in joint order.
    pub fn bone_lengths(&self) -> Vec<f64> {
        self.joints.iter().skip(1).map(|j| j.offset.norm()).collect()
    }

    /// Median of [`Skeleton::bone_lengths`], or 1 for a single-joint skeleton.
    pub fn median_bone_length(&self) -> f64 {
        let mut lengths = self.bone_lengths();
        if lengths.is_empty() {
            return 1.0;
        }
        lengths.sort_by(f64::total_cmp);
        let n = lengths.len();
        if n % 2 == 1 {
            lengths[n / 2]
        } else {
            0.5 * (lengths[n / 2 - 1] + lengths[n / 2])
        }
    }

    /// Unit rest direction of each joint's bone, `None` where the bone has
    /// zero length.
    ///
    /// A non-root joint uses its own offset; the root uses the offset of its
    /// first child.
    pub fn rest_directions(&self) -> Vec<Option<Vector3<f64>>> {
        let children = self.children();
        (0..self.joints.len())
            .map(|j| {
                let offset = if j == 0 {
                    children[0].first().map(|&c| self.joints[c].offset)
                } else {
                    Some(self.joints[j].offset)
                };
                offset.filter(|o| o.norm() >= 1e-9).map(|o| o / o.norm())
            })
            .collect()
    }

    /// Like [`Skeleton::rest_directions`] but fails on the first degenerate bone.
    pub fn bone_directions(&self) -> Result<Vec<Vector3<f64>>, SkeletonError> {
        self.rest_directions()
            .into_iter()
            .enumerate()
            .map(|(j, d)| {
                d.ok_or_else(|| SkeletonError::DegenerateBone {
                    joint: j,
                    name: self.joints[j].name.clone(),
                })
            })
            .collect()
    }

    /// Local joint rotations decoded from a 6D feature row.
    pub fn decode_pose(&self, pose: &[f64]) -> Result<Vec<Matrix3<f64>>, SkeletonError> {
        let layout = self.layout();
        if pose.len() != layout.width() {
            return Err(SkeletonError::ShapeMismatch {
                expected: layout.width(),
                found: pose.len(),
            });
        }
        (0..self.joints.len())
            .map(|j| {
                let r = layout.channel_range(j)?;
                Ok(rotation::decode_6d(&pose[r])?)
            })
            .collect()
    }

    /// Global joint positions for one 6D feature row.
    ///
    /// The root sits at `root_position`; every other joint is its parent's
    /// position plus the parent's global rotation applied to the rest offset.
    pub fn forward_kinematics(
        &self,
        pose: &[f64],
        root_position: Vector3<f64>,
    ) -> Result<Vec<Vector3<f64>>, SkeletonError> {
        let local = self.decode_pose(pose)?;
        Ok(self.fk_from_rotations(&local, root_position).0)
    }

    /// Positions and global rotations from local rotations.
    pub fn fk_from_rotations(
        &self,
        local: &[Matrix3<f64>],
        root_position: Vector3<f64>,
    ) -> (Vec<Vector3<f64>>, Vec<Matrix3<f64>>) {
        let n = self.joints.len();
        let mut positions = Vec::with_capacity(n);
        let mut globals: Vec<Matrix3<f64>> = Vec::with_capacity(n);
        for (j, joint) in self.joints.iter().enumerate() {
            match joint.parent {
                None => {
                    positions.push(root_position);
                    globals.push(local[j]);
                }
                Some(p) => {
                    positions.push(positions[p] + globals[p] * joint.offset);
                    globals.push(globals[p] * local[j]);
                }
            }
        }
        (positions, globals)
    }
}
