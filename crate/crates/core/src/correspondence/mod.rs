//! Sparse joint bindings and the channel map they induce.
//!
//! A [`BindingSet`] pairs target joints with source joints. Each pair becomes
//! an identity block between the two joints' channel ranges; the map is kept
//! in block form rather than as a dense `D_t x D_s` matrix. The mask marks
//! target channels that receive a source value.

mod autobind;
mod file;

use std::ops::Range;

use nalgebra::Matrix3;
use ndarray::Array2;
use thiserror::Error;

use crate::rotation::{self, RotationError};
use crate::skeleton::{ChannelLayout, Skeleton, SkeletonError};

pub use autobind::{auto_bind, chain_similarity, enumerate_chains, proposals_to_bindings, BindingProposal, Chain};
pub use file::{BindingFile, ContactPair, NamedPair, ResolvedBindings};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BindingError {
    #[error("target joint {0} is bound more than once")]
    DuplicateTarget(usize),
    #[error("{side} joint index {index} out of range for {count} joints")]
    IndexOutOfRange {
        side: &'static str,
        index: usize,
        count: usize,
    },
    #[error("binding set is empty and root velocity is not bound")]
    Empty,
    #[error("unknown {side} joint `{name}`")]
    UnknownJoint { side: &'static str, name: String },
    #[error("alignment override for target joint {0} is not a rotation")]
    BadAlignment(usize),
    #[error("source motion has width {found}, the map expects {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("block widths differ between source ({source_width}) and target ({target_width}) layouts")]
    BlockMismatch { source_width: usize, target_width: usize },
    #[error("no chains of length {length} in the {side} skeleton")]
    NoChains { side: &'static str, length: usize },
    #[error("invalid binding file: {0}")]
    Json(String),
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error(transparent)]
    Rotation(#[from] RotationError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BindingPair {
    pub target: usize,
    pub source: usize,
    /// Replaces the automatically computed rest-pose alignment.
    pub alignment: Option<Matrix3<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BindingSet {
    pub pairs: Vec<BindingPair>,
    pub bind_root_velocity: bool,
}

impl BindingSet {
    /// Pairs given as `(target, source)` joint indices.
    pub fn new(pairs: impl IntoIterator<Item = (usize, usize)>, bind_root_velocity: bool) -> Self {
        Self {
            pairs: pairs
                .into_iter()
                .map(|(target, source)| BindingPair {
                    target,
                    source,
                    alignment: None,
                })
                .collect(),
            bind_root_velocity,
        }
    }

    /// Binds every joint to the joint with the same index.
    pub fn identity(joint_count: usize) -> Self {
        Self::new((0..joint_count).map(|j| (j, j)), true)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn validate(&self, target_joints: usize, source_joints: usize) -> Result<(), BindingError> {
        if self.pairs.is_empty() && !self.bind_root_velocity {
            return Err(BindingError::Empty);
        }
        let mut seen = vec![false; target_joints];
        for p in &self.pairs {
            if p.target >= target_joints {
                return Err(BindingError::IndexOutOfRange {
                    side: "target",
                    index: p.target,
                    count: target_joints,
                });
            }
            if p.source >= source_joints {
                return Err(BindingError::IndexOutOfRange {
                    side: "source",
                    index: p.source,
                    count: source_joints,
                });
            }
            if std::mem::replace(&mut seen[p.target], true) {
                return Err(BindingError::DuplicateTarget(p.target));
            }
            if let Some(a) = &p.alignment {
                if !rotation::is_rotation(a, 1e-6) {
                    return Err(BindingError::BadAlignment(p.target));
                }
            }
        }
        Ok(())
    }
}

/// One identity block of the correspondence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBlock {
    pub target: Range<usize>,
    pub source: Range<usize>,
    /// Rest-pose alignment conjugating 6D rotation blocks; `None` copies verbatim.
    pub alignment: Option<Matrix3<f64>>,
}

/// Block-sparse correspondence matrix plus the target mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceMap {
    blocks: Vec<ChannelBlock>,
    mask: Vec<bool>,
    source_width: usize,
}

impl CorrespondenceMap {
    pub fn blocks(&self) -> &[ChannelBlock] {
        &self.blocks
    }

    /// `m[i]` is true when target channel `i` receives a source channel.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn target_width(&self) -> usize {
        self.mask.len()
    }

    pub fn source_width(&self) -> usize {
        self.source_width
    }

    pub fn bound_channels(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Pairs of `(target channel, source channel)` covered by the blocks.
    pub fn channel_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.blocks.iter().flat_map(|b| b.target.clone().zip(b.source.clone()))
    }
}

/// Builds the block map for a binding set.
///
/// Alignment overrides on the pairs are carried into the blocks; use
/// [`build_map_aligned`] to supply computed rest-pose alignments.
pub fn build_map(
    bindings: &BindingSet,
    source_layout: &ChannelLayout,
    target_layout: &ChannelLayout,
) -> Result<CorrespondenceMap, BindingError> {
    let alignments: Vec<Option<Matrix3<f64>>> = bindings.pairs.iter().map(|p| p.alignment).collect();
    build_blocks(bindings, source_layout, target_layout, &alignments)
}

/// Like [`build_map`] with one alignment rotation per pair.
pub fn build_map_aligned(
    bindings: &BindingSet,
    source_layout: &ChannelLayout,
    target_layout: &ChannelLayout,
    alignments: &[Matrix3<f64>],
) -> Result<CorrespondenceMap, BindingError> {
    assert_eq!(alignments.len(), bindings.len(), "one alignment per binding pair");
    let alignments: Vec<Option<Matrix3<f64>>> = alignments
        .iter()
        .map(|a| if *a == Matrix3::identity() { None } else { Some(*a) })
        .collect();
    build_blocks(bindings, source_layout, target_layout, &alignments)
}

fn build_blocks(
    bindings: &BindingSet,
    source_layout: &ChannelLayout,
    target_layout: &ChannelLayout,
    alignments: &[Option<Matrix3<f64>>],
) -> Result<CorrespondenceMap, BindingError> {
    bindings.validate(target_layout.joint_count, source_layout.joint_count)?;
    if source_layout.joint_width != target_layout.joint_width {
        return Err(BindingError::BlockMismatch {
            source_width: source_layout.joint_width,
            target_width: target_layout.joint_width,
        });
    }
    let rotation_blocks = target_layout.joint_width == 6;
    let mut blocks = Vec::with_capacity(bindings.len() + 1);
    if bindings.bind_root_velocity {
        blocks.push(ChannelBlock {
            target: target_layout.root_velocity_range(),
            source: source_layout.root_velocity_range(),
            alignment: None,
        });
    }
    for (pair, alignment) in bindings.pairs.iter().zip(alignments) {
        blocks.push(ChannelBlock {
            target: target_layout.channel_range(pair.target)?,
            source: source_layout.channel_range(pair.source)?,
            alignment: if rotation_blocks { *alignment } else { None },
        });
    }
    let mut mask = vec![false; target_layout.width()];
    for b in &blocks {
        for i in b.target.clone() {
            mask[i] = true;
        }
    }
    Ok(CorrespondenceMap {
        blocks,
        mask,
        source_width: source_layout.width(),
    })
}

/// `S C^T`: copies bound source channels into target positions, zero elsewhere.
///
/// Rotation blocks with an alignment `A` carry `A R A^T` for each source
/// rotation `R`.
pub fn project_channels(source: &Array2<f64>, map: &CorrespondenceMap) -> Result<Array2<f64>, BindingError> {
    if source.ncols() != map.source_width {
        return Err(BindingError::ShapeMismatch {
            expected: map.source_width,
            found: source.ncols(),
        });
    }
    let mut out = Array2::<f64>::zeros((source.nrows(), map.target_width()));
    for block in &map.blocks {
        match &block.alignment {
            None => {
                for (t, s) in block.target.clone().zip(block.source.clone()) {
                    out.column_mut(t).assign(&source.column(s));
                }
            }
            Some(a) => {
                let at = a.transpose();
                for f in 0..source.nrows() {
                    let six: Vec<f64> = block.source.clone().map(|s| source[[f, s]]).collect();
                    let r = rotation::decode_6d(&six)?;
                    let aligned = rotation::encode_6d(&(a * r * at))?;
                    for (t, v) in block.target.clone().zip(aligned) {
                        out[[f, t]] = v;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Minimal rotation from each bound source bone's rest direction onto the
/// target bone's, or the pair's override when present. Pairs where either
/// bone has zero length get the identity.
pub fn align_rest_pose(
    source: &Skeleton,
    target: &Skeleton,
    bindings: &BindingSet,
) -> Result<Vec<Matrix3<f64>>, BindingError> {
    bindings.validate(target.joint_count(), source.joint_count())?;
    let src_dirs = source.rest_directions();
    let tgt_dirs = target.rest_directions();
    Ok(bindings
        .pairs
        .iter()
        .map(|p| match (p.alignment, src_dirs[p.source], tgt_dirs[p.target]) {
            (Some(a), _, _) => a,
            (None, Some(from), Some(to)) => rotation::rotation_between(&from, &to),
            _ => Matrix3::identity(),
        })
        .collect())
}
