//! Iterative matching and blending on the target skeleton.
//!
//! The source is projected onto the target channel layout, unbound channels
//! are filled with seeded standard normal noise, and the estimate is refined
//! `iterations` times: cut into windows, match each window against the
//! target database, average the matches back together. Bound channels of the
//! estimate are reset to the projected source before every round so the
//! queries keep following the source.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correspondence::{
    align_rest_pose, build_map, build_map_aligned, project_channels, BindingError, BindingSet, CorrespondenceMap,
};
use crate::matching::{channel_weights, match_all, Match};
use crate::motion::{to_feature_mode, FeatureMode, Motion, MotionError, NormalizationStats};
use crate::patch::{blend_views, patch_starts, PatchDatabase, PatchError};
use crate::skeleton::Skeleton;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransferError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("width {found} does not match {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Binding(#[from] BindingError),
    #[error(transparent)]
    Motion(#[from] MotionError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    /// Weight of bound channels in the matching cost.
    pub alpha: f64,
    pub patch_size: usize,
    pub step: usize,
    pub iterations: usize,
    pub pyramid_levels: usize,
    pub feature_mode: FeatureMode,
    pub seed: u64,
    /// Standardise features with statistics of the target examples.
    pub normalize: bool,
    /// Per source frame; `false` frames start as noise on every channel.
    pub keyframe_mask: Option<Vec<bool>>,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            alpha: 0.85,
            patch_size: 11,
            step: 1,
            iterations: 3,
            pyramid_levels: 3,
            feature_mode: FeatureMode::Rotation6d,
            seed: 0,
            normalize: true,
            keyframe_mask: None,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<(), TransferError> {
        let bad = |m: &str| Err(TransferError::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if self.patch_size < 2 {
            return bad("patch_size must be at least 2");
        }
        if self.step == 0 || self.step > self.patch_size {
            return bad("step must be between 1 and patch_size");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if self.pyramid_levels == 0 {
            return bad("pyramid_levels must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub query_start: usize,
    pub motion: usize,
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferResult {
    /// Target-skeleton motion with the source's frame count.
    pub motion: Motion,
    /// Sum of per-window matching costs, one entry per iteration of the
    /// finest level.
    pub energy: Vec<f64>,
    /// Matches of every iteration of the finest level.
    pub trace: Vec<Vec<MatchRecord>>,
    /// Pyramid levels actually run.
    pub levels: usize,
}

/// Query window starts: the regular grid plus a final window flush with the
/// end when the grid leaves trailing frames uncovered.
pub fn query_starts(frames: usize, patch_size: usize, step: usize) -> Result<Vec<usize>, PatchError> {
    let mut starts = patch_starts(frames, patch_size, step)?;
    let last = frames - patch_size;
    if starts.last() != Some(&last) {
        starts.push(last);
    }
    Ok(starts)
}

fn noise(frames: usize, width: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((frames, width), || rng.sample(StandardNormal))
}

fn check_keyframes(mask: Option<&[bool]>, frames: usize) -> Result<(), TransferError> {
    match mask {
        Some(m) if m.len() != frames => Err(TransferError::InvalidConfig(format!(
            "keyframe mask has {} entries for {frames} frames",
            m.len()
        ))),
        _ => Ok(()),
    }
}

fn projected_anchor(
    source: &Array2<f64>,
    map: &CorrespondenceMap,
    stats: &NormalizationStats,
) -> Result<Array2<f64>, TransferError> {
    let projected = project_channels(source, map)?;
    if stats.width() != projected.ncols() {
        return Err(TransferError::ShapeMismatch {
            expected: projected.ncols(),
            found: stats.width(),
        });
    }
    Ok(stats.apply(&projected))
}

/// Overwrites bound channels of visible frames with the anchor.
fn reimpose(estimate: &mut Array2<f64>, anchor: &Array2<f64>, mask: &[bool], visible: Option<&[bool]>) {
    for (f, (mut row, a)) in estimate.rows_mut().into_iter().zip(anchor.rows()).enumerate() {
        if visible.is_some_and(|v| !v[f]) {
            continue;
        }
        for ((x, &y), &m) in row.iter_mut().zip(a.iter()).zip(mask) {
            if m {
                *x = y;
            }
        }
    }
}

/// Noise-initialised projection of the source in the normalised target space.
///
/// Bound channels of visible frames carry the normalised projection, all
/// other entries are draws from a standard normal seeded by `seed`.
pub fn project_source(
    source: &Array2<f64>,
    map: &CorrespondenceMap,
    stats: &NormalizationStats,
    seed: u64,
    keyframe_mask: Option<&[bool]>,
) -> Result<Array2<f64>, TransferError> {
    check_keyframes(keyframe_mask, source.nrows())?;
    let anchor = projected_anchor(source, map, stats)?;
    let mut init = noise(anchor.nrows(), anchor.ncols(), seed);
    reimpose(&mut init, &anchor, map.mask(), keyframe_mask);
    Ok(init)
}

struct LevelOutput {
    estimate: Array2<f64>,
    energy: Vec<f64>,
    trace: Vec<Vec<MatchRecord>>,
    last: Vec<Match>,
    starts: Vec<usize>,
}

fn run_level(
    anchor: &Array2<f64>,
    init: Array2<f64>,
    mask: &[bool],
    visible: Option<&[bool]>,
    db: &PatchDatabase,
    config: &TransferConfig,
) -> Result<LevelOutput, TransferError> {
    let frames = anchor.nrows();
    let width = anchor.ncols();
    if width != db.width() {
        return Err(TransferError::ShapeMismatch {
            expected: db.width(),
            found: width,
        });
    }
    if db.patch_size() != config.patch_size {
        return Err(TransferError::InvalidConfig(format!(
            "database patch size {} differs from configured {}",
            db.patch_size(),
            config.patch_size
        )));
    }
    let starts = query_starts(frames, config.patch_size, config.step)?;
    let weights = channel_weights(mask, config.alpha);
    let mut estimate = init;
    let mut energy = Vec::with_capacity(config.iterations);
    let mut trace = Vec::with_capacity(config.iterations);
    let mut last = Vec::new();
    for _ in 0..config.iterations {
        reimpose(&mut estimate, anchor, mask, visible);
        let matches = match_all(&estimate, &starts, db, &weights)?;
        energy.push(matches.iter().map(|m| m.cost).sum());
        trace.push(
            starts
                .iter()
                .zip(&matches)
                .map(|(&q, m)| {
                    let r = db.refs()[m.index];
                    MatchRecord {
                        query_start: q,
                        motion: r.motion,
                        start: r.start,
                    }
                })
                .collect(),
        );
        estimate = blend_views(
            starts.iter().zip(&matches).map(|(&q, m)| (q, db.patch(m.index))),
            frames,
            width,
        )?;
        last = matches;
    }
    Ok(LevelOutput {
        estimate,
        energy,
        trace,
        last,
        starts,
    })
}

/// Final motion of a level: the payload blend when the database carries one,
/// otherwise the de-normalised estimate.
fn finish(out: &LevelOutput, db: &PatchDatabase, fps: f64) -> Result<Motion, TransferError> {
    match db.payload() {
        Some(payload) => {
            let width = payload[0].ncols();
            let blended = blend_views(
                out.starts
                    .iter()
                    .zip(&out.last)
                    .map(|(&q, m)| (q, db.payload_patch(m.index).expect("payload present"))),
                out.estimate.nrows(),
                width,
            )?;
            Ok(Motion::new(blended, fps, FeatureMode::Rotation6d)?)
        }
        None => Ok(Motion::new(db.stats().invert(&out.estimate), fps, db.mode())?),
    }
}

/// Single-level transfer of `source` (already in the database's feature
/// mode) against a prepared database.
pub fn transfer(
    source: &Motion,
    db: &PatchDatabase,
    map: &CorrespondenceMap,
    config: &TransferConfig,
) -> Result<TransferResult, TransferError> {
    config.validate()?;
    if source.mode != db.mode() {
        return Err(MotionError::WrongMode {
            expected: db.mode(),
            found: source.mode,
        }
        .into());
    }
    let visible = config.keyframe_mask.as_deref();
    check_keyframes(visible, source.frames())?;
    let anchor = projected_anchor(&source.features, map, db.stats())?;
    let init = project_source(&source.features, map, db.stats(), config.seed, visible)?;
    let out = run_level(&anchor, init, map.mask(), visible, db, config)?;
    Ok(TransferResult {
        motion: finish(&out, db, source.fps)?,
        energy: out.energy,
        trace: out.trace,
        levels: 1,
    })
}

/// Everything needed to run a transfer from BVH-level data.
#[derive(Debug, Clone, Copy)]
pub struct TransferInputs<'a> {
    pub source_skeleton: &'a Skeleton,
    /// Source motion in 6D rotation features.
    pub source: &'a Motion,
    pub target_skeleton: &'a Skeleton,
    /// Target example motions in 6D rotation features.
    pub targets: &'a [Motion],
    pub bindings: &'a BindingSet,
    /// Conjugate bound rotations by the rest-pose alignment.
    pub align_rest_pose: bool,
}

impl TransferInputs<'_> {
    fn check(&self) -> Result<(), TransferError> {
        let check = |m: &Motion, sk: &Skeleton| -> Result<(), TransferError> {
            if m.mode != FeatureMode::Rotation6d {
                return Err(MotionError::WrongMode {
                    expected: FeatureMode::Rotation6d,
                    found: m.mode,
                }
                .into());
            }
            if m.width() != sk.layout().width() {
                return Err(TransferError::ShapeMismatch {
                    expected: sk.layout().width(),
                    found: m.width(),
                });
            }
            Ok(())
        };
        check(self.source, self.source_skeleton)?;
        if self.targets.is_empty() {
            return Err(PatchError::EmptyDatabase.into());
        }
        for t in self.targets {
            check(t, self.target_skeleton)?;
        }
        Ok(())
    }

    /// Correspondence map for a feature mode, aligned when requested.
    pub fn correspondence(&self, mode: FeatureMode) -> Result<CorrespondenceMap, TransferError> {
        let sl = mode.layout(self.source_skeleton.joint_count());
        let tl = mode.layout(self.target_skeleton.joint_count());
        if mode == FeatureMode::Rotation6d && self.align_rest_pose {
            let a = align_rest_pose(self.source_skeleton, self.target_skeleton, self.bindings)?;
            Ok(build_map_aligned(self.bindings, &sl, &tl, &a)?)
        } else {
            Ok(build_map(self.bindings, &sl, &tl)?)
        }
    }

    /// The source projected onto the target's 6D layout, without noise.
    pub fn projected_source(&self) -> Result<Array2<f64>, TransferError> {
        let map = self.correspondence(FeatureMode::Rotation6d)?;
        Ok(project_channels(&self.source.features, &map)?)
    }
}

/// Halves the frame rate by keeping even frames. Root velocity is the
/// displacement between kept frames.
pub fn downsample(motion: &Motion) -> Result<Motion, MotionError> {
    let frames = motion.frames();
    let coarse = frames.div_ceil(2);
    let mut out = Array2::<f64>::zeros((coarse, motion.width()));
    for i in 0..coarse {
        out.row_mut(i).assign(&motion.features.row(2 * i));
        for k in 0..3 {
            out[[i, k]] = if i + 1 < coarse {
                motion.features[[2 * i, k]] + motion.features[[2 * i + 1, k]]
            } else {
                0.0
            };
        }
    }
    if coarse >= 2 {
        for k in 0..3 {
            out[[coarse - 1, k]] = out[[coarse - 2, k]];
        }
    }
    Motion::new(out, motion.fps / 2.0, motion.mode)
}

/// Linear interpolation of a coarse level onto `frames` fine frames. Values
/// in `rate` channels are halved.
pub fn upsample(coarse: &Array2<f64>, frames: usize, rate: std::ops::Range<usize>) -> Array2<f64> {
    let n = coarse.nrows();
    let mut out = Array2::<f64>::zeros((frames, coarse.ncols()));
    for i in 0..frames {
        let j0 = (i / 2).min(n - 1);
        let j1 = (j0 + 1).min(n - 1);
        let t = if i % 2 == 1 && j1 != j0 { 0.5 } else { 0.0 };
        for c in 0..coarse.ncols() {
            let mut v = (1.0 - t) * coarse[[j0, c]] + t * coarse[[j1, c]];
            if rate.contains(&c) {
                v *= 0.5;
            }
            out[[i, c]] = v;
        }
    }
    out
}

/// Number of levels such that every level keeps at least `patch_size` frames.
pub fn usable_levels(requested: usize, shortest: usize, patch_size: usize) -> usize {
    let mut levels = 0;
    let mut frames = shortest;
    while levels < requested && frames >= patch_size {
        levels += 1;
        frames = frames.div_ceil(2);
    }
    levels
}

struct LevelData {
    source: Motion,
    targets: Vec<Motion>,
    visible: Option<Vec<bool>>,
}

fn level_inputs(inputs: &TransferInputs<'_>, visible: Option<&[bool]>, levels: usize) -> Result<Vec<LevelData>, TransferError> {
    let mut out = vec![LevelData {
        source: inputs.source.clone(),
        targets: inputs.targets.to_vec(),
        visible: visible.map(<[bool]>::to_vec),
    }];
    for _ in 1..levels {
        let prev = out.last().unwrap();
        let next = LevelData {
            source: downsample(&prev.source)?,
            targets: prev.targets.iter().map(downsample).collect::<Result<_, _>>()?,
            visible: prev.visible.as_ref().map(|v| v.iter().step_by(2).copied().collect()),
        };
        out.push(next);
    }
    Ok(out)
}

/// Database for one level in the configured feature mode.
fn level_database(
    inputs: &TransferInputs<'_>,
    targets: &[Motion],
    config: &TransferConfig,
) -> Result<PatchDatabase, TransferError> {
    let mode = config.feature_mode;
    let features: Vec<Motion> = targets
        .iter()
        .map(|t| to_feature_mode(inputs.target_skeleton, t, mode))
        .collect::<Result<_, _>>()?;
    let stats = if config.normalize {
        NormalizationStats::fit(&features.iter().collect::<Vec<_>>())?
    } else {
        NormalizationStats::identity(features[0].width())
    };
    let db = PatchDatabase::build(&features, config.patch_size, config.step, &stats)?;
    if mode == FeatureMode::Rotation6d {
        Ok(db)
    } else {
        Ok(db.with_payload(targets.iter().map(|t| t.features.clone()).collect())?)
    }
}

/// Coarse-to-fine transfer. Each level starts from the upsampled result of
/// the level below instead of noise; the coarsest level starts from noise.
pub fn transfer_pyramid(inputs: &TransferInputs<'_>, config: &TransferConfig) -> Result<TransferResult, TransferError> {
    config.validate()?;
    inputs.check()?;
    let visible = config.keyframe_mask.as_deref();
    check_keyframes(visible, inputs.source.frames())?;
    let shortest = inputs
        .targets
        .iter()
        .map(Motion::frames)
        .chain([inputs.source.frames()])
        .min()
        .unwrap();
    let levels = usable_levels(config.pyramid_levels, shortest, config.patch_size);
    if levels == 0 {
        return Err(PatchError::TooShort {
            motion: None,
            frames: shortest,
            patch_size: config.patch_size,
        }
        .into());
    }
    let data = level_inputs(inputs, visible, levels)?;
    let mode = config.feature_mode;
    let map = inputs.correspondence(mode)?;

    let mut previous: Option<(Array2<f64>, NormalizationStats)> = None;
    let mut result = None;
    for level in data.iter().rev() {
        let source = to_feature_mode(inputs.source_skeleton, &level.source, mode)?;
        let db = level_database(inputs, &level.targets, config)?;
        let anchor = projected_anchor(&source.features, &map, db.stats())?;
        let visible = level.visible.as_deref();
        let init = match &previous {
            None => project_source(&source.features, &map, db.stats(), config.seed, visible)?,
            Some((estimate, stats)) => {
                let raw = stats.invert(estimate);
                let up = upsample(&raw, source.frames(), mode.rate_channels(&db_layout(&db)));
                db.stats().apply(&up)
            }
        };
        let out = run_level(&anchor, init, map.mask(), visible, &db, config)?;
        let motion = finish(&out, &db, source.fps)?;
        previous = Some((out.estimate.clone(), db.stats().clone()));
        result = Some(TransferResult {
            motion,
            energy: out.energy,
            trace: out.trace,
            levels,
        });
    }
    Ok(result.expect("at least one level"))
}

fn db_layout(db: &PatchDatabase) -> crate::skeleton::ChannelLayout {
    let jw = db.mode().joint_width();
    db.mode().layout((db.width() - 3) / jw)
}

/// `count` results with seeds `seed, seed + 1, ...`.
pub fn generate_variants(
    inputs: &TransferInputs<'_>,
    config: &TransferConfig,
    count: usize,
) -> Result<Vec<TransferResult>, TransferError> {
    if count < 2 {
        return Err(TransferError::InvalidConfig("variant count must be at least 2".into()));
    }
    (0..count as u64)
        .map(|i| {
            let cfg = TransferConfig {
                seed: config.seed.wrapping_add(i),
                ..config.clone()
            };
            transfer_pyramid(inputs, &cfg)
        })
        .collect()
}

/// Replaces bound channels of the result with the projected source.
pub fn copy_bound_channels(
    result: &TransferResult,
    source: &Motion,
    map: &CorrespondenceMap,
) -> Result<TransferResult, TransferError> {
    let projected = project_channels(&source.features, map)?;
    if projected.dim() != result.motion.features.dim() {
        return Err(TransferError::ShapeMismatch {
            expected: result.motion.width(),
            found: projected.ncols(),
        });
    }
    let mut features = result.motion.features.clone();
    for (c, &bound) in map.mask().iter().enumerate() {
        if bound {
            features.column_mut(c).assign(&projected.column(c));
        }
    }
    Ok(TransferResult {
        motion: result.motion.with_features(features)?,
        ..result.clone()
    })
}
