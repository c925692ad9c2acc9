//! Loading, transfer and evaluation shared by the command line and the
//! service.

use std::time::Instant;

use nalgebra::Vector3;
use serde::Serialize;

use xtopo_core::correspondence::{BindingFile, BindingProposal, CorrespondenceMap, ResolvedBindings};
use xtopo_core::metrics::{self, ContactThresholds, MetricsError, FID_WINDOW};
use xtopo_core::motion::{features_to_raw, global_positions, raw_to_features, MotionError};
use xtopo_core::transfer::copy_bound_channels;
use xtopo_core::{
    generate_variants, parse_bvh, transfer_pyramid, write_bvh, Error, FeatureMode, Motion, Skeleton, TransferConfig,
    TransferInputs, TransferResult,
};

/// A parsed BVH file: skeleton, 6D motion and the first root position.
#[derive(Debug, Clone)]
pub struct Character {
    pub skeleton: Skeleton,
    pub motion: Motion,
    pub root: Vector3<f64>,
    /// The file as uploaded, kept for persistence.
    pub text: String,
}

impl Character {
    pub fn parse(text: &str) -> Result<Self, Error> {
        let (joints, raw) = parse_bvh(text)?;
        let skeleton = Skeleton::from_raw(&joints)?;
        let (motion, root) = raw_to_features(&skeleton, &raw)?;
        Ok(Self {
            skeleton,
            motion,
            root,
            text: text.to_string(),
        })
    }

    pub fn summary(&self) -> Summary {
        Summary {
            joints: self.skeleton.names().iter().map(|s| s.to_string()).collect(),
            parents: self.skeleton.parents(),
            frames: self.motion.frames(),
            fps: self.motion.fps,
        }
    }

    /// Global joint positions of `motion` on this character, frame by frame.
    pub fn positions(&self, motion: &Motion) -> Result<Vec<Vec<[f64; 3]>>, Error> {
        let frames = global_positions(&self.skeleton, motion, self.root)?;
        Ok(frames
            .into_iter()
            .map(|f| f.into_iter().map(|p| [p.x, p.y, p.z]).collect())
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub joints: Vec<String>,
    pub parents: Vec<Option<usize>>,
    pub frames: usize,
    pub fps: f64,
}

/// Target examples must share one skeleton.
pub fn check_targets(targets: &[Character]) -> Result<(), Error> {
    if let Some(first) = targets.first() {
        if targets.iter().any(|t| t.skeleton != first.skeleton) {
            return Err(MotionError::LayoutMismatch.into());
        }
    }
    Ok(())
}

/// Proposal with joint names instead of indices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedProposal {
    pub source_chain: Vec<String>,
    pub target_chain: Vec<String>,
    pub pairs: Vec<NamedPairOut>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedPairOut {
    pub target: String,
    pub source: String,
}

pub fn name_proposals(proposals: &[BindingProposal], source: &Skeleton, target: &Skeleton) -> Vec<NamedProposal> {
    let sn = source.names();
    let tn = target.names();
    proposals
        .iter()
        .map(|p| NamedProposal {
            source_chain: p.source_chain.iter().map(|&j| sn[j].to_string()).collect(),
            target_chain: p.target_chain.iter().map(|&j| tn[j].to_string()).collect(),
            pairs: p
                .pairs
                .iter()
                .map(|&(t, s)| NamedPairOut {
                    target: tn[t].to_string(),
                    source: sn[s].to_string(),
                })
                .collect(),
            score: p.score,
        })
        .collect()
}

/// Automatic bindings as a binding file.
pub fn autobind_file(source: &Skeleton, target: &Skeleton, length: usize, top_k: usize) -> Result<BindingFile, Error> {
    let proposals = xtopo_core::auto_bind(source, target, length, top_k)?;
    let set = xtopo_core::correspondence::proposals_to_bindings(&proposals, true);
    Ok(BindingFile::from_binding_set(&set, source, target))
}

#[derive(Debug, Clone)]
pub struct Run {
    pub results: Vec<TransferResult>,
    pub seconds: f64,
    pub map: CorrespondenceMap,
}

/// One result, or `variants` results with consecutive seeds.
pub fn run_transfer(
    source: &Character,
    targets: &[Character],
    resolved: &ResolvedBindings,
    config: &TransferConfig,
    variants: usize,
    copy_bound: bool,
) -> Result<Run, Error> {
    check_targets(targets)?;
    let Some(first) = targets.first() else {
        return Err(xtopo_core::patch::PatchError::EmptyDatabase.into());
    };
    let examples: Vec<Motion> = targets.iter().map(|t| t.motion.clone()).collect();
    let inputs = TransferInputs {
        source_skeleton: &source.skeleton,
        source: &source.motion,
        target_skeleton: &first.skeleton,
        targets: &examples,
        bindings: &resolved.bindings,
        align_rest_pose: true,
    };
    let map = inputs.correspondence(FeatureMode::Rotation6d)?;
    let started = Instant::now();
    let mut results = if variants >= 2 {
        generate_variants(&inputs, config, variants)?
    } else {
        vec![transfer_pyramid(&inputs, config)?]
    };
    if copy_bound {
        results = results
            .iter()
            .map(|r| copy_bound_channels(r, &source.motion, &map))
            .collect::<Result<_, _>>()?;
    }
    Ok(Run {
        results,
        seconds: started.elapsed().as_secs_f64(),
        map,
    })
}

/// The result as a BVH file on the target skeleton, starting at the first
/// example's root position.
pub fn result_bvh(target: &Character, motion: &Motion) -> Result<String, Error> {
    let (raw, _) = features_to_raw(&target.skeleton, motion, target.root)?;
    Ok(write_bvh(&target.skeleton.to_raw(), &raw)?)
}

/// Metrics of a run. Entries that cannot be computed for the given inputs
/// (too few frames, no contact labels, a single variant) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub fid: Option<f64>,
    pub freq_align: Option<f64>,
    pub contact_consistency: Option<f64>,
    pub diversity: Option<f64>,
    pub binding_rate: f64,
    pub fps: f64,
}

fn optional(r: Result<f64, MetricsError>) -> Result<Option<f64>, Error> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(MetricsError::InsufficientWindows { .. } | MetricsError::NoBoundChannels | MetricsError::TooFew { .. }) => {
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn evaluate(source: &Character, targets: &[Character], resolved: &ResolvedBindings, run: &Run) -> Result<Report, Error> {
    let target = &targets[0];
    let motions: Vec<Motion> = run.results.iter().map(|r| r.motion.clone()).collect();
    let examples: Vec<Motion> = targets.iter().map(|t| t.motion.clone()).collect();
    let first = &motions[0];

    let fid = optional(metrics::fid(&target.skeleton, &examples, &motions, FID_WINDOW))?;
    let freq_align = optional(metrics::frequency_alignment(&source.motion, first, &run.map))?;
    let contact_consistency = if resolved.contacts.is_empty() {
        None
    } else {
        let (src, tgt): (Vec<usize>, Vec<usize>) = resolved.contacts.iter().copied().unzip();
        let a = metrics::detect_contacts(
            &source.skeleton,
            &source.motion,
            source.root,
            &src,
            ContactThresholds::for_skeleton(&source.skeleton),
        )?;
        let b = metrics::detect_contacts(
            &target.skeleton,
            first,
            target.root,
            &tgt,
            ContactThresholds::for_skeleton(&target.skeleton),
        )?;
        let pairing: Vec<(usize, usize)> = (0..src.len()).map(|i| (i, i)).collect();
        Some(metrics::contact_consistency(&a, &b, &pairing)?)
    };
    let diversity = if motions.len() >= 2 {
        optional(metrics::diversity(&target.skeleton, &motions, target.root))?
    } else {
        None
    };
    let frames: usize = motions.iter().map(Motion::frames).sum();
    Ok(Report {
        fid,
        freq_align,
        contact_consistency,
        diversity,
        binding_rate: metrics::binding_rate(
            resolved.bindings.len(),
            source.skeleton.joint_count(),
            target.skeleton.joint_count(),
        ),
        fps: frames as f64 / run.seconds.max(1e-9),
    })
}
