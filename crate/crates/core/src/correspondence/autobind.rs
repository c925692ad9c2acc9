//! Automatic binding proposals from kinematic chains.
//!
//! A chain of length `L` is a parent-child path of exactly `L` joints,
//! stored root-most first. Chains are compared position-wise by the cosine
//! between rest bone directions.

use nalgebra::Vector3;

use super::{BindingError, BindingSet};
use crate::skeleton::Skeleton;

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// Joint indices, root-most first; the last entry is the chain's leaf.
    pub joints: Vec<usize>,
    /// Unit rest direction per joint, zero for zero-length bones.
    pub directions: Vec<Vector3<f64>>,
}

impl Chain {
    pub fn leaf(&self) -> usize {
        *self.joints.last().expect("chains are non-empty")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BindingProposal {
    pub source_chain: Vec<usize>,
    pub target_chain: Vec<usize>,
    /// `(target, source)` pairs contributed by this proposal after earlier,
    /// higher-ranked proposals claimed their target joints.
    pub pairs: Vec<(usize, usize)>,
    pub score: f64,
}

/// Every parent-child path with exactly `length` joints, ordered by leaf index.
pub fn enumerate_chains(skeleton: &Skeleton, length: usize) -> Vec<Chain> {
    if length == 0 {
        return Vec::new();
    }
    let parents = skeleton.parents();
    let directions: Vec<Vector3<f64>> = skeleton
        .rest_directions()
        .into_iter()
        .map(|d| d.unwrap_or_else(Vector3::zeros))
        .collect();
    let mut chains = Vec::new();
    for leaf in 0..skeleton.joint_count() {
        let mut joints = vec![leaf];
        while joints.len() < length {
            match parents[*joints.last().unwrap()] {
                Some(p) => joints.push(p),
                None => break,
            }
        }
        if joints.len() == length {
            joints.reverse();
            let dirs = joints.iter().map(|&j| directions[j]).collect();
            chains.push(Chain { joints, directions: dirs });
        }
    }
    chains
}

/// Mean position-wise cosine of two equal-length chains.
pub fn chain_similarity(a: &Chain, b: &Chain) -> f64 {
    assert_eq!(a.directions.len(), b.directions.len(), "chains must have equal length");
    let n = a.directions.len();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = a
        .directions
        .iter()
        .zip(&b.directions)
        .map(|(u, v)| {
            let nu = u.norm();
            let nv = v.norm();
            if nu < 1e-12 || nv < 1e-12 {
                0.0
            } else {
                (u.dot(v) / (nu * nv)).clamp(-1.0, 1.0)
            }
        })
        .sum();
    total / n as f64
}

/// Scores are compared on a 1e-9 grid so that near-equal chain pairs fall
/// back to index order.
fn rank_key(score: f64) -> i64 {
    (score * 1e9).round() as i64
}

/// Top `top_k` chain pairs between the two skeletons.
///
/// Pairs are ranked by similarity, then by source leaf, then by target leaf.
/// Each proposal binds its chains position-wise; a target joint already
/// claimed by a higher-ranked proposal is skipped.
pub fn auto_bind(
    source: &Skeleton,
    target: &Skeleton,
    length: usize,
    top_k: usize,
) -> Result<Vec<BindingProposal>, BindingError> {
    let src = enumerate_chains(source, length);
    if src.is_empty() {
        return Err(BindingError::NoChains { side: "source", length });
    }
    let tgt = enumerate_chains(target, length);
    if tgt.is_empty() {
        return Err(BindingError::NoChains { side: "target", length });
    }
    let mut scored: Vec<(f64, usize, usize)> = Vec::with_capacity(src.len() * tgt.len());
    for (i, a) in src.iter().enumerate() {
        for (k, b) in tgt.iter().enumerate() {
            scored.push((chain_similarity(a, b), i, k));
        }
    }
    scored.sort_by(|x, y| {
        rank_key(y.0)
            .cmp(&rank_key(x.0))
            .then(src[x.1].leaf().cmp(&src[y.1].leaf()))
            .then(tgt[x.2].leaf().cmp(&tgt[y.2].leaf()))
    });

    let mut claimed = vec![false; target.joint_count()];
    Ok(scored
        .into_iter()
        .take(top_k)
        .map(|(score, i, k)| {
            let pairs = tgt[k]
                .joints
                .iter()
                .zip(&src[i].joints)
                .filter(|(&t, _)| !std::mem::replace(&mut claimed[t], true))
                .map(|(&t, &s)| (t, s))
                .collect();
            BindingProposal {
                source_chain: src[i].joints.clone(),
                target_chain: tgt[k].joints.clone(),
                pairs,
                score,
            }
        })
        .collect())
}

/// Union of the proposals' pairs, sorted by target joint.
pub fn proposals_to_bindings(proposals: &[BindingProposal], bind_root_velocity: bool) -> BindingSet {
    let mut pairs: Vec<(usize, usize)> = proposals.iter().flat_map(|p| p.pairs.iter().copied()).collect();
    pairs.sort_unstable();
    pairs.dedup_by_key(|p| p.0);
    BindingSet::new(pairs, bind_root_velocity)
}
