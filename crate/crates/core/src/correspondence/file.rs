//! JSON binding files.
//!
//! ```json
//! {
//!   "pairs": [{"target": "LeftUpLeg", "source": "LeftHip"}],
//!   "bind_root_velocity": true,
//!   "contacts": [{"source": "LeftToe", "target": "LeftFoot"}]
//! }
//! ```
//!
//! A bare array of pairs is accepted as well. `alignment` on a pair is an
//! optional row-major 3x3 rotation overriding the computed rest alignment.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{BindingError, BindingPair, BindingSet};
use crate::skeleton::Skeleton;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedPair {
    pub target: String,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<[[f64; 3]; 3]>,
}

/// A labelled contact joint on each side, used by the contact metric.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactPair {
    pub source: String,
    pub target: String,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingFile {
    pub pairs: Vec<NamedPair>,
    #[serde(default = "default_true")]
    pub bind_root_velocity: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contacts: Vec<ContactPair>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnyBindingFile {
    Full(BindingFile),
    Bare(Vec<NamedPair>),
}

/// Bindings resolved against a pair of skeletons.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedBindings {
    pub bindings: BindingSet,
    /// `(source joint, target joint)` contact labels.
    pub contacts: Vec<(usize, usize)>,
}

fn lookup(skeleton: &Skeleton, name: &str, side: &'static str) -> Result<usize, BindingError> {
    skeleton.find(name).ok_or_else(|| BindingError::UnknownJoint {
        side,
        name: name.to_string(),
    })
}

impl BindingFile {
    pub fn from_json(text: &str) -> Result<Self, BindingError> {
        match serde_json::from_str::<AnyBindingFile>(text) {
            Ok(AnyBindingFile::Full(f)) => Ok(f),
            Ok(AnyBindingFile::Bare(pairs)) => Ok(BindingFile {
                pairs,
                bind_root_velocity: true,
                contacts: Vec::new(),
            }),
            Err(e) => Err(BindingError::Json(e.to_string())),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("binding file serialises")
    }

    /// Names for every pair of a binding set.
    pub fn from_binding_set(bindings: &BindingSet, source: &Skeleton, target: &Skeleton) -> Self {
        let pairs = bindings
            .pairs
            .iter()
            .map(|p| NamedPair {
                target: target.joints()[p.target].name.clone(),
                source: source.joints()[p.source].name.clone(),
                alignment: p.alignment.map(|a| {
                    let mut rows = [[0.0; 3]; 3];
                    for (i, row) in rows.iter_mut().enumerate() {
                        for (j, v) in row.iter_mut().enumerate() {
                            *v = a[(i, j)];
                        }
                    }
                    rows
                }),
            })
            .collect();
        BindingFile {
            pairs,
            bind_root_velocity: bindings.bind_root_velocity,
            contacts: Vec::new(),
        }
    }

    /// Resolves names to joint indices and validates the result.
    pub fn resolve(&self, source: &Skeleton, target: &Skeleton) -> Result<ResolvedBindings, BindingError> {
        let pairs = self
            .pairs
            .iter()
            .map(|p| {
                Ok(BindingPair {
                    target: lookup(target, &p.target, "target")?,
                    source: lookup(source, &p.source, "source")?,
                    alignment: p.alignment.map(|rows| Matrix3::from_fn(|i, j| rows[i][j])),
                })
            })
            .collect::<Result<Vec<_>, BindingError>>()?;
        let bindings = BindingSet {
            pairs,
            bind_root_velocity: self.bind_root_velocity,
        };
        bindings.validate(target.joint_count(), source.joint_count())?;
        let contacts = self
            .contacts
            .iter()
            .map(|c| Ok((lookup(source, &c.source, "source")?, lookup(target, &c.target, "target")?)))
            .collect::<Result<Vec<_>, BindingError>>()?;
        Ok(ResolvedBindings { bindings, contacts })
    }
}
