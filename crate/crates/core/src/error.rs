use thiserror::Error;

use crate::bvh::BvhError;
use crate::correspondence::BindingError;
use crate::metrics::MetricsError;
use crate::motion::MotionError;
use crate::patch::PatchError;
use crate::rotation::RotationError;
use crate::skeleton::SkeletonError;
use crate::transfer::TransferError;

/// Any error raised by the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Bvh(#[from] BvhError),
    #[error(transparent)]
    Rotation(#[from] RotationError),
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Binding(#[from] BindingError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl Error {
    /// Short name of the underlying error variant, e.g. `DuplicateTarget`.
    pub fn kind(&self) -> String {
        let inner = match self {
            Error::Bvh(e) => format!("{e:?}"),
            Error::Rotation(e) => format!("{e:?}"),
            Error::Skeleton(e) => format!("{e:?}"),
            Error::Motion(e) => format!("{e:?}"),
            Error::Binding(e) => format!("{e:?}"),
            Error::Patch(e) => format!("{e:?}"),
            Error::Transfer(e) => format!("{e:?}"),
            Error::Metrics(e) => format!("{e:?}"),
        };
        variant_name(&inner)
    }
}

/// Innermost variant name from a `Debug` rendering such as `Binding(DuplicateTarget(3))`.
fn variant_name(debug: &str) -> String {
    let mut rest = debug;
    loop {
        let end = rest.find(|c: char| !c.is_alphanumeric() && c != '_').unwrap_or(rest.len());
        let name = rest[..end].to_string();
        let wrapper = matches!(
            name.as_str(),
            "Bvh" | "Rotation" | "Skeleton" | "Motion" | "Binding" | "Patch" | "Transfer" | "Metrics"
        );
        if wrapper && rest[end..].starts_with('(') {
            rest = &rest[end + 1..];
        } else {
            return name;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds() {
        let e: Error = BindingError::DuplicateTarget(3).into();
        assert_eq!(e.kind(), "DuplicateTarget");
        let e: Error = TransferError::Patch(PatchError::EmptyDatabase).into();
        assert_eq!(e.kind(), "EmptyDatabase");
        let e: Error = TransferError::Binding(BindingError::Skeleton(SkeletonError::Invalid("x".into()))).into();
        assert_eq!(e.kind(), "Invalid");
    }
}
