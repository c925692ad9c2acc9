//! Cross-topology skeletal motion transfer by masked patch matching.
//!
//! A source animation is mapped onto a structurally different target skeleton
//! using only a sparse set of joint bindings and one or a few example motions
//! of the target. Bound channels are copied from the source, unbound channels
//! start as seeded noise, and the result is refined by repeatedly matching
//! temporal patches against the target examples and blending the matches.
//!
//! The crate is organised bottom-up:
//!
//! * [`bvh`] reads and writes BVH files.
//! * [`skeleton`] holds the typed joint hierarchy, channel layout and forward
//!   kinematics.
//! * [`rotation`] has the 6D rotation codec and Euler conversions.
//! * [`motion`] converts raw channels to the feature matrix used for matching.
//! * [`correspondence`] builds the sparse channel map and the automatic binder.
//! * [`patch`] cuts motions into patches, pools the target database and blends.
//! * [`matching`] is the masked nearest-patch search.
//! * [`transfer`] runs the iterative matching-and-blending loop.
//! * [`metrics`] implements the evaluation measures.
//! * [`synthetic`] generates procedural skeletons and gaits for tests and demos.

pub mod bvh;
pub mod correspondence;
pub mod matching;
pub mod metrics;
pub mod motion;
pub mod patch;
pub mod rotation;
pub mod skeleton;
pub mod synthetic;
pub mod transfer;

mod error;

pub use error::Error;

pub use bvh::{parse_bvh, write_bvh, Channel, RawJoint, RawMotion};
pub use correspondence::{auto_bind, build_map, BindingFile, BindingPair, BindingSet, CorrespondenceMap};
pub use motion::{FeatureMode, Motion, NormalizationStats};
pub use patch::PatchDatabase;
pub use skeleton::{ChannelLayout, Skeleton};
pub use transfer::{generate_variants, transfer, transfer_pyramid, TransferConfig, TransferInputs, TransferResult};
