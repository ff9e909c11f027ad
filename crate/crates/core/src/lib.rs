//! Interactive inference behavior trees.
//!
//! Behavior-tree execution nodes that select multi-robot joint policies by
//! minimizing variational and expected free energy over a discrete generative
//! model. The crate provides the categorical probability core, the policy
//! scoring engine, a small reactive behavior-tree runtime with the interactive
//! inference node, a lockstep intention bus, and the two simulation domains
//! (grid navigation and two-arm pick/place).
//!
//! Numeric code in [`model`] and [`inference`] is generic over the scalar
//! type; the rest of the crate and downstream consumers use the `f64` aliases
//! exported at the crate root.

pub mod bt;
pub mod coord;
pub mod error;
pub mod grid;
pub mod iibt;
pub mod inference;
pub mod manip;
pub mod model;
pub mod num;
pub mod sim;

pub use error::{Error, Result};
pub use num::Real;

/// Scalar type used by the engine. Tests instantiate the generic core with
/// `f32` as well; everything downstream runs in double precision.
pub type Scalar = f64;

pub type Belief = model::Belief<Scalar>;
pub type Observation = model::Observation;
pub type LikelihoodModel = model::LikelihoodModel<Scalar>;
pub type TransitionModel<A> = model::TransitionModel<Scalar, A>;
pub type PreferenceMatrix = model::PreferenceMatrix<Scalar>;
pub type PriorState = model::PriorState<Scalar>;
pub type PolicyPrior = model::PolicyPrior<Scalar>;
pub type LogicalEvidence = model::LogicalEvidence<Scalar>;
pub type GenerativeModel<A> = model::GenerativeModel<Scalar, A>;
pub type Matrix = model::Matrix<Scalar>;

pub type PolicyScore = inference::PolicyScore<Scalar>;
pub type PolicyPosterior = inference::PolicyPosterior<Scalar>;
pub type InferenceConfig = inference::InferenceConfig<Scalar>;
