//! Rendering-model family: generative models that render a class template
//! through latent nuisance transformations, plus everything the family
//! induces — max-sum and sum-product classification, hard EM training,
//! discriminative relaxation to feedforward networks, evolutionary variants
//! that relax to decision forests, and brute-force oracles that certify the
//! fast paths at desk scale.
//!
//! The crate is generic over the scalar type (`f32` or `f64`) via
//! [`scalar::Scalar`]; concrete aliases live at the crate root. Random draws
//! and serialized bytes are always produced through `f64`, so seeds mean the
//! same thing at either precision. The oracle module computes in double
//! precision regardless of the model's scalar type.

pub mod classify;
pub mod dataset;
pub mod deep;
pub mod deep_em;
pub mod deep_infer;
pub mod em;
pub mod error;
pub mod evo;
pub mod forest;
pub mod image;
pub mod linalg;
pub mod net;
pub mod oracle;
pub mod path;
pub mod probe;
pub mod relax;
pub mod rng;
pub mod scalar;
pub mod shallow;
pub mod store;

pub use error::{ModelError, StoreError, Violation};
pub use path::{PathIndexer, RenderingPath};
pub use rng::SeedStream;
pub use scalar::Scalar;

/// f64 aliases (the default precision for CLI and persistence).
pub type Image64 = image::Image<f64>;
pub type ShallowRm64 = shallow::ShallowRm<f64>;
pub type NaturalParams64 = shallow::NaturalParams<f64>;
pub type DeepRm64 = deep::DeepRm<f64>;
pub type EvoDrm64 = evo::EvoDrm<f64>;
pub type FeedforwardNet64 = net::FeedforwardNet<f64>;
pub type Forest64 = forest::Forest<f64>;
pub type DecisionTree64 = forest::DecisionTree<f64>;

/// f32 aliases for memory-lean experimentation.
pub type Image32 = image::Image<f32>;
pub type ShallowRm32 = shallow::ShallowRm<f32>;
pub type DeepRm32 = deep::DeepRm<f32>;
pub type EvoDrm32 = evo::EvoDrm<f32>;
pub type FeedforwardNet32 = net::FeedforwardNet<f32>;
