//! Generate MoonBoard climbing routes with a variational autoencoder.
//!
//! The pipeline:
//!
//! 1. [`board`] turns routes into 198-bit hold vectors and back.
//! 2. [`data`] loads JSON-lines corpora, splits them, and synthesises test corpora.
//! 3. [`vae`] trains the autoencoder, built on the small dense toolkit in [`nn`].
//! 4. [`generation`] samples the latent space, keeps the most likely holds and
//!    checks each candidate against route rules.
//! 5. [`render`] draws routes as text or SVG; [`service`] serves a trained model
//!    over HTTP; [`cli`] ties everything into the `routegen` binary.
//!
//! Runnable walkthroughs of each stage live in `examples/`.

pub mod board;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod generation;
pub mod nn;
pub mod render;
pub mod service;
pub mod vae;

pub use board::{GridCoord, Hold, HoldRole, HoldVector, Problem};
pub use data::Corpus;
pub use generation::{Candidate, GenConfig, KMode, RuleSet, ValidationReport};
pub use vae::{Architecture, LatentVector, LossBreakdown, TrainConfig, VaeModel};
