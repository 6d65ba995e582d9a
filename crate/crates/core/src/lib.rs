//! Desk-scale laboratory for compositional generalization with slot-structured
//! latent variable models.
//!
//! The crate is organised around the life cycle of an experiment:
//!
//! - [`compfun`]: interaction generators (slot-wise maps plus polynomial
//!   interaction terms), multi-indices and derivative oracles.
//! - [`synthlab`]: bin grids with in-domain masks, exact out-of-domain
//!   enumeration and deterministic dataset sampling.
//! - [`learnkit`]: dense networks on a small reverse-mode tape, slot-wise
//!   decoders, the cross-slot Hessian penalty, autoencoder and readout training.
//! - [`inversion`]: gradient-based latent search and generative replay.
//! - [`evalkit`]: Hungarian slot matching, regression scores and readout accuracy.
//! - [`theory`]: numerical certificates for the structural results on generators
//!   and their inverses.
//! - [`experiment`]: configuration, arms and report assembly used by the CLI.

pub mod compfun;
pub mod error;
pub mod evalkit;
pub mod experiment;
pub mod inversion;
pub mod learnkit;
pub mod linalg;
pub mod rng;
pub mod synthlab;
pub mod theory;

pub use error::{Error, Result};
