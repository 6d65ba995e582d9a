//! Interaction generators and their derivatives.

pub mod derivative;
pub mod generator;
pub mod io;
pub mod jet;
pub mod multi_index;

pub use derivative::{
    check_diffeomorphism, cross_slot_residual, derivative_oracle, hessians, jacobian, mixed_partial, third_derivatives,
    CrossSlotResidual, DerivativeReport, DiffeomorphismReport, FdSteps, Scheme,
};
pub use generator::{
    AdditiveGenerator, FnMap, InteractionGenerator, InteractionTerm, PolyMap, PolyTerm, SlotMap, SlotStructure, SmoothMap,
};
pub use jet::{Jet3, Scalar};
pub use multi_index::{binomial, enumerate_multi_indices, MultiIndex};
