//! Slot matching, identifiability scores and the slot equivalence class.

pub mod equivalence;
pub mod hungarian;
pub mod score;

pub use equivalence::{SlotBijection, SlotEquivalence};
pub use hungarian::{assignment_cost, hungarian};
pub use score::{r_squared, slot_match_and_score, EvalConfig, EvalReport, SlotData, SlotRegression};
