//! Numerical certificates for the structure of generators and their inverses.

pub mod battery;
pub mod certificate;
pub mod construction;
pub mod newton;
pub mod polarization;
pub mod relations;

pub use battery::{check_preconditions, run_suite, run_suites, Suite, SuiteReport, TheoryBundle, TheoryConfig};
pub use certificate::{Bound, Residual, TheoryCertificate, Verdict};
pub use construction::{
    adversarial_instance, build_counterexample, construct_m, solve_lambda, verify_counterexample, ConstructOptions,
    CounterexampleConfig, CounterexamplePair,
};
pub use newton::{newton_left_inverse, NewtonConfig, NewtonInverse, NewtonResult};
pub use polarization::{monomial_step2, monomial_step3, polarization_check};
pub use relations::{
    key_relation_residual, lemma_second_converse, lemma_second_diagonality, lemma_secondb_check, moore_penrose_check,
    tangent_projector, RelationConfig,
};
