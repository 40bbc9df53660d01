//! Runs the code in the user guide under `book/` as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/frequency-domain.md")]
pub mod frequency_domain {}

#[doc = include_str!("../../../book/src/linear-model.md")]
pub mod linear_model {}

#[doc = include_str!("../../../book/src/permutation-tests.md")]
pub mod permutation_tests {}

#[doc = include_str!("../../../book/src/missing-values.md")]
pub mod missing_values {}

#[doc = include_str!("../../../book/src/components.md")]
pub mod components {}

#[doc = include_str!("../../../book/src/jitter-experiment.md")]
pub mod jitter_experiment {}

#[doc = include_str!("../../../book/src/command-line.md")]
pub mod command_line {}

#[doc = include_str!("../../../README.md")]
pub mod readme {}
