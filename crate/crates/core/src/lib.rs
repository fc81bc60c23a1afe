//! Robust change-point and change-plane estimation under the Huber family
//! of criteria, with simulation of the limiting compound Poisson minimizers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod changeplane;
pub mod criterion;
pub mod distributions;
pub mod error;
pub mod limitlaw;
pub mod parallel;
pub mod registry;
pub mod rng;
pub mod stump;
pub mod table;

pub use criterion::{Criterion, CriterionSpec};
pub use distributions::{CovariateLaw, ErrorLaw};
pub use error::{Error, Result};
pub use rng::SeedStream;
