//! Patch dictionary learning and whole-image recovery.
//!
//! Images are recovered from linear measurements by sparse coding over a
//! patch dictionary, one non-overlapping covering partition at a time, and
//! averaging the per-partition estimates. Dictionaries are learned by block
//! proximal-gradient descent with extrapolation and a monotone restart.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod dictionary;
pub mod dictlearn;
pub mod error;
pub mod image;
pub mod l1solve;
pub mod measurement;
pub mod operators;
pub mod partition;
pub mod recover;
pub mod seed;

pub use dictionary::{CoefficientMatrix, Dictionary, WeightVector};
pub use dictlearn::{learn, LearnConfig, LearnOutcome, LearnTrace};
pub use error::{Error, Result};
pub use image::{image_from_pgm, image_to_pgm, Image};
pub use l1solve::{solve, synthesis_adjoint, synthesis_forward, RecoveryProblem, SolveOutcome, SolverConfig};
pub use measurement::MeasurementVector;
pub use operators::{add_noise, spectral_norm, MeasurementOp};
pub use partition::{build_partition, enumerate_partitions, Cell, Partition, PatchFrame};
