//! Adaptive execution of matrix-multiplication-like tasks (MMLTs).
//!
//! A task is written as a declarative `where` loop with a single statement.
//! The pipeline is:
//!
//! 1. [`dsl`]: parse the loop and decide whether it is an MMLT.
//! 2. [`dag`] and [`schedule`]: turn the statement into a CSE'd expression DAG
//!    and schedule it into a pseudo-instruction program with few temporaries.
//! 3. [`plan`]: size a register-blocked micro-kernel against a vector register
//!    budget and lower the program into a per-block recipe.
//! 4. [`exec`] and [`tiled`]: run the recipe over blocks of a (kc, nc) tiled loop
//!    nest, with scalar handling of fringes and optional operand packing.
//! 5. [`tune`]: pick kc and nc at runtime from timed subtasks that all
//!    contribute to the final result.
//!
//! [`naive`] is the reference triple loop used as the correctness oracle and
//! performance baseline; [`bench`] holds the reporting helpers behind the CLI.

pub mod bench;
pub mod dag;
pub mod dsl;
pub mod error;
pub mod exec;
pub mod matrix;
pub mod naive;
pub mod plan;
pub mod presets;
pub mod schedule;
pub mod tiled;
pub mod tune;

pub use error::{Error, Result};
