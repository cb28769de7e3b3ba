//! The declarative `where` loop language.
//!
//! ```text
//! where(i in [0..M] and j in [0..N] and k in [0..K]) {
//!     R[i][j] += A[i][k]*B[k][j];
//! }
//! ```
//!
//! Ranges are half-open even though they are written with a closing `]`.

mod ast;
mod lexer;
mod parser;
mod recognize;

pub use ast::{ArrayRef, AssignOp, BinOp, Expr, LoopVar, Stmt, TaskSpec};
pub use parser::{parse_task, parse_task_with, DEFAULT_EXTERNALS};
pub use recognize::{recognize, AuxLeaf, Dims, LeafClass, MmltInfo, OperandPattern, Recognition};

use std::collections::BTreeMap;

/// Values of externally bound integer names such as `M`, `N` and `K`.
pub type Bindings = BTreeMap<String, i64>;
