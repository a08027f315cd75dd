//! Self-contained numerical solvers.

pub mod banded;
pub mod nlp;
pub mod qp;
pub mod sparse;

pub use nlp::{solve_nlp, NlpSettings, NlpSolution, NlpStatus, SmoothNlp};
pub use qp::{solve_qp, solve_qp_with, QpSettings, QpSolution, QpStatus, QuadraticProgram};
pub use sparse::CsrMatrix;
