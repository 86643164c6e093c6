//! Quantitative robust symbolic execution over a small imperative language.
//!
//! Paths are enumerated depth-first with their predicates fully substituted
//! into the inputs. A path's robustness is the f-E-MAJSAT value of the
//! bitblasted predicate (conjoined with the assumptions) divided by the
//! number of uncontrolled inputs the assumptions allow.

mod paths;
mod program;
mod score;

pub use paths::{enumerate_paths, for_each_path, substitute, PathConstraint};
pub use program::{parse_program, run_concrete, Outcome, Program, Stmt};
pub use score::{
    brute_force_qr, parse_rational, path_qr, run_qrse, run_qrse_plus, PathScore, QrReport, QrseConfig, QrseError,
    Scorer, Solver, Verdict, BRUTE_FORCE_BITS,
};
pub(crate) use score::SOLVER_STACK;
