//! Linear-time traversals of smooth decision-DNNF: model counting, the
//! constrained, unconstrained and relaxed f-E-MAJSAT recursions, and the
//! solver that ties compilation and traversal together.

mod solve;
mod traverse;

pub use solve::{
    decimal, parse_portfolio, solve, solve_portfolio, solve_with_chance_bits, Mode, SolveConfig, SolveError,
    SolveResult, SolveStats, Stage, Status,
};
pub(crate) use solve::millis;
pub use traverse::{
    check_layering, condition, constrained_emajsat, model_count, relax_lower, relax_upper, unconstrained_upper,
    CountError,
};
