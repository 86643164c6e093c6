//! Quantitative robustness analysis.
//!
//! The crate compiles CNF formulas to decision-DNNF, solves f-E-MAJSAT
//! (maximise over choice variables the number of models over chance
//! variables) exactly or as an interval, and uses it to score how reliably
//! an attacker controlling some program inputs can reach a target.

pub mod bitvector;
pub mod cli;
pub mod compiler;
pub mod counting;
pub mod formula;
pub mod qrse;

/// Runs `f` on a thread with a stack large enough for the recursive
/// compiler on bitblasted formulas.
pub fn with_large_stack<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    std::thread::Builder::new()
        .stack_size(qrse::SOLVER_STACK)
        .spawn(f)
        .expect("spawn solver thread")
        .join()
        .unwrap_or_else(|e| std::panic::resume_unwind(e))
}
