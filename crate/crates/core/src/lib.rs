//! Algebraic decoupling of one variable in quasipolynomial ODE systems.
//!
//! The crate represents systems `ẋᵢ = xᵢ (λᵢ + Σⱼ Aᵢⱼ Πₖ xₖ^Bⱼₖ)` exactly
//! (rational exponents, parametric coefficients), decides whether a
//! quasimonomial transformation plus a new time can decouple one variable,
//! builds that reduction, and checks it numerically by transporting
//! trajectories of the original system into the reduced one.

pub mod cli;
pub mod coeff;
pub mod exec;
pub mod integrate;
pub mod linalg;
pub mod parse;
pub mod reduce;
pub mod report;
pub mod system;
pub mod transform;
pub mod verify;

pub use coeff::{Atom, CoeffError, Coefficient};
pub use linalg::{rat, LinalgError, RatMatrix, Rational};
pub use parse::{lower, lower_raw, parse, parse_raw_system, render, ParseError};
pub use reduce::{
    build_qmt, classify, gamma_conditions, is_decoupled, kernel_decoupling, reduce, reduce_case3,
    reduce_lambda_zero, BPrimePolicy, CaseLabel, ConditionSet, ReduceError, ReduceOptions,
    ReducedSystem, ReductionResult, Satisfiability,
};
pub use system::{ExpQPSystem, QPSystem, SystemError};
pub use transform::{Direction, TransformChain, TransformStep};
pub use verify::{verify_reduction, VerifyError, VerifyOptions, VerifyReport};
