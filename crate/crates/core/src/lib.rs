//! Physics-informed symbolic regression over postfix expression arrays.
//!
//! The crate searches for closed-form functions that satisfy a system of
//! differential and algebraic equations, boundary and symmetry conditions,
//! and optional data. Expressions are flat reverse-Polish token arrays;
//! derivatives are produced symbolically on those arrays and evaluated by a
//! stack machine. The bundled benchmark is the bright-soliton reduced-order
//! model of a strongly magnetized plasma (see [`soliton`]).

pub mod eval;
pub mod expr;
pub mod symdiff;
pub mod cli;
pub mod constfit;
pub mod problem;
pub mod search;
pub mod soliton;
