//! Pushdown control-flow analysis for a small Scheme.
//!
//! [`frontend`] parses and alphatizes source and [`cps`] converts it to
//! partitioned CPS. [`summarize`] runs CFA2 over the local semantics in
//! [`local`]; [`kcfa`] runs 0CFA and 1CFA. [`concrete`] is the reference
//! interpreter and [`difftest`] checks the analyses against it.

pub mod abstract_sem;
pub mod clients;
pub mod concrete;
pub mod corpus;
pub mod cps;
pub mod datum;
pub mod difftest;
pub mod domain;
pub mod frontend;
pub mod kcfa;
pub mod local;
pub mod prim;
pub mod report;
pub mod sexpr;
pub mod summarize;
