//! Profit-driven customer targeting when treatment costs depend on the
//! response.
//!
//! A promotion that only costs money when the customer redeems it changes
//! the targeting calculus: the break-even condition compares the expected
//! treated profit against the expected untreated profit plus the expected
//! cost of the incentive itself, so conversion probabilities enter the
//! decision twice. This crate implements that decision rule, causal
//! effect estimators built around it (hurdle-style conversion/value
//! decompositions, one- and two-model outcome learners, and a doubly
//! robust learner), a synthetic campaign simulator with known ground
//! truth, and the evaluation protocol that compares targeting policies by
//! expected profit.

pub mod causal;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod learners;
pub mod matrix;
pub mod model_io;
pub mod policy;
pub mod simulation;

pub use error::{Error, Result};
