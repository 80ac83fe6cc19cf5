//! An interactive Merlin-Arthur proof system for 3CNF unsatisfiability
//! (equivalently, 3DNF tautologies) built on the sum-check protocol.
//!
//! A proof is a triple: a prime `p` in a prescribed interval, a Pratt
//! certificate for `p`, and a prover strategy answering the verifier's
//! challenges about the arithmetized formula. The crate provides the field
//! and polynomial arithmetic, certified prime generation, honest and
//! adversarial provers, the verifier with full transcripts, a networked
//! prover/verifier pair speaking a length-prefixed TCP protocol, and an
//! experiment harness that measures completeness and soundness empirically.

pub mod arith;
mod cli;
pub mod cnf;
pub mod error;
pub mod field;
pub mod harness;
pub mod primality;
pub mod prover;
pub(crate) mod ser;
pub mod unipoly;
pub mod verifier;
pub mod wire;

pub use cli::run_cli;
pub use error::{Error, Result};
pub use field::{Field, FieldElement, PrimeModulus};
