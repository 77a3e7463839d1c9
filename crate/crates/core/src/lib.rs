//! Synchronous Byzantine-agreement simulator with locally consistent
//! adversaries.
//!
//! The crate provides:
//!
//! * a deterministic round-based execution engine with adversary hooks
//!   ([`engine`]),
//! * the locally consistent action algebra, corruption schedules, and a trace
//!   validator ([`adversary`]),
//! * a small catalog of reference agreement protocols ([`protocols`]),
//! * constructive round-halting attacks and their shared parameter geometry
//!   ([`attacks`]),
//! * a lab for the bot-masking set conjecture ([`conjecture`]),
//! * Monte-Carlo measurement, closed-form bound calculators, and end-to-end
//!   audits ([`stats`]).
//!
//! Everything is reproducible: all randomness flows through a counter-based
//! PRF keyed by the experiment seed, so identical configurations produce
//! bit-identical traces and reports.

pub mod adversary;
pub mod attacks;
pub mod conjecture;
pub mod engine;
pub mod error;
pub mod protocol;
pub mod protocols;
pub mod rng;
pub mod stats;
pub mod trace;

pub use adversary::{AdversaryStrategy, LcAction, Timing, ValidationReport};
pub use engine::{run, run_honest, run_variant, Seed, VariantScript};
pub use error::Error;
pub use protocol::{CoinDomain, ProtocolSpec, View};
pub use trace::{halted_by, outputs_of, ExecutionTrace, InputVector, PartyId};
