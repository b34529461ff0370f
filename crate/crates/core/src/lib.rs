//! Distributed Nash-equilibrium seeking with feedback control of networked plants.
//!
//! The decision layer is a projected primal-dual flow on a generalized Nash game
//! ([`gnep`]); [`linctrl`] couples it to linear agent dynamics through a
//! high-gain canonical-form law, and [`backstep`] to strict-feedback chains.
//! [`oracle`] solves quadratic games exactly for reference, [`sim`] integrates
//! the closed loops and [`scenarios`] builds the power and building case studies.

pub mod backstep;
pub mod config;
pub mod convex;
pub mod error;
pub mod gnep;
pub mod graph;
pub mod linalg;
pub mod linctrl;
pub mod oracle;
pub mod scenarios;
pub mod sim;

pub use error::{Error, Result};
