//! Solver library for finite augmented Bayesian Markov games: agents draw
//! persistent private types, receive one signal per source each period, keep
//! one, and act; a designer controls a single source's signaling rule and
//! wants to steer play toward a target occupancy.
//!
//! The crate covers the full pipeline: model loading and validation
//! ([`game`]), beliefs, values, and occupancy measures ([`dynamics`]),
//! equilibrium verification ([`equilibrium`]), information design
//! ([`design`]), and Monte-Carlo simulation ([`sim`]).

pub mod design;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod fixtures;
pub mod game;
pub mod linalg;
pub mod report;
pub mod sim;
pub mod space;

pub use error::{Error, Result};
