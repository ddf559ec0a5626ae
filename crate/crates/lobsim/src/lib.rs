//! Brownian latent limit order book with Dirac order placement.
//!
//! The center price is a Brownian motion `W`. Orders are placed at a fixed
//! distance `mu` on either side of it, so the best ask `alpha` and best bid
//! `beta` are path functionals of `W`, and `alpha - W` is a Brownian motion
//! doubly reflected on `[0, mu]`. The crate simulates this book, classifies
//! trades, extracts trading excursions and epsilon-avalanches, and evaluates
//! the closed-form theta/hyperbolic laws these objects obey.
//!
//! Module map:
//! - [`sde_core`]: Brownian paths, folding into `[0, mu]`, bridge crossing laws.
//! - [`book`]: the stopping-time recursion for the best ask/bid and the volume field.
//! - [`trades`]: trading times, Type I/II and a-d classification, proper trades.
//! - [`excursions`]: zero-excursions of the reflected process and their statistics.
//! - [`analytics`]: theta functions, Laplace tables, avalanche transforms.
//! - [`avalanche`]: epsilon-avalanche detection and Laplace estimation.
//! - [`stream`]: a constant-memory stepper for long Monte Carlo runs.
//! - [`cli`]: configuration, experiment runner and reports.

// `!(x > 0.0)` is how argument checks reject NaN along with bad values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod avalanche;
pub mod book;
pub mod cli;
pub mod error;
pub mod excursions;
pub mod sde_core;
pub mod stats;
pub mod stream;
pub mod trades;

pub use error::{Error, Result};
