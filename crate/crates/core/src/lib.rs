//! Computation, certification and simulation for the last-arrival game.
//!
//! An unknown number `n >= 1` of items arrive at independent uniform times in
//! `[0, 1]`; a selector must accept, online, the last one while an adversary
//! picks `n`. This crate provides:
//!
//! - [`numerics`]: the extended-precision scalar [`Real`] and small exact
//!   combinatorial helpers.
//! - [`ppoly`]: the staircase polynomials `P_n`, symbolically for small `n`
//!   and numerically through an `O(n^2)` first-violation recursion.
//! - [`thresholds`]: threshold strategies, their win probabilities, the
//!   upper-bound sequence `b_n`, and the lower-bound construction `a_n`.
//! - [`certify`]: upper and lower certificates bracketing the game value.
//! - [`sim`]: a seeded, partitioned Monte Carlo laboratory.
//! - [`cardgame`]: the finite `(N, d)` card game, best responses and
//!   fictitious play.

pub mod cardgame;
pub mod certify;
mod error;
pub mod numerics;
pub mod ppoly;
pub mod sim;
pub mod thresholds;

pub use error::{Error, Result};
pub use numerics::{Precision, Real};
pub use thresholds::{BoundSequence, BoundStatus, TailRule, ThresholdStrategy, Window};
