//! Analytic formulas, Monte-Carlo experiments and the listening attacker.

mod analytic;
mod dynamics;
mod stats;
mod trials;

pub use analytic::*;
pub use dynamics::*;
pub use stats::*;
pub use trials::*;
