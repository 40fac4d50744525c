//! Knockoff and Gaussian-mirror variable selection under the Rare/Weak
//! signal model, with a closed-form exponent engine, a geometric oracle for
//! those exponents, and a Monte Carlo harness.

pub mod design;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mc;
pub mod mirror_stats;
pub mod rank;
pub mod seeds;
pub mod signal;
pub mod tamper;
pub mod theory;

pub use error::{Error, Result};
