//! Integrated covariation of two asynchronously and endogenously observed
//! price processes.
//!
//! The crate is organised as a pipeline:
//!
//! * [`sde`] simulates the joint price / time-process diffusion on a fine grid,
//! * [`hbt`] turns a path into observation times by first passage of the time
//!   process through up/down boundaries,
//! * [`hy`] computes the Hayashi-Yoshida estimator and the 1-correlated
//!   subsequence,
//! * [`bias`] estimates the asymptotic bias and variance blockwise and builds
//!   the bias-corrected estimator,
//! * [`harness`] replicates the whole chain for Monte Carlo studies,
//! * [`io`] reads and writes the CSV / JSON interchange formats.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {:e})", $tol);
    }};
}

pub mod bias;
pub mod error;
pub mod harness;
pub mod hbt;
pub mod hy;
pub mod io;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
