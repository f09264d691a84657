//! drikit: convolution powers of probability densities and when they are
//! directly Riemann integrable, with renewal density applications.
//!
//! Modules, bottom-up:
//!
//! * [`density`]: the catalog of input densities with closed-form tails and moments.
//! * [`grid`]: uniform-grid functions with a monotone tail envelope.
//! * [`riemann`]: translated upper/lower Riemann sums and the verdict engine.
//! * [`convolution`]: spectral convolution powers and Fourier-side diagnostics.
//! * [`bounds`]: the seed bound, the restricted convolution operator
//!   and the envelope chain.
//! * [`renewal`]: renewal densities and a Monte Carlo renewal simulator.
//! * [`cli`]: the batch experiment driver behind the `drikit` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod config;
pub mod convolution;
pub mod density;
pub mod error;
pub mod grid;
pub mod quad;
pub mod renewal;
pub mod riemann;
pub mod special;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// Artifact version embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A non-negative quantity that may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn is_finite(&self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    /// Value with infinity mapped to `f64::INFINITY`.
    pub fn as_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    pub fn from_f64(v: f64) -> Self {
        if v.is_finite() {
            Extended::Finite(v)
        } else {
            Extended::Infinite
        }
    }
}
