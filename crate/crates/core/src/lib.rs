//! Asymptotic key-rate model for fully passive measurement-device-independent QKD.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical model:
//!
//! * [`source`]: four-pulse passive interference, natural and shaped intensity laws, sampling.
//! * [`regions`]: post-selection sectors in the (μ_H, μ_V, φ) space and the mixed-state
//!   bit-flip quantities of the post-selected Z states.
//! * [`channel`]: threshold-detector Bell-measurement model, gains, QBER, Poisson statistics.
//! * [`expectations`]: region-averaged gains, photon-number distributions and decoupled yields.
//! * [`decoy`]: the decoy-state linear programs and a small dense simplex solver.
//! * [`keyrate`]: the passive key rate, an active three-intensity baseline, and the
//!   parameter optimizer.
//! * [`montecarlo`]: an event-level simulator used to cross-check the analytic expectations.
//!
//! File formats, the CLI and parallel drivers live in the `pmdi` crate.
#![no_std]
// Float methods come from `num_traits::Float` (libm). Whenever std is somewhere in the build
// graph its inherent f64 methods shadow the trait, hence the `allow(unused_imports)` on each
// import.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod channel;
pub mod decoy;
mod error;
pub mod expectations;
pub mod keyrate;
pub mod montecarlo;
pub mod quadrature;
pub mod regions;
pub mod source;

pub use error::{Error, Result};
