//! Simulation of the limiting law of traffic flow through the centre of a
//! Poissonian city.
//!
//! A Poissonian city is a disk-shaped model city whose roads are the lines
//! of a stationary isotropic Poisson line process; traffic between two
//! points splits evenly between the two near-geodesics around the cell of
//! lines not separating the points. Conditioned on a road through the
//! centre, the scaled flow through the centre converges to the law of a
//! 4-volume built from an improper anisotropic Poisson line process on a
//! vertical strip. This crate simulates that limiting law.
//!
//! The volume is untractable head-on (the line process has a dense infinity
//! of near-vertical lines), so the crate works with two *seminal curves*:
//! the concave lower envelopes of the positive- and negative-slope lines
//! that could cut a point pair off from the origin. Everything needed about
//! them reduces to a one-dimensional reverse-time Markov chain with
//! closed-form dynamics, and the flow becomes
//!
//! ```text
//! (∫Γ₋)(∫Γ₊) + Σₙ C⁺ₙ·Δ⁺ₙ + Σₙ C⁻ₙ·Δ⁻ₙ
//! ```
//!
//! truncated at a depth N with an explicit L¹ error bound
//! `(20/7)·3⁻ᴺ + (20/27)·6⁻ᴺ` ([`estimator::l1_error_bound`]).
//!
//! Modules:
//!
//! - [`rng`]: counter-based splittable random streams and the Uniform,
//!   Exponential and Rayleigh samplers the dynamics need.
//! - [`seminal`]: the reverse-time curve dynamics and the piecewise-linear
//!   curve calculus (evaluation, integral brackets, inversion).
//! - [`regions`]: exact areas of the decomposition regions with bracketed
//!   tails.
//! - [`estimator`]: the truncated flow estimator and replicate batches.
//! - [`oracle`]: an independent brute-force pathway through windowed line
//!   realizations, literal envelopes and separation tests.
//! - [`validation`]: the statistical test battery for every closed-form
//!   identity the model provides.
//!
//! ```
//! use poissonian_city::estimator::sample_total_flow;
//!
//! let estimate = sample_total_flow(7, 0, 10, 1e-6).unwrap();
//! assert!(estimate.value > 0.0);
//! assert!(estimate.bracket_width <= 1e-6 + 1.0); // eps plus integral slack
//! ```

pub mod error;
pub mod estimator;
pub mod oracle;
pub mod regions;
pub mod rng;
pub mod seminal;
pub mod stats;
pub mod validation;

pub use error::{Error, Result};

// The guide chapters double as doc-tests so their code blocks stay honest.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/line-process.md")]
    mod line_process {}
    #[doc = include_str!("../../../book/src/seminal-curves.md")]
    mod seminal_curves {}
    #[doc = include_str!("../../../book/src/flow-estimator.md")]
    mod flow_estimator {}
    #[doc = include_str!("../../../book/src/validation.md")]
    mod validation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
