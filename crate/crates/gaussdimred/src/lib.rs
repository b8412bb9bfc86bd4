//! Dimension reduction for low-degree polynomials over Gaussian space.
//!
//! The central primitive: a random linear map `M` with i.i.d. standard
//! Gaussian entries sends a polynomial `A` on `R^N` to
//! `A_M(a) = A(M a / ||a||_2)` on `R^D`. For correlated Gaussian inputs the
//! inner product `<A_M, B_M>` concentrates around `<A, B>` once `D` is large
//! enough relative to the degree and the accuracy target, independently of
//! `N`. Around that primitive this crate builds:
//!
//! * sparse Hermite-basis polynomials and their exact functionals
//!   ([`poly`]),
//! * seeded correlated-Gaussian Monte Carlo and moment experiments
//!   ([`sampling`]),
//! * Euclidean projection onto the probability simplex and joint-distribution
//!   estimation ([`simplex`]),
//! * the smoothing / multilinearization / dimension-reduction transforms
//!   with their parameter schedules ([`transforms`]),
//! * finite joint spaces, maximal correlation, aligned Fourier bases, and the
//!   invariance bridges between discrete and Gaussian inputs ([`discrete`]),
//! * end-to-end non-interactive simulation pipelines ([`pipelines`]),
//! * an exact brute-force gap decider for simulability questions
//!   ([`decider`]),
//! * the command-line front end ([`cli`]).
//!
//! Every randomized quantity is reproducible: generators are ChaCha8 seeded
//! from a caller-supplied `u64`, substreams are derived with `set_stream`,
//! and estimator results are independent of the worker count.

pub mod cli;
pub mod decider;
pub mod discrete;
pub mod error;
pub mod pipelines;
pub mod poly;
pub mod sampling;
pub mod simplex;
pub mod transforms;

pub use error::{Error, Result};
