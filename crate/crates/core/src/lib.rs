//! Simulation of measurement-induced two-mode squeezing.
//!
//! A single photon and a coherent state meet on a beam splitter. Two further
//! beam splitters tap light into detector channels; heralding on a detector
//! outcome leaves a two-mode state whose joint quadratures can dip below shot
//! noise. The crate propagates that state in a truncated Fock space, evaluates
//! squeezing and Wigner functions, checks closed-form expressions, and searches
//! the interferometer parameters for the best squeezing at a given heralding
//! rate.

pub mod circuit;
pub mod closedform;
pub mod detect;
pub mod error;
pub mod experiment;
pub mod fock;
pub mod optimize;
pub mod squeeze;
pub mod wigner;

pub use error::{MinlError, Result};
pub use num_complex::Complex64;
