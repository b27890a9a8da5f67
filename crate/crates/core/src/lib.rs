//! Purity, effective temperature and mean photon number of single-mode
//! optical states from homodyne quadrature statistics.
//!
//! The central object is the tomographic uncertainty function
//!
//! ```text
//! F(θ) = σ(θ)σ(θ + π/2) − [σ(θ + π/4) − ½(σ(θ) + σ(θ + π/2))]² − ¼
//! ```
//!
//! built from quadrature variances alone. Saturating the purity-dependent
//! bound `F ≥ ¼[Φ²(π̃) − 1]` turns F into purity, temperature and photon
//! number estimates; for Gaussian states the recovered covariance gives the
//! exact purity `1/(2√det σ)` for comparison.
//!
//! Modules, bottom up:
//!
//! - [`model`]: closed-form Gaussian-state quantities (ħ = 1, vacuum variance ½).
//! - [`simulate`]: seeded synthetic homodyne acquisitions through a lossy detector.
//! - [`stats`]: per-bin moments, F(θ), baseline subtraction, covariance recovery.
//! - [`bounds`]: the bound Φ(π̃), its approximation, and the F-based estimators.
//! - [`gaussianity`]: excess kurtosis and Shapiro–Wilk normality checks.
//! - [`analysis`]: one-record pipeline producing an [`analysis::AnalysisReport`].
//! - [`ensemble`]: many-acquisition residual study against simulator ground truth.
//! - [`io`] and [`cli`]: file formats and the command-line front end.

pub mod analysis;
pub mod bounds;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod gaussianity;
pub mod io;
pub mod model;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
