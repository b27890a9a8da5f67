//! Synthetic balanced-homodyne acquisitions.
//!
//! Each phase bin draws its samples from its own ChaCha stream keyed by
//! `(seed, bin index)`, so bins can be generated in parallel and the output
//! does not depend on scheduling.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GaussianState, VACUUM_VARIANCE};

/// Reference acquisition: detector efficiency, phase bins and samples per bin.
pub const REFERENCE_EFFICIENCY: f64 = 0.88;
pub const REFERENCE_BINS: usize = 47;
pub const DEFAULT_BINS: usize = 48;
pub const REFERENCE_SAMPLES_PER_BIN: usize = 2100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency: f64,
    /// Additive electronic noise, as a quadrature variance.
    pub electronic_noise_variance: f64,
}

impl DetectorModel {
    pub fn new(efficiency: f64, electronic_noise_variance: f64) -> Result<Self> {
        if !(efficiency > 0.0 && efficiency <= 1.0) {
            return Err(Error::domain("detector efficiency", efficiency));
        }
        if !(electronic_noise_variance.is_finite() && electronic_noise_variance >= 0.0) {
            return Err(Error::domain(
                "electronic noise variance",
                electronic_noise_variance,
            ));
        }
        Ok(Self {
            efficiency,
            electronic_noise_variance,
        })
    }

    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            electronic_noise_variance: 0.0,
        }
    }

    /// Electronic noise specified as a clearance `db` below the shot-noise level.
    pub fn with_noise_db_below_shot(efficiency: f64, db: f64) -> Result<Self> {
        Self::new(efficiency, VACUUM_VARIANCE * 10f64.powf(-db / 10.0))
    }

    /// The Gaussian state the detector effectively records.
    pub fn observed_state(&self, state: &GaussianState) -> GaussianState {
        let mut out = state.after_loss(self.efficiency);
        out.cov.sigma_qq += self.electronic_noise_variance;
        out.cov.sigma_pp += self.electronic_noise_variance;
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub n_bins: usize,
    pub samples_per_bin: usize,
    pub seed: u64,
}

impl AcquisitionConfig {
    pub fn new(n_bins: usize, samples_per_bin: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            n_bins,
            samples_per_bin,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bins < 3 {
            return Err(Error::InvalidInput(format!(
                "need at least 3 phase bins, got {}",
                self.n_bins
            )));
        }
        if self.samples_per_bin < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 samples per bin, got {}",
                self.samples_per_bin
            )));
        }
        Ok(())
    }

    /// Center of bin `j` on the half-open interval [0, π).
    pub fn bin_center(&self, j: usize) -> f64 {
        bin_center(self.n_bins, j)
    }
}

pub fn bin_center(n_bins: usize, j: usize) -> f64 {
    (j as f64 + 0.5) * PI / n_bins as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseBin {
    pub theta: f64,
    pub samples: Vec<f64>,
}

/// Quadrature samples grouped by local-oscillator phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseBinnedSeries {
    bins: Vec<PhaseBin>,
}

impl PhaseBinnedSeries {
    /// Bins must be non-empty with strictly increasing phases in [0, π).
    pub fn new(bins: Vec<PhaseBin>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::InvalidInput("series has no phase bins".into()));
        }
        for (j, bin) in bins.iter().enumerate() {
            if !(bin.theta >= 0.0 && bin.theta < PI) {
                return Err(Error::InvalidInput(format!(
                    "bin {j} phase {} outside [0, π)",
                    bin.theta
                )));
            }
            if bin.samples.is_empty() {
                return Err(Error::InsufficientSamples {
                    bin: j,
                    count: 0,
                    needed: 1,
                });
            }
            if j > 0 && bin.theta <= bins[j - 1].theta {
                return Err(Error::InvalidInput(format!(
                    "bin phases not strictly increasing at bin {j}"
                )));
            }
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> &[PhaseBin] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn total_samples(&self) -> usize {
        self.bins.iter().map(|b| b.samples.len()).sum()
    }

    pub fn into_bins(self) -> Vec<PhaseBin> {
        self.bins
    }
}

fn bin_rng(seed: u64, bin: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(bin as u64);
    rng
}

/// Draws `samples_per_bin` quadratures at each bin center from the lossy
/// detector's output distribution: mean `√η⟨X(θ)⟩`, variance
/// `η σ_XX(θ) + (1 − η)/2 + electronic noise`.
pub fn simulate_acquisition(
    state: &GaussianState,
    det: &DetectorModel,
    cfg: &AcquisitionConfig,
) -> Result<PhaseBinnedSeries> {
    cfg.validate()?;
    let det = DetectorModel::new(det.efficiency, det.electronic_noise_variance)?;
    let observed = det.observed_state(state);

    let bins = (0..cfg.n_bins)
        .into_par_iter()
        .map(|j| {
            let theta = cfg.bin_center(j);
            let (s, c) = theta.sin_cos();
            let mean = observed.quadrature_mean(c, s);
            let var = observed.cov.variance_along(c, s);
            let normal = Normal::new(mean, var.sqrt())
                .map_err(|e| Error::InvalidInput(format!("bin {j}: {e}")))?;
            let mut rng = bin_rng(cfg.seed, j);
            let samples = (0..cfg.samples_per_bin)
                .map(|_| normal.sample(&mut rng))
                .collect();
            Ok(PhaseBin { theta, samples })
        })
        .collect::<Result<Vec<_>>>()?;

    PhaseBinnedSeries::new(bins)
}

/// Vacuum acquisition used as the shot-noise calibration trace.
pub fn simulate_shot_noise(
    det: &DetectorModel,
    cfg: &AcquisitionConfig,
) -> Result<PhaseBinnedSeries> {
    simulate_acquisition(&GaussianState::vacuum(), det, cfg)
}
