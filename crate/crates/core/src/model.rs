//! Closed-form Gaussian-state quantities in the ħ = 1 convention.
//!
//! Quadratures are `X(μ, ν) = μQ + νP`; the vacuum variance is ½ and the
//! optical case uses `μ = cos θ`, `ν = sin θ`. Temperatures are dimensionless,
//! measured in units of ħω/k_B.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Variance of any quadrature of the vacuum state.
pub const VACUUM_VARIANCE: f64 = 0.5;

/// Slack on `det σ ≥ ¼` accepted by physical-state constructors.
pub const PHYSICALITY_TOLERANCE: f64 = 1e-9;

const HBAR: f64 = 1.054_571_817e-34;
const BOLTZMANN: f64 = 1.380_649e-23;

/// Second central moments of the (Q, P) quadrature pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceMatrix {
    pub sigma_qq: f64,
    pub sigma_pp: f64,
    pub sigma_pq: f64,
}

impl CovarianceMatrix {
    /// Raw covariance with positive diagonal. Physicality is not checked, so
    /// this is suitable for estimates recovered from noisy data.
    pub fn new(sigma_qq: f64, sigma_pp: f64, sigma_pq: f64) -> Result<Self> {
        if !(sigma_qq.is_finite() && sigma_qq > 0.0) {
            return Err(Error::domain("sigma_qq", sigma_qq));
        }
        if !(sigma_pp.is_finite() && sigma_pp > 0.0) {
            return Err(Error::domain("sigma_pp", sigma_pp));
        }
        if !sigma_pq.is_finite() {
            return Err(Error::domain("sigma_pq", sigma_pq));
        }
        Ok(Self {
            sigma_qq,
            sigma_pp,
            sigma_pq,
        })
    }

    /// Covariance satisfying the Schrödinger–Robertson bound.
    pub fn physical(sigma_qq: f64, sigma_pp: f64, sigma_pq: f64) -> Result<Self> {
        let cov = Self::new(sigma_qq, sigma_pp, sigma_pq)?;
        if !cov.is_physical() {
            return Err(Error::Unphysical {
                det: cov.determinant(),
            });
        }
        Ok(cov)
    }

    pub fn isotropic(sigma: f64) -> Result<Self> {
        Self::physical(sigma, sigma, 0.0)
    }

    pub fn vacuum() -> Self {
        Self {
            sigma_qq: VACUUM_VARIANCE,
            sigma_pp: VACUUM_VARIANCE,
            sigma_pq: 0.0,
        }
    }

    pub fn determinant(&self) -> f64 {
        self.sigma_qq * self.sigma_pp - self.sigma_pq * self.sigma_pq
    }

    pub fn is_physical(&self) -> bool {
        self.determinant() >= 0.25 - PHYSICALITY_TOLERANCE
    }

    /// Variance of `μQ + νP`.
    pub fn variance_along(&self, mu: f64, nu: f64) -> f64 {
        sigma_xx(self, mu, nu)
    }

    /// Variance of the homodyne quadrature at local-oscillator phase `theta`.
    pub fn variance_at_phase(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        sigma_xx(self, c, s)
    }

    /// Covariance of the quadrature pair `(X(θ), X(θ + π/2))`.
    pub fn rotated(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            sigma_qq: sigma_xx(self, c, s),
            sigma_pp: sigma_xx(self, -s, c),
            sigma_pq: s * c * (self.sigma_pp - self.sigma_qq) + (c * c - s * s) * self.sigma_pq,
        }
    }

    /// Image under a beam-splitter loss channel of transmissivity `eta`:
    /// `σ ↦ ησ + (1 − η)/2 · I`.
    pub fn after_loss(&self, eta: f64) -> Self {
        let admixed = (1.0 - eta) * VACUUM_VARIANCE;
        Self {
            sigma_qq: eta * self.sigma_qq + admixed,
            sigma_pp: eta * self.sigma_pp + admixed,
            sigma_pq: eta * self.sigma_pq,
        }
    }

    /// Inverse of [`after_loss`](Self::after_loss). The result may be unphysical
    /// when the observed covariance is noisy.
    pub fn before_loss(&self, eta: f64) -> Result<Self> {
        let admixed = (1.0 - eta) * VACUUM_VARIANCE;
        Self::new(
            (self.sigma_qq - admixed) / eta,
            (self.sigma_pp - admixed) / eta,
            self.sigma_pq / eta,
        )
    }
}

/// `σ_XX(μ, ν) = μ²σ_QQ + ν²σ_PP + 2μν σ_PQ`.
pub fn sigma_xx(cov: &CovarianceMatrix, mu: f64, nu: f64) -> f64 {
    mu * mu * cov.sigma_qq + nu * nu * cov.sigma_pp + 2.0 * mu * nu * cov.sigma_pq
}

/// Single-mode Gaussian state: first moments and covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    pub mean_q: f64,
    pub mean_p: f64,
    pub cov: CovarianceMatrix,
}

impl GaussianState {
    pub fn new(mean_q: f64, mean_p: f64, cov: CovarianceMatrix) -> Result<Self> {
        if !(mean_q.is_finite() && mean_p.is_finite()) {
            return Err(Error::InvalidInput("non-finite state mean".into()));
        }
        if !cov.is_physical() {
            return Err(Error::Unphysical {
                det: cov.determinant(),
            });
        }
        Ok(Self {
            mean_q,
            mean_p,
            cov,
        })
    }

    pub fn vacuum() -> Self {
        Self {
            mean_q: 0.0,
            mean_p: 0.0,
            cov: CovarianceMatrix::vacuum(),
        }
    }

    /// Displaced vacuum with `⟨Q⟩ = q`, `⟨P⟩ = p`.
    pub fn coherent(q: f64, p: f64) -> Result<Self> {
        Self::new(q, p, CovarianceMatrix::vacuum())
    }

    /// Thermal state with mean photon number `nbar ≥ 0` (quadrature variance `n̄ + ½`).
    pub fn thermal_nbar(nbar: f64) -> Result<Self> {
        if !(nbar.is_finite() && nbar >= 0.0) {
            return Err(Error::domain("mean photon number", nbar));
        }
        Self::new(
            0.0,
            0.0,
            CovarianceMatrix::isotropic(nbar + VACUUM_VARIANCE)?,
        )
    }

    /// Thermal state of given purity in (0, 1].
    pub fn thermal_purity(purity: f64) -> Result<Self> {
        if !(purity > 0.0 && purity <= 1.0) {
            return Err(Error::domain("purity", purity));
        }
        Self::thermal_nbar(mean_photon_from_purity(purity))
    }

    /// Mean of the quadrature `μQ + νP`.
    pub fn quadrature_mean(&self, mu: f64, nu: f64) -> f64 {
        mu * self.mean_q + nu * self.mean_p
    }

    /// `⟨n̂⟩ = ½(⟨Q²⟩ + ⟨P²⟩ − 1)`.
    pub fn mean_photon(&self) -> f64 {
        0.5 * (self.cov.sigma_qq
            + self.mean_q * self.mean_q
            + self.cov.sigma_pp
            + self.mean_p * self.mean_p
            - 1.0)
    }

    pub fn purity(&self) -> f64 {
        0.5 / self.cov.determinant().sqrt()
    }

    /// State seen by a homodyne detector of efficiency `eta`: amplitudes scale
    /// by `√η` and the covariance mixes with the vacuum.
    pub fn after_loss(&self, eta: f64) -> Self {
        let amp = eta.sqrt();
        Self {
            mean_q: amp * self.mean_q,
            mean_p: amp * self.mean_p,
            cov: self.cov.after_loss(eta),
        }
    }
}

/// Dimensionless temperature `T·k_B/(ħω)`, optionally tagged with the mode's
/// angular frequency so it can be expressed in kelvin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureScale {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub omega: Option<f64>,
}

impl TemperatureScale {
    pub fn new(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::domain("temperature", value));
        }
        Ok(Self { value, omega: None })
    }

    /// Attach an angular frequency in rad/s.
    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = Some(omega);
        self
    }

    pub fn kelvin(&self) -> Option<f64> {
        self.omega.map(|w| self.value * HBAR * w / BOLTZMANN)
    }
}

/// Normal density of the symplectic tomogram of a Gaussian state.
pub fn gaussian_tomogram_density(state: &GaussianState, x: f64, mu: f64, nu: f64) -> Result<f64> {
    if mu == 0.0 && nu == 0.0 {
        return Err(Error::InvalidInput(
            "degenerate tomogram direction (μ, ν) = (0, 0)".into(),
        ));
    }
    let var = sigma_xx(&state.cov, mu, nu);
    if var.is_nan() || var <= 0.0 {
        return Err(Error::domain("quadrature variance", var));
    }
    let d = x - state.quadrature_mean(mu, nu);
    Ok((-d * d / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt())
}

/// `π̃ = 1 / (2√det σ)`.
pub fn purity_gaussian(cov: &CovarianceMatrix) -> Result<f64> {
    let det = cov.determinant();
    if det.is_nan() || det <= 0.0 {
        return Err(Error::NonPositiveDeterminant { det });
    }
    Ok(0.5 / det.sqrt())
}

/// Thermal state at temperature `t`.
pub fn thermal_from_temperature(t: TemperatureScale) -> Result<GaussianState> {
    if t.value.is_nan() || t.value <= 0.0 {
        return Err(Error::domain("temperature", t.value));
    }
    GaussianState::thermal_nbar(mean_photon_thermal(t))
}

/// Inverts `π̃ = tanh(1/2T)`.
pub fn temperature_from_purity(purity: f64) -> Result<TemperatureScale> {
    if !(purity > 0.0 && purity < 1.0) {
        return Err(Error::domain("purity", purity));
    }
    TemperatureScale::new(0.5 / purity.atanh())
}

/// `½coth(1/2T) − ½`, written as the Bose–Einstein occupation `1/(e^{1/T} − 1)`.
pub fn mean_photon_thermal(t: TemperatureScale) -> f64 {
    1.0 / (1.0 / t.value).exp_m1()
}

pub fn purity_from_mean_photon(nbar: f64) -> f64 {
    1.0 / (2.0 * nbar + 1.0)
}

pub fn mean_photon_from_purity(purity: f64) -> f64 {
    (1.0 - purity) / (2.0 * purity)
}
