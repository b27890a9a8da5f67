//! Per-phase moments, the tomographic uncertainty function F(θ), and
//! covariance recovery from homodyne variances.
//!
//! All interpolation is done on `σ_XX(θ)` (or the raw second moment), both of
//! which are π-periodic because `X(θ + π) = −X(θ)`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CovarianceMatrix, VACUUM_VARIANCE};
use crate::simulate::PhaseBinnedSeries;

/// Phase distance under which a query is treated as hitting a bin center.
const SNAP_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureStats {
    pub theta: f64,
    pub mean: f64,
    /// Unbiased (n − 1) sample variance.
    pub variance: f64,
    pub count: usize,
}

impl QuadratureStats {
    /// `⟨X²⟩ = σ_XX + ⟨X⟩²`.
    pub fn second_moment(&self) -> f64 {
        self.variance + self.mean * self.mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub theta: f64,
    pub f: f64,
}

/// F(θ) over the phase grid with summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyProfile {
    pub points: Vec<ProfilePoint>,
    pub f_min: f64,
    pub f_mean: f64,
    /// Population standard deviation of F over θ.
    pub f_std: f64,
    pub baseline_subtracted: bool,
}

impl UncertaintyProfile {
    fn from_points(points: Vec<ProfilePoint>, baseline_subtracted: bool) -> Self {
        let n = points.len() as f64;
        let f_min = points.iter().map(|p| p.f).fold(f64::INFINITY, f64::min);
        let f_mean = points.iter().map(|p| p.f).sum::<f64>() / n;
        let f_std = (points.iter().map(|p| (p.f - f_mean).powi(2)).sum::<f64>() / n).sqrt();
        Self {
            points,
            f_min,
            f_mean,
            f_std,
            baseline_subtracted,
        }
    }

    /// `f_std / |f_mean|`, infinite when the mean vanishes.
    pub fn relative_spread(&self) -> f64 {
        if self.f_mean == 0.0 {
            f64::INFINITY
        } else {
            self.f_std / self.f_mean.abs()
        }
    }
}

/// Mean and unbiased variance of each bin.
pub fn bin_moments(series: &PhaseBinnedSeries) -> Result<Vec<QuadratureStats>> {
    series
        .bins()
        .iter()
        .enumerate()
        .map(|(j, bin)| {
            let count = bin.samples.len();
            if count < 2 {
                return Err(Error::InsufficientSamples {
                    bin: j,
                    count,
                    needed: 2,
                });
            }
            let n = count as f64;
            let mean = bin.samples.iter().sum::<f64>() / n;
            let variance = bin.samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Ok(QuadratureStats {
                theta: bin.theta,
                mean,
                variance,
                count,
            })
        })
        .collect()
}

fn check_grid(stats: &[QuadratureStats]) -> Result<()> {
    if stats.is_empty() {
        return Err(Error::InvalidInput("no quadrature statistics".into()));
    }
    if stats.windows(2).any(|w| w[1].theta <= w[0].theta) {
        return Err(Error::InvalidInput(
            "phase grid not strictly increasing".into(),
        ));
    }
    if stats.iter().any(|s| !(s.theta >= 0.0 && s.theta < PI)) {
        return Err(Error::InvalidInput("phase grid outside [0, π)".into()));
    }
    Ok(())
}

/// Linear interpolation of a π-periodic per-bin quantity at `theta`.
fn interpolate_periodic(
    stats: &[QuadratureStats],
    theta: f64,
    value: impl Fn(&QuadratureStats) -> f64,
) -> Result<f64> {
    check_grid(stats)?;
    let n = stats.len();
    let r = theta.rem_euclid(PI);
    let idx = stats.partition_point(|s| s.theta <= r);
    let (lo_i, hi_i) = match idx {
        0 => (n - 1, 0),
        i if i == n => (n - 1, 0),
        i => (i - 1, i),
    };
    let mut lo_t = stats[lo_i].theta;
    let mut hi_t = stats[hi_i].theta;
    if idx == 0 {
        lo_t -= PI;
    } else if idx == n {
        hi_t += PI;
    }
    if (r - lo_t).abs() < SNAP_TOLERANCE {
        return Ok(value(&stats[lo_i]));
    }
    if (hi_t - r).abs() < SNAP_TOLERANCE {
        return Ok(value(&stats[hi_i]));
    }
    let w = (r - lo_t) / (hi_t - lo_t);
    Ok((1.0 - w) * value(&stats[lo_i]) + w * value(&stats[hi_i]))
}

/// `σ_XX(θ)` interpolated between bin centers with π-periodic wraparound.
pub fn variance_at(stats: &[QuadratureStats], theta: f64) -> Result<f64> {
    interpolate_periodic(stats, theta, |s| s.variance)
}

/// `⟨X²(θ)⟩` interpolated like [`variance_at`].
pub fn second_moment_at(stats: &[QuadratureStats], theta: f64) -> Result<f64> {
    interpolate_periodic(stats, theta, QuadratureStats::second_moment)
}

/// `F(θ)` from the three variances at θ, θ + π/4 and θ + π/2.
pub fn uncertainty_from_variances(v0: f64, v45: f64, v90: f64) -> f64 {
    let cross = v45 - 0.5 * (v0 + v90);
    v0 * v90 - cross * cross - 0.25
}

/// Tomographic uncertainty function evaluated at every bin center.
pub fn f_of_theta(stats: &[QuadratureStats]) -> Result<UncertaintyProfile> {
    let points = stats
        .iter()
        .map(|s| {
            let v0 = variance_at(stats, s.theta)?;
            let v45 = variance_at(stats, s.theta + FRAC_PI_4)?;
            let v90 = variance_at(stats, s.theta + FRAC_PI_2)?;
            Ok(ProfilePoint {
                theta: s.theta,
                f: uncertainty_from_variances(v0, v45, v90),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UncertaintyProfile::from_points(points, false))
}

/// Removes the instrument zero: subtracts the θ-average of the shot-noise
/// profile from every point.
pub fn subtract_baseline(
    profile: &UncertaintyProfile,
    shot: &UncertaintyProfile,
) -> Result<UncertaintyProfile> {
    if profile.baseline_subtracted {
        return Err(Error::AlreadySubtracted);
    }
    if shot.points.is_empty() {
        return Err(Error::InvalidInput("empty shot-noise profile".into()));
    }
    let offset = shot.f_mean;
    let points = profile
        .points
        .iter()
        .map(|p| ProfilePoint {
            theta: p.theta,
            f: p.f - offset,
        })
        .collect();
    Ok(UncertaintyProfile::from_points(points, true))
}

/// `σ_QQ = σ_XX(0)`, `σ_PP = σ_XX(π/2)`, `σ_PQ = σ_XX(π/4) − ½(σ_QQ + σ_PP)`.
///
/// When the detector efficiency is below one this is the covariance of the
/// observed (lossy) state; see [`invert_detector_loss`].
pub fn covariance_from_three_angles(stats: &[QuadratureStats]) -> Result<CovarianceMatrix> {
    let qq = variance_at(stats, 0.0)?;
    let pp = variance_at(stats, FRAC_PI_2)?;
    let diag = variance_at(stats, FRAC_PI_4)?;
    CovarianceMatrix::new(qq, pp, diag - 0.5 * (qq + pp))
}

/// Least-squares fit of `σ_XX(θ) = A + B cos 2θ + C sin 2θ` over every bin,
/// giving `σ_QQ = A + B`, `σ_PP = A − B`, `σ_PQ = C`.
///
/// Uses all bins instead of three, so its statistical error is that of the
/// whole record.
pub fn covariance_from_harmonic_fit(stats: &[QuadratureStats]) -> Result<CovarianceMatrix> {
    check_grid(stats)?;
    if stats.len() < 3 {
        return Err(Error::InvalidInput(
            "harmonic fit needs at least 3 bins".into(),
        ));
    }
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for s in stats {
        let (sn, cs) = (2.0 * s.theta).sin_cos();
        let row = [1.0, cs, sn];
        for i in 0..3 {
            atb[i] += row[i] * s.variance;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let [a, b, c] = solve3(ata, atb)
        .ok_or_else(|| Error::InvalidInput("phase grid too degenerate for harmonic fit".into()))?;
    CovarianceMatrix::new(a + b, a - b, c)
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn solve3(m: [[f64; 3]; 3], rhs: [f64; 3]) -> Option<[f64; 3]> {
    let d = det3(&m);
    let scale = m.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
    if d.abs() <= 1e-12 * scale.powi(3) {
        return None;
    }
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut mk = m;
        for i in 0..3 {
            mk[i][k] = rhs[i];
        }
        *o = det3(&mk) / d;
    }
    Some(out)
}

/// Maps statistics observed through a detector of efficiency `eta` back to
/// the source state: `σ ↦ (σ − (1 − η)/2)/η`, `⟨X⟩ ↦ ⟨X⟩/√η`.
pub fn invert_detector_loss(stats: &[QuadratureStats], eta: f64) -> Result<Vec<QuadratureStats>> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::domain("detector efficiency", eta));
    }
    let admixed = (1.0 - eta) * VACUUM_VARIANCE;
    let amp = eta.sqrt();
    stats
        .iter()
        .map(|s| {
            let variance = (s.variance - admixed) / eta;
            if variance <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "loss inversion at θ = {} gives non-positive variance {variance}",
                    s.theta
                )));
            }
            Ok(QuadratureStats {
                mean: s.mean / amp,
                variance,
                ..*s
            })
        })
        .collect()
}

/// `⟨n̂⟩ = ½[⟨X²(0)⟩ + ⟨X²(π/2)⟩ − 1]` from raw second moments.
pub fn mean_photon_from_stats(stats: &[QuadratureStats]) -> Result<f64> {
    let q2 = second_moment_at(stats, 0.0)?;
    let p2 = second_moment_at(stats, FRAC_PI_2)?;
    Ok(0.5 * (q2 + p2 - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GaussianState;
    use crate::simulate::{
        bin_center, simulate_acquisition, simulate_shot_noise, AcquisitionConfig, DetectorModel,
        PhaseBin,
    };
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Exact per-bin statistics of a Gaussian state on the centered grid.
    fn exact_stats(state: &GaussianState, n_bins: usize) -> Vec<QuadratureStats> {
        (0..n_bins)
            .map(|j| exact_at(state, bin_center(n_bins, j)))
            .collect()
    }

    /// Exact statistics on the grid jπ/n, which contains 0, π/4 and π/2 when 4 | n.
    fn exact_stats_on_nodes(state: &GaussianState, n_bins: usize) -> Vec<QuadratureStats> {
        (0..n_bins)
            .map(|j| exact_at(state, j as f64 * PI / n_bins as f64))
            .collect()
    }

    fn exact_at(state: &GaussianState, theta: f64) -> QuadratureStats {
        let (s, c) = theta.sin_cos();
        QuadratureStats {
            theta,
            mean: state.quadrature_mean(c, s),
            variance: state.cov.variance_along(c, s),
            count: 1000,
        }
    }

    fn state(a: f64, b: f64, c: f64) -> GaussianState {
        GaussianState::new(0.0, 0.0, CovarianceMatrix::new(a, b, c).unwrap()).unwrap()
    }

    fn series(bins: Vec<(f64, Vec<f64>)>) -> PhaseBinnedSeries {
        PhaseBinnedSeries::new(
            bins.into_iter()
                .map(|(theta, samples)| PhaseBin { theta, samples })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn two_point_and_constant_bins() {
        let s = bin_moments(&series(vec![
            (0.1, vec![-1.0, 1.0]),
            (0.2, vec![0.0, 0.0, 0.0]),
        ]))
        .unwrap();
        assert_eq!((s[0].mean, s[0].variance, s[0].count), (0.0, 2.0, 2));
        assert_eq!((s[1].mean, s[1].variance), (0.0, 0.0));
    }

    #[test]
    fn single_sample_bin_rejected() {
        let err = bin_moments(&series(vec![(0.1, vec![1.0, 2.0]), (0.2, vec![1.0])])).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientSamples {
                bin: 1,
                count: 1,
                ..
            }
        ));
    }

    #[test]
    fn simulated_thermal_bin_variance() {
        let cfg = AcquisitionConfig::new(48, 2100, 21).unwrap();
        let sim = simulate_acquisition(
            &GaussianState::thermal_nbar(0.5).unwrap(),
            &DetectorModel::ideal(),
            &cfg,
        )
        .unwrap();
        for s in bin_moments(&sim).unwrap() {
            assert!((s.variance - 1.0).abs() < 0.1, "{}", s.variance);
        }
    }

    #[test]
    fn interpolation_examples() {
        let constant = exact_stats(&state(0.8, 0.8, 0.0), 10);
        for theta in [0.0, 0.05, 1.0, 3.1, 7.0, -2.0] {
            assert_abs_diff_eq!(variance_at(&constant, theta).unwrap(), 0.8, epsilon = 1e-15);
        }

        let two = vec![
            QuadratureStats {
                theta: FRAC_PI_4,
                mean: 0.0,
                variance: 1.0,
                count: 2,
            },
            QuadratureStats {
                theta: 3.0 * FRAC_PI_4,
                mean: 0.0,
                variance: 2.0,
                count: 2,
            },
        ];
        assert_abs_diff_eq!(variance_at(&two, FRAC_PI_2).unwrap(), 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(variance_at(&two, 0.0).unwrap(), 1.5, epsilon = 1e-15);
        assert_eq!(variance_at(&two, FRAC_PI_4).unwrap(), 1.0);
        assert_eq!(variance_at(&two, FRAC_PI_4 + PI).unwrap(), 1.0);

        assert!(variance_at(&[], 0.0).is_err());
    }

    #[test]
    fn interpolation_error_on_squeezed_profile() {
        // σ(θ) = 1.25 + 0.75 cos 2θ; linear interpolation error is at most
        // h²/8 · max|σ''| = h²/8 · 3 with h the grid spacing
        let stats = exact_stats(&state(2.0, 0.5, 0.0), 48);
        let h = PI / 48.0;
        let bound = h * h / 8.0 * 3.0;
        for k in 0..200 {
            let theta = k as f64 * PI / 200.0;
            let exact = state(2.0, 0.5, 0.0).cov.variance_at_phase(theta);
            assert!((variance_at(&stats, theta).unwrap() - exact).abs() <= bound + 1e-15);
        }
        assert!((variance_at(&stats, FRAC_PI_4).unwrap() - 1.25).abs() <= bound);
    }

    #[test]
    fn f_examples() {
        let vac = f_of_theta(&exact_stats(&GaussianState::vacuum(), 48)).unwrap();
        assert!(vac.points.iter().all(|p| p.f.abs() < 1e-15));

        let thermal =
            f_of_theta(&exact_stats(&GaussianState::thermal_nbar(0.5).unwrap(), 48)).unwrap();
        assert!(thermal.points.iter().all(|p| (p.f - 0.75).abs() < 1e-14));
        assert_abs_diff_eq!(thermal.f_mean, 0.75, epsilon = 1e-14);
        assert!(thermal.f_std < 1e-14);

        let sq = f_of_theta(&exact_stats_on_nodes(&state(2.0, 0.5, 0.0), 48)).unwrap();
        assert_abs_diff_eq!(sq.points[0].f, 0.75, epsilon = 1e-14);
    }

    #[test]
    fn baseline_arithmetic() {
        let mk = |fs: &[f64]| {
            UncertaintyProfile::from_points(
                fs.iter()
                    .enumerate()
                    .map(|(i, &f)| ProfilePoint {
                        theta: i as f64 * 0.1,
                        f,
                    })
                    .collect(),
                false,
            )
        };
        let shot = mk(&[0.002, 0.004, 0.003]);
        let p = mk(&[0.653, 0.66]);
        let out = subtract_baseline(&p, &shot).unwrap();
        assert_abs_diff_eq!(out.points[0].f, 0.650, epsilon = 1e-12);
        assert!(out.baseline_subtracted);
        assert!(matches!(
            subtract_baseline(&out, &shot),
            Err(Error::AlreadySubtracted)
        ));
        assert_abs_diff_eq!(
            subtract_baseline(&p, &p).unwrap().f_mean,
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn baseline_on_simulated_thermal() {
        let det = DetectorModel::ideal();
        let cfg = AcquisitionConfig::new(48, 2100, 77).unwrap();
        let shot = f_of_theta(
            &bin_moments(
                &simulate_shot_noise(&det, &AcquisitionConfig { seed: 78, ..cfg }).unwrap(),
            )
            .unwrap(),
        )
        .unwrap();
        let sig =
            simulate_acquisition(&GaussianState::thermal_nbar(0.5).unwrap(), &det, &cfg).unwrap();
        let prof =
            subtract_baseline(&f_of_theta(&bin_moments(&sig).unwrap()).unwrap(), &shot).unwrap();
        assert!((prof.f_mean - 0.75).abs() < 0.03, "{}", prof.f_mean);
    }

    #[test]
    fn covariance_examples() {
        let iso = covariance_from_three_angles(&exact_stats(&state(1.0, 1.0, 0.0), 48)).unwrap();
        assert_eq!((iso.sigma_qq, iso.sigma_pp), (1.0, 1.0));
        assert_abs_diff_eq!(iso.sigma_pq, 0.0, epsilon = 1e-15);

        // on the centered 48-bin grid θ = 0 is interpolated from ±π/96
        let sq = covariance_from_three_angles(&exact_stats(&state(2.0, 0.5, 0.0), 48)).unwrap();
        let grid_err = 0.75 * (1.0 - (PI / 48.0).cos());
        assert!((sq.sigma_qq - 2.0).abs() <= grid_err + 1e-12);
        assert!((sq.sigma_pp - 0.5).abs() <= grid_err + 1e-12);
        assert!(sq.sigma_pq.abs() <= 1e-12);

        let corr = state(1.0, 1.0, 0.3);
        assert_abs_diff_eq!(corr.cov.variance_at_phase(FRAC_PI_4), 1.3, epsilon = 1e-15);
        let c = covariance_from_three_angles(&exact_stats_on_nodes(&corr, 48)).unwrap();
        assert_abs_diff_eq!(c.sigma_pq, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn harmonic_fit_is_exact_on_any_grid() {
        let s = state(2.0, 0.5, 0.3);
        for n in [3, 7, 47, 48] {
            let c = covariance_from_harmonic_fit(&exact_stats(&s, n)).unwrap();
            assert_abs_diff_eq!(c.sigma_qq, 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(c.sigma_pp, 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(c.sigma_pq, 0.3, epsilon = 1e-12);
        }
    }

    #[test]
    fn photon_number_examples() {
        assert_abs_diff_eq!(
            mean_photon_from_stats(&exact_stats(&GaussianState::vacuum(), 48)).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        let th = GaussianState::thermal_nbar(0.7).unwrap();
        assert_abs_diff_eq!(
            mean_photon_from_stats(&exact_stats(&th, 48)).unwrap(),
            0.7,
            epsilon = 1e-14
        );
        let coh = GaussianState::coherent(2.0, 0.0).unwrap();
        assert_abs_diff_eq!(
            mean_photon_from_stats(&exact_stats_on_nodes(&coh, 48)).unwrap(),
            2.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn loss_inversion_recovers_source() {
        let src =
            GaussianState::new(0.5, -0.2, CovarianceMatrix::new(1.7, 0.9, 0.25).unwrap()).unwrap();
        let observed = exact_stats(&src.after_loss(0.88), 48);
        let back = invert_detector_loss(&observed, 0.88).unwrap();
        for (b, e) in back.iter().zip(exact_stats(&src, 48)) {
            assert_abs_diff_eq!(b.variance, e.variance, epsilon = 1e-14);
            assert_abs_diff_eq!(b.mean, e.mean, epsilon = 1e-14);
        }
        assert!(invert_detector_loss(&observed, 0.0).is_err());
    }

    fn arb_cov() -> impl Strategy<Value = CovarianceMatrix> {
        (0.5f64..4.0, 0.5f64..4.0, -0.8f64..0.8)
            .prop_map(|(a, b, r)| CovarianceMatrix::new(a, b, r * (a * b).sqrt()).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn f_equals_rotated_determinant(cov in arb_cov(), theta in 0.0f64..PI) {
            let v = |t: f64| cov.variance_at_phase(t);
            let f = uncertainty_from_variances(v(theta), v(theta + FRAC_PI_4), v(theta + FRAC_PI_2));
            let r = cov.rotated(theta);
            prop_assert!((f - (r.determinant() - 0.25)).abs() < 1e-12);
        }

        #[test]
        fn three_angle_inversion_is_identity(cov in arb_cov()) {
            let s = GaussianState { mean_q: 0.0, mean_p: 0.0, cov };
            let back = covariance_from_three_angles(&exact_stats_on_nodes(&s, 48)).unwrap();
            prop_assert!((back.sigma_qq - cov.sigma_qq).abs() < 1e-12);
            prop_assert!((back.sigma_pp - cov.sigma_pp).abs() < 1e-12);
            prop_assert!((back.sigma_pq - cov.sigma_pq).abs() < 1e-12);
        }

        #[test]
        fn interpolation_hits_bin_centers(cov in arb_cov(), j in 0usize..47) {
            let s = GaussianState { mean_q: 0.0, mean_p: 0.0, cov };
            let stats = exact_stats(&s, 47);
            prop_assert_eq!(variance_at(&stats, stats[j].theta).unwrap(), stats[j].variance);
            prop_assert_eq!(variance_at(&stats, stats[j].theta + PI).unwrap(), stats[j].variance);
        }

        #[test]
        fn simulated_f_respects_uncertainty_relation(
            a in 0.5f64..3.0, b in 0.55f64..3.0, r in -0.5f64..0.5, seed in 0u64..1_000_000,
        ) {
            // any physical state: det = ab(1 − r²) ≥ ¼ for these ranges
            let cov = CovarianceMatrix::physical(a, b, r * (a * b).sqrt());
            prop_assume!(cov.is_ok());
            let s = GaussianState { mean_q: 0.0, mean_p: 0.0, cov: cov.unwrap() };
            let cfg = AcquisitionConfig::new(48, 2100, seed).unwrap();
            let series = simulate_acquisition(&s, &DetectorModel::ideal(), &cfg).unwrap();
            let f = f_of_theta(&bin_moments(&series).unwrap()).unwrap();
            prop_assert!(f.f_mean >= -0.02, "{}", f.f_mean);
        }
    }
}
