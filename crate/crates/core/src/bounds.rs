//! Purity-dependent uncertainty bound Φ(π̃) and the estimators obtained by
//! saturating `F ≥ ¼[Φ²(π̃) − 1]`.
//!
//! The exact bound is piecewise: on `[π_{k+1}, π_k]` with
//! `π_k = 2(2k + 1)/(3k(k + 1))` it reads
//! `Φ = (k + 1) − √(k(k + 1)(k + 2)/3 · (π̃ − 1/(k + 1)))`.
//! The first three pieces are written out in the tests; larger `k` follow
//! the same pattern and are checked for continuity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TemperatureScale;

/// Factor between tabulated temperatures and the closed-form
/// `T = [2 atanh π̃]⁻¹`.
pub const TABLE_TEMPERATURE_FACTOR: f64 = 4.0;

/// Relative gap between the exact and approximate purity inversions above
/// which a report gets a diagnostic note.
pub const INVERSION_AGREEMENT: f64 = 0.02;

const BISECTION_TOLERANCE: f64 = 1e-10;

/// One analytic branch of Φ(π̃).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPiece {
    pub k: u64,
}

impl BoundPiece {
    pub fn new(k: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("bound piece index starts at 1".into()));
        }
        Ok(Self { k })
    }

    fn kf(&self) -> f64 {
        self.k as f64
    }

    /// `2(2k + 1)/(3k(k + 1))`.
    pub fn pi_upper(&self) -> f64 {
        let k = self.kf();
        2.0 * (2.0 * k + 1.0) / (3.0 * k * (k + 1.0))
    }

    /// Upper end of the next piece.
    pub fn pi_lower(&self) -> f64 {
        let k = self.kf() + 1.0;
        2.0 * (2.0 * k + 1.0) / (3.0 * k * (k + 1.0))
    }

    pub fn constant(&self) -> f64 {
        self.kf() + 1.0
    }

    pub fn coefficient(&self) -> f64 {
        let k = self.kf();
        k * (k + 1.0) * (k + 2.0) / 3.0
    }

    pub fn offset(&self) -> f64 {
        1.0 / (self.kf() + 1.0)
    }

    pub fn contains(&self, pi: f64) -> bool {
        pi >= self.pi_lower() && pi <= self.pi_upper()
    }

    pub fn value(&self, pi: f64) -> f64 {
        self.constant() - (self.coefficient() * (pi - self.offset())).max(0.0).sqrt()
    }

    /// Closed-form inverse of [`value`](Self::value) on this branch.
    pub fn purity_for(&self, phi: f64) -> f64 {
        let root = self.constant() - phi;
        self.offset() + root * root / self.coefficient()
    }

    /// Piece whose interval contains `pi ∈ (0, 1]`.
    pub fn containing(pi: f64) -> Result<Self> {
        check_purity(pi)?;
        // π_k ≈ 4/(3k), so start near k = 4/(3π̃) and walk to the right interval
        let guess = (4.0 / (3.0 * pi)).floor().clamp(1.0, 1e15) as u64;
        let mut piece = Self { k: guess.max(1) };
        while piece.k > 1 && pi > piece.pi_upper() {
            piece.k -= 1;
        }
        while pi < piece.pi_lower() {
            piece.k += 1;
        }
        Ok(piece)
    }
}

fn check_purity(pi: f64) -> Result<()> {
    if pi > 0.0 && pi <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain("purity", pi))
    }
}

fn check_f(f: f64) -> Result<()> {
    if f >= 0.0 && f.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("uncertainty function F", f))
    }
}

/// Exact piecewise bound Φ(π̃).
pub fn phi_exact(pi: f64) -> Result<f64> {
    Ok(BoundPiece::containing(pi)?.value(pi))
}

/// Smooth approximation `Φ̃(π̃) = (4 + √(16 + 9π̃²))/(9π̃)`.
pub fn phi_approx(pi: f64) -> Result<f64> {
    check_purity(pi)?;
    Ok((4.0 + (16.0 + 9.0 * pi * pi).sqrt()) / (9.0 * pi))
}

/// Lower bound on F(θ): `¼[Φ²(π̃) − 1]` using the exact or approximate Φ.
pub fn f_bound(pi: f64, exact: bool) -> Result<f64> {
    let phi = if exact {
        phi_exact(pi)?
    } else {
        phi_approx(pi)?
    };
    Ok(0.25 * (phi * phi - 1.0))
}

/// Expanded form of the approximate bound,
/// `[8 + 2√(16 + 9π̃²) − 18π̃²]/(81π̃²)`.
pub fn f_bound_approx_expanded(pi: f64) -> Result<f64> {
    check_purity(pi)?;
    let p2 = pi * pi;
    Ok((8.0 + 2.0 * (16.0 + 9.0 * p2).sqrt() - 18.0 * p2) / (81.0 * p2))
}

/// `π̃(F) = 2√(1 + 4F)/(2 + 9F)`, the inverse of the approximate bound.
pub fn purity_from_f(f: f64) -> Result<f64> {
    check_f(f)?;
    Ok(2.0 * (1.0 + 4.0 * f).sqrt() / (2.0 + 9.0 * f))
}

/// Solves `¼[Φ²(π̃) − 1] = F` for π̃ by bisection on the exact bound.
pub fn purity_from_f_exact(f: f64) -> Result<f64> {
    check_f(f)?;
    if f == 0.0 {
        return Ok(1.0);
    }
    // the bound vanishes at π̃ = 1 and diverges as π̃ → 0
    let mut lo = 0.5;
    while f_bound(lo, true)? < f {
        lo *= 0.5;
    }
    let mut hi = 1.0;
    while hi - lo > BISECTION_TOLERANCE * 0.5 {
        let mid = 0.5 * (lo + hi);
        if f_bound(mid, true)? > f {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `T = [2 atanh π̃(F)]⁻¹`. F = 0 is a pure state and has no finite temperature.
pub fn temperature_from_f(f: f64) -> Result<TemperatureScale> {
    let pi = purity_from_f(f)?;
    if pi >= 1.0 {
        return Err(Error::PureState { f });
    }
    TemperatureScale::new(0.5 / pi.atanh())
}

/// Temperature in the tabulated convention,
/// [`TABLE_TEMPERATURE_FACTOR`] times [`temperature_from_f`].
pub fn temperature_from_f_table(f: f64) -> Result<TemperatureScale> {
    let t = temperature_from_f(f)?;
    TemperatureScale::new(TABLE_TEMPERATURE_FACTOR * t.value)
}

/// `⟨n̂⟩(F) = (2 + 9F)/(4√(1 + 4F)) − ½`.
pub fn mean_photon_from_f(f: f64) -> Result<f64> {
    check_f(f)?;
    Ok((2.0 + 9.0 * f) / (4.0 * (1.0 + 4.0 * f).sqrt()) - 0.5)
}

/// Which summary of F(θ) feeds the saturation estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FStatistic {
    /// θ-average of the trace.
    #[default]
    Mean,
    /// Minimum over θ.
    Min,
}

/// Purity, temperature and photon-number estimates from every route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityReport {
    pub f_min: f64,
    pub f_mean: f64,
    pub f_statistic: FStatistic,
    /// F value the estimators used, after clamping negatives to zero.
    pub f_used: f64,
    pub pi_f_approx: f64,
    pub pi_f_exact: f64,
    pub pi_gauss: Option<f64>,
    pub pi_gauss_three_angle: Option<f64>,
    /// Canonical temperature `[2 atanh π̃(F)]⁻¹`; absent for a pure state.
    pub temperature: Option<TemperatureScale>,
    pub mean_photon_f: f64,
    pub mean_photon_moments: Option<f64>,
    pub diagnostics: Vec<String>,
}

/// Estimates derived from an F summary alone. Gaussian-route fields are
/// filled in by the caller.
pub fn estimate_from_f(f_min: f64, f_mean: f64, statistic: FStatistic) -> Result<PurityReport> {
    let mut diagnostics = Vec::new();
    let raw = match statistic {
        FStatistic::Mean => f_mean,
        FStatistic::Min => f_min,
    };
    if !raw.is_finite() {
        return Err(Error::domain("uncertainty function F", raw));
    }
    let f_used = if raw < 0.0 {
        diagnostics.push(format!(
            "F = {raw:.6} below zero from sampling noise; clamped to 0"
        ));
        0.0
    } else {
        raw
    };
    let pi_f_approx = purity_from_f(f_used)?;
    let pi_f_exact = purity_from_f_exact(f_used)?;
    let gap = (pi_f_approx - pi_f_exact).abs() / pi_f_exact;
    if gap >= INVERSION_AGREEMENT {
        diagnostics.push(format!(
            "approximate and exact bound inversions differ by {:.2}% at F = {f_used:.6}",
            100.0 * gap
        ));
    }
    let temperature = match temperature_from_f(f_used) {
        Ok(t) => Some(t),
        Err(Error::PureState { .. }) => {
            diagnostics.push("F = 0: pure state, temperature is zero".into());
            None
        }
        Err(e) => return Err(e),
    };
    Ok(PurityReport {
        f_min,
        f_mean,
        f_statistic: statistic,
        f_used,
        pi_f_approx,
        pi_f_exact,
        pi_gauss: None,
        pi_gauss_three_angle: None,
        temperature,
        mean_photon_f: mean_photon_from_f(f_used)?,
        mean_photon_moments: None,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    // The k = 1, 2, 3 branches written out literally.
    fn printed_piece(k: u64, pi: f64) -> f64 {
        match k {
            1 => 2.0 - (2.0 * pi - 1.0).sqrt(),
            2 => 3.0 - (8.0 * (pi - 1.0 / 3.0)).sqrt(),
            3 => 4.0 - (20.0 * (pi - 0.25)).sqrt(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn general_pieces_match_printed_ones() {
        let ranges = [
            (1, 5.0 / 9.0, 1.0),
            (2, 7.0 / 18.0, 5.0 / 9.0),
            (3, 0.3, 7.0 / 18.0),
        ];
        for (k, lo, hi) in ranges {
            let piece = BoundPiece::new(k).unwrap();
            assert_abs_diff_eq!(piece.pi_lower(), lo, epsilon = 1e-15);
            assert_abs_diff_eq!(piece.pi_upper(), hi, epsilon = 1e-15);
            for i in 0..=100 {
                let pi = lo + (hi - lo) * i as f64 / 100.0;
                assert_abs_diff_eq!(piece.value(pi), printed_piece(k, pi), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn breakpoint_continuity() {
        for k in 1..=50 {
            let a = BoundPiece::new(k).unwrap();
            let b = BoundPiece::new(k + 1).unwrap();
            assert_eq!(a.pi_lower(), b.pi_upper());
            let pi = a.pi_lower();
            assert!((a.value(pi) - b.value(pi)).abs() < 1e-12, "k = {k}");
            // both ends sit on Φ = (2k + 1)/3 and (2k + 3)/3
            assert!((a.value(a.pi_upper()) - (2 * k + 1) as f64 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi_exact(1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(phi_exact(5.0 / 9.0).unwrap(), 5.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(printed_piece(2, 5.0 / 9.0), 5.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(phi_exact(7.0 / 18.0).unwrap(), 7.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(printed_piece(3, 7.0 / 18.0), 7.0 / 3.0, epsilon = 1e-14);
        assert!(phi_exact(0.0).is_err());
        assert!(phi_exact(1.01).is_err());
        assert!(phi_exact(f64::NAN).is_err());

        assert_eq!(phi_approx(1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(phi_approx(0.5).unwrap(), 1.838223, epsilon = 1e-6);
        assert!(phi_approx(0.0).is_err());
        assert!(phi_approx(-0.1).is_err());
    }

    #[test]
    fn piece_lookup_far_from_one() {
        for pi in [1e-6, 1e-3, 0.0123, 0.05, 0.3, 0.30000001] {
            let p = BoundPiece::containing(pi).unwrap();
            assert!(p.contains(pi), "{pi} not in piece {}", p.k);
        }
        assert_eq!(BoundPiece::containing(1.0).unwrap().k, 1);
        // breakpoint shared by k = 1 and k = 2
        let p = BoundPiece::containing(5.0 / 9.0).unwrap();
        assert!(p.k <= 2 && p.contains(5.0 / 9.0));
    }

    #[test]
    fn bound_examples() {
        assert_eq!(f_bound(1.0, true).unwrap(), 0.0);
        assert_eq!(f_bound(1.0, false).unwrap(), 0.0);
        // branch k = 2: Φ = 3 − √(8(π̃ − ⅓))
        let phi = 3.0 - (8.0f64 * (0.4834 - 1.0 / 3.0)).sqrt();
        assert_abs_diff_eq!(
            f_bound(0.4834, true).unwrap(),
            0.25 * (phi * phi - 1.0),
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(f_bound(0.4834, true).unwrap(), 0.6566, epsilon = 1e-4);
        assert_abs_diff_eq!(
            f_bound(0.5, false).unwrap(),
            0.5947656170527177,
            epsilon = 1e-14
        );
    }

    #[test]
    fn purity_estimator_examples() {
        assert_eq!(purity_from_f(0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(purity_from_f(0.65).unwrap(), 0.4834, epsilon = 1e-4);
        assert_abs_diff_eq!(purity_from_f(0.329).unwrap(), 0.6135, epsilon = 1e-4);
        assert!(purity_from_f(-0.01).is_err());

        assert_eq!(purity_from_f_exact(0.0).unwrap(), 1.0);
        // closed form on branch k = 2: 3 − √(8(π̃ − ⅓)) = √3.6
        let closed = 1.0 / 3.0 + (3.0 - 3.6f64.sqrt()).powi(2) / 8.0;
        assert_abs_diff_eq!(purity_from_f_exact(0.65).unwrap(), closed, epsilon = 1e-10);
        assert_abs_diff_eq!(closed, 0.48531, epsilon = 1e-5);
        let (approx_075, exact_075) = (
            purity_from_f(0.75).unwrap(),
            purity_from_f_exact(0.75).unwrap(),
        );
        assert_abs_diff_eq!(approx_075, 0.45714, epsilon = 1e-5);
        assert!((approx_075 - exact_075).abs() / exact_075 < 0.02);
    }

    #[test]
    fn temperature_examples() {
        assert_abs_diff_eq!(
            temperature_from_f(0.65).unwrap().value,
            0.948013,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            temperature_from_f_table(0.65).unwrap().value,
            3.79205,
            epsilon = 1e-5
        );
        assert_abs_diff_eq!(
            temperature_from_f(0.329).unwrap().value,
            0.699741,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            temperature_from_f_table(0.329).unwrap().value,
            2.79897,
            epsilon = 1e-5
        );
        assert!(matches!(
            temperature_from_f(0.0),
            Err(Error::PureState { .. })
        ));
        let mut prev = f64::INFINITY;
        for f in [1.0, 0.1, 1e-2, 1e-4, 1e-6] {
            let t = temperature_from_f(f).unwrap().value;
            assert!(t < prev);
            prev = t;
        }
        assert!(prev < 0.1);
    }

    #[test]
    fn photon_examples() {
        assert_eq!(mean_photon_from_f(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(mean_photon_from_f(0.65).unwrap(), 0.5343, epsilon = 1e-4);
        assert_abs_diff_eq!(mean_photon_from_f(0.329).unwrap(), 0.3150, epsilon = 1e-4);
    }

    #[test]
    fn report_clamps_negative_f() {
        let r = estimate_from_f(-0.004, -0.001, FStatistic::Mean).unwrap();
        assert_eq!(r.f_used, 0.0);
        assert_eq!(r.pi_f_approx, 1.0);
        assert!(r.temperature.is_none());
        assert!(r.diagnostics.iter().any(|d| d.contains("clamped")));

        let r = estimate_from_f(0.6, 0.75, FStatistic::Min).unwrap();
        assert_eq!(r.f_used, 0.6);
        let r = estimate_from_f(0.6, 0.75, FStatistic::Mean).unwrap();
        assert_abs_diff_eq!(r.pi_f_approx, 0.457142857, epsilon = 1e-9);
    }

    #[test]
    fn report_notes_inversion_gap() {
        // largest approximate/exact disagreement sits near F ≈ 0.11
        let r = estimate_from_f(0.1075, 0.1075, FStatistic::Mean).unwrap();
        assert!(r.diagnostics.iter().any(|d| d.contains("differ")));
        let r = estimate_from_f(0.75, 0.75, FStatistic::Mean).unwrap();
        assert!(r.diagnostics.is_empty());
    }

    proptest! {
        #[test]
        fn approximate_inverse_pair(pi in 1e-3f64..=1.0) {
            let f = f_bound(pi, false).unwrap();
            prop_assert!((purity_from_f(f).unwrap() - pi).abs() < 1e-10);
            prop_assert!((f - f_bound_approx_expanded(pi).unwrap()).abs() < 1e-12 * f.max(1.0));
        }

        #[test]
        fn exact_inverse_pair(pi in 1e-3f64..=1.0) {
            let f = f_bound(pi, true).unwrap();
            prop_assert!((purity_from_f_exact(f).unwrap() - pi).abs() < 2e-10);
        }

        #[test]
        fn photon_estimator_consistent(f in 0.0f64..100.0) {
            let pi = purity_from_f(f).unwrap();
            prop_assert!((mean_photon_from_f(f).unwrap() - (1.0 - pi) / (2.0 * pi)).abs() < 1e-12 * (1.0 + f));
        }

        #[test]
        fn estimators_monotone(f in 0.0f64..50.0, df in 1e-6f64..1.0) {
            prop_assert!(purity_from_f(f + df).unwrap() < purity_from_f(f).unwrap());
            prop_assert!(mean_photon_from_f(f + df).unwrap() > mean_photon_from_f(f).unwrap());
        }

        #[test]
        fn thermal_closed_loop(nbar in 0.0f64..1e4) {
            let ratio = purity_from_f(nbar * (nbar + 1.0)).unwrap() * (2.0 * nbar + 1.0);
            prop_assert!(ratio > 8.0 / 9.0 && ratio <= 1.0 + 1e-12, "{ratio}");
        }

        #[test]
        fn phi_monotone_and_above_one(pi in 1e-3f64..1.0, dp in 1e-9f64..0.1) {
            let hi = (pi + dp).min(1.0);
            prop_assert!(phi_exact(pi).unwrap() >= 1.0);
            prop_assert!(phi_approx(pi).unwrap() >= 1.0);
            prop_assert!(phi_exact(hi).unwrap() < phi_exact(pi).unwrap());
            prop_assert!(f_bound(hi, true).unwrap() < f_bound(pi, true).unwrap());
        }
    }
}
