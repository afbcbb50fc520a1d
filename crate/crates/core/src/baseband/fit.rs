//! Least-squares fit of `log10(BER) = alpha * exp(beta * snr)` and the
//! derived sensitivity cut-off.

use super::campaign::BerSample;
use crate::linkmodel::{
    ber_from_fit, success_from_ber, CodeRate, ErrorModelEntry, SpreadingFactor,
};
use crate::{Error, Result};

/// Packet length, in bits, that defines the cut-off.
pub const CUTOFF_BITS: f64 = 108.0;
/// Packet delivery ratio at the cut-off.
pub const CUTOFF_PDR: f64 = 1e-6;

const MIN_POINTS: usize = 4;
const BETA_MIN: f64 = 1e-3;
const BETA_MAX: f64 = 3.0;
const BETA_GRID: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub entry: ErrorModelEntry,
    /// Coefficient of determination on the `log10(BER)` values.
    pub r_squared: f64,
    pub points_used: usize,
}

pub fn pdr_for_bits(ber: f64, bits: f64) -> f64 {
    success_from_ber(ber, bits)
}

/// Points that enter the fit: zero BER values are dropped, then points are
/// taken from the highest SNR downwards until the first one whose
/// `CUTOFF_BITS`-bit delivery ratio falls below `CUTOFF_PDR` (inclusive).
pub fn select_fit_subset(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut nonzero: Vec<(f64, f64)> = points.iter().copied().filter(|&(_, b)| b > 0.0).collect();
    nonzero.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = Vec::new();
    for p in nonzero {
        out.push(p);
        if pdr_for_bits(p.1, CUTOFF_BITS) < CUTOFF_PDR {
            break;
        }
    }
    out
}

/// Sum of squared residuals at `beta` with `alpha` at its least-squares
/// optimum for that `beta`.
fn profile(points: &[(f64, f64)], beta: f64) -> (f64, f64) {
    let (mut sye, mut see) = (0.0, 0.0);
    for &(s, y) in points {
        let e = (beta * s).exp();
        sye += y * e;
        see += e * e;
    }
    let alpha = sye / see;
    let ssr = points
        .iter()
        .map(|&(s, y)| (y - alpha * (beta * s).exp()).powi(2))
        .sum();
    (alpha, ssr)
}

/// Fits one `(sf, cr)` curve to `(snr_db, ber)` points after applying
/// [`select_fit_subset`].
pub fn fit_error_model(
    sf: SpreadingFactor,
    cr: CodeRate,
    points: &[(f64, f64)],
) -> Result<FitResult> {
    let subset = select_fit_subset(points);
    if subset.len() < MIN_POINTS {
        return Err(Error::InsufficientPoints {
            needed: MIN_POINTS,
            got: subset.len(),
        });
    }
    let logs: Vec<(f64, f64)> = subset.iter().map(|&(s, b)| (s, b.log10())).collect();
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / logs.len() as f64;
    let sst: f64 = logs.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let distinct_snr = logs.iter().any(|p| p.0 != logs[0].0);
    if sst <= 0.0 || !distinct_snr {
        return Err(Error::DegenerateFit(
            "no spread in the fitted points".into(),
        ));
    }

    // Coarse log-spaced scan, then golden-section refinement around the best.
    let ratio = (BETA_MAX / BETA_MIN).powf(1.0 / (BETA_GRID - 1) as f64);
    let grid: Vec<f64> = (0..BETA_GRID)
        .map(|i| BETA_MIN * ratio.powi(i as i32))
        .collect();
    let best = (0..BETA_GRID)
        .min_by(|&a, &b| {
            profile(&logs, grid[a])
                .1
                .total_cmp(&profile(&logs, grid[b]).1)
        })
        .expect("non-empty grid");
    let (mut lo, mut hi) = (
        grid[best.saturating_sub(1)],
        grid[(best + 1).min(BETA_GRID - 1)],
    );
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-13 * hi {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if profile(&logs, m1).1 <= profile(&logs, m2).1 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let beta = 0.5 * (lo + hi);
    let (alpha, ssr) = profile(&logs, beta);
    if !alpha.is_finite() || alpha >= 0.0 {
        return Err(Error::DegenerateFit(format!(
            "alpha {alpha} is not negative"
        )));
    }
    let snr_cutoff_db = solve_cutoff(alpha, beta)?;
    Ok(FitResult {
        entry: ErrorModelEntry {
            sf,
            cr,
            alpha,
            beta,
            snr_cutoff_db,
        },
        r_squared: 1.0 - ssr / sst,
        points_used: subset.len(),
    })
}

/// Fits measured samples, which must all share one `(sf, cr)` pair.
pub fn fit_samples(samples: &[BerSample]) -> Result<FitResult> {
    let first = samples.first().ok_or(Error::InsufficientPoints {
        needed: MIN_POINTS,
        got: 0,
    })?;
    if samples.iter().any(|s| s.sf != first.sf || s.cr != first.cr) {
        return Err(Error::InvalidConfig(
            "samples mix several (sf, cr) pairs".into(),
        ));
    }
    let points: Vec<(f64, f64)> = samples.iter().map(|s| (s.snr_db, s.ber())).collect();
    fit_error_model(first.sf, first.cr, &points)
}

/// SNR at which a `CUTOFF_BITS`-bit packet is delivered with probability
/// `CUTOFF_PDR`.
pub fn solve_cutoff(alpha: f64, beta: f64) -> Result<f64> {
    let g = |s: f64| pdr_for_bits(ber_from_fit(alpha, beta, s), CUTOFF_BITS).ln() - CUTOFF_PDR.ln();
    let (mut lo, mut hi) = (-60.0, 30.0);
    if !(g(lo) < 0.0 && g(hi) > 0.0) {
        return Err(Error::DegenerateFit(
            "cut-off not bracketed by [-60, 30] dB".into(),
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linkmodel::ErrorModel;

    fn synthetic(alpha: f64, beta: f64) -> Vec<(f64, f64)> {
        (-20..=0)
            .map(|s| (s as f64, ber_from_fit(alpha, beta, s as f64)))
            .collect()
    }

    #[test]
    fn recovers_reference_parameters() {
        let fit = fit_error_model(
            SpreadingFactor::SF7,
            CodeRate::Cr4_5,
            &synthetic(-30.2580, 0.2857),
        )
        .unwrap();
        assert!(
            (fit.entry.alpha / -30.2580 - 1.0).abs() < 1e-3,
            "{}",
            fit.entry.alpha
        );
        assert!(
            (fit.entry.beta / 0.2857 - 1.0).abs() < 1e-3,
            "{}",
            fit.entry.beta
        );
        assert!(fit.r_squared > 0.999_999);
        assert!(
            (fit.entry.snr_cutoff_db - -12.2833).abs() < 0.1,
            "{}",
            fit.entry.snr_cutoff_db
        );
    }

    #[test]
    fn every_reference_row_is_recovered() {
        for e in ErrorModel::default().entries() {
            // Half-dB grid spanning 20 dB below to 12 dB above the cut-off.
            let pts: Vec<(f64, f64)> = (-64..=0)
                .map(|i| {
                    let s = e.snr_cutoff_db + 12.0 + i as f64 * 0.5;
                    (s, ber_from_fit(e.alpha, e.beta, s))
                })
                .collect();
            let fit = fit_error_model(e.sf, e.cr, &pts).unwrap();
            assert!(
                (fit.entry.alpha / e.alpha - 1.0).abs() < 1e-3,
                "{e:?} {fit:?}"
            );
            assert!(
                (fit.entry.beta / e.beta - 1.0).abs() < 1e-3,
                "{e:?} {fit:?}"
            );
            assert!((fit.entry.snr_cutoff_db - e.snr_cutoff_db).abs() < 0.1);
        }
    }

    #[test]
    fn subset_stops_after_first_point_below_pdr_floor() {
        let subset = select_fit_subset(&synthetic(-30.2580, 0.2857));
        assert_eq!(subset.first().unwrap().0, 0.0);
        assert_eq!(subset.last().unwrap().0, -13.0);
        assert_eq!(subset.len(), 14);
    }

    #[test]
    fn zero_points_are_discarded() {
        let pts = vec![
            (5.0, 0.0),
            (4.0, 0.0),
            (0.0, 1e-7),
            (-1.0, 1e-5),
            (-2.0, 1e-3),
        ];
        let subset = select_fit_subset(&pts);
        assert_eq!(subset.len(), 3);
        assert!(matches!(
            fit_error_model(SpreadingFactor::SF7, CodeRate::Cr4_5, &pts),
            Err(Error::InsufficientPoints { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn flat_points_are_degenerate() {
        let pts = vec![(0.0, 1e-3); 6];
        assert!(matches!(
            fit_error_model(SpreadingFactor::SF7, CodeRate::Cr4_5, &pts),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn cutoff_satisfies_defining_equation() {
        let s = solve_cutoff(-30.2580, 0.2857).unwrap();
        let pdr = pdr_for_bits(ber_from_fit(-30.2580, 0.2857, s), CUTOFF_BITS);
        assert!((pdr / CUTOFF_PDR - 1.0).abs() < 1e-9);
    }
}
