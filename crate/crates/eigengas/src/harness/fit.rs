//! Power-law fits of success-versus-speed curves and the
//! success/fidelity trade-off intersection.

use serde::{Deserialize, Serialize};

use super::run::CurvePoint;
use crate::error::{Error, Result};

/// Fitted scaling exponent of a `P ~ x^-gamma` region.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ScalingFit {
    pub gamma: f64,
    pub stderr: f64,
    /// Axis range actually used by the fit.
    pub window: (f64, f64),
    pub r_squared: f64,
    pub points_used: usize,
}

/// Least-squares line on `(log x, log P)` restricted to points with success
/// inside `[p_min, p_max]` (and optionally to an axis window); the exponent
/// is minus the slope. At least four in-band points are required.
pub fn fit_power_law(
    points: &[(f64, f64)],
    p_min: f64,
    p_max: f64,
    window: Option<(f64, f64)>,
) -> Result<ScalingFit> {
    let selected: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, p)| {
            *x > 0.0
                && *p >= p_min
                && *p <= p_max
                && *p > 0.0
                && window.is_none_or(|(lo, hi)| *x >= lo && *x <= hi)
        })
        .map(|(x, p)| (x.ln(), p.ln()))
        .collect();
    let n = selected.len();
    if n < 4 {
        return Err(Error::FitBand {
            in_band: n,
            needed: 4,
            p_min,
            p_max,
        });
    }
    let nf = n as f64;
    let mean_x = selected.iter().map(|(x, _)| x).sum::<f64>() / nf;
    let mean_y = selected.iter().map(|(_, y)| y).sum::<f64>() / nf;
    let sxx: f64 = selected.iter().map(|(x, _)| (x - mean_x) * (x - mean_x)).sum();
    let sxy: f64 = selected
        .iter()
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ssr: f64 = selected
        .iter()
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let sst: f64 = selected.iter().map(|(_, y)| (y - mean_y) * (y - mean_y)).sum();
    let r_squared = if sst == 0.0 { 1.0 } else { 1.0 - ssr / sst };
    let stderr = if n > 2 {
        (ssr / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let lo = selected.iter().map(|(x, _)| *x).fold(f64::INFINITY, f64::min);
    let hi = selected
        .iter()
        .map(|(x, _)| *x)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ScalingFit {
        gamma: -slope,
        stderr,
        window: (lo.exp(), hi.exp()),
        r_squared,
        points_used: n,
    })
}

/// Identify the polynomial region of a speed-sweep curve: the contiguous
/// run, entered from the slow side once success falls below `p_max`, over
/// which success keeps falling with a local log-log slope of at least 0.1.
/// Fast sweeps saturate at a cascade-shuffling baseline that is not a power
/// law; the region ends there. Returns the speed window, or `None` when no
/// such run exists.
pub fn polynomial_region(points: &[CurvePoint], p_max: f64) -> Option<(f64, f64)> {
    let mut start = None;
    for (k, p) in points.iter().enumerate() {
        if p.mean_success < p_max && p.mean_success > 0.0 {
            start = Some(k);
            break;
        }
    }
    let start = start?;
    let mut end = start;
    for k in start..points.len() - 1 {
        let (a, b) = (&points[k], &points[k + 1]);
        if b.mean_success <= 0.0 {
            break;
        }
        let slope = (a.mean_success / b.mean_success).ln() / (b.x / a.x).ln();
        if slope < 0.1 {
            break;
        }
        end = k + 1;
    }
    if end > start {
        Some((points[start].x, points[end].x))
    } else {
        None
    }
}

/// Leave-one-realization-out estimate of the scaling exponent and its
/// standard error. The plain least-squares error of the pooled fit ignores
/// that every curve point shares the same realizations; the jackknife does
/// not.
pub fn jackknife_gamma(
    ensemble: &super::run::EnsembleResult,
    p_min: f64,
    p_max: f64,
    window: Option<(f64, f64)>,
) -> Result<(ScalingFit, f64)> {
    let ok: Vec<&super::run::RealizationRecord> = ensemble
        .records
        .iter()
        .filter(|r| r.failed.is_none())
        .collect();
    let n = ok.len();
    if n < 3 {
        return Err(Error::InvalidConfig(
            "jackknife needs at least three successful realizations".into(),
        ));
    }
    let speeds = &ensemble.speeds;
    let full_curve = |skip: Option<usize>| -> Vec<(f64, f64)> {
        speeds
            .iter()
            .enumerate()
            .map(|(si, &v)| {
                let mut sum = 0.0;
                let mut count = 0usize;
                for (ri, r) in ok.iter().enumerate() {
                    if Some(ri) != skip {
                        sum += r.successes[si].success;
                        count += 1;
                    }
                }
                (v, sum / count as f64)
            })
            .collect()
    };
    let fit = fit_power_law(&full_curve(None), p_min, p_max, window)?;
    let mut gammas = Vec::with_capacity(n);
    for ri in 0..n {
        // Window held fixed: the jackknife varies the means, not the region.
        let sub = fit_power_law(&full_curve(Some(ri)), p_min, p_max, Some(fit.window))?;
        gammas.push(sub.gamma);
    }
    let mean = gammas.iter().sum::<f64>() / n as f64;
    let var = gammas.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() * (n - 1) as f64
        / n as f64;
    Ok((fit, var.sqrt()))
}

/// Result of intersecting the success and fidelity curves of an amplitude
/// sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TradeoffResult {
    /// The two curves cross; the amplitude is linearly interpolated.
    Intersection { epsilon_star: f64, crossings: usize },
    /// No sign change of `success - fidelity` anywhere on the grid.
    NoIntersection,
}

/// Locate the amplitude where mean success overtakes mean fidelity.
///
/// Success must be non-decreasing and fidelity non-increasing along the
/// grid, up to twice the combined standard errors; a violation beyond that
/// names the offending segment.
pub fn find_tradeoff(points: &[CurvePoint]) -> Result<TradeoffResult> {
    if points.len() < 2 {
        return Err(Error::InvalidConfig(
            "trade-off needs at least two amplitude points".into(),
        ));
    }
    for (i, w) in points.windows(2).enumerate() {
        let tol_s = 2.0 * (w[0].stderr_success.powi(2) + w[1].stderr_success.powi(2)).sqrt();
        if w[1].mean_success < w[0].mean_success - tol_s {
            return Err(Error::MonotonicityViolation {
                index: i,
                detail: format!(
                    "success falls from {:.4} to {:.4} between amplitudes {} and {}",
                    w[0].mean_success, w[1].mean_success, w[0].x, w[1].x
                ),
            });
        }
        let tol_f = 2.0 * (w[0].stderr_fidelity.powi(2) + w[1].stderr_fidelity.powi(2)).sqrt();
        if w[1].mean_fidelity > w[0].mean_fidelity + tol_f {
            return Err(Error::MonotonicityViolation {
                index: i,
                detail: format!(
                    "fidelity rises from {:.4} to {:.4} between amplitudes {} and {}",
                    w[0].mean_fidelity, w[1].mean_fidelity, w[0].x, w[1].x
                ),
            });
        }
    }

    let diff: Vec<f64> = points
        .iter()
        .map(|p| p.mean_success - p.mean_fidelity)
        .collect();
    let mut crossings = Vec::new();
    for i in 0..diff.len() - 1 {
        let (a, b) = (diff[i], diff[i + 1]);
        if a == 0.0 {
            crossings.push(points[i].x);
        } else if a < 0.0 && b >= 0.0 || a > 0.0 && b <= 0.0 {
            let t = a / (a - b);
            crossings.push(points[i].x + t * (points[i + 1].x - points[i].x));
        }
    }
    if *diff.last().unwrap() == 0.0 {
        crossings.push(points.last().unwrap().x);
    }
    crossings.dedup();
    match crossings.as_slice() {
        [] => Ok(TradeoffResult::NoIntersection),
        all => Ok(TradeoffResult::Intersection {
            epsilon_star: all[0],
            crossings: all.len(),
        }),
    }
}
