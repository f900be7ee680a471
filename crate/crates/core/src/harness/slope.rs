//! Log-log slope fits with automatic exclusion of the saturated tail.

use std::ops::Range;

use crate::error::{Error, Result};

use super::config::WindowRule;

/// Fewest points a slope is fitted through.
pub const MIN_WINDOW: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: Range<usize>,
}

/// Least-squares line through `(log x, log error)` over `points[window]`.
pub fn fit_loglog_slope(points: &[(f64, f64)], window: Range<usize>) -> Result<SlopeFit> {
    if window.end > points.len() || window.len() < MIN_WINDOW {
        return Err(Error::InvalidValue(format!(
            "slope window {window:?} needs {MIN_WINDOW} points inside {} points",
            points.len()
        )));
    }
    let sel = &points[window.clone()];
    if let Some(&(x, y)) = sel.iter().find(|&&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::Domain(format!("log-log fit needs positive values, got ({x}, {y})")));
    }
    let k = sel.len() as f64;
    let lx: Vec<f64> = sel.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = sel.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("log-log fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
        window,
    })
}

/// Longest prefix over which every second difference of log error is below
/// `threshold`, widened to [`MIN_WINDOW`] points when shorter.
///
/// Only upward bends count: a plateau makes the log error curve convex,
/// while a steepening is not saturation.
pub fn auto_window(errors: &[f64], threshold: f64) -> Result<Range<usize>> {
    if errors.len() < MIN_WINDOW {
        return Err(Error::InvalidValue(format!(
            "need at least {MIN_WINDOW} points, got {}",
            errors.len()
        )));
    }
    if let Some(e) = errors.iter().find(|&&e| !(e > 0.0)) {
        return Err(Error::Domain(format!("log error needs positive values, got {e}")));
    }
    let logs: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let end = logs
        .windows(3)
        .position(|w| w[2] - 2.0 * w[1] + w[0] >= threshold)
        .map(|j| j + 2)
        .unwrap_or(logs.len());
    Ok(0..end.max(MIN_WINDOW))
}

/// Slope of a sweep curve with its window picked by `rule`.
pub fn fit_with_rule(points: &[(f64, f64)], rule: WindowRule) -> Result<SlopeFit> {
    let window = match rule {
        WindowRule::Auto { threshold } => {
            auto_window(&points.iter().map(|p| p.1).collect::<Vec<_>>(), threshold)?
        }
        WindowRule::Manual { start, end } => start..end,
    };
    fit_loglog_slope(points, window)
}
