use crate::error::{Error, Result};

/// Slope window as fractions of the horizon.
pub const DEFAULT_WINDOW: (f64, f64) = (0.1, 1.0);

/// Least-squares slope of `log₁₀ y` against `log₁₀ x` over points with both coordinates positive.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(x, y)| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())
        .map(|&(x, y)| (x.log10(), y.log10()))
        .collect();
    let m = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    if logs.len() < 2 || sxx == 0.0 {
        return Err(Error::InvalidParameter("slope fit needs two distinct positive points".into()));
    }
    Ok(logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx)
}

/// Slope of `log₁₀ R(t)` against `log₁₀ t` over rounds `t ∈ [lo·T, hi·T]`,
/// where `series[t − 1] = R(t)`. Non-positive values are dropped.
pub fn slope_estimate(series: &[f64], window: (f64, f64)) -> Result<f64> {
    let n = series.len() as f64;
    let (lo, hi) = (window.0 * n, window.1 * n);
    let points: Vec<(f64, f64)> = series
        .iter()
        .enumerate()
        .map(|(i, &r)| ((i + 1) as f64, r))
        .filter(|&(t, r)| t >= lo && t <= hi && r > 0.0 && r.is_finite())
        .collect();
    if points.len() < 10 {
        return Err(Error::InvalidParameter(format!(
            "slope fit needs at least 10 positive points, found {}",
            points.len()
        )));
    }
    loglog_slope(&points)
}
