//! Least-squares power-law and exponential fits for scaling exponents.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("fit needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("nonpositive value {value} at x = {x} under log transform")]
    NonPositive { x: f64, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    /// y = c x^p; fits p on log-log coordinates.
    PowerLaw,
    /// y = c e^{r x}; fits r on log-linear coordinates.
    Exponential,
}

#[derive(Debug, Clone, Copy)]
pub struct FitResult {
    pub model: FitModel,
    /// Exponent p or rate r.
    pub slope: f64,
    /// ln of the prefactor.
    pub ln_prefactor: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    /// x-window actually used.
    pub window: (f64, f64),
    pub points: usize,
}

/// Fit over all points.
pub fn fit(points: &[(f64, f64)], model: FitModel) -> Result<FitResult, FitError> {
    fit_windowed(points, model, f64::NEG_INFINITY, f64::INFINITY)
}

/// Fit restricted to x in [x_min, x_max].
pub fn fit_windowed(
    points: &[(f64, f64)],
    model: FitModel,
    x_min: f64,
    x_max: f64,
) -> Result<FitResult, FitError> {
    let selected: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(x, _)| x >= x_min && x <= x_max)
        .collect();
    if selected.len() < 4 {
        return Err(FitError::TooFewPoints(selected.len()));
    }
    let mut xs = Vec::with_capacity(selected.len());
    let mut ys = Vec::with_capacity(selected.len());
    for &(x, y) in &selected {
        if y <= 0.0 {
            return Err(FitError::NonPositive { x, value: y });
        }
        let tx = match model {
            FitModel::PowerLaw => {
                if x <= 0.0 {
                    return Err(FitError::NonPositive { x, value: x });
                }
                x.ln()
            }
            FitModel::Exponential => x,
        };
        xs.push(tx);
        ys.push(y.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let dof = (xs.len() - 2).max(1) as f64;
    let stderr = (ss_res / dof / sxx).sqrt();
    let wlo = selected.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let whi = selected.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(FitResult {
        model,
        slope,
        ln_prefactor: intercept,
        stderr,
        window: (wlo, whi),
        points: xs.len(),
    })
}

/// R^2 of a fit on the transformed coordinates.
pub fn r_squared(points: &[(f64, f64)], result: &FitResult) -> f64 {
    let transformed: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(x, _)| x >= result.window.0 && x <= result.window.1)
        .map(|&(x, y)| {
            let tx = match result.model {
                FitModel::PowerLaw => x.ln(),
                FitModel::Exponential => x,
            };
            (tx, y.ln())
        })
        .collect();
    let n = transformed.len() as f64;
    let my = transformed.iter().map(|p| p.1).sum::<f64>() / n;
    let ss_tot: f64 = transformed.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = transformed
        .iter()
        .map(|&(x, y)| (y - (result.ln_prefactor + result.slope * x)).powi(2))
        .sum();
    1.0 - ss_res / ss_tot.max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_recovered() {
        let pts: Vec<(f64, f64)> = (1..=8).map(|i| (i as f64, 3.0 * (i as f64).powi(2))).collect();
        let r = fit(&pts, FitModel::PowerLaw).unwrap();
        assert!((r.slope - 2.0).abs() < 1e-12);
        assert!(r.stderr < 1e-12);
        assert!((r.ln_prefactor - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn exact_exponential_rate_recovered() {
        // golden-ratio growth: rate log phi
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let pts: Vec<(f64, f64)> = (4..=12).map(|b| (b as f64, phi.powi(b))).collect();
        let r = fit(&pts, FitModel::Exponential).unwrap();
        assert!((r.slope - phi.ln()).abs() < 1e-12);
    }

    #[test]
    fn too_few_points_rejected() {
        let pts = vec![(1.0, 1.0), (2.0, 4.0), (3.0, 9.0)];
        assert!(matches!(
            fit(&pts, FitModel::PowerLaw),
            Err(FitError::TooFewPoints(3))
        ));
    }

    #[test]
    fn nonpositive_rejected_under_log() {
        let pts = vec![(1.0, 1.0), (2.0, -4.0), (3.0, 9.0), (4.0, 16.0)];
        assert!(matches!(
            fit(&pts, FitModel::PowerLaw),
            Err(FitError::NonPositive { .. })
        ));
    }

    #[test]
    fn window_restricts_points() {
        let mut pts: Vec<(f64, f64)> = (1..=10).map(|i| (i as f64, (i as f64).powi(2))).collect();
        // corrupt the small-x end outside the window
        pts[0].1 = 100.0;
        let r = fit_windowed(&pts, FitModel::PowerLaw, 2.0, 10.0).unwrap();
        assert!((r.slope - 2.0).abs() < 1e-12);
        assert_eq!(r.window, (2.0, 10.0));
        assert_eq!(r.points, 9);
    }

    #[test]
    fn r_squared_near_one_for_clean_data() {
        let pts: Vec<(f64, f64)> = (2..=12)
            .map(|i| (i as f64, 5.0 * (i as f64).powf(-1.5) * (1.0 + 0.01 * (i as f64).sin())))
            .collect();
        let r = fit(&pts, FitModel::PowerLaw).unwrap();
        assert!(r_squared(&pts, &r) > 0.999);
    }
}
