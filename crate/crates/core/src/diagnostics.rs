//! Divergence estimators between ensembles or grid densities and the
//! target, and log-linear decay-rate fits.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::target::{GridDensity, GridQuantiles};

/// Floor applied to target densities before dividing by them.
pub const DENSITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceReport {
    pub kl: f64,
    pub chi2: f64,
    pub w1: f64,
    pub kde_bandwidth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Slope of ln(value) against t.
    pub rate: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub points: usize,
}

/// Silverman's rule `1.06 σ̂ N^{-1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    1.06 * var.sqrt() * n.powf(-0.2)
}

/// Gaussian KDE of a 1D ensemble at the grid nodes, renormalized to unit
/// quadrature mass. Returns the density and the bandwidth used.
pub fn kde_on_grid(particles: &[f64], grid: &Grid) -> Result<(GridDensity, f64)> {
    let Grid::One(g) = grid else {
        return Err(Error::InvalidGrid("KDE is only available in 1D".into()));
    };
    if particles.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "KDE needs at least 2 particles, got {}",
            particles.len()
        )));
    }
    let mut bw = silverman_bandwidth(particles);
    if !(bw > 0.0) || !bw.is_finite() {
        bw = g.spacing();
    }
    let inv = 1.0 / bw;
    // Only kernels within 40 bandwidths contribute anything representable.
    let mut sorted = particles.to_vec();
    sorted.sort_by(f64::total_cmp);
    let reach = 40.0 * bw;
    let values: Vec<f64> = (0..g.n)
        .map(|i| {
            let x = g.node(i);
            let lo = sorted.partition_point(|&p| p < x - reach);
            let hi = sorted.partition_point(|&p| p <= x + reach);
            sorted[lo..hi]
                .iter()
                .map(|p| {
                    let z = (x - p) * inv;
                    (-0.5 * z * z).exp()
                })
                .sum()
        })
        .collect();
    if values.iter().all(|&v| v == 0.0) {
        return Err(Error::Numeric(
            "KDE vanishes on the grid (particles outside?)".into(),
        ));
    }
    Ok((GridDensity::from_unnormalized(*grid, values)?, bw))
}

fn check_same_grid(mu: &GridDensity, pi: &GridDensity) -> Result<()> {
    if mu.grid() != pi.grid() {
        return Err(Error::InvalidGrid(
            "densities live on different grids".into(),
        ));
    }
    Ok(())
}

/// `Σ μ ln(μ/π) ε^d`, with `0 ln 0 = 0`, clipped below at 0.
pub fn kl_grid(mu: &GridDensity, pi: &GridDensity) -> Result<f64> {
    check_same_grid(mu, pi)?;
    let s: f64 = mu
        .values()
        .iter()
        .zip(pi.values())
        .filter(|(&m, _)| m > 0.0)
        .map(|(&m, &p)| m * (m / p.max(DENSITY_FLOOR)).ln())
        .sum();
    Ok((s * mu.grid().cell_volume()).max(0.0))
}

/// `Σ (μ/π − 1)² π ε^d`.
pub fn chi2_grid(mu: &GridDensity, pi: &GridDensity) -> Result<f64> {
    check_same_grid(mu, pi)?;
    let s: f64 = mu
        .values()
        .iter()
        .zip(pi.values())
        .map(|(&m, &p)| {
            let p = p.max(DENSITY_FLOOR);
            (m / p - 1.0).powi(2) * p
        })
        .sum();
    Ok(s * mu.grid().cell_volume())
}

/// `(1/N) Σ |x_(i) − q((i − ½)/N)|` against the target quantiles.
pub fn w1_1d(particles: &[f64], quantiles: &GridQuantiles) -> Result<f64> {
    if particles.is_empty() {
        return Err(Error::InsufficientData(
            "W1 needs at least one particle".into(),
        ));
    }
    let mut sorted = particles.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut total = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let q = quantiles.quantile((i as f64 + 0.5) / n)?;
        total += (x - q).abs();
    }
    Ok(total / n)
}

/// Full report for a 1D ensemble against the grid-normalized target.
pub fn divergence_report(
    particles: &[f64],
    pi: &GridDensity,
    quantiles: &GridQuantiles,
) -> Result<DivergenceReport> {
    let (kde, bw) = kde_on_grid(particles, pi.grid())?;
    Ok(DivergenceReport {
        kl: kl_grid(&kde, pi)?,
        chi2: chi2_grid(&kde, pi)?,
        w1: w1_1d(particles, quantiles)?,
        kde_bandwidth: bw,
    })
}

/// Least-squares slope of ln(value) against t over the points whose value lies
/// in `[window.0, window.1]`.
pub fn fit_decay_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(_, v)| *v > 0.0 && *v >= window.0 && *v <= window.1)
        .map(|&(t, v)| (t, v.ln()))
        .collect();
    if pts.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "{} points inside the window [{:e}, {:e}], need 5",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if stt == 0.0 {
        return Err(Error::InsufficientData(
            "all window points share one time".into(),
        ));
    }
    let rate = sty / stt;
    let intercept = my - rate * mt;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sty * sty / (stt * syy)).clamp(0.0, 1.0)
    };
    let (t_lo, t_hi) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p.0), b.max(p.0))
        });
    Ok(DecayFit {
        rate,
        intercept,
        window: (t_lo, t_hi),
        r_squared,
        points: pts.len(),
    })
}
