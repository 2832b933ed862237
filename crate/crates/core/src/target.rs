//! Target distributions `pi ∝ exp(-V)` given by their potentials.
//!
//! Only diagonal-covariance Gaussian mixtures are built in. The potential is
//! evaluated in log-sum-exp form and its gradient and Laplacian are exact
//! closed forms in terms of the component responsibilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Grid1D, GridFunction};

/// Weights, means and per-axis variances of a Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub weights: Vec<f64>,
    /// One `dim`-vector per component.
    pub means: Vec<Vec<f64>>,
    /// One `dim`-vector of diagonal variances per component.
    pub variances: Vec<Vec<f64>>,
}

impl GaussianMixtureSpec {
    pub fn standard_gaussian(dim: usize) -> Self {
        GaussianMixtureSpec {
            weights: vec![1.0],
            means: vec![vec![0.0; dim]],
            variances: vec![vec![1.0; dim]],
        }
    }

    /// Single Gaussian with isotropic variance.
    pub fn gaussian(mean: &[f64], variance: f64) -> Self {
        GaussianMixtureSpec {
            weights: vec![1.0],
            means: vec![mean.to_vec()],
            variances: vec![vec![variance; mean.len()]],
        }
    }

    /// 1D mixture from scalar parameters.
    pub fn mixture_1d(weights: &[f64], means: &[f64], variances: &[f64]) -> Self {
        GaussianMixtureSpec {
            weights: weights.to_vec(),
            means: means.iter().map(|&m| vec![m]).collect(),
            variances: variances.iter().map(|&v| vec![v]).collect(),
        }
    }

    /// 2/5 N(-3,1) + 1/5 N(0,1) + 2/5 N(4,2).
    pub fn three_mode_1d() -> Self {
        Self::mixture_1d(&[0.4, 0.2, 0.4], &[-3.0, 0.0, 4.0], &[1.0, 1.0, 2.0])
    }

    /// 1/2 N((-1,-1), I) + 1/2 N((1,1), I).
    pub fn two_mode_2d() -> Self {
        GaussianMixtureSpec {
            weights: vec![0.5, 0.5],
            means: vec![vec![-1.0, -1.0], vec![1.0, 1.0]],
            variances: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        }
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 {
            return Err(Error::InvalidSpec("mixture has no components".into()));
        }
        if self.means.len() != k || self.variances.len() != k {
            return Err(Error::InvalidSpec(format!(
                "{k} weights but {} means and {} variances",
                self.means.len(),
                self.variances.len()
            )));
        }
        let dim = self.dim();
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidSpec(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if self.means.iter().any(|m| m.len() != dim)
            || self.variances.iter().any(|v| v.len() != dim)
        {
            return Err(Error::InvalidSpec(
                "inconsistent component dimensions".into(),
            ));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidSpec(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = self.weights.iter().sum();
        if total == 0.0 {
            return Err(Error::InvalidSpec("weight vector is zero".into()));
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSpec(format!("weights sum to {total}, not 1")));
        }
        if self.means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::InvalidSpec("means must be finite".into()));
        }
        if self
            .variances
            .iter()
            .flatten()
            .any(|&v| !(v > 0.0) || !v.is_finite())
        {
            return Err(Error::InvalidSpec("variances must be positive".into()));
        }
        Ok(())
    }
}

/// Target distribution with potential `V`, its gradient and Laplacian.
#[derive(Debug, Clone)]
pub struct TargetDistribution {
    spec: GaussianMixtureSpec,
    log_weights: Vec<f64>,
    /// ln normalizer of each component: -1/2 sum ln(2 pi s).
    log_norms: Vec<f64>,
    offset: f64,
    pub poincare_constant: Option<f64>,
    pub lsi_constant: Option<f64>,
}

pub fn make_gaussian_mixture(spec: GaussianMixtureSpec) -> Result<TargetDistribution> {
    spec.validate()?;
    let log_weights = spec.weights.iter().map(|w| w.ln()).collect();
    let log_norms = spec
        .variances
        .iter()
        .map(|v| {
            -0.5 * v
                .iter()
                .map(|s| (2.0 * std::f64::consts::PI * s).ln())
                .sum::<f64>()
        })
        .collect();
    let standard = spec.weights.len() == 1
        && spec.means[0].iter().all(|&m| m == 0.0)
        && spec.variances[0].iter().all(|&s| s == 1.0);
    let known = standard.then_some(1.0);
    Ok(TargetDistribution {
        spec,
        log_weights,
        log_norms,
        offset: 0.0,
        poincare_constant: known,
        lsi_constant: known,
    })
}

impl TargetDistribution {
    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn spec(&self) -> &GaussianMixtureSpec {
        &self.spec
    }

    /// Same distribution with `c` added to the potential.
    pub fn with_offset(&self, c: f64) -> Self {
        let mut t = self.clone();
        t.offset += c;
        t
    }

    /// Component log densities (weight included) into `out`.
    fn component_logs(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let (m, s) = (&self.spec.means[k], &self.spec.variances[k]);
            let q: f64 = x
                .iter()
                .zip(m)
                .zip(s)
                .map(|((xi, mi), si)| (xi - mi) * (xi - mi) / si)
                .sum();
            *o = self.log_weights[k] + self.log_norms[k] - 0.5 * q;
        }
    }

    /// Responsibilities (softmax of component logs) and the log-sum-exp.
    fn responsibilities(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let mut l = vec![0.0; self.spec.weights.len()];
        self.component_logs(x, &mut l);
        let max = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in l.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in l.iter_mut() {
            *v /= total;
        }
        (l, max + total.ln())
    }

    pub fn potential(&self, x: &[f64]) -> f64 {
        -self.responsibilities(x).1 + self.offset
    }

    pub fn grad_potential(&self, x: &[f64], out: &mut [f64]) {
        let (r, _) = self.responsibilities(x);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (k, rk) in r.iter().enumerate() {
            for c in 0..x.len() {
                out[c] += rk * (x[c] - self.spec.means[k][c]) / self.spec.variances[k][c];
            }
        }
    }

    pub fn grad_potential_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.grad_potential(x, &mut g);
        g
    }

    /// `ΔV = Σ r_k tr(S_k^{-1}) − Σ r_k ‖u_k‖² + ‖Σ r_k u_k‖²` with
    /// `u_k = S_k^{-1}(x − m_k)`.
    pub fn laplacian_potential(&self, x: &[f64]) -> f64 {
        let (r, _) = self.responsibilities(x);
        let d = x.len();
        let mut mean_u = [0.0; 2];
        let mut trace = 0.0;
        let mut second = 0.0;
        for (k, rk) in r.iter().enumerate() {
            for c in 0..d {
                let s = self.spec.variances[k][c];
                let u = (x[c] - self.spec.means[k][c]) / s;
                trace += rk / s;
                second += rk * u * u;
                mean_u[c] += rk * u;
            }
        }
        trace - second + mean_u[..d].iter().map(|u| u * u).sum::<f64>()
    }

    /// Mixture density value (normalized; ignores the offset).
    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.responsibilities(x).1.exp()
    }

    pub fn potential_on_grid(&self, grid: &Grid) -> GridFunction {
        grid.tabulate(|x| self.potential(x))
    }
}

/// Nonnegative density tabulated on a grid with unit midpoint-rule mass.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub func: GridFunction,
}

impl GridDensity {
    /// Wraps values, rescaling them to unit quadrature mass.
    pub fn from_unnormalized(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let vol = grid.cell_volume();
        let mass: f64 = values.iter().sum::<f64>() * vol;
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::Numeric(format!(
                "density has non-positive mass {mass}"
            )));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::Numeric("density has negative values".into()));
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(GridDensity {
            func: GridFunction::new(grid, values)?,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.func.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.func.values
    }

    pub fn mass(&self) -> f64 {
        self.func.values.iter().sum::<f64>() * self.func.grid.cell_volume()
    }

    /// First moment along `axis`.
    pub fn mean(&self, axis: usize) -> f64 {
        let g = self.func.grid;
        let mut p = vec![0.0; g.dim()];
        let mut s = 0.0;
        for (i, v) in self.func.values.iter().enumerate() {
            g.node_into(i, &mut p);
            s += v * p[axis];
        }
        s * g.cell_volume()
    }
}

/// `exp(-V)` on the grid, shifted by the max of `-V` before exponentiating and
/// rescaled to unit quadrature mass.
pub fn normalized_pdf_on_grid(target: &TargetDistribution, grid: &Grid) -> Result<GridDensity> {
    if target.dim() != grid.dim() {
        return Err(Error::InvalidGrid(format!(
            "target is {}D but grid is {}D",
            target.dim(),
            grid.dim()
        )));
    }
    let neg_v = grid.tabulate(|x| -target.potential(x)).values;
    let max = neg_v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numeric("potential is not finite on the grid".into()));
    }
    let values: Vec<f64> = neg_v.iter().map(|v| (v - max).exp()).collect();
    if values.iter().all(|&v| v == 0.0) {
        return Err(Error::Numeric("density vanishes on the whole grid".into()));
    }
    let boundary_max = (0..grid.len())
        .filter(|&i| grid.is_boundary(i))
        .map(|i| values[i])
        .fold(0.0, f64::max);
    if boundary_max > 1e-10 {
        log::warn!(
            "grid may truncate the target: boundary density is {boundary_max:.3e} of the maximum"
        );
    }
    GridDensity::from_unnormalized(*grid, values)
}

/// Inverse of the piecewise-linear cumulative distribution of the grid
/// density. Cell `i` spans `[x_i - ε/2, x_i + ε/2]` and carries mass `p_i ε`.
pub fn quantile_function(target: &TargetDistribution, grid: &Grid1D, p: f64) -> Result<f64> {
    let q = GridQuantiles::new(target, grid)?;
    q.quantile(p)
}

/// Cumulative table for repeated quantile queries.
#[derive(Debug, Clone)]
pub struct GridQuantiles {
    grid: Grid1D,
    /// cdf[i] = mass of cells 0..i, so cdf has n + 1 entries.
    cdf: Vec<f64>,
}

impl GridQuantiles {
    pub fn new(target: &TargetDistribution, grid: &Grid1D) -> Result<Self> {
        if target.dim() != 1 {
            return Err(Error::InvalidSpec("quantiles need a 1D target".into()));
        }
        let density = normalized_pdf_on_grid(target, &Grid::One(*grid))?;
        Ok(Self::from_density(&density, grid))
    }

    pub fn from_density(density: &GridDensity, grid: &Grid1D) -> Self {
        let eps = grid.spacing();
        let mut cdf = Vec::with_capacity(grid.n + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for v in density.values() {
            acc += v * eps;
            cdf.push(acc);
        }
        GridQuantiles { grid: *grid, cdf }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(p));
        }
        let eps = self.grid.spacing();
        // first boundary with cdf >= p
        let j = self.cdf.partition_point(|&c| c < p).clamp(1, self.grid.n);
        let (lo, hi) = (self.cdf[j - 1], self.cdf[j]);
        let t = if hi > lo { (p - lo) / (hi - lo) } else { 0.5 };
        let left_edge = self.grid.node(j - 1) - 0.5 * eps;
        Ok(left_edge + t * eps)
    }
}
