//! 1D density solvers for the chi-squared flow and the LAWGD density flow.
//!
//! Both are continuity equations `∂ₜμ = −∂ₓ(μ v)` with a velocity that
//! depends on `μ`. The transport step is a conservative upwind finite-volume
//! scheme with explicit Euler time stepping.

use crate::diagnostics::{chi2_grid, kl_grid, DENSITY_FLOOR};
use crate::error::{Error, Result};
use crate::grid::{fd_gradient, Grid, GridFunction, VectorGridFunction};
use crate::spectral::GridBasis;
use crate::target::GridDensity;

const NEGATIVE_TOLERANCE: f64 = -1e-12;
const ADVECTIVE_CFL: f64 = 0.5;
const PARABOLIC_SAFETY: f64 = 0.25;

fn require_1d(grid: &Grid) -> Result<()> {
    match grid {
        Grid::One(_) => Ok(()),
        Grid::Two(_) => Err(Error::InvalidGrid("density flows are 1D only".into())),
    }
}

fn same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a != b {
        return Err(Error::InvalidGrid(
            "density and target live on different grids".into(),
        ));
    }
    Ok(())
}

/// `μ/π̂` with `π̂` floored.
pub fn density_ratio(mu: &GridDensity, pi: &GridDensity) -> Result<GridFunction> {
    same_grid(mu.grid(), pi.grid())?;
    let values = mu
        .values()
        .iter()
        .zip(pi.values())
        .map(|(m, p)| m / p.max(DENSITY_FLOOR))
        .collect();
    GridFunction::new(*mu.grid(), values)
}

/// `v = −2 ∇(μ/π̂)`.
pub fn csf_velocity(mu: &GridDensity, pi: &GridDensity) -> Result<VectorGridFunction> {
    require_1d(mu.grid())?;
    let mut v = fd_gradient(&density_ratio(mu, pi)?);
    v.components[0].iter_mut().for_each(|x| *x *= -2.0);
    Ok(v)
}

/// `v = −∇ Σᵢ λᵢ⁻¹ φᵢ ⟨φᵢ, μ/π̂⟩_{L²(π̂)}`.
///
/// The projection uses the centred ratio `μ/π̂ − 1`, i.e. `Σ φᵢ (μ − π̂) ε`:
/// the discrete modes are orthogonal to the discrete ground state, which is
/// only approximately `√π̂`, so projecting `μ/π̂` itself leaves a spurious
/// drift at `μ = π̂`. The gradient of the sum is taken
/// from the tabulated mode gradients, which are the finite-difference
/// gradients of the modes, so this equals `fd_gradient` of the sum.
pub fn lawgd_density_velocity(
    mu: &GridDensity,
    pi: &GridDensity,
    basis: &GridBasis,
) -> Result<VectorGridFunction> {
    require_1d(mu.grid())?;
    same_grid(mu.grid(), pi.grid())?;
    same_grid(mu.grid(), &basis.grid)?;
    let (n, k) = (basis.grid.len(), basis.k());
    let eps = basis.grid.cell_volume();
    let mut weights = vec![0.0; k];
    for (i, (m, p)) in mu.values().iter().zip(pi.values()).enumerate() {
        let row = &basis.phi[i * k..(i + 1) * k];
        weights
            .iter_mut()
            .zip(row)
            .for_each(|(w, f)| *w += f * (m - p));
    }
    weights
        .iter_mut()
        .zip(&basis.eigenvalues)
        .for_each(|(w, l)| *w *= eps / l);
    let v = (0..n)
        .map(|i| {
            -basis.grad[i * k..(i + 1) * k]
                .iter()
                .zip(&weights)
                .map(|(g, w)| g * w)
                .sum::<f64>()
        })
        .collect();
    Ok(VectorGridFunction {
        grid: basis.grid,
        components: vec![v],
    })
}

/// Largest advective step, `0.5 ε / max|v|` (infinite for `v ≡ 0`).
pub fn cfl_limit(velocity: &VectorGridFunction) -> f64 {
    let vmax = velocity.components[0]
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    if vmax == 0.0 {
        f64::INFINITY
    } else {
        ADVECTIVE_CFL * velocity.grid.spacing() / vmax
    }
}

fn upwind_update(mu: &mut [f64], v: &[f64], dt: f64, eps: f64) {
    let n = mu.len();
    // fluxes[i] lives on the face between nodes i and i+1
    let fluxes: Vec<f64> = (0..n - 1)
        .map(|i| {
            let vf = 0.5 * (v[i] + v[i + 1]);
            vf * if vf > 0.0 { mu[i] } else { mu[i + 1] }
        })
        .collect();
    let r = dt / eps;
    for i in 0..n {
        let right = if i + 1 < n { fluxes[i] } else { 0.0 };
        let left = if i > 0 { fluxes[i - 1] } else { 0.0 };
        mu[i] -= r * (right - left);
    }
}

/// Advances `μ` by `dt` under a frozen velocity, sub-stepping so every
/// sub-step satisfies the advective CFL bound. No flux leaves the domain.
pub fn flow_step(mu: &GridDensity, velocity: &VectorGridFunction, dt: f64) -> Result<GridDensity> {
    require_1d(mu.grid())?;
    same_grid(mu.grid(), &velocity.grid)?;
    if !(dt >= 0.0) {
        return Err(Error::InvalidSpec(format!(
            "time step must be nonnegative, got {dt}"
        )));
    }
    let v = &velocity.components[0];
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite velocity".into()));
    }
    let mut values = mu.values().to_vec();
    if dt > 0.0 {
        let limit = cfl_limit(velocity);
        let subs = if limit.is_finite() {
            (dt / limit).ceil().max(1.0) as usize
        } else {
            1
        };
        let h = dt / subs as f64;
        let eps = mu.grid().spacing();
        for _ in 0..subs {
            upwind_update(&mut values, v, h, eps);
        }
    }
    if let Some((i, &m)) = values
        .iter()
        .enumerate()
        .find(|(_, &m)| m < NEGATIVE_TOLERANCE || !m.is_finite())
    {
        return Err(Error::Unstable(format!(
            "density {m:.3e} at node {i} after a step of {dt}"
        )));
    }
    Ok(GridDensity {
        func: GridFunction {
            grid: *mu.grid(),
            values,
        },
    })
}

/// Which density flow to integrate.
#[derive(Debug, Clone, Copy)]
pub enum FlowKind<'a> {
    /// `∂ₜμ = 2 div(μ ∇(μ/π))`
    Csf,
    /// `∂ₜμ = div(μ ∇ L⁻¹(μ/π))`
    LawgdDensity(&'a GridBasis),
}

impl FlowKind<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            FlowKind::Csf => "csf",
            FlowKind::LawgdDensity(_) => "lawgd-density",
        }
    }

    pub fn velocity(&self, mu: &GridDensity, pi: &GridDensity) -> Result<VectorGridFunction> {
        match self {
            FlowKind::Csf => csf_velocity(mu, pi),
            FlowKind::LawgdDensity(b) => lawgd_density_velocity(mu, pi, b),
        }
    }

    /// Extra step bound beyond advective CFL. The chi-squared velocity
    /// depends on `∇μ`, which makes the scheme a nonlinear diffusion with
    /// coefficient about `2μ/π` on a wide stencil.
    fn stability_limit(&self, mu: &GridDensity, pi: &GridDensity) -> f64 {
        match self {
            FlowKind::Csf => {
                let r = mu
                    .values()
                    .iter()
                    .zip(pi.values())
                    .fold(0.0f64, |a, (m, p)| a.max(m / p.max(DENSITY_FLOOR)));
                let eps = mu.grid().spacing();
                if r > 0.0 {
                    PARABOLIC_SAFETY * eps * eps / r
                } else {
                    f64::INFINITY
                }
            }
            FlowKind::LawgdDensity(_) => f64::INFINITY,
        }
    }
}

/// Recording times: divergences every `divergence_every` and densities
/// every `density_every` (if set), both in flow time, plus `t = 0` and the end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRecordPlan {
    pub divergence_every: f64,
    pub density_every: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergencePoint {
    pub t: f64,
    pub kl: f64,
    pub chi2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub divergences: Vec<DivergencePoint>,
    pub densities: Vec<(f64, GridDensity)>,
    pub final_density: GridDensity,
    /// Number of velocity evaluations.
    pub steps: usize,
}

impl FlowRecord {
    pub fn kl_series(&self) -> Vec<(f64, f64)> {
        self.divergences.iter().map(|p| (p.t, p.kl)).collect()
    }

    pub fn chi2_series(&self) -> Vec<(f64, f64)> {
        self.divergences.iter().map(|p| (p.t, p.chi2)).collect()
    }
}

/// Integrates a flow from `mu0` to time `t_end` with steps of at most `dt`.
///
/// The velocity is re-evaluated every step; steps shrink to satisfy the
/// advective CFL and, for the chi-squared flow, the parabolic bound, and land
/// exactly on recording times.
pub fn evolve(
    kind: FlowKind<'_>,
    mu0: &GridDensity,
    pi: &GridDensity,
    t_end: f64,
    dt: f64,
    plan: FlowRecordPlan,
) -> Result<FlowRecord> {
    require_1d(mu0.grid())?;
    same_grid(mu0.grid(), pi.grid())?;
    if !(dt > 0.0) || !(t_end >= 0.0) || !(plan.divergence_every > 0.0) {
        return Err(Error::InvalidSpec(
            "flow needs dt > 0, t_end >= 0 and a positive recording interval".into(),
        ));
    }
    if plan.density_every.is_some_and(|d| !(d > 0.0)) {
        return Err(Error::InvalidSpec(
            "density recording interval must be positive".into(),
        ));
    }
    let mut record = FlowRecord {
        divergences: Vec::new(),
        densities: Vec::new(),
        final_density: mu0.clone(),
        steps: 0,
    };
    let record_div = |mu: &GridDensity, t: f64, rec: &mut FlowRecord| -> Result<()> {
        rec.divergences.push(DivergencePoint {
            t,
            kl: kl_grid(mu, pi)?,
            chi2: chi2_grid(mu, pi)?,
        });
        Ok(())
    };

    let mut mu = mu0.clone();
    let mut t = 0.0;
    let mut div_count = 0usize;
    let mut dens_count = 0usize;
    record_div(&mu, t, &mut record)?;
    if plan.density_every.is_some() {
        record.densities.push((t, mu.clone()));
    }
    div_count += 1;
    dens_count += 1;
    // relative slack so accumulated rounding does not create a tiny last step
    let slack = 1e-9 * dt;
    while t < t_end - slack {
        let next_div = (div_count as f64 * plan.divergence_every).min(t_end);
        let next_dens = plan
            .density_every
            .map_or(f64::INFINITY, |d| dens_count as f64 * d);
        let next_mark = next_div.min(next_dens);
        let velocity = kind.velocity(&mu, pi)?;
        let h = dt
            .min(cfl_limit(&velocity))
            .min(kind.stability_limit(&mu, pi))
            .min(next_mark - t);
        let landed = t + h >= next_mark - slack;
        mu = flow_step(&mu, &velocity, h)?;
        record.steps += 1;
        t = if landed { next_mark } else { t + h };
        if landed && t >= next_div - slack {
            record_div(&mu, t, &mut record)?;
            div_count += 1;
        }
        if landed && t >= next_dens - slack {
            record.densities.push((t, mu.clone()));
            dens_count += 1;
        }
    }
    if record.divergences.last().map(|p| p.t) != Some(t) {
        record_div(&mu, t, &mut record)?;
    }
    record.final_density = mu;
    Ok(record)
}

/// `∫ ‖∇(μ/π̂)‖² dπ̂` by quadrature.
pub fn ratio_gradient_energy(mu: &GridDensity, pi: &GridDensity) -> Result<f64> {
    let g = fd_gradient(&density_ratio(mu, pi)?);
    let s: f64 = g.components[0]
        .iter()
        .zip(pi.values())
        .map(|(d, p)| d * d * p)
        .sum();
    Ok(s * mu.grid().cell_volume())
}
