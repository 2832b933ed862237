//! Interacting-particle updates: SVGD and LAWGD.
//!
//! Both updates are simultaneous: every particle reads the time-`t` ensemble
//! and writes its own slot of the time-`t+1` ensemble. Interaction sums run
//! over the particles in position order, so results do not depend on labels.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diagnostics::{divergence_report, DivergenceReport};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernels::{rbf_median_bandwidth, Kernel};
use crate::target::{GridDensity, GridQuantiles, TargetDistribution};

/// `N × dim` particle positions (row-major) and the iteration counter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub positions: Vec<f64>,
    pub dim: usize,
    pub iteration: usize,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || positions.is_empty() || !positions.len().is_multiple_of(dim) {
            return Err(Error::InvalidSpec(format!(
                "{} coordinates do not form a non-empty {dim}-dimensional ensemble",
                positions.len()
            )));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("ensemble has non-finite coordinates".into()));
        }
        Ok(ParticleEnsemble {
            positions,
            dim,
            iteration: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }
}

/// I.i.d. uniform positions in the box `[lower, upper]` from a seeded stream.
pub fn init_uniform(
    n_particles: usize,
    lower: &[f64],
    upper: &[f64],
    seed: u64,
) -> Result<ParticleEnsemble> {
    if lower.len() != upper.len() || lower.is_empty() {
        return Err(Error::InvalidSpec(
            "init box bounds have mismatched dimensions".into(),
        ));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
        return Err(Error::InvalidSpec(
            "init box needs lower < upper on every axis".into(),
        ));
    }
    if n_particles == 0 {
        return Err(Error::InvalidSpec("need at least one particle".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = lower.len();
    let positions = (0..n_particles * dim)
        .map(|k| {
            let c = k % dim;
            lower[c] + (upper[c] - lower[c]) * rng.random::<f64>()
        })
        .collect();
    ParticleEnsemble::new(positions, dim)
}

/// Step size `h_t = h₀` or `h_t = h₀ / (1 + t)^γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant { h0: f64 },
    Decay { h0: f64, gamma: f64 },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let (h0, gamma) = match *self {
            StepSchedule::Constant { h0 } => (h0, 0.0),
            StepSchedule::Decay { h0, gamma } => (h0, gamma),
        };
        if !(h0 > 0.0) || !h0.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "step size must be positive, got {h0}"
            )));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidSpec(format!(
                "decay exponent must be in [0, 1], got {gamma}"
            )));
        }
        Ok(())
    }

    pub fn step(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::Constant { h0 } => h0,
            StepSchedule::Decay { h0, gamma } => h0 / (1.0 + t as f64).powf(gamma),
        }
    }
}

/// Particle indices sorted lexicographically by position. Particles that tie
/// are at the same point and contribute identical terms, so summing in this
/// order is independent of how the ensemble is labelled.
fn position_order(ens: &ParticleEnsemble) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ens.len()).collect();
    order.sort_by(|&a, &b| {
        ens.particle(a)
            .iter()
            .zip(ens.particle(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

fn check_finite(positions: &[f64], dim: usize, iteration: usize) -> Result<()> {
    if let Some(k) = positions.iter().position(|x| !x.is_finite()) {
        return Err(Error::Aborted {
            iteration,
            particle: k / dim,
            reason: "non-finite position after update".into(),
        });
    }
    Ok(())
}

/// Counts kernel-domain clamps during a step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub clamps: usize,
}

/// One SVGD update
/// `Xᵢ ← Xᵢ − (h/N) Σⱼ K(Xᵢ,Xⱼ)∇V(Xⱼ) + (h/N) Σⱼ ∇₂K(Xᵢ,Xⱼ)`.
pub fn svgd_step(
    ensemble: &ParticleEnsemble,
    target: &TargetDistribution,
    kernel: &Kernel,
    h: f64,
) -> Result<(ParticleEnsemble, StepStats)> {
    let (n, d) = (ensemble.len(), ensemble.dim);
    let grad_v: Vec<f64> = (0..n)
        .flat_map(|j| target.grad_potential_vec(ensemble.particle(j)))
        .collect();
    let order = position_order(ensemble);
    let scale = h / n as f64;
    let new_positions: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let xi = ensemble.particle(i);
            let mut acc = vec![0.0; d];
            let mut g2 = vec![0.0; d];
            for &j in &order {
                let xj = ensemble.particle(j);
                let k = kernel.eval_grad2(xi, xj, &mut g2);
                for c in 0..d {
                    acc[c] += k * grad_v[j * d + c] - g2[c];
                }
            }
            (0..d).map(|c| xi[c] - scale * acc[c]).collect::<Vec<_>>()
        })
        .collect();
    check_finite(&new_positions, d, ensemble.iteration)?;
    let clamps = (0..n)
        .filter(|&i| kernel.clamp(&mut ensemble.particle(i).to_vec()))
        .count();
    Ok((
        ParticleEnsemble {
            positions: new_positions,
            dim: d,
            iteration: ensemble.iteration + 1,
        },
        StepStats { clamps },
    ))
}

/// One LAWGD update `Xᵢ ← Xᵢ − (h/N) Σⱼ ∇₁K_L(Xᵢ, Xⱼ)`, the sum including
/// `j = i`. With the spectral kernel the pair sum factorizes through the mode
/// sums `Sₘ = Σⱼ φₘ(Xⱼ)`, so a step costs `O(N k)`.
pub fn lawgd_step(
    ensemble: &ParticleEnsemble,
    kernel: &Kernel,
    h: f64,
) -> Result<(ParticleEnsemble, StepStats)> {
    let Kernel::Spectral(basis) = kernel else {
        return Err(Error::InvalidSpec(
            "LAWGD requires a spectral kernel".into(),
        ));
    };
    let (n, d, k) = (ensemble.len(), ensemble.dim, basis.k());
    if basis.dim() != d {
        return Err(Error::InvalidSpec(format!(
            "{}D basis used with a {d}D ensemble",
            basis.dim()
        )));
    }
    let lambda = basis.eigenvalues();

    let per_particle: Vec<(Vec<f64>, Vec<f64>, bool)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut x = ensemble.particle(j).to_vec();
            let clamped = kernel.clamp(&mut x);
            let mut phi = vec![0.0; k];
            let mut grad = vec![0.0; k * d];
            basis
                .features(&x, &mut phi, &mut grad)
                .map(|_| (phi, grad, clamped))
        })
        .collect::<Result<_>>()?;
    let clamps = per_particle.iter().filter(|p| p.2).count();

    // Sₘ / λₘ
    let mut weights = vec![0.0; k];
    for j in position_order(ensemble) {
        weights
            .iter_mut()
            .zip(&per_particle[j].0)
            .for_each(|(w, p)| *w += p);
    }
    weights.iter_mut().zip(&lambda).for_each(|(w, l)| *w /= l);

    let scale = h / n as f64;
    let new_positions: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let grad = &per_particle[i].1;
            let xi = ensemble.particle(i);
            (0..d)
                .map(|c| {
                    let v: f64 = grad[c * k..(c + 1) * k]
                        .iter()
                        .zip(&weights)
                        .map(|(g, w)| g * w)
                        .sum();
                    xi[c] - scale * v
                })
                .collect::<Vec<_>>()
        })
        .collect();
    check_finite(&new_positions, d, ensemble.iteration)?;
    Ok((
        ParticleEnsemble {
            positions: new_positions,
            dim: d,
            iteration: ensemble.iteration + 1,
        },
        StepStats { clamps },
    ))
}

/// Which particle update to iterate.
#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    /// SVGD; an RBF kernel has its median bandwidth recomputed every
    /// `bandwidth_every` iterations.
    Svgd {
        bandwidth_every: usize,
    },
    Lawgd,
}

/// Iterations at which positions and diagnostics are recorded. Iteration 0
/// and the final iteration are always included.
#[derive(Debug, Clone, PartialEq)]
pub enum SnapshotPlan {
    Every(usize),
    At(Vec<usize>),
}

impl SnapshotPlan {
    pub fn iterations(&self, n_iters: usize) -> Vec<usize> {
        let mut its: Vec<usize> = match self {
            SnapshotPlan::Every(0) => vec![],
            SnapshotPlan::Every(k) => (0..=n_iters).step_by(*k).collect(),
            SnapshotPlan::At(v) => v.iter().copied().filter(|&i| i <= n_iters).collect(),
        };
        its.push(0);
        its.push(n_iters);
        its.sort_unstable();
        its.dedup();
        its
    }
}

/// Aborts a run once any coordinate leaves `center ± limit`.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceGuard {
    pub center: Vec<f64>,
    pub limit: Vec<f64>,
}

impl DivergenceGuard {
    /// Limit of 10× the grid half-width around the grid centre.
    pub fn from_grid(grid: &Grid) -> Self {
        let (center, half) = grid.center_and_half_width();
        DivergenceGuard {
            center,
            limit: half.iter().map(|h| 10.0 * h).collect(),
        }
    }

    fn check(&self, ens: &ParticleEnsemble) -> Result<()> {
        for i in 0..ens.len() {
            for (c, x) in ens.particle(i).iter().enumerate() {
                if (x - self.center[c]).abs() > self.limit[c] {
                    return Err(Error::Aborted {
                        iteration: ens.iteration,
                        particle: i,
                        reason: format!(
                            "coordinate {x:.4e} left the guard band {:.1} ± {:.1}",
                            self.center[c], self.limit[c]
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Target quantities needed for per-snapshot diagnostics (1D only).
#[derive(Debug, Clone)]
pub struct DiagnosticContext {
    pub pi: GridDensity,
    pub quantiles: GridQuantiles,
}

impl DiagnosticContext {
    pub fn new(target: &TargetDistribution, grid: &Grid) -> Result<Option<Self>> {
        let Grid::One(g) = grid else {
            return Ok(None);
        };
        let pi = crate::target::normalized_pdf_on_grid(target, grid)?;
        let quantiles = GridQuantiles::from_density(&pi, g);
        Ok(Some(DiagnosticContext { pi, quantiles }))
    }

    pub fn report(&self, ens: &ParticleEnsemble) -> Result<DivergenceReport> {
        divergence_report(&ens.positions, &self.pi, &self.quantiles)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub positions: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRow {
    pub iteration: usize,
    pub kl: f64,
    pub chi2: f64,
    pub w1: f64,
    /// Cumulative kernel-domain clamp events.
    pub clamps: usize,
}

/// Everything recorded during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub dim: usize,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub clamp_events: usize,
    /// Set when the run stopped early; holds the reason.
    pub abort: Option<String>,
    pub wall_time_secs: f64,
}

impl RunRecord {
    pub fn final_positions(&self) -> &[f64] {
        &self
            .snapshots
            .last()
            .expect("initial snapshot always present")
            .positions
    }
}

/// Full description of a particle run.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub dynamics: Dynamics,
    pub schedule: StepSchedule,
    pub n_iters: usize,
    pub snapshots: SnapshotPlan,
    pub n_particles: usize,
    pub init_lower: Vec<f64>,
    pub init_upper: Vec<f64>,
    pub seed: u64,
    pub guard: Option<DivergenceGuard>,
}

/// Initializes, iterates and records. Numeric aborts end the run early and
/// are reported in [`RunRecord::abort`]; setup problems are errors.
pub fn run(
    spec: &RunSpec,
    target: &TargetDistribution,
    kernel: &Kernel,
    diagnostics: Option<&DiagnosticContext>,
) -> Result<RunRecord> {
    spec.schedule.validate()?;
    let started = Instant::now();
    let mut ens = init_uniform(
        spec.n_particles,
        &spec.init_lower,
        &spec.init_upper,
        spec.seed,
    )?;
    if ens.dim != target.dim() {
        return Err(Error::InvalidSpec(format!(
            "{}D initialization for a {}D target",
            ens.dim,
            target.dim()
        )));
    }
    let snapshot_at = spec.snapshots.iterations(spec.n_iters);
    let mut next_snapshot = 0;
    let mut record = RunRecord {
        dim: ens.dim,
        snapshots: Vec::new(),
        diagnostics: Vec::new(),
        clamp_events: 0,
        abort: None,
        wall_time_secs: 0.0,
    };
    let mut kernel = kernel.clone();

    let take_snapshot = |ens: &ParticleEnsemble, record: &mut RunRecord| -> Result<()> {
        record.snapshots.push(Snapshot {
            iteration: ens.iteration,
            positions: ens.positions.clone(),
        });
        let report = match diagnostics {
            Some(ctx) if ens.len() >= 2 => ctx
                .report(ens)
                .map_err(|e| log::warn!("diagnostics skipped at iteration {}: {e}", ens.iteration))
                .ok(),
            _ => None,
        };
        let row = match report {
            Some(r) => DiagnosticsRow {
                iteration: ens.iteration,
                kl: r.kl,
                chi2: r.chi2,
                w1: r.w1,
                clamps: record.clamp_events,
            },
            None => DiagnosticsRow {
                iteration: ens.iteration,
                kl: f64::NAN,
                chi2: f64::NAN,
                w1: f64::NAN,
                clamps: record.clamp_events,
            },
        };
        record.diagnostics.push(row);
        Ok(())
    };

    if snapshot_at.first() == Some(&0) {
        take_snapshot(&ens, &mut record)?;
        next_snapshot = 1;
    }
    for t in 0..spec.n_iters {
        let h = spec.schedule.step(t);
        let step = match &spec.dynamics {
            Dynamics::Svgd { bandwidth_every } => {
                if let Kernel::Rbf { bandwidth } = &mut kernel {
                    if ens.len() >= 2 && t % (*bandwidth_every).max(1) == 0 {
                        *bandwidth = rbf_median_bandwidth(&ens.positions, ens.dim)?;
                    }
                }
                svgd_step(&ens, target, &kernel, h)
            }
            Dynamics::Lawgd => lawgd_step(&ens, &kernel, h),
        };
        let checked = step.and_then(|(next, stats)| {
            if let Some(g) = &spec.guard {
                g.check(&next)?;
            }
            Ok((next, stats))
        });
        match checked {
            Ok((next, stats)) => {
                record.clamp_events += stats.clamps;
                ens = next;
            }
            Err(e @ Error::Aborted { .. }) => {
                log::error!("{e}");
                record.abort = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
        if next_snapshot < snapshot_at.len() && snapshot_at[next_snapshot] == ens.iteration {
            take_snapshot(&ens, &mut record)?;
            next_snapshot += 1;
        }
    }
    if record.abort.is_some() && record.snapshots.last().map(|s| s.iteration) != Some(ens.iteration)
    {
        take_snapshot(&ens, &mut record)?;
    }
    record.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(record)
}
