//! Experiment configuration: a single strict JSON document per run.
//!
//! Parsing rejects unknown keys, then [`ExperimentConfig::resolve`] fills
//! defaults and validates method-specific requirements. Every error names the
//! JSON path it refers to.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Grid1D, Grid2D};
use crate::particles::StepSchedule;
use crate::spectral::MAX_HERMITE_MODES;
use crate::target::{make_gaussian_mixture, GaussianMixtureSpec, TargetDistribution};

pub const DEFAULT_HERMITE_MODES: usize = 150;
pub const DEFAULT_FD_MODES_2D: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Svgd,
    Lawgd,
    CsfFlow,
    LawgdFlow,
}

impl Method {
    pub fn is_flow(self) -> bool {
        matches!(self, Method::CsfFlow | Method::LawgdFlow)
    }
}

/// A scalar or a per-axis vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coord {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Coord {
    fn to_vec(&self, dim: usize) -> Vec<f64> {
        match self {
            Coord::Scalar(v) => vec![*v; dim],
            Coord::Vector(v) => v.clone(),
        }
    }

    fn len(&self) -> Option<usize> {
        match self {
            Coord::Scalar(_) => None,
            Coord::Vector(v) => Some(v.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<Coord>,
        variances: Vec<Coord>,
    },
}

impl TargetConfig {
    fn dim(&self) -> usize {
        let TargetConfig::GaussianMixture { means, .. } = self;
        means.first().and_then(Coord::len).unwrap_or(1)
    }

    pub fn to_spec(&self) -> GaussianMixtureSpec {
        let TargetConfig::GaussianMixture {
            weights,
            means,
            variances,
        } = self;
        let d = self.dim();
        GaussianMixtureSpec {
            weights: weights.clone(),
            means: means.iter().map(|m| m.to_vec(d)).collect(),
            variances: variances.iter().map(|v| v.to_vec(d)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
}

impl AxisConfig {
    fn build(&self) -> Result<Grid1D> {
        Grid1D::new(self.lower, self.upper, self.n)
    }
}

/// `{"lower", "upper", "n"}` for 1D or `{"x": {..}, "y": {..}}` for 2D.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<AxisConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<AxisConfig>,
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        let wrap = |path: &str, e: Error| Error::config(path, e.to_string());
        match (self.lower, self.upper, self.n, self.x, self.y) {
            (Some(lower), Some(upper), Some(n), None, None) => Grid1D::new(lower, upper, n)
                .map(Grid::One)
                .map_err(|e| wrap("grid", e)),
            (None, None, None, Some(x), Some(y)) => {
                let gx = x.build().map_err(|e| wrap("grid.x", e))?;
                let gy = y.build().map_err(|e| wrap("grid.y", e))?;
                Grid2D::new(gx, gy)
                    .map(Grid::Two)
                    .map_err(|e| wrap("grid", e))
            }
            _ => Err(Error::config(
                "grid",
                "expected either lower/upper/n (1D) or x/y axes (2D)",
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Hermite,
    Fd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Rbf {
        /// Recompute the median bandwidth every this many iterations.
        #[serde(default)]
        bandwidth_every: Option<usize>,
    },
    Spectral {
        basis: BasisKind,
        /// Retained modes; for a 1D FD basis `null` keeps all of them.
        #[serde(default)]
        k: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleConfig {
    pub n: usize,
    pub init_lower: Coord,
    pub init_upper: Coord,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    Constant { h0: f64 },
    Decay { h0: f64, gamma: f64 },
}

impl ScheduleConfig {
    pub fn to_schedule(self) -> StepSchedule {
        match self {
            ScheduleConfig::Constant { h0 } => StepSchedule::Constant { h0 },
            ScheduleConfig::Decay { h0, gamma } => StepSchedule::Decay { h0, gamma },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDensityConfig {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub mu0: InitialDensityConfig,
    pub t_end: f64,
    pub dt: f64,
    pub record_every: f64,
    #[serde(default)]
    pub density_every: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub method: Method,
    pub target: TargetConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub kernel: Option<KernelConfig>,
    #[serde(default)]
    pub particles: Option<ParticleConfig>,
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default)]
    pub n_iters: Option<usize>,
    #[serde(default)]
    pub snapshot_every: Option<usize>,
    #[serde(default)]
    pub flow: Option<FlowConfig>,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub basis_cache: Option<String>,
}

/// Parses and resolves a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(
            if path.is_empty() { ".".into() } else { path },
            e.inner().to_string(),
        )
    })?;
    cfg.resolve()?;
    Ok(cfg)
}

fn require<T>(v: &Option<T>, path: &str, method: Method) -> Result<()> {
    if v.is_none() {
        return Err(Error::config(
            path,
            format!("required for method {method:?}"),
        ));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn build_target(&self) -> Result<TargetDistribution> {
        make_gaussian_mixture(self.target.to_spec())
    }

    /// Fills defaults and checks method-specific requirements.
    pub fn resolve(&mut self) -> Result<()> {
        self.target
            .to_spec()
            .validate()
            .map_err(|e| Error::config("target", e.to_string()))?;
        let grid = self.grid.build()?;
        let dim = self.dim();
        if grid.dim() != dim {
            return Err(Error::config(
                "grid",
                format!("{}D grid for a {dim}D target", grid.dim()),
            ));
        }
        let method = self.method;

        if self.kernel.is_none() {
            self.kernel = match method {
                Method::Svgd => Some(KernelConfig::Rbf {
                    bandwidth_every: None,
                }),
                Method::LawgdFlow => Some(KernelConfig::Spectral {
                    basis: BasisKind::Fd,
                    k: None,
                }),
                Method::Lawgd => {
                    return Err(Error::config("kernel", "lawgd requires a spectral kernel"))
                }
                Method::CsfFlow => None,
            };
        }
        match &mut self.kernel {
            Some(KernelConfig::Rbf { bandwidth_every }) => {
                if matches!(method, Method::Lawgd | Method::LawgdFlow) {
                    return Err(Error::config(
                        "kernel.kind",
                        "LAWGD requires a spectral kernel",
                    ));
                }
                let every = bandwidth_every.get_or_insert(1);
                if *every == 0 {
                    return Err(Error::config(
                        "kernel.bandwidth_every",
                        "must be at least 1",
                    ));
                }
            }
            Some(KernelConfig::Spectral { basis, k }) => match basis {
                BasisKind::Hermite => {
                    if method == Method::LawgdFlow {
                        return Err(Error::config(
                            "kernel.basis",
                            "density flows need an fd basis",
                        ));
                    }
                    let is_standard =
                        self.target.to_spec() == GaussianMixtureSpec::standard_gaussian(1);
                    if !is_standard {
                        return Err(Error::config(
                            "kernel.basis",
                            "the Hermite basis is the eigenbasis of the standard 1D Gaussian only",
                        ));
                    }
                    let kk = *k.get_or_insert(DEFAULT_HERMITE_MODES);
                    if kk == 0 || kk > MAX_HERMITE_MODES {
                        return Err(Error::config(
                            "kernel.k",
                            format!("must be in 1..={MAX_HERMITE_MODES}"),
                        ));
                    }
                }
                BasisKind::Fd => {
                    if dim == 2 && k.is_none() {
                        *k = Some(DEFAULT_FD_MODES_2D);
                    }
                    if *k == Some(0) {
                        return Err(Error::config("kernel.k", "must be positive"));
                    }
                }
            },
            None => {}
        }

        if method.is_flow() {
            require(&self.flow, "flow", method)?;
            if dim != 1 {
                return Err(Error::config("grid", "density flows are 1D only"));
            }
            let f = self.flow.as_ref().expect("checked");
            for (v, path) in [
                (f.t_end, "flow.t_end"),
                (f.dt, "flow.dt"),
                (f.record_every, "flow.record_every"),
                (f.mu0.variance, "flow.mu0.variance"),
            ] {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::config(path, format!("must be positive, got {v}")));
                }
            }
            if let Some(d) = f.density_every {
                if !(d > 0.0) {
                    return Err(Error::config("flow.density_every", "must be positive"));
                }
            }
        } else {
            require(&self.particles, "particles", method)?;
            require(&self.schedule, "schedule", method)?;
            require(&self.n_iters, "n_iters", method)?;
            let p = self.particles.as_ref().expect("checked");
            if p.n == 0 {
                return Err(Error::config("particles.n", "need at least one particle"));
            }
            let (lo, hi) = (p.init_lower.to_vec(dim), p.init_upper.to_vec(dim));
            if lo.len() != dim {
                return Err(Error::config(
                    "particles.init_lower",
                    format!("expected {dim} values"),
                ));
            }
            if hi.len() != dim {
                return Err(Error::config(
                    "particles.init_upper",
                    format!("expected {dim} values"),
                ));
            }
            if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
                return Err(Error::config(
                    "particles",
                    "init box needs init_lower < init_upper",
                ));
            }
            match self.schedule.expect("checked") {
                ScheduleConfig::Constant { h0 } | ScheduleConfig::Decay { h0, .. }
                    if !(h0 > 0.0) || !h0.is_finite() =>
                {
                    return Err(Error::config(
                        "schedule.h0",
                        format!("must be positive, got {h0}"),
                    ));
                }
                ScheduleConfig::Decay { gamma, .. } if !(0.0..=1.0).contains(&gamma) => {
                    return Err(Error::config(
                        "schedule.gamma",
                        format!("must be in [0, 1], got {gamma}"),
                    ));
                }
                _ => {}
            }
            self.snapshot_every.get_or_insert(100);
        }
        Ok(())
    }

    pub fn init_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let d = self.dim();
        self.particles
            .as_ref()
            .map(|p| (p.init_lower.to_vec(d), p.init_upper.to_vec(d)))
    }
}
