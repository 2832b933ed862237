//! Built-in experiment configurations.
//!
//! Step sizes, particle counts and the 2D initialization box are not given
//! for every experiment, so those values were picked by coarse search; the
//! descriptions say which values are tuned.

use crate::config::{parse_config, ExperimentConfig};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub json: &'static str,
}

impl Preset {
    pub fn config(&self) -> Result<ExperimentConfig> {
        parse_config(self.json)
    }
}

const PRESETS: &[Preset] = &[
    Preset {
        name: "gaussmix3-lawgd",
        description: "LAWGD on 0.4 N(-3,1) + 0.2 N(0,1) + 0.4 N(4,2) with the FD kernel (256 nodes on [-14,14], all modes), 5000 iterations from U[1,4]; N = 200 and h = 0.05 are tuned",
        json: r#"{
  "name": "gaussmix3-lawgd",
  "method": "lawgd",
  "target": {"type": "gaussian_mixture", "weights": [0.4, 0.2, 0.4], "means": [-3, 0, 4], "variances": [1, 1, 2]},
  "grid": {"lower": -14, "upper": 14, "n": 256},
  "kernel": {"kind": "spectral", "basis": "fd"},
  "particles": {"n": 200, "init_lower": 1, "init_upper": 4, "seed": 0},
  "schedule": {"kind": "constant", "h0": 0.05},
  "n_iters": 5000,
  "snapshot_every": 100
}"#,
    },
    Preset {
        name: "gaussmix3-svgd",
        description: "SVGD with the median-bandwidth RBF kernel on the 3-mode mixture, 5000 iterations from U[1,4]; N = 200 and h = 0.2 are tuned",
        json: r#"{
  "name": "gaussmix3-svgd",
  "method": "svgd",
  "target": {"type": "gaussian_mixture", "weights": [0.4, 0.2, 0.4], "means": [-3, 0, 4], "variances": [1, 1, 2]},
  "grid": {"lower": -14, "upper": 14, "n": 256},
  "kernel": {"kind": "rbf", "bandwidth_every": 1},
  "particles": {"n": 200, "init_lower": 1, "init_upper": 4, "seed": 0},
  "schedule": {"kind": "constant", "h0": 0.2},
  "n_iters": 5000,
  "snapshot_every": 100
}"#,
    },
    Preset {
        name: "hermite-gaussian",
        description: "LAWGD on N(0,1) with the first 150 Hermite modes, 2000 iterations from U[2.5,4.5]; N = 100 and h = 0.0015 are tuned (steps above ~0.002 diverge on the first update)",
        json: r#"{
  "name": "hermite-gaussian",
  "method": "lawgd",
  "target": {"type": "gaussian_mixture", "weights": [1], "means": [0], "variances": [1]},
  "grid": {"lower": -8, "upper": 8, "n": 801},
  "kernel": {"kind": "spectral", "basis": "hermite", "k": 150},
  "particles": {"n": 100, "init_lower": 2.5, "init_upper": 4.5, "seed": 0},
  "schedule": {"kind": "constant", "h0": 0.0015},
  "n_iters": 2000,
  "snapshot_every": 50
}"#,
    },
    Preset {
        name: "gauss2d-mix",
        description: "LAWGD on 0.5 N((-1,-1), I) + 0.5 N((1,1), I) with the bottom 100 FD modes on a 128x128 grid over [-6,6]^2, 50 particles; init box [0,2]^2, h = 0.01 and 2000 iterations are tuned",
        json: r#"{
  "name": "gauss2d-mix",
  "method": "lawgd",
  "target": {"type": "gaussian_mixture", "weights": [0.5, 0.5], "means": [[-1, -1], [1, 1]], "variances": [1, 1]},
  "grid": {"x": {"lower": -6, "upper": 6, "n": 128}, "y": {"lower": -6, "upper": 6, "n": 128}},
  "kernel": {"kind": "spectral", "basis": "fd", "k": 100},
  "particles": {"n": 50, "init_lower": [0, 0], "init_upper": [2, 2], "seed": 0},
  "schedule": {"kind": "constant", "h0": 0.01},
  "n_iters": 2000,
  "snapshot_every": 100,
  "basis_cache": "cache/gauss2d-mix.basis"
}"#,
    },
    Preset {
        name: "csf-theorem-check",
        description: "Chi-squared flow density solver on N(0,1) from N(1,1) (512 nodes on [-6,7], T = 10); checks the exponential and polynomial decay bounds",
        json: r#"{
  "name": "csf-theorem-check",
  "method": "csf_flow",
  "target": {"type": "gaussian_mixture", "weights": [1], "means": [0], "variances": [1]},
  "grid": {"lower": -6, "upper": 7, "n": 512},
  "flow": {"mu0": {"mean": 1, "variance": 1}, "t_end": 10, "dt": 0.01, "record_every": 0.01, "density_every": 0.5}
}"#,
    },
    Preset {
        name: "lawgd-flow-check",
        description: "LAWGD density flow on N(0,1) from N(1,1) with the full FD mode set (256 nodes on [-6,7], T = 6); checks dKL/dt = -chi2 and the decay rate",
        json: r#"{
  "name": "lawgd-flow-check",
  "method": "lawgd_flow",
  "target": {"type": "gaussian_mixture", "weights": [1], "means": [0], "variances": [1]},
  "grid": {"lower": -6, "upper": 7, "n": 256},
  "kernel": {"kind": "spectral", "basis": "fd"},
  "flow": {"mu0": {"mean": 1, "variance": 1}, "t_end": 6, "dt": 0.01, "record_every": 0.01, "density_every": 0.5}
}"#,
    },
];

pub fn list_presets() -> &'static [Preset] {
    PRESETS
}

pub fn find_preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}
