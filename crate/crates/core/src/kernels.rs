//! Kernels used by the particle dynamics: RBF with the median bandwidth
//! heuristic, and the spectral kernel `K_L`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::spectral::SpectralBasis;

/// `med² / ln N` with `med` the median pairwise distance; falls back to 1
/// when all points coincide. `positions` is a flat `N × dim` array.
pub fn rbf_median_bandwidth(positions: &[f64], dim: usize) -> Result<f64> {
    let n = positions.len() / dim;
    if n < 2 {
        return Err(Error::InvalidSpec(format!(
            "median bandwidth needs at least 2 particles, got {n}"
        )));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let xi = &positions[i * dim..(i + 1) * dim];
        for j in i + 1..n {
            let xj = &positions[j * dim..(j + 1) * dim];
            dists.push(sq_dist(xi, xj).sqrt());
        }
    }
    let m = dists.len();
    let (below, &mut upper_mid, _) = dists.select_nth_unstable_by(m / 2, f64::total_cmp);
    let med = if m % 2 == 1 {
        upper_mid
    } else {
        let lower_mid = below.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower_mid + upper_mid)
    };
    if med == 0.0 {
        return Ok(1.0);
    }
    Ok(med * med / (n as f64).ln())
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `exp(−‖x − y‖² / bw)`.
pub fn rbf_eval(x: &[f64], y: &[f64], bw: f64) -> f64 {
    (-sq_dist(x, y) / bw).exp()
}

/// `∇₂K(x, y) = (2/bw)(x − y) K(x, y)`.
pub fn rbf_grad2(x: &[f64], y: &[f64], bw: f64, out: &mut [f64]) {
    let k = rbf_eval(x, y, bw);
    for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
        *o = 2.0 / bw * (a - b) * k;
    }
}

/// Kernel handle shared by the particle updates.
#[derive(Debug, Clone)]
pub enum Kernel {
    Rbf { bandwidth: f64 },
    Spectral(Arc<SpectralBasis>),
}

impl Kernel {
    pub fn spectral(basis: SpectralBasis) -> Self {
        Kernel::Spectral(Arc::new(basis))
    }

    /// Clamps `x` to the tabulation domain of a grid-backed spectral kernel;
    /// returns whether it moved. RBF and Hermite kernels never clamp.
    pub fn clamp(&self, x: &mut [f64]) -> bool {
        match self {
            Kernel::Spectral(b) => b.domain().is_some_and(|g| g.clamp_point(x)),
            Kernel::Rbf { .. } => false,
        }
    }

    fn clamped(&self, x: &[f64]) -> Vec<f64> {
        let mut p = x.to_vec();
        self.clamp(&mut p);
        p
    }

    fn check_bandwidth(bw: f64) {
        assert!(bw > 0.0, "RBF bandwidth must be positive, got {bw}");
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Kernel::Rbf { bandwidth } => {
                Self::check_bandwidth(*bandwidth);
                rbf_eval(x, y, *bandwidth)
            }
            Kernel::Spectral(b) => {
                crate::spectral::spectral_kernel_eval(b, &self.clamped(x), &self.clamped(y))
                    .expect("clamped points lie in the domain")
            }
        }
    }

    /// Gradient in the first argument.
    pub fn grad1(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match self {
            Kernel::Rbf { bandwidth } => {
                Self::check_bandwidth(*bandwidth);
                rbf_grad2(y, x, *bandwidth, out)
            }
            Kernel::Spectral(b) => {
                let g =
                    crate::spectral::spectral_kernel_grad1(b, &self.clamped(x), &self.clamped(y))
                        .expect("clamped points lie in the domain");
                out.copy_from_slice(&g);
            }
        }
    }

    /// `K(x, y)` together with `∇₂K(x, y)` written to `out`.
    pub fn eval_grad2(&self, x: &[f64], y: &[f64], out: &mut [f64]) -> f64 {
        match self {
            Kernel::Rbf { bandwidth } => {
                Self::check_bandwidth(*bandwidth);
                let k = rbf_eval(x, y, *bandwidth);
                for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
                    *o = 2.0 / bandwidth * (a - b) * k;
                }
                k
            }
            Kernel::Spectral(_) => {
                self.grad2(x, y, out);
                self.eval(x, y)
            }
        }
    }

    /// Gradient in the second argument.
    pub fn grad2(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match self {
            Kernel::Rbf { bandwidth } => {
                Self::check_bandwidth(*bandwidth);
                rbf_grad2(x, y, *bandwidth, out)
            }
            Kernel::Spectral(_) => self.grad1(y, x, out),
        }
    }
}
