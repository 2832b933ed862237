//! Spectral basis of the generator `L = −Δ + ⟨∇V, ∇·⟩` and the kernel
//! `K_L(x, y) = Σ φᵢ(x) φᵢ(y) / λᵢ` built from it.
//!
//! On a grid the basis comes from the ground-state transform: `L` is conjugate
//! to the Schrödinger operator `−Δ + V_S` with `V_S = ¼‖∇V‖² − ½ΔV`, whose
//! finite-difference matrix (homogeneous Dirichlet closure) is symmetric and
//! banded. Eigenvectors `ψ` map back to eigenfunctions `φ = e^{V/2} ψ` with the
//! same eigenvalue. For the standard Gaussian the Hermite basis is exact.

use crate::error::{Error, Result};
use crate::grid::{self, fd_gradient, fd_laplacian, Grid, GridFunction};
use crate::linalg::{
    dense_eigen, lanczos_smallest, max_residual, tridiagonal_eigen, Eigenpairs, LanczosOptions,
    SymmetricOperator,
};
use crate::target::{normalized_pdf_on_grid, TargetDistribution};

/// Largest node count for which 2D problems use the dense solver.
pub const DENSE_NODE_LIMIT: usize = 1024;

/// Largest supported Hermite truncation.
pub const MAX_HERMITE_MODES: usize = 200;

/// `V_S = ¼‖∇V‖² − ½ΔV` tabulated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SchrodingerPotential(pub GridFunction);

pub fn schrodinger_potential(
    target: &TargetDistribution,
    grid: &Grid,
) -> Result<SchrodingerPotential> {
    let d = grid.dim();
    let mut p = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        grid.node_into(i, &mut p);
        target.grad_potential(&p, &mut g);
        let lap = target.laplacian_potential(&p);
        let v = 0.25 * g.iter().map(|x| x * x).sum::<f64>() - 0.5 * lap;
        if !v.is_finite() {
            return Err(Error::Numeric(format!(
                "Schrödinger potential is not finite at node {i} ({p:?})"
            )));
        }
        values.push(v);
    }
    Ok(SchrodingerPotential(GridFunction {
        grid: *grid,
        values,
    }))
}

/// `−ΔV + ½‖∇V‖²` at a point: the confinement criterion for a discrete
/// spectrum, used only as a heuristic check that it grows towards the edges.
pub fn confinement_potential(target: &TargetDistribution, x: &[f64]) -> f64 {
    let g = target.grad_potential_vec(x);
    0.5 * g.iter().map(|v| v * v).sum::<f64>() - target.laplacian_potential(x)
}

/// Does the confinement potential on the boundary exceed its interior minimum?
pub fn looks_confining(target: &TargetDistribution, grid: &Grid) -> bool {
    let values = grid.tabulate(|x| confinement_potential(target, x)).values;
    let interior_min = (0..grid.len())
        .filter(|&i| !grid.is_boundary(i))
        .map(|i| values[i])
        .fold(f64::INFINITY, f64::min);
    (0..grid.len())
        .filter(|&i| grid.is_boundary(i))
        .all(|i| values[i] > interior_min)
}

/// Finite-difference Schrödinger operator `−Δ_ε + V_S` with Dirichlet closure.
#[derive(Debug, Clone, PartialEq)]
pub enum SchrodingerMatrix {
    /// Diagonal `2/ε² + V_S`, off-diagonal `−1/ε²`.
    Tridiagonal { diag: Vec<f64>, off: Vec<f64> },
    /// Diagonal `4/ε² + V_S`, neighbour coupling `−1/ε²`; row-major nodes.
    FivePoint {
        nx: usize,
        ny: usize,
        diag: Vec<f64>,
        off: f64,
    },
}

pub fn build_schrodinger_matrix(vs: &SchrodingerPotential) -> SchrodingerMatrix {
    let f = &vs.0;
    let inv = 1.0 / (f.grid.spacing() * f.grid.spacing());
    match f.grid {
        Grid::One(g) => SchrodingerMatrix::Tridiagonal {
            diag: f.values.iter().map(|v| 2.0 * inv + v).collect(),
            off: vec![-inv; g.n - 1],
        },
        Grid::Two(g) => SchrodingerMatrix::FivePoint {
            nx: g.x.n,
            ny: g.y.n,
            diag: f.values.iter().map(|v| 4.0 * inv + v).collect(),
            off: -inv,
        },
    }
}

impl SymmetricOperator for SchrodingerMatrix {
    fn dim(&self) -> usize {
        match self {
            SchrodingerMatrix::Tridiagonal { diag, .. } => diag.len(),
            SchrodingerMatrix::FivePoint { diag, .. } => diag.len(),
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        match self {
            SchrodingerMatrix::Tridiagonal { diag, off } => {
                let n = diag.len();
                for i in 0..n {
                    let mut s = diag[i] * x[i];
                    if i > 0 {
                        s += off[i - 1] * x[i - 1];
                    }
                    if i + 1 < n {
                        s += off[i] * x[i + 1];
                    }
                    y[i] = s;
                }
            }
            SchrodingerMatrix::FivePoint { nx, ny, diag, off } => {
                let (nx, ny) = (*nx, *ny);
                for iy in 0..ny {
                    for ix in 0..nx {
                        let c = iy * nx + ix;
                        let mut nb = 0.0;
                        if ix > 0 {
                            nb += x[c - 1];
                        }
                        if ix + 1 < nx {
                            nb += x[c + 1];
                        }
                        if iy > 0 {
                            nb += x[c - nx];
                        }
                        if iy + 1 < ny {
                            nb += x[c + nx];
                        }
                        y[c] = diag[c] * x[c] + off * nb;
                    }
                }
            }
        }
    }

    fn bandwidth(&self) -> usize {
        match self {
            SchrodingerMatrix::Tridiagonal { .. } => 1,
            SchrodingerMatrix::FivePoint { nx, .. } => *nx,
        }
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            SchrodingerMatrix::Tridiagonal { diag, off } => match i.abs_diff(j) {
                0 => diag[i],
                1 => off[i.min(j)],
                _ => 0.0,
            },
            SchrodingerMatrix::FivePoint { nx, diag, off, .. } => {
                let d = i.abs_diff(j);
                if d == 0 {
                    diag[i]
                } else if d == *nx || (d == 1 && i.min(j) % nx != nx - 1) {
                    *off
                } else {
                    0.0
                }
            }
        }
    }

    fn inf_norm(&self) -> f64 {
        match self {
            SchrodingerMatrix::Tridiagonal { diag, off } => (0..diag.len())
                .map(|i| {
                    diag[i].abs()
                        + if i > 0 { off[i - 1].abs() } else { 0.0 }
                        + off.get(i).map_or(0.0, |v| v.abs())
                })
                .fold(0.0, f64::max),
            SchrodingerMatrix::FivePoint { diag, off, .. } => diag
                .iter()
                .map(|d| d.abs() + 4.0 * off.abs())
                .fold(0.0, f64::max),
        }
    }
}

/// The `k` algebraically smallest eigenpairs with unit-norm eigenvectors.
///
/// 1D matrices are fully decomposed by implicit QL; 2D matrices use the dense
/// solver up to [`DENSE_NODE_LIMIT`] nodes and shift-invert Lanczos beyond.
pub fn eigendecompose(matrix: &SchrodingerMatrix, k: usize) -> Result<Eigenpairs> {
    let n = matrix.dim();
    if k == 0 || k > n {
        return Err(Error::Solver(format!(
            "requested {k} eigenpairs of a {n}-node operator"
        )));
    }
    let mut pairs = match matrix {
        SchrodingerMatrix::Tridiagonal { diag, off } => tridiagonal_eigen(diag, off)?,
        SchrodingerMatrix::FivePoint { .. } if n <= DENSE_NODE_LIMIT => dense_eigen(matrix, k),
        SchrodingerMatrix::FivePoint { .. } => {
            lanczos_smallest(matrix, k, &LanczosOptions::default())?
        }
    };
    pairs.values.truncate(k);
    pairs.vectors.truncate(k);
    let worst = max_residual(matrix, &pairs);
    let bound = 1e-8 * matrix.inf_norm();
    if worst > bound {
        return Err(Error::Solver(format!(
            "eigenpair residual {worst:.3e} exceeds {bound:.3e}"
        )));
    }
    Ok(pairs)
}

/// Eigenfunctions tabulated on a grid, stored node-major so that the values
/// of all modes at one node are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct GridBasis {
    pub grid: Grid,
    pub eigenvalues: Vec<f64>,
    /// `phi[node * k + m]`
    pub phi: Vec<f64>,
    /// `grad[(node * dim + axis) * k + m]`
    pub grad: Vec<f64>,
}

impl GridBasis {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Values of mode `m` at every node.
    pub fn mode(&self, m: usize) -> GridFunction {
        let k = self.k();
        GridFunction {
            grid: self.grid,
            values: (0..self.grid.len()).map(|i| self.phi[i * k + m]).collect(),
        }
    }

    /// Gradient component `axis` of mode `m` at every node.
    pub fn mode_gradient(&self, m: usize, axis: usize) -> Vec<f64> {
        let (k, d) = (self.k(), self.grid.dim());
        (0..self.grid.len())
            .map(|i| self.grad[(i * d + axis) * k + m])
            .collect()
    }

    /// Keeps only the first `k` modes.
    pub fn truncated(&self, k: usize) -> GridBasis {
        let (old, d, n) = (self.k(), self.grid.dim(), self.grid.len());
        let k = k.min(old);
        let mut phi = Vec::with_capacity(n * k);
        let mut grad = Vec::with_capacity(n * d * k);
        for i in 0..n {
            phi.extend_from_slice(&self.phi[i * old..i * old + k]);
            for a in 0..d {
                let s = (i * d + a) * old;
                grad.extend_from_slice(&self.grad[s..s + k]);
            }
        }
        GridBasis {
            grid: self.grid,
            eigenvalues: self.eigenvalues[..k].to_vec(),
            phi,
            grad,
        }
    }

    fn features(&self, x: &[f64], phi: &mut [f64], grad: &mut [f64]) -> Result<()> {
        let (w, m) =
            grid::stencil(&self.grid, x).ok_or_else(|| Error::OutOfDomain { coord: x.to_vec() })?;
        let (k, d) = (self.k(), self.grid.dim());
        phi.iter_mut().for_each(|v| *v = 0.0);
        grad.iter_mut().for_each(|v| *v = 0.0);
        for &(node, wt) in &w[..m] {
            if wt == 0.0 {
                continue;
            }
            let src = &self.phi[node * k..(node + 1) * k];
            phi.iter_mut().zip(src).for_each(|(p, s)| *p += wt * s);
            let gsrc = &self.grad[node * d * k..(node + 1) * d * k];
            grad.iter_mut().zip(gsrc).for_each(|(g, s)| *g += wt * s);
        }
        Ok(())
    }
}

/// Drops the ground mode and non-positive eigenvalues, back-transforms
/// `φ = e^{V/2} ψ`, normalizes to `∫ φ² dπ̂ = 1`, fixes signs and tabulates
/// finite-difference gradients.
pub fn assemble_basis(
    target: &TargetDistribution,
    grid: &Grid,
    eigenpairs: &Eigenpairs,
) -> Result<GridBasis> {
    let n = grid.len();
    if eigenpairs.vectors.iter().any(|v| v.len() != n) {
        return Err(Error::InvalidGrid(
            "eigenvectors do not match the grid".into(),
        ));
    }
    let pi = normalized_pdf_on_grid(target, grid)?;
    let vol = grid.cell_volume();
    // φ = ψ / sqrt(π̂ vol) equals e^{V/2} ψ up to one common constant, and has
    // unit L²(π̂) norm whenever ψ has unit Euclidean norm.
    let scale: Vec<f64> = pi
        .values()
        .iter()
        .map(|&p| if p > 0.0 { 1.0 / (p * vol).sqrt() } else { 0.0 })
        .collect();
    if scale.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("back-transform overflowed".into()));
    }

    let mut eigenvalues = Vec::new();
    let mut modes: Vec<Vec<f64>> = Vec::new();
    for (idx, (&lambda, psi)) in eigenpairs
        .values
        .iter()
        .zip(&eigenpairs.vectors)
        .enumerate()
    {
        if idx == 0 || lambda <= 1e-8 {
            continue;
        }
        let mut phi: Vec<f64> = psi.iter().zip(&scale).map(|(p, s)| p * s).collect();
        let norm2: f64 = phi
            .iter()
            .zip(pi.values())
            .map(|(f, p)| f * f * p)
            .sum::<f64>()
            * vol;
        let norm = norm2.sqrt();
        // Sign fixed by the largest |ψ| node: φ itself is dominated by
        // amplified round-off in the far tails where π̂ underflows towards 0.
        let (argmax, _) = psi.iter().enumerate().fold((0, 0.0), |(bi, bv), (i, v)| {
            if v.abs() > bv {
                (i, v.abs())
            } else {
                (bi, bv)
            }
        });
        let sign = if psi[argmax] < 0.0 { -1.0 } else { 1.0 };
        phi.iter_mut().for_each(|v| *v *= sign / norm);
        eigenvalues.push(lambda);
        modes.push(phi);
    }
    if modes.is_empty() {
        return Err(Error::EmptyBasis);
    }

    let (k, d) = (modes.len(), grid.dim());
    let mut phi = vec![0.0; n * k];
    let mut grad = vec![0.0; n * d * k];
    for (m, values) in modes.into_iter().enumerate() {
        let f = GridFunction {
            grid: *grid,
            values,
        };
        let g = fd_gradient(&f);
        for i in 0..n {
            phi[i * k + m] = f.values[i];
            for a in 0..d {
                grad[(i * d + a) * k + m] = g.components[a][i];
            }
        }
    }
    Ok(GridBasis {
        grid: *grid,
        eigenvalues,
        phi,
        grad,
    })
}

/// Finite-difference basis with `k` retained modes (`None`: all of them).
pub fn build_fd_basis(
    target: &TargetDistribution,
    grid: &Grid,
    k: Option<usize>,
) -> Result<GridBasis> {
    let vs = schrodinger_potential(target, grid)?;
    let matrix = build_schrodinger_matrix(&vs);
    let wanted = match (k, grid) {
        (Some(k), _) => (k + 1).min(grid.len()),
        (None, Grid::One(_)) => grid.len(),
        (None, Grid::Two(_)) => 101.min(grid.len()),
    };
    let pairs = eigendecompose(&matrix, wanted)?;
    let basis = assemble_basis(target, grid, &pairs)?;
    Ok(match k {
        Some(k) => basis.truncated(k),
        None => basis,
    })
}

/// Normalized probabilists' Hermite functions `φₙ = Hₙ/√(n!)`, `λₙ = n`,
/// for `n = 1..=k`; the exact basis for the 1D standard Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermiteBasis {
    k: usize,
}

pub fn hermite_basis(k: usize) -> Result<HermiteBasis> {
    if k == 0 || k > MAX_HERMITE_MODES {
        return Err(Error::InvalidSpec(format!(
            "Hermite basis needs 1 <= k <= {MAX_HERMITE_MODES}, got {k}"
        )));
    }
    Ok(HermiteBasis { k })
}

impl HermiteBasis {
    pub fn k(&self) -> usize {
        self.k
    }

    /// `φ₁..φ_k` and their derivatives at `x` via
    /// `φₙ₊₁ = (x φₙ − √n φₙ₋₁)/√(n+1)` and `φₙ' = √n φₙ₋₁`.
    pub fn features(&self, x: f64, phi: &mut [f64], grad: &mut [f64]) {
        let mut prev = 1.0; // φ₀
        let mut cur = x; // φ₁
        for n in 1..=self.k {
            phi[n - 1] = cur;
            grad[n - 1] = (n as f64).sqrt() * prev;
            let next = (x * cur - (n as f64).sqrt() * prev) / ((n + 1) as f64).sqrt();
            prev = cur;
            cur = next;
        }
    }
}

/// Eigenpairs of the generator, tabulated or analytic.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralBasis {
    Grid(GridBasis),
    Hermite(HermiteBasis),
}

impl SpectralBasis {
    pub fn k(&self) -> usize {
        match self {
            SpectralBasis::Grid(b) => b.k(),
            SpectralBasis::Hermite(h) => h.k,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SpectralBasis::Grid(b) => b.grid.dim(),
            SpectralBasis::Hermite(_) => 1,
        }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        match self {
            SpectralBasis::Grid(b) => b.eigenvalues.clone(),
            SpectralBasis::Hermite(h) => (1..=h.k).map(|n| n as f64).collect(),
        }
    }

    /// Grid on which the basis is tabulated, if any.
    pub fn domain(&self) -> Option<&Grid> {
        match self {
            SpectralBasis::Grid(b) => Some(&b.grid),
            SpectralBasis::Hermite(_) => None,
        }
    }

    /// Mode values (`k`) and gradients (`k * dim`, axis-major) at `x`.
    pub fn features(&self, x: &[f64], phi: &mut [f64], grad: &mut [f64]) -> Result<()> {
        match self {
            SpectralBasis::Grid(b) => b.features(x, phi, grad),
            SpectralBasis::Hermite(h) => {
                h.features(x[0], phi, grad);
                Ok(())
            }
        }
    }

    fn features_vec(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut phi = vec![0.0; self.k()];
        let mut grad = vec![0.0; self.k() * self.dim()];
        self.features(x, &mut phi, &mut grad)?;
        Ok((phi, grad))
    }
}

/// `K_L(x, y) = Σ φᵢ(x) φᵢ(y) / λᵢ` over the retained modes.
pub fn spectral_kernel_eval(basis: &SpectralBasis, x: &[f64], y: &[f64]) -> Result<f64> {
    let lambda = basis.eigenvalues();
    let (px, _) = basis.features_vec(x)?;
    let (py, _) = basis.features_vec(y)?;
    Ok(px
        .iter()
        .zip(&py)
        .zip(&lambda)
        .map(|((a, b), l)| a * b / l)
        .sum())
}

/// `∇₁K_L(x, y) = Σ ∇φᵢ(x) φᵢ(y) / λᵢ`.
pub fn spectral_kernel_grad1(basis: &SpectralBasis, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let lambda = basis.eigenvalues();
    let k = basis.k();
    let (_, gx) = basis.features_vec(x)?;
    let (py, _) = basis.features_vec(y)?;
    Ok((0..basis.dim())
        .map(|a| (0..k).map(|m| gx[a * k + m] * py[m] / lambda[m]).sum())
        .collect())
}

/// Relative Rayleigh residuals
/// `Σ_interior (Lφ − λφ)² π̂ / (λ² Σ φ² π̂)` for the first `count` modes,
/// with `Lφ = −Δ_ε φ + ∇V·∇φ` assembled from grid stencils.
pub fn rayleigh_residuals(
    target: &TargetDistribution,
    basis: &GridBasis,
    count: usize,
) -> Result<Vec<f64>> {
    let grid = basis.grid;
    let pi = normalized_pdf_on_grid(target, &grid)?;
    let d = grid.dim();
    let grad_v: Vec<Vec<f64>> = (0..grid.len())
        .map(|i| target.grad_potential_vec(&grid.node(i)))
        .collect();
    Ok((0..count.min(basis.k()))
        .map(|m| {
            let phi = basis.mode(m);
            let lap = fd_laplacian(&phi);
            let lambda = basis.eigenvalues[m];
            let grads: Vec<Vec<f64>> = (0..d).map(|a| basis.mode_gradient(m, a)).collect();
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..grid.len() {
                if grid.is_boundary(i) {
                    continue;
                }
                let drift: f64 = (0..d).map(|a| grad_v[i][a] * grads[a][i]).sum();
                let l_phi = -lap.values[i] + drift;
                num += (l_phi - lambda * phi.values[i]).powi(2) * pi.values()[i];
                den += (lambda * phi.values[i]).powi(2) * pi.values()[i];
            }
            num / den
        })
        .collect())
}
