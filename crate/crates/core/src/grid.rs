//! Uniform 1D/2D grids, finite-difference stencils and interpolation.
//!
//! 2D grids are tensor products with row-major node indexing
//! `index = iy * nx + ix` and a single spacing shared by both axes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on `[lower, upper]` with `n` nodes including both endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(lower: f64, upper: f64, n: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || upper <= lower {
            return Err(Error::InvalidGrid(format!(
                "need finite lower < upper, got [{lower}, {upper}]"
            )));
        }
        if n < 3 {
            return Err(Error::InvalidGrid(format!("need n >= 3 nodes, got {n}")));
        }
        Ok(Grid1D { lower, upper, n })
    }

    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.n - 1) as f64
    }

    /// Node `i`, computed so that grids symmetric about 0 have exactly
    /// antisymmetric nodes.
    pub fn node(&self, i: usize) -> f64 {
        let m = (self.n - 1) as f64;
        let i = i as f64;
        ((m - i) * self.lower + i * self.upper) / m
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        let slack = 1e-12 * (self.upper - self.lower);
        x >= self.lower - slack && x <= self.upper + slack
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }

    /// Cell index `i` and fractional offset `t` in `[0, 1]` such that
    /// `x = node(i) + t * spacing`. Assumes `x` is inside the domain.
    fn locate(&self, x: f64) -> (usize, f64) {
        let s = ((x - self.lower) / self.spacing()).clamp(0.0, (self.n - 1) as f64);
        let i = (s.floor() as usize).min(self.n - 2);
        (i, s - i as f64)
    }
}

/// Tensor-product grid with equal spacing on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub x: Grid1D,
    pub y: Grid1D,
}

impl Grid2D {
    pub fn new(x: Grid1D, y: Grid1D) -> Result<Self> {
        let (ex, ey) = (x.spacing(), y.spacing());
        if (ex - ey).abs() > 1e-12 * ex.max(ey) {
            return Err(Error::InvalidGrid(format!(
                "2D grids need equal spacing on both axes, got {ex} and {ey}"
            )));
        }
        Ok(Grid2D { x, y })
    }

    pub fn spacing(&self) -> f64 {
        self.x.spacing()
    }

    pub fn len(&self) -> usize {
        self.x.n * self.y.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A 1D or 2D uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Grid {
    One(Grid1D),
    Two(Grid2D),
}

impl From<Grid1D> for Grid {
    fn from(g: Grid1D) -> Self {
        Grid::One(g)
    }
}

impl From<Grid2D> for Grid {
    fn from(g: Grid2D) -> Self {
        Grid::Two(g)
    }
}

impl Grid {
    pub fn dim(&self) -> usize {
        match self {
            Grid::One(_) => 1,
            Grid::Two(_) => 2,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Grid::One(g) => g.n,
            Grid::Two(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        match self {
            Grid::One(g) => g.spacing(),
            Grid::Two(g) => g.spacing(),
        }
    }

    /// Quadrature weight of a single node (`spacing^dim`).
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim() as i32)
    }

    pub fn axes(&self) -> Vec<Grid1D> {
        match self {
            Grid::One(g) => vec![*g],
            Grid::Two(g) => vec![g.x, g.y],
        }
    }

    /// Writes the coordinates of node `index` into `out`.
    pub fn node_into(&self, index: usize, out: &mut [f64]) {
        match self {
            Grid::One(g) => out[0] = g.node(index),
            Grid::Two(g) => {
                out[0] = g.x.node(index % g.x.n);
                out[1] = g.y.node(index / g.x.n);
            }
        }
    }

    pub fn node(&self, index: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.node_into(index, &mut p);
        p
    }

    /// Is this node on the domain boundary?
    pub fn is_boundary(&self, index: usize) -> bool {
        match self {
            Grid::One(g) => index == 0 || index == g.n - 1,
            Grid::Two(g) => {
                let (ix, iy) = (index % g.x.n, index / g.x.n);
                ix == 0 || iy == 0 || ix == g.x.n - 1 || iy == g.y.n - 1
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.axes().iter().zip(x).all(|(a, &c)| a.contains(c))
    }

    /// Clamps `x` into the domain in place; returns whether anything moved.
    pub fn clamp_point(&self, x: &mut [f64]) -> bool {
        let mut moved = false;
        for (a, c) in self.axes().iter().zip(x.iter_mut()) {
            let clamped = a.clamp(*c);
            if clamped != *c {
                *c = clamped;
                moved = true;
            }
        }
        moved
    }

    /// Per-axis domain centre and half-width.
    pub fn center_and_half_width(&self) -> (Vec<f64>, Vec<f64>) {
        self.axes()
            .iter()
            .map(|a| (0.5 * (a.lower + a.upper), 0.5 * (a.upper - a.lower)))
            .unzip()
    }

    /// Tabulates `f` at every node.
    pub fn tabulate(&self, mut f: impl FnMut(&[f64]) -> f64) -> GridFunction {
        let mut p = vec![0.0; self.dim()];
        let values = (0..self.len())
            .map(|i| {
                self.node_into(i, &mut p);
                f(&p)
            })
            .collect();
        GridFunction {
            grid: *self,
            values,
        }
    }
}

/// Real values tabulated at every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "grid has {} nodes but {} values were given",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite value at node {i}")));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        GridFunction {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    /// Grid inner product `sum f g spacing^d`.
    pub fn dot(&self, other: &GridFunction) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        s * self.grid.cell_volume()
    }

    pub fn interpolate(&self, x: &[f64]) -> Result<f64> {
        interpolate(self, x)
    }
}

/// Vector-valued grid function: one `GridFunction`-sized slice per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorGridFunction {
    pub grid: Grid,
    pub components: Vec<Vec<f64>>,
}

/// Three-point (1D) or five-point (2D) Laplacian with Neumann ghost cells:
/// the out-of-domain neighbour takes the boundary node's value.
pub fn fd_laplacian(f: &GridFunction) -> GridFunction {
    match f.grid {
        Grid::One(_) => fd_laplacian_1d(f),
        Grid::Two(_) => fd_laplacian_2d(f),
    }
}

pub fn fd_laplacian_1d(f: &GridFunction) -> GridFunction {
    let Grid::One(g) = f.grid else {
        panic!("fd_laplacian_1d called on a 2D grid function");
    };
    let inv = 1.0 / (g.spacing() * g.spacing());
    let v = &f.values;
    let n = v.len();
    let values = (0..n)
        .map(|i| {
            let left = if i == 0 { v[0] } else { v[i - 1] };
            let right = if i == n - 1 { v[n - 1] } else { v[i + 1] };
            (left + right - 2.0 * v[i]) * inv
        })
        .collect();
    GridFunction {
        grid: f.grid,
        values,
    }
}

pub fn fd_laplacian_2d(f: &GridFunction) -> GridFunction {
    let Grid::Two(g) = f.grid else {
        panic!("fd_laplacian_2d called on a 1D grid function");
    };
    let (nx, ny) = (g.x.n, g.y.n);
    let inv = 1.0 / (g.spacing() * g.spacing());
    let v = &f.values;
    let mut values = vec![0.0; v.len()];
    for iy in 0..ny {
        for ix in 0..nx {
            let c = iy * nx + ix;
            let w = if ix == 0 { v[c] } else { v[c - 1] };
            let e = if ix == nx - 1 { v[c] } else { v[c + 1] };
            let s = if iy == 0 { v[c] } else { v[c - nx] };
            let n = if iy == ny - 1 { v[c] } else { v[c + nx] };
            values[c] = (w + e + s + n - 4.0 * v[c]) * inv;
        }
    }
    GridFunction {
        grid: f.grid,
        values,
    }
}

/// Derivative along a strided line of `len` samples: central differences in
/// the interior, second-order one-sided differences at both ends.
fn diff_line(v: &[f64], start: usize, stride: usize, len: usize, h: f64, out: &mut [f64]) {
    let at = |k: usize| v[start + k * stride];
    let inv2h = 0.5 / h;
    out[start] = (-3.0 * at(0) + 4.0 * at(1) - at(2)) * inv2h;
    for k in 1..len - 1 {
        out[start + k * stride] = (at(k + 1) - at(k - 1)) * inv2h;
    }
    out[start + (len - 1) * stride] = (3.0 * at(len - 1) - 4.0 * at(len - 2) + at(len - 3)) * inv2h;
}

/// Gradient by central differences (second-order one-sided at the boundary).
pub fn fd_gradient(f: &GridFunction) -> VectorGridFunction {
    let h = f.grid.spacing();
    match f.grid {
        Grid::One(g) => {
            let mut d = vec![0.0; g.n];
            diff_line(&f.values, 0, 1, g.n, h, &mut d);
            VectorGridFunction {
                grid: f.grid,
                components: vec![d],
            }
        }
        Grid::Two(g) => {
            let (nx, ny) = (g.x.n, g.y.n);
            let mut dx = vec![0.0; nx * ny];
            let mut dy = vec![0.0; nx * ny];
            for iy in 0..ny {
                diff_line(&f.values, iy * nx, 1, nx, h, &mut dx);
            }
            for ix in 0..nx {
                diff_line(&f.values, ix, nx, ny, h, &mut dy);
            }
            VectorGridFunction {
                grid: f.grid,
                components: vec![dx, dy],
            }
        }
    }
}

/// Interpolation weights for a point: up to four `(node, weight)` pairs.
/// Returns `None` when the point is outside the domain.
pub(crate) fn stencil(grid: &Grid, x: &[f64]) -> Option<([(usize, f64); 4], usize)> {
    if !grid.contains(x) {
        return None;
    }
    match grid {
        Grid::One(g) => {
            let (i, t) = g.locate(x[0]);
            Some(([(i, 1.0 - t), (i + 1, t), (0, 0.0), (0, 0.0)], 2))
        }
        Grid::Two(g) => {
            let (ix, tx) = g.x.locate(x[0]);
            let (iy, ty) = g.y.locate(x[1]);
            let nx = g.x.n;
            let c = iy * nx + ix;
            Some((
                [
                    (c, (1.0 - tx) * (1.0 - ty)),
                    (c + 1, tx * (1.0 - ty)),
                    (c + nx, (1.0 - tx) * ty),
                    (c + nx + 1, tx * ty),
                ],
                4,
            ))
        }
    }
}

/// Piecewise-linear (1D) or bilinear (2D) interpolation.
pub fn interpolate(f: &GridFunction, x: &[f64]) -> Result<f64> {
    let (w, m) = stencil(&f.grid, x).ok_or_else(|| Error::OutOfDomain { coord: x.to_vec() })?;
    Ok(w[..m].iter().map(|&(i, wt)| wt * f.values[i]).sum())
}
