//! Symmetric eigensolvers for the discretized Schrödinger operator.
//!
//! * `tridiagonal_eigen`: implicit-shift QL on a symmetric tridiagonal matrix.
//! * `lanczos_smallest`: shift-invert Lanczos with full reorthogonalization,
//!   using a banded Cholesky factorization of `A - σI`.
//! * `dense_eigen`: dense fallback for small problems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Eigenpairs sorted by ascending eigenvalue; `vectors[i]` pairs with `values[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl Eigenpairs {
    fn sorted(mut pairs: Vec<(f64, Vec<f64>)>) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (values, vectors) = pairs.into_iter().unzip();
        Eigenpairs { values, vectors }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Symmetric matrix stored by its action and diagonal band.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Half-bandwidth: `A[i][j] == 0` whenever `|i - j| > bandwidth`.
    fn bandwidth(&self) -> usize;
    /// Entry `A[i][j]` for `|i - j| <= bandwidth`.
    fn entry(&self, i: usize, j: usize) -> f64;
    fn inf_norm(&self) -> f64;
}

/// All eigenpairs of the symmetric tridiagonal matrix with diagonal `diag`
/// and off-diagonal `off` (`off[i]` couples rows `i` and `i + 1`).
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<Eigenpairs> {
    let n = diag.len();
    if n == 0 {
        return Ok(Eigenpairs {
            values: vec![],
            vectors: vec![],
        });
    }
    assert_eq!(off.len() + 1, n, "off-diagonal must have n - 1 entries");
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    // z[i] is the i-th eigenvector (stored contiguously).
    let mut z: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            v
        })
        .collect();

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Solver(format!(
                    "QL iteration stalled at row {l} (|e| = {:.3e})",
                    e[l].abs()
                )));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let (lo, hi) = z.split_at_mut(i + 1);
                let (zi, zi1) = (&mut lo[i], &mut hi[0]);
                for k in 0..n {
                    let f = zi1[k];
                    zi1[k] = s * zi[k] + c * f;
                    zi[k] = c * zi[k] - s * f;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(Eigenpairs::sorted(d.into_iter().zip(z).collect()))
}

/// Dense symmetric eigendecomposition; returns the `k` smallest pairs.
pub fn dense_eigen<A: SymmetricOperator + ?Sized>(a: &A, k: usize) -> Eigenpairs {
    let n = a.dim();
    let b = a.bandwidth();
    let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i.saturating_sub(b)..=(i + b).min(n - 1) {
            m[(i, j)] = a.entry(i, j);
        }
    }
    let eig = m.symmetric_eigen();
    let pairs = (0..n)
        .map(|i| {
            (
                eig.eigenvalues[i],
                eig.eigenvectors.column(i).iter().cloned().collect(),
            )
        })
        .collect();
    let mut all = Eigenpairs::sorted(pairs);
    all.values.truncate(k);
    all.vectors.truncate(k);
    all
}

/// Cholesky factor `L` of a symmetric positive definite banded matrix,
/// stored row-wise: `rows[i][j - (i - b)]` for `j` in `i - b ..= i`.
struct BandedCholesky {
    n: usize,
    b: usize,
    rows: Vec<f64>,
}

impl BandedCholesky {
    fn factor<A: SymmetricOperator + ?Sized>(a: &A, shift: f64) -> Option<Self> {
        let n = a.dim();
        let b = a.bandwidth();
        let w = b + 1;
        let mut rows = vec![0.0; n * w];
        // L[i][j] lives at rows[i * w + (j + b - i)]
        let idx = |i: usize, j: usize| i * w + (j + b - i);
        for i in 0..n {
            let j0 = i.saturating_sub(b);
            for j in j0..=i {
                let mut s = a.entry(i, j) - if i == j { shift } else { 0.0 };
                let k0 = j0.max(j.saturating_sub(b));
                for k in k0..j {
                    s -= rows[idx(i, k)] * rows[idx(j, k)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return None;
                    }
                    rows[idx(i, i)] = s.sqrt();
                } else {
                    rows[idx(i, j)] = s / rows[idx(j, j)];
                }
            }
        }
        Some(BandedCholesky { n, b, rows })
    }

    #[allow(clippy::needless_range_loop)] // band indices read clearer as loops
    fn solve(&self, rhs: &[f64], out: &mut [f64]) {
        let (n, b, w) = (self.n, self.b, self.b + 1);
        let idx = |i: usize, j: usize| i * w + (j + b - i);
        // L y = rhs
        for i in 0..n {
            let mut s = rhs[i];
            for k in i.saturating_sub(b)..i {
                s -= self.rows[idx(i, k)] * out[k];
            }
            out[i] = s / self.rows[idx(i, i)];
        }
        // L^T x = y
        for i in (0..n).rev() {
            let mut s = out[i];
            for k in i + 1..(i + b + 1).min(n) {
                s -= self.rows[idx(k, i)] * out[k];
            }
            out[i] = s / self.rows[idx(i, i)];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Options for the shift-invert Lanczos solver.
#[derive(Debug, Clone)]
pub struct LanczosOptions {
    /// Relative residual target for convergence of the Ritz pairs.
    pub tol: f64,
    /// Maximum Krylov dimension.
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            tol: 1e-10,
            max_iter: 1500,
            seed: 0x5eed_1a2c,
        }
    }
}

/// The `k` algebraically smallest eigenpairs of a banded symmetric matrix.
///
/// Lanczos runs on `(A - σI)^{-1}` with full reorthogonalization. The shift is
/// placed below the spectrum (Gershgorin-free: retried further down until the
/// Cholesky factorization succeeds), so the wanted eigenvalues become the
/// largest, well-separated eigenvalues of the inverse.
pub fn lanczos_smallest<A: SymmetricOperator + ?Sized>(
    a: &A,
    k: usize,
    opts: &LanczosOptions,
) -> Result<Eigenpairs> {
    let n = a.dim();
    if k == 0 || k > n {
        return Err(Error::Solver(format!(
            "requested {k} eigenpairs of a {n}x{n} matrix"
        )));
    }
    let anorm = a.inf_norm();
    let mut shift = -1.0;
    let chol = loop {
        if let Some(c) = BandedCholesky::factor(a, shift) {
            break c;
        }
        shift = 2.0 * shift - 1.0;
        if shift < -4.0 * anorm - 1.0 {
            return Err(Error::Solver(
                "could not find a shift below the spectrum".into(),
            ));
        }
    };

    let max_iter = opts.max_iter.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut q0: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let nq = norm(&q0);
    q0.iter_mut().for_each(|v| *v /= nq);

    let mut basis: Vec<Vec<f64>> = vec![q0];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let check_every = 25;
    let mut next_check = (2 * k + 20).min(max_iter);

    loop {
        let j = alpha.len();
        chol.solve(&basis[j], &mut w);
        let aj = dot(&basis[j], &w);
        alpha.push(aj);
        // full reorthogonalization, twice
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
            }
        }
        let bj = norm(&w);
        let m = alpha.len();

        let done = m >= max_iter || bj <= 1e-14 * aj.abs().max(1e-300);
        if m >= next_check || done {
            let t = tridiagonal_eigen(&alpha, &beta)?;
            // largest Ritz values of the inverse correspond to the smallest of A
            let wanted = k.min(m);
            let converged = (0..wanted).all(|r| {
                let idx = m - 1 - r;
                let theta = t.values[idx];
                let last = t.vectors[idx][m - 1];
                (bj * last).abs() <= opts.tol * theta.abs()
            });
            if (converged && wanted == k) || done {
                if wanted < k {
                    return Err(Error::Solver(format!(
                        "Krylov space exhausted after {m} steps with only {wanted} of {k} pairs"
                    )));
                }
                let mut pairs = Vec::with_capacity(k);
                for r in 0..k {
                    let idx = m - 1 - r;
                    let theta = t.values[idx];
                    let s = &t.vectors[idx];
                    let mut v = vec![0.0; n];
                    for (q, &sj) in basis.iter().zip(s) {
                        v.iter_mut().zip(q).for_each(|(vi, qi)| *vi += sj * qi);
                    }
                    let nv = norm(&v);
                    v.iter_mut().for_each(|x| *x /= nv);
                    pairs.push((shift + 1.0 / theta, v));
                }
                let result = Eigenpairs::sorted(pairs);
                let worst = max_residual(a, &result);
                if worst > 1e-8 * anorm {
                    return Err(Error::Solver(format!(
                        "residual {worst:.3e} exceeds {:.3e} after {m} Lanczos steps",
                        1e-8 * anorm
                    )));
                }
                return Ok(result);
            }
            next_check = (m + check_every).min(max_iter);
        }
        beta.push(bj);
        let next: Vec<f64> = w.iter().map(|x| x / bj).collect();
        basis.push(next);
    }
}

/// Largest `‖Av − λv‖₂` over the pairs.
pub fn max_residual<A: SymmetricOperator + ?Sized>(a: &A, pairs: &Eigenpairs) -> f64 {
    let mut av = vec![0.0; a.dim()];
    pairs
        .values
        .iter()
        .zip(&pairs.vectors)
        .map(|(&l, v)| {
            a.apply(v, &mut av);
            av.iter()
                .zip(v)
                .map(|(x, y)| (x - l * y).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}
