//! Checks shared by the property suite and the acceptance harness. Each
//! returns `Ok(summary)` or `Err(reason)` instead of panicking so the
//! acceptance runner can report every criterion.

#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use steinflow::diagnostics::{chi2_grid, fit_decay_rate, kl_grid, w1_1d};
use steinflow::experiment::{run_experiment, simulate_flow, simulate_particles};
use steinflow::flows::{
    evolve, flow_step, ratio_gradient_energy, FlowKind, FlowRecord, FlowRecordPlan,
};
use steinflow::grid::{fd_gradient, fd_laplacian, interpolate, Grid, Grid1D, Grid2D, GridFunction};
use steinflow::kernels::{rbf_eval, rbf_grad2, rbf_median_bandwidth, Kernel};
use steinflow::particles::{lawgd_step, svgd_step, ParticleEnsemble};
use steinflow::presets::find_preset;
use steinflow::spectral::{
    build_fd_basis, hermite_basis, rayleigh_residuals, GridBasis, SpectralBasis,
};
use steinflow::target::{
    make_gaussian_mixture, normalized_pdf_on_grid, GaussianMixtureSpec, GridDensity, GridQuantiles,
    TargetDistribution,
};
use steinflow::ExperimentConfig;

pub type Check = std::result::Result<String, String>;
pub type NamedCheck = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

pub fn target(spec: GaussianMixtureSpec) -> TargetDistribution {
    make_gaussian_mixture(spec).expect("built-in spec")
}

pub fn gaussian() -> TargetDistribution {
    target(GaussianMixtureSpec::standard_gaussian(1))
}

pub fn grid1(lower: f64, upper: f64, n: usize) -> Grid {
    Grid::One(Grid1D::new(lower, upper, n).expect("valid grid"))
}

pub fn grid2(lower: f64, upper: f64, n: usize) -> Grid {
    let a = Grid1D::new(lower, upper, n).expect("valid grid");
    Grid::Two(Grid2D::new(a, a).expect("valid grid"))
}

pub fn gaussian_density(grid: Grid, mean: f64, variance: f64) -> GridDensity {
    normalized_pdf_on_grid(
        &target(GaussianMixtureSpec::gaussian(&[mean], variance)),
        &grid,
    )
    .expect("density")
}

/// Built-in targets with a grid covering each.
pub fn builtin_targets() -> Vec<(&'static str, TargetDistribution, Grid)> {
    vec![
        ("gaussian-1d", gaussian(), grid1(-14.0, 14.0, 256)),
        (
            "mixture-1d",
            target(GaussianMixtureSpec::three_mode_1d()),
            grid1(-14.0, 14.0, 256),
        ),
        (
            "gaussian-2d",
            target(GaussianMixtureSpec::standard_gaussian(2)),
            grid2(-6.0, 6.0, 64),
        ),
        (
            "mixture-2d",
            target(GaussianMixtureSpec::two_mode_2d()),
            grid2(-6.0, 6.0, 64),
        ),
    ]
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn preset(name: &str) -> ExperimentConfig {
    find_preset(name)
        .expect("preset exists")
        .config()
        .expect("preset parses")
}

// ---------------------------------------------------------------- target

pub fn target_derivatives_match_fd() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_g, mut worst_l) = (0.0f64, 0.0f64);
    for (name, t, _) in builtin_targets() {
        let d = t.dim();
        for _ in 0..100 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
            let mut g = vec![0.0; d];
            t.grad_potential(&x, &mut g);
            let mut lap_fd = 0.0;
            for a in 0..d {
                let shifted = |h: f64| {
                    let mut y = x.clone();
                    y[a] += h;
                    t.potential(&y)
                };
                let fd = (shifted(1e-4) - shifted(-1e-4)) / 2e-4;
                let err = (g[a] - fd).abs() / fd.abs().max(1.0);
                worst_g = worst_g.max(err);
                ensure!(
                    err <= 1e-5,
                    "{name}: dV/dx{a} at {x:?}: {} vs fd {fd}",
                    g[a]
                );
                let h = 1e-3;
                lap_fd += (shifted(h) - 2.0 * t.potential(&x) + shifted(-h)) / (h * h);
            }
            let lap = t.laplacian_potential(&x);
            let err = (lap - lap_fd).abs() / lap_fd.abs().max(1.0);
            worst_l = worst_l.max(err);
            ensure!(
                err <= 1e-4,
                "{name}: laplacian at {x:?}: {lap} vs fd {lap_fd}"
            );
        }
    }
    Ok(format!(
        "gradient rel err {worst_g:.1e}, laplacian rel err {worst_l:.1e}"
    ))
}

pub fn pdf_on_grid_normalized() -> Check {
    for (name, t, g) in builtin_targets() {
        let p = ok(normalized_pdf_on_grid(&t, &g))?;
        ensure!(
            p.values().iter().all(|&v| v >= 0.0),
            "{name}: negative density"
        );
        let mass = p.values().iter().sum::<f64>() * g.cell_volume();
        ensure!((mass - 1.0).abs() <= 1e-12, "{name}: mass {mass}");
    }
    Ok("nonnegative, unit mass".into())
}

pub fn pdf_offset_invariant() -> Check {
    let mut worst = 0.0f64;
    for (name, t, g) in builtin_targets() {
        let base = ok(normalized_pdf_on_grid(&t, &g))?;
        for c in [-7.3, 5.0, 40.0] {
            let shifted = ok(normalized_pdf_on_grid(&t.with_offset(c), &g))?;
            let diff = max_abs_diff(base.values(), shifted.values());
            worst = worst.max(diff);
            ensure!(
                diff <= 1e-12,
                "{name}: offset {c} moved the density by {diff:e}"
            );
        }
    }
    Ok(format!("max change {worst:.1e}"))
}

// ---------------------------------------------------------------- grid

fn random_function(grid: Grid, rng: &mut ChaCha8Rng) -> GridFunction {
    let values = (0..grid.len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    GridFunction::new(grid, values).expect("grid function")
}

pub fn laplacian_symmetric() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for g in [grid1(-1.0, 1.0, 57), grid2(-1.0, 1.0, 23)] {
        for _ in 0..20 {
            let f = random_function(g, &mut rng);
            let h = random_function(g, &mut rng);
            let diff = (fd_laplacian(&f).dot(&h) - f.dot(&fd_laplacian(&h))).abs();
            worst = worst.max(diff);
            ensure!(
                diff <= 1e-10,
                "<Δf,g> - <f,Δg> = {diff:e} on a {}D grid",
                g.dim()
            );
        }
    }
    Ok(format!("max asymmetry {worst:.1e}"))
}

pub fn interpolation_reproduces_affine() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for g in [grid1(-3.0, 5.0, 41), grid2(-2.0, 2.0, 17)] {
        let coef: Vec<f64> = (0..=g.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let affine =
            |x: &[f64]| coef[0] + x.iter().zip(&coef[1..]).map(|(a, b)| a * b).sum::<f64>();
        let f = g.tabulate(affine);
        let (center, half) = g.center_and_half_width();
        for _ in 0..200 {
            let x: Vec<f64> = center
                .iter()
                .zip(&half)
                .map(|(c, h)| c + h * rng.random_range(-1.0..=1.0))
                .collect();
            let v = ok(interpolate(&f, &x))?;
            ensure!(
                (v - affine(&x)).abs() <= 1e-12,
                "interpolate at {x:?}: {v} vs {}",
                affine(&x)
            );
        }
    }
    Ok("exact to 1e-12".into())
}

pub fn gradient_of_even_is_odd() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = grid1(-4.0, 4.0, 81);
    let n = g.len();
    let mut values: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    for i in 0..n / 2 {
        values[n - 1 - i] = values[i];
    }
    let grad = fd_gradient(&ok(GridFunction::new(g, values))?);
    let c = &grad.components[0];
    let worst = (0..n).fold(0.0f64, |m, i| m.max((c[i] + c[n - 1 - i]).abs()));
    ensure!(worst <= 1e-12, "gradient not odd: {worst:e}");
    Ok(format!("antisymmetry defect {worst:.1e}"))
}

// ---------------------------------------------------------------- spectral

pub fn standard_grid() -> Grid {
    grid1(-14.0, 14.0, 256)
}

/// Node-major `φ` and weights `π̂ ε` for quadrature.
fn weights(t: &TargetDistribution, g: &Grid) -> Result<Vec<f64>, String> {
    let pi = ok(normalized_pdf_on_grid(t, g))?;
    Ok(pi.values().iter().map(|p| p * g.cell_volume()).collect())
}

pub fn kernel_inverts_generator() -> Check {
    let mut worst = 0.0f64;
    for t in [gaussian(), target(GaussianMixtureSpec::three_mode_1d())] {
        let g = standard_grid();
        let b = ok(build_fd_basis(&t, &g, None))?;
        let w = weights(&t, &g)?;
        let (n, k) = (g.len(), b.k());
        for i in 0..k.min(10) {
            let f = b.mode(i).values;
            // s_m = Σ_j φ_m(x_j) f(x_j) π̂_j ε
            let s: Vec<f64> = (0..k)
                .map(|m| (0..n).map(|j| b.phi[j * k + m] * f[j] * w[j]).sum())
                .collect();
            let applied: Vec<f64> = (0..n)
                .map(|x| {
                    (0..k)
                        .map(|m| b.phi[x * k + m] * s[m] / b.eigenvalues[m])
                        .sum()
                })
                .collect();
            let expect: Vec<f64> = f.iter().map(|v| v / b.eigenvalues[i]).collect();
            let num: f64 = (0..n)
                .map(|j| (applied[j] - expect[j]).powi(2) * w[j])
                .sum();
            let den: f64 = (0..n).map(|j| expect[j].powi(2) * w[j]).sum();
            let rel = (num / den).sqrt();
            worst = worst.max(rel);
            ensure!(rel <= 5e-2, "mode {}: relative error {rel:e}", i + 1);
        }
    }
    Ok(format!("max relative L2 error {worst:.1e}"))
}

/// Smooth test function that vanishes well inside `[-14, 14]`. Frequencies
/// stay at or below 1 and envelopes at or above 0.8 so that the O(ε²)
/// stencil error stays small next to the tolerance.
fn bump(rng: &mut ChaCha8Rng) -> impl Fn(f64) -> f64 {
    let (a0, a1, a2) = (
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-0.5..0.5),
    );
    let (amp, freq, phase) = (
        rng.random_range(-1.0..1.0),
        rng.random_range(0.3..1.0),
        rng.random_range(0.0..std::f64::consts::TAU),
    );
    let (c, s) = (rng.random_range(-2.0..2.0), rng.random_range(0.8..1.5));
    move |x: f64| {
        let env = (-(x - c).powi(2) / (2.0 * s * s)).exp();
        (a0 + a1 * x + a2 * x * x + amp * (freq * x + phase).sin()) * env
    }
}

/// Relative error of `E⟨∇f,∇g⟩ = E[f Lg]` for `pairs` random pairs on the
/// Gaussian grid, normalized by `sqrt(E|∇f|² E|∇g|²)`.
pub fn integration_by_parts(pairs: usize) -> Check {
    let t = gaussian();
    let g = standard_grid();
    let w = weights(&t, &g)?;
    let xs = match g {
        Grid::One(a) => a.nodes(),
        Grid::Two(_) => unreachable!(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for p in 0..pairs {
        let (bf, bg) = (bump(&mut rng), bump(&mut rng));
        let f = g.tabulate(|x| bf(x[0]));
        let h = g.tabulate(|x| bg(x[0]));
        let (df, dh) = (fd_gradient(&f), fd_gradient(&h));
        let lap_h = fd_laplacian(&h);
        let (mut lhs, mut rhs, mut nf, mut nh) = (0.0, 0.0, 0.0, 0.0);
        for j in 0..g.len() {
            let (a, b) = (df.components[0][j], dh.components[0][j]);
            lhs += a * b * w[j];
            let l_h = -lap_h.values[j] + xs[j] * b;
            rhs += f.values[j] * l_h * w[j];
            nf += a * a * w[j];
            nh += b * b * w[j];
        }
        let rel = (lhs - rhs).abs() / (nf * nh).sqrt();
        worst = worst.max(rel);
        ensure!(
            rel <= 1e-2,
            "pair {p}: E<∇f,∇g> = {lhs:.6e}, E[f Lg] = {rhs:.6e}, rel {rel:e}"
        );
    }
    Ok(format!("{pairs} pairs, max relative error {worst:.2e}"))
}

pub fn gaussian_eigenvalues(count: usize) -> Check {
    let started = Instant::now();
    let b = ok(build_fd_basis(&gaussian(), &standard_grid(), Some(count)))?;
    let secs = started.elapsed().as_secs_f64();
    let mut worst = 0.0f64;
    for (i, l) in b.eigenvalues.iter().enumerate() {
        let n = (i + 1) as f64;
        let rel = (l - n).abs() / n;
        worst = worst.max(rel);
        ensure!(rel <= 0.02, "λ{} = {l} (expected {n})", i + 1);
    }
    ensure!(secs < 5.0, "eigensolve took {secs:.2} s");
    Ok(format!(
        "λ1..λ{count} = {:.4?}, max rel err {worst:.2e}, {secs:.3} s",
        b.eigenvalues
    ))
}

pub fn kernel_offset_invariant() -> Check {
    let t = target(GaussianMixtureSpec::three_mode_1d());
    let g = grid1(-14.0, 14.0, 128);
    let a = Kernel::spectral(SpectralBasis::Grid(ok(build_fd_basis(&t, &g, None))?));
    let b = Kernel::spectral(SpectralBasis::Grid(ok(build_fd_basis(
        &t.with_offset(5.0),
        &g,
        None,
    ))?));
    let xs = [-4.0, -3.0, -1.2, 0.0, 0.7, 2.5, 4.0, 6.1];
    let mut ratio = None;
    let mut worst = 0.0f64;
    for x in xs {
        let row_a: Vec<f64> = xs.iter().map(|&y| a.eval(&[x], &[y])).collect();
        let row_b: Vec<f64> = xs.iter().map(|&y| b.eval(&[x], &[y])).collect();
        let argmax = |r: &[f64]| (0..r.len()).max_by(|&i, &j| r[i].total_cmp(&r[j])).unwrap();
        ensure!(
            argmax(&row_a) == argmax(&row_b),
            "argmax differs for x = {x}"
        );
        for (va, vb) in row_a.iter().zip(&row_b) {
            if va.abs() < 1e-8 {
                continue;
            }
            let r = vb / va;
            let r0 = *ratio.get_or_insert(r);
            worst = worst.max((r - r0).abs() / r0.abs());
        }
    }
    ensure!(worst <= 1e-6, "kernel ratios vary by {worst:e}");
    Ok(format!(
        "common ratio {:.6}, spread {worst:.1e}",
        ratio.unwrap_or(f64::NAN)
    ))
}

pub fn gram_near_orthonormal() -> Check {
    let mut worst = 0.0f64;
    for t in [gaussian(), target(GaussianMixtureSpec::three_mode_1d())] {
        let g = standard_grid();
        let b = ok(build_fd_basis(&t, &g, Some(20)))?;
        let w = weights(&t, &g)?;
        let k = b.k();
        for i in 0..k {
            let mean: f64 = (0..g.len()).map(|j| b.phi[j * k + i] * w[j]).sum();
            ensure!(mean.abs() <= 5e-2, "mode {} has mean {mean:e}", i + 1);
            for m in 0..k {
                let dot: f64 = (0..g.len())
                    .map(|j| b.phi[j * k + i] * b.phi[j * k + m] * w[j])
                    .sum();
                let defect = (dot - if i == m { 1.0 } else { 0.0 }).abs();
                worst = worst.max(defect);
                ensure!(defect <= 1e-2, "Gram[{i}][{m}] = {dot}");
            }
        }
    }
    Ok(format!("max Gram defect {worst:.1e}"))
}

pub fn rayleigh_residuals_low_modes() -> Check {
    let mut report = Vec::new();
    for (name, t) in [
        ("gaussian", gaussian()),
        ("mixture", target(GaussianMixtureSpec::three_mode_1d())),
    ] {
        let b = ok(build_fd_basis(&t, &standard_grid(), Some(10)))?;
        let r = ok(rayleigh_residuals(&t, &b, 10))?;
        let worst = r.iter().cloned().fold(0.0, f64::max);
        ensure!(worst <= 1e-3, "{name}: residuals {r:?}");
        report.push(format!("{name} {worst:.1e}"));
    }
    Ok(format!("modes 1..10 max residual: {}", report.join(", ")))
}

// ---------------------------------------------------------------- kernels

pub fn kernels_under_test() -> Vec<(&'static str, Kernel, f64, f64)> {
    let t = target(GaussianMixtureSpec::three_mode_1d());
    let fd = build_fd_basis(&t, &grid1(-10.0, 10.0, 128), Some(30)).expect("basis");
    vec![
        ("rbf", Kernel::Rbf { bandwidth: 1.7 }, -6.0, 6.0),
        (
            "hermite",
            Kernel::spectral(SpectralBasis::Hermite(hermite_basis(20).expect("k"))),
            -4.0,
            4.0,
        ),
        ("fd", Kernel::spectral(SpectralBasis::Grid(fd)), -9.0, 9.0),
    ]
}

pub fn kernel_symmetry_and_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for (name, k, lo, hi) in kernels_under_test() {
        for _ in 0..200 {
            let x = [rng.random_range(lo..hi)];
            let y = [rng.random_range(lo..hi)];
            ensure!(
                k.eval(&x, &y) == k.eval(&y, &x),
                "{name}: K(x,y) != K(y,x) at {x:?}, {y:?}"
            );
            let (mut g1, mut g2) = ([0.0], [0.0]);
            k.grad1(&x, &y, &mut g1);
            k.grad2(&y, &x, &mut g2);
            let diff = (g1[0] - g2[0]).abs();
            worst = worst.max(diff);
            ensure!(diff <= 1e-10, "{name}: ∇1K(x,y) - ∇2K(y,x) = {diff:e}");
        }
    }
    Ok(format!(
        "symmetric; max |∇1K(x,y) - ∇2K(y,x)| = {worst:.1e}"
    ))
}

pub fn rbf_gradient_matches_fd() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let y = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let bw = rng.random_range(0.5..5.0);
        let mut g = [0.0; 2];
        rbf_grad2(&x, &y, bw, &mut g);
        for a in 0..2 {
            let mut yp = y;
            let mut ym = y;
            yp[a] += 1e-5;
            ym[a] -= 1e-5;
            let fd = (rbf_eval(&x, &yp, bw) - rbf_eval(&x, &ym, bw)) / 2e-5;
            ensure!(
                (g[a] - fd).abs() <= 1e-6,
                "∇2K component {a}: {} vs fd {fd}",
                g[a]
            );
        }
    }
    Ok("within 1e-6".into())
}

/// At interior nodes the tabulated kernel gradient is the central difference
/// of nodal kernel values.
pub fn grid_kernel_gradient_matches_fd() -> Check {
    let t = target(GaussianMixtureSpec::three_mode_1d());
    let axis = Grid1D::new(-10.0, 10.0, 128).expect("grid");
    let k = Kernel::spectral(SpectralBasis::Grid(ok(build_fd_basis(
        &t,
        &Grid::One(axis),
        None,
    ))?));
    let eps = axis.spacing();
    let mut worst = 0.0f64;
    for i in (20..108).step_by(7) {
        for y in [-3.0, 0.1, 4.2] {
            let mut g = [0.0];
            k.grad1(&[axis.node(i)], &[y], &mut g);
            let fd = (k.eval(&[axis.node(i + 1)], &[y]) - k.eval(&[axis.node(i - 1)], &[y]))
                / (2.0 * eps);
            let diff = (g[0] - fd).abs();
            worst = worst.max(diff);
            ensure!(diff <= 1e-6, "node {i}, y = {y}: {} vs {fd}", g[0]);
        }
    }
    Ok(format!("max difference {worst:.1e}"))
}

pub fn median_bandwidth_permutation_invariant() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut xs: Vec<f64> = (0..61).map(|_| rng.random_range(-3.0..3.0)).collect();
    let bw = ok(rbf_median_bandwidth(&xs, 1))?;
    for _ in 0..10 {
        for i in (1..xs.len()).rev() {
            xs.swap(i, rng.random_range(0..=i));
        }
        ensure!(
            ok(rbf_median_bandwidth(&xs, 1))? == bw,
            "bandwidth changed under relabeling"
        );
    }
    Ok(format!("bw = {bw:.6} for every ordering"))
}

// ---------------------------------------------------------------- particles

type Stepper<'a> = Box<dyn Fn(&ParticleEnsemble) -> Result<ParticleEnsemble, String> + 'a>;

fn steppers<'a>(
    t: &'a TargetDistribution,
    kernels: &'a [(&'static str, Kernel)],
    h: f64,
) -> Vec<(String, Stepper<'a>)> {
    let mut out: Vec<(String, Stepper<'a>)> = Vec::new();
    for (name, k) in kernels {
        out.push((
            format!("svgd/{name}"),
            Box::new(move |e| ok(svgd_step(e, t, k, h)).map(|r| r.0)),
        ));
        if matches!(k, Kernel::Spectral(_)) {
            out.push((
                format!("lawgd/{name}"),
                Box::new(move |e| ok(lawgd_step(e, k, h)).map(|r| r.0)),
            ));
        }
    }
    out
}

fn symmetric_mixture() -> TargetDistribution {
    target(GaussianMixtureSpec::mixture_1d(
        &[0.5, 0.5],
        &[-2.0, 2.0],
        &[1.0, 1.0],
    ))
}

pub fn steps_permutation_equivariant() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let t1 = target(GaussianMixtureSpec::three_mode_1d());
    let k1 = vec![
        ("rbf", Kernel::Rbf { bandwidth: 2.0 }),
        (
            "fd",
            Kernel::spectral(SpectralBasis::Grid(ok(build_fd_basis(
                &t1,
                &grid1(-14.0, 14.0, 128),
                None,
            ))?)),
        ),
        (
            "hermite",
            Kernel::spectral(SpectralBasis::Hermite(ok(hermite_basis(30))?)),
        ),
    ];
    let t2 = target(GaussianMixtureSpec::two_mode_2d());
    let k2 = vec![
        ("rbf", Kernel::Rbf { bandwidth: 1.0 }),
        (
            "fd",
            Kernel::spectral(SpectralBasis::Grid(ok(build_fd_basis(
                &t2,
                &grid2(-6.0, 6.0, 24),
                Some(20),
            ))?)),
        ),
    ];
    let mut checked = 0;
    for (t, kernels, d) in [(&t1, &k1, 1usize), (&t2, &k2, 2)] {
        let n = 37;
        let pos: Vec<f64> = (0..n * d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let permuted: Vec<f64> = perm
            .iter()
            .flat_map(|&p| pos[p * d..(p + 1) * d].to_vec())
            .collect();
        let a = ok(ParticleEnsemble::new(pos, d))?;
        let b = ok(ParticleEnsemble::new(permuted, d))?;
        for (name, step) in steppers(t, kernels, 0.05) {
            let (sa, sb) = (step(&a)?, step(&b)?);
            for (i, &p) in perm.iter().enumerate() {
                ensure!(
                    sa.particle(p) == sb.particle(i),
                    "{d}D {name}: particle {p} differs after relabeling"
                );
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} step kinds bit-exact under relabeling"))
}

pub fn steps_reflection_equivariant() -> Check {
    let t = symmetric_mixture();
    let kernels = vec![
        ("rbf", Kernel::Rbf { bandwidth: 2.0 }),
        (
            "fd",
            Kernel::spectral(SpectralBasis::Grid(ok(build_fd_basis(
                &t,
                &grid1(-12.0, 12.0, 200),
                None,
            ))?)),
        ),
    ];
    let g = gaussian();
    let hermite = vec![(
        "hermite",
        Kernel::spectral(SpectralBasis::Hermite(ok(hermite_basis(40))?)),
    )];
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let half: Vec<f64> = (0..20).map(|_| rng.random_range(0.1..3.5)).collect();
    let pos: Vec<f64> = half.iter().flat_map(|&x| [x, -x]).collect();
    let mut report = Vec::new();
    for (tt, ks) in [(&t, &kernels), (&g, &hermite)] {
        for (name, step) in steppers(tt, ks, 0.01) {
            let tol = if name.ends_with("rbf") { 1e-10 } else { 1e-6 };
            let mut e = ok(ParticleEnsemble::new(pos.clone(), 1))?;
            for _ in 0..20 {
                e = step(&e)?;
            }
            let defect = (0..half.len())
                .map(|i| (e.positions[2 * i] + e.positions[2 * i + 1]).abs())
                .fold(0.0, f64::max);
            ensure!(defect <= tol, "{name}: asymmetry {defect:e} after 20 steps");
            report.push(format!("{name} {defect:.0e}"));
        }
    }
    Ok(report.join(", "))
}

pub fn single_particle_svgd_is_gradient_descent() -> Check {
    let t = target(GaussianMixtureSpec::three_mode_1d());
    let k = Kernel::Rbf { bandwidth: 1.3 };
    for x in [-4.0, -0.3, 0.0, 2.2, 7.5] {
        let e = ok(ParticleEnsemble::new(vec![x], 1))?;
        let (next, _) = ok(svgd_step(&e, &t, &k, 0.1))?;
        let mut g = [0.0];
        t.grad_potential(&[x], &mut g);
        ensure!(
            next.positions[0] == x - 0.1 * g[0],
            "x = {x}: {} vs {}",
            next.positions[0],
            x - 0.1 * g[0]
        );
    }
    Ok("exact".into())
}

/// KDE-estimated KL of the Hermite run, recorded every 10 iterations, must
/// not increase after iteration 50.
pub fn hermite_kl_nonincreasing() -> Check {
    let mut cfg = preset("hermite-gaussian");
    cfg.snapshot_every = Some(10);
    let t = ok(cfg.build_target())?;
    let g = ok(cfg.grid.build())?;
    let (rec, _) = ok(simulate_particles(&cfg, &t, &g))?;
    ensure!(rec.abort.is_none(), "run aborted: {:?}", rec.abort);
    let h = match cfg.schedule {
        Some(steinflow::config::ScheduleConfig::Constant { h0 }) => h0,
        _ => unreachable!(),
    };
    ensure!(
        h <= 0.05 && cfg.particles.as_ref().is_some_and(|p| p.n >= 100),
        "preset outside the property's range"
    );
    let kl: Vec<(usize, f64)> = rec
        .diagnostics
        .iter()
        .filter(|r| r.iteration >= 50)
        .map(|r| (r.iteration, r.kl))
        .collect();
    for w in kl.windows(2) {
        ensure!(
            w[1].1 <= w[0].1,
            "KL rose from {:.4e} (it {}) to {:.4e} (it {})",
            w[0].1,
            w[0].0,
            w[1].1,
            w[1].0
        );
    }
    Ok(format!(
        "{} points, KL {:.3e} -> {:.3e}",
        kl.len(),
        kl.first().map_or(f64::NAN, |p| p.1),
        kl.last().map_or(f64::NAN, |p| p.1)
    ))
}

// ---------------------------------------------------------------- flows

fn flow_fixture() -> (Grid, GridDensity, GridBasis) {
    let g = grid1(-6.0, 7.0, 256);
    let t = gaussian();
    let pi = normalized_pdf_on_grid(&t, &g).expect("density");
    let basis = build_fd_basis(&t, &g, None).expect("basis");
    (g, pi, basis)
}

pub fn flows_conserve_mass() -> Check {
    let (g, pi, basis) = flow_fixture();
    let mut worst = 0.0f64;
    for kind in [FlowKind::Csf, FlowKind::LawgdDensity(&basis)] {
        let mut mu = gaussian_density(g, 1.0, 1.0);
        for s in 0..200 {
            let v = ok(kind.velocity(&mu, &pi))?;
            let dt = steinflow::flows::cfl_limit(&v)
                .min(0.25 * g.spacing().powi(2) / 3.0)
                .min(0.01);
            let next = ok(flow_step(&mu, &v, dt))?;
            let drift = (next.mass() - mu.mass()).abs();
            worst = worst.max(drift);
            ensure!(
                drift <= 1e-12,
                "{}: step {s} changed mass by {drift:e}",
                kind.name()
            );
            ensure!(
                next.values().iter().all(|&m| m >= 0.0),
                "{}: negative density at step {s}",
                kind.name()
            );
            mu = next;
        }
    }
    Ok(format!("max per-step mass change {worst:.1e}"))
}

pub fn flows_fixed_point() -> Check {
    let (_, pi, basis) = flow_fixture();
    let mut report = Vec::new();
    for kind in [FlowKind::Csf, FlowKind::LawgdDensity(&basis)] {
        let v = ok(kind.velocity(&pi, &pi))?;
        let vmax = v.components[0].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        ensure!(vmax <= 1e-8, "{}: velocity {vmax:e} at μ = π", kind.name());
        let mut mu = pi.clone();
        for _ in 0..1000 {
            let v = ok(kind.velocity(&mu, &pi))?;
            mu = ok(flow_step(&mu, &v, 0.01))?;
        }
        let drift = max_abs_diff(mu.values(), pi.values());
        ensure!(
            drift <= 1e-8,
            "{}: drift {drift:e} after 1000 steps",
            kind.name()
        );
        report.push(format!("{} |v| {vmax:.0e}, drift {drift:.0e}", kind.name()));
    }
    Ok(report.join("; "))
}

/// Central differences of KL at interior record times paired with the state
/// recorded there.
fn kl_derivatives(rec: &FlowRecord) -> Vec<(f64, f64, usize)> {
    let d = &rec.divergences;
    (1..d.len().saturating_sub(1))
        .map(|i| {
            (
                d[i].t,
                (d[i + 1].kl - d[i - 1].kl) / (d[i + 1].t - d[i - 1].t),
                i,
            )
        })
        .collect()
}

pub fn csf_dissipation_identity() -> Check {
    let g = grid1(-6.0, 7.0, 512);
    let pi = gaussian_density(g, 0.0, 1.0);
    let mu0 = gaussian_density(g, 1.0, 1.0);
    let plan = FlowRecordPlan {
        divergence_every: 0.01,
        density_every: Some(0.01),
    };
    let rec = ok(evolve(FlowKind::Csf, &mu0, &pi, 2.5, 0.01, plan))?;
    ensure!(
        rec.densities.len() == rec.divergences.len(),
        "record times out of step"
    );
    let mut worst = 0.0f64;
    let mut used = 0;
    for (t, dkl, i) in kl_derivatives(&rec) {
        let kl = rec.divergences[i].kl;
        if !(1e-3..=1.0).contains(&kl) {
            continue;
        }
        let expect = -2.0 * ok(ratio_gradient_energy(&rec.densities[i].1, &pi))?;
        let rel = (dkl - expect).abs() / expect.abs();
        worst = worst.max(rel);
        used += 1;
        ensure!(
            rel <= 0.1,
            "t = {t:.2}: dKL/dt = {dkl:.4e}, -2E|∇(μ/π)|² = {expect:.4e}"
        );
    }
    ensure!(used >= 10, "only {used} points with KL in [1e-3, 1]");
    Ok(format!("{used} points, max relative mismatch {worst:.2e}"))
}

/// Runs the LAWGD density flow preset and returns the record with the
/// dissipation mismatch on the points whose KL lies in `window`.
pub fn lawgd_flow_dissipation(
    rec: &FlowRecord,
    window: (f64, f64),
) -> Result<(f64, usize), String> {
    let mut worst = 0.0f64;
    let mut used = 0;
    for (t, dkl, i) in kl_derivatives(rec) {
        let p = rec.divergences[i];
        if p.kl < window.0 || p.kl > window.1 {
            continue;
        }
        let rel = (dkl + p.chi2).abs() / p.chi2;
        worst = worst.max(rel);
        used += 1;
        ensure!(
            rel <= 0.1,
            "t = {t:.2}: dKL/dt = {dkl:.4e}, -χ² = {:.4e}",
            -p.chi2
        );
    }
    ensure!(used >= 5, "only {used} points in the window");
    Ok((worst, used))
}

pub fn lawgd_flow_record() -> Result<(FlowRecord, f64), String> {
    let cfg = preset("lawgd-flow-check");
    let t = ok(cfg.build_target())?;
    let g = ok(cfg.grid.build())?;
    let started = Instant::now();
    let (rec, _) = ok(simulate_flow(&cfg, &t, &g))?;
    Ok((ok(rec)?, started.elapsed().as_secs_f64()))
}

pub fn csf_flow_record() -> Result<(FlowRecord, f64), String> {
    let cfg = preset("csf-theorem-check");
    let t = ok(cfg.build_target())?;
    let g = ok(cfg.grid.build())?;
    let started = Instant::now();
    let (rec, _) = ok(simulate_flow(&cfg, &t, &g))?;
    Ok((ok(rec)?, started.elapsed().as_secs_f64()))
}

pub fn lawgd_dissipation_identity() -> Check {
    let (rec, _) = lawgd_flow_record()?;
    let (worst, used) = lawgd_flow_dissipation(&rec, (1e-3, 1.0))?;
    Ok(format!(
        "{used} points with KL in [1e-3, 1], max relative mismatch {worst:.2e}"
    ))
}

/// `χ²(μ_t) ≤ (9/(8t))²` at every record time in `[t0, t1]`.
pub fn csf_polynomial_bound(rec: &FlowRecord, t0: f64, t1: f64) -> Check {
    let mut tightest = f64::INFINITY;
    let mut n = 0;
    for p in rec
        .divergences
        .iter()
        .filter(|p| p.t >= t0 - 1e-9 && p.t <= t1 + 1e-9)
    {
        let bound = (9.0 / (8.0 * p.t)).powi(2);
        ensure!(
            p.chi2 <= bound,
            "t = {:.2}: χ² = {:.4e} > {bound:.4e}",
            p.t,
            p.chi2
        );
        tightest = tightest.min(bound / p.chi2);
        n += 1;
    }
    ensure!(n > 0, "no records in [{t0}, {t1}]");
    Ok(format!(
        "{n} points, smallest bound/χ² ratio {tightest:.3e}"
    ))
}

/// The χ² quadrature levels off near 1e-15 once μ/π̂ − 1 is at round-off
/// level; values below this sit in that plateau.
pub const CHI2_ROUNDOFF_FLOOR: f64 = 1e-14;

/// χ² decay fit over `t ≥ 7`, above the round-off floor and over every point.
pub fn csf_late_chi2_rate(
    rec: &FlowRecord,
) -> Result<(steinflow::DecayFit, steinflow::DecayFit), String> {
    let late: Vec<(f64, f64)> = rec
        .chi2_series()
        .into_iter()
        .filter(|(t, _)| *t >= 7.0)
        .collect();
    Ok((
        ok(fit_decay_rate(&late, (CHI2_ROUNDOFF_FLOOR, f64::INFINITY)))?,
        ok(fit_decay_rate(&late, (0.0, f64::INFINITY)))?,
    ))
}

// ---------------------------------------------------------------- diagnostics

pub fn closed_form_divergences() -> Check {
    let g = grid1(-12.0, 13.0, 512);
    let pi = gaussian_density(g, 0.0, 1.0);
    let kl = ok(kl_grid(&gaussian_density(g, 1.0, 1.0), &pi))?;
    let chi2 = ok(chi2_grid(&gaussian_density(g, 0.5, 1.0), &pi))?;
    let chi2_expect = 0.25f64.exp() - 1.0;
    ensure!((kl - 0.5).abs() <= 1e-3, "KL(N(1,1)|N(0,1)) = {kl}");
    ensure!(
        (chi2 - chi2_expect).abs() <= 1e-3,
        "χ²(N(0.5,1)|N(0,1)) = {chi2}"
    );
    Ok(format!(
        "KL = {kl:.6} (0.5), χ² = {chi2:.6} ({chi2_expect:.6})"
    ))
}

pub fn random_density(g: Grid, rng: &mut ChaCha8Rng) -> GridDensity {
    let comps = rng.random_range(1..4);
    let params: Vec<(f64, f64, f64)> = (0..comps)
        .map(|_| {
            (
                rng.random_range(0.2..1.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0.5..1.5),
            )
        })
        .collect();
    let values = g.tabulate(|x| {
        params
            .iter()
            .map(|(w, m, s)| w * (-(x[0] - m).powi(2) / (2.0 * s * s)).exp() / s)
            .sum()
    });
    GridDensity::from_unnormalized(g, values.values).expect("density")
}

pub fn divergence_inequalities() -> Check {
    let g = grid1(-10.0, 10.0, 256);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (mu, pi) = (random_density(g, &mut rng), random_density(g, &mut rng));
        let (kl, chi2) = (ok(kl_grid(&mu, &pi))?, ok(chi2_grid(&mu, &pi))?);
        ensure!(
            kl >= 0.0 && chi2 >= 0.0,
            "negative divergence: KL {kl}, χ² {chi2}"
        );
        ensure!(kl <= chi2 + 5e-2, "KL {kl} > χ² {chi2}");
        ensure!(
            kl <= (1.0 + chi2).ln() + 5e-2,
            "KL {kl} > ln(1+χ²) = {}",
            (1.0 + chi2).ln()
        );
        let (self_kl, self_chi2) = (ok(kl_grid(&mu, &mu))?, ok(chi2_grid(&mu, &mu))?);
        ensure!(
            self_kl <= 1e-10 && self_chi2 <= 1e-10,
            "D(μ|μ) = {self_kl:e}, {self_chi2:e}"
        );
    }
    Ok("100 random pairs".into())
}

pub fn w1_relabel_and_translation() -> Check {
    let g = Grid1D::new(-10.0, 10.0, 801).expect("grid");
    let q = ok(GridQuantiles::new(&gaussian(), &g))?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut xs: Vec<f64> = (0..80).map(|_| rng.random_range(-2.0..2.0)).collect();
    let base = ok(w1_1d(&xs, &q))?;
    for c in [-0.7, 0.05, 1.3] {
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let w = ok(w1_1d(&shifted, &q))?;
        ensure!(
            (w - base).abs() <= c.abs() + 1e-12,
            "shift {c}: W1 {base} -> {w}"
        );
    }
    xs.reverse();
    xs.swap(3, 40);
    ensure!(ok(w1_1d(&xs, &q))? == base, "W1 changed under relabeling");
    Ok(format!("W1 = {base:.4}"))
}

// ---------------------------------------------------------------- experiment

pub fn determinism(preset_name: &str, iterations: usize) -> Check {
    let mut cfg = preset(preset_name);
    cfg.n_iters = Some(iterations);
    let dir = ok(tempfile::tempdir())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ma = ok(run_experiment(&cfg, &a))?;
    let mb = ok(run_experiment(&cfg, &b))?;
    ensure!(!ma.aborted() && !mb.aborted(), "run aborted");
    ok(ma.validate())?;
    ok(mb.validate())?;
    let pa = ok(std::fs::read(a.join("positions.csv")))?;
    let pb = ok(std::fs::read(b.join("positions.csv")))?;
    ensure!(pa == pb, "positions.csv differs between runs");
    Ok(format!("{preset_name}: {} bytes identical", pa.len()))
}

pub fn manifest_validates() -> Check {
    let dir = ok(tempfile::tempdir())?;
    let mut report = Vec::new();
    for (name, iters) in [("gaussmix3-svgd", 20usize), ("csf-theorem-check", 0)] {
        let mut cfg = preset(name);
        if iters > 0 {
            cfg.n_iters = Some(iters);
        } else if let Some(f) = cfg.flow.as_mut() {
            f.t_end = 0.5;
        }
        let out = dir.path().join(name);
        let m = ok(run_experiment(&cfg, &out))?;
        ok(m.validate())?;
        ensure!(
            out.join("manifest.json").exists(),
            "{name}: no manifest written"
        );
        report.push(format!("{name} {} files", m.files.len()));
    }
    Ok(report.join(", "))
}

/// Every invariant check, in module order.
pub const INVARIANTS: &[NamedCheck] = &[
    (
        "target derivatives match finite differences",
        target_derivatives_match_fd,
    ),
    (
        "grid density is nonnegative with unit mass",
        pdf_on_grid_normalized,
    ),
    (
        "grid density ignores potential offsets",
        pdf_offset_invariant,
    ),
    ("grid Laplacian is symmetric", laplacian_symmetric),
    (
        "interpolation reproduces affine functions",
        interpolation_reproduces_affine,
    ),
    (
        "gradient of an even function is odd",
        gradient_of_even_is_odd,
    ),
    (
        "kernel operator inverts the generator",
        kernel_inverts_generator,
    ),
    ("integration by parts", || integration_by_parts(20)),
    ("Gaussian spectral gap", || gaussian_eigenvalues(1)),
    ("kernel ignores potential offsets", kernel_offset_invariant),
    ("basis Gram matrix is near identity", gram_near_orthonormal),
    ("low-mode Rayleigh residuals", rayleigh_residuals_low_modes),
    (
        "kernel symmetry and gradient swap",
        kernel_symmetry_and_gradients,
    ),
    (
        "RBF gradient matches finite differences",
        rbf_gradient_matches_fd,
    ),
    (
        "grid kernel gradient matches nodal differences",
        grid_kernel_gradient_matches_fd,
    ),
    (
        "median bandwidth ignores labels",
        median_bandwidth_permutation_invariant,
    ),
    (
        "steps are permutation-equivariant",
        steps_permutation_equivariant,
    ),
    (
        "steps are reflection-equivariant",
        steps_reflection_equivariant,
    ),
    (
        "single-particle SVGD is gradient descent",
        single_particle_svgd_is_gradient_descent,
    ),
    (
        "Hermite LAWGD KL is nonincreasing",
        hermite_kl_nonincreasing,
    ),
    ("flows conserve mass", flows_conserve_mass),
    ("target is a fixed point of both flows", flows_fixed_point),
    (
        "chi-squared flow dissipation identity",
        csf_dissipation_identity,
    ),
    (
        "LAWGD flow dissipation identity",
        lawgd_dissipation_identity,
    ),
    ("closed-form Gaussian divergences", closed_form_divergences),
    ("divergence inequalities", divergence_inequalities),
    ("W1 relabeling and translation", w1_relabel_and_translation),
    ("manifests validate", manifest_validates),
];
