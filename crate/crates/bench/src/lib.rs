//! Shared fixtures for the benchmarks.

use steinflow::particles::{init_uniform, ParticleEnsemble};
use steinflow::spectral::build_fd_basis;
use steinflow::target::make_gaussian_mixture;
use steinflow::{GaussianMixtureSpec, Grid, Grid1D, GridBasis, TargetDistribution};

pub fn three_mode_target() -> TargetDistribution {
    make_gaussian_mixture(GaussianMixtureSpec::three_mode_1d()).expect("valid mixture")
}

pub fn standard_grid() -> Grid {
    Grid::One(Grid1D::new(-14.0, 14.0, 256).expect("valid grid"))
}

pub fn three_mode_basis() -> GridBasis {
    build_fd_basis(&three_mode_target(), &standard_grid(), None).expect("basis")
}

pub fn ensemble(n: usize) -> ParticleEnsemble {
    init_uniform(n, &[1.0], &[4.0], 7).expect("valid box")
}
