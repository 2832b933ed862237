//! Runs a resolved [`ExperimentConfig`] and writes its artifacts.
//!
//! Particle methods write `positions.csv`, `diagnostics.csv`, `plot.dat` and
//! `plot.gp`; flow methods write `densities.csv`, `divergence.csv`,
//! `plot.dat` and `plot.gp`. Every run ends with `manifest.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::basis_io::{load_or_build, CacheStatus};
use crate::config::{BasisKind, ExperimentConfig, KernelConfig, Method};
use crate::error::{Error, Result};
use crate::flows::{evolve, FlowKind, FlowRecord, FlowRecordPlan};
use crate::grid::Grid;
use crate::kernels::Kernel;
use crate::particles::{
    run, DiagnosticContext, DivergenceGuard, Dynamics, RunRecord, RunSpec, SnapshotPlan,
};
use crate::spectral::{hermite_basis, SpectralBasis};
use crate::target::{
    make_gaussian_mixture, normalized_pdf_on_grid, GaussianMixtureSpec, TargetDistribution,
};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub name: String,
    /// Data rows, excluding any header.
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub version: String,
    pub output_dir: PathBuf,
    pub wall_time_secs: f64,
    pub files: Vec<FileEntry>,
    pub clamp_events: usize,
    pub abort: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis_cache: Option<String>,
}

impl RunManifest {
    pub fn aborted(&self) -> bool {
        self.abort.is_some()
    }

    /// Checks that every listed file exists and is non-empty.
    pub fn validate(&self) -> Result<()> {
        for f in &self.files {
            let path = self.output_dir.join(&f.name);
            let len = fs::metadata(&path)?.len();
            if len == 0 {
                return Err(Error::Numeric(format!("{} is empty", path.display())));
            }
        }
        Ok(())
    }
}

/// Default output directory: `runs/<name or method>`.
pub fn default_output_dir(cfg: &ExperimentConfig) -> PathBuf {
    if let Some(d) = &cfg.output_dir {
        return PathBuf::from(d);
    }
    let stem = cfg.name.clone().unwrap_or_else(|| {
        serde_json::to_value(cfg.method)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_else(|| "run".into())
    });
    Path::new("runs").join(stem)
}

struct Output {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Output {
    fn write(&mut self, name: &str, text: &str, rows: usize) -> Result<()> {
        fs::write(self.dir.join(name), text)?;
        self.files.push(FileEntry {
            name: name.into(),
            rows,
        });
        Ok(())
    }
}

/// Builds the kernel for a particle method. Returns the cache status for FD
/// bases.
pub fn build_kernel(
    cfg: &ExperimentConfig,
    target: &TargetDistribution,
    grid: &Grid,
) -> Result<(Kernel, Option<CacheStatus>)> {
    match cfg.kernel {
        Some(KernelConfig::Rbf { .. }) | None => Ok((Kernel::Rbf { bandwidth: 1.0 }, None)),
        Some(KernelConfig::Spectral {
            basis: BasisKind::Hermite,
            k,
        }) => {
            let b = hermite_basis(k.expect("resolved"))?;
            Ok((Kernel::spectral(SpectralBasis::Hermite(b)), None))
        }
        Some(KernelConfig::Spectral {
            basis: BasisKind::Fd,
            k,
        }) => {
            let cache = cfg.basis_cache.as_deref().map(Path::new);
            let (b, status) = load_or_build(target, grid, k, cache)?;
            Ok((Kernel::spectral(SpectralBasis::Grid(b)), Some(status)))
        }
    }
}

/// Runs the experiment, writing artifacts into `out_dir`. A numeric abort
/// is not an error: the artifacts recorded so far are written and the
/// manifest carries the reason.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    fs::create_dir_all(out_dir)?;
    let mut out = Output {
        dir: out_dir.to_path_buf(),
        files: Vec::new(),
    };
    let target = cfg.build_target()?;
    let grid = cfg.grid.build()?;
    let (clamp_events, abort, cache) = if cfg.method.is_flow() {
        let (abort, cache) = run_flow(cfg, &target, &grid, &mut out)?;
        (0, abort, cache)
    } else {
        run_particles(cfg, &target, &grid, &mut out)?
    };
    let manifest = RunManifest {
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
        output_dir: out_dir.to_path_buf(),
        wall_time_secs: started.elapsed().as_secs_f64(),
        files: out.files,
        clamp_events,
        abort,
        basis_cache: cache.map(|c| c.as_str().to_string()),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(out_dir.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}

fn run_particles(
    cfg: &ExperimentConfig,
    target: &TargetDistribution,
    grid: &Grid,
    out: &mut Output,
) -> Result<(usize, Option<String>, Option<CacheStatus>)> {
    let (record, cache) = simulate_particles(cfg, target, grid)?;
    write_particle_outputs(&record, out)?;
    Ok((record.clamp_events, record.abort.clone(), cache))
}

/// Particle run of a resolved particle-method config, without writing files.
pub fn simulate_particles(
    cfg: &ExperimentConfig,
    target: &TargetDistribution,
    grid: &Grid,
) -> Result<(RunRecord, Option<CacheStatus>)> {
    if cfg.method.is_flow() {
        return Err(Error::InvalidSpec("not a particle method".into()));
    }
    let (kernel, cache) = build_kernel(cfg, target, grid)?;
    let particles = cfg.particles.as_ref().expect("resolved");
    let (init_lower, init_upper) = cfg.init_box().expect("resolved");
    let dynamics = match (cfg.method, cfg.kernel) {
        (Method::Svgd, Some(KernelConfig::Rbf { bandwidth_every })) => Dynamics::Svgd {
            bandwidth_every: bandwidth_every.unwrap_or(1),
        },
        (Method::Svgd, _) => Dynamics::Svgd { bandwidth_every: 1 },
        _ => Dynamics::Lawgd,
    };
    let spec = RunSpec {
        dynamics,
        schedule: cfg.schedule.expect("resolved").to_schedule(),
        n_iters: cfg.n_iters.expect("resolved"),
        snapshots: SnapshotPlan::Every(cfg.snapshot_every.unwrap_or(100)),
        n_particles: particles.n,
        init_lower,
        init_upper,
        seed: particles.seed,
        guard: Some(DivergenceGuard::from_grid(grid)),
    };
    let ctx = DiagnosticContext::new(target, grid)?;
    Ok((run(&spec, target, &kernel, ctx.as_ref())?, cache))
}

/// `iteration,particle,x0[,x1]`
pub fn positions_csv(record: &RunRecord) -> (String, usize) {
    let d = record.dim;
    let mut s = String::from("iteration,particle");
    for c in 0..d {
        let _ = write!(s, ",x{c}");
    }
    s.push('\n');
    let mut rows = 0;
    for snap in &record.snapshots {
        for (i, p) in snap.positions.chunks(d).enumerate() {
            let _ = write!(s, "{},{i}", snap.iteration);
            for x in p {
                let _ = write!(s, ",{x}");
            }
            s.push('\n');
            rows += 1;
        }
    }
    (s, rows)
}

/// `iteration,kl,chi2,w1,clamps`
pub fn diagnostics_csv(record: &RunRecord) -> (String, usize) {
    let mut s = String::from("iteration,kl,chi2,w1,clamps\n");
    for r in &record.diagnostics {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.iteration, r.kl, r.chi2, r.w1, r.clamps
        );
    }
    (s, record.diagnostics.len())
}

fn write_particle_outputs(record: &RunRecord, out: &mut Output) -> Result<()> {
    let (csv, rows) = positions_csv(record);
    out.write("positions.csv", &csv, rows)?;
    let (csv, rows) = diagnostics_csv(record);
    out.write("diagnostics.csv", &csv, rows)?;

    // one gnuplot data block per snapshot, selectable with `index`
    let mut dat = String::new();
    let mut rows = 0;
    for snap in &record.snapshots {
        let _ = writeln!(dat, "# iteration {}", snap.iteration);
        for p in snap.positions.chunks(record.dim) {
            let line: Vec<String> = p.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(dat, "{}", line.join(" "));
            rows += 1;
        }
        dat.push_str("\n\n");
    }
    out.write("plot.dat", &dat, rows)?;
    let last = record.snapshots.len().saturating_sub(1);
    let gp = if record.dim == 2 {
        format!(
            "set size square\nset xlabel 'x0'\nset ylabel 'x1'\n\
             plot 'plot.dat' index 0 using 1:2 with points pt 7 ps 0.5 title 'initial', \\\n     \
             'plot.dat' index {last} using 1:2 with points pt 7 title 'final'\n"
        )
    } else {
        format!(
            "binwidth = 0.25\nbin(x) = binwidth * floor(x / binwidth)\nset xlabel 'x'\n\
             plot 'plot.dat' index {last} using (bin($1)):(1.0) smooth frequency with boxes title 'final particles'\n"
        )
    };
    out.write("plot.gp", &gp, gp.lines().count())
}

fn run_flow(
    cfg: &ExperimentConfig,
    target: &TargetDistribution,
    grid: &Grid,
    out: &mut Output,
) -> Result<(Option<String>, Option<CacheStatus>)> {
    let (result, cache) = simulate_flow(cfg, target, grid)?;
    match result {
        Ok(record) => {
            write_flow_outputs(&record, grid, out)?;
            Ok((None, cache))
        }
        Err(e @ (Error::Unstable(_) | Error::Numeric(_))) => {
            log::error!("flow aborted: {e}");
            Ok((Some(e.to_string()), cache))
        }
        Err(e) => Err(e),
    }
}

/// Density-flow run of a resolved flow config, without writing files. The
/// outer error covers setup; the inner result is the integration itself.
pub fn simulate_flow(
    cfg: &ExperimentConfig,
    target: &TargetDistribution,
    grid: &Grid,
) -> Result<(Result<FlowRecord>, Option<CacheStatus>)> {
    let Some(flow) = cfg.flow.filter(|_| cfg.method.is_flow()) else {
        return Err(Error::InvalidSpec("not a flow method".into()));
    };
    let pi = normalized_pdf_on_grid(target, grid)?;
    let mu0_target = make_gaussian_mixture(GaussianMixtureSpec::gaussian(
        &[flow.mu0.mean],
        flow.mu0.variance,
    ))?;
    let mu0 = normalized_pdf_on_grid(&mu0_target, grid)?;
    let plan = FlowRecordPlan {
        divergence_every: flow.record_every,
        density_every: flow.density_every,
    };
    Ok(match cfg.method {
        Method::LawgdFlow => {
            let k = match cfg.kernel {
                Some(KernelConfig::Spectral { k, .. }) => k,
                _ => None,
            };
            let cache = cfg.basis_cache.as_deref().map(Path::new);
            let (basis, status) = load_or_build(target, grid, k, cache)?;
            let r = evolve(
                FlowKind::LawgdDensity(&basis),
                &mu0,
                &pi,
                flow.t_end,
                flow.dt,
                plan,
            );
            (r, Some(status))
        }
        _ => (
            evolve(FlowKind::Csf, &mu0, &pi, flow.t_end, flow.dt, plan),
            None,
        ),
    })
}

/// `t,node_index,x,mu`
pub fn densities_csv(record: &FlowRecord, grid: &Grid) -> (String, usize) {
    let mut s = String::from("t,node_index,x,mu\n");
    let mut rows = 0;
    let mut x = [0.0];
    for (t, mu) in &record.densities {
        for (i, m) in mu.values().iter().enumerate() {
            grid.node_into(i, &mut x);
            let _ = writeln!(s, "{t},{i},{},{m}", x[0]);
            rows += 1;
        }
    }
    (s, rows)
}

/// `t,kl,chi2`
pub fn divergence_csv(record: &FlowRecord) -> (String, usize) {
    let mut s = String::from("t,kl,chi2\n");
    for p in &record.divergences {
        let _ = writeln!(s, "{},{},{}", p.t, p.kl, p.chi2);
    }
    (s, record.divergences.len())
}

fn write_flow_outputs(record: &FlowRecord, grid: &Grid, out: &mut Output) -> Result<()> {
    if !record.densities.is_empty() {
        let (csv, rows) = densities_csv(record, grid);
        out.write("densities.csv", &csv, rows)?;
    }
    let (csv, rows) = divergence_csv(record);
    out.write("divergence.csv", &csv, rows)?;
    let mut dat = String::from("# t kl chi2\n");
    for p in &record.divergences {
        let _ = writeln!(dat, "{} {} {}", p.t, p.kl, p.chi2);
    }
    out.write("plot.dat", &dat, record.divergences.len())?;
    let gp = "set logscale y\nset xlabel 't'\n\
              plot 'plot.dat' using 1:2 with lines title 'KL', '' using 1:3 with lines title 'chi2'\n";
    out.write("plot.gp", gp, gp.lines().count())
}
