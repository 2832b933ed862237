//! Binary cache for finite-difference spectral bases.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic        8 bytes   "SFBASIS1"
//! version      u32       1
//! fingerprint  32 bytes  SHA-256 of (target spec, grid spec, k, boundary closure)
//! dim          u32       1 or 2
//! per axis     f64 lower, f64 upper, u64 n
//! k            u64
//! per mode     f64 λ, then n_nodes f64 φ values, then dim × n_nodes f64
//!              gradient values (axis-major)
//! ```
//!
//! Values are stored bit-for-bit, so a loaded basis is identical to the one
//! that was written.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{Grid, Grid1D, Grid2D};
use crate::spectral::{build_fd_basis, GridBasis};
use crate::target::{GaussianMixtureSpec, TargetDistribution};

const MAGIC: &[u8; 8] = b"SFBASIS1";
const VERSION: u32 = 1;
const BOUNDARY_CLOSURE: &str = "dirichlet";

pub type Fingerprint = [u8; 32];

/// Cache key of a basis. `k = None` means all retained modes.
pub fn basis_fingerprint(spec: &GaussianMixtureSpec, grid: &Grid, k: Option<usize>) -> Fingerprint {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(spec).expect("spec serializes"));
    for axis in grid.axes() {
        h.update(axis.lower.to_le_bytes());
        h.update(axis.upper.to_le_bytes());
        h.update((axis.n as u64).to_le_bytes());
    }
    h.update(match k {
        Some(k) => format!("k={k}"),
        None => "k=all".into(),
    });
    h.update(BOUNDARY_CLOSURE);
    h.finalize().into()
}

pub fn fingerprint_hex(fp: &Fingerprint) -> String {
    fp.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_basis(path: &Path, basis: &GridBasis, fingerprint: &Fingerprint) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    let (n, d, k) = (basis.grid.len(), basis.grid.dim(), basis.k());
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(fingerprint)?;
    w.write_all(&(d as u32).to_le_bytes())?;
    for axis in basis.grid.axes() {
        w.write_all(&axis.lower.to_le_bytes())?;
        w.write_all(&axis.upper.to_le_bytes())?;
        w.write_all(&(axis.n as u64).to_le_bytes())?;
    }
    w.write_all(&(k as u64).to_le_bytes())?;
    for m in 0..k {
        w.write_all(&basis.eigenvalues[m].to_le_bytes())?;
        for i in 0..n {
            w.write_all(&basis.phi[i * k + m].to_le_bytes())?;
        }
        for a in 0..d {
            for i in 0..n {
                w.write_all(&basis.grad[(i * d + a) * k + m].to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, len: usize) -> Result<&[u8]> {
        let end = self.pos + len;
        if end > self.bytes.len() {
            return Err(Error::Cache("file is truncated".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

/// Reads a cache file, returning the basis and its stored fingerprint.
pub fn read_basis(path: &Path) -> Result<(GridBasis, Fingerprint)> {
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(8)? != MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Cache(format!("unsupported version {version}")));
    }
    let fingerprint: Fingerprint = r.take(32)?.try_into().expect("32 bytes");
    let d = r.u32()? as usize;
    let mut axes = Vec::with_capacity(2);
    for _ in 0..d {
        let (lower, upper, n) = (r.f64()?, r.f64()?, r.u64()? as usize);
        axes.push(Grid1D::new(lower, upper, n).map_err(|e| Error::Cache(e.to_string()))?);
    }
    let grid = match (d, axes.as_slice()) {
        (1, [x]) => Grid::One(*x),
        (2, [x, y]) => Grid::Two(Grid2D::new(*x, *y).map_err(|e| Error::Cache(e.to_string()))?),
        _ => return Err(Error::Cache(format!("unsupported dimension {d}"))),
    };
    let k = r.u64()? as usize;
    let n = grid.len();
    let expected = k
        .checked_mul(8 * (1 + n * (1 + d)))
        .ok_or_else(|| Error::Cache("implausible mode count".into()))?;
    if bytes.len() - r.pos != expected {
        return Err(Error::Cache(format!(
            "payload is {} bytes, expected {expected}",
            bytes.len() - r.pos
        )));
    }
    let mut eigenvalues = Vec::with_capacity(k);
    let mut phi = vec![0.0; n * k];
    let mut grad = vec![0.0; n * d * k];
    for m in 0..k {
        eigenvalues.push(r.f64()?);
        for i in 0..n {
            phi[i * k + m] = r.f64()?;
        }
        for a in 0..d {
            for i in 0..n {
                grad[(i * d + a) * k + m] = r.f64()?;
            }
        }
    }
    Ok((
        GridBasis {
            grid,
            eigenvalues,
            phi,
            grad,
        },
        fingerprint,
    ))
}

/// How a basis was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    /// No cache path configured.
    Uncached,
    /// Loaded from a cache whose fingerprint matched.
    Hit,
    /// Computed and written to the cache path.
    Built,
}

impl CacheStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CacheStatus::Uncached => "uncached",
            CacheStatus::Hit => "hit",
            CacheStatus::Built => "built",
        }
    }
}

/// Loads the basis from `cache` when its fingerprint matches, otherwise
/// builds it (and writes the cache if a path was given). A stale or corrupt
/// cache is rebuilt with a warning.
pub fn load_or_build(
    target: &TargetDistribution,
    grid: &Grid,
    k: Option<usize>,
    cache: Option<&Path>,
) -> Result<(GridBasis, CacheStatus)> {
    let fp = basis_fingerprint(target.spec(), grid, k);
    let Some(path) = cache else {
        return Ok((build_fd_basis(target, grid, k)?, CacheStatus::Uncached));
    };
    if path.exists() {
        match read_basis(path) {
            Ok((basis, stored)) if stored == fp => return Ok((basis, CacheStatus::Hit)),
            Ok(_) => log::warn!(
                "basis cache {} has a different fingerprint; rebuilding",
                path.display()
            ),
            Err(e) => log::warn!(
                "basis cache {} unreadable ({e}); rebuilding",
                path.display()
            ),
        }
    }
    let basis = build_fd_basis(target, grid, k)?;
    write_basis(path, &basis, &fp)?;
    Ok((basis, CacheStatus::Built))
}
