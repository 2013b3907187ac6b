//! Sample paths of Brownian motion, fractional Brownian motion and the fOU
//! process, and the kernel transforms between them.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernels::{discretize, fbm_covariance, FouParams, KernelMatrix, KernelRole};

/// Which process a path is a realization of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Process {
    Bm,
    Fbm,
    Fou,
    /// `e^{-θt} V_0 + U_t`, the stationary solution started from a given `V_0`.
    Stationary,
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Process::Bm => "W",
            Process::Fbm => "fBm",
            Process::Fou => "fOU",
            Process::Stationary => "stationary fOU",
        })
    }
}

/// A sampled path on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: Grid,
    values: Vec<f64>,
    process: Process,
    params: Option<FouParams>,
}

impl Path {
    /// Wraps values as a path; all processes except `Stationary` start at 0.
    pub fn new(grid: Grid, values: Vec<f64>, process: Process, params: Option<FouParams>) -> Result<Self> {
        if values.len() != grid.n() + 1 {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.n() + 1,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite path value at index {i}")));
        }
        if process != Process::Stationary && values[0] != 0.0 {
            return Err(Error::Domain(format!("{process} paths start at 0, got {}", values[0])));
        }
        Ok(Self { grid, values, process, params })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn process(&self) -> Process {
        self.process
    }

    pub fn params(&self) -> Option<&FouParams> {
        self.params.as_ref()
    }

    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn expect(&self, process: Process) -> Result<()> {
        if self.process != process {
            return Err(Error::WrongProcess {
                expected: process.to_string(),
                found: self.process.to_string(),
            });
        }
        Ok(())
    }
}

/// Master seed plus path index; each pair owns an independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSpec {
    pub master: u64,
    pub path_index: u64,
}

impl SeedSpec {
    pub fn new(master: u64, path_index: u64) -> Self {
        Self { master, path_index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.path_index);
        rng
    }
}

/// `n` independent standard normals from the stream of `seed`.
pub fn standard_normals(seed: SeedSpec, n: usize) -> Vec<f64> {
    let mut rng = seed.rng();
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Brownian motion on `grid`.
pub fn sample_bm(grid: &Grid, seed: SeedSpec) -> Path {
    let sd = grid.step().sqrt();
    let mut values = Vec::with_capacity(grid.n() + 1);
    let mut w = 0.0;
    values.push(w);
    for z in standard_normals(seed, grid.n()) {
        w += sd * z;
        values.push(w);
    }
    Path { grid: *grid, values, process: Process::Bm, params: None }
}

/// Kernel matrices for one parameter set and grid, built on first use.
#[derive(Debug)]
pub struct TransferEngine {
    params: FouParams,
    grid: Grid,
    k: OnceLock<KernelMatrix>,
    k_inv: OnceLock<KernelMatrix>,
    l: OnceLock<KernelMatrix>,
    l_inv: OnceLock<KernelMatrix>,
}

impl TransferEngine {
    pub fn new(params: FouParams, grid: Grid) -> Self {
        Self {
            params,
            grid,
            k: OnceLock::new(),
            k_inv: OnceLock::new(),
            l: OnceLock::new(),
            l_inv: OnceLock::new(),
        }
    }

    pub fn params(&self) -> &FouParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn matrix(&self, role: KernelRole) -> &KernelMatrix {
        let cell = match role {
            KernelRole::K => &self.k,
            KernelRole::KInv => &self.k_inv,
            KernelRole::L => &self.l,
            KernelRole::LInv => &self.l_inv,
        };
        cell.get_or_init(|| discretize(role, &self.params, &self.grid))
    }

    fn transform(&self, x: &Path, from: Process, to: Process, role: KernelRole) -> Result<Path> {
        x.expect(from)?;
        self.grid.check_same(x.grid())?;
        let mut values = self.matrix(role).apply_values(x.values())?;
        values[0] = 0.0;
        Ok(Path { grid: self.grid, values, process: to, params: Some(self.params) })
    }

    fn hurst_half(&self) -> bool {
        self.params.hurst == 0.5
    }

    /// `B^H_t = ∫_0^t K(t,s) dW_s`.
    pub fn fbm_from_bm(&self, w: &Path) -> Result<Path> {
        if self.hurst_half() {
            w.expect(Process::Bm)?;
            self.grid.check_same(w.grid())?;
            return Ok(Path { process: Process::Fbm, params: Some(self.params), ..w.clone() });
        }
        self.transform(w, Process::Bm, Process::Fbm, KernelRole::K)
    }

    /// `W_t = ∫_0^t K⁻¹(t,s) dB^H_s`.
    pub fn bm_from_fbm(&self, b: &Path) -> Result<Path> {
        if self.hurst_half() {
            b.expect(Process::Fbm)?;
            self.grid.check_same(b.grid())?;
            return Ok(Path { process: Process::Bm, params: None, ..b.clone() });
        }
        let mut w = self.transform(b, Process::Fbm, Process::Bm, KernelRole::KInv)?;
        w.params = None;
        Ok(w)
    }

    /// `U_t = ∫_0^t L(t,s) dW_s`.
    pub fn fou_from_bm(&self, w: &Path) -> Result<Path> {
        self.transform(w, Process::Bm, Process::Fou, KernelRole::L)
    }

    /// `W_t = ∫_0^t L⁻¹(t,s) dU_s`.
    pub fn bm_from_fou(&self, u: &Path) -> Result<Path> {
        let mut w = self.transform(u, Process::Fou, Process::Bm, KernelRole::LInv)?;
        w.params = None;
        Ok(w)
    }

    /// `U_t = σ [B^H_t - θ ∫_0^t e^{-θ(t-s)} B^H_s ds]`, trapezoidal in `s`.
    pub fn fou_from_fbm(&self, b: &Path) -> Result<Path> {
        b.expect(Process::Fbm)?;
        self.grid.check_same(b.grid())?;
        let FouParams { theta, sigma, .. } = self.params;
        let h = self.grid.step();
        let decay = (-theta * h).exp();
        let bv = b.values();
        let mut values = Vec::with_capacity(bv.len());
        let mut integral = 0.0;
        values.push(sigma * (bv[0] - theta * integral));
        for i in 0..bv.len() - 1 {
            integral = decay * integral + 0.5 * h * (decay * bv[i] + bv[i + 1]);
            values.push(sigma * (bv[i + 1] - theta * integral));
        }
        values[0] = 0.0;
        Ok(Path { grid: self.grid, values, process: Process::Fou, params: Some(self.params) })
    }

    /// Inverse of [`TransferEngine::fou_from_fbm`]: `B^H_t = [U_t + θ∫_0^t U_s ds]/σ`.
    pub fn fbm_from_fou(&self, u: &Path) -> Result<Path> {
        u.expect(Process::Fou)?;
        self.grid.check_same(u.grid())?;
        let FouParams { theta, sigma, .. } = self.params;
        let h = self.grid.step();
        let uv = u.values();
        let mut values = Vec::with_capacity(uv.len());
        let mut integral = 0.0;
        values.push(0.0);
        for i in 0..uv.len() - 1 {
            integral += 0.5 * h * (uv[i] + uv[i + 1]);
            values.push((uv[i + 1] + theta * integral) / sigma);
        }
        Ok(Path { grid: self.grid, values, process: Process::Fbm, params: Some(self.params) })
    }
}

fn engine(x: &Path, params: FouParams) -> TransferEngine {
    TransferEngine::new(params, *x.grid())
}

/// `B^H = ∫ K dW` on the path's grid.
pub fn fbm_from_bm(w: &Path, hurst: f64) -> Result<Path> {
    engine(w, FouParams::fbm(hurst)?).fbm_from_bm(w)
}

/// `W = ∫ K⁻¹ dB^H` on the path's grid.
pub fn bm_from_fbm(b: &Path, hurst: f64) -> Result<Path> {
    engine(b, FouParams::fbm(hurst)?).bm_from_fbm(b)
}

/// `U = ∫ L dW` on the path's grid.
pub fn fou_from_bm(w: &Path, params: &FouParams) -> Result<Path> {
    engine(w, *params).fou_from_bm(w)
}

/// `U` from `B^H` by the integrated Langevin equation.
pub fn fou_from_fbm(b: &Path, params: &FouParams) -> Result<Path> {
    engine(b, *params).fou_from_fbm(b)
}

/// `W = ∫ L⁻¹ dU` on the path's grid.
pub fn bm_from_fou(u: &Path, params: &FouParams) -> Result<Path> {
    engine(u, *params).bm_from_fou(u)
}

/// `t ↦ e^{-θt} v0 + U_t`.
pub fn stationary_connection(u: &Path, v0: f64, params: &FouParams) -> Result<Path> {
    u.expect(Process::Fou)?;
    if !v0.is_finite() {
        return Err(Error::Domain(format!("initial value must be finite, got {v0}")));
    }
    let values = u
        .grid()
        .points()
        .into_iter()
        .zip(u.values())
        .map(|(t, x)| (-params.theta * t).exp() * v0 + x)
        .collect();
    Ok(Path { grid: *u.grid(), values, process: Process::Stationary, params: Some(*params) })
}

/// Exact fBm sampler from the Cholesky factor of the grid covariance.
#[derive(Debug, Clone)]
pub struct FbmSampler {
    grid: Grid,
    hurst: f64,
    factor: DMatrix<f64>,
    jitter: f64,
}

impl FbmSampler {
    pub fn new(grid: &Grid, hurst: f64) -> Result<Self> {
        FouParams::fbm(hurst)?;
        let n = grid.n();
        let cov = DMatrix::from_fn(n, n, |i, j| fbm_covariance(hurst, grid.point(i + 1), grid.point(j + 1)));
        let (factor, jitter) = match Cholesky::new(cov.clone()) {
            Some(c) => (c.l(), 0.0),
            None => {
                let jitter = 1e-12 * cov.diagonal().max();
                let mut shifted = cov;
                for i in 0..n {
                    shifted[(i, i)] += jitter;
                }
                let c = Cholesky::new(shifted).ok_or_else(|| {
                    Error::Factorization(format!(
                        "fBm covariance with H = {hurst} and n = {n} is numerically singular; use fewer steps"
                    ))
                })?;
                (c.l(), jitter)
            }
        };
        Ok(Self { grid: *grid, hurst, factor, jitter })
    }

    /// Diagonal shift added to make the factorization succeed (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn sample(&self, seed: SeedSpec) -> Path {
        let n = self.grid.n();
        let z = DVector::from_vec(standard_normals(seed, n));
        let b = &self.factor * z;
        let mut values = Vec::with_capacity(n + 1);
        values.push(0.0);
        values.extend(b.iter());
        Path {
            grid: self.grid,
            values,
            process: Process::Fbm,
            params: Some(FouParams { theta: 0.0, sigma: 1.0, hurst: self.hurst }),
        }
    }
}

/// One exact fBm path (factorizes the covariance on every call; reuse an
/// [`FbmSampler`] for many paths).
pub fn fbm_exact(grid: &Grid, hurst: f64, seed: SeedSpec) -> Result<Path> {
    Ok(FbmSampler::new(grid, hurst)?.sample(seed))
}
