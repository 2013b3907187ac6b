//! Prediction of the fOU process from its own past.
//!
//! With `U_t = ∫_0^t L(t,v) dW_v` and `W` adapted to the filtration of `U`,
//!
//! ```text
//! E[U_t | U_s, s ≤ u] = ∫_0^u L(t,v) dW_v = U_u + ∫_0^u Ψ(t,s|u) dU_s
//! Ψ(t,·|u)            = (L*_u)⁻¹[L(t,·) - L(u,·)]
//! Cov[U_t, U_s | u]    = ∫_u^{t∧s} L(t,v) L(s,v) dv
//! ```
//!
//! where `(L*_u)⁻¹` is the integrand operator on `[0, u]`. Since
//! `(L*_u)⁻¹[L(u,·)] ≡ 1`, `Ψ` is computed as `(L*_u)⁻¹[L(t,·)] - 1`, which
//! avoids the diagonal singularity of `L(u,·)`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use std::io::Write;

use crate::error::{domain, Error, Result};
use crate::grid::Grid;
use crate::kernels::{FouParams, KernelEvaluator};
use crate::quadrature::{graded_towards_zero, tanh_sinh, GaussRule, NODES};
use crate::simulation::{Path, Process};
use crate::transfer_ops::TransferOps;

const COV_TOL: f64 = 1e-13;
const GRADED_LEVELS: i32 = 24;

/// Covariance of the fOU process started at 0, from the Gram form of `L`.
#[derive(Debug)]
pub struct FouCovariance {
    ev: KernelEvaluator,
}

impl FouCovariance {
    pub fn new(params: FouParams) -> Self {
        Self { ev: KernelEvaluator::new(params) }
    }

    pub fn params(&self) -> &FouParams {
        self.ev.params()
    }

    /// `Cov[U_t, U_s]`.
    pub fn at(&self, t: f64, s: f64) -> f64 {
        self.gram(t, s, 0.0, t.min(s))
    }

    /// `∫_lo^hi L(t,v) L(s,v) dv` for `hi ≤ t ∧ s`.
    pub fn gram(&self, t: f64, s: f64, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let f = |v: f64| self.ev.l(t, v) * self.ev.l(s, v);
        // the factor with the nearer diagonal is nearly singular just above
        // `hi` when H < 1/2; split so that tanh-sinh sees it at an endpoint
        let mid = 0.5 * (lo + hi);
        tanh_sinh(lo, mid, COV_TOL, f) + tanh_sinh(mid, hi, COV_TOL, f)
    }

    /// Covariance matrix of `U` at `points`.
    ///
    /// All entries share one quadrature: the intervals between consecutive
    /// points, each graded towards its right end (the diagonal of `L` there)
    /// and the first also towards 0.
    pub fn matrix(&self, points: &[f64]) -> DMatrix<f64> {
        let mut edges: Vec<f64> = points.iter().copied().filter(|&p| p > 0.0).collect();
        edges.push(0.0);
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let graded = graded_towards_zero(&GaussRule::legendre(8), 1.0, GRADED_LEVELS);
        let plain = GaussRule::legendre(NODES);
        let mut nodes: Vec<(f64, f64)> = Vec::new();
        for e in edges.windows(2) {
            let (a, b) = (e[0], e[1]);
            let half = 0.5 * (b - a);
            if a == 0.0 {
                nodes.extend(graded.iter().map(|(y, w)| (half * y, half * w)));
            } else {
                // pieces no longer than their distance to 0, where L blows up
                let mut lo = a;
                while lo < a + half {
                    let hi = (3.0 * lo).min(a + half);
                    let w = hi - lo;
                    nodes.extend(plain.nodes.iter().zip(&plain.weights).map(|(y, wt)| (lo + w * y, w * wt)));
                    lo = hi;
                }
            }
            nodes.extend(graded.iter().map(|(y, w)| (b - half * y, half * w)));
        }
        // L(p, ·) at every node, weighted by the square root of the node weight
        let cols: Vec<Vec<f64>> = points
            .par_iter()
            .map(|&p| nodes.iter().map(|&(v, w)| if v < p { self.ev.l(p, v) * w.sqrt() } else { 0.0 }).collect())
            .collect();
        let m = points.len();
        let upper: Vec<(usize, usize, f64)> = (0..m)
            .into_par_iter()
            .flat_map_iter(|i| (i..m).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, cols[i].iter().zip(&cols[j]).map(|(x, y)| x * y).sum()))
            .collect();
        let mut out = DMatrix::zeros(m, m);
        for (i, j, v) in upper {
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
        out
    }
}

/// `Cov[U_t, U_s]`.
pub fn fou_covariance(params: &FouParams, t: f64, s: f64) -> f64 {
    FouCovariance::new(*params).at(t, s)
}

/// Conditional means and covariances at target times given the path on `[0, u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub u: f64,
    pub targets: Vec<f64>,
    pub mean: Vec<f64>,
    /// `cov[i][j] = Cov[U_{t_i}, U_{t_j} | u]`.
    pub cov: Vec<Vec<f64>>,
}

impl PredictionResult {
    pub fn variance(&self) -> Vec<f64> {
        (0..self.targets.len()).map(|i| self.cov[i][i]).collect()
    }

    /// `t,mean,var` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "mean", "var"])?;
        for (i, t) in self.targets.iter().enumerate() {
            w.write_record(&[t.to_string(), format!("{:e}", self.mean[i]), format!("{:e}", self.cov[i][i])])?;
        }
        w.flush()
    }

    /// `t1,t2,value` rows over all target pairs.
    pub fn write_cov_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t1", "t2", "value"])?;
        for (i, t1) in self.targets.iter().enumerate() {
            for (j, t2) in self.targets.iter().enumerate() {
                w.write_record(&[t1.to_string(), t2.to_string(), format!("{:e}", self.cov[i][j])])?;
            }
        }
        w.flush()
    }
}

/// Predictor for a fixed observation grid and base time `u`.
#[derive(Debug)]
pub struct Predictor {
    history: Grid,
    ops: TransferOps,
    cov: FouCovariance,
}

impl Predictor {
    /// `grid` is the observation grid; `u` must be one of its points.
    pub fn new(params: FouParams, grid: &Grid, u: f64) -> Result<Self> {
        let m = grid
            .index_of(u)
            .ok_or_else(|| Error::Domain(format!("u = {u} is not a point of the observation grid")))?;
        if m == 0 {
            return Err(Error::EmptyHistory);
        }
        let history = grid.truncated(m)?;
        Ok(Self {
            history,
            ops: TransferOps::new(params, history),
            cov: FouCovariance::new(params),
        })
    }

    pub fn params(&self) -> &FouParams {
        self.ops.params()
    }

    pub fn u(&self) -> f64 {
        self.history.horizon()
    }

    /// The grid `[0, u]` the past is observed on.
    pub fn history(&self) -> &Grid {
        &self.history
    }

    fn check_target(&self, t: f64) -> Result<()> {
        if !(t >= self.u()) || !t.is_finite() {
            return domain(format!("target {t} must not precede u = {}", self.u()));
        }
        Ok(())
    }

    /// `Ψ(t,s|u)` for `0 < s < u ≤ t`.
    pub fn psi(&self, t: f64, s: f64) -> Result<f64> {
        self.check_target(t)?;
        if !(s > 0.0 && s < self.u()) {
            return domain(format!("s = {s} must lie in (0, {})", self.u()));
        }
        if t == self.u() {
            return Ok(0.0);
        }
        let ev = self.ops.kernels();
        Ok(self.ops.l_star_inv_at(&|v: f64| ev.l(t, v), s) - 1.0)
    }

    /// Weights of the increments `ΔU_j` on `[0, u]` in the conditional mean
    /// at `t`: cell averages of `Ψ(t,·|u)`.
    pub fn psi_weights(&self, t: f64) -> Result<Vec<f64>> {
        self.check_target(t)?;
        if t == self.u() {
            return Ok(vec![0.0; self.history.n()]);
        }
        let ev = self.ops.kernels();
        let mut w = self.ops.l_star_inv_samples(&|v: f64| ev.l(t, v)).cell_means;
        w.iter_mut().for_each(|x| *x -= 1.0);
        Ok(w)
    }

    /// The observations on `[0, u]` of an fOU path.
    fn history_of<'a>(&self, path: &'a Path) -> Result<&'a [f64]> {
        if !matches!(path.process(), Process::Fou) {
            return Err(Error::WrongProcess { expected: Process::Fou.to_string(), found: path.process().to_string() });
        }
        let g = path.grid();
        let m = self.history.n();
        if g.index_of(self.u()) != Some(m) || (g.step() - self.history.step()).abs() > 1e-12 * g.step() {
            return domain(format!("u = {} is beyond the observed range or off the path grid", self.u()));
        }
        Ok(&path.values()[..=m])
    }

    /// `Û(t) = U_u + Σ_j Ψ_j ΔU_j` at each target.
    pub fn conditional_mean(&self, path: &Path, targets: &[f64]) -> Result<Vec<f64>> {
        let obs = self.history_of(path)?;
        let weights = targets.par_iter().map(|&t| self.psi_weights(t)).collect::<Result<Vec<_>>>()?;
        Ok(weights.iter().map(|w| mean_from(w, obs)).collect())
    }

    /// `∫_u^{t∧s} L(t,v) L(s,v) dv`.
    pub fn conditional_cov(&self, t: f64, s: f64) -> Result<f64> {
        self.check_target(t)?;
        self.check_target(s)?;
        Ok(self.cov.gram(t, s, self.u(), t.min(s)))
    }

    /// `R(t,s) - ∫_0^u L(t,v) L(s,v) dv`, the difference form of
    /// [`Predictor::conditional_cov`].
    pub fn conditional_cov_difference(&self, t: f64, s: f64) -> Result<f64> {
        self.check_target(t)?;
        self.check_target(s)?;
        Ok(self.cov.at(t, s) - self.cov.gram(t, s, 0.0, self.u()))
    }

    pub fn predict(&self, path: &Path, targets: &[f64]) -> Result<PredictionResult> {
        let mean = self.conditional_mean(path, targets)?;
        let k = targets.len();
        let cov = (0..k)
            .map(|i| (0..k).map(|j| self.conditional_cov(targets[i], targets[j])).collect())
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Ok(PredictionResult { u: self.u(), targets: targets.to_vec(), mean, cov })
    }
}

/// Quadrature partition of `[0, u]` for pointwise [`psi`].
const PSI_STEPS: usize = 64;

/// `Ψ(t,s|u)` for `0 < s < u ≤ t`.
pub fn psi(params: &FouParams, t: f64, s: f64, u: f64) -> Result<f64> {
    if u <= 0.0 {
        return Err(Error::EmptyHistory);
    }
    Predictor::new(*params, &Grid::new(u, PSI_STEPS)?, u)?.psi(t, s)
}

/// Conditional means at `targets` of an fOU path observed on `[0, u]`.
pub fn conditional_mean(path: &Path, params: &FouParams, u: f64, targets: &[f64]) -> Result<Vec<f64>> {
    Predictor::new(*params, path.grid(), u)?.conditional_mean(path, targets)
}

/// `Cov[U_t, U_s | U_v, v ≤ u] = ∫_u^{t∧s} L(t,v) L(s,v) dv` for `t, s ≥ u`.
pub fn conditional_cov(params: &FouParams, t: f64, s: f64, u: f64) -> Result<f64> {
    if !(t >= u && s >= u && u >= 0.0) {
        return domain(format!("need t, s ≥ u ≥ 0, got t = {t}, s = {s}, u = {u}"));
    }
    Ok(FouCovariance::new(*params).gram(t, s, u, t.min(s)))
}

/// `U_u + Σ_j w_j ΔU_j` for observations `obs` on `[0, u]`.
pub fn mean_from(weights: &[f64], obs: &[f64]) -> f64 {
    let last = obs[obs.len() - 1];
    last + weights.iter().zip(obs.windows(2)).map(|(w, d)| w * (d[1] - d[0])).sum::<f64>()
}

/// Exact Gaussian conditioning of the discretized process on its grid values
/// in `(0, u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningOracle {
    /// `weights[k][i]` multiplies `U_{t_{i+1}}` in the mean at target `k`.
    pub weights: Vec<Vec<f64>>,
    pub cov: Vec<Vec<f64>>,
    /// Diagonal jitter added to the past covariance, 0 when none was needed.
    pub jitter: f64,
}

impl ConditioningOracle {
    /// Conditional mean at every target for observations on `[0, u]`.
    pub fn mean(&self, obs: &[f64]) -> Vec<f64> {
        self.weights.iter().map(|w| w.iter().zip(&obs[1..]).map(|(a, b)| a * b).sum()).collect()
    }
}

/// Conditional mean weights and covariance of `U` at `targets` given
/// `U_{t_1}, ..., U_{t_m}` with `t_m = u`, by Schur complement.
pub fn gaussian_conditioning_oracle(
    params: &FouParams,
    grid: &Grid,
    u: f64,
    targets: &[f64],
) -> Result<ConditioningOracle> {
    let m = grid
        .index_of(u)
        .ok_or_else(|| Error::Domain(format!("u = {u} is not a point of the observation grid")))?;
    if let Some(t) = targets.iter().find(|&&t| !(t >= u)) {
        return domain(format!("target {t} must not precede u = {u}"));
    }
    let cov = FouCovariance::new(*params);
    let k = targets.len();
    let points: Vec<f64> = (1..=m).map(|i| grid.point(i)).chain(targets.iter().copied()).collect();
    let joint = cov.matrix(&points);
    let target_block = joint.view((m, m), (k, k)).into_owned();
    if m == 0 {
        return Ok(ConditioningOracle {
            weights: vec![Vec::new(); k],
            cov: rows(&target_block),
            jitter: 0.0,
        });
    }
    let past = joint.view((0, 0), (m, m)).into_owned();
    let cross = joint.view((m, 0), (k, m)).into_owned();
    let mut jitter = 0.0;
    let chol = match past.clone().cholesky() {
        Some(c) => c,
        None => {
            jitter = 1e-10;
            (past + DMatrix::identity(m, m) * jitter)
                .cholesky()
                .ok_or_else(|| Error::Factorization("past covariance is not positive definite".into()))?
        }
    };
    // weights = cross · past⁻¹
    let weights = chol.solve(&cross.transpose()).transpose();
    let cond = target_block - &weights * cross.transpose();
    Ok(ConditioningOracle { weights: rows(&weights), cov: rows(&cond), jitter })
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::fbm_covariance;
    use crate::simulation::{sample_bm, SeedSpec, TransferEngine};
    use crate::stats::Moments;
    use proptest::prelude::*;

    fn ou_var(theta: f64, sigma: f64, t: f64) -> f64 {
        sigma * sigma * (1.0 - (-2.0 * theta * t).exp()) / (2.0 * theta)
    }

    #[test]
    fn covariance_reductions() {
        let p = FouParams::new(1.5, 2.0, 0.5).unwrap();
        assert_eq!(fou_covariance(&p, 0.0, 0.7), 0.0);
        for (t, s) in [(0.3f64, 0.3f64), (1.0, 0.4), (0.2, 0.9)] {
            let want = (-1.5 * (t - s).abs()).exp() * ou_var(1.5, 2.0, t.min(s));
            assert!((fou_covariance(&p, t, s) - want).abs() < 1e-12);
        }
        for h in [0.3, 0.75] {
            let p = FouParams::new(0.0, 1.7, h).unwrap();
            for (t, s) in [(1.0, 1.0), (0.5, 1.0), (0.9, 0.1)] {
                let want = 1.7 * 1.7 * fbm_covariance(h, t, s);
                assert!((fou_covariance(&p, t, s) - want).abs() < 1e-9 * want, "H={h} ({t},{s})");
            }
        }
    }

    #[test]
    fn covariance_matrix_matches_pointwise() {
        for h in [0.3, 0.75] {
            let cov = FouCovariance::new(FouParams::new(0.8, 1.2, h).unwrap());
            let pts = [1.0 / 512.0, 0.25, 0.5, 0.6, 1.0];
            let m = cov.matrix(&pts);
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    assert_eq!(m[(i, j)], m[(j, i)]);
                    assert!((m[(i, j)] - cov.at(pts[i], pts[j])).abs() < 1e-8, "H={h} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn conditional_covariance_forms_agree() {
        let grid = Grid::new(1.0, 16).unwrap();
        for h in [0.3, 0.5, 0.75] {
            let pr = Predictor::new(FouParams::new(1.0, 1.0, h).unwrap(), &grid, 0.5).unwrap();
            for (t, s) in [(0.5, 0.5), (0.6, 0.6), (0.8, 1.0), (1.0, 1.0)] {
                let a = pr.conditional_cov(t, s).unwrap();
                let b = pr.conditional_cov_difference(t, s).unwrap();
                assert!((a - b).abs() < 1e-10, "H={h} ({t},{s}): {a} vs {b}");
            }
            assert_eq!(pr.conditional_cov(0.5, 0.5).unwrap(), 0.0);
        }
    }

    #[test]
    fn markov_case_matches_ou_prediction() {
        let (theta, sigma, u) = (1.3, 0.7, 0.5);
        let p = FouParams::new(theta, sigma, 0.5).unwrap();
        let grid = Grid::new(1.0, 64).unwrap();
        let pr = Predictor::new(p, &grid, u).unwrap();
        for t in [0.6, 1.0] {
            let decay = (-theta * (t - u)).exp();
            assert!(pr.psi_weights(t).unwrap().iter().all(|w| (w - (decay - 1.0)).abs() < 1e-12));
            assert!((pr.psi(t, 0.2).unwrap() - (decay - 1.0)).abs() < 1e-12);
            let v = pr.conditional_cov(t, t).unwrap();
            assert!((v - ou_var(theta, sigma, t - u)).abs() < 1e-12);
        }
        let path = TransferEngine::new(p, grid).fou_from_bm(&sample_bm(&grid, SeedSpec::new(3, 0))).unwrap();
        let res = pr.predict(&path, &[0.5, 0.75, 1.0]).unwrap();
        let last = path.values()[32];
        assert_eq!(res.mean[0], last);
        assert_eq!(res.variance()[0], 0.0);
        for (t, m) in res.targets.iter().zip(&res.mean) {
            assert!((m - (-theta * (t - u)).exp() * last).abs() < 1e-12);
        }
    }

    #[test]
    fn free_functions() {
        let p = FouParams::new(1.0, 1.0, 0.5).unwrap();
        assert!((psi(&p, 1.0, 0.3, 0.5).unwrap() - ((-0.5f64).exp() - 1.0)).abs() < 1e-12);
        assert_eq!(psi(&p, 0.5, 0.3, 0.5).unwrap(), 0.0);
        assert_eq!(psi(&p, 1.0, 0.3, 0.0).unwrap_err(), Error::EmptyHistory);
        let q = FouParams::new(0.7, 1.1, 0.3).unwrap();
        assert!((conditional_cov(&q, 0.8, 0.9, 0.0).unwrap() - fou_covariance(&q, 0.8, 0.9)).abs() < 1e-12);
        assert_eq!(conditional_cov(&q, 0.6, 0.6, 0.6).unwrap(), 0.0);
        assert!(conditional_cov(&q, 0.4, 0.6, 0.5).is_err());
        // θ = 0, σ = 1 is the fBm prediction weight (K*)⁻¹[K(t,·)] - 1
        let f = FouParams::fbm(0.7).unwrap();
        let ops = TransferOps::new(f, Grid::new(0.5, PSI_STEPS).unwrap());
        let ev = KernelEvaluator::new(f);
        let want = ops.k_star_inv_at(&|v: f64| ev.k(1.0, v), 0.2) - 1.0;
        assert!((psi(&f, 1.0, 0.2, 0.5).unwrap() - want).abs() < 1e-12);
        let grid = Grid::new(1.0, 16).unwrap();
        let path = TransferEngine::new(q, grid).fou_from_bm(&sample_bm(&grid, SeedSpec::new(2, 2))).unwrap();
        let m = conditional_mean(&path, &q, 0.5, &[0.75]).unwrap();
        assert_eq!(m, Predictor::new(q, &grid, 0.5).unwrap().conditional_mean(&path, &[0.75]).unwrap());
    }

    #[test]
    fn oracle_markov_weights_and_edges() {
        let p = FouParams::new(1.0, 1.0, 0.5).unwrap();
        let grid = Grid::new(1.0, 32).unwrap();
        let or = gaussian_conditioning_oracle(&p, &grid, 0.5, &[0.75]).unwrap();
        let w = &or.weights[0];
        assert!((w[15] - (-0.25f64).exp()).abs() < 1e-9);
        assert!(w[..15].iter().all(|x| x.abs() < 1e-9));
        let none = gaussian_conditioning_oracle(&p, &grid, 0.0, &[0.5, 1.0]).unwrap();
        assert!(none.weights.iter().all(|w| w.is_empty()));
        assert!((none.cov[0][1] - fou_covariance(&p, 0.5, 1.0)).abs() < 1e-9);
        assert!(gaussian_conditioning_oracle(&p, &grid, 0.5, &[0.25]).is_err());
    }

    #[test]
    fn oracle_covariance_matches_conditional_covariance() {
        let p = FouParams::new(1.0, 1.0, 0.75).unwrap();
        let grid = Grid::new(1.0, 64).unwrap();
        let targets = [0.6, 0.8, 1.0];
        let or = gaussian_conditioning_oracle(&p, &grid, 0.5, &targets).unwrap();
        assert_eq!(or.jitter, 0.0);
        let pr = Predictor::new(p, &grid, 0.5).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let c = pr.conditional_cov(targets[i], targets[j]).unwrap();
                assert!((c - or.cov[i][j]).abs() < 0.02 * c, "({i},{j}): {c} vs {}", or.cov[i][j]);
            }
        }
    }

    #[test]
    fn rejects_bad_history_and_targets() {
        let p = FouParams::new(1.0, 1.0, 0.7).unwrap();
        let grid = Grid::new(1.0, 8).unwrap();
        assert_eq!(Predictor::new(p, &grid, 0.0).unwrap_err(), Error::EmptyHistory);
        assert!(Predictor::new(p, &grid, 0.3).is_err());
        let pr = Predictor::new(p, &grid, 0.5).unwrap();
        assert!(pr.psi_weights(0.25).is_err());
        assert!(pr.conditional_cov(1.0, 0.4).is_err());
        let w = sample_bm(&grid, SeedSpec::new(1, 1));
        assert!(pr.conditional_mean(&w, &[1.0]).is_err());
        let other = TransferEngine::new(p, Grid::new(0.25, 2).unwrap());
        let short = other.fou_from_bm(&sample_bm(other.grid(), SeedSpec::new(1, 1))).unwrap();
        assert!(pr.conditional_mean(&short, &[1.0]).is_err());
    }

    #[test]
    fn conditional_variance_decreases_with_more_history() {
        let grid = Grid::new(1.0, 20).unwrap();
        for h in [0.3, 0.75] {
            let p = FouParams::new(1.0, 1.0, h).unwrap();
            let mut prev = f64::INFINITY;
            for k in 2..=19 {
                let v = Predictor::new(p, &grid, grid.point(k)).unwrap().conditional_cov(1.0, 1.0).unwrap();
                assert!(v < prev, "H={h} k={k}");
                prev = v;
            }
        }
    }

    #[test]
    fn tower_property_and_variance_decomposition() {
        let p = FouParams::new(1.0, 1.0, 0.7).unwrap();
        let grid = Grid::new(1.0, 64).unwrap();
        let pr = Predictor::new(p, &grid, 0.5).unwrap();
        let w = pr.psi_weights(1.0).unwrap();
        let engine = TransferEngine::new(p, grid);
        let (mut means, mut ends) = (Vec::new(), Vec::new());
        for i in 0..10_000 {
            let u = engine.fou_from_bm(&sample_bm(&grid, SeedSpec::new(11, i))).unwrap();
            means.push(mean_from(&w, &u.values()[..=32]));
            ends.push(u.values()[64]);
        }
        let m = Moments::from_iter(means);
        assert!(m.mean().abs() < 3.0 * m.mean_se());
        let total = Moments::from_iter(ends).variance();
        let explained = m.variance() + pr.conditional_cov(1.0, 1.0).unwrap();
        assert!((total - explained).abs() < 3.0 * m.variance_se(), "{total} vs {explained}");
        let exact = fou_covariance(&p, 1.0, 1.0);
        assert!((exact - explained).abs() < 3.0 * m.variance_se(), "{exact} vs {explained}");
    }

    #[test]
    fn csv_output() {
        let res = PredictionResult {
            u: 0.5,
            targets: vec![0.5, 1.0],
            mean: vec![0.25, 0.125],
            cov: vec![vec![0.0, 0.0], vec![0.0, 0.5]],
        };
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,mean,var\n0.5,2.5e-1,0e0\n1,1.25e-1,5e-1\n");
        let mut buf = Vec::new();
        res.write_cov_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn mean_is_linear_in_the_path(
            x in prop::collection::vec(-3.0f64..3.0, 9),
            y in prop::collection::vec(-3.0f64..3.0, 9),
            w in prop::collection::vec(-1.0f64..1.0, 8),
            a in -2.0f64..2.0,
        ) {
            let z: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + q).collect();
            let lhs = mean_from(&w, &z);
            let rhs = a * mean_from(&w, &x) + mean_from(&w, &y);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
