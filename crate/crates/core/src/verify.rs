//! Verification suites: numerical checks of the transforms against closed
//! forms, Monte Carlo and Gaussian conditioning, reported as
//! `check_name,value,tolerance,pass` rows.

use rayon::prelude::*;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernels::{discretize, fbm_covariance, FouParams, KernelEvaluator, KernelRole};
use crate::prediction::{gaussian_conditioning_oracle, mean_from, Predictor};
use crate::simulation::{sample_bm, Path, SeedSpec, TransferEngine};
use crate::stats::Moments;
use crate::transfer_ops::{IntegrandFunction, IntegrandRole, Operator, TransferOps};
use crate::wiener_integral::{integrate, integrate_cells};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Gram,
    Roundtrip,
    Isometry,
    TransferIntegral,
    Prediction,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gram" => Suite::Gram,
            "roundtrip" => Suite::Roundtrip,
            "isometry" => Suite::Isometry,
            "transfer-integral" => Suite::TransferIntegral,
            "prediction" => Suite::Prediction,
            "all" => Suite::All,
            _ => return Err(Error::Invalid(format!("unknown suite {s:?}"))),
        })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Gram => "gram",
            Suite::Roundtrip => "roundtrip",
            Suite::Isometry => "isometry",
            Suite::TransferIntegral => "transfer-integral",
            Suite::Prediction => "prediction",
            Suite::All => "all",
        })
    }
}

/// Pass thresholds. `isometry` is in standard errors, the rest are relative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub gram: f64,
    pub reduction: f64,
    pub roundtrip: f64,
    pub isometry: f64,
    pub transfer: f64,
    pub prediction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { gram: 0.01, reduction: 1e-10, roundtrip: 0.05, isometry: 3.0, transfer: 0.05, prediction: 0.02 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub params: FouParams,
    pub grid: Grid,
    pub paths: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: value <= tolerance }
    }
}

pub fn run(suite: Suite, cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let all = suite == Suite::All;
    if all || suite == Suite::Gram {
        out.extend(gram(cfg));
    }
    if all || suite == Suite::Roundtrip {
        out.extend(roundtrip(cfg)?);
    }
    if all || suite == Suite::Isometry {
        out.extend(isometry(cfg)?);
    }
    if all || suite == Suite::TransferIntegral {
        out.extend(transfer_integral(cfg)?);
    }
    if all || suite == Suite::Prediction {
        out.extend(prediction(cfg)?);
    }
    Ok(out)
}

pub fn write_report<W: Write>(out: W, checks: &[Check]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["check_name", "value", "tolerance", "pass"])?;
    for c in checks {
        w.write_record(&[c.name.clone(), format!("{:e}", c.value), format!("{:e}", c.tolerance), c.pass.to_string()])?;
    }
    w.flush()
}

fn is_half(p: &FouParams) -> bool {
    p.hurst == 0.5
}

/// Largest `|Σ_j K_ij K_kj Δ - R_H(t_i, t_k)|` over grid pairs, relative to `R_H(T,T)`.
pub fn gram_error(hurst: f64, grid: &Grid) -> Result<f64> {
    let k = discretize(KernelRole::K, &FouParams::fbm(hurst)?, grid);
    let dt = grid.step();
    let n = grid.n();
    let worst = (0..=n)
        .into_par_iter()
        .map(|i| {
            (0..=i)
                .map(|j| {
                    let g: f64 = k.row(i)[..j].iter().zip(&k.row(j)[..j]).map(|(x, y)| x * y).sum::<f64>() * dt;
                    (g - fbm_covariance(hurst, grid.point(i), grid.point(j))).abs()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst / fbm_covariance(hurst, grid.horizon(), grid.horizon()))
}

fn gram(cfg: &VerifyConfig) -> Vec<Check> {
    let tol = &cfg.tolerances;
    let p = cfg.params;
    let mut out = vec![Check::at_most(
        format!("gram_max_rel_error_H{}", p.hurst),
        gram_error(p.hurst, &cfg.grid).unwrap_or(f64::INFINITY),
        tol.gram,
    )];
    if is_half(&p) {
        let (l, l_inv) = classical_kernel_errors(&p, &cfg.grid);
        out.push(Check::at_most("reduction_L_exponential", l, tol.reduction));
        out.push(Check::at_most("reduction_L_inverse_linear", l_inv, tol.reduction));
    }
    out
}

/// Largest deviations of `L` from `σe^{-θ(t-s)}` and of `L⁻¹` from
/// `(1+θ(t-s))/σ` over grid points `t` and cell midpoints `s < t`.
pub fn classical_kernel_errors(p: &FouParams, grid: &Grid) -> (f64, f64) {
    let ev = KernelEvaluator::new(*p);
    let (theta, sigma) = (p.theta, p.sigma);
    let n = grid.n();
    (1..=n)
        .into_par_iter()
        .map(|i| {
            let t = grid.point(i);
            (0..i).fold((0.0f64, 0.0f64), |(a, b), j| {
                let s = grid.midpoint(j);
                let l = (ev.l(t, s) - sigma * (-theta * (t - s)).exp()).abs();
                let li = (ev.l_inv(t, s) - (1.0 + theta * (t - s)) / sigma).abs();
                (a.max(l), b.max(li))
            })
        })
        .reduce(|| (0.0, 0.0), |x, y| (x.0.max(y.0), x.1.max(y.1)))
}

fn sup_diff(a: &Path, b: &Path) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn bm_paths(cfg: &VerifyConfig) -> Vec<Path> {
    (0..cfg.paths as u64).into_par_iter().map(|i| sample_bm(&cfg.grid, SeedSpec::new(cfg.seed, i))).collect()
}

/// Worst relative sup-norm errors of `W → U → W` and `U → W → U`.
pub fn roundtrip_errors(engine: &TransferEngine, ws: &[Path]) -> Result<(f64, f64)> {
    let errs = ws
        .par_iter()
        .map(|w| {
            let u = engine.fou_from_bm(w)?;
            let w2 = engine.bm_from_fou(&u)?;
            let u2 = engine.fou_from_bm(&w2)?;
            Ok((sup_diff(w, &w2) / w.sup_norm(), sup_diff(&u, &u2) / u.sup_norm()))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    Ok(errs.into_iter().fold((0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1))))
}

fn roundtrip(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let engine = TransferEngine::new(cfg.params, cfg.grid);
    let ws = bm_paths(cfg);
    let (w, u) = roundtrip_errors(&engine, &ws)?;
    let tol = cfg.tolerances.roundtrip;
    let mut out = vec![Check::at_most("roundtrip_bm_fou_bm", w, tol), Check::at_most("roundtrip_fou_bm_fou", u, tol)];
    if is_half(&cfg.params) {
        let e = TransferEngine::new(FouParams::fbm(0.5)?, cfg.grid);
        let d = ws
            .iter()
            .map(|w| e.fbm_from_bm(w).map(|b| sup_diff(w, &b)))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        out.push(Check::at_most("reduction_fbm_equals_bm", d, cfg.tolerances.reduction));
    }
    Ok(out)
}

/// Integrands `1` and `t`, as piecewise-linear functions on `grid`.
fn polynomial_integrands(grid: &Grid, role: IntegrandRole) -> Result<Vec<(&'static str, IntegrandFunction)>> {
    Ok(vec![
        ("one", IntegrandFunction::from_fn(*grid, role, |_| 1.0)?),
        ("t", IntegrandFunction::from_fn(*grid, role, |t| t)?),
    ])
}

/// `|Var_MC(∫g dB^H) - ‖K*g‖²| / SE` for each integrand.
pub fn isometry_scores(hurst: f64, grid: &Grid, paths: usize, seed: u64) -> Result<Vec<(&'static str, f64)>> {
    let engine = TransferEngine::new(FouParams::fbm(hurst)?, *grid);
    let ops = TransferOps::new(FouParams::fbm(hurst)?, *grid);
    let gs = polynomial_integrands(grid, IntegrandRole::Fbm)?;
    let samples = (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let b = engine.fbm_from_bm(&sample_bm(grid, SeedSpec::new(seed, i)))?;
            gs.iter().map(|(_, g)| integrate(g, &b).map(|r| r.by_parts.unwrap_or(r.value))).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    gs.iter()
        .enumerate()
        .map(|(k, (name, g))| {
            let m = Moments::from_iter(samples.iter().map(|s| s[k]));
            let norm = ops.l2_norm_sq(Operator::KStar, g)?;
            Ok((*name, (m.variance() - norm).abs() / m.variance_se()))
        })
        .collect()
}

fn isometry(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let h = cfg.params.hurst;
    Ok(isometry_scores(h, &cfg.grid, cfg.paths, cfg.seed)?
        .into_iter()
        .map(|(name, z)| Check::at_most(format!("isometry_{name}_H{h}"), z, cfg.tolerances.isometry))
        .collect())
}

/// The integrands `1`, `t`, `sin t` and `1_{[0,T/2)}` on `grid`.
pub fn transfer_integrands(grid: &Grid) -> Result<Vec<(&'static str, IntegrandFunction)>> {
    let mut gs = polynomial_integrands(grid, IntegrandRole::Fou)?;
    gs.push(("sin", IntegrandFunction::from_fn(*grid, IntegrandRole::Fou, f64::sin)?));
    gs.push(("indicator_half", IntegrandFunction::indicator(*grid, 0.5 * grid.horizon(), IntegrandRole::Fou)?));
    Ok(gs)
}

/// Worst `|∫g dU - ∫(L*g) dW| / (1 + |∫g dU|)` over coupled paths, per integrand.
pub fn transfer_errors(params: &FouParams, ws: &[Path]) -> Result<Vec<(&'static str, f64)>> {
    let grid = *ws[0].grid();
    let engine = TransferEngine::new(*params, grid);
    let us = ws.par_iter().map(|w| engine.fou_from_bm(w)).collect::<Result<Vec<Path>>>()?;
    let ops = TransferOps::new(*params, grid);
    transfer_integrands(&grid)?
        .into_iter()
        .map(|(name, g)| {
            let weights = ops.cell_means(Operator::LStar, &g)?;
            let mut worst = 0.0f64;
            for (w, u) in ws.iter().zip(&us) {
                let lhs = integrate(&g, u)?.value;
                let rhs = integrate_cells(&weights, w)?;
                worst = worst.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
            }
            Ok((name, worst))
        })
        .collect()
}

fn transfer_integral(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let ws = bm_paths(cfg);
    Ok(transfer_errors(&cfg.params, &ws)?
        .into_iter()
        .map(|(name, e)| Check::at_most(format!("transfer_{name}"), e, cfg.tolerances.transfer))
        .collect())
}

/// Prediction from `[0, T/2]` to `{0.6, 0.8, 1}·T` against exact Gaussian
/// conditioning: worst mean error in conditional standard deviations over
/// coupled paths, worst relative covariance error, and at `H = 1/2` the worst
/// deviation from `e^{-θ(t-u)} U_u` in the same units.
pub fn prediction_errors(params: &FouParams, ws: &[Path]) -> Result<(f64, f64, Option<f64>)> {
    let grid = *ws[0].grid();
    if !grid.n().is_multiple_of(2) {
        return Err(Error::InvalidGrid("prediction checks need an even number of steps".into()));
    }
    let t_end = grid.horizon();
    let u = 0.5 * t_end;
    let targets = [0.6 * t_end, 0.8 * t_end, t_end];
    let oracle = gaussian_conditioning_oracle(params, &grid, u, &targets)?;
    let pr = Predictor::new(*params, &grid, u)?;
    let weights = targets.par_iter().map(|&t| pr.psi_weights(t)).collect::<Result<Vec<_>>>()?;
    let engine = TransferEngine::new(*params, grid);
    let m = grid.n() / 2;
    let sd: Vec<f64> = (0..3).map(|k| oracle.cov[k][k].sqrt()).collect();
    let (mut mean_err, mut markov_err) = (0.0f64, 0.0f64);
    for w in ws {
        let path = engine.fou_from_bm(w)?;
        let obs = &path.values()[..=m];
        let want = oracle.mean(obs);
        for k in 0..3 {
            let got = mean_from(&weights[k], obs);
            mean_err = mean_err.max((got - want[k]).abs() / sd[k]);
            let markov = (-params.theta * (targets[k] - u)).exp() * obs[m];
            markov_err = markov_err.max((got - markov).abs() / sd[k]);
        }
    }
    let mut cov_err = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let c = pr.conditional_cov(targets[i], targets[j])?;
            cov_err = cov_err.max((c - oracle.cov[i][j]).abs() / c.abs());
        }
    }
    Ok((mean_err, cov_err, is_half(params).then_some(markov_err)))
}

fn prediction(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let ws = bm_paths(cfg);
    let tol = cfg.tolerances.prediction;
    let (mean, cov, markov) = prediction_errors(&cfg.params, &ws)?;
    let mut out = vec![Check::at_most("prediction_mean_vs_oracle", mean, tol), Check::at_most("prediction_cov_vs_oracle", cov, tol)];
    if let Some(e) = markov {
        out.push(Check::at_most("prediction_mean_vs_markov", e, tol));
    }
    Ok(out)
}
