//! Wiener integrals of deterministic grid integrands against sampled paths,
//! and the transfer identities that move an integral from one driving
//! process to another on the same realization.

use crate::error::{Error, Result};
use crate::kernels::FouParams;
use crate::simulation::{Path, Process};
use crate::transfer_ops::{IntegrandFunction, IntegrandRole, Interpolation, Operator, TransferOps};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WienerIntegralResult {
    /// Left-point Riemann-Stieltjes sum (or cell-averaged sum for
    /// transferred integrands).
    pub value: f64,
    /// `f(T)X_T - f(0)X_0 - ∫ X f' dt`, for piecewise-linear integrands.
    pub by_parts: Option<f64>,
    /// `∫ f² dt` when the integrator is Brownian motion.
    pub variance_estimate: Option<f64>,
    pub role: IntegrandRole,
}

fn accepts(role: IntegrandRole, process: Process) -> bool {
    matches!(
        (role, process),
        (IntegrandRole::Bm, Process::Bm)
            | (IntegrandRole::Fbm, Process::Fbm)
            | (IntegrandRole::Fou, Process::Fou | Process::Stationary)
    )
}

fn check(f: &IntegrandFunction, x: &Path) -> Result<()> {
    f.grid().check_same(x.grid())?;
    if !accepts(f.role(), x.process()) {
        return Err(Error::WrongProcess {
            expected: format!("{:?} integrator", f.role()),
            found: x.process().to_string(),
        });
    }
    Ok(())
}

/// `∫_0^T f dX` as the left-point sum `Σ f(t_j) ΔX_j`.
pub fn integrate(f: &IntegrandFunction, x: &Path) -> Result<WienerIntegralResult> {
    check(f, x)?;
    let fv = f.values();
    let xv = x.values();
    let n = x.grid().n();
    let value = (0..n).map(|j| fv[j] * (xv[j + 1] - xv[j])).sum();
    let by_parts = (f.interpolation() == Interpolation::Linear).then(|| {
        // Lebesgue part by the trapezoid rule, with f' constant on each cell
        let lebesgue: f64 = (0..n).map(|j| (fv[j + 1] - fv[j]) * 0.5 * (xv[j] + xv[j + 1])).sum();
        fv[n] * xv[n] - fv[0] * xv[0] - lebesgue
    });
    let variance_estimate = (x.process() == Process::Bm).then(|| {
        let h = x.grid().step();
        match f.interpolation() {
            Interpolation::Constant => fv[..n].iter().map(|v| v * v * h).sum(),
            Interpolation::Linear => {
                (0..n).map(|j| (fv[j] * fv[j] + fv[j] * fv[j + 1] + fv[j + 1] * fv[j + 1]) * h / 3.0).sum()
            }
        }
    });
    Ok(WienerIntegralResult { value, by_parts, variance_estimate, role: f.role() })
}

/// `Σ_j w_j ΔX_j` with one weight per cell.
pub fn integrate_cells(weights: &[f64], x: &Path) -> Result<f64> {
    if weights.len() != x.grid().n() {
        return Err(Error::GridMismatch(format!(
            "{} cell weights for a path with {} cells",
            weights.len(),
            x.grid().n()
        )));
    }
    let xv = x.values();
    Ok(weights.iter().enumerate().map(|(j, w)| w * (xv[j + 1] - xv[j])).sum())
}

/// `∫ (op g) dX`, with the transformed integrand averaged over each cell.
pub fn transferred_integral(ops: &TransferOps, op: Operator, g: &IntegrandFunction, x: &Path) -> Result<WienerIntegralResult> {
    let (input, output) = match op {
        Operator::KStar => (IntegrandRole::Fbm, IntegrandRole::Bm),
        Operator::KStarInv => (IntegrandRole::Bm, IntegrandRole::Fbm),
        Operator::LStar => (IntegrandRole::Fou, IntegrandRole::Bm),
        Operator::LStarInv => (IntegrandRole::Bm, IntegrandRole::Fou),
    };
    if g.role() != input {
        return Err(Error::Invalid(format!("{op:?} takes an integrand against {input:?}, got one against {:?}", g.role())));
    }
    if !accepts(output, x.process()) {
        return Err(Error::WrongProcess { expected: format!("{output:?} integrator"), found: x.process().to_string() });
    }
    ops.grid().check_same(x.grid())?;
    let means = ops.cell_means(op, g)?;
    Ok(WienerIntegralResult { value: integrate_cells(&means, x)?, by_parts: None, variance_estimate: None, role: output })
}

/// `∫ L*g dW`, which equals `∫ g dU` for the fOU path driven by `w`.
pub fn transfer_integral_to_bm(g: &IntegrandFunction, params: &FouParams, w: &Path) -> Result<WienerIntegralResult> {
    transferred_integral(&TransferOps::new(*params, *w.grid()), Operator::LStar, g, w)
}

/// `∫ (L*)⁻¹f dU`, which equals `∫ f dW` for the Brownian motion driving `u`.
pub fn transfer_integral_to_fou(f: &IntegrandFunction, params: &FouParams, u: &Path) -> Result<WienerIntegralResult> {
    transferred_integral(&TransferOps::new(*params, *u.grid()), Operator::LStarInv, f, u)
}

/// `∫ K*g dW`, which equals `∫ g dB^H` for the fBm driven by `w`.
pub fn transfer_fbm_integral_to_bm(g: &IntegrandFunction, hurst: f64, w: &Path) -> Result<WienerIntegralResult> {
    transferred_integral(&TransferOps::new(FouParams::fbm(hurst)?, *w.grid()), Operator::KStar, g, w)
}

/// `∫ (K*)⁻¹f dB^H`, which equals `∫ f dW` for the Brownian motion driving `b`.
pub fn transfer_integral_to_fbm(f: &IntegrandFunction, hurst: f64, b: &Path) -> Result<WienerIntegralResult> {
    transferred_integral(&TransferOps::new(FouParams::fbm(hurst)?, *b.grid()), Operator::KStarInv, f, b)
}
