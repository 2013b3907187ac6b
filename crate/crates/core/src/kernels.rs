//! Volterra kernels linking Brownian motion, fractional Brownian motion and the
//! fractional Ornstein-Uhlenbeck process, and their grid discretization.
//!
//! With `α = H - 1/2`, all four kernels are evaluated from forms that hold on
//! the whole range `H ∈ (0, 1)` (for `0 < s < t`):
//!
//! ```text
//! K(t,s)   = c/Γ(H+1/2)       s^{-α} [ t^α (t-s)^α  - α ∫_s^t (v-s)^α  v^{α-1} dv ]
//! K⁻¹(t,s) = 1/(c Γ(3/2-H))   s^{-α} [ t^α (t-s)^{-α} - α ∫_s^t (v-s)^{-α} v^{α-1} dv ]
//! L(t,s)   = σ c/Γ(H+1/2)     s^{-α} [ t^α (t-s)^α  - ∫_s^t (v-s)^α e^{-θ(t-v)} (α v^{α-1} + θ v^α) dv ]
//! L⁻¹(t,s) = [ K⁻¹(t,s) + θ ∫_s^t K⁻¹(t,v) dv ] / σ
//! ```
//!
//! The last line follows from `dB^H = (dU + θU dt)/σ` and `W = ∫K⁻¹ dB^H`;
//! for `H = 1/2` it is `(1 + θ(t-s))/σ`.
//!
//! The remaining integrals have an algebraic endpoint singularity at `v = s`
//! and a near-singularity at `v = 0`; both are handled by [`PowerWeighted`].

use rayon::prelude::*;
use std::fmt;
use std::io::Write;

use crate::error::{domain, Error, Result};
use crate::grid::Grid;
use crate::quadrature::{graded_towards_zero, GaussRule, PowerWeighted};

/// Grading depth of the first-cell rule of the inverse kernels.
const FIRST_CELL_LEVELS: i32 = 16;
use crate::special_fn::gamma_unchecked;

/// Parameters `(θ, σ, H)` of the fractional Ornstein-Uhlenbeck process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FouParams {
    pub theta: f64,
    pub sigma: f64,
    pub hurst: f64,
}

impl FouParams {
    /// Validates `θ ≥ 0`, `σ > 0` and `0 < H < 1`.
    ///
    /// `θ = 0` is accepted: it is the fractional Brownian motion limit `σ B^H`.
    pub fn new(theta: f64, sigma: f64, hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        if !(theta.is_finite() && theta >= 0.0) {
            return domain(format!("theta must be finite and non-negative, got {theta}"));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return domain(format!("sigma must be positive, got {sigma}"));
        }
        Ok(Self { theta, sigma, hurst })
    }

    /// `θ = 0, σ = 1`: the parameters under which `L = K`.
    pub fn fbm(hurst: f64) -> Result<Self> {
        Self::new(0.0, 1.0, hurst)
    }
}

pub(crate) fn check_hurst(hurst: f64) -> Result<()> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return domain(format!("hurst must lie in (0,1), got {hurst}"));
    }
    Ok(())
}

/// Normalizing constant of the fBm kernel,
/// `c_H = sqrt(2H Γ(H+1/2) Γ(3/2-H) / Γ(2-2H))`.
pub fn c_h(hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    Ok(c_h_unchecked(hurst))
}

fn c_h_unchecked(h: f64) -> f64 {
    (2.0 * h * gamma_unchecked(h + 0.5) * gamma_unchecked(1.5 - h) / gamma_unchecked(2.0 - 2.0 * h))
        .sqrt()
}

/// Covariance of fractional Brownian motion, `(t^{2H} + s^{2H} - |t-s|^{2H}) / 2`.
pub fn fbm_covariance(hurst: f64, t: f64, s: f64) -> f64 {
    let p = 2.0 * hurst;
    0.5 * (t.abs().powf(p) + s.abs().powf(p) - (t - s).abs().powf(p))
}

/// Which of the four kernels a matrix discretizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelRole {
    K,
    KInv,
    L,
    LInv,
}

impl fmt::Display for KernelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelRole::K => "K",
            KernelRole::KInv => "K_inv",
            KernelRole::L => "L",
            KernelRole::LInv => "L_inv",
        })
    }
}

/// Pointwise evaluator for the four kernels at fixed parameters.
///
/// Building one precomputes the constants and quadrature rules, so bulk
/// evaluation should go through a shared evaluator rather than the free
/// functions.
#[derive(Debug, Clone)]
pub struct KernelEvaluator {
    params: FouParams,
    alpha: f64,
    c: f64,
    k_pref: f64,
    kinv_pref: f64,
    pw_pos: PowerWeighted,
    pw_neg: PowerWeighted,
    pw_flat: PowerWeighted,
    first_cell: Vec<(f64, f64)>,
}

impl KernelEvaluator {
    pub fn new(params: FouParams) -> Self {
        let h = params.hurst;
        let alpha = h - 0.5;
        let c = c_h_unchecked(h);
        Self {
            params,
            alpha,
            c,
            k_pref: c / gamma_unchecked(h + 0.5),
            kinv_pref: 1.0 / (c * gamma_unchecked(1.5 - h)),
            pw_pos: PowerWeighted::new(alpha),
            pw_neg: PowerWeighted::new(-alpha),
            pw_flat: PowerWeighted::new(0.0),
            first_cell: graded_towards_zero(&GaussRule::legendre(8), 1.0, FIRST_CELL_LEVELS),
        }
    }

    pub fn params(&self) -> &FouParams {
        &self.params
    }

    pub fn hurst(&self) -> f64 {
        self.params.hurst
    }

    /// `H - 1/2`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c_h(&self) -> f64 {
        self.c
    }

    /// Jacobi rule for the weight `x^{H-1/2}`.
    pub(crate) fn rule_pos(&self) -> &GaussRule {
        self.pw_pos.jacobi_rule()
    }

    /// Jacobi rule for the weight `x^{1/2-H}`.
    pub(crate) fn rule_neg(&self) -> &GaussRule {
        self.pw_neg.jacobi_rule()
    }

    /// `K(t,s)` for `0 < s`; zero for `s ≥ t`.
    pub fn k(&self, t: f64, s: f64) -> f64 {
        self.l_unit_with(0.0, t, s)
    }

    /// `K⁻¹(t,s)` for `0 < s`; zero for `s ≥ t`.
    pub fn k_inv(&self, t: f64, s: f64) -> f64 {
        if s >= t {
            return 0.0;
        }
        let a = self.alpha;
        if a == 0.0 {
            return 1.0;
        }
        let head = t.powf(a) * (t - s).powf(-a);
        let tail = self.pw_neg.integrate(s, t - s, s, |v| a * v.powf(a - 1.0));
        self.kinv_pref * s.powf(-a) * (head - tail)
    }

    /// `L(t,s)` for `0 < s`; zero for `s ≥ t`.
    pub fn l(&self, t: f64, s: f64) -> f64 {
        self.params.sigma * self.l_unit_with(self.params.theta, t, s)
    }

    /// `L⁻¹(t,s)` for `0 < s`; zero for `s ≥ t`.
    pub fn l_inv(&self, t: f64, s: f64) -> f64 {
        if s >= t {
            return 0.0;
        }
        let FouParams { theta, sigma, .. } = self.params;
        if theta == 0.0 {
            return self.k_inv(t, s) / sigma;
        }
        (self.k_inv(t, s) + theta * self.k_inv_integral(t, s)) / sigma
    }

    /// `∫_s^t K⁻¹(t,v) dv`.
    pub fn k_inv_integral(&self, t: f64, s: f64) -> f64 {
        if s >= t {
            return 0.0;
        }
        if self.alpha == 0.0 {
            return t - s;
        }
        // upper half carries the (t-v)^{-α} end point, lower half the
        // near-singularity at v = 0
        let m = 0.5 * (s + t);
        let rule = self.rule_neg();
        let w = t - m;
        let mut upper = 0.0;
        for (y, wt) in rule.nodes.iter().zip(&rule.weights) {
            let x = w * y;
            upper += wt * self.k_inv(t, t - x) * x.powf(self.alpha);
        }
        upper *= w.powf(1.0 - self.alpha);
        let lower = self.pw_flat.integrate(s, m - s, s, |v| self.k_inv(t, v));
        upper + lower
    }

    /// Evaluates the kernel of the given role.
    pub fn eval(&self, role: KernelRole, t: f64, s: f64) -> f64 {
        match role {
            KernelRole::K => self.k(t, s),
            KernelRole::KInv => self.k_inv(t, s),
            KernelRole::L => self.l(t, s),
            KernelRole::LInv => self.l_inv(t, s),
        }
    }

    /// `L(t,s)/σ` at mean-reversion rate `theta`; `theta = 0` gives `K` bit for bit.
    fn l_unit_with(&self, theta: f64, t: f64, s: f64) -> f64 {
        if s >= t {
            return 0.0;
        }
        let a = self.alpha;
        if a == 0.0 {
            if theta == 0.0 {
                return 1.0;
            }
            let tail = self
                .pw_pos
                .integrate(s, t - s, f64::INFINITY, |v| (-theta * (t - v)).exp() * theta);
            return 1.0 - tail;
        }
        let head = t.powf(a) * (t - s).powf(a);
        let tail = self.pw_pos.integrate(s, t - s, s, |v| {
            let e = (-theta * (t - v)).exp();
            e * (a * v.powf(a - 1.0) + theta * v.powf(a))
        });
        self.k_pref * s.powf(-a) * (head - tail)
    }

    /// `∫_s^t K(u,s) e^{-θ(t-u)} du`, the inner integral of the fOU kernel.
    pub(crate) fn k_exp_integral(&self, t: f64, s: f64) -> f64 {
        if s >= t {
            return 0.0;
        }
        let a = self.alpha;
        let theta = self.params.theta;
        if a == 0.0 {
            return phi(theta, t - s);
        }
        let body = self.pw_pos.integrate(s, t - s, s, |v| {
            v.powf(a) * (-theta * (t - v)).exp() - a * v.powf(a - 1.0) * phi(theta, t - v)
        });
        self.k_pref * s.powf(-a) * body
    }
}

/// `∫_0^x e^{-θy} dy`, equal to `x` at `θ = 0`.
#[inline]
pub(crate) fn phi(theta: f64, x: f64) -> f64 {
    if theta == 0.0 {
        x
    } else {
        -(-theta * x).exp_m1() / theta
    }
}

fn check_point(hurst: f64, t: f64, s: f64) -> Result<Option<f64>> {
    if !(t.is_finite() && s.is_finite()) || t < 0.0 || s < 0.0 {
        return domain(format!("kernel arguments must be finite and non-negative, got ({t}, {s})"));
    }
    if s >= t {
        return Ok(Some(0.0));
    }
    if s == 0.0 && hurst != 0.5 {
        return Err(Error::Singular { t, s });
    }
    Ok(None)
}

/// Molchan-Golosov kernel `K_H(t,s)` of fBm with respect to Brownian motion.
pub fn kernel_k(hurst: f64, t: f64, s: f64) -> Result<f64> {
    check_hurst(hurst)?;
    if let Some(v) = check_point(hurst, t, s)? {
        return Ok(v);
    }
    Ok(KernelEvaluator::new(FouParams::fbm(hurst)?).k(t, s))
}

/// Kernel of Brownian motion with respect to fBm.
pub fn kernel_k_inv(hurst: f64, t: f64, s: f64) -> Result<f64> {
    check_hurst(hurst)?;
    if let Some(v) = check_point(hurst, t, s)? {
        return Ok(v);
    }
    Ok(KernelEvaluator::new(FouParams::fbm(hurst)?).k_inv(t, s))
}

/// Kernel of the fOU process with respect to Brownian motion.
pub fn kernel_l(params: &FouParams, t: f64, s: f64) -> Result<f64> {
    if let Some(v) = check_point(params.hurst, t, s)? {
        return Ok(v);
    }
    Ok(KernelEvaluator::new(*params).l(t, s))
}

/// Kernel of Brownian motion with respect to the fOU process.
pub fn kernel_l_inv(params: &FouParams, t: f64, s: f64) -> Result<f64> {
    if let Some(v) = check_point(params.hurst, t, s)? {
        return Ok(v);
    }
    Ok(KernelEvaluator::new(*params).l_inv(t, s))
}

/// Lower-triangular `(n+1) × n` discretization of a Volterra kernel.
///
/// Row `i` applied to the increments `ΔX_j = X(t_{j+1}) - X(t_j)` approximates
/// `∫_0^{t_i} k(t_i, s) dX_s`. Entry `(i, j)` is the average of `k(t_i, ·)` over
/// cell `j` for the cell touching the diagonal and the cell touching zero, and
/// the midpoint value otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    grid: Grid,
    role: KernelRole,
    params: FouParams,
    entries: Vec<f64>,
}

impl KernelMatrix {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn role(&self) -> KernelRole {
        self.role
    }

    pub fn params(&self) -> &FouParams {
        &self.params
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.grid.n() + j]
    }

    /// Row `i`; only the first `i` entries can be non-zero.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.grid.n();
        &self.entries[i * n..(i + 1) * n]
    }

    /// Maps increments `ΔX` (length `n`) to the values `Y(t_i)`, `i = 0..=n`.
    pub fn apply_increments(&self, increments: &[f64]) -> Result<Vec<f64>> {
        let n = self.grid.n();
        if increments.len() != n {
            return Err(Error::GridMismatch(format!(
                "expected {n} increments, got {}",
                increments.len()
            )));
        }
        Ok((0..=n)
            .map(|i| {
                self.row(i)[..i]
                    .iter()
                    .zip(&increments[..i])
                    .map(|(a, x)| a * x)
                    .sum()
            })
            .collect())
    }

    /// Maps path values `X(t_i)` to `Y(t_i)` through the increments of `X`.
    pub fn apply_values(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.grid.n() + 1 {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                self.grid.n() + 1,
                values.len()
            )));
        }
        let inc: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
        self.apply_increments(&inc)
    }

    /// Writes the non-zero pattern row-major as CSV with header `i,j,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "j", "value"])?;
        for i in 0..=self.grid.n() {
            for j in 0..i {
                w.write_record(&[i.to_string(), j.to_string(), format!("{:e}", self.get(i, j))])?;
            }
        }
        w.flush()
    }
}

/// Integral of `f` over `[lo, lo + w]` where `f` behaves like `(x - lo)^γ`
/// near `lo`, using a Jacobi rule for the weight `x^γ`.
fn jacobi_left(rule: &GaussRule, lo: f64, w: f64, f: impl Fn(f64) -> f64) -> f64 {
    let g = rule.gamma;
    let mut acc = 0.0;
    for (y, wt) in rule.nodes.iter().zip(&rule.weights) {
        let x = w * y;
        acc += wt * f(lo + x) * x.powf(-g);
    }
    acc * w.powf(g + 1.0)
}

/// As [`jacobi_left`] with the singular end at `hi`.
fn jacobi_right(rule: &GaussRule, hi: f64, w: f64, f: impl Fn(f64) -> f64) -> f64 {
    let g = rule.gamma;
    let mut acc = 0.0;
    for (y, wt) in rule.nodes.iter().zip(&rule.weights) {
        let x = w * y;
        acc += wt * f(hi - x) * x.powf(-g);
    }
    acc * w.powf(g + 1.0)
}

impl KernelEvaluator {
    /// Cell rules `(near zero, near the diagonal)` for a role.
    fn cell_rules(&self, role: KernelRole) -> (&GaussRule, &GaussRule) {
        // near s = 0, K and L behave like s^{-|α|} and the inverses like s^{-α}
        match role {
            KernelRole::K | KernelRole::L => {
                let zero = if self.alpha > 0.0 { self.rule_neg() } else { self.rule_pos() };
                (zero, self.rule_pos())
            }
            KernelRole::KInv | KernelRole::LInv => (self.rule_neg(), self.rule_neg()),
        }
    }

    pub(crate) fn matrix_row(&self, role: KernelRole, grid: &Grid, i: usize) -> Vec<f64> {
        if role == KernelRole::LInv {
            return self.l_inv_row(grid, i);
        }
        let n = grid.n();
        let h = grid.step();
        let mut row = vec![0.0; n];
        if i == 0 {
            return row;
        }
        let t = grid.point(i);
        for (j, r) in row.iter_mut().enumerate().take(i) {
            *r = self.eval(role, t, grid.midpoint(j));
        }
        if self.alpha == 0.0 {
            return row;
        }
        let (zero, diag) = self.cell_rules(role);
        let f = |s: f64| self.eval(role, t, s);
        if i == 1 {
            let half = 0.5 * h;
            row[0] = (jacobi_left(zero, 0.0, half, f) + jacobi_right(diag, t, half, f)) / h;
        } else {
            row[0] = jacobi_left(zero, 0.0, h, f) / h;
            row[i - 1] = jacobi_right(diag, t, h, f) / h;
        }
        if role == KernelRole::KInv {
            row[0] = self.first_cell_shaped(t, h, |s| self.k_inv(t, s) * self.shape_slope(s, h));
        }
        row
    }

    /// `d/ds (s/Δ)^{H+1/2}`: on the first cell the transformed path grows like
    /// `t^{H+1/2}` rather than linearly, so the inverse kernels weight the
    /// first increment with this shape.
    fn shape_slope(&self, s: f64, h: f64) -> f64 {
        let p = self.alpha + 1.0;
        p * (s / h).powf(p - 1.0) / h
    }

    /// `∫_0^Δ f` for `f` with at most a logarithmic singularity at 0 and,
    /// when `t = Δ`, a `(t-s)^{-α}` end point at `Δ`.
    fn first_cell_shaped(&self, t: f64, h: f64, f: impl Fn(f64) -> f64) -> f64 {
        let diag = t <= h * (1.0 + 1e-12);
        let len = if diag { 0.5 * h } else { h };
        let lower: f64 = self.first_cell.iter().map(|(x, w)| w * len * f(x * len)).sum();
        if !diag {
            return lower;
        }
        lower + jacobi_right(self.rule_neg(), t, len, &f)
    }
}

impl KernelEvaluator {
    /// Row of the `L⁻¹` matrix from the `K⁻¹` row: the `∫_s^t K⁻¹(t,v) dv`
    /// term is the sum of the `K⁻¹` cell weights to the right of `s`.
    pub(crate) fn l_inv_row(&self, grid: &Grid, i: usize) -> Vec<f64> {
        let FouParams { theta, sigma, .. } = self.params;
        let mut row = self.matrix_row(KernelRole::KInv, grid, i);
        let h = grid.step();
        let t = grid.point(i);
        let mut right = 0.0;
        for k in (0..i).rev() {
            let a = row[k];
            row[k] = if k == 0 && self.alpha != 0.0 {
                // ∫_0^Δ K⁻¹(t,v) (v/Δ)^{H+1/2} dv for the shaped first increment
                let p = self.alpha + 1.0;
                let first = self.first_cell_shaped(t, h, |v| self.k_inv(t, v) * self.shape_slope(v, h) * v / p);
                (a + theta * (first + h * right)) / sigma
            } else {
                (a + theta * h * (0.5 * a + right)) / sigma
            };
            right += a;
        }
        row
    }
}

/// Discretizes the kernel of `role` on `grid` (rows computed in parallel).
pub fn discretize(role: KernelRole, params: &FouParams, grid: &Grid) -> KernelMatrix {
    let ev = KernelEvaluator::new(*params);
    let rows: Vec<Vec<f64>> = (0..=grid.n())
        .into_par_iter()
        .map(|i| ev.matrix_row(role, grid, i))
        .collect();
    KernelMatrix {
        grid: *grid,
        role,
        params: *params,
        entries: rows.concat(),
    }
}
