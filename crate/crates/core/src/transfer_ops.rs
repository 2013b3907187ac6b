//! Operators on integrands that carry Wiener integrals from one driving
//! process to another:
//!
//! ```text
//! ∫ g dB^H = ∫ K*g dW          ∫ f dW = ∫ (K*)⁻¹f dB^H
//! ∫ g dU   = ∫ L*g dW          ∫ f dW = ∫ (L*)⁻¹f dU
//! ```
//!
//! With `α = H - 1/2` and right-sided Riemann-Liouville operators on `[0, T]`:
//!
//! ```text
//! K*g(t)      = c t^{-α} I^{α}[v^α g](t)
//! (K*)⁻¹g(t)  = c⁻¹ t^{-α} I^{-α}[v^α g](t)
//! L*g(t)      = σ K*g(t) - θσ g(T) N(T,t) + θσ ∫_t^T N(s,t) dg(s)
//! (L*)⁻¹g(t)  = [ (K*)⁻¹g(t) + θ ∫_t^T (K*)⁻¹g(v) dv ] / σ
//! ```
//!
//! where `N(s,t) = ∫_t^s K(u,t) e^{-θ(s-u)} du`. The `L*` line is the
//! difference form `σK*g - θσ g(t)N(T,t) + θσ∫[g(s)-g(t)][θN(s,t) - K(s,t)]ds`
//! integrated by parts in `s` (using `∂_s N = K - θN`), which needs `N` only.
//!
//! Operators are evaluated at arbitrary `t` or on the grid. On the grid the
//! first output point is `Δ/2` rather than 0 whenever `H ≠ 1/2` (`K*` and
//! `L*` diverge like `t^{-|α|}` at the origin, the inverses behave like
//! `t^{-α}`), and the last is `T - Δ/2` when the operator diverges at `T`.

use rayon::prelude::*;
use std::sync::OnceLock;

use crate::error::{domain, Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::kernels::{FouParams, KernelEvaluator, KernelRole};
use crate::quadrature::{graded_towards_zero, GaussRule, NODES};
use crate::special_fn::gamma_unchecked;

/// A real function on `[0, T]` that operators can sample anywhere.
pub trait Integrand: Sync {
    fn eval(&self, t: f64) -> f64;
}

impl<F: Fn(f64) -> f64 + Sync> Integrand for F {
    fn eval(&self, t: f64) -> f64 {
        self(t)
    }
}

/// How grid values are extended between grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Linear between neighbouring values.
    Linear,
    /// Equal to `values[j]` on `[t_j, t_{j+1})`; represents indicators exactly.
    Constant,
}

/// The process an integrand is integrated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrandRole {
    Bm,
    Fbm,
    Fou,
}

/// Grid-sampled integrand with an interpolation rule and a role tag.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrandFunction {
    values: GridFunction,
    interp: Interpolation,
    role: IntegrandRole,
}

impl IntegrandFunction {
    pub fn new(values: GridFunction, interp: Interpolation, role: IntegrandRole) -> Self {
        Self { values, interp, role }
    }

    /// Piecewise-linear integrand sampled from `f`.
    pub fn from_fn(grid: Grid, role: IntegrandRole, f: impl Fn(f64) -> f64) -> Result<Self> {
        Ok(Self::new(GridFunction::from_fn(grid, f)?, Interpolation::Linear, role))
    }

    /// `1_{[0,v)}`; `v` must be a grid point.
    pub fn indicator(grid: Grid, v: f64, role: IntegrandRole) -> Result<Self> {
        let m = grid
            .index_of(v)
            .ok_or_else(|| Error::Domain(format!("indicator endpoint {v} is not a grid point")))?;
        let values = (0..=grid.n()).map(|j| if j < m { 1.0 } else { 0.0 }).collect();
        Ok(Self::new(GridFunction::new(grid, values)?, Interpolation::Constant, role))
    }

    pub fn grid(&self) -> &Grid {
        self.values.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.values.values()
    }

    pub fn grid_function(&self) -> &GridFunction {
        &self.values
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interp
    }

    pub fn role(&self) -> IntegrandRole {
        self.role
    }

    pub fn with_role(mut self, role: IntegrandRole) -> Self {
        self.role = role;
        self
    }

    /// `∫_a^b g(s) ds`, exact for the interpolation rule.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let grid = self.grid();
        let v = self.values();
        let (ja, jb) = (grid.cell_of(a), grid.cell_of(b));
        let mut acc = 0.0;
        for j in ja..=jb {
            let lo = a.max(grid.point(j));
            let hi = b.min(grid.point(j + 1));
            if hi <= lo {
                continue;
            }
            acc += match self.interp {
                Interpolation::Constant => v[j] * (hi - lo),
                Interpolation::Linear => 0.5 * (self.eval(lo) + self.eval(hi)) * (hi - lo),
            };
        }
        acc
    }
}

impl Integrand for IntegrandFunction {
    fn eval(&self, t: f64) -> f64 {
        match self.interp {
            Interpolation::Linear => self.values.interpolate(t),
            Interpolation::Constant => {
                let grid = self.grid();
                if t >= grid.horizon() {
                    self.values()[grid.n()]
                } else {
                    self.values()[grid.cell_of(t)]
                }
            }
        }
    }
}

/// `(L*)⁻¹g` on a grid: values at the output points and one weight per path
/// increment.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseSamples {
    pub points: Vec<f64>,
    pub values: Vec<f64>,
    /// Cell averages, except on the first cell when `H ≠ 1/2`: there the
    /// fOU path grows like `t^{H+1/2}`, and the weight is the average against
    /// that shape, matching the inverse kernel matrices.
    pub cell_means: Vec<f64>,
}

/// The four integrand operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operator {
    KStar,
    KStarInv,
    LStar,
    LStarInv,
}

/// Integrand operators for fixed parameters on a fixed grid `[0, T]`.
///
/// The `N(t_k, τ_j)` table needed by `L*` on the grid is built on first use
/// and shared afterwards.
#[derive(Debug)]
pub struct TransferOps {
    ev: KernelEvaluator,
    grid: Grid,
    rule_int: GaussRule,
    rule_der: GaussRule,
    legendre: GaussRule,
    gauss3: GaussRule,
    rule_zero: GaussRule,
    first_cell: Vec<(f64, f64)>,
    n_table: OnceLock<Vec<Vec<f64>>>,
}

impl TransferOps {
    pub fn new(params: FouParams, grid: Grid) -> Self {
        let a = (params.hurst - 0.5).abs();
        Self {
            ev: KernelEvaluator::new(params),
            grid,
            // unused at H = 1/2, where every fractional order vanishes
            rule_int: GaussRule::jacobi(NODES, if a > 0.0 { a - 1.0 } else { 0.0 }),
            rule_der: GaussRule::jacobi(NODES, -a),
            legendre: GaussRule::legendre(NODES),
            gauss3: GaussRule::legendre(3),
            // (K*)⁻¹g behaves like t^{-α} at the origin
            rule_zero: GaussRule::jacobi(NODES, 0.5 - params.hurst),
            first_cell: graded_towards_zero(&GaussRule::legendre(8), 1.0, 16),
            n_table: OnceLock::new(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &FouParams {
        self.ev.params()
    }

    pub fn kernels(&self) -> &KernelEvaluator {
        &self.ev
    }

    fn alpha(&self) -> f64 {
        self.ev.alpha()
    }

    /// Whether `op` diverges at the right end for generic integrands.
    fn singular_at_end(&self, op: Operator) -> bool {
        let a = self.alpha();
        match op {
            Operator::KStar | Operator::LStar => a < 0.0,
            Operator::KStarInv | Operator::LStarInv => a > 0.0,
        }
    }

    /// Points at which grid outputs of `op` are evaluated.
    pub fn eval_points(&self, op: Operator) -> Vec<f64> {
        let mut pts = self.grid.points();
        if self.alpha() != 0.0 {
            let h = self.grid.step();
            pts[0] = 0.5 * h;
            if self.singular_at_end(op) {
                pts[self.grid.n()] = self.grid.horizon() - 0.5 * h;
            }
        }
        pts
    }

    /// Grid points strictly inside `(t, T)`, followed by `T`.
    fn breakpoints(&self, t: f64) -> impl Iterator<Item = f64> + '_ {
        let n = self.grid.n();
        let first = self.grid.cell_of(t) + 1;
        let tol = 1e-12 * self.grid.step();
        (first..=n).map(|k| self.grid.point(k)).filter(move |&p| p > t + tol || p == self.grid.horizon())
    }

    /// `∫_a^b f` where `f` may be nearly singular at `t < a`.
    fn legendre_graded(&self, t: f64, a: f64, b: f64, f: &impl Fn(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        let mut lo = a;
        while lo < b {
            let hi = (t + 3.0 * (lo - t)).min(b);
            acc += self.legendre.integrate(lo, hi, f);
            lo = hi;
        }
        acc
    }

    /// `I^{order}_{T-}[v^α g](t)` for `order ∈ (-1, 1) \ {0}`; negative orders
    /// are fractional derivatives in Marchaud form.
    fn weighted_rl(&self, g: &dyn Integrand, t: f64, order: f64) -> f64 {
        let a = self.alpha();
        let horizon = self.grid.horizon();
        let f = |v: f64| v.powf(a) * g.eval(v);
        let mut pieces = self.breakpoints(t);
        let first_end = pieces.next().unwrap_or(horizon);
        if order > 0.0 {
            let p = order - 1.0;
            let mut acc = jacobi_from(&self.rule_int, t, first_end - t, &f);
            let mut lo = first_end;
            for hi in pieces {
                acc += self.legendre_graded(t, lo, hi, &|v| f(v) * (v - t).powf(p));
                lo = hi;
            }
            acc / gamma_unchecked(order)
        } else {
            let beta = -order;
            let ft = f(t);
            let mut acc = jacobi_from(&self.rule_der, t, first_end - t, &|v| (ft - f(v)) / (v - t));
            let mut lo = first_end;
            for hi in pieces {
                acc += self.legendre_graded(t, lo, hi, &|v| (ft - f(v)) * (v - t).powf(-beta - 1.0));
                lo = hi;
            }
            (ft * (horizon - t).powf(-beta) + beta * acc) / gamma_unchecked(1.0 - beta)
        }
    }

    /// `K*g(t)` for `0 < t < T`.
    pub fn k_star_at(&self, g: &dyn Integrand, t: f64) -> f64 {
        let a = self.alpha();
        if a == 0.0 {
            return g.eval(t);
        }
        if t >= self.grid.horizon() && a > 0.0 {
            return 0.0;
        }
        self.ev.c_h() * t.powf(-a) * self.weighted_rl(g, t, a)
    }

    /// `(K*)⁻¹g(t)` for `0 < t < T`.
    pub fn k_star_inv_at(&self, g: &dyn Integrand, t: f64) -> f64 {
        let a = self.alpha();
        if a == 0.0 {
            return g.eval(t);
        }
        if t >= self.grid.horizon() && a < 0.0 {
            return 0.0;
        }
        t.powf(-a) * self.weighted_rl(g, t, -a) / self.ev.c_h()
    }

    /// `(L*)⁻¹g(t)` for `0 < t < T`; each tail node costs a full `(K*)⁻¹`
    /// evaluation, so grid outputs should go through [`TransferOps::apply`].
    pub fn l_star_inv_at(&self, g: &dyn Integrand, t: f64) -> f64 {
        let FouParams { theta, sigma, .. } = *self.params();
        let f = self.k_star_inv_at(g, t);
        if theta == 0.0 {
            return f / sigma;
        }
        let end = self.grid.horizon();
        let mut tail = 0.0;
        let mut lo = t;
        for hi in self.breakpoints(t) {
            tail += self.cell_rule(lo, hi, hi == end)
                .into_iter()
                .map(|(v, w)| w * self.k_star_inv_at(g, v))
                .sum::<f64>();
            lo = hi;
        }
        (f + theta * tail) / sigma
    }

    /// Nodes and weights for `∫_lo^hi F` where `F = (K*)⁻¹g`: Jacobi rules
    /// where `F` diverges (at 0, and at `T` for `H > 1/2`), three-point Gauss
    /// elsewhere.
    fn cell_rule(&self, lo: f64, hi: f64, at_end: bool) -> Vec<(f64, f64)> {
        let w = hi - lo;
        if w <= 0.0 {
            return Vec::new();
        }
        let a = self.alpha();
        if at_end && a > 0.0 {
            let g = self.rule_der.gamma;
            return self
                .rule_der
                .nodes
                .iter()
                .zip(&self.rule_der.weights)
                .map(|(y, wt)| {
                    let x = w * y;
                    (hi - x, wt * w.powf(g + 1.0) * x.powf(-g))
                })
                .collect();
        }
        if lo == 0.0 && a != 0.0 {
            let g = self.rule_zero.gamma;
            return self
                .rule_zero
                .nodes
                .iter()
                .zip(&self.rule_zero.weights)
                .map(|(y, wt)| {
                    let x = w * y;
                    (x, wt * w.powf(g + 1.0) * x.powf(-g))
                })
                .collect();
        }
        self.gauss3
            .nodes
            .iter()
            .zip(&self.gauss3.weights)
            .map(|(y, wt)| (lo + w * y, wt * w))
            .collect()
    }

    /// `(L*)⁻¹g` at the grid output points and averaged over each cell.
    ///
    /// `(K*)⁻¹g` is sampled once on every cell rule; the tail integrals are
    /// suffix sums of the cell integrals.
    pub fn l_star_inv_samples(&self, g: &dyn Integrand) -> InverseSamples {
        let FouParams { theta, sigma, .. } = *self.params();
        let n = self.grid.n();
        let h = self.grid.step();
        let end = self.grid.horizon();
        let pts = self.eval_points(Operator::LStarInv);
        // cell rules, then the two partial end pieces
        let mut rules: Vec<Vec<(f64, f64)>> = (0..n)
            .map(|k| self.cell_rule(self.grid.point(k), self.grid.point(k + 1), k + 1 == n))
            .collect();
        rules.push(self.cell_rule(pts[0], self.grid.point(1), false));
        rules.push(self.cell_rule(pts[n], end, pts[n] < end));
        rules.push(self.shaped_first_cell());
        let nodes: Vec<f64> = pts
            .iter()
            .copied()
            .chain(rules.iter().flatten().map(|p| p.0))
            .collect();
        let f: Vec<f64> = nodes.par_iter().map(|&v| self.k_star_inv_at(g, v)).collect();
        let (at_pts, mut rest) = f.split_at(n + 1);
        let mut integral = Vec::with_capacity(n + 2);
        let mut moment = Vec::with_capacity(n + 2);
        for (k, rule) in rules[..n + 2].iter().enumerate() {
            let (vals, tail) = rest.split_at(rule.len());
            rest = tail;
            let left = if k < n { self.grid.point(k) } else { 0.0 };
            integral.push(rule.iter().zip(vals).map(|((_, w), fv)| w * fv).sum::<f64>());
            moment.push(rule.iter().zip(vals).map(|((v, w), fv)| w * fv * (v - left)).sum::<f64>());
        }
        // suffix[k] = ∫_{t_k}^T F
        let mut suffix = vec![0.0; n + 1];
        for k in (0..n).rev() {
            suffix[k] = suffix[k + 1] + integral[k];
        }
        let tail_at = |j: usize| -> f64 {
            if j == 0 && pts[0] > 0.0 {
                integral[n] + suffix[1]
            } else if j == n {
                integral[n + 1]
            } else {
                suffix[j]
            }
        };
        let values = (0..=n).map(|j| (at_pts[j] + theta * tail_at(j)) / sigma).collect();
        let mut cell_means: Vec<f64> = (0..n)
            .map(|k| (integral[k] / h + theta * (suffix[k + 1] + moment[k] / h)) / sigma)
            .collect();
        if self.alpha() != 0.0 {
            // weight of the first increment against the (s/Δ)^{H+1/2} shape
            let p = self.alpha() + 1.0;
            let (slope, level) = rules[n + 2].iter().zip(rest).fold((0.0, 0.0), |(a, b), ((v, w), fv)| {
                let y = v / h;
                (a + w * fv * p * y.powf(p - 1.0) / h, b + w * fv * y.powf(p))
            });
            cell_means[0] = (slope + theta * (level + suffix[1])) / sigma;
        }
        InverseSamples { points: pts, values, cell_means }
    }

    /// Nodes and weights on `[0, Δ]`, graded towards 0.
    fn shaped_first_cell(&self) -> Vec<(f64, f64)> {
        let h = self.grid.step();
        self.first_cell.iter().map(|(y, w)| (h * y, w * h)).collect()
    }

    /// `(L*)⁻¹` of a piecewise-constant integrand as a combination of kernel
    /// sections, `g = Σ_k c_k 1_{[0,t_k)}`; cost grows with the number of jumps.
    fn l_star_inv_steps(&self, g: &IntegrandFunction) -> InverseSamples {
        let n = self.grid.n();
        let v = g.values();
        let coeffs: Vec<(usize, f64)> = (1..=n)
            .map(|k| (k, if k < n { v[k - 1] - v[k] } else { v[n - 1] }))
            .filter(|&(_, c)| c != 0.0)
            .collect();
        let pts = self.eval_points(Operator::LStarInv);
        let values = pts
            .par_iter()
            .map(|&t| coeffs.iter().map(|&(k, c)| c * self.ev.l_inv(self.grid.point(k), t)).sum())
            .collect();
        let cell_means = self.step_sections(g, |k| self.ev.l_inv_row(&self.grid, k));
        InverseSamples { points: pts, values, cell_means }
    }

    /// `Σ_k c_k row(k)` over the jumps of a piecewise-constant integrand
    /// `g = Σ_k c_k 1_{[0,t_k)}`.
    fn step_sections(&self, g: &IntegrandFunction, row: impl Fn(usize) -> Vec<f64> + Sync) -> Vec<f64> {
        let n = self.grid.n();
        let v = g.values();
        let rows: Vec<(f64, Vec<f64>)> = (1..=n)
            .into_par_iter()
            .filter_map(|k| {
                let c = if k < n { v[k - 1] - v[k] } else { v[n - 1] };
                (c != 0.0).then(|| (c, row(k)))
            })
            .collect();
        (0..n).map(|j| rows.iter().map(|(c, r)| c * r[j]).sum()).collect()
    }

    /// `L*g(t)` for `0 < t < T`, with `N(·, t)` computed on the fly.
    pub fn l_star_at(&self, g: &IntegrandFunction, t: f64) -> Result<f64> {
        self.check_grid(g)?;
        let k = self.k_star_at(g, t);
        let first = self.grid.cell_of(t) + 1;
        let n_vals: Vec<f64> = (first..=self.grid.n())
            .map(|k| self.ev.k_exp_integral(self.grid.point(k), t))
            .collect();
        Ok(self.l_star_combine(g, t, k, first, &n_vals))
    }

    /// Assembles `σK*g - θσ g(T)N(T,t) + θσ∫_t^T N(s,t) dg(s)` from
    /// `n_vals[k - first] = N(t_k, t)` for grid points `t_k > t`.
    fn l_star_combine(&self, g: &IntegrandFunction, t: f64, k_star: f64, first: usize, n_vals: &[f64]) -> f64 {
        let FouParams { theta, sigma, .. } = *self.params();
        if theta == 0.0 {
            return sigma * k_star;
        }
        let n = self.grid.n();
        let v = g.values();
        let n_end = *n_vals.last().unwrap_or(&0.0);
        let nv = |k: usize| if k < first { 0.0 } else { n_vals[k - first] };
        let mut stieltjes = 0.0;
        match g.interpolation() {
            Interpolation::Constant => {
                for k in first..=n {
                    stieltjes += nv(k) * (v[k] - v[k - 1]);
                }
            }
            Interpolation::Linear => {
                let h = self.grid.step();
                for k in first.saturating_sub(1)..n {
                    let slope = (v[k + 1] - v[k]) / h;
                    let lo = self.grid.point(k).max(t);
                    let hi = self.grid.point(k + 1);
                    // trapezoid on N, with N(t,t) = 0 at a partial first cell
                    let n_lo = if k + 1 == first { 0.0 } else { nv(k) };
                    stieltjes += slope * 0.5 * (n_lo + nv(k + 1)) * (hi - lo);
                }
            }
        }
        sigma * k_star - theta * sigma * v[n] * n_end + theta * sigma * stieltjes
    }

    fn check_grid(&self, g: &IntegrandFunction) -> Result<()> {
        self.grid.check_same(g.grid())
    }

    /// `N(t_k, τ_j)` for every grid output point `τ_j` of `L*` and `t_k > τ_j`.
    fn n_table(&self) -> &Vec<Vec<f64>> {
        self.n_table.get_or_init(|| {
            let pts = self.eval_points(Operator::LStar);
            pts.par_iter()
                .map(|&tau| {
                    let first = self.grid.cell_of(tau) + 1;
                    (first..=self.grid.n())
                        .map(|k| self.ev.k_exp_integral(self.grid.point(k), tau))
                        .collect()
                })
                .collect()
        })
    }

    /// Evaluates `op` at arbitrary `t ∈ (0, T)`.
    pub fn apply_at(&self, op: Operator, g: &IntegrandFunction, t: f64) -> Result<f64> {
        self.check_grid(g)?;
        Ok(match op {
            Operator::KStar => self.k_star_at(g, t),
            Operator::KStarInv => self.k_star_inv_at(g, t),
            Operator::LStar => return self.l_star_at(g, t),
            Operator::LStarInv => match g.interpolation() {
                Interpolation::Constant => self.l_star_inv_steps_at(g, t),
                Interpolation::Linear => self.l_star_inv_at(g, t),
            },
        })
    }

    fn l_star_inv_steps_at(&self, g: &IntegrandFunction, t: f64) -> f64 {
        let n = self.grid.n();
        let v = g.values();
        (1..=n)
            .map(|k| {
                let c = if k < n { v[k - 1] - v[k] } else { v[n - 1] };
                if c == 0.0 {
                    0.0
                } else {
                    c * self.ev.l_inv(self.grid.point(k), t)
                }
            })
            .sum()
    }

    /// `(L*)⁻¹g` for an integrand on this grid, sampled at the output points
    /// and averaged over cells.
    pub fn l_star_inv_of(&self, g: &IntegrandFunction) -> Result<InverseSamples> {
        self.check_grid(g)?;
        Ok(match g.interpolation() {
            Interpolation::Constant => self.l_star_inv_steps(g),
            Interpolation::Linear => self.l_star_inv_samples(g),
        })
    }

    /// Evaluates `K*`, `(K*)⁻¹` or `(L*)⁻¹` of an arbitrary integrand at the
    /// grid output points.
    pub fn apply_fn(&self, op: Operator, g: &dyn Integrand) -> Result<Vec<f64>> {
        let pts = self.eval_points(op);
        Ok(match op {
            Operator::KStar => pts.par_iter().map(|&t| self.k_star_at(g, t)).collect(),
            Operator::KStarInv => pts.par_iter().map(|&t| self.k_star_inv_at(g, t)).collect(),
            Operator::LStarInv => self.l_star_inv_samples(g).values,
            Operator::LStar => {
                return Err(Error::Invalid(
                    "L* needs a grid integrand (its jumps and slopes enter the operator)".into(),
                ))
            }
        })
    }

    /// Evaluates `op` at [`TransferOps::eval_points`]; the result is a
    /// piecewise-linear integrand for the opposite process.
    pub fn apply(&self, op: Operator, g: &IntegrandFunction) -> Result<IntegrandFunction> {
        self.check_grid(g)?;
        if g.values().iter().any(|v| !v.is_finite()) {
            return domain("integrand has non-finite values");
        }
        let pts = self.eval_points(op);
        let values: Vec<f64> = match op {
            Operator::KStar => pts.par_iter().map(|&t| self.k_star_at(g, t)).collect(),
            Operator::KStarInv => pts.par_iter().map(|&t| self.k_star_inv_at(g, t)).collect(),
            Operator::LStarInv => self.l_star_inv_of(g)?.values,
            Operator::LStar => {
                let table = if self.params().theta == 0.0 { None } else { Some(self.n_table()) };
                pts.par_iter()
                    .enumerate()
                    .map(|(j, &t)| {
                        let k = self.k_star_at(g, t);
                        let first = self.grid.cell_of(t) + 1;
                        match table {
                            Some(tab) => self.l_star_combine(g, t, k, first, &tab[j]),
                            None => self.l_star_combine(g, t, k, first, &[]),
                        }
                    })
                    .collect()
            }
        };
        let role = match op {
            Operator::KStar | Operator::LStar => IntegrandRole::Bm,
            Operator::KStarInv => IntegrandRole::Fbm,
            Operator::LStarInv => IntegrandRole::Fou,
        };
        Ok(IntegrandFunction::new(
            GridFunction::new(self.grid, values)?,
            Interpolation::Linear,
            role,
        ))
    }

    /// `∫_0^T (op g)(t)^2 dt`: two-point Gauss per cell, Jacobi rules on the
    /// end cells where the output diverges.
    pub fn l2_norm_sq(&self, op: Operator, g: &IntegrandFunction) -> Result<f64> {
        self.check_grid(g)?;
        let n = self.grid.n();
        let h = self.grid.step();
        let a = self.alpha().abs();
        let two = GaussRule::legendre(2);
        let sq = |t: f64| self.apply_at(op, g, t).map(|v| v * v);
        let interior: Vec<Result<f64>> = (1..n - 1)
            .into_par_iter()
            .map(|j| {
                let lo = self.grid.point(j);
                let mut acc = 0.0;
                for (x, w) in two.nodes.iter().zip(&two.weights) {
                    acc += w * sq(lo + h * x)?;
                }
                Ok(acc * h)
            })
            .collect();
        let mut total = 0.0;
        for part in interior {
            total += part?;
        }
        let end = self.grid.horizon();
        let tail_gamma = if self.singular_at_end(op) { -2.0 * a } else { 0.0 };
        for (gamma, at) in [(-2.0 * a, 0.0), (tail_gamma, end)] {
            let rule = GaussRule::jacobi(NODES, gamma);
            let mut acc = 0.0;
            for (y, w) in rule.nodes.iter().zip(&rule.weights) {
                let x = h * y;
                let t = if at == 0.0 { x } else { end - x };
                acc += w * sq(t)? * x.powf(-gamma);
            }
            total += acc * h.powf(gamma + 1.0);
        }
        Ok(total)
    }

    /// Averages of `op g` over each grid cell.
    ///
    /// On each cell the output is modelled as `a + b d^γ` through its two
    /// grid samples, with `d` the distance to the nearer end of `[0, T]` and
    /// `γ` the leading exponent of the operator there, and averaged exactly.
    pub fn cell_means(&self, op: Operator, g: &IntegrandFunction) -> Result<Vec<f64>> {
        if op == Operator::LStarInv {
            return Ok(self.l_star_inv_of(g)?.cell_means);
        }
        if g.interpolation() == Interpolation::Constant {
            self.check_grid(g)?;
            let role = match op {
                Operator::KStar => KernelRole::K,
                Operator::KStarInv => KernelRole::KInv,
                _ => KernelRole::L,
            };
            return Ok(self.step_sections(g, |k| self.ev.matrix_row(role, &self.grid, k)));
        }
        let out = self.apply(op, g)?;
        let v = out.values();
        let n = self.grid.n();
        let a = self.alpha().abs();
        if a == 0.0 {
            return Ok((0..n).map(|j| 0.5 * (v[j] + v[j + 1])).collect());
        }
        let pts = self.eval_points(op);
        let end = self.grid.horizon();
        let gamma_end = if self.singular_at_end(op) { -a } else { a };
        // at the origin K*, L* behave like t^{-|α|} and (K*)⁻¹ like t^{-α}
        let gamma_zero = if op == Operator::KStarInv { -self.alpha() } else { -a };
        Ok((0..n)
            .map(|j| {
                let (lo, hi) = (self.grid.point(j), self.grid.point(j + 1));
                if 2 * j < n {
                    power_cell_mean(gamma_zero, (lo, hi), (pts[j], v[j]), (pts[j + 1], v[j + 1]))
                } else {
                    power_cell_mean(gamma_end, (end - hi, end - lo), (end - pts[j + 1], v[j + 1]), (end - pts[j], v[j]))
                }
            })
            .collect())
    }
}

/// Mean over `d ∈ [lo, hi]` of `a + b d^γ` through `(d1, f1)` and `(d2, f2)`.
fn power_cell_mean(gamma: f64, (lo, hi): (f64, f64), (d1, f1): (f64, f64), (d2, f2): (f64, f64)) -> f64 {
    let (p1, p2) = (d1.powf(gamma), d2.powf(gamma));
    let b = (f2 - f1) / (p2 - p1);
    let a = f2 - b * p2;
    let g1 = gamma + 1.0;
    a + b * (hi.powf(g1) - lo.powf(g1)) / (g1 * (hi - lo))
}

/// `∫_t^{t+w} h(v) (v-t)^γ dv` with the Jacobi rule for weight `x^γ`.
fn jacobi_from(rule: &GaussRule, t: f64, w: f64, h: &impl Fn(f64) -> f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (y, wt) in rule.nodes.iter().zip(&rule.weights) {
        acc += wt * h(t + w * y);
    }
    acc * w.powf(rule.gamma + 1.0)
}

fn ops_for(g: &IntegrandFunction, params: FouParams) -> TransferOps {
    TransferOps::new(params, *g.grid())
}

/// `K*g` on the integrand's grid.
pub fn apply_k_star(g: &IntegrandFunction, hurst: f64) -> Result<IntegrandFunction> {
    ops_for(g, FouParams::fbm(hurst)?).apply(Operator::KStar, g)
}

/// `(K*)⁻¹g` on the integrand's grid.
pub fn apply_k_star_inv(g: &IntegrandFunction, hurst: f64) -> Result<IntegrandFunction> {
    ops_for(g, FouParams::fbm(hurst)?).apply(Operator::KStarInv, g)
}

/// `L*g` on the integrand's grid.
pub fn apply_l_star(g: &IntegrandFunction, params: &FouParams) -> Result<IntegrandFunction> {
    ops_for(g, *params).apply(Operator::LStar, g)
}

/// `(L*)⁻¹g` on the integrand's grid.
pub fn apply_l_star_inv(g: &IntegrandFunction, params: &FouParams) -> Result<IntegrandFunction> {
    ops_for(g, *params).apply(Operator::LStarInv, g)
}
