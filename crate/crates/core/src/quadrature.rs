//! Quadrature rules for integrands with algebraic endpoint singularities.
//!
//! Three building blocks are used throughout the crate:
//!
//! * Gauss rules on `[0, 1]` (plain Legendre and Jacobi with weight `x^γ`),
//!   built once by the Golub-Welsch eigenvalue method;
//! * [`PowerWeighted`], which integrates `∫_0^ℓ x^γ h(s + x) dx` where `h` is
//!   smooth on the interval but may blow up a distance `scale` to the left of
//!   `s`. A Jacobi piece absorbs the power law and geometrically growing
//!   Legendre pieces resolve the near-singularity of `h`;
//! * [`tanh_sinh`], a double-exponential rule for integrands whose endpoint
//!   behaviour is not known in closed form.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::special_fn::ln_gamma;

/// Nodes and weights of a Gauss rule on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    /// Exponent of the weight `x^γ` (0 for Legendre).
    pub gamma: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Gauss-Legendre rule with `n` nodes on `[0, 1]`.
    pub fn legendre(n: usize) -> Self {
        Self::jacobi(n, 0.0)
    }

    /// Gauss-Jacobi rule with `n` nodes for `∫_0^1 x^γ f(x) dx`, `γ > -1`.
    pub fn jacobi(n: usize, gamma: f64) -> Self {
        assert!(n >= 1 && gamma > -1.0, "invalid Gauss-Jacobi request");
        // Jacobi weight (1-x)^a (1+x)^b on [-1, 1] with a = 0, b = gamma.
        let (a, b) = (0.0_f64, gamma);
        let ab = a + b;
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n.saturating_sub(1)];
        for (k, d) in diag.iter_mut().enumerate() {
            let kf = k as f64;
            *d = if k == 0 {
                (b - a) / (ab + 2.0)
            } else {
                (b * b - a * a) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
            };
        }
        for (k, o) in off.iter_mut().enumerate() {
            let kf = (k + 1) as f64;
            let num = 4.0 * kf * (kf + a) * (kf + b) * (kf + ab);
            let s = 2.0 * kf + ab;
            *o = (num / (s * s * (s + 1.0) * (s - 1.0))).sqrt();
        }
        let mut m = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            m[(k, k)] = diag[k];
        }
        for k in 0..n.saturating_sub(1) {
            m[(k, k + 1)] = off[k];
            m[(k + 1, k)] = off[k];
        }
        let eig = SymmetricEigen::new(m);
        let ln_mu0 =
            (ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(a + 1.0) + ln_gamma(b + 1.0)
                - ln_gamma(ab + 2.0);
        let mu0 = ln_mu0.exp();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let x = eig.eigenvalues[k];
                let v0 = eig.eigenvectors[(0, k)];
                (x, mu0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
        // Map to [0, 1]: (1 + x)^b dx = 2^{b+1} y^b dy.
        let scale = 2f64.powf(b + 1.0);
        Self {
            gamma,
            nodes: pairs.iter().map(|p| 0.5 * (p.0 + 1.0)).collect(),
            weights: pairs.iter().map(|p| p.1 / scale).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫_a^b f(x) dx` treating the rule as plain Legendre.
    #[inline]
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = b - a;
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(a + h * x);
        }
        acc * h
    }
}

/// Default node count for every rule built by the crate.
pub const NODES: usize = 12;

/// Graded rule for `∫_0^ℓ x^γ h(s + x) dx`.
#[derive(Debug, Clone)]
pub struct PowerWeighted {
    gamma: f64,
    jacobi: GaussRule,
    legendre: GaussRule,
}

impl PowerWeighted {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            jacobi: GaussRule::jacobi(NODES, gamma),
            legendre: GaussRule::legendre(NODES),
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The underlying Gauss-Jacobi rule for `∫_0^1 x^γ f(x) dx`.
    pub fn jacobi_rule(&self) -> &GaussRule {
        &self.jacobi
    }

    /// `∫_0^len x^γ h(s + x) dx`, with `h` allowed to be singular at `s - scale`.
    ///
    /// `scale = +∞` declares `h` smooth, in which case a single Jacobi piece is used.
    pub fn integrate(&self, s: f64, len: f64, scale: f64, mut h: impl FnMut(f64) -> f64) -> f64 {
        if len <= 0.0 {
            return 0.0;
        }
        let g = self.gamma;
        let first = len.min(2.0 * scale);
        let mut acc = 0.0;
        for (y, w) in self.jacobi.nodes.iter().zip(&self.jacobi.weights) {
            acc += w * h(s + first * y);
        }
        acc *= first.powf(g + 1.0);
        let mut lo = first;
        while lo < len {
            let hi = (3.0 * lo).min(len);
            let width = hi - lo;
            let mut piece = 0.0;
            for (y, w) in self.legendre.nodes.iter().zip(&self.legendre.weights) {
                let x = lo + width * y;
                piece += w * x.powf(g) * h(s + x);
            }
            acc += piece * width;
            lo = hi;
        }
        acc
    }
}

/// Nodes and weights on `[0, len]` from `rule` applied on pieces with edges
/// `len·3^{-k}`, `k = levels..0`; suited to integrands with a logarithmic or
/// weak power singularity at 0.
pub fn graded_towards_zero(rule: &GaussRule, len: f64, levels: i32) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(rule.len() * (levels as usize + 1));
    let mut lo = 0.0;
    for k in (0..=levels).rev() {
        let hi = len * 3f64.powi(-k);
        let w = hi - lo;
        out.extend(rule.nodes.iter().zip(&rule.weights).map(|(y, wt)| (lo + w * y, wt * w)));
        lo = hi;
    }
    out
}

/// Double-exponential (tanh-sinh) quadrature of `f` over `[a, b]`.
///
/// The integrand is never evaluated closer than `1e-100 (b - a)` to an endpoint
/// (or at an endpoint after rounding), so integrable power-law singularities
/// `|x - a|^β`, `β > -1`, are handled without special care.
pub fn tanh_sinh(a: f64, b: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let width = b - a;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let d_min = 1e-100 * width;
    // Node at parameter τ: distance d from the nearer endpoint and weight w.
    let node = |tau: f64| -> Option<(f64, f64)> {
        let u = half_pi * tau.abs().sinh();
        let e = (-2.0 * u).exp();
        let d = width * e / (1.0 + e);
        if d < d_min {
            return None;
        }
        let cosh_u = u.cosh();
        let w = width * 0.5 * half_pi * tau.cosh() / (cosh_u * cosh_u);
        Some((d, w))
    };
    let eval = |tau: f64| -> f64 {
        match node(tau) {
            None => 0.0,
            Some((d, w)) => {
                let x = if tau < 0.0 { a + d } else { b - d };
                if x <= a || x >= b {
                    0.0
                } else {
                    w * f(x)
                }
            }
        }
    };
    let tau_max = 6.0;
    let mut h = 0.5;
    let mut sum = eval(0.0);
    let mut k = 1;
    while (k as f64) * h <= tau_max {
        let tau = k as f64 * h;
        sum += eval(tau) + eval(-tau);
        k += 1;
    }
    let mut estimate = sum * h;
    for _level in 0..7 {
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= tau_max {
            let tau = k as f64 * h;
            sum += eval(tau) + eval(-tau);
            k += 2;
        }
        let next = sum * h;
        let done = (next - estimate).abs() <= tol * next.abs().max(1e-300);
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let r = GaussRule::legendre(6);
        let v = r.integrate(0.0, 2.0, |x| x.powi(11));
        assert!((v - 2f64.powi(12) / 12.0).abs() < 1e-10);
        let s: f64 = r.weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn jacobi_weights_match_moments() {
        for &g in &[-0.7, -0.25, 0.3, 0.45] {
            let r = GaussRule::jacobi(10, g);
            for k in 0..8 {
                let m: f64 = r
                    .nodes
                    .iter()
                    .zip(&r.weights)
                    .map(|(x, w)| w * x.powi(k))
                    .sum();
                let exact = 1.0 / (g + k as f64 + 1.0);
                assert!((m - exact).abs() < 1e-13, "g={g} k={k}: {m} vs {exact}");
            }
        }
    }

    #[test]
    fn power_weighted_handles_near_singularity() {
        // ∫_0^1 x^{-0.3} (1e-3 + x)^{-1.2} dx against a brute-force reference
        // computed by substitution x = y^{1/0.7} and a fine composite rule.
        let pw = PowerWeighted::new(-0.3);
        let s = 1e-3;
        let got = pw.integrate(s, 1.0, s, |v| v.powf(-1.2));
        let fine = GaussRule::legendre(20);
        let mut reference = 0.0;
        // x = y^p, dx = p y^{p-1} dy, x^{-0.3} dx = p dy
        let p = 1.0 / 0.7;
        let mut lo = 0.0;
        let mut hi: f64 = 1e-9;
        while lo < 1.0 {
            let top = hi.min(1.0);
            reference += fine.integrate(lo, top, |y| p * (s + y.powf(p)).powf(-1.2));
            lo = top;
            hi = top * 1.5;
        }
        assert!(
            ((got - reference) / reference).abs() < 1e-11,
            "{got} vs {reference}"
        );
    }

    #[test]
    fn graded_rule_handles_log_singularity() {
        let nodes = graded_towards_zero(&GaussRule::legendre(NODES), 0.5, 24);
        // ∫_0^{1/2} ln(1/x) dx = (1 + ln 2)/2
        let v: f64 = nodes.iter().map(|(x, w)| w * -x.ln()).sum();
        assert!((v - 0.5 * (1.0 + 2f64.ln())).abs() < 1e-11, "{v}");
    }

    #[test]
    fn tanh_sinh_endpoint_singularities() {
        let v = tanh_sinh(0.0, 1.0, 1e-14, |x| x.powf(-0.5));
        assert!((v - 2.0).abs() < 1e-11, "{v}");
        let v = tanh_sinh(0.0, 2.0, 1e-14, |x| (2.0 - x).powf(-0.4) * x.powf(0.3));
        // B(1.3, 0.6) * 2^{0.9}; nodes closer to b than one ulp are lost to
        // rounding, which costs about ulp(2)^{0.6}
        let exact = (ln_gamma(1.3) + ln_gamma(0.6) - ln_gamma(1.9)).exp() * 2f64.powf(0.9);
        assert!((v - exact).abs() < 2e-9, "{v} vs {exact}");
        let v = tanh_sinh(0.0, std::f64::consts::PI, 1e-14, f64::sin);
        assert!((v - 2.0).abs() < 1e-13);
    }
}
