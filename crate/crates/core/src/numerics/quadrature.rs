//! Gauss–Hermite and Gauss–Legendre rules.
//!
//! Hermite rules are stored in "standardized" form: nodes and weights such
//! that `Σ wₖ f(xₖ) ≈ ∫ f(x) φ(x) dx` with `φ` the standard Normal density.
//! The weights therefore sum to one.

use crate::error::{Error, Result};

/// Default node count for Normal-kernel integrals.
pub const DEFAULT_GH_NODES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleKind {
    GaussHermiteStandardized,
    AdaptiveInterval,
}

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    kind: RuleKind,
    layout: Layout,
}

#[derive(Clone, Copy, Debug)]
enum Layout {
    Hermite(usize),
    Interval { a: f64, b: f64, panels: usize, per_panel: usize },
}

impl QuadratureRule {
    /// Gauss–Hermite rule for the standard Normal weight.
    pub fn gauss_hermite(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "quadrature needs at least 2 nodes, got {n}"
            )));
        }
        let (t, w) = hermite_physicists(n);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let nodes = t.iter().map(|t| std::f64::consts::SQRT_2 * t).collect();
        let weights = w.iter().map(|w| w / sqrt_pi).collect();
        Ok(Self {
            nodes,
            weights,
            kind: RuleKind::GaussHermiteStandardized,
            layout: Layout::Hermite(n),
        })
    }

    /// Composite Gauss–Legendre rule on `[a, b]` with `panels` equal panels
    /// of `per_panel` nodes each.
    pub fn interval(a: f64, b: f64, panels: usize, per_panel: usize) -> Result<Self> {
        if !(b > a) || panels == 0 || per_panel < 2 {
            return Err(Error::InvalidInput(format!(
                "bad interval rule on [{a}, {b}] with {panels}x{per_panel} nodes"
            )));
        }
        let (t, w) = legendre(per_panel);
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * per_panel);
        let mut weights = Vec::with_capacity(panels * per_panel);
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (tk, wk) in t.iter().zip(&w) {
                nodes.push(lo + 0.5 * h * (tk + 1.0));
                weights.push(0.5 * h * wk);
            }
        }
        Ok(Self {
            nodes,
            weights,
            kind: RuleKind::AdaptiveInterval,
            layout: Layout::Interval { a, b, panels, per_panel },
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The same family of rule with twice as many nodes.
    pub fn refined(&self) -> Result<Self> {
        match self.layout {
            Layout::Hermite(n) => Self::gauss_hermite(2 * n),
            Layout::Interval { a, b, panels, per_panel } => Self::interval(a, b, 2 * panels, per_panel),
        }
    }

    /// `log ∫ exp(log_h(x)) dx` over the real line (Hermite rules) or the
    /// rule's interval, accumulated stably in log space.
    pub fn log_integral<F: FnMut(f64) -> f64>(&self, mut log_h: F) -> Result<f64> {
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| {
                let base = match self.kind {
                    RuleKind::GaussHermiteStandardized => -super::dist::norm_log_pdf(x),
                    RuleKind::AdaptiveInterval => 0.0,
                };
                log_h(x) + base + w.ln()
            })
            .collect();
        if let Some((i, _)) = terms.iter().enumerate().find(|(_, v)| v.is_nan() || **v == f64::INFINITY) {
            return Err(Error::IntegrandNotFinite { at: self.nodes[i] });
        }
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln())
    }

    /// Plain weighted sum `Σ wₖ f(xₖ)` over the stored nodes.
    pub fn sum<F: FnMut(f64) -> f64>(&self, mut f: F) -> Result<f64> {
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let v = f(*x);
            if !v.is_finite() {
                return Err(Error::IntegrandNotFinite { at: *x });
            }
            acc += w * v;
        }
        Ok(acc)
    }
}

/// `∫ f(x) φ((x - mean)/sd)/sd dx` by a standardized Gauss–Hermite rule.
pub fn integrate_gh<F: FnMut(f64) -> f64>(
    mut f: F,
    mean: f64,
    sd: f64,
    rule: &QuadratureRule,
) -> Result<f64> {
    if !(sd > 0.0) {
        return Err(Error::InvalidInput(format!("sd must be positive, got {sd}")));
    }
    if rule.kind != RuleKind::GaussHermiteStandardized {
        return Err(Error::InvalidInput(
            "integrate_gh needs a Gauss-Hermite rule".into(),
        ));
    }
    let mut acc = 0.0;
    for (t, w) in rule.nodes.iter().zip(&rule.weights) {
        let x = mean + sd * t;
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::IntegrandNotFinite { at: x });
        }
        acc += w * v;
    }
    Ok(acc)
}

/// Adaptive Gauss–Legendre integration on `[a, b]`: panels are bisected until
/// a 16-node panel and its two halves agree to `tol` (absolute, scaled by
/// the panel's share of the interval).
pub fn integrate_interval<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let (t, w) = legendre(16);
    let panel = |lo: f64, hi: f64| -> Result<f64> {
        let h = 0.5 * (hi - lo);
        let c = 0.5 * (hi + lo);
        let mut acc = 0.0;
        for (tk, wk) in t.iter().zip(&w) {
            let x = c + h * tk;
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::IntegrandNotFinite { at: x });
            }
            acc += wk * v;
        }
        Ok(h * acc)
    };
    let width = b - a;
    let mut stack = vec![(a, b, panel(a, b)?, 0usize)];
    let mut total = 0.0;
    while let Some((lo, hi, whole, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = panel(lo, mid)?;
        let right = panel(mid, hi)?;
        let share = (hi - lo) / width;
        if (left + right - whole).abs() <= tol * share.max(1e-6) || depth >= 40 {
            total += left + right;
        } else {
            stack.push((mid, hi, right, depth + 1));
            stack.push((lo, mid, left, depth + 1));
        }
    }
    Ok(total)
}

/// Physicists' Gauss–Hermite nodes/weights (weight `exp(-t²)`): eigenvalues
/// of the Jacobi matrix as starting points, polished by Newton iteration on
/// the orthonormal Hermite recurrence.
fn hermite_physicists(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^(-1/4)
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let jacobi = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut start: Vec<f64> = jacobi.symmetric_eigenvalues().iter().cloned().collect();
    start.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for i in 0..m {
        let mut z = start[i];
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = (j + 1) as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    // Ascending order.
    x.reverse();
    w.reverse();
    (x, w)
}

/// Gauss–Legendre nodes/weights on `[-1, 1]`.
fn legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gh64() -> QuadratureRule {
        QuadratureRule::gauss_hermite(DEFAULT_GH_NODES).unwrap()
    }

    #[test]
    fn normal_moments_are_exact() {
        let rule = gh64();
        // E[X^{2k}] = (2k-1)!!
        let expected = [1.0, 1.0, 3.0, 15.0, 105.0, 945.0];
        for (k, e) in expected.iter().enumerate() {
            let v = integrate_gh(|x| x.powi(2 * k as i32), 0.0, 1.0, &rule).unwrap();
            assert!((v - e).abs() / e < 1e-12, "degree {} gave {v}", 2 * k);
        }
        for k in [1, 3, 5, 7, 9] {
            let v = integrate_gh(|x| x.powi(k), 0.0, 1.0, &rule).unwrap();
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn spec_examples() {
        let rule = gh64();
        let one = integrate_gh(|_| 1.0, 0.0, 1.0, &rule).unwrap();
        let second = integrate_gh(|x| x * x, 0.0, 1.0, &rule).unwrap();
        let logistic = integrate_gh(|x| 1.0 / (1.0 + x.exp()), 0.0, 1.0, &rule).unwrap();
        assert!((one - 1.0).abs() < 1e-14);
        assert!((second - 1.0).abs() < 1e-13);
        assert!((logistic - 0.5).abs() < 1e-14);
    }

    #[test]
    fn shifted_and_scaled_kernel() {
        let rule = gh64();
        let m = integrate_gh(|x| x, 2.5, 0.7, &rule).unwrap();
        let v = integrate_gh(|x| (x - 2.5).powi(2), 2.5, 0.7, &rule).unwrap();
        assert!((m - 2.5).abs() < 1e-13);
        assert!((v - 0.49).abs() < 1e-13);
    }

    #[test]
    fn rejects_non_finite_integrand_and_bad_sd() {
        let rule = gh64();
        let err = integrate_gh(|x| if x > 3.0 { f64::NAN } else { 1.0 }, 0.0, 1.0, &rule);
        assert!(matches!(err, Err(Error::IntegrandNotFinite { .. })));
        assert!(err.unwrap_err().to_string().contains("integrand not finite"));
        assert!(integrate_gh(|_| 1.0, 0.0, 0.0, &rule).is_err());
        assert!(QuadratureRule::gauss_hermite(1).is_err());
    }

    #[test]
    fn interval_rules() {
        let rule = QuadratureRule::interval(0.0, 2.0, 4, 8).unwrap();
        let v = rule.sum(|x| x.powi(5)).unwrap();
        assert!((v - 64.0 / 6.0).abs() < 1e-12);
        let adaptive = integrate_interval(|x| (-x * x).exp(), -10.0, 10.0, 1e-13).unwrap();
        assert!((adaptive - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }
}
