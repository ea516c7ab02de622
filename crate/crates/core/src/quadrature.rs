//! Gauss–Legendre rules and a recursive adaptive 1D integrator.

use std::f64::consts::PI;

/// Nodes and weights of the n-point Gauss–Legendre rule on [−1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Integrate `f` over [a, b] with this rule.
    pub fn integrate(&self, f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let h = 0.5 * (b - a);
        let c = 0.5 * (a + b);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(c + h * x);
        }
        s * h
    }

    /// Composite rule: `panels` equal panels over [a, b]. Returns (abscissae, weights).
    pub fn composite(&self, a: f64, b: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
        let k = self.nodes.len();
        let mut xs = Vec::with_capacity(panels * k);
        let mut ws = Vec::with_capacity(panels * k);
        let width = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + width * p as f64;
            let c = lo + 0.5 * width;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                xs.push(c + 0.5 * width * x);
                ws.push(0.5 * width * w);
            }
        }
        (xs, ws)
    }
}

/// Legendre P_n(x) and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Recursive adaptive Gauss–Legendre integration to absolute tolerance `tol`
/// (or a few ulps relative, whichever is looser).
pub fn integrate_adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let rule = GaussLegendre::new(10);
    let whole = rule.integrate(f, a, b);
    adapt(&rule, f, a, b, whole, tol, 0)
}

fn adapt(rule: &GaussLegendre, f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: usize) -> f64 {
    let m = 0.5 * (a + b);
    let left = rule.integrate(f, a, m);
    let right = rule.integrate(f, m, b);
    let refined = left + right;
    if (refined - whole).abs() <= tol.max(4.0 * f64::EPSILON * refined.abs()) || depth >= 40 {
        return refined;
    }
    adapt(rule, f, a, m, left, 0.5 * tol, depth + 1) + adapt(rule, f, m, b, right, 0.5 * tol, depth + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(6);
        // Exact for degree ≤ 11.
        let v = rule.integrate(&|x: f64| x.powi(10) + 3.0 * x.powi(3), -1.0, 2.0);
        let exact = (2f64.powi(11) + 1.0) / 11.0 + 0.75 * (16.0 - 1.0);
        assert!((v - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn weights_sum_to_two() {
        for n in 1..30 {
            let rule = GaussLegendre::new(n);
            let s: f64 = rule.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        let v = integrate_adaptive(&|x: f64| (-(x * x) / 1e-4).exp(), -1.0, 1.0, 1e-14);
        assert!((v - (PI * 1e-4).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn composite_matches_single_panel_total() {
        let rule = GaussLegendre::new(6);
        let (xs, ws) = rule.composite(0.0, 3.0, 7);
        let s: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.sin()).sum();
        assert!((s - (1.0 - 3f64.cos())).abs() < 1e-12);
    }
}
