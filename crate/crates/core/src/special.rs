//! Gamma-family special functions, Lambert W branches and sphere areas.

use std::f64::consts::{E, PI};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecialError {
    #[error("gamma shape must be positive, got a = {0}")]
    NonPositiveShape(f64),

    #[error("incomplete gamma cut point must be non-negative, got x = {0}")]
    NegativeCut(f64),

    #[error("lambert W argument rho must lie in (0, 1/e], got {0}")]
    LambertDomain(f64),

    #[error("sphere dimension must be at least 1, got {0}")]
    SphereDimension(usize),

    #[error("{0} did not converge")]
    NoConvergence(&'static str),
}

type Result<T> = std::result::Result<T, SpecialError>;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;

fn check_shape(a: f64) -> Result<()> {
    if a > 0.0 && a.is_finite() {
        Ok(())
    } else {
        Err(SpecialError::NonPositiveShape(a))
    }
}

fn check_cut(x: f64) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(SpecialError::NegativeCut(x))
    }
}

/// ln Γ(a) for a > 0 (Lanczos, g = 7, with reflection below 1/2).
pub fn ln_gamma(a: f64) -> Result<f64> {
    check_shape(a)?;
    Ok(ln_gamma_unchecked(a))
}

fn ln_gamma_unchecked(a: f64) -> f64 {
    if a < 0.5 {
        // Γ(a)Γ(1−a) = π / sin(πa)
        return (PI / (PI * a).sin()).ln() - ln_gamma_unchecked(1.0 - a);
    }
    let z = a - 1.0;
    let mut s = LANCZOS[0];
    for (k, c) in LANCZOS.iter().enumerate().skip(1) {
        s += c / (z + k as f64);
    }
    let w = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * w.ln() - w + s.ln()
}

/// Γ(a) for a > 0. Small integer arguments are returned exactly.
pub fn gamma_complete(a: f64) -> Result<f64> {
    check_shape(a)?;
    if a == a.floor() && a <= 25.0 {
        let mut f = 1.0;
        let mut k = 2.0;
        while k < a {
            f *= k;
            k += 1.0;
        }
        return Ok(f);
    }
    if a == 0.5 {
        return Ok(PI.sqrt());
    }
    Ok(ln_gamma_unchecked(a).exp())
}

/// Series for the regularized lower gamma P(a, x); converges fast for x < a + 1.
fn p_series(a: f64, x: f64, lga: f64) -> Result<f64> {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            return Ok(sum * (-x + a * x.ln() - lga).exp());
        }
    }
    Err(SpecialError::NoConvergence("incomplete gamma series"))
}

/// Modified Lentz continued fraction for the regularized upper gamma Q(a, x).
fn q_fraction(a: f64, x: f64, lga: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok((-x + a * x.ln() - lga).exp() * h);
        }
    }
    Err(SpecialError::NoConvergence("incomplete gamma continued fraction"))
}

/// Regularized pair (P(a,x), Q(a,x)).
fn regularized(a: f64, x: f64) -> Result<(f64, f64)> {
    check_shape(a)?;
    check_cut(x)?;
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    if x.is_infinite() {
        return Ok((1.0, 0.0));
    }
    let lga = ln_gamma_unchecked(a);
    if x < a + 1.0 {
        let p = p_series(a, x, lga)?;
        Ok((p, 1.0 - p))
    } else {
        let q = q_fraction(a, x, lga)?;
        Ok((1.0 - q, q))
    }
}

/// Regularized lower incomplete gamma P(a, x) = γ(a, x) / Γ(a).
pub fn gamma_p(a: f64, x: f64) -> Result<f64> {
    regularized(a, x).map(|(p, _)| p)
}

/// Regularized upper incomplete gamma Q(a, x) = Γ(a, x) / Γ(a).
pub fn gamma_q(a: f64, x: f64) -> Result<f64> {
    regularized(a, x).map(|(_, q)| q)
}

/// Lower incomplete gamma γ(a, x) = ∫₀ˣ s^{a−1} e^{−s} ds.
pub fn gamma_lower(a: f64, x: f64) -> Result<f64> {
    let (p, _) = regularized(a, x)?;
    Ok(p * gamma_complete(a)?)
}

/// Upper incomplete gamma Γ(a, x) = ∫ₓ^∞ s^{a−1} e^{−s} ds.
pub fn gamma_upper(a: f64, x: f64) -> Result<f64> {
    let (_, q) = regularized(a, x)?;
    Ok(q * gamma_complete(a)?)
}

/// Surface area |S^{d−1}| = 2π^{d/2} / Γ(d/2) of the unit sphere in ℝ^d.
pub fn sphere_area(d: usize) -> Result<f64> {
    if d < 1 {
        return Err(SpecialError::SphereDimension(d));
    }
    let h = d as f64 / 2.0;
    Ok(2.0 * PI.powf(h) / gamma_complete(h)?)
}

#[derive(Clone, Copy)]
enum Branch {
    Principal,
    Lower,
}

fn check_rho(rho: f64) -> Result<()> {
    // Accept a few ulps above 1/e so that the literal 1/e is in-domain.
    if rho > 0.0 && rho <= 1.0 / E * (1.0 + 4.0 * f64::EPSILON) {
        Ok(())
    } else {
        Err(SpecialError::LambertDomain(rho))
    }
}

fn lambert(rho: f64, branch: Branch) -> Result<f64> {
    check_rho(rho)?;
    let z = -rho;
    // Distance from the branch point, p² = 2(1 + e z).
    let q = 2.0 * (1.0 + E * z);
    if q <= 1e-24 {
        return Ok(-1.0);
    }
    let p = q.sqrt();
    let mut w = match branch {
        Branch::Principal if rho < 0.25 => {
            // Taylor series around 0.
            z - z * z + 1.5 * z * z * z
        }
        Branch::Principal => -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p,
        Branch::Lower if rho > 0.05 => -1.0 - p - p * p / 3.0 - 11.0 / 72.0 * p * p * p,
        Branch::Lower => {
            let l1 = rho.ln();
            let l2 = (-l1).ln();
            l1 - l2 + l2 / l1
        }
    };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - z;
        if f.abs() <= 1e-14 * z.abs().max(f64::MIN_POSITIVE) {
            return Ok(w);
        }
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            return Ok(w);
        }
        // Halley step.
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        let next = w - step;
        let next = match branch {
            Branch::Principal => next.max(-1.0),
            Branch::Lower => next.min(-1.0),
        };
        if (next - w).abs() <= 1e-16 * w.abs() {
            return Ok(next);
        }
        w = next;
    }
    Err(SpecialError::NoConvergence("lambert W"))
}

/// Principal branch W₀(−ρ) for ρ ∈ (0, 1/e]; the value lies in [−1, 0).
pub fn lambert_w0(rho: f64) -> Result<f64> {
    lambert(rho, Branch::Principal)
}

/// Lower branch W₋₁(−ρ) for ρ ∈ (0, 1/e]; the value lies in (−∞, −1].
pub fn lambert_wm1(rho: f64) -> Result<f64> {
    lambert(rho, Branch::Lower)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_adaptive;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn gamma_trivial_values() {
        assert_eq!(gamma_complete(1.0).unwrap(), 1.0);
        assert_eq!(gamma_complete(6.0).unwrap(), 120.0);
        assert!(rel(gamma_complete(0.5).unwrap(), PI.sqrt()) < 1e-15);
        assert!(rel(gamma_complete(1.5).unwrap(), 0.5 * PI.sqrt()) < 1e-14);
    }

    #[test]
    fn gamma_recurrence_across_range() {
        let mut a = 0.5;
        while a < 30.0 {
            let lhs = gamma_complete(a + 1.0).unwrap();
            let rhs = a * gamma_complete(a).unwrap();
            assert!(rel(lhs, rhs) < 1e-12, "a = {a}");
            a += 0.37;
        }
    }

    #[test]
    fn gamma_rejects_non_positive() {
        assert!(gamma_complete(0.0).is_err());
        assert!(gamma_complete(-1.5).is_err());
        assert!(gamma_lower(-1.0, 1.0).is_err());
        assert!(gamma_upper(1.0, -0.1).is_err());
    }

    #[test]
    fn lower_gamma_trivial() {
        assert!(rel(gamma_lower(1.0, 2.0).unwrap(), 1.0 - (-2.0f64).exp()) < 1e-14);
        assert_eq!(gamma_lower(3.7, 0.0).unwrap(), 0.0);
        assert_eq!(gamma_upper(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(gamma_upper(3.0, 0.0).unwrap(), 2.0);
    }

    #[test]
    fn lower_gamma_matches_quadrature() {
        let (a, x) = (2.5, 3.1);
        let oracle = integrate_adaptive(&|s: f64| s.powf(a - 1.0) * (-s).exp(), 0.0, x, 1e-13);
        assert!(rel(gamma_lower(a, x).unwrap(), oracle) < 1e-10);
        // Substituting s = u² removes the endpoint singularity for a < 1.
        for &(a, x) in &[(0.5f64, 0.3f64), (0.5, 4.0), (4.5, 2.0), (7.0, 12.0), (1.5, 2.25)] {
            let g = |u: f64| 2.0 * u.powf(2.0 * a - 1.0) * (-u * u).exp();
            let lo = integrate_adaptive(&g, 0.0, x.sqrt(), 1e-14);
            let hi = integrate_adaptive(&g, x.sqrt(), (x + 80.0).sqrt(), 1e-14);
            assert!(rel(gamma_lower(a, x).unwrap(), lo) < 1e-9, "a={a} x={x}");
            assert!(rel(gamma_upper(a, x).unwrap(), hi) < 1e-9, "a={a} x={x}");
        }
    }

    #[test]
    fn upper_gamma_monotone() {
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let v = gamma_upper(1.5, i as f64 * 0.1).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn sphere_areas() {
        assert!(rel(sphere_area(1).unwrap(), 2.0) < 1e-15);
        assert!(rel(sphere_area(2).unwrap(), 2.0 * PI) < 1e-15);
        assert!(rel(sphere_area(3).unwrap(), 4.0 * PI) < 1e-15);
        assert!(sphere_area(0).is_err());
    }

    #[test]
    fn lambert_branch_point() {
        let rho = 1.0 / E;
        assert_eq!(lambert_w0(rho).unwrap(), -1.0);
        assert_eq!(lambert_wm1(rho).unwrap(), -1.0);
    }

    #[test]
    fn lambert_domain() {
        assert!(lambert_w0(0.0).is_err());
        assert!(lambert_w0(0.4).is_err());
        assert!(lambert_wm1(-0.1).is_err());
    }

    #[test]
    fn lambert_round_trip_dense() {
        for i in 1..=3600 {
            let rho = i as f64 * 1e-4;
            for w in [lambert_w0(rho).unwrap(), lambert_wm1(rho).unwrap()] {
                assert!((w * w.exp() + rho).abs() <= 1e-12, "rho={rho} w={w}");
            }
            assert!(-lambert_w0(rho).unwrap() <= 1.0);
            assert!(-lambert_wm1(rho).unwrap() >= 1.0);
        }
    }

    #[test]
    fn lambert_tiny_rho() {
        let w = lambert_wm1(1e-300).unwrap();
        assert!(rel(w * w.exp(), -1e-300) < 1e-12);
        let w = lambert_w0(1e-300).unwrap();
        assert!(rel(w, -1e-300) < 1e-12);
    }
}
