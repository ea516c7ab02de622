//! Closed-form predictions of L_t^i f(x) near singular points, each with a
//! bound envelope assembled from named terms.
//!
//! Conventions used throughout:
//! - the density p multiplies every signal constant (A ≤ pπ^{d/2});
//! - v_n = v·(x − x̂)/‖x − x̂‖, the unit normal pointing from the tangent
//!   plane towards x, so the signal is positive when v points away from Ωᵢ;
//! - the boundary offset k₀ = (x̂ − x̂_∂)·n_∂/√t is negative inside Ωᵢ.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::ProbeDirection;
use crate::manifold::ManifoldPiece;
use crate::quadrature::integrate_adaptive;
use crate::special::{gamma_complete, gamma_lower, sphere_area};
use crate::vecops::{dot, norm, sub};

/// Absolute widening applied to every envelope.
pub const ENVELOPE_SLACK: f64 = 1e-12;

/// Position of x relative to the tangent plane of piece `piece_index` at x₀.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalGeometry {
    pub x0: Vec<f64>,
    pub x: Vec<f64>,
    /// Orthogonal projection of x onto T_{Ωᵢ,x₀}.
    pub x_hat: Vec<f64>,
    pub piece_index: usize,
    /// ‖x − x₀‖/√t.
    pub r: f64,
    /// Angle between x − x₀ and the tangent plane, in [0, π/2].
    pub theta: f64,
    pub v_n_omega: f64,
    /// R/√t.
    pub r0: f64,
    pub d: usize,
}

impl LocalGeometry {
    /// Geometry of x with respect to the tangent plane of `piece` at x₀.
    pub fn new(
        piece: &ManifoldPiece,
        piece_index: usize,
        x0: &[f64],
        x: &[f64],
        v: &ProbeDirection,
        t: f64,
        r0: f64,
    ) -> Result<Self> {
        let n = piece.ambient_dim;
        if x0.len() != n || x.len() != n || v.v.len() != n {
            return Err(Error::ShapeMismatch {
                expected: n.to_string(),
                got: format!("x0: {}, x: {}, v: {}", x0.len(), x.len(), v.v.len()),
            });
        }
        if !(t > 0.0) || !(r0 > 0.0) {
            return Err(Error::domain("t and r0 must be positive"));
        }
        let basis = piece.tangent_basis(&piece.chart_coords(x0));
        let w = sub(x, x0);
        let mut x_hat = x0.to_vec();
        for b in &basis {
            let c = dot(&w, b);
            for (xi, bi) in x_hat.iter_mut().zip(b) {
                *xi += c * bi;
            }
        }
        let off = sub(x, &x_hat);
        let h = norm(&off);
        let dist = norm(&w);
        let theta = if dist == 0.0 { 0.0 } else { (h / dist).min(1.0).asin() };
        let v_n_omega = if h == 0.0 { 0.0 } else { dot(&v.v, &off) / h };
        Ok(LocalGeometry {
            x0: x0.to_vec(),
            x: x.to_vec(),
            x_hat,
            piece_index,
            r: dist / t.sqrt(),
            theta,
            v_n_omega,
            r0,
            d: piece.intrinsic_dim,
        })
    }

    /// Geometry given directly by its scalar coordinates (x, x₀, x̂ unset).
    pub fn from_coordinates(r: f64, theta: f64, v_n_omega: f64, r0: f64, d: usize) -> Result<Self> {
        if !(r >= 0.0) || !(0.0..=PI / 2.0 + 1e-15).contains(&theta) || v_n_omega.abs() > 1.0 + 1e-12 {
            return Err(Error::domain(format!(
                "need r >= 0, theta in [0, pi/2], |v_n| <= 1; got r = {r}, theta = {theta}, v_n = {v_n_omega}"
            )));
        }
        Ok(LocalGeometry {
            x0: Vec::new(),
            x: Vec::new(),
            x_hat: Vec::new(),
            piece_index: 0,
            r,
            theta,
            v_n_omega,
            r0,
            d,
        })
    }

    /// r sinθ = ‖x − x̂‖/√t.
    pub fn normal_offset(&self) -> f64 {
        self.r * self.theta.sin()
    }

    /// Signed angle and normal component relative to a fixed unit normal n:
    /// θ changes sign as x crosses the tangent plane, v_n = v·n stays put.
    /// The product v_n·sinθ equals that of the unsigned convention.
    pub fn signed_against(&self, n: &[f64], v: &ProbeDirection) -> (f64, f64) {
        let side = dot(&sub(&self.x, &self.x_hat), n);
        let theta = if side < 0.0 { -self.theta } else { self.theta };
        (theta, dot(&v.v, n))
    }
}

/// Boundary data of a flat piece whose boundary meets the kernel window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGeometry {
    /// (x̂ − x̂_∂)·n_∂/√t, negative when x̂ lies inside Ωᵢ.
    pub k0: f64,
    /// √(r₀² − r² sin²θ).
    pub delta0: f64,
    /// v·n_∂ with n_∂ the outward unit normal of ∂Ωᵢ.
    pub v_n_boundary: f64,
}

impl BoundaryGeometry {
    /// Boundary plane through `point` with outward normal `outward`.
    pub fn new(geom: &LocalGeometry, point: &[f64], outward: &[f64], v: &ProbeDirection, t: f64) -> Result<Self> {
        if geom.x_hat.len() != point.len() || outward.len() != point.len() {
            return Err(Error::ShapeMismatch {
                expected: geom.x_hat.len().to_string(),
                got: format!("point: {}, normal: {}", point.len(), outward.len()),
            });
        }
        let k0 = dot(&sub(&geom.x_hat, point), outward) / t.sqrt();
        Self::from_coordinates(geom, k0, dot(&v.v, outward))
    }

    pub fn from_coordinates(geom: &LocalGeometry, k0: f64, v_n_boundary: f64) -> Result<Self> {
        let delta0 = (geom.r0 * geom.r0 - geom.normal_offset().powi(2)).sqrt();
        if !(k0.abs() <= delta0) {
            return Err(Error::domain(format!(
                "boundary offset k0 = {k0} outside [-delta0, delta0] = ±{delta0}; the boundary misses the kernel window"
            )));
        }
        Ok(BoundaryGeometry { k0, delta0, v_n_boundary })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeTerm {
    pub name: String,
    pub central: f64,
    pub lower: f64,
    pub upper: f64,
}

impl EnvelopeTerm {
    fn exact(name: &str, value: f64) -> Self {
        EnvelopeTerm { name: name.into(), central: value, lower: value, upper: value }
    }

    fn symmetric(name: &str, half_width: f64) -> Self {
        EnvelopeTerm { name: name.into(), central: 0.0, lower: -half_width, upper: half_width }
    }

    /// coefficient × shape with the coefficient in [lo, hi].
    fn scaled(name: &str, central: f64, lo: f64, hi: f64, shape: f64) -> Self {
        let (a, b) = (lo * shape, hi * shape);
        EnvelopeTerm { name: name.into(), central: central * shape, lower: a.min(b), upper: a.max(b) }
    }
}

/// Predicted value with a guaranteed band [lower, upper].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEnvelope {
    pub central: f64,
    pub lower: f64,
    pub upper: f64,
    pub terms: Vec<EnvelopeTerm>,
}

impl PredictionEnvelope {
    fn from_terms(terms: Vec<EnvelopeTerm>) -> Self {
        let central = terms.iter().map(|t| t.central).sum();
        let lower = terms.iter().map(|t| t.lower).sum::<f64>() - ENVELOPE_SLACK;
        let upper = terms.iter().map(|t| t.upper).sum::<f64>() + ENVELOPE_SLACK;
        PredictionEnvelope { central, lower, upper, terms }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn term(&self, name: &str) -> Option<&EnvelopeTerm> {
        self.terms.iter().find(|t| t.name == name)
    }
}

/// Central value of the signal constant A.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ACentral {
    /// pπ^{d/2}, the full-plane Gaussian mass and the upper bound on A.
    #[default]
    PiHalfD,
    /// 2pπ^{d/2}, the large-r₀ approximation used for the estimators.
    TwoPiHalfD,
}

/// Which lower bound on A is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ALowerBound {
    /// ½p·max(π^{d/2}, 2π^{d/2} − |S^{d−1}|2^{d/2}r₀^{d−1}e^{1−r₀²}).
    #[default]
    TheoremStatement,
    /// ½p·max(π^{d/2}, 2π^{d/2} − |S^{d−1}|r₀^{d−2}e^{−r₀²}).
    ProofDisplay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AConvention {
    pub central: ACentral,
    pub lower: ALowerBound,
}

impl AConvention {
    /// (lower, central, upper) for the constant A at density p.
    pub fn bounds(&self, d: usize, r0: f64, p: f64) -> Result<(f64, f64, f64)> {
        let di = d as i32;
        let pi_d = PI.powf(d as f64 / 2.0);
        let s = sphere_area(d)?;
        let reduced = match self.lower {
            ALowerBound::TheoremStatement => {
                2.0 * pi_d - s * 2f64.powf(d as f64 / 2.0) * r0.powi(di - 1) * (1.0 - r0 * r0).exp()
            }
            ALowerBound::ProofDisplay => 2.0 * pi_d - s * r0.powi(di - 2) * (-r0 * r0).exp(),
        };
        let lo = 0.5 * p * pi_d.max(reduced);
        let (central, hi) = match self.central {
            ACentral::PiHalfD => (p * pi_d, p * pi_d),
            ACentral::TwoPiHalfD => (2.0 * p * pi_d, 2.0 * p * pi_d),
        };
        Ok((lo, central, hi))
    }
}

/// Which form of the explicit boundary term is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BoundaryForm {
    /// Direct evaluation of the cap integral: scale t^{(d+1)/2}, density p,
    /// remainder subtracted.
    #[default]
    Derived,
    /// The Remark's display taken verbatim: scale t^{d/2}, no density,
    /// remainder added.
    Literal,
}

/// Which lower bound on the truncated-ball mass J is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum JLowerBound {
    /// (1/(2δ₀))(e^{−k₀²}γ(a, δ₀²−k₀²) − 2e^{−δ₀²}(δ₀²−k₀²)^a/(d−1)).
    #[default]
    Proof,
    /// Same without the e^{−δ₀²} factor (looser).
    Remark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BoundaryConvention {
    pub form: BoundaryForm,
    pub j_lower: JLowerBound,
}

/// Signal profile r sinθ e^{−r² sin²θ}.
pub fn signal_shape(r: f64, theta: f64) -> f64 {
    let z = r * theta.sin();
    z * (-z * z).exp()
}

/// Radius maximizing [`signal_shape`] for fixed θ ∈ (0, π/2].
pub fn signal_argmax_r(theta: f64) -> f64 {
    1.0 / (std::f64::consts::SQRT_2 * theta.sin())
}

fn check_flat_hypotheses(geom: &LocalGeometry, t: f64) -> Result<()> {
    if !(t > 0.0) {
        return Err(Error::precondition("t > 0"));
    }
    if geom.d < 1 {
        return Err(Error::precondition("d >= 1"));
    }
    if !(geom.r0 > 2.0) {
        return Err(Error::precondition(format!("r0 > 2 (r0 = {})", geom.r0)));
    }
    let big_r2 = geom.r0 * geom.r0 * t;
    if !(t <= big_r2 / (geom.d as f64 / 2.0 + 1.0)) {
        return Err(Error::precondition(format!("t <= R^2/(d/2+1) (t = {t}, R^2 = {big_r2})")));
    }
    if !(geom.r < geom.r0 / 2.0) {
        return Err(Error::precondition(format!("r < r0/2 (r = {}, r0 = {})", geom.r, geom.r0)));
    }
    Ok(())
}

/// Bound ((d+1)/4) r₀^d |S^{d−1}| p on the tail coefficient B.
pub fn tail_coefficient_bound(d: usize, r0: f64, p: f64) -> Result<f64> {
    Ok((d as f64 + 1.0) / 4.0 * r0.powi(d as i32) * sphere_area(d)? * p)
}

/// Flat piece with no boundary within 2R of x₀, density `p`:
/// L_t^i f(x) = t^{(d+1)/2}(A v_n r sinθ e^{−r² sin²θ} + B e^{−r₀²}).
pub fn predict_flat_interior(geom: &LocalGeometry, t: f64, p: f64, conv: AConvention) -> Result<PredictionEnvelope> {
    check_flat_hypotheses(geom, t)?;
    let d = geom.d;
    let scale = t.powf((d as f64 + 1.0) / 2.0);
    let (lo, central, hi) = conv.bounds(d, geom.r0, p)?;
    let shape = scale * geom.v_n_omega * signal_shape(geom.r, geom.theta);
    let tail = scale * tail_coefficient_bound(d, geom.r0, p)? * (-geom.r0 * geom.r0).exp();
    Ok(PredictionEnvelope::from_terms(vec![
        EnvelopeTerm::scaled("signal", central, lo, hi, shape),
        EnvelopeTerm::symmetric("tail", tail),
    ]))
}

/// J = ∫_{k₀}^{δ₀} e^{−h²} γ((d−1)/2, δ₀² − h²) dh, the Gaussian mass of the
/// δ₀-ball around x̂ cut by the boundary, in units where the (d−1)-sphere
/// factor |S^{d−2}|/2 is removed.
pub fn truncated_mass(d: usize, k0: f64, delta0: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::domain("boundary formulas need d >= 2"));
    }
    let a = (d as f64 - 1.0) / 2.0;
    // h = δ₀ cos φ removes the (δ₀² − h²)^a endpoint singularity.
    let phi_max = (k0 / delta0).clamp(-1.0, 1.0).acos();
    let f = |phi: f64| {
        let (s, c) = phi.sin_cos();
        let h = delta0 * c;
        let g = gamma_lower(a, (delta0 * s).powi(2)).unwrap_or(0.0);
        (-h * h).exp() * g * delta0 * s
    };
    Ok(integrate_adaptive(&f, 0.0, phi_max, 1e-15))
}

/// Bounds (lower, upper) on [`truncated_mass`].
pub fn truncated_mass_bounds(d: usize, k0: f64, delta0: f64, which: JLowerBound) -> Result<(f64, f64)> {
    if d < 2 {
        return Err(Error::domain("boundary formulas need d >= 2"));
    }
    let a = (d as f64 - 1.0) / 2.0;
    let m = (delta0 * delta0 - k0 * k0).max(0.0);
    let rem = 2.0 * m.powf(a) / (d as f64 - 1.0);
    let rem = match which {
        JLowerBound::Proof => (-delta0 * delta0).exp() * rem,
        JLowerBound::Remark => rem,
    };
    let lo = ((-k0 * k0).exp() * gamma_lower(a, m)? - rem) / (2.0 * delta0);
    let hi = gamma_complete(a)? * PI.sqrt();
    Ok((lo, hi))
}

/// Coefficient of v_{n,∂} e^{−r² sin²θ} in the boundary term.
pub fn boundary_coefficient(d: usize, b: &BoundaryGeometry, t: f64, p: f64, form: BoundaryForm) -> Result<f64> {
    if d < 2 {
        return Err(Error::domain("boundary formulas need d >= 2"));
    }
    let a = (d as f64 - 1.0) / 2.0;
    let m = (b.delta0 * b.delta0 - b.k0 * b.k0).max(0.0);
    let s = sphere_area(d - 1)?;
    let gam = 0.5 * (-b.k0 * b.k0).exp() * gamma_lower(a, m)?;
    let rem = (-b.delta0 * b.delta0).exp() * m.powf(a) / (d as f64 - 1.0);
    Ok(match form {
        BoundaryForm::Derived => t.powf((d as f64 + 1.0) / 2.0) * p * 0.5 * s * (gam - rem),
        BoundaryForm::Literal => t.powf(d as f64 / 2.0) * 0.5 * s * (gam + rem),
    })
}

/// Flat piece whose boundary is a (d−1)-plane meeting the kernel window.
pub fn predict_flat_boundary(
    geom: &LocalGeometry,
    bgeom: &BoundaryGeometry,
    t: f64,
    p: f64,
    conv: BoundaryConvention,
) -> Result<PredictionEnvelope> {
    let d = geom.d;
    if d < 2 {
        return Err(Error::domain("boundary theorem unsupported for d = 1: the (d-1)/2 gamma shape vanishes"));
    }
    check_flat_hypotheses(geom, t)?;
    let expected = (geom.r0 * geom.r0 - geom.normal_offset().powi(2)).sqrt();
    if (expected - bgeom.delta0).abs() > 1e-12 * expected.max(1.0) {
        return Err(Error::domain("delta0 inconsistent with r0, r and theta"));
    }
    let scale = t.powf((d as f64 + 1.0) / 2.0);
    let half_s = 0.5 * sphere_area(d - 1)?;
    let j = truncated_mass(d, bgeom.k0, bgeom.delta0)?;
    let (j_lo, j_hi) = truncated_mass_bounds(d, bgeom.k0, bgeom.delta0, conv.j_lower)?;
    let shape = scale * geom.v_n_omega * signal_shape(geom.r, geom.theta);
    let damp = (-geom.normal_offset().powi(2)).exp();
    let boundary = boundary_coefficient(d, bgeom, t, p, conv.form)? * bgeom.v_n_boundary * damp;
    let tail = scale * tail_coefficient_bound(d, geom.r0, p)? * (-geom.r0 * geom.r0).exp();
    Ok(PredictionEnvelope::from_terms(vec![
        EnvelopeTerm::scaled("signal", p * half_s * j, p * half_s * j_lo, p * half_s * j_hi, shape),
        EnvelopeTerm::exact("boundary", boundary),
        EnvelopeTerm::symmetric("tail", tail),
    ]))
}

/// Parameters of the general (curved) theorem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvedParams {
    /// Regularity constant L of the (L, 2R)-regular pieces.
    pub l: f64,
    /// Diameter of Ω, bounding the tail coefficient D.
    pub diam: f64,
    /// Uniform density p.
    pub p: f64,
}

/// Bound 4(L·4R²)²R/t + LR²(1 + 4LR²) on the curvature coefficient C_{L,R}.
pub fn curvature_constant(l: f64, big_r: f64, t: f64) -> f64 {
    let r2 = big_r * big_r;
    4.0 * (l * 4.0 * r2).powi(2) * big_r / t + l * r2 * (1.0 + 4.0 * l * r2)
}

fn check_general_hypotheses(geom: &LocalGeometry, t: f64, cp: &CurvedParams) -> Result<f64> {
    check_flat_hypotheses(geom, t)?;
    if !(cp.l >= 0.0) || !(cp.diam > 0.0) || !(cp.p > 0.0) {
        return Err(Error::domain("need L >= 0, diam > 0 and p > 0"));
    }
    let big_r = geom.r0 * t.sqrt();
    let lhs = cp.l * 4.0 * big_r * big_r / t.sqrt();
    if !(lhs <= 0.5) {
        return Err(Error::precondition(format!("L*4R^2/sqrt(t) <= 1/2 (got {lhs})")));
    }
    Ok(big_r)
}

/// (L, 2R)-regular piece, x off the piece:
/// t^{(d+1)/2} Â v_n r sinθ e^{−r² sin²θ} + t^{d/2} C 4pπ^{d/2} + D e^{−r₀²},
/// with Â ∈ (0, (2+3C)A], |C| ≤ [`curvature_constant`], |D| ≤ diam.
pub fn predict_general(geom: &LocalGeometry, t: f64, cp: &CurvedParams) -> Result<PredictionEnvelope> {
    let big_r = check_general_hypotheses(geom, t, cp)?;
    let d = geom.d;
    let c = curvature_constant(cp.l, big_r, t);
    let a = cp.p * PI.powf(d as f64 / 2.0);
    let shape = t.powf((d as f64 + 1.0) / 2.0) * geom.v_n_omega * signal_shape(geom.r, geom.theta);
    let td = t.powf(d as f64 / 2.0);
    Ok(PredictionEnvelope::from_terms(vec![
        EnvelopeTerm::scaled("signal", a, 0.0, (2.0 + 3.0 * c) * a, shape),
        EnvelopeTerm::symmetric("curvature", td * c * 4.0 * a),
        EnvelopeTerm::symmetric("tail", cp.diam * (-geom.r0 * geom.r0).exp()),
    ]))
}

/// x on the piece itself: |L_t^i f(x)| ≤ t^{d/2}(Â_max L R² + C·4pπ^{d/2}) + diam·e^{−r₀²}.
pub fn predict_lemma_error(geom: &LocalGeometry, t: f64, cp: &CurvedParams) -> Result<PredictionEnvelope> {
    let big_r = check_general_hypotheses(geom, t, cp)?;
    let d = geom.d;
    let c = curvature_constant(cp.l, big_r, t);
    let a = cp.p * PI.powf(d as f64 / 2.0);
    let td = t.powf(d as f64 / 2.0);
    Ok(PredictionEnvelope::from_terms(vec![
        EnvelopeTerm::symmetric("bending", td * (2.0 + 3.0 * c) * a * cp.l * big_r * big_r),
        EnvelopeTerm::symmetric("curvature", td * c * 4.0 * a),
        EnvelopeTerm::symmetric("tail", cp.diam * (-geom.r0 * geom.r0).exp()),
    ]))
}

/// Full L_t f(x) for x ∈ Ω₂ near the intersection x₀ ∈ Ω₁ ∩ Ω₂, where
/// `geom1` describes x relative to T_{Ω₁,x₀}: the signal of Ω₁ plus the
/// on-manifold error of Ω₂, with doubled curvature and tail constants.
pub fn predict_intersection_sum(geom1: &LocalGeometry, t: f64, cp: &CurvedParams) -> Result<PredictionEnvelope> {
    let big_r = check_general_hypotheses(geom1, t, cp)?;
    let d = geom1.d;
    let c = curvature_constant(cp.l, big_r, t);
    let a = cp.p * PI.powf(d as f64 / 2.0);
    let shape = t.powf((d as f64 + 1.0) / 2.0) * geom1.v_n_omega * signal_shape(geom1.r, geom1.theta);
    let td = t.powf(d as f64 / 2.0);
    Ok(PredictionEnvelope::from_terms(vec![
        EnvelopeTerm::scaled("signal", a, 0.0, (2.0 + 3.0 * c) * a, shape),
        EnvelopeTerm::symmetric("bending", td * (2.0 + 3.0 * c) * a * cp.l * big_r * big_r),
        EnvelopeTerm::symmetric("curvature", td * c * 8.0 * a),
        EnvelopeTerm::symmetric("tail", 2.0 * cp.diam * (-geom1.r0 * geom1.r0).exp()),
    ]))
}

/// Leading constant of the noisy-sample identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NoisyConstant {
    /// (t/(2σ²+t))^{N/2+1}. Selected by the Monte-Carlo check; the doubled
    /// form is rejected there at well over five standard errors.
    #[default]
    Single,
    /// 2(t/(2σ²+t))^{N/2+1}.
    Doubled,
}

pub fn noisy_factor(ambient_dim: usize, sigma: f64, t: f64, c: NoisyConstant) -> Result<f64> {
    if !(t > 0.0) || !(sigma >= 0.0) || ambient_dim == 0 {
        return Err(Error::domain("noisy factor needs t > 0, sigma >= 0 and N >= 1"));
    }
    let base = (t / (2.0 * sigma * sigma + t)).powf(ambient_dim as f64 / 2.0 + 1.0);
    Ok(match c {
        NoisyConstant::Single => base,
        NoisyConstant::Doubled => 2.0 * base,
    })
}

/// E_ε[L_{n,t,ε}f(x)] predicted as factor · L_{n,2σ²+t}f(x).
pub fn predict_noisy(
    cloud: &crate::manifold::PointCloud,
    x: &[f64],
    v: &ProbeDirection,
    t: f64,
    sigma: f64,
    c: NoisyConstant,
) -> Result<f64> {
    let wide = crate::laplacian::graph_laplacian_apply(cloud, x, v, 2.0 * sigma * sigma + t)?;
    Ok(noisy_factor(cloud.dim, sigma, t, c)? * wide)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePoint {
    pub x: Vec<f64>,
    pub mc: crate::laplacian::MeanEstimate,
    pub single: f64,
    pub doubled: f64,
    /// (mean − prediction)/stderr for each constant.
    pub z_single: f64,
    pub z_doubled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCheckReport {
    pub sigma: f64,
    pub t: f64,
    pub points: Vec<NoisePoint>,
    pub max_abs_z_single: f64,
    pub max_abs_z_doubled: f64,
    /// The constant whose |z| stays within 3 everywhere while the other's
    /// exceeds 5 somewhere; `None` if the data do not decide.
    pub selected: Option<NoisyConstant>,
}

/// Compare the Monte-Carlo mean of the noisy operator with both candidate
/// constants at every evaluation point.
pub fn noise_identity_check(
    cloud: &crate::manifold::PointCloud,
    xs: &crate::manifold::PointCloud,
    v: &ProbeDirection,
    t: f64,
    sigma: f64,
    draws: usize,
    seed: u64,
) -> Result<NoiseCheckReport> {
    let mc = crate::laplacian::noisy_monte_carlo(cloud, xs, v, t, sigma, draws, seed)?;
    let mut points = Vec::with_capacity(xs.len());
    for (x, est) in xs.rows().zip(mc) {
        let single = predict_noisy(cloud, x, v, t, sigma, NoisyConstant::Single)?;
        let doubled = predict_noisy(cloud, x, v, t, sigma, NoisyConstant::Doubled)?;
        points.push(NoisePoint {
            x: x.to_vec(),
            mc: est,
            single,
            doubled,
            z_single: (est.mean - single) / est.stderr,
            z_doubled: (est.mean - doubled) / est.stderr,
        });
    }
    let max_abs = |f: fn(&NoisePoint) -> f64| points.iter().map(|p| f(p).abs()).fold(0.0, f64::max);
    let zs = max_abs(|p| p.z_single);
    let zd = max_abs(|p| p.z_doubled);
    let selected = if zs <= 3.0 && zd > 5.0 {
        Some(NoisyConstant::Single)
    } else if zd <= 3.0 && zs > 5.0 {
        Some(NoisyConstant::Doubled)
    } else {
        None
    };
    Ok(NoiseCheckReport { sigma, t, points, max_abs_z_single: zs, max_abs_z_doubled: zd, selected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{make_intersection_scene, ExtentSpec, PieceShape, Scene};
    use crate::oracle::{expected_laplacian_full, expected_laplacian_oracle};
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

    fn point_at(r: f64, theta: f64, t: f64, along: usize, up: usize, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        x[along] = r * t.sqrt() * theta.cos();
        x[up] = r * t.sqrt() * theta.sin();
        x
    }

    #[test]
    fn geometry_invariants() {
        let s = Scene::flat_plane(3, 2, 1.0).unwrap();
        let t = 1e-3;
        let v = ProbeDirection::new(vec![0.2, -0.3, 0.9]).unwrap();
        let x = point_at(1.3, 0.7, t, 0, 2, 3);
        let g = LocalGeometry::new(&s.pieces[0], 0, &[0.0; 3], &x, &v, t, 6.0).unwrap();
        assert!((g.r - 1.3).abs() < 1e-12);
        assert!((g.theta - 0.7).abs() < 1e-12);
        assert!((norm(&sub(&g.x_hat, &x)) - g.r * t.sqrt() * g.theta.sin()).abs() < 1e-12);
        assert!((g.v_n_omega - v.v[2]).abs() < 1e-15);
    }

    #[test]
    fn worked_interior_value_matches_oracle() {
        let s = Scene::flat_plane(3, 2, 1.0).unwrap();
        let t = 1e-3;
        let p = s.density(0);
        let v = ProbeDirection::axis(3, 2);
        let x = point_at(FRAC_1_SQRT_2, FRAC_PI_2, t, 0, 2, 3);
        let g = LocalGeometry::new(&s.pieces[0], 0, &[0.0; 3], &x, &v, t, 6.0).unwrap();
        let env = predict_flat_interior(&g, t, p, AConvention::default()).unwrap();
        let expected = p * t.powf(1.5) * PI * FRAC_1_SQRT_2 * (-0.5f64).exp();
        assert!((env.central - expected).abs() < 1e-16);
        let o = expected_laplacian_oracle(&s, 0, &x, &v, t, 64, 1e-16).unwrap();
        assert!(env.contains(o.value), "{o:?} not in {env:?}");
        assert!((o.value - env.central).abs() < 1e-15);
    }

    #[test]
    fn theta_zero_leaves_tail_band_only() {
        let g = LocalGeometry::from_coordinates(1.0, 0.0, 1.0, 6.0, 2).unwrap();
        let env = predict_flat_interior(&g, 1e-3, 0.25, AConvention::default()).unwrap();
        assert_eq!(env.central, 0.0);
        assert!(env.width() < 1e-11);
    }

    #[test]
    fn hypothesis_violations_are_named() {
        let g = LocalGeometry::from_coordinates(3.5, 1.0, 1.0, 6.0, 2).unwrap();
        let e = predict_flat_interior(&g, 1e-3, 1.0, AConvention::default()).unwrap_err();
        assert!(e.to_string().contains("r < r0/2"), "{e}");
        let g = LocalGeometry::from_coordinates(0.5, 1.0, 1.0, 1.9, 2).unwrap();
        let e = predict_flat_interior(&g, 1e-3, 1.0, AConvention::default()).unwrap_err();
        assert!(e.to_string().contains("r0 > 2"), "{e}");
        let g = LocalGeometry::from_coordinates(0.5, 1.0, 1.0, 2.5, 2).unwrap();
        let cp = CurvedParams { l: 0.5, diam: 2.0, p: 1.0 };
        let e = predict_general(&g, 0.04, &cp).unwrap_err();
        assert!(e.to_string().contains("L*4R^2"), "{e}");
    }

    #[test]
    fn both_lower_bounds_sit_below_central() {
        for d in 1..=4 {
            for r0 in [2.05, 3.0, 6.0] {
                for lower in [ALowerBound::TheoremStatement, ALowerBound::ProofDisplay] {
                    let (lo, c, hi) = AConvention { central: ACentral::PiHalfD, lower }.bounds(d, r0, 0.3).unwrap();
                    assert!(lo <= c && c <= hi && lo >= 0.5 * c - 1e-15);
                }
            }
        }
    }

    #[test]
    fn signal_argmax_by_golden_section() {
        for theta in [0.2, FRAC_PI_4, 1.3, FRAC_PI_2] {
            let (mut a, mut b) = (0.0, 20.0);
            let g = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..200 {
                let c = b - g * (b - a);
                let d = a + g * (b - a);
                if signal_shape(c, theta) > signal_shape(d, theta) {
                    b = d;
                } else {
                    a = c;
                }
            }
            assert!((0.5 * (a + b) - signal_argmax_r(theta)).abs() < 1e-7);
        }
    }

    #[test]
    fn truncated_mass_limits_and_bounds() {
        for d in 2..=4 {
            let a = (d as f64 - 1.0) / 2.0;
            let full = truncated_mass(d, -6.0, 6.0).unwrap();
            let gauss = gamma_complete(a).unwrap() * PI.sqrt();
            assert!((full - gauss).abs() < 1e-12, "d={d}: {full} vs {gauss}");
            assert!(truncated_mass(d, 6.0, 6.0).unwrap().abs() < 1e-15);
            for k in [-5.9, -2.0, -0.3, 0.0, 0.7, 3.0, 5.5] {
                let j = truncated_mass(d, k, 6.0).unwrap();
                for which in [JLowerBound::Proof, JLowerBound::Remark] {
                    let (lo, hi) = truncated_mass_bounds(d, k, 6.0, which).unwrap();
                    assert!(lo <= j + 1e-15 && j <= hi * (1.0 + 1e-14), "d={d} k={k}: {lo} {j} {hi}");
                }
            }
        }
    }

    #[test]
    fn truncated_mass_matches_direct_quadrature() {
        let (d, k0, delta0) = (3usize, -0.4, 5.0);
        let a = (d as f64 - 1.0) / 2.0;
        let f = |h: f64| (-h * h).exp() * gamma_lower(a, (delta0 * delta0 - h * h).max(0.0)).unwrap();
        let direct = integrate_adaptive(&f, k0, delta0, 1e-15);
        assert!((direct - truncated_mass(d, k0, delta0).unwrap()).abs() < 1e-12);
    }

    fn half_plane_case(k0: f64, theta: f64, r: f64, v: Vec<f64>) -> (PredictionEnvelope, f64, PredictionEnvelope) {
        let s = Scene::half_plane(3, 2, 1.0).unwrap();
        let t: f64 = 1e-3;
        let st = t.sqrt();
        let v = ProbeDirection::new(v).unwrap();
        // x₀ sits inside so that x̂ lands at normal offset k₀√t from ∂Ω.
        let mut x = vec![k0 * st - r * st * theta.cos(), 0.0, 0.0];
        let x0 = x.clone();
        x[0] += r * st * theta.cos();
        x[2] = r * st * theta.sin();
        let g = LocalGeometry::new(&s.pieces[0], 0, &x0, &x, &v, t, 6.0).unwrap();
        let meta = s.boundary.clone().unwrap();
        let b = BoundaryGeometry::new(&g, &meta.point, &meta.outward_normal, &v, t).unwrap();
        assert!((b.k0 - k0).abs() < 1e-12);
        let env = predict_flat_boundary(&g, &b, t, s.density(0), BoundaryConvention::default()).unwrap();
        let lit = predict_flat_boundary(
            &g,
            &b,
            t,
            s.density(0),
            BoundaryConvention { form: BoundaryForm::Literal, ..Default::default() },
        )
        .unwrap();
        let o = expected_laplacian_oracle(&s, 0, &x, &v, t, 64, 1e-16).unwrap();
        (env, o.value, lit)
    }

    #[test]
    fn boundary_on_edge_matches_oracle() {
        let (env, o, lit) = half_plane_case(0.0, 0.0, 0.0, vec![1.0, 0.0, 0.0]);
        assert!(env.contains(o), "{o} not in {env:?}");
        assert!((o - env.central).abs() < 1e-14 * o.abs().max(1e-6));
        assert!(!lit.contains(o));
    }

    #[test]
    fn boundary_oracle_inside_envelope_across_offsets() {
        for k0 in [-5.5, -1.5, -0.4, 0.0, 0.6, 2.0, 5.0] {
            for theta in [0.0, 0.6, FRAC_PI_2] {
                let (env, o, _) = half_plane_case(k0, theta, 1.1, vec![0.6, 0.3, 0.74]);
                assert!(env.contains(o), "k0={k0} theta={theta}: {o} not in {env:?}");
            }
        }
    }

    #[test]
    fn tangential_probe_gives_zero_boundary_term() {
        let (env, o, _) = half_plane_case(0.3, 0.0, 1.0, vec![0.0, 1.0, 0.0]);
        assert_eq!(env.central, 0.0);
        assert!(env.contains(o));
    }

    #[test]
    fn flat_limit_of_general_has_no_curvature_band() {
        let g = LocalGeometry::from_coordinates(1.0, 1.0, 1.0, 3.0, 2).unwrap();
        let env = predict_general(&g, 1e-3, &CurvedParams { l: 0.0, diam: 2.0, p: 0.25 }).unwrap();
        assert_eq!(env.term("curvature").unwrap().upper, 0.0);
        let flat = predict_flat_interior(&g, 1e-3, 0.25, AConvention::default()).unwrap();
        assert_eq!(env.central, flat.central);
    }

    #[test]
    fn curved_off_and_on_manifold_within_envelopes() {
        let t = 1e-3;
        let r0 = 2.5;
        let s = make_intersection_scene(
            3,
            2,
            FRAC_PI_4,
            PieceShape::Curved { l: 0.5 },
            &ExtentSpec::ChartBox { half_width: 0.5 },
        )
        .unwrap();
        let cp = CurvedParams { l: 0.5, diam: 3.0, p: s.density(0) };
        let v = ProbeDirection::new(vec![0.1, -0.5, 0.86]).unwrap();
        for (k, u) in [[0.012, 0.018], [-0.024, 0.006], [0.0, -0.03]].iter().enumerate() {
            let x = s.pieces[1].embed(u);
            let g1 = LocalGeometry::new(&s.pieces[0], 0, &[0.0; 3], &x, &v, t, r0).unwrap();
            let o1 = expected_laplacian_oracle(&s, 0, &x, &v, t, 64, 1e-15).unwrap();
            let env = predict_general(&g1, t, &cp).unwrap();
            assert!(env.contains(o1.value), "case {k}: {} not in {env:?}", o1.value);
            let g2 = LocalGeometry::new(&s.pieces[1], 1, &[0.0; 3], &x, &v, t, r0).unwrap();
            let o2 = expected_laplacian_oracle(&s, 1, &x, &v, t, 64, 1e-15).unwrap();
            let lemma = predict_lemma_error(&g2, t, &cp).unwrap();
            assert!(lemma.contains(o2.value));
            let full = expected_laplacian_full(&s, &x, &v, t, 64, 1e-15).unwrap();
            let cor = predict_intersection_sum(&g1, t, &cp).unwrap();
            assert!(cor.contains(full.value));
        }
    }

    #[test]
    fn signed_convention_keeps_signal_product() {
        let s = Scene::flat_plane(3, 2, 1.0).unwrap();
        let v = ProbeDirection::new(vec![0.0, 0.6, 0.8]).unwrap();
        let t = 1e-3;
        for up in [1.0, -1.0] {
            let x = vec![0.01, 0.0, up * 0.02];
            let g = LocalGeometry::new(&s.pieces[0], 0, &[0.0; 3], &x, &v, t, 6.0).unwrap();
            let (th, vn) = g.signed_against(&[0.0, 0.0, 1.0], &v);
            assert!((vn * th.sin() - g.v_n_omega * g.theta.sin()).abs() < 1e-15);
        }
    }
}
