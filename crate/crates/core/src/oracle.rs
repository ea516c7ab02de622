//! Expected operator L_t f(x) = ∫ K_t(x,y)(f(x) − f(y)) p(y) dy by quadrature
//! over piece charts, plus an erf closed form for flat box pieces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::{Neumaier, ProbeDirection};
use crate::manifold::{tensor_visit, ManifoldPiece, PieceKind, Scene};
use crate::quadrature::GaussLegendre;
use crate::vecops::{dist2, dot, sub};

/// Chart-distance cut-off in units of √t; the kernel is below e^{−144} outside.
pub const TRUNCATION: f64 = 12.0;
/// Coarsest admissible panel count per axis.
pub const MIN_RESOLUTION: usize = 64;
const MAX_RESOLUTION: usize = 1024;
const RULE_ORDER: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    /// |I(2R) − I(R)| at the final resolution pair.
    pub error_estimate: f64,
    /// Bound on the part of the integral dropped by the truncation window.
    pub tail_bound: f64,
    pub resolution: usize,
    pub converged: bool,
}

/// Restricted operator L_t^i f(x) over piece `piece_index` with density
/// p = wᵢ/|Ωᵢ|, by tensor Gauss–Legendre quadrature in chart coordinates.
///
/// The resolution (panels per axis over the truncation window) starts at
/// `quad_resolution` and doubles until two successive values agree to `tol`.
pub fn expected_laplacian_oracle(
    scene: &Scene,
    piece_index: usize,
    x: &[f64],
    v: &ProbeDirection,
    t: f64,
    quad_resolution: usize,
    tol: f64,
) -> Result<OracleValue> {
    let piece = scene
        .pieces
        .get(piece_index)
        .ok_or_else(|| Error::domain(format!("piece index {piece_index} out of range")))?;
    if quad_resolution < MIN_RESOLUTION {
        return Err(Error::domain(format!("quadrature resolution must be at least {MIN_RESOLUTION}")));
    }
    if !(t > 0.0) {
        return Err(Error::domain("bandwidth t must be positive"));
    }
    if x.len() != piece.ambient_dim || v.v.len() != piece.ambient_dim {
        return Err(Error::ShapeMismatch {
            expected: piece.ambient_dim.to_string(),
            got: format!("x: {}, v: {}", x.len(), v.v.len()),
        });
    }
    let p = scene.density(piece_index);
    piece_oracle(piece, p, x, v, t, quad_resolution, tol)
}

/// Same as [`expected_laplacian_oracle`] for a standalone piece and density.
pub fn piece_oracle(
    piece: &ManifoldPiece,
    p: f64,
    x: &[f64],
    v: &ProbeDirection,
    t: f64,
    quad_resolution: usize,
    tol: f64,
) -> Result<OracleValue> {
    let d = piece.intrinsic_dim;
    let ux = piece.chart_coords(x);
    let reach = TRUNCATION * t.sqrt();
    let mut window = Vec::with_capacity(d);
    for k in 0..d {
        let lo = piece.extent.lo[k].max(ux[k] - reach);
        let hi = piece.extent.hi[k].min(ux[k] + reach);
        if hi <= lo {
            return Ok(OracleValue {
                value: 0.0,
                error_estimate: 0.0,
                tail_bound: tail_bound(piece, p, x),
                resolution: quad_resolution,
                converged: true,
            });
        }
        window.push((lo, hi));
    }
    let vx = dot(&v.v, x);
    let rule = GaussLegendre::new(RULE_ORDER);
    let integrate = |panels: usize| -> f64 {
        let axes: Vec<(Vec<f64>, Vec<f64>)> = window.iter().map(|&(lo, hi)| rule.composite(lo, hi, panels)).collect();
        let mut acc = Neumaier::default();
        tensor_visit(&axes, &mut |u, w| {
            let y = piece.embed(u);
            let k = (-dist2(x, &y) / t).exp();
            acc.add(w * k * (vx - dot(&v.v, &y)) * piece.volume_factor(u));
        });
        p * acc.sum()
    };
    let mut res = quad_resolution;
    let mut coarse = integrate(res);
    loop {
        let fine = integrate(2 * res);
        let err = (fine - coarse).abs();
        let converged = err <= tol;
        if converged || 2 * res >= MAX_RESOLUTION || d >= 3 && 2 * res >= 256 {
            return Ok(OracleValue {
                value: fine,
                error_estimate: err,
                tail_bound: tail_bound(piece, p, x),
                resolution: 2 * res,
                converged,
            });
        }
        res *= 2;
        coarse = fine;
    }
}

/// p·e^{−144}·sup‖x − y‖·|Ωᵢ| bounds the mass outside the window.
fn tail_bound(piece: &ManifoldPiece, p: f64, x: &[f64]) -> f64 {
    let ux = piece.chart_coords(x);
    let far: f64 = piece
        .extent
        .lo
        .iter()
        .zip(&piece.extent.hi)
        .zip(&ux)
        .map(|((lo, hi), u)| (u - lo).abs().max((hi - u).abs()).powi(2))
        .sum::<f64>()
        .sqrt();
    let offset = crate::vecops::norm(&sub(x, &piece.embed(&ux)));
    let reach = far + offset + piece.height().abs() * far * far;
    p * (-TRUNCATION * TRUNCATION).exp() * reach * piece.area()
}

/// Full operator L_t f(x) = Σᵢ L_t^i f(x).
pub fn expected_laplacian_full(
    scene: &Scene,
    x: &[f64],
    v: &ProbeDirection,
    t: f64,
    quad_resolution: usize,
    tol: f64,
) -> Result<OracleValue> {
    let mut total =
        OracleValue { value: 0.0, error_estimate: 0.0, tail_bound: 0.0, resolution: quad_resolution, converged: true };
    for i in 0..scene.pieces.len() {
        let r = expected_laplacian_oracle(scene, i, x, v, t, quad_resolution, tol)?;
        total.value += r.value;
        total.error_estimate += r.error_estimate;
        total.tail_bound += r.tail_bound;
        total.resolution = total.resolution.max(r.resolution);
        total.converged &= r.converged;
    }
    Ok(total)
}

/// ∫_{lo}^{hi} e^{−(c−u)²/t} du.
fn gauss_mass(c: f64, lo: f64, hi: f64, t: f64) -> f64 {
    let st = t.sqrt();
    let a = (hi - c) / st;
    let b = (lo - c) / st;
    let diff = if b >= 0.0 {
        libm::erfc(b) - libm::erfc(a)
    } else if a <= 0.0 {
        libm::erfc(-a) - libm::erfc(-b)
    } else {
        libm::erf(a) - libm::erf(b)
    };
    0.5 * (std::f64::consts::PI * t).sqrt() * diff
}

/// ∫_{lo}^{hi} (c − u) e^{−(c−u)²/t} du.
fn gauss_moment(c: f64, lo: f64, hi: f64, t: f64) -> f64 {
    0.5 * t * ((-(c - hi).powi(2) / t).exp() - (-(c - lo).powi(2) / t).exp())
}

/// Closed form of L_t^i f(x) on a flat box piece with density `p`:
/// p e^{−|w|²/t} [(v·w) Π I₀ₖ + Σₖ (v·Fₖ) I₁ₖ Π_{j≠k} I₀ⱼ], where w is the
/// normal offset of x and Fₖ the frame.
pub fn flat_box_closed_form(piece: &ManifoldPiece, p: f64, x: &[f64], v: &ProbeDirection, t: f64) -> Result<f64> {
    if piece.kind != PieceKind::Flat {
        return Err(Error::domain("closed form applies to flat pieces only"));
    }
    let ux = piece.chart_coords(x);
    let w = sub(x, &piece.embed(&ux));
    let d = piece.intrinsic_dim;
    let i0: Vec<f64> = (0..d).map(|k| gauss_mass(ux[k], piece.extent.lo[k], piece.extent.hi[k], t)).collect();
    let i1: Vec<f64> = (0..d).map(|k| gauss_moment(ux[k], piece.extent.lo[k], piece.extent.hi[k], t)).collect();
    let mut acc = dot(&v.v, &w) * i0.iter().product::<f64>();
    for k in 0..d {
        let others: f64 = (0..d).filter(|&j| j != k).map(|j| i0[j]).product();
        acc += dot(&v.v, &piece.frame[k]) * i1[k] * others;
    }
    Ok(p * (-dot(&w, &w) / t).exp() * acc)
}

/// Σᵢ of [`flat_box_closed_form`] over a scene of flat pieces.
pub fn flat_scene_closed_form(scene: &Scene, x: &[f64], v: &ProbeDirection, t: f64) -> Result<f64> {
    let mut s = 0.0;
    for (i, piece) in scene.pieces.iter().enumerate() {
        s += flat_box_closed_form(piece, scene.density(i), x, v, t)?;
    }
    Ok(s)
}
