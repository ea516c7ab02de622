//! Crossing-point and angle estimators from the response profile P of
//! L_{n,t}f along a probe curve Γ, and a least-squares check of the profile
//! shape u e^{−c u²}.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::{laplacian_response, LaplacianResponse, ProbeDirection};
use crate::manifold::{
    make_intersection_scene, make_probe_curve, sample_uniform, ExtentSpec, PieceShape, ProbeCurve, Scene,
};
use crate::seeds;
use crate::vecops::{dist2, norm, sub};

use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub s_hat: Vec<f64>,
    pub r_max_hat: f64,
    pub theta_hat: f64,
    pub argmax_point: Vec<f64>,
    pub argmin_point: Vec<f64>,
    pub t_used: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// Refine the discrete extrema by a three-point parabola.
    pub parabolic_refinement: bool,
}

fn extrema(values: &[f64]) -> (usize, usize) {
    let mut imax = 0;
    let mut imin = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[imax] {
            imax = i;
        }
        if *v < values[imin] {
            imin = i;
        }
    }
    (imax, imin)
}

fn lerp(a: &[f64], b: &[f64], w: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect()
}

/// Location of the extremum at index i, optionally moved to the vertex of the
/// parabola through its neighbours.
fn extremum_point(resp: &LaplacianResponse, i: usize, refine: bool) -> Vec<f64> {
    let pts = &resp.eval_points;
    let here = pts.point(i).to_vec();
    if !refine || i == 0 || i + 1 >= pts.len() {
        return here;
    }
    let (a, b, c) = (resp.values[i - 1], resp.values[i], resp.values[i + 1]);
    let curv = a - 2.0 * b + c;
    if curv == 0.0 {
        return here;
    }
    let off = (0.5 * (a - c) / curv).clamp(-0.5, 0.5);
    if off >= 0.0 {
        lerp(&here, pts.point(i + 1), off)
    } else {
        lerp(&here, pts.point(i - 1), -off)
    }
}

fn check_response(resp: &LaplacianResponse, min_len: usize) -> Result<()> {
    if resp.values.len() < min_len || resp.values.len() != resp.eval_points.len() {
        return Err(Error::domain(format!(
            "response needs at least {min_len} matching points, got {} values for {} points",
            resp.values.len(),
            resp.eval_points.len()
        )));
    }
    Ok(())
}

/// ŝ = (argmax P + argmin P)/2, with the curve points as arguments.
pub fn estimate_crossing(resp: &LaplacianResponse, opts: EstimateOptions) -> Result<Vec<f64>> {
    check_response(resp, 3)?;
    let (imax, imin) = extrema(&resp.values);
    if !(resp.values[imax] > 0.0 && resp.values[imin] < 0.0) {
        return Err(Error::NoSignChange);
    }
    let (pmax, pmin) = extremum_points(resp, opts);
    Ok(pmax.iter().zip(&pmin).map(|(a, b)| 0.5 * (a + b)).collect())
}

fn extremum_points(resp: &LaplacianResponse, opts: EstimateOptions) -> (Vec<f64>, Vec<f64>) {
    let (imax, imin) = extrema(&resp.values);
    (extremum_point(resp, imax, opts.parabolic_refinement), extremum_point(resp, imin, opts.parabolic_refinement))
}

/// ‖argmax − argmin‖/2, which equals ‖ŝ − argmax‖ without the rounding of ŝ
/// and is therefore exactly symmetric under v → −v.
fn half_separation(pmax: &[f64], pmin: &[f64]) -> f64 {
    0.5 * norm(&sub(pmax, pmin))
}

/// r̂_max = ‖ŝ − argmax P‖/√t and θ̂ = arcsin(1/(√2 r̂_max)).
pub fn estimate_angle(resp: &LaplacianResponse, s_hat: &[f64], t: f64, opts: EstimateOptions) -> Result<(f64, f64)> {
    check_response(resp, 3)?;
    if !(t > 0.0) {
        return Err(Error::domain("bandwidth t must be positive"));
    }
    let (imax, _) = extrema(&resp.values);
    let pmax = extremum_point(resp, imax, opts.parabolic_refinement);
    let r_max = norm(&sub(s_hat, &pmax)) / t.sqrt();
    angle_from_radius(r_max).map(|theta| (r_max, theta))
}

/// θ̂ = arcsin(1/(√2 r̂_max)).
pub fn angle_from_radius(r_max: f64) -> Result<f64> {
    let arg = 1.0 / (SQRT_2 * r_max);
    if !(arg <= 1.0) {
        return Err(Error::AngleUnresolvable(arg));
    }
    Ok(arg.asin())
}

/// Both estimators on one response. r̂_max is taken as half the extremum
/// separation so the report is exactly invariant under v → −v.
pub fn estimate(resp: &LaplacianResponse, opts: EstimateOptions) -> Result<EstimateReport> {
    let s_hat = estimate_crossing(resp, opts)?;
    let t = resp.params.t;
    let (argmax_point, argmin_point) = extremum_points(resp, opts);
    let r_max_hat = half_separation(&argmax_point, &argmin_point) / t.sqrt();
    let theta_hat = angle_from_radius(r_max_hat)?;
    Ok(EstimateReport { s_hat, r_max_hat, theta_hat, argmax_point, argmin_point, t_used: t })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileFit {
    pub c1: f64,
    pub c2: f64,
    /// ‖P − fit‖/‖P‖.
    pub residual_ratio: f64,
    pub singular: bool,
}

/// Least-squares fit of P ≈ c₁ u e^{−c₂u²}, with u the polyline arc length
/// from the estimated crossing in units of √t.
///
/// c₁ is eliminated in closed form; c₂ is found by golden-section search on
/// log c₂ ∈ [−12, 8].
pub fn profile_fit_diagnostics(resp: &LaplacianResponse) -> Result<ProfileFit> {
    check_response(resp, 10)?;
    let singular = ProfileFit { c1: 0.0, c2: 0.0, residual_ratio: f64::NAN, singular: true };
    let norm_p = resp.values.iter().map(|p| p * p).sum::<f64>().sqrt();
    if norm_p == 0.0 || !norm_p.is_finite() {
        return Ok(singular);
    }
    let pts = &resp.eval_points;
    let mut arc = vec![0.0; pts.len()];
    for i in 1..pts.len() {
        arc[i] = arc[i - 1] + dist2(pts.point(i), pts.point(i - 1)).sqrt();
    }
    let (imax, imin) = extrema(&resp.values);
    let centre = 0.5 * (arc[imax] + arc[imin]);
    // Orient u so that the maximum sits at positive u.
    let sign = if arc[imax] >= arc[imin] { 1.0 } else { -1.0 };
    let st = resp.params.t.sqrt();
    let u: Vec<f64> = arc.iter().map(|a| sign * (a - centre) / st).collect();
    let solve = |c2: f64| -> (f64, f64) {
        let mut pp = 0.0;
        let mut qq = 0.0;
        for (ui, pi) in u.iter().zip(&resp.values) {
            let phi = ui * (-c2 * ui * ui).exp();
            pp += phi * pi;
            qq += phi * phi;
        }
        if qq == 0.0 {
            return (0.0, f64::INFINITY);
        }
        let c1 = pp / qq;
        let r: f64 = u.iter().zip(&resp.values).map(|(ui, pi)| (pi - c1 * ui * (-c2 * ui * ui).exp()).powi(2)).sum();
        (c1, r)
    };
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (-12.0f64, 8.0f64);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if solve(c.exp()).1 < solve(d.exp()).1 {
            b = d;
        } else {
            a = c;
        }
    }
    let c2 = (0.5 * (a + b)).exp();
    let (c1, r) = solve(c2);
    if !r.is_finite() || c1 == 0.0 {
        return Ok(singular);
    }
    Ok(ProfileFit { c1, c2, residual_ratio: r.sqrt() / norm_p, singular: false })
}

/// Setup of the two-piece estimation experiment in ℝ³.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationSetup {
    pub theta: f64,
    pub shape: PieceShape,
    pub t: f64,
    pub per_piece: usize,
    /// Number of probe points on Γ.
    pub m: usize,
    /// Chart half-width of both pieces.
    pub half_width: f64,
}

impl EstimationSetup {
    pub fn flat(theta: f64) -> Self {
        EstimationSetup { theta, shape: PieceShape::Flat, t: 1e-3, per_piece: 20_000, m: 1000, half_width: 0.5 }
    }

    pub fn scene(&self) -> Result<Scene> {
        make_intersection_scene(3, 2, self.theta, self.shape, &ExtentSpec::ChartBox { half_width: self.half_width })
    }

    /// Γ on piece 1 through the intersection, across the intersection line,
    /// long enough to hold both extrema three times over.
    pub fn curve(&self, scene: &Scene) -> Result<ProbeCurve> {
        let peak = self.t.sqrt() / (SQRT_2 * self.theta.sin());
        let half_length = (3.0 * peak).min(0.9 * self.half_width);
        make_probe_curve(scene, 1, &[0.0; 3], &[0.0, 1.0], half_length, self.m)
    }
}

/// Errors of one run. `s_hat` is `None` when P shows no sign change. The
/// angle is `None` when that happens or when the arcsin argument exceeds 1,
/// which occurs in roughly half the runs at θ = π/2 where the true argument
/// is exactly 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationOutcome {
    pub seed: u64,
    pub s_hat: Option<Vec<f64>>,
    pub r_max_hat: Option<f64>,
    pub theta_hat: Option<f64>,
    pub crossing_error: Option<f64>,
    pub angle_error: Option<f64>,
}

/// One run: fresh samples, response along Γ for direction v, estimates and
/// their errors against the true crossing and tangent angle.
pub fn estimation_trial(
    setup: &EstimationSetup,
    scene: &Scene,
    curve: &ProbeCurve,
    v: &ProbeDirection,
    seed: u64,
    opts: EstimateOptions,
) -> Result<EstimationOutcome> {
    let cloud = sample_uniform(scene, &[setup.per_piece, setup.per_piece], seed)?;
    let resp = laplacian_response(&cloud, &curve.points, v, setup.t)?;
    let s_hat = match estimate_crossing(&resp, opts) {
        Ok(s) => s,
        Err(Error::NoSignChange) => {
            return Ok(EstimationOutcome {
                seed,
                s_hat: None,
                r_max_hat: None,
                theta_hat: None,
                crossing_error: None,
                angle_error: None,
            })
        }
        Err(e) => return Err(e),
    };
    let (pmax, pmin) = extremum_points(&resp, opts);
    let r_max_hat = half_separation(&pmax, &pmin) / setup.t.sqrt();
    let theta_hat = match angle_from_radius(r_max_hat) {
        Ok(th) => Some(th),
        Err(Error::AngleUnresolvable(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(EstimationOutcome {
        seed,
        crossing_error: Some(norm(&sub(&s_hat, &curve.crossing_point))),
        angle_error: theta_hat.map(|th| (th - setup.theta).abs()),
        s_hat: Some(s_hat),
        r_max_hat: Some(r_max_hat),
        theta_hat,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationSummary {
    pub theta: f64,
    pub runs: usize,
    /// Median over all runs, a run without sign change counting as +∞.
    pub median_crossing_error: f64,
    /// Median over the runs whose angle was resolvable; NaN if none was.
    pub median_angle_error: f64,
    pub no_sign_change: usize,
    pub unresolvable: usize,
    pub outcomes: Vec<EstimationOutcome>,
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    let m = xs.len();
    if m % 2 == 1 {
        xs[m / 2]
    } else {
        0.5 * (xs[m / 2 - 1] + xs[m / 2])
    }
}

/// `runs` independent runs, each with its own sample and a uniform random v.
pub fn run_estimation_experiment(
    setup: &EstimationSetup,
    runs: usize,
    seed: u64,
    opts: EstimateOptions,
) -> Result<EstimationSummary> {
    if runs == 0 {
        return Err(Error::domain("estimation experiment needs at least one run"));
    }
    let scene = setup.scene()?;
    let curve = setup.curve(&scene)?;
    let outcomes: Vec<EstimationOutcome> = (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds::rng(seeds::derive(seed, seeds::stream::DIRECTION, i));
            let v = ProbeDirection::random(3, &mut rng);
            estimation_trial(setup, &scene, &curve, &v, seeds::derive(seed, seeds::stream::SAMPLE, i), opts)
        })
        .collect::<Result<_>>()?;
    let mut ce: Vec<f64> = outcomes.iter().map(|o| o.crossing_error.unwrap_or(f64::INFINITY)).collect();
    let mut ae: Vec<f64> = outcomes.iter().filter_map(|o| o.angle_error).collect();
    let no_sign_change = outcomes.iter().filter(|o| o.s_hat.is_none()).count();
    Ok(EstimationSummary {
        theta: setup.theta,
        runs,
        median_crossing_error: median(&mut ce),
        median_angle_error: median(&mut ae),
        no_sign_change,
        unresolvable: runs - no_sign_change - ae.len(),
        outcomes,
    })
}
