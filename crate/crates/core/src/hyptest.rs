//! Level-α test for a singularity at x₀, its bandwidth and threshold, the
//! concentration bound behind it, power conditions and the batch experiment
//! runner.

use std::f64::consts::{E, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::{select_direction, PreparedCloud, ProbeDirection};
use crate::manifold::{make_intersection_scene, sample_mixture, ExtentSpec, PieceKind, PieceShape, PointCloud, Scene};
use crate::oracle::flat_scene_closed_form;
use crate::seeds;
use crate::special::gamma_complete;
use crate::vecops::{dist2, dot, norm, sub};

/// Radius R used when the test's ball B₁(x₀) is fed to the flat theorem.
pub const TEST_THEOREM_RADIUS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub alpha: f64,
    pub x0: Vec<f64>,
    /// Radius of the evaluation ball (1 in the theorem).
    pub radius: f64,
    pub t_override: Option<f64>,
}

impl TestConfig {
    pub fn new(alpha: f64, x0: Vec<f64>) -> Result<Self> {
        let c = TestConfig { alpha, x0, radius: 1.0, t_override: None };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::domain(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.radius > 0.0) {
            return Err(Error::domain("evaluation radius must be positive"));
        }
        if let Some(t) = self.t_override {
            if !(t > 0.0) {
                return Err(Error::domain("bandwidth override must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    /// T = max over in-ball samples of |L_{n,t}f(X_m)|.
    pub statistic: f64,
    pub delta: f64,
    pub t_used: f64,
    pub n: usize,
    pub n_in_ball: usize,
    pub reject: bool,
    pub v: ProbeDirection,
    /// Caller's assertion that v was chosen on data independent of the cloud.
    pub direction_independent: bool,
}

fn check_n(n: usize, alpha: f64) -> Result<()> {
    if n < 3 {
        return Err(Error::domain(format!("need n >= 3 samples, got {n}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn capped_bandwidth(n: usize, inner: f64) -> Result<f64> {
    let arg = E * (n as f64 - 1.0) / inner;
    if !(arg > 1.0) {
        return Err(Error::domain(format!("n = {n} too small: log argument {arg} <= 1")));
    }
    Ok((2.0 / arg.ln()).min(1.0))
}

/// t(n, α) = min{1, 2/log(e(n−1)/log(2n/α))}, the bandwidth used for the
/// experiments. Checked against [`bandwidth_hypothesis_bound`].
pub fn bandwidth_for_test(n: usize, alpha: f64) -> Result<f64> {
    check_n(n, alpha)?;
    let t = capped_bandwidth(n, (2.0 * n as f64 / alpha).ln())?;
    let bound = bandwidth_hypothesis_bound(n, alpha)?;
    if t > bound {
        return Err(Error::precondition(format!("bandwidth {t} exceeds the level-alpha bound {bound}")));
    }
    Ok(t)
}

/// Largest t for which the test has level α:
/// min{1, 2/log(e(n−1)/(2 log(2n/α)))}.
pub fn bandwidth_hypothesis_bound(n: usize, alpha: f64) -> Result<f64> {
    check_n(n, alpha)?;
    capped_bandwidth(n, 2.0 * (2.0 * n as f64 / alpha).ln())
}

/// δ = √(t/(e(n−1)) · log(2n/α)).
pub fn threshold_delta(n: usize, t: f64, alpha: f64) -> Result<f64> {
    if n < 2 || !(t > 0.0) || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain("need n >= 2, t > 0 and alpha in (0, 1)"));
    }
    Ok((t / (E * (n as f64 - 1.0)) * (2.0 * n as f64 / alpha).ln()).sqrt())
}

/// 2n·exp(−4e(n−1)ε²/t), unclamped.
pub fn concentration_bound(n: usize, t: f64, epsilon: f64) -> f64 {
    2.0 * n as f64 * (-4.0 * E * (n as f64 - 1.0) * epsilon * epsilon / t).exp()
}

/// ε at which [`concentration_bound`] equals `level`.
pub fn epsilon_for_bound(n: usize, t: f64, level: f64) -> f64 {
    ((2.0 * n as f64 / level).ln() * t / (4.0 * E * (n as f64 - 1.0))).sqrt()
}

/// Run the test on `cloud` with probe direction `v`.
pub fn run_test(
    cloud: &PointCloud,
    config: &TestConfig,
    v: &ProbeDirection,
    direction_independent: bool,
) -> Result<TestReport> {
    config.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if config.x0.len() != cloud.dim || v.v.len() != cloud.dim {
        return Err(Error::ShapeMismatch {
            expected: cloud.dim.to_string(),
            got: format!("x0: {}, v: {}", config.x0.len(), v.v.len()),
        });
    }
    let n = cloud.len();
    let t = match config.t_override {
        Some(t) => t,
        None => bandwidth_for_test(n, config.alpha)?,
    };
    let delta = threshold_delta(n, t, config.alpha)?;
    let in_ball = in_ball_points(cloud, &config.x0, config.radius);
    if in_ball.is_empty() {
        return Err(Error::EmptyBall);
    }
    let prepared = PreparedCloud::new(cloud)?;
    let statistic = prepared.apply_many(&in_ball, v, t).into_iter().map(f64::abs).fold(0.0, f64::max);
    Ok(TestReport {
        statistic,
        delta,
        t_used: t,
        n,
        n_in_ball: in_ball.len(),
        reject: statistic > delta,
        v: v.clone(),
        direction_independent,
    })
}

/// Points of `cloud` within distance `radius` of `x0`.
pub fn in_ball_points(cloud: &PointCloud, x0: &[f64], radius: f64) -> PointCloud {
    let r2 = radius * radius;
    let idx: Vec<usize> = (0..cloud.len()).filter(|&i| dist2(cloud.point(i), x0) <= r2).collect();
    cloud.select(&idx)
}

/// Per-inequality report of the power conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerConditions {
    pub first_lhs: f64,
    pub first_rhs: f64,
    pub second_lhs: f64,
    pub second_rhs: f64,
    pub first_ok: bool,
    pub second_ok: bool,
    pub satisfied: bool,
}

/// t((d+1)log(1/t) + log(2/(π^d v_n²))) ≤ 2(1 − sin²θ₁) and
/// t ≤ 1/(d/2 + log(16²e²/(π^d v_n² sin²θ₁))).
pub fn power_conditions_check(t: f64, d: usize, v_n: f64, theta1: f64) -> Result<PowerConditions> {
    if !(t > 0.0) || d == 0 || v_n == 0.0 || !(theta1 > 0.0 && theta1 <= PI / 2.0 + 1e-15) {
        return Err(Error::domain("need t > 0, d >= 1, v_n != 0 and theta1 in (0, pi/2]"));
    }
    let pid = PI.powi(d as i32);
    let v2 = v_n * v_n;
    let s2 = theta1.sin().powi(2);
    let first_lhs = t * ((d as f64 + 1.0) * (1.0 / t).ln() + (2.0 / (pid * v2)).ln());
    let first_rhs = 2.0 * (1.0 - s2);
    let second_rhs = 1.0 / (d as f64 / 2.0 + (256.0 * E * E / (pid * v2 * s2)).ln());
    let first_ok = first_lhs <= first_rhs;
    let second_ok = t <= second_rhs;
    Ok(PowerConditions {
        first_lhs,
        first_rhs,
        second_lhs: t,
        second_rhs,
        first_ok,
        second_ok,
        satisfied: first_ok && second_ok,
    })
}

/// Probability mass of B_ρ(x₀) under the scene density, for flat pieces whose
/// chart box contains the disc cut out by the ball.
pub fn in_ball_mass(scene: &Scene, x0: &[f64], rho: f64) -> Result<f64> {
    let mut mass = 0.0;
    for (i, piece) in scene.pieces.iter().enumerate() {
        if piece.kind != PieceKind::Flat {
            return Err(Error::domain("analytic in-ball mass needs flat pieces"));
        }
        let u = piece.chart_coords(x0);
        let off = norm(&sub(x0, &piece.embed(&u)));
        if off >= rho {
            continue;
        }
        let s = (rho * rho - off * off).sqrt();
        let inside = u
            .iter()
            .zip(piece.extent.lo.iter().zip(&piece.extent.hi))
            .all(|(c, (lo, hi))| c - s >= *lo && c + s <= *hi);
        if !inside {
            return Err(Error::domain("ball reaches the edge of a piece; analytic mass unavailable"));
        }
        let d = piece.intrinsic_dim as f64;
        let ball = PI.powf(d / 2.0) / gamma_complete(d / 2.0 + 1.0)? * s.powf(d);
        mass += scene.density(i) * ball;
    }
    Ok(mass.min(1.0))
}

/// 1 − α − ℙ(X ∉ B_{R/3}(x₀))ⁿ.
pub fn power_lower_bound(n: usize, alpha: f64, scene: &Scene, x0: &[f64], big_r: f64) -> Result<f64> {
    let mass = in_ball_mass(scene, x0, big_r / 3.0)?;
    Ok(1.0 - alpha - (1.0 - mass).powf(n as f64))
}

/// max_i |L_{n,t}f(Xᵢ) − ((n−1)/n)L_tf(Xᵢ)| over all samples of a flat scene.
pub fn max_concentration_deviation(scene: &Scene, cloud: &PointCloud, v: &ProbeDirection, t: f64) -> Result<f64> {
    let prepared = PreparedCloud::new(cloud)?;
    let empirical = prepared.apply_many(cloud, v, t);
    let factor = (cloud.len() as f64 - 1.0) / cloud.len() as f64;
    let mut worst: f64 = 0.0;
    for (i, e) in empirical.iter().enumerate() {
        let expected = flat_scene_closed_form(scene, cloud.point(i), v, t)?;
        worst = worst.max((e - factor * expected).abs());
    }
    Ok(worst)
}

/// Scene family of the experiment table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// A single plane through x₀.
    Null,
    /// Two planes crossing at x₀ with the given dihedral angle.
    Intersection { theta: f64 },
}

impl Hypothesis {
    pub fn label(&self) -> String {
        match self {
            Hypothesis::Null => "H0".into(),
            Hypothesis::Intersection { theta } => format!("H1_theta_{theta:.6}"),
        }
    }
}

/// Flat scenes cut out of the ambient cube [−a, a]^N, with x₀ at the origin.
pub fn experiment_scene(hyp: Hypothesis, ambient_dim: usize, d: usize, half_width: f64) -> Result<Scene> {
    match hyp {
        Hypothesis::Null => Scene::flat_plane(ambient_dim, d, half_width),
        Hypothesis::Intersection { theta } => {
            make_intersection_scene(ambient_dim, d, theta, PieceShape::Flat, &ExtentSpec::AmbientCube { half_width })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub sample_sizes: Vec<usize>,
    pub hypotheses: Vec<Hypothesis>,
    pub trials: usize,
    pub seed: u64,
    pub alpha: f64,
    pub ambient_dim: usize,
    pub d: usize,
    /// Half-width of the ambient cube bounding every piece.
    pub half_width: f64,
    /// Size of the independent direction-selection sample relative to n.
    pub selection_fraction: f64,
    pub n_candidates: usize,
}

impl ExperimentSpec {
    /// Layout of the reference table: seven sample sizes, H₀ and two angles.
    pub fn reference(trials: usize, seed: u64) -> Self {
        ExperimentSpec {
            sample_sizes: vec![20_000, 30_000, 40_000, 55_000, 60_000, 65_000, 70_000],
            hypotheses: vec![
                Hypothesis::Null,
                Hypothesis::Intersection { theta: PI / 4.0 },
                Hypothesis::Intersection { theta: PI / 2.0 },
            ],
            trials,
            seed,
            alpha: 0.05,
            ambient_dim: 3,
            d: 2,
            half_width: REFERENCE_HALF_WIDTH,
            selection_fraction: 0.2,
            n_candidates: 64,
        }
    }
}

/// Cube half-width of the reference scenes.
pub const REFERENCE_HALF_WIDTH: f64 = 1.73;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub n: usize,
    pub hypothesis: String,
    pub trial: usize,
    pub seed: u64,
    pub statistic: f64,
    pub delta: f64,
    pub t_used: f64,
    pub n_in_ball: usize,
    pub reject: bool,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub sample_sizes: Vec<usize>,
    pub columns: Vec<String>,
    /// rates[row][column], fraction of rejecting trials.
    pub rates: Vec<Vec<f64>>,
    pub trials: usize,
    /// Whether every other singularity (piece edges) is at least 2R from x₀.
    pub clearance_ok: bool,
    pub records: Vec<TrialRecord>,
}

impl ExperimentTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["n".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (n, row) in self.sample_sizes.iter().zip(&self.rates) {
            let mut rec = vec![n.to_string()];
            rec.extend(row.iter().map(|r| r.to_string()));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// One trial: a fresh sample of size n, an independent selection sample for
/// the direction, then the test at x₀ = 0.
pub fn run_trial(spec: &ExperimentSpec, scene: &Scene, n: usize, trial_seed: u64) -> Result<TestReport> {
    let x0 = vec![0.0; spec.ambient_dim];
    let config = TestConfig::new(spec.alpha, x0.clone())?;
    let t = bandwidth_for_test(n, spec.alpha)?;
    let cloud = sample_mixture(scene, n, seeds::derive(trial_seed, seeds::stream::SAMPLE, 0))?;
    let n_sel = ((n as f64 * spec.selection_fraction).round() as usize).max(3);
    let sel = sample_mixture(scene, n_sel, seeds::derive(trial_seed, seeds::stream::SELECTION, 0))?;
    let sel_ball = in_ball_points(&sel, &x0, config.radius);
    let v = if sel_ball.is_empty() {
        let mut rng = seeds::rng(seeds::derive(trial_seed, seeds::stream::DIRECTION, 1));
        ProbeDirection::random(spec.ambient_dim, &mut rng)
    } else {
        select_direction(&sel, &sel_ball, t, spec.n_candidates, seeds::derive(trial_seed, seeds::stream::DIRECTION, 0))?
    };
    run_test(&cloud, &config, &v, true)
}

/// Rejection-rate table over sample sizes × hypotheses, trials in parallel.
pub fn run_experiment_table(spec: &ExperimentSpec) -> Result<ExperimentTable> {
    if spec.trials == 0 || spec.sample_sizes.is_empty() || spec.hypotheses.is_empty() {
        return Err(Error::domain("experiment needs trials, sample sizes and hypotheses"));
    }
    let scenes: Vec<Scene> = spec
        .hypotheses
        .iter()
        .map(|h| experiment_scene(*h, spec.ambient_dim, spec.d, spec.half_width))
        .collect::<Result<_>>()?;
    let mut jobs = Vec::new();
    for (row, &n) in spec.sample_sizes.iter().enumerate() {
        for col in 0..spec.hypotheses.len() {
            for trial in 0..spec.trials {
                jobs.push((row, col, n, trial));
            }
        }
    }
    let results: Vec<Result<TrialRecord>> = jobs
        .par_iter()
        .map(|&(row, col, n, trial)| {
            let index = ((row * spec.hypotheses.len() + col) * spec.trials + trial) as u64;
            let seed = seeds::derive(spec.seed, seeds::stream::TRIAL, index);
            let rep = run_trial(spec, &scenes[col], n, seed)?;
            Ok(TrialRecord {
                n,
                hypothesis: spec.hypotheses[col].label(),
                trial,
                seed,
                statistic: rep.statistic,
                delta: rep.delta,
                t_used: rep.t_used,
                n_in_ball: rep.n_in_ball,
                reject: rep.reject,
                v: rep.v.v,
            })
        })
        .collect();
    let records: Vec<TrialRecord> = results.into_iter().collect::<Result<_>>()?;
    let mut counts = vec![vec![0usize; spec.hypotheses.len()]; spec.sample_sizes.len()];
    for (&(row, col, _, _), rec) in jobs.iter().zip(&records) {
        counts[row][col] += rec.reject as usize;
    }
    let rates = counts.iter().map(|row| row.iter().map(|&c| c as f64 / spec.trials as f64).collect()).collect();
    Ok(ExperimentTable {
        sample_sizes: spec.sample_sizes.clone(),
        columns: spec.hypotheses.iter().map(|h| h.label()).collect(),
        rates,
        trials: spec.trials,
        clearance_ok: spec.half_width >= 2.0 * TEST_THEOREM_RADIUS,
        records,
    })
}

/// Largest single-summand magnitude |K_t(x,y)(f(x) − f(y))| over the given
/// pairs; bounded by √(t/(2e)).
pub fn max_summand(xs: &PointCloud, ys: &PointCloud, v: &ProbeDirection, t: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for x in xs.rows() {
        for y in ys.rows() {
            let k = (-dist2(x, y) / t).exp();
            worst = worst.max((k * (dot(&v.v, x) - dot(&v.v, y))).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bandwidth_matches_independent_evaluation() {
        let (n, alpha) = (30_001usize, 0.05);
        let l = (2.0 * 30_001.0 / 0.05f64).ln();
        let expected = (2.0 / (E * 30_000.0 / l).ln()).min(1.0);
        assert!((bandwidth_for_test(n, alpha).unwrap() - expected).abs() < 1e-15);
        assert!((bandwidth_for_test(30_000, 0.05).unwrap() - 0.2307).abs() < 1e-4);
    }

    #[test]
    fn bandwidth_monotone_and_capped() {
        let mut prev = f64::INFINITY;
        let mut n = 1000usize;
        while n <= 1_000_000 {
            let t = bandwidth_for_test(n, 0.05).unwrap();
            assert!(t <= 1.0 && t <= prev + 1e-15);
            assert!(t <= bandwidth_hypothesis_bound(n, 0.05).unwrap());
            prev = t;
            n = n * 11 / 10;
        }
        assert!(bandwidth_for_test(2, 0.05).is_err());
        assert_eq!(bandwidth_for_test(3, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn threshold_plugged_into_concentration_gives_level() {
        for n in [100usize, 10_000, 1_000_000] {
            let t = bandwidth_for_test(n, 0.05).unwrap();
            let delta = threshold_delta(n, t, 0.05).unwrap();
            assert!(concentration_bound(n, t, delta) <= 0.05);
            let d2 = threshold_delta(n, 4.0 * t, 0.05).unwrap();
            assert!((d2 - 2.0 * delta).abs() < 1e-15);
        }
        assert_eq!(concentration_bound(10, 0.1, 0.0).min(1.0), 1.0);
        let eps = epsilon_for_bound(10_000, 0.3, 0.5);
        assert!((concentration_bound(10_000, 0.3, eps) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn summand_bound_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = 0.2;
        let pts: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cloud = PointCloud::new(3, pts).unwrap();
        let v = ProbeDirection::random(3, &mut rng);
        assert!(max_summand(&cloud, &cloud, &v, t) <= (t / (2.0 * E)).sqrt());
    }

    #[test]
    fn degenerate_cloud_never_rejects() {
        let cloud = PointCloud::new(3, vec![0.1; 300]).unwrap();
        let cfg = TestConfig::new(0.05, vec![0.0; 3]).unwrap();
        let rep = run_test(&cloud, &cfg, &ProbeDirection::axis(3, 2), true).unwrap();
        assert_eq!(rep.statistic, 0.0);
        assert!(!rep.reject);
        assert_eq!(rep.n_in_ball, 100);
    }

    #[test]
    fn empty_ball_is_an_error() {
        let cloud = PointCloud::new(3, vec![5.0; 30]).unwrap();
        let cfg = TestConfig::new(0.05, vec![0.0; 3]).unwrap();
        assert!(matches!(run_test(&cloud, &cfg, &ProbeDirection::axis(3, 0), true), Err(Error::EmptyBall)));
    }

    #[test]
    fn power_conditions_limits() {
        let c = power_conditions_check(1e-3, 2, 1.0, PI / 2.0).unwrap();
        let pid = PI * PI;
        let first = 1e-3 * (3.0 * 1e3f64.ln() + (2.0 / pid).ln());
        assert!((c.first_lhs - first).abs() < 1e-15);
        assert_eq!(c.first_rhs, 0.0);
        assert!(!c.first_ok);
        let small = power_conditions_check(0.1, 2, 1.0, 1e-6).unwrap();
        assert!((small.first_rhs - 2.0).abs() < 1e-9);
        assert!(small.first_ok && !small.second_ok);
    }

    #[test]
    fn required_sample_size_grows_like_inverse_fourth_power() {
        // Smallest n whose bandwidth meets the second power condition.
        let needed = |s: f64| -> f64 {
            let mut n = 10usize;
            loop {
                let t = bandwidth_for_test(n, 0.05).unwrap();
                if power_conditions_check(t, 2, s, s.asin()).unwrap().second_ok {
                    return n as f64;
                }
                n = n * 21 / 20 + 1;
            }
        };
        let a = needed(0.4);
        let b = needed(0.2);
        let c = needed(0.1);
        assert!(a < b && b < c);
    }

    #[test]
    fn in_ball_mass_and_power_bound() {
        let s = Scene::flat_plane(3, 2, 2.0).unwrap();
        let m = in_ball_mass(&s, &[0.0; 3], 1.0).unwrap();
        assert!((m - PI / 16.0).abs() < 1e-14);
        let x = experiment_scene(Hypothesis::Intersection { theta: PI / 2.0 }, 3, 2, 2.0).unwrap();
        let m2 = in_ball_mass(&x, &[0.0; 3], 1.0).unwrap();
        assert!((m2 - 2.0 * PI / 32.0).abs() < 1e-14);
        let b = power_lower_bound(1_000_000, 0.05, &x, &[0.0; 3], 2.0).unwrap();
        assert!((b - 0.95).abs() < 1e-12);
        assert!(power_lower_bound(10, 0.05, &x, &[0.0; 3], 2.0).unwrap() < 0.95);
    }

    #[test]
    fn small_table_is_reproducible() {
        let mut spec = ExperimentSpec::reference(2, 11);
        spec.sample_sizes = vec![2000];
        let a = run_experiment_table(&spec).unwrap();
        let b = run_experiment_table(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 6);
        assert!(!a.clearance_ok);
        let csv = a.to_csv().unwrap();
        assert!(csv.starts_with("n,H0,"));
    }
}
