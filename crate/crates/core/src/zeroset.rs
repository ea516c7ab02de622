//! Parameter sets of spherical networks f_W(x) = Σ aᵢ(wᵢ·x)₊ on 𝕊¹ that fit a
//! target on finitely many inputs, paved by interval constraint propagation.
//!
//! Every primitive result is widened outward by a few ulps instead of switching
//! rounding modes, so enclosures are sound and identical across platforms.

use std::f64::consts::TAU;
use std::ops::{Add, Mul, Neg, Sub};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::PointCloud;
use crate::seeds;

/// ulps added on each side of every primitive result.
pub const WIDEN_ULPS: u32 = 4;

/// Version tag written into checkpoints.
pub const CHECKPOINT_VERSION: u32 = 1;

fn down(mut x: f64) -> f64 {
    for _ in 0..WIDEN_ULPS {
        x = x.next_down();
    }
    x
}

fn up(mut x: f64) -> f64 {
    for _ in 0..WIDEN_ULPS {
        x = x.next_up();
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::domain(format!("interval needs lo <= hi, got [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn entire() -> Self {
        Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    fn widened(lo: f64, hi: f64) -> Self {
        Interval { lo: down(lo), hi: up(hi) }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * self.lo + 0.5 * self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn scale(self, c: f64) -> Interval {
        if c >= 0.0 {
            Interval::widened(self.lo * c, self.hi * c)
        } else {
            Interval::widened(self.hi * c, self.lo * c)
        }
    }

    /// Division by a non-zero scalar.
    pub fn div_scalar(self, c: f64) -> Interval {
        debug_assert!(c != 0.0);
        if c > 0.0 {
            Interval::widened(self.lo / c, self.hi / c)
        } else {
            Interval::widened(self.hi / c, self.lo / c)
        }
    }

    pub fn relu(self) -> Interval {
        Interval { lo: self.lo.max(0.0), hi: self.hi.max(0.0) }
    }

    pub fn abs(self) -> Interval {
        if self.lo >= 0.0 {
            self
        } else if self.hi <= 0.0 {
            self.neg()
        } else {
            Interval { lo: 0.0, hi: (-self.lo).max(self.hi) }
        }
    }

    pub fn intersect(self, o: Interval) -> Option<Interval> {
        let lo = self.lo.max(o.lo);
        let hi = self.hi.min(o.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }
}

impl Add for Interval {
    type Output = Interval;

    fn add(self, o: Interval) -> Interval {
        Interval::widened(self.lo + o.lo, self.hi + o.hi)
    }
}

impl Sub for Interval {
    type Output = Interval;

    fn sub(self, o: Interval) -> Interval {
        Interval::widened(self.lo - o.hi, self.hi - o.lo)
    }
}

impl Mul for Interval {
    type Output = Interval;

    fn mul(self, o: Interval) -> Interval {
        let c = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::widened(lo, hi)
    }
}

impl Neg for Interval {
    type Output = Interval;

    fn neg(self) -> Interval {
        Interval { lo: -self.hi, hi: -self.lo }
    }
}

/// Axis-aligned box of weights, coordinates ordered (w₁ₓ, w₁ᵧ, w₂ₓ, …).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBox {
    pub intervals: Vec<Interval>,
}

impl IntervalBox {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Ok(IntervalBox { intervals: vec![Interval::new(lo, hi)?; dim] })
    }

    pub fn around(center: &[f64], half_width: f64) -> Result<Self> {
        let intervals = center.iter().map(|c| Interval::new(c - half_width, c + half_width)).collect::<Result<_>>()?;
        Ok(IntervalBox { intervals })
    }

    pub fn from_point(p: &[f64]) -> Self {
        IntervalBox { intervals: p.iter().map(|x| Interval::point(*x)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn max_width(&self) -> f64 {
        self.intervals.iter().map(|i| i.width()).fold(0.0, f64::max)
    }

    pub fn centroid(&self) -> Vec<f64> {
        self.intervals.iter().map(|i| i.mid()).collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && self.intervals.iter().zip(p).all(|(i, x)| i.contains(*x))
    }

    pub fn is_subset_of(&self, o: &IntervalBox) -> bool {
        self.intervals.iter().zip(&o.intervals).all(|(a, b)| b.lo <= a.lo && a.hi <= b.hi)
    }

    /// Split the widest coordinate at its midpoint; ties go to the lowest index.
    pub fn bisect(&self) -> (IntervalBox, IntervalBox) {
        let mut k = 0;
        for (i, iv) in self.intervals.iter().enumerate() {
            if iv.width() > self.intervals[k].width() {
                k = i;
            }
        }
        let m = self.intervals[k].mid();
        let mut a = self.clone();
        let mut b = self.clone();
        a.intervals[k].hi = m;
        b.intervals[k].lo = m;
        (a, b)
    }

    /// Uniform random point of the box.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.intervals.iter().map(|i| if i.width() > 0.0 { rng.random_range(i.lo..=i.hi) } else { i.lo }).collect()
    }

    fn total_width(&self) -> f64 {
        self.intervals.iter().map(|i| i.width()).sum()
    }
}

/// f_W(x) = Σ aᵢ(wᵢ·x)₊ with inputs on the unit circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalNet {
    pub a: Vec<f64>,
    pub inputs: Vec<[f64; 2]>,
}

impl SphericalNet {
    pub fn new(a: Vec<f64>, inputs: Vec<[f64; 2]>) -> Result<Self> {
        if a.is_empty() || a.iter().any(|s| *s != 1.0 && *s != -1.0) {
            return Err(Error::domain("node signs must be +1 or -1"));
        }
        if inputs.iter().any(|x| ((x[0] * x[0] + x[1] * x[1]).sqrt() - 1.0).abs() > 1e-12) {
            return Err(Error::domain("network inputs must lie on the unit circle"));
        }
        Ok(SphericalNet { a, inputs })
    }

    /// m inputs at independent uniform angles.
    pub fn random_inputs(m: usize, seed: u64) -> Vec<[f64; 2]> {
        let mut rng = seeds::rng(seeds::derive(seed, seeds::stream::SAMPLE, 0));
        (0..m)
            .map(|_| {
                let phi: f64 = rng.random_range(0.0..TAU);
                [phi.cos(), phi.sin()]
            })
            .collect()
    }

    pub fn k(&self) -> usize {
        self.a.len()
    }

    pub fn eval(&self, w: &[f64], x: &[f64; 2]) -> f64 {
        self.a.iter().enumerate().map(|(j, a)| a * (w[2 * j] * x[0] + w[2 * j + 1] * x[1]).max(0.0)).sum()
    }

    /// Lipschitz allowance of f(x) over a box around its centroid: each node
    /// moves by at most the Euclidean half-diagonal of its weight block.
    pub fn lipschitz_halfwidth(&self, bx: &IntervalBox) -> f64 {
        (0..self.k())
            .map(|j| {
                let hx = 0.5 * bx.intervals[2 * j].width();
                let hy = 0.5 * bx.intervals[2 * j + 1].width();
                hx.hypot(hy)
            })
            .sum()
    }
}

/// Enclosure of {f_W(x) : W ∈ bx}.
pub fn interval_eval_net(bx: &IntervalBox, net: &SphericalNet, x: &[f64; 2]) -> Interval {
    let mut s = Interval::point(0.0);
    for (j, a) in net.a.iter().enumerate() {
        let y = bx.intervals[2 * j].scale(x[0]).add(bx.intervals[2 * j + 1].scale(x[1]));
        let r = y.relu();
        s = s.add(if *a > 0.0 { r } else { r.neg() });
    }
    s
}

/// Constraint set |f_W(xᵢ) − f_{W*}(xᵢ)| < δ for every input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroSetProblem {
    pub net: SphericalNet,
    pub w_star: Vec<f64>,
    pub delta: f64,
    /// Enclosure of f_{W*}(xᵢ) widened by δ.
    pub allowed: Vec<Interval>,
}

impl ZeroSetProblem {
    pub fn new(net: SphericalNet, w_star: Vec<f64>, delta: f64) -> Result<Self> {
        if w_star.len() != 2 * net.k() {
            return Err(Error::ShapeMismatch { expected: (2 * net.k()).to_string(), got: w_star.len().to_string() });
        }
        if !(delta >= 0.0) {
            return Err(Error::domain("delta must be non-negative"));
        }
        let star = IntervalBox::from_point(&w_star);
        let d = Interval { lo: -delta, hi: delta };
        let allowed = net.inputs.iter().map(|x| interval_eval_net(&star, &net, x).add(d)).collect();
        Ok(ZeroSetProblem { net, w_star, delta, allowed })
    }

    /// Three equal weights w* with signs (−1, +1, +1), so the node terms can
    /// cancel in several ways.
    pub fn reference_k3(w: [f64; 2], inputs: Vec<[f64; 2]>, delta: f64) -> Result<Self> {
        let net = SphericalNet::new(vec![-1.0, 1.0, 1.0], inputs)?;
        ZeroSetProblem::new(net, [w, w, w].concat(), delta)
    }

    /// Pointwise check with the strict inequality.
    pub fn satisfies(&self, w: &[f64]) -> bool {
        self.max_violation(w) < self.delta
    }

    /// max_i |f_W(xᵢ) − f_{W*}(xᵢ)|.
    pub fn max_violation(&self, w: &[f64]) -> f64 {
        self.net.inputs.iter().map(|x| (self.net.eval(w, x) - self.net.eval(&self.w_star, x)).abs()).fold(0.0, f64::max)
    }
}

/// One forward-backward sweep of constraint i. Returns false if the box
/// becomes empty.
fn revise(bx: &mut IntervalBox, net: &SphericalNet, x: &[f64; 2], allowed: Interval) -> bool {
    let k = net.k();
    let mut ys = Vec::with_capacity(k);
    let mut terms = Vec::with_capacity(k);
    for j in 0..k {
        let y = bx.intervals[2 * j].scale(x[0]).add(bx.intervals[2 * j + 1].scale(x[1]));
        let r = y.relu();
        ys.push(y);
        terms.push(if net.a[j] > 0.0 { r } else { r.neg() });
    }
    let mut total = Interval::point(0.0);
    for t in &terms {
        total = total.add(*t);
    }
    let total = match total.intersect(allowed) {
        Some(s) => s,
        None => return false,
    };
    for j in 0..k {
        let mut rest = Interval::point(0.0);
        for (l, t) in terms.iter().enumerate() {
            if l != j {
                rest = rest.add(*t);
            }
        }
        let term = match terms[j].intersect(total.sub(rest)) {
            Some(t) => t,
            None => return false,
        };
        terms[j] = term;
        let r = if net.a[j] > 0.0 { term } else { term.neg() };
        // (y)₊ = r: y = r where r > 0, y ≤ 0 allowed when r can be 0.
        let pre = if r.lo > 0.0 { r } else { Interval { lo: f64::NEG_INFINITY, hi: r.hi } };
        let y = match ys[j].intersect(pre) {
            Some(y) => y,
            None => return false,
        };
        for (c, o) in [(0usize, 1usize), (1, 0)] {
            if x[c] == 0.0 {
                continue;
            }
            let other = bx.intervals[2 * j + o].scale(x[o]);
            match bx.intervals[2 * j + c].intersect(y.sub(other).div_scalar(x[c])) {
                Some(w) => bx.intervals[2 * j + c] = w,
                None => return false,
            }
        }
    }
    true
}

/// Contract the box against all constraints, repeating full sweeps until the
/// total width shrinks by less than 1%. `None` means no feasible point.
pub fn contract(bx: &IntervalBox, problem: &ZeroSetProblem) -> Option<IntervalBox> {
    let mut b = bx.clone();
    for _ in 0..100 {
        let before = b.total_width();
        for (x, allowed) in problem.net.inputs.iter().zip(&problem.allowed) {
            if !revise(&mut b, &problem.net, x, *allowed) {
                return None;
            }
        }
        if before - b.total_width() <= 0.01 * before {
            break;
        }
    }
    // Widening must never let the result leave the input box.
    for (r, o) in b.intervals.iter_mut().zip(&bx.intervals) {
        *r = r.intersect(*o)?;
    }
    Some(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaveConfig {
    pub width_cap: f64,
    /// Maximum number of boxes processed in one call.
    pub budget: usize,
}

impl Default for PaveConfig {
    fn default() -> Self {
        PaveConfig { width_cap: 0.01, budget: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paving {
    pub accepted: Vec<IntervalBox>,
    pub rejected_count: usize,
    pub undecided_count: usize,
    pub width_cap: f64,
    pub processed: usize,
    /// False when the budget ran out before the search finished.
    pub complete: bool,
}

/// Resumable search state: the paving so far and the boxes still to visit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaveState {
    pub version: u32,
    pub paving: Paving,
    pub stack: Vec<IntervalBox>,
}

impl PaveState {
    pub fn start(domain: IntervalBox, width_cap: f64) -> Self {
        PaveState {
            version: CHECKPOINT_VERSION,
            paving: Paving {
                accepted: Vec::new(),
                rejected_count: 0,
                undecided_count: 1,
                width_cap,
                processed: 0,
                complete: false,
            },
            stack: vec![domain],
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json_atomic(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s: PaveState = serde_json::from_slice(&std::fs::read(path)?)?;
        if s.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!("checkpoint version {} is not {CHECKPOINT_VERSION}", s.version)));
        }
        Ok(s)
    }
}

/// Continue a depth-first branch-and-contract search for at most `budget`
/// boxes. Boxes are contracted, dropped when empty, accepted once no wider
/// than the cap, and otherwise bisected.
pub fn pave_step(problem: &ZeroSetProblem, state: &mut PaveState, budget: usize) {
    let cap = state.paving.width_cap;
    let mut used = 0;
    while used < budget {
        let Some(bx) = state.stack.pop() else { break };
        used += 1;
        match contract(&bx, problem) {
            None => state.paving.rejected_count += 1,
            Some(c) if c.max_width() <= cap => state.paving.accepted.push(c),
            Some(c) => {
                let (lo, hi) = c.bisect();
                state.stack.push(hi);
                state.stack.push(lo);
            }
        }
    }
    state.paving.processed += used;
    state.paving.undecided_count = state.stack.len();
    state.paving.complete = state.stack.is_empty();
}

pub fn pave(problem: &ZeroSetProblem, domain: &IntervalBox, cfg: &PaveConfig) -> Result<Paving> {
    if !(cfg.width_cap > 0.0) || cfg.budget == 0 {
        return Err(Error::domain("paving needs a positive width cap and budget"));
    }
    if domain.dim() != problem.w_star.len() {
        return Err(Error::ShapeMismatch { expected: problem.w_star.len().to_string(), got: domain.dim().to_string() });
    }
    let mut state = PaveState::start(domain.clone(), cfg.width_cap);
    pave_step(problem, &mut state, cfg.budget);
    let mut paving = state.paving;
    canonicalize(&mut paving);
    Ok(paving)
}

/// Sort accepted boxes lexicographically so output does not depend on the
/// visiting order.
pub fn canonicalize(paving: &mut Paving) {
    let key = |b: &IntervalBox| b.intervals.iter().flat_map(|i| [i.lo, i.hi]).collect::<Vec<f64>>();
    paving.accepted.sort_by(|a, b| {
        key(a)
            .iter()
            .zip(key(b).iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
}

pub fn centroids(paving: &Paving) -> Result<PointCloud> {
    let first = paving.accepted.first().ok_or_else(|| Error::domain("paving has no accepted boxes"))?;
    let dim = first.dim();
    let pts = paving.accepted.iter().flat_map(|b| b.centroid()).collect();
    PointCloud::new(dim, pts)
}

/// Distance from a centroid to its box's farthest point when all widths are
/// at most the cap.
pub fn centroid_distance_bound(width_cap: f64, dim: usize) -> f64 {
    0.5 * width_cap * (dim as f64).sqrt()
}

/// Weight vector shared by the three nodes of the reference target.
pub const REFERENCE_W: [f64; 2] = [0.6, 0.8];

/// Points on the component {(u, u, w*)} of the reference zero set, along
/// u = w* + s·e with e ⊥ w*. The line meets the other components only at
/// W* = (w*, w*, w*), so the response along it crosses zero there.
pub fn reference_probe_line(w: [f64; 2], half_length: f64, m: usize) -> Result<PointCloud> {
    if m < 2 || !(half_length > 0.0) {
        return Err(Error::domain("probe line needs m >= 2 and a positive half length"));
    }
    let r = w[0].hypot(w[1]);
    let e = [-w[1] / r, w[0] / r];
    let mut pts = Vec::with_capacity(6 * m);
    for i in 0..m {
        let s = -half_length + 2.0 * half_length * i as f64 / (m - 1) as f64;
        let u = [w[0] + s * e[0], w[1] + s * e[1]];
        pts.extend_from_slice(&[u[0], u[1], u[0], u[1], w[0], w[1]]);
    }
    PointCloud::new(6, pts)
}

/// Disjoint random subsets of a centroid cloud: `n_test` points for the test
/// and `n_select` for choosing the direction.
pub fn split_cloud(cloud: &PointCloud, n_test: usize, n_select: usize, seed: u64) -> Result<(PointCloud, PointCloud)> {
    if n_test + n_select > cloud.len() || n_test == 0 || n_select == 0 {
        return Err(Error::domain(format!(
            "cannot split {} points into {n_test} test and {n_select} selection points",
            cloud.len()
        )));
    }
    let mut idx: Vec<usize> = (0..cloud.len()).collect();
    idx.shuffle(&mut seeds::rng(seeds::derive(seed, seeds::stream::SELECTION, 0)));
    Ok((cloud.select(&idx[..n_test]), cloud.select(&idx[n_test..n_test + n_select])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn k1_problem(delta: f64) -> ZeroSetProblem {
        let net = SphericalNet::new(vec![1.0], SphericalNet::random_inputs(100, 3)).unwrap();
        ZeroSetProblem::new(net, vec![0.6, 0.8], delta).unwrap()
    }

    #[test]
    fn point_box_encloses_value_tightly() {
        let p = ZeroSetProblem::reference_k3([0.6, 0.8], SphericalNet::random_inputs(10, 1), 0.0).unwrap();
        let w = [0.3, -0.2, 1.1, 0.4, -0.7, 0.9];
        for x in &p.net.inputs {
            let iv = interval_eval_net(&IntervalBox::from_point(&w), &p.net, x);
            let f = p.net.eval(&w, x);
            assert!(iv.contains(f));
            assert!(iv.width() <= 1e-14, "{iv:?}");
        }
    }

    #[test]
    fn symmetric_box_single_node_contains_zero() {
        let net = SphericalNet::new(vec![1.0], vec![[0.6, 0.8]]).unwrap();
        let iv = interval_eval_net(&IntervalBox::cube(2, -1.0, 1.0).unwrap(), &net, &[0.6, 0.8]);
        assert!(iv.contains(0.0) && iv.lo > -1e-300);
        assert!(iv.hi >= 1.4);
    }

    #[test]
    fn enclosure_holds_for_sampled_weights() {
        let p = ZeroSetProblem::reference_k3([0.6, 0.8], SphericalNet::random_inputs(5, 2), 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bx = IntervalBox::around(&[0.1, -0.3, 0.5, 0.2, -0.4, 0.7], 0.4).unwrap();
        for x in &p.net.inputs {
            let iv = interval_eval_net(&bx, &p.net, x);
            for _ in 0..2000 {
                assert!(iv.contains(p.net.eval(&bx.sample(&mut rng), x)));
            }
        }
    }

    #[test]
    fn forward_infeasible_box_is_rejected() {
        let p = k1_problem(0.01);
        let bx = IntervalBox::around(&[-1.0, -1.0], 0.05).unwrap();
        assert!(contract(&bx, &p).is_none());
    }

    #[test]
    fn target_point_survives_contraction() {
        let p = ZeroSetProblem::reference_k3([0.6, 0.8], SphericalNet::random_inputs(100, 5), 1e-16).unwrap();
        let bx = IntervalBox::from_point(&p.w_star);
        assert_eq!(contract(&bx, &p), Some(bx));
    }

    #[test]
    fn contraction_keeps_satisfying_samples() {
        let p = k1_problem(0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let c = [rng.random_range(-1.0..1.5), rng.random_range(-1.0..1.5)];
            let bx = IntervalBox::around(&c, rng.random_range(0.05..0.8)).unwrap();
            let out = contract(&bx, &p);
            if let Some(o) = &out {
                assert!(o.is_subset_of(&bx));
            }
            for _ in 0..500 {
                let w = bx.sample(&mut rng);
                if p.satisfies(&w) {
                    assert!(out.as_ref().is_some_and(|o| o.contains(&w)), "{w:?} lost from {bx:?}");
                }
            }
        }
    }

    #[test]
    fn bisection_splits_widest_lowest() {
        let bx = IntervalBox {
            intervals: vec![Interval::point(0.0), Interval { lo: 0.0, hi: 2.0 }, Interval { lo: 1.0, hi: 3.0 }],
        };
        let (a, b) = bx.bisect();
        assert_eq!(a.intervals[1], Interval { lo: 0.0, hi: 1.0 });
        assert_eq!(b.intervals[1], Interval { lo: 1.0, hi: 2.0 });
        assert_eq!(a.intervals[2], bx.intervals[2]);
    }

    #[test]
    fn k1_paving_centroids_fit() {
        let p = k1_problem(0.01);
        let dom = IntervalBox::cube(2, -2.0, 2.0).unwrap();
        let paving = pave(&p, &dom, &PaveConfig { width_cap: 0.05, budget: 100_000 }).unwrap();
        assert!(paving.complete);
        assert!(!paving.accepted.is_empty());
        for b in &paving.accepted {
            assert!(b.max_width() <= 0.05);
            let slack = p.delta + p.net.lipschitz_halfwidth(b);
            assert!(p.max_violation(&b.centroid()) <= slack);
        }
        assert!(paving.accepted.iter().any(|b| b.contains(&p.w_star)));
    }

    #[test]
    fn zero_delta_mismatch_has_no_boxes() {
        let net = SphericalNet::new(vec![1.0], SphericalNet::random_inputs(100, 3)).unwrap();
        let mut p = ZeroSetProblem::new(net, vec![0.6, 0.8], 0.0).unwrap();
        // Shift the target so no weight fits it exactly.
        p.allowed.iter_mut().for_each(|i| *i = Interval { lo: i.lo - 2.0, hi: i.hi - 2.0 });
        let paving =
            pave(&p, &IntervalBox::cube(2, -2.0, 2.0).unwrap(), &PaveConfig { width_cap: 0.05, budget: 100_000 })
                .unwrap();
        assert!(paving.complete && paving.accepted.is_empty());
    }

    #[test]
    fn budget_exhaustion_is_flagged_and_resumable() {
        let p = ZeroSetProblem::reference_k3(REFERENCE_W, SphericalNet::random_inputs(30, 2), 0.01).unwrap();
        let dom = IntervalBox::around(&p.w_star, 0.05).unwrap();
        let full = pave(&p, &dom, &PaveConfig { width_cap: 0.025, budget: 1_000_000 }).unwrap();
        assert!(full.complete && full.processed > 7);
        let mut st = PaveState::start(dom, 0.025);
        pave_step(&p, &mut st, 7);
        assert!(!st.paving.complete && st.paving.undecided_count > 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        st.save(&path).unwrap();
        let mut back = PaveState::load(&path).unwrap();
        assert_eq!(back, st);
        pave_step(&p, &mut back, usize::MAX);
        canonicalize(&mut back.paving);
        assert_eq!(back.paving.accepted, full.accepted);
        assert_eq!(back.paving.processed, full.processed);
    }

    #[test]
    fn probe_line_lies_in_zero_set() {
        let p = ZeroSetProblem::reference_k3(REFERENCE_W, SphericalNet::random_inputs(100, 1), 1e-12).unwrap();
        let line = reference_probe_line(REFERENCE_W, 0.9, 11).unwrap();
        for w in line.rows() {
            assert!(p.max_violation(w) < 1e-14);
        }
        assert_eq!(line.point(5), p.w_star.as_slice());
    }

    #[test]
    fn split_is_disjoint() {
        let c = PointCloud::new(1, (0..50).map(f64::from).collect()).unwrap();
        let (a, b) = split_cloud(&c, 30, 10, 1).unwrap();
        let mut all: Vec<f64> = a.points.iter().chain(&b.points).copied().collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        assert_eq!(all.len(), 40);
        assert!(split_cloud(&c, 45, 10, 1).is_err());
    }

    #[test]
    fn centroid_of_unit_box_at_origin() {
        let paving = Paving {
            accepted: vec![IntervalBox::cube(3, -0.5, 0.5).unwrap()],
            rejected_count: 0,
            undecided_count: 0,
            width_cap: 1.0,
            processed: 1,
            complete: true,
        };
        assert_eq!(centroids(&paving).unwrap().points, vec![0.0; 3]);
        assert!((centroid_distance_bound(0.01, 6) - 0.005 * 6f64.sqrt()).abs() < 1e-18);
    }
}
