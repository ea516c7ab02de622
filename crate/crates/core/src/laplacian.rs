//! Empirical graph Laplacian L_{n,t} applied to linear probe functions.
//!
//! For f(x) = v·x the operator is linear in v:
//! L_{n,t}f(x) = v·g(x) with g(x) = (1/n)Σⱼ K_t(x,Xⱼ)(x − Xⱼ),
//! so many directions can be scored from one kernel pass.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::PointCloud;
use crate::seeds;
use crate::vecops::{dist2, dot, norm};

/// Default cap on n for the dense matrix path.
pub const DEFAULT_MATRIX_CAP: usize = 4096;

const LANES: usize = 8;
/// Chunks of LANES terms summed plainly before compensation.
const BLOCK: usize = 16;

/// Error-free transformation a + b = s + e.
#[inline(always)]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bp = s - a;
    (s, (a - (s - bp)) + (b - bp))
}

/// Neumaier (improved Kahan) compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline(always)]
    pub fn add(&mut self, y: f64) {
        let t = self.sum + y;
        if self.sum.abs() >= y.abs() {
            self.comp += (self.sum - t) + y;
        } else {
            self.comp += (y - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Gaussian kernel K_t(x, y) = exp(−‖x − y‖²/t).
pub fn kernel(x: &[f64], y: &[f64], t: f64) -> f64 {
    (-dist2(x, y) / t).exp()
}

/// exp(x) for x ≤ 0, written so the compiler can vectorise it across lanes.
/// Relative error below 4e−16 on [−708, 0]; returns 0 below −708.
/// `mul_add` is exactly rounded whether or not the target has FMA, so the
/// result does not depend on the CPU.
#[inline(always)]
pub(crate) fn exp_neg(x: f64) -> f64 {
    const SHIFT: f64 = 6_755_399_441_055_744.0; // 1.5 · 2^52
    const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
    let xc = x.max(-708.0);
    let kd = xc * std::f64::consts::LOG2_E + SHIFT;
    let ki = kd.to_bits();
    let n = kd - SHIFT;
    let r = xc - n * LN2_HI - n * LN2_LO;
    // Taylor polynomial of degree 12 on |r| ≤ ln2/2.
    let mut p: f64 = 2.087_675_698_786_81e-9;
    p = p.mul_add(r, 2.505_210_838_544_172e-8);
    p = p.mul_add(r, 2.755_731_922_398_589e-7);
    p = p.mul_add(r, 2.755_731_922_398_589_3e-6);
    p = p.mul_add(r, 2.480_158_730_158_730_2e-5);
    p = p.mul_add(r, 1.984_126_984_126_984_1e-4);
    p = p.mul_add(r, 1.388_888_888_888_888_9e-3);
    p = p.mul_add(r, 8.333_333_333_333_333e-3);
    p = p.mul_add(r, 4.166_666_666_666_666_4e-2);
    p = p.mul_add(r, 1.666_666_666_666_666_6e-1);
    p = p.mul_add(r, 0.5);
    p = p.mul_add(r, 1.0);
    p = p.mul_add(r, 1.0);
    let s = f64::from_bits(ki.wrapping_add(1023) << 52);
    let v = p * s;
    if x < -708.0 {
        0.0
    } else {
        v
    }
}

/// Unit probe direction v of f(x) = v·x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeDirection {
    pub v: Vec<f64>,
}

impl ProbeDirection {
    /// Normalizes `v`; fails on the zero vector.
    pub fn new(v: Vec<f64>) -> Result<Self> {
        let l = norm(&v);
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::domain("probe direction must be a finite non-zero vector"));
        }
        Ok(ProbeDirection { v: v.iter().map(|x| x / l).collect() })
    }

    pub fn axis(dim: usize, k: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[k] = 1.0;
        ProbeDirection { v }
    }

    pub fn negated(&self) -> Self {
        ProbeDirection { v: self.v.iter().map(|x| -x).collect() }
    }

    /// Uniform random direction on the unit sphere.
    pub fn random(dim: usize, rng: &mut impl rand::Rng) -> Self {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            if let Ok(d) = ProbeDirection::new(v) {
                return d;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub t: f64,
    pub sigma: f64,
}

impl KernelParams {
    pub fn new(t: f64) -> Result<Self> {
        check_t(t)?;
        Ok(KernelParams { t, sigma: 0.0 })
    }
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("bandwidth t must be positive, got {t}")))
    }
}

/// Evaluation points paired with L_{n,t}f values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacianResponse {
    pub eval_points: PointCloud,
    pub values: Vec<f64>,
    pub params: KernelParams,
    pub direction: ProbeDirection,
}

/// Point cloud in coordinate-major layout for the kernel sums.
#[derive(Debug, Clone)]
pub struct PreparedCloud {
    dim: usize,
    n: usize,
    coords: Vec<Vec<f64>>,
    /// Full chunks of LANES points, laid out as [chunk][coordinate][lane].
    interleaved: Vec<f64>,
}

impl PreparedCloud {
    pub fn new(cloud: &PointCloud) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let dim = cloud.dim;
        let n = cloud.len();
        let mut coords = vec![Vec::with_capacity(n); dim];
        for row in cloud.rows() {
            for (c, x) in coords.iter_mut().zip(row) {
                c.push(*x);
            }
        }
        let chunks = n / LANES;
        let mut interleaved = Vec::with_capacity(chunks * LANES * dim);
        for c in 0..chunks {
            for col in &coords {
                interleaved.extend_from_slice(&col[c * LANES..(c + 1) * LANES]);
            }
        }
        Ok(PreparedCloud { dim, n, coords, interleaved })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// g(x) = (1/n)Σⱼ K_t(x,Xⱼ)(x − Xⱼ) with lane-wise compensated sums.
    pub fn drift(&self, x: &[f64], t: f64) -> Vec<f64> {
        match self.dim {
            2 => self.drift_fixed::<2>(x, t).to_vec(),
            3 => self.drift_fixed::<3>(x, t).to_vec(),
            4 => self.drift_fixed::<4>(x, t).to_vec(),
            6 => self.drift_fixed::<6>(x, t).to_vec(),
            _ => self.drift_dyn(x, t),
        }
    }

    fn drift_fixed<const D: usize>(&self, x: &[f64], t: f64) -> [f64; D] {
        let inv_t = 1.0 / t;
        let xs: [f64; D] = std::array::from_fn(|k| x[k]);
        // Per-lane partial sums over blocks of BLOCK chunks are folded into
        // TwoSum-compensated lane accumulators.
        let mut sum = [[0.0f64; LANES]; D];
        let mut comp = [[0.0f64; LANES]; D];
        for block in self.interleaved.chunks(BLOCK * D * LANES) {
            let mut part = [[0.0f64; LANES]; D];
            for chunk in block.chunks_exact(D * LANES) {
                let mut diff = [[0.0f64; LANES]; D];
                let mut w = [0.0f64; LANES];
                for k in 0..D {
                    let col = &chunk[k * LANES..(k + 1) * LANES];
                    for l in 0..LANES {
                        diff[k][l] = xs[k] - col[l];
                    }
                }
                for k in 0..D {
                    for l in 0..LANES {
                        w[l] += diff[k][l] * diff[k][l];
                    }
                }
                for wl in w.iter_mut() {
                    *wl = exp_neg(-*wl * inv_t);
                }
                for k in 0..D {
                    for l in 0..LANES {
                        part[k][l] += w[l] * diff[k][l];
                    }
                }
            }
            for k in 0..D {
                for l in 0..LANES {
                    let (s, e) = two_sum(sum[k][l], part[k][l]);
                    sum[k][l] = s;
                    comp[k][l] += e;
                }
            }
        }
        self.finish(&sum, &comp, &xs, inv_t)
    }

    fn finish<const D: usize>(
        &self,
        sum: &[[f64; LANES]; D],
        comp: &[[f64; LANES]; D],
        xs: &[f64; D],
        inv_t: f64,
    ) -> [f64; D] {
        let full = self.n / LANES * LANES;
        let mut out = [0.0f64; D];
        for k in 0..D {
            let mut acc = Neumaier::default();
            for l in 0..LANES {
                acc.add(sum[k][l]);
                acc.add(comp[k][l]);
            }
            for j in full..self.n {
                let d2: f64 = (0..D).map(|q| (xs[q] - self.coords[q][j]).powi(2)).sum();
                acc.add(exp_neg(-d2 * inv_t) * (xs[k] - self.coords[k][j]));
            }
            out[k] = acc.sum() / self.n as f64;
        }
        out
    }

    fn drift_dyn(&self, x: &[f64], t: f64) -> Vec<f64> {
        let inv_t = 1.0 / t;
        let mut acc = vec![Neumaier::default(); self.dim];
        let mut diff = vec![0.0; self.dim];
        for j in 0..self.n {
            let mut d2 = 0.0;
            for k in 0..self.dim {
                diff[k] = x[k] - self.coords[k][j];
                d2 += diff[k] * diff[k];
            }
            let w = exp_neg(-d2 * inv_t);
            for k in 0..self.dim {
                acc[k].add(w * diff[k]);
            }
        }
        acc.iter().map(|a| a.sum() / self.n as f64).collect()
    }

    /// L_{n,t}f(x) for f(x) = v·x.
    pub fn apply(&self, x: &[f64], v: &ProbeDirection, t: f64) -> f64 {
        let proj = self.project(v);
        self.apply_projected(x, dot(x, &v.v), &proj, t)
    }

    /// v·Xⱼ for every point.
    fn project(&self, v: &ProbeDirection) -> Vec<f64> {
        (0..self.n).map(|j| self.coords.iter().zip(&v.v).map(|(c, vk)| c[j] * vk).sum()).collect()
    }

    fn apply_projected(&self, x: &[f64], vx: f64, proj: &[f64], t: f64) -> f64 {
        match self.dim {
            2 => self.directional_fixed::<2>(x, vx, proj, t),
            3 => self.directional_fixed::<3>(x, vx, proj, t),
            4 => self.directional_fixed::<4>(x, vx, proj, t),
            6 => self.directional_fixed::<6>(x, vx, proj, t),
            _ => {
                let inv_t = 1.0 / t;
                let mut acc = Neumaier::default();
                for (j, pj) in proj.iter().enumerate() {
                    let d2: f64 = self.coords.iter().zip(x).map(|(c, xk)| (xk - c[j]).powi(2)).sum();
                    acc.add(exp_neg(-d2 * inv_t) * (vx - pj));
                }
                acc.sum() / self.n as f64
            }
        }
    }

    /// (1/n)Σⱼ K_t(x,Xⱼ)(v·x − v·Xⱼ) with the projections precomputed.
    fn directional_fixed<const D: usize>(&self, x: &[f64], vx: f64, proj: &[f64], t: f64) -> f64 {
        let inv_t = 1.0 / t;
        let xs: [f64; D] = std::array::from_fn(|k| x[k]);
        let mut sum = [0.0f64; LANES];
        let mut comp = [0.0f64; LANES];
        let blocks = self.interleaved.chunks(BLOCK * D * LANES).zip(proj.chunks(BLOCK * LANES));
        for (block, pblock) in blocks {
            let mut part = [0.0f64; LANES];
            for (chunk, pc) in block.chunks_exact(D * LANES).zip(pblock.chunks_exact(LANES)) {
                let mut w = [0.0f64; LANES];
                for k in 0..D {
                    let col = &chunk[k * LANES..(k + 1) * LANES];
                    for l in 0..LANES {
                        let dl = xs[k] - col[l];
                        w[l] += dl * dl;
                    }
                }
                for wl in w.iter_mut() {
                    *wl = exp_neg(-*wl * inv_t);
                }
                for l in 0..LANES {
                    part[l] += w[l] * (vx - pc[l]);
                }
            }
            for l in 0..LANES {
                let (s, e) = two_sum(sum[l], part[l]);
                sum[l] = s;
                comp[l] += e;
            }
        }
        let mut acc = Neumaier::default();
        for l in 0..LANES {
            acc.add(sum[l]);
            acc.add(comp[l]);
        }
        let full = self.n / LANES * LANES;
        for j in full..self.n {
            let d2: f64 = (0..D).map(|q| (xs[q] - self.coords[q][j]).powi(2)).sum();
            acc.add(exp_neg(-d2 * inv_t) * (vx - proj[j]));
        }
        acc.sum() / self.n as f64
    }

    /// Drift vectors at many evaluation points (parallel, per-point slots).
    pub fn drift_many(&self, xs: &PointCloud, t: f64) -> Vec<Vec<f64>> {
        (0..xs.len()).into_par_iter().map(|i| self.drift(xs.point(i), t)).collect()
    }

    pub fn apply_many(&self, xs: &PointCloud, v: &ProbeDirection, t: f64) -> Vec<f64> {
        let proj = self.project(v);
        (0..xs.len())
            .into_par_iter()
            .map(|i| {
                let x = xs.point(i);
                self.apply_projected(x, dot(x, &v.v), &proj, t)
            })
            .collect()
    }
}

fn check_query(cloud: &PointCloud, x: &[f64], v: &ProbeDirection) -> Result<()> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if x.len() != cloud.dim || v.v.len() != cloud.dim {
        return Err(Error::ShapeMismatch {
            expected: format!("ambient dimension {}", cloud.dim),
            got: format!("x: {}, v: {}", x.len(), v.v.len()),
        });
    }
    Ok(())
}

/// L_{n,t}f(x) = (1/n)Σⱼ K_t(x,Xⱼ)(v·x − v·Xⱼ).
pub fn graph_laplacian_apply(cloud: &PointCloud, x: &[f64], v: &ProbeDirection, t: f64) -> Result<f64> {
    check_t(t)?;
    check_query(cloud, x, v)?;
    Ok(PreparedCloud::new(cloud)?.apply(x, v, t))
}

/// Response along a set of evaluation points.
pub fn laplacian_response(
    cloud: &PointCloud,
    eval_points: &PointCloud,
    v: &ProbeDirection,
    t: f64,
) -> Result<LaplacianResponse> {
    check_t(t)?;
    if eval_points.dim != cloud.dim {
        return Err(Error::ShapeMismatch { expected: cloud.dim.to_string(), got: eval_points.dim.to_string() });
    }
    check_query(cloud, &vec![0.0; cloud.dim], v)?;
    let prepared = PreparedCloud::new(cloud)?;
    Ok(LaplacianResponse {
        eval_points: eval_points.clone(),
        values: prepared.apply_many(eval_points, v, t),
        params: KernelParams::new(t)?,
        direction: v.clone(),
    })
}

/// Dense weights Wᵢⱼ = K_t(Xᵢ,Xⱼ)/n (row-major) and degrees Dᵢ = Σⱼ Wᵢⱼ.
pub fn graph_laplacian_matrix(cloud: &PointCloud, t: f64, cap: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    check_t(t)?;
    let n = cloud.len();
    if n == 0 {
        return Err(Error::EmptyCloud);
    }
    if n > cap {
        return Err(Error::MatrixTooLarge { n, cap });
    }
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let k = kernel(cloud.point(i), cloud.point(j), t) / n as f64;
            w[i * n + j] = k;
            w[j * n + i] = k;
        }
    }
    let degrees = (0..n)
        .map(|i| {
            let mut acc = Neumaier::default();
            w[i * n..(i + 1) * n].iter().for_each(|x| acc.add(*x));
            acc.sum()
        })
        .collect();
    Ok((w, degrees))
}

/// (D − W)·y for the dense matrices of [`graph_laplacian_matrix`].
pub fn matrix_apply(weights: &[f64], degrees: &[f64], y: &[f64]) -> Vec<f64> {
    let n = degrees.len();
    (0..n)
        .map(|i| {
            let mut acc = Neumaier::default();
            acc.add(degrees[i] * y[i]);
            for j in 0..n {
                acc.add(-weights[i * n + j] * y[j]);
            }
            acc.sum()
        })
        .collect()
}

/// L_{n,t,ε}f(x) = (1/n)Σⱼ K_t(x,Xⱼ+εⱼ)(f(x) − f(Xⱼ+εⱼ)) for one noise realization.
pub fn noisy_laplacian_apply(
    cloud: &PointCloud,
    noise_draws: &[f64],
    x: &[f64],
    v: &ProbeDirection,
    t: f64,
) -> Result<f64> {
    if noise_draws.len() != cloud.points.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} x {} noise draws", cloud.len(), cloud.dim),
            got: noise_draws.len().to_string(),
        });
    }
    let mut noisy = cloud.clone();
    for (p, e) in noisy.points.iter_mut().zip(noise_draws) {
        *p += e;
    }
    graph_laplacian_apply(&noisy, x, v, t)
}

/// Pick the direction among `n_candidates` uniform random unit vectors that
/// maximizes max_m |L_{n,t}f(X_m)| over `candidate_points`, with the operator
/// built from `cloud_subsample`. Ties go to the earliest candidate.
pub fn select_direction(
    cloud_subsample: &PointCloud,
    candidate_points: &PointCloud,
    t: f64,
    n_candidates: usize,
    seed: u64,
) -> Result<ProbeDirection> {
    if n_candidates == 0 {
        return Err(Error::domain("need at least one candidate direction"));
    }
    let mut rng = seeds::rng(seeds::derive(seed, seeds::stream::DIRECTION, 0));
    let candidates: Vec<ProbeDirection> =
        (0..n_candidates).map(|_| ProbeDirection::random(cloud_subsample.dim, &mut rng)).collect();
    select_from(cloud_subsample, candidate_points, t, &candidates)
}

/// Same as [`select_direction`] with explicit candidates.
pub fn select_from(
    cloud_subsample: &PointCloud,
    candidate_points: &PointCloud,
    t: f64,
    candidates: &[ProbeDirection],
) -> Result<ProbeDirection> {
    check_t(t)?;
    if candidates.is_empty() {
        return Err(Error::domain("need at least one candidate direction"));
    }
    if candidates.len() == 1 {
        return Ok(candidates[0].clone());
    }
    if candidate_points.is_empty() {
        return Err(Error::EmptyBall);
    }
    let prepared = PreparedCloud::new(cloud_subsample)?;
    let drifts = prepared.drift_many(candidate_points, t);
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, c) in candidates.iter().enumerate() {
        let score = drifts.iter().map(|g| dot(g, &c.v).abs()).fold(0.0, f64::max);
        if score > best_score {
            best_score = score;
            best = i;
        }
    }
    Ok(candidates[best].clone())
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub draws: usize,
}

const NOISE_BLOCK: usize = 1000;

/// Mean of L_{n,t,ε}f(x) over `draws` independent noise realizations
/// εⱼ ~ N(0, σ²I), one estimate per evaluation point. Every realization is
/// shared by all evaluation points.
pub fn noisy_monte_carlo(
    cloud: &PointCloud,
    xs: &PointCloud,
    v: &ProbeDirection,
    t: f64,
    sigma: f64,
    draws: usize,
    seed: u64,
) -> Result<Vec<MeanEstimate>> {
    check_t(t)?;
    if !(sigma >= 0.0) || draws < 2 {
        return Err(Error::domain("noise Monte Carlo needs sigma >= 0 and at least two draws"));
    }
    if xs.dim != cloud.dim {
        return Err(Error::ShapeMismatch { expected: cloud.dim.to_string(), got: xs.dim.to_string() });
    }
    check_query(cloud, &vec![0.0; cloud.dim], v)?;
    let normal = rand_distr::Normal::new(0.0, sigma).map_err(|e| Error::domain(e.to_string()))?;
    let blocks = draws.div_ceil(NOISE_BLOCK);
    let m = xs.len();
    let n = cloud.len();
    let dim = cloud.dim;
    // Per block: sums and sums of squares for every x.
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = seeds::rng(seeds::derive(seed, seeds::stream::NOISE, b as u64));
            let count = NOISE_BLOCK.min(draws - b * NOISE_BLOCK);
            let mut s1 = vec![0.0; m];
            let mut s2 = vec![0.0; m];
            let mut noisy = cloud.points.clone();
            for _ in 0..count {
                for (p, c) in noisy.iter_mut().zip(&cloud.points) {
                    *p = c + normal.sample(&mut rng);
                }
                for (k, x) in xs.rows().enumerate() {
                    let mut acc = Neumaier::default();
                    for j in 0..n {
                        let y = &noisy[j * dim..(j + 1) * dim];
                        acc.add(kernel(x, y, t) * (dot(&v.v, x) - dot(&v.v, y)));
                    }
                    let val = acc.sum() / n as f64;
                    s1[k] += val;
                    s2[k] += val * val;
                }
            }
            (s1, s2)
        })
        .collect();
    let mut s1 = vec![0.0; m];
    let mut s2 = vec![0.0; m];
    for (a, b) in &partial {
        for k in 0..m {
            s1[k] += a[k];
            s2[k] += b[k];
        }
    }
    let nd = draws as f64;
    Ok((0..m)
        .map(|k| {
            let mean = s1[k] / nd;
            let var = ((s2[k] - nd * mean * mean) / (nd - 1.0)).max(0.0);
            MeanEstimate { mean, stderr: (var / nd).sqrt(), draws }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, dim: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(dim, (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn reference(cloud: &PointCloud, x: &[f64], v: &[f64], t: f64) -> f64 {
        let s: f64 = cloud.rows().map(|y| kernel(x, y, t) * (dot(v, x) - dot(v, y))).sum();
        s / cloud.len() as f64
    }

    #[test]
    fn exp_neg_accuracy() {
        let mut worst = 0.0f64;
        let mut x = 0.0f64;
        while x > -700.0 {
            let e = x.exp();
            worst = worst.max(((exp_neg(x) - e) / e).abs());
            x -= 0.001_37;
        }
        assert!(worst < 4e-16, "{worst}");
        assert_eq!(exp_neg(0.0), 1.0);
        assert_eq!(exp_neg(-1e6), 0.0);
        assert_eq!(exp_neg(f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn kernel_basics() {
        let x = [0.1, 0.2, 0.3];
        assert_eq!(kernel(&x, &x, 0.5), 1.0);
        let y = [0.1 + 0.5f64.sqrt(), 0.2, 0.3];
        assert!((kernel(&x, &y, 0.5) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(kernel(&x, &y, 0.3), kernel(&y, &x, 0.3));
    }

    #[test]
    fn apply_matches_reference_all_dims() {
        for dim in [2, 3, 4, 5, 6] {
            let cloud = random_cloud(1001, dim, dim as u64);
            let x: Vec<f64> = (0..dim).map(|k| 0.1 * k as f64).collect();
            let v = ProbeDirection::new((0..dim).map(|k| 1.0 + k as f64).collect()).unwrap();
            let a = graph_laplacian_apply(&cloud, &x, &v, 0.3).unwrap();
            let b = reference(&cloud, &x, &v.v, 0.3);
            assert!((a - b).abs() < 1e-14, "dim {dim}: {a} vs {b}");
        }
    }

    #[test]
    fn trivial_cases() {
        let x = [0.3, -0.2, 0.5];
        let v = ProbeDirection::new(vec![1.0, 2.0, -1.0]).unwrap();
        let same = PointCloud::from_rows(&vec![x.to_vec(); 5]).unwrap();
        assert_eq!(graph_laplacian_apply(&same, &x, &v, 0.1).unwrap(), 0.0);
        let y = [1.0, 0.0, 0.1];
        let one = PointCloud::from_rows(&[y.to_vec()]).unwrap();
        let expect = kernel(&x, &y, 0.7) * (dot(&v.v, &x) - dot(&v.v, &y));
        assert!((graph_laplacian_apply(&one, &x, &v, 0.7).unwrap() - expect).abs() < 1e-16);
        let h = [0.2, 0.1, -0.3];
        let pair = PointCloud::from_rows(&[
            x.iter().zip(&h).map(|(a, b)| a + b).collect(),
            x.iter().zip(&h).map(|(a, b)| a - b).collect(),
        ])
        .unwrap();
        assert!(graph_laplacian_apply(&pair, &x, &v, 0.4).unwrap().abs() < 1e-16);
        let empty = PointCloud::new(3, vec![]).unwrap();
        assert!(matches!(graph_laplacian_apply(&empty, &x, &v, 0.1), Err(Error::EmptyCloud)));
    }

    #[test]
    fn matrix_path_agrees_with_apply() {
        let cloud = random_cloud(300, 3, 4);
        let (w, deg) = graph_laplacian_matrix(&cloud, 0.2, DEFAULT_MATRIX_CAP).unwrap();
        let n = cloud.len();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(w[i * n + j], w[j * n + i]);
            }
        }
        let ones = vec![1.0; n];
        assert!(matrix_apply(&w, &deg, &ones).iter().all(|r| r.abs() < 1e-12));
        let v = ProbeDirection::new(vec![0.3, -0.4, 0.5]).unwrap();
        let y: Vec<f64> = cloud.rows().map(|r| dot(&v.v, r)).collect();
        let lap = matrix_apply(&w, &deg, &y);
        let prepared = PreparedCloud::new(&cloud).unwrap();
        for i in (0..n).step_by(30) {
            assert!((lap[i] - prepared.apply(cloud.point(i), &v, 0.2)).abs() < 1e-12);
        }
        let two = PointCloud::from_rows(&[vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let (w2, d2) = graph_laplacian_matrix(&two, 1.0, 10).unwrap();
        assert_eq!(w2, vec![0.5; 4]);
        assert_eq!(d2, vec![1.0, 1.0]);
        assert!(matches!(graph_laplacian_matrix(&cloud, 0.2, 10), Err(Error::MatrixTooLarge { .. })));
    }

    #[test]
    fn noisy_operator_zero_noise() {
        let cloud = random_cloud(50, 3, 8);
        let v = ProbeDirection::axis(3, 2);
        let x = [0.1, 0.1, 0.1];
        let zero = vec![0.0; 150];
        assert_eq!(
            noisy_laplacian_apply(&cloud, &zero, &x, &v, 0.5).unwrap(),
            graph_laplacian_apply(&cloud, &x, &v, 0.5).unwrap()
        );
        assert!(noisy_laplacian_apply(&cloud, &zero[..10], &x, &v, 0.5).is_err());
    }

    #[test]
    fn monte_carlo_without_noise_is_exact() {
        let cloud = random_cloud(40, 3, 9);
        let xs = random_cloud(3, 3, 10);
        let v = ProbeDirection::axis(3, 0);
        let est = noisy_monte_carlo(&cloud, &xs, &v, 0.5, 0.0, 10, 1).unwrap();
        for (e, x) in est.iter().zip(xs.rows()) {
            let direct = graph_laplacian_apply(&cloud, x, &v, 0.5).unwrap();
            assert!((e.mean - direct).abs() <= 1e-14 * direct.abs());
            assert!(e.stderr <= 1e-7 * direct.abs(), "{e:?}");
        }
    }

    #[test]
    fn linear_in_direction() {
        let cloud = random_cloud(400, 3, 9);
        let x = [0.2, -0.1, 0.0];
        let p = PreparedCloud::new(&cloud).unwrap();
        let v1 = ProbeDirection::axis(3, 0);
        let v2 = ProbeDirection::axis(3, 1);
        let v12 = ProbeDirection::new(vec![1.0, 1.0, 0.0]).unwrap();
        let lhs = p.apply(&x, &v12, 0.3) * 2f64.sqrt();
        let rhs = p.apply(&x, &v1, 0.3) + p.apply(&x, &v2, 0.3);
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn selection_edge_cases() {
        let cloud = random_cloud(200, 3, 1);
        let pts = random_cloud(10, 3, 2);
        let v = ProbeDirection::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(select_from(&cloud, &pts, 0.3, std::slice::from_ref(&v)).unwrap(), v);
        let chosen = select_from(&cloud, &pts, 0.3, &[v.clone(), v.negated()]).unwrap();
        assert!(chosen == v || chosen == v.negated());
        assert!(select_direction(&cloud, &pts, 0.3, 0, 1).is_err());
        let a = select_direction(&cloud, &pts, 0.3, 16, 5).unwrap();
        let b = select_direction(&cloud, &pts, 0.3, 16, 5).unwrap();
        assert_eq!(a, b);
    }
}
