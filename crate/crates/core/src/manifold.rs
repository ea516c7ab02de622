//! Synthetic scenes: unions of flat and curved pieces, uniform sampling,
//! probe curves and Gaussian ambient noise.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_adaptive, GaussLegendre};
use crate::seeds;
use crate::vecops::{dot, norm, sub};

/// Radius of the chart ball on which the curvature constant of a curved piece
/// is certified.
pub const DEFAULT_REGULARITY_RADIUS: f64 = 0.25;

/// Axis-aligned box in chart coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ChartBox {
    pub fn symmetric(half_widths: &[f64]) -> Self {
        ChartBox { lo: half_widths.iter().map(|h| -h).collect(), hi: half_widths.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    fn is_bounded(&self) -> bool {
        self.lo.iter().zip(&self.hi).all(|(l, h)| l.is_finite() && h.is_finite() && h > l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PieceKind {
    Flat,
    /// Graph u ↦ anchor + Σ u_k frame_k + height·|u|²·normal.
    Curved {
        height: f64,
        certified_l: f64,
    },
}

/// One d-dimensional piece Ωᵢ of the union, given by a chart over its tangent
/// plane at `anchor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldPiece {
    pub kind: PieceKind,
    pub ambient_dim: usize,
    pub intrinsic_dim: usize,
    pub anchor: Vec<f64>,
    /// Orthonormal tangent basis at the anchor, `intrinsic_dim` vectors.
    pub frame: Vec<Vec<f64>>,
    /// Unit normal spanning, together with the frame, the space in which the
    /// piece bends. Also used as the sign convention of `implicit`.
    pub normal: Vec<f64>,
    pub extent: ChartBox,
}

impl ManifoldPiece {
    pub fn flat(anchor: Vec<f64>, frame: Vec<Vec<f64>>, normal: Vec<f64>, extent: ChartBox) -> Result<Self> {
        let piece = ManifoldPiece {
            kind: PieceKind::Flat,
            ambient_dim: anchor.len(),
            intrinsic_dim: frame.len(),
            anchor,
            frame,
            normal,
            extent,
        };
        piece.validate()?;
        Ok(piece)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.ambient_dim;
        let d = self.intrinsic_dim;
        if d == 0 || d >= n {
            return Err(Error::domain(format!("need 0 < d < N, got d = {d}, N = {n}")));
        }
        if self.frame.len() != d || self.extent.dim() != d || self.extent.hi.len() != d {
            return Err(Error::ShapeMismatch {
                expected: format!("{d} frame vectors and chart box dims"),
                got: format!("{} / {}", self.frame.len(), self.extent.dim()),
            });
        }
        let mut basis: Vec<&Vec<f64>> = self.frame.iter().collect();
        basis.push(&self.normal);
        for (i, a) in basis.iter().enumerate() {
            if a.len() != n {
                return Err(Error::ShapeMismatch { expected: n.to_string(), got: a.len().to_string() });
            }
            for (j, b) in basis.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                if (dot(a, b) - target).abs() > 1e-12 {
                    return Err(Error::domain("frame and normal must be orthonormal to 1e-12"));
                }
            }
        }
        if !self.extent.is_bounded() {
            return Err(Error::domain("piece extent must be a bounded, non-degenerate box"));
        }
        Ok(())
    }

    pub fn height(&self) -> f64 {
        match self.kind {
            PieceKind::Flat => 0.0,
            PieceKind::Curved { height, .. } => height,
        }
    }

    /// Chart map α(u).
    pub fn embed(&self, u: &[f64]) -> Vec<f64> {
        let mut y = self.anchor.clone();
        for (uk, fk) in u.iter().zip(&self.frame) {
            for (yi, fi) in y.iter_mut().zip(fk) {
                *yi += uk * fi;
            }
        }
        let c = self.height();
        if c != 0.0 {
            let h = c * dot(u, u);
            for (yi, ni) in y.iter_mut().zip(&self.normal) {
                *yi += h * ni;
            }
        }
        y
    }

    /// Chart coordinates of the tangent-plane projection of `y`.
    pub fn chart_coords(&self, y: &[f64]) -> Vec<f64> {
        let w = sub(y, &self.anchor);
        self.frame.iter().map(|f| dot(&w, f)).collect()
    }

    /// Volume factor V(Dα)(u) = √(1 + 4c²|u|²).
    pub fn volume_factor(&self, u: &[f64]) -> f64 {
        let c = self.height();
        (1.0 + 4.0 * c * c * dot(u, u)).sqrt()
    }

    /// Distance from `y` to the surface point above its chart projection.
    /// Zero (to rounding) exactly when `y` lies on the unbounded surface.
    pub fn residual(&self, y: &[f64]) -> f64 {
        let u = self.chart_coords(y);
        norm(&sub(y, &self.embed(&u)))
    }

    /// Signed implicit function (y − anchor)·normal − c|u(y)|²; its zero set
    /// within the span of frame and normal is the surface.
    pub fn implicit(&self, y: &[f64]) -> f64 {
        let w = sub(y, &self.anchor);
        let u = self.chart_coords(y);
        dot(&w, &self.normal) - self.height() * dot(&u, &u)
    }

    /// Unit normal of the surface at chart point u (within the bending span).
    pub fn normal_at(&self, u: &[f64]) -> Vec<f64> {
        let c = self.height();
        let mut nrm = self.normal.clone();
        for (uk, fk) in u.iter().zip(&self.frame) {
            for (ni, fi) in nrm.iter_mut().zip(fk) {
                *ni -= 2.0 * c * uk * fi;
            }
        }
        let l = norm(&nrm);
        nrm.iter().map(|x| x / l).collect()
    }

    /// Orthonormal tangent basis at chart point u.
    pub fn tangent_basis(&self, u: &[f64]) -> Vec<Vec<f64>> {
        let c = self.height();
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(self.intrinsic_dim);
        for (k, fk) in self.frame.iter().enumerate() {
            let mut t: Vec<f64> = fk.iter().zip(&self.normal).map(|(f, n)| f + 2.0 * c * u[k] * n).collect();
            for b in &basis {
                let p = dot(&t, b);
                for (ti, bi) in t.iter_mut().zip(b) {
                    *ti -= p * bi;
                }
            }
            let l = norm(&t);
            t.iter_mut().for_each(|x| *x /= l);
            basis.push(t);
        }
        basis
    }

    /// Volume |Ωᵢ| = ∫ V(Dα) over the chart box.
    pub fn area(&self) -> f64 {
        if self.height() == 0.0 {
            return self.extent.volume();
        }
        let rule = GaussLegendre::new(8);
        let axes: Vec<(Vec<f64>, Vec<f64>)> =
            (0..self.intrinsic_dim).map(|k| rule.composite(self.extent.lo[k], self.extent.hi[k], 24)).collect();
        tensor_sum(&axes, &mut |u| self.volume_factor(u))
    }

    /// Supremum of V(Dα) over the chart box, by grid search including corners.
    pub fn volume_factor_sup(&self) -> f64 {
        if self.height() == 0.0 {
            return 1.0;
        }
        let steps = 16usize;
        let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..self.intrinsic_dim)
            .map(|k| {
                let (lo, hi) = (self.extent.lo[k], self.extent.hi[k]);
                let pts = (0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64).collect();
                (pts, vec![1.0; steps + 1])
            })
            .collect();
        let mut best = 0.0f64;
        tensor_visit(&axes, &mut |u, _| best = best.max(self.volume_factor(u)));
        best
    }

    /// Draw one chart point uniformly with respect to the surface measure.
    pub fn sample_chart(&self, rng: &mut ChaCha8Rng, vmax: f64) -> Vec<f64> {
        loop {
            let u: Vec<f64> =
                (0..self.intrinsic_dim).map(|k| rng.random_range(self.extent.lo[k]..self.extent.hi[k])).collect();
            if self.height() == 0.0 || rng.random::<f64>() * vmax <= self.volume_factor(&u) {
                return u;
            }
        }
    }
}

/// Visit every node of a tensor grid with its product weight.
pub(crate) fn tensor_visit(axes: &[(Vec<f64>, Vec<f64>)], f: &mut impl FnMut(&[f64], f64)) {
    let d = axes.len();
    let mut idx = vec![0usize; d];
    let mut u = vec![0.0; d];
    loop {
        let mut w = 1.0;
        for k in 0..d {
            u[k] = axes[k].0[idx[k]];
            w *= axes[k].1[idx[k]];
        }
        f(&u, w);
        let mut k = 0;
        loop {
            if k == d {
                return;
            }
            idx[k] += 1;
            if idx[k] < axes[k].0.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

pub(crate) fn tensor_sum(axes: &[(Vec<f64>, Vec<f64>)], f: &mut impl FnMut(&[f64]) -> f64) -> f64 {
    let mut acc = crate::laplacian::Neumaier::default();
    tensor_visit(axes, &mut |u, w| acc.add(w * f(u)));
    acc.sum()
}

/// Certified regularity constant of the graph c|u|² on the chart ball of
/// radius `rho`: bounds both ‖y − π(y)‖/‖x − π(y)‖² and |V − 1|/‖x − π(y)‖².
pub fn certified_l(c: f64, rho: f64) -> f64 {
    let c = c.abs();
    let cr = c * rho;
    assert!(2.0 * cr < std::f64::consts::FRAC_PI_2 && cr < 1.0, "regularity radius too large");
    c.max(2.0 * c * c / (2.0 * cr).cos()) / (1.0 - cr * cr)
}

/// Height c whose certified constant equals `l` on radius `rho` (bisection).
pub fn height_for_l(l: f64, rho: f64) -> Result<f64> {
    if l <= 0.0 {
        return Err(Error::domain("regularity constant L must be positive"));
    }
    let mut lo = 0.0;
    let mut hi = l;
    if 2.0 * hi * rho >= std::f64::consts::FRAC_PI_2 || hi * rho >= 1.0 {
        return Err(Error::domain("L too large for the regularity radius"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if certified_l(mid, rho) > l {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum PieceShape {
    Flat,
    Curved { l: f64 },
}

/// How chart extents of an intersection scene are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "extent", rename_all = "snake_case")]
pub enum ExtentSpec {
    /// Every piece uses the symmetric chart box [−h, h]^d.
    ChartBox { half_width: f64 },
    /// Each flat piece is the part of its plane inside the ambient cube
    /// [−a, a]^N (exact for the axis-aligned construction used here).
    AmbientCube { half_width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionMeta {
    pub x0: Vec<f64>,
    pub theta: f64,
    pub pieces: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMeta {
    pub piece: usize,
    /// A point of ∂Ωᵢ.
    pub point: Vec<f64>,
    /// Outward unit normal of ∂Ωᵢ within the piece.
    pub outward_normal: Vec<f64>,
}

/// Union Ω = ∪Ωᵢ with mixture weights; the density on piece i is wᵢ/|Ωᵢ|.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub pieces: Vec<ManifoldPiece>,
    pub weights: Vec<f64>,
    pub intersection: Option<IntersectionMeta>,
    pub boundary: Option<BoundaryMeta>,
}

impl Scene {
    /// Scene with weights proportional to area, i.e. uniform on the union.
    pub fn uniform(pieces: Vec<ManifoldPiece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::domain("scene needs at least one piece"));
        }
        let n = pieces[0].ambient_dim;
        for p in &pieces {
            p.validate()?;
            if p.ambient_dim != n {
                return Err(Error::domain("all pieces must share the ambient dimension"));
            }
        }
        let areas: Vec<f64> = pieces.iter().map(|p| p.area()).collect();
        let total: f64 = areas.iter().sum();
        Ok(Scene { pieces, weights: areas.iter().map(|a| a / total).collect(), intersection: None, boundary: None })
    }

    pub fn ambient_dim(&self) -> usize {
        self.pieces[0].ambient_dim
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.pieces[0].intrinsic_dim
    }

    /// Density p on piece i.
    pub fn density(&self, i: usize) -> f64 {
        self.weights[i] / self.pieces[i].area()
    }

    /// Single flat piece [−h, h]^d in ℝ^N spanned by the first d axes.
    pub fn flat_plane(ambient_dim: usize, d: usize, half_width: f64) -> Result<Self> {
        if d == 0 || d >= ambient_dim {
            return Err(Error::domain(format!("need 0 < d < N, got d = {d}, N = {ambient_dim}")));
        }
        let frame = (0..d).map(|k| unit(ambient_dim, k)).collect();
        let piece = ManifoldPiece::flat(
            vec![0.0; ambient_dim],
            frame,
            unit(ambient_dim, d),
            ChartBox::symmetric(&vec![half_width; d]),
        )?;
        Scene::uniform(vec![piece])
    }

    /// Flat half-space piece: chart box [−h, 0] × [−h, h]^{d−1}, so the
    /// boundary ∂Ω is the plane u₁ = 0 through the origin with outward normal e₁.
    pub fn half_plane(ambient_dim: usize, d: usize, half_width: f64) -> Result<Self> {
        let mut scene = Scene::flat_plane(ambient_dim, d, half_width)?;
        scene.pieces[0].extent.hi[0] = 0.0;
        scene = Scene::uniform(scene.pieces)?;
        scene.boundary =
            Some(BoundaryMeta { piece: 0, point: vec![0.0; ambient_dim], outward_normal: unit(ambient_dim, 0) });
        Ok(scene)
    }
}

fn unit(n: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

/// Two d-dimensional pieces in ℝ^N meeting along span{e₁,…,e_{d−1}} through
/// the origin x₀ with dihedral angle `theta`.
///
/// Piece 0 spans e₁..e_d; piece 1 replaces e_d by cosθ e_d + sinθ e_{d+1}.
/// Curved pieces bend along their normals with height chosen so that the
/// certified regularity constant equals `l`.
pub fn make_intersection_scene(
    ambient_dim: usize,
    d: usize,
    theta: f64,
    shape: PieceShape,
    extent: &ExtentSpec,
) -> Result<Scene> {
    if !(theta > 0.0 && theta <= std::f64::consts::FRAC_PI_2 + 1e-15) {
        return Err(Error::domain(format!(
            "intersection angle must lie in (0, pi/2], got {theta}; tangent pieces are one manifold"
        )));
    }
    if d == 0 || d >= ambient_dim {
        return Err(Error::domain(format!("need 0 < d < N, got d = {d}, N = {ambient_dim}")));
    }
    let n = ambient_dim;
    let (s, c) = theta.sin_cos();
    let across = |rot: bool| -> Vec<f64> {
        let mut v = vec![0.0; n];
        if rot {
            v[d - 1] = c;
            v[d] = s;
        } else {
            v[d - 1] = 1.0;
        }
        v
    };
    let normal = |rot: bool| -> Vec<f64> {
        let mut v = vec![0.0; n];
        if rot {
            v[d - 1] = -s;
            v[d] = c;
        } else {
            v[d] = 1.0;
        }
        v
    };
    let mut pieces = Vec::with_capacity(2);
    for rot in [false, true] {
        let mut frame: Vec<Vec<f64>> = (0..d - 1).map(|k| unit(n, k)).collect();
        frame.push(across(rot));
        let half: Vec<f64> = match extent {
            ExtentSpec::ChartBox { half_width } => vec![*half_width; d],
            ExtentSpec::AmbientCube { half_width } => {
                let mut h = vec![*half_width; d];
                if rot {
                    h[d - 1] = half_width / c.abs().max(s.abs());
                }
                h
            }
        };
        let mut piece = ManifoldPiece::flat(vec![0.0; n], frame, normal(rot), ChartBox::symmetric(&half))?;
        if let PieceShape::Curved { l } = shape {
            let height = height_for_l(l, DEFAULT_REGULARITY_RADIUS)?;
            piece.kind = PieceKind::Curved { height, certified_l: l };
        }
        pieces.push(piece);
    }
    let mut scene = Scene::uniform(pieces)?;
    scene.intersection = Some(IntersectionMeta { x0: vec![0.0; n], theta, pieces: vec![0, 1] });
    Ok(scene)
}

/// n points in ℝ^N stored row-major, with optional piece labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub dim: usize,
    pub points: Vec<f64>,
    pub labels: Option<Vec<u32>>,
    pub seed: Option<u64>,
}

impl PointCloud {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || !points.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch {
                expected: format!("a multiple of {dim} coordinates"),
                got: points.len().to_string(),
            });
        }
        Ok(PointCloud { dim, points, labels: None, seed: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).ok_or(Error::EmptyCloud)?;
        let mut points = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::ShapeMismatch { expected: dim.to_string(), got: r.len().to_string() });
            }
            points.extend_from_slice(r);
        }
        PointCloud::new(dim, points)
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// Sub-cloud with the given row indices (labels carried along).
    pub fn select(&self, idx: &[usize]) -> PointCloud {
        let mut points = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            points.extend_from_slice(self.point(i));
        }
        PointCloud {
            dim: self.dim,
            points,
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            seed: self.seed,
        }
    }

    /// Concatenate clouds of equal dimension.
    pub fn concat(parts: &[PointCloud]) -> Result<PointCloud> {
        let dim = parts.first().ok_or(Error::EmptyCloud)?.dim;
        let mut points = Vec::new();
        let mut labels = Some(Vec::new());
        for p in parts {
            if p.dim != dim {
                return Err(Error::ShapeMismatch { expected: dim.to_string(), got: p.dim.to_string() });
            }
            points.extend_from_slice(&p.points);
            match (&mut labels, &p.labels) {
                (Some(acc), Some(l)) => acc.extend_from_slice(l),
                _ => labels = None,
            }
        }
        Ok(PointCloud { dim, points, labels, seed: parts[0].seed })
    }
}

/// Draw `counts[i]` points uniformly from piece i.
pub fn sample_uniform(scene: &Scene, counts: &[usize], seed: u64) -> Result<PointCloud> {
    if counts.len() != scene.pieces.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} per-piece counts", scene.pieces.len()),
            got: counts.len().to_string(),
        });
    }
    let n_dim = scene.ambient_dim();
    let total: usize = counts.iter().sum();
    let mut points = Vec::with_capacity(total * n_dim);
    let mut labels = Vec::with_capacity(total);
    for (i, (piece, &count)) in scene.pieces.iter().zip(counts).enumerate() {
        if !piece.extent.is_bounded() {
            return Err(Error::domain("cannot sample an unbounded extent"));
        }
        let mut rng = seeds::rng(seeds::derive(seed, seeds::stream::SAMPLE, i as u64));
        let vmax = piece.volume_factor_sup();
        for _ in 0..count {
            let u = piece.sample_chart(&mut rng, vmax);
            points.extend(piece.embed(&u));
            labels.push(i as u32);
        }
    }
    Ok(PointCloud { dim: n_dim, points, labels: Some(labels), seed: Some(seed) })
}

/// Split n draws across pieces by the scene's mixture weights (multinomial).
pub fn mixture_counts(scene: &Scene, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = seeds::rng(seeds::derive(seed, seeds::stream::SAMPLE, u64::MAX));
    let mut counts = vec![0usize; scene.pieces.len()];
    let cum: Vec<f64> = scene
        .weights
        .iter()
        .scan(0.0, |s, w| {
            *s += w;
            Some(*s)
        })
        .collect();
    let total = *cum.last().unwrap_or(&1.0);
    for _ in 0..n {
        let x = rng.random::<f64>() * total;
        let k = cum.iter().position(|c| x < *c).unwrap_or(counts.len() - 1);
        counts[k] += 1;
    }
    counts
}

/// n i.i.d. draws from the scene's density on the union.
pub fn sample_mixture(scene: &Scene, n: usize, seed: u64) -> Result<PointCloud> {
    let counts = mixture_counts(scene, n, seed);
    sample_uniform(scene, &counts, seed)
}

/// Add isotropic N(0, σ²I) noise to every point; labels are preserved.
pub fn add_noise(cloud: &PointCloud, sigma: f64, seed: u64) -> Result<PointCloud> {
    if !(sigma >= 0.0) {
        return Err(Error::domain("noise sigma must be non-negative"));
    }
    let mut out = cloud.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let draws = noise_draws(cloud.len(), cloud.dim, sigma, seed)?;
    for (p, e) in out.points.iter_mut().zip(&draws) {
        *p += e;
    }
    Ok(out)
}

/// n × N matrix (row-major) of i.i.d. N(0, σ²) draws.
pub fn noise_draws(n: usize, dim: usize, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::domain(e.to_string()))?;
    let mut rng = seeds::rng(seeds::derive(seed, seeds::stream::NOISE, 0));
    Ok((0..n * dim).map(|_| normal.sample(&mut rng)).collect())
}

/// Ordered points on one piece along a chart line, uniformly spaced in arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeCurve {
    pub piece: usize,
    pub points: PointCloud,
    /// Arc-length parameter of each point, measured from the `through` point.
    pub arc: Vec<f64>,
    /// Arc parameter where the curve crosses the other piece.
    pub crossing_arc: f64,
    pub crossing_point: Vec<f64>,
}

/// Probe curve on `piece` through `through` along chart direction `dir`,
/// spanning arc lengths [−half_length, half_length] with m points.
///
/// The crossing with the other designated intersection piece is located by
/// bisection on that piece's implicit function.
pub fn make_probe_curve(
    scene: &Scene,
    piece: usize,
    through: &[f64],
    dir: &[f64],
    half_length: f64,
    m: usize,
) -> Result<ProbeCurve> {
    let p = scene.pieces.get(piece).ok_or_else(|| Error::domain("piece index out of range"))?;
    if m < 2 {
        return Err(Error::domain("probe curve needs at least 2 points"));
    }
    if p.residual(through) > 1e-10 {
        return Err(Error::domain("probe curve anchor is not on the piece"));
    }
    let dn = norm(dir);
    if dir.len() != p.intrinsic_dim || dn == 0.0 {
        return Err(Error::domain("chart direction must be a non-zero vector of length d"));
    }
    let dir: Vec<f64> = dir.iter().map(|x| x / dn).collect();
    let u0 = p.chart_coords(through);
    let at = |s: f64| -> Vec<f64> { u0.iter().zip(&dir).map(|(a, b)| a + s * b).collect() };
    let c = p.height();
    // |d/ds α(u0 + s·dir)| = √(1 + (2c (u0 + s dir)·dir)²)
    let speed = |s: f64| {
        let g = 2.0 * c * dot(&at(s), &dir);
        (1.0 + g * g).sqrt()
    };
    let arc_of = |s: f64| -> f64 {
        if c == 0.0 {
            s
        } else {
            integrate_adaptive(&speed, 0.0, s, 1e-14)
        }
    };
    let param_for_arc = |a: f64| -> f64 {
        if c == 0.0 {
            return a;
        }
        // arc_of is increasing with slope ≥ 1, so |s| ≤ |a|.
        let (mut lo, mut hi) = if a >= 0.0 { (0.0, a) } else { (a, 0.0) };
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if arc_of(mid) < a {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 * (1.0 + a.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    let mut rows = Vec::with_capacity(m);
    let mut arc = Vec::with_capacity(m);
    for i in 0..m {
        let a = -half_length + 2.0 * half_length * i as f64 / (m - 1) as f64;
        let u = at(param_for_arc(a));
        if !p.extent.contains(&u) {
            return Err(Error::domain("probe curve leaves the piece extent"));
        }
        rows.push(p.embed(&u));
        arc.push(a);
    }
    let other = scene
        .intersection
        .as_ref()
        .and_then(|meta| meta.pieces.iter().copied().find(|&j| j != piece))
        .ok_or_else(|| Error::domain("scene has no second intersection piece"))?;
    let q = &scene.pieces[other];
    let f = |a: f64| q.implicit(&p.embed(&at(param_for_arc(a))));
    let (mut lo, mut hi) = (-half_length, half_length);
    let (flo, fhi) = (f(lo), f(hi));
    if flo * fhi > 0.0 {
        return Err(Error::domain("probe curve does not cross the intersection"));
    }
    if flo == 0.0 {
        hi = lo;
    } else if fhi == 0.0 {
        lo = hi;
    }
    while hi - lo > 1e-15 * (1.0 + half_length) {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            lo = mid;
            hi = mid;
        } else if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let crossing_arc = 0.5 * (lo + hi);
    let crossing_point = p.embed(&at(param_for_arc(crossing_arc)));
    let mut points = PointCloud::from_rows(&rows)?;
    points.labels = Some(vec![piece as u32; m]);
    Ok(ProbeCurve { piece, points, arc, crossing_arc, crossing_point })
}

/// Empirical regularity ratios of a piece over random pairs within `radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityAudit {
    /// max ‖y − π(y)‖ / ‖x − π(y)‖²
    pub distance_ratio: f64,
    /// max |V − 1| / ‖x − π(y)‖², with V = 1/(n(x)·n(y))
    pub volume_ratio: f64,
    pub pairs: usize,
}

/// Audit both regularity inequalities on `pairs` random pairs (x, y) of the
/// piece with chart distance at most `radius`, centred within `radius` of the
/// anchor.
pub fn audit_regularity(piece: &ManifoldPiece, pairs: usize, radius: f64, seed: u64) -> RegularityAudit {
    let mut rng = seeds::rng(seeds::derive(seed, seeds::stream::AUDIT, 0));
    let d = piece.intrinsic_dim;
    let ball = |rng: &mut ChaCha8Rng, r: f64| -> Vec<f64> {
        loop {
            let u: Vec<f64> = (0..d).map(|_| rng.random_range(-r..r)).collect();
            if dot(&u, &u) <= r * r {
                return u;
            }
        }
    };
    let mut out = RegularityAudit { distance_ratio: 0.0, volume_ratio: 0.0, pairs };
    for _ in 0..pairs {
        let ux = ball(&mut rng, radius);
        let du = ball(&mut rng, radius);
        let uy: Vec<f64> = ux.iter().zip(&du).map(|(a, b)| a + b).collect();
        let x = piece.embed(&ux);
        let y = piece.embed(&uy);
        let basis = piece.tangent_basis(&ux);
        let w = sub(&y, &x);
        let mut proj = x.clone();
        for b in &basis {
            let c = dot(&w, b);
            for (pi, bi) in proj.iter_mut().zip(b) {
                *pi += c * bi;
            }
        }
        let tangential = norm(&sub(&proj, &x));
        if tangential < 1e-6 || tangential > radius {
            continue;
        }
        let t2 = tangential * tangential;
        out.distance_ratio = out.distance_ratio.max(norm(&sub(&y, &proj)) / t2);
        let cosang = dot(&piece.normal_at(&ux), &piece.normal_at(&uy));
        out.volume_ratio = out.volume_ratio.max((1.0 / cosang - 1.0).abs() / t2);
    }
    out
}
