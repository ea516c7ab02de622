use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use singlap::estimators::{estimate, profile_fit_diagnostics, EstimateOptions};
use singlap::hyptest::{
    bandwidth_for_test, in_ball_points, run_experiment_table, run_test, ExperimentSpec, Hypothesis, TestConfig,
};
use singlap::io;
use singlap::laplacian::{laplacian_response, select_direction, ProbeDirection};
use singlap::manifold::{make_intersection_scene, sample_mixture, ExtentSpec, PieceShape, PointCloud, Scene};
use singlap::pca::pca;
use singlap::seeds;
use singlap::theory::noise_identity_check;
use singlap::zeroset::{
    canonicalize, centroids, pave_step, IntervalBox, PaveState, SphericalNet, ZeroSetProblem, REFERENCE_W,
};

use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::{Command, Common, Format};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] singlap::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(singlap::Error::Domain(_)) => "domain",
            CliError::Core(singlap::Error::Precondition(_)) => "precondition",
            CliError::Core(singlap::Error::Io(_)) => "io",
            CliError::Core(singlap::Error::Parse(_) | singlap::Error::Csv(_) | singlap::Error::Json(_)) => "parse",
            CliError::Core(_) => "computation",
            CliError::Usage(_) => "usage",
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub enum Outcome {
    Done,
    TestDecision { reject: bool },
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        match self {
            Outcome::TestDecision { reject: true } => 1,
            _ => 0,
        }
    }
}

/// Files written by one command, collected for the manifest.
struct Outputs<'a> {
    dir: &'a Path,
    names: Vec<String>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(singlap::Error::from)?;
        Ok(Outputs { dir, names: Vec::new() })
    }

    fn text(&mut self, name: &str, body: &str) -> CliResult<()> {
        io::write_atomic(&self.dir.join(name), body.as_bytes())?;
        self.names.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        io::write_json_atomic(&self.dir.join(name), value)?;
        self.names.push(name.to_string());
        Ok(())
    }

    /// Main tabular output in the requested format.
    fn table<T: Serialize>(
        &mut self,
        stem: &str,
        format: Format,
        csv: impl FnOnce() -> CliResult<String>,
        value: &T,
    ) -> CliResult<()> {
        match format {
            Format::Csv => self.text(&format!("{stem}.csv"), &csv()?),
            Format::Json => self.json(&format!("{stem}.json"), value),
        }
    }

    fn finish(self, common: &Common, command: &Command, scene_hash: Option<String>) -> CliResult<()> {
        let m = RunManifest::new(common, command, scene_hash, self.names);
        io::write_json_atomic(&self.dir.join(MANIFEST_FILE), &m)?;
        Ok(())
    }
}

pub fn dispatch(common: &Common, command: &Command) -> CliResult<Outcome> {
    if let Some(n) = common.threads {
        // Fails only if the pool was already built, as in a rerun.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match command {
        Command::Gen(a) => cmd_gen(common, command, a),
        Command::Laplacian(a) => cmd_laplacian(common, command, a),
        Command::Test(a) => cmd_test(common, command, a),
        Command::PowerSweep(a) => cmd_power_sweep(common, command, a),
        Command::Estimate(a) => cmd_estimate(common, command, a),
        Command::NoiseCheck(a) => cmd_noise_check(common, command, a),
        Command::Zeroset(a) => cmd_zeroset(common, command, a),
        Command::Pca(a) => cmd_pca(common, command, a),
        Command::Rerun(a) => cmd_rerun(common, a),
    }
}

fn parse_vec(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| usage(format!("'{p}' is not a number in '{s}'"))))
        .collect()
}

fn read_cloud(path: &Path) -> CliResult<PointCloud> {
    let text = std::fs::read_to_string(path).map_err(singlap::Error::from)?;
    Ok(io::cloud_from_csv(&text)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    Plane,
    HalfPlane,
    Intersection,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SceneArgs {
    #[arg(long, value_enum, default_value_t = SceneKind::Intersection)]
    pub kind: SceneKind,
    /// Ambient dimension N.
    #[arg(long, default_value_t = 3)]
    pub ambient_dim: usize,
    /// Intrinsic dimension d of every piece.
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Dihedral angle θ of the intersection, in radians.
    #[arg(long, default_value_t = PI / 2.0)]
    pub theta: f64,
    /// Curvature bound L of curved pieces; 0 gives flat pieces.
    #[arg(long, default_value_t = 0.0)]
    pub curvature: f64,
    /// Half-width of each chart box, or of the ambient cube with --cube.
    #[arg(long, default_value_t = 1.0)]
    pub half_width: f64,
    /// Cut flat pieces by the ambient cube [−a, a]^N instead of chart boxes.
    #[arg(long)]
    pub cube: bool,
}

impl SceneArgs {
    fn build(&self) -> CliResult<Scene> {
        Ok(match self.kind {
            SceneKind::Plane => Scene::flat_plane(self.ambient_dim, self.d, self.half_width)?,
            SceneKind::HalfPlane => Scene::half_plane(self.ambient_dim, self.d, self.half_width)?,
            SceneKind::Intersection => {
                let shape =
                    if self.curvature > 0.0 { PieceShape::Curved { l: self.curvature } } else { PieceShape::Flat };
                let extent = if self.cube {
                    ExtentSpec::AmbientCube { half_width: self.half_width }
                } else {
                    ExtentSpec::ChartBox { half_width: self.half_width }
                };
                make_intersection_scene(self.ambient_dim, self.d, self.theta, shape, &extent)?
            }
        })
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Number of samples, uniform on the union.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Standard deviation of ambient Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
}

fn cmd_gen(common: &Common, command: &Command, a: &GenArgs) -> CliResult<Outcome> {
    let scene = a.scene.build()?;
    let mut cloud = sample_mixture(&scene, a.n, common.seed)?;
    if a.sigma > 0.0 {
        cloud = singlap::manifold::add_noise(&cloud, a.sigma, common.seed)?;
    }
    let mut out = Outputs::new(&common.out_dir)?;
    out.table("cloud", common.format, || Ok(io::cloud_to_csv(&cloud)?), &cloud)?;
    out.json("scene.json", &scene)?;
    out.finish(common, command, Some(io::scene_hash(&scene)?))?;
    Ok(Outcome::Done)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DirectionArgs {
    /// Probe direction v as comma-separated coordinates (normalized).
    #[arg(long, allow_hyphen_values = true)]
    pub v: Option<String>,
    /// Use the k-th coordinate axis as v.
    #[arg(long)]
    pub axis: Option<usize>,
}

impl DirectionArgs {
    fn resolve(&self, dim: usize) -> CliResult<Option<ProbeDirection>> {
        match (&self.v, self.axis) {
            (Some(_), Some(_)) => Err(usage("give at most one of --v and --axis")),
            (Some(s), None) => {
                let v = parse_vec(s)?;
                if v.len() != dim {
                    return Err(usage(format!("--v has {} coordinates, the cloud has {dim}", v.len())));
                }
                Ok(Some(ProbeDirection::new(v)?))
            }
            (None, Some(k)) if k < dim => Ok(Some(ProbeDirection::axis(dim, k))),
            (None, Some(k)) => Err(usage(format!("--axis {k} is out of range for dimension {dim}"))),
            (None, None) => Ok(None),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LaplacianArgs {
    /// Sample cloud CSV.
    #[arg(long)]
    pub cloud: PathBuf,
    /// Evaluation points CSV (default: the cloud itself).
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Kernel bandwidth t.
    #[arg(long)]
    pub t: f64,
    #[command(flatten)]
    pub direction: DirectionArgs,
}

fn cmd_laplacian(common: &Common, command: &Command, a: &LaplacianArgs) -> CliResult<Outcome> {
    let cloud = read_cloud(&a.cloud)?;
    let points = match &a.points {
        Some(p) => read_cloud(p)?,
        None => cloud.clone(),
    };
    let v = a.direction.resolve(cloud.dim)?.ok_or_else(|| usage("laplacian needs --v or --axis"))?;
    let resp = laplacian_response(&cloud, &points, &v, a.t)?;
    let mut out = Outputs::new(&common.out_dir)?;
    out.table("response", common.format, || Ok(io::response_to_csv(&resp)?), &resp)?;
    out.finish(common, command, None)?;
    Ok(Outcome::Done)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TestArgs {
    #[arg(long)]
    pub cloud: PathBuf,
    /// Centre x0 of the tested ball (default: origin).
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Test level α.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// Bandwidth override (default: the power-theorem choice for n and α).
    #[arg(long)]
    pub t: Option<f64>,
    #[command(flatten)]
    pub direction: DirectionArgs,
    /// Without a fixed direction: fraction of the cloud held out to select v
    /// among random candidates.
    #[arg(long, default_value_t = 0.2)]
    pub selection_fraction: f64,
    #[arg(long, default_value_t = 64)]
    pub candidates: usize,
}

fn cmd_test(common: &Common, command: &Command, a: &TestArgs) -> CliResult<Outcome> {
    let cloud = read_cloud(&a.cloud)?;
    let x0 = match &a.x0 {
        Some(s) => parse_vec(s)?,
        None => vec![0.0; cloud.dim],
    };
    let mut config = TestConfig::new(a.alpha, x0.clone())?;
    config.radius = a.radius;
    config.t_override = a.t;
    let (test_cloud, v, independent) = match a.direction.resolve(cloud.dim)? {
        Some(v) => (cloud, v, true),
        None => {
            if !(a.selection_fraction > 0.0 && a.selection_fraction < 1.0) {
                return Err(usage("--selection-fraction must lie in (0, 1)"));
            }
            let n_sel = ((cloud.len() as f64) * a.selection_fraction).round() as usize;
            let n_test = cloud.len() - n_sel;
            let (test, sel) = singlap::zeroset::split_cloud(&cloud, n_test, n_sel, common.seed)?;
            let t = match a.t {
                Some(t) => t,
                None => bandwidth_for_test(n_test, a.alpha)?,
            };
            let ball = in_ball_points(&sel, &x0, a.radius);
            let v = select_direction(&sel, &ball, t, a.candidates, common.seed)?;
            (test, v, true)
        }
    };
    let report = run_test(&test_cloud, &config, &v, independent)?;
    let mut out = Outputs::new(&common.out_dir)?;
    out.json("report.json", &report)?;
    out.finish(common, command, None)?;
    Ok(Outcome::TestDecision { reject: report.reject })
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PowerSweepArgs {
    /// Trials per cell.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Sample sizes (default: the reference grid 2·10⁴ … 7·10⁴).
    #[arg(long)]
    pub sizes: Option<String>,
    /// Intersection angles in radians; H0 is always included.
    #[arg(long)]
    pub thetas: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Half-width of the ambient cube cutting the planes.
    #[arg(long)]
    pub half_width: Option<f64>,
}

fn cmd_power_sweep(common: &Common, command: &Command, a: &PowerSweepArgs) -> CliResult<Outcome> {
    let mut spec = ExperimentSpec::reference(a.trials, common.seed);
    spec.alpha = a.alpha;
    if let Some(s) = &a.sizes {
        spec.sample_sizes = parse_vec(s)?.into_iter().map(|x| x as usize).collect();
    }
    if let Some(s) = &a.thetas {
        spec.hypotheses = std::iter::once(Hypothesis::Null)
            .chain(parse_vec(s)?.into_iter().map(|theta| Hypothesis::Intersection { theta }))
            .collect();
    }
    if let Some(h) = a.half_width {
        spec.half_width = h;
    }
    let table = run_experiment_table(&spec)?;
    let mut out = Outputs::new(&common.out_dir)?;
    out.table("table", common.format, || Ok(table.to_csv()?), &table)?;
    out.json("trials.json", &table.records)?;
    out.finish(common, command, None)?;
    Ok(Outcome::Done)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EstimateArgs {
    /// Response CSV (coordinates then `value`) along the probe curve.
    #[arg(long)]
    pub response: PathBuf,
    /// Bandwidth the response was computed with.
    #[arg(long)]
    pub t: f64,
    /// Refine extrema by a three-point parabola.
    #[arg(long)]
    pub refine: bool,
    /// Also fit the u·e^{−cu²} profile.
    #[arg(long)]
    pub fit: bool,
}

fn cmd_estimate(common: &Common, command: &Command, a: &EstimateArgs) -> CliResult<Outcome> {
    let text = std::fs::read_to_string(&a.response).map_err(singlap::Error::from)?;
    // The direction is not needed by the estimators; a placeholder axis keeps
    // the response well formed.
    let dim = text.lines().next().map_or(0, |h| h.split(',').count().saturating_sub(1));
    if dim == 0 {
        return Err(usage("response CSV has no coordinate columns"));
    }
    let resp = io::response_from_csv(&text, a.t, ProbeDirection::axis(dim, 0))?;
    let report = estimate(&resp, EstimateOptions { parabolic_refinement: a.refine })?;
    let mut out = Outputs::new(&common.out_dir)?;
    out.json("estimate.json", &report)?;
    if a.fit {
        out.json("fit.json", &profile_fit_diagnostics(&resp)?)?;
    }
    out.finish(common, command, None)?;
    Ok(Outcome::Done)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct NoiseCheckArgs {
    /// Cloud CSV (default: n uniform points on the unit flat 2-plane in ℝ^N).
    #[arg(long)]
    pub cloud: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub ambient_dim: usize,
    /// Noise standard deviation σ.
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub t: f64,
    #[arg(long, default_value_t = 100_000)]
    pub draws: usize,
    /// Number of random evaluation points in [−0.8, 0.8]^N.
    #[arg(long, default_value_t = 20)]
    pub points: usize,
}

fn cmd_noise_check(common: &Common, command: &Command, a: &NoiseCheckArgs) -> CliResult<Outcome> {
    let (cloud, hash) = match &a.cloud {
        Some(p) => (read_cloud(p)?, None),
        None => {
            let scene = Scene::flat_plane(a.ambient_dim, 2, 1.0)?;
            (sample_mixture(&scene, a.n, common.seed)?, Some(io::scene_hash(&scene)?))
        }
    };
    let mut rng = seeds::rng(seeds::derive(common.seed, seeds::stream::DIRECTION, 0));
    let xs: Vec<f64> = (0..a.points * cloud.dim).map(|_| rng.random_range(-0.8..0.8)).collect();
    let xs = PointCloud::new(cloud.dim, xs)?;
    let v = ProbeDirection::random(cloud.dim, &mut rng);
    let report = noise_identity_check(&cloud, &xs, &v, a.t, a.sigma, a.draws, common.seed)?;
    let mut out = Outputs::new(&common.out_dir)?;
    out.json("noise_check.json", &report)?;
    out.finish(common, command, hash)?;
    Ok(Outcome::Done)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ZerosetArgs {
    /// Number of nodes: 1 (single node, a = +1) or 3 (reference target).
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Constraint tolerance δ.
    #[arg(long, default_value_t = 1e-16)]
    pub delta: f64,
    /// Maximum accepted box width.
    #[arg(long, default_value_t = 0.05)]
    pub width_cap: f64,
    /// Boxes processed before stopping with a partial paving.
    #[arg(long, default_value_t = 1_000_000)]
    pub budget: usize,
    /// Half-width of the searched region around W*; omit to search [−10, 10]^{2k}.
    #[arg(long)]
    pub half_width: Option<f64>,
    /// Number of network inputs on the circle.
    #[arg(long, default_value_t = 100)]
    pub inputs: usize,
    /// Write the search state here when the budget runs out.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Resume from a checkpoint instead of starting afresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

fn cmd_zeroset(common: &Common, command: &Command, a: &ZerosetArgs) -> CliResult<Outcome> {
    let inputs = SphericalNet::random_inputs(a.inputs, common.seed);
    let problem = match a.k {
        1 => ZeroSetProblem::new(SphericalNet::new(vec![1.0], inputs)?, REFERENCE_W.to_vec(), a.delta)?,
        3 => ZeroSetProblem::reference_k3(REFERENCE_W, inputs, a.delta)?,
        k => return Err(usage(format!("--k must be 1 or 3, got {k}"))),
    };
    let mut state = match &a.resume {
        Some(p) => PaveState::load(p)?,
        None => {
            let domain = match a.half_width {
                Some(h) => IntervalBox::around(&problem.w_star, h)?,
                None => IntervalBox::cube(problem.w_star.len(), -10.0, 10.0)?,
            };
            PaveState::start(domain, a.width_cap)
        }
    };
    pave_step(&problem, &mut state, a.budget);
    let mut out = Outputs::new(&common.out_dir)?;
    if !state.paving.complete {
        if let Some(p) = &a.checkpoint {
            state.save(p)?;
        }
    }
    let mut paving = state.paving;
    canonicalize(&mut paving);
    out.text("paving.csv", &io::paving_to_csv(&paving)?)?;
    if !paving.accepted.is_empty() {
        let cloud = centroids(&paving)?;
        out.table("centroids", common.format, || Ok(io::cloud_to_csv(&cloud)?), &cloud)?;
    }
    let summary = serde_json::json!({
        "accepted": paving.accepted.len(),
        "rejected": paving.rejected_count,
        "undecided": paving.undecided_count,
        "processed": paving.processed,
        "complete": paving.complete,
        "width_cap": paving.width_cap,
        "delta": a.delta,
    });
    out.json("paving.json", &summary)?;
    out.finish(common, command, None)?;
    Ok(Outcome::Done)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PcaArgs {
    #[arg(long)]
    pub cloud: PathBuf,
    /// Number of principal components kept.
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
}

fn cmd_pca(common: &Common, command: &Command, a: &PcaArgs) -> CliResult<Outcome> {
    let cloud = read_cloud(&a.cloud)?;
    let res = pca(&cloud, a.dim)?;
    let mut out = Outputs::new(&common.out_dir)?;
    out.table("projected", common.format, || Ok(io::cloud_to_csv(&res.projected)?), &res.projected)?;
    let summary = serde_json::json!({
        "mean": res.mean,
        "components": res.components,
        "explained_ratio": res.explained_ratio,
        "rank": res.rank,
    });
    out.json("pca.json", &summary)?;
    out.finish(common, command, None)?;
    Ok(Outcome::Done)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    /// Manifest written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
}

/// Re-run a manifest's command with its recorded flags; only the output
/// directory comes from the current invocation.
fn cmd_rerun(common: &Common, a: &RerunArgs) -> CliResult<Outcome> {
    let m = RunManifest::load(&a.manifest)?;
    if matches!(m.command, Command::Rerun(_)) {
        return Err(usage("a manifest cannot record a rerun"));
    }
    let mut recorded = m.common.clone();
    recorded.out_dir = common.out_dir.clone();
    dispatch(&recorded, &m.command)
}
