//! Configuration and commands behind the `trifuse` binary.
//!
//! Every command reads an optional JSON [`RunConfig`], runs on a thread pool of
//! the configured size and writes its artifacts into the output directory.
//! Failures are reported as one JSON line on stderr with exit code 2 (usage),
//! 3 (data) or 4 (numerical).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::augment::{ShoulderWarp, YawMatrix};
use crate::camera::{self, Camera};
use crate::eval::{self, ExternalMetric, ImageMetric, Orientation, Reconstructor, ScoreConfig};
use crate::field::{Field, TriplaneField};
use crate::fusion::{self, LossComponents, LossWeights};
use crate::mlp::{self, MlpWeights};
use crate::raster;
use crate::render::{self, RenderConfig, RenderedImage};
use crate::synth::{self, DynamicScene, Manifest, RenderSettings};
use crate::triplane;
use crate::visibility::{self, VisibilityConfig};
use crate::{Error, Result};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigSettings {
    pub views: usize,
    pub radius: f64,
    pub spread_degrees: f64,
}

impl Default for RigSettings {
    fn default() -> Self {
        RigSettings {
            views: synth::DEFAULT_VIEWS,
            radius: synth::DEFAULT_RADIUS,
            spread_degrees: synth::DEFAULT_SPREAD_DEGREES,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSettings {
    pub blobs: usize,
    pub frames: usize,
}

impl Default for SceneSettings {
    fn default() -> Self {
        SceneSettings {
            blobs: synth::DEFAULT_BLOBS,
            frames: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisibilitySettings {
    pub resolution: usize,
    pub dilation: usize,
    pub fusion_radius: usize,
}

impl Default for VisibilitySettings {
    fn default() -> Self {
        VisibilitySettings {
            resolution: visibility::DEFAULT_VIS_RESOLUTION,
            dilation: visibility::DEFAULT_DILATION,
            fusion_radius: 1,
        }
    }
}

/// Top-level JSON configuration. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; `None` uses one per core.
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
    /// Renderer settings; `None` centres the depth range on the rig.
    pub render: Option<RenderSettings>,
    pub rig: RigSettings,
    pub scene: SceneSettings,
    pub visibility: VisibilitySettings,
    pub loss_weights: LossWeights,
    /// `psnr`, `l1` or `external:<command>` (lower-better).
    pub metric: String,
    /// `identity`, `perturb:<sigma>` or `external:<command>`.
    pub reconstructor: String,
    /// Decoder weights for triplane inputs; seeded from `seed` when absent.
    pub mlp: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            threads: None,
            out_dir: PathBuf::from("out"),
            render: None,
            rig: RigSettings::default(),
            scene: SceneSettings::default(),
            visibility: VisibilitySettings::default(),
            loss_weights: LossWeights::default(),
            metric: "psnr".into(),
            reconstructor: "identity".into(),
            mlp: None,
        }
    }
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Parameter(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(m) = &cfg.mlp {
            cfg.mlp = Some(base.join(m));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.render_config().validate()?;
        self.loss_weights.validate()?;
        if self.threads == Some(0) {
            return Err(Error::Parameter("threads must be at least 1".into()));
        }
        parse_metric(&self.metric, Path::new("."))?;
        parse_reconstructor(&self.reconstructor)?;
        if let Some(m) = &self.mlp {
            require_file(m)?;
        }
        Ok(())
    }

    pub fn render_settings(&self) -> RenderSettings {
        self.render
            .unwrap_or_else(|| RenderSettings::for_radius(self.rig.radius))
    }

    pub fn render_config(&self) -> RenderConfig {
        self.render_settings().to_config()
    }

    pub fn rig(&self) -> Result<synth::CameraRig> {
        synth::make_rig(
            self.rig.views,
            self.rig.radius,
            self.rig.spread_degrees.to_radians(),
        )
    }

    fn mlp(&self, channels: usize) -> Result<MlpWeights> {
        match &self.mlp {
            Some(p) => mlp::read_mlp(p),
            None => MlpWeights::seeded(self.seed, channels),
        }
    }
}

/// Parsed `reconstructor` setting.
#[derive(Clone, Debug, PartialEq)]
pub enum ReconstructorSpec {
    Identity,
    Perturb(f64),
    External(String),
}

pub fn parse_reconstructor(spec: &str) -> Result<ReconstructorSpec> {
    if spec == "identity" {
        return Ok(ReconstructorSpec::Identity);
    }
    if let Some(s) = spec.strip_prefix("perturb:") {
        let sigma: f64 = s
            .parse()
            .map_err(|_| Error::Parameter(format!("bad perturbation amount in {spec:?}")))?;
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::Parameter(format!(
                "perturbation must be >= 0, got {sigma}"
            )));
        }
        return Ok(ReconstructorSpec::Perturb(sigma));
    }
    if let Some(cmd) = spec.strip_prefix("external:") {
        if cmd.trim().is_empty() {
            return Err(Error::Parameter(
                "external reconstructor command is empty".into(),
            ));
        }
        return Ok(ReconstructorSpec::External(cmd.to_string()));
    }
    Err(Error::Parameter(format!(
        "unknown reconstructor {spec:?}; expected identity, perturb:<sigma> or external:<command>"
    )))
}

pub fn parse_metric(spec: &str, scratch: &Path) -> Result<Box<dyn ImageMetric>> {
    match spec {
        "psnr" => Ok(Box::new(eval::Psnr)),
        "l1" => Ok(Box::new(eval::L1)),
        _ => match spec.strip_prefix("external:") {
            Some(cmd) => Ok(Box::new(ExternalMetric::new(
                cmd,
                Orientation::LowerBetter,
                scratch,
            )?)),
            None => Err(Error::Parameter(format!(
                "unknown metric {spec:?}; expected psnr, l1 or external:<command>"
            ))),
        },
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "trifuse",
    version,
    about = "Triplane rendering, fusion and multi-view evaluation"
)]
pub struct Cli {
    /// JSON run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; output does not depend on this
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Cmd,
}

/// What to render: a triplane file, a scene file, or the seeded scene.
#[derive(Args, Debug, Clone)]
pub struct SourceArgs {
    /// Triplane file, decoded with the configured MLP
    #[arg(long, conflicts_with = "scene")]
    pub triplane: Option<PathBuf>,
    /// Scene JSON or dataset manifest
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Scene frame to render
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Camera JSON; defaults to a rig view
    #[arg(long, conflicts_with = "view")]
    pub camera: Option<PathBuf>,
    /// Rig view index used when no camera file is given
    #[arg(long)]
    pub view: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Generate a multi-view dataset from a seeded blob scene
    Synth,
    /// Render RGB, features, depth and alpha
    Render(SourceArgs),
    /// Render with shoulder augmentation
    Shoulder {
        #[command(flatten)]
        source: SourceArgs,
        /// Roll at the shoulder base, radians
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        /// Yaw at the shoulder base, radians
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        phi: f64,
        /// Use a proper rotation for the yaw instead of the published matrix
        #[arg(long)]
        proper_yaw: bool,
    },
    /// Compute the visibility triplane of a view, and optionally the
    /// occlusion mask against a frontal view
    Visibility {
        #[command(flatten)]
        source: SourceArgs,
        /// Frontal camera JSON for the occlusion mask
        #[arg(long, conflicts_with = "frontal_view")]
        frontal_camera: Option<PathBuf>,
        /// Frontal rig view for the occlusion mask
        #[arg(long)]
        frontal_view: Option<usize>,
    },
    /// Warp a triplane by a flow field
    Warp {
        #[arg(long)]
        triplane: PathBuf,
        #[arg(long)]
        flow: PathBuf,
    },
    /// Fuse an undistorted triplane with the prior
    Fuse {
        #[arg(long)]
        undist: PathBuf,
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        vis_undist: PathBuf,
        #[arg(long)]
        vis_prior: PathBuf,
    },
    /// Print loss values as JSON
    Losses {
        #[arg(long)]
        undist: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Fused triplane for the fusion loss
        #[arg(long, requires_all = ["vis_gt", "occlusion"])]
        fused: Option<PathBuf>,
        #[arg(long)]
        vis_gt: Option<PathBuf>,
        #[arg(long)]
        occlusion: Option<PathBuf>,
        /// Predicted and ground-truth visibility of the input and prior, in
        /// that order
        #[arg(long, num_args = 4, value_names = ["PRED_UNDIST", "PRED_PRIOR", "GT_UNDIST", "GT_PRIOR"])]
        vis_masks: Option<Vec<PathBuf>>,
        /// Externally computed rendering loss
        #[arg(long, allow_hyphen_values = true)]
        render_loss: Option<f64>,
    },
    /// Score a reconstructor on a dataset
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Overrides the configured reconstructor
        #[arg(long)]
        reconstructor: Option<String>,
        /// Overrides the configured metric
        #[arg(long)]
        metric: Option<String>,
    },
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parameter(_) => EXIT_USAGE,
        Error::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Structural(_) => "structural",
        Error::Parameter(_) => "parameter",
        Error::Numerical(_) => "numerical",
        Error::Format { .. } => "format",
        Error::Io { .. } => "io",
        Error::Image { .. } => "image",
        Error::Json(_) => "json",
        Error::Csv(_) => "csv",
        Error::EmptyData(_) => "empty_data",
    }
}

/// Single-line JSON diagnostic.
pub fn diagnostic(kind: &str, code: i32, message: &str) -> String {
    serde_json::json!({ "error": kind, "code": code, "message": message }).to_string()
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("usage error")
                .trim_start_matches("error: ");
            eprintln!("{}", diagnostic("usage", EXIT_USAGE, first));
            return EXIT_USAGE;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("{}", diagnostic(error_kind(&e), code, &e.to_string()));
            code
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(o) = cli.out {
        cfg.out_dir = o;
    }
    cfg.validate()?;
    let threads = cfg
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let command = cli.command;
    crate::with_threads(threads, move || execute(&cfg, command))?
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::io(
            p,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
        ))
    }
}

fn execute(cfg: &RunConfig, command: Cmd) -> Result<()> {
    let out = cfg.out_dir.as_path();
    match command {
        Cmd::Synth => cmd_synth(cfg, out).map(|_| ()),
        Cmd::Render(src) => {
            let (field, cam) = load_source(cfg, &src)?;
            let img = render::render(&field, &cam, &cfg.render_config())?;
            write_render(&img, out)
        }
        Cmd::Shoulder {
            source,
            theta,
            phi,
            proper_yaw,
        } => {
            let (field, cam) = load_source(cfg, &source)?;
            let yaw = if proper_yaw {
                YawMatrix::Rotation
            } else {
                YawMatrix::AsPublished
            };
            let warp = ShoulderWarp::new(theta, phi).with_yaw_matrix(yaw);
            warp.validate()?;
            let img =
                crate::augment::render_with_shoulder(&field, &cam, &cfg.render_config(), &warp)?;
            write_render(&img, out)
        }
        Cmd::Visibility {
            source,
            frontal_camera,
            frontal_view,
        } => {
            let (field, cam) = load_source(cfg, &source)?;
            let frontal = match (frontal_camera, frontal_view) {
                (Some(p), _) => Some(camera::read_camera(&p)?),
                (None, Some(v)) => Some(rig_camera(cfg, v)?),
                (None, None) => None,
            };
            cmd_visibility(cfg, &field, &cam, frontal.as_ref(), out)
        }
        Cmd::Warp { triplane, flow } => {
            require_file(&triplane)?;
            require_file(&flow)?;
            let tp = triplane::read_triplane(&triplane)?;
            let flow = fusion::read_flow(&flow)?;
            let warped = fusion::warp_triplane(&tp, &flow)?;
            triplane::write_triplane(&warped, &out.join("warped.trpl"))
        }
        Cmd::Fuse {
            undist,
            prior,
            vis_undist,
            vis_prior,
        } => {
            for p in [&undist, &prior, &vis_undist, &vis_prior] {
                require_file(p)?;
            }
            let fused = fusion::fuse_triplanes(
                &triplane::read_triplane(&undist)?,
                &triplane::read_triplane(&prior)?,
                &visibility::read_visibility(&vis_undist)?,
                &visibility::read_visibility(&vis_prior)?,
                cfg.visibility.fusion_radius,
            )?;
            triplane::write_triplane(&fused, &out.join("fused.trpl"))
        }
        Cmd::Losses {
            undist,
            gt,
            fused,
            vis_gt,
            occlusion,
            vis_masks,
            render_loss,
        } => cmd_losses(
            cfg,
            out,
            LossInputs {
                undist,
                gt,
                fused,
                vis_gt,
                occlusion,
                vis_masks,
                render_loss,
            },
        ),
        Cmd::Eval {
            manifest,
            reconstructor,
            metric,
        } => {
            let mut cfg = cfg.clone();
            if let Some(r) = reconstructor {
                cfg.reconstructor = r;
            }
            if let Some(m) = metric {
                cfg.metric = m;
            }
            cfg.validate()?;
            let report = cmd_eval(&cfg, &manifest, out)?;
            println!("{}", serde_json::to_string(&report)?);
            Ok(())
        }
    }
}

pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let scene = synth::make_scene(cfg.seed, cfg.scene.blobs, cfg.scene.frames)?;
    let rig = cfg.rig()?;
    synth::generate_dataset(&scene, &rig, &cfg.render_settings(), out)
}

fn rig_camera(cfg: &RunConfig, view: usize) -> Result<Camera> {
    let rig = cfg.rig()?;
    rig.cameras().get(view).cloned().ok_or_else(|| {
        Error::Parameter(format!(
            "rig has {} views, asked for view {view}",
            rig.len()
        ))
    })
}

fn read_scene(path: &Path) -> Result<DynamicScene> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let scene: DynamicScene = match value.get("scene") {
        Some(s) => serde_json::from_value(s.clone())?,
        None => serde_json::from_value(value)?,
    };
    scene.validate()?;
    Ok(scene)
}

/// Field and camera selected by `src`.
pub fn load_source(cfg: &RunConfig, src: &SourceArgs) -> Result<(Box<dyn Field>, Camera)> {
    let cam = match &src.camera {
        Some(p) => {
            require_file(p)?;
            camera::read_camera(p)?
        }
        None => rig_camera(cfg, src.view.unwrap_or(0))?,
    };
    let field: Box<dyn Field> = match (&src.triplane, &src.scene) {
        (Some(p), _) => {
            require_file(p)?;
            let tp = triplane::read_triplane(p)?;
            let mlp = cfg.mlp(tp.channels())?;
            Box::new(TriplaneField::new(tp, mlp)?)
        }
        (None, Some(p)) => {
            require_file(p)?;
            Box::new(read_scene(p)?.frame(src.frame)?)
        }
        (None, None) => {
            let scene = synth::make_scene(cfg.seed, cfg.scene.blobs, cfg.scene.frames)?;
            Box::new(scene.frame(src.frame)?)
        }
    };
    Ok((field, cam))
}

/// Writes `rgb.png` plus float rasters `rgb.imgf`, `features.imgf`,
/// `depth.imgf` (invalid pixels `-1`) and `alpha.imgf`.
pub fn write_render(img: &RenderedImage, out: &Path) -> Result<()> {
    raster::write_image(&img.rgb, &out.join("rgb.png"))?;
    raster::write_raster(&img.rgb, &out.join("rgb.imgf"))?;
    raster::write_raster(&img.features, &out.join("features.imgf"))?;
    raster::write_depth(&img.valid_depth(), &out.join("depth.imgf"))?;
    raster::write_raster(&img.alpha, &out.join("alpha.imgf"))
}

fn cmd_visibility(
    cfg: &RunConfig,
    field: &dyn Field,
    cam: &Camera,
    frontal: Option<&Camera>,
    out: &Path,
) -> Result<()> {
    let vis_cfg = VisibilityConfig {
        resolution: cfg.visibility.resolution,
        dilation: cfg.visibility.dilation,
    };
    let rcfg = cfg.render_config();
    let vis = visibility::visibility_for(field, cam, &rcfg, &vis_cfg)?;
    visibility::write_masks(vis.masks(), &out.join("visibility.imgf"))?;
    if let Some(front) = frontal {
        let vis_front = visibility::visibility_for(field, front, &rcfg, &vis_cfg)?;
        let occ = visibility::occlusion_mask(&vis_front, &vis)?;
        visibility::write_masks(vis_front.masks(), &out.join("frontal_visibility.imgf"))?;
        visibility::write_masks(occ.masks(), &out.join("occlusion.imgf"))?;
    }
    Ok(())
}

struct LossInputs {
    undist: PathBuf,
    gt: PathBuf,
    fused: Option<PathBuf>,
    vis_gt: Option<PathBuf>,
    occlusion: Option<PathBuf>,
    vis_masks: Option<Vec<PathBuf>>,
    render_loss: Option<f64>,
}

/// Loss values; components without inputs are `None` and excluded from the
/// total.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossReport {
    pub undist: f64,
    pub vis: Option<f64>,
    pub fusion: Option<f64>,
    pub render: Option<f64>,
    pub total: f64,
}

fn cmd_losses(cfg: &RunConfig, out: &Path, inp: LossInputs) -> Result<()> {
    let mut paths = vec![&inp.undist, &inp.gt];
    paths.extend(inp.fused.iter().chain(&inp.vis_gt).chain(&inp.occlusion));
    paths.extend(inp.vis_masks.iter().flatten());
    for p in paths {
        require_file(p)?;
    }
    let undist = triplane::read_triplane(&inp.undist)?;
    let gt = triplane::read_triplane(&inp.gt)?;
    let l_undist = fusion::loss_undist(&undist, &gt)?;
    let l_vis = match &inp.vis_masks {
        Some(m) => {
            let m = m
                .iter()
                .map(|p| visibility::read_masks(p))
                .collect::<Result<Vec<_>>>()?;
            Some(fusion::loss_vis(&m[0], &m[1], &m[2], &m[3])?)
        }
        None => None,
    };
    let l_fusion = match (&inp.fused, &inp.vis_gt, &inp.occlusion) {
        (Some(f), Some(v), Some(o)) => {
            let occ = visibility::OcclusionMask::new(visibility::read_masks(o)?)?;
            Some(fusion::loss_fusion(
                &triplane::read_triplane(f)?,
                &gt,
                &visibility::read_masks(v)?,
                &occ,
            )?)
        }
        _ => None,
    };
    let components = LossComponents {
        undist: l_undist,
        vis: l_vis.unwrap_or(0.0),
        fusion: l_fusion.unwrap_or(0.0),
        render: inp.render_loss.unwrap_or(0.0),
    };
    let report = LossReport {
        undist: l_undist,
        vis: l_vis,
        fusion: l_fusion,
        render: inp.render_loss,
        total: fusion::loss_total(&components, &cfg.loss_weights)?,
    };
    let json = serde_json::to_string(&report)?;
    crate::io::write_atomic(&out.join("losses.json"), json.as_bytes())?;
    println!("{json}");
    Ok(())
}

/// Builds the score tensor for the dataset at `manifest_path` and writes
/// `scores.csv`, `scores_mean.csv`, `heatmap.png` and `report.json`.
pub fn cmd_eval(cfg: &RunConfig, manifest_path: &Path, out: &Path) -> Result<eval::EvalReport> {
    require_file(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let manifest = Manifest::read(manifest_path)?;
    let cameras = manifest.cameras(dir)?;
    let gt = manifest.groundtruth(dir)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let scratch = out.join("scratch");
    let metric = parse_metric(&cfg.metric, &scratch)?;
    let reconstructor: Box<dyn Reconstructor> = match parse_reconstructor(&cfg.reconstructor)? {
        ReconstructorSpec::Identity => {
            Box::new(synth::IdentityReconstructor::new(manifest.scene.clone()))
        }
        ReconstructorSpec::Perturb(sigma) => Box::new(synth::PerturbReconstructor::new(
            manifest.scene.clone(),
            &cameras,
            sigma,
            cfg.seed,
        )?),
        ReconstructorSpec::External(cmd) => {
            let inputs = (0..manifest.n_frames)
                .map(|t| {
                    (0..manifest.n_views)
                        .map(|i| manifest.image_path(dir, t, i))
                        .collect()
                })
                .collect::<Result<Vec<Vec<PathBuf>>>>()?;
            let mlp = match &cfg.mlp {
                Some(p) => mlp::read_mlp(p)?,
                None => MlpWeights::seeded(cfg.seed, triplane::DEFAULT_CHANNELS)?,
            };
            Box::new(eval::ExternalReconstructor::new(
                &cmd,
                inputs,
                mlp,
                scratch.clone(),
            )?)
        }
    };
    let score_cfg = ScoreConfig {
        render: manifest.render.to_config(),
        quantize: true,
    };
    let scores = eval::build_score_tensor(
        reconstructor.as_ref(),
        &cameras,
        &gt,
        metric.as_ref(),
        &score_cfg,
    )?;
    let _ = std::fs::remove_dir_all(&scratch);
    let report = eval::EvalReport::from_scores(&scores)?;
    eval::export_scores(&scores, &out.join("scores.csv"))?;
    eval::export_mean_matrix(&scores, &out.join("scores_mean.csv"))?;
    eval::render_heatmap(&scores, &out.join("heatmap.png"))?;
    let json = serde_json::to_vec_pretty(&report)?;
    crate::io::write_atomic(&out.join("report.json"), &json)?;
    Ok(report)
}
