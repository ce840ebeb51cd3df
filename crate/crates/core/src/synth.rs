//! Procedural ground truth: camera rigs on a horizontal arc, time-varying
//! blob scenes and multi-view dataset generation.

use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{self, Camera, DEFAULT_FOCAL};
use crate::eval::Reconstructor;
use crate::field::{Blob, BlobField, Field};
use crate::raster::{self, Raster};
use crate::render::{self, RenderConfig};
use crate::{Error, Result};

pub const DEFAULT_RADIUS: f64 = 2.7;
pub const DEFAULT_SPREAD_DEGREES: f64 = 70.0;
pub const DEFAULT_VIEWS: usize = 8;
pub const DEFAULT_BLOBS: usize = 8;
/// Half-extent of the cube holding blob centres.
pub const CENTER_EXTENT: f64 = 0.35;
/// Bound on any blob's offset from its base position.
pub const MAX_OFFSET: f64 = 0.08;
/// Depth margin around the rig radius used for dataset renders.
pub const DEPTH_MARGIN: f64 = 0.8;

/// `N` cameras on a horizontal arc looking at the origin.
///
/// Views are ordered by increasing `|yaw|` (negative first on ties), so view
/// 0 is always the most frontal camera.
#[derive(Clone, Debug)]
pub struct CameraRig {
    cameras: Vec<Camera>,
    yaws: Vec<f64>,
    radius: f64,
}

impl CameraRig {
    pub fn cameras(&self) -> &[Camera] {
        &self.cameras
    }

    /// Yaw of each view in radians, positive towards `+x`.
    pub fn yaws(&self) -> &[f64] {
        &self.yaws
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    /// Largest `|yaw|` in the rig.
    pub fn spread(&self) -> f64 {
        self.yaws.iter().fold(0.0, |m, y| m.max(y.abs()))
    }
}

/// Camera on the arc at `yaw`, looking at the origin with `+y` up.
pub fn arc_camera(radius: f64, yaw: f64) -> Result<Camera> {
    let eye = Point3::new(radius * yaw.sin(), 0.0, radius * yaw.cos());
    Camera::look_at(
        eye,
        Point3::origin(),
        Vector3::y(),
        camera::centered_intrinsic(DEFAULT_FOCAL),
    )
}

/// Evenly spaced yaws on `[-spread, spread]`.
pub fn make_rig(n: usize, radius: f64, spread: f64) -> Result<CameraRig> {
    if n < 2 {
        return Err(Error::Parameter(format!(
            "a rig needs at least 2 cameras, got {n}"
        )));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::Parameter(format!(
            "rig radius must be positive, got {radius}"
        )));
    }
    if !(spread.is_finite() && (0.0..std::f64::consts::FRAC_PI_2).contains(&spread)) {
        return Err(Error::Parameter(format!(
            "yaw spread must lie in [0, pi/2), got {spread}"
        )));
    }
    let mut yaws: Vec<f64> = (0..n)
        .map(|k| -spread + 2.0 * spread * k as f64 / (n - 1) as f64)
        .collect();
    yaws.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
    let cameras = yaws
        .iter()
        .map(|&y| arc_camera(radius, y))
        .collect::<Result<Vec<_>>>()?;
    Ok(CameraRig {
        cameras,
        yaws,
        radius,
    })
}

/// Sinusoidal motion of one blob: `offset(t) = amplitude * sin(omega t)` and
/// `density(t) = 1 + density_amplitude * sin(density_omega t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobTrack {
    pub amplitude: [f64; 3],
    pub omega: f64,
    pub density_amplitude: f64,
    pub density_omega: f64,
}

impl BlobTrack {
    pub fn offset(&self, t: usize) -> [f64; 3] {
        let s = (self.omega * t as f64).sin();
        self.amplitude.map(|a| a * s)
    }

    pub fn density_scale(&self, t: usize) -> f64 {
        1.0 + self.density_amplitude * (self.density_omega * t as f64).sin()
    }
}

/// A blob field animated over frames `0..frames`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicScene {
    pub seed: u64,
    pub frames: usize,
    pub base: BlobField,
    pub tracks: Vec<BlobTrack>,
}

/// Random scene of `blobs` coloured Gaussian bumps with smooth motion.
pub fn make_scene(seed: u64, blobs: usize, frames: usize) -> Result<DynamicScene> {
    if blobs == 0 || frames == 0 {
        return Err(Error::Parameter(format!(
            "scene needs at least one blob and one frame, got K={blobs} T={frames}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base = Vec::with_capacity(blobs);
    let mut tracks = Vec::with_capacity(blobs);
    for _ in 0..blobs {
        let center = [(); 3].map(|_| rng.gen_range(-CENTER_EXTENT..=CENTER_EXTENT));
        let scale = [(); 3].map(|_| rng.gen_range(0.06..0.15));
        let peak = rng.gen_range(10.0..40.0);
        let color = [(); 3].map(|_| rng.gen_range(0.15..0.95));
        base.push(Blob {
            center,
            scale,
            peak,
            color,
        });
        // direction on the sphere, length up to MAX_OFFSET
        let dir = loop {
            let v: Vector3<f64> = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                break v / n;
            }
        };
        let len = rng.gen_range(0.3..1.0) * MAX_OFFSET;
        tracks.push(BlobTrack {
            amplitude: [dir.x * len, dir.y * len, dir.z * len],
            omega: rng.gen_range(0.4..1.0),
            density_amplitude: rng.gen_range(0.0..0.2),
            density_omega: rng.gen_range(0.4..1.0),
        });
    }
    Ok(DynamicScene {
        seed,
        frames,
        base: BlobField::new(base)?,
        tracks,
    })
}

impl DynamicScene {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Parameter("scene has no frames".into()));
        }
        if self.tracks.len() != self.base.blobs().len() {
            return Err(Error::Structural(format!(
                "{} blobs but {} motion tracks",
                self.base.blobs().len(),
                self.tracks.len()
            )));
        }
        BlobField::new(self.base.blobs().to_vec())?;
        Ok(())
    }

    /// Field at frame `t`; frame 0 is the base field.
    pub fn frame(&self, t: usize) -> Result<BlobField> {
        if t >= self.frames {
            return Err(Error::Parameter(format!(
                "frame {t} out of range for a {}-frame scene",
                self.frames
            )));
        }
        let blobs = self
            .base
            .blobs()
            .iter()
            .zip(&self.tracks)
            .map(|(b, track)| {
                let off = track.offset(t);
                Blob {
                    center: std::array::from_fn(|k| b.center[k] + off[k]),
                    peak: b.peak * track.density_scale(t),
                    ..*b
                }
            })
            .collect();
        BlobField::new(blobs)
    }
}

/// Serializable subset of [`RenderConfig`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderSettings {
    pub width: usize,
    pub height: usize,
    pub samples: usize,
    pub t_near: f64,
    pub t_far: f64,
    pub background: [f64; 3],
    pub jitter: Option<u64>,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings::from(&RenderConfig::default())
    }
}

impl From<&RenderConfig> for RenderSettings {
    fn from(c: &RenderConfig) -> Self {
        RenderSettings {
            width: c.width,
            height: c.height,
            samples: c.samples,
            t_near: c.t_near,
            t_far: c.t_far,
            background: c.background,
            jitter: c.jitter,
        }
    }
}

impl RenderSettings {
    pub fn to_config(&self) -> RenderConfig {
        RenderConfig {
            width: self.width,
            height: self.height,
            samples: self.samples,
            t_near: self.t_near,
            t_far: self.t_far,
            background: self.background,
            jitter: self.jitter,
            warp: None,
        }
    }

    /// Default settings with the depth range centred on a rig of `radius`.
    pub fn for_radius(radius: f64) -> Self {
        RenderSettings {
            t_near: radius - DEPTH_MARGIN,
            t_far: radius + DEPTH_MARGIN,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub t: usize,
    pub view: usize,
    pub role: String,
    pub path: String,
    pub camera: String,
}

/// Index of a generated dataset. Paths are relative to the manifest's
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n_views: usize,
    pub n_frames: usize,
    pub reference: String,
    pub frames: Vec<FrameEntry>,
    pub yaws: Vec<f64>,
    pub scene: DynamicScene,
    pub render: RenderSettings,
}

pub const MANIFEST_NAME: &str = "manifest.json";
pub const REFERENCE_NAME: &str = "reference.png";

pub fn gt_image_name(view: usize, t: usize) -> String {
    format!("view{view}_frame{t}.png")
}

pub fn camera_file_name(view: usize) -> String {
    format!("camera{view}.json")
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        m.scene.validate()?;
        if m.n_views < 2 || m.n_frames == 0 || m.frames.len() != m.n_views * m.n_frames {
            return Err(Error::Structural(format!(
                "manifest lists {} frames for {} views x {} frames",
                m.frames.len(),
                m.n_views,
                m.n_frames
            )));
        }
        Ok(m)
    }

    fn entry(&self, t: usize, view: usize) -> Result<&FrameEntry> {
        self.frames
            .iter()
            .find(|e| e.t == t && e.view == view)
            .ok_or_else(|| {
                Error::Structural(format!("manifest has no entry for frame {t} view {view}"))
            })
    }

    pub fn image_path(&self, dir: &Path, t: usize, view: usize) -> Result<PathBuf> {
        Ok(dir.join(&self.entry(t, view)?.path))
    }

    /// Cameras in view order.
    pub fn cameras(&self, dir: &Path) -> Result<Vec<Camera>> {
        (0..self.n_views)
            .map(|j| camera::read_camera(&dir.join(&self.entry(0, j)?.camera)))
            .collect()
    }

    /// Ground-truth images indexed `[t][view]`.
    pub fn groundtruth(&self, dir: &Path) -> Result<Vec<Vec<Raster>>> {
        (0..self.n_frames)
            .map(|t| {
                (0..self.n_views)
                    .map(|j| raster::read_image(&self.image_path(dir, t, j)?))
                    .collect()
            })
            .collect()
    }
}

/// Renders every `(frame, view)` pair of `scene` from `rig`, writes the PNGs,
/// the reference image (view 0, frame 0), the camera files and the manifest.
pub fn generate_dataset(
    scene: &DynamicScene,
    rig: &CameraRig,
    settings: &RenderSettings,
    out_dir: &Path,
) -> Result<Manifest> {
    scene.validate()?;
    let cfg = settings.to_config();
    cfg.validate()?;
    let fields = (0..scene.frames)
        .map(|t| scene.frame(t))
        .collect::<Result<Vec<_>>>()?;
    let n = rig.len();
    let jobs: Vec<(usize, usize)> = (0..scene.frames)
        .flat_map(|t| (0..n).map(move |j| (t, j)))
        .collect();
    let images = jobs
        .par_iter()
        .map(|&(t, j)| render::render(&fields[t], &rig.cameras()[j], &cfg).map(|r| r.rgb))
        .collect::<Result<Vec<_>>>()?;

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (j, cam) in rig.cameras().iter().enumerate() {
        camera::write_camera(cam, &out_dir.join(camera_file_name(j)))?;
    }
    let mut frames = Vec::with_capacity(jobs.len());
    for (&(t, j), img) in jobs.iter().zip(&images) {
        let name = gt_image_name(j, t);
        raster::write_image(img, &out_dir.join(&name))?;
        frames.push(FrameEntry {
            t,
            view: j,
            role: "gt".into(),
            path: name,
            camera: camera_file_name(j),
        });
    }
    raster::write_image(&images[0], &out_dir.join(REFERENCE_NAME))?;

    let manifest = Manifest {
        n_views: n,
        n_frames: scene.frames,
        reference: REFERENCE_NAME.into(),
        frames,
        yaws: rig.yaws().to_vec(),
        scene: scene.clone(),
        render: *settings,
    };
    let json = serde_json::to_vec_pretty(&manifest)?;
    crate::io::write_atomic(&out_dir.join(MANIFEST_NAME), &json)?;
    Ok(manifest)
}

/// Returns the ground-truth field of each frame regardless of the input view.
#[derive(Clone, Debug)]
pub struct IdentityReconstructor {
    scene: DynamicScene,
}

impl IdentityReconstructor {
    pub fn new(scene: DynamicScene) -> Self {
        IdentityReconstructor { scene }
    }
}

impl Reconstructor for IdentityReconstructor {
    fn reconstruct(&self, frame: usize, _input_view: usize) -> Result<Box<dyn Field>> {
        Ok(Box::new(self.scene.frame(frame)?))
    }
}

/// Degrades the ground truth in a way the input view cannot see.
///
/// Each blob slides along the input camera's ray through its centre by a
/// seeded amount and is rescaled about the camera so that its silhouette and
/// column density seen from the input view stay the same. The slide grows
/// with the input camera's `|yaw|`: `sigma * (1 + |yaw| / spread)`.
#[derive(Clone, Debug)]
pub struct PerturbReconstructor {
    scene: DynamicScene,
    positions: Vec<Point3<f64>>,
    yaws: Vec<f64>,
    sigma: f64,
    seed: u64,
}

impl PerturbReconstructor {
    pub fn new(scene: DynamicScene, cameras: &[Camera], sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::Parameter(format!(
                "perturbation must be finite and >= 0, got {sigma}"
            )));
        }
        let yaws = cameras
            .iter()
            .map(|c| {
                let p = c.position();
                p.x.atan2(p.z)
            })
            .collect();
        Ok(PerturbReconstructor {
            scene,
            positions: cameras.iter().map(Camera::position).collect(),
            yaws,
            sigma,
            seed,
        })
    }

    fn spread(&self) -> f64 {
        self.yaws.iter().fold(0.0, |m: f64, y| m.max(y.abs()))
    }
}

impl Reconstructor for PerturbReconstructor {
    fn reconstruct(&self, frame: usize, input_view: usize) -> Result<Box<dyn Field>> {
        let eye = *self
            .positions
            .get(input_view)
            .ok_or_else(|| Error::Parameter(format!("no camera for input view {input_view}")))?;
        let field = self.scene.frame(frame)?;
        let spread = self.spread();
        let gain = if spread > 0.0 {
            1.0 + self.yaws[input_view].abs() / spread
        } else {
            1.0
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((frame as u64) << 32) | input_view as u64);
        let blobs = field
            .blobs()
            .iter()
            .map(|b| {
                let slide = self.sigma * gain * rng.gen_range(-1.0..=1.0);
                let center = Point3::from(b.center);
                let dist = (center - eye).norm();
                let k = ((dist + slide) / dist).max(0.05);
                let moved = eye + (center - eye) * k;
                Blob {
                    center: moved.coords.into(),
                    scale: b.scale.map(|s| s * k),
                    peak: b.peak / k,
                    color: b.color,
                }
            })
            .collect();
        Ok(Box::new(BlobField::new(blobs)?))
    }
}
