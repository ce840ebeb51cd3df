//! Multi-view evaluation: every view is used once as the input, every
//! reconstruction is scored from every view, and the resulting
//! `T x N x N` score tensor is summarised.

use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::Serialize;

use crate::camera::Camera;
use crate::field::{Field, TriplaneField};
use crate::mlp::MlpWeights;
use crate::raster::{self, Raster};
use crate::render::{self, RenderConfig};
use crate::triplane::read_triplane;
use crate::{Error, Result};

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    HigherBetter,
    LowerBetter,
}

/// A full-reference image metric.
pub trait ImageMetric: Send + Sync {
    fn name(&self) -> &str;
    fn orientation(&self) -> Orientation;
    fn evaluate(&self, rendered: &Raster, groundtruth: &Raster) -> Result<f64>;
}

fn check_pair(a: &Raster, b: &Raster) -> Result<()> {
    a.ensure_same_shape(b)?;
    if a.data().is_empty() {
        return Err(Error::Structural("cannot score empty images".into()));
    }
    Ok(())
}

/// Peak signal-to-noise ratio for images in `[0, 1]`, capped at
/// [`PSNR_CAP`].
pub fn psnr(a: &Raster, b: &Raster) -> Result<f64> {
    check_pair(a, b)?;
    let se: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    let mse = se / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Mean absolute pixel difference.
pub fn l1_metric(a: &Raster, b: &Raster) -> Result<f64> {
    check_pair(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .sum();
    Ok(sum / a.data().len() as f64)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Psnr;

impl ImageMetric for Psnr {
    fn name(&self) -> &str {
        "psnr"
    }
    fn orientation(&self) -> Orientation {
        Orientation::HigherBetter
    }
    fn evaluate(&self, rendered: &Raster, groundtruth: &Raster) -> Result<f64> {
        psnr(rendered, groundtruth)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct L1;

impl ImageMetric for L1 {
    fn name(&self) -> &str {
        "l1"
    }
    fn orientation(&self) -> Orientation {
        Orientation::LowerBetter
    }
    fn evaluate(&self, rendered: &Raster, groundtruth: &Raster) -> Result<f64> {
        l1_metric(rendered, groundtruth)
    }
}

/// Runs an external program as a metric: it receives the rendered and
/// ground-truth PNG paths as its last two arguments and must print one
/// decimal number and exit with status 0.
///
/// This is the slot for learned metrics (perceptual distance, identity
/// embedding distance, expression coefficient distance).
#[derive(Clone, Debug)]
pub struct ExternalMetric {
    name: String,
    program: String,
    args: Vec<String>,
    orientation: Orientation,
    scratch_dir: PathBuf,
}

impl ExternalMetric {
    /// `command` is split on whitespace into program and leading arguments.
    pub fn new(
        command: &str,
        orientation: Orientation,
        scratch_dir: impl Into<PathBuf>,
    ) -> Result<Self> {
        let mut parts = command.split_whitespace().map(str::to_owned);
        let program = parts
            .next()
            .ok_or_else(|| Error::Parameter("external metric command is empty".into()))?;
        Ok(ExternalMetric {
            name: format!("external:{command}"),
            program,
            args: parts.collect(),
            orientation,
            scratch_dir: scratch_dir.into(),
        })
    }
}

impl ImageMetric for ExternalMetric {
    fn name(&self) -> &str {
        &self.name
    }

    fn orientation(&self) -> Orientation {
        self.orientation
    }

    fn evaluate(&self, rendered: &Raster, groundtruth: &Raster) -> Result<f64> {
        check_pair(rendered, groundtruth)?;
        let dir = tempdir_in(&self.scratch_dir)?;
        let a = dir.join("rendered.png");
        let b = dir.join("groundtruth.png");
        raster::write_image(rendered, &a)?;
        raster::write_image(groundtruth, &b)?;
        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(&a)
            .arg(&b)
            .output()
            .map_err(|e| Error::io(&self.program, e));
        let _ = std::fs::remove_dir_all(&dir);
        let out = out?;
        if !out.status.success() {
            return Err(Error::Parameter(format!(
                "metric `{}` exited with {}: {}",
                self.program,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let text = String::from_utf8_lossy(&out.stdout);
        let value: f64 = text.trim().parse().map_err(|_| {
            Error::Parameter(format!(
                "metric `{}` printed {:?}, expected a number",
                self.program,
                text.trim()
            ))
        })?;
        if !value.is_finite() {
            return Err(Error::Numerical(format!(
                "metric `{}` returned {value}",
                self.program
            )));
        }
        Ok(value)
    }
}

fn tempdir_in(base: &Path) -> Result<PathBuf> {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let dir = base.join(format!(".metric-{}-{n}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

/// Lifts a scene from one input view of one frame.
pub trait Reconstructor: Send + Sync {
    fn reconstruct(&self, frame: usize, input_view: usize) -> Result<Box<dyn Field>>;

    /// Whether `reconstruct` may be called from several threads at once.
    fn concurrent(&self) -> bool {
        true
    }
}

impl<F> Reconstructor for F
where
    F: Fn(usize, usize) -> Result<Box<dyn Field>> + Send + Sync,
{
    fn reconstruct(&self, frame: usize, input_view: usize) -> Result<Box<dyn Field>> {
        self(frame, input_view)
    }
}

/// Runs an external lifting program per `(frame, input view)`: it receives
/// the input image path and an output triplane path as its last two
/// arguments, and the triplane it writes is decoded with `mlp`.
#[derive(Clone, Debug)]
pub struct ExternalReconstructor {
    program: String,
    args: Vec<String>,
    inputs: Vec<Vec<PathBuf>>,
    mlp: std::sync::Arc<MlpWeights>,
    scratch_dir: PathBuf,
}

impl ExternalReconstructor {
    /// `inputs[t][i]` is the image of frame `t` from view `i`.
    pub fn new(
        command: &str,
        inputs: Vec<Vec<PathBuf>>,
        mlp: MlpWeights,
        scratch_dir: impl Into<PathBuf>,
    ) -> Result<Self> {
        let mut parts = command.split_whitespace().map(str::to_owned);
        let program = parts
            .next()
            .ok_or_else(|| Error::Parameter("external reconstructor command is empty".into()))?;
        Ok(ExternalReconstructor {
            program,
            args: parts.collect(),
            inputs,
            mlp: mlp.into(),
            scratch_dir: scratch_dir.into(),
        })
    }
}

impl Reconstructor for ExternalReconstructor {
    fn reconstruct(&self, frame: usize, input_view: usize) -> Result<Box<dyn Field>> {
        let input = self
            .inputs
            .get(frame)
            .and_then(|row| row.get(input_view))
            .ok_or_else(|| {
                Error::Parameter(format!(
                    "no input image for frame {frame} view {input_view}"
                ))
            })?;
        std::fs::create_dir_all(&self.scratch_dir).map_err(|e| Error::io(&self.scratch_dir, e))?;
        let out = self
            .scratch_dir
            .join(format!("lift_t{frame}_v{input_view}.trpl"));
        let status = Command::new(&self.program)
            .args(&self.args)
            .arg(input)
            .arg(&out)
            .output()
            .map_err(|e| Error::io(&self.program, e))?;
        if !status.status.success() {
            return Err(Error::Parameter(format!(
                "reconstructor `{}` exited with {}: {}",
                self.program,
                status.status,
                String::from_utf8_lossy(&status.stderr).trim()
            )));
        }
        let tp = read_triplane(&out)?;
        Ok(Box::new(TriplaneField::new(tp, self.mlp.clone())?))
    }
}

/// A `(frame, input view)` pair whose reconstruction failed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MissingRow {
    pub frame: usize,
    pub input_view: usize,
    pub reason: String,
}

/// `S[t, i, j]`: score of the reconstruction of frame `t` from input view
/// `i`, rendered and compared at view `j`. Entries may be missing.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTensor {
    frames: usize,
    views: usize,
    metric: String,
    orientation: Orientation,
    scores: Vec<Option<f64>>,
    missing: Vec<MissingRow>,
}

impl ScoreTensor {
    pub fn new(
        frames: usize,
        views: usize,
        metric: impl Into<String>,
        scores: Vec<Option<f64>>,
    ) -> Result<Self> {
        if views < 2 || frames < 1 {
            return Err(Error::Parameter(format!(
                "score tensor needs T >= 1 and N >= 2, got T={frames} N={views}"
            )));
        }
        if scores.len() != frames * views * views {
            return Err(Error::Structural(format!(
                "{frames}x{views}x{views} tensor needs {} entries, got {}",
                frames * views * views,
                scores.len()
            )));
        }
        if scores.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("score entries must be finite".into()));
        }
        Ok(ScoreTensor {
            frames,
            views,
            metric: metric.into(),
            orientation: Orientation::HigherBetter,
            scores,
            missing: Vec::new(),
        })
    }

    /// Fully-present tensor from `f(t, i, j)`.
    pub fn from_fn(
        frames: usize,
        views: usize,
        metric: &str,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut scores = Vec::with_capacity(frames * views * views);
        for t in 0..frames {
            for i in 0..views {
                for j in 0..views {
                    scores.push(Some(f(t, i, j)));
                }
            }
        }
        Self::new(frames, views, metric, scores)
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn metric(&self) -> &str {
        &self.metric
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.frames, self.views, self.views)
    }

    pub fn missing(&self) -> &[MissingRow] {
        &self.missing
    }

    #[inline]
    pub fn get(&self, t: usize, i: usize, j: usize) -> Option<f64> {
        self.scores[(t * self.views + i) * self.views + j]
    }

    pub fn present_count(&self) -> usize {
        self.scores.iter().flatten().count()
    }

    /// Swaps the input-view and evaluation-view axes.
    pub fn transposed(&self) -> ScoreTensor {
        let n = self.views;
        let mut scores = vec![None; self.scores.len()];
        for t in 0..self.frames {
            for i in 0..n {
                for j in 0..n {
                    scores[(t * n + j) * n + i] = self.get(t, i, j);
                }
            }
        }
        ScoreTensor {
            scores,
            missing: Vec::new(),
            metric: self.metric.clone(),
            ..*self
        }
    }

    /// Per-cell mean over frames, skipping missing entries. Row-major `N x N`.
    pub fn time_averaged(&self) -> Vec<Option<f64>> {
        let n = self.views;
        (0..n * n)
            .map(|ij| {
                let vals: Vec<f64> = (0..self.frames)
                    .filter_map(|t| self.get(t, ij / n, ij % n))
                    .collect();
                mean(&vals)
            })
            .collect()
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sample standard deviation (divisor `n - 1`). Needs `n >= 2`.
pub fn sample_stddev(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    if values.iter().all(|&v| v == values[0]) {
        return Some(0.0);
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

/// Mean over all present entries.
pub fn overall_quality(s: &ScoreTensor) -> Result<f64> {
    let vals: Vec<f64> = s.scores.iter().flatten().copied().collect();
    mean(&vals).ok_or_else(|| Error::EmptyData("every score entry is missing".into()))
}

/// Mean over present entries whose input view differs from the evaluation
/// view.
pub fn nvs_quality(s: &ScoreTensor) -> Result<f64> {
    if s.views < 2 {
        return Err(Error::Parameter("novel-view quality needs N >= 2".into()));
    }
    let mut vals = Vec::new();
    for t in 0..s.frames {
        for i in 0..s.views {
            for j in (0..s.views).filter(|&j| j != i) {
                vals.extend(s.get(t, i, j));
            }
        }
    }
    mean(&vals).ok_or_else(|| Error::EmptyData("every off-diagonal entry is missing".into()))
}

/// For each `(t, i)` the stddev over novel evaluation views `j != i`,
/// averaged. Slices with fewer than two present entries are skipped.
pub fn novel_view_variation(s: &ScoreTensor) -> Result<f64> {
    if s.views < 3 {
        return Err(Error::Parameter(format!(
            "view variation needs N >= 3 for a non-degenerate stddev, got N={}",
            s.views
        )));
    }
    let mut devs = Vec::new();
    for t in 0..s.frames {
        for i in 0..s.views {
            let row: Vec<f64> = (0..s.views)
                .filter(|&j| j != i)
                .filter_map(|j| s.get(t, i, j))
                .collect();
            devs.extend(sample_stddev(&row));
        }
    }
    mean(&devs).ok_or_else(|| Error::EmptyData("no slice has two present entries".into()))
}

/// For each `(t, j)` the stddev over input views `i != j`, averaged.
/// Equal to [`novel_view_variation`] of the transposed tensor.
pub fn input_view_variation(s: &ScoreTensor) -> Result<f64> {
    novel_view_variation(&s.transposed())
}

/// The four aggregates plus bookkeeping, as written by the CLI.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub metric: String,
    pub frames: usize,
    pub views: usize,
    pub overall: f64,
    pub nvs: f64,
    pub nvv: f64,
    pub ivv: f64,
    pub present_entries: usize,
    pub missing: Vec<MissingRow>,
}

impl EvalReport {
    pub fn from_scores(s: &ScoreTensor) -> Result<Self> {
        Ok(EvalReport {
            metric: s.metric.clone(),
            frames: s.frames,
            views: s.views,
            overall: overall_quality(s)?,
            nvs: nvs_quality(s)?,
            nvv: novel_view_variation(s)?,
            ivv: input_view_variation(s)?,
            present_entries: s.present_count(),
            missing: s.missing.clone(),
        })
    }
}

/// Options for [`build_score_tensor`].
#[derive(Clone, Debug)]
pub struct ScoreConfig {
    /// Renderer settings; width and height are taken from the ground truth.
    pub render: RenderConfig,
    /// Snap renders to 8-bit levels before scoring, matching ground truth
    /// that was read back from 8-bit image files.
    pub quantize: bool,
}

/// Builds the score tensor. `groundtruth[t][j]` is the image of frame `t`
/// seen from `cameras[j]`.
pub fn build_score_tensor(
    reconstructor: &dyn Reconstructor,
    cameras: &[Camera],
    groundtruth: &[Vec<Raster>],
    metric: &dyn ImageMetric,
    cfg: &ScoreConfig,
) -> Result<ScoreTensor> {
    let n = cameras.len();
    let frames = groundtruth.len();
    if n < 2 || frames < 1 {
        return Err(Error::Parameter(format!(
            "need at least 2 cameras and 1 frame, got {n} and {frames}"
        )));
    }
    let first = groundtruth[0]
        .first()
        .ok_or_else(|| Error::Structural("ground-truth frame 0 has no views".into()))?;
    for (t, row) in groundtruth.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Structural(format!(
                "frame {t} has {} ground-truth views for {n} cameras",
                row.len()
            )));
        }
        for img in row {
            img.ensure_same_shape(first)?;
        }
    }
    let render_cfg = cfg.render.clone().with_size(first.width(), first.height());

    let score_row = |(t, i): (usize, usize)| -> Result<std::result::Result<Vec<f64>, MissingRow>> {
        let field = match reconstructor.reconstruct(t, i) {
            Ok(f) => f,
            Err(e) => {
                return Ok(Err(MissingRow {
                    frame: t,
                    input_view: i,
                    reason: e.to_string(),
                }))
            }
        };
        cameras
            .iter()
            .enumerate()
            .map(|(j, cam)| {
                let img = render::render(&field, cam, &render_cfg)?;
                let rgb = if cfg.quantize {
                    img.rgb.quantized()
                } else {
                    img.rgb
                };
                metric.evaluate(&rgb, &groundtruth[t][j])
            })
            .collect::<Result<Vec<_>>>()
            .map(Ok)
    };
    let pairs: Vec<(usize, usize)> = (0..frames)
        .flat_map(|t| (0..n).map(move |i| (t, i)))
        .collect();
    let rows: Vec<_> = if reconstructor.concurrent() {
        pairs
            .into_par_iter()
            .map(score_row)
            .collect::<Result<_>>()?
    } else {
        pairs.into_iter().map(score_row).collect::<Result<_>>()?
    };

    let mut scores = Vec::with_capacity(frames * n * n);
    let mut missing = Vec::new();
    for row in rows {
        match row {
            Ok(vals) => scores.extend(vals.into_iter().map(Some)),
            Err(m) => {
                scores.extend(std::iter::repeat_n(None, n));
                missing.push(m);
            }
        }
    }
    let mut s =
        ScoreTensor::new(frames, n, metric.name(), scores)?.with_orientation(metric.orientation());
    s.missing = missing;
    Ok(s)
}

fn fmt_score(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Long-format CSV: header `t,i,j,score`, one row per entry, empty score
/// for missing entries.
pub fn export_scores(s: &ScoreTensor, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "i", "j", "score"])?;
    for t in 0..s.frames {
        for i in 0..s.views {
            for j in 0..s.views {
                w.write_record([
                    t.to_string(),
                    i.to_string(),
                    j.to_string(),
                    fmt_score(s.get(t, i, j)),
                ])?;
            }
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    crate::io::write_atomic(path, &bytes)
}

/// Frame-averaged `N x N` matrix: header `i,j0,j1,...`, one row per input view.
pub fn export_mean_matrix(s: &ScoreTensor, path: &Path) -> Result<()> {
    let n = s.views;
    let avg = s.time_averaged();
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = std::iter::once("i".to_string())
        .chain((0..n).map(|j| format!("j{j}")))
        .collect();
    w.write_record(&header)?;
    for i in 0..n {
        let row: Vec<String> = std::iter::once(i.to_string())
            .chain((0..n).map(|j| fmt_score(avg[i * n + j])))
            .collect();
        w.write_record(&row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    crate::io::write_atomic(path, &bytes)
}

// viridis anchor colours at 0, 0.25, 0.5, 0.75, 1
const COLORMAP: [[f32; 3]; 5] = [
    [0.267, 0.005, 0.329],
    [0.229, 0.322, 0.546],
    [0.128, 0.567, 0.551],
    [0.369, 0.789, 0.383],
    [0.993, 0.906, 0.144],
];
const MISSING_COLOR: [f32; 3] = [0.5, 0.5, 0.5];

/// Maps `x` in `[0, 1]` onto the heatmap colour ramp.
pub fn colormap(x: f64) -> [f32; 3] {
    let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
    let pos = x * (COLORMAP.len() - 1) as f64;
    let k = (pos.floor() as usize).min(COLORMAP.len() - 2);
    let f = (pos - k as f64) as f32;
    std::array::from_fn(|c| COLORMAP[k][c] * (1.0 - f) + COLORMAP[k + 1][c] * f)
}

/// Heatmap image of the frame-averaged matrix with `cell` pixels per entry,
/// coloured from the smallest to the largest value. A constant matrix maps
/// to the bottom of the ramp.
pub fn heatmap(s: &ScoreTensor, cell: usize) -> Raster {
    let n = s.views;
    let avg = s.time_averaged();
    let present: Vec<f64> = avg.iter().flatten().copied().collect();
    let lo = present.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let size = n * cell;
    Raster::from_fn(size, size, 3, |x, y, px| {
        let color = match avg[(y / cell) * n + x / cell] {
            None => MISSING_COLOR,
            Some(v) if hi > lo => colormap((v - lo) / (hi - lo)),
            Some(_) => colormap(0.0),
        };
        px.copy_from_slice(&color);
    })
}

pub fn render_heatmap(s: &ScoreTensor, path: &Path) -> Result<()> {
    raster::write_image(&heatmap(s, 16), path)
}
