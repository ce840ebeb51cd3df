//! Generate a small multi-view dataset and score a reconstructor whose error
//! grows with the obliqueness of its input view.
//!
//!     cargo run --example evaluate_views -- [out_dir]

use std::path::Path;

use trifuse::eval::{self, EvalReport, ScoreConfig};
use trifuse::synth::{self, PerturbReconstructor, RenderSettings};

pub fn run(out: &Path) -> trifuse::Result<()> {
    let data = out.join("dataset");
    let scene = synth::make_scene(7, 6, 2)?;
    let rig = synth::make_rig(5, synth::DEFAULT_RADIUS, 60f64.to_radians())?;
    let settings = RenderSettings {
        width: 48,
        height: 48,
        ..RenderSettings::for_radius(rig.radius())
    };
    let manifest = synth::generate_dataset(&scene, &rig, &settings, &data)?;
    let cameras = manifest.cameras(&data)?;
    let gt = manifest.groundtruth(&data)?;

    let rec = PerturbReconstructor::new(manifest.scene.clone(), &cameras, 0.06, 1)?;
    let cfg = ScoreConfig {
        render: settings.to_config(),
        quantize: true,
    };
    let scores = eval::build_score_tensor(&rec, &cameras, &gt, &eval::Psnr, &cfg)?;
    let report = EvalReport::from_scores(&scores)?;
    println!(
        "overall {:.2}  nvs {:.2}  nvv {:.3}  ivv {:.3}",
        report.overall, report.nvs, report.nvv, report.ivv
    );
    let mean = scores.time_averaged();
    let n = scores.views();
    for i in 0..n {
        let row: Vec<String> = (0..n)
            .map(|j| format!("{:6.2}", mean[i * n + j].unwrap_or(f64::NAN)))
            .collect();
        println!("input {i}: {}", row.join(" "));
    }
    eval::export_scores(&scores, &out.join("scores.csv"))?;
    eval::render_heatmap(&scores, &out.join("heatmap.png"))?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> trifuse::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "out/evaluate_views".into());
    run(Path::new(&out))
}
