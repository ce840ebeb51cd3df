//! Render a seeded blob scene from every camera of an arc rig and write the
//! colour images and depth maps.
//!
//!     cargo run --example render_scene -- [out_dir]

use std::path::Path;

use trifuse::raster;
use trifuse::render;
use trifuse::synth::{self, RenderSettings};

pub fn run(out: &Path) -> trifuse::Result<()> {
    let scene = synth::make_scene(7, 8, 1)?;
    let rig = synth::make_rig(4, synth::DEFAULT_RADIUS, 60f64.to_radians())?;
    let cfg = RenderSettings {
        width: 64,
        height: 64,
        ..RenderSettings::for_radius(rig.radius())
    }
    .to_config();
    let field = scene.frame(0)?;
    for (k, (cam, yaw)) in rig.cameras().iter().zip(rig.yaws()).enumerate() {
        let ray = cam.ray(cfg.width / 2, cfg.height / 2, cfg.width);
        let img = render::render(&field, cam, &cfg)?;
        let covered = img.alpha.data().iter().filter(|&&a| a >= 0.5).count();
        println!(
            "view {k}: yaw {:+6.1} deg, centre ray dir {:.3?}, {covered} opaque pixels",
            yaw.to_degrees(),
            ray.direction.as_slice()
        );
        raster::write_image(&img.rgb, &out.join(format!("view{k}.png")))?;
        raster::write_depth(&img.valid_depth(), &out.join(format!("view{k}_depth.imgf")))?;
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> trifuse::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "out/render_scene".into());
    run(Path::new(&out))
}
