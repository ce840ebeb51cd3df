//! Visibility triplanes of a frontal and an oblique view, and the occlusion
//! mask of texels only the frontal view sees.
//!
//!     cargo run --example visibility_masks -- [out_dir]

use std::path::Path;

use trifuse::synth::{self, RenderSettings};
use trifuse::triplane::Plane;
use trifuse::visibility::{self, VisibilityConfig};

pub fn run(out: &Path) -> trifuse::Result<()> {
    let field = synth::make_scene(3, 8, 1)?.frame(0)?;
    let cfg = RenderSettings {
        width: 96,
        height: 96,
        ..RenderSettings::for_radius(synth::DEFAULT_RADIUS)
    }
    .to_config();
    let vis_cfg = VisibilityConfig {
        resolution: 64,
        dilation: 1,
    };
    let front = synth::arc_camera(synth::DEFAULT_RADIUS, 0.0)?;
    let side = synth::arc_camera(synth::DEFAULT_RADIUS, 75f64.to_radians())?;
    let vis_front = visibility::visibility_for(&field, &front, &cfg, &vis_cfg)?;
    let vis_side = visibility::visibility_for(&field, &side, &cfg, &vis_cfg)?;
    let occ = visibility::occlusion_mask(&vis_front, &vis_side)?;
    for plane in Plane::ALL {
        let occluded = (0..64)
            .flat_map(|v| (0..64).map(move |u| (v, u)))
            .filter(|&(v, u)| occ.masks().get(plane, v, u) > 0.5)
            .count();
        println!(
            "{:>2}: frontal {:4}  oblique {:4}  occluded {:4}",
            plane.name(),
            vis_front.count(plane),
            vis_side.count(plane),
            occluded
        );
    }
    visibility::write_masks(vis_front.masks(), &out.join("frontal.imgf"))?;
    visibility::write_masks(vis_side.masks(), &out.join("oblique.imgf"))?;
    visibility::write_masks(occ.masks(), &out.join("occlusion.imgf"))?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> trifuse::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "out/visibility_masks".into());
    run(Path::new(&out))
}
