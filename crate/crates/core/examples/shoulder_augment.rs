//! Bend the lower part of a scene with the shoulder warp, then jitter the
//! colours of the result.
//!
//!     cargo run --example shoulder_augment -- [out_dir]

use std::path::Path;

use nalgebra::Point3;
use trifuse::augment::{self, ColorAugment, ShoulderWarp};
use trifuse::field::{Blob, BlobField};
use trifuse::raster;
use trifuse::render;
use trifuse::synth;

fn bust() -> trifuse::Result<BlobField> {
    let blob = |center: [f64; 3], scale: [f64; 3], color: [f64; 3]| Blob {
        center,
        scale,
        peak: 40.0,
        color,
    };
    BlobField::new(vec![
        blob([0.0, 0.3, 0.0], [0.12, 0.15, 0.12], [0.9, 0.7, 0.6]),
        blob([0.0, -0.3, 0.0], [0.3, 0.12, 0.15], [0.2, 0.3, 0.7]),
    ])
}

pub fn run(out: &Path) -> trifuse::Result<()> {
    let field = bust()?;
    let cam = synth::arc_camera(synth::DEFAULT_RADIUS, 0.0)?;
    let cfg = synth::RenderSettings {
        width: 64,
        height: 64,
        ..synth::RenderSettings::for_radius(synth::DEFAULT_RADIUS)
    }
    .to_config();

    for (name, theta, phi) in [
        ("plain", 0.0, 0.0),
        ("roll", 0.35, 0.0),
        ("roll_yaw", -0.3, 0.25),
    ] {
        let warp = ShoulderWarp::new(theta, phi);
        let p = Point3::new(0.25, -0.4, 0.0);
        println!(
            "{name}: ({:.3}, {:.3}) -> {:.3?}",
            p.x,
            p.y,
            augment::warp_point(&warp, &p).coords.as_slice()
        );
        let img = augment::render_with_shoulder(&field, &cam, &cfg, &warp)?;
        raster::write_image(&img.rgb, &out.join(format!("{name}.png")))?;
    }

    let plain = render::render(&field, &cam, &cfg)?;
    for seed in 0..3 {
        let a = ColorAugment::random(seed);
        println!("color seed {seed}: {a:?}");
        let img = augment::color_augment(&plain.rgb, &a)?;
        raster::write_image(&img, &out.join(format!("color{seed}.png")))?;
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> trifuse::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "out/shoulder_augment".into());
    run(Path::new(&out))
}
