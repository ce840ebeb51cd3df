//! Sample a procedural triplane at a few points, decode the features with a
//! seeded MLP and round-trip both through their binary formats.
//!
//!     cargo run --example triplane_decode -- [out_dir]

use std::path::Path;

use nalgebra::Point3;
use trifuse::mlp::{self, MlpWeights};
use trifuse::triplane::{self, Triplane};

pub fn run(out: &Path) -> trifuse::Result<()> {
    let tp = Triplane::procedural(0, 32, 64)?;
    let weights = MlpWeights::seeded(0, tp.channels())?;
    for p in [
        Point3::new(0.0, 0.0, 0.0),
        Point3::new(0.13, -0.27, 0.41),
        Point3::new(0.6, 0.6, -0.6),
    ] {
        let f = tp.sample(&p);
        let d = mlp::decode_mlp(&weights, &f)?;
        println!(
            "x = ({:+.2}, {:+.2}, {:+.2})  f'[0..3] = {:+.4?}  sigma = {:.4}  rgb = {:.3?}",
            p.x,
            p.y,
            p.z,
            &f[..3],
            d.sigma,
            d.color
        );
    }

    let tp_path = out.join("procedural.trpl");
    let mlp_path = out.join("decoder.mlp");
    triplane::write_triplane(&tp, &tp_path)?;
    mlp::write_mlp(&weights, &mlp_path)?;
    assert_eq!(triplane::read_triplane(&tp_path)?, tp);
    assert_eq!(mlp::read_mlp(&mlp_path)?, weights);
    println!("wrote {} and {}", tp_path.display(), mlp_path.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> trifuse::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "out/triplane_decode".into());
    run(Path::new(&out))
}
