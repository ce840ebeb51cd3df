//! Undo a known distortion with a flow warp, fuse the result with a prior
//! where the input cannot see, and report the training losses.
//!
//!     cargo run --example fuse_triplanes -- [out_dir]

use std::path::Path;

use trifuse::fusion::{self, FlowField, LossComponents, LossWeights};
use trifuse::triplane::{self, Triplane};
use trifuse::visibility::{MaskTriplane, OcclusionMask, VisibilityTriplane};

pub fn run(out: &Path) -> trifuse::Result<()> {
    let r = 64;
    let gt = Triplane::procedural(1, 16, r)?;
    // the "raw" triplane is the truth shifted two texels right
    let raw = fusion::warp_triplane(&gt, &FlowField::constant(r, -2.0, 0.0)?)?;
    let undist = fusion::warp_triplane(&raw, &FlowField::constant(r, 2.0, 0.0)?)?;
    let prior = Triplane::procedural(2, 16, r)?;

    // the input sees the left half of every plane, the prior sees everything
    let left = MaskTriplane::from_fn(r, |_, _, u| if u < r / 2 { 1.0 } else { 0.0 });
    let vis_undist = VisibilityTriplane::new(left.clone())?;
    let vis_prior = VisibilityTriplane::ones(r);
    let fused = fusion::fuse_triplanes(&undist, &prior, &vis_undist, &vis_prior, 2)?;
    let occ = OcclusionMask::new(MaskTriplane::from_fn(
        r,
        |_, _, u| if u < r / 2 { 0.0 } else { 1.0 },
    ))?;

    let losses = LossComponents {
        undist: fusion::loss_undist(&undist, &gt)?,
        vis: fusion::loss_vis(&left, &left, vis_prior.masks(), vis_prior.masks())?,
        fusion: fusion::loss_fusion(&fused, &gt, &left, &occ)?,
        render: 0.0,
    };
    println!("raw vs gt      {:.4}", fusion::loss_undist(&raw, &gt)?);
    println!("undist vs gt   {:.4}", losses.undist);
    println!("fused vs gt    {:.4}", losses.fusion);
    println!(
        "total          {:.4}",
        fusion::loss_total(&losses, &LossWeights::default())?
    );
    triplane::write_triplane(&fused, &out.join("fused.trpl"))?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> trifuse::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "out/fuse_triplanes".into());
    run(Path::new(&out))
}
