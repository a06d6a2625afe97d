//! Finds the angle that lays a tilted tissue stripe flat, then rotates and
//! crops the slide to the tissue.
//!
//! cargo run --release --example rotation [TILT_DEGREES] [OUT_DIR]

use epidermaquant::deconvolve::{deconvolve_rgb, hdab_stain_matrix, Stain};
use epidermaquant::io::{save_mask, save_rgb};
use epidermaquant::mask::{build_tissue_mask, MaskParams};
use epidermaquant::orient::{find_rotation, find_rotation_exhaustive, OrientationFrame, RotationParams};
use epidermaquant::synth::{stripe_phantom, PhantomSpec};

fn main() -> epidermaquant::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let tilt: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(23.4);
    let out = args.next().map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("eq-rotation"));

    let slide = stripe_phantom(&PhantomSpec {
        width: 1200,
        height: 900,
        length: 900.0,
        thickness: 180.0,
        angle: tilt,
        ..PhantomSpec::default()
    });
    let hema = deconvolve_rgb(&slide.image, &hdab_stain_matrix())?.display(Stain::Hematoxylin);
    let mask = build_tissue_mask(&hema, &MaskParams::default())?;

    let params = RotationParams::default();
    let t = std::time::Instant::now();
    let fast = find_rotation(&mask, &params)?;
    let fast_time = t.elapsed();
    let t = std::time::Instant::now();
    let full = find_rotation_exhaustive(&mask, &params)?;
    let full_time = t.elapsed();
    println!("tilt {tilt:.1} deg, expected correction {:.1}", (180.0 - tilt).rem_euclid(180.0));
    println!("coarse-to-fine: {:.1} deg, peak {} ({:.2?})", fast.angle, fast.profile_peak, fast_time);
    println!("exhaustive:     {:.1} deg, peak {} ({:.2?})", full.angle, full.profile_peak, full_time);

    let frame = OrientationFrame::new(&mask, &fast, 10)?;
    let cropped = frame.apply(&slide.image);
    println!("cropped {}x{} -> {}x{}", slide.image.width(), slide.image.height(), cropped.width(), cropped.height());
    save_rgb(&cropped, out.join("rotated.png"))?;
    save_mask(&frame.mask, out.join("rotated_mask.png"))?;
    println!("wrote crop to {}", out.display());
    Ok(())
}
