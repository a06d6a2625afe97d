//! Builds the tissue mask of a slide littered with debris and compares it with
//! the rendered ground truth.
//!
//! cargo run --release --example tissue_mask [OUT_DIR]

use epidermaquant::deconvolve::{deconvolve_rgb, hdab_stain_matrix, Stain};
use epidermaquant::io::save_mask;
use epidermaquant::mask::{build_tissue_mask, label_components, otsu_threshold, threshold_dark, Connectivity, MaskParams};
use epidermaquant::synth::{stripe_phantom, PhantomSpec};

fn main() -> epidermaquant::error::Result<()> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("eq-tissue-mask"));
    let slide = stripe_phantom(&PhantomSpec {
        angle: 12.0,
        specks: 40,
        seed: 11,
        ..PhantomSpec::default()
    });
    let hema = deconvolve_rgb(&slide.image, &hdab_stain_matrix())?.display(Stain::Hematoxylin);

    let level = otsu_threshold(&hema);
    let raw = threshold_dark(&hema, level);
    let (_, sizes) = label_components(&raw, Connectivity::Eight);
    println!("otsu level {level}: {} raw pixels in {} components", raw.count(), sizes.len());

    let mask = build_tissue_mask(&hema, &MaskParams::default())?;
    let truth = &slide.tissue;
    let inter = mask.as_slice().iter().zip(truth.as_slice()).filter(|(a, b)| **a && **b).count();
    let union = mask.as_slice().iter().zip(truth.as_slice()).filter(|(a, b)| **a || **b).count();
    println!(
        "final mask: {} px, ground truth {} px, jaccard {:.4}",
        mask.count(),
        truth.count(),
        inter as f64 / union as f64
    );

    save_mask(&raw, out.join("raw.png"))?;
    save_mask(&mask, out.join("tissue.png"))?;
    println!("wrote masks to {}", out.display());
    Ok(())
}
