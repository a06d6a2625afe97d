//! Clusters the DAB rendering of a slide, compares k = 2 and k = 3 by the
//! Davies-Bouldin index, and measures the darkest cluster.
//!
//! cargo run --release --example segmentation [OUT_DIR]

use epidermaquant::deconvolve::{dab_display, deconvolve_rgb, hdab_stain_matrix, Stain};
use epidermaquant::io::save_gray;
use epidermaquant::mask::{build_tissue_mask, MaskParams};
use epidermaquant::quantify::dab_percentage;
use epidermaquant::segment::{davies_bouldin, extract_features_with_intensity, kmeans, label_image, select_dab_region, SegmentParams};
use epidermaquant::synth::{stripe_phantom, PhantomSpec};

fn main() -> epidermaquant::error::Result<()> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("eq-segmentation"));
    let slide = stripe_phantom(&PhantomSpec {
        dab_fraction: 0.35,
        nuclei: 40,
        ..PhantomSpec::default()
    });
    let channels = deconvolve_rgb(&slide.image, &hdab_stain_matrix())?;
    let tissue = build_tissue_mask(&channels.display(Stain::Hematoxylin), &MaskParams::default())?;
    let (dab_gray, dab_rgb) = dab_display(&channels);

    let params = SegmentParams::default();
    let features = extract_features_with_intensity(&dab_rgb, &dab_gray, &tissue)?;
    println!("{} tissue pixels, raw channel std {:.2?}", features.len(), features.raw_std);
    for k in 2..=3 {
        let c = kmeans(&features, k, params.seed)?;
        println!(
            "k={k}: DB {:.4}, sizes {:?}, mean display {:.1?}",
            davies_bouldin(&features, &c)?,
            c.sizes,
            c.mean_display_intensity
        );
    }

    let seg = select_dab_region(&dab_rgb, &dab_gray, &tissue, &params)?;
    let truth = dab_percentage(&slide.dab, &slide.tissue)?;
    println!(
        "chose k={}, DAB covers {:.2}% of tissue (rendered: {truth:.2}%)",
        seg.clustering.k,
        dab_percentage(&seg.mask, &tissue)?
    );
    save_gray(&label_image(&seg, &tissue), out.join("clusters.png"))?;
    println!("wrote cluster labels to {}", out.display());
    Ok(())
}
