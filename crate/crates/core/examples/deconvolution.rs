//! Splits a synthetic H-DAB slide into stain channels and checks the recovered
//! concentrations against the ones used to render it.
//!
//! cargo run --release --example deconvolution [OUT_DIR]

use epidermaquant::deconvolve::{dab_display, deconvolve_rgb, hdab_stain_matrix, Stain};
use epidermaquant::io::{save_gray, save_rgb};
use epidermaquant::synth::{stripe_phantom, PhantomSpec};

fn main() -> epidermaquant::error::Result<()> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("eq-deconvolution"));
    let spec = PhantomSpec {
        noise: 0.0,
        specks: 0,
        ..PhantomSpec::default()
    };
    let slide = stripe_phantom(&spec);
    let m = hdab_stain_matrix();
    println!("stain matrix rows (unit OD vectors):");
    for (name, row) in ["hematoxylin", "dab", "residual"].iter().zip(m.rows()) {
        println!("  {name:<12} {:.4} {:.4} {:.4}", row[0], row[1], row[2]);
    }

    let channels = deconvolve_rgb(&slide.image, &m)?;
    let (w, h) = (spec.width, spec.height);
    // One pixel in the DAB band, one below it, one in the background.
    for (label, x, y) in [("dab band", w / 2, h / 2 - 50), ("tissue", w / 2, h / 2 + 40), ("background", 5, 5)] {
        let c = channels.concentrations()[(y * w + x) as usize];
        println!("{label:<11} rgb={:?} -> H={:.3} DAB={:.3} residual={:.3}", slide.image.get(x, y), c[0], c[1], c[2]);
    }

    let (dab_gray, dab_rgb) = dab_display(&channels);
    save_rgb(&slide.image, out.join("slide.png"))?;
    save_gray(&channels.display(Stain::Hematoxylin), out.join("hematoxylin.png"))?;
    save_gray(&dab_gray, out.join("dab.png"))?;
    save_rgb(&dab_rgb, out.join("dab_tinted.png"))?;
    println!("wrote channel images to {}", out.display());
    Ok(())
}
