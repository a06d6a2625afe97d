//! Runs the three color normalizers on a faintly stained slide and prints the
//! Lab statistics before and after.
//!
//! cargo run --release --example normalization [OUT_DIR]

use epidermaquant::io::save_rgb;
use epidermaquant::normalize::{
    histogram_specification, lab_stats, macenko_normalize_detailed, reinhard_normalize, LabStats, MacenkoParams,
};
use epidermaquant::synth::{reference_spec, stripe_phantom, PhantomSpec};

fn show(label: &str, s: &LabStats) {
    println!(
        "{label:<10} mean L={:6.2} a={:6.2} b={:6.2}   std L={:6.2} a={:6.2} b={:6.2}",
        s.mean[0], s.mean[1], s.mean[2], s.std[0], s.std[1], s.std[2]
    );
}

fn main() -> epidermaquant::error::Result<()> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("eq-normalization"));
    let faint = stripe_phantom(&PhantomSpec {
        hematoxylin: 0.25,
        dab: 0.45,
        seed: 4,
        ..PhantomSpec::default()
    })
    .image;
    let reference = stripe_phantom(&reference_spec()).image;

    show("source", &lab_stats(&faint));
    show("target", &LabStats::REFERENCE);

    let reinhard = reinhard_normalize(&faint, &LabStats::REFERENCE);
    show("reinhard", &lab_stats(&reinhard));

    let matched = histogram_specification(&faint, &reference);
    show("histogram", &lab_stats(&matched));

    let macenko = macenko_normalize_detailed(&faint, &MacenkoParams::default())?;
    show("macenko", &lab_stats(&macenko.image));
    for (name, v) in ["hematoxylin", "dab"].iter().zip(macenko.stains) {
        println!("  estimated {name:<12} {:.3} {:.3} {:.3}", v[0], v[1], v[2]);
    }

    for (name, img) in [("source", &faint), ("reinhard", &reinhard), ("histogram", &matched), ("macenko", &macenko.image)] {
        save_rgb(img, out.join(format!("{name}.png")))?;
    }
    println!("wrote images to {}", out.display());
    Ok(())
}
