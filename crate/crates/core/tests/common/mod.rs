use std::path::Path;

use epidermaquant::io::save_rgb;
use epidermaquant::synth::{stripe_phantom, PhantomSpec};

/// Small stained slide written as PNG.
pub fn write_slide(path: &Path, dab: f64, seed: u64) {
    let spec = PhantomSpec {
        width: 320,
        height: 240,
        length: 240.0,
        thickness: 60.0,
        angle: 6.0,
        dab,
        seed,
        ..PhantomSpec::default()
    };
    save_rgb(&stripe_phantom(&spec).image, path).unwrap();
}
