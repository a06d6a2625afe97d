//! Calibrates the AP gate from synthetic positive and negative controls.
//! Positives carry DAB bands of varying strength and size; negatives carry
//! none.
//!
//! cargo run --release --example gate_calibration

use epidermaquant::config::PipelineConfig;
use epidermaquant::gate::{calibrate, ThresholdGrid};
use epidermaquant::pipeline::Pipeline;
use epidermaquant::synth::{stripe_phantom, PhantomSpec};

fn main() -> epidermaquant::error::Result<()> {
    let pipeline = Pipeline::new(PipelineConfig::default())?;
    let slide = |seed: u64, dab: f64, fraction: f64| {
        stripe_phantom(&PhantomSpec {
            width: 400,
            height: 300,
            length: 300.0,
            thickness: 70.0,
            angle: (seed as f64 * 37.0) % 180.0,
            dab,
            dab_fraction: fraction,
            seed,
            ..PhantomSpec::default()
        })
        .image
    };

    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for seed in 0..8u64 {
        positives.push(pipeline.average_proportion(&slide(seed, 0.6 + 0.1 * seed as f64, 0.02 + 0.03 * seed as f64))?);
        negatives.push(pipeline.average_proportion(&slide(100 + seed, 0.0, 0.0))?);
    }
    println!("positive AP %: {:?}", positives.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>());
    println!("negative AP %: {:?}", negatives.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>());

    let result = calibrate(&positives, &negatives, &ThresholdGrid::default())?;
    println!(
        "chosen ap_threshold {:.2}%  youden J {:.3}  AUC {:.3}",
        result.ap_threshold, result.youden_j, result.auc
    );
    Ok(())
}
