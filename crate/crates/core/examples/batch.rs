//! Writes a small set of slides for three markers, runs the full batch
//! pipeline on them and prints the per-marker summary.
//!
//! cargo run --release --example batch [WORK_DIR] [JOBS]

use std::path::PathBuf;

use epidermaquant::config::PipelineConfig;
use epidermaquant::io::save_rgb;
use epidermaquant::pipeline::{run_batch, BatchManifest, Pipeline};
use epidermaquant::synth::{stripe_phantom, PhantomSpec};

fn main() -> epidermaquant::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let work: PathBuf = args.next().map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("eq-batch"));
    let jobs: usize = args.next().and_then(|j| j.parse().ok()).unwrap_or(4);

    let markers = [("K10", 0.40), ("HSPA2", 0.25), ("FLG", 0.05)];
    let mut seed = 0;
    for (marker, fraction) in markers {
        for i in 0..3 {
            seed += 1;
            let spec = PhantomSpec {
                width: 480,
                height: 360,
                length: 360.0,
                thickness: 90.0,
                angle: (seed as f64 * 29.0) % 180.0,
                dab: if i == 2 && marker == "FLG" { 0.0 } else { 1.0 },
                dab_fraction: fraction + 0.02 * i as f64,
                seed,
                ..PhantomSpec::default()
            };
            save_rgb(&stripe_phantom(&spec).image, work.join("slides").join(marker).join(format!("slide{i}.png")))?;
        }
    }

    let manifest = BatchManifest::from_directory(&work.join("slides"))?;
    let pipeline = Pipeline::new(PipelineConfig::default())?;
    let outcome = run_batch(&manifest, &pipeline, jobs, &work.join("out"))?;
    for r in &outcome.records {
        println!(
            "{:<6} {:<7} ap {:>7.3}%  {}",
            r.marker,
            r.image_id,
            r.ap.unwrap_or(f64::NAN),
            r.dab_percent.map(|p| format!("dab {p:.2}%")).unwrap_or_else(|| "gated out".into())
        );
    }
    for s in &outcome.summaries {
        println!("{:<6} n={} gated={} median={:?}", s.marker, s.count, s.gated_out_count, s.median);
    }
    println!("reports in {}", work.join("out").display());
    Ok(())
}
