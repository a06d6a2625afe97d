//! Prints the canonical configuration with every key and its default, or the
//! canonical form of a given config file.
//!
//! cargo run --example config [CONFIG_FILE]

use epidermaquant::config::PipelineConfig;

fn main() -> epidermaquant::error::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    print!("{}", cfg.to_canonical_string());
    Ok(())
}
