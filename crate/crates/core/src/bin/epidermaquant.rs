use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use epidermaquant::config::{PipelineConfig, CONFIG_ENV};
use epidermaquant::pipeline::{calibrate_gate_cmd, run_batch, BatchManifest, Pipeline};
use epidermaquant::quantify::{aggregate, write_report, write_summary};

const EXIT_USAGE: u8 = 1;
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser)]
#[command(name = "epidermaquant", version, about = "DAB quantification for H-DAB stained epidermis images")]
struct Cli {
    /// Config file (`key = value` lines); built-in defaults when omitted.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantify every image of a manifest CSV or marker-per-subdirectory tree.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        save: SaveFlags,
    },
    /// Pick the AP gate threshold from positive and negative control folders.
    CalibrateGate {
        #[arg(long)]
        positive: PathBuf,
        #[arg(long)]
        negative: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Quantify one image.
    Single {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        marker: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        save: SaveFlags,
    },
}

/// Optional debugging artifacts, added to whatever the config enables.
#[derive(clap::Args, Clone, Copy)]
struct SaveFlags {
    /// Write the normalized image, stain displays and tissue mask.
    #[arg(long)]
    save_intermediates: bool,
    /// Write the rotated, cropped original and tissue mask.
    #[arg(long)]
    save_rotated: bool,
    /// Write a cluster label rendering.
    #[arg(long)]
    save_clusters: bool,
}

fn out_dir(arg: Option<PathBuf>, cfg: &PipelineConfig) -> Result<PathBuf, String> {
    arg.or_else(|| cfg.output.dir.clone())
        .ok_or_else(|| "no output directory: pass --out or set output.dir".to_string())
}

fn load_config(path: Option<&Path>) -> epidermaquant::error::Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::from_file(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut cfg = match load_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    if let Command::Run { save, .. } | Command::Single { save, .. } = &cli.command {
        cfg.output.save_intermediates |= save.save_intermediates;
        cfg.output.save_rotated |= save.save_rotated;
        cfg.output.save_clusters |= save.save_clusters;
    }
    let out = match &cli.command {
        Command::Run { out, .. } | Command::CalibrateGate { out, .. } | Command::Single { out, .. } => {
            out_dir(out.clone(), &cfg)
        }
    };
    let out = match out {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let pipeline = match Pipeline::new(cfg) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };

    let result = match cli.command {
        Command::Run { manifest, jobs, .. } => BatchManifest::load(&manifest)
            .and_then(|m| run_batch(&m, &pipeline, jobs, &out))
            .map(|o| {
                println!("{} image(s), {} failed; report in {}", o.records.len(), o.failed_count(), out.display());
                o.failed_count() > 0
            }),
        Command::CalibrateGate {
            positive,
            negative,
            jobs,
            ..
        } => calibrate_gate_cmd(&positive, &negative, &pipeline, jobs, &out).map(|r| {
            println!("ap_threshold = {:.2}  auc = {:.4}  youden_j = {:.4}", r.ap_threshold, r.auc, r.youden_j);
            false
        }),
        Command::Single { image, marker, .. } => {
            let id = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into());
            let record = pipeline.run_single(&image, &id, &marker, &out);
            let records = [record];
            std::fs::create_dir_all(&out)
                .map_err(Into::into)
                .and_then(|_| File::create(out.join("report.csv")).map_err(Into::into))
                .and_then(|f| write_report(&records, BufWriter::new(f)))
                .and_then(|_| File::create(out.join("summary.csv")).map_err(Into::into))
                .and_then(|f| write_summary(&aggregate(&records), BufWriter::new(f)))
                .map(|_| {
                    let r = &records[0];
                    match &r.error {
                        Some(e) => eprintln!("{}: failed: {e}", image.display()),
                        None => println!(
                            "{}: ap = {:.3}%  {}",
                            r.image_id,
                            r.ap.unwrap_or(0.0),
                            match r.dab_percent {
                                Some(p) => format!("dab = {p:.2}% (k = {})", r.k.unwrap_or(0)),
                                None => "gated out".into(),
                            }
                        ),
                    }
                    r.is_failed()
                })
        }
    };
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(EXIT_PARTIAL),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                epidermaquant::error::Error::Config { .. }
                | epidermaquant::error::Error::Manifest(_)
                | epidermaquant::error::Error::EmptyInput(_) => EXIT_USAGE,
                _ => EXIT_PARTIAL,
            };
            ExitCode::from(code)
        }
    }
}
