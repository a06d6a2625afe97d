//! End-to-end driver: one image through every stage, batches over a manifest,
//! and gate calibration from control folders.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::deconvolve::{dab_display, deconvolve_rgb, Stain, StainMatrix};
use crate::error::{Error, Result};
use crate::gate::{average_proportion, calibrate, gate, CalibrationResult, ThresholdGrid};
use crate::image::{GrayImage, RgbImage};
use crate::io::{is_supported_image, load_rgb, save_gray, save_mask, save_rgb};
use crate::mask::{build_tissue_mask, BinaryMask};
use crate::normalize::Normalizer;
use crate::orient::{find_rotation, OrientationFrame, RotationResult};
use crate::quantify::{
    aggregate, dab_percentage, render_overlay, write_failures, write_report, write_summary, MarkerSummary,
    QuantRecord,
};
use crate::segment::{label_image, select_dab_region, DabSegmentation};

/// Everything computed for one image.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub normalized: RgbImage,
    /// Hematoxylin display of the full normalized image.
    pub hematoxylin: GrayImage,
    /// Tissue mask before rotation.
    pub tissue: BinaryMask,
    pub rotation: RotationResult,
    pub frame: OrientationFrame,
    /// Original image rotated and cropped to the tissue.
    pub original_crop: RgbImage,
    /// DAB display of the cropped normalized image.
    pub dab_gray: GrayImage,
    pub dab_rgb: RgbImage,
    pub ap: f64,
    pub kept: bool,
    pub segmentation: Option<DabSegmentation>,
    pub dab_percent: Option<f64>,
}

impl Analysis {
    /// Rotated, cropped tissue mask that every downstream stage uses.
    pub fn tissue_crop(&self) -> &BinaryMask {
        &self.frame.mask
    }
}

/// Config plus the resources derived from it, ready to process images.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: PipelineConfig,
    normalizer: Normalizer,
    stains: StainMatrix,
}

struct Front {
    normalized: RgbImage,
    hematoxylin: GrayImage,
    tissue: BinaryMask,
    rotation: RotationResult,
    frame: OrientationFrame,
    original_crop: RgbImage,
    dab_gray: GrayImage,
    dab_rgb: RgbImage,
    ap: f64,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let normalizer = config.normalizer()?;
        let stains = config.stain.matrix()?;
        Ok(Self {
            config,
            normalizer,
            stains,
        })
    }

    fn front(&self, img: &RgbImage) -> Result<Front> {
        let cfg = &self.config;
        let normalized = self.normalizer.apply(img)?;
        let hematoxylin = deconvolve_rgb(&normalized, &self.stains)?.display(Stain::Hematoxylin);
        let tissue = build_tissue_mask(&hematoxylin, &cfg.mask)?;
        let rotation = find_rotation(&tissue, &cfg.rotation)?;
        let frame = OrientationFrame::new(&tissue, &rotation, cfg.margin)?;
        let original_crop = frame.apply(img);
        let channels = deconvolve_rgb(&frame.apply(&normalized), &self.stains)?;
        let (dab_gray, dab_rgb) = dab_display(&channels);
        let ap = average_proportion(&dab_gray, &cfg.gate, &frame.mask)?;
        Ok(Front {
            normalized,
            hematoxylin,
            tissue,
            rotation,
            frame,
            original_crop,
            dab_gray,
            dab_rgb,
            ap,
        })
    }

    /// Runs normalization through the AP measure only.
    pub fn average_proportion(&self, img: &RgbImage) -> Result<f64> {
        self.front(img).map(|f| f.ap)
    }

    /// Runs every stage on a decoded image; nothing is written.
    pub fn analyze(&self, img: &RgbImage) -> Result<Analysis> {
        let f = self.front(img)?;
        let kept = gate(f.ap, &self.config.gate);
        let (segmentation, dab_percent) = if kept {
            let seg = select_dab_region(&f.dab_rgb, &f.dab_gray, &f.frame.mask, &self.config.segment)?;
            let pct = dab_percentage(&seg.mask, &f.frame.mask)?;
            (Some(seg), Some(pct))
        } else {
            (None, None)
        };
        Ok(Analysis {
            normalized: f.normalized,
            hematoxylin: f.hematoxylin,
            tissue: f.tissue,
            rotation: f.rotation,
            frame: f.frame,
            original_crop: f.original_crop,
            dab_gray: f.dab_gray,
            dab_rgb: f.dab_rgb,
            ap: f.ap,
            kept,
            segmentation,
            dab_percent,
        })
    }

    /// Processes one file and writes its artifacts under `out_dir/<marker>/`.
    /// Failures come back as a failed record rather than an error.
    pub fn run_single(&self, path: &Path, image_id: &str, marker: &str, out_dir: &Path) -> QuantRecord {
        match self.try_run_single(path, image_id, marker, out_dir) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("{}: {e}", path.display());
                QuantRecord::failed(image_id, marker, e)
            }
        }
    }

    fn try_run_single(&self, path: &Path, image_id: &str, marker: &str, out_dir: &Path) -> Result<QuantRecord> {
        let img = load_rgb(path)?;
        let a = self.analyze(&img)?;
        let rel = |suffix: &str| format!("{marker}/{image_id}_{suffix}.png");
        if self.config.output.save_intermediates {
            save_rgb(&a.normalized, out_dir.join(rel("normalized")))?;
            save_gray(&a.hematoxylin, out_dir.join(rel("hematoxylin")))?;
            save_mask(&a.tissue, out_dir.join(rel("tissue")))?;
            save_gray(&a.dab_gray, out_dir.join(rel("dab")))?;
        }
        if self.config.output.save_rotated {
            save_rgb(&a.original_crop, out_dir.join(rel("rotated")))?;
            save_mask(&a.frame.mask, out_dir.join(rel("rotated_tissue")))?;
        }
        let mut record = QuantRecord {
            image_id: image_id.to_string(),
            marker: marker.to_string(),
            ap: Some(a.ap),
            gated_out: !a.kept,
            rotation_angle: Some(a.rotation.angle),
            ..QuantRecord::default()
        };
        if let Some(seg) = &a.segmentation {
            let overlay = render_overlay(&a.original_crop, &seg.mask, &self.config.overlay)?;
            let (overlay_path, mask_path) = (rel("overlay"), rel("mask"));
            save_rgb(&overlay, out_dir.join(&overlay_path))?;
            save_mask(&seg.mask, out_dir.join(&mask_path))?;
            if self.config.output.save_clusters {
                save_gray(&label_image(seg, &a.frame.mask), out_dir.join(rel("clusters")))?;
            }
            record.k = Some(seg.clustering.k);
            record.dab_percent = a.dab_percent;
            record.overlay_path = Some(overlay_path);
            record.mask_path = Some(mask_path);
        }
        log::info!(
            "{marker}/{image_id}: ap={:.3} kept={} dab={:?}",
            a.ap,
            a.kept,
            record.dab_percent
        );
        Ok(record)
    }
}

/// Role of a slide in gate calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Control {
    Positive,
    Negative,
    #[default]
    Unknown,
}

impl std::str::FromStr for Control {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Ok(Control::Positive),
            "negative" => Ok(Control::Negative),
            "" | "unknown" => Ok(Control::Unknown),
            other => Err(format!("unknown control label '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub marker: String,
    pub control: Control,
    /// Unique within the manifest and marker; names the output files.
    pub image_id: String,
}

/// Ordered list of images to process.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BatchManifest {
    pub entries: Vec<ManifestEntry>,
}

impl BatchManifest {
    fn push(&mut self, path: PathBuf, marker: String, control: Control, seen: &mut HashMap<(String, String), usize>) {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".into());
        let n = seen.entry((marker.clone(), stem.clone())).or_insert(0);
        *n += 1;
        let image_id = if *n == 1 { stem } else { format!("{stem}-{n}") };
        self.entries.push(ManifestEntry {
            path,
            marker,
            control,
            image_id,
        });
    }

    /// Reads a `path,marker[,control]` CSV with a header row. Relative paths
    /// are taken from the manifest's directory.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new(""));
        let bad = |e: csv::Error| Error::Manifest(format!("{}: {e}", path.display()));
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_path(path)
            .map_err(bad)?;
        let headers = reader.headers().map_err(bad)?.clone();
        let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
        let path_col = col("path").ok_or_else(|| Error::Manifest("missing 'path' column".into()))?;
        let marker_col = col("marker").ok_or_else(|| Error::Manifest("missing 'marker' column".into()))?;
        let control_col = col("control");
        let mut out = Self::default();
        let mut seen = HashMap::new();
        for (i, row) in reader.records().enumerate() {
            let row = row.map_err(bad)?;
            let line = i + 2;
            let p = row.get(path_col).unwrap_or("");
            let marker = row.get(marker_col).unwrap_or("");
            if p.is_empty() {
                return Err(Error::Manifest(format!("line {line}: empty path")));
            }
            if marker.is_empty() {
                return Err(Error::Manifest(format!("line {line}: empty marker")));
            }
            let control = control_col
                .and_then(|c| row.get(c))
                .unwrap_or("")
                .parse()
                .map_err(|e| Error::Manifest(format!("line {line}: {e}")))?;
            out.push(base.join(p), marker.to_string(), control, &mut seen);
        }
        if out.entries.is_empty() {
            return Err(Error::Manifest(format!("{} lists no images", path.display())));
        }
        Ok(out)
    }

    /// Collects images under `root/<marker>/...`, in sorted path order. Files
    /// directly under `root` are skipped.
    pub fn from_directory(root: &Path) -> Result<Self> {
        let mut out = Self::default();
        let mut seen = HashMap::new();
        for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
            let entry = entry.map_err(|e| Error::Manifest(e.to_string()))?;
            if !entry.file_type().is_file() || !is_supported_image(entry.path()) {
                continue;
            }
            let rel = entry.path().strip_prefix(root).expect("walk stays under root");
            let mut parts = rel.components();
            let marker = match (parts.next(), parts.next()) {
                (Some(m), Some(_)) => m.as_os_str().to_string_lossy().into_owned(),
                _ => continue,
            };
            out.push(entry.path().to_path_buf(), marker, Control::Unknown, &mut seen);
        }
        if out.entries.is_empty() {
            return Err(Error::Manifest(format!("no images found under {}", root.display())));
        }
        Ok(out)
    }

    /// Directory walk for a directory, CSV otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        if path.is_dir() {
            Self::from_directory(path)
        } else {
            Self::from_csv(path)
        }
    }
}

/// Result of a batch run.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    /// One record per manifest entry, in manifest order.
    pub records: Vec<QuantRecord>,
    pub summaries: Vec<MarkerSummary>,
}

impl BatchOutcome {
    pub fn failed_count(&self) -> usize {
        self.records.iter().filter(|r| r.is_failed()).count()
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::DegenerateInput(format!("cannot start worker threads: {e}")))
}

/// Processes every entry on `jobs` worker threads and writes `report.csv`,
/// `summary.csv` and `failures.csv` into `out_dir`.
pub fn run_batch(manifest: &BatchManifest, pipeline: &Pipeline, jobs: usize, out_dir: &Path) -> Result<BatchOutcome> {
    if manifest.entries.is_empty() {
        return Err(Error::Manifest("manifest is empty".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let records: Vec<QuantRecord> = thread_pool(jobs)?.install(|| {
        manifest
            .entries
            .par_iter()
            .map(|e| pipeline.run_single(&e.path, &e.image_id, &e.marker, out_dir))
            .collect()
    });
    let summaries = aggregate(&records);
    write_report(&records, BufWriter::new(File::create(out_dir.join("report.csv"))?))?;
    write_summary(&summaries, BufWriter::new(File::create(out_dir.join("summary.csv"))?))?;
    write_failures(&records, BufWriter::new(File::create(out_dir.join("failures.csv"))?))?;
    Ok(BatchOutcome { records, summaries })
}

fn images_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Manifest(e.to_string()))?;
        if entry.file_type().is_file() && is_supported_image(entry.path()) {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

/// Measures AP on every image in the two control folders, picks the gate
/// threshold, and writes `aps.csv`, `roc.csv` and `calibration.txt`.
/// Images that fail are logged and left out of the calibration.
pub fn calibrate_gate_cmd(
    positive_dir: &Path,
    negative_dir: &Path,
    pipeline: &Pipeline,
    jobs: usize,
    out_dir: &Path,
) -> Result<CalibrationResult> {
    let pos = images_in(positive_dir)?;
    let neg = images_in(negative_dir)?;
    let labelled: Vec<(&PathBuf, Control)> = pos
        .iter()
        .map(|p| (p, Control::Positive))
        .chain(neg.iter().map(|p| (p, Control::Negative)))
        .collect();
    let aps: Vec<Result<f64>> = thread_pool(jobs)?.install(|| {
        labelled
            .par_iter()
            .map(|(p, _)| load_rgb(p).and_then(|img| pipeline.average_proportion(&img)))
            .collect()
    });

    std::fs::create_dir_all(out_dir)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(out_dir.join("aps.csv"))?;
    w.write_record(["path", "control", "ap_percent", "error"])?;
    let (mut pos_aps, mut neg_aps) = (Vec::new(), Vec::new());
    for ((path, control), ap) in labelled.iter().zip(&aps) {
        let label = if *control == Control::Positive { "positive" } else { "negative" };
        match ap {
            Ok(v) => {
                if *control == Control::Positive {
                    pos_aps.push(*v);
                } else {
                    neg_aps.push(*v);
                }
                w.write_record([&path.display().to_string(), label, &format!("{v:.4}"), ""])?;
            }
            Err(e) => {
                log::warn!("{}: {e}", path.display());
                w.write_record([&path.display().to_string(), label, "", &e.to_string()])?;
            }
        }
    }
    w.flush()?;

    let result = calibrate(&pos_aps, &neg_aps, &ThresholdGrid::default())?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(out_dir.join("roc.csv"))?;
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in &result.roc_points {
        w.write_record([format!("{:.2}", p.threshold), format!("{:.6}", p.fpr), format!("{:.6}", p.tpr)])?;
    }
    w.flush()?;
    let summary = format!(
        "ap_threshold = {:.2}\nauc = {:.6}\nyouden_j = {:.6}\npositives = {}\nnegatives = {}\npixel_threshold = {}\n",
        result.ap_threshold,
        result.auc,
        result.youden_j,
        pos_aps.len(),
        neg_aps.len(),
        pipeline.config.gate.pixel_threshold,
    );
    std::fs::write(out_dir.join("calibration.txt"), summary)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{stripe_phantom, PhantomSpec};

    fn small(seed: u64, dab: f64) -> RgbImage {
        stripe_phantom(&PhantomSpec {
            width: 320,
            height: 240,
            length: 240.0,
            thickness: 60.0,
            dab,
            seed,
            ..PhantomSpec::default()
        })
        .image
    }

    #[test]
    fn phantom_kept_and_quantified() {
        let p = Pipeline::new(PipelineConfig::default()).unwrap();
        let a = p.analyze(&small(1, 1.0)).unwrap();
        assert!(a.kept);
        let pct = a.dab_percent.unwrap();
        assert!((pct - 30.0).abs() < 3.0, "{pct}");
        assert!(a.segmentation.unwrap().mask.is_subset_of(&a.frame.mask));
    }

    #[test]
    fn unstained_phantom_gated_out() {
        let p = Pipeline::new(PipelineConfig::default()).unwrap();
        let a = p.analyze(&small(2, 0.0)).unwrap();
        assert!(!a.kept, "ap = {}", a.ap);
        assert!(a.dab_percent.is_none() && a.segmentation.is_none());
    }

    #[test]
    fn blank_slide_is_empty_mask() {
        let p = Pipeline::new(PipelineConfig::default()).unwrap();
        assert!(matches!(p.analyze(&RgbImage::filled(64, 48, [255; 3])), Err(Error::EmptyMask)));
    }

    #[test]
    fn manifest_csv() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.csv");
        std::fs::write(&m, "path,marker,control\na/x.png,K10,positive\nb/x.png,K10,\nc.png,FLG,negative\n").unwrap();
        let b = BatchManifest::from_csv(&m).unwrap();
        let ids: Vec<_> = b.entries.iter().map(|e| e.image_id.as_str()).collect();
        assert_eq!(ids, ["x", "x-2", "c"]);
        assert_eq!(b.entries[0].path, dir.path().join("a/x.png"));
        assert_eq!(b.entries[2].control, Control::Negative);

        std::fs::write(&m, "path,marker\na.png,\n").unwrap();
        assert!(matches!(BatchManifest::from_csv(&m), Err(Error::Manifest(_))));
        std::fs::write(&m, "file,marker\na.png,K10\n").unwrap();
        assert!(matches!(BatchManifest::from_csv(&m), Err(Error::Manifest(_))));
    }

    #[test]
    fn manifest_directory() {
        let dir = tempfile::tempdir().unwrap();
        for p in ["K10/b.png", "K10/a.jpg", "FLG/s/c.png", "top.png", "K10/notes.txt"] {
            let p = dir.path().join(p);
            std::fs::create_dir_all(p.parent().unwrap()).unwrap();
            std::fs::write(p, b"").unwrap();
        }
        let b = BatchManifest::from_directory(dir.path()).unwrap();
        let got: Vec<_> = b.entries.iter().map(|e| (e.marker.as_str(), e.image_id.as_str())).collect();
        assert_eq!(got, [("FLG", "c"), ("K10", "a"), ("K10", "b")]);
    }
}
