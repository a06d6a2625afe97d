//! Percent-DAB statistic, contour overlays, per-marker aggregation and the CSV
//! reports.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::mask::{dilate, BinaryMask, DiskSE};
use crate::stats::percentile;

/// Outcome for one image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuantRecord {
    pub image_id: String,
    pub marker: String,
    /// Average proportion of dark DAB pixels, percent.
    pub ap: Option<f64>,
    pub gated_out: bool,
    /// Number of clusters chosen, absent when gated out.
    pub k: Option<usize>,
    /// DAB area over tissue area, percent; present iff the image was analysed.
    pub dab_percent: Option<f64>,
    pub rotation_angle: Option<f64>,
    pub overlay_path: Option<String>,
    pub mask_path: Option<String>,
    /// Set when the image could not be processed.
    pub error: Option<String>,
}

impl QuantRecord {
    pub fn failed(image_id: impl Into<String>, marker: impl Into<String>, error: impl ToString) -> Self {
        Self {
            image_id: image_id.into(),
            marker: marker.into(),
            error: Some(error.to_string()),
            ..Self::default()
        }
    }

    pub fn is_failed(&self) -> bool {
        self.error.is_some()
    }
}

/// `100 * |dab| / |tissue|`; the DAB mask must lie inside the tissue mask.
pub fn dab_percentage(dab_mask: &BinaryMask, tissue_mask: &BinaryMask) -> Result<f64> {
    if dab_mask.dimensions() != tissue_mask.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: tissue_mask.dimensions(),
            actual: dab_mask.dimensions(),
        });
    }
    let tissue = tissue_mask.count();
    if tissue == 0 {
        return Err(Error::EmptyMask);
    }
    let outside = dab_mask
        .as_slice()
        .iter()
        .zip(tissue_mask.as_slice())
        .filter(|(&d, &t)| d && !t)
        .count();
    if outside > 0 {
        return Err(Error::SubsetViolation { outside });
    }
    Ok(100.0 * dab_mask.count() as f64 / tissue as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverlayStyle {
    pub color: [u8; 3],
    /// Contour width in pixels; widths above 1 dilate the 1-px contour.
    pub thickness: u32,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self {
            color: [0, 255, 0],
            thickness: 1,
        }
    }
}

/// Pixels painted by [`render_overlay`].
pub fn overlay_contour(dab_mask: &BinaryMask, style: &OverlayStyle) -> BinaryMask {
    let contour = dab_mask.boundary();
    match style.thickness {
        0 | 1 => contour,
        t => dilate(&contour, DiskSE::new(t - 1).expect("radius >= 1")),
    }
}

/// Draws the outline of `dab_mask` onto `original`.
pub fn render_overlay(original: &RgbImage, dab_mask: &BinaryMask, style: &OverlayStyle) -> Result<RgbImage> {
    if original.dimensions() != dab_mask.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: original.dimensions(),
            actual: dab_mask.dimensions(),
        });
    }
    let contour = overlay_contour(dab_mask, style);
    let mut out = original.clone();
    for (p, &c) in out.pixels_mut().iter_mut().zip(contour.as_slice()) {
        if c {
            *p = style.color;
        }
    }
    Ok(out)
}

/// Per-marker distribution of `dab_percent` over analysed images.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerSummary {
    pub marker: String,
    pub count: usize,
    pub gated_out_count: usize,
    pub failed_count: usize,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
}

/// Groups records by marker (sorted by name). Quartiles interpolate linearly
/// between order statistics, so an even-sized median is the midpoint.
pub fn aggregate(records: &[QuantRecord]) -> Vec<MarkerSummary> {
    let mut groups: BTreeMap<&str, (Vec<f64>, usize, usize)> = BTreeMap::new();
    for r in records {
        let g = groups.entry(r.marker.as_str()).or_default();
        if r.is_failed() {
            g.2 += 1;
        } else if r.gated_out {
            g.1 += 1;
        } else if let Some(p) = r.dab_percent {
            g.0.push(p);
        }
    }
    groups
        .into_iter()
        .map(|(marker, (values, gated, failed))| MarkerSummary {
            marker: marker.to_string(),
            count: values.len(),
            gated_out_count: gated,
            failed_count: failed,
            median: percentile(&values, 50.0),
            q1: percentile(&values, 25.0),
            q3: percentile(&values, 75.0),
        })
        .collect()
}

pub const REPORT_HEADER: [&str; 8] = [
    "image_id",
    "marker",
    "ap_percent",
    "gated_out",
    "k",
    "dab_percent",
    "rotation_deg",
    "overlay_path",
];

pub const SUMMARY_HEADER: [&str; 6] = ["marker", "count", "gated_out_count", "median", "q1", "q3"];

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map(|v| format!("{v:.decimals$}")).unwrap_or_default()
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

/// Per-image report. Failed images keep their identifiers and leave every
/// measurement blank.
pub fn write_report<W: Write>(records: &[QuantRecord], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in records {
        let gated = if r.is_failed() { String::new() } else { r.gated_out.to_string() };
        w.write_record([
            r.image_id.clone(),
            r.marker.clone(),
            fmt_opt(r.ap, 4),
            gated,
            r.k.map(|k| k.to_string()).unwrap_or_default(),
            fmt_opt(r.dab_percent, 4),
            fmt_opt(r.rotation_angle, 1),
            r.overlay_path.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(summaries: &[MarkerSummary], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for s in summaries {
        w.write_record([
            s.marker.clone(),
            s.count.to_string(),
            s.gated_out_count.to_string(),
            fmt_opt(s.median, 4),
            fmt_opt(s.q1, 4),
            fmt_opt(s.q3, 4),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `image_id,marker,error` rows for images that could not be processed.
pub fn write_failures<W: Write>(records: &[QuantRecord], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["image_id", "marker", "error"])?;
    for r in records.iter().filter(|r| r.is_failed()) {
        w.write_record([&r.image_id, &r.marker, r.error.as_deref().unwrap_or_default()])?;
    }
    w.flush()?;
    Ok(())
}
