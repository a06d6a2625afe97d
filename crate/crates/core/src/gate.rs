//! Average-proportion (AP) measure of dark DAB pixels, the keep/discard gate,
//! and ROC/Youden calibration of the AP threshold from labelled controls.

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::mask::BinaryMask;

/// Pixels counted by the AP measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Region {
    #[default]
    WholeImage,
    TissueOnly,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::WholeImage => "whole",
            Region::TissueOnly => "tissue",
        }
    }
}

impl std::str::FromStr for Region {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "whole" => Ok(Region::WholeImage),
            "tissue" => Ok(Region::TissueOnly),
            other => Err(format!("unknown region '{other}' (expected whole or tissue)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateConfig {
    /// DAB display level; pixels strictly below it count as stained.
    pub pixel_threshold: u8,
    /// Minimum AP, in percent, for an image to be analysed further.
    pub ap_threshold: f64,
    pub region: Region,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            pixel_threshold: 130,
            ap_threshold: 0.6,
            region: Region::WholeImage,
        }
    }
}

/// Percentage of region pixels darker than `cfg.pixel_threshold`.
pub fn average_proportion(dab_display: &GrayImage, cfg: &GateConfig, mask: &BinaryMask) -> Result<f64> {
    let t = cfg.pixel_threshold;
    let (dark, total) = match cfg.region {
        Region::WholeImage => {
            let dark = dab_display.pixels().iter().filter(|&&v| v < t).count();
            (dark, dab_display.len())
        }
        Region::TissueOnly => {
            if mask.dimensions() != dab_display.dimensions() {
                return Err(Error::DimensionMismatch {
                    expected: dab_display.dimensions(),
                    actual: mask.dimensions(),
                });
            }
            let mut dark = 0;
            let mut total = 0;
            for (&v, &m) in dab_display.pixels().iter().zip(mask.as_slice()) {
                if m {
                    total += 1;
                    dark += (v < t) as usize;
                }
            }
            if total == 0 {
                return Err(Error::EmptyMask);
            }
            (dark, total)
        }
    };
    Ok(100.0 * dark as f64 / total as f64)
}

/// Keep when `ap >= cfg.ap_threshold`.
pub fn gate(ap: f64, cfg: &GateConfig) -> bool {
    ap >= cfg.ap_threshold
}

/// Candidate AP thresholds, in hundredths of a percent, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdGrid {
    pub start: u32,
    pub end: u32,
    pub step: u32,
}

impl Default for ThresholdGrid {
    /// 0.10 % to 1.00 % in 0.01 % steps.
    fn default() -> Self {
        Self {
            start: 10,
            end: 100,
            step: 1,
        }
    }
}

impl ThresholdGrid {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (self.start..=self.end)
            .step_by(self.step.max(1) as usize)
            .map(|h| h as f64 / 100.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub ap_threshold: f64,
    pub auc: f64,
    pub youden_j: f64,
    /// One point per grid threshold, in increasing threshold order.
    pub roc_points: Vec<RocPoint>,
}

fn rate_at_or_above(values: &[f64], t: f64) -> f64 {
    values.iter().filter(|&&v| v >= t).count() as f64 / values.len() as f64
}

/// Trapezoid area under the ROC points closed by `(0, 0)` and `(1, 1)`.
pub fn roc_auc(points: &[RocPoint]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Picks the grid threshold maximizing Youden's J = TPR - FPR, where an image
/// is called positive when its AP is at or above the threshold. Ties go to the
/// smallest threshold.
pub fn calibrate(positive_aps: &[f64], negative_aps: &[f64], grid: &ThresholdGrid) -> Result<CalibrationResult> {
    if positive_aps.is_empty() || negative_aps.is_empty() {
        return Err(Error::EmptyInput("calibration needs positive and negative AP values".into()));
    }
    let roc_points: Vec<RocPoint> = grid
        .values()
        .map(|t| RocPoint {
            threshold: t,
            tpr: rate_at_or_above(positive_aps, t),
            fpr: rate_at_or_above(negative_aps, t),
        })
        .collect();
    let mut best: Option<(f64, f64)> = None;
    for p in &roc_points {
        let j = p.tpr - p.fpr;
        if best.is_none_or(|(_, bj)| j > bj) {
            best = Some((p.threshold, j));
        }
    }
    let (ap_threshold, youden_j) =
        best.ok_or_else(|| Error::EmptyInput("threshold grid has no candidates".into()))?;
    Ok(CalibrationResult {
        ap_threshold,
        auc: roc_auc(&roc_points),
        youden_j,
        roc_points,
    })
}
