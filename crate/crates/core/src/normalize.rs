//! Color normalization: Reinhard transfer with a min-max stretch, RGB
//! histogram specification, and Macenko stain normalization.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::deconvolve::{od_pixel, DAB_OD, HEMATOXYLIN_OD};
use crate::error::{Error, Result};
use crate::image::{lab_to_pixel_f64, pixel_to_lab, stretch_to_u8, LabImage, RgbImage};
use crate::stats::{mean_std, percentile};

/// Default floor applied to Lab standard deviations.
pub const STD_FLOOR: f64 = 1e-6;

/// Per-channel Lab mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabStats {
    /// `[L, a, b]` means.
    pub mean: [f64; 3],
    /// `[L, a, b]` standard deviations, each at least the floor.
    pub std: [f64; 3],
}

impl LabStats {
    /// Target statistics of the bundled reference slide
    /// (`tests/fixtures/reference.png`).
    pub const REFERENCE: LabStats = LabStats {
        mean: [86.48713255530775, 4.707801659191229, -6.2977863968868855],
        std: [23.53888113787061, 7.992273940601426, 13.88537154779396],
    };

    pub fn with_floor(mut self, floor: f64) -> Self {
        for s in &mut self.std {
            *s = s.max(floor);
        }
        self
    }
}

impl Default for LabStats {
    fn default() -> Self {
        Self::REFERENCE
    }
}

fn stats_of(lab: &[[f64; 3]], floor: f64) -> LabStats {
    let mut mean = [0.0; 3];
    let mut std = [0.0; 3];
    for c in 0..3 {
        let (m, s) = mean_std(lab.iter().map(|p| p[c]));
        mean[c] = m;
        std[c] = s.max(floor);
    }
    LabStats { mean, std }
}

/// Lab statistics over all pixels, standard deviations floored at [`STD_FLOOR`].
pub fn lab_stats(img: &RgbImage) -> LabStats {
    lab_stats_with_floor(img, STD_FLOOR)
}

pub fn lab_stats_with_floor(img: &RgbImage, floor: f64) -> LabStats {
    let lab: Vec<[f64; 3]> = img.pixels().iter().map(|&p| pixel_to_lab(p)).collect();
    stats_of(&lab, floor)
}

/// Lab-space statistics transfer, `v' = (v - mu_src) * sigma_t / sigma_src + mu_t`.
pub fn reinhard_transfer(src: &RgbImage, target: &LabStats, floor: f64) -> LabImage {
    let lab: Vec<[f64; 3]> = src.pixels().iter().map(|&p| pixel_to_lab(p)).collect();
    let s = stats_of(&lab, floor);
    let t = target.with_floor(floor);
    let out = lab
        .iter()
        .map(|p| [0, 1, 2].map(|c| (p[c] - s.mean[c]) * (t.std[c] / s.std[c]) + t.mean[c]))
        .collect();
    LabImage::from_vec(src.width(), src.height(), out).expect("dimensions preserved")
}

/// Reinhard transfer followed by a per-RGB-channel min-max stretch.
pub fn reinhard_normalize(src: &RgbImage, target: &LabStats) -> RgbImage {
    reinhard_normalize_with_floor(src, target, STD_FLOOR)
}

pub fn reinhard_normalize_with_floor(src: &RgbImage, target: &LabStats, floor: f64) -> RgbImage {
    let lab = reinhard_transfer(src, target, floor);
    let rgb: Vec<[f64; 3]> = lab.pixels().iter().map(|&p| lab_to_pixel_f64(p)).collect();
    let channels: Vec<Vec<u8>> = (0..3)
        .map(|c| stretch_to_u8(&rgb.iter().map(|p| p[c]).collect::<Vec<_>>()))
        .collect();
    let data = (0..rgb.len())
        .map(|i| [channels[0][i], channels[1][i], channels[2][i]])
        .collect();
    RgbImage::from_vec(src.width(), src.height(), data).expect("dimensions preserved")
}

fn channel_cdf(img: &RgbImage, c: usize) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for p in img.pixels() {
        hist[p[c] as usize] += 1;
    }
    let mut acc = 0;
    for h in hist.iter_mut() {
        acc += *h;
        *h = acc;
    }
    hist
}

/// Per-channel histogram matching of `src` to `reference`.
///
/// Level `v` maps to the smallest reference level `z` whose cumulative share
/// is at least that of `v` in the source.
pub fn histogram_specification(src: &RgbImage, reference: &RgbImage) -> RgbImage {
    let (n_src, n_ref) = (src.len() as u128, reference.len() as u128);
    let mut luts = [[0u8; 256]; 3];
    for (c, lut) in luts.iter_mut().enumerate() {
        let cs = channel_cdf(src, c);
        let cr = channel_cdf(reference, c);
        let mut z = 0usize;
        for v in 0..256 {
            // cs[v] / n_src <= cr[z] / n_ref, cross-multiplied to stay exact
            while z < 255 && (cr[z] as u128) * n_src < (cs[v] as u128) * n_ref {
                z += 1;
            }
            lut[v] = z as u8;
        }
    }
    let data = src
        .pixels()
        .iter()
        .map(|p| [luts[0][p[0] as usize], luts[1][p[1] as usize], luts[2][p[2] as usize]])
        .collect();
    RgbImage::from_vec(src.width(), src.height(), data).expect("dimensions preserved")
}

/// Stain basis and concentration scale that Macenko output is mapped onto.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacenkoReference {
    /// Unit OD vectors, hematoxylin first.
    pub stains: [[f64; 3]; 2],
    /// Robust maximum concentration per stain.
    pub max_concentrations: [f64; 2],
}

impl Default for MacenkoReference {
    fn default() -> Self {
        let unit = |v: [f64; 3]| {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            v.map(|x| x / n)
        };
        Self {
            stains: [unit(HEMATOXYLIN_OD), unit(DAB_OD)],
            max_concentrations: [1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacenkoParams {
    /// Pixels with OD below this in any channel are treated as transparent.
    pub od_cutoff: f64,
    /// Angle percentile, in percent.
    pub alpha: f64,
    /// Concentration percentile, in percent.
    pub beta: f64,
    /// Minimum number of pixels above the cutoff.
    pub min_pixels: usize,
    pub reference: MacenkoReference,
}

impl Default for MacenkoParams {
    fn default() -> Self {
        Self {
            od_cutoff: 0.15,
            alpha: 1.0,
            beta: 99.0,
            min_pixels: 100,
            reference: MacenkoReference::default(),
        }
    }
}

/// Everything computed by one Macenko normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct MacenkoOutput {
    pub image: RgbImage,
    /// Estimated source stain vectors, hematoxylin first.
    pub stains: [[f64; 3]; 2],
    /// Source concentration percentiles at `beta`.
    pub source_max: [f64; 2],
    /// Per-pixel concentrations after rescaling to the reference maxima.
    pub concentrations: Vec<[f64; 2]>,
}

/// Estimates two stain OD vectors from the plane spanned by the two leading
/// principal directions of the OD cloud, using robust extreme angles.
pub fn estimate_stain_vectors(img: &RgbImage, params: &MacenkoParams) -> Result<[[f64; 3]; 2]> {
    let od: Vec<[f64; 3]> = img
        .pixels()
        .iter()
        .map(|&p| od_pixel(p))
        .filter(|o| o.iter().all(|&v| v >= params.od_cutoff))
        .collect();
    if od.len() < params.min_pixels.max(3) {
        return Err(Error::DegenerateInput(format!(
            "{} pixel(s) above OD cutoff {}, need {}",
            od.len(),
            params.od_cutoff,
            params.min_pixels.max(3)
        )));
    }

    let n = od.len() as f64;
    let mean = od.iter().fold([0.0; 3], |a, o| [a[0] + o[0], a[1] + o[1], a[2] + o[2]]).map(|s| s / n);
    let mut cov = Matrix3::zeros();
    for o in &od {
        let d = Vector3::new(o[0] - mean[0], o[1] - mean[1], o[2] - mean[2]);
        cov += d * d.transpose();
    }
    cov /= n - 1.0;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let basis: Vec<Vector3<f64>> = order[..2]
        .iter()
        .map(|&i| {
            let v = eig.eigenvectors.column(i).into_owned();
            if v.sum() < 0.0 {
                -v
            } else {
                v
            }
        })
        .collect();

    let angles: Vec<f64> = od
        .iter()
        .map(|o| {
            let v = Vector3::new(o[0], o[1], o[2]);
            v.dot(&basis[1]).atan2(v.dot(&basis[0]))
        })
        .collect();
    let lo = percentile(&angles, params.alpha).expect("non-empty");
    let hi = percentile(&angles, 100.0 - params.alpha).expect("non-empty");
    let along = |phi: f64| {
        let v = basis[0] * phi.cos() + basis[1] * phi.sin();
        let v = v / v.norm();
        [v[0], v[1], v[2]]
    };
    let (a, b) = (along(lo), along(hi));
    Ok(if a[0] >= b[0] { [a, b] } else { [b, a] })
}

/// Least-squares two-stain unmixing through the 2x2 normal equations.
fn unmix_two(stains: &[[f64; 3]; 2]) -> Option<impl Fn([f64; 3]) -> [f64; 2]> {
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let (s0, s1) = (stains[0], stains[1]);
    let (g00, g01, g11) = (dot(s0, s0), dot(s0, s1), dot(s1, s1));
    let det = g00 * g11 - g01 * g01;
    (det.abs() > 1e-12).then(move || {
        move |o: [f64; 3]| {
            let (b0, b1) = (dot(s0, o), dot(s1, o));
            [(g11 * b0 - g01 * b1) / det, (g00 * b1 - g01 * b0) / det]
        }
    })
}

/// Macenko normalization returning the intermediate estimates as well.
pub fn macenko_normalize_detailed(src: &RgbImage, params: &MacenkoParams) -> Result<MacenkoOutput> {
    let stains = estimate_stain_vectors(src, params)?;
    let solve = unmix_two(&stains)
        .ok_or_else(|| Error::DegenerateInput("estimated stain vectors are collinear".into()))?;
    let raw: Vec<[f64; 2]> = src.pixels().iter().map(|&p| solve(od_pixel(p))).collect();

    let mut source_max = [0.0; 2];
    for (s, m) in source_max.iter_mut().enumerate() {
        let col: Vec<f64> = raw.iter().map(|c| c[s]).collect();
        *m = percentile(&col, params.beta).expect("non-empty image");
        if !(*m > 0.0) {
            return Err(Error::DegenerateInput(format!("stain {s} has no positive concentration")));
        }
    }
    let scale = [
        params.reference.max_concentrations[0] / source_max[0],
        params.reference.max_concentrations[1] / source_max[1],
    ];
    let concentrations: Vec<[f64; 2]> = raw.iter().map(|c| [c[0] * scale[0], c[1] * scale[1]]).collect();

    let r = params.reference.stains;
    let data = concentrations
        .iter()
        .map(|c| {
            [0, 1, 2].map(|k| {
                let od = r[0][k] * c[0] + r[1][k] * c[1];
                (255.0 * 10f64.powf(-od)).round().clamp(0.0, 255.0) as u8
            })
        })
        .collect();
    Ok(MacenkoOutput {
        image: RgbImage::from_vec(src.width(), src.height(), data)?,
        stains,
        source_max,
        concentrations,
    })
}

pub fn macenko_normalize(src: &RgbImage, params: &MacenkoParams) -> Result<RgbImage> {
    macenko_normalize_detailed(src, params).map(|o| o.image)
}

/// Which normalization the pipeline applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizationMethod {
    #[default]
    Reinhard,
    HistogramSpecification,
    Macenko,
    None,
}

impl NormalizationMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Reinhard => "reinhard",
            Self::HistogramSpecification => "histogram",
            Self::Macenko => "macenko",
            Self::None => "none",
        }
    }
}

impl std::str::FromStr for NormalizationMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reinhard" => Ok(Self::Reinhard),
            "histogram" => Ok(Self::HistogramSpecification),
            "macenko" => Ok(Self::Macenko),
            "none" => Ok(Self::None),
            other => Err(format!(
                "unknown normalization method '{other}' (expected reinhard, histogram, macenko or none)"
            )),
        }
    }
}

/// A ready-to-apply normalizer with its reference data.
#[derive(Debug, Clone, PartialEq)]
pub enum Normalizer {
    Reinhard { target: LabStats, floor: f64 },
    HistogramSpecification { reference: RgbImage },
    Macenko(MacenkoParams),
    None,
}

impl Normalizer {
    pub fn apply(&self, img: &RgbImage) -> Result<RgbImage> {
        match self {
            Normalizer::Reinhard { target, floor } => Ok(reinhard_normalize_with_floor(img, target, *floor)),
            Normalizer::HistogramSpecification { reference } => Ok(histogram_specification(img, reference)),
            Normalizer::Macenko(params) => macenko_normalize(img, params),
            Normalizer::None => Ok(img.clone()),
        }
    }
}
