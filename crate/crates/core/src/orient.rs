//! Rotation search that lays the tissue stripe horizontally, and the
//! mask-driven crop applied to every registered layer.
//!
//! The search scores an angle by the largest row count of the rotated mask's
//! contour pixels. A straight tissue edge lying along one image row gives the
//! sharpest peak, so the best angle is the one that brings the long edges of
//! the stripe horizontal.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{GrayImage, RgbImage};
use crate::mask::BinaryMask;

/// Rotation about the image center with canvas expansion. Positive angles turn
/// the content counter-clockwise as displayed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    pub angle: f64,
    cos: f64,
    sin: f64,
    src: (u32, u32),
    dst: (u32, u32),
}

fn snap(v: f64) -> f64 {
    if v.abs() < 1e-12 {
        0.0
    } else if (v.abs() - 1.0).abs() < 1e-12 {
        v.signum()
    } else {
        v
    }
}

impl Rotation {
    pub fn new(src_width: u32, src_height: u32, angle: f64) -> Self {
        let rad = angle.to_radians();
        let (cos, sin) = (snap(rad.cos()), snap(rad.sin()));
        let (w, h) = (src_width as f64, src_height as f64);
        let dw = (w * cos.abs() + h * sin.abs() - 1e-9).ceil().max(1.0) as u32;
        let dh = (w * sin.abs() + h * cos.abs() - 1e-9).ceil().max(1.0) as u32;
        Self {
            angle,
            cos,
            sin,
            src: (src_width, src_height),
            dst: (dw, dh),
        }
    }

    pub fn output_dimensions(&self) -> (u32, u32) {
        self.dst
    }

    fn centers(&self) -> ((f64, f64), (f64, f64)) {
        (
            ((self.src.0 as f64 - 1.0) / 2.0, (self.src.1 as f64 - 1.0) / 2.0),
            ((self.dst.0 as f64 - 1.0) / 2.0, (self.dst.1 as f64 - 1.0) / 2.0),
        )
    }

    /// Source position sampled by output pixel `(x, y)`.
    #[inline]
    pub fn source_of(&self, x: f64, y: f64) -> (f64, f64) {
        let ((scx, scy), (dcx, dcy)) = self.centers();
        let (u, v) = (x - dcx, y - dcy);
        (scx + u * self.cos - v * self.sin, scy + u * self.sin + v * self.cos)
    }

    /// Output position of source point `(x, y)`.
    #[inline]
    pub fn target_of(&self, x: f64, y: f64) -> (f64, f64) {
        let ((scx, scy), (dcx, dcy)) = self.centers();
        let (dx, dy) = (x - scx, y - scy);
        (dcx + dx * self.cos + dy * self.sin, dcy - dx * self.sin + dy * self.cos)
    }

    #[inline]
    fn sample_mask(&self, mask: &BinaryMask, x: u32, y: u32) -> bool {
        let (sx, sy) = self.source_of(x as f64, y as f64);
        mask.get_or_false(sx.round() as i64, sy.round() as i64)
    }

    /// Output-space rectangle `(x0, y0, x1, y1)` guaranteed to contain every
    /// output pixel that samples a foreground source pixel.
    fn foreground_window(&self, mask: &BinaryMask) -> Option<(u32, u32, u32, u32)> {
        let (bx0, by0, bx1, by1) = mask.bounding_box()?;
        let corners = [
            (bx0 as f64 - 1.0, by0 as f64 - 1.0),
            (bx1 as f64 + 1.0, by0 as f64 - 1.0),
            (bx0 as f64 - 1.0, by1 as f64 + 1.0),
            (bx1 as f64 + 1.0, by1 as f64 + 1.0),
        ];
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for (cx, cy) in corners {
            let (tx, ty) = self.target_of(cx, cy);
            x0 = x0.min(tx);
            y0 = y0.min(ty);
            x1 = x1.max(tx);
            y1 = y1.max(ty);
        }
        let clamp = |v: f64, hi: u32| v.clamp(0.0, (hi - 1) as f64) as u32;
        Some((
            clamp(x0.floor() - 1.0, self.dst.0),
            clamp(y0.floor() - 1.0, self.dst.1),
            clamp(x1.ceil() + 1.0, self.dst.0),
            clamp(y1.ceil() + 1.0, self.dst.1),
        ))
    }
}

/// Nearest-neighbor rotation of a mask; uncovered canvas is background.
pub fn rotate_mask(mask: &BinaryMask, angle: f64) -> BinaryMask {
    let rot = Rotation::new(mask.width(), mask.height(), angle);
    let (w, h) = rot.output_dimensions();
    let mut out = BinaryMask::new(w, h);
    if let Some((x0, y0, x1, y1)) = rot.foreground_window(mask) {
        for y in y0..=y1 {
            for x in x0..=x1 {
                if rot.sample_mask(mask, x, y) {
                    out.set(x, y, true);
                }
            }
        }
    }
    out
}

/// Count of foreground pixels in each row.
pub fn row_sum_profile(mask: &BinaryMask) -> Vec<u32> {
    mask.as_slice()
        .chunks(mask.width() as usize)
        .map(|row| row.iter().filter(|&&v| v).count() as u32)
        .collect()
}

/// Foreground pixels close enough to background (or the image edge) that a
/// rotated copy of them can land on the rotated contour.
///
/// An output contour pixel samples a foreground source pixel whose rounded
/// 4-neighbour samples lie within Chebyshev distance 2; near the canvas edge
/// the sampled pixel lies within about 2.2 px of the image edge. A radius of 4
/// covers both cases with room to spare.
struct ContourBand<'a> {
    mask: &'a BinaryMask,
    pixels: Vec<(u32, u32)>,
}

const BAND_RADIUS: usize = 4;

impl<'a> ContourBand<'a> {
    fn new(mask: &'a BinaryMask) -> Self {
        let (w, h) = (mask.width() as usize, mask.height() as usize);
        let r = BAND_RADIUS;
        let data = mask.as_slice();
        // full_h[i]: the horizontal run of 2r+1 pixels centered at i is all
        // foreground and inside the image.
        let mut full_h = vec![false; w * h];
        for y in 0..h {
            let row = &data[y * w..(y + 1) * w];
            let mut prefix = vec![0usize; w + 1];
            for x in 0..w {
                prefix[x + 1] = prefix[x] + row[x] as usize;
            }
            for x in r..w.saturating_sub(r) {
                full_h[y * w + x] = prefix[x + r + 1] - prefix[x - r] == 2 * r + 1;
            }
        }
        let mut pixels = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if !data[y * w + x] {
                    continue;
                }
                let interior = y >= r && y + r < h && (y - r..=y + r).all(|yy| full_h[yy * w + x]);
                if !interior {
                    pixels.push((x as u32, y as u32));
                }
            }
        }
        Self { mask, pixels }
    }

    fn profile(&self, angle: f64) -> Vec<u32> {
        let rot = Rotation::new(self.mask.width(), self.mask.height(), angle);
        let (dw, dh) = rot.output_dimensions();
        let mut profile = vec![0u32; dh as usize];
        let mut seen = vec![0u64; (dw as usize * dh as usize).div_ceil(64)];
        let sample = |x: i64, y: i64| {
            x >= 0 && y >= 0 && x < dw as i64 && y < dh as i64 && rot.sample_mask(self.mask, x as u32, y as u32)
        };
        for &(sx, sy) in &self.pixels {
            let (tx, ty) = rot.target_of(sx as f64, sy as f64);
            let (cx, cy) = (tx.round() as i64, ty.round() as i64);
            for y in cy - 1..=cy + 1 {
                if y < 0 || y >= dh as i64 {
                    continue;
                }
                for x in cx - 1..=cx + 1 {
                    if x < 0 || x >= dw as i64 {
                        continue;
                    }
                    let i = y as usize * dw as usize + x as usize;
                    if seen[i / 64] & (1 << (i % 64)) != 0 {
                        continue;
                    }
                    seen[i / 64] |= 1 << (i % 64);
                    if sample(x, y)
                        && !(sample(x - 1, y) && sample(x + 1, y) && sample(x, y - 1) && sample(x, y + 1))
                    {
                        profile[y as usize] += 1;
                    }
                }
            }
        }
        profile
    }
}

/// Row counts of contour pixels of the rotated mask; equals
/// `row_sum_profile(&rotate_mask(mask, angle).boundary())` without
/// materializing the rotated canvas.
pub fn rotated_boundary_profile(mask: &BinaryMask, angle: f64) -> Vec<u32> {
    ContourBand::new(mask).profile(angle)
}

/// Search grid and coarse-to-fine settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationParams {
    /// Angle grid step in degrees.
    pub step: f64,
    /// The exhaustive scan runs on a mask downsampled to at most this side.
    pub downsample_cap: u32,
    /// Half-width in degrees of the full-resolution refinement window.
    pub refine_window: f64,
}

impl Default for RotationParams {
    fn default() -> Self {
        Self {
            step: 0.1,
            downsample_cap: 512,
            refine_window: 1.0,
        }
    }
}

impl RotationParams {
    fn grid_len(&self) -> usize {
        (180.0 / self.step).round() as usize
    }

    fn angle_at(&self, idx: usize) -> f64 {
        let a = idx as f64 * self.step;
        (a * 1e9).round() / 1e9
    }
}

/// Outcome of the rotation search.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationResult {
    /// Degrees in `[0, 180)`, on the search grid.
    pub angle: f64,
    pub profile_peak: u32,
    /// Contour row counts at `angle`.
    pub profile: Vec<u32>,
}

// Max score, ties to the smallest index; independent of evaluation order.
fn best_of(scores: &[(usize, u32)]) -> (usize, u32) {
    *scores
        .iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .expect("non-empty candidate list")
}

fn evaluate(mask: &BinaryMask, params: &RotationParams, indices: &[usize]) -> Vec<(usize, u32)> {
    let band = ContourBand::new(mask);
    indices
        .par_iter()
        .map(|&i| (i, band.profile(params.angle_at(i)).into_iter().max().unwrap_or(0)))
        .collect()
}

/// Block downsampling by `factor`, majority vote per block.
pub fn downsample_mask(mask: &BinaryMask, factor: u32) -> BinaryMask {
    if factor <= 1 {
        return mask.clone();
    }
    let (w, h) = mask.dimensions();
    let (dw, dh) = (w.div_ceil(factor), h.div_ceil(factor));
    BinaryMask::from_fn(dw, dh, |bx, by| {
        let (x0, y0) = (bx * factor, by * factor);
        let (x1, y1) = ((x0 + factor).min(w), (y0 + factor).min(h));
        let mut on = 0;
        for y in y0..y1 {
            for x in x0..x1 {
                on += mask.get(x, y) as u32;
            }
        }
        2 * on >= (x1 - x0) * (y1 - y0)
    })
}

fn result_for(mask: &BinaryMask, angle: f64) -> RotationResult {
    let profile = rotated_boundary_profile(mask, angle);
    RotationResult {
        angle,
        profile_peak: profile.iter().copied().max().unwrap_or(0),
        profile,
    }
}

/// Scores every grid angle at full resolution.
pub fn find_rotation_exhaustive(mask: &BinaryMask, params: &RotationParams) -> Result<RotationResult> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let all: Vec<usize> = (0..params.grid_len()).collect();
    let (idx, _) = best_of(&evaluate(mask, params, &all));
    Ok(result_for(mask, params.angle_at(idx)))
}

/// Coarse-to-fine search: exhaustive scan on a downsampled mask, then a
/// full-resolution scan of the window around the coarse optimum.
pub fn find_rotation(mask: &BinaryMask, params: &RotationParams) -> Result<RotationResult> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let side = mask.width().max(mask.height());
    let factor = side.div_ceil(params.downsample_cap.max(1));
    if factor <= 1 {
        return find_rotation_exhaustive(mask, params);
    }
    let small = downsample_mask(mask, factor);
    let n = params.grid_len();
    let coarse_idx = if small.is_empty() {
        0
    } else {
        let all: Vec<usize> = (0..n).collect();
        best_of(&evaluate(&small, params, &all)).0
    };
    let reach = (params.refine_window / params.step).round() as isize;
    let mut window: Vec<usize> = (-reach..=reach)
        .map(|d| (coarse_idx as isize + d).rem_euclid(n as isize) as usize)
        .collect();
    window.sort_unstable();
    window.dedup();
    let (idx, _) = best_of(&evaluate(mask, params, &window));
    Ok(result_for(mask, params.angle_at(idx)))
}

/// Pixel-value resampling used for the registered image layers.
pub trait Resample: Sized {
    /// Bilinear sample of the rotated, cropped layer; uncovered area is white.
    fn resample(&self, rot: &Rotation, crop: CropRect) -> Self;
}

/// Inclusive crop rectangle in rotated-canvas coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl CropRect {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0 + 1
    }
}

#[inline]
fn bilinear<const C: usize>(fetch: impl Fn(i64, i64) -> Option<[u8; C]>, sx: f64, sy: f64, fill: [u8; C]) -> [u8; C] {
    let (fx, fy) = (sx.floor(), sy.floor());
    let (tx, ty) = (sx - fx, sy - fy);
    let (ix, iy) = (fx as i64, fy as i64);
    let taps = [
        (ix, iy, (1.0 - tx) * (1.0 - ty)),
        (ix + 1, iy, tx * (1.0 - ty)),
        (ix, iy + 1, (1.0 - tx) * ty),
        (ix + 1, iy + 1, tx * ty),
    ];
    let mut acc = [0.0f64; C];
    for (x, y, wgt) in taps {
        if wgt == 0.0 {
            continue;
        }
        let p = fetch(x, y).unwrap_or(fill);
        for c in 0..C {
            acc[c] += wgt * p[c] as f64;
        }
    }
    acc.map(|v| v.round().clamp(0.0, 255.0) as u8)
}

impl Resample for RgbImage {
    fn resample(&self, rot: &Rotation, crop: CropRect) -> Self {
        let (w, h) = (self.width() as i64, self.height() as i64);
        let fetch = |x: i64, y: i64| (x >= 0 && y >= 0 && x < w && y < h).then(|| self.get(x as u32, y as u32));
        RgbImage::from_fn(crop.width(), crop.height(), |x, y| {
            let (sx, sy) = rot.source_of((x + crop.x0) as f64, (y + crop.y0) as f64);
            bilinear(fetch, sx, sy, [255; 3])
        })
    }
}

impl Resample for GrayImage {
    fn resample(&self, rot: &Rotation, crop: CropRect) -> Self {
        let (w, h) = (self.width() as i64, self.height() as i64);
        let fetch = |x: i64, y: i64| (x >= 0 && y >= 0 && x < w && y < h).then(|| [self.get(x as u32, y as u32)]);
        GrayImage::from_fn(crop.width(), crop.height(), |x, y| {
            let (sx, sy) = rot.source_of((x + crop.x0) as f64, (y + crop.y0) as f64);
            bilinear(fetch, sx, sy, [255])[0]
        })
    }
}

/// Rotation plus crop window shared by every layer of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationFrame {
    pub rotation: Rotation,
    pub crop: CropRect,
    /// The rotated, cropped mask.
    pub mask: BinaryMask,
}

impl OrientationFrame {
    /// Rotates the mask, takes its bounding box grown by `margin` (clamped to
    /// the rotated canvas) and crops.
    pub fn new(mask: &BinaryMask, result: &RotationResult, margin: u32) -> Result<Self> {
        let rotation = Rotation::new(mask.width(), mask.height(), result.angle);
        let rotated = rotate_mask(mask, result.angle);
        let (bx0, by0, bx1, by1) = rotated.bounding_box().ok_or(Error::EmptyMask)?;
        let (cw, ch) = rotated.dimensions();
        let crop = CropRect {
            x0: bx0.saturating_sub(margin),
            y0: by0.saturating_sub(margin),
            x1: bx1.saturating_add(margin).min(cw - 1),
            y1: by1.saturating_add(margin).min(ch - 1),
        };
        let mask = rotated.crop(crop.x0, crop.y0, crop.x1, crop.y1);
        Ok(Self { rotation, crop, mask })
    }

    pub fn apply<T: Resample>(&self, layer: &T) -> T {
        layer.resample(&self.rotation, self.crop)
    }
}

/// Rotates `img` (bilinear) and `mask` (nearest) by `result.angle`, then crops
/// both to the mask bounding box grown by `margin`.
pub fn apply_orientation<T: Resample>(
    img: &T,
    mask: &BinaryMask,
    result: &RotationResult,
    margin: u32,
) -> Result<(T, BinaryMask)> {
    let frame = OrientationFrame::new(mask, result, margin)?;
    let out = frame.apply(img);
    Ok((out, frame.mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stripe(w: u32, h: u32, x0: u32, y0: u32, len: u32, thick: u32) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| (x0..x0 + len).contains(&x) && (y0..y0 + thick).contains(&y))
    }

    fn jaccard(a: &BinaryMask, b: &BinaryMask) -> f64 {
        let inter = a.as_slice().iter().zip(b.as_slice()).filter(|(&p, &q)| p && q).count();
        let union = a.as_slice().iter().zip(b.as_slice()).filter(|(&p, &q)| p || q).count();
        inter as f64 / union as f64
    }

    fn rotated_result(angle: f64) -> RotationResult {
        RotationResult {
            angle,
            profile_peak: 0,
            profile: vec![],
        }
    }

    #[test]
    fn zero_rotation_is_identity() {
        let m = stripe(50, 30, 5, 5, 30, 7);
        assert_eq!(rotate_mask(&m, 0.0), m);
    }

    #[test]
    fn quarter_turn_is_exact() {
        let (w, h) = (7u32, 4u32);
        let m = BinaryMask::from_fn(w, h, |x, y| (x * 3 + y * 5) % 4 == 0);
        let r = rotate_mask(&m, 90.0);
        assert_eq!(r.dimensions(), (h, w));
        for y in 0..h {
            for x in 0..w {
                assert_eq!(r.get(y, w - 1 - x), m.get(x, y));
            }
        }
    }

    #[test]
    fn double_rotation_overlap() {
        let m = stripe(600, 400, 100, 160, 400, 80);
        let back = rotate_mask(&rotate_mask(&m, 30.0), -30.0);
        // Canvas grew twice; compare on the centered window of the original size.
        let (bw, bh) = back.dimensions();
        let (ox, oy) = ((bw - 600) / 2, (bh - 400) / 2);
        let window = back.crop(ox, oy, ox + 599, oy + 399);
        assert!(jaccard(&window, &m) >= 0.98, "jaccard {}", jaccard(&window, &m));
    }

    #[test]
    fn row_profile_examples() {
        assert!(row_sum_profile(&BinaryMask::new(5, 3)).iter().all(|&v| v == 0));
        assert!(row_sum_profile(&BinaryMask::filled(5, 3, true)).iter().all(|&v| v == 5));
        let p = row_sum_profile(&stripe(1000, 1000, 300, 460, 400, 80));
        assert_eq!(p.iter().filter(|&&v| v == 400).count(), 80);
        assert_eq!(p.iter().filter(|&&v| v == 0).count(), 920);
    }

    #[test]
    fn windowed_profile_matches_materialized() {
        let m = stripe(120, 90, 20, 30, 70, 20);
        for angle in [0.0, 13.7, 45.0, 90.0, 121.3, 179.9] {
            let direct = row_sum_profile(&rotate_mask(&m, angle).boundary());
            assert_eq!(rotated_boundary_profile(&m, angle), direct, "angle {angle}");
        }
    }

    #[test]
    fn band_profile_on_full_and_edge_masks() {
        let full = BinaryMask::filled(37, 23, true);
        let edge = BinaryMask::from_fn(40, 30, |x, y| x < 15 || y > 25);
        for m in [&full, &edge] {
            for angle in [0.0, 0.1, 0.3, 1.0, 30.0, 44.9, 45.0, 89.9, 90.0, 135.0, 179.9] {
                let direct = row_sum_profile(&rotate_mask(m, angle).boundary());
                assert_eq!(rotated_boundary_profile(m, angle), direct, "angle {angle}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn band_profile_matches_materialized(
            w in 1u32..40,
            h in 1u32..40,
            density in 0.0f64..1.0,
            seed in any::<u64>(),
            tenths in 0u32..1800,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density));
            let angle = tenths as f64 / 10.0;
            let direct = row_sum_profile(&rotate_mask(&m, angle).boundary());
            prop_assert_eq!(rotated_boundary_profile(&m, angle), direct);
        }
    }

    #[test]
    fn horizontal_stripe_and_square_stay_put() {
        let p = RotationParams::default();
        let m = stripe(300, 200, 50, 60, 200, 40);
        assert_eq!(find_rotation(&m, &p).unwrap().angle, 0.0);
        let sq = stripe(200, 200, 50, 50, 100, 100);
        assert_eq!(find_rotation(&sq, &p).unwrap().angle, 0.0);
    }

    #[test]
    fn restores_thirty_degree_tilt() {
        let p = RotationParams::default();
        let tilted = rotate_mask(&stripe(600, 400, 100, 160, 400, 80), 30.0);
        let r = find_rotation(&tilted, &p).unwrap();
        assert!((r.angle - 150.0).abs() <= 0.2, "angle {}", r.angle);
        assert_eq!(r.profile_peak, *r.profile.iter().max().unwrap());
    }

    #[test]
    fn empty_mask_rejected() {
        let p = RotationParams::default();
        assert!(matches!(find_rotation(&BinaryMask::new(10, 10), &p), Err(Error::EmptyMask)));
    }

    #[test]
    fn crop_examples() {
        let m = stripe(200, 100, 40, 30, 100, 20);
        let img = GrayImage::filled(200, 100, 7);
        let (out, mask) = apply_orientation(&img, &m, &rotated_result(0.0), 0).unwrap();
        assert_eq!(mask.dimensions(), (100, 20));
        assert_eq!(out.dimensions(), (100, 20));
        assert!(mask.as_slice().iter().all(|&v| v));
        assert!(out.pixels().iter().all(|&v| v == 7));

        let (_, mask) = apply_orientation(&img, &m, &rotated_result(0.0), 10_000).unwrap();
        assert_eq!(mask.dimensions(), (200, 100));
    }

    #[test]
    fn oriented_crop_height_matches_thickness() {
        let tilted = rotate_mask(&stripe(600, 400, 100, 160, 400, 80), 30.0);
        let r = find_rotation(&tilted, &RotationParams::default()).unwrap();
        let img = GrayImage::filled(tilted.width(), tilted.height(), 100);
        let (_, mask) = apply_orientation(&img, &tilted, &r, 0).unwrap();
        assert!((mask.height() as i64 - 80).abs() <= 2, "height {}", mask.height());
        assert!(!mask.is_empty());
    }

    #[test]
    fn translation_invariance() {
        let p = RotationParams::default();
        let base = rotate_mask(&stripe(300, 300, 60, 120, 180, 40), 22.0);
        let (w, h) = base.dimensions();
        let shifted = BinaryMask::from_fn(w + 37, h + 11, |x, y| x >= 37 && y >= 11 && base.get(x - 37, y - 11));
        let a = find_rotation(&base, &p).unwrap();
        let b = find_rotation(&shifted, &p).unwrap();
        assert_eq!(a.angle, b.angle);
    }
}
