//! Tissue/background masking: Otsu binarization, binary morphology with a disk
//! structuring element, hole filling and largest-component selection.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Per-pixel boolean raster, `true` = foreground (tissue).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, false)
    }

    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_vec(width: u32, height: u32, data: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || width as usize * height as usize != data.len() {
            return Err(Error::InvalidDimensions {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.data[y as usize * width as usize + x as usize] = f(x, y);
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [bool] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Out-of-bounds coordinates read as background.
    #[inline]
    pub fn get_or_false(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && x < self.width as i64
            && y < self.height as i64
            && self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of the foreground.
    pub fn bounding_box(&self) -> Option<(u32, u32, u32, u32)> {
        let w = self.width as usize;
        let mut bb: Option<(u32, u32, u32, u32)> = None;
        for (i, _) in self.data.iter().enumerate().filter(|(_, &v)| v) {
            let (x, y) = ((i % w) as u32, (i / w) as u32);
            bb = Some(match bb {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
        bb
    }

    pub fn invert(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| !v).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.dimensions() == other.dimensions()
            && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Foreground pixels with at least one 4-neighbor outside the foreground
    /// (pixels beyond the image edge count as outside).
    pub fn boundary(&self) -> Self {
        let (w, h) = (self.width as i64, self.height as i64);
        let mut out = Self::new(self.width, self.height);
        for y in 0..h {
            for x in 0..w {
                if !self.get(x as u32, y as u32) {
                    continue;
                }
                let edge = !self.get_or_false(x - 1, y)
                    || !self.get_or_false(x + 1, y)
                    || !self.get_or_false(x, y - 1)
                    || !self.get_or_false(x, y + 1);
                if edge {
                    out.set(x as u32, y as u32, true);
                }
            }
        }
        out
    }

    /// Crops to the inclusive rectangle `(x0, y0, x1, y1)`.
    pub fn crop(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Self::from_fn(x1 - x0 + 1, y1 - y0 + 1, |x, y| self.get(x + x0, y + y0))
    }
}

/// Disk structuring element, footprint `{(dx, dy) : dx^2 + dy^2 <= r^2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiskSE {
    radius: u32,
}

impl DiskSE {
    pub fn new(radius: u32) -> Result<Self> {
        if radius == 0 {
            return Err(Error::DegenerateInput("disk radius must be >= 1".into()));
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn contains(&self, dx: i64, dy: i64) -> bool {
        let r = self.radius as i64;
        dx * dx + dy * dy <= r * r
    }
}

impl Default for DiskSE {
    fn default() -> Self {
        Self { radius: 15 }
    }
}

/// Pixel adjacency used for component labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(0, -1), (-1, 0), (1, 0), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (0, -1),
                (1, -1),
                (-1, 0),
                (1, 0),
                (-1, 1),
                (0, 1),
                (1, 1),
            ],
        }
    }

    pub fn complement(self) -> Self {
        match self {
            Connectivity::Four => Connectivity::Eight,
            Connectivity::Eight => Connectivity::Four,
        }
    }
}

/// Otsu level over the 256-bin histogram.
///
/// Pixels `<= level` form the lower class. Ties resolve to the lowest level;
/// a constant image returns its single value.
pub fn otsu_threshold(img: &GrayImage) -> u8 {
    let mut hist = [0u64; 256];
    for &v in img.pixels() {
        hist[v as usize] += 1;
    }
    otsu_from_histogram(&hist)
}

pub(crate) fn otsu_from_histogram(hist: &[u64; 256]) -> u8 {
    let total: u64 = hist.iter().sum();
    let sum_total: f64 = hist.iter().enumerate().map(|(i, &h)| i as f64 * h as f64).sum();
    let occupied: Vec<usize> = (0..256).filter(|&i| hist[i] > 0).collect();
    match occupied.as_slice() {
        [] => return 0,
        [only] => return *only as u8,
        _ => {}
    }

    let mut best_t = 0u8;
    let mut best = f64::NEG_INFINITY;
    let (mut n0, mut s0) = (0u64, 0f64);
    for (t, &h) in hist.iter().enumerate() {
        n0 += h;
        s0 += t as f64 * h as f64;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let m0 = s0 / n0 as f64;
        let m1 = (sum_total - s0) / n1 as f64;
        let var = n0 as f64 * n1 as f64 * (m0 - m1) * (m0 - m1);
        if var > best {
            best = var;
            best_t = t as u8;
        }
    }
    best_t
}

/// Pixels `<= level` become foreground.
pub fn threshold_dark(img: &GrayImage, level: u8) -> BinaryMask {
    BinaryMask {
        width: img.width(),
        height: img.height(),
        data: img.pixels().iter().map(|&v| v <= level).collect(),
    }
}

// One-dimensional squared distance transform (lower envelope of parabolas).
fn distance_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        loop {
            let p = v[k] as f64;
            let s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * qf - 2.0 * p);
            if s <= z[k] {
                // k > 0 here because z[0] is -inf.
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, dq) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dx = q as f64 - v[k] as f64;
        *dq = dx * dx + f[v[k]];
    }
}

/// Exact squared Euclidean distance from every pixel to the nearest pixel
/// whose value equals `site`. Pixels with no site get a value larger than any
/// in-image distance.
fn squared_distance_to(mask: &BinaryMask, site: bool) -> Vec<f64> {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let far = ((w + h) * (w + h)) as f64 * 2.0 + 1.0;
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    let mut grid = vec![0.0; w * h];

    for x in 0..w {
        for y in 0..h {
            f[y] = if mask.data[y * w + x] == site { 0.0 } else { far };
        }
        distance_1d(&f[..h], &mut d[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = d[y];
        }
    }
    for y in 0..h {
        let row = &mut grid[y * w..(y + 1) * w];
        f[..w].copy_from_slice(row);
        distance_1d(&f[..w], &mut d[..w], &mut v, &mut z);
        row.copy_from_slice(&d[..w]);
    }
    grid
}

/// Dilation; pixels outside the image are background.
pub fn dilate(mask: &BinaryMask, se: DiskSE) -> BinaryMask {
    let r2 = (se.radius as f64).powi(2);
    let dist = squared_distance_to(mask, true);
    BinaryMask {
        width: mask.width,
        height: mask.height,
        data: dist.iter().map(|&d| d <= r2).collect(),
    }
}

/// Erosion; pixels outside the image are treated as foreground, so the image
/// edge does not erode the mask.
pub fn erode(mask: &BinaryMask, se: DiskSE) -> BinaryMask {
    let r2 = (se.radius as f64).powi(2);
    let dist = squared_distance_to(mask, false);
    BinaryMask {
        width: mask.width,
        height: mask.height,
        data: dist.iter().map(|&d| d > r2).collect(),
    }
}

pub fn morph_open(mask: &BinaryMask, se: DiskSE) -> BinaryMask {
    dilate(&erode(mask, se), se)
}

pub fn morph_close(mask: &BinaryMask, se: DiskSE) -> BinaryMask {
    erode(&dilate(mask, se), se)
}

/// Sets every background region not 4-connected to the image border.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    let seed = |i: usize, queue: &mut VecDeque<usize>, outside: &mut Vec<bool>| {
        if !mask.data[i] && !outside[i] {
            outside[i] = true;
            queue.push_back(i);
        }
    };
    for x in 0..w {
        seed(x, &mut queue, &mut outside);
        seed((h - 1) * w + x, &mut queue, &mut outside);
    }
    for y in 0..h {
        seed(y * w, &mut queue, &mut outside);
        seed(y * w + w - 1, &mut queue, &mut outside);
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        if x > 0 {
            seed(i - 1, &mut queue, &mut outside);
        }
        if x + 1 < w {
            seed(i + 1, &mut queue, &mut outside);
        }
        if y > 0 {
            seed(i - w, &mut queue, &mut outside);
        }
        if y + 1 < h {
            seed(i + w, &mut queue, &mut outside);
        }
    }
    BinaryMask {
        width: mask.width,
        height: mask.height,
        data: outside.iter().map(|&o| !o).collect(),
    }
}

/// Labels foreground components; returns per-pixel labels (0 = background)
/// and component sizes indexed by `label - 1`, in row-major discovery order.
pub fn label_components(mask: &BinaryMask, conn: Connectivity) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let mut labels = vec![0u32; mask.data.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.data.len() {
        if !mask.data[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = (i as i64 % w, i as i64 / w);
            for &(dx, dy) in conn.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let j = (ny * w + nx) as usize;
                if mask.data[j] && labels[j] == 0 {
                    labels[j] = label;
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Keeps only the largest connected component. Ties go to the component
/// whose first pixel comes first in row-major order.
pub fn largest_component(mask: &BinaryMask, conn: Connectivity) -> Result<BinaryMask> {
    let (labels, sizes) = label_components(mask, conn);
    let mut best: Option<(usize, usize)> = None;
    for (i, &s) in sizes.iter().enumerate() {
        if best.is_none_or(|(_, bs)| s > bs) {
            best = Some((i, s));
        }
    }
    let (idx, _) = best.ok_or(Error::EmptyMask)?;
    let keep = idx as u32 + 1;
    Ok(BinaryMask {
        width: mask.width,
        height: mask.height,
        data: labels.iter().map(|&l| l == keep).collect(),
    })
}

/// Parameters for [`build_tissue_mask`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MaskParams {
    pub se: DiskSE,
    pub connectivity: Connectivity,
}

fn clean(mask: &BinaryMask, se: DiskSE) -> BinaryMask {
    fill_holes(&morph_close(&morph_open(mask, se), se))
}

/// Tissue mask from the hematoxylin display channel.
///
/// Otsu binarization (tissue on the dark side), open, close, fill holes, keep
/// the largest component, then open, close and fill holes a second time.
pub fn build_tissue_mask(hema_display: &GrayImage, params: &MaskParams) -> Result<BinaryMask> {
    let level = otsu_threshold(hema_display);
    let first = hema_display.pixels()[0];
    if hema_display.pixels().iter().all(|&v| v == first) {
        // A single gray level has no darker side to call tissue.
        return Err(Error::EmptyMask);
    }
    let raw = threshold_dark(hema_display, level);
    let cleaned = clean(&raw, params.se);
    let largest = largest_component(&cleaned, params.connectivity)?;
    let refined = clean(&largest, params.se);
    if refined.is_empty() {
        return Err(Error::EmptyMask);
    }
    // The second opening can split a thin neck; keep the mask a single component.
    largest_component(&refined, params.connectivity)
}
