//! Synthetic H-DAB slides with known ground truth.
//!
//! Pixels are rendered with the Beer-Lambert model: stain concentrations are
//! mixed in optical density through the H-DAB vectors and converted back to
//! transmitted intensity. The tissue is a straight stripe, the shape of a
//! reconstructed-epidermis section, and DAB fills a band along one long edge.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::deconvolve::{hdab_stain_matrix, StainMatrix};
use crate::image::RgbImage;
use crate::mask::BinaryMask;

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub width: u32,
    pub height: u32,
    /// Counter-clockwise tilt of the stripe in degrees.
    pub angle: f64,
    /// Stripe center offset from the image center, pixels.
    pub offset: (f64, f64),
    pub length: f64,
    pub thickness: f64,
    /// Mean hematoxylin concentration in the tissue.
    pub hematoxylin: f64,
    /// Relative hematoxylin change across the stripe: `base * (1 - g)` on the
    /// upper edge rising to `base * (1 + g)` on the lower (basal) edge.
    pub hematoxylin_gradient: f64,
    /// Dense nuclei (radius 2.5 px) scattered inside the tissue.
    pub nuclei: usize,
    /// Hematoxylin concentration inside a nucleus.
    pub nucleus_hematoxylin: f64,
    /// DAB concentration inside the stained band.
    pub dab: f64,
    /// Share of the stripe thickness covered by the DAB band, in `[0, 1]`.
    pub dab_fraction: f64,
    /// Half-width of the uniform concentration noise.
    pub noise: f64,
    /// Near-black debris spots (radius 3 px) scattered over the image, as
    /// found on real scans; they keep each channel's minimum close to zero.
    pub specks: usize,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            angle: 0.0,
            offset: (0.0, 0.0),
            length: 480.0,
            thickness: 120.0,
            hematoxylin: 0.5,
            hematoxylin_gradient: 0.3,
            nuclei: 0,
            nucleus_hematoxylin: 1.0,
            dab: 1.0,
            dab_fraction: 0.3,
            noise: 0.03,
            specks: 8,
            seed: 0,
        }
    }
}

/// A rendered slide with its ground-truth masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub image: RgbImage,
    pub tissue: BinaryMask,
    pub dab: BinaryMask,
}

/// Where a pixel center falls relative to a tilted stripe: `(along, across)`
/// coordinates, `across` negative above the axis.
fn stripe_coords(spec: &PhantomSpec, x: u32, y: u32) -> (f64, f64) {
    let (s, c) = spec.angle.to_radians().sin_cos();
    let dx = x as f64 + 0.5 - (spec.width as f64 / 2.0 + spec.offset.0);
    let dy = y as f64 + 0.5 - (spec.height as f64 / 2.0 + spec.offset.1);
    (dx * c - dy * s, dx * s + dy * c)
}

/// Tissue footprint of `spec` without rendering any color.
pub fn stripe_mask(spec: &PhantomSpec) -> BinaryMask {
    BinaryMask::from_fn(spec.width, spec.height, |x, y| {
        let (u, v) = stripe_coords(spec, x, y);
        u.abs() <= spec.length / 2.0 && v.abs() <= spec.thickness / 2.0
    })
}

/// Neutral optical density of a debris speck.
const DEBRIS_OD: f64 = 1.6;

/// Transmitted intensity of a stain mixture.
pub fn render_pixel(m: &StainMatrix, hematoxylin: f64, dab: f64) -> [u8; 3] {
    let od = m.mix([hematoxylin, dab, 0.0]);
    od.map(|d| (255.0 * 10f64.powf(-d)).round().clamp(0.0, 255.0) as u8)
}

pub fn stripe_phantom(spec: &PhantomSpec) -> Phantom {
    let m = hdab_stain_matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let specks: Vec<(f64, f64)> = (0..spec.specks)
        .map(|_| {
            (
                rng.random_range(0.0..spec.width as f64),
                rng.random_range(0.0..spec.height as f64),
            )
        })
        .collect();
    let nuclei: Vec<(f64, f64)> = (0..spec.nuclei)
        .map(|_| {
            (
                rng.random_range(-spec.length / 2.0..spec.length / 2.0),
                rng.random_range(-spec.thickness / 2.0..spec.thickness / 2.0),
            )
        })
        .collect();
    let band_edge = -spec.thickness / 2.0 + spec.dab_fraction * spec.thickness;
    let debris = [DEBRIS_OD; 3].map(|d| (255.0 * 10f64.powf(-d)).round() as u8);
    let (w, h) = (spec.width, spec.height);
    let mut tissue = BinaryMask::new(w, h);
    let mut dab = BinaryMask::new(w, h);
    let mut data = Vec::with_capacity(w as usize * h as usize);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = stripe_coords(spec, x, y);
            let in_tissue = u.abs() <= spec.length / 2.0 && v.abs() <= spec.thickness / 2.0;
            let in_dab = in_tissue && v < band_edge;
            let mut jitter = |base: f64| {
                if spec.noise > 0.0 {
                    (base + rng.random_range(-spec.noise..=spec.noise)).max(0.0)
                } else {
                    base
                }
            };
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let speck = specks.iter().any(|&(sx, sy)| (px - sx).powi(2) + (py - sy).powi(2) <= 9.0);
            let (ch, cd) = if in_tissue {
                let depth = v / spec.thickness * 2.0;
                let nucleus = nuclei.iter().any(|&(nu, nv)| (u - nu).powi(2) + (v - nv).powi(2) <= 6.25);
                let base = if nucleus {
                    spec.nucleus_hematoxylin
                } else {
                    spec.hematoxylin * (1.0 + spec.hematoxylin_gradient * depth)
                };
                (jitter(base), if in_dab { jitter(spec.dab) } else { jitter(0.0) * 0.2 })
            } else {
                (jitter(0.0) * 0.3, 0.0)
            };
            tissue.set(x, y, in_tissue);
            dab.set(x, y, in_dab);
            data.push(if speck && !in_tissue { debris } else { render_pixel(&m, ch, cd) });
        }
    }
    Phantom {
        image: RgbImage::from_vec(w, h, data).expect("buffer sized to dimensions"),
        tissue,
        dab,
    }
}

/// The slide whose Lab statistics serve as the default Reinhard target.
pub fn reference_spec() -> PhantomSpec {
    PhantomSpec {
        width: 512,
        height: 384,
        angle: 0.0,
        length: 440.0,
        thickness: 110.0,
        hematoxylin: 0.45,
        dab: 0.7,
        dab_fraction: 0.25,
        noise: 0.04,
        seed: 2023,
        ..PhantomSpec::default()
    }
}
