//! Pixel containers, color-space conversions and the min-max stretch.
//!
//! Images are dense row-major rasters. Floating-point work happens in `f64`;
//! 8-bit values only appear at the container boundaries.

use crate::error::{Error, Result};

/// An 8-bit sRGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<[u8; 3]>,
}

/// An 8-bit single-channel raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

/// CIELAB (D65) raster with `L` in `[0, 100]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    width: u32,
    height: u32,
    data: Vec<[f64; 3]>,
}

fn check_dims(width: u32, height: u32, len: usize) -> Result<()> {
    if width == 0 || height == 0 || (width as usize) * (height as usize) != len {
        return Err(Error::InvalidDimensions { width, height, len });
    }
    Ok(())
}

macro_rules! raster_common {
    ($ty:ident, $px:ty) => {
        impl $ty {
            pub fn from_vec(width: u32, height: u32, data: Vec<$px>) -> Result<Self> {
                check_dims(width, height, data.len())?;
                Ok(Self {
                    width,
                    height,
                    data,
                })
            }

            pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> $px) -> Self {
                assert!(width > 0 && height > 0, "image dimensions must be positive");
                let mut data = Vec::with_capacity(width as usize * height as usize);
                for y in 0..height {
                    for x in 0..width {
                        data.push(f(x, y));
                    }
                }
                Self {
                    width,
                    height,
                    data,
                }
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

            pub fn len(&self) -> usize {
                self.data.len()
            }

            pub fn is_empty(&self) -> bool {
                self.data.is_empty()
            }

            pub fn pixels(&self) -> &[$px] {
                &self.data
            }

            pub fn pixels_mut(&mut self) -> &mut [$px] {
                &mut self.data
            }

            pub fn into_pixels(self) -> Vec<$px> {
                self.data
            }

            #[inline]
            pub fn get(&self, x: u32, y: u32) -> $px {
                self.data[y as usize * self.width as usize + x as usize]
            }

            #[inline]
            pub fn set(&mut self, x: u32, y: u32, v: $px) {
                let w = self.width as usize;
                self.data[y as usize * w + x as usize] = v;
            }
        }
    };
}

raster_common!(RgbImage, [u8; 3]);
raster_common!(GrayImage, u8);
raster_common!(LabImage, [f64; 3]);

impl RgbImage {
    /// A `width x height` image filled with one color.
    pub fn filled(width: u32, height: u32, color: [u8; 3]) -> Self {
        Self::from_fn(width, height, |_, _| color)
    }

    /// Extracts channel `c` (0 = R, 1 = G, 2 = B) as a gray image.
    pub fn channel(&self, c: usize) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|p| p[c]).collect(),
        }
    }

    /// Inverse of [`RgbImage::channel`].
    pub fn from_channels(r: &GrayImage, g: &GrayImage, b: &GrayImage) -> Result<Self> {
        for ch in [g, b] {
            if ch.dimensions() != r.dimensions() {
                return Err(Error::DimensionMismatch {
                    expected: r.dimensions(),
                    actual: ch.dimensions(),
                });
            }
        }
        let data = r
            .data
            .iter()
            .zip(&g.data)
            .zip(&b.data)
            .map(|((&r, &g), &b)| [r, g, b])
            .collect();
        Ok(Self {
            width: r.width,
            height: r.height,
            data,
        })
    }
}

impl GrayImage {
    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    /// Replicates the gray value into all three channels.
    pub fn to_rgb(&self) -> RgbImage {
        RgbImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| [v, v, v]).collect(),
        }
    }
}

const LUMA_R: f64 = 0.2989;
const LUMA_G: f64 = 0.5870;
const LUMA_B: f64 = 0.1140;

#[inline]
pub(crate) fn luma(p: [u8; 3]) -> u8 {
    let v = LUMA_R * p[0] as f64 + LUMA_G * p[1] as f64 + LUMA_B * p[2] as f64;
    v.round().clamp(0.0, 255.0) as u8
}

/// BT.601 luminance reduction, rounded to the nearest level.
pub fn to_gray(img: &RgbImage) -> GrayImage {
    GrayImage {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|&p| luma(p)).collect(),
    }
}

/// Linear rescale of `[min, max]` onto `[0, 255]`.
///
/// Values are rounded half away from zero, so `[50, 100, 150]` maps to
/// `[0, 128, 255]`. A constant image maps to all zeros.
pub fn min_max_stretch(img: &GrayImage) -> GrayImage {
    let values: Vec<f64> = img.data.iter().map(|&v| v as f64).collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data: stretch_to_u8(&values),
    }
}

/// Float version of the stretch used after color transfer.
pub(crate) fn stretch_to_u8(values: &[f64]) -> Vec<u8> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0; values.len()];
    }
    values
        .iter()
        .map(|&v| ((v - lo) / range * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

// D65 reference white, matching the row sums of the sRGB -> XYZ matrix.
const WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const XYZ_TO_RGB: [[f64; 3]; 3] = [
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
];

const DELTA: f64 = 6.0 / 29.0;

fn srgb_to_linear_lut() -> &'static [f64; 256] {
    static LUT: std::sync::OnceLock<[f64; 256]> = std::sync::OnceLock::new();
    LUT.get_or_init(|| {
        let mut lut = [0.0; 256];
        for (i, v) in lut.iter_mut().enumerate() {
            let c = i as f64 / 255.0;
            *v = if c <= 0.04045 {
                c / 12.92
            } else {
                ((c + 0.055) / 1.055).powf(2.4)
            };
        }
        lut
    })
}

#[inline]
fn linear_to_srgb(c: f64) -> f64 {
    let c = c.clamp(0.0, 1.0);
    let s = if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    };
    s * 255.0
}

#[inline]
fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

#[inline]
fn lab_f_inv(t: f64) -> f64 {
    if t > DELTA {
        t * t * t
    } else {
        3.0 * DELTA * DELTA * (t - 4.0 / 29.0)
    }
}

#[inline]
pub(crate) fn pixel_to_lab(p: [u8; 3]) -> [f64; 3] {
    let lut = srgb_to_linear_lut();
    let lin = [lut[p[0] as usize], lut[p[1] as usize], lut[p[2] as usize]];
    let mut f = [0.0; 3];
    for (i, row) in RGB_TO_XYZ.iter().enumerate() {
        let xyz = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
        f[i] = lab_f(xyz / WHITE[i]);
    }
    [116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])]
}

/// Lab to sRGB in `[0, 255]`, clamped but not rounded.
#[inline]
pub(crate) fn lab_to_pixel_f64(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let xyz = [
        WHITE[0] * lab_f_inv(fx),
        WHITE[1] * lab_f_inv(fy),
        WHITE[2] * lab_f_inv(fz),
    ];
    let mut out = [0.0; 3];
    for (o, row) in out.iter_mut().zip(XYZ_TO_RGB.iter()) {
        *o = linear_to_srgb(row[0] * xyz[0] + row[1] * xyz[1] + row[2] * xyz[2]);
    }
    out
}

pub fn rgb_to_lab(img: &RgbImage) -> LabImage {
    LabImage {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|&p| pixel_to_lab(p)).collect(),
    }
}

/// Inverse conversion; out-of-gamut colors are clamped per channel.
pub fn lab_to_rgb(img: &LabImage) -> RgbImage {
    RgbImage {
        width: img.width,
        height: img.height,
        data: img
            .data
            .iter()
            .map(|&lab| lab_to_pixel_f64(lab).map(|v| v.round() as u8))
            .collect(),
    }
}
