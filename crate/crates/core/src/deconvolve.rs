//! Optical density and color deconvolution into hematoxylin, DAB and residual
//! concentration channels.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::image::{GrayImage, RgbImage};

/// Per-pixel optical density, `-log10(I / 255)` with `I` clamped to `>= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct OdImage {
    width: u32,
    height: u32,
    data: Vec<[f64; 3]>,
}

impl OdImage {
    pub fn from_vec(width: u32, height: u32, data: Vec<[f64; 3]>) -> Result<Self> {
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

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }
}

fn od_lut() -> &'static [f64; 256] {
    static LUT: std::sync::OnceLock<[f64; 256]> = std::sync::OnceLock::new();
    LUT.get_or_init(|| {
        let mut lut = [0.0; 256];
        for (i, v) in lut.iter_mut().enumerate() {
            *v = od_of_intensity(i as u8);
        }
        lut
    })
}

#[inline]
pub(crate) fn od_of_intensity(i: u8) -> f64 {
    -((i.max(1) as f64) / 255.0).log10()
}

#[inline]
pub(crate) fn od_pixel(p: [u8; 3]) -> [f64; 3] {
    let lut = od_lut();
    [lut[p[0] as usize], lut[p[1] as usize], lut[p[2] as usize]]
}

pub fn od_from_rgb(img: &RgbImage) -> OdImage {
    OdImage {
        width: img.width(),
        height: img.height(),
        data: img.pixels().iter().map(|&p| od_pixel(p)).collect(),
    }
}

/// Three unit-norm stain OD vectors stored as rows: hematoxylin, DAB, residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StainMatrix {
    rows: [[f64; 3]; 3],
}

fn normalize(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (n > 0.0 && n.is_finite()).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) const MIN_DET: f64 = 1e-6;

/// Hematoxylin OD vector of the ImageJ "H DAB" preset.
pub const HEMATOXYLIN_OD: [f64; 3] = [0.650, 0.704, 0.286];
/// DAB OD vector of the ImageJ "H DAB" preset.
pub const DAB_OD: [f64; 3] = [0.268, 0.570, 0.776];

impl StainMatrix {
    /// Builds a matrix from two stains; the residual is their unit cross product.
    pub fn from_two_stains(first: [f64; 3], second: [f64; 3]) -> Result<Self> {
        let a = normalize(first).ok_or(Error::SingularMatrix { det: 0.0 })?;
        let b = normalize(second).ok_or(Error::SingularMatrix { det: 0.0 })?;
        let r = normalize(cross(a, b)).ok_or(Error::SingularMatrix { det: 0.0 })?;
        Self::from_rows([a, b, r])
    }

    /// Rows are unit-normalized on construction.
    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        let mut out = [[0.0; 3]; 3];
        for (o, r) in out.iter_mut().zip(rows) {
            *o = normalize(r).ok_or(Error::SingularMatrix { det: 0.0 })?;
        }
        let m = Self { rows: out };
        let det = m.determinant();
        if det.abs() <= MIN_DET {
            return Err(Error::SingularMatrix { det });
        }
        Ok(m)
    }

    pub fn rows(&self) -> &[[f64; 3]; 3] {
        &self.rows
    }

    pub fn hematoxylin(&self) -> [f64; 3] {
        self.rows[0]
    }

    pub fn dab(&self) -> [f64; 3] {
        self.rows[1]
    }

    pub fn residual(&self) -> [f64; 3] {
        self.rows[2]
    }

    pub fn determinant(&self) -> f64 {
        let [a, b, c] = self.rows;
        a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
            + a[2] * (b[0] * c[1] - b[1] * c[0])
    }

    /// OD produced by concentrations `c`: `M^T c`.
    pub fn mix(&self, c: [f64; 3]) -> [f64; 3] {
        let mut od = [0.0; 3];
        for (k, o) in od.iter_mut().enumerate() {
            *o = self.rows[0][k] * c[0] + self.rows[1][k] * c[1] + self.rows[2][k] * c[2];
        }
        od
    }

    /// Inverse of `M^T`, used to solve for concentrations.
    fn unmixing(&self) -> Result<Matrix3<f64>> {
        let det = self.determinant();
        if det.abs() <= MIN_DET {
            return Err(Error::SingularMatrix { det });
        }
        let mt = Matrix3::from_fn(|i, j| self.rows[j][i]);
        mt.try_inverse().ok_or(Error::SingularMatrix { det })
    }
}

/// The built-in H-DAB basis.
pub fn hdab_stain_matrix() -> StainMatrix {
    StainMatrix::from_two_stains(HEMATOXYLIN_OD, DAB_OD).expect("H-DAB vectors are independent")
}

/// Raw per-pixel stain concentrations (may be negative).
#[derive(Debug, Clone, PartialEq)]
pub struct StainChannels {
    width: u32,
    height: u32,
    matrix: StainMatrix,
    data: Vec<[f64; 3]>,
}

/// Index of a stain within [`StainChannels`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stain {
    Hematoxylin = 0,
    Dab = 1,
    Residual = 2,
}

#[inline]
fn concentration_to_gray(c: f64) -> u8 {
    (255.0 * 10f64.powf(-c.max(0.0))).round().clamp(0.0, 255.0) as u8
}

impl StainChannels {
    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn concentrations(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn matrix(&self) -> &StainMatrix {
        &self.matrix
    }

    /// Display channel for one stain, `round(255 * 10^-c)`; darker means more stain.
    pub fn display(&self, stain: Stain) -> GrayImage {
        let i = stain as usize;
        let data = self.data.iter().map(|c| concentration_to_gray(c[i])).collect();
        GrayImage::from_vec(self.width, self.height, data).expect("dimensions preserved")
    }

    /// Stain rendered in its own color: `I_k = round(255 * 10^(-c * m_k))`.
    pub fn tinted(&self, stain: Stain) -> RgbImage {
        let i = stain as usize;
        let v = self.matrix.rows[i];
        let data = self
            .data
            .iter()
            .map(|c| {
                let c = c[i].max(0.0);
                [0, 1, 2].map(|k| (255.0 * 10f64.powf(-c * v[k])).round().clamp(0.0, 255.0) as u8)
            })
            .collect();
        RgbImage::from_vec(self.width, self.height, data).expect("dimensions preserved")
    }
}

/// Solves `M^T c = od` for every pixel.
pub fn deconvolve(od: &OdImage, m: &StainMatrix) -> Result<StainChannels> {
    let inv = m.unmixing()?;
    let data = od
        .data
        .iter()
        .map(|o| {
            let mut c = [0.0; 3];
            for (i, ci) in c.iter_mut().enumerate() {
                *ci = inv[(i, 0)] * o[0] + inv[(i, 1)] * o[1] + inv[(i, 2)] * o[2];
            }
            c
        })
        .collect();
    Ok(StainChannels {
        width: od.width,
        height: od.height,
        matrix: *m,
        data,
    })
}

/// Convenience: RGB straight to stain channels.
pub fn deconvolve_rgb(img: &RgbImage, m: &StainMatrix) -> Result<StainChannels> {
    deconvolve(&od_from_rgb(img), m)
}

/// DAB display channel as gray plus its tinted rendering.
pub fn dab_display(ch: &StainChannels) -> (GrayImage, RgbImage) {
    (ch.display(Stain::Dab), ch.tinted(Stain::Dab))
}
