//! Reading and writing rasters (PNG, JPEG in; PNG out).

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{GrayImage, RgbImage};
use crate::mask::BinaryMask;

/// Decodes any supported file to 8-bit RGB. Alpha is dropped; 16-bit and
/// grayscale inputs are converted.
pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let decoded = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = decoded.into_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.pixels().map(|p| p.0).collect();
    RgbImage::from_vec(w, h, data)
}

pub fn save_rgb(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let buf: Vec<u8> = img.pixels().iter().flatten().copied().collect();
    write_png(path.as_ref(), &buf, img.width(), img.height(), image::ExtendedColorType::Rgb8)
}

pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    write_png(path.as_ref(), img.pixels(), img.width(), img.height(), image::ExtendedColorType::L8)
}

/// 1-bit grayscale PNG, foreground white.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    create_parent(path)?;
    let (w, h) = mask.dimensions();
    let stride = (w as usize).div_ceil(8);
    let mut packed = vec![0u8; stride * h as usize];
    for (i, row) in mask.as_slice().chunks(w.max(1) as usize).enumerate() {
        for (x, &m) in row.iter().enumerate() {
            if m {
                packed[i * stride + x / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    let enc_err = |e: png::EncodingError| Error::Encode(format!("{}: {e}", path.display()));
    let mut enc = png::Encoder::new(BufWriter::new(File::create(path)?), w, h);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::One);
    let mut writer = enc.write_header().map_err(enc_err)?;
    writer.write_image_data(&packed).map_err(enc_err)?;
    writer.finish().map_err(enc_err)
}

/// Reads a mask written by [`save_mask`]; any nonzero level is foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let decoded = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let g = decoded.into_luma8();
    let (w, h) = g.dimensions();
    BinaryMask::from_vec(w, h, g.into_raw().into_iter().map(|v| v > 0).collect())
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn write_png(path: &Path, buf: &[u8], w: u32, h: u32, color: image::ExtendedColorType) -> Result<()> {
    create_parent(path)?;
    image::save_buffer_with_format(path, buf, w, h, color, image::ImageFormat::Png)
        .map_err(|e| Error::Encode(format!("{}: {e}", path.display())))
}

/// File extensions accepted by directory scans.
pub fn is_supported_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::from_fn(7, 5, |x, y| [x as u8 * 30, y as u8 * 40, 200]);
        let p = dir.path().join("sub/a.png");
        save_rgb(&img, &p).unwrap();
        assert_eq!(load_rgb(&p).unwrap(), img);

        let mask = BinaryMask::from_fn(13, 5, |x, y| (x + y) % 3 == 0);
        let q = dir.path().join("m.png");
        save_mask(&mask, &q).unwrap();
        assert_eq!(load_mask(&q).unwrap(), mask);
    }

    #[test]
    fn gray_loads_as_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let g = GrayImage::from_fn(3, 2, |x, _| x as u8 * 100);
        let p = dir.path().join("g.png");
        save_gray(&g, &p).unwrap();
        assert_eq!(load_rgb(&p).unwrap(), g.to_rgb());
    }

    #[test]
    fn undecodable_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        std::fs::write(&p, b"not a png").unwrap();
        assert!(matches!(load_rgb(&p), Err(Error::Decode { .. })));
        assert!(matches!(load_rgb(dir.path().join("missing.png")), Err(Error::Decode { .. })));
    }

    #[test]
    fn extensions() {
        assert!(is_supported_image(Path::new("a/b.JPG")));
        assert!(is_supported_image(Path::new("b.png")));
        assert!(!is_supported_image(Path::new("b.csv")));
    }
}
