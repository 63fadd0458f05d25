//! 16-bit depth PNGs (TUM scaling), 8-bit dynamic masks and 16-bit
//! discrepancy maps.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, ImageReader, Luma};

use crate::dynid::PixelDiscrepancy;
use crate::error::{Error, Result};
use crate::geom::{DepthMap, Grid};

/// Raw units per meter in TUM depth images.
pub const DEFAULT_DEPTH_SCALE: f64 = 5000.0;

/// Raw units per unit of relative discrepancy in discrepancy maps.
pub const DISCREPANCY_SCALE: f64 = 1e4;

fn image_err(path: &Path, message: impl ToString) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn open(path: &Path) -> Result<DynamicImage> {
    ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| image_err(path, e))
}

fn check_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && scale.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "depth scale {scale} must be > 0"
        )))
    }
}

/// Raw 16-bit buffer of a single-channel depth image.
pub fn read_depth_raw(path: impl AsRef<Path>) -> Result<ImageBuffer<Luma<u16>, Vec<u16>>> {
    let path = path.as_ref();
    match open(path)? {
        DynamicImage::ImageLuma16(img) => Ok(img),
        other => Err(image_err(
            path,
            format!(
                "expected 16-bit single-channel depth, found {:?}",
                other.color()
            ),
        )),
    }
}

/// `depth = raw / scale`; raw 0 is an invalid pixel.
pub fn read_depth_png(path: impl AsRef<Path>, scale: f64) -> Result<DepthMap> {
    check_scale(scale)?;
    let img = read_depth_raw(path)?;
    let (w, h) = img.dimensions();
    let values = img.as_raw().iter().map(|&r| r as f64 / scale).collect();
    DepthMap::from_values(w as usize, h as usize, values)
}

/// Inverse of the read conversion: rounds to the nearest raw unit,
/// clamping to `[1, 65535]` for valid pixels.
pub fn depth_to_raw(depth: &DepthMap, scale: f64) -> Result<Vec<u16>> {
    check_scale(scale)?;
    let mut clamped = 0usize;
    let raw = depth
        .values
        .iter()
        .zip(&depth.valid)
        .map(|(&d, &ok)| {
            if !ok {
                return 0;
            }
            let r = (d * scale).round();
            if r > u16::MAX as f64 {
                clamped += 1;
                u16::MAX
            } else {
                r.max(1.0) as u16
            }
        })
        .collect();
    if clamped > 0 {
        log::warn!(
            "{clamped} depth values above {:.3} m clamped",
            u16::MAX as f64 / scale
        );
    }
    Ok(raw)
}

pub fn write_depth_png(path: impl AsRef<Path>, depth: &DepthMap, scale: f64) -> Result<()> {
    let path = path.as_ref();
    let raw = depth_to_raw(depth, scale)?;
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width as u32, depth.height as u32, raw)
            .ok_or_else(|| image_err(path, "buffer size mismatch"))?;
    img.save(path).map_err(|e| image_err(path, e))
}

/// Nonzero pixels are dynamic.
pub fn read_mask_png(path: impl AsRef<Path>) -> Result<Grid<bool>> {
    let path = path.as_ref();
    let img = match open(path)? {
        DynamicImage::ImageLuma8(img) => img,
        other => {
            return Err(image_err(
                path,
                format!(
                    "expected 8-bit single-channel mask, found {:?}",
                    other.color()
                ),
            ))
        }
    };
    let (w, h) = img.dimensions();
    Grid::from_vec(
        w as usize,
        h as usize,
        img.as_raw().iter().map(|&v| v != 0).collect(),
    )
}

/// Dynamic pixels become 255, static 0.
pub fn write_mask_png(path: impl AsRef<Path>, mask: &Grid<bool>) -> Result<()> {
    let path = path.as_ref();
    let data = mask.data.iter().map(|&m| if m { 255 } else { 0 }).collect();
    let img = GrayImage::from_raw(mask.width as u32, mask.height as u32, data)
        .ok_or_else(|| image_err(path, "buffer size mismatch"))?;
    img.save(path).map_err(|e| image_err(path, e))
}

/// `raw = 1 + round(δ·1e4)`, clamped to 65535; raw 0 marks excluded pixels.
pub fn write_discrepancy_png(path: impl AsRef<Path>, d: &PixelDiscrepancy) -> Result<()> {
    let path = path.as_ref();
    let mut clamped = 0usize;
    let raw: Vec<u16> = d
        .delta
        .data
        .iter()
        .zip(&d.included.data)
        .map(|(&v, &ok)| {
            if !ok {
                return 0;
            }
            let r = 1.0 + (v.max(0.0) * DISCREPANCY_SCALE).round();
            if r > u16::MAX as f64 {
                clamped += 1;
                u16::MAX
            } else {
                r as u16
            }
        })
        .collect();
    if clamped > 0 {
        log::debug!("{}: {clamped} discrepancies clamped", path.display());
    }
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(d.delta.width as u32, d.delta.height as u32, raw)
            .ok_or_else(|| image_err(path, "buffer size mismatch"))?;
    img.save(path).map_err(|e| image_err(path, e))
}

pub fn read_discrepancy_png(path: impl AsRef<Path>) -> Result<PixelDiscrepancy> {
    let img = read_depth_raw(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.into_raw();
    let delta = raw
        .iter()
        .map(|&r| r.saturating_sub(1) as f64 / DISCREPANCY_SCALE)
        .collect();
    let included = raw.iter().map(|&r| r != 0).collect();
    Ok(PixelDiscrepancy {
        delta: Grid::from_vec(w, h, delta)?,
        included: Grid::from_vec(w, h, included)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn raw_units() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        let img: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(2, 1, vec![5000, 0]).unwrap();
        img.save(&p).unwrap();
        let d = read_depth_png(&p, DEFAULT_DEPTH_SCALE).unwrap();
        assert_eq!(d.get(0, 0), Some(1.0));
        assert_eq!(d.get(1, 0), None);
    }

    #[test]
    fn raw_buffer_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let raw: Vec<u16> = (0..64 * 48)
            .map(|_| {
                if rng.random::<f64>() < 0.1 {
                    0
                } else {
                    rng.random()
                }
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.png");
        let b = dir.path().join("b.png");
        ImageBuffer::<Luma<u16>, Vec<u16>>::from_raw(64, 48, raw.clone())
            .unwrap()
            .save(&a)
            .unwrap();
        let d = read_depth_png(&a, DEFAULT_DEPTH_SCALE).unwrap();
        write_depth_png(&b, &d, DEFAULT_DEPTH_SCALE).unwrap();
        assert_eq!(read_depth_raw(&b).unwrap().into_raw(), raw);
    }

    #[test]
    fn far_values_clamp() {
        let d = DepthMap::from_values(3, 1, vec![20.0, 1e-6, f64::NAN]).unwrap();
        assert_eq!(depth_to_raw(&d, 5000.0).unwrap(), vec![u16::MAX, 1, 0]);
        assert!(depth_to_raw(&d, 0.0).is_err());
    }

    #[test]
    fn wrong_format_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        image::RgbImage::new(2, 2).save(&p).unwrap();
        assert!(matches!(
            read_depth_png(&p, 5000.0),
            Err(Error::Image { .. })
        ));
        assert!(matches!(read_mask_png(&p), Err(Error::Image { .. })));
        let junk = dir.path().join("junk.png");
        std::fs::write(&junk, b"not a png").unwrap();
        assert!(read_depth_png(&junk, 5000.0).is_err());
    }

    #[test]
    fn mask_round_trip() {
        let mask = Grid::from_vec(3, 2, vec![true, false, false, true, true, false]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        write_mask_png(&p, &mask).unwrap();
        assert_eq!(read_mask_png(&p).unwrap(), mask);
    }

    #[test]
    fn discrepancy_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let delta = vec![0.0, 0.12345, 1.0, 9.0, 0.5, 3e-5];
        let included = vec![true, true, false, true, true, true];
        let d = PixelDiscrepancy {
            delta: Grid::from_vec(3, 2, delta.clone()).unwrap(),
            included: Grid::from_vec(3, 2, included.clone()).unwrap(),
        };
        write_discrepancy_png(&path, &d).unwrap();
        let raw = read_depth_raw(&path).unwrap().into_raw();
        assert_eq!(raw, [1, 1236, 0, 65535, 5001, 1]);
        let back = read_discrepancy_png(&path).unwrap();
        assert_eq!(back.included.data, included);
        for i in [0, 1, 4, 5] {
            assert!((back.delta.data[i] - delta[i]).abs() <= 0.5 / DISCREPANCY_SCALE);
        }
        // beyond the range the value saturates
        assert_eq!(back.delta.data[3], 6.5534);
    }
}
