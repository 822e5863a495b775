//! PNG round-trip for `[3,H,W]` images in [0,1].

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Quantize with round(v * 255), clamping to [0, 255].
pub fn to_rgb8(img: &Tensor) -> Result<(Vec<u8>, u32, u32)> {
    let s = img.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::dim(format!("image must be [3,H,W], got {:?}", s)));
    }
    let (h, w) = (s[1], s[2]);
    let d = img.data();
    let mut bytes = vec![0u8; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = (d[(c * h + y) * w + x] * 255.0).round().clamp(0.0, 255.0);
                bytes[(y * w + x) * 3 + c] = v as u8;
            }
        }
    }
    Ok((bytes, w as u32, h as u32))
}

pub fn save_png(path: &Path, img: &Tensor) -> Result<()> {
    let (bytes, w, h) = to_rgb8(img)?;
    let buf: image::RgbImage = image::ImageBuffer::from_raw(w, h, bytes)
        .expect("buffer sized from dimensions");
    buf.save(path)
        .map_err(|e| Error::data(format!("cannot write {}: {e}", path.display())))
}

pub fn load_png(path: &Path) -> Result<Tensor> {
    let img = image::open(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?
        .into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0f32; 3 * h * w];
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            data[(c * h + y as usize) * w + x as usize] = p.0[c] as f32 / 255.0;
        }
    }
    Tensor::from_vec(vec![3, h, w], data)
}
