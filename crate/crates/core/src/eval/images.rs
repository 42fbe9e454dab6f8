use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Interleaved 8-bit RGB of a `3 x H x W` image in `[0, 1]`.
pub fn to_rgb8(image: &Tensor<f32>) -> Result<(usize, usize, Vec<u8>)> {
    let s = image.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::usage(format!("expected a 3 x H x W image, got shape {s:?}")));
    }
    let (h, w) = (s[1], s[2]);
    let d = image.data();
    let mut out = Vec::with_capacity(3 * h * w);
    for p in 0..h * w {
        for c in 0..3 {
            let v = d[c * h * w + p];
            let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
            out.push((v * 255.0).round() as u8);
        }
    }
    Ok((h, w, out))
}

pub fn write_ppm(path: &Path, image: &Tensor<f32>) -> Result<()> {
    let (h, w, rgb) = to_rgb8(image)?;
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    bytes.extend_from_slice(&rgb);
    std::fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

pub fn write_png(path: &Path, image: &Tensor<f32>) -> Result<()> {
    let (h, w, rgb) = to_rgb8(image)?;
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let fail = |e: png::EncodingError| Error::Format { path: path.to_path_buf(), reason: e.to_string() };
    let mut writer = enc.write_header().map_err(fail)?;
    writer.write_image_data(&rgb).map_err(fail)?;
    writer.finish().map_err(fail)?;
    Ok(())
}

/// Writes `frame_00000.png` (and `.ppm` when `ppm`) for each image.
pub fn dump_frames(dir: &Path, images: &[Tensor<f32>], ppm: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    for (i, img) in images.iter().enumerate() {
        write_png(&dir.join(format!("frame_{i:05}.png")), img)?;
        if ppm {
            write_ppm(&dir.join(format!("frame_{i:05}.ppm")), img)?;
        }
    }
    let mut index = File::create(dir.join("count.txt")).map_err(|e| Error::file(dir, e))?;
    writeln!(index, "{}", images.len()).map_err(|e| Error::file(dir, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image() -> Tensor<f32> {
        let data: Vec<f32> = (0..3 * 2 * 3).map(|i| i as f32 / 17.0).collect();
        Tensor::new(vec![3, 2, 3], data).unwrap()
    }

    #[test]
    fn ppm_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ppm");
        write_ppm(&p, &image()).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let header = b"P6\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let px = &bytes[header.len()..];
        assert_eq!(px.len(), 18);
        // First pixel takes channel planes 0, 6 and 12.
        assert_eq!(px[0], 0);
        assert_eq!(px[1], (6.0f32 / 17.0 * 255.0).round() as u8);
        assert_eq!(px[2], (12.0f32 / 17.0 * 255.0).round() as u8);
    }

    #[test]
    fn png_round_trip_and_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.png");
        let b = dir.path().join("b.png");
        write_png(&a, &image()).unwrap();
        write_png(&b, &image()).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let dec = png::Decoder::new(File::open(&a).unwrap());
        let mut reader = dec.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height), (3, 2));
        assert_eq!(&buf[..info.buffer_size()], to_rgb8(&image()).unwrap().2.as_slice());
    }

    #[test]
    fn rejects_non_rgb() {
        let t = Tensor::<f32>::zeros(vec![1, 2, 2]);
        assert!(matches!(to_rgb8(&t), Err(Error::Usage(_))));
    }
}
