//! Binary Netpbm: P5 (graymap) and P6 (pixmap), 8- or 16-bit samples.

use std::fs;
use std::path::Path;

use super::{Frame, Geometry};
use crate::error::{Error, Result};

pub fn read(path: &Path) -> Result<Frame> {
    decode(&fs::read(path)?, path)
}

pub fn decode(bytes: &[u8], origin: &Path) -> Result<Frame> {
    let bad = |msg: &str| Error::parse(origin, msg.to_string());
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    let channels = match fields[0] {
        "P5" => 1,
        "P6" => 3,
        other => return Err(bad(&format!("unsupported magic `{other}`"))),
    };
    let num = |s: &str, what: &str| s.parse::<usize>().map_err(|_| bad(&format!("invalid {what} `{s}`")));
    let width = num(fields[1], "width")?;
    let height = num(fields[2], "height")?;
    let maxval = num(fields[3], "maxval")?;
    if width == 0 || height == 0 {
        return Err(bad("zero image size"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(bad(&format!("maxval {maxval} out of range")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("missing raster"));
    }
    pos += 1;
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let count = width * height * channels;
    let raster = &bytes[pos..];
    if raster.len() < count * sample_bytes {
        return Err(bad(&format!(
            "raster has {} bytes, expected {}",
            raster.len(),
            count * sample_bytes
        )));
    }
    let geometry = Geometry {
        height,
        width,
        channels,
    };
    let mut frame = Frame::filled(geometry, 0.0);
    for i in 0..count {
        let raw = if sample_bytes == 1 {
            raster[i] as usize
        } else {
            u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as usize
        };
        if raw > maxval {
            return Err(bad(&format!("sample {raw} exceeds maxval {maxval}")));
        }
        // Interleaved RGB → channel-major.
        let (pixel, c) = (i / channels, i % channels);
        frame.pixels[c * height * width + pixel] = raw as f64 / maxval as f64;
    }
    Ok(frame)
}

/// Writes 8-bit P5 for one channel and P6 for three.
pub fn write(path: &Path, frame: &Frame) -> Result<()> {
    fs::write(path, encode(frame)?)?;
    Ok(())
}

pub fn encode(frame: &Frame) -> Result<Vec<u8>> {
    let Geometry {
        height,
        width,
        channels,
    } = frame.geometry;
    let magic = match channels {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::Contract(format!("cannot write {c}-channel Netpbm"))),
    };
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    for pixel in 0..height * width {
        for c in 0..channels {
            let v = frame.pixels[c * height * width + pixel];
            out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    Ok(out)
}

/// Bilinear resampling with pixel centres aligned, plus channel conversion
/// (luminance average for RGB → gray, replication for gray → RGB).
pub fn resample(frame: &Frame, target: Geometry) -> Frame {
    let src = frame.geometry;
    let mut out = Frame::filled(target, 0.0);
    let sample = |c: usize, y: f64, x: f64| {
        let y = y.clamp(0.0, (src.height - 1) as f64);
        let x = x.clamp(0.0, (src.width - 1) as f64);
        let (y0, x0) = (y.floor() as usize, x.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(src.height - 1), (x0 + 1).min(src.width - 1));
        let (fy, fx) = (y - y0 as f64, x - x0 as f64);
        let top = frame.get(c, y0, x0) * (1.0 - fx) + frame.get(c, y0, x1) * fx;
        let bottom = frame.get(c, y1, x0) * (1.0 - fx) + frame.get(c, y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    };
    for y in 0..target.height {
        let sy = (y as f64 + 0.5) * src.height as f64 / target.height as f64 - 0.5;
        for x in 0..target.width {
            let sx = (x as f64 + 0.5) * src.width as f64 / target.width as f64 - 0.5;
            let values: Vec<f64> = (0..src.channels).map(|c| sample(c, sy, sx)).collect();
            for c in 0..target.channels {
                let v = match (src.channels, target.channels) {
                    (3, 1) => values.iter().sum::<f64>() / 3.0,
                    (1, _) => values[0],
                    _ => values[c],
                };
                out.pixels[(c * target.height + y) * target.width + x] = v;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin() -> &'static Path {
        Path::new("test.pgm")
    }

    #[test]
    fn eight_bit_graymap() {
        let mut bytes = b"P5\n# comment\n2 1\n255\n".to_vec();
        bytes.extend([255, 0]);
        let f = decode(&bytes, origin()).unwrap();
        assert_eq!(f.pixels, vec![1.0, 0.0]);
    }

    #[test]
    fn sixteen_bit_is_big_endian() {
        let mut bytes = b"P5 2 1 65535\n".to_vec();
        bytes.extend([0xff, 0xff, 0x01, 0x00]);
        let f = decode(&bytes, origin()).unwrap();
        assert_eq!(f.pixels[0], 1.0);
        assert_eq!(f.pixels[1], 256.0 / 65535.0);
    }

    #[test]
    fn pixmap_is_deinterleaved() {
        let mut bytes = b"P6 2 1 255\n".to_vec();
        bytes.extend([255, 0, 0, 0, 0, 255]);
        let f = decode(&bytes, origin()).unwrap();
        assert_eq!(f.get(0, 0, 0), 1.0);
        assert_eq!(f.get(2, 0, 0), 0.0);
        assert_eq!(f.get(2, 0, 1), 1.0);
    }

    #[test]
    fn malformed_headers_name_the_file() {
        for bytes in [&b"P3 1 1 255\n\0"[..], b"P5 1 1", b"P5 x 1 255\n\0", b"P5 2 2 255\n\0"] {
            match decode(bytes, origin()) {
                Err(Error::Parse { file, .. }) => assert_eq!(file, origin()),
                other => panic!("expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn encode_decode_roundtrip() {
        let g = Geometry {
            height: 3,
            width: 2,
            channels: 3,
        };
        let frame = Frame {
            geometry: g,
            pixels: (0..18).map(|i| i as f64 / 17.0).collect(),
        };
        let back = decode(&encode(&frame).unwrap(), origin()).unwrap();
        for (a, b) in frame.pixels.iter().zip(&back.pixels) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn identity_resample() {
        let g = Geometry {
            height: 4,
            width: 5,
            channels: 1,
        };
        let frame = Frame {
            geometry: g,
            pixels: (0..20).map(|i| (i as f64 * 0.37).sin().abs()).collect(),
        };
        assert_eq!(resample(&frame, g), frame);
    }

    #[test]
    fn downsample_averages_blocks_of_constant_rows() {
        let g = Geometry {
            height: 2,
            width: 4,
            channels: 1,
        };
        let frame = Frame {
            geometry: g,
            pixels: vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0],
        };
        let small = resample(
            &frame,
            Geometry {
                height: 1,
                width: 2,
                channels: 3,
            },
        );
        assert_eq!(small.pixels, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }
}
