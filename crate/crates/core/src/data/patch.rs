//! Patch file codecs: binary PGM (P5), binary PPM (P6) and RAWF32.
//!
//! RAWF32 layout: the ASCII magic `TNT1`, then `C`, `H`, `W` as 32-bit
//! little-endian unsigned integers, then `C * H * W` little-endian `f32`
//! values in channel-major order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor};

pub const RAWF32_MAGIC: &[u8; 4] = b"TNT1";
const RAWF32_HEADER: usize = 16;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Decodes any supported patch into a `(1, C, H, W)` tensor. 8-bit pixels
/// are divided by 255; RAWF32 values are taken as-is.
pub fn decode_patch(bytes: &[u8]) -> Result<Tensor> {
    if bytes.starts_with(RAWF32_MAGIC) {
        decode_rawf32(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(bytes)
    } else {
        Err(Error::Format {
            offset: 0,
            msg: "unrecognized magic (expected P5, P6 or TNT1)".into(),
        })
    }
}

pub fn read_patch(path: &Path) -> Result<Tensor> {
    decode_patch(&read_file(path)?).map_err(|e| match e {
        Error::Format { offset, msg } => Error::Format {
            offset,
            msg: format!("{msg} in {}", path.display()),
        },
        other => other,
    })
}

/// Reads a patch and checks it has the per-sample shape `target`
/// (batch dimension ignored).
pub fn load_patch(path: &Path, target: Shape4) -> Result<Tensor> {
    let t = read_patch(path)?;
    let want = target.with_n(1);
    if t.shape() != want {
        return Err(Error::Data(format!(
            "{} has shape {}, expected {want}; resample it first",
            path.display(),
            t.shape()
        )));
    }
    if !t.all_finite() {
        return Err(Error::Data(format!(
            "{} contains non-finite values",
            path.display()
        )));
    }
    Ok(t)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn header_number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format {
                offset: start,
                msg: format!("expected {what}"),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::Format {
                offset: start,
                msg: format!("{what} out of range"),
            })
    }
}

fn decode_pnm(bytes: &[u8]) -> Result<Tensor> {
    let channels = if bytes[1] == b'5' { 1 } else { 3 };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.header_number("width")?;
    let height = cur.header_number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.header_number("maxval")?;
    if maxval != 255 {
        return Err(Error::Format {
            offset: maxval_at,
            msg: format!("only maxval 255 is supported, got {maxval}"),
        });
    }
    if width == 0 || height == 0 {
        return Err(Error::Format {
            offset: maxval_at,
            msg: "image has zero width or height".into(),
        });
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => {
            return Err(Error::Format {
                offset: cur.pos,
                msg: "expected whitespace after maxval".into(),
            })
        }
    }
    let start = cur.pos;
    let need = channels * width * height;
    let have = bytes.len() - start;
    if have < need {
        return Err(Error::Format {
            offset: bytes.len(),
            msg: format!("truncated pixel data: expected {need} bytes, got {have}"),
        });
    }
    let raster = &bytes[start..start + need];
    let plane = width * height;
    let mut data = vec![0.0; need];
    // Interleaved RGB on disk, planar in memory.
    for (i, &px) in raster.iter().enumerate() {
        let (pixel, c) = (i / channels, i % channels);
        data[c * plane + pixel] = px as f64 / 255.0;
    }
    Tensor::new(Shape4::new(1, channels, height, width), data)
}

fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

fn encode_pnm(t: &Tensor) -> Result<Vec<u8>> {
    let s = t.shape();
    let magic = match (s.n, s.c) {
        (1, 1) => "P5",
        (1, 3) => "P6",
        _ => {
            return Err(Error::shape(format!(
                "PGM/PPM needs a (1,1,H,W) or (1,3,H,W) tensor, got {s}"
            )))
        }
    };
    let mut out = format!("{magic}\n{} {}\n255\n", s.w, s.h).into_bytes();
    let plane = s.plane();
    let data = t.as_slice();
    for pixel in 0..plane {
        for c in 0..s.c {
            out.push(quantize(data[c * plane + pixel]));
        }
    }
    Ok(out)
}

/// Writes a one-channel tensor as PGM or a three-channel tensor as PPM,
/// quantizing `[0, 1]` to `0..=255`.
pub fn write_pnm(path: &Path, t: &Tensor) -> Result<()> {
    write_file(path, &encode_pnm(t)?)
}

pub fn encode_rawf32(t: &Tensor) -> Result<Vec<u8>> {
    let s = t.shape();
    if s.n != 1 {
        return Err(Error::shape(format!("RAWF32 stores one sample, got {s}")));
    }
    let mut out = Vec::with_capacity(RAWF32_HEADER + 4 * t.len());
    out.extend_from_slice(RAWF32_MAGIC);
    for d in [s.c, s.h, s.w] {
        let d = u32::try_from(d).map_err(|_| Error::shape(format!("{s} too large for RAWF32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in t.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_rawf32(bytes: &[u8]) -> Result<Tensor> {
    if !bytes.starts_with(RAWF32_MAGIC) {
        return Err(Error::Format {
            offset: 0,
            msg: "missing TNT1 magic".into(),
        });
    }
    if bytes.len() < RAWF32_HEADER {
        return Err(Error::Format {
            offset: bytes.len(),
            msg: format!(
                "truncated header: expected {RAWF32_HEADER} bytes, got {}",
                bytes.len()
            ),
        });
    }
    let dim = |i: usize| {
        let at = 4 + 4 * i;
        u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize
    };
    let shape = Shape4::new(1, dim(0), dim(1), dim(2));
    let need = shape
        .checked_len()
        .and_then(|n| n.checked_mul(4))
        .ok_or(Error::Format {
            offset: 4,
            msg: "dimensions overflow".into(),
        })?;
    let have = bytes.len() - RAWF32_HEADER;
    if have != need {
        return Err(Error::Format {
            offset: bytes.len().min(RAWF32_HEADER + need),
            msg: format!("expected {need} bytes of float data, got {have}"),
        });
    }
    let data = bytes[RAWF32_HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Tensor::new(shape, data)
}

pub fn write_rawf32(path: &Path, t: &Tensor) -> Result<()> {
    write_file(path, &encode_rawf32(t)?)
}

pub fn read_rawf32(path: &Path) -> Result<Tensor> {
    decode_rawf32(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{sample_normal, Rng};
    use proptest::prelude::*;

    #[test]
    fn pgm_pixels_divide_by_255() {
        let mut bytes = b"P5\n# a comment\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 128, 64]);
        let t = decode_patch(&bytes).unwrap();
        assert_eq!(t.shape(), Shape4::new(1, 1, 2, 2));
        assert_eq!(t.as_slice(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
        assert!((t.as_slice()[2] - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn ppm_is_planar() {
        let mut bytes = b"P6 2 1 255\n".to_vec();
        bytes.extend_from_slice(&[10, 20, 30, 40, 50, 60]);
        let t = decode_patch(&bytes).unwrap();
        assert_eq!(t.shape(), Shape4::new(1, 3, 1, 2));
        let px: Vec<u8> = t.as_slice().iter().map(|v| quantize(*v)).collect();
        assert_eq!(px, [10, 40, 20, 50, 30, 60]);
        assert_eq!(
            encode_pnm(&t).unwrap(),
            b"P6\n2 1\n255\n\x0a\x14\x1e\x28\x32\x3c"
        );
    }

    #[test]
    fn truncated_files_report_counts() {
        let mut bytes = b"P5\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        let err = decode_patch(&bytes).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("expected 6 bytes") && msg.contains("got 3"),
            "{msg}"
        );
        assert!(matches!(err, Error::Format { offset, .. } if offset == bytes.len()));

        let t = Tensor::full(Shape4::new(1, 1, 2, 2), 0.5);
        let enc = encode_rawf32(&t).unwrap();
        let err = decode_rawf32(&enc[..enc.len() - 2])
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("expected 16 bytes") && err.contains("got 14"),
            "{err}"
        );
        assert!(decode_rawf32(&enc[..10]).is_err());
    }

    #[test]
    fn bad_headers() {
        assert!(matches!(
            decode_patch(b"GIF89a"),
            Err(Error::Format { offset: 0, .. })
        ));
        assert!(matches!(
            decode_patch(b"P5 2 2 65535\n"),
            Err(Error::Format { offset: 6, .. })
        ));
        assert!(matches!(
            decode_patch(b"P5 x"),
            Err(Error::Format { offset: 3, .. })
        ));
    }

    #[test]
    fn ppm_and_rawf32_agree_to_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = Rng::new(4);
        let t = sample_normal(&mut rng, Shape4::new(1, 3, 5, 7), 0.5, 0.2)
            .unwrap()
            .map(|v| v.clamp(0.0, 1.0));
        write_pnm(&dir.path().join("a.ppm"), &t).unwrap();
        write_rawf32(&dir.path().join("a.raw"), &t).unwrap();
        let p = load_patch(&dir.path().join("a.ppm"), Shape4::new(1, 3, 5, 7)).unwrap();
        let r = load_patch(&dir.path().join("a.raw"), Shape4::new(1, 3, 5, 7)).unwrap();
        for (a, b) in p.as_slice().iter().zip(r.as_slice()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-7);
        }
        assert!(load_patch(&dir.path().join("a.raw"), Shape4::new(1, 1, 5, 7)).is_err());
    }

    proptest! {
        #[test]
        fn rawf32_round_trip_is_bitwise(
            c in 1usize..4, h in 1usize..6, w in 1usize..6,
            vals in prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 100),
        ) {
            let data: Vec<f64> = (0..c * h * w).map(|i| vals[i % vals.len()] as f64).collect();
            let t = Tensor::new(Shape4::new(1, c, h, w), data).unwrap();
            let back = decode_rawf32(&encode_rawf32(&t).unwrap()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
