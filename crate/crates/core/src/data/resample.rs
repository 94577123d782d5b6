use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResampleMode {
    /// One window centered in the input (offset rounds down).
    CenterCrop,
    /// Non-overlapping windows, left to right then top to bottom; partial
    /// windows at the right and bottom edges are discarded.
    TileGrid,
    /// Bilinear interpolation with pixel centers at half-integer positions.
    Bilinear,
}

impl FromStr for ResampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "center-crop" | "crop" => Ok(ResampleMode::CenterCrop),
            "tile-grid" | "tile" => Ok(ResampleMode::TileGrid),
            "bilinear" | "bilinear-resize" => Ok(ResampleMode::Bilinear),
            other => Err(Error::Config(format!("unknown resample mode '{other}'"))),
        }
    }
}

/// Copies the `out_h x out_w` window at `(top, left)` from every sample and
/// channel.
fn window(x: &Tensor, top: usize, left: usize, out_h: usize, out_w: usize) -> Tensor {
    let s = x.shape();
    let mut data = Vec::with_capacity(s.n * s.c * out_h * out_w);
    for n in 0..s.n {
        for c in 0..s.c {
            for y in top..top + out_h {
                let start = s.offset(n, c, y, left);
                data.extend_from_slice(&x.as_slice()[start..start + out_w]);
            }
        }
    }
    Tensor::new(Shape4::new(s.n, s.c, out_h, out_w), data).expect("window length")
}

fn bilinear(x: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let s = x.shape();
    let axis = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let ys = axis(out_h, s.h);
    let xs = axis(out_w, s.w);
    let mut data = Vec::with_capacity(s.n * s.c * out_h * out_w);
    for n in 0..s.n {
        for c in 0..s.c {
            for &(y0, y1, fy) in &ys {
                for &(x0, x1, fx) in &xs {
                    let top = x.at(n, c, y0, x0) * (1.0 - fx) + x.at(n, c, y0, x1) * fx;
                    let bottom = x.at(n, c, y1, x0) * (1.0 - fx) + x.at(n, c, y1, x1) * fx;
                    data.push(top * (1.0 - fy) + bottom * fy);
                }
            }
        }
    }
    Tensor::new(Shape4::new(s.n, s.c, out_h, out_w), data).expect("resize length")
}

/// Resamples every sample of `x` to `out_h x out_w`. Crop returns one
/// tensor, tile-grid one per tile, bilinear one.
pub fn resample_patch(
    x: &Tensor,
    out_h: usize,
    out_w: usize,
    mode: ResampleMode,
) -> Result<Vec<Tensor>> {
    let s = x.shape();
    if out_h == 0 || out_w == 0 || s.is_empty() {
        return Err(Error::Parameter(format!(
            "cannot resample {s} to {out_h}x{out_w}"
        )));
    }
    if mode != ResampleMode::Bilinear && (out_h > s.h || out_w > s.w) {
        return Err(Error::Parameter(format!(
            "window {out_h}x{out_w} is larger than the {}x{} input",
            s.h, s.w
        )));
    }
    Ok(match mode {
        ResampleMode::CenterCrop => {
            vec![window(
                x,
                (s.h - out_h) / 2,
                (s.w - out_w) / 2,
                out_h,
                out_w,
            )]
        }
        ResampleMode::TileGrid => {
            let mut tiles = Vec::new();
            for ty in 0..s.h / out_h {
                for tx in 0..s.w / out_w {
                    tiles.push(window(x, ty * out_h, tx * out_w, out_h, out_w));
                }
            }
            tiles
        }
        ResampleMode::Bilinear => vec![bilinear(x, out_h, out_w)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{sample_normal, Rng};

    fn ramp(h: usize, w: usize) -> Tensor {
        Tensor::new(
            Shape4::new(1, 1, h, w),
            (0..h * w).map(|v| v as f64).collect(),
        )
        .unwrap()
    }

    #[test]
    fn center_crop_window() {
        let out = resample_patch(&ramp(4, 4), 2, 2, ResampleMode::CenterCrop).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].as_slice(), &[5.0, 6.0, 9.0, 10.0]);
        assert!(resample_patch(&ramp(4, 4), 5, 2, ResampleMode::CenterCrop).is_err());
    }

    #[test]
    fn tile_grid_counts_and_bounds() {
        // 700 wide by 460 tall into 228x228 tiles.
        let x = Tensor::zeros(Shape4::new(1, 3, 460, 700));
        let tiles = resample_patch(&x, 228, 228, ResampleMode::TileGrid).unwrap();
        assert_eq!(tiles.len(), 6);
        assert!(tiles
            .iter()
            .all(|t| t.shape() == Shape4::new(1, 3, 228, 228)));

        let tiles = resample_patch(&ramp(5, 7), 2, 3, ResampleMode::TileGrid).unwrap();
        assert_eq!(tiles.len(), 4);
        let mut seen: Vec<f64> = tiles.iter().flat_map(|t| t.as_slice().to_vec()).collect();
        let n = seen.len();
        seen.sort_by(f64::total_cmp);
        seen.dedup();
        assert_eq!(seen.len(), n, "tiles overlap");
        assert_eq!(tiles[1].as_slice(), &[3.0, 4.0, 5.0, 10.0, 11.0, 12.0]);
    }

    #[test]
    fn bilinear_identity_and_constant() {
        let x = sample_normal(&mut Rng::new(1), Shape4::new(2, 3, 5, 6), 0.0, 1.0).unwrap();
        let out = resample_patch(&x, 5, 6, ResampleMode::Bilinear).unwrap();
        assert_eq!(out[0], x);
        let c = Tensor::full(Shape4::new(1, 1, 7, 9), 0.3);
        let up = &resample_patch(&c, 11, 4, ResampleMode::Bilinear).unwrap()[0];
        assert!(up.as_slice().iter().all(|v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn bilinear_halving_averages_pairs() {
        let x = Tensor::new(Shape4::new(1, 1, 1, 4), vec![0.0, 2.0, 4.0, 6.0]).unwrap();
        let out = &resample_patch(&x, 1, 2, ResampleMode::Bilinear).unwrap()[0];
        assert_eq!(out.as_slice(), &[1.0, 5.0]);
    }

    #[test]
    fn mode_names() {
        assert_eq!(
            "tile-grid".parse::<ResampleMode>().unwrap(),
            ResampleMode::TileGrid
        );
        assert!("nearest".parse::<ResampleMode>().is_err());
    }
}
