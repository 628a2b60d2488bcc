use serde::{Deserialize, Serialize};

use super::{GrayFrame, TrackerConfig};
use crate::{Error, Result};

/// Kernel half-width in standard deviations. Five keeps the truncated mass
/// below 1e-6 so the discrete kernel matches the continuous Gaussian.
const KERNEL_RADIUS_STDS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterestPoint {
    pub x: f64,
    pub y: f64,
    /// Detection scale in units of the base sigma (blur std = `scale * sigma`).
    pub scale: f64,
    /// |DoG| at the extremum.
    pub response: f64,
}

/// Gaussian scale space: level `s` (1-based) is the frame blurred with
/// standard deviation `s * sigma`.
#[derive(Debug, Clone)]
pub struct ScaleSpace {
    pub sigma: f64,
    levels: Vec<GrayFrame>,
}

impl ScaleSpace {
    pub fn n_scales(&self) -> usize {
        self.levels.len()
    }

    /// Blurred frame at scale index `s`, `1 <= s <= n_scales`.
    pub fn level(&self, s: usize) -> &GrayFrame {
        &self.levels[s - 1]
    }
}

fn kernel_radius(std: f64) -> usize {
    (KERNEL_RADIUS_STDS * std).ceil() as usize
}

fn gaussian_kernel(std: f64) -> Vec<f64> {
    let r = kernel_radius(std) as isize;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * std * std)).exp()).collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable convolution with edge replication.
pub(crate) fn gaussian_blur(frame: &GrayFrame, std: f64) -> GrayFrame {
    let k = gaussian_kernel(std);
    let r = (k.len() / 2) as isize;
    let (w, h) = (frame.width(), frame.height());
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * frame.get_clamped(x as isize + i as isize - r, y as isize);
            }
            tmp[y * w + x] = acc;
        }
    }
    let tmp = GrayFrame::raw(w, h, tmp);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * tmp.get_clamped(x as isize, y as isize + i as isize - r);
            }
            out[y * w + x] = acc;
        }
    }
    GrayFrame::raw(w, h, out)
}

pub fn build_scale_space(frame: &GrayFrame, cfg: &TrackerConfig) -> Result<ScaleSpace> {
    cfg.validate()?;
    let support = 2 * kernel_radius(cfg.n_scales as f64 * cfg.sigma) + 1;
    if frame.width() < support || frame.height() < support {
        return Err(Error::invalid(format!(
            "{}x{} frame is smaller than the {support}-pixel support of the largest kernel",
            frame.width(),
            frame.height()
        )));
    }
    let levels = (1..=cfg.n_scales)
        .map(|s| gaussian_blur(frame, s as f64 * cfg.sigma))
        .collect();
    Ok(ScaleSpace {
        sigma: cfg.sigma,
        levels,
    })
}

/// Scale-normalised difference of adjacent scale levels. Entry `d` holds
/// `(s + 1/2) * (L[s+1] - L[s])` for `s = d + 1`; the factor approximates
/// `t dL/dt`, which keeps blob responses peaked at the blob's own size.
fn difference_of_gaussians(ss: &ScaleSpace) -> Vec<GrayFrame> {
    (1..ss.n_scales())
        .map(|s| {
            let a = ss.level(s);
            let b = ss.level(s + 1);
            let norm = s as f64 + 0.5;
            let data = a.data().iter().zip(b.data()).map(|(p, q)| norm * (q - p)).collect();
            GrayFrame::raw(a.width(), a.height(), data)
        })
        .collect()
}

fn is_extremum(dog: &[GrayFrame], d: usize, x: usize, y: usize) -> bool {
    let v = dog[d].get(x, y);
    let mut is_max = true;
    let mut is_min = true;
    for layer in &dog[d - 1..=d + 1] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                if std::ptr::eq(layer, &dog[d]) && xx == x && yy == y {
                    continue;
                }
                let n = layer.get(xx, yy);
                is_max &= v > n;
                is_min &= v < n;
                if !is_max && !is_min {
                    return false;
                }
            }
        }
    }
    is_max || is_min
}

/// Rejects line-like responses: principal curvature ratio of the 2x2 DoG
/// Hessian must stay below `r`, i.e. `tr^2 / det < (r + 1)^2 / r` with `det > 0`.
fn passes_edge_test(layer: &GrayFrame, x: usize, y: usize, r: f64) -> bool {
    let v = layer.get(x, y);
    let dxx = layer.get(x + 1, y) + layer.get(x - 1, y) - 2.0 * v;
    let dyy = layer.get(x, y + 1) + layer.get(x, y - 1) - 2.0 * v;
    let dxy =
        (layer.get(x + 1, y + 1) - layer.get(x + 1, y - 1) - layer.get(x - 1, y + 1) + layer.get(x - 1, y - 1)) / 4.0;
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    det > 0.0 && tr * tr / det < (r + 1.0) * (r + 1.0) / r
}

/// Scale-space extrema of the DoG stack that pass the contrast and edge tests,
/// at integer pixel positions, ordered by (scale, y, x).
pub fn detect_interest_points(frame: &GrayFrame, cfg: &TrackerConfig) -> Result<Vec<InterestPoint>> {
    let ss = build_scale_space(frame, cfg)?;
    let dog = difference_of_gaussians(&ss);
    let (w, h) = (frame.width(), frame.height());
    let mut out = Vec::new();
    for d in 1..dog.len().saturating_sub(1) {
        let layer = &dog[d];
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let v = layer.get(x, y);
                if v.abs() < cfg.contrast_threshold {
                    continue;
                }
                if !is_extremum(&dog, d, x, y) {
                    continue;
                }
                if !passes_edge_test(layer, x, y, cfg.edge_eigenvalue_ratio) {
                    continue;
                }
                out.push(InterestPoint {
                    x: x as f64,
                    y: y as f64,
                    scale: (d + 1) as f64 + 0.5,
                    response: v.abs(),
                });
            }
        }
    }
    Ok(out)
}
