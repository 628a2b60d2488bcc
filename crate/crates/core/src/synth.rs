//! Deterministic synthetic inputs: analytic textures and frame sequences with
//! known motion. Used by the test suites, the CLI demo data and the browser
//! demo.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::vision::GrayFrame;

/// Smooth random texture: a sum of isotropic Gaussian blobs of one width.
/// It can be evaluated at any sub-pixel location, so translated copies are
/// exact rather than resampled.
#[derive(Debug, Clone)]
pub struct BlobTexture {
    base: f64,
    sigma: f64,
    blobs: Vec<(f64, f64, f64)>,
}

impl BlobTexture {
    pub fn random(seed: u64, width: f64, height: f64, count: usize, sigma: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blobs = (0..count)
            .map(|_| {
                let amp = if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(0.15..0.35);
                (rng.gen_range(0.0..width), rng.gen_range(0.0..height), amp)
            })
            .collect();
        Self {
            base: 0.5,
            sigma,
            blobs,
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let r = 4.0 * self.sigma;
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        let mut v = self.base;
        for &(bx, by, a) in &self.blobs {
            let dx = x - bx;
            let dy = y - by;
            if dx.abs() < r && dy.abs() < r {
                v += a * (-(dx * dx + dy * dy) * inv).exp();
            }
        }
        v.clamp(0.0, 1.0)
    }
}

fn smooth_step(t: f64) -> f64 {
    // Logistic edge about one pixel wide, so sub-pixel positions render
    // without aliasing.
    1.0 / (1.0 + (-4.0 * t).exp())
}

/// A textured square load moving over a uniform background.
#[derive(Debug, Clone)]
pub struct SquareScene {
    pub width: usize,
    pub height: usize,
    pub side: f64,
    pub background: f64,
    texture: BlobTexture,
}

impl SquareScene {
    pub fn new(seed: u64, width: usize, height: usize, side: f64) -> Self {
        let count = ((side * side) / 40.0).ceil() as usize;
        Self {
            width,
            height,
            side,
            background: 0.1,
            texture: BlobTexture::random(seed, side, side, count, 2.5),
        }
    }

    /// Renders the square with its top-left corner at `(x0, y0)`.
    pub fn render(&self, x0: f64, y0: f64) -> GrayFrame {
        GrayFrame::from_fn(self.width, self.height, |x, y| {
            let u = x as f64 - x0;
            let v = y as f64 - y0;
            let mask = smooth_step(u) * smooth_step(self.side - u) * smooth_step(v) * smooth_step(self.side - v);
            if mask < 1e-9 {
                return self.background;
            }
            self.background + (self.texture.eval(u, v) - self.background) * mask
        })
    }
}

/// Vertical oscillation with a slow horizontal drift: per-frame displacement
/// of the square's top-left corner relative to frame 0.
pub fn lift_like_motion(n_frames: usize, amplitude: f64, period: f64, drift: f64) -> Vec<(f64, f64)> {
    (0..n_frames)
        .map(|k| {
            let t = k as f64;
            (
                drift * t,
                -amplitude * (1.0 - (2.0 * std::f64::consts::PI * t / period).cos()) / 2.0,
            )
        })
        .collect()
}
