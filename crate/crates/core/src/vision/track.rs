use nalgebra::{Matrix6, Vector6};

use super::{FeatureTrack, GrayFrame, InterestPoint, TrackerConfig, PYRAMID_LEVELS};
use crate::{Error, Result};

/// Affine warp parameters `a1..a6`:
/// `x_a = ((1 + a1) x + a3 y + a5, a2 x + (1 + a4) y + a6)` with `(x, y)`
/// measured from the window centre.
pub type AffineParams = [f64; 6];

/// Square window centred at `center` spanning `center ± half_size` pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackWindow {
    pub center: (f64, f64),
    pub half_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackStepOutcome {
    pub params: AffineParams,
    pub converged: bool,
    /// Gauss-Newton iterations spent at the finest level.
    pub iterations: usize,
    /// `e(a)` after each accepted iteration at the finest level, starting with
    /// the error at the level's initial estimate.
    pub finest_errors: Vec<f64>,
}

/// Quarter/half/full resolution images with their gradients, index 0 finest.
#[derive(Debug, Clone)]
pub struct FramePyramid {
    levels: Vec<PyramidLevel>,
}

#[derive(Debug, Clone)]
struct PyramidLevel {
    image: GrayFrame,
    gx: GrayFrame,
    gy: GrayFrame,
}

fn downsample(f: &GrayFrame) -> GrayFrame {
    let (w, h) = (f.width() / 2, f.height() / 2);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let s =
                f.get(2 * x, 2 * y) + f.get(2 * x + 1, 2 * y) + f.get(2 * x, 2 * y + 1) + f.get(2 * x + 1, 2 * y + 1);
            data.push(0.25 * s);
        }
    }
    GrayFrame::raw(w, h, data)
}

fn gradients(f: &GrayFrame) -> (GrayFrame, GrayFrame) {
    let (w, h) = (f.width(), f.height());
    let mut gx = Vec::with_capacity(w * h);
    let mut gy = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            gx.push(0.5 * (f.get_clamped(x + 1, y) - f.get_clamped(x - 1, y)));
            gy.push(0.5 * (f.get_clamped(x, y + 1) - f.get_clamped(x, y - 1)));
        }
    }
    (GrayFrame::raw(w, h, gx), GrayFrame::raw(w, h, gy))
}

impl FramePyramid {
    pub fn new(frame: &GrayFrame) -> Result<Self> {
        let min_side = 1 << (PYRAMID_LEVELS + 1);
        if frame.width() < min_side || frame.height() < min_side {
            return Err(Error::invalid(format!(
                "frame must be at least {min_side} pixels on each side for the pyramid"
            )));
        }
        let mut levels = Vec::with_capacity(PYRAMID_LEVELS);
        let mut img = frame.clone();
        for l in 0..PYRAMID_LEVELS {
            if l > 0 {
                img = downsample(&img);
            }
            let (gx, gy) = gradients(&img);
            levels.push(PyramidLevel {
                image: img.clone(),
                gx,
                gy,
            });
        }
        Ok(Self { levels })
    }

    pub fn width(&self) -> usize {
        self.levels[0].image.width()
    }

    pub fn height(&self) -> usize {
        self.levels[0].image.height()
    }
}

/// Full-resolution pixel coordinate to level `l` (pixel centres of the 2x2
/// box average sit half a pixel into each block).
fn to_level(c: f64, l: usize) -> f64 {
    (c + 0.5) / (1u32 << l) as f64 - 0.5
}

enum LevelResult {
    Converged,
    Exhausted,
    Singular,
    LeftFrame,
}

struct LevelSolver<'a> {
    next: &'a PyramidLevel,
    center: (f64, f64),
    offsets: Vec<(f64, f64)>,
    template: Vec<f64>,
}

impl LevelSolver<'_> {
    fn warp(&self, a: &AffineParams, u: f64, w: f64) -> (f64, f64) {
        (
            self.center.0 + (1.0 + a[0]) * u + a[2] * w + a[4],
            self.center.1 + a[1] * u + (1.0 + a[3]) * w + a[5],
        )
    }

    fn error(&self, a: &AffineParams) -> Option<f64> {
        let mut e = 0.0;
        for (&(u, w), &t) in self.offsets.iter().zip(&self.template) {
            let (x, y) = self.warp(a, u, w);
            let i = self.next.image.bilinear(x, y)?;
            e += (i - t) * (i - t);
        }
        Some(e)
    }

    /// Closed-form step of the linearised problem at `a`.
    fn step(&self, a: &AffineParams) -> Option<std::result::Result<Vector6<f64>, ()>> {
        let mut h = Matrix6::<f64>::zeros();
        let mut b = Vector6::<f64>::zeros();
        for (&(u, w), &t) in self.offsets.iter().zip(&self.template) {
            let (x, y) = self.warp(a, u, w);
            let i = self.next.image.bilinear(x, y)?;
            let gx = self.next.gx.bilinear(x, y)?;
            let gy = self.next.gy.bilinear(x, y)?;
            let j = Vector6::new(gx * u, gy * u, gx * w, gy * w, gx, gy);
            h += j * j.transpose();
            b += j * (t - i);
        }
        let eig = h.symmetric_eigenvalues();
        let max = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let min = eig.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        if !(max > 0.0) || min <= 1e-9 * max {
            return Some(Err(()));
        }
        Some(h.cholesky().map(|c| c.solve(&b)).ok_or(()))
    }

    fn solve(
        &self,
        a: &mut AffineParams,
        cfg: &TrackerConfig,
        trace: &mut Vec<f64>,
        iterations: &mut usize,
    ) -> LevelResult {
        let Some(mut e) = self.error(a) else {
            return LevelResult::LeftFrame;
        };
        trace.push(e);
        for _ in 0..cfg.max_iterations {
            *iterations += 1;
            let delta = match self.step(a) {
                None => return LevelResult::LeftFrame,
                Some(Err(())) => return LevelResult::Singular,
                Some(Ok(d)) => d,
            };
            // Backtrack along the Gauss-Newton direction so that e(a) never
            // increases across accepted iterations.
            let mut scale = 1.0;
            let mut accepted = None;
            for _ in 0..6 {
                let mut cand = *a;
                for k in 0..6 {
                    cand[k] += scale * delta[k];
                }
                if let Some(ec) = self.error(&cand) {
                    if ec <= e {
                        accepted = Some((cand, ec));
                        break;
                    }
                }
                scale *= 0.5;
            }
            let Some((cand, ec)) = accepted else {
                // No descent along the step: stationary at the current estimate.
                return LevelResult::Converged;
            };
            *a = cand;
            e = ec;
            trace.push(e);
            if scale * delta.norm() <= cfg.epsilon {
                return LevelResult::Converged;
            }
        }
        LevelResult::Exhausted
    }
}

fn step_pyramids(
    prev: &FramePyramid,
    next: &FramePyramid,
    window: &TrackWindow,
    a_init: AffineParams,
    cfg: &TrackerConfig,
) -> TrackStepOutcome {
    let mut a = a_init;
    let coarsest = PYRAMID_LEVELS - 1;
    let s = (1u32 << coarsest) as f64;
    a[4] /= s;
    a[5] /= s;
    let mut finest_errors = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    for l in (0..PYRAMID_LEVELS).rev() {
        let p = &prev.levels[l];
        let n = &next.levels[l];
        let center = (to_level(window.center.0, l), to_level(window.center.1, l));
        let half = ((window.half_size as f64) / (1u32 << l) as f64).round().max(3.0) as isize;
        let mut offsets = Vec::with_capacity(((2 * half + 1) * (2 * half + 1)) as usize);
        let mut template = Vec::with_capacity(offsets.capacity());
        let mut inside = true;
        for dy in -half..=half {
            for dx in -half..=half {
                let (u, w) = (dx as f64, dy as f64);
                match p.image.bilinear(center.0 + u, center.1 + w) {
                    Some(t) => {
                        offsets.push((u, w));
                        template.push(t);
                    }
                    None => inside = false,
                }
            }
        }
        let solver = LevelSolver {
            next: n,
            center,
            offsets,
            template,
        };
        let mut scratch = Vec::new();
        let mut scratch_iters = 0;
        let (trace, iters) = if l == 0 {
            (&mut finest_errors, &mut iterations)
        } else {
            (&mut scratch, &mut scratch_iters)
        };
        let result = if inside {
            solver.solve(&mut a, cfg, trace, iters)
        } else {
            LevelResult::LeftFrame
        };
        match result {
            LevelResult::Converged => converged = l == 0,
            LevelResult::Exhausted => converged = false,
            LevelResult::LeftFrame => {
                // Coarse windows are larger relative to the image; only the
                // finest level decides whether the track is lost.
                if l == 0 {
                    return TrackStepOutcome {
                        params: a,
                        converged: false,
                        iterations,
                        finest_errors,
                    };
                }
            }
            LevelResult::Singular => {
                if l == 0 {
                    return TrackStepOutcome {
                        params: a,
                        converged: false,
                        iterations,
                        finest_errors,
                    };
                }
            }
        }
        if l > 0 {
            a[4] *= 2.0;
            a[5] *= 2.0;
        }
    }
    TrackStepOutcome {
        params: a,
        converged,
        iterations,
        finest_errors,
    }
}

/// Estimates the affine warp mapping `window` in `prev` onto `next` with the
/// three-level coarse-to-fine scheme.
pub fn track_step(
    prev: &GrayFrame,
    next: &GrayFrame,
    window: &TrackWindow,
    a_init: AffineParams,
    cfg: &TrackerConfig,
) -> Result<TrackStepOutcome> {
    cfg.validate()?;
    if prev.width() != next.width() || prev.height() != next.height() {
        return Err(Error::invalid("frames differ in size"));
    }
    let h = window.half_size as f64;
    let (cx, cy) = window.center;
    if !(cx - h >= 0.0 && cy - h >= 0.0 && cx + h <= (prev.width() - 1) as f64 && cy + h <= (prev.height() - 1) as f64)
    {
        return Err(Error::invalid("tracking window is not inside the frame"));
    }
    let pp = FramePyramid::new(prev)?;
    let np = FramePyramid::new(next)?;
    Ok(step_pyramids(&pp, &np, window, a_init, cfg))
}

/// Tracks every seed from frame 0 through the sequence. Tracks that fail are
/// terminated and never re-spawned.
pub fn track_features(frames: &[GrayFrame], seeds: &[InterestPoint], cfg: &TrackerConfig) -> Result<Vec<FeatureTrack>> {
    cfg.validate()?;
    let Some(first) = frames.first() else {
        return Err(Error::invalid("empty frame sequence"));
    };
    let mut tracks: Vec<FeatureTrack> = seeds
        .iter()
        .map(|p| FeatureTrack::new(0, super::window_size_for_scale(p.scale, cfg.sigma), (p.x, p.y)))
        .collect();
    let mut velocity = vec![(0.0, 0.0); tracks.len()];
    let (w, h) = (first.width() as f64, first.height() as f64);

    let mut prev = FramePyramid::new(first)?;
    for frame in &frames[1..] {
        let next = FramePyramid::new(frame)?;
        for (track, vel) in tracks.iter_mut().zip(velocity.iter_mut()) {
            if !track.alive {
                continue;
            }
            let p = *track.positions.last().unwrap();
            let half = track.window_size / 2;
            let c = (p.0.round(), p.1.round());
            let hf = half as f64;
            if c.0 - hf < 0.0 || c.1 - hf < 0.0 || c.0 + hf > w - 1.0 || c.1 + hf > h - 1.0 {
                track.alive = false;
                continue;
            }
            let window = TrackWindow {
                center: c,
                half_size: half,
            };
            let init = [0.0, 0.0, 0.0, 0.0, vel.0, vel.1];
            let out = step_pyramids(&prev, &next, &window, init, cfg);
            if !out.converged {
                track.alive = false;
                continue;
            }
            let a = out.params;
            let off = (p.0 - c.0, p.1 - c.1);
            let q = (
                c.0 + (1.0 + a[0]) * off.0 + a[2] * off.1 + a[4],
                c.1 + a[1] * off.0 + (1.0 + a[3]) * off.1 + a[5],
            );
            if !(q.0 >= 0.0 && q.1 >= 0.0 && q.0 <= w - 1.0 && q.1 <= h - 1.0) {
                track.alive = false;
                continue;
            }
            *vel = (q.0 - p.0, q.1 - p.1);
            track.positions.push(q);
        }
        prev = next;
    }
    Ok(tracks)
}
