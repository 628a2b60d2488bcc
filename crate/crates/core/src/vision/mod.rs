//! Load motion extraction from grayscale frame sequences.
//!
//! Interest points are found as scale-space extrema of a difference of
//! Gaussians, the user-outlined load region selects which of them to follow,
//! each one is tracked frame to frame with a coarse-to-fine affine
//! Lucas-Kanade tracker, and the resulting tracks are fused into a single
//! displacement per frame with a median gate.

mod detect;
mod frame;
mod fuse;
mod seed;
mod track;

pub use detect::{build_scale_space, detect_interest_points, InterestPoint, ScaleSpace};
pub use frame::{load_frames, GrayFrame};
pub use fuse::{robust_displacement, FusedDisplacement};
pub use seed::{seed_features, Polygon};
pub use track::{track_features, track_step, AffineParams, FramePyramid, TrackStepOutcome, TrackWindow};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of pyramid levels used by the tracker (quarter, half, full).
pub const PYRAMID_LEVELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Base Gaussian standard deviation in pixels; scale level `s` blurs with `s * sigma`.
    pub sigma: f64,
    pub n_scales: usize,
    /// Minimum |DoG| response of an accepted interest point.
    pub contrast_threshold: f64,
    /// Principal-curvature ratio `r` of the edge rejection test.
    pub edge_eigenvalue_ratio: f64,
    /// Convergence tolerance on the norm of the affine update.
    pub epsilon: f64,
    /// Gauss-Newton iterations allowed per pyramid level.
    pub max_iterations: usize,
    /// Median gate for track fusion, pixels.
    pub gate: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            n_scales: 6,
            contrast_threshold: 0.01,
            edge_eigenvalue_ratio: 10.0,
            epsilon: 1e-3,
            max_iterations: 30,
            gate: 3.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma", self.sigma),
            ("contrast_threshold", self.contrast_threshold),
            ("edge_eigenvalue_ratio", self.edge_eigenvalue_ratio),
            ("epsilon", self.epsilon),
            ("gate", self.gate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_scales < 3 {
            return Err(Error::invalid("n_scales must be at least 3"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be positive"));
        }
        Ok(())
    }
}

/// Image trajectory of one tracked feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTrack {
    pub start_frame: usize,
    /// Side length of the square tracking window, pixels.
    pub window_size: usize,
    pub positions: Vec<(f64, f64)>,
    pub alive: bool,
}

impl FeatureTrack {
    pub fn new(start_frame: usize, window_size: usize, at: (f64, f64)) -> Self {
        Self {
            start_frame,
            window_size,
            positions: vec![at],
            alive: true,
        }
    }

    /// Last frame index this track has a position for.
    pub fn last_frame(&self) -> usize {
        self.start_frame + self.positions.len() - 1
    }

    /// Displacement from the track's own start at absolute frame `k`, if the
    /// track covers that frame.
    pub fn displacement_at(&self, k: usize) -> Option<(f64, f64)> {
        if k < self.start_frame {
            return None;
        }
        let p = self.positions.get(k - self.start_frame)?;
        let o = self.positions[0];
        Some((p.0 - o.0, p.1 - o.1))
    }
}

/// Side length of the tracking window for a point detected at `scale`.
///
/// The window spans two blur standard deviations on each side of the point,
/// with a floor so that fine-scale points still carry enough texture.
pub fn window_size_for_scale(scale: f64, sigma: f64) -> usize {
    let half = (2.0 * scale * sigma).ceil().max(4.0) as usize;
    2 * half + 1
}
