use serde::{Deserialize, Serialize};

use super::{FeatureTrack, TrackerConfig};
use crate::{Error, Result};

/// Fused load displacement at one frame, pixels, relative to each track's start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusedDisplacement {
    pub frame: usize,
    pub dx: f64,
    pub dy: f64,
    /// Set when no track survived the median gate (or none covered the frame)
    /// and the previous value was carried forward.
    pub flagged: bool,
    /// Number of displacements averaged.
    pub support: usize,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Robust mean of the per-track displacements at each of `n_frames` frames:
/// displacements farther than `cfg.gate` pixels from the component-wise
/// median are discarded and the rest averaged. Only tracks that still cover
/// frame `k` contribute to it.
pub fn robust_displacement(
    tracks: &[FeatureTrack],
    n_frames: usize,
    cfg: &TrackerConfig,
) -> Result<Vec<FusedDisplacement>> {
    if !(cfg.gate.is_finite() && cfg.gate > 0.0) {
        return Err(Error::invalid("gate must be positive"));
    }
    if tracks.is_empty() {
        return Err(Error::invalid("no tracks to fuse"));
    }
    let mut out = Vec::with_capacity(n_frames);
    let mut last = (0.0, 0.0);
    for k in 0..n_frames {
        let v: Vec<(f64, f64)> = tracks.iter().filter_map(|t| t.displacement_at(k)).collect();
        let mut sample = FusedDisplacement {
            frame: k,
            dx: last.0,
            dy: last.1,
            flagged: true,
            support: 0,
        };
        if !v.is_empty() {
            let mx = median(&mut v.iter().map(|d| d.0).collect::<Vec<_>>());
            let my = median(&mut v.iter().map(|d| d.1).collect::<Vec<_>>());
            let kept: Vec<&(f64, f64)> = v
                .iter()
                .filter(|d| ((d.0 - mx).powi(2) + (d.1 - my).powi(2)).sqrt() <= cfg.gate)
                .collect();
            if !kept.is_empty() {
                let n = kept.len() as f64;
                sample.dx = kept.iter().map(|d| d.0).sum::<f64>() / n;
                sample.dy = kept.iter().map(|d| d.1).sum::<f64>() / n;
                sample.flagged = false;
                sample.support = kept.len();
            }
        }
        last = (sample.dx, sample.dy);
        out.push(sample);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_track(x0: f64, y0: f64, vx: f64, vy: f64, n: usize) -> FeatureTrack {
        FeatureTrack {
            start_frame: 0,
            window_size: 9,
            positions: (0..n).map(|k| (x0 + vx * k as f64, y0 + vy * k as f64)).collect(),
            alive: true,
        }
    }

    fn gate(g: f64) -> TrackerConfig {
        TrackerConfig {
            gate: g,
            ..Default::default()
        }
    }

    #[test]
    fn single_track_passes_through() {
        let t = linear_track(10.0, 20.0, 0.5, -1.25, 6);
        let d = robust_displacement(std::slice::from_ref(&t), 6, &gate(3.0)).unwrap();
        for (k, s) in d.iter().enumerate() {
            assert_eq!((s.dx, s.dy), t.displacement_at(k).unwrap());
            assert!(!s.flagged);
        }
    }

    #[test]
    fn runaway_track_is_gated_out() {
        let mut tracks: Vec<_> = (0..9)
            .map(|i| linear_track(i as f64 * 7.0, 3.0, 0.0, 1.0, 20))
            .collect();
        tracks.push(linear_track(5.0, 5.0, 0.0, 50.0, 20));
        let d = robust_displacement(&tracks, 20, &gate(5.0)).unwrap();
        for (k, s) in d.iter().enumerate() {
            assert_eq!(s.dy, k as f64);
            assert_eq!(s.dx, 0.0);
        }
        assert!(d[5].support == 9);
    }

    #[test]
    fn static_tracks_give_zero() {
        let tracks: Vec<_> = (0..4).map(|i| linear_track(i as f64, 1.0, 0.0, 0.0, 8)).collect();
        let d = robust_displacement(&tracks, 8, &gate(3.0)).unwrap();
        assert!(d.iter().all(|s| s.dx == 0.0 && s.dy == 0.0));
    }

    #[test]
    fn empty_gate_set_propagates_previous_and_flags() {
        // Two tracks diverge; from frame 3 on both sit more than 3 px from
        // their midpoint median.
        let a = linear_track(0.0, 0.0, 0.0, 1.0, 6);
        let b = linear_track(0.0, 0.0, 0.0, -1.0, 6);
        let d = robust_displacement(&[a, b], 6, &gate(2.5)).unwrap();
        assert!(!d[2].flagged);
        assert_eq!(d[2].dy, 0.0);
        assert!(d[3].flagged && d[4].flagged);
        assert_eq!(d[4].dy, d[2].dy);
    }

    #[test]
    fn dead_tracks_stop_contributing() {
        let short = linear_track(0.0, 0.0, 0.0, 10.0, 3);
        let long = linear_track(0.0, 0.0, 0.0, 1.0, 6);
        let d = robust_displacement(&[short, long], 6, &gate(100.0)).unwrap();
        assert_eq!(d[2].dy, (20.0 + 2.0) / 2.0);
        assert_eq!(d[4].dy, 4.0);
        assert_eq!(d[4].support, 1);
    }

    #[test]
    fn removing_a_consistently_gated_track_changes_nothing() {
        let mut tracks: Vec<_> = (0..7)
            .map(|i| linear_track(i as f64, 0.0, 0.1 * (i % 2) as f64, 1.0, 15))
            .collect();
        let base = robust_displacement(&tracks, 15, &gate(3.0)).unwrap();
        tracks.push(linear_track(0.0, 0.0, 9.0, 0.0, 15));
        let with_outlier = robust_displacement(&tracks, 15, &gate(3.0)).unwrap();
        for (a, b) in base.iter().zip(&with_outlier) {
            if a.frame == 0 {
                continue;
            }
            assert!((a.dx - b.dx).abs() < 1e-12 && (a.dy - b.dy).abs() < 1e-12);
        }
    }
}
