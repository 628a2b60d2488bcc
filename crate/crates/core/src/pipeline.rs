//! End-to-end stages that chain the other modules: frames to displacement,
//! and measured failure repetitions to a capability profile.

use crate::capability::{
    merge_reconstructions, profile_from_reconstruction, reconstruct_from_failure_rep, CapabilityPath,
    CapabilityProfile, GridSpec, KnownMask, PathPoint, PenaltyWeights, Reconstruction,
};
use crate::dynamics::{effective_force, ExerciseSetup};
use crate::formats::SetsManifest;
use crate::kinematics::{fit_spline, ElevationSeries};
use crate::vision::{
    detect_interest_points, robust_displacement, seed_features, track_features, FeatureTrack, FusedDisplacement,
    GrayFrame, Polygon, TrackerConfig,
};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct TrackingOutput {
    pub tracks: Vec<FeatureTrack>,
    pub displacement: Vec<FusedDisplacement>,
}

/// Detects interest points on the first frame, keeps those inside `roi`,
/// tracks them through `frames` and fuses the tracks.
pub fn track_load(frames: &[GrayFrame], roi: &Polygon, cfg: &TrackerConfig) -> Result<TrackingOutput> {
    let first = frames.first().ok_or_else(|| Error::invalid("no frames"))?;
    let points = detect_interest_points(first, cfg)?;
    let seeds = seed_features(&points, roi);
    if seeds.is_empty() {
        return Err(Error::invalid(format!(
            "no interest points inside the region of interest ({} found in the frame)",
            points.len()
        )));
    }
    let tracks = track_features(frames, &seeds, cfg)?;
    let displacement = robust_displacement(&tracks, frames.len(), cfg)?;
    Ok(TrackingOutput { tracks, displacement })
}

/// Capability-plane path of one measured repetition, by inverse dynamics on a
/// smoothing spline of its elevation.
///
/// Elevation is taken relative to the first sample. The path stops at the
/// highest point reached, and small dips from smoothing are flattened so the
/// elevation never decreases. Each point's `g` assumes maximal exertion from
/// `entry_fatigue` on.
pub fn measured_path(
    rep: &ElevationSeries,
    setup: &ExerciseSetup,
    omega: f64,
    t_f: f64,
    entry_fatigue: f64,
) -> Result<CapabilityPath> {
    let spline = fit_spline(rep, omega)?;
    let knots = spline.knots();
    let states: Vec<_> = knots.iter().map(|&t| spline.eval(t)).collect::<Result<_>>()?;
    let base = states[0].position;
    let top = states
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.position.total_cmp(&b.1.position))
        .map(|(k, _)| k)
        .unwrap_or(0);
    if top == 0 {
        return Err(Error::invalid("repetition never rises above its starting elevation"));
    }
    let mut points = Vec::with_capacity(top + 1);
    let mut highest = 0.0_f64;
    for (&t, s) in knots.iter().zip(&states).take(top + 1) {
        highest = highest.max(s.position - base);
        let v = s.velocity.max(0.0);
        points.push(PathPoint {
            t,
            delta: highest,
            v,
            force: effective_force(setup, v, s.acceleration).max(0.0),
            g: (-(entry_fatigue + t / t_f)).exp(),
        });
    }
    if highest >= setup.delta_max {
        return Err(Error::invalid(format!(
            "repetition marked as failed rises {highest:.3} m, reaching the {:.3} m range of motion",
            setup.delta_max
        )));
    }
    CapabilityPath::new(points)
}

#[derive(Debug, Clone)]
pub struct ReconstructionOutput {
    pub profile: CapabilityProfile,
    pub mask: KnownMask,
    /// Scale applied to each failed repetition's values when merging.
    pub scales: Vec<f64>,
    pub paths: Vec<CapabilityPath>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionParams {
    pub omega: f64,
    pub t_f: f64,
    pub weights: PenaltyWeights,
}

/// Profile from every repetition the manifest marks as failed. Successful
/// repetitions carry no equality information and are skipped.
pub fn reconstruct_profile(
    series: &ElevationSeries,
    manifest: &SetsManifest,
    setup: &ExerciseSetup,
    params: &ReconstructionParams,
) -> Result<ReconstructionOutput> {
    setup.validate()?;
    manifest.validate(series.len())?;
    let failures = manifest.failures();
    if failures.is_empty() {
        return Err(Error::Infeasible(
            "the manifest marks no failed repetition; there is nothing to reconstruct from".into(),
        ));
    }
    let mut paths = Vec::with_capacity(failures.len());
    for (set, rep) in &failures {
        let slice = series.slice(rep.start_index, rep.end_index)?;
        let l0 = manifest.sets[*set].entry_fatigue;
        paths.push(measured_path(&slice, setup, params.omega, params.t_f, l0)?);
    }
    let grid = GridSpec::for_paths(setup.delta_max, &paths)?;
    let recs: Vec<Reconstruction> = failures
        .iter()
        .zip(&paths)
        .map(|((set, _), p)| reconstruct_from_failure_rep(p, params.t_f, manifest.sets[*set].entry_fatigue, &grid))
        .collect::<Result<_>>()?;
    let (merged, scales) = merge_reconstructions(&recs)?;
    let profile = profile_from_reconstruction(&merged, &params.weights)?;
    Ok(ReconstructionOutput {
        profile,
        mask: merged.mask,
        scales,
        paths,
    })
}
