//! Forward simulation of whole sets, repetition maxima and one-repetition
//! maximum estimates.

use serde::{Deserialize, Serialize};

use crate::capability::{CapabilityPath, CapabilityProfile};
use crate::dynamics::ExerciseSetup;
use crate::fatigue::{
    max_exertion_rep, optimal_rep_policy, FatigueState, RepOutcome, RepResult, DEFAULT_DT, DEFAULT_POLICY_SLICES,
    DEFAULT_POLICY_VELOCITIES,
};
use crate::kinematics::ElevationSeries;
use crate::units::lb_to_kg;
use crate::{Error, Result};

/// Default cap on repetitions in one simulated set.
pub const DEFAULT_MAX_REPS: usize = 50;

/// Load resolution of 1RM searches, kg (half a pound).
pub fn default_1rm_tolerance() -> f64 {
    lb_to_kg(0.5)
}

/// Predicted one-repetition maximum from an `n_rep`-repetition maximum load.
pub fn brzycki_1rm(w: f64, n_rep: u32) -> Result<f64> {
    if !(1..=36).contains(&n_rep) {
        return Err(Error::invalid(format!(
            "repetition count must be between 1 and 36, got {n_rep}"
        )));
    }
    if !(w.is_finite() && w >= 0.0) {
        return Err(Error::invalid(format!("load must be non-negative, got {w}")));
    }
    Ok(w * (36.0 / (37.0 - n_rep as f64)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    MaxExertion,
    MinimalFatigue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Integration step of maximal-exertion repetitions, s.
    pub dt: f64,
    pub policy_slices: usize,
    pub policy_velocities: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            policy_slices: DEFAULT_POLICY_SLICES,
            policy_velocities: DEFAULT_POLICY_VELOCITIES,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetResult {
    pub reps: Vec<RepResult>,
    pub final_state: FatigueState,
}

impl SetResult {
    pub fn completed(&self) -> usize {
        self.reps.iter().filter(|r| r.outcome.completed()).count()
    }

    pub fn durations(&self) -> Vec<f64> {
        self.reps.iter().map(|r| r.duration()).collect()
    }

    /// Elevation against time over the whole set, repetitions placed back to back.
    pub fn elevation_trace(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut offset = 0.0;
        for rep in &self.reps {
            for p in &rep.path.points {
                out.push((offset + p.t, p.delta));
            }
            offset += rep.duration();
        }
        out
    }
}

/// Simulates repetitions back to back from an unfatigued start until one
/// fails or `max_reps` complete. Fatigue carries over between repetitions and
/// does not recover in the pauses.
///
/// Under the minimal-fatigue policy a repetition the policy cannot complete
/// is attempted with maximal exertion, which either scrapes through or
/// produces the failure path.
pub fn simulate_set(
    profile: &CapabilityProfile,
    setup: &ExerciseSetup,
    t_f: f64,
    policy: Policy,
    max_reps: usize,
    cfg: &SimulationConfig,
) -> Result<SetResult> {
    let mut state = FatigueState::fresh(t_f)?;
    let mut reps = Vec::new();
    while reps.len() < max_reps {
        let rep = run_rep(profile, setup, state, policy, cfg)?;
        state = rep.state;
        let done = !rep.outcome.completed();
        reps.push(rep);
        if done {
            break;
        }
    }
    Ok(SetResult {
        reps,
        final_state: state,
    })
}

fn run_rep(
    profile: &CapabilityProfile,
    setup: &ExerciseSetup,
    state: FatigueState,
    policy: Policy,
    cfg: &SimulationConfig,
) -> Result<RepResult> {
    match policy {
        Policy::MaxExertion => max_exertion_rep(profile, setup, state, cfg.dt),
        Policy::MinimalFatigue => {
            match optimal_rep_policy(profile, setup, state, cfg.policy_slices, cfg.policy_velocities) {
                Ok(res) => Ok(RepResult {
                    state: FatigueState::new(res.terminal_l, state.t_f())?,
                    path: res.path,
                    outcome: RepOutcome::Completed,
                }),
                Err(Error::Infeasible(_)) => max_exertion_rep(profile, setup, state, cfg.dt),
                Err(e) => Err(e),
            }
        }
    }
}

/// Repetitions completed with `setup.m` before failure, lifting with the
/// minimal-fatigue policy; capped at `max_reps`.
pub fn max_reps_at_load(
    profile: &CapabilityProfile,
    setup: &ExerciseSetup,
    t_f: f64,
    max_reps: usize,
    cfg: &SimulationConfig,
) -> Result<usize> {
    Ok(simulate_set(profile, setup, t_f, Policy::MinimalFatigue, max_reps, cfg)?.completed())
}

/// Whether a single maximal-exertion repetition with load `m` completes from
/// an unfatigued start.
pub fn single_rep_completes(
    profile: &CapabilityProfile,
    setup: &ExerciseSetup,
    t_f: f64,
    m: f64,
    dt: f64,
) -> Result<bool> {
    let s = setup.with_load(m);
    s.validate()?;
    Ok(max_exertion_rep(profile, &s, FatigueState::fresh(t_f)?, dt)?
        .outcome
        .completed())
}

/// Largest load (kg) a fresh athlete lifts once with maximal exertion, to
/// within `tol` kg. Loads are bracketed by doubling from `tol` and then
/// bisected.
pub fn estimate_1rm(
    profile: &CapabilityProfile,
    setup: &ExerciseSetup,
    t_f: f64,
    tol: f64,
    cfg: &SimulationConfig,
) -> Result<f64> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let ok = |m: f64| single_rep_completes(profile, setup, t_f, m, cfg.dt);
    let mut lo = tol;
    if !ok(lo)? {
        return Err(Error::Infeasible(format!(
            "profile cannot lift even {tol} kg through {} m",
            setup.delta_max
        )));
    }
    let mut hi = 2.0 * lo;
    while ok(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e7 {
            return Err(Error::Infeasible("no load is heavy enough to fail".into()));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepComparison {
    /// Root-mean-square elevation difference, m.
    pub rms_m: f64,
    /// Predicted minus measured duration, s.
    pub duration_delta_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub reps: Vec<RepComparison>,
    /// RMS over all compared samples, m.
    pub overall_rms_m: f64,
    pub predicted_reps: usize,
    pub measured_reps: usize,
    pub count_mismatch: bool,
}

/// Elevation of `path` at time `t` after its start, holding the end values
/// outside the path.
pub fn path_elevation_at(path: &CapabilityPath, t: f64) -> f64 {
    let pts = &path.points;
    let t0 = pts[0].t;
    let t = t0 + t;
    if t <= t0 {
        return pts[0].delta;
    }
    let k = pts.partition_point(|p| p.t <= t);
    if k >= pts.len() {
        return pts[pts.len() - 1].delta;
    }
    let (a, b) = (&pts[k - 1], &pts[k]);
    a.delta + (b.delta - a.delta) * (t - a.t) / (b.t - a.t)
}

/// Compares simulated repetitions with measured ones, pairing them in order
/// with their starts aligned. Each measured sample is compared with the
/// predicted elevation at the same time since the repetition start.
pub fn compare_to_measurement(predicted: &[CapabilityPath], measured: &[ElevationSeries]) -> Result<ComparisonReport> {
    if predicted.is_empty() || measured.is_empty() {
        return Err(Error::invalid("nothing to compare"));
    }
    if let Some(k) = predicted.iter().position(|p| p.is_empty()) {
        return Err(Error::invalid(format!("predicted repetition {k} is empty")));
    }
    let mut reps = Vec::new();
    let (mut total, mut count) = (0.0, 0usize);
    for (p, m) in predicted.iter().zip(measured) {
        let sq: Vec<f64> = m
            .values()
            .iter()
            .enumerate()
            .map(|(k, y)| (path_elevation_at(p, m.time(k)) - y).powi(2))
            .collect();
        total += sq.iter().sum::<f64>();
        count += sq.len();
        reps.push(RepComparison {
            rms_m: (sq.iter().sum::<f64>() / sq.len() as f64).sqrt(),
            duration_delta_s: p.duration() - m.duration(),
        });
    }
    Ok(ComparisonReport {
        reps,
        overall_rms_m: (total / count as f64).sqrt(),
        predicted_reps: predicted.len(),
        measured_reps: measured.len(),
        count_mismatch: predicted.len() != measured.len(),
    })
}
