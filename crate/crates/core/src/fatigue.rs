//! Fatigue state and the two exertion policies: maximal exertion throughout a
//! repetition, and the dynamic program that lifts the load while accumulating
//! as little fatigue as possible.

use serde::{Deserialize, Serialize};

use crate::capability::{CapabilityPath, CapabilityProfile, PathPoint};
use crate::dynamics::{effective_force, load_acceleration, ExerciseSetup};
use crate::{Error, Result};

/// Default integration step for maximal-exertion repetitions, s.
pub const DEFAULT_DT: f64 = 0.005;
/// Default number of velocity levels in the policy grid.
pub const DEFAULT_POLICY_VELOCITIES: usize = 256;
/// Default number of position slices in the policy grid.
pub const DEFAULT_POLICY_SLICES: usize = 50;
/// A maximal-exertion repetition still short of the top after this long is a failure.
pub const MAX_REP_SECONDS: f64 = 120.0;

/// Accumulated fatigue `L = -ln g` together with the athlete's time constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FatigueState {
    l: f64,
    t_f: f64,
}

impl FatigueState {
    /// Unfatigued athlete (`g = 1`). `t_f` may be infinite.
    pub fn fresh(t_f: f64) -> Result<Self> {
        Self::new(0.0, t_f)
    }

    pub fn new(l: f64, t_f: f64) -> Result<Self> {
        if !(t_f > 0.0) {
            return Err(Error::invalid(format!("T_F must be positive, got {t_f}")));
        }
        if !(l.is_finite() && l >= 0.0) {
            return Err(Error::invalid(format!(
                "fatigue L must be finite and non-negative, got {l}"
            )));
        }
        Ok(Self { l, t_f })
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn g(&self) -> f64 {
        (-self.l).exp()
    }

    pub fn t_f(&self) -> f64 {
        self.t_f
    }
}

/// Relative exertion `F / F̂`.
pub fn rho(force: f64, f_hat: f64) -> Result<f64> {
    if !(f_hat > 0.0 && f_hat.is_finite()) {
        return Err(Error::invalid(format!("capability must be positive, got {f_hat}")));
    }
    if !(force >= 0.0) {
        return Err(Error::invalid(format!("force must be non-negative, got {force}")));
    }
    if force > f_hat {
        return Err(Error::invalid(format!("force {force} exceeds capability {f_hat}")));
    }
    Ok(force / f_hat)
}

/// Exact solution of `dg/dt = -g ρ / T_F` over `dt` with constant `ρ`.
pub fn fatigue_step(state: FatigueState, rho: f64, dt: f64) -> Result<FatigueState> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid(format!("ρ must lie in [0, 1], got {rho}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    Ok(FatigueState {
        l: state.l + rho * dt / state.t_f,
        t_f: state.t_f,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RepOutcome {
    Completed,
    /// The load stalled at elevation `delta`, m.
    Failed {
        delta: f64,
    },
}

impl RepOutcome {
    pub fn completed(&self) -> bool {
        matches!(self, RepOutcome::Completed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepResult {
    pub path: CapabilityPath,
    pub outcome: RepOutcome,
    /// Fatigue at the end of the repetition.
    pub state: FatigueState,
}

impl RepResult {
    pub fn duration(&self) -> f64 {
        self.path.duration()
    }
}

fn check_range(profile: &CapabilityProfile, setup: &ExerciseSetup) -> Result<()> {
    setup.validate()?;
    if setup.delta_max > profile.delta_max() * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "range of motion {} m exceeds the profile's {} m",
            setup.delta_max,
            profile.delta_max()
        )));
    }
    Ok(())
}

/// Simulates a repetition from rest in which the athlete always applies the
/// full fatigued capability `F̂(δ, v) · g`.
///
/// Semi-implicit Euler with step `dt`: velocity first, then position. The
/// repetition completes when the load reaches the range of motion (the last
/// point is interpolated onto it) and fails once velocity is zero and the
/// acceleration is not positive. A load that never starts fails at zero
/// elevation.
pub fn max_exertion_rep(
    profile: &CapabilityProfile,
    setup: &ExerciseSetup,
    state: FatigueState,
    dt: f64,
) -> Result<RepResult> {
    check_range(profile, setup)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    let mut st = state;
    let (mut t, mut delta, mut v) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut points = Vec::new();
    loop {
        let g = st.g();
        let force = profile.sample_clamped(delta, v) * g;
        let a = load_acceleration(setup, force, v);
        points.push(PathPoint { t, delta, v, force, g });
        if (v <= 0.0 && a <= 0.0) || t >= MAX_REP_SECONDS {
            return Ok(RepResult {
                path: CapabilityPath { points },
                outcome: RepOutcome::Failed { delta },
                state: st,
            });
        }
        let v_next = (v + a * dt).max(0.0);
        let delta_next = delta + v_next * dt;
        if delta_next >= setup.delta_max {
            // Fraction of the step needed to reach the top; v varies linearly
            // in time within the step of the position update.
            let frac = ((setup.delta_max - delta) / (v_next * dt)).clamp(0.0, 1.0);
            let h = frac * dt;
            if h > 0.0 {
                st = fatigue_step(st, 1.0, h)?;
            }
            let v_top = v + a * h;
            let g = st.g();
            points.push(PathPoint {
                t: (t + h).max(t + dt * 1e-9),
                delta: setup.delta_max,
                v: v_top,
                force: profile.sample_clamped(setup.delta_max, v_top) * g,
                g,
            });
            return Ok(RepResult {
                path: CapabilityPath { points },
                outcome: RepOutcome::Completed,
                state: st,
            });
        }
        st = fatigue_step(st, 1.0, dt)?;
        t += dt;
        delta = delta_next;
        v = v_next;
    }
}

/// Minimal-fatigue labels over position slices and velocity levels.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrid {
    pub d_delta: f64,
    pub velocities: Vec<f64>,
    /// `l[n][j]`: least fatigue reaching slice `n` at velocity `j`, or infinity.
    pub l: Vec<Vec<f64>>,
    /// Velocity index at slice `n - 1` on the optimal way into `(n, j)`.
    pub back: Vec<Vec<Option<usize>>>,
    /// Force applied on the optimal edge into `(n, j)`.
    pub edge_force: Vec<Vec<f64>>,
}

impl PolicyGrid {
    pub fn n_slices(&self) -> usize {
        self.l.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyResult {
    pub path: CapabilityPath,
    pub terminal_l: f64,
    pub grid: PolicyGrid,
}

/// Transition `(δ_n, v') -> (δ_n + Δδ, v)`: the force it needs and the fatigue
/// it adds, or `None` when it lies outside the athlete's reach from an entry
/// fatigue `l`.
#[allow(clippy::too_many_arguments)]
pub fn policy_edge(
    profile: &CapabilityProfile,
    setup: &ExerciseSetup,
    t_f: f64,
    delta_n: f64,
    d_delta: f64,
    v_from: f64,
    v_to: f64,
    l: f64,
) -> Option<(f64, f64)> {
    if v_from + v_to <= 0.0 || v_to < 0.0 {
        return None;
    }
    let a = (v_to * v_to - v_from * v_from) / (2.0 * d_delta);
    let force = effective_force(setup, v_from, a);
    let f_hat = profile.sample_clamped(delta_n, v_from);
    if force < 0.0 || force > f_hat * (-l).exp() {
        return None;
    }
    let rho = if force == 0.0 { 0.0 } else { force / f_hat };
    let dt = d_delta / ((v_from + v_to) / 2.0);
    Some((force, dt * rho / t_f))
}

/// Least-fatigue way to lift the load from rest through the range of motion.
///
/// The range is cut into `n_slices` equal position steps and velocities into
/// `n_velocities` levels on `[0, v_max]` spaced uniformly in `v²`, so every
/// edge's acceleration is a multiple of one quantum `Δ(v²) / 2Δδ`. Each edge
/// needs the force that produces the constant acceleration between its end
/// velocities and is
/// admitted only if that force is within the fatigued capability at the
/// edge's start. Because admissibility only improves with lower fatigue, the
/// least-fatigue label at each node is all the state the recursion needs.
pub fn optimal_rep_policy(
    profile: &CapabilityProfile,
    setup: &ExerciseSetup,
    entry: FatigueState,
    n_slices: usize,
    n_velocities: usize,
) -> Result<PolicyResult> {
    check_range(profile, setup)?;
    if n_slices < 1 || n_velocities < 2 {
        return Err(Error::invalid(
            "policy grid needs at least 1 slice and 2 velocity levels",
        ));
    }
    let t_f = entry.t_f();
    let d_delta = setup.delta_max / n_slices as f64;
    let v_max = profile.v_max();
    let velocities: Vec<f64> = (0..n_velocities)
        .map(|j| {
            if j == n_velocities - 1 {
                v_max
            } else {
                v_max * (j as f64 / (n_velocities - 1) as f64).sqrt()
            }
        })
        .collect();
    let nv = n_velocities;
    let mut l = vec![vec![f64::INFINITY; nv]; n_slices + 1];
    let mut back = vec![vec![None; nv]; n_slices + 1];
    let mut edge_force = vec![vec![f64::NAN; nv]; n_slices + 1];
    l[0][0] = entry.l();
    for n in 0..n_slices {
        let delta_n = n as f64 * d_delta;
        for jp in 0..nv {
            let lp = l[n][jp];
            if !lp.is_finite() {
                continue;
            }
            // The required force grows with the target velocity, so the
            // admissible targets form one run of levels; levels are uniform
            // in v², which locates the run directly.
            let vp = velocities[jp];
            let mass = setup.m + setup.m0;
            let base = (setup.m - setup.m0) * setup.g + setup.c * vp;
            let cap = profile.sample_clamped(delta_n, vp) * (-lp).exp();
            let s_lo = vp * vp + 2.0 * d_delta * (0.0 - base) / mass;
            let s_hi = vp * vp + 2.0 * d_delta * (cap - base) / mass;
            if s_hi < 0.0 {
                continue;
            }
            let per_level = (nv - 1) as f64 / (v_max * v_max);
            let j_lo = ((s_lo * per_level).ceil() - 1.0).max(0.0) as usize;
            let j_hi = (((s_hi * per_level).floor() + 1.0).max(0.0) as usize).min(nv - 1);
            for j in j_lo..=j_hi {
                if let Some((force, cost)) =
                    policy_edge(profile, setup, t_f, delta_n, d_delta, velocities[jp], velocities[j], lp)
                {
                    let cand = lp + cost;
                    if cand < l[n + 1][j] {
                        l[n + 1][j] = cand;
                        back[n + 1][j] = Some(jp);
                        edge_force[n + 1][j] = force;
                    }
                }
            }
        }
    }
    let grid = PolicyGrid {
        d_delta,
        velocities,
        l,
        back,
        edge_force,
    };
    let (j_end, terminal_l) = grid.l[n_slices]
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least two velocity levels");
    if !terminal_l.is_finite() {
        return Err(Error::Infeasible(format!(
            "no admissible way to lift {} kg through {} m at fatigue L = {:.4}",
            setup.m,
            setup.delta_max,
            entry.l()
        )));
    }
    let path = policy_path(&grid, setup, n_slices, j_end)?;
    Ok(PolicyResult { path, terminal_l, grid })
}

/// Backtracks the optimal path into `(n_end, j_end)`.
pub fn policy_path(grid: &PolicyGrid, setup: &ExerciseSetup, n_end: usize, j_end: usize) -> Result<CapabilityPath> {
    if !grid.l[n_end][j_end].is_finite() {
        return Err(Error::Infeasible(format!("node ({n_end}, {j_end}) is unreachable")));
    }
    let mut js = vec![j_end];
    let mut n = n_end;
    while n > 0 {
        let jp = grid.back[n][*js.last().unwrap()].expect("reachable node has a predecessor");
        js.push(jp);
        n -= 1;
    }
    js.reverse();
    let mut points = Vec::with_capacity(js.len());
    let mut t = 0.0;
    for (n, &j) in js.iter().enumerate() {
        let v = grid.velocities[j];
        if n > 0 {
            t += grid.d_delta / ((grid.velocities[js[n - 1]] + v) / 2.0);
        }
        // force on the edge leaving this node; the last node keeps its incoming force
        let force = if n + 1 < js.len() {
            grid.edge_force[n + 1][js[n + 1]]
        } else {
            grid.edge_force[n][j]
        };
        let delta = if n == n_end && n_end == grid.n_slices() {
            setup.delta_max
        } else {
            n as f64 * grid.d_delta
        };
        points.push(PathPoint {
            t,
            delta,
            v,
            force,
            g: (-grid.l[n][j]).exp(),
        });
    }
    CapabilityPath::new(points)
}
