use liftcap_core::capability::{apply_gaussian_bump, CapabilityProfile, GridSpec, KnownMask, PathPoint};
use liftcap_core::dynamics::ExerciseSetup;
use liftcap_core::fatigue::RepOutcome;
use liftcap_core::formats::ProfileFile;
use liftcap_core::simulation::{
    default_1rm_tolerance, estimate_1rm, simulate_set, single_rep_completes, Policy, SetResult, SimulationConfig,
};
use liftcap_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::ApiError;

/// Undo history depth.
pub const MAX_UNDO: usize = 50;
/// Repetition cap of the simulated sets.
pub const SIMULATION_MAX_REPS: usize = 30;

const DEFAULT_T_F: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    /// `F0 · (1 - v / v_max)`.
    Linear,
    /// `F0` everywhere.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub kind: TemplateKind,
    #[serde(default = "default_force")]
    pub force_n: f64,
    #[serde(default = "default_grid")]
    pub n_delta: usize,
    #[serde(default = "default_grid")]
    pub n_v: usize,
    #[serde(default = "default_rom")]
    pub delta_max_m: f64,
    #[serde(default = "default_v_max")]
    pub v_max_mps: f64,
}

fn default_force() -> f64 {
    2000.0
}
fn default_grid() -> usize {
    liftcap_core::capability::DEFAULT_GRID_SIZE
}
fn default_rom() -> f64 {
    0.5
}
fn default_v_max() -> f64 {
    1.5
}

impl Template {
    fn build(&self) -> Result<CapabilityProfile> {
        let grid = GridSpec::new(self.n_delta, self.n_v, self.delta_max_m, self.v_max_mps)?;
        match self.kind {
            TemplateKind::Linear => CapabilityProfile::linear(grid, self.force_n),
            TemplateKind::Constant => CapabilityProfile::constant(grid, self.force_n),
        }
    }
}

/// Width and height of the bumps a click produces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Influence {
    /// Bump standard deviations as a fraction of each axis range.
    pub breadth: f64,
    /// Bump peak, N.
    pub magnitude_n: f64,
}

impl Default for Influence {
    fn default() -> Self {
        Self {
            breadth: 0.1,
            magnitude_n: 100.0,
        }
    }
}

impl Influence {
    fn validate(&self) -> Result<()> {
        if !(self.breadth.is_finite() && self.breadth > 0.0 && self.breadth <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "influence breadth must lie in (0, 1], got {}",
                self.breadth
            )));
        }
        if !(self.magnitude_n.is_finite() && self.magnitude_n >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "influence magnitude must be non-negative, got {}",
                self.magnitude_n
            )));
        }
        Ok(())
    }
}

/// Body of `POST /sessions`. Exactly one of `template` and `profile` is
/// given; a state snapshot is accepted as is.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CreateRequest {
    #[serde(default)]
    pub template: Option<Template>,
    #[serde(default)]
    pub profile: Option<ProfileFile>,
    #[serde(default)]
    pub setup: Option<ExerciseSetup>,
    #[serde(default)]
    pub t_f_s: Option<f64>,
    #[serde(default)]
    pub influence: Option<Influence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpRequest {
    pub delta_m: f64,
    pub v_mps: f64,
    /// `+1` raises the profile, `-1` lowers it.
    pub sign: i32,
}

/// Body of `PATCH /sessions/{id}/setup`; absent fields are left unchanged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SetupPatch {
    pub m: Option<f64>,
    pub m0: Option<f64>,
    pub c: Option<f64>,
    pub delta_max: Option<f64>,
    pub t_f_s: Option<f64>,
    pub influence_breadth: Option<f64>,
    pub influence_magnitude_n: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepSummary {
    pub completed: bool,
    pub duration_s: f64,
    /// Elevation where a failed repetition stalled, m.
    pub failed_at_m: Option<f64>,
    pub path: Vec<PathPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub reps_completed: usize,
    pub reps: Vec<RepSummary>,
    /// `(t_s, elevation_m)` over the whole set.
    pub elevation: Vec<(f64, f64)>,
    pub final_fatigue: f64,
}

impl From<&SetResult> for RunSummary {
    fn from(set: &SetResult) -> Self {
        Self {
            reps_completed: set.completed(),
            reps: set
                .reps
                .iter()
                .map(|r| RepSummary {
                    completed: r.outcome.completed(),
                    duration_s: r.duration(),
                    failed_at_m: match r.outcome {
                        RepOutcome::Failed { delta } => Some(delta),
                        RepOutcome::Completed => None,
                    },
                    path: r.path.points.clone(),
                })
                .collect(),
            elevation: set.elevation_trace(),
            final_fatigue: set.final_state.l(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    /// Revision of the session state this was computed from.
    pub id: u64,
    pub max_exertion: RunSummary,
    pub minimal_fatigue: RunSummary,
    /// Estimated one-repetition maximum, kg; absent when no load is liftable.
    pub one_rm_kg: Option<f64>,
    /// Whether a single maximal repetition with the current load completes.
    pub feasible: bool,
}

fn simulate(profile: &CapabilityProfile, setup: &ExerciseSetup, t_f: f64, id: u64) -> Result<Simulation> {
    let cfg = SimulationConfig::default();
    let max = simulate_set(profile, setup, t_f, Policy::MaxExertion, SIMULATION_MAX_REPS, &cfg)?;
    let min = simulate_set(profile, setup, t_f, Policy::MinimalFatigue, SIMULATION_MAX_REPS, &cfg)?;
    let one_rm_kg = match estimate_1rm(profile, setup, t_f, default_1rm_tolerance(), &cfg) {
        Ok(m) => Some(m),
        Err(Error::Infeasible(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Simulation {
        id,
        max_exertion: (&max).into(),
        minimal_fatigue: (&min).into(),
        one_rm_kg,
        feasible: single_rep_completes(profile, setup, t_f, setup.m, cfg.dt)?,
    })
}

/// Full session state as returned by the API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: String,
    pub revision: u64,
    pub profile: ProfileFile,
    pub setup: ExerciseSetup,
    pub t_f_s: f64,
    pub influence: Influence,
    pub undo_depth: usize,
    pub simulation: Simulation,
}

/// Persisted form of a session.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct StoredSession {
    pub snapshot: Snapshot,
    /// Earlier profile samples, oldest first; all share the current grid.
    pub history: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub revision: u64,
    pub profile: CapabilityProfile,
    pub mask: KnownMask,
    pub setup: ExerciseSetup,
    pub t_f: f64,
    pub influence: Influence,
    pub history: Vec<CapabilityProfile>,
    pub simulation: Simulation,
}

fn check_t_f(t_f: f64) -> Result<()> {
    if t_f > 0.0 && !t_f.is_nan() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("T_F must be positive, got {t_f}")))
    }
}

fn check_fit(profile: &CapabilityProfile, setup: &ExerciseSetup) -> Result<()> {
    setup.validate()?;
    if setup.delta_max > profile.delta_max() {
        return Err(Error::InvalidInput(format!(
            "range of motion {} m exceeds the profile's {} m",
            setup.delta_max,
            profile.delta_max()
        )));
    }
    Ok(())
}

impl Session {
    pub fn create(id: String, req: CreateRequest) -> Result<Self> {
        let (profile, mask) = match (&req.template, req.profile) {
            (Some(t), None) => {
                let p = t.build()?;
                let mask = KnownMask::empty(p.grid());
                (p, mask)
            }
            (None, Some(file)) => file.into_parts()?,
            _ => {
                return Err(Error::InvalidInput(
                    "give exactly one of \"template\" and \"profile\"".into(),
                ))
            }
        };
        let setup = match req.setup {
            Some(s) => s,
            None => ExerciseSetup::free_weight(100.0, profile.delta_max())?,
        };
        check_fit(&profile, &setup)?;
        let t_f = req.t_f_s.unwrap_or(DEFAULT_T_F);
        check_t_f(t_f)?;
        let influence = req.influence.unwrap_or_default();
        influence.validate()?;
        let simulation = simulate(&profile, &setup, t_f, 0)?;
        Ok(Self {
            id,
            revision: 0,
            profile,
            mask,
            setup,
            t_f,
            influence,
            history: Vec::new(),
            simulation,
        })
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            id: self.id.clone(),
            revision: self.revision,
            profile: ProfileFile::new(&self.profile, &self.mask).expect("mask matches its own profile"),
            setup: self.setup,
            t_f_s: self.t_f,
            influence: self.influence,
            undo_depth: self.history.len(),
            simulation: self.simulation.clone(),
        }
    }

    pub fn apply_bump(&mut self, req: &BumpRequest) -> Result<(), ApiError> {
        if req.sign != 1 && req.sign != -1 {
            return Err(Error::InvalidInput(format!("sign must be +1 or -1, got {}", req.sign)).into());
        }
        let g = *self.profile.grid();
        if !g.contains(req.delta_m, req.v_mps) {
            return Err(Error::InvalidInput(format!(
                "bump centre ({}, {}) is outside the capability plane [0, {}] x [0, {}]",
                req.delta_m, req.v_mps, g.delta_max, g.v_max
            ))
            .into());
        }
        let nu = f64::from(req.sign) * self.influence.magnitude_n;
        let b = self.influence.breadth;
        let next = apply_gaussian_bump(&self.profile, req.delta_m, req.v_mps, nu, b * g.delta_max, b * g.v_max)?;
        let sim = simulate(&next, &self.setup, self.t_f, self.revision + 1)?;
        let prev = std::mem::replace(&mut self.profile, next);
        self.history.push(prev);
        if self.history.len() > MAX_UNDO {
            self.history.remove(0);
        }
        self.revision += 1;
        self.simulation = sim;
        Ok(())
    }

    pub fn update_setup(&mut self, patch: &SetupPatch) -> Result<(), ApiError> {
        let setup = ExerciseSetup {
            m: patch.m.unwrap_or(self.setup.m),
            m0: patch.m0.unwrap_or(self.setup.m0),
            c: patch.c.unwrap_or(self.setup.c),
            delta_max: patch.delta_max.unwrap_or(self.setup.delta_max),
            g: self.setup.g,
        };
        check_fit(&self.profile, &setup)?;
        let t_f = patch.t_f_s.unwrap_or(self.t_f);
        check_t_f(t_f)?;
        let influence = Influence {
            breadth: patch.influence_breadth.unwrap_or(self.influence.breadth),
            magnitude_n: patch.influence_magnitude_n.unwrap_or(self.influence.magnitude_n),
        };
        influence.validate()?;
        let sim = simulate(&self.profile, &setup, t_f, self.revision + 1)?;
        self.setup = setup;
        self.t_f = t_f;
        self.influence = influence;
        self.revision += 1;
        self.simulation = sim;
        Ok(())
    }

    pub fn undo(&mut self) -> Result<(), ApiError> {
        let prev = self.history.last().ok_or(ApiError::NothingToUndo)?.clone();
        let sim = simulate(&prev, &self.setup, self.t_f, self.revision + 1)?;
        self.history.pop();
        self.profile = prev;
        self.revision += 1;
        self.simulation = sim;
        Ok(())
    }

    pub(crate) fn to_stored(&self) -> StoredSession {
        StoredSession {
            snapshot: self.snapshot(),
            history: self.history.iter().map(|p| p.samples().to_vec()).collect(),
        }
    }

    pub(crate) fn from_stored(stored: StoredSession) -> Result<Self> {
        let snap = stored.snapshot;
        let (profile, mask) = snap.profile.into_parts()?;
        let history = stored
            .history
            .into_iter()
            .map(|s| CapabilityProfile::new(*profile.grid(), s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            id: snap.id,
            revision: snap.revision,
            profile,
            mask,
            setup: snap.setup,
            t_f: snap.t_f_s,
            influence: snap.influence,
            history,
            simulation: snap.simulation,
        })
    }
}
