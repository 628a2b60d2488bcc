//! Browser demo: edit a capability profile by clicking on it and watch how
//! the simulated set and 1RM respond.

use liftcap_core::capability::{apply_gaussian_bump, CapabilityProfile, GridSpec};
use liftcap_core::dynamics::ExerciseSetup;
use liftcap_core::simulation::{
    brzycki_1rm, default_1rm_tolerance, estimate_1rm, simulate_set, Policy, SetResult, SimulationConfig,
};
use liftcap_core::Error;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_REPS: usize = 30;
const MAX_UNDO: usize = 50;
const BUMP_BREADTH: f64 = 0.1;
const BUMP_MAGNITUDE: f64 = 150.0;

fn js_err(e: Error) -> String {
    e.to_string()
}

#[derive(Serialize)]
struct SetView {
    reps: usize,
    /// `(δ, v)` samples of the final, failed or capped, repetition.
    last_path: Vec<[f64; 2]>,
    final_fatigue: f64,
}

impl From<&SetResult> for SetView {
    fn from(s: &SetResult) -> Self {
        Self {
            reps: s.completed(),
            last_path: s
                .reps
                .last()
                .map(|r| r.path.points.iter().map(|p| [p.delta, p.v]).collect())
                .unwrap_or_default(),
            final_fatigue: s.final_state.l(),
        }
    }
}

#[derive(Serialize)]
struct SimulationView {
    max_exertion: SetView,
    minimal_fatigue: SetView,
    one_rm_kg: Option<f64>,
}

#[derive(Serialize)]
struct ProfileView<'a> {
    n_delta: usize,
    n_v: usize,
    delta_max: f64,
    v_max: f64,
    samples: &'a [f64],
}

#[wasm_bindgen]
pub struct Demo {
    profile: CapabilityProfile,
    history: Vec<CapabilityProfile>,
    mass: f64,
    t_f: f64,
}

#[wasm_bindgen]
impl Demo {
    /// Linear template: `force` at rest falling to half at `v_max`.
    #[wasm_bindgen(constructor)]
    pub fn new(force: f64, delta_max: f64, v_max: f64, mass: f64, t_f: f64) -> Result<Demo, String> {
        let grid = GridSpec::new(48, 48, delta_max, v_max).map_err(js_err)?;
        let profile = CapabilityProfile::linear(grid, force).map_err(js_err)?;
        ExerciseSetup::free_weight(mass, delta_max).map_err(js_err)?;
        if !(t_f > 0.0) {
            return Err("fatigue time constant must be positive".into());
        }
        Ok(Demo {
            profile,
            history: Vec::new(),
            mass,
            t_f,
        })
    }

    /// Grid and samples as JSON, row-major by position.
    pub fn profile_json(&self) -> String {
        let g = self.profile.grid();
        serde_json::to_string(&ProfileView {
            n_delta: g.n_delta,
            n_v: g.n_v,
            delta_max: g.delta_max,
            v_max: g.v_max,
            samples: self.profile.samples(),
        })
        .expect("plain data serializes")
    }

    /// Raises (`sign > 0`) or lowers the capability around `(delta, v)`.
    pub fn bump(&mut self, delta: f64, v: f64, sign: f64) -> Result<(), String> {
        let g = *self.profile.grid();
        if !g.contains(delta, v) {
            return Err(format!("({delta}, {v}) is outside the profile"));
        }
        let nu = sign.signum() * BUMP_MAGNITUDE;
        let next = apply_gaussian_bump(
            &self.profile,
            delta,
            v,
            nu,
            BUMP_BREADTH * g.delta_max,
            BUMP_BREADTH * g.v_max,
        )
        .map_err(js_err)?;
        self.history.push(std::mem::replace(&mut self.profile, next));
        if self.history.len() > MAX_UNDO {
            self.history.remove(0);
        }
        Ok(())
    }

    /// Restores the profile before the last bump; false if there is none.
    pub fn undo(&mut self) -> bool {
        match self.history.pop() {
            Some(p) => {
                self.profile = p;
                true
            }
            None => false,
        }
    }

    pub fn undo_depth(&self) -> usize {
        self.history.len()
    }

    pub fn set_mass(&mut self, mass: f64) -> Result<(), String> {
        ExerciseSetup::free_weight(mass, self.profile.delta_max()).map_err(js_err)?;
        self.mass = mass;
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Sets under both policies plus the 1RM, as JSON.
    pub fn simulate(&self) -> Result<String, String> {
        let setup = ExerciseSetup::free_weight(self.mass, self.profile.delta_max()).map_err(js_err)?;
        let cfg = SimulationConfig::default();
        let run = |policy| simulate_set(&self.profile, &setup, self.t_f, policy, MAX_REPS, &cfg).map_err(js_err);
        let max = run(Policy::MaxExertion)?;
        let min = run(Policy::MinimalFatigue)?;
        let one_rm_kg = match estimate_1rm(&self.profile, &setup, self.t_f, default_1rm_tolerance(), &cfg) {
            Ok(m) => Some(m),
            Err(Error::Infeasible(_)) => None,
            Err(e) => return Err(js_err(e)),
        };
        let view = SimulationView {
            max_exertion: (&max).into(),
            minimal_fatigue: (&min).into(),
            one_rm_kg,
        };
        Ok(serde_json::to_string(&view).expect("plain data serializes"))
    }
}

/// 1RM from `reps` repetitions at `weight`, in the unit of `weight`.
#[wasm_bindgen]
pub fn brzycki(weight: f64, reps: u32) -> Result<f64, String> {
    brzycki_1rm(weight, reps).map_err(js_err)
}
