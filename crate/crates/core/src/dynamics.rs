//! The resistance mechanism: a free load of mass `m`, a countermass `m0`
//! hanging over a pulley, and a linear damper on the load.
//!
//! Load displacement is positive upward and the countermass moves the other
//! way, so both masses share the acceleration magnitude while gravity on the
//! countermass assists the lift.

use serde::{Deserialize, Serialize};

use crate::units::STANDARD_GRAVITY;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExerciseSetup {
    /// Load mass, kg.
    pub m: f64,
    /// Countermass, kg.
    pub m0: f64,
    /// Viscous constant, N·s/m.
    pub c: f64,
    /// Range of motion, m.
    pub delta_max: f64,
    /// Gravitational acceleration, m/s².
    #[serde(default = "default_gravity")]
    pub g: f64,
}

fn default_gravity() -> f64 {
    STANDARD_GRAVITY
}

impl ExerciseSetup {
    pub fn new(m: f64, m0: f64, c: f64, delta_max: f64) -> Result<Self> {
        let s = Self {
            m,
            m0,
            c,
            delta_max,
            g: STANDARD_GRAVITY,
        };
        s.validate()?;
        Ok(s)
    }

    /// Free weight with no counterweight or damper.
    pub fn free_weight(m: f64, delta_max: f64) -> Result<Self> {
        Self::new(m, 0.0, 0.0, delta_max)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.m, self.m0, self.c, self.delta_max, self.g]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::invalid("exercise setup contains non-finite values"));
        }
        if self.m <= 0.0 {
            return Err(Error::invalid(format!("load mass must be positive, got {}", self.m)));
        }
        if self.m0 < 0.0 {
            return Err(Error::invalid(format!(
                "countermass must be non-negative, got {}",
                self.m0
            )));
        }
        if self.c < 0.0 {
            return Err(Error::invalid(format!(
                "viscosity must be non-negative, got {}",
                self.c
            )));
        }
        if self.delta_max <= 0.0 {
            return Err(Error::invalid(format!(
                "range of motion must be positive, got {}",
                self.delta_max
            )));
        }
        if self.g <= 0.0 {
            return Err(Error::invalid("gravity must be positive"));
        }
        Ok(())
    }

    pub fn with_load(&self, m: f64) -> Self {
        Self { m, ..*self }
    }

    /// Force needed to hold the load still.
    pub fn static_force(&self) -> f64 {
        (self.m - self.m0) * self.g
    }
}

/// Force the athlete applies to the load to produce acceleration `a` at velocity `v`.
pub fn effective_force(setup: &ExerciseSetup, v: f64, a: f64) -> f64 {
    (setup.m + setup.m0) * a + (setup.m - setup.m0) * setup.g + setup.c * v
}

/// Load acceleration under applied force `force` at velocity `v`.
pub fn load_acceleration(setup: &ExerciseSetup, force: f64, v: f64) -> f64 {
    (force - (setup.m - setup.m0) * setup.g - setup.c * v) / (setup.m + setup.m0)
}
