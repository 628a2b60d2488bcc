//! Unit conversions. Everything internal is SI.

/// Standard gravity, m/s².
pub const STANDARD_GRAVITY: f64 = 9.80665;

/// Exact definition of the avoirdupois pound.
pub const KG_PER_LB: f64 = 0.45359237;

pub fn lb_to_kg(lb: f64) -> f64 {
    lb * KG_PER_LB
}

pub fn kg_to_lb(kg: f64) -> f64 {
    kg / KG_PER_LB
}
