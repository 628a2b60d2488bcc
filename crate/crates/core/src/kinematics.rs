//! From pixel displacement to metric elevation, velocity and acceleration.

use serde::{Deserialize, Serialize};

use crate::linalg::BandedMatrix;
use crate::{Error, Result};

/// Default smoothing-spline fit weight for 25 Hz series.
pub const DEFAULT_OMEGA: f64 = 0.99;

/// Vertical load position sampled every `dt` seconds, metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElevationSeries {
    dt: f64,
    values: Vec<f64>,
}

impl ElevationSeries {
    pub fn new(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("sample interval must be positive, got {dt}")));
        }
        if values.len() < 3 {
            return Err(Error::invalid(format!(
                "series needs at least 3 samples, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("series contains non-finite values"));
        }
        Ok(Self { dt, values })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dt
    }

    /// Samples `start..=end` re-based to start at time zero.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end >= self.values.len() {
            return Err(Error::invalid(format!(
                "bad slice {start}..={end} of {} samples",
                self.values.len()
            )));
        }
        Self::new(self.dt, self.values[start..=end].to_vec())
    }
}

/// Metres per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub metres_per_pixel: f64,
}

impl Calibration {
    pub fn new(metres_per_pixel: f64) -> Result<Self> {
        if !(metres_per_pixel.is_finite() && metres_per_pixel > 0.0) {
            return Err(Error::invalid("calibration constant must be positive"));
        }
        Ok(Self { metres_per_pixel })
    }

    pub fn apply(&self, pixels: f64) -> f64 {
        self.metres_per_pixel * pixels
    }

    /// Elevation series from per-frame vertical image displacement. Image rows
    /// grow downwards, so elevation is the negated displacement.
    pub fn elevation_from_rows(&self, dt: f64, dy_pixels: &[f64]) -> Result<ElevationSeries> {
        ElevationSeries::new(dt, dy_pixels.iter().map(|d| -self.apply(*d)).collect())
    }
}

/// Calibration from a reference object of known length.
pub fn calibrate(pixel_length: f64, physical_length: f64) -> Result<Calibration> {
    if !(pixel_length.is_finite() && pixel_length > 0.0) {
        return Err(Error::invalid("reference length in pixels must be positive"));
    }
    if !(physical_length.is_finite() && physical_length > 0.0) {
        return Err(Error::invalid("reference length in metres must be positive"));
    }
    Calibration::new(physical_length / pixel_length)
}

/// Three-point differences with `out[0] = first` and a backward difference
/// at the last sample.
fn central_differences(x: &[f64], dt: f64, first: f64) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 3 {
        return Err(Error::invalid(format!("need at least 3 samples, got {n}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("sample interval must be positive"));
    }
    let mut out = Vec::with_capacity(n);
    out.push(first);
    for k in 1..n - 1 {
        out.push((x[k + 1] - x[k - 1]) / (2.0 * dt));
    }
    out.push((x[n - 1] - x[n - 2]) / dt);
    Ok(out)
}

/// Velocity by central differences; `v[0] = 0` is the rest initial condition.
pub fn fd_velocity(series: &ElevationSeries) -> Result<Vec<f64>> {
    central_differences(&series.values, series.dt, 0.0)
}

/// Acceleration by central differences of a velocity series; the first
/// sample uses the forward difference `(v1 - v0) / dt`.
pub fn fd_acceleration(velocity: &[f64], dt: f64) -> Result<Vec<f64>> {
    if velocity.len() < 3 {
        return Err(Error::invalid("need at least 3 velocity samples"));
    }
    let first = (velocity[1] - velocity[0]) / dt;
    central_differences(velocity, dt, first)
}

/// Piecewise cubic with knots at the samples. On interval `k`,
/// `s(t) = c0 + c1 τ + c2 τ² + c3 τ³`, `τ = t - t_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSpline {
    knots: Vec<f64>,
    coeffs: Vec<[f64; 4]>,
    omega: f64,
}

/// Position, velocity and acceleration at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineState {
    pub position: f64,
    pub velocity: f64,
    pub acceleration: f64,
}

impl SmoothingSpline {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn coefficients(&self) -> &[[f64; 4]] {
        &self.coeffs
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn eval(&self, t: f64) -> Result<SplineState> {
        let t0 = self.knots[0];
        let tn = *self.knots.last().unwrap();
        if !(t >= t0 && t <= tn) {
            return Err(Error::invalid(format!("t = {t} outside [{t0}, {tn}]")));
        }
        let k = self
            .knots
            .partition_point(|&x| x <= t)
            .saturating_sub(1)
            .min(self.coeffs.len() - 1);
        let c = &self.coeffs[k];
        let tau = t - self.knots[k];
        Ok(SplineState {
            position: c[0] + tau * (c[1] + tau * (c[2] + tau * c[3])),
            velocity: c[1] + tau * (2.0 * c[2] + 3.0 * tau * c[3]),
            acceleration: 2.0 * c[2] + 6.0 * tau * c[3],
        })
    }

    /// `∫ s''(t)² dt` over the whole knot range.
    pub fn roughness(&self) -> f64 {
        self.coeffs
            .iter()
            .zip(self.knots.windows(2))
            .map(|(c, w)| {
                let h = w[1] - w[0];
                // s'' = 2 c2 + 6 c3 τ
                let a = 2.0 * c[2];
                let b = 6.0 * c[3];
                a * a * h + a * b * h * h + b * b * h * h * h / 3.0
            })
            .sum()
    }

    /// `Σ (y_k - s(t_k))²` for the data the spline was fitted to.
    pub fn fit_residual(&self, series: &ElevationSeries) -> f64 {
        series
            .values
            .iter()
            .enumerate()
            .map(|(k, y)| {
                let s = self.eval(self.knots[k]).map(|s| s.position).unwrap_or(f64::NAN);
                (y - s) * (y - s)
            })
            .sum()
    }
}

/// Position, velocity and acceleration of the spline at `t`.
pub fn spline_eval(spline: &SmoothingSpline, t: f64) -> Result<SplineState> {
    spline.eval(t)
}

/// Fits the cubic spline minimising
/// `ω Σ (y_k - s(t_k))² + (1 - ω) ∫ s''² dt` subject to `s'(t_0) = 0`.
///
/// The minimiser over all twice-differentiable functions is a cubic spline
/// with knots at the samples, `s''(t_n) = 0` at the free right end and
/// `s''(t_0)` left free by the velocity constraint. It is parametrised by
/// knot values `f_k` and second derivatives `M_k`; C¹ continuity and the
/// velocity constraint enter through Lagrange multipliers, giving a banded
/// KKT system.
pub fn fit_spline(series: &ElevationSeries, omega: f64) -> Result<SmoothingSpline> {
    let n = series.len();
    if n < 4 {
        return Err(Error::invalid(format!("spline fit needs at least 4 samples, got {n}")));
    }
    if !(omega > 0.0 && omega < 1.0) {
        return Err(Error::invalid(format!("ω must lie in (0, 1), got {omega}")));
    }
    let h = series.dt;
    let y = &series.values;
    let last = n - 1;

    // Unknown layout per knot k: [f_k, M_k, λ_k]; λ_0 is the velocity
    // constraint multiplier, λ_k (1 <= k < last) the C¹ condition at knot k.
    // The final knot carries only f_last (M_last = 0).
    let f = |k: usize| 3 * k;
    let m = |k: usize| 3 * k + 1;
    let l = |k: usize| 3 * k + 2;
    let dim = 3 * last + 1;
    let rough = 1.0 - omega;

    let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(16 * n);
    let mut rhs = vec![0.0; dim];
    let sym = |trip: &mut Vec<(usize, usize, f64)>, i: usize, j: usize, v: f64| {
        trip.push((i, j, v));
        if i != j {
            trip.push((j, i, v));
        }
    };

    for k in 0..=last {
        // ∂/∂f_k of the data term
        trip.push((f(k), f(k), omega));
        rhs[f(k)] = omega * y[k];
    }
    // Roughness: Σ h/3 (M_k² + M_k M_{k+1} + M_{k+1}²) with M_last = 0.
    // Each interval adds h/3 to the diagonal of both end moments.
    for k in 0..last {
        trip.push((m(k), m(k), rough * h / 3.0));
        if k + 1 < last {
            trip.push((m(k + 1), m(k + 1), rough * h / 3.0));
            sym(&mut trip, m(k), m(k + 1), rough * h / 6.0);
        }
    }

    // Velocity constraint: (f1 - f0)/h - h/3 M0 - h/6 M1 = 0.
    {
        let row = l(0);
        sym(&mut trip, row, f(0), -1.0 / h);
        sym(&mut trip, row, f(1), 1.0 / h);
        sym(&mut trip, row, m(0), -h / 3.0);
        if 1 < last {
            sym(&mut trip, row, m(1), -h / 6.0);
        }
    }
    // C¹ continuity at interior knots:
    // (f_{k+1} - 2 f_k + f_{k-1})/h - h/6 M_{k-1} - 2h/3 M_k - h/6 M_{k+1} = 0.
    for k in 1..last {
        let row = l(k);
        sym(&mut trip, row, f(k - 1), 1.0 / h);
        sym(&mut trip, row, f(k), -2.0 / h);
        sym(&mut trip, row, f(k + 1), 1.0 / h);
        sym(&mut trip, row, m(k - 1), -h / 6.0);
        sym(&mut trip, row, m(k), -2.0 * h / 3.0);
        if k + 1 < last {
            sym(&mut trip, row, m(k + 1), -h / 6.0);
        }
    }

    let x = BandedMatrix::from_triplets(dim, &trip)
        .solve(&rhs)
        .map_err(|e| Error::Numerical(format!("smoothing spline system is ill-conditioned: {e}")))?;

    let fv: Vec<f64> = (0..=last).map(|k| x[f(k)]).collect();
    let mv: Vec<f64> = (0..=last).map(|k| if k < last { x[m(k)] } else { 0.0 }).collect();
    let knots: Vec<f64> = (0..=last).map(|k| k as f64 * h).collect();
    let mut coeffs: Vec<[f64; 4]> = (0..last)
        .map(|k| {
            [
                fv[k],
                (fv[k + 1] - fv[k]) / h - h * (2.0 * mv[k] + mv[k + 1]) / 6.0,
                mv[k] / 2.0,
                (mv[k + 1] - mv[k]) / (6.0 * h),
            ]
        })
        .collect();
    // The constraint holds to rounding; pin it exactly in the representation.
    let slope_scale = y.iter().fold(0.0_f64, |a, v| a.max(v.abs())) / h + 1.0;
    if coeffs[0][1].abs() > 1e-8 * slope_scale {
        return Err(Error::Numerical(format!(
            "initial velocity constraint violated by {:.3e}",
            coeffs[0][1]
        )));
    }
    coeffs[0][1] = 0.0;
    Ok(SmoothingSpline { knots, coeffs, omega })
}

/// Spline velocity and acceleration at every sample.
pub fn spline_derivatives(spline: &SmoothingSpline) -> (Vec<f64>, Vec<f64>) {
    spline
        .knots
        .iter()
        .map(|&t| {
            let s = spline.eval(t).expect("knot inside range");
            (s.velocity, s.acceleration)
        })
        .unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepetitionSegment {
    pub start_index: usize,
    pub end_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationParams {
    /// Minimum net rise of a concentric effort, metres.
    pub min_displacement: f64,
    /// Rising runs separated by a shorter hold are merged, seconds.
    pub min_pause: f64,
    /// Velocity above which the load counts as rising, m/s.
    pub velocity_deadband: f64,
    pub omega: f64,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            min_displacement: 0.1,
            min_pause: 0.2,
            velocity_deadband: 0.02,
            omega: DEFAULT_OMEGA,
        }
    }
}

/// Concentric (rising) portions of a lifting bout, in time order.
///
/// Velocity comes from a smoothing spline of the whole series. Maximal runs of
/// velocity above the deadband are merged across holds shorter than
/// `min_pause` during which the load does not descend, then kept when their
/// net rise reaches `min_displacement`. Each segment is widened by one sample
/// on both sides so it starts and ends at rest.
pub fn segment_concentric(series: &ElevationSeries, params: &SegmentationParams) -> Result<Vec<RepetitionSegment>> {
    if !(params.min_displacement > 0.0 && params.min_pause >= 0.0 && params.velocity_deadband > 0.0) {
        return Err(Error::invalid("segmentation thresholds must be positive"));
    }
    let velocity: Vec<f64> = if series.len() >= 4 {
        spline_derivatives(&fit_spline(series, params.omega)?).0
    } else {
        fd_velocity(series)?
    };
    let n = series.len();
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut k = 0;
    while k < n {
        if velocity[k] > params.velocity_deadband {
            let s = k;
            while k + 1 < n && velocity[k + 1] > params.velocity_deadband {
                k += 1;
            }
            runs.push((s, k));
        }
        k += 1;
    }
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for run in runs {
        if let Some(prev) = merged.last_mut() {
            let gap = (run.0 - prev.1) as f64 * series.dt;
            let descended = velocity[prev.1..=run.0].iter().any(|v| *v < -params.velocity_deadband);
            if gap < params.min_pause && !descended {
                prev.1 = run.1;
                continue;
            }
        }
        merged.push(run);
    }
    let y = &series.values;
    let mut out: Vec<RepetitionSegment> = Vec::new();
    for (s, e) in merged {
        let start = s.saturating_sub(1).max(out.last().map_or(0, |p| p.end_index));
        let end = (e + 1).min(n - 1);
        if y[end] - y[start] >= params.min_displacement && start < end {
            out.push(RepetitionSegment {
                start_index: start,
                end_index: end,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(dt: f64, n: usize, f: impl Fn(f64) -> f64) -> ElevationSeries {
        ElevationSeries::new(dt, (0..n).map(|k| f(k as f64 * dt)).collect()).unwrap()
    }

    #[test]
    fn calibration_ratio() {
        let c = calibrate(220.0, 2.2).unwrap();
        assert!((c.metres_per_pixel - 0.01).abs() < 1e-15);
        assert_eq!(calibrate(1.0, 1.0).unwrap().metres_per_pixel, 1.0);
        assert!((c.apply(150.0) - 1.5).abs() < 1e-12);
        assert!(calibrate(0.0, 1.0).is_err());
        assert!(calibrate(10.0, -1.0).is_err());
    }

    #[test]
    fn image_rows_map_to_rising_elevation() {
        let c = Calibration::new(0.01).unwrap();
        let s = c.elevation_from_rows(0.04, &[0.0, -10.0, -20.0]).unwrap();
        assert_eq!(s.values(), &[0.0, 0.1, 0.2]);
    }

    #[test]
    fn series_validation() {
        assert!(ElevationSeries::new(0.0, vec![0.0; 4]).is_err());
        assert!(ElevationSeries::new(0.1, vec![0.0; 2]).is_err());
        assert!(ElevationSeries::new(0.1, vec![0.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn fd_on_constant_and_linear() {
        let c = series(0.1, 10, |_| 3.0);
        assert!(fd_velocity(&c).unwrap().iter().all(|v| *v == 0.0));
        let lin = series(0.1, 10, |t| 2.0 * t);
        let v = fd_velocity(&lin).unwrap();
        assert_eq!(v[0], 0.0);
        for vk in &v[1..] {
            assert!((vk - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn central_difference_is_exact_on_quadratics() {
        let dt = 0.1;
        let s = series(dt, 12, |t| t * t);
        let v = fd_velocity(&s).unwrap();
        for k in 1..11 {
            assert!((v[k] - 2.0 * k as f64 * dt).abs() < 1e-12, "{k}: {}", v[k]);
        }
        let a = fd_acceleration(&v, dt).unwrap();
        assert!((a[0] - 2.0).abs() < 1e-9);
        for k in 1..10 {
            assert!((a[k] - 2.0).abs() < 1e-9, "{k}: {}", a[k]);
        }
    }

    #[test]
    fn fd_acceleration_on_linear_velocity() {
        let dt = 0.05;
        let v: Vec<f64> = (0..8).map(|k| 3.0 * k as f64 * dt).collect();
        for a in fd_acceleration(&v, dt).unwrap() {
            assert!((a - 3.0).abs() < 1e-12);
        }
        assert!(fd_acceleration(&[0.0, 1.0], dt).is_err());
        assert!(fd_velocity(&series(0.1, 3, |t| t)).is_ok());
    }

    #[test]
    fn free_fall_recovers_gravity_at_interior_points() {
        let g = 9.80665;
        let dt = 0.01;
        let s = series(dt, 101, |t| 0.5 * g * t * t);
        let v = fd_velocity(&s).unwrap();
        let a = fd_acceleration(&v, dt).unwrap();
        let max_delta = s.values().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        // Rounding of δ is amplified by 1/Δt² through two differences.
        let tol = 4.0 * f64::EPSILON * max_delta / (dt * dt);
        for k in 2..99 {
            assert!((a[k] - g).abs() <= tol, "{k}: {} (tol {tol:e})", a[k]);
        }
    }

    #[test]
    fn spline_of_constant_is_constant() {
        let s = series(0.04, 20, |_| 0.7);
        let sp = fit_spline(&s, 0.9).unwrap();
        assert!(sp.roughness() < 1e-20);
        assert!(sp.fit_residual(&s) < 1e-20);
        for k in 0..40 {
            let st = sp.eval(k as f64 * 0.019).unwrap();
            assert!((st.position - 0.7).abs() < 1e-12);
            assert!(st.velocity.abs() < 1e-10 && st.acceleration.abs() < 1e-8);
        }
    }

    #[test]
    fn sloped_data_bends_to_honour_zero_initial_velocity() {
        let s = series(0.04, 30, |t| 0.3 + 1.5 * t);
        let sp = fit_spline(&s, 0.99).unwrap();
        assert_eq!(sp.eval(0.0).unwrap().velocity, 0.0);
        assert!(sp.fit_residual(&s) > 1e-8);
        // far from the constraint the slope is recovered
        assert!((sp.eval(0.8).unwrap().velocity - 1.5).abs() < 0.05);
    }

    #[test]
    fn near_interpolation_limit_reproduces_a_cubic() {
        let s = series(0.05, 25, |t| t * t * t - 0.4 * t * t);
        let sp = fit_spline(&s, 1.0 - 1e-9).unwrap();
        for (k, y) in s.values().iter().enumerate() {
            let p = sp.eval(k as f64 * 0.05).unwrap().position;
            assert!((p - y).abs() < 1e-6, "{k}: {p} vs {y}");
        }
    }

    #[test]
    fn acceleration_matches_second_difference_of_the_spline() {
        let s = series(0.04, 40, |t| (3.0 * t).sin() * t * t + 0.05 * (17.0 * t).cos());
        let sp = fit_spline(&s, 0.95).unwrap();
        let e = 1e-3;
        for k in 0..38 {
            let t = k as f64 * 0.04 + 0.02;
            let fd = (sp.eval(t + e).unwrap().position - 2.0 * sp.eval(t).unwrap().position
                + sp.eval(t - e).unwrap().position)
                / (e * e);
            let a = sp.eval(t).unwrap().acceleration;
            assert!((fd - a).abs() < 1e-6, "t = {t}: {fd} vs {a}");
        }
    }

    #[test]
    fn spline_rejects_out_of_range_and_bad_weights() {
        let s = series(0.1, 10, |t| t * t);
        assert!(fit_spline(&s, 0.0).is_err());
        assert!(fit_spline(&s, 1.0).is_err());
        assert!(fit_spline(&series(0.1, 3, |t| t), 0.5).is_err());
        let sp = fit_spline(&s, 0.5).unwrap();
        assert!(sp.eval(-1e-9).is_err());
        assert!(sp.eval(0.9 + 1e-9).is_err());
        assert!(sp.eval(0.9).is_ok());
    }

    #[test]
    fn vanishing_data_weight_is_a_conditioning_failure() {
        let s = series(0.04, 30, |t| t * t);
        assert!(matches!(fit_spline(&s, 1e-18), Err(Error::Numerical(_))));
    }

    #[test]
    fn knot_values_match_coefficients() {
        let s = series(0.1, 8, |t| t.sin());
        let sp = fit_spline(&s, 0.8).unwrap();
        for (k, c) in sp.coefficients().iter().enumerate() {
            assert_eq!(sp.eval(sp.knots()[k]).unwrap().position, c[0]);
        }
    }

    fn ramp(n_rest: usize, n_rise: usize, rise: f64) -> Vec<f64> {
        let mut v = vec![0.0; n_rest];
        v.extend((1..=n_rise).map(|k| rise * k as f64 / n_rise as f64));
        v.extend(std::iter::repeat_n(rise, n_rest));
        v
    }

    #[test]
    fn single_ramp_is_one_segment() {
        let dt = 0.04;
        let s = ElevationSeries::new(dt, ramp(25, 25, 0.5)).unwrap();
        let segs = segment_concentric(&s, &SegmentationParams::default()).unwrap();
        assert_eq!(segs.len(), 1);
        let seg = segs[0];
        assert!(seg.start_index <= 24 && seg.start_index >= 14, "{seg:?}");
        assert!(seg.end_index >= 49 && seg.end_index <= 60, "{seg:?}");
    }

    #[test]
    fn triangular_wave_gives_three_segments() {
        let dt = 0.04;
        let hold = 25; // 1 s
        let mut v = vec![0.0; hold];
        for _ in 0..3 {
            v.extend((1..=20).map(|k| 0.5 * k as f64 / 20.0));
            v.extend(std::iter::repeat_n(0.5, hold));
            v.extend((1..=20).map(|k| 0.5 - 0.5 * k as f64 / 20.0));
            v.extend(std::iter::repeat_n(0.0, hold));
        }
        let s = ElevationSeries::new(dt, v).unwrap();
        let segs = segment_concentric(&s, &SegmentationParams::default()).unwrap();
        assert_eq!(segs.len(), 3, "{segs:?}");
        for w in segs.windows(2) {
            assert!(w[0].end_index <= w[1].start_index);
        }
    }

    #[test]
    fn pure_descent_has_no_segments() {
        let s = series(0.04, 50, |t| 1.0 - 0.5 * t);
        assert!(segment_concentric(&s, &SegmentationParams::default())
            .unwrap()
            .is_empty());
    }
}
