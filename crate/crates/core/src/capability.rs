//! The capability profile: maximal force over the (elevation, velocity) plane,
//! stored on a regular grid.

use serde::{Deserialize, Serialize};

use crate::linalg::BandedMatrix;
use crate::{Error, Result};

/// Tie-breaking decrement per velocity step applied after isotonic regression.
pub const MONOTONE_EPSILON: f64 = 1e-6;

pub const DEFAULT_GRID_SIZE: usize = 64;

/// Regular grid over `[0, delta_max] x [0, v_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_delta: usize,
    pub n_v: usize,
    pub delta_max: f64,
    pub v_max: f64,
}

impl GridSpec {
    pub fn new(n_delta: usize, n_v: usize, delta_max: f64, v_max: f64) -> Result<Self> {
        if n_delta < 2 || n_v < 2 {
            return Err(Error::invalid(format!(
                "grid needs at least 2 nodes per axis, got {n_delta}x{n_v}"
            )));
        }
        if !(delta_max.is_finite() && delta_max > 0.0 && v_max.is_finite() && v_max > 0.0) {
            return Err(Error::invalid("grid extents must be positive"));
        }
        Ok(Self {
            n_delta,
            n_v,
            delta_max,
            v_max,
        })
    }

    /// Default-resolution grid whose velocity range is 1.25x the fastest
    /// observed path velocity.
    pub fn for_paths(delta_max: f64, paths: &[CapabilityPath]) -> Result<Self> {
        let fastest = paths
            .iter()
            .flat_map(|p| p.points.iter().map(|q| q.v))
            .fold(0.0_f64, f64::max);
        if fastest <= 0.0 {
            return Err(Error::invalid("paths never move; cannot size the velocity axis"));
        }
        Self::new(DEFAULT_GRID_SIZE, DEFAULT_GRID_SIZE, delta_max, 1.25 * fastest)
    }

    pub fn len(&self) -> usize {
        self.n_delta * self.n_v
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn d_delta(&self) -> f64 {
        self.delta_max / (self.n_delta - 1) as f64
    }

    pub fn d_v(&self) -> f64 {
        self.v_max / (self.n_v - 1) as f64
    }

    pub fn delta_at(&self, i: usize) -> f64 {
        if i == self.n_delta - 1 {
            self.delta_max
        } else {
            i as f64 * self.d_delta()
        }
    }

    pub fn v_at(&self, j: usize) -> f64 {
        if j == self.n_v - 1 {
            self.v_max
        } else {
            j as f64 * self.d_v()
        }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_v + j
    }

    pub fn contains(&self, delta: f64, v: f64) -> bool {
        (0.0..=self.delta_max).contains(&delta) && (0.0..=self.v_max).contains(&v)
    }

    /// Grid node closest to `(delta, v)`, or `None` when the point lies more
    /// than half a cell outside the grid.
    pub fn nearest_node(&self, delta: f64, v: f64) -> Option<(usize, usize)> {
        let fi = (delta / self.d_delta()).round();
        let fj = (v / self.d_v()).round();
        if !(fi >= 0.0 && fj >= 0.0 && fi < self.n_delta as f64 && fj < self.n_v as f64) {
            return None;
        }
        Some((fi as usize, fj as usize))
    }
}

/// Maximal force `F̂(δ, v)` in newtons, row-major in δ.
#[derive(Debug, Clone, PartialEq)]
pub struct CapabilityProfile {
    grid: GridSpec,
    samples: Vec<f64>,
}

impl CapabilityProfile {
    pub fn new(grid: GridSpec, samples: Vec<f64>) -> Result<Self> {
        let grid = GridSpec::new(grid.n_delta, grid.n_v, grid.delta_max, grid.v_max)?;
        if samples.len() != grid.len() {
            return Err(Error::invalid(format!(
                "expected {} samples for a {}x{} grid, got {}",
                grid.len(),
                grid.n_delta,
                grid.n_v,
                samples.len()
            )));
        }
        if let Some(k) = samples.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid(format!(
                "sample {k} = {} is negative or not finite",
                samples[k]
            )));
        }
        Ok(Self { grid, samples })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut samples = Vec::with_capacity(grid.len());
        for i in 0..grid.n_delta {
            for j in 0..grid.n_v {
                samples.push(f(grid.delta_at(i), grid.v_at(j)));
            }
        }
        Self::new(grid, samples)
    }

    /// `F̂ ≡ force`.
    pub fn constant(grid: GridSpec, force: f64) -> Result<Self> {
        Self::from_fn(grid, |_, _| force)
    }

    /// `F̂ = f0 (1 - v / v_max)`.
    pub fn linear(grid: GridSpec, f0: f64) -> Result<Self> {
        let v_max = grid.v_max;
        Self::from_fn(grid, |_, v| f0 * (1.0 - v / v_max))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.samples[self.grid.index(i, j)]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.grid.n_v;
        &self.samples[i * n..(i + 1) * n]
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.grid, self.samples.iter().map(|x| x * s).collect())
    }

    pub fn delta_max(&self) -> f64 {
        self.grid.delta_max
    }

    pub fn v_max(&self) -> f64 {
        self.grid.v_max
    }

    pub fn min_sample(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_sample(&self) -> f64 {
        self.samples.iter().copied().fold(0.0, f64::max)
    }

    /// Bilinear interpolation; rejects points outside the plane.
    pub fn sample(&self, delta: f64, v: f64) -> Result<f64> {
        if !self.grid.contains(delta, v) {
            return Err(Error::invalid(format!(
                "({delta}, {v}) outside capability plane [0, {}] x [0, {}]",
                self.grid.delta_max, self.grid.v_max
            )));
        }
        Ok(self.bilinear(delta, v))
    }

    /// Bilinear interpolation with the query clamped into the plane.
    pub fn sample_clamped(&self, delta: f64, v: f64) -> f64 {
        self.bilinear(delta.clamp(0.0, self.grid.delta_max), v.clamp(0.0, self.grid.v_max))
    }

    fn bilinear(&self, delta: f64, v: f64) -> f64 {
        let (i, s) = cell(delta / self.grid.d_delta(), self.grid.n_delta);
        let (j, t) = cell(v / self.grid.d_v(), self.grid.n_v);
        let lo = lerp(self.get(i, j), self.get(i, j + 1), t);
        let hi = lerp(self.get(i + 1, j), self.get(i + 1, j + 1), t);
        lerp(lo, hi, s)
    }
}

fn cell(x: f64, n: usize) -> (usize, f64) {
    // snap rounding noise so queries at nodes return the stored sample
    let r = x.round();
    let x = if (x - r).abs() < 1e-12 { r } else { x };
    let i = (x.floor().max(0.0) as usize).min(n - 2);
    (i, (x - i as f64).clamp(0.0, 1.0))
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 1.0 {
        b
    } else {
        a + t * (b - a)
    }
}

/// Free-function form of [`CapabilityProfile::sample`].
pub fn sample_profile(p: &CapabilityProfile, delta: f64, v: f64) -> Result<f64> {
    p.sample(delta, v)
}

/// Adds `nu · exp(-(δ-δ0)²/2σδ² - (v-v0)²/2σv²)` to every sample, clamping at zero.
pub fn apply_gaussian_bump(
    p: &CapabilityProfile,
    delta0: f64,
    v0: f64,
    nu: f64,
    sigma_delta: f64,
    sigma_v: f64,
) -> Result<CapabilityProfile> {
    if !(sigma_delta > 0.0 && sigma_v > 0.0 && sigma_delta.is_finite() && sigma_v.is_finite()) {
        return Err(Error::invalid("bump widths must be positive"));
    }
    if !(nu.is_finite() && delta0.is_finite() && v0.is_finite()) {
        return Err(Error::invalid("bump parameters must be finite"));
    }
    let g = &p.grid;
    let mut samples = p.samples.clone();
    for i in 0..g.n_delta {
        let dd = (g.delta_at(i) - delta0) / sigma_delta;
        for j in 0..g.n_v {
            let dv = (g.v_at(j) - v0) / sigma_v;
            let k = g.index(i, j);
            samples[k] = (samples[k] + nu * (-0.5 * (dd * dd + dv * dv)).exp()).max(0.0);
        }
    }
    CapabilityProfile::new(p.grid, samples)
}

/// Pairs `(i, j)` where the profile fails to strictly decrease from `v_j` to `v_{j+1}`.
pub fn check_monotonicity(p: &CapabilityProfile) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..p.grid.n_delta {
        for (j, w) in p.row(i).windows(2).enumerate() {
            if w[0] <= w[1] {
                out.push((i, j));
            }
        }
    }
    out
}

/// Least-squares non-increasing fit to `y` (pool adjacent violators).
pub fn antitonic_regression(y: &[f64]) -> Vec<f64> {
    // blocks of (sum, count), merged while a later block's mean exceeds an earlier one
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, n1) = blocks[blocks.len() - 1];
            let (s0, n0) = blocks[blocks.len() - 2];
            if s1 / n1 as f64 > s0 / n0 as f64 {
                blocks.pop();
                *blocks.last_mut().unwrap() = (s0 + s1, n0 + n1);
            } else {
                break;
            }
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, n)| std::iter::repeat_n(s / n as f64, n))
        .collect()
}

/// Makes every velocity row strictly decreasing: isotonic regression, then a
/// `MONOTONE_EPSILON` ramp. A row pushed below zero by the ramp is shifted up
/// so the profile stays non-negative.
pub fn enforce_monotonicity(p: &CapabilityProfile) -> CapabilityProfile {
    let n_v = p.grid.n_v;
    let mut samples = Vec::with_capacity(p.samples.len());
    for i in 0..p.grid.n_delta {
        let mut row = antitonic_regression(p.row(i));
        for (j, x) in row.iter_mut().enumerate() {
            *x -= MONOTONE_EPSILON * j as f64;
        }
        let low = row[n_v - 1];
        if low < 0.0 {
            for x in &mut row {
                *x -= low;
            }
        }
        samples.extend(row);
    }
    CapabilityProfile { grid: p.grid, samples }
}

/// One instant of a repetition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    /// Time since the repetition started, s.
    pub t: f64,
    /// Elevation, m.
    pub delta: f64,
    /// Velocity, m/s.
    pub v: f64,
    /// Force applied to the load, N.
    pub force: f64,
    /// Fatigue factor in effect.
    pub g: f64,
}

/// A repetition's trajectory through the capability plane.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CapabilityPath {
    pub points: Vec<PathPoint>,
}

impl CapabilityPath {
    pub fn new(points: Vec<PathPoint>) -> Result<Self> {
        let p = Self { points };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, q) in self.points.iter().enumerate() {
            if ![q.t, q.delta, q.v, q.force, q.g].iter().all(|x| x.is_finite()) {
                return Err(Error::invalid(format!("path point {k} is not finite")));
            }
        }
        if let Some(k) = self.points.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(Error::invalid(format!(
                "path time is not strictly increasing at point {}",
                k + 1
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn peak_velocity(&self) -> f64 {
        self.points.iter().map(|p| p.v).fold(0.0, f64::max)
    }

    pub fn final_delta(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.delta)
    }
}

/// Nodes whose capability was measured directly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnownMask {
    pub n_delta: usize,
    pub n_v: usize,
    pub known: Vec<bool>,
}

impl KnownMask {
    pub fn empty(grid: &GridSpec) -> Self {
        Self {
            n_delta: grid.n_delta,
            n_v: grid.n_v,
            known: vec![false; grid.len()],
        }
    }

    pub fn full(grid: &GridSpec) -> Self {
        Self {
            n_delta: grid.n_delta,
            n_v: grid.n_v,
            known: vec![true; grid.len()],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.known[i * self.n_v + j]
    }

    pub fn set(&mut self, i: usize, j: usize) {
        self.known[i * self.n_v + j] = true;
    }

    pub fn count(&self) -> usize {
        self.known.iter().filter(|k| **k).count()
    }

    pub fn matches(&self, grid: &GridSpec) -> bool {
        self.n_delta == grid.n_delta && self.n_v == grid.n_v && self.known.len() == grid.len()
    }
}

/// Node values recovered from one failure repetition, up to a common scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub grid: GridSpec,
    /// `(i, j, F̂)` sorted by node.
    pub nodes: Vec<(usize, usize, f64)>,
    pub mask: KnownMask,
}

impl Reconstruction {
    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        self.nodes
            .binary_search_by(|n| (n.0, n.1).cmp(&(i, j)))
            .ok()
            .map(|k| self.nodes[k].2)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            nodes: self.nodes.iter().map(|&(i, j, f)| (i, j, f * s)).collect(),
            mask: self.mask.clone(),
        }
    }
}

/// Capability along a set-ending repetition: `F̂ = F(t) · exp(l0 + t/T_F)`.
///
/// During the final repetition the athlete exerts maximally throughout, so the
/// applied force equals the fatigued capability. `l0` is the fatigue carried
/// into the repetition; it is rarely known, which leaves a common scale
/// factor. Path points are assigned to their nearest grid node and values
/// landing on one node are averaged. `t_f` may be infinite.
pub fn reconstruct_from_failure_rep(
    path: &CapabilityPath,
    t_f: f64,
    l0: f64,
    grid: &GridSpec,
) -> Result<Reconstruction> {
    path.validate()?;
    if path.points.is_empty() {
        return Err(Error::invalid("empty path"));
    }
    if !(t_f > 0.0) {
        return Err(Error::invalid(format!("T_F must be positive, got {t_f}")));
    }
    if !(l0.is_finite() && l0 >= 0.0) {
        return Err(Error::invalid(format!("entry fatigue must be non-negative, got {l0}")));
    }
    if path.points.iter().any(|p| p.delta >= grid.delta_max) {
        return Err(Error::invalid(
            "path reaches the top of the range of motion; only failed repetitions can be reconstructed",
        ));
    }
    if path.points.windows(2).any(|w| w[1].delta < w[0].delta) {
        return Err(Error::invalid("elevation decreases along the path"));
    }
    let t0 = path.points[0].t;
    let mut acc: Vec<(f64, usize)> = vec![(0.0, 0); grid.len()];
    for (k, p) in path.points.iter().enumerate() {
        if p.force < 0.0 {
            return Err(Error::invalid(format!("negative force at path point {k}")));
        }
        let (i, j) = grid.nearest_node(p.delta, p.v.max(0.0)).ok_or_else(|| {
            Error::invalid(format!(
                "path point {k} at ({}, {}) lies outside the capability plane",
                p.delta, p.v
            ))
        })?;
        let f_hat = p.force * (l0 + (p.t - t0) / t_f).exp();
        let slot = &mut acc[grid.index(i, j)];
        slot.0 += f_hat;
        slot.1 += 1;
    }
    let mut mask = KnownMask::empty(grid);
    let mut nodes = Vec::new();
    for i in 0..grid.n_delta {
        for j in 0..grid.n_v {
            let (s, n) = acc[grid.index(i, j)];
            if n > 0 {
                mask.set(i, j);
                nodes.push((i, j, s / n as f64));
            }
        }
    }
    Ok(Reconstruction {
        grid: *grid,
        nodes,
        mask,
    })
}

/// Co-registers reconstructions from several sets into one set of known
/// nodes. The first set fixes the scale; each later set is scaled by the
/// least-squares factor over nodes it shares with the sets already merged,
/// or left unscaled when it shares none. Returns the merged values, the
/// mask and the scale applied to each set.
pub fn merge_reconstructions(sets: &[Reconstruction]) -> Result<(Reconstruction, Vec<f64>)> {
    let first = sets
        .first()
        .ok_or_else(|| Error::invalid("no reconstructions to merge"))?;
    let grid = first.grid;
    if sets.iter().any(|s| s.grid != grid) {
        return Err(Error::invalid("reconstructions use different grids"));
    }
    let mut sum = vec![0.0; grid.len()];
    let mut count = vec![0usize; grid.len()];
    let mut scales = Vec::with_capacity(sets.len());
    for set in sets {
        let (mut ab, mut bb) = (0.0, 0.0);
        for &(i, j, f) in &set.nodes {
            let k = grid.index(i, j);
            if count[k] > 0 {
                ab += sum[k] / count[k] as f64 * f;
                bb += f * f;
            }
        }
        let s = if bb > 0.0 { ab / bb } else { 1.0 };
        for &(i, j, f) in &set.nodes {
            let k = grid.index(i, j);
            sum[k] += s * f;
            count[k] += 1;
        }
        scales.push(s);
    }
    let mut mask = KnownMask::empty(&grid);
    let mut nodes = Vec::new();
    for i in 0..grid.n_delta {
        for j in 0..grid.n_v {
            let k = grid.index(i, j);
            if count[k] > 0 {
                mask.set(i, j);
                nodes.push((i, j, sum[k] / count[k] as f64));
            }
        }
    }
    Ok((Reconstruction { grid, nodes, mask }, scales))
}

/// Weights of the squared-difference penalty along δ, along v and along the
/// `(+Δδ, +Δv)` diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyWeights {
    pub k_delta: f64,
    pub k_v: f64,
    pub k_dv: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        Self {
            k_delta: 1.0,
            k_v: 1.0,
            k_dv: 0.5,
        }
    }
}

impl PenaltyWeights {
    fn validate(&self) -> Result<()> {
        let ok = [self.k_delta, self.k_v, self.k_dv]
            .iter()
            .all(|k| k.is_finite() && *k > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("penalty weights must be positive"))
        }
    }

    /// Graph edges `(from, to, weight)` of an `n_delta x n_v` grid.
    fn edges(&self, n_delta: usize, n_v: usize) -> Vec<(usize, usize, f64)> {
        let mut e = Vec::new();
        for i in 0..n_delta {
            for j in 0..n_v {
                let k = i * n_v + j;
                if i + 1 < n_delta {
                    e.push((k, k + n_v, self.k_delta));
                }
                if j + 1 < n_v {
                    e.push((k, k + 1, self.k_v));
                }
                if i + 1 < n_delta && j + 1 < n_v {
                    e.push((k, k + n_v + 1, self.k_dv));
                }
            }
        }
        e
    }
}

/// Value of the interpolation penalty for a grid of values.
pub fn penalty(n_delta: usize, n_v: usize, values: &[f64], w: &PenaltyWeights) -> f64 {
    w.edges(n_delta, n_v)
        .into_iter()
        .map(|(a, b, k)| k * (values[b] - values[a]).powi(2))
        .sum()
}

/// Minimises the interpolation penalty over the unknown nodes with the known
/// ones held fixed. Works on raw row-major arrays so degenerate grids (a
/// single velocity column, say) are allowed.
pub fn solve_quadratic_penalty(
    n_delta: usize,
    n_v: usize,
    values: &[f64],
    known: &[bool],
    w: &PenaltyWeights,
) -> Result<Vec<f64>> {
    w.validate()?;
    let n = n_delta * n_v;
    if n == 0 || values.len() != n || known.len() != n {
        return Err(Error::invalid("value and mask sizes do not match the grid"));
    }
    if !known.iter().any(|k| *k) {
        return Err(Error::invalid("interpolation needs at least one known sample"));
    }
    if let Some(k) = (0..n).find(|&k| known[k] && !values[k].is_finite()) {
        return Err(Error::invalid(format!("known sample {k} is not finite")));
    }
    // Unknowns keep their row-major order, so the band stays within n_v + 1.
    let mut slot = vec![usize::MAX; n];
    let mut m = 0;
    for k in 0..n {
        if !known[k] {
            slot[k] = m;
            m += 1;
        }
    }
    let mut out = values.to_vec();
    if m == 0 {
        return Ok(out);
    }
    let mut trip = Vec::new();
    let mut rhs = vec![0.0; m];
    for (a, b, k) in w.edges(n_delta, n_v) {
        for (p, q) in [(a, b), (b, a)] {
            if known[p] {
                continue;
            }
            trip.push((slot[p], slot[p], k));
            if known[q] {
                rhs[slot[p]] += k * values[q];
            } else {
                trip.push((slot[p], slot[q], -k));
            }
        }
    }
    let x = BandedMatrix::from_triplets(m, &trip).solve(&rhs)?;
    for k in 0..n {
        if !known[k] {
            out[k] = x[slot[k]];
        }
    }
    Ok(out)
}

/// Fills the unknown samples of `known` by penalty minimisation and makes the
/// result strictly decreasing in velocity.
pub fn interpolate_profile(
    known: &CapabilityProfile,
    mask: &KnownMask,
    w: &PenaltyWeights,
) -> Result<CapabilityProfile> {
    if !mask.matches(&known.grid) {
        return Err(Error::invalid("mask shape does not match the profile grid"));
    }
    let g = known.grid;
    let values = solve_quadratic_penalty(g.n_delta, g.n_v, &known.samples, &mask.known, w)?;
    Ok(enforce_monotonicity(&CapabilityProfile::new(g, values)?))
}

/// Interpolated profile from a (merged) reconstruction.
pub fn profile_from_reconstruction(rec: &Reconstruction, w: &PenaltyWeights) -> Result<CapabilityProfile> {
    let mut samples = vec![0.0; rec.grid.len()];
    for &(i, j, f) in &rec.nodes {
        samples[rec.grid.index(i, j)] = f;
    }
    interpolate_profile(&CapabilityProfile::new(rec.grid, samples)?, &rec.mask, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(nd: usize, nv: usize) -> GridSpec {
        GridSpec::new(nd, nv, 0.6, 1.2).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(1, 4, 1.0, 1.0).is_err());
        assert!(GridSpec::new(4, 4, 0.0, 1.0).is_err());
        let g = grid(7, 13);
        assert_eq!(g.delta_at(6), 0.6);
        assert_eq!(g.v_at(12), 1.2);
        assert_eq!(g.nearest_node(0.6, 1.2), Some((6, 12)));
        assert_eq!(g.nearest_node(0.049, 0.051), Some((0, 1)));
        assert_eq!(g.nearest_node(0.0, -0.2), None);
    }

    #[test]
    fn profile_validation() {
        let g = grid(3, 3);
        assert!(CapabilityProfile::new(g, vec![1.0; 8]).is_err());
        assert!(CapabilityProfile::new(g, vec![-1.0; 9]).is_err());
        let mut s = vec![1.0; 9];
        s[4] = f64::NAN;
        assert!(CapabilityProfile::new(g, s).is_err());
    }

    #[test]
    fn sampling_is_exact_at_nodes() {
        let g = grid(5, 6);
        let p = CapabilityProfile::from_fn(g, |d, v| 1000.0 + 37.0 * d.sin() - 11.0 * v * v).unwrap();
        for i in 0..5 {
            for j in 0..6 {
                assert_eq!(p.sample(g.delta_at(i), g.v_at(j)).unwrap(), p.get(i, j));
            }
        }
    }

    #[test]
    fn cell_centre_is_corner_average() {
        let g = grid(3, 3);
        let p = CapabilityProfile::new(g, vec![1.0, 2.0, 3.0, 5.0, 8.0, 13.0, 21.0, 34.0, 55.0]).unwrap();
        let c = p.sample(0.15, 0.3).unwrap();
        assert!((c - (1.0 + 2.0 + 5.0 + 8.0) / 4.0).abs() < 1e-12);
        assert!(p.sample(0.61, 0.0).is_err());
        assert!(p.sample(0.0, -1e-12).is_err());
        assert_eq!(p.sample_clamped(5.0, -3.0), p.get(2, 0));
    }

    #[test]
    fn constant_profile_samples_exactly() {
        let p = CapabilityProfile::constant(grid(9, 9), 777.7).unwrap();
        for k in 0..50 {
            let x = k as f64 / 49.0;
            assert_eq!(p.sample(0.6 * x, 1.2 * x * x).unwrap(), 777.7);
        }
    }

    /// Independent oracle: weights from the tensor-product hat functions.
    fn bilinear_oracle(p: &CapabilityProfile, d: f64, v: f64) -> f64 {
        let g = p.grid();
        let hat = |x: f64, c: f64, h: f64| (1.0 - (x - c).abs() / h).max(0.0);
        let mut s = 0.0;
        for i in 0..g.n_delta {
            for j in 0..g.n_v {
                s += p.get(i, j) * hat(d, g.delta_at(i), g.d_delta()) * hat(v, g.v_at(j), g.d_v());
            }
        }
        s
    }

    proptest! {
        #[test]
        fn bilinear_matches_hat_function_oracle(
            vals in proptest::collection::vec(0.0..2000.0f64, 30),
            d in 0.0..=0.6f64,
            v in 0.0..=1.2f64,
        ) {
            let p = CapabilityProfile::new(grid(5, 6), vals).unwrap();
            let a = p.sample(d, v).unwrap();
            let b = bilinear_oracle(&p, d, v);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{} vs {}", a, b);
        }

        #[test]
        fn bumps_add_without_clamping(nu1 in 0.0..300.0f64, nu2 in 0.0..300.0f64, d0 in 0.0..0.6f64, v0 in 0.0..1.2f64) {
            let p = CapabilityProfile::linear(grid(8, 8), 1000.0).unwrap();
            let a = apply_gaussian_bump(&apply_gaussian_bump(&p, d0, v0, nu1, 0.1, 0.2).unwrap(), d0, v0, nu2, 0.1, 0.2).unwrap();
            let b = apply_gaussian_bump(&p, d0, v0, nu1 + nu2, 0.1, 0.2).unwrap();
            for (x, y) in a.samples().iter().zip(b.samples()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn enforcement_yields_strictly_decreasing_rows(vals in proptest::collection::vec(0.0..100.0f64, 24)) {
            let p = CapabilityProfile::new(grid(4, 6), vals).unwrap();
            let q = enforce_monotonicity(&p);
            prop_assert!(check_monotonicity(&q).is_empty());
            prop_assert!(q.samples().iter().all(|x| *x >= 0.0));
            // a second pass only subtracts another ramp
            let r = enforce_monotonicity(&q);
            for i in 0..4 {
                for j in 0..6 {
                    let expect = q.get(i, j) - MONOTONE_EPSILON * j as f64;
                    if q.get(i, 5) - MONOTONE_EPSILON * 5.0 >= 0.0 {
                        prop_assert!((r.get(i, j) - expect).abs() < 1e-9);
                    }
                }
            }
        }

        #[test]
        fn reconstruction_is_scale_equivariant(s in 0.1..10.0f64, t_f in 5.0..100.0f64) {
            let path = CapabilityPath::new(
                (0..40)
                    .map(|k| {
                        let t = k as f64 * 0.02;
                        PathPoint { t, delta: 0.3 * t, v: 0.3 + 0.2 * (3.0 * t).sin(), force: 800.0 - 100.0 * t, g: 1.0 }
                    })
                    .collect(),
            )
            .unwrap();
            let scaled = CapabilityPath {
                points: path.points.iter().map(|p| PathPoint { force: p.force * s, ..*p }).collect(),
            };
            let g = grid(16, 16);
            let a = reconstruct_from_failure_rep(&path, t_f, 0.0, &g).unwrap();
            let b = reconstruct_from_failure_rep(&scaled, t_f, 0.0, &g).unwrap();
            prop_assert_eq!(&a.mask, &b.mask);
            for (x, y) in a.nodes.iter().zip(&b.nodes) {
                prop_assert!((x.2 * s - y.2).abs() <= 1e-12 * y.2);
            }
        }

        #[test]
        fn interpolation_obeys_maximum_principle(
            vals in proptest::collection::vec(0.0..100.0f64, 42),
            known in proptest::collection::vec(proptest::bool::weighted(0.3), 42),
            w in (0.1..5.0f64, 0.1..5.0f64, 0.1..5.0f64),
        ) {
            prop_assume!(known.iter().any(|k| *k));
            let w = PenaltyWeights { k_delta: w.0, k_v: w.1, k_dv: w.2 };
            let out = solve_quadratic_penalty(6, 7, &vals, &known, &w).unwrap();
            let lo = vals.iter().zip(&known).filter(|p| *p.1).map(|p| *p.0).fold(f64::INFINITY, f64::min);
            let hi = vals.iter().zip(&known).filter(|p| *p.1).map(|p| *p.0).fold(f64::NEG_INFINITY, f64::max);
            for (k, x) in out.iter().enumerate() {
                prop_assert!(*x >= lo - 1e-9 && *x <= hi + 1e-9);
                if known[k] {
                    prop_assert_eq!(*x, vals[k]);
                }
            }
        }
    }

    #[test]
    fn zero_bump_is_identity() {
        let p = CapabilityProfile::linear(grid(6, 6), 900.0).unwrap();
        assert_eq!(apply_gaussian_bump(&p, 0.3, 0.6, 0.0, 0.1, 0.1).unwrap(), p);
        assert!(apply_gaussian_bump(&p, 0.3, 0.6, 1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn bump_on_a_node_adds_exactly_nu() {
        let g = grid(7, 13);
        let p = CapabilityProfile::constant(g, 500.0).unwrap();
        let q = apply_gaussian_bump(&p, g.delta_at(2), g.v_at(5), 40.0, 0.05, 0.1).unwrap();
        assert_eq!(q.get(2, 5), 540.0);
        assert!(q.get(2, 6) < 540.0 && q.get(2, 6) > 500.0);
    }

    #[test]
    fn negative_bump_clamps_at_zero() {
        let g = grid(3, 3);
        let p = CapabilityProfile::new(g, vec![10.0, 5.0, 1.0, 10.0, 5.0, 1.0, 10.0, 5.0, 1.0]).unwrap();
        let q = apply_gaussian_bump(&p, 0.3, 0.6, -8.0, 1e-3, 1e-3).unwrap();
        assert_eq!(q.get(1, 1), 0.0);
        assert_eq!(q.get(0, 0), 10.0);
        let r = apply_gaussian_bump(&p, 0.3, 1.2, -100.0, 10.0, 10.0).unwrap();
        assert!(r.samples().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn monotonicity_reports() {
        let lin = CapabilityProfile::linear(grid(4, 5), 1000.0).unwrap();
        assert!(check_monotonicity(&lin).is_empty());
        let c = CapabilityProfile::constant(grid(3, 4), 10.0).unwrap();
        assert_eq!(check_monotonicity(&c).len(), 3 * 3);
        let mut s = lin.samples().to_vec();
        s.swap(2 * 5 + 1, 2 * 5 + 2);
        let swapped = CapabilityProfile::new(*lin.grid(), s).unwrap();
        assert_eq!(check_monotonicity(&swapped), vec![(2, 1)]);
    }

    #[test]
    fn pava_hand_cases() {
        assert_eq!(antitonic_regression(&[5.0, 7.0]), vec![6.0, 6.0]);
        assert_eq!(antitonic_regression(&[3.0, 2.0, 1.0]), vec![3.0, 2.0, 1.0]);
        assert_eq!(antitonic_regression(&[1.0, 2.0, 3.0]), vec![2.0, 2.0, 2.0]);
        assert_eq!(antitonic_regression(&[4.0, 1.0, 3.0]), vec![4.0, 2.0, 2.0]);
        let g = grid(2, 2);
        let p = CapabilityProfile::new(g, vec![5.0, 7.0, 2.0, 1.0]).unwrap();
        let q = enforce_monotonicity(&p);
        assert_eq!(q.row(0), &[6.0, 6.0 - MONOTONE_EPSILON]);
        assert_eq!(q.row(1), &[2.0, 1.0 - MONOTONE_EPSILON]);
    }

    #[test]
    fn ramp_never_drives_samples_negative() {
        let p = CapabilityProfile::constant(grid(2, 5), 0.0).unwrap();
        let q = enforce_monotonicity(&p);
        assert!(check_monotonicity(&q).is_empty());
        assert_eq!(q.get(0, 4), 0.0);
    }

    fn constant_force_path(n: usize, dt: f64) -> CapabilityPath {
        CapabilityPath::new(
            (0..n)
                .map(|k| {
                    let t = k as f64 * dt;
                    PathPoint {
                        t,
                        delta: 0.4 * t,
                        v: 0.4,
                        force: 100.0,
                        g: 1.0,
                    }
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn reconstruction_undoes_exponential_fatigue() {
        let g = GridSpec::new(101, 5, 0.5, 0.8).unwrap();
        let path = constant_force_path(101, 0.01);
        let rec = reconstruct_from_failure_rep(&path, 30.0, 0.0, &g).unwrap();
        // δ = 0.4 t lands on node i = 80 t exactly at t = k/80
        let first = rec.value(0, 2).unwrap();
        assert!((first - 100.0).abs() < 0.02);
        let last = rec.value(80, 2).unwrap();
        assert!((last - 100.0 * (1.0_f64 / 30.0).exp()).abs() < 0.02, "{last}");
        assert!((100.0 * (1.0_f64 / 30.0).exp() - 103.39).abs() < 0.005);
        assert!(rec.mask.count() == rec.nodes.len());
    }

    #[test]
    fn infinite_time_constant_keeps_raw_forces() {
        let g = grid(20, 5);
        let path = constant_force_path(30, 0.02);
        let rec = reconstruct_from_failure_rep(&path, f64::INFINITY, 0.0, &g).unwrap();
        assert!(rec.nodes.iter().all(|n| n.2 == 100.0));
        let shifted = reconstruct_from_failure_rep(&path, f64::INFINITY, 0.5, &g).unwrap();
        assert!((shifted.nodes[0].2 - 100.0 * 0.5f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_rejects_completed_and_malformed_paths() {
        let g = GridSpec::new(10, 5, 0.2, 0.8).unwrap();
        let path = constant_force_path(101, 0.01);
        assert!(reconstruct_from_failure_rep(&path, 30.0, 0.0, &g).is_err());
        let mut back = constant_force_path(5, 0.01);
        back.points[3].t = back.points[2].t;
        assert!(reconstruct_from_failure_rep(&back, 30.0, 0.0, &grid(5, 5)).is_err());
        assert!(CapabilityPath::new(back.points.clone()).is_err());
        assert!(reconstruct_from_failure_rep(&constant_force_path(5, 0.01), 0.0, 0.0, &grid(5, 5)).is_err());
    }

    #[test]
    fn collisions_are_averaged() {
        let g = grid(3, 3);
        let path = CapabilityPath::new(vec![
            PathPoint {
                t: 0.0,
                delta: 0.0,
                v: 0.0,
                force: 10.0,
                g: 1.0,
            },
            PathPoint {
                t: 0.1,
                delta: 0.01,
                v: 0.01,
                force: 20.0,
                g: 1.0,
            },
        ])
        .unwrap();
        let rec = reconstruct_from_failure_rep(&path, f64::INFINITY, 0.0, &g).unwrap();
        assert_eq!(rec.nodes, vec![(0, 0, 15.0)]);
    }

    #[test]
    fn merge_fits_scale_on_overlap() {
        let g = grid(4, 4);
        let mut mask_a = KnownMask::empty(&g);
        mask_a.set(0, 0);
        mask_a.set(1, 1);
        let a = Reconstruction {
            grid: g,
            nodes: vec![(0, 0, 10.0), (1, 1, 20.0)],
            mask: mask_a,
        };
        let mut mask_b = KnownMask::empty(&g);
        mask_b.set(1, 1);
        mask_b.set(2, 2);
        let b = Reconstruction {
            grid: g,
            nodes: vec![(1, 1, 5.0), (2, 2, 6.0)],
            mask: mask_b,
        };
        let (m, scales) = merge_reconstructions(&[a.clone(), b]).unwrap();
        assert_eq!(scales, vec![1.0, 4.0]);
        assert_eq!(m.value(1, 1), Some(20.0));
        assert_eq!(m.value(2, 2), Some(24.0));
        assert_eq!(m.mask.count(), 3);
        let mut mask_c = KnownMask::empty(&g);
        mask_c.set(3, 3);
        let c = Reconstruction {
            grid: g,
            nodes: vec![(3, 3, 7.0)],
            mask: mask_c,
        };
        let (_, scales) = merge_reconstructions(&[a, c]).unwrap();
        assert_eq!(scales, vec![1.0, 1.0]);
        assert!(merge_reconstructions(&[]).is_err());
    }

    #[test]
    fn all_known_is_identity() {
        let g = grid(4, 5);
        let p = CapabilityProfile::linear(g, 1000.0).unwrap();
        let out = solve_quadratic_penalty(4, 5, p.samples(), &[true; 20], &PenaltyWeights::default()).unwrap();
        assert_eq!(out, p.samples());
    }

    #[test]
    fn chain_interpolates_linearly() {
        let mut vals = vec![0.0; 11];
        vals[0] = 10.0;
        vals[10] = 20.0;
        let mut known = vec![false; 11];
        known[0] = true;
        known[10] = true;
        let w = PenaltyWeights {
            k_delta: 1.0,
            k_v: 1.0,
            k_dv: 0.5,
        };
        let out = solve_quadratic_penalty(11, 1, &vals, &known, &w).unwrap();
        for (k, x) in out.iter().enumerate() {
            assert!((x - (10.0 + k as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_needs_data_and_valid_weights() {
        let w = PenaltyWeights::default();
        assert!(solve_quadratic_penalty(3, 3, &[0.0; 9], &[false; 9], &w).is_err());
        let bad = PenaltyWeights { k_dv: 0.0, ..w };
        assert!(solve_quadratic_penalty(3, 3, &[0.0; 9], &[true; 9], &bad).is_err());
    }

    #[test]
    fn interpolated_profile_is_monotone() {
        let g = grid(8, 8);
        let mut mask = KnownMask::empty(&g);
        let mut s = vec![0.0; 64];
        for i in 0..8 {
            s[g.index(i, 1)] = 900.0;
            mask.set(i, 1);
            s[g.index(i, 6)] = 500.0 + 10.0 * i as f64;
            mask.set(i, 6);
        }
        let p = interpolate_profile(
            &CapabilityProfile::new(g, s).unwrap(),
            &mask,
            &PenaltyWeights::default(),
        )
        .unwrap();
        assert!(check_monotonicity(&p).is_empty());
        assert!(p.samples().iter().all(|x| *x >= 500.0 - 1e-3 && *x <= 900.0 + 1e-6));
    }

    #[test]
    fn penalty_is_locally_minimal() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let (nd, nv) = (9, 7);
        let w = PenaltyWeights {
            k_delta: 0.7,
            k_v: 2.3,
            k_dv: 1.1,
        };
        let mut vals = vec![0.0; nd * nv];
        let mut known = vec![false; nd * nv];
        for i in 0..nd {
            vals[i * nv + 1] = 800.0 - 20.0 * i as f64;
            vals[i * nv + 5] = 300.0 + 15.0 * i as f64;
            known[i * nv + 1] = true;
            known[i * nv + 5] = true;
        }
        let sol = solve_quadratic_penalty(nd, nv, &vals, &known, &w).unwrap();
        let j0 = penalty(nd, nv, &sol, &w);
        for _ in 0..100 {
            let mut cand = sol.clone();
            for k in 0..cand.len() {
                if !known[k] {
                    cand[k] += rng.gen_range(-1.0..1.0);
                }
            }
            assert!(penalty(nd, nv, &cand, &w) >= j0);
        }
    }
}
