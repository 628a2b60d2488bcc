//! On-disk formats: JSON profile, track and manifest files, and CSV series.
//!
//! Every CSV starts with a mandatory header whose column names carry their
//! units; a file written in other units is refused rather than converted.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::capability::{CapabilityPath, CapabilityProfile, GridSpec, KnownMask, PathPoint};
use crate::kinematics::{ElevationSeries, RepetitionSegment};
use crate::vision::{FeatureTrack, FusedDisplacement};
use crate::{Error, Result};

pub const PROFILE_UNITS: &str = "N,m,mps";
pub const TRACK_UNITS: &str = "px";

pub const DISPLACEMENT_HEADER: [&str; 3] = ["frame_index", "dx_pixels", "dy_pixels"];
pub const ELEVATION_HEADER: [&str; 2] = ["t_seconds", "elevation_m"];
pub const KINEMATICS_HEADER: [&str; 4] = ["t_seconds", "elevation_m", "velocity_mps", "accel_mps2"];
pub const SEGMENT_HEADER: [&str; 2] = ["start_index", "end_index"];
pub const PATH_HEADER: [&str; 5] = ["t", "delta_m", "v_mps", "F_N", "g"];

/// Capability profile file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub n_delta: usize,
    pub n_v: usize,
    pub delta_max: f64,
    pub v_max: f64,
    pub samples: Vec<f64>,
    pub known_mask: Vec<bool>,
    pub units: String,
}

impl ProfileFile {
    pub fn new(profile: &CapabilityProfile, mask: &KnownMask) -> Result<Self> {
        if !mask.matches(profile.grid()) {
            return Err(Error::invalid("mask shape does not match the profile grid"));
        }
        let g = profile.grid();
        Ok(Self {
            n_delta: g.n_delta,
            n_v: g.n_v,
            delta_max: g.delta_max,
            v_max: g.v_max,
            samples: profile.samples().to_vec(),
            known_mask: mask.known.clone(),
            units: PROFILE_UNITS.into(),
        })
    }

    pub fn into_parts(self) -> Result<(CapabilityProfile, KnownMask)> {
        check_units("profile", &self.units, PROFILE_UNITS)?;
        let grid = GridSpec::new(self.n_delta, self.n_v, self.delta_max, self.v_max)?;
        if self.known_mask.len() != grid.len() {
            return Err(Error::Parse(format!(
                "known_mask has {} entries, grid needs {}",
                self.known_mask.len(),
                grid.len()
            )));
        }
        let profile = CapabilityProfile::new(grid, self.samples)?;
        let mask = KnownMask {
            n_delta: grid.n_delta,
            n_v: grid.n_v,
            known: self.known_mask,
        };
        Ok((profile, mask))
    }
}

fn check_units(what: &str, found: &str, expected: &str) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::Parse(format!(
            "{what} file declares units \"{found}\"; only \"{expected}\" is accepted"
        )))
    }
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Parse(e.to_string())
}

pub fn profile_to_json(profile: &CapabilityProfile, mask: &KnownMask) -> Result<String> {
    serde_json::to_string_pretty(&ProfileFile::new(profile, mask)?).map_err(json_err)
}

pub fn profile_from_json(text: &str) -> Result<(CapabilityProfile, KnownMask)> {
    serde_json::from_str::<ProfileFile>(text)
        .map_err(json_err)?
        .into_parts()
}

pub fn write_profile(path: &Path, profile: &CapabilityProfile, mask: &KnownMask) -> Result<()> {
    fs::write(path, profile_to_json(profile, mask)?)?;
    Ok(())
}

pub fn read_profile(path: &Path) -> Result<(CapabilityProfile, KnownMask)> {
    profile_from_json(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracksFile {
    pub units: String,
    pub n_frames: usize,
    pub tracks: Vec<FeatureTrack>,
}

pub fn tracks_to_json(tracks: &[FeatureTrack], n_frames: usize) -> Result<String> {
    serde_json::to_string_pretty(&TracksFile {
        units: TRACK_UNITS.into(),
        n_frames,
        tracks: tracks.to_vec(),
    })
    .map_err(json_err)
}

pub fn tracks_from_json(text: &str) -> Result<TracksFile> {
    let f: TracksFile = serde_json::from_str(text).map_err(json_err)?;
    check_units("tracks", &f.units, TRACK_UNITS)?;
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepStatus {
    Success,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRep {
    pub start_index: usize,
    pub end_index: usize,
    pub outcome: RepStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSet {
    pub reps: Vec<ManifestRep>,
    /// Fatigue carried into the set's failed repetition, if known, nats.
    #[serde(default)]
    pub entry_fatigue: f64,
}

/// Which samples of an elevation series belong to which repetition of which set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetsManifest {
    pub sets: Vec<ManifestSet>,
}

impl SetsManifest {
    pub fn validate(&self, n_samples: usize) -> Result<()> {
        for (s, set) in self.sets.iter().enumerate() {
            if !(set.entry_fatigue.is_finite() && set.entry_fatigue >= 0.0) {
                return Err(Error::invalid(format!("set {s}: entry fatigue must be non-negative")));
            }
            for (r, rep) in set.reps.iter().enumerate() {
                if rep.start_index >= rep.end_index || rep.end_index >= n_samples {
                    return Err(Error::invalid(format!(
                        "set {s} rep {r}: bad sample range {}..={} for {n_samples} samples",
                        rep.start_index, rep.end_index
                    )));
                }
            }
        }
        Ok(())
    }

    /// `(set, rep)` of every repetition marked as a failure.
    pub fn failures(&self) -> Vec<(usize, ManifestRep)> {
        self.sets
            .iter()
            .enumerate()
            .flat_map(|(s, set)| {
                set.reps
                    .iter()
                    .filter(|r| r.outcome == RepStatus::Failure)
                    .map(move |r| (s, *r))
            })
            .collect()
    }
}

pub fn manifest_from_json(text: &str) -> Result<SetsManifest> {
    serde_json::from_str(text).map_err(json_err)
}

pub fn manifest_to_json(m: &SetsManifest) -> Result<String> {
    serde_json::to_string_pretty(m).map_err(json_err)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn unit_suffix(name: &str) -> (&str, &str) {
    match name.find('_') {
        Some(k) => (&name[..k], &name[k + 1..]),
        None => (name, ""),
    }
}

/// Checks a header against the expected column names. A column naming the
/// expected quantity in a different unit is reported as a unit mismatch.
fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    for (k, want) in expected.iter().enumerate() {
        let got = found.get(k).map(str::trim).unwrap_or("");
        if got == *want {
            continue;
        }
        let (q_got, u_got) = unit_suffix(got);
        let (q_want, u_want) = unit_suffix(want);
        if q_got == q_want && !u_got.is_empty() {
            return Err(Error::Parse(format!(
                "column {k} is in \"{u_got}\" but \"{u_want}\" is required; mixed units are refused"
            )));
        }
        return Err(Error::Parse(format!(
            "expected header {}, found {}",
            expected.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    if found.len() != expected.len() {
        return Err(Error::Parse(format!(
            "expected {} columns, found {}",
            expected.len(),
            found.len()
        )));
    }
    Ok(())
}

fn read_rows<R: Read>(input: R, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    check_header(rdr.headers().map_err(csv_err)?, header)?;
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}: \"{f}\" is not a number", k + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn write_rows<W: Write>(out: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn as_index(x: f64, what: &str) -> Result<usize> {
    if x >= 0.0 && x.fract() == 0.0 && x < usize::MAX as f64 {
        Ok(x as usize)
    } else {
        Err(Error::Parse(format!("{what} {x} is not a non-negative integer")))
    }
}

pub fn write_displacement_csv<W: Write>(out: W, d: &[FusedDisplacement]) -> Result<()> {
    write_rows(
        out,
        &DISPLACEMENT_HEADER,
        d.iter()
            .map(|s| vec![s.frame.to_string(), s.dx.to_string(), s.dy.to_string()]),
    )
}

/// Per-frame `(dx, dy)` in pixels; frames must be numbered 0, 1, 2, ...
pub fn read_displacement_csv<R: Read>(input: R) -> Result<Vec<(f64, f64)>> {
    let rows = read_rows(input, &DISPLACEMENT_HEADER)?;
    rows.iter()
        .enumerate()
        .map(|(k, r)| {
            if as_index(r[0], "frame index")? != k {
                return Err(Error::Parse(format!(
                    "frame indices must run 0, 1, 2, ...; row {} has {}",
                    k + 1,
                    r[0]
                )));
            }
            Ok((r[1], r[2]))
        })
        .collect()
}

/// Elevation series, with optional velocity and acceleration columns.
pub fn write_elevation_csv<W: Write>(
    out: W,
    series: &ElevationSeries,
    derivatives: Option<(&[f64], &[f64])>,
) -> Result<()> {
    match derivatives {
        None => write_rows(
            out,
            &ELEVATION_HEADER,
            series
                .values()
                .iter()
                .enumerate()
                .map(|(k, y)| vec![series.time(k).to_string(), y.to_string()]),
        ),
        Some((v, a)) => {
            if v.len() != series.len() || a.len() != series.len() {
                return Err(Error::invalid("derivative columns do not match the series length"));
            }
            write_rows(
                out,
                &KINEMATICS_HEADER,
                series.values().iter().enumerate().map(|(k, y)| {
                    vec![
                        series.time(k).to_string(),
                        y.to_string(),
                        v[k].to_string(),
                        a[k].to_string(),
                    ]
                }),
            )
        }
    }
}

/// Reads an elevation series; extra derivative columns are accepted and ignored.
/// Samples must be evenly spaced.
pub fn read_elevation_csv<R: Read>(input: R) -> Result<ElevationSeries> {
    let mut buf = String::new();
    let mut input = input;
    input.read_to_string(&mut buf)?;
    let first = buf.lines().next().unwrap_or("");
    let header: &[&str] = if first.split(',').count() == 4 {
        &KINEMATICS_HEADER
    } else {
        &ELEVATION_HEADER
    };
    let rows = read_rows(buf.as_bytes(), header)?;
    if rows.len() < 3 {
        return Err(Error::Parse("elevation series needs at least 3 rows".into()));
    }
    let dt = rows[1][0] - rows[0][0];
    for (k, r) in rows.iter().enumerate() {
        let expect = rows[0][0] + k as f64 * dt;
        if (r[0] - expect).abs() > 1e-6 * dt.abs().max(1e-12) * (k as f64 + 1.0) {
            return Err(Error::Parse(format!(
                "row {} breaks the uniform sampling interval",
                k + 1
            )));
        }
    }
    ElevationSeries::new(dt, rows.iter().map(|r| r[1]).collect())
}

pub fn write_segments_csv<W: Write>(out: W, segments: &[RepetitionSegment]) -> Result<()> {
    write_rows(
        out,
        &SEGMENT_HEADER,
        segments
            .iter()
            .map(|s| vec![s.start_index.to_string(), s.end_index.to_string()]),
    )
}

pub fn read_segments_csv<R: Read>(input: R) -> Result<Vec<RepetitionSegment>> {
    read_rows(input, &SEGMENT_HEADER)?
        .iter()
        .map(|r| {
            Ok(RepetitionSegment {
                start_index: as_index(r[0], "start index")?,
                end_index: as_index(r[1], "end index")?,
            })
        })
        .collect()
}

pub fn write_path_csv<W: Write>(out: W, path: &CapabilityPath) -> Result<()> {
    write_rows(
        out,
        &PATH_HEADER,
        path.points.iter().map(|p| {
            vec![
                p.t.to_string(),
                p.delta.to_string(),
                p.v.to_string(),
                p.force.to_string(),
                p.g.to_string(),
            ]
        }),
    )
}

pub fn read_path_csv<R: Read>(input: R) -> Result<CapabilityPath> {
    let points = read_rows(input, &PATH_HEADER)?
        .iter()
        .map(|r| PathPoint {
            t: r[0],
            delta: r[1],
            v: r[2],
            force: r[3],
            g: r[4],
        })
        .collect();
    CapabilityPath::new(points)
}
