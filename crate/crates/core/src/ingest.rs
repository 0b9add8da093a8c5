//! Turns a logger CSV into a [`SensorTrace`] on a uniform time grid.
//!
//! Two small TOML files drive the adapter. The column map says which header
//! feeds which channel:
//!
//! ```toml
//! delta_t = "3 min"
//! rooms = 1
//!
//! [time]
//! header = "timestamp"
//! format = "%Y-%m-%d %H:%M:%S"   # chrono format, or `unit = "min"` for numbers
//!
//! [columns]
//! "Temp (F)" = { role = "room_temp[1]", unit = "F" }
//! "Outside"  = { role = "ambient", unit = "F" }
//! ```
//!
//! The imputation policy says where channels without a column come from:
//!
//! ```toml
//! seed = 7
//! ambient = { synthetic = { mean = "55 F", std = "2 F" } }
//! hvac_state = "always_off"      # or "from_column", or
//!                                # { manual_windows = [{ room = 3, start = 40, end = 70 }] }
//! hvac_temp = { constant = "55 F" }
//! missing_room_temp = "drop"     # or { constant = "72 F" }
//! ```
//!
//! Readings are placed on the grid `t0 + n * delta_t` by linear interpolation;
//! controller states are held from the last reading. A channel whose readings
//! are more than `5 * delta_t` apart is refused rather than filled in.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{NaiveDateTime, NaiveTime};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{parse_duration_hours, parse_unit};
use crate::error::{Error, Result};
use crate::model::BuildingLayout;
use crate::simulator::SensorTrace;
use crate::units::{convert_temperature, parse_interval, parse_temperature, TempUnit};

/// Longest stretch between two readings that is still interpolated, in steps.
pub const MAX_GAP_STEPS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeColumn {
    pub header: String,
    /// chrono format for date-times or times of day.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    /// `h`, `min` or `s` for numeric time columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnBinding {
    pub role: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    /// Grid spacing, e.g. `"3 min"`.
    pub delta_t: String,
    pub rooms: usize,
    pub time: TimeColumn,
    /// CSV header → channel.
    pub columns: BTreeMap<String, ColumnBinding>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    RoomTemp(usize),
    Ambient,
    HvacState(usize),
    HvacTemp(usize),
}

impl Role {
    fn parse(text: &str, rooms: usize) -> Result<Self> {
        let text = text.trim();
        if text == "ambient" {
            return Ok(Role::Ambient);
        }
        let (name, rest) = text
            .split_once('[')
            .ok_or_else(|| Error::parse("column role", format!("unknown role `{text}`")))?;
        let index: usize = rest
            .strip_suffix(']')
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| Error::parse("column role", format!("bad room index in `{text}`")))?;
        if index == 0 || index > rooms {
            return Err(Error::validation(
                "columns",
                format!("`{text}` refers to a room outside 1..={rooms}"),
            ));
        }
        let room = index - 1;
        match name.trim() {
            "room_temp" => Ok(Role::RoomTemp(room)),
            "hvac_state" => Ok(Role::HvacState(room)),
            "hvac_temp" => Ok(Role::HvacTemp(room)),
            other => Err(Error::parse("column role", format!("unknown role `{other}`"))),
        }
    }

    fn is_temperature(self) -> bool {
        !matches!(self, Role::HvacState(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AmbientSource {
    FromColumn,
    /// Independent Gaussian draw per grid step.
    Synthetic { mean: String, std: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualWindow {
    /// 1-based room.
    pub room: usize,
    /// First grid step with the HVAC on.
    pub start: usize,
    /// First grid step after the window.
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HvacStateSource {
    FromColumn,
    AlwaysOff,
    ManualWindows(Vec<ManualWindow>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HvacTempSource {
    FromColumn,
    Constant(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MissingRoom {
    /// Leave the room out of the trace and the layout.
    Drop,
    /// Keep the room at a fixed temperature.
    Constant(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImputationPolicy {
    pub ambient: AmbientSource,
    pub hvac_state: HvacStateSource,
    pub hvac_temp: HvacTempSource,
    #[serde(default = "default_missing")]
    pub missing_room_temp: MissingRoom,
    /// Seed for synthetic channels.
    #[serde(default)]
    pub seed: u64,
}

fn default_missing() -> MissingRoom {
    MissingRoom::Drop
}

impl Default for ImputationPolicy {
    fn default() -> Self {
        ImputationPolicy {
            ambient: AmbientSource::FromColumn,
            hvac_state: HvacStateSource::FromColumn,
            hvac_temp: HvacTempSource::FromColumn,
            missing_room_temp: MissingRoom::Drop,
            seed: 0,
        }
    }
}

pub fn load_column_map(path: &Path) -> Result<ColumnMap> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::parse("column map", e))
}

pub fn load_policy(path: &Path) -> Result<ImputationPolicy> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::parse("imputation policy", e))
}

/// Ingested trace plus the rooms (0-based, original numbering) it covers.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutput {
    pub trace: SensorTrace,
    pub rooms: Vec<usize>,
    /// The input layout restricted to `rooms`, when a layout was given.
    pub layout: Option<BuildingLayout>,
}

/// One channel's readings, time in hours since the first row.
struct Series {
    header: String,
    times: Vec<f64>,
    values: Vec<f64>,
}

fn parse_time(raw: &str, spec: &TimeColumn) -> Result<f64> {
    if let Some(format) = &spec.format {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, format) {
            return Ok(dt.and_utc().timestamp_millis() as f64 / 3_600_000.0);
        }
        let t = NaiveTime::parse_from_str(raw, format).map_err(|e| {
            Error::parse("time column", format!("`{raw}` does not match `{format}`: {e}"))
        })?;
        return Ok(t.signed_duration_since(NaiveTime::MIN).num_milliseconds() as f64 / 3_600_000.0);
    }
    let unit = spec.unit.as_deref().ok_or_else(|| {
        Error::validation("time", "give either `format` or a numeric `unit` (h, min, s)")
    })?;
    let value: f64 = raw
        .parse()
        .map_err(|_| Error::parse("time column", format!("bad number `{raw}`")))?;
    Ok(value * parse_duration_hours(&format!("1 {unit}"))?)
}

fn read_columns(path: &Path, map: &ColumnMap) -> Result<(Vec<f64>, BTreeMap<Role, Series>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::validation("columns", format!("CSV has no column `{name}`"))
        })
    };
    let time_idx = find(&map.time.header)?;

    let mut bound: Vec<(usize, Role, TempUnit)> = Vec::new();
    for (header, binding) in &map.columns {
        let role = Role::parse(&binding.role, map.rooms)?;
        if bound.iter().any(|(_, r, _)| *r == role) {
            return Err(Error::validation("columns", format!("role `{}` bound twice", binding.role)));
        }
        let unit = if role.is_temperature() {
            parse_unit(binding.unit.as_deref(), header)?
        } else {
            TempUnit::Kelvin
        };
        bound.push((find(header)?, role, unit));
    }

    let mut times = Vec::new();
    let mut series: BTreeMap<Role, Series> = bound
        .iter()
        .map(|&(idx, role, _)| {
            (
                role,
                Series {
                    header: headers[idx].to_string(),
                    times: Vec::new(),
                    values: Vec::new(),
                },
            )
        })
        .collect();
    for record in reader.records() {
        let record = record?;
        let t = parse_time(record.get(time_idx).unwrap_or(""), &map.time)?;
        if let Some(&last) = times.last() {
            if t <= last {
                return Err(Error::validation(
                    "time",
                    format!("timestamps must increase strictly (line {})", times.len() + 2),
                ));
            }
        }
        times.push(t);
        for &(idx, role, unit) in &bound {
            let raw = record.get(idx).unwrap_or("");
            if raw.is_empty() || raw.eq_ignore_ascii_case("nan") || raw.eq_ignore_ascii_case("na") {
                continue;
            }
            let v: f64 = raw.parse().map_err(|_| {
                Error::parse("sensor CSV", format!("bad value `{raw}` in column `{}`", headers[idx].to_string()))
            })?;
            if !v.is_finite() {
                continue;
            }
            let s = series.get_mut(&role).expect("bound role");
            s.times.push(t);
            s.values.push(if role.is_temperature() {
                convert_temperature(v, unit, TempUnit::Kelvin)
            } else {
                v
            });
        }
    }
    if times.len() < 2 {
        return Err(Error::validation("sensor CSV", "need at least 2 rows"));
    }
    let t0 = times[0];
    for t in times.iter_mut() {
        *t -= t0;
    }
    for s in series.values_mut() {
        for t in s.times.iter_mut() {
            *t -= t0;
        }
    }
    Ok((times, series))
}

/// Interpolates `s` onto `grid`; `hold` keeps the last reading instead.
fn resample(s: &Series, grid: &[f64], delta_t: f64, hold: bool) -> Result<Vec<f64>> {
    let limit = MAX_GAP_STEPS * delta_t * (1.0 + 1e-9);
    let tol = 1e-9 * delta_t;
    let gap = |a: f64, b: f64| {
        let start = grid.iter().position(|&g| g > a + tol).unwrap_or(grid.len() - 1);
        let end = grid.iter().rposition(|&g| g < b - tol).unwrap_or(0);
        Error::Gap {
            column: s.header.clone(),
            start_step: start,
            end_step: end.max(start),
            gap_hours: b - a,
        }
    };
    if s.times.is_empty() {
        return Err(gap(0.0, grid.last().copied().unwrap_or(0.0)));
    }
    for w in s.times.windows(2) {
        if w[1] - w[0] > limit {
            return Err(gap(w[0], w[1]));
        }
    }
    let (first, last) = (s.times[0], *s.times.last().unwrap());
    if first > tol {
        return Err(gap(0.0, first));
    }
    let mut out = Vec::with_capacity(grid.len());
    let mut j = 0;
    for &g in grid {
        if g > last + tol {
            return Err(gap(last, *grid.last().unwrap()));
        }
        while j + 1 < s.times.len() && s.times[j + 1] <= g + tol {
            j += 1;
        }
        let (ta, va) = (s.times[j], s.values[j]);
        if (g - ta).abs() <= tol || hold || j + 1 == s.times.len() {
            out.push(va);
        } else {
            let (tb, vb) = (s.times[j + 1], s.values[j + 1]);
            let frac = (g - ta) / (tb - ta);
            out.push(va + (vb - va) * frac);
        }
    }
    Ok(out)
}

/// Reads `path` and fills every channel per the column map and policy.
pub fn ingest_csv(
    path: &Path,
    map: &ColumnMap,
    policy: &ImputationPolicy,
    layout: Option<&BuildingLayout>,
) -> Result<IngestOutput> {
    let delta_t = parse_duration_hours(&map.delta_t)?;
    let k_all = map.rooms;
    if k_all == 0 {
        return Err(Error::validation("rooms", "need at least one room"));
    }
    if let Some(l) = layout {
        if l.k() != k_all {
            return Err(Error::Dimension {
                context: "column map rooms vs layout rooms".into(),
                expected: l.k(),
                got: k_all,
            });
        }
    }
    let (times, series) = read_columns(path, map)?;
    let span = *times.last().unwrap();
    let z = (span / delta_t + 1e-9).floor() as usize + 1;
    if z < 2 {
        return Err(Error::validation("sensor CSV", "covers less than two grid steps"));
    }
    let grid: Vec<f64> = (0..z).map(|n| n as f64 * delta_t).collect();

    let channel = |role: Role, what: &str| -> Result<Vec<f64>> {
        let s = series.get(&role).ok_or_else(|| {
            Error::validation(
                "columns",
                format!("policy takes {what} from a column, but none is mapped"),
            )
        })?;
        resample(s, &grid, delta_t, matches!(role, Role::HvacState(_)))
    };

    // Room temperatures decide which rooms survive.
    let mut rooms = Vec::new();
    let mut temps: Vec<Vec<f64>> = Vec::new();
    for i in 0..k_all {
        match (series.contains_key(&Role::RoomTemp(i)), &policy.missing_room_temp) {
            (true, _) => {
                rooms.push(i);
                temps.push(channel(Role::RoomTemp(i), "a room temperature")?);
            }
            (false, MissingRoom::Drop) => {
                log::info!("room {} has no temperature column and is dropped", i + 1);
            }
            (false, MissingRoom::Constant(v)) => {
                rooms.push(i);
                temps.push(vec![parse_temperature(v)?; z]);
            }
        }
    }
    if rooms.is_empty() {
        return Err(Error::validation("columns", "no room temperature column is mapped"));
    }
    let k = rooms.len();

    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let ambient = match &policy.ambient {
        AmbientSource::FromColumn => channel(Role::Ambient, "the ambient temperature")?,
        AmbientSource::Synthetic { mean, std } => {
            let normal = Normal::new(parse_temperature(mean)?, parse_interval(std)?)
                .map_err(|e| Error::validation("ambient.synthetic.std", e.to_string()))?;
            (0..z).map(|_| normal.sample(&mut rng)).collect()
        }
    };

    let mut hvac_state = DMatrix::<u8>::zeros(k, z);
    match &policy.hvac_state {
        HvacStateSource::AlwaysOff => {}
        HvacStateSource::FromColumn => {
            for (r, &i) in rooms.iter().enumerate() {
                let values = channel(Role::HvacState(i), "the HVAC state")?;
                for (t, v) in values.iter().enumerate() {
                    hvac_state[(r, t)] = match *v {
                        v if v == 0.0 => 0,
                        v if v == 1.0 => 1,
                        other => {
                            return Err(Error::validation(
                                "hvac_state",
                                format!("room {} has non-binary value {other}", i + 1),
                            ))
                        }
                    };
                }
            }
        }
        HvacStateSource::ManualWindows(windows) => {
            for w in windows {
                let Some(r) = rooms.iter().position(|&i| i + 1 == w.room) else {
                    return Err(Error::validation(
                        "hvac_state.manual_windows",
                        format!("room {} is not in the trace", w.room),
                    ));
                };
                if w.start >= w.end || w.end > z {
                    return Err(Error::validation(
                        "hvac_state.manual_windows",
                        format!("window [{}, {}) does not fit in 0..{z}", w.start, w.end),
                    ));
                }
                for t in w.start..w.end {
                    hvac_state[(r, t)] = 1;
                }
            }
        }
    }

    let mut hvac_temp = DMatrix::zeros(k, z);
    match &policy.hvac_temp {
        HvacTempSource::Constant(v) => hvac_temp.fill(parse_temperature(v)?),
        HvacTempSource::FromColumn => {
            for (r, &i) in rooms.iter().enumerate() {
                let values = channel(Role::HvacTemp(i), "the HVAC supply temperature")?;
                for (t, v) in values.into_iter().enumerate() {
                    hvac_temp[(r, t)] = v;
                }
            }
        }
    }

    let trace = SensorTrace {
        temps_meas: DMatrix::from_fn(k, z, |r, t| temps[r][t]),
        ambient_meas: ambient,
        hvac_temp_meas: hvac_temp,
        hvac_state,
        delta_t,
    };
    trace.validate()?;
    let layout = match layout {
        Some(l) if rooms.len() == l.k() => Some(l.clone()),
        Some(l) => Some(l.restrict(&rooms)?),
        None => None,
    };
    Ok(IngestOutput {
        trace,
        rooms,
        layout,
    })
}

/// Column map matching the simulator's `sensors.csv` for `k` rooms.
pub fn sensors_column_map(k: usize, delta_t_hours: f64) -> ColumnMap {
    let mut columns = BTreeMap::new();
    let kelvin = |role: String| ColumnBinding {
        role,
        unit: Some("K".into()),
    };
    columns.insert("T_ext_meas_K".to_string(), kelvin("ambient".into()));
    for i in 1..=k {
        columns.insert(format!("T_meas_{i}_K"), kelvin(format!("room_temp[{i}]")));
        columns.insert(format!("Thvac_meas_{i}_K"), kelvin(format!("hvac_temp[{i}]")));
        columns.insert(
            format!("u_{i}"),
            ColumnBinding {
                role: format!("hvac_state[{i}]"),
                unit: None,
            },
        );
    }
    ColumnMap {
        delta_t: format!("{delta_t_hours:?} h"),
        rooms: k,
        time: TimeColumn {
            header: "t_hours".into(),
            format: None,
            unit: Some("h".into()),
        },
        columns,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_sensors;
    use crate::model::{default_paper_scenario, NoiseModel};
    use crate::simulator::{add_sensor_noise, simulate};
    use proptest::prelude::*;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn one_room_map(delta: &str) -> ColumnMap {
        toml::from_str(&format!(
            r#"
            delta_t = "{delta}"
            rooms = 1
            [time]
            header = "minutes"
            unit = "min"
            [columns]
            temp = {{ role = "room_temp[1]", unit = "F" }}
            "#
        ))
        .unwrap()
    }

    fn off_policy() -> ImputationPolicy {
        toml::from_str(
            r#"
            seed = 3
            ambient = { synthetic = { mean = "55 F", std = "2 F" } }
            hvac_state = "always_off"
            hvac_temp = { constant = "55 F" }
            "#,
        )
        .unwrap()
    }

    #[test]
    fn simulator_output_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = default_paper_scenario();
        let trace = simulate(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let s = add_sensor_noise(&trace, 0.1, NoiseModel::Reading, &mut ChaCha8Rng::seed_from_u64(6))
            .unwrap();
        let path = dir.path().join("sensors.csv");
        write_sensors(&path, &s).unwrap();
        let map = sensors_column_map(16, s.delta_t);
        let out = ingest_csv(&path, &map, &ImputationPolicy::default(), Some(&cfg.layout)).unwrap();
        assert_eq!(out.trace.hvac_state, s.hvac_state);
        assert_eq!(out.trace.steps(), 600);
        assert_eq!(out.rooms, (0..16).collect::<Vec<_>>());
        for (a, b) in out.trace.temps_meas.iter().zip(s.temps_meas.iter()) {
            assert!((a - b).abs() <= 1e-9);
        }
        for (a, b) in out.trace.ambient_meas.iter().zip(&s.ambient_meas) {
            assert!((a - b).abs() <= 1e-9);
        }
        for (a, b) in out.trace.hvac_temp_meas.iter().zip(s.hvac_temp_meas.iter()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn interpolates_and_holds() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write(
            dir.path(),
            "a.csv",
            "minutes,temp,ac\n0,70,0\n2,72,1\n4,71,\n6,75,0\n",
        );
        let mut map = one_room_map("1 min");
        map.columns.insert(
            "ac".into(),
            ColumnBinding {
                role: "hvac_state[1]".into(),
                unit: None,
            },
        );
        let mut policy = off_policy();
        policy.hvac_state = HvacStateSource::FromColumn;
        let out = ingest_csv(&csv, &map, &policy, None).unwrap();
        let f: Vec<f64> = out
            .trace
            .temps_meas
            .iter()
            .map(|&k| convert_temperature(k, TempUnit::Kelvin, TempUnit::Fahrenheit))
            .collect();
        let expect = [70.0, 71.0, 72.0, 71.5, 71.0, 73.0, 75.0];
        for (a, b) in f.iter().zip(expect) {
            assert!((a - b).abs() < 1e-9, "{f:?}");
        }
        let u: Vec<u8> = out.trace.hvac_state.iter().copied().collect();
        assert_eq!(u, vec![0, 0, 1, 1, 1, 1, 0]);
        assert!((out.trace.delta_t - 1.0 / 60.0).abs() < 1e-15);
    }

    #[test]
    fn gap_is_refused_with_range() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write(dir.path(), "g.csv", "minutes,temp\n0,70\n3,70\n6,71\n30,72\n33,72\n");
        match ingest_csv(&csv, &one_room_map("3 min"), &off_policy(), None) {
            Err(Error::Gap {
                column,
                start_step,
                end_step,
                ..
            }) => {
                assert_eq!(column, "temp");
                assert_eq!((start_step, end_step), (3, 9));
            }
            other => panic!("expected a gap error, got {other:?}"),
        }
    }

    #[test]
    fn exactly_five_steps_is_allowed() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write(dir.path(), "g.csv", "minutes,temp\n0,70\n15,75\n");
        let out = ingest_csv(&csv, &one_room_map("3 min"), &off_policy(), None).unwrap();
        assert_eq!(out.trace.steps(), 6);
    }

    #[test]
    fn input_errors() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write(dir.path(), "b.csv", "minutes,temp\n0,70\n0,71\n");
        assert!(ingest_csv(&csv, &one_room_map("1 min"), &off_policy(), None).is_err());
        let csv = write(dir.path(), "c.csv", "minutes,temp\n0,70\n");
        assert!(ingest_csv(&csv, &one_room_map("1 min"), &off_policy(), None).is_err());
        let csv = write(dir.path(), "d.csv", "minutes,temp\n0,70\n1,71\n");
        let mut map = one_room_map("1 min");
        map.columns.get_mut("temp").unwrap().unit = None;
        let err = ingest_csv(&csv, &map, &off_policy(), None).unwrap_err();
        assert!(err.to_string().contains("unit"), "{err}");
        let mut policy = off_policy();
        policy.ambient = AmbientSource::FromColumn;
        assert!(ingest_csv(&csv, &one_room_map("1 min"), &policy, None).is_err());
    }

    #[test]
    fn clock_times() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write(dir.path(), "t.csv", "time,temp\n09:00,70\n09:03,71\n09:06,72\n");
        let mut map = one_room_map("3 min");
        map.time = TimeColumn {
            header: "time".into(),
            format: Some("%H:%M".into()),
            unit: None,
        };
        let out = ingest_csv(&csv, &map, &off_policy(), None).unwrap();
        assert_eq!(out.trace.steps(), 3);
    }

    #[test]
    fn dropped_rooms_shrink_the_layout() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write(dir.path(), "r.csv", "minutes,a,b\n0,70,71\n1,70,71\n2,70,72\n");
        let map: ColumnMap = toml::from_str(
            r#"
            delta_t = "1 min"
            rooms = 3
            [time]
            header = "minutes"
            unit = "min"
            [columns]
            a = { role = "room_temp[1]", unit = "F" }
            b = { role = "room_temp[3]", unit = "F" }
            "#,
        )
        .unwrap();
        let layout = BuildingLayout::from_edges(
            3,
            &[(0, 1), (1, 2), (0, 2)],
            vec![true; 3],
            vec![crate::model::RoomClass::Office; 3],
            vec![1.0; 3],
        )
        .unwrap();
        let out = ingest_csv(&csv, &map, &off_policy(), Some(&layout)).unwrap();
        assert_eq!(out.rooms, vec![0, 2]);
        let l = out.layout.unwrap();
        assert_eq!(l.k(), 2);
        assert_eq!(l.edges(), vec![(0, 1)]);

        let mut policy = off_policy();
        policy.missing_room_temp = MissingRoom::Constant("72 F".into());
        let out = ingest_csv(&csv, &map, &policy, Some(&layout)).unwrap();
        assert_eq!(out.rooms, vec![0, 1, 2]);
    }

    proptest! {
        #[test]
        fn grid_is_uniform_and_bounded(
            steps in prop::collection::vec(1u32..5, 3..30),
            values in prop::collection::vec(60.0f64..90.0, 30),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let mut text = String::from("minutes,temp\n");
            let mut t = 0u32;
            for (n, s) in steps.iter().enumerate() {
                text.push_str(&format!("{t},{}\n", values[n]));
                t += s;
            }
            let csv = write(dir.path(), "p.csv", &text);
            let out = ingest_csv(&csv, &one_room_map("1 min"), &off_policy(), None).unwrap();
            let dt = out.trace.delta_t;
            prop_assert!((dt - 1.0 / 60.0).abs() < 1e-12);
            let lo = values[..steps.len()].iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values[..steps.len()].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in out.trace.temps_meas.iter() {
                let f = convert_temperature(*v, TempUnit::Kelvin, TempUnit::Fahrenheit);
                prop_assert!(f >= lo - 1e-9 && f <= hi + 1e-9);
            }
            prop_assert!(out.trace.hvac_state.iter().all(|&u| u <= 1));
        }
    }
}
