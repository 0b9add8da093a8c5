//! Scenario files.
//!
//! A scenario is a TOML document with three tables:
//!
//! ```toml
//! [layout]
//! grid = [4, 4]                 # or: rooms = 3 and edges = [[1, 2], [2, 3]]
//! sealed = [6, 7, 10, 11]       # rooms without ambient exposure (1-based)
//! classes = { big_conference = [1], small_conference = [16] }   # others are offices
//! weights = { big_conference = 5.0, small_conference = 3.0, office = 1.0 }
//!
//! [thermal]
//! alpha = 0.1
//! t_min = "70 F"                # absolute temperatures carry a unit suffix
//! delta_t = "1 min"             # or hours as a bare number
//! t_hvac = { big_conference = "50 F", office = "55 F" }
//!
//! [scenario]
//! n_people = 45
//! ambient = { kind = "synthetic", mean = "85 F", std = "4.33 F" }
//! ```
//!
//! Standard deviations written with a unit are temperature intervals, so
//! `"4.33 F"` means 4.33 * 5/9 K.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    paper_class_weight, paper_supply_temperature, AmbientProfile, BuildingLayout, NoiseModel,
    RoomClass, ScenarioConfig, ThermalParams,
};
use crate::units::{format_kelvin, parse_interval, parse_temperature, TempUnit};

/// The bundled default scenario.
pub const PAPER_CFG: &str = include_str!("../presets/paper.cfg");

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    layout: RawLayout,
    thermal: RawThermal,
    scenario: RawRun,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayout {
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rooms: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<[usize; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sealed: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    classes: BTreeMap<RoomClass, Vec<usize>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    weights: BTreeMap<RoomClass, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    room_weights: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Duration {
    Hours(f64),
    Text(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum SupplyAir {
    PerClass(BTreeMap<RoomClass, String>),
    PerRoom(Vec<String>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThermal {
    alpha: f64,
    beta: f64,
    omega: f64,
    gamma: f64,
    phi: f64,
    t_min: String,
    t_max: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_hvac: Option<SupplyAir>,
    delta_t: Duration,
    q_mean: f64,
    q_std: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    n_people: usize,
    horizon_steps: usize,
    time_range_steps: usize,
    noise_std: f64,
    #[serde(default)]
    noise_model: NoiseModel,
    #[serde(default)]
    seed: u64,
    ambient: RawAmbient,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawAmbient {
    Synthetic {
        mean: String,
        std: String,
        #[serde(default = "default_smoothing")]
        smoothing_window: usize,
    },
    File {
        path: PathBuf,
        unit: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        column: Option<String>,
    },
}

fn default_smoothing() -> usize {
    5
}

/// Parses `"1 min"`, `"0.5 h"`, `"30 s"` into hours.
pub fn parse_duration_hours(text: &str) -> Result<f64> {
    let text = text.trim();
    let split = text
        .find(|c: char| c.is_ascii_alphabetic())
        .ok_or_else(|| Error::parse("duration", format!("`{text}` has no unit (h, min, s)")))?;
    let (num, unit) = text.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|e| Error::parse("duration", format!("`{text}`: {e}")))?;
    match unit.trim() {
        "h" | "hour" | "hours" => Ok(value),
        "min" | "minute" | "minutes" => Ok(value / 60.0),
        "s" | "sec" | "seconds" => Ok(value / 3600.0),
        other => Err(Error::parse("duration", format!("unknown unit `{other}`"))),
    }
}

fn one_based(list: &[usize], k: usize, field: &str) -> Result<Vec<usize>> {
    list.iter()
        .map(|&r| {
            if r == 0 || r > k {
                Err(Error::validation(
                    field,
                    format!("room {r} is outside 1..={k}"),
                ))
            } else {
                Ok(r - 1)
            }
        })
        .collect()
}

fn build_layout(raw: &RawLayout) -> Result<(BuildingLayout, Vec<RoomClass>)> {
    let k = match (raw.grid, raw.rooms) {
        (Some([r, c]), None) => r * c,
        (None, Some(k)) => k,
        (Some(_), Some(_)) => {
            return Err(Error::validation(
                "layout",
                "give either `grid` or `rooms`, not both",
            ))
        }
        (None, None) => return Err(Error::validation("layout", "missing `grid` or `rooms`")),
    };
    if k == 0 {
        return Err(Error::validation("layout", "need at least one room"));
    }
    let mut classes = vec![RoomClass::Office; k];
    for (class, rooms) in &raw.classes {
        for i in one_based(rooms, k, "layout.classes")? {
            classes[i] = *class;
        }
    }
    let weights = match &raw.room_weights {
        Some(w) => w.clone(),
        None => classes
            .iter()
            .map(|c| raw.weights.get(c).copied().unwrap_or_else(|| paper_class_weight(*c)))
            .collect(),
    };
    let mut layout = match raw.grid {
        Some([r, c]) => {
            if raw.edges.is_some() {
                return Err(Error::validation(
                    "layout.edges",
                    "edges cannot be combined with `grid`",
                ));
            }
            BuildingLayout::grid(r, c, classes.clone(), weights)?
        }
        None => {
            let edges = raw
                .edges
                .as_deref()
                .unwrap_or_default()
                .iter()
                .map(|&[a, b]| {
                    let v = one_based(&[a, b], k, "layout.edges")?;
                    Ok((v[0], v[1]))
                })
                .collect::<Result<Vec<_>>>()?;
            BuildingLayout::from_edges(k, &edges, vec![true; k], classes.clone(), weights)?
        }
    };
    if let Some(sealed) = &raw.sealed {
        let sealed = one_based(sealed, k, "layout.sealed")?;
        let exposed = (0..k).map(|i| !sealed.contains(&i)).collect();
        layout = layout.with_ambient_exposed(exposed)?;
    }
    Ok((layout, classes))
}

fn build_thermal(raw: &RawThermal, classes: &[RoomClass]) -> Result<ThermalParams> {
    let t_hvac = match &raw.t_hvac {
        None => classes.iter().map(|&c| paper_supply_temperature(c)).collect(),
        Some(SupplyAir::PerClass(map)) => classes
            .iter()
            .map(|c| match map.get(c) {
                Some(s) => parse_temperature(s),
                None => Ok(paper_supply_temperature(*c)),
            })
            .collect::<Result<Vec<_>>>()?,
        Some(SupplyAir::PerRoom(list)) => list
            .iter()
            .map(|s| parse_temperature(s))
            .collect::<Result<Vec<_>>>()?,
    };
    let delta_t = match &raw.delta_t {
        Duration::Hours(h) => *h,
        Duration::Text(t) => parse_duration_hours(t)?,
    };
    Ok(ThermalParams {
        alpha: raw.alpha,
        beta: raw.beta,
        omega: raw.omega,
        gamma: raw.gamma,
        phi: raw.phi,
        t_hvac,
        t_min: parse_temperature(&raw.t_min)?,
        t_max: parse_temperature(&raw.t_max)?,
        delta_t,
        q_mean: raw.q_mean,
        q_std: raw.q_std,
    })
}

/// Parses and validates a scenario. Relative ambient file paths resolve
/// against `base_dir`.
pub fn parse_scenario(text: &str, base_dir: Option<&Path>) -> Result<ScenarioConfig> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| Error::parse("scenario", e))?;
    let (layout, classes) = build_layout(&raw.layout)?;
    let params = build_thermal(&raw.thermal, &classes)?;
    let ambient_profile = match raw.scenario.ambient {
        RawAmbient::Synthetic {
            mean,
            std,
            smoothing_window,
        } => AmbientProfile::Synthetic {
            mean: parse_temperature(&mean)?,
            std: parse_interval(&std)?,
            smoothing_window,
        },
        RawAmbient::File { path, unit, column } => {
            let path = match base_dir {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path,
            };
            AmbientProfile::File {
                path,
                unit: unit.parse()?,
                column,
            }
        }
    };
    let cfg = ScenarioConfig {
        layout,
        params,
        n_people: raw.scenario.n_people,
        horizon_steps: raw.scenario.horizon_steps,
        time_range_steps: raw.scenario.time_range_steps,
        ambient_profile,
        noise_std: raw.scenario.noise_std,
        noise_model: raw.scenario.noise_model,
        seed: raw.scenario.seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a scenario file. The name `paper` (or `paper.cfg` when no such file
/// exists) selects the bundled defaults.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    if !path.exists() && matches!(path.to_str(), Some("paper") | Some("paper.cfg")) {
        return parse_scenario(PAPER_CFG, None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text, path.parent())
}

/// Serialises a scenario to the same TOML dialect [`parse_scenario`] reads.
pub fn scenario_to_string(cfg: &ScenarioConfig) -> String {
    let layout = &cfg.layout;
    let k = layout.k();
    let mut raw_layout = RawLayout::default();
    match layout.grid_shape() {
        Some((r, c)) => raw_layout.grid = Some([r, c]),
        None => {
            raw_layout.rooms = Some(k);
            raw_layout.edges = Some(layout.edges().iter().map(|&(a, b)| [a + 1, b + 1]).collect());
        }
    }
    raw_layout.sealed = Some(
        (0..k)
            .filter(|&i| !layout.ambient_exposed()[i])
            .map(|i| i + 1)
            .collect(),
    );
    for (i, class) in layout.room_class().iter().enumerate() {
        if *class != RoomClass::Office {
            raw_layout.classes.entry(*class).or_default().push(i + 1);
        }
    }
    // One weight and supply temperature per class when the rooms agree,
    // otherwise fall back to per-room lists.
    let per_class = |values: &[f64]| -> Option<BTreeMap<RoomClass, f64>> {
        let mut map = BTreeMap::new();
        for (class, v) in layout.room_class().iter().zip(values) {
            if *map.entry(*class).or_insert(*v) != *v {
                return None;
            }
        }
        Some(map)
    };
    match per_class(layout.weights()) {
        Some(map) => raw_layout.weights = map,
        None => raw_layout.room_weights = Some(layout.weights().to_vec()),
    }
    let p = &cfg.params;
    let t_hvac = match per_class(&p.t_hvac) {
        Some(map) => SupplyAir::PerClass(map.into_iter().map(|(c, v)| (c, format_kelvin(v))).collect()),
        None => SupplyAir::PerRoom(p.t_hvac.iter().map(|&v| format_kelvin(v)).collect()),
    };
    let raw = RawScenario {
        layout: raw_layout,
        thermal: RawThermal {
            alpha: p.alpha,
            beta: p.beta,
            omega: p.omega,
            gamma: p.gamma,
            phi: p.phi,
            t_min: format_kelvin(p.t_min),
            t_max: format_kelvin(p.t_max),
            t_hvac: Some(t_hvac),
            delta_t: Duration::Hours(p.delta_t),
            q_mean: p.q_mean,
            q_std: p.q_std,
        },
        scenario: RawRun {
            n_people: cfg.n_people,
            horizon_steps: cfg.horizon_steps,
            time_range_steps: cfg.time_range_steps,
            noise_std: cfg.noise_std,
            noise_model: cfg.noise_model,
            seed: cfg.seed,
            ambient: match &cfg.ambient_profile {
                AmbientProfile::Synthetic {
                    mean,
                    std,
                    smoothing_window,
                } => RawAmbient::Synthetic {
                    mean: format_kelvin(*mean),
                    std: format_kelvin(*std),
                    smoothing_window: *smoothing_window,
                },
                AmbientProfile::File { path, unit, column } => RawAmbient::File {
                    path: path.clone(),
                    unit: unit.tag().to_string(),
                    column: column.clone(),
                },
            },
        },
    };
    toml::to_string(&raw).expect("scenario serialises")
}

pub fn save_scenario(cfg: &ScenarioConfig, path: &Path) -> Result<()> {
    std::fs::write(path, scenario_to_string(cfg)).map_err(|e| Error::io(path, e))
}

/// Unit tag helper used by other file formats.
pub(crate) fn parse_unit(tag: Option<&str>, column: &str) -> Result<TempUnit> {
    match tag {
        Some(t) => t.parse(),
        None => Err(Error::validation(
            column,
            "temperature column has no unit annotation (K, F or C)",
        )),
    }
}
