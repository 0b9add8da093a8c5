//! Forward simulation of the room heat balance.
//!
//! Each room follows the explicit Euler update
//!
//! ```text
//! T_i(t+1) = T_i(t) + dt * [ alpha * a_i * (T_ext - T_i)
//!                          + beta * sum_j (T_j - T_i)
//!                          + omega
//!                          + gamma * 3600 * Q_mob_i
//!                          + phi * (T_hvac_i - T_i) * u_i ]
//! ```
//!
//! with `a_i` the ambient-exposure indicator, `Q_mob_i` in Watts and a
//! bang-bang controller deciding `u_i`.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AmbientProfile, BuildingLayout, NoiseModel, ScenarioConfig, ThermalParams, SECONDS_PER_HOUR,
};
use crate::units::{convert_temperature, TempUnit};

/// Room occupancy over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancySchedule {
    /// Occupant counts, `(room, step)`.
    pub n: DMatrix<u32>,
    /// Emitted power of each person in Watts, fixed for the whole horizon.
    pub per_person_power: Vec<f64>,
    /// Room of every person in every time-range window, `[window][person]`.
    pub assignments: Vec<Vec<usize>>,
    pub time_range_steps: usize,
}

impl OccupancySchedule {
    pub fn k(&self) -> usize {
        self.n.nrows()
    }

    pub fn steps(&self) -> usize {
        self.n.ncols()
    }

    /// Per-room occupant heat in Watts, summed person by person.
    pub fn mob_heat(&self) -> DMatrix<f64> {
        let (k, z) = self.n.shape();
        let mut heat = DMatrix::zeros(k, z);
        for (w, rooms) in self.assignments.iter().enumerate() {
            let mut per_room = vec![0.0; k];
            for (person, &room) in rooms.iter().enumerate() {
                per_room[room] += self.per_person_power[person];
            }
            let start = w * self.time_range_steps;
            for t in start..(start + self.time_range_steps).min(z) {
                for (i, q) in per_room.iter().enumerate() {
                    heat[(i, t)] = *q;
                }
            }
        }
        heat
    }
}

/// Ground truth of one simulated day.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    /// Room temperatures in K, `(room, step)`.
    pub temps: DMatrix<f64>,
    /// Ambient temperature in K.
    pub ambient: Vec<f64>,
    /// Controller state, `(room, step)`.
    pub hvac_state: DMatrix<u8>,
    /// Supply-air temperature per room, K (constant in time).
    pub t_hvac: Vec<f64>,
    /// Occupant heat in W, `(room, step)`.
    pub mob_heat: DMatrix<f64>,
    pub schedule: OccupancySchedule,
    pub delta_t: f64,
}

impl SimulationTrace {
    pub fn k(&self) -> usize {
        self.temps.nrows()
    }

    pub fn steps(&self) -> usize {
        self.temps.ncols()
    }
}

/// What the estimator gets to see: noisy temperatures and exact controller states.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorTrace {
    pub temps_meas: DMatrix<f64>,
    pub ambient_meas: Vec<f64>,
    pub hvac_temp_meas: DMatrix<f64>,
    pub hvac_state: DMatrix<u8>,
    pub delta_t: f64,
}

impl SensorTrace {
    pub fn k(&self) -> usize {
        self.temps_meas.nrows()
    }

    pub fn steps(&self) -> usize {
        self.temps_meas.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (k, z) = self.temps_meas.shape();
        if self.ambient_meas.len() != z {
            return Err(Error::Dimension {
                context: "ambient measurements".into(),
                expected: z,
                got: self.ambient_meas.len(),
            });
        }
        for (name, shape) in [
            ("HVAC supply measurements", self.hvac_temp_meas.shape()),
            ("HVAC states", self.hvac_state.shape()),
        ] {
            if shape != (k, z) {
                return Err(Error::Dimension {
                    context: name.into(),
                    expected: k * z,
                    got: shape.0 * shape.1,
                });
            }
        }
        if self.hvac_state.iter().any(|&u| u > 1) {
            return Err(Error::validation("hvac_state", "values must be 0 or 1"));
        }
        if !(self.delta_t.is_finite() && self.delta_t > 0.0) {
            return Err(Error::validation("delta_t", "must be > 0"));
        }
        Ok(())
    }
}

fn read_profile(path: &Path, column: Option<&str>) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse("ambient profile", format!("{other:?}")),
        })?;
    let headers = reader.headers()?.clone();
    let idx = match column {
        Some(name) => headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::validation("scenario.ambient.column", format!("no column `{name}`"))
        })?,
        None => 0,
    };
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        let cell = record.get(idx).unwrap_or("");
        let v: f64 = cell
            .parse()
            .map_err(|_| Error::parse("ambient profile", format!("bad number `{cell}`")))?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("ambient profile {}", path.display())));
        }
        values.push(v);
    }
    if values.len() < 2 {
        return Err(Error::validation(
            "scenario.ambient",
            format!("profile {} needs at least 2 points", path.display()),
        ));
    }
    Ok(values)
}

/// Linear resampling of `values` onto `n` evenly spaced points spanning the
/// same interval.
pub fn resample_linear(values: &[f64], n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![values[0]];
    }
    let last = (values.len() - 1) as f64;
    (0..n)
        .map(|j| {
            let pos = j as f64 * last / (n - 1) as f64;
            let lo = (pos.floor() as usize).min(values.len() - 2);
            let frac = pos - lo as f64;
            let (a, b) = (values[lo], values[lo + 1]);
            if a == b {
                a
            } else {
                a + (b - a) * frac
            }
        })
        .collect()
}

/// Centred moving average; windows are truncated at the series ends.
pub fn centered_moving_average(values: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    (0..values.len())
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + width - half).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Ambient temperature for every step, in K.
pub fn generate_ambient<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Vec<f64>> {
    let z = cfg.horizon_steps;
    match &cfg.ambient_profile {
        AmbientProfile::File { path, unit, column } => {
            let raw = read_profile(path, column.as_deref())?;
            let kelvin: Vec<f64> = raw
                .iter()
                .map(|&v| convert_temperature(v, *unit, TempUnit::Kelvin))
                .collect();
            Ok(resample_linear(&kelvin, z))
        }
        AmbientProfile::Synthetic {
            mean,
            std,
            smoothing_window,
        } => {
            if *std == 0.0 {
                return Ok(vec![*mean; z]);
            }
            let normal = Normal::new(*mean, *std)
                .map_err(|e| Error::validation("scenario.ambient.std", e.to_string()))?;
            let raw: Vec<f64> = (0..z).map(|_| normal.sample(rng)).collect();
            let smoothed = centered_moving_average(&raw, *smoothing_window);
            if smoothed.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("synthetic ambient".into()));
            }
            Ok(smoothed)
        }
    }
}

/// Draws per-person emissions once, then an independent room for every person
/// at the start of every time-range window.
pub fn generate_schedule<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<OccupancySchedule> {
    let k = cfg.k();
    let z = cfg.horizon_steps;
    let tr = cfg.time_range_steps;
    let n_people = cfg.n_people;
    let p = &cfg.params;

    let q_dist = Normal::new(p.q_mean, p.q_std)
        .map_err(|e| Error::validation("thermal.q_std", e.to_string()))?;
    let per_person_power: Vec<f64> = (0..n_people).map(|_| q_dist.sample(rng)).collect();

    let placement = rand::distr::weighted::WeightedIndex::new(cfg.layout.weights())
        .map_err(|e| Error::validation("layout.weights", e.to_string()))?;
    let windows = z.div_ceil(tr);
    let mut n = DMatrix::<u32>::zeros(k, z);
    let mut assignments = Vec::with_capacity(windows);
    for w in 0..windows {
        let rooms: Vec<usize> = (0..n_people).map(|_| placement.sample(rng)).collect();
        let mut counts = vec![0u32; k];
        for &room in &rooms {
            counts[room] += 1;
        }
        for t in w * tr..((w + 1) * tr).min(z) {
            for (i, &c) in counts.iter().enumerate() {
                n[(i, t)] = c;
            }
        }
        assignments.push(rooms);
    }
    Ok(OccupancySchedule {
        n,
        per_person_power,
        assignments,
        time_range_steps: tr,
    })
}

/// One explicit Euler step of the heat balance. `mob_heat` is in Watts.
pub fn step_temperature(
    temps: &[f64],
    t_ext: f64,
    hvac_state: &[u8],
    mob_heat: &[f64],
    params: &ThermalParams,
    layout: &BuildingLayout,
) -> Result<Vec<f64>> {
    let k = layout.k();
    for (context, len) in [
        ("room temperatures", temps.len()),
        ("HVAC states", hvac_state.len()),
        ("occupant heat", mob_heat.len()),
        ("supply temperatures", params.t_hvac.len()),
    ] {
        if len != k {
            return Err(Error::Dimension {
                context: context.into(),
                expected: k,
                got: len,
            });
        }
    }
    let exposed = layout.ambient_exposed();
    Ok((0..k)
        .map(|i| {
            let ti = temps[i];
            let mut rate = params.beta * layout.neighbor_gradient(temps, i)
                + params.omega
                + params.gamma * mob_heat[i] * SECONDS_PER_HOUR;
            if exposed[i] {
                rate += params.alpha * (t_ext - ti);
            }
            if hvac_state[i] == 1 {
                rate += params.phi * (params.t_hvac[i] - ti);
            }
            ti + params.delta_t * rate
        })
        .collect())
}

/// Bang-bang controller with hysteresis between the setpoints.
pub fn controller_update(temp: f64, previous: u8, params: &ThermalParams) -> u8 {
    if temp >= params.t_max {
        1
    } else if temp <= params.t_min {
        0
    } else {
        previous
    }
}

/// Simulates the whole horizon. Ambient, schedule and initial temperatures are
/// drawn from `rng` in that order.
pub fn simulate<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<SimulationTrace> {
    cfg.validate()?;
    let k = cfg.k();
    let z = cfg.horizon_steps;
    let p = &cfg.params;

    let ambient = generate_ambient(cfg, rng)?;
    let schedule = generate_schedule(cfg, rng)?;
    let mob_heat = schedule.mob_heat();

    let initial = Uniform::new_inclusive(p.t_min, p.t_max)
        .map_err(|e| Error::validation("thermal.t_min/t_max", e.to_string()))?;
    let mut current: Vec<f64> = (0..k).map(|_| initial.sample(rng)).collect();

    let mut temps = DMatrix::zeros(k, z);
    let mut hvac_state = DMatrix::<u8>::zeros(k, z);
    let mut u = vec![0u8; k];
    for t in 0..z {
        for i in 0..k {
            temps[(i, t)] = current[i];
            u[i] = controller_update(current[i], u[i], p);
            hvac_state[(i, t)] = u[i];
        }
        if t + 1 == z {
            break;
        }
        let heat: Vec<f64> = mob_heat.column(t).iter().copied().collect();
        current = step_temperature(&current, ambient[t], &u, &heat, p, &cfg.layout)?;
        if let Some(room) = current.iter().position(|v| !v.is_finite()) {
            return Err(Error::Unstable { step: t + 1, room: room + 1 });
        }
    }

    Ok(SimulationTrace {
        temps,
        ambient,
        hvac_state,
        t_hvac: p.t_hvac.clone(),
        mob_heat,
        schedule,
        delta_t: p.delta_t,
    })
}

/// Stats of the simulated temperatures, used by the CLI summary.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceSummary {
    pub min_temp: f64,
    pub max_temp: f64,
    pub on_fraction: f64,
}

pub fn summarize(trace: &SimulationTrace) -> TraceSummary {
    let min_temp = trace.temps.iter().copied().fold(f64::INFINITY, f64::min);
    let max_temp = trace.temps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let on = trace.hvac_state.iter().filter(|&&u| u == 1).count();
    TraceSummary {
        min_temp,
        max_temp,
        on_fraction: on as f64 / trace.hvac_state.len().max(1) as f64,
    }
}

/// Turns ground truth into sensor readings.
///
/// Per step the draws are taken in the order ambient, rooms, supply air, so a
/// fixed seed gives identical readings regardless of the noise level. Under
/// [`NoiseModel::Rate`] a reading carries the accumulated increments of the
/// previous steps, which leaves the step-0 reading exact. `hvac_state` is
/// copied untouched.
pub fn add_sensor_noise<R: Rng + ?Sized>(
    trace: &SimulationTrace,
    eta_std: f64,
    model: NoiseModel,
    rng: &mut R,
) -> Result<SensorTrace> {
    if !(eta_std.is_finite() && eta_std >= 0.0) {
        return Err(Error::validation("noise_std", format!("must be >= 0, got {eta_std}")));
    }
    let k = trace.k();
    let z = trace.steps();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let scale = match model {
        NoiseModel::Reading => eta_std,
        NoiseModel::Rate => eta_std * trace.delta_t,
    };

    let mut ambient_meas = trace.ambient.clone();
    let mut temps_meas = trace.temps.clone();
    let mut hvac_temp_meas = DMatrix::from_fn(k, z, |i, _| trace.t_hvac[i]);
    if eta_std == 0.0 {
        return Ok(SensorTrace {
            temps_meas,
            ambient_meas,
            hvac_temp_meas,
            hvac_state: trace.hvac_state.clone(),
            delta_t: trace.delta_t,
        });
    }

    let mut drift_ext = 0.0;
    let mut drift_room = vec![0.0; k];
    let mut drift_hvac = vec![0.0; k];
    for t in 0..z {
        let e: f64 = normal.sample(rng) * scale;
        let rooms: Vec<f64> = (0..k).map(|_| normal.sample(rng) * scale).collect();
        let hvac: Vec<f64> = (0..k).map(|_| normal.sample(rng) * scale).collect();
        match model {
            NoiseModel::Reading => {
                ambient_meas[t] += e;
                for i in 0..k {
                    temps_meas[(i, t)] += rooms[i];
                    hvac_temp_meas[(i, t)] += hvac[i];
                }
            }
            NoiseModel::Rate => {
                ambient_meas[t] += drift_ext;
                drift_ext += e;
                for i in 0..k {
                    temps_meas[(i, t)] += drift_room[i];
                    hvac_temp_meas[(i, t)] += drift_hvac[i];
                    drift_room[i] += rooms[i];
                    drift_hvac[i] += hvac[i];
                }
            }
        }
    }
    Ok(SensorTrace {
        temps_meas,
        ambient_meas,
        hvac_temp_meas,
        hvac_state: trace.hvac_state.clone(),
        delta_t: trace.delta_t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{default_paper_scenario, RoomClass};
    use crate::units::fahrenheit;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn single_room(exposed: bool) -> BuildingLayout {
        BuildingLayout::from_edges(1, &[], vec![exposed], vec![RoomClass::Office], vec![1.0])
            .unwrap()
    }

    #[test]
    fn only_internal_gain_survives() {
        let params = default_paper_scenario().params;
        let params = ThermalParams {
            t_hvac: vec![params.t_hvac[1]],
            ..params
        };
        let t = 300.0;
        let next = step_temperature(&[t], t, &[0], &[0.0], &params, &single_room(true)).unwrap();
        assert_abs_diff_eq!(next[0] - t, 1.36 / 60.0, epsilon = 1e-12);
        assert_abs_diff_eq!(next[0] - t, 0.02267, epsilon = 1e-5);
    }

    #[test]
    fn equal_neighbours_stay_put() {
        let layout = BuildingLayout::from_edges(
            2,
            &[(0, 1)],
            vec![false, false],
            vec![RoomClass::Office; 2],
            vec![1.0; 2],
        )
        .unwrap();
        let mut params = default_paper_scenario().params;
        params.omega = 0.0;
        params.t_hvac.truncate(2);
        let next =
            step_temperature(&[297.0, 297.0], 310.0, &[0, 0], &[0.0, 0.0], &params, &layout)
                .unwrap();
        assert_eq!(next, vec![297.0, 297.0]);
    }

    #[test]
    fn cooling_step_by_hand() {
        // 80 F room, AC on with 55 F supply, 85 F outside, one 110 W occupant.
        let params = ThermalParams {
            t_hvac: vec![fahrenheit(55.0)],
            ..default_paper_scenario().params
        };
        let t = fahrenheit(80.0);
        let next = step_temperature(
            &[t],
            fahrenheit(85.0),
            &[1],
            &[110.0],
            &params,
            &single_room(true),
        )
        .unwrap();
        // Hand evaluation:
        //   ambient   0.1 * (302.59444 - 299.81667)   =  0.2777778
        //   internal                                  =  1.36
        //   occupant  1e-6 * 110 * 3600               =  0.396
        //   cooling   0.6 * (285.92778 - 299.81667)   = -8.3333333
        //   rate                                      = -6.2995556 K/h
        //   step      rate / 60                       = -0.1049926 K
        assert_abs_diff_eq!(next[0] - t, -0.104_992_592_6, epsilon = 1e-9);
    }

    #[test]
    fn dimension_mismatch() {
        let params = default_paper_scenario().params;
        let layout = default_paper_scenario().layout;
        assert!(matches!(
            step_temperature(&[300.0; 3], 300.0, &[0; 16], &[0.0; 16], &params, &layout),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn controller_cases() {
        let p = default_paper_scenario().params;
        assert_eq!(controller_update(fahrenheit(80.5), 0, &p), 1);
        assert_eq!(controller_update(fahrenheit(69.0), 1, &p), 0);
        assert_eq!(controller_update(fahrenheit(75.0), 1, &p), 1);
        assert_eq!(controller_update(fahrenheit(75.0), 0, &p), 0);
        assert_eq!(controller_update(p.t_max, 0, &p), 1);
        assert_eq!(controller_update(p.t_min, 1, &p), 0);
    }

    #[test]
    fn synthetic_ambient_mean() {
        let cfg = default_paper_scenario();
        let amb = generate_ambient(&cfg, &mut rng(3)).unwrap();
        assert_eq!(amb.len(), 600);
        let mean = amb.iter().sum::<f64>() / 600.0;
        assert!((mean - 302.594).abs() < 0.5, "mean {mean}");
    }

    #[test]
    fn zero_std_ambient_is_constant() {
        let mut cfg = default_paper_scenario();
        cfg.ambient_profile = AmbientProfile::Synthetic {
            mean: 300.0,
            std: 0.0,
            smoothing_window: 5,
        };
        let amb = generate_ambient(&cfg, &mut rng(0)).unwrap();
        assert!(amb.iter().all(|&v| v == 300.0));
    }

    #[test]
    fn constant_profile_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("amb.csv");
        std::fs::write(&path, "T_F\n85\n85\n85\n").unwrap();
        let mut cfg = default_paper_scenario();
        cfg.ambient_profile = AmbientProfile::File {
            path,
            unit: TempUnit::Fahrenheit,
            column: None,
        };
        let amb = generate_ambient(&cfg, &mut rng(0)).unwrap();
        assert_eq!(amb.len(), 600);
        assert!(amb.iter().all(|&v| (v - 302.594).abs() < 5e-4 && v == amb[0]));
    }

    #[test]
    fn short_or_missing_profile() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("amb.csv");
        std::fs::write(&path, "T\n85\n").unwrap();
        let mut cfg = default_paper_scenario();
        cfg.ambient_profile = AmbientProfile::File {
            path: path.clone(),
            unit: TempUnit::Fahrenheit,
            column: None,
        };
        assert!(generate_ambient(&cfg, &mut rng(0)).is_err());
        std::fs::write(&path, "T\n85\nNaN\n").unwrap();
        assert!(generate_ambient(&cfg, &mut rng(0)).is_err());
        cfg.ambient_profile = AmbientProfile::File {
            path: dir.path().join("missing.csv"),
            unit: TempUnit::Fahrenheit,
            column: None,
        };
        assert!(matches!(
            generate_ambient(&cfg, &mut rng(0)),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn resampling_interpolates() {
        assert_eq!(resample_linear(&[0.0, 10.0], 3), vec![0.0, 5.0, 10.0]);
        assert_eq!(resample_linear(&[0.0, 2.0, 4.0], 5), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn empty_building() {
        let mut cfg = default_paper_scenario();
        cfg.n_people = 0;
        let s = generate_schedule(&cfg, &mut rng(1)).unwrap();
        assert!(s.n.iter().all(|&c| c == 0));
        assert!(s.mob_heat().iter().all(|&q| q == 0.0));
    }

    #[test]
    fn single_room_holds_everyone() {
        let mut cfg = default_paper_scenario();
        cfg.layout = single_room(true);
        cfg.params.t_hvac.truncate(1);
        let s = generate_schedule(&cfg, &mut rng(1)).unwrap();
        assert!(s.n.iter().all(|&c| c == 45));
    }

    #[test]
    fn minimal_horizon_is_one_step() {
        let mut cfg = default_paper_scenario();
        cfg.horizon_steps = 2;
        cfg.time_range_steps = 2;
        let trace = simulate(&cfg, &mut rng(4)).unwrap();
        assert_eq!(trace.steps(), 2);
        let t0: Vec<f64> = trace.temps.column(0).iter().copied().collect();
        let u0: Vec<u8> = trace.hvac_state.column(0).iter().copied().collect();
        let q0: Vec<f64> = trace.mob_heat.column(0).iter().copied().collect();
        let t1 = step_temperature(&t0, trace.ambient[0], &u0, &q0, &cfg.params, &cfg.layout)
            .unwrap();
        let got: Vec<f64> = trace.temps.column(1).iter().copied().collect();
        assert_eq!(got, t1);
    }

    #[test]
    fn relaxation_without_sources() {
        let mut cfg = default_paper_scenario();
        cfg.n_people = 0;
        cfg.params.omega = 0.0;
        let target = fahrenheit(70.0);
        cfg.ambient_profile = AmbientProfile::Synthetic {
            mean: target,
            std: 0.0,
            smoothing_window: 5,
        };
        // Push the lower setpoint out of the way so the controller starts off
        // and nothing can switch it on while rooms cool toward 70 F.
        cfg.params.t_min = fahrenheit(60.0);
        for t in cfg.params.t_hvac.iter_mut() {
            *t = fahrenheit(45.0);
        }
        let trace = simulate(&cfg, &mut rng(9)).unwrap();
        assert!(trace.hvac_state.iter().all(|&u| u == 0));
        // The room-average distance to the ambient temperature never grows.
        let dist: Vec<f64> = (0..trace.steps())
            .map(|t| trace.temps.column(t).iter().map(|v| (v - target).abs()).sum::<f64>())
            .collect();
        assert!(dist.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(dist[599] < dist[0]);
    }

    #[test]
    fn noise_free_sensors_match_truth() {
        let cfg = default_paper_scenario();
        let trace = simulate(&cfg, &mut rng(2)).unwrap();
        for model in [NoiseModel::Reading, NoiseModel::Rate] {
            let s = add_sensor_noise(&trace, 0.0, model, &mut rng(5)).unwrap();
            assert_eq!(s.temps_meas, trace.temps);
            assert_eq!(s.ambient_meas, trace.ambient);
            assert!(s
                .hvac_temp_meas
                .row_iter()
                .enumerate()
                .all(|(i, r)| r.iter().all(|&v| v == trace.t_hvac[i])));
        }
    }

    #[test]
    fn reading_noise_has_requested_spread() {
        let cfg = default_paper_scenario();
        let trace = simulate(&cfg, &mut rng(2)).unwrap();
        let s = add_sensor_noise(&trace, 1.0, NoiseModel::Reading, &mut rng(6)).unwrap();
        let diffs: Vec<f64> = s
            .temps_meas
            .iter()
            .zip(trace.temps.iter())
            .map(|(a, b)| a - b)
            .collect();
        assert!(diffs.len() >= 10_000 - 400);
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - 1.0).abs() < 0.05, "sd {sd}");
        assert_eq!(s.hvac_state, trace.hvac_state);
    }

    #[test]
    fn rate_noise_has_requested_rate_spread() {
        let cfg = default_paper_scenario();
        let trace = simulate(&cfg, &mut rng(2)).unwrap();
        let s = add_sensor_noise(&trace, 2.0, NoiseModel::Rate, &mut rng(6)).unwrap();
        assert_eq!(s.temps_meas.column(0), trace.temps.column(0));
        let dt = trace.delta_t;
        let mut rates = Vec::new();
        for i in 0..trace.k() {
            for t in 0..trace.steps() - 1 {
                let meas = (s.temps_meas[(i, t + 1)] - s.temps_meas[(i, t)]) / dt;
                let truth = (trace.temps[(i, t + 1)] - trace.temps[(i, t)]) / dt;
                rates.push(meas - truth);
            }
        }
        let n = rates.len() as f64;
        let sd = (rates.iter().map(|d| d * d).sum::<f64>() / n).sqrt();
        assert!((sd - 2.0).abs() < 0.1, "sd {sd}");
        assert_eq!(s.hvac_state, trace.hvac_state);
    }
}
