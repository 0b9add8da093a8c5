//! Domain types shared by the simulator, the estimator and the scoring code.
//!
//! Units are fixed: Kelvin, hours, Joules and Watts. All types are plain data
//! and are validated once on construction or load.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{convert_interval, fahrenheit, TempUnit};

/// Seconds per hour; converts Watts into J/h.
pub const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoomClass {
    BigConference,
    SmallConference,
    Office,
}

impl RoomClass {
    pub const ALL: [RoomClass; 3] = [
        RoomClass::BigConference,
        RoomClass::SmallConference,
        RoomClass::Office,
    ];

    pub fn key(self) -> &'static str {
        match self {
            RoomClass::BigConference => "big_conference",
            RoomClass::SmallConference => "small_conference",
            RoomClass::Office => "office",
        }
    }
}

/// Rooms, who touches whom, and who touches the outside.
///
/// Rooms are indexed from zero internally; files and logs number them from one.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildingLayout {
    neighbors: Vec<Vec<usize>>,
    ambient_exposed: Vec<bool>,
    room_class: Vec<RoomClass>,
    weights: Vec<f64>,
    /// Grid shape when the layout was built from a grid; kept so configs
    /// can be written back in the same form.
    grid: Option<(usize, usize)>,
}

impl BuildingLayout {
    /// Builds a layout from an undirected edge list (zero-based room indices).
    pub fn from_edges(
        k: usize,
        edges: &[(usize, usize)],
        ambient_exposed: Vec<bool>,
        room_class: Vec<RoomClass>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::validation("layout.rooms", "need at least one room"));
        }
        let mut sets = vec![BTreeSet::new(); k];
        for &(a, b) in edges {
            if a >= k || b >= k {
                return Err(Error::validation(
                    "layout.edges",
                    format!("edge ({}, {}) references a room outside 1..={k}", a + 1, b + 1),
                ));
            }
            if a == b {
                return Err(Error::validation(
                    "layout.edges",
                    format!("room {} cannot neighbour itself", a + 1),
                ));
            }
            sets[a].insert(b);
            sets[b].insert(a);
        }
        let layout = BuildingLayout {
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
            ambient_exposed,
            room_class,
            weights,
            grid: None,
        };
        layout.validate()?;
        Ok(layout)
    }

    /// Row-major `rows x cols` grid with 4-neighbour adjacency. Rooms that are
    /// not on the grid boundary are not exposed to ambient air.
    pub fn grid(
        rows: usize,
        cols: usize,
        room_class: Vec<RoomClass>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let k = rows * cols;
        let mut edges = Vec::new();
        let mut exposed = vec![false; k];
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if c + 1 < cols {
                    edges.push((i, i + 1));
                }
                if r + 1 < rows {
                    edges.push((i, i + cols));
                }
                exposed[i] = r == 0 || c == 0 || r + 1 == rows || c + 1 == cols;
            }
        }
        let mut layout = Self::from_edges(k, &edges, exposed, room_class, weights)?;
        layout.grid = Some((rows, cols));
        Ok(layout)
    }

    /// Applies explicit exposure flags, e.g. to seal extra rooms of a grid.
    pub fn with_ambient_exposed(mut self, ambient_exposed: Vec<bool>) -> Result<Self> {
        self.ambient_exposed = ambient_exposed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.neighbors.len();
        for (name, len) in [
            ("layout.ambient_exposed", self.ambient_exposed.len()),
            ("layout.classes", self.room_class.len()),
            ("layout.weights", self.weights.len()),
        ] {
            if len != k {
                return Err(Error::validation(
                    name,
                    format!("has {len} entries for {k} rooms"),
                ));
            }
        }
        for (i, nb) in self.neighbors.iter().enumerate() {
            for &j in nb {
                if j == i || j >= k || !self.neighbors[j].contains(&i) {
                    return Err(Error::validation(
                        "layout.edges",
                        "adjacency must be symmetric and irreflexive",
                    ));
                }
            }
            if nb.is_empty() && !self.ambient_exposed[i] {
                return Err(Error::validation(
                    "layout",
                    format!("room {} has no neighbours and no ambient exposure", i + 1),
                ));
            }
        }
        if let Some((i, w)) = self
            .weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::validation(
                "layout.weights",
                format!("room {} has non-positive weight {w}", i + 1),
            ));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, room: usize) -> &[usize] {
        &self.neighbors[room]
    }

    pub fn ambient_exposed(&self) -> &[bool] {
        &self.ambient_exposed
    }

    pub fn room_class(&self) -> &[RoomClass] {
        &self.room_class
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn grid_shape(&self) -> Option<(usize, usize)> {
        self.grid
    }

    pub fn has_adjacency(&self) -> bool {
        self.neighbors.iter().any(|n| !n.is_empty())
    }

    /// Undirected edges with `a < b`, zero-based.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    /// Probability that a person is placed in each room, `w_i / sum(w)`.
    pub fn placement_probabilities(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }

    /// Sum of neighbour temperature differences, `sum_j (T_j - T_i)`.
    pub fn neighbor_gradient(&self, temps: &[f64], room: usize) -> f64 {
        let ti = temps[room];
        self.neighbors[room].iter().map(|&j| temps[j] - ti).sum()
    }

    /// Returns a copy restricted to `keep` (zero-based, in order). Edges to
    /// dropped rooms disappear.
    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        let index: std::collections::HashMap<usize, usize> =
            keep.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let edges: Vec<(usize, usize)> = self
            .edges()
            .into_iter()
            .filter_map(|(a, b)| Some((*index.get(&a)?, *index.get(&b)?)))
            .collect();
        Self::from_edges(
            keep.len(),
            &edges,
            keep.iter().map(|&i| self.ambient_exposed[i]).collect(),
            keep.iter().map(|&i| self.room_class[i]).collect(),
            keep.iter().map(|&i| self.weights[i]).collect(),
        )
    }
}

/// Reduced heat-balance coefficients and controller settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    /// Ambient conduction rate, 1/h.
    pub alpha: f64,
    /// Inter-room conduction rate, 1/h.
    pub beta: f64,
    /// Internal-device heating, K/h.
    pub omega: f64,
    /// Inverse heat capacity, K/J.
    pub gamma: f64,
    /// HVAC coupling rate, 1/h.
    pub phi: f64,
    /// Supply-air temperature per room, K.
    pub t_hvac: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
    /// Time step, h.
    pub delta_t: f64,
    /// Mean emitted power per person, W.
    pub q_mean: f64,
    pub q_std: f64,
}

impl ThermalParams {
    pub fn validate(&self, k: usize) -> Result<()> {
        let positive = [
            ("thermal.alpha", self.alpha),
            ("thermal.beta", self.beta),
            ("thermal.gamma", self.gamma),
            ("thermal.phi", self.phi),
            ("thermal.delta_t", self.delta_t),
            ("thermal.q_mean", self.q_mean),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(field, format!("must be > 0, got {v}")));
            }
        }
        for (field, v) in [("thermal.omega", self.omega), ("thermal.q_std", self.q_std)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(field, format!("must be >= 0, got {v}")));
            }
        }
        if !(self.t_min.is_finite() && self.t_max.is_finite() && self.t_min < self.t_max) {
            return Err(Error::validation(
                "thermal.t_min/t_max",
                format!(
                    "setpoints must satisfy t_min < t_max, got {} K and {} K",
                    self.t_min, self.t_max
                ),
            ));
        }
        if self.t_hvac.len() != k {
            return Err(Error::validation(
                "thermal.t_hvac",
                format!("has {} entries for {k} rooms", self.t_hvac.len()),
            ));
        }
        if let Some((i, t)) = self
            .t_hvac
            .iter()
            .enumerate()
            .find(|(_, t)| !(t.is_finite() && **t < self.t_min))
        {
            return Err(Error::validation(
                "thermal.t_hvac",
                format!(
                    "supply air of room {} ({t} K) must be colder than t_min ({} K)",
                    i + 1,
                    self.t_min
                ),
            ));
        }
        Ok(())
    }

    /// Mean per-person power in J/h, the unit `gamma` expects.
    pub fn q_mean_joules_per_hour(&self) -> f64 {
        self.q_mean * SECONDS_PER_HOUR
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AmbientProfile {
    /// Per-step profile read from a CSV file and linearly resampled to the horizon.
    File {
        path: PathBuf,
        unit: TempUnit,
        column: Option<String>,
    },
    /// I.i.d. Gaussian draws smoothed by a centred moving average.
    Synthetic {
        mean: f64,
        std: f64,
        smoothing_window: usize,
    },
}

/// How sensor noise enters the measured temperatures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Each temperature reading carries its own independent Gaussian error
    /// with standard deviation `noise_std` Kelvin.
    Reading,
    /// The noise enters the measured rate of change: successive readings of a
    /// channel differ from the truth by independent Gaussian increments of
    /// standard deviation `noise_std * delta_t`, so the finite-difference rate
    /// carries white noise of `noise_std` K/h.
    #[default]
    Rate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub layout: BuildingLayout,
    pub params: ThermalParams,
    pub n_people: usize,
    pub horizon_steps: usize,
    pub time_range_steps: usize,
    pub ambient_profile: AmbientProfile,
    pub noise_std: f64,
    pub noise_model: NoiseModel,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.params.validate(self.layout.k())?;
        if self.horizon_steps < 2 {
            return Err(Error::validation(
                "scenario.horizon_steps",
                format!("need at least 2 steps, got {}", self.horizon_steps),
            ));
        }
        if self.time_range_steps == 0 || self.time_range_steps > self.horizon_steps {
            return Err(Error::validation(
                "scenario.time_range_steps",
                format!(
                    "must lie in 1..={}, got {}",
                    self.horizon_steps, self.time_range_steps
                ),
            ));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::validation(
                "scenario.noise_std",
                format!("must be >= 0, got {}", self.noise_std),
            ));
        }
        match &self.ambient_profile {
            AmbientProfile::Synthetic {
                mean,
                std,
                smoothing_window,
            } => {
                if !mean.is_finite() || !(std.is_finite() && *std >= 0.0) {
                    return Err(Error::validation(
                        "scenario.ambient",
                        "synthetic mean must be finite and std >= 0",
                    ));
                }
                if *smoothing_window == 0 {
                    return Err(Error::validation(
                        "scenario.ambient.smoothing_window",
                        "must be at least 1",
                    ));
                }
            }
            AmbientProfile::File { .. } => {}
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.layout.k()
    }

    /// Number of complete reporting windows.
    pub fn window_count(&self) -> usize {
        self.horizon_steps / self.time_range_steps
    }
}

/// Class weights and supply temperatures used by the default building.
pub const PAPER_CLASS_WEIGHTS: [(RoomClass, f64); 3] = [
    (RoomClass::BigConference, 5.0),
    (RoomClass::SmallConference, 3.0),
    (RoomClass::Office, 1.0),
];

pub fn paper_supply_temperature(class: RoomClass) -> f64 {
    match class {
        RoomClass::BigConference => fahrenheit(50.0),
        RoomClass::SmallConference | RoomClass::Office => fahrenheit(55.0),
    }
}

pub fn paper_class_weight(class: RoomClass) -> f64 {
    PAPER_CLASS_WEIGHTS
        .iter()
        .find(|(c, _)| *c == class)
        .map(|(_, w)| *w)
        .unwrap_or(1.0)
}

/// Sixteen rooms on a 4x4 grid: room 1 is the big conference room, room 16 the
/// small conference room, the rest offices. Rooms 6, 7, 10 and 11 sit in the
/// middle and only exchange heat with neighbours.
pub fn default_paper_scenario() -> ScenarioConfig {
    let k = 16;
    let classes: Vec<RoomClass> = (0..k)
        .map(|i| match i {
            0 => RoomClass::BigConference,
            15 => RoomClass::SmallConference,
            _ => RoomClass::Office,
        })
        .collect();
    let weights = classes.iter().map(|&c| paper_class_weight(c)).collect();
    let t_hvac = classes.iter().map(|&c| paper_supply_temperature(c)).collect();
    let layout = BuildingLayout::grid(4, 4, classes, weights).expect("reference layout is valid");
    ScenarioConfig {
        layout,
        params: ThermalParams {
            alpha: 0.1,
            beta: 0.1,
            omega: 1.36,
            gamma: 1e-6,
            phi: 0.6,
            t_hvac,
            t_min: fahrenheit(70.0),
            t_max: fahrenheit(80.0),
            delta_t: 1.0 / 60.0,
            q_mean: 110.0,
            q_std: 1.0,
        },
        n_people: 45,
        horizon_steps: 600,
        time_range_steps: 60,
        ambient_profile: AmbientProfile::Synthetic {
            mean: fahrenheit(85.0),
            std: convert_interval(4.33, TempUnit::Fahrenheit, TempUnit::Kelvin),
            smoothing_window: 5,
        },
        noise_std: 0.1,
        noise_model: NoiseModel::Rate,
        seed: 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn paper_defaults() {
        let cfg = default_paper_scenario();
        cfg.validate().unwrap();
        assert_eq!(cfg.k(), 16);
        assert_eq!(cfg.n_people, 45);
        assert_eq!(cfg.params.alpha, 0.1);
        assert_eq!(cfg.params.omega, 1.36);
        assert_eq!(cfg.horizon_steps, 600);
        assert_eq!(cfg.window_count(), 10);
    }

    #[test]
    fn big_conference_probability() {
        let p = default_paper_scenario().layout.placement_probabilities();
        assert_abs_diff_eq!(p[0], 5.0 / 22.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[15], 3.0 / 22.0, epsilon = 1e-15);
    }

    #[test]
    fn interior_rooms_are_sealed() {
        let cfg = default_paper_scenario();
        let exposed = cfg.layout.ambient_exposed();
        for room in 1..=16 {
            assert_eq!(exposed[room - 1], ![6, 7, 10, 11].contains(&room), "room {room}");
        }
        assert_eq!(cfg.layout.neighbors(5), &[1, 4, 6, 9]);
        assert_eq!(cfg.layout.neighbors(0), &[1, 4]);
    }

    #[test]
    fn supply_air_below_setpoint() {
        let cfg = default_paper_scenario();
        assert!(cfg.params.t_hvac[0] < cfg.params.t_hvac[1]);
        assert_abs_diff_eq!(cfg.params.t_hvac[1], 285.928, epsilon = 1e-3);
    }

    #[test]
    fn rejects_isolated_room() {
        let err = BuildingLayout::from_edges(
            2,
            &[],
            vec![true, false],
            vec![RoomClass::Office; 2],
            vec![1.0; 2],
        )
        .unwrap_err();
        assert!(err.to_string().contains("room 2"));
    }

    #[test]
    fn rejects_self_loop_and_bad_weight() {
        assert!(BuildingLayout::from_edges(
            2,
            &[(1, 1)],
            vec![true; 2],
            vec![RoomClass::Office; 2],
            vec![1.0; 2]
        )
        .is_err());
        assert!(BuildingLayout::from_edges(
            1,
            &[],
            vec![true],
            vec![RoomClass::Office],
            vec![0.0]
        )
        .is_err());
    }

    #[test]
    fn setpoint_order_is_checked() {
        let mut cfg = default_paper_scenario();
        cfg.params.t_min = cfg.params.t_max;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("t_min"), "{err}");
    }

    #[test]
    fn supply_air_must_cool() {
        let mut cfg = default_paper_scenario();
        cfg.params.t_hvac[3] = cfg.params.t_min + 1.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("room 4"));
    }

    #[test]
    fn restrict_drops_edges() {
        let layout = default_paper_scenario().layout;
        let sub = layout.restrict(&[0, 1, 5]).unwrap();
        assert_eq!(sub.k(), 3);
        assert_eq!(sub.neighbors(0), &[1]);
        assert_eq!(sub.neighbors(2), &[1]);
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one(weights in proptest::collection::vec(1e-3f64..100.0, 1..40)) {
            let k = weights.len();
            let layout = BuildingLayout::from_edges(
                k, &[], vec![true; k], vec![RoomClass::Office; k], weights,
            ).unwrap();
            let total: f64 = layout.placement_probabilities().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }
    }
}
