//! CSV and JSON files exchanged between the commands.
//!
//! Rooms are numbered from 1 in headers and JSON, steps and windows from 0.
//! Floats are written in shortest round-trip form, so reading a file back
//! gives the exact values that were written.

use std::fs::File;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{EstimationResult, SolverStats};
use crate::metrics::{MobilityMap, ReconstructionScore};
use crate::simulator::{SensorTrace, SimulationTrace};

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("plain data serialises");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Locates named columns in a header row.
struct Columns {
    headers: csv::StringRecord,
    file: String,
}

impl Columns {
    fn index(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::parse(self.file.clone(), format!("missing column `{name}`"))
        })
    }

    /// Number of rooms, from consecutive `prefix{i}suffix` headers.
    fn rooms(&self, prefix: &str, suffix: &str) -> usize {
        (1..)
            .take_while(|i| self.headers.iter().any(|h| h == format!("{prefix}{i}{suffix}")))
            .count()
    }
}

fn cell<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize, file: &str) -> Result<T> {
    let raw = record.get(idx).unwrap_or("");
    let line = record.position().map_or(0, |p| p.line());
    raw.parse()
        .map_err(|_| Error::parse(file.to_string(), format!("bad value `{raw}` on line {line}")))
}

pub fn write_sensors(path: &Path, s: &SensorTrace) -> Result<()> {
    let (k, z) = s.temps_meas.shape();
    let mut w = writer(path)?;
    let mut header = vec!["step".to_string(), "t_hours".into(), "T_ext_meas_K".into()];
    header.extend((1..=k).map(|i| format!("u_{i}")));
    header.extend((1..=k).map(|i| format!("Thvac_meas_{i}_K")));
    header.extend((1..=k).map(|i| format!("T_meas_{i}_K")));
    w.write_record(&header)?;
    for t in 0..z {
        let mut row = vec![t.to_string(), (t as f64 * s.delta_t).to_string()];
        row.push(s.ambient_meas[t].to_string());
        row.extend((0..k).map(|i| s.hvac_state[(i, t)].to_string()));
        row.extend((0..k).map(|i| s.hvac_temp_meas[(i, t)].to_string()));
        row.extend((0..k).map(|i| s.temps_meas[(i, t)].to_string()));
        w.write_record(&row)?;
    }
    finish(w, path)
}

pub fn read_sensors(path: &Path) -> Result<SensorTrace> {
    let file = path.display().to_string();
    let mut r = reader(path)?;
    let cols = Columns {
        headers: r.headers()?.clone(),
        file: file.clone(),
    };
    let k = cols.rooms("T_meas_", "_K");
    if k == 0 {
        return Err(Error::parse(file, "no `T_meas_<i>_K` columns"));
    }
    let t_col = cols.index("t_hours")?;
    let ext_col = cols.index("T_ext_meas_K")?;
    let u_cols = (1..=k).map(|i| cols.index(&format!("u_{i}"))).collect::<Result<Vec<_>>>()?;
    let h_cols = (1..=k)
        .map(|i| cols.index(&format!("Thvac_meas_{i}_K")))
        .collect::<Result<Vec<_>>>()?;
    let m_cols = (1..=k)
        .map(|i| cols.index(&format!("T_meas_{i}_K")))
        .collect::<Result<Vec<_>>>()?;

    let mut times = Vec::new();
    let mut ambient = Vec::new();
    let (mut u, mut hvac, mut temps) = (Vec::new(), Vec::new(), Vec::new());
    for record in r.records() {
        let record = record?;
        times.push(cell::<f64>(&record, t_col, &file)?);
        ambient.push(cell::<f64>(&record, ext_col, &file)?);
        for i in 0..k {
            u.push(cell::<u8>(&record, u_cols[i], &file)?);
            hvac.push(cell::<f64>(&record, h_cols[i], &file)?);
            temps.push(cell::<f64>(&record, m_cols[i], &file)?);
        }
    }
    let z = times.len();
    if z < 2 {
        return Err(Error::validation(file, "need at least 2 rows"));
    }
    let delta_t = times[1] - times[0];
    for (t, pair) in times.windows(2).enumerate() {
        if ((pair[1] - pair[0]) - delta_t).abs() > 1e-9 * delta_t.abs().max(1.0) {
            return Err(Error::validation(
                file,
                format!("t_hours is not evenly spaced at step {}", t + 1),
            ));
        }
    }
    let trace = SensorTrace {
        temps_meas: DMatrix::from_vec(k, z, temps),
        ambient_meas: ambient,
        hvac_temp_meas: DMatrix::from_vec(k, z, hvac),
        hvac_state: DMatrix::from_vec(k, z, u),
        delta_t,
    };
    trace.validate()?;
    Ok(trace)
}

pub fn write_truth(path: &Path, trace: &SimulationTrace) -> Result<()> {
    let (k, z) = trace.temps.shape();
    let mut w = writer(path)?;
    let mut header = vec!["step".to_string(), "T_ext_K".into()];
    header.extend((1..=k).map(|i| format!("T_{i}_K")));
    header.extend((1..=k).map(|i| format!("n_{i}")));
    header.extend((1..=k).map(|i| format!("mobheat_{i}_W")));
    w.write_record(&header)?;
    for t in 0..z {
        let mut row = vec![t.to_string(), trace.ambient[t].to_string()];
        row.extend((0..k).map(|i| trace.temps[(i, t)].to_string()));
        row.extend((0..k).map(|i| trace.schedule.n[(i, t)].to_string()));
        row.extend((0..k).map(|i| trace.mob_heat[(i, t)].to_string()));
        w.write_record(&row)?;
    }
    finish(w, path)
}

/// Ground truth as stored in `truth.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    pub ambient: Vec<f64>,
    pub temps: DMatrix<f64>,
    pub n: DMatrix<u32>,
    pub mob_heat: DMatrix<f64>,
}

pub fn read_truth(path: &Path) -> Result<TruthTable> {
    let file = path.display().to_string();
    let mut r = reader(path)?;
    let cols = Columns {
        headers: r.headers()?.clone(),
        file: file.clone(),
    };
    let k = cols.rooms("n_", "");
    if k == 0 {
        return Err(Error::parse(file, "no `n_<i>` columns"));
    }
    let ext = cols.index("T_ext_K")?;
    let idx = |prefix: &str, suffix: &str| {
        (1..=k)
            .map(|i| cols.index(&format!("{prefix}{i}{suffix}")))
            .collect::<Result<Vec<_>>>()
    };
    let (tc, nc, qc) = (idx("T_", "_K")?, idx("n_", "")?, idx("mobheat_", "_W")?);
    let (mut ambient, mut temps, mut n, mut q) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for record in r.records() {
        let record = record?;
        ambient.push(cell::<f64>(&record, ext, &file)?);
        for i in 0..k {
            temps.push(cell::<f64>(&record, tc[i], &file)?);
            n.push(cell::<u32>(&record, nc[i], &file)?);
            q.push(cell::<f64>(&record, qc[i], &file)?);
        }
    }
    let z = ambient.len();
    Ok(TruthTable {
        ambient,
        temps: DMatrix::from_vec(k, z, temps),
        n: DMatrix::from_vec(k, z, n),
        mob_heat: DMatrix::from_vec(k, z, q),
    })
}

pub fn write_estimate(path: &Path, result: &EstimationResult) -> Result<()> {
    let (k, z) = result.mob_heat_hat.shape();
    let mut w = writer(path)?;
    let mut header = vec![
        "step".to_string(),
        "alpha_hat".into(),
        "beta_hat".into(),
        "omega_hat".into(),
    ];
    header.extend((1..=k).map(|i| format!("mobheat_hat_{i}_W")));
    w.write_record(&header)?;
    let scalars = [result.alpha_hat, result.beta_hat, result.omega_hat].map(|v| v.to_string());
    for t in 0..z {
        let mut row = vec![t.to_string()];
        row.extend(scalars.iter().cloned());
        row.extend((0..k).map(|i| result.mob_heat_hat[(i, t)].to_string()));
        w.write_record(&row)?;
    }
    finish(w, path)
}

/// Parameters and occupant heat read back from `estimate.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateTable {
    pub theta: [f64; 3],
    pub mob_heat_hat: DMatrix<f64>,
}

pub fn read_estimate(path: &Path) -> Result<EstimateTable> {
    let file = path.display().to_string();
    let mut r = reader(path)?;
    let cols = Columns {
        headers: r.headers()?.clone(),
        file: file.clone(),
    };
    let k = cols.rooms("mobheat_hat_", "_W");
    let qc = (1..=k)
        .map(|i| cols.index(&format!("mobheat_hat_{i}_W")))
        .collect::<Result<Vec<_>>>()?;
    let sc = [
        cols.index("alpha_hat")?,
        cols.index("beta_hat")?,
        cols.index("omega_hat")?,
    ];
    let mut theta = [0.0; 3];
    let mut q = Vec::new();
    let mut z = 0;
    for record in r.records() {
        let record = record?;
        for j in 0..3 {
            theta[j] = cell(&record, sc[j], &file)?;
        }
        for &c in &qc {
            q.push(cell::<f64>(&record, c, &file)?);
        }
        z += 1;
    }
    Ok(EstimateTable {
        theta,
        mob_heat_hat: DMatrix::from_vec(k, z, q),
    })
}

pub fn write_stats(path: &Path, stats: &SolverStats) -> Result<()> {
    write_json(path, stats)
}

pub fn write_mobility_map(path: &Path, map: &MobilityMap, truth: Option<&MobilityMap>) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["window", "room", "count_inferred"];
    if truth.is_some() {
        header.push("count_true");
    }
    w.write_record(&header)?;
    for win in 0..map.windows() {
        for i in 0..map.k() {
            let mut row = vec![win.to_string(), (i + 1).to_string(), map.counts[(i, win)].to_string()];
            if let Some(t) = truth {
                row.push(t.counts[(i, win)].to_string());
            }
            w.write_record(&row)?;
        }
    }
    finish(w, path)
}

#[derive(Serialize)]
struct ScoreFile<'a> {
    tre: f64,
    nmae: &'a [Option<f64>],
    excluded_rooms: Vec<usize>,
}

pub fn write_score(path: &Path, score: &ReconstructionScore) -> Result<()> {
    write_json(
        path,
        &ScoreFile {
            tre: score.tre,
            nmae: &score.nmae_per_room,
            excluded_rooms: score.excluded_rooms.iter().map(|i| i + 1).collect(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{score, to_mobility_map, truth_windows};
    use crate::model::{default_paper_scenario, NoiseModel};
    use crate::simulator::{add_sensor_noise, simulate};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sensors_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = default_paper_scenario();
        let trace = simulate(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let s = add_sensor_noise(&trace, 0.3, NoiseModel::Reading, &mut ChaCha8Rng::seed_from_u64(2))
            .unwrap();
        let path = dir.path().join("sensors.csv");
        write_sensors(&path, &s).unwrap();
        let back = read_sensors(&path).unwrap();
        assert_eq!(back.temps_meas, s.temps_meas);
        assert_eq!(back.ambient_meas, s.ambient_meas);
        assert_eq!(back.hvac_temp_meas, s.hvac_temp_meas);
        assert_eq!(back.hvac_state, s.hvac_state);
        assert!((back.delta_t - s.delta_t).abs() < 1e-12);

        let text = std::fs::read_to_string(&path).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("step,t_hours,T_ext_meas_K,u_1,"));
        assert!(header.ends_with("T_meas_16_K"));
        assert_eq!(text.lines().count(), 601);
    }

    #[test]
    fn truth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = default_paper_scenario();
        let trace = simulate(&cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let path = dir.path().join("truth.csv");
        write_truth(&path, &trace).unwrap();
        let back = read_truth(&path).unwrap();
        assert_eq!(back.n, trace.schedule.n);
        assert_eq!(back.temps, trace.temps);
        assert_eq!(back.mob_heat, trace.mob_heat);
        assert_eq!(back.ambient, trace.ambient);
    }

    #[test]
    fn score_and_map_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = default_paper_scenario();
        cfg.params.q_std = 0.0;
        let trace = simulate(&cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let m = to_mobility_map(&trace.mob_heat, 110.0, 60).unwrap();
        let t = truth_windows(&trace.schedule, 60).unwrap();
        let path = dir.path().join("mobility_map.csv");
        write_mobility_map(&path, &m, Some(&t)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "window,room,count_inferred,count_true");
        assert_eq!(text.lines().count(), 1 + 16 * 10);

        let s = score(&trace.schedule, &m).unwrap();
        let path = dir.path().join("score.json");
        write_score(&path, &s).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["tre"], 0.0);
        assert_eq!(v["nmae"].as_array().unwrap().len(), 16);
        assert!(v["excluded_rooms"].is_array());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_sensors(Path::new("/nonexistent/sensors.csv")).unwrap_err();
        assert_eq!(err.kind(), crate::ErrorKind::Io);
    }
}
