//! Integer occupancy maps and their error against ground truth.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::OccupancySchedule;

/// Occupant counts per room and reporting window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MobilityMap {
    /// `(room, window)`.
    pub counts: DMatrix<u32>,
    pub tr_steps: usize,
}

impl MobilityMap {
    pub fn k(&self) -> usize {
        self.counts.nrows()
    }

    pub fn windows(&self) -> usize {
        self.counts.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionScore {
    /// `None` for rooms that are empty in every window.
    pub nmae_per_room: Vec<Option<f64>>,
    /// Mean NMAE over the rooms that were scored.
    pub tre: f64,
    /// 0-based indices of the unscored rooms.
    pub excluded_rooms: Vec<usize>,
}

fn window_count(steps: usize, tr_steps: usize) -> Result<usize> {
    if tr_steps == 0 {
        return Err(Error::validation("tr_steps", "must be at least 1"));
    }
    let windows = steps / tr_steps;
    if windows == 0 {
        return Err(Error::validation(
            "tr_steps",
            format!("window of {tr_steps} steps is longer than the {steps}-step horizon"),
        ));
    }
    Ok(windows)
}

/// Per-step counts `round(heat / q_avg)`, halves rounded away from zero and
/// negatives clamped to zero.
pub fn step_counts(mob_heat_hat: &DMatrix<f64>, q_avg: f64) -> Result<DMatrix<u32>> {
    if !(q_avg.is_finite() && q_avg > 0.0) {
        return Err(Error::validation("q_avg", format!("must be > 0, got {q_avg}")));
    }
    if mob_heat_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("estimated occupant heat".into()));
    }
    Ok(mob_heat_hat.map(|w| (w / q_avg).round().max(0.0) as u32))
}

fn lower_median(values: &mut [u32]) -> u32 {
    values.sort_unstable();
    values[(values.len() - 1) / 2]
}

/// Rounds the heat estimate to people and reports the lower median of every
/// complete window. A trailing partial window is dropped.
pub fn to_mobility_map(
    mob_heat_hat: &DMatrix<f64>,
    q_avg: f64,
    tr_steps: usize,
) -> Result<MobilityMap> {
    let per_step = step_counts(mob_heat_hat, q_avg)?;
    let windows = window_count(per_step.ncols(), tr_steps)?;
    let counts = DMatrix::from_fn(per_step.nrows(), windows, |i, w| {
        let mut v: Vec<u32> = (w * tr_steps..(w + 1) * tr_steps)
            .map(|t| per_step[(i, t)])
            .collect();
        lower_median(&mut v)
    });
    Ok(MobilityMap { counts, tr_steps })
}

/// True counts per window, read at the first step of each window.
pub fn truth_windows(schedule: &OccupancySchedule, tr_steps: usize) -> Result<MobilityMap> {
    count_windows(&schedule.n, tr_steps)
}

/// Same as [`truth_windows`] for a bare `(room, step)` count matrix.
pub fn count_windows(n: &DMatrix<u32>, tr_steps: usize) -> Result<MobilityMap> {
    let windows = window_count(n.ncols(), tr_steps)?;
    let counts = DMatrix::from_fn(n.nrows(), windows, |i, w| n[(i, w * tr_steps)]);
    Ok(MobilityMap { counts, tr_steps })
}

/// Scores an inferred map against the simulated schedule.
pub fn score(truth: &OccupancySchedule, map: &MobilityMap) -> Result<ReconstructionScore> {
    if truth.k() != map.k() {
        return Err(Error::WindowMismatch(format!(
            "truth has {} rooms, map has {}",
            truth.k(),
            map.k()
        )));
    }
    let truth_map = truth_windows(truth, map.tr_steps)?;
    score_maps(&truth_map, map)
}

/// Scores two maps over the same rooms and windows.
pub fn score_maps(truth: &MobilityMap, map: &MobilityMap) -> Result<ReconstructionScore> {
    if truth.counts.shape() != map.counts.shape() || truth.tr_steps != map.tr_steps {
        return Err(Error::WindowMismatch(format!(
            "truth is {}x{} windows of {} steps, map is {}x{} windows of {} steps",
            truth.k(),
            truth.windows(),
            truth.tr_steps,
            map.k(),
            map.windows(),
            map.tr_steps
        )));
    }
    let windows = truth.windows() as f64;
    let mut nmae_per_room = Vec::with_capacity(truth.k());
    let mut excluded_rooms = Vec::new();
    for i in 0..truth.k() {
        let mean_true = truth.counts.row(i).iter().map(|&c| f64::from(c)).sum::<f64>() / windows;
        if mean_true == 0.0 {
            log::warn!("room {} is empty in every window and is left out of the TRE", i + 1);
            excluded_rooms.push(i);
            nmae_per_room.push(None);
            continue;
        }
        let mae = truth
            .counts
            .row(i)
            .iter()
            .zip(map.counts.row(i).iter())
            .map(|(&a, &b)| (f64::from(a) - f64::from(b)).abs())
            .sum::<f64>()
            / windows;
        nmae_per_room.push(Some(mae / mean_true));
    }
    let scored: Vec<f64> = nmae_per_room.iter().flatten().copied().collect();
    if scored.is_empty() {
        return Err(Error::validation(
            "truth",
            "every room is empty in every window, so the TRE is undefined",
        ));
    }
    let tre = scored.iter().sum::<f64>() / scored.len() as f64;
    Ok(ReconstructionScore {
        nmae_per_room,
        tre,
        excluded_rooms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_paper_scenario;
    use crate::simulator::simulate;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn map(rows: &[&[u32]], tr_steps: usize) -> MobilityMap {
        let k = rows.len();
        let w = rows[0].len();
        MobilityMap {
            counts: DMatrix::from_fn(k, w, |i, j| rows[i][j]),
            tr_steps,
        }
    }

    #[test]
    fn rounding() {
        let heat = DMatrix::from_row_slice(1, 4, &[264.0, 55.0, -30.0, 164.999]);
        let c = step_counts(&heat, 110.0).unwrap();
        assert_eq!(c.as_slice(), &[2, 1, 0, 1]);
        assert!(step_counts(&heat, 0.0).is_err());
    }

    #[test]
    fn window_median() {
        let heat = DMatrix::from_row_slice(1, 6, &[3.0, 3.0, 4.0, 3.0, 5.0, 3.0]);
        let m = to_mobility_map(&heat, 1.0, 6).unwrap();
        assert_eq!(m.counts[(0, 0)], 3);
        // Lower median on an even window.
        let heat = DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(to_mobility_map(&heat, 1.0, 4).unwrap().counts[(0, 0)], 2);
    }

    #[test]
    fn partial_window_is_dropped() {
        let heat = DMatrix::from_element(2, 7, 110.0);
        let m = to_mobility_map(&heat, 110.0, 3).unwrap();
        assert_eq!(m.windows(), 2);
        assert!(to_mobility_map(&heat, 110.0, 8).is_err());
    }

    #[test]
    fn perfect_and_hand_scored() {
        let truth = map(&[&[2, 2, 2, 2]], 1);
        assert_eq!(score_maps(&truth, &truth).unwrap().tre, 0.0);
        let inferred = map(&[&[3, 1, 2, 2]], 1);
        let s = score_maps(&truth, &inferred).unwrap();
        assert_eq!(s.nmae_per_room, vec![Some(0.25)]);
        assert_eq!(s.tre, 0.25);
    }

    #[test]
    fn empty_rooms_are_excluded() {
        let truth = map(&[&[2, 2], &[0, 0]], 1);
        let inferred = map(&[&[2, 2], &[1, 0]], 1);
        let s = score_maps(&truth, &inferred).unwrap();
        assert_eq!(s.excluded_rooms, vec![1]);
        assert_eq!(s.nmae_per_room, vec![Some(0.0), None]);
        assert_eq!(s.tre, 0.0);
        let empty = map(&[&[0, 0]], 1);
        assert!(score_maps(&empty, &empty).is_err());
    }

    #[test]
    fn mismatched_windows() {
        let a = map(&[&[1, 2]], 1);
        let b = map(&[&[1, 2, 3]], 1);
        assert!(matches!(score_maps(&a, &b), Err(Error::WindowMismatch(_))));
    }

    #[test]
    fn exact_heat_reproduces_schedule() {
        let mut cfg = default_paper_scenario();
        cfg.params.q_std = 0.0;
        for seed in 0..5 {
            let trace = simulate(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let m = to_mobility_map(&trace.mob_heat, cfg.params.q_mean, 60).unwrap();
            let truth = truth_windows(&trace.schedule, 60).unwrap();
            assert_eq!(m, truth);
            assert_eq!(score(&trace.schedule, &m).unwrap().tre, 0.0);
        }
    }

    fn counts_strategy() -> impl Strategy<Value = (usize, usize, Vec<u32>)> {
        (1usize..5, 1usize..6).prop_flat_map(|(k, w)| {
            (Just(k), Just(w), prop::collection::vec(0u32..12, k * w))
        })
    }

    proptest! {
        #[test]
        fn integer_windows_are_fixed_points((k, w, c) in counts_strategy(), tr in 1usize..5, q in 1.0f64..200.0) {
            let counts = DMatrix::from_vec(k, w, c);
            let heat = DMatrix::from_fn(k, w * tr, |i, t| f64::from(counts[(i, t / tr)]) * q);
            let m = to_mobility_map(&heat, q, tr).unwrap();
            prop_assert_eq!(m.counts, counts);
        }

        #[test]
        fn scaling_heat_and_q_together(heat in prop::collection::vec(-50.0f64..800.0, 12), q in 10.0f64..200.0, s in 0.1f64..10.0) {
            let h = DMatrix::from_vec(2, 6, heat);
            let a = to_mobility_map(&h, q, 3).unwrap();
            let b = to_mobility_map(&h.map(|v| v * s), q * s, 3).unwrap();
            // Rescaling can only move values that sit on a rounding boundary.
            let per_step = h.map(|v| v / q);
            let on_boundary = per_step.iter().any(|v| (v.fract().abs() - 0.5).abs() < 1e-9);
            prop_assert!(a == b || on_boundary);
        }

        #[test]
        fn closer_window_never_hurts((k, w, t) in counts_strategy(), noise in prop::collection::vec(0u32..6, 25), pick in 0usize..25) {
            let truth = MobilityMap { counts: DMatrix::from_vec(k, w, t), tr_steps: 1 };
            prop_assume!(truth.counts.iter().any(|&c| c > 0));
            let inferred = MobilityMap {
                counts: DMatrix::from_fn(k, w, |i, j| noise[(i * w + j) % 25]),
                tr_steps: 1,
            };
            let before = score_maps(&truth, &inferred).unwrap().tre;
            let idx = pick % (k * w);
            let mut better = inferred.clone();
            let (tv, iv) = (truth.counts[idx], inferred.counts[idx]);
            if iv != tv {
                better.counts[idx] = if iv > tv { iv - 1 } else { iv + 1 };
            }
            let after = score_maps(&truth, &better).unwrap().tre;
            prop_assert!(after <= before + 1e-12);
        }

        #[test]
        fn relabelling_rooms((k, w, t) in counts_strategy(), noise in prop::collection::vec(0u32..6, 25), rot in 0usize..5) {
            let truth = MobilityMap { counts: DMatrix::from_vec(k, w, t), tr_steps: 2 };
            prop_assume!(truth.counts.iter().any(|&c| c > 0));
            let inferred = MobilityMap {
                counts: DMatrix::from_fn(k, w, |i, j| noise[(i * w + j) % 25]),
                tr_steps: 2,
            };
            let perm = |m: &MobilityMap| MobilityMap {
                counts: DMatrix::from_fn(k, w, |i, j| m.counts[((i + rot) % k, j)]),
                tr_steps: 2,
            };
            let a = score_maps(&truth, &inferred).unwrap().tre;
            let b = score_maps(&perm(&truth), &perm(&inferred)).unwrap().tre;
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
