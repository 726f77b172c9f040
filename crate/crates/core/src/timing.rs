//! Per-photon local-time ledger for one authentication session.
//!
//! Shots are emitted at `i / f_source`. The user stores every target photon,
//! waits `T` after the last one is stored, then releases them all in emission
//! order, so earlier shots spend longer in memory. The server's control qubit
//! is stored from emission until its partner photon returns.

use crate::error::{check_non_negative, Error, Result};
use crate::noise::{HardwareParams, LossEvent};

#[derive(Debug, Clone, PartialEq)]
pub struct PhotonRecord {
    pub shot_index: usize,
    pub distance_km: f64,
    pub t_emit: f64,
    /// Time the photon is stored at the user (after the driven storage pulse).
    pub t_arrive_user: f64,
    /// Target storage duration at the user.
    pub t_store_user: f64,
    /// Control storage duration at the server.
    pub t_store_server: f64,
    /// Time the target photon is back at the server.
    pub t_return: f64,
    pub loss: Option<LossEvent>,
}

impl PhotonRecord {
    pub(crate) fn check_complete(&self) -> Result<()> {
        let fields = [
            ("distance_km", self.distance_km),
            ("t_emit", self.t_emit),
            ("t_arrive_user", self.t_arrive_user),
            ("t_store_user", self.t_store_user),
            ("t_store_server", self.t_store_server),
            ("t_return", self.t_return),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(
                    name,
                    format!("incomplete record for shot {}: {v}", self.shot_index),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionTiming {
    pub lambda: usize,
    pub t_wait: f64,
    pub distance_km: f64,
    pub records: Vec<PhotonRecord>,
}

impl SessionTiming {
    /// Emission of the first shot to return of the last one.
    pub fn span(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.t_return)
    }
}

pub fn build_schedule(
    lambda: usize,
    t_wait: f64,
    distance_km: f64,
    params: &HardwareParams,
) -> Result<SessionTiming> {
    if lambda == 0 {
        return Err(Error::param("lambda", "must be at least 1"));
    }
    check_non_negative("t_wait", t_wait)?;
    check_non_negative("distance_km", distance_km)?;
    if !(params.source_frequency > 0.0 && params.fiber_velocity > 0.0) {
        return Err(Error::param(
            "source_frequency/fiber_velocity",
            "must be positive",
        ));
    }
    let period = 1.0 / params.source_frequency;
    let one_way = params.propagation_time(distance_km);
    let records = (0..lambda)
        .map(|i| {
            let t_emit = i as f64 * period;
            let t_arrive_user = t_emit + one_way + params.drive_store_time;
            let t_store_user =
                (lambda - 1 - i) as f64 * period + t_wait + params.drive_recover_time;
            let t_return = t_arrive_user + t_store_user + one_way;
            PhotonRecord {
                shot_index: i,
                distance_km,
                t_emit,
                t_arrive_user,
                t_store_user,
                t_store_server: t_return - t_emit,
                t_return,
                loss: None,
            }
        })
        .collect();
    Ok(SessionTiming {
        lambda,
        t_wait,
        distance_km,
        records,
    })
}

/// `(t_store_user, t_store_server)` per shot.
pub fn storage_times(timing: &SessionTiming) -> Vec<(f64, f64)> {
    timing
        .records
        .iter()
        .map(|r| (r.t_store_user, r.t_store_server))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const US: f64 = 1e-6;

    #[test]
    fn first_shot_is_emitted_at_zero() {
        let t = build_schedule(10, 0.0, 1.0, &HardwareParams::default()).unwrap();
        assert_eq!(t.records[0].t_emit, 0.0);
    }

    #[test]
    fn reference_storage_times() {
        let p = HardwareParams::default();
        let t = build_schedule(500, 1.0 * US, 1.0, &p).unwrap();
        // 499 / 33 MHz + 1 µs + 30 ns
        let expected = 499.0 / 33e6 + 1e-6 + 30e-9;
        assert!((t.records[0].t_store_user - expected).abs() < 1e-15);
        assert!((t.records[0].t_store_user - 16.15 * US).abs() < 0.01 * US);

        let t = build_schedule(500, 15.0 * US, 1.0, &p).unwrap();
        let max = storage_times(&t).iter().map(|s| s.0).fold(0.0, f64::max);
        assert!((max - 30.15 * US).abs() < 0.01 * US, "{max}");
    }

    #[test]
    fn ten_km_propagation() {
        let p = HardwareParams::default();
        assert!((p.propagation_time(10.0) - 48.08 * US).abs() < 0.01 * US);
    }

    #[test]
    fn single_shot_schedule() {
        let p = HardwareParams::default();
        let t = build_schedule(1, 3.0 * US, 2.0, &p).unwrap();
        assert_eq!(t.records.len(), 1);
        assert!((t.records[0].t_store_user - (3.0 * US + p.drive_recover_time)).abs() < 1e-18);
    }

    #[test]
    fn record_invariants() {
        let p = HardwareParams::default();
        let d = 3.0;
        let t = build_schedule(50, 2.0 * US, d, &p).unwrap();
        let one_way = d * 1e3 / p.fiber_velocity;
        for (i, r) in t.records.iter().enumerate() {
            assert_eq!(r.shot_index, i);
            assert!((r.t_emit - i as f64 / p.source_frequency).abs() < 1e-18);
            assert!((r.t_arrive_user - (r.t_emit + one_way + p.drive_store_time)).abs() < 1e-15);
            assert!(
                (r.t_store_server - (r.t_store_user + 2.0 * one_way + p.drive_store_time)).abs()
                    < 1e-15
            );
        }
        let last = t.records.last().unwrap();
        assert!((last.t_store_user - (2.0 * US + p.drive_recover_time)).abs() < 1e-15);
        let span = 50.0 / p.source_frequency + 2.0 * one_way + 2.0 * US;
        assert!((t.span() - span).abs() < 1e-7);
    }

    #[test]
    fn user_storage_strictly_decreasing() {
        let t = build_schedule(200, 0.0, 5.0, &HardwareParams::default()).unwrap();
        let s = storage_times(&t);
        assert!(s.windows(2).all(|w| w[0].0 > w[1].0 && w[0].1 > w[1].1));
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = HardwareParams::default();
        assert!(build_schedule(0, 0.0, 0.0, &p).is_err());
        assert!(build_schedule(1, -1.0, 0.0, &p).is_err());
        assert!(build_schedule(1, 0.0, -1.0, &p).is_err());
    }
}
