//! Physical-layer loss models: fiber transmission, detection, dark counts and
//! the cavity-enhanced atomic-frequency-comb (AFC) memory.

use std::f64::consts::{LN_2, PI};
use std::fmt;

use rand::Rng;

use crate::error::{check_non_negative, check_positive, check_probability, Error, Result};
use crate::quantum::GateErrors;
use crate::timing::PhotonRecord;

/// Storage model used for both parties' memories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryModel {
    /// Cavity-enhanced AFC efficiency from the comb and mirror parameters.
    Afc,
    /// Lossless storage (efficiency 1 at every time).
    Ideal,
}

/// Every hardware constant of the simulation. `Default` is the reference
/// parameter table; all times are in seconds, frequencies in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct HardwareParams {
    /// Fiber attenuation τ (dB/km).
    pub tau_db_per_km: f64,
    /// Default user/server distance (km); sweeps override it.
    pub distance_km: f64,
    /// Photon group velocity in fiber (m/s).
    pub fiber_velocity: f64,
    pub source_frequency: f64,
    pub dark_count_frequency: f64,
    /// Detector capture window t_w.
    pub capture_window: f64,
    pub detection_efficiency: f64,
    pub t1: f64,
    pub t2: f64,
    pub memory: MemoryModel,
    /// Comb finesse F_c.
    pub comb_finesse: f64,
    /// Comb absorption depth αl.
    pub absorption_depth: f64,
    pub mirror_r1: f64,
    pub mirror_r2: f64,
    /// Comb FWHM linewidth ε (Hz).
    pub comb_linewidth: f64,
    pub drive_store_time: f64,
    pub drive_recover_time: f64,
    pub cx_error: f64,
    pub czx_error: f64,
    pub hadamard_error: f64,
    pub readout_error: f64,
}

impl Default for HardwareParams {
    fn default() -> Self {
        Self {
            tau_db_per_km: 0.17,
            distance_km: 1.0,
            fiber_velocity: 2.08e8,
            source_frequency: 33e6,
            dark_count_frequency: 10.0,
            capture_window: 25e-9,
            detection_efficiency: 0.95,
            t1: 223.44e-6,
            t2: 295.35e-6,
            memory: MemoryModel::Afc,
            comb_finesse: 40.0,
            absorption_depth: 1.0,
            mirror_r1: 0.96,
            mirror_r2: 0.99,
            comb_linewidth: 3e3,
            drive_store_time: 30e-9,
            drive_recover_time: 30e-9,
            cx_error: 6e-3,
            czx_error: 6.4e-3,
            hadamard_error: 1.48e-4,
            readout_error: 2.16e-2,
        }
    }
}

impl HardwareParams {
    /// Lossless fiber and detectors, ideal memories, no decoherence, no gate
    /// or readout errors. Timing constants keep their reference values.
    pub fn noiseless() -> Self {
        Self {
            tau_db_per_km: 0.0,
            dark_count_frequency: 0.0,
            detection_efficiency: 1.0,
            t1: f64::INFINITY,
            t2: f64::INFINITY,
            memory: MemoryModel::Ideal,
            cx_error: 0.0,
            czx_error: 0.0,
            hadamard_error: 0.0,
            readout_error: 0.0,
            ..Self::default()
        }
    }

    pub fn gate_errors(&self) -> GateErrors {
        GateErrors {
            hadamard: self.hadamard_error,
            cx: self.cx_error,
            czx: self.czx_error,
            readout: self.readout_error,
        }
    }

    /// One-way fiber propagation time for `distance_km`.
    pub fn propagation_time(&self, distance_km: f64) -> f64 {
        distance_km * 1e3 / self.fiber_velocity
    }

    pub fn validate(&self) -> Result<()> {
        check_non_negative("tau_db_per_km", self.tau_db_per_km)?;
        check_non_negative("distance_km", self.distance_km)?;
        check_positive("fiber_velocity", self.fiber_velocity)?;
        check_positive("source_frequency", self.source_frequency)?;
        check_non_negative("dark_count_frequency", self.dark_count_frequency)?;
        check_non_negative("capture_window", self.capture_window)?;
        check_probability("detection_efficiency", self.detection_efficiency)?;
        check_positive("t1", self.t1)?;
        check_positive("t2", self.t2)?;
        if !(self.comb_finesse >= 1.0) {
            return Err(Error::param("comb_finesse", "must be at least 1"));
        }
        check_non_negative("absorption_depth", self.absorption_depth)?;
        check_probability("mirror_r1", self.mirror_r1)?;
        check_probability("mirror_r2", self.mirror_r2)?;
        check_non_negative("comb_linewidth", self.comb_linewidth)?;
        check_non_negative("drive_store_time", self.drive_store_time)?;
        check_non_negative("drive_recover_time", self.drive_recover_time)?;
        check_probability("cx_error", self.cx_error)?;
        check_probability("czx_error", self.czx_error)?;
        check_probability("hadamard_error", self.hadamard_error)?;
        check_probability("readout_error", self.readout_error)?;
        Ok(())
    }
}

/// Where a photon was lost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossCause {
    Fiber,
    Detector,
    Memory,
    /// No photon arrived but a dark count produced a click.
    DarkCountSubstitution,
}

impl fmt::Display for LossCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossCause::Fiber => "fiber",
            LossCause::Detector => "detector",
            LossCause::Memory => "memory",
            LossCause::DarkCountSubstitution => "dark_count_substitution",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossEvent {
    pub cause: LossCause,
    pub shot_index: usize,
}

/// `η_channel = 10^{−dτ/10}`.
pub fn transmission_prob(distance_km: f64, tau_db_per_km: f64) -> Result<f64> {
    check_non_negative("distance_km", distance_km)?;
    check_non_negative("tau_db_per_km", tau_db_per_km)?;
    Ok(10f64.powf(-distance_km * tau_db_per_km / 10.0))
}

/// Poisson dark-count probability `1 − e^{−t_w f_dark}`.
pub fn dark_count_prob(capture_window: f64, dark_frequency: f64) -> Result<f64> {
    check_non_negative("capture_window", capture_window)?;
    check_non_negative("dark_count_frequency", dark_frequency)?;
    Ok(-(-capture_window * dark_frequency).exp_m1())
}

/// Effective comb absorption `ᾱl = (αl / F_c)·√(π / 4 ln 2)`.
pub fn effective_absorption(absorption_depth: f64, comb_finesse: f64) -> f64 {
    absorption_depth / comb_finesse * (PI / (4.0 * LN_2)).sqrt()
}

/// Dephasing rate `ε̄ = 2πε / √(8 ln 2)` for comb linewidth ε.
pub fn comb_dephasing_rate(linewidth: f64) -> f64 {
    2.0 * PI * linewidth / (8.0 * LN_2).sqrt()
}

/// Storage-and-retrieval efficiency of a cavity-enhanced AFC memory after
/// storage time `t`:
///
/// `η = 4(ᾱl)² e^{−2ᾱl} (1−R₁)² R₂ e^{−t²ε̄²} / (1 − √(R₁R₂) e^{−ᾱl})⁴`.
///
/// Results above 1 are clamped with a warning.
pub fn afc_efficiency(t: f64, params: &HardwareParams) -> Result<f64> {
    check_non_negative("t", t)?;
    if !(params.comb_finesse > 0.0) {
        return Err(Error::param("comb_finesse", "must be positive"));
    }
    check_probability("mirror_r1", params.mirror_r1)?;
    check_probability("mirror_r2", params.mirror_r2)?;
    check_non_negative("absorption_depth", params.absorption_depth)?;
    check_non_negative("comb_linewidth", params.comb_linewidth)?;

    let a = effective_absorption(params.absorption_depth, params.comb_finesse);
    let (r1, r2) = (params.mirror_r1, params.mirror_r2);
    let denom = (1.0 - (r1 * r2).sqrt() * (-a).exp()).powi(4);
    if denom <= f64::EPSILON {
        return Err(Error::param(
            "mirror_r1/mirror_r2",
            "degenerate cavity: 1 − √(R1R2)e^(−ᾱl) vanishes",
        ));
    }
    let eps = comb_dephasing_rate(params.comb_linewidth);
    let eta = 4.0 * a * a * (-2.0 * a).exp() * (1.0 - r1).powi(2) * r2 * (-(t * eps).powi(2)).exp()
        / denom;
    if eta > 1.0 {
        log::warn!("AFC efficiency {eta} exceeds 1 for these parameters; clamping");
        return Ok(1.0);
    }
    Ok(eta)
}

/// Memory efficiency under the configured [`MemoryModel`].
pub fn memory_efficiency(t: f64, params: &HardwareParams) -> Result<f64> {
    match params.memory {
        MemoryModel::Afc => afc_efficiency(t, params),
        MemoryModel::Ideal => {
            check_non_negative("t", t)?;
            Ok(1.0)
        }
    }
}

/// Per-stage survival probabilities of one authentication shot, in the order
/// the photon meets them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageSurvival {
    pub fiber_out: f64,
    pub detect_user: f64,
    pub memory_user: f64,
    pub fiber_back: f64,
    pub detect_server: f64,
    pub memory_server: f64,
}

impl StageSurvival {
    pub fn for_record(record: &PhotonRecord, params: &HardwareParams) -> Result<Self> {
        record.check_complete()?;
        let fiber = transmission_prob(record.distance_km, params.tau_db_per_km)?;
        let detect = check_probability("detection_efficiency", params.detection_efficiency)?;
        Ok(Self {
            fiber_out: fiber,
            detect_user: detect,
            memory_user: memory_efficiency(record.t_store_user, params)?,
            fiber_back: fiber,
            detect_server: detect,
            memory_server: memory_efficiency(record.t_store_server, params)?,
        })
    }

    /// Stages with their loss cause.
    pub fn stages(&self) -> [(f64, LossCause); 6] {
        [
            (self.fiber_out, LossCause::Fiber),
            (self.detect_user, LossCause::Detector),
            (self.memory_user, LossCause::Memory),
            (self.fiber_back, LossCause::Fiber),
            (self.detect_server, LossCause::Detector),
            (self.memory_server, LossCause::Memory),
        ]
    }

    pub fn product(&self) -> f64 {
        self.stages().iter().map(|(p, _)| p).product()
    }
}

/// Probability that a shot's photon survives both fiber legs, both detections
/// and both memories.
pub fn shot_survival_prob(record: &PhotonRecord, params: &HardwareParams) -> Result<f64> {
    Ok(StageSurvival::for_record(record, params)?.product())
}

/// Bernoulli draw: `true` means the photon survives.
pub fn sample_loss<R: Rng + ?Sized>(p_survive: f64, rng: &mut R) -> Result<bool> {
    check_probability("p", p_survive)?;
    Ok(rng.random::<f64>() < p_survive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timing::build_schedule;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn transmission_values() {
        assert_eq!(transmission_prob(0.0, 0.17).unwrap(), 1.0);
        // 10^-0.17 and 10^-0.085
        assert!((transmission_prob(10.0, 0.17).unwrap() - 0.676_082_975_391_981_6).abs() < 1e-12);
        assert!((transmission_prob(5.0, 0.17).unwrap() - 0.822_242_649_947_071_1).abs() < 1e-12);
        assert!(transmission_prob(-1.0, 0.17).is_err());
        assert!(transmission_prob(1.0, -0.17).is_err());
    }

    #[test]
    fn dark_count_values() {
        assert_eq!(dark_count_prob(0.0, 10.0).unwrap(), 0.0);
        let p = dark_count_prob(25e-9, 10.0).unwrap();
        // first-order x - x²/2 with x = 2.5e-7
        let x: f64 = 2.5e-7;
        assert!((p - (x - x * x / 2.0)).abs() < 1e-20);
        assert!((p - 2.5e-7).abs() < 1e-13);
        assert_eq!(dark_count_prob(1.0, f64::INFINITY).unwrap(), 1.0);
        assert!(dark_count_prob(-1.0, 1.0).is_err());
    }

    #[test]
    fn afc_fully_reflective_input_mirror_stores_nothing() {
        let p = HardwareParams {
            mirror_r1: 1.0,
            ..Default::default()
        };
        for t in [0.0, 1e-6, 1e-4] {
            assert_eq!(afc_efficiency(t, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn afc_rejects_degenerate_cavity() {
        let p = HardwareParams {
            mirror_r1: 1.0,
            mirror_r2: 1.0,
            absorption_depth: 0.0,
            ..Default::default()
        };
        assert!(afc_efficiency(0.0, &p).is_err());
        let p = HardwareParams {
            comb_finesse: 0.0,
            ..Default::default()
        };
        assert!(afc_efficiency(0.0, &p).is_err());
    }

    proptest::proptest! {
        #[test]
        fn afc_stays_in_unit_interval(
            finesse in 1.0f64..100.0,
            depth in 0.0f64..10.0,
            r1 in 0.0f64..0.999,
            r2 in 0.0f64..=1.0,
            t in 0.0f64..1e-3,
        ) {
            let p = HardwareParams {
                comb_finesse: finesse,
                absorption_depth: depth,
                mirror_r1: r1,
                mirror_r2: r2,
                ..Default::default()
            };
            let eta = afc_efficiency(t, &p).unwrap();
            proptest::prop_assert!((0.0..=1.0).contains(&eta));
        }
    }

    #[test]
    fn afc_time_dependence_is_gaussian() {
        let p = HardwareParams::default();
        let eps = comb_dephasing_rate(p.comb_linewidth);
        let (t1, t2) = (2e-6, 40e-6);
        let ratio = afc_efficiency(t2, &p).unwrap() / afc_efficiency(t1, &p).unwrap();
        assert!((ratio - (-(eps * eps) * (t2 * t2 - t1 * t1)).exp()).abs() < 1e-12);
    }

    #[test]
    fn survival_noiseless_is_one() {
        let p = HardwareParams::noiseless();
        let timing = build_schedule(4, 0.0, 0.0, &p).unwrap();
        for r in &timing.records {
            assert_eq!(shot_survival_prob(r, &p).unwrap(), 1.0);
        }
    }

    #[test]
    fn survival_at_reference_point() {
        let p = HardwareParams::default();
        let timing = build_schedule(500, 1e-6, 1.0, &p).unwrap();
        for r in &timing.records {
            let s = shot_survival_prob(r, &p).unwrap();
            assert!((0.3..=0.5).contains(&s), "shot {} survival {s}", r.shot_index);
            let stages = StageSurvival::for_record(r, &p).unwrap();
            let min = stages.stages().iter().map(|x| x.0).fold(1.0, f64::min);
            assert!(s <= min);
        }
    }

    #[test]
    fn sample_loss_extremes_and_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| sample_loss(1.0, &mut rng).unwrap()));
        assert!((0..1000).all(|_| !sample_loss(0.0, &mut rng).unwrap()));
        assert!(sample_loss(1.2, &mut rng).is_err());
        let n = 1_000_000;
        let hits = (0..n).filter(|_| sample_loss(0.3, &mut rng).unwrap()).count();
        let f = hits as f64 / n as f64;
        assert!((f - 0.3).abs() <= 0.0014, "{f}");
    }

    #[test]
    fn default_params_validate() {
        HardwareParams::default().validate().unwrap();
        HardwareParams::noiseless().validate().unwrap();
        let bad = HardwareParams {
            detection_efficiency: 1.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
