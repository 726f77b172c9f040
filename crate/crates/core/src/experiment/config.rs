//! `key = value` run configuration.
//!
//! Keys live in two sections, `hardware.*` (one per [`HardwareParams`] field,
//! SI units) and `run.*`. Lists are comma separated. `#` starts a comment.
//! Every key is optional; missing keys keep the reference defaults.
//!
//! ```text
//! hardware.tau_db_per_km = 0.17
//! run.lambda = 500
//! run.distances_km = 0,1,2,5,10
//! run.wait_us = 0,1,5
//! ```

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::noise::{HardwareParams, MemoryModel};
use crate::protocol::Attack;
use crate::bb84::Adversary;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    UserServer,
    Symmetric,
    Asymmetric,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "user_server" => Ok(Scheme::UserServer),
            "symmetric" => Ok(Scheme::Symmetric),
            "asymmetric" => Ok(Scheme::Asymmetric),
            other => Err(Error::Config(format!(
                "unknown scheme `{other}` (expected user_server, symmetric or asymmetric)"
            ))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::UserServer => "user_server",
            Scheme::Symmetric => "symmetric",
            Scheme::Asymmetric => "asymmetric",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcceptanceKind {
    Static,
    Dnn,
}

impl FromStr for AcceptanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(AcceptanceKind::Static),
            "dnn" => Ok(AcceptanceKind::Dnn),
            other => Err(Error::Config(format!("unknown acceptance `{other}` (expected static or dnn)"))),
        }
    }
}

impl fmt::Display for AcceptanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AcceptanceKind::Static => "static",
            AcceptanceKind::Dnn => "dnn",
        })
    }
}

fn attack_name(a: Attack) -> &'static str {
    match a {
        Attack::HaarSubstitution => "haar",
        Attack::TamperUnitary => "tamper",
        Attack::InterceptResend => "intercept_resend",
    }
}

fn parse_attack(s: &str) -> Result<Attack> {
    match s {
        "haar" => Ok(Attack::HaarSubstitution),
        "tamper" => Ok(Attack::TamperUnitary),
        "intercept_resend" => Ok(Attack::InterceptResend),
        other => Err(Error::Config(format!(
            "unknown attack `{other}` (expected haar, tamper or intercept_resend)"
        ))),
    }
}

fn adversary_name(a: Adversary) -> &'static str {
    match a {
        Adversary::None => "none",
        Adversary::ForgeAlice => "forge_alice",
        Adversary::ForgeBob => "forge_bob",
        Adversary::TamperAu => "tamper_au",
        Adversary::InterceptResend => "intercept_resend",
    }
}

fn parse_adversary(s: &str) -> Result<Adversary> {
    match s {
        "none" => Ok(Adversary::None),
        "forge_alice" => Ok(Adversary::ForgeAlice),
        "forge_bob" => Ok(Adversary::ForgeBob),
        "tamper_au" => Ok(Adversary::TamperAu),
        "intercept_resend" => Ok(Adversary::InterceptResend),
        other => Err(Error::Config(format!("unknown adversary `{other}`"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub hardware: HardwareParams,
    pub lambda: usize,
    pub distances_km: Vec<f64>,
    /// Waiting times `T` in microseconds.
    pub wait_us: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub acceptance: AcceptanceKind,
    /// Threshold for static acceptance.
    pub mu: f64,
    /// Run the attacker instead of the legitimate party.
    pub attacker: bool,
    /// Attack used in user/server sessions and classifier datasets.
    pub attack: Attack,
    /// Adversary used by the BB84 schemes when `attacker` is set.
    pub adversary: Adversary,
    /// Sessions per class when building classifier datasets.
    pub samples_per_class: usize,
    pub epochs: usize,
    /// Data qubits per BB84 stream.
    pub data_slots: usize,
    /// Sequential BB84 sessions per replicate.
    pub sessions: usize,
    /// Trained network for `acceptance = dnn`.
    pub weights: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            hardware: HardwareParams::default(),
            lambda: 500,
            distances_km: vec![1.0],
            wait_us: vec![1.0],
            replicates: 6,
            seed: 1,
            scheme: Scheme::UserServer,
            acceptance: AcceptanceKind::Static,
            mu: 0.6,
            attacker: false,
            attack: Attack::HaarSubstitution,
            adversary: Adversary::ForgeAlice,
            samples_per_class: 3000,
            epochs: 100,
            data_slots: 1000,
            sessions: 1,
            weights: None,
            output: PathBuf::from("out"),
        }
    }
}

fn bad(key: &str, value: &str, why: impl fmt::Display) -> Error {
    Error::Config(format!("`{key} = {value}`: {why}"))
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| bad(key, value, e))
}

pub fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|t| num::<f64>(key, t.trim()))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn list(xs: &[f64]) -> String {
    xs.iter().map(|x| real(*x)).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Waiting times in seconds.
    pub fn wait_times(&self) -> Vec<f64> {
        self.wait_us.iter().map(|t| t * 1e-6).collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let h = &mut self.hardware;
        match key {
            "hardware.tau_db_per_km" => h.tau_db_per_km = num(key, value)?,
            "hardware.distance_km" => h.distance_km = num(key, value)?,
            "hardware.fiber_velocity" => h.fiber_velocity = num(key, value)?,
            "hardware.source_frequency" => h.source_frequency = num(key, value)?,
            "hardware.dark_count_frequency" => h.dark_count_frequency = num(key, value)?,
            "hardware.capture_window" => h.capture_window = num(key, value)?,
            "hardware.detection_efficiency" => h.detection_efficiency = num(key, value)?,
            "hardware.t1" => h.t1 = num(key, value)?,
            "hardware.t2" => h.t2 = num(key, value)?,
            "hardware.memory" => {
                h.memory = match value {
                    "afc" => MemoryModel::Afc,
                    "ideal" => MemoryModel::Ideal,
                    _ => return Err(bad(key, value, "expected afc or ideal")),
                }
            }
            "hardware.comb_finesse" => h.comb_finesse = num(key, value)?,
            "hardware.absorption_depth" => h.absorption_depth = num(key, value)?,
            "hardware.mirror_r1" => h.mirror_r1 = num(key, value)?,
            "hardware.mirror_r2" => h.mirror_r2 = num(key, value)?,
            "hardware.comb_linewidth" => h.comb_linewidth = num(key, value)?,
            "hardware.drive_store_time" => h.drive_store_time = num(key, value)?,
            "hardware.drive_recover_time" => h.drive_recover_time = num(key, value)?,
            "hardware.cx_error" => h.cx_error = num(key, value)?,
            "hardware.czx_error" => h.czx_error = num(key, value)?,
            "hardware.hadamard_error" => h.hadamard_error = num(key, value)?,
            "hardware.readout_error" => h.readout_error = num(key, value)?,
            "hardware.preset" => match value {
                "reference" => *h = HardwareParams::default(),
                "noiseless" => *h = HardwareParams::noiseless(),
                _ => return Err(bad(key, value, "expected reference or noiseless")),
            },
            "run.lambda" => self.lambda = num(key, value)?,
            "run.distances_km" => self.distances_km = parse_list(key, value)?,
            "run.wait_us" => self.wait_us = parse_list(key, value)?,
            "run.replicates" => self.replicates = num(key, value)?,
            "run.seed" => self.seed = num(key, value)?,
            "run.scheme" => self.scheme = value.parse()?,
            "run.acceptance" => self.acceptance = value.parse()?,
            "run.mu" => self.mu = num(key, value)?,
            "run.attacker" => self.attacker = parse_bool(key, value)?,
            "run.attack" => self.attack = parse_attack(value)?,
            "run.adversary" => self.adversary = parse_adversary(value)?,
            "run.samples_per_class" => self.samples_per_class = num(key, value)?,
            "run.epochs" => self.epochs = num(key, value)?,
            "run.data_slots" => self.data_slots = num(key, value)?,
            "run.sessions" => self.sessions = num(key, value)?,
            "run.weights" => self.weights = Some(PathBuf::from(value)),
            "run.output" => self.output = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.hardware
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.lambda == 0 {
            return fail("run.lambda must be at least 1");
        }
        if self.replicates == 0 {
            return fail("run.replicates must be at least 1");
        }
        if self.distances_km.is_empty() || self.wait_us.is_empty() {
            return fail("distance and waiting-time lists must be non-empty");
        }
        if self.distances_km.iter().chain(&self.wait_us).any(|x| !(*x >= 0.0 && x.is_finite())) {
            return fail("distances and waiting times must be finite and non-negative");
        }
        if !(self.mu > 0.5 && self.mu <= 1.0) {
            return fail("run.mu must lie in (0.5, 1]");
        }
        if self.sessions == 0 {
            return fail("run.sessions must be at least 1");
        }
        if self.acceptance == AcceptanceKind::Dnn && self.weights.is_none() && self.scheme != Scheme::UserServer {
            return fail("run.acceptance = dnn needs run.weights");
        }
        Ok(())
    }

    /// Canonical dump of every key; parsing it gives back the same config.
    pub fn to_config_string(&self) -> String {
        let h = &self.hardware;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("string write");
        kv("hardware.tau_db_per_km", real(h.tau_db_per_km));
        kv("hardware.distance_km", real(h.distance_km));
        kv("hardware.fiber_velocity", real(h.fiber_velocity));
        kv("hardware.source_frequency", real(h.source_frequency));
        kv("hardware.dark_count_frequency", real(h.dark_count_frequency));
        kv("hardware.capture_window", real(h.capture_window));
        kv("hardware.detection_efficiency", real(h.detection_efficiency));
        kv("hardware.t1", real(h.t1));
        kv("hardware.t2", real(h.t2));
        kv(
            "hardware.memory",
            match h.memory {
                MemoryModel::Afc => "afc".into(),
                MemoryModel::Ideal => "ideal".into(),
            },
        );
        kv("hardware.comb_finesse", real(h.comb_finesse));
        kv("hardware.absorption_depth", real(h.absorption_depth));
        kv("hardware.mirror_r1", real(h.mirror_r1));
        kv("hardware.mirror_r2", real(h.mirror_r2));
        kv("hardware.comb_linewidth", real(h.comb_linewidth));
        kv("hardware.drive_store_time", real(h.drive_store_time));
        kv("hardware.drive_recover_time", real(h.drive_recover_time));
        kv("hardware.cx_error", real(h.cx_error));
        kv("hardware.czx_error", real(h.czx_error));
        kv("hardware.hadamard_error", real(h.hadamard_error));
        kv("hardware.readout_error", real(h.readout_error));
        kv("run.lambda", self.lambda.to_string());
        kv("run.distances_km", list(&self.distances_km));
        kv("run.wait_us", list(&self.wait_us));
        kv("run.replicates", self.replicates.to_string());
        kv("run.seed", self.seed.to_string());
        kv("run.scheme", self.scheme.to_string());
        kv("run.acceptance", self.acceptance.to_string());
        kv("run.mu", real(self.mu));
        kv("run.attacker", self.attacker.to_string());
        kv("run.attack", attack_name(self.attack).into());
        kv("run.adversary", adversary_name(self.adversary).into());
        kv("run.samples_per_class", self.samples_per_class.to_string());
        kv("run.epochs", self.epochs.to_string());
        kv("run.data_slots", self.data_slots.to_string());
        kv("run.sessions", self.sessions.to_string());
        if let Some(w) = &self.weights {
            kv("run.weights", w.display().to_string());
        }
        kv("run.output", self.output.display().to_string());
        s
    }

    /// 64-bit FNV-1a hash of the canonical dump, ignoring `run.output`.
    pub fn provenance(&self) -> u64 {
        self.to_config_string()
            .lines()
            .filter(|l| !l.starts_with("run.output"))
            .flat_map(|l| l.bytes().chain(*b"\n"))
            .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_table() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.hardware, HardwareParams::default());
        assert_eq!(c.replicates, 6);
        c.validate().unwrap();
    }

    #[test]
    fn parses_keys_and_comments() {
        let c = RunConfig::parse(
            "# header\nhardware.tau_db_per_km = 0.2  # tweak\nrun.lambda=100\nrun.distances_km = 0, 5,10\nrun.wait_us = 1\nrun.scheme = asymmetric\nrun.attacker = true\n",
        )
        .unwrap();
        assert_eq!(c.hardware.tau_db_per_km, 0.2);
        assert_eq!(c.lambda, 100);
        assert_eq!(c.distances_km, vec![0.0, 5.0, 10.0]);
        assert_eq!(c.wait_us, vec![1.0]);
        assert_eq!(c.scheme, Scheme::Asymmetric);
        assert!(c.attacker);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::parse("run.lambda"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("run.nope = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("run.lambda = -3"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("run.scheme = ring"), Err(Error::Config(_))));
        let mut c = RunConfig::parse("run.replicates = 0").unwrap();
        assert!(c.validate().is_err());
        c = RunConfig::parse("hardware.detection_efficiency = 1.5").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn canonical_dump_round_trips() {
        let mut c = RunConfig::parse("hardware.preset = noiseless\nrun.wait_us = 0,1,5,10,15\nrun.weights = w.txt").unwrap();
        c.hardware.t1 = 1.234_567_890_123_456_7e-4;
        let back = RunConfig::parse(&c.to_config_string()).unwrap();
        assert_eq!(back.hardware.t1, c.hardware.t1);
        assert_eq!(back.hardware.memory, c.hardware.memory);
        assert_eq!(back.to_config_string(), c.to_config_string());
        assert_eq!(back.provenance(), c.provenance());
        assert_ne!(RunConfig::default().provenance(), c.provenance());
    }
}
