//! The λ-round user/server CX/CZX authentication session.
//!
//! Each round the server prepares `(|00⟩ + (−1)^m |11⟩)/√2`, sends the target
//! to the user, and later verifies the returned target against its stored
//! control. A legitimate user reproduces `m` on the control register; anyone
//! without the original target gets a fair coin.
//!
//! Noise pipeline per shot: noisy generation, the six loss stages of
//! [`StageSurvival`], T1/T2 damping on both stored qubits, noisy verification
//! and a readout flip. A lost photon yields a uniformly random outcome bit
//! under [`LossPolicy::RandomSubstitution`] or is dropped under
//! [`LossPolicy::Discard`].

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::noise::{sample_loss, HardwareParams, LossEvent, StageSurvival};
use crate::quantum::{
    forged_pair_from, gates, generation_stage_noisy, haar_random_qubit, haar_random_unitary,
    protocol_half_circuit, verification_circuit, GateChoice, GateErrors, NoiseChannel,
    QuantumState, Register,
};
use crate::timing::{PhotonRecord, SessionTiming};

/// Gate-choice key: bit `i` is `mᵢ` (0 ⇒ CX, 1 ⇒ CZX).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateChoiceKey {
    bits: Vec<GateChoice>,
}

impl GateChoiceKey {
    /// I.i.d. uniform key of length `lambda`.
    pub fn random<R: Rng + ?Sized>(lambda: usize, rng: &mut R) -> Self {
        Self {
            bits: (0..lambda).map(|_| GateChoice::from_bit(rng.random())).collect(),
        }
    }

    /// Every round uses the same gate (the all-CX key of the symmetric scheme).
    pub fn constant(m: GateChoice, lambda: usize) -> Self {
        Self {
            bits: vec![m; lambda],
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        Self {
            bits: bits.iter().map(|b| GateChoice::from_bit(*b)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn choices(&self) -> &[GateChoice] {
        &self.bits
    }

    pub fn to_bools(&self) -> Vec<bool> {
        self.bits.iter().map(|m| m.bit()).collect()
    }

    /// Splits into the first `at` rounds and the rest.
    pub fn split_at(&self, at: usize) -> (GateChoiceKey, GateChoiceKey) {
        let (a, b) = self.bits.split_at(at.min(self.bits.len()));
        (Self { bits: a.to_vec() }, Self { bits: b.to_vec() })
    }
}

/// How an attacker produces the qubit it hands back for verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Attack {
    /// Returns a fresh Haar-random qubit in place of the target.
    HaarSubstitution,
    /// Entangles the (intercepted) target with a one-qubit ancilla through a
    /// Haar-random unitary and returns the ancilla.
    TamperUnitary,
    /// Measures the target in a random Z/X basis and re-sends the collapsed
    /// state; the legitimate holder then proceeds as usual.
    InterceptResend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Legitimate,
    Attacker(Attack),
}

impl Role {
    pub fn is_attacker(self) -> bool {
        matches!(self, Role::Attacker(_))
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Legitimate => f.write_str("legitimate"),
            Role::Attacker(_) => f.write_str("attacker"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossPolicy {
    /// A lost photon records a uniformly random outcome.
    #[default]
    RandomSubstitution,
    /// Lost photons are dropped from the transcript.
    Discard,
}

/// Which check the verifier runs on a returned pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    /// Full verification; a match means reading `m` on the control.
    Verification,
    /// Half-verification of the asymmetric scheme; a match means reading 0.
    HalfVerification,
}

impl Check {
    pub fn expected(self, m: GateChoice) -> bool {
        match self {
            Check::Verification => m.expected_outcome(),
            Check::HalfVerification => false,
        }
    }
}

/// Per-session record of outcomes and matches.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    /// `S`: `true` where the outcome equals the expected bit.
    pub matches: Vec<bool>,
    pub outcomes: Vec<bool>,
    /// Shot index of each kept round (all shots unless lost ones were dropped).
    pub shots: Vec<usize>,
    /// Loss record for every emitted shot.
    pub losses: Vec<Option<LossEvent>>,
    pub role: Role,
}

impl Transcript {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn lost_count(&self) -> usize {
        self.losses.iter().filter(|l| l.is_some()).count()
    }
}

/// Gate states and channels that are fixed for a whole session.
pub(crate) struct ShotEngine<'a> {
    params: &'a HardwareParams,
    errors: GateErrors,
    generated: [QuantumState; 2],
    readout: NoiseChannel,
}

impl<'a> ShotEngine<'a> {
    pub(crate) fn new(params: &'a HardwareParams) -> Result<Self> {
        params.validate()?;
        let errors = params.gate_errors();
        Ok(Self {
            params,
            errors,
            generated: [
                generation_stage_noisy(GateChoice::Cx, &errors)?,
                generation_stage_noisy(GateChoice::Czx, &errors)?,
            ],
            readout: NoiseChannel::readout_flip(errors.readout)?,
        })
    }

    fn damp(&self, state: QuantumState, reg: Register, t: f64) -> Result<QuantumState> {
        let mut s = state;
        if self.params.t1.is_finite() && t > 0.0 {
            s = NoiseChannel::amplitude_damping(t, self.params.t1)?.apply(&s, &[reg])?;
        }
        if self.params.t2.is_finite() && t > 0.0 {
            s = NoiseChannel::phase_damping(t, self.params.t2)?.apply(&s, &[reg])?;
        }
        Ok(s)
    }

    /// Runs one shot and returns `(outcome, loss)`; a lost shot's outcome is
    /// a fair coin.
    pub(crate) fn run<R: Rng + ?Sized>(
        &self,
        m: GateChoice,
        record: &PhotonRecord,
        role: Role,
        check: Check,
        rng: &mut R,
    ) -> Result<(bool, Option<LossEvent>)> {
        let survival = StageSurvival::for_record(record, self.params)?;
        // A substituted qubit starts at the user's side, so only the return
        // leg and the server memory apply to it.
        let skip_user_side = matches!(
            role,
            Role::Attacker(Attack::HaarSubstitution | Attack::TamperUnitary)
        );
        let stages = survival.stages();
        let first = if skip_user_side { 3 } else { 0 };
        for (p, cause) in &stages[first..] {
            if !sample_loss(*p, rng)? {
                let loss = LossEvent {
                    cause: *cause,
                    shot_index: record.shot_index,
                };
                return Ok((rng.random(), Some(loss)));
            }
        }

        let generated = self.generated[m.bit() as usize].clone();
        let state = match role {
            Role::Legitimate => self.damp(generated, Register::Target, record.t_store_user)?,
            Role::Attacker(Attack::HaarSubstitution) => generated
                .partial_trace(Register::Target)?
                .tensor(&haar_random_qubit(Register::Target, rng))?,
            Role::Attacker(Attack::TamperUnitary) => {
                let g = haar_random_unitary(4, rng);
                let rho_a = haar_random_qubit(Register::Attacker, rng);
                forged_pair_from(&generated, &g, &rho_a)?
            }
            Role::Attacker(Attack::InterceptResend) => {
                let collapsed = intercept_resend(&generated, Register::Target, rng)?;
                self.damp(collapsed, Register::Target, record.t_store_user)?
            }
        };
        let state = self.damp(state, Register::Control, record.t_store_server)?;
        let pre = match check {
            Check::Verification => verification_circuit(&state, &self.errors)?,
            Check::HalfVerification => protocol_half_circuit(&state, &self.errors)?,
        };
        let p1 = pre.probability(Register::Control, true)?;
        let outcome = rng.random::<f64>() < p1;
        Ok((self.readout.flip_outcome(outcome, rng), None))
    }
}

/// Measures `reg` in a uniformly random Z/X basis and re-prepares the
/// observed basis state.
pub fn intercept_resend<R: Rng + ?Sized>(
    state: &QuantumState,
    reg: Register,
    rng: &mut R,
) -> Result<QuantumState> {
    let x_basis: bool = rng.random();
    let h = gates::hadamard();
    let rotated = if x_basis {
        state.apply_unitary(&h, &[reg])?
    } else {
        state.clone()
    };
    let collapsed = rotated.measure(reg, rng)?.post_state;
    if x_basis {
        collapsed.apply_unitary(&h, &[reg])
    } else {
        Ok(collapsed)
    }
}

pub(crate) fn run_rounds<R: Rng + ?Sized>(
    key: &GateChoiceKey,
    records: &[PhotonRecord],
    params: &HardwareParams,
    role: Role,
    check: Check,
    policy: LossPolicy,
    rng: &mut R,
) -> Result<Transcript> {
    if key.len() != records.len() {
        return Err(Error::LengthMismatch {
            what: "gate-choice key",
            expected: records.len(),
            actual: key.len(),
        });
    }
    let engine = ShotEngine::new(params)?;
    let n = key.len();
    let mut t = Transcript {
        matches: Vec::with_capacity(n),
        outcomes: Vec::with_capacity(n),
        shots: Vec::with_capacity(n),
        losses: Vec::with_capacity(n),
        role,
    };
    for (m, record) in key.choices().iter().zip(records) {
        let (outcome, loss) = engine.run(*m, record, role, check, rng)?;
        t.losses.push(loss);
        if loss.is_some() && policy == LossPolicy::Discard {
            continue;
        }
        t.outcomes.push(outcome);
        t.matches.push(outcome == check.expected(*m));
        t.shots.push(record.shot_index);
    }
    Ok(t)
}

/// One λ-round user/server session with lost photons substituted by random
/// outcomes.
pub fn run_session<R: Rng + ?Sized>(
    key: &GateChoiceKey,
    timing: &SessionTiming,
    params: &HardwareParams,
    role: Role,
    rng: &mut R,
) -> Result<Transcript> {
    run_session_with(key, timing, params, role, LossPolicy::default(), rng)
}

pub fn run_session_with<R: Rng + ?Sized>(
    key: &GateChoiceKey,
    timing: &SessionTiming,
    params: &HardwareParams,
    role: Role,
    policy: LossPolicy,
    rng: &mut R,
) -> Result<Transcript> {
    if key.len() != timing.lambda {
        return Err(Error::LengthMismatch {
            what: "gate-choice key",
            expected: timing.lambda,
            actual: key.len(),
        });
    }
    run_rounds(key, &timing.records, params, role, Check::Verification, policy, rng)
}

/// Fraction of `true` entries.
pub fn match_rate(bits: &[bool]) -> Result<f64> {
    if bits.is_empty() {
        return Err(Error::Empty("match string"));
    }
    Ok(bits.iter().filter(|b| **b).count() as f64 / bits.len() as f64)
}

/// `r₀₁`: mean of the match string.
pub fn r01(transcript: &Transcript) -> Result<f64> {
    match_rate(&transcript.matches)
}

/// Smallest meaningful threshold, `1/2 + 1/√(2λ)`.
pub fn mu_lower_bound(lambda: usize) -> Result<f64> {
    if lambda == 0 {
        return Err(Error::param("lambda", "must be at least 1"));
    }
    Ok(0.5 + 1.0 / (2.0 * lambda as f64).sqrt())
}

/// Chebyshev bound `1 / (2λ(μ − 1/2)²)` on an attacker reaching `r₀₁ ≥ μ`.
/// Thresholds below `mu_lower_bound(λ)` give a vacuous bound and are rejected;
/// at the boundary itself the bound is 1.
pub fn chebyshev_bound(lambda: usize, mu: f64) -> Result<f64> {
    let lower = mu_lower_bound(lambda)?;
    if !(mu >= lower - 1e-12) || mu > 1.0 {
        return Err(Error::param(
            "mu",
            format!("{mu} is below the meaningful threshold {lower} for λ = {lambda}"),
        ));
    }
    let d = mu - 0.5;
    Ok((1.0 / (2.0 * lambda as f64 * d * d)).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceVerdict {
    pub r01: f64,
    pub mu: f64,
    pub accepted: bool,
    /// Chebyshev bound on the forgery probability; `None` when `μ` does not
    /// exceed the meaningful threshold for this λ.
    pub bound: Option<f64>,
}

/// Threshold rule on an arbitrary match string.
pub fn accept_matches(matches: &[bool], mu: f64) -> Result<AcceptanceVerdict> {
    if !(mu > 0.5 && mu <= 1.0) {
        return Err(Error::param("mu", format!("{mu} is outside (1/2, 1]")));
    }
    let r = match_rate(matches)?;
    let bound = if mu > mu_lower_bound(matches.len())? {
        Some(chebyshev_bound(matches.len(), mu)?)
    } else {
        None
    };
    Ok(AcceptanceVerdict {
        r01: r,
        mu,
        accepted: r >= mu,
        bound,
    })
}

/// Acceptance condition a): accept iff `r₀₁ ≥ μ`.
pub fn accept_condition_a(transcript: &Transcript, mu: f64) -> Result<AcceptanceVerdict> {
    accept_matches(&transcript.matches, mu)
}

/// Threshold grid `{lo/100, …, hi/100}`, built from integers so grid points
/// coincide exactly with rates `k/100`.
pub fn mu_grid(lo_percent: u32, hi_percent: u32) -> Vec<f64> {
    (lo_percent..=hi_percent).map(|k| f64::from(k) / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub mu: f64,
    /// Fraction of all samples classified correctly.
    pub frequency: f64,
    /// `μ` is at or below the meaningful threshold for this λ.
    pub vacuous: bool,
}

/// Correct-classification frequency of `r₀₁ ≥ μ` for each threshold, given
/// the rates of legitimate and attacker transcripts.
pub fn static_sweep(
    legit_rates: &[f64],
    attacker_rates: &[f64],
    lambda: usize,
    grid: &[f64],
) -> Result<Vec<SweepPoint>> {
    if legit_rates.is_empty() || attacker_rates.is_empty() {
        return Err(Error::Empty("sweep needs both classes"));
    }
    let lower = mu_lower_bound(lambda)?;
    let total = (legit_rates.len() + attacker_rates.len()) as f64;
    Ok(grid
        .iter()
        .map(|&mu| {
            let tp = legit_rates.iter().filter(|r| **r >= mu).count();
            let tn = attacker_rates.iter().filter(|r| **r < mu).count();
            SweepPoint {
                mu,
                frequency: (tp + tn) as f64 / total,
                vacuous: mu <= lower,
            }
        })
        .collect())
}

/// Best point of a sweep; earlier grid points win ties.
pub fn best_sweep_point(points: &[SweepPoint]) -> Option<SweepPoint> {
    points.iter().copied().fold(None, |best, p| match best {
        Some(b) if b.frequency >= p.frequency => Some(b),
        _ => Some(p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timing::build_schedule;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn transcript(bits: &[u8]) -> Transcript {
        Transcript {
            matches: bits.iter().map(|b| *b == 1).collect(),
            outcomes: vec![false; bits.len()],
            shots: (0..bits.len()).collect(),
            losses: vec![None; bits.len()],
            role: Role::Legitimate,
        }
    }

    #[test]
    fn r01_values() {
        assert_eq!(r01(&transcript(&[1, 1, 1, 1])).unwrap(), 1.0);
        assert_eq!(r01(&transcript(&[0, 1, 0, 1])).unwrap(), 0.5);
        assert!(matches!(r01(&transcript(&[])), Err(Error::Empty(_))));
    }

    #[test]
    fn lower_bound_values() {
        assert!((mu_lower_bound(100).unwrap() - (0.5 + 1.0 / 200f64.sqrt())).abs() < 1e-15);
        assert!((mu_lower_bound(100).unwrap() - 0.5707).abs() < 1e-4);
        assert_eq!(mu_lower_bound(2).unwrap(), 1.0);
        assert!((mu_lower_bound(100_000_000).unwrap() - 0.5).abs() < 1e-4);
        assert!(mu_lower_bound(0).is_err());
    }

    #[test]
    fn chebyshev_values() {
        assert!((chebyshev_bound(100, 0.6).unwrap() - 0.5).abs() < 1e-12);
        let lb = mu_lower_bound(100).unwrap();
        assert!((chebyshev_bound(100, lb).unwrap() - 1.0).abs() < 1e-12);
        assert!(chebyshev_bound(100, 0.55).is_err());
    }

    #[test]
    fn condition_a_examples() {
        let v = accept_condition_a(&transcript(&[1; 20]), 0.9).unwrap();
        assert!(v.accepted);
        assert!(v.bound.is_some());
        let v = accept_condition_a(&transcript(&[0, 1, 0, 1]), 0.6).unwrap();
        assert!(!v.accepted);
        // λ = 4: lower bound 1.0, so no bound
        assert!(v.bound.is_none());
        assert!(accept_condition_a(&transcript(&[1]), 0.5).is_err());
        assert!(accept_condition_a(&transcript(&[1]), 1.1).is_err());
    }

    #[test]
    fn noiseless_legitimate_session_matches_every_round() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = HardwareParams::noiseless();
        let timing = build_schedule(200, 1e-6, 2.0, &p).unwrap();
        let key = GateChoiceKey::random(200, &mut rng);
        let t = run_session(&key, &timing, &p, Role::Legitimate, &mut rng).unwrap();
        assert_eq!(r01(&t).unwrap(), 1.0);
        assert_eq!(t.outcomes, key.to_bools());
        assert_eq!(t.lost_count(), 0);
    }

    #[test]
    fn session_rejects_mismatched_key() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = HardwareParams::noiseless();
        let timing = build_schedule(5, 0.0, 0.0, &p).unwrap();
        let key = GateChoiceKey::random(4, &mut rng);
        assert!(matches!(
            run_session(&key, &timing, &p, Role::Legitimate, &mut rng),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn discard_policy_drops_lost_rounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = HardwareParams::default();
        let timing = build_schedule(300, 1e-6, 5.0, &p).unwrap();
        let key = GateChoiceKey::random(300, &mut rng);
        let t = run_session_with(
            &key,
            &timing,
            &p,
            Role::Legitimate,
            LossPolicy::Discard,
            &mut rng,
        )
        .unwrap();
        assert_eq!(t.losses.len(), 300);
        assert_eq!(t.len() + t.lost_count(), 300);
        assert!(t.len() < 300);
        // with lost rounds removed, the rate reflects only surviving photons
        assert!(r01(&t).unwrap() > 0.7);
    }

    #[test]
    fn sweep_and_best_point() {
        let legit = [0.8, 0.7, 0.9];
        let attack = [0.5, 0.6, 0.4];
        let grid = mu_grid(50, 100);
        let pts = static_sweep(&legit, &attack, 10, &grid).unwrap();
        assert_eq!(pts.len(), 51);
        let best = best_sweep_point(&pts).unwrap();
        assert_eq!(best.frequency, 1.0);
        // first perfect threshold is 0.61
        assert_eq!(best.mu, 0.61);
        assert!(best.vacuous);
    }

    #[test]
    fn intercept_resend_outputs_basis_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let bell = crate::quantum::generation_stage(GateChoice::Cx);
        for _ in 0..10 {
            let s = intercept_resend(&bell, Register::Target, &mut rng).unwrap();
            let t = s.partial_trace(Register::Control).unwrap();
            assert!((t.purity() - 1.0).abs() < 1e-12);
        }
    }
}
