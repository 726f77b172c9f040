//! BB84 key distribution with authenticating (AU) qubits hidden in the
//! stream.
//!
//! Two embeddings are provided. In the symmetric one each party authenticates
//! the other with λ all-CX pairs (expected outcome always 0). In the
//! asymmetric one Alice sends 2λ targets: Bob verifies the first half and
//! publishes the outcomes F′, and checks the second half with the
//! half-verification circuit, whose statistics do not depend on the gate key.
//!
//! Data slots only see fiber and detector loss plus dark counts; the AU rounds
//! reuse the shot pipeline of [`crate::protocol`].

use num_complex::Complex64;
use rand::seq::index;
use rand::Rng;

use crate::classifier::{accept_condition_b, MlpModel};
use crate::error::{Error, Result};
use crate::noise::{dark_count_prob, transmission_prob, HardwareParams, LossCause, LossEvent};
use crate::protocol::{
    accept_matches, run_rounds, Attack, AcceptanceVerdict, Check, GateChoiceKey, LossPolicy, Role,
};
use crate::quantum::{gates, generation_stage, CMatrix, GateChoice, QuantumState, Register};
use crate::timing::build_schedule;

/// Maximum tolerated QBER before the key exchange is aborted.
pub const QBER_ABORT: f64 = 0.11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    /// Computational basis, `|0⟩ / |1⟩`.
    Z,
    /// Hadamard basis, `|+⟩ / |−⟩`.
    X,
}

impl Basis {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.random() {
            Basis::X
        } else {
            Basis::Z
        }
    }
}

/// Single-qubit state encoding `bit` in `basis`.
pub fn encode(bit: bool, basis: Basis) -> QuantumState {
    let s = QuantumState::basis(vec![Register::Target], bit as usize).expect("one-qubit basis state");
    match basis {
        Basis::Z => s,
        Basis::X => s
            .apply_unitary(&gates::hadamard(), &[Register::Target])
            .expect("hadamard on one qubit"),
    }
}

/// Measures a one-qubit state in `basis`.
pub fn measure_in<R: Rng + ?Sized>(state: &QuantumState, basis: Basis, rng: &mut R) -> Result<bool> {
    let reg = state.registers()[0];
    let s = match basis {
        Basis::Z => state.clone(),
        Basis::X => state.apply_unitary(&gates::hadamard(), &[reg])?,
    };
    Ok(s.measure(reg, rng)?.outcome)
}

/// Average over the four BB84 states, which is `I/2`.
pub fn data_slot_marginal() -> QuantumState {
    let mut acc = CMatrix::zeros(2, 2);
    for bit in [false, true] {
        for basis in [Basis::Z, Basis::X] {
            acc += encode(bit, basis).matrix() * Complex64::from(0.25);
        }
    }
    QuantumState::from_density(vec![Register::Target], acc).expect("average of states")
}

/// Marginal of the transmitted half of an AU pair, which is `I/2` for either
/// gate choice.
pub fn au_slot_marginal(m: GateChoice) -> QuantumState {
    generation_stage(m)
        .partial_trace(Register::Control)
        .expect("pair has a control register")
}

/// The pre-shared position string `K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionKey {
    positions: Vec<usize>,
    stream_length: usize,
}

impl PositionKey {
    pub fn new(mut positions: Vec<usize>, stream_length: usize) -> Result<Self> {
        positions.sort_unstable();
        if positions.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param("positions", "must be distinct"));
        }
        if let Some(&p) = positions.last() {
            if p >= stream_length {
                return Err(Error::param(
                    "positions",
                    format!("{p} is outside a stream of length {stream_length}"),
                ));
            }
        }
        Ok(Self {
            positions,
            stream_length,
        })
    }

    /// `count` distinct positions drawn uniformly from `[0, stream_length)`.
    pub fn random<R: Rng + ?Sized>(count: usize, stream_length: usize, rng: &mut R) -> Result<Self> {
        if count > stream_length {
            return Err(Error::param(
                "positions",
                format!("cannot place {count} AU qubits in {stream_length} slots"),
            ));
        }
        Self::new(index::sample(rng, stream_length, count).into_vec(), stream_length)
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn stream_length(&self) -> usize {
        self.stream_length
    }

    fn expect_len(&self, expected: usize) -> Result<()> {
        if self.len() != expected {
            return Err(Error::LengthMismatch {
                what: "position key",
                expected,
                actual: self.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Data { bit: bool, basis: Basis },
    /// Index into the session's block of entangled pairs.
    Au { pair: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bb84Stream {
    slots: Vec<Slot>,
}

impl Bb84Stream {
    /// Random data slots everywhere except at the key positions, which carry
    /// AU qubits in order.
    pub fn build<R: Rng + ?Sized>(key: &PositionKey, rng: &mut R) -> Self {
        let mut au = key.positions().iter().peekable();
        let mut pair = 0;
        let slots = (0..key.stream_length())
            .map(|i| {
                if au.peek() == Some(&&i) {
                    au.next();
                    pair += 1;
                    Slot::Au { pair: pair - 1 }
                } else {
                    Slot::Data {
                        bit: rng.random(),
                        basis: Basis::random(rng),
                    }
                }
            })
            .collect();
        Self { slots }
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn au_count(&self) -> usize {
        self.slots.iter().filter(|s| matches!(s, Slot::Au { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiftResult {
    pub alice_key: Vec<bool>,
    pub bob_key: Vec<bool>,
    /// Stream indices where Alice's and Bob's bases agreed.
    pub matching: Vec<usize>,
    pub qber: f64,
    /// Data qubits sent.
    pub sent: usize,
    /// Data qubits that produced a click at Bob (including dark counts).
    pub detected: usize,
    pub losses: Vec<LossEvent>,
}

/// Sends the data slots of `stream` to Bob and sifts.
fn transmit_data<R: Rng + ?Sized>(
    stream: &Bb84Stream,
    params: &HardwareParams,
    eavesdropper: bool,
    rng: &mut R,
) -> Result<SiftResult> {
    let survive = transmission_prob(params.distance_km, params.tau_db_per_km)? * params.detection_efficiency;
    let dark = dark_count_prob(params.capture_window, params.dark_count_frequency)?;
    let mut out = SiftResult {
        alice_key: Vec::new(),
        bob_key: Vec::new(),
        matching: Vec::new(),
        qber: 0.0,
        sent: 0,
        detected: 0,
        losses: Vec::new(),
    };
    for (i, slot) in stream.slots().iter().enumerate() {
        let Slot::Data { bit, basis } = *slot else {
            continue;
        };
        out.sent += 1;
        let mut state = encode(bit, basis);
        if eavesdropper {
            let eve_basis = Basis::random(rng);
            state = encode(measure_in(&state, eve_basis, rng)?, eve_basis);
        }
        let bob_basis = Basis::random(rng);
        let bob_bit = if rng.random::<f64>() < survive {
            measure_in(&state, bob_basis, rng)?
        } else if rng.random::<f64>() < dark {
            out.losses.push(LossEvent {
                cause: LossCause::DarkCountSubstitution,
                shot_index: i,
            });
            rng.random()
        } else {
            out.losses.push(LossEvent {
                cause: LossCause::Fiber,
                shot_index: i,
            });
            continue;
        };
        out.detected += 1;
        if bob_basis == basis {
            out.alice_key.push(bit);
            out.bob_key.push(bob_bit);
            out.matching.push(i);
        }
    }
    let errors = out
        .alice_key
        .iter()
        .zip(&out.bob_key)
        .filter(|(a, b)| a != b)
        .count();
    out.qber = if out.matching.is_empty() {
        0.0
    } else {
        errors as f64 / out.matching.len() as f64
    };
    Ok(out)
}

/// Plain BB84 over `stream_length` data qubits, optionally with an
/// intercept-resend eavesdropper on every qubit.
pub fn bb84_round<R: Rng + ?Sized>(
    stream_length: usize,
    params: &HardwareParams,
    eavesdropper: bool,
    rng: &mut R,
) -> Result<SiftResult> {
    if stream_length < 2 {
        return Err(Error::param("stream_length", "must be at least 2"));
    }
    let key = PositionKey::new(Vec::new(), stream_length)?;
    transmit_data(&Bb84Stream::build(&key, rng), params, eavesdropper, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Adversary {
    None,
    /// Impersonates Alice without her half of the pairs.
    ForgeAlice,
    /// Impersonates Bob without his half of the pairs.
    ForgeBob,
    /// Tampers with the AU qubits only, through random two-qubit unitaries.
    TamperAu,
    /// Intercept-resend on every transmitted qubit, data and AU alike.
    InterceptResend,
}

/// How a verifier turns a match string into a verdict.
#[derive(Debug, Clone, Copy)]
pub enum AcceptanceMethod<'a> {
    /// Condition a): `r₀₁ ≥ μ`.
    Threshold(f64),
    /// Condition b): the trained network.
    Network(&'a MlpModel),
}

impl AcceptanceMethod<'_> {
    pub fn judge(&self, matches: &[bool]) -> Result<AcceptanceVerdict> {
        match self {
            AcceptanceMethod::Threshold(mu) => accept_matches(matches, *mu),
            AcceptanceMethod::Network(model) => accept_condition_b(model, matches),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionStatus {
    KeyEstablished,
    AuthenticationFailed,
    QberAbort,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedSession {
    /// Bob's verdict on Alice.
    pub verdict_on_alice: AcceptanceVerdict,
    /// Alice's verdict on Bob.
    pub verdict_on_bob: AcceptanceVerdict,
    /// Present when both parties were accepted and the data slots were sifted.
    pub sift: Option<SiftResult>,
    pub status: SessionStatus,
    /// Outcomes Bob published (asymmetric scheme only).
    pub f_prime: Vec<bool>,
    /// First pair index of the block this session consumed.
    pub pool_offset: usize,
}

/// Entangled pairs shared at the initial meeting; each session consumes a
/// disjoint block of `4λ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairPool {
    total: usize,
    used: usize,
}

impl PairPool {
    pub fn new(total: usize) -> Self {
        Self { total, used: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.total - self.used
    }

    /// Reserves `count` pairs and returns the first index of the block.
    pub fn take(&mut self, count: usize) -> Result<usize> {
        if count > self.remaining() {
            return Err(Error::param(
                "pair pool",
                format!("{count} pairs requested, {} left", self.remaining()),
            ));
        }
        self.used += count;
        Ok(self.used - count)
    }
}

fn au_role(attacked: bool, adversary: Adversary) -> Role {
    match adversary {
        Adversary::InterceptResend => Role::Attacker(Attack::InterceptResend),
        Adversary::TamperAu => Role::Attacker(Attack::TamperUnitary),
        _ if attacked => Role::Attacker(Attack::HaarSubstitution),
        _ => Role::Legitimate,
    }
}

fn finish<R: Rng + ?Sized>(
    verdict_on_alice: AcceptanceVerdict,
    verdict_on_bob: AcceptanceVerdict,
    stream: &Bb84Stream,
    params: &HardwareParams,
    adversary: Adversary,
    rng: &mut R,
) -> Result<(Option<SiftResult>, SessionStatus)> {
    if !(verdict_on_alice.accepted && verdict_on_bob.accepted) {
        return Ok((None, SessionStatus::AuthenticationFailed));
    }
    let sift = transmit_data(stream, params, adversary == Adversary::InterceptResend, rng)?;
    let status = if sift.qber > QBER_ABORT {
        SessionStatus::QberAbort
    } else {
        SessionStatus::KeyEstablished
    };
    Ok((Some(sift), status))
}

fn check_same_stream(a: &PositionKey, b: &PositionKey) -> Result<()> {
    if a.stream_length() != b.stream_length() {
        return Err(Error::param(
            "position keys",
            "both directions must use the same stream length",
        ));
    }
    Ok(())
}

/// Symmetric embedding: `n` sequential sessions, each authenticating both
/// parties with λ all-CX pairs per direction.
///
/// `k_ab` places Alice's targets in the Alice→Bob stream; `k_ba` places Bob's
/// controls in the Bob→Alice stream. Key bits are sifted from the Alice→Bob
/// data slots.
#[allow(clippy::too_many_arguments)]
pub fn symmetric_session<R: Rng + ?Sized>(
    n: usize,
    lambda: usize,
    k_ab: &PositionKey,
    k_ba: &PositionKey,
    params: &HardwareParams,
    adversary: Adversary,
    acceptance: AcceptanceMethod<'_>,
    rng: &mut R,
) -> Result<Vec<EmbeddedSession>> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    k_ab.expect_len(lambda)?;
    k_ba.expect_len(lambda)?;
    check_same_stream(k_ab, k_ba)?;
    let timing = build_schedule(lambda, 0.0, params.distance_km, params)?;
    let key = GateChoiceKey::constant(GateChoice::Cx, lambda);
    let mut pool = PairPool::new(4 * lambda * n);
    let mut sessions = Vec::with_capacity(n);
    for _ in 0..n {
        let pool_offset = pool.take(4 * lambda)?;
        let stream = Bb84Stream::build(k_ab, rng);
        // Bob's stream carries decoys around his AU qubits; only its AU
        // slots matter here.
        let _ = Bb84Stream::build(k_ba, rng);
        let on_alice = run_rounds(
            &key,
            &timing.records,
            params,
            au_role(adversary == Adversary::ForgeAlice, adversary),
            Check::Verification,
            LossPolicy::RandomSubstitution,
            rng,
        )?;
        let on_bob = run_rounds(
            &key,
            &timing.records,
            params,
            au_role(adversary == Adversary::ForgeBob, adversary),
            Check::Verification,
            LossPolicy::RandomSubstitution,
            rng,
        )?;
        let verdict_on_alice = acceptance.judge(&on_alice.matches)?;
        let verdict_on_bob = acceptance.judge(&on_bob.matches)?;
        let (sift, status) = finish(verdict_on_alice, verdict_on_bob, &stream, params, adversary, rng)?;
        sessions.push(EmbeddedSession {
            verdict_on_alice,
            verdict_on_bob,
            sift,
            status,
            f_prime: Vec::new(),
            pool_offset,
        });
    }
    Ok(sessions)
}

/// Asymmetric embedding: `n` sequential sessions over a one-way Alice→Bob
/// channel.
///
/// Alice sends 2λ targets at the positions of `k`. Bob verifies the first λ
/// and publishes the outcomes F′, which Alice compares against the first half
/// of `f` (verdict on Bob). Bob runs half-verification on the other λ and
/// accepts Alice on the rate of 0 outcomes.
#[allow(clippy::too_many_arguments)]
pub fn asymmetric_session<R: Rng + ?Sized>(
    n: usize,
    lambda: usize,
    k: &PositionKey,
    f: &GateChoiceKey,
    params: &HardwareParams,
    adversary: Adversary,
    acceptance: AcceptanceMethod<'_>,
    rng: &mut R,
) -> Result<Vec<EmbeddedSession>> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    k.expect_len(2 * lambda)?;
    if f.len() != 2 * lambda {
        return Err(Error::LengthMismatch {
            what: "gate-choice key",
            expected: 2 * lambda,
            actual: f.len(),
        });
    }
    let timing = build_schedule(2 * lambda, 0.0, params.distance_km, params)?;
    let (first_records, second_records) = timing.records.split_at(lambda);
    let (f_first, f_second) = f.split_at(lambda);
    let role = au_role(adversary == Adversary::ForgeAlice, adversary);
    let mut pool = PairPool::new(4 * lambda * n);
    let mut sessions = Vec::with_capacity(n);
    for _ in 0..n {
        let pool_offset = pool.take(4 * lambda)?;
        let stream = Bb84Stream::build(k, rng);
        let f_prime = if adversary == Adversary::ForgeBob {
            (0..lambda).map(|_| rng.random()).collect()
        } else {
            run_rounds(
                &f_first,
                first_records,
                params,
                role,
                Check::Verification,
                LossPolicy::RandomSubstitution,
                rng,
            )?
            .outcomes
        };
        let matches: Vec<bool> = f_prime
            .iter()
            .zip(f_first.to_bools())
            .map(|(a, b)| *a == b)
            .collect();
        let verdict_on_bob = acceptance.judge(&matches)?;
        let half = run_rounds(
            &f_second,
            second_records,
            params,
            role,
            Check::HalfVerification,
            LossPolicy::RandomSubstitution,
            rng,
        )?;
        let verdict_on_alice = acceptance.judge(&half.matches)?;
        let (sift, status) = finish(verdict_on_alice, verdict_on_bob, &stream, params, adversary, rng)?;
        sessions.push(EmbeddedSession {
            verdict_on_alice,
            verdict_on_bob,
            sift,
            status,
            f_prime,
            pool_offset,
        });
    }
    Ok(sessions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn half() -> QuantumState {
        QuantumState::maximally_mixed(vec![Register::Target]).unwrap()
    }

    #[test]
    fn slot_marginals_are_maximally_mixed() {
        assert!(data_slot_marginal().max_deviation(half().matrix()) < 1e-15);
        for m in [GateChoice::Cx, GateChoice::Czx] {
            assert!(au_slot_marginal(m).max_deviation(half().matrix()) < 1e-15);
        }
    }

    #[test]
    fn position_key_validation() {
        assert!(PositionKey::new(vec![3, 1, 3], 10).is_err());
        assert!(PositionKey::new(vec![10], 10).is_err());
        let k = PositionKey::new(vec![7, 2], 10).unwrap();
        assert_eq!(k.positions(), &[2, 7]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = PositionKey::random(20, 50, &mut rng).unwrap();
        assert_eq!(k.len(), 20);
        assert!(PositionKey::random(51, 50, &mut rng).is_err());
    }

    #[test]
    fn stream_places_au_slots_at_key_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = PositionKey::random(15, 60, &mut rng).unwrap();
        let s = Bb84Stream::build(&k, &mut rng);
        assert_eq!(s.len(), 60);
        assert_eq!(s.au_count(), 15);
        for (n, p) in k.positions().iter().enumerate() {
            assert_eq!(s.slots()[*p], Slot::Au { pair: n });
        }
    }

    #[test]
    fn noiseless_round_has_no_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = bb84_round(2000, &HardwareParams::noiseless(), false, &mut rng).unwrap();
        assert_eq!(r.qber, 0.0);
        assert_eq!(r.alice_key, r.bob_key);
        assert_eq!(r.detected, 2000);
    }

    #[test]
    fn lossy_round_drops_photons() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = HardwareParams {
            distance_km: 20.0,
            ..HardwareParams::default()
        };
        let r = bb84_round(5000, &p, false, &mut rng).unwrap();
        assert!(r.detected < 5000);
        assert_eq!(r.sent, 5000);
        assert!(r.losses.iter().all(|l| l.cause == LossCause::Fiber || l.cause == LossCause::DarkCountSubstitution));
    }

    #[test]
    fn pool_depletes() {
        let mut pool = PairPool::new(10);
        assert_eq!(pool.take(4).unwrap(), 0);
        assert_eq!(pool.take(4).unwrap(), 4);
        assert!(pool.take(4).is_err());
    }

    #[test]
    fn noiseless_symmetric_session_establishes_key() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = HardwareParams::noiseless();
        let k_ab = PositionKey::random(20, 200, &mut rng).unwrap();
        let k_ba = PositionKey::random(20, 200, &mut rng).unwrap();
        let out = symmetric_session(3, 20, &k_ab, &k_ba, &p, Adversary::None, AcceptanceMethod::Threshold(1.0), &mut rng)
            .unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[2].pool_offset, 160);
        for s in &out {
            assert_eq!(s.status, SessionStatus::KeyEstablished);
            assert_eq!(s.sift.as_ref().unwrap().qber, 0.0);
        }
    }

    #[test]
    fn forged_alice_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = HardwareParams::noiseless();
        let k_ab = PositionKey::random(30, 100, &mut rng).unwrap();
        let k_ba = PositionKey::random(30, 100, &mut rng).unwrap();
        let out = symmetric_session(5, 30, &k_ab, &k_ba, &p, Adversary::ForgeAlice, AcceptanceMethod::Threshold(1.0), &mut rng)
            .unwrap();
        for s in &out {
            assert!(!s.verdict_on_alice.accepted);
            assert!(s.verdict_on_bob.accepted);
            assert_eq!(s.status, SessionStatus::AuthenticationFailed);
            assert!(s.sift.is_none());
        }
    }

    #[test]
    fn tampering_au_qubits_aborts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = HardwareParams::noiseless();
        let k_ab = PositionKey::random(40, 100, &mut rng).unwrap();
        let k_ba = PositionKey::random(40, 100, &mut rng).unwrap();
        let out = symmetric_session(4, 40, &k_ab, &k_ba, &p, Adversary::TamperAu, AcceptanceMethod::Threshold(0.9), &mut rng)
            .unwrap();
        assert!(out.iter().all(|s| s.status == SessionStatus::AuthenticationFailed));
    }

    #[test]
    fn noiseless_asymmetric_session() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = HardwareParams::noiseless();
        let k = PositionKey::random(40, 120, &mut rng).unwrap();
        let f = GateChoiceKey::random(40, &mut rng);
        let out = asymmetric_session(2, 20, &k, &f, &p, Adversary::None, AcceptanceMethod::Threshold(1.0), &mut rng)
            .unwrap();
        let (first, _) = f.split_at(20);
        for s in &out {
            assert_eq!(s.f_prime, first.to_bools());
            assert_eq!(s.verdict_on_alice.r01, 1.0);
            assert_eq!(s.status, SessionStatus::KeyEstablished);
        }
    }

    #[test]
    fn asymmetric_rejects_bad_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = HardwareParams::noiseless();
        let k = PositionKey::random(10, 50, &mut rng).unwrap();
        let f = GateChoiceKey::random(10, &mut rng);
        assert!(asymmetric_session(1, 10, &k, &f, &p, Adversary::None, AcceptanceMethod::Threshold(1.0), &mut rng).is_err());
    }
}
