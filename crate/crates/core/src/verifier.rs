//! The polynomial-time verifier.
//!
//! Setup checks (certificate, prime range) are followed by the n-round loop:
//! each round receives a univariate polynomial, enforces the coefficient cap
//! and the running-sum check, and answers with a uniform challenge; after the
//! last round the verifier evaluates the arithmetized formula at the challenge
//! point itself and compares. The verifier's work is `O(n*m)` field
//! operations plus that single evaluation; it never counts models.
//!
//! Every session produces a [`Transcript`], a canonical JSON record stable
//! enough to diff across runs and across the in-process/networked paths.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::One;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::arith;
use crate::cnf::{ThreeCnf, ThreeDnf};
use crate::error::{Error, Result};
use crate::field::{Field, FieldElement};
use crate::primality::{pratt_verify, protocol_prime_interval, PrattCertificate};
use crate::prover::{max_round_coefficients, ProverStrategy};
use crate::ser::hex_bytes;
use crate::wire;

/// Which prime regime a proof claims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Prime constrained to the protocol interval for the formula's variable
    /// count; sound with astronomical margin but desk-feasible only for small n.
    PaperStrict,
    /// Any certified prime with `p > 2^n`; the soundness error is whatever
    /// [`soundness_bound`] reports, possibly vacuous for tiny primes.
    Relaxed,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::PaperStrict => write!(f, "paper-strict"),
            Mode::Relaxed => write!(f, "relaxed"),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-strict" => Ok(Mode::PaperStrict),
            "relaxed" => Ok(Mode::Relaxed),
            other => Err(Error::InvalidParameter(format!(
                "unknown mode {other:?} (expected paper-strict or relaxed)"
            ))),
        }
    }
}

/// Why a proof was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RejectReason {
    BadCertificate,
    PrimeOutOfRange,
    CoefficientOverflow { round: usize },
    RoundSumMismatch { round: usize },
    FinalCheckMismatch,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::BadCertificate => write!(f, "bad-certificate"),
            RejectReason::PrimeOutOfRange => write!(f, "prime-out-of-range"),
            RejectReason::CoefficientOverflow { round } => {
                write!(f, "coefficient-overflow@{round}")
            }
            RejectReason::RoundSumMismatch { round } => write!(f, "round-sum-mismatch@{round}"),
            RejectReason::FinalCheckMismatch => write!(f, "final-check-mismatch"),
        }
    }
}

/// Why a session aborted without a verdict. Aborts are transport or protocol
/// failures and are never folded into accept/reject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbortCode {
    ProtocolOrder,
    FrameTooLarge,
    MalformedFrame,
    VersionMismatch,
    FormulaMismatch,
    ProverCapacity,
    Transport,
    Internal,
}

impl std::fmt::Display for AbortCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let text = match self {
            AbortCode::ProtocolOrder => "protocol-order",
            AbortCode::FrameTooLarge => "frame-too-large",
            AbortCode::MalformedFrame => "malformed-frame",
            AbortCode::VersionMismatch => "version-mismatch",
            AbortCode::FormulaMismatch => "formula-mismatch",
            AbortCode::ProverCapacity => "prover-capacity",
            AbortCode::Transport => "transport",
            AbortCode::Internal => "internal",
        };
        write!(f, "{text}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Verdict {
    Accept,
    Reject { reason: RejectReason },
    Abort { code: AbortCode, detail: String },
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }

    pub fn is_abort(&self) -> bool {
        matches!(self, Verdict::Abort { .. })
    }
}

/// One protocol round as the verifier saw it: the polynomial's wire bytes and
/// the challenge drawn afterwards (absent when the round was rejected before
/// a challenge was drawn). The challenge of the final round is drawn but
/// never transmitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub polynomial: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub challenge: Option<String>,
}

/// Complete record of one protocol session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub mode: Mode,
    #[serde(with = "crate::ser::biguint_hex")]
    pub prime: BigUint,
    pub certificate_digest: String,
    pub formula_digest: String,
    pub variable_count: u32,
    pub clause_count: usize,
    pub rounds: Vec<RoundRecord>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub final_claimed: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub final_recomputed: Option<String>,
    pub verdict: Verdict,
}

impl Transcript {
    /// Canonical compact JSON; byte-identical across runs with equal inputs.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("transcript serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Source of verifier randomness: either a seeded/OS rng or an explicit
/// challenge vector (used by the exhaustive experiments).
pub trait ChallengeSource {
    fn draw(&mut self, field: &Field) -> Result<FieldElement>;
}

pub struct RngChallenges<R: RngCore>(pub R);

impl<R: RngCore> ChallengeSource for RngChallenges<R> {
    fn draw(&mut self, field: &Field) -> Result<FieldElement> {
        Ok(field.sample(&mut self.0))
    }
}

pub struct FixedChallenges {
    values: std::vec::IntoIter<FieldElement>,
}

impl FixedChallenges {
    pub fn new(values: Vec<FieldElement>) -> Self {
        FixedChallenges {
            values: values.into_iter(),
        }
    }
}

impl ChallengeSource for FixedChallenges {
    fn draw(&mut self, field: &Field) -> Result<FieldElement> {
        let value = self.values.next().ok_or_else(|| {
            Error::InvalidParameter("explicit challenge vector exhausted".into())
        })?;
        if value.field() != field {
            return Err(Error::ModulusMismatch);
        }
        Ok(value)
    }
}

/// A round polynomial as received, keeping the exact wire bytes for the
/// transcript next to the parsed form. The degree cap is enforced on the
/// coefficient count as declared on the wire, not after canonical trimming.
pub struct ReceivedPoly {
    pub wire_bytes: Vec<u8>,
    pub poly: crate::unipoly::UnivariatePoly,
    pub declared_coefficients: usize,
}

/// Session failure (transport, protocol order, prover capacity, ...).
#[derive(Debug, Clone)]
pub struct SessionAbort {
    pub code: AbortCode,
    pub detail: String,
}

/// Where round polynomials come from: an in-process strategy or the far end
/// of a TCP session. Implementations forward the previous challenge to the
/// prover as a side effect of requesting the next round.
pub trait RoundSource {
    fn round_poly(
        &mut self,
        round: usize,
        previous_challenge: Option<&FieldElement>,
    ) -> std::result::Result<ReceivedPoly, SessionAbort>;

    /// Final notification; the networked source sends the verdict message.
    fn finish(&mut self, _verdict: &Verdict) {}
}

struct LocalRounds<'a> {
    prover: &'a dyn ProverStrategy,
    prefix: Vec<FieldElement>,
    width: usize,
}

impl RoundSource for LocalRounds<'_> {
    fn round_poly(
        &mut self,
        round: usize,
        previous_challenge: Option<&FieldElement>,
    ) -> std::result::Result<ReceivedPoly, SessionAbort> {
        if let Some(challenge) = previous_challenge {
            self.prefix.push(challenge.clone());
        }
        let poly = self.prover.respond(round, &self.prefix).map_err(|e| {
            let code = match e {
                Error::Capacity { .. } => AbortCode::ProverCapacity,
                _ => AbortCode::Internal,
            };
            SessionAbort {
                code,
                detail: e.to_string(),
            }
        })?;
        let wire_bytes = wire::encode_polynomial(&poly, self.width);
        let declared_coefficients = poly.coefficient_count();
        Ok(ReceivedPoly {
            wire_bytes,
            poly,
            declared_coefficients,
        })
    }
}

/// Static checks on the proof's setup half: the certificate must verify and
/// certify exactly the claimed prime, and the prime must be in range for the
/// mode (the protocol interval, or `p > 2^n` in relaxed mode).
pub fn verify_setup(
    prime: &BigUint,
    certificate: &PrattCertificate,
    variable_count: u32,
    c_p: u32,
    mode: Mode,
) -> std::result::Result<(), RejectReason> {
    if certificate.prime != *prime || !pratt_verify(certificate) {
        return Err(RejectReason::BadCertificate);
    }
    match mode {
        Mode::Relaxed => {
            let floor = BigUint::one() << variable_count;
            if *prime <= floor {
                return Err(RejectReason::PrimeOutOfRange);
            }
        }
        Mode::PaperStrict => {
            // A degenerate interval contains no prime at all.
            let (lo, hi) = match protocol_prime_interval(variable_count, c_p) {
                Ok(bounds) => bounds,
                Err(_) => return Err(RejectReason::PrimeOutOfRange),
            };
            if !(*prime > lo && *prime <= hi) {
                return Err(RejectReason::PrimeOutOfRange);
            }
        }
    }
    Ok(())
}

/// Drives one full session against an arbitrary round source. Aborts and
/// rejections end up inside the transcript; an `Err` here means the caller
/// misused the API (e.g. an explicit challenge vector ran out).
pub fn drive_session(
    cnf: &ThreeCnf,
    field: &Field,
    certificate_digest: [u8; 32],
    mode: Mode,
    source: &mut dyn RoundSource,
    challenges: &mut dyn ChallengeSource,
) -> Result<Transcript> {
    let n = cnf.variable_count() as usize;
    let cap = max_round_coefficients(cnf.clause_count());
    let width = wire::element_width(field.prime());

    let mut rounds: Vec<RoundRecord> = Vec::with_capacity(n);
    let mut challenge_point: Vec<FieldElement> = Vec::with_capacity(n);
    let mut running = field.zero();
    let mut previous: Option<FieldElement> = None;
    let mut early_verdict: Option<Verdict> = None;
    let mut final_claimed = None;
    let mut final_recomputed = None;

    for round in 1..=n {
        let received = match source.round_poly(round, previous.as_ref()) {
            Ok(received) => received,
            Err(abort) => {
                early_verdict = Some(Verdict::Abort {
                    code: abort.code,
                    detail: abort.detail,
                });
                break;
            }
        };
        let polynomial = hex_bytes::to_hex(&received.wire_bytes);
        if received.declared_coefficients > cap {
            rounds.push(RoundRecord {
                round,
                polynomial,
                challenge: None,
            });
            early_verdict = Some(Verdict::Reject {
                reason: RejectReason::CoefficientOverflow { round },
            });
            break;
        }
        let sum = received
            .poly
            .evaluate(&field.zero())?
            .add(&received.poly.evaluate(&field.one())?)?;
        if sum != running {
            rounds.push(RoundRecord {
                round,
                polynomial,
                challenge: None,
            });
            early_verdict = Some(Verdict::Reject {
                reason: RejectReason::RoundSumMismatch { round },
            });
            break;
        }
        let challenge = challenges.draw(field)?;
        running = received.poly.evaluate(&challenge)?;
        rounds.push(RoundRecord {
            round,
            polynomial,
            challenge: Some(hex_bytes::to_hex(&wire::encode_element_fixed(
                &challenge, width,
            ))),
        });
        challenge_point.push(challenge.clone());
        previous = Some(challenge);
    }

    let verdict = match early_verdict {
        Some(verdict) => verdict,
        None => {
            let recomputed = arith::eval_formula(cnf, &challenge_point)?;
            final_claimed = Some(hex_bytes::to_hex(&wire::encode_element_fixed(
                &running, width,
            )));
            final_recomputed = Some(hex_bytes::to_hex(&wire::encode_element_fixed(
                &recomputed, width,
            )));
            if recomputed == running {
                Verdict::Accept
            } else {
                Verdict::Reject {
                    reason: RejectReason::FinalCheckMismatch,
                }
            }
        }
    };
    source.finish(&verdict);

    Ok(Transcript {
        mode,
        prime: field.prime().clone(),
        certificate_digest: hex_bytes::to_hex(&certificate_digest),
        formula_digest: hex_bytes::to_hex(&cnf.digest()),
        variable_count: cnf.variable_count(),
        clause_count: cnf.clause_count(),
        rounds,
        final_claimed,
        final_recomputed,
        verdict,
    })
}

/// One in-process protocol run. Assumes [`verify_setup`] already passed.
pub fn run_sumcheck(
    cnf: &ThreeCnf,
    prover: &dyn ProverStrategy,
    challenges: &mut dyn ChallengeSource,
    mode: Mode,
) -> Result<Transcript> {
    let field = prover.field().clone();
    let width = wire::element_width(field.prime());
    let mut source = LocalRounds {
        prover,
        prefix: Vec::new(),
        width,
    };
    drive_session(
        cnf,
        &field,
        prover.certificate().digest(),
        mode,
        &mut source,
        challenges,
    )
}

#[derive(Debug, Clone, Copy)]
pub struct VerifySettings {
    pub mode: Mode,
    pub c_p: u32,
    pub trials: u32,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            mode: Mode::Relaxed,
            c_p: 2,
            trials: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerificationOutcome {
    pub accepted: bool,
    pub transcripts: Vec<Transcript>,
}

pub(crate) fn setup_failure_transcript(
    cnf: &ThreeCnf,
    prime: &BigUint,
    certificate: &PrattCertificate,
    mode: Mode,
    reason: RejectReason,
) -> Transcript {
    Transcript {
        mode,
        prime: prime.clone(),
        certificate_digest: hex_bytes::to_hex(&certificate.digest()),
        formula_digest: hex_bytes::to_hex(&cnf.digest()),
        variable_count: cnf.variable_count(),
        clause_count: cnf.clause_count(),
        rounds: Vec::new(),
        final_claimed: None,
        final_recomputed: None,
        verdict: Verdict::Reject { reason },
    }
}

/// Full verification of an UNSAT claim: setup checks once, then `trials`
/// independent protocol runs. The proof is accepted only if every run
/// accepts (one observed rejection is already disqualifying, so the loop
/// stops at the first non-accept); repetition drives the soundness error to
/// `(n*3m/p)^trials`.
pub fn verify_unsat(
    cnf: &ThreeCnf,
    prover: &dyn ProverStrategy,
    settings: &VerifySettings,
    challenges: &mut dyn ChallengeSource,
) -> Result<VerificationOutcome> {
    if let Err(reason) = verify_setup(
        prover.field().prime(),
        prover.certificate(),
        cnf.variable_count(),
        settings.c_p,
        settings.mode,
    ) {
        return Ok(VerificationOutcome {
            accepted: false,
            transcripts: vec![setup_failure_transcript(
                cnf,
                prover.field().prime(),
                prover.certificate(),
                settings.mode,
                reason,
            )],
        });
    }
    let mut transcripts = Vec::with_capacity(settings.trials as usize);
    let mut accepted = true;
    for _ in 0..settings.trials.max(1) {
        let transcript = run_sumcheck(cnf, prover, challenges, settings.mode)?;
        let ok = transcript.verdict.is_accept();
        transcripts.push(transcript);
        if !ok {
            accepted = false;
            break;
        }
    }
    Ok(VerificationOutcome {
        accepted,
        transcripts,
    })
}

/// Verification of a 3DNF tautology claim: by De Morgan the claim is exactly
/// that the negated 3CNF is unsatisfiable, and the prover strategy must have
/// been built for that negation.
pub fn verify_dnf_tautology(
    dnf: &ThreeDnf,
    prover: &dyn ProverStrategy,
    settings: &VerifySettings,
    challenges: &mut dyn ChallengeSource,
) -> Result<VerificationOutcome> {
    let negated = dnf.negation();
    verify_unsat(&negated, prover, settings, challenges)
}

/// Threshold below which the headline soundness bound is reported but not
/// asserted: at n = 1 the binomial is zero and the bound cannot hold
/// literally, and the theorem only claims it for large enough n.
pub const PAPER_BOUND_MIN_VARIABLES: u32 = 2;

/// The two soundness errors the harness reports for a run at (n, m, p):
/// the headline bound `n*C(2n,3)/p` and the per-round degree union bound
/// `n*3m/p`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoundnessBound {
    pub variable_count: u32,
    pub clause_count: usize,
    pub paper_bound: BigRational,
    pub degree_bound: BigRational,
    /// Whether `paper_bound <= 1/8`, the regime the theory relies on.
    pub paper_within_eighth: bool,
    /// Bounds above 1 say nothing; possible in relaxed mode.
    pub paper_vacuous: bool,
    pub degree_vacuous: bool,
}

impl SoundnessBound {
    /// The headline bound is only asserted at or above this many variables.
    pub fn paper_bound_applicable(&self, min_variables: u32) -> bool {
        self.variable_count >= min_variables && !self.paper_vacuous
    }
}

pub fn soundness_bound(variable_count: u32, clause_count: usize, prime: &BigUint) -> SoundnessBound {
    let n = u64::from(variable_count);
    // C(2n, 3) = 2n(2n-1)(2n-2)/6
    let binom = if n >= 2 {
        BigUint::from(2 * n) * BigUint::from(2 * n - 1) * BigUint::from(2 * n - 2)
            / BigUint::from(6u32)
    } else {
        BigUint::from(0u32)
    };
    let p = BigInt::from(prime.clone());
    let paper_bound = BigRational::new(BigInt::from(BigUint::from(n) * binom), p.clone());
    let degree_bound = BigRational::new(
        BigInt::from(n) * BigInt::from(3 * clause_count as u64),
        p,
    );
    let one = BigRational::one();
    let eighth = BigRational::new(BigInt::from(1), BigInt::from(8));
    SoundnessBound {
        variable_count,
        clause_count,
        paper_within_eighth: paper_bound <= eighth,
        paper_vacuous: paper_bound > one,
        degree_vacuous: degree_bound > one,
        paper_bound,
        degree_bound,
    }
}
