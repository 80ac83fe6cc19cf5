//! Prover strategies.
//!
//! A proof commits to a prime (with certificate) and to a strategy whose
//! round responses are a deterministic function of the challenge prefix, so
//! a strategy is interchangeable with a static table of responses. The
//! honest prover computes true round polynomials by Boolean summation; the
//! cheating provers exist to exercise the soundness bound.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::arith;
use crate::cnf::ThreeCnf;
use crate::error::{Error, Result};
use crate::field::{Field, FieldElement};
use crate::primality::PrattCertificate;
use crate::unipoly::{interpolate, UnivariatePoly};

/// Largest legal coefficient count of a round polynomial for a formula with
/// `clause_count` clauses: degree at most `3m`, so `3m + 1` coefficients.
pub fn max_round_coefficients(clause_count: usize) -> usize {
    3 * clause_count + 1
}

/// A prover: the strategy component of a proof, plus the prime it committed
/// to. `respond` must be a pure function of `(round, prefix)`.
pub trait ProverStrategy: Send + Sync {
    fn field(&self) -> &Field;
    fn certificate(&self) -> &PrattCertificate;
    /// Round polynomial for 1-based `round`, given challenges `a_1..a_{round-1}`.
    fn respond(&self, round: usize, prefix: &[FieldElement]) -> Result<UnivariatePoly>;
    fn name(&self) -> &'static str;
}

fn check_round_shape(cnf: &ThreeCnf, round: usize, prefix: &[FieldElement]) -> Result<()> {
    let n = cnf.variable_count() as usize;
    if round == 0 || round > n {
        return Err(Error::InvalidParameter(format!(
            "round {round} outside 1..={n}"
        )));
    }
    if prefix.len() != round - 1 {
        return Err(Error::InvalidParameter(format!(
            "round {round} expects {} challenges, got {}",
            round - 1,
            prefix.len()
        )));
    }
    Ok(())
}

/// The honest prover: evaluates the true round polynomial at the first
/// `3m + 1` field elements (or all of `F_p` when the field is smaller, which
/// still reproduces the polynomial as a function) and interpolates. Each
/// evaluation is an exponential Boolean sum; that cost is inherent.
pub struct HonestProver {
    cnf: ThreeCnf,
    field: Field,
    certificate: PrattCertificate,
    suffix_budget: u32,
}

impl HonestProver {
    pub fn new(cnf: ThreeCnf, field: Field, certificate: PrattCertificate) -> Self {
        HonestProver {
            cnf,
            field,
            certificate,
            suffix_budget: arith::DEFAULT_SUFFIX_BUDGET,
        }
    }

    pub fn with_suffix_budget(mut self, budget_bits: u32) -> Self {
        self.suffix_budget = budget_bits;
        self
    }
}

impl ProverStrategy for HonestProver {
    fn field(&self) -> &Field {
        &self.field
    }

    fn certificate(&self) -> &PrattCertificate {
        &self.certificate
    }

    fn respond(&self, round: usize, prefix: &[FieldElement]) -> Result<UnivariatePoly> {
        check_round_shape(&self.cnf, round, prefix)?;
        let cap = max_round_coefficients(self.cnf.clause_count());
        let node_count = match self.field.prime().to_u64() {
            Some(p) if (p as u128) < cap as u128 => p as usize,
            _ => cap,
        };
        let mut points = Vec::with_capacity(node_count);
        for node in 0..node_count as u64 {
            let x = self.field.element_from_u64(node);
            let y = arith::partial_sum_with_budget(&self.cnf, prefix, &x, self.suffix_budget)?;
            points.push((x, y));
        }
        interpolate(&points)
    }

    fn name(&self) -> &'static str {
        "honest"
    }
}

/// Which way a cheating prover lies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheatKind {
    /// Uniformly random coefficients each round; usually dies at the first
    /// round-sum check.
    RandomPoly,
    /// Random coefficients with the constant term fixed so that
    /// `Q(0) + Q(1)` always matches the verifier's running value; passes
    /// every round check and can only die at the final check.
    SumConsistent,
}

/// A cheap adversary. Responses are derived from `(seed, round, prefix)`
/// through a hash, so replays are identical and the strategy is as static
/// as the honest one.
pub struct CheatingProver {
    kind: CheatKind,
    cnf: ThreeCnf,
    field: Field,
    certificate: PrattCertificate,
    seed: u64,
}

impl CheatingProver {
    pub fn new(
        kind: CheatKind,
        cnf: ThreeCnf,
        field: Field,
        certificate: PrattCertificate,
        seed: u64,
    ) -> Self {
        CheatingProver {
            kind,
            cnf,
            field,
            certificate,
            seed,
        }
    }

    fn round_rng(&self, round: usize, prefix: &[FieldElement]) -> ChaCha20Rng {
        let mut h = Sha256::new();
        h.update(b"scproof.cheater.v1");
        h.update(self.seed.to_be_bytes());
        h.update((round as u64).to_be_bytes());
        for challenge in prefix {
            let bytes = challenge.to_bytes();
            h.update((bytes.len() as u64).to_be_bytes());
            h.update(&bytes);
        }
        ChaCha20Rng::from_seed(h.finalize().into())
    }

    /// The running value the verifier will compare against in `round`:
    /// zero in round 1, otherwise this strategy's own previous polynomial
    /// evaluated at the last challenge.
    fn expected_running_value(&self, round: usize, prefix: &[FieldElement]) -> Result<FieldElement> {
        if round == 1 {
            return Ok(self.field.zero());
        }
        let previous = self.respond(round - 1, &prefix[..round - 2])?;
        previous.evaluate(&prefix[round - 2])
    }
}

impl ProverStrategy for CheatingProver {
    fn field(&self) -> &Field {
        &self.field
    }

    fn certificate(&self) -> &PrattCertificate {
        &self.certificate
    }

    fn respond(&self, round: usize, prefix: &[FieldElement]) -> Result<UnivariatePoly> {
        check_round_shape(&self.cnf, round, prefix)?;
        let mut rng = self.round_rng(round, prefix);
        let count = max_round_coefficients(self.cnf.clause_count());
        let mut coefficients: Vec<FieldElement> =
            (0..count).map(|_| self.field.sample(&mut rng)).collect();
        if self.kind == CheatKind::SumConsistent {
            // Q(0) + Q(1) = 2*c_0 + sum_{j>=1} c_j; solve for c_0.
            let target = self.expected_running_value(round, prefix)?;
            let mut tail = self.field.zero();
            for coefficient in &coefficients[1..] {
                tail = tail.add(coefficient)?;
            }
            let two_inverse = self.field.element_from_u64(2).inv()?;
            coefficients[0] = target.sub(&tail)?.mul(&two_inverse)?;
        }
        UnivariatePoly::new(self.field.clone(), coefficients)
    }

    fn name(&self) -> &'static str {
        match self.kind {
            CheatKind::RandomPoly => "cheat:random",
            CheatKind::SumConsistent => "cheat:sum-consistent",
        }
    }
}

/// Strategy selector as it appears on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategySpec {
    Honest,
    Cheat(CheatKind),
}

impl StrategySpec {
    pub fn build(
        &self,
        cnf: ThreeCnf,
        field: Field,
        certificate: PrattCertificate,
        seed: u64,
    ) -> Box<dyn ProverStrategy> {
        match self {
            StrategySpec::Honest => Box::new(HonestProver::new(cnf, field, certificate)),
            StrategySpec::Cheat(kind) => Box::new(CheatingProver::new(
                *kind,
                cnf,
                field,
                certificate,
                seed,
            )),
        }
    }
}

impl std::str::FromStr for StrategySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "honest" => Ok(StrategySpec::Honest),
            "cheat:random" => Ok(StrategySpec::Cheat(CheatKind::RandomPoly)),
            "cheat:sum-consistent" => Ok(StrategySpec::Cheat(CheatKind::SumConsistent)),
            other => Err(Error::InvalidParameter(format!(
                "unknown strategy {other:?} (expected honest, cheat:random, cheat:sum-consistent)"
            ))),
        }
    }
}

/// Exact maximum acceptance probability over *all* prover strategies, for a
/// formula whose Boolean sum is nonzero mod p (otherwise the honest strategy
/// is available and the value is 1).
///
/// Backward induction over the verifier's state. After each round the state
/// is (challenge prefix, claimed value); a claimed value is either true or
/// false. From a true claim the prover answers honestly forever and is
/// accepted with probability 1. From a false claim the prover must send some
/// `Q` with the right claimed sum, necessarily different from the true round
/// polynomial `T`; both have degree at most `d = 3m`, so they agree on at
/// most `min(d, p-1)` challenges. Agreeing challenges move to a true state
/// (value 1); all others move to a false state, whose value by induction does
/// not depend on which false value was claimed or on the prefix. Writing
/// `L_i` for the false-state value with `n - i + 1` rounds left:
///
///   L_{n+1} = 0,   L_i = (k + (p - k) * L_{i+1}) / p,   k = min(3m, p-1),
///
/// and the answer is `L_1`. Choosing the agreement set is constrained by the
/// claimed-sum condition, which can exclude isolated sets; ignoring that
/// constraint only ever rounds the value up, so the result is an upper bound
/// on every realizable strategy (and tight in the regimes the experiments
/// probe). It never exceeds the `n * 3m / p` union bound.
pub fn optimal_cheat_acceptance(cnf: &ThreeCnf, field: &Field) -> Result<BigRational> {
    let n = cnf.variable_count();
    if n > 2 {
        return Err(Error::Capacity {
            what: "optimal-cheat backward induction (variables)",
            limit: 2,
            requested: u64::from(n),
        });
    }
    let p = field.prime().to_u64().filter(|p| *p <= 1 << 13).ok_or(
        Error::Capacity {
            what: "optimal-cheat backward induction (prime)",
            limit: 1 << 13,
            requested: u64::MAX,
        },
    )?;

    let count = cnf.count_satisfying()?;
    if BigUint::from(count) % field.prime() == BigUint::zero() {
        // Honest play is available: acceptance probability exactly 1.
        return Ok(BigRational::one());
    }

    let degree = 3 * cnf.clause_count() as u64;
    let agreements = degree.min(p - 1);
    let p_rat = BigRational::from_integer(BigInt::from(p));
    let k_rat = BigRational::from_integer(BigInt::from(agreements));
    let mut lie_value = BigRational::zero();
    for _ in 0..n {
        lie_value = (&k_rat + (&p_rat - &k_rat) * lie_value) / &p_rat;
    }
    Ok(lie_value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::{parse_dimacs, random_3cnf};
    use crate::primality::{certify, pratt_verify};
    use num_bigint::BigInt;

    fn field_with_cert(p: u64) -> (Field, PrattCertificate) {
        let cert = certify(&BigUint::from(p)).unwrap();
        assert!(pratt_verify(&cert));
        (Field::from_u64(p), cert)
    }

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn honest_running_example() {
        let cnf = parse_dimacs("p cnf 1 2\n1 0\n-1 0\n").unwrap();
        let (field, cert) = field_with_cert(11);
        let prover = HonestProver::new(cnf, field.clone(), cert);
        let q = prover.respond(1, &[]).unwrap();
        assert_eq!(q.evaluate_u64(0).unwrap(), field.zero());
        assert_eq!(q.evaluate_u64(1).unwrap(), field.zero());
        assert_eq!(q.evaluate_u64(2).unwrap(), field.element_from_u64(8));
        assert!(q.coefficient_count() <= max_round_coefficients(2));
    }

    #[test]
    fn honest_first_round_sums_to_zero_on_unsat() {
        for seed in 0..6 {
            let cnf = random_3cnf(4, 24, seed).unwrap();
            if cnf.count_satisfying().unwrap() != 0 {
                continue;
            }
            let (field, cert) = field_with_cert(65537);
            let prover = HonestProver::new(cnf, field.clone(), cert);
            let q = prover.respond(1, &[]).unwrap();
            let sum = q
                .evaluate(&field.zero())
                .unwrap()
                .add(&q.evaluate(&field.one()).unwrap())
                .unwrap();
            assert!(sum.is_zero());
        }
    }

    #[test]
    fn honest_polynomial_matches_partial_sums() {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let cnf = random_3cnf(5, 9, 7).unwrap();
        let (field, cert) = field_with_cert(2_147_483_647);
        let prover = HonestProver::new(cnf.clone(), field.clone(), cert);
        for round in 1..=3usize {
            let prefix: Vec<FieldElement> =
                (0..round - 1).map(|_| field.sample(&mut rng)).collect();
            let q = prover.respond(round, &prefix).unwrap();
            for _ in 0..20 {
                let x = field.sample(&mut rng);
                assert_eq!(
                    q.evaluate(&x).unwrap(),
                    arith::partial_sum(&cnf, &prefix, &x).unwrap()
                );
            }
        }
    }

    #[test]
    fn honest_final_round_equals_formula_polynomial() {
        let mut rng = ChaCha20Rng::seed_from_u64(32);
        let cnf = random_3cnf(3, 6, 5).unwrap();
        let (field, cert) = field_with_cert(65537);
        let prover = HonestProver::new(cnf.clone(), field.clone(), cert);
        let prefix: Vec<FieldElement> = (0..2).map(|_| field.sample(&mut rng)).collect();
        let q = prover.respond(3, &prefix).unwrap();
        for _ in 0..20 {
            let x = field.sample(&mut rng);
            let mut point = prefix.clone();
            point.push(x.clone());
            assert_eq!(
                q.evaluate(&x).unwrap(),
                arith::eval_formula(&cnf, &point).unwrap()
            );
        }
    }

    #[test]
    fn sum_consistent_cheater_opens_with_zero_sum() {
        let cnf = parse_dimacs("p cnf 1 1\n1 0\n").unwrap();
        let (field, cert) = field_with_cert(11);
        for seed in 0..50 {
            let cheater =
                CheatingProver::new(CheatKind::SumConsistent, cnf.clone(), field.clone(), cert.clone(), seed);
            let q = cheater.respond(1, &[]).unwrap();
            let sum = q
                .evaluate(&field.zero())
                .unwrap()
                .add(&q.evaluate(&field.one()).unwrap())
                .unwrap();
            assert!(sum.is_zero(), "seed {seed}");
        }
    }

    #[test]
    fn sum_consistent_cheater_matches_running_value_in_later_rounds() {
        let mut rng = ChaCha20Rng::seed_from_u64(33);
        let cnf = random_3cnf(4, 8, 11).unwrap();
        let (field, cert) = field_with_cert(65537);
        let cheater = CheatingProver::new(CheatKind::SumConsistent, cnf, field.clone(), cert, 9);
        let mut prefix = Vec::new();
        let mut running = field.zero();
        for round in 1..=4usize {
            let q = cheater.respond(round, &prefix).unwrap();
            let sum = q
                .evaluate(&field.zero())
                .unwrap()
                .add(&q.evaluate(&field.one()).unwrap())
                .unwrap();
            assert_eq!(sum, running, "round {round}");
            let challenge = field.sample(&mut rng);
            running = q.evaluate(&challenge).unwrap();
            prefix.push(challenge);
        }
    }

    #[test]
    fn strategies_replay_identically() {
        let mut rng = ChaCha20Rng::seed_from_u64(34);
        let cnf = random_3cnf(3, 5, 2).unwrap();
        let (field, cert) = field_with_cert(65537);
        let strategies: Vec<Box<dyn ProverStrategy>> = vec![
            Box::new(HonestProver::new(cnf.clone(), field.clone(), cert.clone())),
            Box::new(CheatingProver::new(
                CheatKind::RandomPoly,
                cnf.clone(),
                field.clone(),
                cert.clone(),
                5,
            )),
            Box::new(CheatingProver::new(
                CheatKind::SumConsistent,
                cnf,
                field.clone(),
                cert,
                5,
            )),
        ];
        let prefix: Vec<FieldElement> = (0..1).map(|_| field.sample(&mut rng)).collect();
        for strategy in &strategies {
            assert_eq!(
                strategy.respond(2, &prefix).unwrap(),
                strategy.respond(2, &prefix).unwrap(),
                "{} not deterministic",
                strategy.name()
            );
        }
    }

    #[test]
    fn cheaters_differ_across_seeds_and_prefixes() {
        let cnf = random_3cnf(3, 5, 2).unwrap();
        let (field, cert) = field_with_cert(65537);
        let a = CheatingProver::new(CheatKind::RandomPoly, cnf.clone(), field.clone(), cert.clone(), 1);
        let b = CheatingProver::new(CheatKind::RandomPoly, cnf, field.clone(), cert, 2);
        assert_ne!(a.respond(1, &[]).unwrap(), b.respond(1, &[]).unwrap());
        let p1 = [field.element_from_u64(3)];
        let p2 = [field.element_from_u64(4)];
        assert_ne!(a.respond(2, &p1).unwrap(), a.respond(2, &p2).unwrap());
    }

    #[test]
    fn oracle_on_single_clause_example() {
        // SAT formula (x1 or x1 or x1), p = 11: the prover is forced to lie
        // in round 1 and a degree-3 lie agrees with the truth on at most 3
        // of the 11 challenges.
        let cnf = parse_dimacs("p cnf 1 1\n1 0\n").unwrap();
        let field = Field::from_u64(11);
        let value = optimal_cheat_acceptance(&cnf, &field).unwrap();
        assert_eq!(value, ratio(3, 11));
        // never above the degree union bound n * 3m / p
        assert!(value <= ratio(3, 11));
    }

    #[test]
    fn oracle_is_one_on_unsat() {
        let cnf = parse_dimacs("p cnf 1 2\n1 0\n-1 0\n").unwrap();
        let field = Field::from_u64(11);
        assert_eq!(
            optimal_cheat_acceptance(&cnf, &field).unwrap(),
            BigRational::one()
        );
    }

    #[test]
    fn oracle_stays_below_union_bound() {
        // the bound concerns satisfiable formulas; on UNSAT input the honest
        // strategy is available and the oracle correctly reports 1
        for seed in 0..12 {
            for (n, m, p) in [(1u32, 2usize, 13u64), (2, 3, 17), (2, 5, 31)] {
                let cnf = random_3cnf(n, m, seed).unwrap();
                if cnf.count_satisfying().unwrap() == 0 {
                    continue;
                }
                let field = Field::from_u64(p);
                let value = optimal_cheat_acceptance(&cnf, &field).unwrap();
                let bound = ratio((n as i64) * 3 * m as i64, p as i64);
                assert!(value <= bound.min(BigRational::one()), "n={n} m={m} p={p}");
            }
        }
    }

    #[test]
    fn oracle_budget_enforced() {
        let cnf = random_3cnf(3, 5, 0).unwrap();
        assert!(matches!(
            optimal_cheat_acceptance(&cnf, &Field::from_u64(11)),
            Err(Error::Capacity { .. })
        ));
        let cnf = random_3cnf(2, 5, 0).unwrap();
        assert!(matches!(
            optimal_cheat_acceptance(&cnf, &Field::from_u64(1 << 14)),
            Err(Error::Capacity { .. })
        ));
    }
}
