//! Experiment drivers: empirical acceptance probabilities with exact and
//! Monte-Carlo estimators, and the completeness/soundness experiment runners
//! behind the CLI. Every emitted record embeds the seeds, prime, mode and
//! bound values needed to reproduce it.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cnf::{harvest_instance, ThreeCnf};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::primality::{generate_certified_prime, PrimeRequest};
use crate::prover::{ProverStrategy, StrategySpec};
use crate::verifier::{
    run_sumcheck, soundness_bound, FixedChallenges, Mode, RngChallenges, Verdict,
};

/// Exhaustive acceptance enumerates at most this many challenge vectors.
pub const DEFAULT_EXHAUSTIVE_RUN_BUDGET: u64 = 1 << 24;

/// Two-sided 99% normal quantile used for Wilson intervals.
pub const WILSON_Z_99: f64 = 2.575_829_303_548_900_4;

/// Wilson score interval for `accepts` successes out of `samples`.
pub fn wilson_interval(accepts: u64, samples: u64, z: f64) -> (f64, f64) {
    if samples == 0 {
        return (0.0, 1.0);
    }
    let n = samples as f64;
    let p_hat = accepts as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p_hat + z2 / (2.0 * n)) / denom;
    let half = z * ((p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n)).sqrt()) / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct AcceptanceEstimate {
    pub samples: u64,
    pub accepts: u64,
    pub rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

impl AcceptanceEstimate {
    pub fn wilson_half_width(&self) -> f64 {
        (self.wilson_high - self.wilson_low) / 2.0
    }
}

/// Derives independent sub-seeds from a master seed, so that every random
/// stream in an experiment is reproducible from the master seed alone.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(b"scproof.seed.v1");
    h.update(master.to_be_bytes());
    h.update(label.as_bytes());
    h.update(index.to_be_bytes());
    let digest = h.finalize();
    u64::from_be_bytes(digest[..8].try_into().unwrap())
}

/// Acceptance rate over `samples` protocol runs with independent seeded
/// challenge vectors. Reproducible bit-for-bit from `seed`.
pub fn monte_carlo_acceptance(
    cnf: &ThreeCnf,
    strategy: &dyn ProverStrategy,
    samples: u64,
    seed: u64,
) -> Result<AcceptanceEstimate> {
    if samples == 0 {
        return Err(Error::InvalidParameter(
            "monte carlo needs at least one sample".into(),
        ));
    }
    let mut accepts = 0u64;
    for index in 0..samples {
        let mut challenges = RngChallenges(ChaCha20Rng::seed_from_u64(derive_seed(
            seed, "challenge", index,
        )));
        let transcript = run_sumcheck(cnf, strategy, &mut challenges, Mode::Relaxed)?;
        match transcript.verdict {
            Verdict::Accept => accepts += 1,
            Verdict::Reject { .. } => {}
            Verdict::Abort { code, detail } => {
                return Err(Error::InvalidParameter(format!(
                    "local protocol run aborted ({code}): {detail}"
                )))
            }
        }
    }
    let (wilson_low, wilson_high) = wilson_interval(accepts, samples, WILSON_Z_99);
    Ok(AcceptanceEstimate {
        samples,
        accepts,
        rate: accepts as f64 / samples as f64,
        wilson_low,
        wilson_high,
    })
}

/// Exact acceptance probability by enumerating every challenge vector in
/// `F_p^n`; returns the count of accepting vectors over `p^n` as a rational.
pub fn exhaustive_acceptance(cnf: &ThreeCnf, strategy: &dyn ProverStrategy) -> Result<BigRational> {
    exhaustive_acceptance_with_budget(cnf, strategy, DEFAULT_EXHAUSTIVE_RUN_BUDGET)
}

pub fn exhaustive_acceptance_with_budget(
    cnf: &ThreeCnf,
    strategy: &dyn ProverStrategy,
    budget: u64,
) -> Result<BigRational> {
    let field = strategy.field().clone();
    let p = field.prime().to_u64().ok_or(Error::Capacity {
        what: "exhaustive challenge enumeration (prime)",
        limit: budget,
        requested: u64::MAX,
    })?;
    let n = cnf.variable_count();
    let total = (p as u128)
        .checked_pow(n)
        .filter(|t| *t <= u128::from(budget))
        .ok_or(Error::Capacity {
            what: "exhaustive challenge enumeration",
            limit: budget,
            requested: u64::MAX,
        })? as u64;
    let mut accepts = 0u64;
    for mut index in 0..total {
        let mut vector = Vec::with_capacity(n as usize);
        for _ in 0..n {
            vector.push(field.element_from_u64(index % p));
            index /= p;
        }
        let mut challenges = FixedChallenges::new(vector);
        let transcript = run_sumcheck(cnf, strategy, &mut challenges, Mode::Relaxed)?;
        if transcript.verdict.is_accept() {
            accepts += 1;
        }
    }
    Ok(BigRational::new(BigInt::from(accepts), BigInt::from(total)))
}

/// How many instances of one size an experiment runs.
#[derive(Debug, Clone, Copy)]
pub struct SizePlan {
    pub variable_count: u32,
    pub clause_count: usize,
    pub instances: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub plan: Vec<SizePlan>,
    pub prime_bits: u64,
    pub samples_per_instance: u64,
    pub seed: u64,
    pub strategy: StrategySpec,
}

/// One line of an experiment report; the stream of these is the CLI's
/// structured output. Every number is reproducible from the embedded
/// metadata.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRecord {
    pub experiment: &'static str,
    pub mode: String,
    pub strategy: String,
    pub n: u32,
    pub m: usize,
    pub instance_seed: u64,
    pub model_count: u64,
    pub prime_seed: u64,
    pub prime_hex: String,
    pub prime_bits: u64,
    pub strategy_seed: u64,
    pub challenge_seed: u64,
    pub samples: u64,
    pub accepts: u64,
    pub rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub paper_bound: String,
    pub paper_bound_f64: f64,
    pub degree_bound: String,
    pub degree_bound_f64: f64,
    pub degree_bound_vacuous: bool,
}

fn rational_to_f64(value: &BigRational) -> f64 {
    let numer = value.numer().to_f64().unwrap_or(f64::INFINITY);
    let denom = value.denom().to_f64().unwrap_or(f64::INFINITY);
    numer / denom
}

const HARVEST_SEED_SPAN: u64 = 100_000;

fn run_experiment(
    name: &'static str,
    options: &ExperimentOptions,
    want_unsat: bool,
    sink: &mut dyn FnMut(&ExperimentRecord),
) -> Result<Vec<ExperimentRecord>> {
    let mut records = Vec::new();
    let mut instance_index = 0u64;
    for plan in &options.plan {
        for _ in 0..plan.instances {
            let base_seed = derive_seed(options.seed, "instance", instance_index);
            let (cnf, instance_seed) = harvest_instance(
                plan.variable_count,
                plan.clause_count,
                base_seed,
                HARVEST_SEED_SPAN,
                |candidate| match candidate.count_satisfying() {
                    Ok(count) => (count == 0) == want_unsat,
                    Err(_) => false,
                },
            )
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "no {} instance with n={} m={} near seed {base_seed}",
                    if want_unsat { "UNSAT" } else { "SAT" },
                    plan.variable_count,
                    plan.clause_count
                ))
            })?;
            let model_count = cnf.count_satisfying()?;

            let prime_seed = derive_seed(options.seed, "prime", instance_index);
            let mut prime_rng = ChaCha20Rng::seed_from_u64(prime_seed);
            let (modulus, certificate) =
                generate_certified_prime(&PrimeRequest::Bits(options.prime_bits), &mut prime_rng)?;
            let field = Field::new(modulus);
            let prime = field.prime().clone();

            let strategy_seed = derive_seed(options.seed, "strategy", instance_index);
            let strategy =
                options
                    .strategy
                    .build(cnf.clone(), field.clone(), certificate, strategy_seed);

            let challenge_seed = derive_seed(options.seed, "mc", instance_index);
            let estimate = monte_carlo_acceptance(
                &cnf,
                strategy.as_ref(),
                options.samples_per_instance,
                challenge_seed,
            )?;

            let bounds = soundness_bound(plan.variable_count, plan.clause_count, &prime);
            let record = ExperimentRecord {
                experiment: name,
                mode: Mode::Relaxed.to_string(),
                strategy: strategy.name().to_string(),
                n: plan.variable_count,
                m: plan.clause_count,
                instance_seed,
                model_count,
                prime_seed,
                prime_hex: format!("0x{}", prime.to_str_radix(16)),
                prime_bits: prime.bits(),
                strategy_seed,
                challenge_seed,
                samples: estimate.samples,
                accepts: estimate.accepts,
                rate: estimate.rate,
                wilson_low: estimate.wilson_low,
                wilson_high: estimate.wilson_high,
                paper_bound: bounds.paper_bound.to_string(),
                paper_bound_f64: rational_to_f64(&bounds.paper_bound),
                degree_bound: bounds.degree_bound.to_string(),
                degree_bound_f64: rational_to_f64(&bounds.degree_bound),
                degree_bound_vacuous: bounds.degree_vacuous,
            };
            sink(&record);
            records.push(record);
            instance_index += 1;
        }
    }
    Ok(records)
}

/// Honest-prover acceptance over count-verified UNSAT instances; every
/// record should report rate exactly 1.
pub fn completeness_experiment(
    options: &ExperimentOptions,
    sink: &mut dyn FnMut(&ExperimentRecord),
) -> Result<Vec<ExperimentRecord>> {
    run_experiment("completeness", options, true, sink)
}

/// Cheating-prover acceptance over count-verified SAT instances; rates are
/// compared against the degree union bound.
pub fn soundness_experiment(
    options: &ExperimentOptions,
    sink: &mut dyn FnMut(&ExperimentRecord),
) -> Result<Vec<ExperimentRecord>> {
    run_experiment("soundness", options, false, sink)
}

/// Per-variable-count plans used by the CLI when none are given:
/// `n` from 4 to 10 with clause ratios between 4 and 10.
pub fn default_plan(instances_per_size: usize, want_unsat: bool) -> Vec<SizePlan> {
    // UNSAT harvesting needs dense formulas, SAT harvesting sparse ones.
    let ratio = if want_unsat { 6 } else { 3 };
    (4u32..=10)
        .map(|n| SizePlan {
            variable_count: n,
            clause_count: (n as usize * ratio).min(60),
            instances: instances_per_size,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::parse_dimacs;
    use crate::primality::certify;
    use crate::prover::{CheatKind, CheatingProver, HonestProver};
    use num_bigint::BigUint;

    fn field_with_cert(p: u64) -> (Field, crate::primality::PrattCertificate) {
        let cert = certify(&BigUint::from(p)).unwrap();
        (Field::from_u64(p), cert)
    }

    #[test]
    fn wilson_sanity() {
        let (low, high) = wilson_interval(0, 100, WILSON_Z_99);
        assert_eq!(low, 0.0);
        assert!(high < 0.1);
        let (low, high) = wilson_interval(100, 100, WILSON_Z_99);
        assert!(low > 0.9);
        assert_eq!(high, 1.0);
        let (low, high) = wilson_interval(50, 100, WILSON_Z_99);
        assert!(low < 0.5 && high > 0.5);
    }

    #[test]
    fn honest_exhaustive_is_exactly_one() {
        let cnf = parse_dimacs("p cnf 1 2\n1 0\n-1 0\n").unwrap();
        let (field, cert) = field_with_cert(11);
        let prover = HonestProver::new(cnf.clone(), field, cert);
        let exact = exhaustive_acceptance(&cnf, &prover).unwrap();
        assert_eq!(exact, BigRational::new(BigInt::from(11), BigInt::from(11)));
    }

    #[test]
    fn monte_carlo_is_reproducible_and_reports_requested_samples() {
        let cnf = parse_dimacs("p cnf 1 2\n1 0\n-1 0\n").unwrap();
        let (field, cert) = field_with_cert(11);
        let prover = HonestProver::new(cnf.clone(), field, cert);
        let a = monte_carlo_acceptance(&cnf, &prover, 64, 5).unwrap();
        let b = monte_carlo_acceptance(&cnf, &prover, 64, 5).unwrap();
        assert_eq!(a.accepts, b.accepts);
        assert_eq!(a.samples, 64);
        assert_eq!(a.rate, 1.0);
    }

    #[test]
    fn monte_carlo_tracks_exhaustive_within_wilson() {
        let cnf = parse_dimacs("p cnf 1 1\n1 0\n").unwrap();
        let (field, cert) = field_with_cert(11);
        let cheater = CheatingProver::new(CheatKind::SumConsistent, cnf.clone(), field, cert, 2);
        let exact = rational_to_f64(&exhaustive_acceptance(&cnf, &cheater).unwrap());
        let estimate = monte_carlo_acceptance(&cnf, &cheater, 2_000, 3).unwrap();
        assert!(
            estimate.wilson_low <= exact && exact <= estimate.wilson_high,
            "exact {exact} outside [{}, {}]",
            estimate.wilson_low,
            estimate.wilson_high
        );
    }

    #[test]
    fn exhaustive_budget_enforced() {
        let cnf = crate::cnf::random_3cnf(3, 6, 0).unwrap();
        let (field, cert) = field_with_cert(65537);
        let prover = HonestProver::new(cnf.clone(), field, cert);
        assert!(matches!(
            exhaustive_acceptance_with_budget(&cnf, &prover, 1 << 16),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn completeness_experiment_smoke() {
        let options = ExperimentOptions {
            plan: vec![SizePlan {
                variable_count: 4,
                clause_count: 20,
                instances: 2,
            }],
            prime_bits: 24,
            samples_per_instance: 10,
            seed: 7,
            strategy: StrategySpec::Honest,
        };
        let mut seen = 0;
        let records = completeness_experiment(&options, &mut |_| seen += 1).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(seen, 2);
        for record in &records {
            assert_eq!(record.model_count, 0);
            assert_eq!(record.rate, 1.0);
            assert_eq!(record.accepts, record.samples);
        }
    }

    #[test]
    fn soundness_experiment_smoke() {
        let options = ExperimentOptions {
            plan: vec![SizePlan {
                variable_count: 4,
                clause_count: 8,
                instances: 2,
            }],
            prime_bits: 17,
            samples_per_instance: 50,
            seed: 8,
            strategy: StrategySpec::Cheat(CheatKind::SumConsistent),
        };
        let records = soundness_experiment(&options, &mut |_| {}).unwrap();
        for record in &records {
            assert!(record.model_count > 0);
            let slack = 3.0 * (record.wilson_high - record.wilson_low) / 2.0;
            assert!(
                record.rate <= record.degree_bound_f64 + slack,
                "rate {} above bound {} + {slack}",
                record.rate,
                record.degree_bound_f64
            );
        }
    }
}
