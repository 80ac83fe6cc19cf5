//! Command-line interface.
//!
//! Exit codes: 0 accept/success, 1 reject, 2 protocol abort, 3 usage error.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use num_bigint::BigUint;
use rand::rngs::OsRng;
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::cnf::{parse_dimacs, random_3cnf, ThreeCnf, ThreeDnf};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::harness::{
    completeness_experiment, default_plan, soundness_experiment, ExperimentOptions, SizePlan,
};
use crate::primality::{
    certify, generate_certified_prime, generate_certified_prime_with_budget, pratt_verify,
    protocol_prime_interval, PrattCertificate, PrimeRequest, DEFAULT_PRIME_BIT_BUDGET,
};
use crate::prover::{ProverStrategy, StrategySpec};
use crate::verifier::{
    soundness_bound, verify_unsat, ChallengeSource, Mode, RngChallenges, Transcript, Verdict,
    VerifySettings,
};
use crate::wire::{run_remote_verification, serve_prover, ClientOptions, ServeOptions};

const EXIT_ACCEPT: i32 = 0;
const EXIT_REJECT: i32 = 1;
const EXIT_ABORT: i32 = 2;
const EXIT_USAGE: i32 = 3;

#[derive(Parser)]
#[command(
    name = "scproof",
    version,
    about = "Sum-check Merlin-Arthur proofs of 3CNF unsatisfiability (and 3DNF tautologies)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded random 3CNF in DIMACS form
    Gen {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write to a file instead of stdout
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Count satisfying assignments by exhaustive enumeration
    Count {
        file: PathBuf,
        /// Maximum variable count for the enumeration
        #[arg(long, default_value_t = crate::cnf::DEFAULT_EXHAUSTIVE_BUDGET)]
        budget: u32,
    },
    /// Generate a certified protocol prime (paper-strict interval via --n,
    /// or a relaxed bit length via --bits)
    Prime(PrimeArgs),
    /// Build a Pratt certificate for a given prime
    Certify {
        /// The prime, in decimal
        value: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Verify a Pratt certificate file (exit 0 valid, 1 invalid)
    CheckCert { file: PathBuf },
    /// Serve a prover strategy over TCP until interrupted
    Serve(ServeArgs),
    /// Verify an UNSAT claim (or a 3DNF tautology with --dnf), locally or
    /// against a remote prover
    Verify(VerifyArgs),
    /// Acceptance-rate experiments; one JSON record per instance on stdout
    Experiment {
        #[command(subcommand)]
        kind: ExperimentCommand,
    },
    /// Time the honest prover and one full protocol run
    Bench {
        #[arg(long, default_value_t = 8)]
        n: u32,
        #[arg(long, default_value_t = 32)]
        m: usize,
        #[arg(long, default_value_t = 64)]
        bits: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct PrimeArgs {
    /// Paper-strict: draw from the protocol interval for this variable count
    #[arg(long, conflicts_with = "bits")]
    n: Option<u32>,
    /// Interval exponent constant
    #[arg(long, default_value_t = 2)]
    cp: u32,
    /// Relaxed: exact bit length
    #[arg(long)]
    bits: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Generation size ceiling in bits
    #[arg(long, default_value_t = DEFAULT_PRIME_BIT_BUDGET)]
    max_bits: u64,
    /// Also write the certificate JSON to a file
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// DIMACS file with the formula being proven unsatisfiable
    file: PathBuf,
    /// Interpret the file's rows as 3DNF terms and serve their negation
    #[arg(long)]
    dnf: bool,
    #[arg(long, default_value = "127.0.0.1:4517")]
    listen: String,
    /// honest | cheat:random | cheat:sum-consistent
    #[arg(long, default_value = "honest")]
    strategy: String,
    #[arg(long, default_value_t = 0)]
    strategy_seed: u64,
    #[arg(long, default_value = "relaxed")]
    mode: String,
    /// Relaxed prime bit length
    #[arg(long, default_value_t = 64)]
    bits: u64,
    #[arg(long, default_value_t = 2)]
    cp: u32,
    #[arg(long)]
    prime_seed: Option<u64>,
    #[arg(long, default_value_t = crate::wire::DEFAULT_MAX_FRAME)]
    max_frame: u32,
}

#[derive(Args)]
struct VerifyArgs {
    /// DIMACS file with the 3CNF claimed unsatisfiable
    file: PathBuf,
    /// Interpret the file's rows as 3DNF terms and verify the tautology claim
    #[arg(long)]
    dnf: bool,
    /// host:port of a remote prover; omitted means a local honest run
    #[arg(long)]
    remote: Option<String>,
    #[arg(long, default_value = "relaxed")]
    mode: String,
    /// Relaxed prime bit length (local prover)
    #[arg(long, default_value_t = 64)]
    bits: u64,
    #[arg(long, default_value_t = 2)]
    cp: u32,
    #[arg(long, default_value_t = 1)]
    trials: u32,
    /// Seeded verifier randomness for reproducibility. A seeded verifier is
    /// NOT sound against a prover that knows the seed; default is OS entropy.
    #[arg(long)]
    seed: Option<u64>,
    /// Local prover strategy
    #[arg(long, default_value = "honest")]
    strategy: String,
    #[arg(long, default_value_t = 0)]
    strategy_seed: u64,
    #[arg(long)]
    prime_seed: Option<u64>,
    /// Per-round response deadline for remote runs, in seconds
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
    /// Write all transcripts as JSON lines to this file
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 3)]
    instances: usize,
    #[arg(long, default_value_t = 4)]
    n_min: u32,
    #[arg(long, default_value_t = 8)]
    n_max: u32,
    /// Clause-to-variable ratio (clause count capped at 60)
    #[arg(long)]
    ratio: Option<usize>,
    #[arg(long, default_value_t = 100)]
    samples: u64,
    #[arg(long, default_value_t = 32)]
    bits: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Honest prover on count-verified UNSAT instances (expect rate = 1)
    Completeness(ExperimentArgs),
    /// Cheating prover on count-verified SAT instances (compare to bounds)
    Soundness {
        #[command(flatten)]
        common: ExperimentArgs,
        #[arg(long, default_value = "cheat:sum-consistent")]
        strategy: String,
    },
}

pub fn run_cli() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_ACCEPT,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Gen { n, m, seed, output } => {
            let cnf = random_3cnf(n, m, seed)?;
            emit(output.as_deref(), &cnf.to_dimacs())?;
            Ok(EXIT_ACCEPT)
        }
        Command::Count { file, budget } => {
            let cnf = load_cnf(&file)?;
            let count = cnf.count_satisfying_with_budget(budget)?;
            println!(
                "{}",
                serde_json::to_string(&serde_json::json!({
                    "n": cnf.variable_count(),
                    "m": cnf.clause_count(),
                    "count": count,
                    "unsat": count == 0,
                }))?
            );
            Ok(EXIT_ACCEPT)
        }
        Command::Prime(args) => cmd_prime(args),
        Command::Certify { value, output } => {
            let prime = BigUint::parse_bytes(value.as_bytes(), 10).ok_or_else(|| {
                Error::InvalidParameter(format!("{value:?} is not a decimal integer"))
            })?;
            let certificate = certify(&prime)?;
            emit(output.as_deref(), &certificate.to_canonical_json())?;
            Ok(EXIT_ACCEPT)
        }
        Command::CheckCert { file } => {
            let text = fs::read_to_string(&file)?;
            match PrattCertificate::from_json(&text) {
                Ok(certificate) if pratt_verify(&certificate) => {
                    println!(
                        "valid certificate for prime {} ({} bits)",
                        certificate.prime,
                        certificate.prime.bits()
                    );
                    Ok(EXIT_ACCEPT)
                }
                Ok(certificate) => {
                    println!("INVALID certificate (claimed prime {})", certificate.prime);
                    Ok(EXIT_REJECT)
                }
                Err(e) => {
                    println!("INVALID certificate (unparseable: {e})");
                    Ok(EXIT_REJECT)
                }
            }
        }
        Command::Serve(args) => cmd_serve(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Experiment { kind } => cmd_experiment(kind),
        Command::Bench { n, m, bits, seed } => cmd_bench(n, m, bits, seed),
    }
}

fn load_cnf(path: &std::path::Path) -> Result<ThreeCnf> {
    parse_dimacs(&fs::read_to_string(path)?)
}

/// Loads the working 3CNF: either the file itself, or (with `dnf`) the
/// De Morgan negation of the file's rows read as 3DNF terms.
fn load_claim(path: &std::path::Path, dnf: bool) -> Result<(ThreeCnf, &'static str)> {
    let parsed = load_cnf(path)?;
    if dnf {
        let dnf = ThreeDnf::new(parsed.variable_count(), parsed.clauses().to_vec())?;
        Ok((dnf.negation(), "dnf-tautology"))
    } else {
        Ok((parsed, "unsat"))
    }
}

fn emit(path: Option<&std::path::Path>, text: &str) -> Result<()> {
    match path {
        Some(path) => {
            fs::write(path, text)?;
        }
        None => {
            let mut stdout = std::io::stdout();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn challenge_source(seed: Option<u64>) -> Box<dyn ChallengeSource> {
    match seed {
        Some(seed) => Box::new(RngChallenges(ChaCha20Rng::seed_from_u64(seed))),
        None => Box::new(RngChallenges(OsRng)),
    }
}

fn prime_rng(seed: Option<u64>) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed.unwrap_or_else(|| OsRng.next_u64()))
}

fn generate_for_mode(
    mode: Mode,
    variable_count: u32,
    cp: u32,
    bits: u64,
    prime_seed: Option<u64>,
    max_bits: u64,
) -> Result<(Field, PrattCertificate)> {
    let request = match mode {
        Mode::PaperStrict => {
            let (lo, hi) = protocol_prime_interval(variable_count, cp)?;
            PrimeRequest::Interval { lo, hi }
        }
        Mode::Relaxed => PrimeRequest::Bits(bits),
    };
    let mut rng = prime_rng(prime_seed);
    let (modulus, certificate) =
        generate_certified_prime_with_budget(&request, &mut rng, max_bits)?;
    Ok((Field::new(modulus), certificate))
}

fn cmd_prime(args: PrimeArgs) -> Result<i32> {
    let mut rng = prime_rng(args.seed);
    let (request, interval_desc) = match (args.n, args.bits) {
        (Some(n), None) => {
            let (lo, hi) = protocol_prime_interval(n, args.cp)?;
            let desc = format!("2^{} < p <= 2^{}", lo.bits() - 1, hi.bits() - 1);
            (PrimeRequest::Interval { lo, hi }, Some(desc))
        }
        (None, Some(bits)) => (PrimeRequest::Bits(bits), None),
        (None, None) => (PrimeRequest::Bits(64), None),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    let (modulus, certificate) =
        generate_certified_prime_with_budget(&request, &mut rng, args.max_bits)?;
    println!("p = {}", modulus.value());
    println!("bits = {}", modulus.bit_length());
    if let Some(desc) = interval_desc {
        println!("interval: {desc}");
    }
    match &args.output {
        Some(path) => {
            fs::write(path, certificate.to_canonical_json())?;
            println!("certificate written to {}", path.display());
        }
        None => println!("certificate: {}", certificate.to_canonical_json()),
    }
    Ok(EXIT_ACCEPT)
}

fn cmd_serve(args: ServeArgs) -> Result<i32> {
    let mode: Mode = args.mode.parse()?;
    let strategy_spec: StrategySpec = args.strategy.parse()?;
    let (cnf, claim) = load_claim(&args.file, args.dnf)?;
    let (field, certificate) = generate_for_mode(
        mode,
        cnf.variable_count(),
        args.cp,
        args.bits,
        args.prime_seed,
        DEFAULT_PRIME_BIT_BUDGET,
    )?;
    eprintln!(
        "serving {} proof of {} (n={}, m={}) with prime of {} bits, strategy {}",
        mode,
        claim,
        cnf.variable_count(),
        cnf.clause_count(),
        field.modulus().bit_length(),
        args.strategy,
    );
    let strategy: Arc<dyn ProverStrategy> = Arc::from(strategy_spec.build(
        cnf.clone(),
        field,
        certificate,
        args.strategy_seed,
    ));
    let server = serve_prover(
        &args.listen,
        cnf,
        strategy,
        ServeOptions {
            max_frame: args.max_frame,
            ..Default::default()
        },
    )?;
    eprintln!("listening on {}", server.local_addr());
    loop {
        std::thread::sleep(Duration::from_secs(3600));
    }
}

#[derive(Serialize)]
struct VerifySummary {
    claim: &'static str,
    mode: String,
    n: u32,
    m: usize,
    remote: Option<String>,
    strategy: Option<String>,
    prime_hex: Option<String>,
    prime_bits: Option<u64>,
    trials_requested: u32,
    trials_run: usize,
    accepted: bool,
    aborted: bool,
    verdict: String,
    paper_bound: Option<String>,
    degree_bound: Option<String>,
    degree_bound_vacuous: Option<bool>,
}

fn write_transcripts(path: Option<&std::path::Path>, transcripts: &[Transcript]) -> Result<()> {
    if let Some(path) = path {
        let mut out = String::new();
        for transcript in transcripts {
            out.push_str(&transcript.to_canonical_json());
            out.push('\n');
        }
        fs::write(path, out)?;
    }
    Ok(())
}

fn verdict_text(verdict: &Verdict) -> String {
    match verdict {
        Verdict::Accept => "accept".into(),
        Verdict::Reject { reason } => format!("reject({reason})"),
        Verdict::Abort { code, detail } => format!("abort({code}: {detail})"),
    }
}

fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    let mode: Mode = args.mode.parse()?;
    let (cnf, claim) = load_claim(&args.file, args.dnf)?;
    let settings = VerifySettings {
        mode,
        c_p: args.cp,
        trials: args.trials,
    };
    let mut challenges = challenge_source(args.seed);

    if let Some(remote) = &args.remote {
        let options = ClientOptions {
            round_timeout: Duration::from_secs(args.timeout_secs),
            ..Default::default()
        };
        let outcome =
            run_remote_verification(remote, &cnf, &settings, challenges.as_mut(), &options)?;
        write_transcripts(args.transcript.as_deref(), &outcome.transcripts)?;
        let aborted = outcome.aborted();
        let verdict = match (&outcome.abort, outcome.transcripts.last()) {
            (Some((code, detail)), _) => format!("abort({code}: {detail})"),
            (None, Some(transcript)) => verdict_text(&transcript.verdict),
            (None, None) => "abort(transport: no sessions ran)".into(),
        };
        let (prime_hex, prime_bits, bounds) = match outcome.transcripts.last() {
            Some(t) => {
                let bounds = soundness_bound(cnf.variable_count(), cnf.clause_count(), &t.prime);
                (
                    Some(format!("0x{}", t.prime.to_str_radix(16))),
                    Some(t.prime.bits()),
                    Some(bounds),
                )
            }
            None => (None, None, None),
        };
        let summary = VerifySummary {
            claim,
            mode: mode.to_string(),
            n: cnf.variable_count(),
            m: cnf.clause_count(),
            remote: Some(remote.clone()),
            strategy: None,
            prime_hex,
            prime_bits,
            trials_requested: args.trials,
            trials_run: outcome.transcripts.len(),
            accepted: outcome.accepted,
            aborted,
            verdict,
            paper_bound: bounds.as_ref().map(|b| b.paper_bound.to_string()),
            degree_bound: bounds.as_ref().map(|b| b.degree_bound.to_string()),
            degree_bound_vacuous: bounds.as_ref().map(|b| b.degree_vacuous),
        };
        println!("{}", serde_json::to_string(&summary)?);
        return Ok(if aborted {
            EXIT_ABORT
        } else if outcome.accepted {
            EXIT_ACCEPT
        } else {
            EXIT_REJECT
        });
    }

    let strategy_spec: StrategySpec = args.strategy.parse()?;
    let (field, certificate) = generate_for_mode(
        mode,
        cnf.variable_count(),
        args.cp,
        args.bits,
        args.prime_seed,
        DEFAULT_PRIME_BIT_BUDGET,
    )?;
    let prime = field.prime().clone();
    let strategy = strategy_spec.build(cnf.clone(), field, certificate, args.strategy_seed);
    let outcome = verify_unsat(&cnf, strategy.as_ref(), &settings, challenges.as_mut())?;
    write_transcripts(args.transcript.as_deref(), &outcome.transcripts)?;
    let aborted = outcome
        .transcripts
        .iter()
        .any(|transcript| transcript.verdict.is_abort());
    let bounds = soundness_bound(cnf.variable_count(), cnf.clause_count(), &prime);
    let summary = VerifySummary {
        claim,
        mode: mode.to_string(),
        n: cnf.variable_count(),
        m: cnf.clause_count(),
        remote: None,
        strategy: Some(strategy.name().to_string()),
        prime_hex: Some(format!("0x{}", prime.to_str_radix(16))),
        prime_bits: Some(prime.bits()),
        trials_requested: args.trials,
        trials_run: outcome.transcripts.len(),
        accepted: outcome.accepted,
        aborted,
        verdict: outcome
            .transcripts
            .last()
            .map(|t| verdict_text(&t.verdict))
            .unwrap_or_else(|| "abort(internal: no sessions ran)".into()),
        paper_bound: Some(bounds.paper_bound.to_string()),
        degree_bound: Some(bounds.degree_bound.to_string()),
        degree_bound_vacuous: Some(bounds.degree_vacuous),
    };
    println!("{}", serde_json::to_string(&summary)?);
    Ok(if aborted {
        EXIT_ABORT
    } else if outcome.accepted {
        EXIT_ACCEPT
    } else {
        EXIT_REJECT
    })
}

fn experiment_plan(args: &ExperimentArgs, want_unsat: bool) -> Vec<SizePlan> {
    match args.ratio {
        Some(ratio) => (args.n_min..=args.n_max)
            .map(|n| SizePlan {
                variable_count: n,
                clause_count: (n as usize * ratio).min(60),
                instances: args.instances,
            })
            .collect(),
        None => default_plan(args.instances, want_unsat)
            .into_iter()
            .filter(|plan| plan.variable_count >= args.n_min && plan.variable_count <= args.n_max)
            .collect(),
    }
}

fn cmd_experiment(kind: ExperimentCommand) -> Result<i32> {
    let mut print = |record: &crate::harness::ExperimentRecord| {
        println!(
            "{}",
            serde_json::to_string(record).expect("record serialization cannot fail")
        );
    };
    match kind {
        ExperimentCommand::Completeness(args) => {
            let options = ExperimentOptions {
                plan: experiment_plan(&args, true),
                prime_bits: args.bits,
                samples_per_instance: args.samples,
                seed: args.seed,
                strategy: StrategySpec::Honest,
            };
            let records = completeness_experiment(&options, &mut print)?;
            let perfect = records.iter().all(|record| record.accepts == record.samples);
            eprintln!(
                "completeness: {}/{} instances accepted every trial",
                records.iter().filter(|r| r.accepts == r.samples).count(),
                records.len()
            );
            Ok(if perfect { EXIT_ACCEPT } else { EXIT_REJECT })
        }
        ExperimentCommand::Soundness { common, strategy } => {
            let options = ExperimentOptions {
                plan: experiment_plan(&common, false),
                prime_bits: common.bits,
                samples_per_instance: common.samples,
                seed: common.seed,
                strategy: strategy.parse()?,
            };
            let records = soundness_experiment(&options, &mut print)?;
            let within = records.iter().all(|record| {
                let slack = 3.0 * (record.wilson_high - record.wilson_low) / 2.0;
                record.rate <= record.degree_bound_f64 + slack
            });
            eprintln!(
                "soundness: {}/{} instances within the degree bound (+3 half-widths)",
                records
                    .iter()
                    .filter(|record| {
                        let slack = 3.0 * (record.wilson_high - record.wilson_low) / 2.0;
                        record.rate <= record.degree_bound_f64 + slack
                    })
                    .count(),
                records.len()
            );
            Ok(if within { EXIT_ACCEPT } else { EXIT_REJECT })
        }
    }
}

fn cmd_bench(n: u32, m: usize, bits: u64, seed: u64) -> Result<i32> {
    let cnf = random_3cnf(n, m, seed)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (modulus, certificate) = generate_certified_prime(&PrimeRequest::Bits(bits), &mut rng)?;
    let field = Field::new(modulus);
    let prime_bits = field.modulus().bit_length();
    let strategy = crate::prover::HonestProver::new(cnf.clone(), field, certificate);

    let start = Instant::now();
    let first_round = strategy.respond(1, &[])?;
    let round1 = start.elapsed();

    let mut challenges = RngChallenges(ChaCha20Rng::seed_from_u64(seed ^ 1));
    let start = Instant::now();
    let transcript = crate::verifier::run_sumcheck(&cnf, &strategy, &mut challenges, Mode::Relaxed)?;
    let full = start.elapsed();

    println!(
        "{}",
        serde_json::to_string(&serde_json::json!({
            "n": n,
            "m": m,
            "prime_bits": prime_bits,
            "round1_coefficients": first_round.coefficient_count(),
            "round1_ms": round1.as_secs_f64() * 1e3,
            "full_run_ms": full.as_secs_f64() * 1e3,
            "verdict": verdict_text(&transcript.verdict),
        }))?
    );
    Ok(EXIT_ACCEPT)
}
