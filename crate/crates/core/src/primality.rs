//! Prime generation and Pratt certificates.
//!
//! The protocol prime comes with a recursive primality witness: a generator
//! of `(Z/p)^*` together with the full factorization of `p - 1` and a
//! sub-certificate for every odd prime factor. Verification is polynomial in
//! the certificate size and never trusts its input.
//!
//! Because factoring `p - 1` for an arbitrary large prime is infeasible,
//! generation works the other way around: primes are built as `p = 2*R*q + 1`
//! from an already certified `q` and a small fully-factorable cofactor `R`,
//! so the factorization of `p - 1` is known by construction.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::PrimeModulus;

/// Default ceiling on generated prime sizes; covers the paper-strict regime
/// up to five protocol variables (a 256-bit-plus prime).
pub const DEFAULT_PRIME_BIT_BUDGET: u64 = 512;

/// Default ceiling on the exponent of the protocol interval's upper bound.
pub const DEFAULT_INTERVAL_EXPONENT_BUDGET: u64 = 1 << 22;

const GENERATION_ATTEMPT_BUDGET: u64 = 200_000;

/// Bit size below which primes are found by trial division directly.
const SMALL_GEN_BITS: u64 = 28;

/// Bit size of the fully-factorable cofactor `R` in `p = 2*R*q + 1`.
const COFACTOR_BITS: u64 = 20;

/// One prime power `factor^multiplicity` in the factorization of `p - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorPower {
    #[serde(with = "crate::ser::biguint_dec")]
    pub factor: BigUint,
    pub multiplicity: u32,
}

/// Recursive primality witness for `prime`.
///
/// Invariants checked by [`pratt_verify`]:
/// - the factorization multiplies out to exactly `prime - 1`;
/// - `generator^(prime-1) = 1 (mod prime)`;
/// - `generator^((prime-1)/q) != 1 (mod prime)` for every listed factor `q`;
/// - every factor other than 2 carries a valid child certificate
///   (`q = 2` is the base case of the recursion and needs none).
///
/// The canonical form keeps factors in ascending order with one child per
/// non-2 factor, in the same order; serialization is compact JSON with
/// integers as decimal strings (grammar in `docs/FORMATS.md`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrattCertificate {
    #[serde(with = "crate::ser::biguint_dec")]
    pub prime: BigUint,
    #[serde(with = "crate::ser::biguint_dec")]
    pub generator: BigUint,
    pub factorization: Vec<FactorPower>,
    pub children: Vec<PrattCertificate>,
}

impl PrattCertificate {
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("certificate serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.to_canonical_json().as_bytes());
        h.finalize().into()
    }
}

/// Checks a certificate bottom-up. Malformed or hostile input returns
/// `false`; this function never panics and runs in time polynomial in the
/// certificate size.
pub fn pratt_verify(cert: &PrattCertificate) -> bool {
    let two = BigUint::from(2u32);
    let p = &cert.prime;
    if *p < two {
        return false;
    }
    if cert.generator >= *p {
        return false;
    }
    let p_minus_1 = p - BigUint::one();

    // Factorization must be canonical (ascending, distinct, multiplicities
    // >= 1) and multiply out to p - 1. Multiplicities are bounded by the bit
    // length of p before any exponentiation so oversized values cannot blow
    // up the product computation.
    let mut product = BigUint::one();
    let mut previous: Option<&BigUint> = None;
    for fp in &cert.factorization {
        if fp.factor < two || fp.multiplicity == 0 {
            return false;
        }
        if let Some(prev) = previous {
            if *prev >= fp.factor {
                return false;
            }
        }
        previous = Some(&fp.factor);
        if u64::from(fp.multiplicity) > p.bits() {
            return false;
        }
        for _ in 0..fp.multiplicity {
            product *= &fp.factor;
            if product > p_minus_1 {
                return false;
            }
        }
    }
    if product != p_minus_1 {
        return false;
    }

    if cert.generator.modpow(&p_minus_1, p) != BigUint::one() {
        return false;
    }
    for fp in &cert.factorization {
        let exponent = &p_minus_1 / &fp.factor;
        if cert.generator.modpow(&exponent, p) == BigUint::one() {
            return false;
        }
    }

    // One child per non-2 factor, aligned with the factor order.
    let needing_children: Vec<&BigUint> = cert
        .factorization
        .iter()
        .filter(|fp| fp.factor != two)
        .map(|fp| &fp.factor)
        .collect();
    if cert.children.len() != needing_children.len() {
        return false;
    }
    for (child, factor) in cert.children.iter().zip(needing_children) {
        if child.prime != *factor {
            return false;
        }
        if !pratt_verify(child) {
            return false;
        }
    }
    true
}

/// What kind of prime to generate.
#[derive(Debug, Clone)]
pub enum PrimeRequest {
    /// A prime of exactly this many bits.
    Bits(u64),
    /// A prime in the half-open interval `(lo, hi]`.
    Interval { lo: BigUint, hi: BigUint },
}

/// The paper-strict prime interval `(2^(2n^3+n), 2^((2n^3+n)^c_p)]` for a
/// formula over `n` variables. The interval is open at the lower bound and
/// closed at the upper bound; `c_p = 1` degenerates it to the empty set.
pub fn protocol_prime_interval(n: u32, c_p: u32) -> Result<(BigUint, BigUint)> {
    protocol_prime_interval_with_budget(n, c_p, DEFAULT_INTERVAL_EXPONENT_BUDGET)
}

pub fn protocol_prime_interval_with_budget(
    n: u32,
    c_p: u32,
    max_exponent: u64,
) -> Result<(BigUint, BigUint)> {
    if n < 1 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if c_p < 1 {
        return Err(Error::InvalidParameter("c_p must be at least 1".into()));
    }
    let n = u64::from(n);
    let base = 2 * n * n * n + n;
    let hi_exp = base
        .checked_pow(c_p)
        .filter(|e| *e <= max_exponent)
        .ok_or(Error::Capacity {
            what: "protocol interval exponent",
            limit: max_exponent,
            requested: u64::MAX,
        })?;
    let lo = BigUint::one() << base;
    let hi = BigUint::one() << hi_exp;
    if lo >= hi {
        return Err(Error::EmptyInterval {
            lo_desc: format!("2^{base}"),
            hi_desc: format!("2^{hi_exp}"),
        });
    }
    Ok((lo, hi))
}

/// Generates a prime matching `request` together with a verified Pratt
/// certificate. Deterministic given the rng state.
pub fn generate_certified_prime<R: RngCore + ?Sized>(
    request: &PrimeRequest,
    rng: &mut R,
) -> Result<(PrimeModulus, PrattCertificate)> {
    generate_certified_prime_with_budget(request, rng, DEFAULT_PRIME_BIT_BUDGET)
}

pub fn generate_certified_prime_with_budget<R: RngCore + ?Sized>(
    request: &PrimeRequest,
    rng: &mut R,
    max_bits: u64,
) -> Result<(PrimeModulus, PrattCertificate)> {
    let mut attempts = 0u64;
    let (value, cert) = match request {
        PrimeRequest::Bits(bits) => {
            if *bits < 2 {
                return Err(Error::InvalidParameter(
                    "prime bit length must be at least 2".into(),
                ));
            }
            if *bits > max_bits {
                return Err(Error::Capacity {
                    what: "prime bit length",
                    limit: max_bits,
                    requested: *bits,
                });
            }
            generate_bits(*bits, rng, &mut attempts)?
        }
        PrimeRequest::Interval { lo, hi } => {
            if lo >= hi {
                return Err(Error::EmptyInterval {
                    lo_desc: lo.to_string(),
                    hi_desc: hi.to_string(),
                });
            }
            if hi.bits() <= 32 {
                generate_in_small_interval(lo, hi, rng)?
            } else {
                let bits = lo.bits() + 1;
                if bits > max_bits {
                    return Err(Error::Capacity {
                        what: "prime bit length",
                        limit: max_bits,
                        requested: bits,
                    });
                }
                loop {
                    let (p, cert) = generate_bits(bits, rng, &mut attempts)?;
                    // Any `bits`-bit integer exceeds lo (lo has bits-1 bits);
                    // the upper bound can still bind for narrow intervals.
                    if p > *lo && p <= *hi {
                        break (p, cert);
                    }
                    if attempts > GENERATION_ATTEMPT_BUDGET {
                        return Err(Error::PrimeGeneration { attempts });
                    }
                }
            }
        }
    };
    debug_assert!(pratt_verify(&cert));
    let modulus = PrimeModulus::new(value, true)?;
    Ok((modulus, cert))
}

/// Builds a Pratt certificate for a given prime by factoring `p - 1` with
/// trial division. Fails honestly when `p - 1` has a composite cofactor too
/// large to factor this way; protocol primes should come from
/// [`generate_certified_prime`], which never hits that case.
pub fn certify(p: &BigUint) -> Result<PrattCertificate> {
    if *p < BigUint::from(2u32) {
        return Err(Error::InvalidParameter(format!("{p} is less than 2")));
    }
    if !is_prime_for_certification(p) {
        return Err(Error::InvalidParameter(format!("{p} is not prime")));
    }
    if p.to_u64() == Some(2) {
        return Ok(certificate_for_two());
    }
    let mut factors: BTreeMap<BigUint, u32> = BTreeMap::new();
    let mut remaining = p - BigUint::one();
    for &q in small_primes() {
        let q_big = BigUint::from(q);
        while remaining.is_multiple_of(&q_big) {
            remaining /= &q_big;
            *factors.entry(q_big.clone()).or_insert(0) += 1;
        }
        if remaining.is_one() {
            break;
        }
    }
    if !remaining.is_one() {
        if is_prime_for_certification(&remaining) {
            *factors.entry(remaining).or_insert(0) += 1;
        } else {
            return Err(Error::InvalidParameter(format!(
                "p - 1 has a composite cofactor {remaining} beyond the trial-division budget"
            )));
        }
    }
    assemble_certificate(p.clone(), factors)
}

/// Miller-Rabin with `rounds` independently drawn bases. Composites slip
/// through with probability below `4^-rounds`; primes always pass.
pub fn probable_prime<R: RngCore + ?Sized>(candidate: &BigUint, rounds: u32, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    let three = BigUint::from(3u32);
    if *candidate < two {
        return false;
    }
    if *candidate == two || *candidate == three {
        return true;
    }
    if candidate.is_even() {
        return false;
    }
    let n_minus_1 = candidate - BigUint::one();
    let trailing = n_minus_1.trailing_zeros().unwrap_or(0);
    let odd_part = &n_minus_1 >> trailing;
    let base_span = candidate - &three; // bases drawn from [2, candidate - 2]
    for _ in 0..rounds {
        let base = random_below(&base_span, rng) + &two;
        if miller_rabin_witness(candidate, &base, &n_minus_1, &odd_part, trailing) {
            return false;
        }
    }
    true
}

/// Exact primality for anything the certification path factors: below 2^32 by
/// full trial division, below 2^64 by the deterministic Miller-Rabin base set.
fn is_prime_for_certification(p: &BigUint) -> bool {
    match p.to_u64() {
        Some(v) if v < 1 << 32 => is_small_prime(v),
        Some(v) => is_prime_u64(v),
        None => false,
    }
}

/// Returns true iff `base` witnesses compositeness of `n`.
fn miller_rabin_witness(
    n: &BigUint,
    base: &BigUint,
    n_minus_1: &BigUint,
    odd_part: &BigUint,
    trailing: u64,
) -> bool {
    let mut x = base.modpow(odd_part, n);
    if x.is_one() || x == *n_minus_1 {
        return false;
    }
    for _ in 1..trailing {
        x = &x * &x % n;
        if x == *n_minus_1 {
            return false;
        }
        if x.is_one() {
            return true;
        }
    }
    true
}

/// Uniform integer in `[0, bound]` by rejection on fixed-width draws.
fn random_below<R: RngCore + ?Sized>(bound: &BigUint, rng: &mut R) -> BigUint {
    if bound.is_zero() {
        return BigUint::zero();
    }
    let bits = bound.bits();
    let nbytes = ((bits + 7) / 8) as usize;
    let excess = (nbytes as u64 * 8 - bits) as u32;
    let mut buf = vec![0u8; nbytes];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= 0xffu8 >> excess;
        let candidate = BigUint::from_bytes_be(&buf);
        if candidate <= *bound {
            return candidate;
        }
    }
}

/// Deterministic Miller-Rabin for 64-bit integers (the classical 12-base set
/// is exact for all n < 2^64).
fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for q in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == q {
            return true;
        }
        if n % q == 0 {
            return false;
        }
    }
    let n_big = BigUint::from(n);
    let n_minus_1 = &n_big - BigUint::one();
    let trailing = n_minus_1.trailing_zeros().unwrap_or(0);
    let odd_part = &n_minus_1 >> trailing;
    for base in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if miller_rabin_witness(&n_big, &BigUint::from(base), &n_minus_1, &odd_part, trailing) {
            return false;
        }
    }
    true
}

fn small_primes() -> &'static [u64] {
    static PRIMES: OnceLock<Vec<u64>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let limit = 1usize << 16;
        let mut composite = vec![false; limit];
        let mut primes = Vec::new();
        for i in 2..limit {
            if !composite[i] {
                primes.push(i as u64);
                let mut j = i * i;
                while j < limit {
                    composite[j] = true;
                    j += i;
                }
            }
        }
        primes
    })
}

/// Exact primality below 2^32 by trial division with primes below 2^16.
fn is_small_prime(n: u64) -> bool {
    debug_assert!(n < 1 << 32);
    if n < 2 {
        return false;
    }
    for &q in small_primes() {
        if q * q > n {
            break;
        }
        if n % q == 0 {
            return n == q;
        }
    }
    true
}

/// Full factorization below 2^32: trial division leaves at most one cofactor,
/// and that cofactor is necessarily prime.
fn factor_u32(mut n: u64) -> BTreeMap<BigUint, u32> {
    debug_assert!(n < 1 << 32);
    let mut out = BTreeMap::new();
    for &q in small_primes() {
        if q * q > n {
            break;
        }
        while n % q == 0 {
            n /= q;
            *out.entry(BigUint::from(q)).or_insert(0) += 1;
        }
    }
    if n > 1 {
        *out.entry(BigUint::from(n)).or_insert(0) += 1;
    }
    out
}

fn certificate_for_two() -> PrattCertificate {
    PrattCertificate {
        prime: BigUint::from(2u32),
        generator: BigUint::one(),
        factorization: Vec::new(),
        children: Vec::new(),
    }
}

/// Builds the certificate for a prime whose `p - 1` factorization is already
/// known, certifying the non-2 factors recursively (they are all small, or
/// already certified by the caller via `known`).
fn assemble_certificate(prime: BigUint, factors: BTreeMap<BigUint, u32>) -> Result<PrattCertificate> {
    assemble_with_known(prime, factors, &BTreeMap::new())
}

fn assemble_with_known(
    prime: BigUint,
    factors: BTreeMap<BigUint, u32>,
    known: &BTreeMap<BigUint, PrattCertificate>,
) -> Result<PrattCertificate> {
    let two = BigUint::from(2u32);
    let generator = find_generator(&prime, &factors).ok_or_else(|| {
        Error::InvalidParameter(format!("no generator found for {prime}; input not prime?"))
    })?;
    let mut children = Vec::new();
    for q in factors.keys().filter(|q| **q != two) {
        if let Some(cert) = known.get(q) {
            children.push(cert.clone());
        } else {
            children.push(certify(q)?);
        }
    }
    Ok(PrattCertificate {
        prime,
        generator,
        factorization: factors
            .into_iter()
            .map(|(factor, multiplicity)| FactorPower {
                factor,
                multiplicity,
            })
            .collect(),
        children,
    })
}

/// Smallest generator of `(Z/p)^*`, scanning g = 2, 3, ... The density of
/// generators makes a handful of candidates enough for any prime.
fn find_generator(p: &BigUint, factors: &BTreeMap<BigUint, u32>) -> Option<BigUint> {
    if p.to_u64() == Some(2) {
        return Some(BigUint::one());
    }
    let p_minus_1 = p - BigUint::one();
    'candidates: for g in 2u64..4096 {
        let g_big = BigUint::from(g);
        if g_big >= *p {
            return None;
        }
        if g_big.modpow(&p_minus_1, p) != BigUint::one() {
            continue; // p not prime after all; caller surfaces the failure
        }
        for q in factors.keys() {
            if g_big.modpow(&(&p_minus_1 / q), p) == BigUint::one() {
                continue 'candidates;
            }
        }
        return Some(g_big);
    }
    None
}

fn generate_bits<R: RngCore + ?Sized>(
    bits: u64,
    rng: &mut R,
    attempts: &mut u64,
) -> Result<(BigUint, PrattCertificate)> {
    if bits <= SMALL_GEN_BITS {
        return generate_small_bits(bits, rng, attempts);
    }
    let q_bits = bits - COFACTOR_BITS - 1;
    let (q, q_cert) = generate_bits(q_bits, rng, attempts)?;
    let mut known = BTreeMap::new();
    known.insert(q.clone(), q_cert);

    let r_lo = 1u64 << (COFACTOR_BITS - 1);
    let r_span = (1u64 << (COFACTOR_BITS - 1)) - 1;
    loop {
        *attempts += 1;
        if *attempts > GENERATION_ATTEMPT_BUDGET {
            return Err(Error::PrimeGeneration {
                attempts: *attempts,
            });
        }
        let r = r_lo + random_below(&BigUint::from(r_span), rng).to_u64().unwrap();
        let p = BigUint::from(2u32) * r * &q + BigUint::one();
        if p.bits() != bits {
            continue;
        }
        if !probable_prime(&p, 40, rng) {
            continue;
        }
        // p - 1 = 2 * R * q with R < 2^20 fully factorable by trial division.
        let mut factors = factor_u32(r);
        *factors.entry(BigUint::from(2u32)).or_insert(0) += 1;
        *factors.entry(q.clone()).or_insert(0) += 1;
        let cert = assemble_with_known(p.clone(), factors, &known)?;
        if pratt_verify(&cert) {
            return Ok((p, cert));
        }
    }
}

fn generate_small_bits<R: RngCore + ?Sized>(
    bits: u64,
    rng: &mut R,
    attempts: &mut u64,
) -> Result<(BigUint, PrattCertificate)> {
    debug_assert!(bits >= 2 && bits <= SMALL_GEN_BITS);
    let lo = 1u64 << (bits - 1);
    let hi = (1u64 << bits) - 1;
    loop {
        *attempts += 1;
        if *attempts > GENERATION_ATTEMPT_BUDGET {
            return Err(Error::PrimeGeneration {
                attempts: *attempts,
            });
        }
        let candidate = lo
            + random_below(&BigUint::from(hi - lo), rng)
                .to_u64()
                .unwrap();
        if is_small_prime(candidate) {
            let p = BigUint::from(candidate);
            let cert = certify(&p)?;
            return Ok((p, cert));
        }
    }
}

/// Interval generation when the whole interval fits below 2^32: collect every
/// prime in `(lo, hi]` and pick one uniformly.
fn generate_in_small_interval<R: RngCore + ?Sized>(
    lo: &BigUint,
    hi: &BigUint,
    rng: &mut R,
) -> Result<(BigUint, PrattCertificate)> {
    let lo = lo.to_u64().unwrap();
    let hi = hi.to_u64().unwrap();
    let candidates: Vec<u64> = (lo + 1..=hi).filter(|&x| is_small_prime(x)).collect();
    if candidates.is_empty() {
        return Err(Error::PrimeGeneration {
            attempts: hi - lo,
        });
    }
    let pick = random_below(&BigUint::from(candidates.len() as u64 - 1), rng)
        .to_u64()
        .unwrap() as usize;
    let p = BigUint::from(candidates[pick]);
    let cert = certify(&p)?;
    Ok((p, cert))
}

/// One random single-field mutation of a valid certificate, chosen so the
/// result always violates a certificate invariant: the generator is replaced
/// by its square (a quadratic residue can never generate the full group), a
/// factor or multiplicity is bumped (breaking the product check), a child is
/// dropped, or a child's prime is shifted off its parent factor. Used by the
/// tamper-resistance suites.
pub fn tamper<R: RngCore + ?Sized>(cert: &PrattCertificate, rng: &mut R) -> PrattCertificate {
    #[derive(Clone, Copy)]
    enum Slot {
        Generator,
        Factor(usize),
        Multiplicity(usize),
        RemoveChild(usize),
        ChildPrime(usize),
    }

    fn collect(node: &PrattCertificate, path: Vec<usize>, out: &mut Vec<(Vec<usize>, Slot)>) {
        out.push((path.clone(), Slot::Generator));
        for i in 0..node.factorization.len() {
            out.push((path.clone(), Slot::Factor(i)));
            out.push((path.clone(), Slot::Multiplicity(i)));
        }
        for i in 0..node.children.len() {
            out.push((path.clone(), Slot::RemoveChild(i)));
            out.push((path.clone(), Slot::ChildPrime(i)));
            let mut sub = path.clone();
            sub.push(i);
            collect(&node.children[i], sub, out);
        }
    }

    fn node_mut<'a>(root: &'a mut PrattCertificate, path: &[usize]) -> &'a mut PrattCertificate {
        let mut node = root;
        for &i in path {
            node = &mut node.children[i];
        }
        node
    }

    let mut slots = Vec::new();
    collect(cert, Vec::new(), &mut slots);
    let pick = random_below(&BigUint::from(slots.len() as u64 - 1), rng)
        .to_u64()
        .unwrap() as usize;
    let (path, slot) = slots[pick].clone();

    let mut mutated = cert.clone();
    let node = node_mut(&mut mutated, &path);
    match slot {
        Slot::Generator => {
            if node.prime == BigUint::from(2u32) {
                node.generator = BigUint::zero();
            } else {
                node.generator = &node.generator * &node.generator % &node.prime;
            }
        }
        Slot::Factor(i) => {
            node.factorization[i].factor += BigUint::one();
        }
        Slot::Multiplicity(i) => {
            node.factorization[i].multiplicity += 1;
        }
        Slot::RemoveChild(i) => {
            node.children.remove(i);
        }
        Slot::ChildPrime(i) => {
            node.children[i].prime += BigUint::one();
        }
    }
    mutated
}
