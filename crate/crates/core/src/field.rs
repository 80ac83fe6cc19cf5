//! Arbitrary-precision prime-field arithmetic.
//!
//! Every protocol computation happens in `F_p` for a runtime modulus `p`.
//! Residues are stored fully reduced; all values are immutable and the
//! operations are pure, so elements can be shared freely across threads.
//! Moduli up to 64 bits take a word-sized arithmetic path internally; the
//! results are identical to the big-integer path.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::RngCore;

use crate::error::{Error, Result};

/// A prime modulus `p`, together with how strongly its primality is known:
/// `certified` is set once a Pratt certificate for `p` has been verified,
/// and stays false for merely probable primes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeModulus {
    value: BigUint,
    bit_length: u64,
    certified: bool,
    small: Option<u64>,
}

impl PrimeModulus {
    pub fn new(value: BigUint, certified: bool) -> Result<Self> {
        if value < BigUint::from(2u32) {
            return Err(Error::InvalidParameter(format!(
                "modulus must be at least 2, got {value}"
            )));
        }
        let bit_length = value.bits();
        let small = value.to_u64();
        Ok(PrimeModulus {
            value,
            bit_length,
            certified,
            small,
        })
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn bit_length(&self) -> u64 {
        self.bit_length
    }

    pub fn is_certified(&self) -> bool {
        self.certified
    }
}

/// Cheap-to-clone handle on a prime field `F_p`.
#[derive(Clone)]
pub struct Field {
    modulus: Arc<PrimeModulus>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Field(p={})", self.modulus.value)
    }
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.modulus, &other.modulus) || self.modulus.value == other.modulus.value
    }
}

impl Eq for Field {}

impl Field {
    pub fn new(modulus: PrimeModulus) -> Self {
        Field {
            modulus: Arc::new(modulus),
        }
    }

    /// Field over a small prime; panics if `p < 2`. Intended for tests and
    /// examples where the modulus is a literal.
    pub fn from_u64(p: u64) -> Self {
        Field::new(PrimeModulus::new(BigUint::from(p), false).expect("modulus >= 2"))
    }

    pub fn modulus(&self) -> &PrimeModulus {
        &self.modulus
    }

    pub fn prime(&self) -> &BigUint {
        &self.modulus.value
    }

    /// The modulus as a machine word when it fits, enabling the fast path.
    pub(crate) fn small_prime(&self) -> Option<u64> {
        self.modulus.small
    }

    pub fn zero(&self) -> FieldElement {
        FieldElement {
            residue: BigUint::zero(),
            field: self.clone(),
        }
    }

    pub fn one(&self) -> FieldElement {
        // p >= 2, so 1 is already reduced.
        FieldElement {
            residue: BigUint::one(),
            field: self.clone(),
        }
    }

    /// Embeds an arbitrary integer by reduction mod p.
    pub fn element(&self, value: BigUint) -> FieldElement {
        FieldElement {
            residue: value % &self.modulus.value,
            field: self.clone(),
        }
    }

    pub fn element_from_u64(&self, value: u64) -> FieldElement {
        self.element(BigUint::from(value))
    }

    /// Decodes a big-endian byte string, requiring the value to be reduced.
    pub fn element_from_bytes(&self, bytes: &[u8]) -> Result<FieldElement> {
        let value = BigUint::from_bytes_be(bytes);
        if value >= self.modulus.value {
            return Err(Error::InvalidParameter(format!(
                "residue {value} not reduced modulo {}",
                self.modulus.value
            )));
        }
        Ok(FieldElement {
            residue: value,
            field: self.clone(),
        })
    }

    /// Uniform element of `F_p` by rejection sampling on `bit_length`-bit
    /// draws. Since `p` has exactly `bit_length` bits, each draw is accepted
    /// with probability `p / 2^bit_length > 1/2`, so fewer than two draws are
    /// needed on average. Deterministic given the rng state.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> FieldElement {
        self.sample_counting(rng).0
    }

    /// As [`Field::sample`], also reporting how many draws were consumed.
    pub fn sample_counting<R: RngCore + ?Sized>(&self, rng: &mut R) -> (FieldElement, u64) {
        let bits = self.modulus.bit_length;
        let nbytes = ((bits + 7) / 8) as usize;
        let excess = (nbytes as u64 * 8 - bits) as u32;
        let mut buf = vec![0u8; nbytes];
        let mut attempts = 0u64;
        loop {
            attempts += 1;
            rng.fill_bytes(&mut buf);
            buf[0] &= 0xffu8 >> excess;
            let candidate = BigUint::from_bytes_be(&buf);
            if candidate < self.modulus.value {
                return (
                    FieldElement {
                        residue: candidate,
                        field: self.clone(),
                    },
                    attempts,
                );
            }
        }
    }
}

/// A fully reduced residue of `F_p` carrying its field handle.
#[derive(Clone)]
pub struct FieldElement {
    residue: BigUint,
    field: Field,
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.residue, self.field.modulus.value)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.residue)
    }
}

impl PartialEq for FieldElement {
    fn eq(&self, other: &Self) -> bool {
        self.residue == other.residue && self.field == other.field
    }
}

impl Eq for FieldElement {}

impl FieldElement {
    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn residue(&self) -> &BigUint {
        &self.residue
    }

    pub fn is_zero(&self) -> bool {
        self.residue.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.residue.is_one()
    }

    pub(crate) fn small_residue(&self) -> Option<u64> {
        self.residue.to_u64()
    }

    fn same_field(&self, other: &FieldElement) -> Result<()> {
        if self.field == other.field {
            Ok(())
        } else {
            Err(Error::ModulusMismatch)
        }
    }

    fn from_u64_unchecked(field: &Field, residue: u64) -> FieldElement {
        FieldElement {
            residue: BigUint::from(residue),
            field: field.clone(),
        }
    }

    pub fn add(&self, other: &FieldElement) -> Result<FieldElement> {
        self.same_field(other)?;
        if let Some(p) = self.field.small_prime() {
            let a = self.small_residue().unwrap() as u128;
            let b = other.small_residue().unwrap() as u128;
            return Ok(Self::from_u64_unchecked(
                &self.field,
                ((a + b) % p as u128) as u64,
            ));
        }
        let mut sum = &self.residue + &other.residue;
        if sum >= *self.field.prime() {
            sum -= self.field.prime();
        }
        Ok(FieldElement {
            residue: sum,
            field: self.field.clone(),
        })
    }

    pub fn sub(&self, other: &FieldElement) -> Result<FieldElement> {
        self.same_field(other)?;
        if let Some(p) = self.field.small_prime() {
            let a = self.small_residue().unwrap();
            let b = other.small_residue().unwrap();
            let r = if a >= b { a - b } else { a + (p - b) };
            return Ok(Self::from_u64_unchecked(&self.field, r));
        }
        let residue = if self.residue >= other.residue {
            &self.residue - &other.residue
        } else {
            self.field.prime() - &other.residue + &self.residue
        };
        Ok(FieldElement {
            residue,
            field: self.field.clone(),
        })
    }

    pub fn mul(&self, other: &FieldElement) -> Result<FieldElement> {
        self.same_field(other)?;
        if let Some(p) = self.field.small_prime() {
            let a = self.small_residue().unwrap() as u128;
            let b = other.small_residue().unwrap() as u128;
            return Ok(Self::from_u64_unchecked(
                &self.field,
                ((a * b) % p as u128) as u64,
            ));
        }
        Ok(FieldElement {
            residue: &self.residue * &other.residue % self.field.prime(),
            field: self.field.clone(),
        })
    }

    pub fn neg(&self) -> FieldElement {
        if self.residue.is_zero() {
            return self.clone();
        }
        FieldElement {
            residue: self.field.prime() - &self.residue,
            field: self.field.clone(),
        }
    }

    /// `self^exponent` by square-and-multiply, with the `0^0 = 1` convention
    /// so empty products behave.
    pub fn pow(&self, exponent: &BigUint) -> FieldElement {
        FieldElement {
            residue: self.residue.modpow(exponent, self.field.prime()),
            field: self.field.clone(),
        }
    }

    /// Multiplicative inverse via Fermat: `a^(p-2)`. Requires a prime modulus,
    /// which every constructor in this crate guarantees.
    pub fn inv(&self) -> Result<FieldElement> {
        if self.residue.is_zero() {
            return Err(Error::DivisionByZero);
        }
        let exp = self.field.prime() - BigUint::from(2u32);
        Ok(self.pow(&exp))
    }

    /// Minimal-length big-endian encoding of the residue; zero encodes as the
    /// empty string. The networked protocol pads this to a fixed width.
    pub fn to_bytes(&self) -> Vec<u8> {
        if self.residue.is_zero() {
            Vec::new()
        } else {
            self.residue.to_bytes_be()
        }
    }
}
