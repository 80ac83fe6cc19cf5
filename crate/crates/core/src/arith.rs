//! Arithmetization of a 3CNF into a polynomial over `F_p`.
//!
//! A clause like `(x or not y or z)` becomes `1 - (1-x) * y * (1-z)` and the
//! formula polynomial is the product of the arithmetized clauses, so it
//! agrees with the formula on Boolean points and has degree at most `3m`.
//! The polynomial is represented by its evaluator only; expanding a
//! multivariate coefficient vector is neither needed nor feasible.
//!
//! Boolean partial sums iterate suffixes in plain binary counting order;
//! the suffix cost of `2^(n-i)` formula evaluations per point is the point
//! of the protocol and is left alone, apart from a word-sized arithmetic
//! path for moduli that fit in a machine word.

use num_traits::ToPrimitive;

use crate::cnf::{Clause, ThreeCnf};
use crate::error::{Error, Result};
use crate::field::{Field, FieldElement};

/// Default cap on the number of suffix variables a partial sum enumerates.
pub const DEFAULT_SUFFIX_BUDGET: u32 = crate::cnf::DEFAULT_EXHAUSTIVE_BUDGET;

/// Value of one arithmetized clause at a field point:
/// `1 - prod t(l)` with `t(x_i) = 1 - point[i]` for a positive literal and
/// `t(not x_i) = point[i]` for a negative one.
pub fn eval_clause(clause: &Clause, point: &[FieldElement]) -> Result<FieldElement> {
    let field = point_field(point)?;
    let mut product = field.one();
    for literal in clause {
        let index = (literal.variable - 1) as usize;
        let value = point.get(index).ok_or(Error::PointLength {
            expected: literal.variable as usize,
            got: point.len(),
        })?;
        let term = if literal.negated {
            value.clone()
        } else {
            field.one().sub(value)?
        };
        product = product.mul(&term)?;
    }
    field.one().sub(&product)
}

/// Value of the arithmetized formula: the product of all clause values.
/// On Boolean points this agrees with the formula itself.
pub fn eval_formula(cnf: &ThreeCnf, point: &[FieldElement]) -> Result<FieldElement> {
    let n = cnf.variable_count() as usize;
    if point.len() != n {
        return Err(Error::PointLength {
            expected: n,
            got: point.len(),
        });
    }
    let field = point_field(point)?;
    if let Some(p) = field.small_prime() {
        let compiled = SmallFormula::new(cnf, p);
        let coords = small_coords(point);
        return Ok(field.element_from_u64(compiled.eval(&coords)));
    }
    let mut product = field.one();
    for clause in cnf.clauses() {
        product = product.mul(&eval_clause(clause, point)?)?;
        if product.is_zero() {
            break;
        }
    }
    Ok(product)
}

/// Exact value of the round polynomial at `x`: the formula polynomial with
/// the first `i-1` variables pinned to `prefix`, variable `i` pinned to `x`,
/// summed over all Boolean values of the remaining `n - i` variables.
pub fn partial_sum(cnf: &ThreeCnf, prefix: &[FieldElement], x: &FieldElement) -> Result<FieldElement> {
    partial_sum_with_budget(cnf, prefix, x, DEFAULT_SUFFIX_BUDGET)
}

pub fn partial_sum_with_budget(
    cnf: &ThreeCnf,
    prefix: &[FieldElement],
    x: &FieldElement,
    budget_bits: u32,
) -> Result<FieldElement> {
    let n = cnf.variable_count() as usize;
    if prefix.len() >= n {
        return Err(Error::PointLength {
            expected: n - 1,
            got: prefix.len(),
        });
    }
    let suffix_vars = (n - prefix.len() - 1) as u32;
    if suffix_vars > budget_bits {
        return Err(Error::Capacity {
            what: "Boolean suffix enumeration",
            limit: u64::from(budget_bits),
            requested: u64::from(suffix_vars),
        });
    }
    let field = x.field().clone();
    for value in prefix {
        if *value.field() != field {
            return Err(Error::ModulusMismatch);
        }
    }

    if let Some(p) = field.small_prime() {
        let compiled = SmallFormula::new(cnf, p);
        let mut coords = vec![0u64; n];
        for (slot, value) in coords.iter_mut().zip(prefix.iter()) {
            *slot = value.small_residue().expect("residue below a u64 modulus");
        }
        coords[prefix.len()] = x.small_residue().expect("residue below a u64 modulus");
        let base = prefix.len() + 1;
        let mut sum = 0u64;
        for suffix in 0u64..(1u64 << suffix_vars) {
            for bit in 0..suffix_vars as usize {
                coords[base + bit] = (suffix >> bit) & 1;
            }
            sum = ((u128::from(sum) + u128::from(compiled.eval(&coords))) % u128::from(p)) as u64;
        }
        return Ok(field.element_from_u64(sum));
    }

    let mut point: Vec<FieldElement> = Vec::with_capacity(n);
    point.extend_from_slice(prefix);
    point.push(x.clone());
    point.extend(std::iter::repeat(field.zero()).take(suffix_vars as usize));
    let base = prefix.len() + 1;
    let mut sum = field.zero();
    for suffix in 0u64..(1u64 << suffix_vars) {
        for bit in 0..suffix_vars as usize {
            point[base + bit] = if (suffix >> bit) & 1 == 1 {
                field.one()
            } else {
                field.zero()
            };
        }
        sum = sum.add(&eval_formula_unchecked(cnf, &point, &field)?)?;
    }
    Ok(sum)
}

/// Sum of the formula polynomial over the whole Boolean cube; equals the
/// model count mod p whenever p exceeds 2^n. Diagnostic helper linking the
/// protocol's first-round check to the counting oracle.
pub fn boolean_total(cnf: &ThreeCnf, field: &Field) -> Result<FieldElement> {
    let q0 = partial_sum(cnf, &[], &field.zero())?;
    let q1 = partial_sum(cnf, &[], &field.one())?;
    q0.add(&q1)
}

fn eval_formula_unchecked(
    cnf: &ThreeCnf,
    point: &[FieldElement],
    field: &Field,
) -> Result<FieldElement> {
    let mut product = field.one();
    for clause in cnf.clauses() {
        product = product.mul(&eval_clause(clause, point)?)?;
        if product.is_zero() {
            break;
        }
    }
    Ok(product)
}

fn point_field(point: &[FieldElement]) -> Result<Field> {
    let first = point.first().ok_or(Error::PointLength {
        expected: 1,
        got: 0,
    })?;
    let field = first.field().clone();
    for value in &point[1..] {
        if *value.field() != field {
            return Err(Error::ModulusMismatch);
        }
    }
    Ok(field)
}

/// Clause table compiled to 0-based indices for the word-sized path.
struct SmallFormula {
    p: u64,
    clauses: Vec<[(usize, bool); 3]>,
}

impl SmallFormula {
    fn new(cnf: &ThreeCnf, p: u64) -> Self {
        let clauses = cnf
            .clauses()
            .iter()
            .map(|clause| {
                [
                    ((clause[0].variable - 1) as usize, clause[0].negated),
                    ((clause[1].variable - 1) as usize, clause[1].negated),
                    ((clause[2].variable - 1) as usize, clause[2].negated),
                ]
            })
            .collect();
        SmallFormula { p, clauses }
    }

    fn eval(&self, point: &[u64]) -> u64 {
        let p = u128::from(self.p);
        let mut acc: u128 = 1;
        for clause in &self.clauses {
            let mut term: u128 = 1;
            for &(var, negated) in clause {
                let v = u128::from(point[var]);
                let t = if negated { v } else { (p + 1 - v) % p };
                term = term * t % p;
            }
            acc = acc * ((p + 1 - term) % p) % p;
            if acc == 0 {
                return 0;
            }
        }
        acc as u64
    }
}

/// Booleans to residues for the fast path; callers guarantee the field fits.
fn small_coords(point: &[FieldElement]) -> Vec<u64> {
    point
        .iter()
        .map(|value| value.residue().to_u64().expect("residue below a u64 modulus"))
        .collect()
}
