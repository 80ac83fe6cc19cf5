//! Univariate polynomials over `F_p` in coefficient form.
//!
//! These are the objects the prover sends each round: a coefficient list,
//! low to high degree, with trailing zeros trimmed (the zero polynomial is
//! the empty list). The protocol needs only evaluation and interpolation.

use crate::error::{Error, Result};
use crate::field::{Field, FieldElement};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnivariatePoly {
    field: Field,
    coefficients: Vec<FieldElement>,
}

impl UnivariatePoly {
    /// Canonicalizes by trimming trailing zero coefficients.
    pub fn new(field: Field, mut coefficients: Vec<FieldElement>) -> Result<Self> {
        if coefficients.iter().any(|c| *c.field() != field) {
            return Err(Error::ModulusMismatch);
        }
        while coefficients.last().is_some_and(|c| c.is_zero()) {
            coefficients.pop();
        }
        Ok(UnivariatePoly {
            field,
            coefficients,
        })
    }

    pub fn zero(field: Field) -> Self {
        UnivariatePoly {
            field,
            coefficients: Vec::new(),
        }
    }

    pub fn constant(value: FieldElement) -> Self {
        let field = value.field().clone();
        UnivariatePoly::new(field, vec![value]).expect("single coefficient")
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    /// Coefficients low to high; empty for the zero polynomial.
    pub fn coefficients(&self) -> &[FieldElement] {
        &self.coefficients
    }

    pub fn coefficient_count(&self) -> usize {
        self.coefficients.len()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coefficients.len().checked_sub(1)
    }

    /// Horner evaluation; the zero polynomial evaluates to 0 everywhere.
    pub fn evaluate(&self, x: &FieldElement) -> Result<FieldElement> {
        if *x.field() != self.field {
            return Err(Error::ModulusMismatch);
        }
        let mut acc = self.field.zero();
        for coefficient in self.coefficients.iter().rev() {
            acc = acc.mul(x)?.add(coefficient)?;
        }
        Ok(acc)
    }

    pub fn evaluate_u64(&self, x: u64) -> Result<FieldElement> {
        self.evaluate(&self.field.element_from_u64(x))
    }
}

/// Unique polynomial of degree below `points.len()` through all the points
/// (Lagrange form, expanded to coefficients in O(k^2) field operations).
/// All node abscissas must be distinct.
pub fn interpolate(points: &[(FieldElement, FieldElement)]) -> Result<UnivariatePoly> {
    if points.is_empty() {
        return Err(Error::InvalidParameter(
            "interpolation needs at least one point".into(),
        ));
    }
    let field = points[0].0.field().clone();
    for (x, y) in points {
        if *x.field() != field || *y.field() != field {
            return Err(Error::ModulusMismatch);
        }
    }
    for (i, (xi, _)) in points.iter().enumerate() {
        for (xj, _) in &points[i + 1..] {
            if xi == xj {
                return Err(Error::DuplicateNode);
            }
        }
    }

    let k = points.len();
    // master polynomial Z(X) = prod (X - x_j), coefficients low to high
    let mut master = vec![field.zero(); k + 1];
    master[0] = field.one();
    let mut degree = 0usize;
    for (x, _) in points {
        let neg_x = x.neg();
        // multiply in place by (X - x)
        master[degree + 1] = master[degree].clone();
        for idx in (1..=degree).rev() {
            master[idx] = master[idx - 1].add(&master[idx].mul(&neg_x)?)?;
        }
        master[0] = master[0].mul(&neg_x)?;
        degree += 1;
    }

    let mut result = vec![field.zero(); k];
    let mut basis = vec![field.zero(); k];
    for (xj, yj) in points {
        // N_j = Z / (X - x_j) by synthetic division
        let mut carry = master[k].clone();
        for idx in (0..k).rev() {
            basis[idx] = carry.clone();
            carry = master[idx].add(&carry.mul(xj)?)?;
        }
        // denominator prod_{l != j} (x_j - x_l) equals N_j(x_j)
        let mut denominator = field.zero();
        for coefficient in basis.iter().rev() {
            denominator = denominator.mul(xj)?.add(coefficient)?;
        }
        let weight = yj.mul(&denominator.inv()?)?;
        for (slot, coefficient) in result.iter_mut().zip(basis.iter()) {
            *slot = slot.add(&weight.mul(coefficient)?)?;
        }
    }
    UnivariatePoly::new(field, result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn poly(field: &Field, coeffs: &[u64]) -> UnivariatePoly {
        UnivariatePoly::new(
            field.clone(),
            coeffs.iter().map(|&c| field.element_from_u64(c)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn horner_examples() {
        let field = Field::from_u64(11);
        let q = poly(&field, &[1, 1]); // X + 1
        assert_eq!(q.evaluate_u64(2).unwrap(), field.element_from_u64(3));
        let zero = UnivariatePoly::zero(field.clone());
        for x in 0..11 {
            assert_eq!(zero.evaluate_u64(x).unwrap(), field.zero());
        }
        // 3X - 3X^2 + X^3 is the arithmetization of (x or x or x); value 1 at X=1
        let clause = poly(&field, &[0, 3, 8, 1]);
        assert_eq!(clause.evaluate_u64(1).unwrap(), field.one());
    }

    #[test]
    fn trailing_zeros_trimmed() {
        let field = Field::from_u64(11);
        let q = poly(&field, &[5, 0, 0]);
        assert_eq!(q.coefficient_count(), 1);
        assert_eq!(poly(&field, &[0, 0]).coefficient_count(), 0);
    }

    #[test]
    fn interpolation_examples() {
        let field = Field::from_u64(11);
        let pts: Vec<_> = [(0u64, 1u64), (1, 2), (2, 3)]
            .iter()
            .map(|&(x, y)| (field.element_from_u64(x), field.element_from_u64(y)))
            .collect();
        assert_eq!(interpolate(&pts).unwrap(), poly(&field, &[1, 1]));

        let single = [(field.element_from_u64(5), field.element_from_u64(9))];
        assert_eq!(interpolate(&single).unwrap(), poly(&field, &[9]));

        let zeros: Vec<_> = (0..4)
            .map(|x| (field.element_from_u64(x), field.zero()))
            .collect();
        assert_eq!(interpolate(&zeros).unwrap(), UnivariatePoly::zero(field));
    }

    #[test]
    fn duplicate_nodes_rejected() {
        let field = Field::from_u64(11);
        let pts = [
            (field.element_from_u64(3), field.element_from_u64(1)),
            (field.element_from_u64(3), field.element_from_u64(2)),
        ];
        assert!(matches!(interpolate(&pts), Err(Error::DuplicateNode)));
    }

    #[test]
    fn eval_interpolate_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let field = Field::from_u64(2_147_483_647);
        for _ in 0..50 {
            let degree = 1 + (rng.next_u32() as usize % 50);
            let original = UnivariatePoly::new(
                field.clone(),
                (0..=degree).map(|_| field.sample(&mut rng)).collect(),
            )
            .unwrap();
            let points: Vec<_> = (0..original.coefficient_count() as u64)
                .map(|x| {
                    let node = field.element_from_u64(x);
                    let value = original.evaluate(&node).unwrap();
                    (node, value)
                })
                .collect();
            assert_eq!(interpolate(&points).unwrap(), original);
        }
    }

    #[test]
    fn oversampling_gives_same_polynomial() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let field = Field::from_u64(65537);
        for _ in 0..20 {
            let degree = rng.next_u32() as usize % 20;
            let original = UnivariatePoly::new(
                field.clone(),
                (0..=degree).map(|_| field.sample(&mut rng)).collect(),
            )
            .unwrap();
            let points: Vec<_> = (0..original.coefficient_count() as u64 + 1)
                .map(|x| {
                    let node = field.element_from_u64(x);
                    let value = original.evaluate(&node).unwrap();
                    (node, value)
                })
                .collect();
            assert_eq!(interpolate(&points).unwrap(), original);
        }
    }
}
