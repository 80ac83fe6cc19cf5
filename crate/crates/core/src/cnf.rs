//! 3CNF formulas: DIMACS ingestion, evaluation, and the brute-force model
//! counting oracle that supplies ground truth for the experiments.
//!
//! Clauses always hold exactly three literal slots. DIMACS clauses of width
//! one or two are padded by repeating their last literal, which preserves
//! semantics (`l or l = l`); duplicates inside a clause are legal in general.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_chacha::rand_core::SeedableRng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default cap on exhaustive enumeration: formulas up to 2^24 assignments.
pub const DEFAULT_EXHAUSTIVE_BUDGET: u32 = 24;

/// One literal: a 1-based variable index with an optional negation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Literal {
    pub variable: u32,
    pub negated: bool,
}

impl Literal {
    pub fn positive(variable: u32) -> Self {
        Literal {
            variable,
            negated: false,
        }
    }

    pub fn negative(variable: u32) -> Self {
        Literal {
            variable,
            negated: true,
        }
    }

    fn to_dimacs(self) -> i64 {
        let v = i64::from(self.variable);
        if self.negated {
            -v
        } else {
            v
        }
    }
}

pub type Clause = [Literal; 3];

/// A 3CNF over variables `1..=n` with at least one clause.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreeCnf {
    variable_count: u32,
    clauses: Vec<Clause>,
}

impl ThreeCnf {
    pub fn new(variable_count: u32, clauses: Vec<Clause>) -> Result<Self> {
        if variable_count == 0 {
            return Err(Error::InvalidParameter(
                "a formula needs at least one variable".into(),
            ));
        }
        if clauses.is_empty() {
            return Err(Error::InvalidParameter(
                "a formula needs at least one clause".into(),
            ));
        }
        for clause in &clauses {
            for literal in clause {
                if literal.variable == 0 || literal.variable > variable_count {
                    return Err(Error::InvalidParameter(format!(
                        "variable {} out of range 1..={variable_count}",
                        literal.variable
                    )));
                }
            }
        }
        Ok(ThreeCnf {
            variable_count,
            clauses,
        })
    }

    pub fn variable_count(&self) -> u32 {
        self.variable_count
    }

    pub fn clause_count(&self) -> usize {
        self.clauses.len()
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    /// True iff every clause has a true literal under `assignment`
    /// (one bit per variable, index 0 is variable 1).
    pub fn evaluate(&self, assignment: &[bool]) -> Result<bool> {
        if assignment.len() != self.variable_count as usize {
            return Err(Error::AssignmentLength {
                expected: self.variable_count as usize,
                got: assignment.len(),
            });
        }
        Ok(self.clauses.iter().all(|clause| {
            clause
                .iter()
                .any(|l| assignment[(l.variable - 1) as usize] != l.negated)
        }))
    }

    /// Exact number of satisfying assignments by enumerating all 2^n
    /// assignments. The budget caps `n`.
    pub fn count_satisfying(&self) -> Result<u64> {
        self.count_satisfying_with_budget(DEFAULT_EXHAUSTIVE_BUDGET)
    }

    pub fn count_satisfying_with_budget(&self, budget_bits: u32) -> Result<u64> {
        let n = self.variable_count;
        if n > budget_bits || n >= 64 {
            return Err(Error::Capacity {
                what: "exhaustive #SAT enumeration",
                limit: u64::from(budget_bits),
                requested: u64::from(n),
            });
        }
        let mut assignment = vec![false; n as usize];
        let mut count = 0u64;
        for bits in 0u64..(1u64 << n) {
            for (i, slot) in assignment.iter_mut().enumerate() {
                *slot = (bits >> i) & 1 == 1;
            }
            if self.evaluate(&assignment)? {
                count += 1;
            }
        }
        Ok(count)
    }

    /// Canonical DIMACS text: header, then one width-3 clause per line.
    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p cnf {} {}\n", self.variable_count, self.clauses.len());
        for clause in &self.clauses {
            out.push_str(&format!(
                "{} {} {} 0\n",
                clause[0].to_dimacs(),
                clause[1].to_dimacs(),
                clause[2].to_dimacs()
            ));
        }
        out
    }

    /// SHA-256 of the canonical DIMACS form; identifies the formula in
    /// transcripts and on the wire.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.to_dimacs().as_bytes());
        h.finalize().into()
    }
}

/// Parses DIMACS CNF. Clauses may span lines; width-1 and width-2 clauses are
/// padded to width 3 by repeating the last literal; width above 3 is an
/// error, as is any variable outside the declared range.
pub fn parse_dimacs(text: &str) -> Result<ThreeCnf> {
    let mut header: Option<(u32, usize)> = None;
    let mut clauses: Vec<Clause> = Vec::new();
    let mut pending: Vec<Literal> = Vec::new();
    let mut pending_start_line = 0usize;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "duplicate problem header".into(),
                });
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 || parts[1] != "cnf" {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("malformed header {line:?}, expected `p cnf <vars> <clauses>`"),
                });
            }
            let vars: u32 = parts[2].parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid variable count {:?}", parts[2]),
            })?;
            let clause_count: usize = parts[3].parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid clause count {:?}", parts[3]),
            })?;
            header = Some((vars, clause_count));
            continue;
        }
        let (vars, _) = header.ok_or(Error::Parse {
            line: line_no,
            message: "clause before `p cnf` header".into(),
        })?;
        for token in line.split_whitespace() {
            let value: i64 = token.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid literal token {token:?}"),
            })?;
            if value == 0 {
                clauses.push(close_clause(&pending, pending_start_line)?);
                pending.clear();
                continue;
            }
            if pending.is_empty() {
                pending_start_line = line_no;
            }
            let variable = value.unsigned_abs();
            if variable > u64::from(vars) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("variable {variable} out of range 1..={vars}"),
                });
            }
            pending.push(Literal {
                variable: variable as u32,
                negated: value < 0,
            });
            if pending.len() > 3 {
                return Err(Error::ClauseWidth {
                    line: line_no,
                    width: pending.len(),
                });
            }
        }
    }

    let (vars, declared) = header.ok_or(Error::Parse {
        line: text.lines().count().max(1),
        message: "missing `p cnf` header".into(),
    })?;
    if !pending.is_empty() {
        return Err(Error::Parse {
            line: pending_start_line,
            message: "unterminated clause (missing trailing 0)".into(),
        });
    }
    if clauses.len() != declared {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            message: format!("header declares {declared} clauses, found {}", clauses.len()),
        });
    }
    ThreeCnf::new(vars, clauses)
}

fn close_clause(literals: &[Literal], line: usize) -> Result<Clause> {
    match literals {
        [] => Err(Error::Parse {
            line,
            message: "empty clause".into(),
        }),
        [a] => Ok([*a, *a, *a]),
        [a, b] => Ok([*a, *b, *b]),
        [a, b, c] => Ok([*a, *b, *c]),
        wide => Err(Error::ClauseWidth {
            line,
            width: wide.len(),
        }),
    }
}

/// Random 3CNF: each of the `m` clauses draws three literals independently,
/// variable uniform in `1..=n` and sign uniform. Deterministic given the seed.
pub fn random_3cnf(variable_count: u32, clause_count: usize, seed: u64) -> Result<ThreeCnf> {
    if variable_count == 0 || clause_count == 0 {
        return Err(Error::InvalidParameter(
            "random formula needs n >= 1 and m >= 1".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut clauses = Vec::with_capacity(clause_count);
    for _ in 0..clause_count {
        let mut clause = [Literal::positive(1); 3];
        for slot in &mut clause {
            *slot = Literal {
                variable: rng.gen_range(1..=variable_count),
                negated: rng.gen_bool(0.5),
            };
        }
        clauses.push(clause);
    }
    ThreeCnf::new(variable_count, clauses)
}

/// A 3DNF over variables `1..=n`: a disjunction of three-literal conjunctions.
/// The proof system handles a 3DNF tautology claim by verifying that its
/// De Morgan negation (a 3CNF) is unsatisfiable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreeDnf {
    variable_count: u32,
    terms: Vec<Clause>,
}

impl ThreeDnf {
    pub fn new(variable_count: u32, terms: Vec<Clause>) -> Result<Self> {
        // same structural constraints as the CNF side
        let checked = ThreeCnf::new(variable_count, terms)?;
        Ok(ThreeDnf {
            variable_count: checked.variable_count,
            terms: checked.clauses,
        })
    }

    pub fn variable_count(&self) -> u32 {
        self.variable_count
    }

    pub fn terms(&self) -> &[Clause] {
        &self.terms
    }

    /// De Morgan negation: each conjunction becomes a clause of negated
    /// literals. The DNF is a tautology iff the result is unsatisfiable.
    pub fn negation(&self) -> ThreeCnf {
        let clauses = self
            .terms
            .iter()
            .map(|term| {
                [
                    Literal {
                        variable: term[0].variable,
                        negated: !term[0].negated,
                    },
                    Literal {
                        variable: term[1].variable,
                        negated: !term[1].negated,
                    },
                    Literal {
                        variable: term[2].variable,
                        negated: !term[2].negated,
                    },
                ]
            })
            .collect();
        ThreeCnf::new(self.variable_count, clauses).expect("negation preserves structure")
    }

    pub fn evaluate(&self, assignment: &[bool]) -> Result<bool> {
        if assignment.len() != self.variable_count as usize {
            return Err(Error::AssignmentLength {
                expected: self.variable_count as usize,
                got: assignment.len(),
            });
        }
        Ok(self.terms.iter().any(|term| {
            term.iter()
                .all(|l| assignment[(l.variable - 1) as usize] != l.negated)
        }))
    }
}

/// Draws seeded random instances until `predicate` accepts, up to
/// `max_seeds` attempts; returns the instance and the seed that produced it.
pub fn harvest_instance(
    variable_count: u32,
    clause_count: usize,
    base_seed: u64,
    max_seeds: u64,
    predicate: impl Fn(&ThreeCnf) -> bool,
) -> Option<(ThreeCnf, u64)> {
    for offset in 0..max_seeds {
        let seed = base_seed.wrapping_add(offset);
        let candidate = random_3cnf(variable_count, clause_count, seed).ok()?;
        if predicate(&candidate) {
            return Some((candidate, seed));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padding_rule() {
        let cnf = parse_dimacs("p cnf 1 2\n1 0\n-1 0\n").unwrap();
        assert_eq!(cnf.variable_count(), 1);
        assert_eq!(cnf.clause_count(), 2);
        assert_eq!(
            cnf.clauses()[0],
            [
                Literal::positive(1),
                Literal::positive(1),
                Literal::positive(1)
            ]
        );
        assert_eq!(
            cnf.clauses()[1],
            [
                Literal::negative(1),
                Literal::negative(1),
                Literal::negative(1)
            ]
        );
    }

    #[test]
    fn parses_full_clause() {
        let cnf = parse_dimacs("p cnf 3 1\n1 -2 3 0\n").unwrap();
        assert_eq!(
            cnf.clauses()[0],
            [
                Literal::positive(1),
                Literal::negative(2),
                Literal::positive(3)
            ]
        );
    }

    #[test]
    fn rejects_out_of_range_variable() {
        let err = parse_dimacs("p cnf 2 1\n1 -2 3 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_wide_clause() {
        let err = parse_dimacs("p cnf 4 1\n1 2 3 4 0\n").unwrap_err();
        assert!(matches!(err, Error::ClauseWidth { width: 4, .. }), "{err}");
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_dimacs("p cnf x 1\n1 0\n").is_err());
        assert!(parse_dimacs("1 0\n").is_err());
        assert!(parse_dimacs("p cnf 1 1\n1\n").is_err());
        assert!(parse_dimacs("p cnf 1 2\n1 0\n").is_err());
        assert!(parse_dimacs("p cnf 1 1\n0\n").is_err());
    }

    #[test]
    fn evaluation_examples() {
        let contradiction = parse_dimacs("p cnf 1 2\n1 0\n-1 0\n").unwrap();
        assert!(!contradiction.evaluate(&[false]).unwrap());
        assert!(!contradiction.evaluate(&[true]).unwrap());
        let clause = parse_dimacs("p cnf 3 1\n1 -2 3 0\n").unwrap();
        assert!(clause.evaluate(&[false, true, true]).unwrap());
        assert!(!clause.evaluate(&[false, true, false]).unwrap());
        assert!(matches!(
            clause.evaluate(&[false, true]),
            Err(Error::AssignmentLength { .. })
        ));
    }

    #[test]
    fn counting_examples() {
        let contradiction = parse_dimacs("p cnf 1 2\n1 0\n-1 0\n").unwrap();
        assert_eq!(contradiction.count_satisfying().unwrap(), 0);
        let unit = parse_dimacs("p cnf 1 1\n1 0\n").unwrap();
        assert_eq!(unit.count_satisfying().unwrap(), 1);
        let tautology = parse_dimacs("p cnf 1 1\n1 -1 1 0\n").unwrap();
        assert_eq!(tautology.count_satisfying().unwrap(), 2);
    }

    #[test]
    fn counting_budget() {
        let cnf = random_3cnf(30, 10, 0).unwrap();
        assert!(matches!(
            cnf.count_satisfying(),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn count_matches_pointwise_evaluation() {
        for seed in 0..10 {
            let cnf = random_3cnf(6, 14, seed).unwrap();
            let mut expected = 0u64;
            for bits in 0u64..(1 << 6) {
                let assignment: Vec<bool> = (0..6).map(|i| (bits >> i) & 1 == 1).collect();
                if cnf.evaluate(&assignment).unwrap() {
                    expected += 1;
                }
            }
            assert_eq!(cnf.count_satisfying().unwrap(), expected);
        }
    }

    #[test]
    fn random_generation_is_deterministic() {
        let a = random_3cnf(5, 20, 42).unwrap();
        let b = random_3cnf(5, 20, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_3cnf(5, 20, 43).unwrap());
    }

    #[test]
    fn dense_random_instances_are_mostly_unsat() {
        // ratio m/n = 10, far past the 3SAT threshold
        let unsat = (0..100)
            .filter(|&seed| {
                random_3cnf(5, 50, seed)
                    .unwrap()
                    .count_satisfying()
                    .unwrap()
                    == 0
            })
            .count();
        assert!(unsat >= 90, "only {unsat}/100 UNSAT at ratio 10");
    }

    #[test]
    fn dimacs_round_trip() {
        for seed in 0..20 {
            let cnf = random_3cnf(7, 21, seed).unwrap();
            assert_eq!(parse_dimacs(&cnf.to_dimacs()).unwrap(), cnf);
        }
    }

    #[test]
    fn dnf_negation_by_de_morgan() {
        // x1 & x2 is not a tautology; its negation (-x1 | -x2) is satisfiable
        let dnf = ThreeDnf::new(
            2,
            vec![[
                Literal::positive(1),
                Literal::positive(2),
                Literal::positive(2),
            ]],
        )
        .unwrap();
        let negated = dnf.negation();
        assert_eq!(
            negated.clauses()[0],
            [
                Literal::negative(1),
                Literal::negative(2),
                Literal::negative(2)
            ]
        );
        // pointwise: dnf(a) = !negation(a) for all assignments
        for bits in 0u64..4 {
            let a: Vec<bool> = (0..2).map(|i| (bits >> i) & 1 == 1).collect();
            assert_eq!(dnf.evaluate(&a).unwrap(), !negated.evaluate(&a).unwrap());
        }
    }
}
