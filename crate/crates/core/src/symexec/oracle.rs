//! Path-feasibility oracles.
//!
//! An oracle only has to be sound for `Unsat`: the explorer prunes a branch
//! when the oracle proves it infeasible and treats `Unknown` as feasible.
//! Oracles are registered by name so the CLI can pick one at runtime.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use super::explore::PathConstraint;
use super::term::{Op, Term, TermRef};
use super::word::U256;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Feasibility {
    Sat,
    Unsat,
    Unknown,
}

impl fmt::Display for Feasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Feasibility::Sat => "SAT",
            Feasibility::Unsat => "UNSAT",
            Feasibility::Unknown => "UNKNOWN",
        })
    }
}

pub trait FeasibilityOracle: Send + Sync {
    fn name(&self) -> &'static str;
    fn check(&self, constraints: &[PathConstraint]) -> Feasibility;
}

/// Never prunes.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullOracle;

impl FeasibilityOracle for NullOracle {
    fn name(&self) -> &'static str {
        "none"
    }

    fn check(&self, _: &[PathConstraint]) -> Feasibility {
        Feasibility::Unknown
    }
}

/// Constant conditions and `c` / `ISZERO(c)` contradictions only.
#[derive(Debug, Default, Clone, Copy)]
pub struct StructuralOracle;

impl FeasibilityOracle for StructuralOracle {
    fn name(&self) -> &'static str {
        "structural"
    }

    fn check(&self, constraints: &[PathConstraint]) -> Feasibility {
        let mut literals = BTreeSet::new();
        for c in constraints {
            match c.term.as_const() {
                Some(v) if v.is_zero() => return Feasibility::Unsat,
                Some(_) => continue,
                None => {}
            }
            let (atom, polarity) = literal(&c.term);
            if literals.contains(&(atom.clone(), !polarity)) {
                return Feasibility::Unsat;
            }
            literals.insert((atom, polarity));
        }
        Feasibility::Unknown
    }
}

/// Structural contradictions plus interval and (dis)equality reasoning on
/// terms compared against constants, and ordering cycles between terms.
///
/// Answers `Sat` only when every constraint is a range fact about one and
/// the same term.
#[derive(Debug, Default, Clone, Copy)]
pub struct IntervalOracle;

impl FeasibilityOracle for IntervalOracle {
    fn name(&self) -> &'static str {
        "interval"
    }

    fn check(&self, constraints: &[PathConstraint]) -> Feasibility {
        if StructuralOracle.check(constraints) == Feasibility::Unsat {
            return Feasibility::Unsat;
        }
        let mut ranges: BTreeMap<TermRef, Range> = BTreeMap::new();
        let mut order = Ordering::default();
        let mut all_ranged = true;
        for c in constraints {
            match classify(&c.term) {
                Fact::True => {}
                Fact::False => return Feasibility::Unsat,
                Fact::Range(atom, r) => {
                    let entry = ranges.entry(atom).or_insert_with(Range::full);
                    if !entry.meet(&r) {
                        return Feasibility::Unsat;
                    }
                }
                Fact::Less { lhs, rhs, strict } => {
                    all_ranged = false;
                    order.add(lhs, rhs, strict);
                }
                Fact::Other => all_ranged = false,
            }
        }
        if ranges.values().any(|r| r.is_empty()) {
            return Feasibility::Unsat;
        }
        if order.contradicts(&ranges) {
            return Feasibility::Unsat;
        }
        if all_ranged && ranges.len() <= 1 {
            Feasibility::Sat
        } else {
            Feasibility::Unknown
        }
    }
}

/// The default oracle.
pub fn feasible(constraints: &[PathConstraint]) -> Feasibility {
    IntervalOracle.check(constraints)
}

fn literal(term: &TermRef) -> (TermRef, bool) {
    match term.as_ref() {
        Term::App { op: Op::IsZero, args, .. } if args[0].is_boolean() => (args[0].clone(), false),
        _ => (term.clone(), true),
    }
}

/// Inclusive range with excluded points, optionally pinned to one value.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Range {
    lo: U256,
    hi: U256,
    excluded: BTreeSet<U256>,
}

impl Range {
    fn full() -> Self {
        Range { lo: U256::ZERO, hi: U256::MAX, excluded: BTreeSet::new() }
    }

    fn exactly(v: U256) -> Self {
        Range { lo: v, hi: v, excluded: BTreeSet::new() }
    }

    fn at_most(v: U256) -> Self {
        Range { lo: U256::ZERO, hi: v, excluded: BTreeSet::new() }
    }

    fn at_least(v: U256) -> Self {
        Range { lo: v, hi: U256::MAX, excluded: BTreeSet::new() }
    }

    fn except(v: U256) -> Self {
        Range { lo: U256::ZERO, hi: U256::MAX, excluded: BTreeSet::from([v]) }
    }

    /// Intersects in place; false when the result is empty.
    fn meet(&mut self, other: &Range) -> bool {
        self.lo = self.lo.max(other.lo);
        self.hi = self.hi.min(other.hi);
        self.excluded.extend(other.excluded.iter().copied());
        !self.is_empty()
    }

    fn is_empty(&self) -> bool {
        if self.lo > self.hi {
            return true;
        }
        let width = self.hi - self.lo;
        // Empty only if every point of a small interval is excluded.
        match usize::try_from(width) {
            Ok(w) if w < self.excluded.len() => self.excluded.range(self.lo..=self.hi).count() == w + 1,
            _ => false,
        }
    }

    fn min_value(&self) -> U256 {
        self.lo
    }

    fn max_value(&self) -> U256 {
        self.hi
    }
}

enum Fact {
    True,
    False,
    Range(TermRef, Range),
    /// `lhs < rhs` (strict) or `lhs <= rhs`.
    Less {
        lhs: TermRef,
        rhs: TermRef,
        strict: bool,
    },
    Other,
}

fn classify(term: &TermRef) -> Fact {
    if let Some(v) = term.as_const() {
        return if v.is_zero() { Fact::False } else { Fact::True };
    }
    let (atom, positive) = literal(term);
    match (atom.op(), atom.args()) {
        (Some(Op::Eq), [x, k]) if k.is_const() && !x.is_const() => {
            let k = k.as_const().unwrap();
            let r = if positive { Range::exactly(k) } else { Range::except(k) };
            Fact::Range(x.clone(), r)
        }
        (Some(op @ (Op::Lt | Op::Gt)), [a, b]) => compare(op, a, b, positive),
        (Some(Op::IsZero), [x]) if !x.is_boolean() => {
            // positive: ISZERO(x) holds -> x == 0; negated form is ISZERO(ISZERO(x))
            Fact::Range(x.clone(), if positive { Range::exactly(U256::ZERO) } else { Range::except(U256::ZERO) })
        }
        _ => Fact::Other,
    }
}

/// Fact for `op(a, b)` (positive) or its negation.
fn compare(op: Op, a: &TermRef, b: &TermRef, positive: bool) -> Fact {
    // Rewrite as lhs < rhs (strict) or, when negated, rhs <= lhs.
    let (lhs, rhs) = if op == Op::Lt { (a, b) } else { (b, a) };
    let (lhs, rhs, strict) = if positive { (lhs, rhs, true) } else { (rhs, lhs, false) };
    let one = U256::from(1u8);
    match (lhs.as_const(), rhs.as_const()) {
        (None, Some(k)) => {
            if strict {
                if k.is_zero() {
                    Fact::False
                } else {
                    Fact::Range(lhs.clone(), Range::at_most(k - one))
                }
            } else {
                Fact::Range(lhs.clone(), Range::at_most(k))
            }
        }
        (Some(k), None) => {
            if strict {
                if k == U256::MAX {
                    Fact::False
                } else {
                    Fact::Range(rhs.clone(), Range::at_least(k + one))
                }
            } else {
                Fact::Range(rhs.clone(), Range::at_least(k))
            }
        }
        _ => Fact::Less { lhs: lhs.clone(), rhs: rhs.clone(), strict },
    }
}

#[derive(Default)]
struct Ordering {
    edges: Vec<(TermRef, TermRef, bool)>,
}

impl Ordering {
    fn add(&mut self, lhs: TermRef, rhs: TermRef, strict: bool) {
        self.edges.push((lhs, rhs, strict));
    }

    /// Detects `a < a`, two-cycles with a strict edge, and strict edges that
    /// the known ranges rule out.
    fn contradicts(&self, ranges: &BTreeMap<TermRef, Range>) -> bool {
        let min_of = |t: &TermRef| ranges.get(t).map_or(U256::ZERO, Range::min_value);
        let max_of = |t: &TermRef| ranges.get(t).map_or(U256::MAX, Range::max_value);
        for (i, (a, b, strict)) in self.edges.iter().enumerate() {
            if *strict && a == b {
                return true;
            }
            if *strict && min_of(a) >= max_of(b) {
                return true;
            }
            if !*strict && min_of(a) > max_of(b) {
                return true;
            }
            for (c, d, strict2) in &self.edges[i + 1..] {
                if a == d && b == c && (*strict || *strict2) {
                    return true;
                }
            }
        }
        false
    }
}

/// Name-keyed collection of oracles.
#[derive(Clone)]
pub struct OracleRegistry {
    entries: BTreeMap<&'static str, Arc<dyn FeasibilityOracle>>,
}

pub const DEFAULT_ORACLE: &str = "interval";

impl OracleRegistry {
    pub fn empty() -> Self {
        OracleRegistry { entries: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(IntervalOracle));
        r.register(Arc::new(StructuralOracle));
        r.register(Arc::new(NullOracle));
        r
    }

    /// Adds or replaces the oracle registered under its own name.
    pub fn register(&mut self, oracle: Arc<dyn FeasibilityOracle>) {
        self.entries.insert(oracle.name(), oracle);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn FeasibilityOracle>> {
        self.entries.get(name).cloned().ok_or_else(|| Error::UnknownOracle(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

impl Default for OracleRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}
