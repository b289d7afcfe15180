//! Transfer-behavior detection over explored paths.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::disasm::Program;
use crate::symexec::{
    explore_with, ExplorationLimits, ExplorationReport, FeasibilityOracle, Op, PathResult, StorageWrite, Term, TermRef,
};

pub const MAX_CANDIDATES: usize = 512;

/// A path constraint in the form `larger >= smaller` (or `>`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeConstraint {
    pub larger_term: TermRef,
    pub smaller_term: TermRef,
    pub pc: usize,
    pub seq: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferCandidate {
    pub sws0: StorageWrite,
    pub sws1: StorageWrite,
    pub c_ge: GeConstraint,
    pub path_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub sws0_pc: usize,
    pub sws1_pc: usize,
    pub cge_pc: usize,
    pub path_id: usize,
}

impl From<&TransferCandidate> for Witness {
    fn from(c: &TransferCandidate) -> Self {
        Witness { sws0_pc: c.sws0.pc, sws1_pc: c.sws1.pc, cge_pc: c.c_ge.pc, path_id: c.path_id }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorVerdict {
    pub detected: bool,
    pub witness: Option<Witness>,
    pub candidates_checked: usize,
    pub coverage: f64,
    pub timed_out: bool,
}

/// Result of checking one store against a constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreCheck {
    pub ok: bool,
    pub remaining_ops: BTreeSet<Op>,
    pub target_matched: bool,
}

fn has_sload(t: &Term) -> bool {
    let mut found = false;
    t.visit(&mut |n| found |= n.op() == Some(Op::Sload));
    found
}

/// Reads an ordering constraint as `(larger, smaller)`.
pub fn normalize_ordering(term: &Term) -> Option<(TermRef, TermRef)> {
    let (negated, inner) = match term.op() {
        Some(Op::IsZero) => (true, term.args()[0].as_ref()),
        _ => (false, term),
    };
    let args = inner.args();
    match (inner.op()?, negated) {
        (Op::Lt, false) => Some((args[1].clone(), args[0].clone())),
        (Op::Gt, false) => Some((args[0].clone(), args[1].clone())),
        (Op::Lt, true) => Some((args[0].clone(), args[1].clone())),
        (Op::Gt, true) => Some((args[1].clone(), args[0].clone())),
        _ => None,
    }
}

pub fn find_ge_constraints(path: &PathResult) -> Vec<GeConstraint> {
    path.constraints
        .iter()
        .filter_map(|c| {
            let (larger, smaller) = normalize_ordering(&c.term)?;
            (has_sload(&larger) && smaller.is_tainted()).then_some(GeConstraint {
                larger_term: larger,
                smaller_term: smaller,
                pc: c.pc,
                seq: c.seq,
            })
        })
        .collect()
}

/// Constraints are eligible for a first store when they were assumed
/// earlier on the same path.
pub fn enumerate_candidates(report: &ExplorationReport) -> Vec<TransferCandidate> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (path_id, path) in report.paths.iter().enumerate() {
        let ges = find_ge_constraints(path);
        if ges.is_empty() {
            continue;
        }
        for (i, sws0) in path.writes.iter().enumerate() {
            if !sws0.tainted {
                continue;
            }
            for sws1 in &path.writes[i + 1..] {
                for ge in ges.iter().filter(|g| g.seq < sws0.seq) {
                    if !seen.insert((sws0.pc, sws1.pc, ge.pc)) {
                        continue;
                    }
                    out.push(TransferCandidate { sws0: sws0.clone(), sws1: sws1.clone(), c_ge: ge.clone(), path_id });
                    if out.len() == MAX_CANDIDATES {
                        return out;
                    }
                }
            }
        }
    }
    out
}

pub fn find_first_op_bfs(term: &Term, ops: &BTreeSet<Op>) -> BTreeSet<Op> {
    term.ops_bfs().find(|op| ops.contains(op)).into_iter().collect()
}

pub fn check_store_term(
    sws: &StorageWrite,
    c_ge: &GeConstraint,
    ops: &BTreeSet<Op>,
    require_constraint_target: bool,
) -> StoreCheck {
    let addr = &sws.address_term;
    let value = &sws.value_term;
    let self_ref = value.sload_slots().into_iter().any(|s| s == addr);
    let call_data = value.contains_proper(&c_ge.smaller_term);
    let to_eq_c = c_ge.larger_term.sload_slots().into_iter().any(|s| s == addr);
    let found = find_first_op_bfs(value, ops);
    StoreCheck {
        ok: self_ref && call_data && !found.is_empty(),
        remaining_ops: ops.difference(&found).copied().collect(),
        target_matched: !require_constraint_target || to_eq_c,
    }
}

fn transfer_ops() -> BTreeSet<Op> {
    BTreeSet::from([Op::Add, Op::Sub])
}

fn candidate_matches(c: &TransferCandidate) -> bool {
    let ops = transfer_ops();
    let first = check_store_term(&c.sws0, &c.c_ge, &ops, true);
    if !first.ok || first.remaining_ops.len() != ops.len() - 1 {
        return false;
    }
    let second = check_store_term(&c.sws1, &c.c_ge, &first.remaining_ops, !first.target_matched);
    second.ok && second.remaining_ops.is_empty() && second.target_matched
}

/// Checks candidates in order; the first match becomes the witness.
pub fn is_token_behavior(candidates: &[TransferCandidate]) -> BehaviorVerdict {
    let mut checked = 0;
    for c in candidates.iter().take(MAX_CANDIDATES) {
        checked += 1;
        if candidate_matches(c) {
            return BehaviorVerdict {
                detected: true,
                witness: Some(c.into()),
                candidates_checked: checked,
                coverage: 0.0,
                timed_out: false,
            };
        }
    }
    BehaviorVerdict { detected: false, witness: None, candidates_checked: checked, coverage: 0.0, timed_out: false }
}

/// Explores `program` and runs the behavior check on the result.
pub fn detect(
    program: &Program,
    limits: &ExplorationLimits,
    oracle: &dyn FeasibilityOracle,
) -> (BehaviorVerdict, ExplorationReport) {
    let report = explore_with(program, limits, oracle);
    let verdict = verdict_for(&report);
    (verdict, report)
}

pub fn verdict_for(report: &ExplorationReport) -> BehaviorVerdict {
    let candidates = enumerate_candidates(report);
    let mut verdict = is_token_behavior(&candidates);
    verdict.coverage = report.coverage;
    verdict.timed_out = report.timed_out;
    verdict
}

/// The candidate named by `witness`, recovered from the report.
pub fn witness_candidate(report: &ExplorationReport, witness: &Witness) -> Option<TransferCandidate> {
    enumerate_candidates(report).into_iter().find(|c| Witness::from(c) == *witness)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexec::{PathConstraint, Terminal};

    fn c(v: u64) -> TermRef {
        Term::from_u64(v)
    }
    fn cd(off: u64) -> TermRef {
        Term::calldata(c(off))
    }
    fn sload(slot: &TermRef) -> TermRef {
        Term::app(Op::Sload, vec![slot.clone()])
    }
    fn app(op: Op, args: &[&TermRef]) -> TermRef {
        Term::app(op, args.iter().map(|a| (*a).clone()).collect())
    }
    fn write(slot: &TermRef, value: TermRef, seq: usize, pc: usize) -> StorageWrite {
        StorageWrite { tainted: value.is_tainted(), address_term: slot.clone(), value_term: value, seq, pc }
    }
    fn ge(larger: &TermRef, smaller: &TermRef) -> GeConstraint {
        GeConstraint { larger_term: larger.clone(), smaller_term: smaller.clone(), pc: 1, seq: 0 }
    }

    #[test]
    fn ordering_shapes() {
        let s = sload(&c(7));
        let v = cd(0x24);
        let not_lt = app(Op::IsZero, &[&app(Op::Lt, &[&s, &v])]);
        assert_eq!(normalize_ordering(&not_lt), Some((s.clone(), v.clone())));
        let gt = app(Op::Gt, &[&s, &v]);
        assert_eq!(normalize_ordering(&gt), Some((s.clone(), v.clone())));
        let not_gt = app(Op::IsZero, &[&app(Op::Gt, &[&v, &s])]);
        assert_eq!(normalize_ordering(&not_gt), Some((s.clone(), v.clone())));
        let lt = app(Op::Lt, &[&v, &s]);
        assert_eq!(normalize_ordering(&lt), Some((s, v)));
        assert_eq!(normalize_ordering(&app(Op::Eq, &[&cd(4), &c(0xa9059cbb)])), None);
    }

    #[test]
    fn ge_filter() {
        let s = sload(&c(7));
        let v = cd(0x24);
        let path = PathResult {
            constraints: vec![
                PathConstraint { term: app(Op::Eq, &[&cd(4), &c(0xa9059cbb)]), pc: 10, seq: 0 },
                PathConstraint { term: app(Op::IsZero, &[&app(Op::Lt, &[&s, &v])]), pc: 20, seq: 1 },
                PathConstraint { term: app(Op::Lt, &[&v, &c(5)]), pc: 30, seq: 2 },
            ],
            writes: vec![],
            covered: Default::default(),
            terminal: Terminal::Stop,
            call_sites: vec![],
        };
        let found = find_ge_constraints(&path);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].pc, 20);
        assert_eq!(found[0].larger_term, s);
    }

    #[test]
    fn bfs_prefers_shallow_ops() {
        let ops = transfer_ops();
        let s = c(1);
        assert_eq!(find_first_op_bfs(&app(Op::Sub, &[&sload(&s), &cd(4)]), &ops), BTreeSet::from([Op::Sub]));
        assert!(find_first_op_bfs(&sload(&s), &ops).is_empty());
        let t = app(Op::Add, &[&app(Op::Sub, &[&cd(4), &cd(36)]), &cd(68)]);
        assert_eq!(find_first_op_bfs(&t, &ops), BTreeSet::from([Op::Add]));
    }

    #[test]
    fn store_checks_on_reference_tuples() {
        let s = app(Op::Keccak, &[&Term::sym(crate::symexec::SymSource::Caller, 0), &c(0)]);
        let r = app(Op::Keccak, &[&cd(4), &c(0)]);
        let v = cd(0x24);
        let cge = ge(&sload(&s), &v);
        let sws0 = write(&s, app(Op::Sub, &[&sload(&s), &v]), 1, 50);
        let first = check_store_term(&sws0, &cge, &transfer_ops(), true);
        assert_eq!(first, StoreCheck { ok: true, remaining_ops: BTreeSet::from([Op::Add]), target_matched: true });
        let sws1 = write(&r, app(Op::Add, &[&sload(&r), &v]), 2, 60);
        let second = check_store_term(&sws1, &cge, &first.remaining_ops, false);
        assert_eq!(second, StoreCheck { ok: true, remaining_ops: BTreeSet::new(), target_matched: true });
        let zero = write(&s, c(0), 3, 70);
        let z = check_store_term(&zero, &cge, &transfer_ops(), true);
        assert!(!z.ok);
        assert_eq!(z.remaining_ops, transfer_ops());
    }

    #[test]
    fn verdicts() {
        assert!(!is_token_behavior(&[]).detected);
        let s = sload(&c(0));
        let v = cd(0x24);
        let cand = TransferCandidate {
            sws0: write(&c(0), app(Op::Sub, &[&s, &v]), 1, 50),
            sws1: write(&c(1), app(Op::Add, &[&v, &sload(&c(1))]), 2, 60),
            c_ge: ge(&s, &v),
            path_id: 0,
        };
        let verdict = is_token_behavior(std::slice::from_ref(&cand));
        assert!(verdict.detected);
        assert_eq!(verdict.witness, Some(Witness { sws0_pc: 50, sws1_pc: 60, cge_pc: 1, path_id: 0 }));
        // ADD first, SUB second
        let swapped = TransferCandidate {
            sws0: write(&c(1), app(Op::Add, &[&sload(&c(1)), &v]), 1, 50),
            sws1: write(&c(0), app(Op::Sub, &[&s, &v]), 2, 60),
            ..cand.clone()
        };
        assert!(is_token_behavior(&[swapped]).detected);
        // neither store touches the constrained slot
        let unrelated = TransferCandidate { c_ge: ge(&sload(&c(9)), &v), ..cand };
        assert!(!is_token_behavior(&[unrelated]).detected);
    }
}
