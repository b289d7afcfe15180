//! Symbolic expressions over 256-bit words.
//!
//! Terms are immutable trees shared through [`TermRef`]. They are built via
//! [`Term::app`], which folds constants and applies a handful of algebraic
//! identities so that structurally equal computations produce structurally
//! equal terms.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use serde::{Serialize, Serializer};

use super::word::{self, U256};
use crate::hash::keccak256;

pub type TermRef = Arc<Term>;

/// Terms larger than this are replaced by a fresh unknown symbol.
pub const MAX_TERM_SIZE: u32 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    SDiv,
    Mod,
    SMod,
    AddMod,
    MulMod,
    Exp,
    SignExtend,
    Lt,
    Gt,
    Slt,
    Sgt,
    Eq,
    IsZero,
    And,
    Or,
    Xor,
    Not,
    Byte,
    Shl,
    Shr,
    Sar,
    /// Opaque read of a storage slot that has not been written on the path.
    Sload,
    /// Uninterpreted hash over a sequence of 32-byte words.
    Keccak,
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Add => "ADD",
            Op::Sub => "SUB",
            Op::Mul => "MUL",
            Op::Div => "DIV",
            Op::SDiv => "SDIV",
            Op::Mod => "MOD",
            Op::SMod => "SMOD",
            Op::AddMod => "ADDMOD",
            Op::MulMod => "MULMOD",
            Op::Exp => "EXP",
            Op::SignExtend => "SIGNEXTEND",
            Op::Lt => "LT",
            Op::Gt => "GT",
            Op::Slt => "SLT",
            Op::Sgt => "SGT",
            Op::Eq => "EQ",
            Op::IsZero => "ISZERO",
            Op::And => "AND",
            Op::Or => "OR",
            Op::Xor => "XOR",
            Op::Not => "NOT",
            Op::Byte => "BYTE",
            Op::Shl => "SHL",
            Op::Shr => "SHR",
            Op::Sar => "SAR",
            Op::Sload => "SLOAD",
            Op::Keccak => "KECCAK",
        }
    }

    /// Operators whose value is always 0 or 1.
    pub fn is_boolean(self) -> bool {
        matches!(self, Op::Lt | Op::Gt | Op::Slt | Op::Sgt | Op::Eq | Op::IsZero)
    }

    fn is_commutative(self) -> bool {
        matches!(self, Op::Add | Op::Mul | Op::And | Op::Or | Op::Xor | Op::Eq)
    }
}

/// Where a symbol's value comes from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SymSource {
    /// The 32-byte calldata word starting at the given offset.
    CallData(TermRef),
    CallDataSize,
    CallValue,
    Caller,
    Origin,
    Address,
    Timestamp,
    Number,
    Balance,
    /// Result of a call-family instruction; fresh per call.
    CallReturn,
    /// Other per-transaction environment values, keyed by opcode.
    Env(u8),
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol {
    pub source: SymSource,
    pub index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Const(U256),
    Sym(Symbol),
    App {
        op: Op,
        args: Vec<TermRef>,
        /// Node count of the tree, derived from `args`.
        size: u32,
    },
}

impl Term {
    pub fn constant(v: U256) -> TermRef {
        Arc::new(Term::Const(v))
    }

    pub fn from_u64(v: u64) -> TermRef {
        Self::constant(U256::from(v))
    }

    pub fn sym(source: SymSource, index: u32) -> TermRef {
        Arc::new(Term::Sym(Symbol { source, index }))
    }

    pub fn calldata(offset: TermRef) -> TermRef {
        Self::sym(SymSource::CallData(offset), 0)
    }

    /// Builds a normalized application. Returns `None` only when the result
    /// would exceed [`MAX_TERM_SIZE`].
    pub fn try_app(op: Op, mut args: Vec<TermRef>) -> Option<TermRef> {
        if op.is_commutative() && args.len() == 2 && args[0].is_const() && !args[1].is_const() {
            args.swap(0, 1);
        }
        if let Some(t) = simplify(op, &args) {
            return Some(t);
        }
        let size = args.iter().fold(1u32, |acc, a| acc.saturating_add(a.size()));
        if size > MAX_TERM_SIZE {
            return None;
        }
        Some(Arc::new(Term::App { op, args, size }))
    }

    /// Like [`Term::try_app`], panicking on oversize terms. Intended for
    /// small hand-built terms.
    pub fn app(op: Op, args: Vec<TermRef>) -> TermRef {
        Self::try_app(op, args).expect("term exceeds size bound")
    }

    pub fn size(&self) -> u32 {
        match self {
            Term::App { size, .. } => *size,
            _ => 1,
        }
    }

    pub fn as_const(&self) -> Option<U256> {
        match self {
            Term::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Term::Const(_))
    }

    pub fn op(&self) -> Option<Op> {
        match self {
            Term::App { op, .. } => Some(*op),
            _ => None,
        }
    }

    pub fn args(&self) -> &[TermRef] {
        match self {
            Term::App { args, .. } => args,
            _ => &[],
        }
    }

    /// True when the term can only evaluate to 0 or 1.
    pub fn is_boolean(&self) -> bool {
        match self {
            Term::Const(v) => *v <= U256::from(1u8),
            Term::App { op, .. } => op.is_boolean(),
            Term::Sym(_) => false,
        }
    }

    /// Subterm relation (reflexive).
    pub fn contains(&self, needle: &Term) -> bool {
        self == needle || self.contains_proper(needle)
    }

    /// Proper subterm relation.
    pub fn contains_proper(&self, needle: &Term) -> bool {
        self.args().iter().any(|a| a.contains(needle))
            || matches!(self, Term::Sym(Symbol { source: SymSource::CallData(off), .. }) if off.contains(needle))
    }

    /// Calls `f` on every node, root first (depth-first).
    pub fn visit(&self, f: &mut impl FnMut(&Term)) {
        f(self);
        for a in self.args() {
            a.visit(f);
        }
    }

    /// True iff the tree contains a calldata symbol.
    pub fn is_tainted(&self) -> bool {
        match self {
            Term::Sym(Symbol { source: SymSource::CallData(_), .. }) => true,
            Term::Sym(_) | Term::Const(_) => false,
            Term::App { args, .. } => args.iter().any(|a| a.is_tainted()),
        }
    }

    /// Slot terms of every SLOAD node in the tree, including the root.
    pub fn sload_slots(&self) -> Vec<&TermRef> {
        let mut out = Vec::new();
        fn walk<'a>(t: &'a Term, out: &mut Vec<&'a TermRef>) {
            if let Term::App { op, args, .. } = t {
                if *op == Op::Sload {
                    out.push(&args[0]);
                }
                for a in args {
                    walk(a, out);
                }
            }
        }
        walk(self, &mut out);
        out
    }

    /// Breadth-first order of application operators.
    pub fn ops_bfs(&self) -> impl Iterator<Item = Op> + '_ {
        let mut queue: VecDeque<&Term> = VecDeque::from([self]);
        std::iter::from_fn(move || {
            while let Some(t) = queue.pop_front() {
                if let Term::App { op, args, .. } = t {
                    queue.extend(args.iter().map(|a| a.as_ref()));
                    return Some(*op);
                }
            }
            None
        })
    }
}

/// Free function form of [`Term::is_tainted`].
pub fn tainted(term: &Term) -> bool {
    term.is_tainted()
}

/// The constraint asserting that `cond` is non-zero.
pub fn truthy(cond: &TermRef) -> TermRef {
    if cond.is_boolean() {
        cond.clone()
    } else {
        let z = Term::app(Op::IsZero, vec![cond.clone()]);
        Term::app(Op::IsZero, vec![z])
    }
}

/// The constraint asserting that `cond` is zero.
pub fn falsy(cond: &TermRef) -> TermRef {
    Term::app(Op::IsZero, vec![cond.clone()])
}

fn simplify(op: Op, args: &[TermRef]) -> Option<TermRef> {
    let consts: Option<Vec<U256>> = args.iter().map(|a| a.as_const()).collect();
    if let Some(cs) = consts {
        if op == Op::Keccak {
            let mut bytes = Vec::with_capacity(32 * cs.len());
            for c in &cs {
                bytes.extend_from_slice(&c.to_be_bytes::<32>());
            }
            return Some(Term::constant(U256::from_be_bytes(keccak256(&bytes))));
        }
        if let Some(v) = word::eval(op, &cs) {
            return Some(Term::constant(v));
        }
        return None;
    }
    let k = |i: usize| args.get(i).and_then(|a| a.as_const());
    let zero = U256::ZERO;
    let one = U256::from(1u8);
    match (op, args) {
        (Op::Add | Op::Or | Op::Xor, [x, _]) if k(1) == Some(zero) => Some(x.clone()),
        (Op::Add | Op::Or | Op::Xor, [_, y]) if k(0) == Some(zero) => Some(y.clone()),
        (Op::Add, [x, _]) if k(1).is_some() => {
            // (x + a) + b  =>  x + (a + b)
            match x.as_ref() {
                Term::App { op: Op::Add, args: inner, .. } if inner[1].is_const() => {
                    let sum = inner[1].as_const()?.wrapping_add(k(1)?);
                    Term::try_app(Op::Add, vec![inner[0].clone(), Term::constant(sum)])
                }
                _ => None,
            }
        }
        (Op::Sub, [x, _]) if k(1) == Some(zero) => Some(x.clone()),
        (Op::Sub | Op::Xor, [x, y]) if x == y => Some(Term::constant(zero)),
        (Op::Mul, [x, _]) if k(1) == Some(one) => Some(x.clone()),
        (Op::Mul, [_, y]) if k(0) == Some(one) => Some(y.clone()),
        (Op::Mul | Op::And, [_, _]) if k(0) == Some(zero) || k(1) == Some(zero) => Some(Term::constant(zero)),
        (Op::Div, [x, _]) if k(1) == Some(one) => Some(x.clone()),
        (Op::And, [x, _]) if k(1) == Some(U256::MAX) => Some(x.clone()),
        (Op::And, [_, y]) if k(0) == Some(U256::MAX) => Some(y.clone()),
        (Op::And | Op::Or, [x, y]) if x == y => Some(x.clone()),
        (Op::And, [x, m]) if m.is_const() => match x.as_ref() {
            // (x & m) & m  =>  x & m
            Term::App { op: Op::And, args: inner, .. } if inner[1] == *m => Some(x.clone()),
            _ => None,
        },
        (Op::Eq, [x, y]) if x == y => Some(Term::constant(one)),
        (Op::Lt | Op::Gt, [x, y]) if x == y => Some(Term::constant(zero)),
        (Op::Shl | Op::Shr | Op::Sar, [_, x]) if k(0) == Some(zero) => Some(x.clone()),
        (Op::IsZero, [x]) => match x.as_ref() {
            Term::App { op: Op::IsZero, args: inner, .. } if inner[0].is_boolean() => Some(inner[0].clone()),
            _ => None,
        },
        (Op::Not, [x]) => match x.as_ref() {
            Term::App { op: Op::Not, args: inner, .. } => Some(inner[0].clone()),
            _ => None,
        },
        _ => None,
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.source {
            SymSource::CallData(off) => write!(f, "calldata[{off}]"),
            SymSource::CallDataSize => f.write_str("calldatasize"),
            SymSource::CallValue => f.write_str("callvalue"),
            SymSource::Caller => f.write_str("caller"),
            SymSource::Origin => f.write_str("origin"),
            SymSource::Address => f.write_str("address"),
            SymSource::Timestamp => f.write_str("timestamp"),
            SymSource::Number => f.write_str("number"),
            SymSource::Balance => write!(f, "balance#{}", self.index),
            SymSource::CallReturn => write!(f, "callret#{}", self.index),
            SymSource::Env(op) => write!(f, "env{op:#04x}"),
            SymSource::Unknown => write!(f, "unknown#{}", self.index),
        }
    }
}

/// Canonical prefix notation, e.g. `(SUB (SLOAD 0x1) calldata[0x24])`.
impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(v) => write!(f, "{v:#x}"),
            Term::Sym(s) => write!(f, "{s}"),
            Term::App { op, args, .. } => {
                write!(f, "({}", op.name())?;
                for a in args {
                    write!(f, " {a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}
