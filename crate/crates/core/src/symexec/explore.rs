//! Depth-first symbolic exploration with backtracking.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::memory::{FreshSource, Memory};
use super::oracle::{Feasibility, FeasibilityOracle, IntervalOracle};
use super::term::{falsy, truthy, Op, SymSource, Term, TermRef};
use crate::disasm::{opcode as opc, Program};

const STACK_LIMIT: usize = 1024;

/// Bounds on one exploration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationLimits {
    pub timeout: Duration,
    /// Symbolic branch decisions allowed on a single path.
    pub max_path_length: usize,
    /// Completed paths after which exploration stops.
    pub max_paths: usize,
    /// Instructions executed on one path before it is cut off; bounds loops
    /// whose conditions are concrete.
    pub max_steps_per_path: usize,
}

impl Default for ExplorationLimits {
    fn default() -> Self {
        ExplorationLimits {
            timeout: Duration::from_secs(60),
            max_path_length: 58,
            max_paths: 2000,
            max_steps_per_path: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathConstraint {
    /// Boolean-valued condition assumed to be non-zero on the path.
    pub term: TermRef,
    /// Offset of the JUMPI that introduced it.
    pub pc: usize,
    /// Position in the path's event order, shared with storage writes.
    pub seq: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StorageWrite {
    pub address_term: TermRef,
    pub value_term: TermRef,
    pub seq: usize,
    pub tainted: bool,
    pub pc: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Terminal {
    Stop,
    Return,
    Revert,
    Invalid,
    SelfDestruct,
    DepthLimit,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CallKind {
    Call,
    CallCode,
    DelegateCall,
    StaticCall,
}

impl CallKind {
    pub fn from_opcode(op: u8) -> Option<Self> {
        match op {
            opc::CALL => Some(CallKind::Call),
            opc::CALLCODE => Some(CallKind::CallCode),
            opc::DELEGATECALL => Some(CallKind::DelegateCall),
            opc::STATICCALL => Some(CallKind::StaticCall),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallSite {
    pub pc: usize,
    pub kind: CallKind,
    pub callee: TermRef,
}

/// One explored execution path.
#[derive(Debug, Clone)]
pub struct PathResult {
    pub constraints: Vec<PathConstraint>,
    pub writes: Vec<StorageWrite>,
    pub covered: BTreeSet<usize>,
    pub terminal: Terminal,
    pub call_sites: Vec<CallSite>,
}

#[derive(Debug, Clone)]
pub struct ExplorationReport {
    pub paths: Vec<PathResult>,
    /// Covered instructions over all paths divided by instruction count.
    pub coverage: f64,
    pub timed_out: bool,
    pub decode_error: bool,
    /// Stopped because `max_paths` paths were completed.
    pub path_budget_exhausted: bool,
    pub instruction_count: usize,
}

impl ExplorationReport {
    pub fn covered_offsets(&self) -> BTreeSet<usize> {
        self.paths.iter().flat_map(|p| p.covered.iter().copied()).collect()
    }
}

/// Explores with the default interval oracle.
pub fn explore(program: &Program, limits: &ExplorationLimits) -> ExplorationReport {
    explore_with(program, limits, &IntervalOracle)
}

pub fn explore_with(
    program: &Program,
    limits: &ExplorationLimits,
    oracle: &dyn FeasibilityOracle,
) -> ExplorationReport {
    let instruction_count = program.len();
    if program.is_empty() || program.instructions()[0].is_invalid() {
        return ExplorationReport {
            paths: Vec::new(),
            coverage: 0.0,
            timed_out: false,
            decode_error: true,
            path_budget_exhausted: false,
            instruction_count,
        };
    }
    let mut ex = Explorer {
        program,
        limits,
        oracle,
        fresh: Fresh::default(),
        start: Instant::now(),
        paths: Vec::new(),
        timed_out: false,
        budget_exhausted: false,
    };
    ex.run();
    let covered: BTreeSet<usize> = ex.paths.iter().flat_map(|p| p.covered.iter().copied()).collect();
    let coverage = covered.len() as f64 / instruction_count as f64;
    ExplorationReport {
        paths: ex.paths,
        coverage,
        timed_out: ex.timed_out,
        decode_error: false,
        path_budget_exhausted: ex.budget_exhausted,
        instruction_count,
    }
}

#[derive(Default)]
struct Fresh {
    next: u32,
}

impl Fresh {
    fn sym(&mut self, source: SymSource) -> TermRef {
        self.next += 1;
        Term::sym(source, self.next)
    }
}

impl FreshSource for Fresh {
    fn fresh_unknown(&mut self) -> TermRef {
        self.sym(SymSource::Unknown)
    }
}

/// Per-path storage: normalized slot term -> last written value.
#[derive(Debug, Clone, Default)]
struct Storage {
    slots: BTreeMap<TermRef, TermRef>,
}

fn hash_derived(slot: &Term) -> bool {
    match slot.op() {
        Some(Op::Keccak) => true,
        Some(Op::Add) => slot.args().iter().any(|a| a.op() == Some(Op::Keccak)),
        _ => false,
    }
}

impl Storage {
    fn read(&self, slot: &TermRef) -> TermRef {
        self.slots.get(slot).cloned().unwrap_or_else(|| Term::app(Op::Sload, vec![slot.clone()]))
    }

    /// A symbolic slot may alias any other symbolic slot; a slot that is not
    /// hash-derived may alias anything.
    fn write(&mut self, slot: TermRef, value: TermRef) {
        if !slot.is_const() {
            if hash_derived(&slot) {
                self.slots.retain(|k, _| k.is_const());
            } else {
                self.slots.clear();
            }
        }
        self.slots.insert(slot, value);
    }
}

#[derive(Debug, Clone)]
struct State {
    idx: usize,
    stack: Vec<TermRef>,
    memory: Memory,
    storage: Storage,
    constraints: Vec<PathConstraint>,
    writes: Vec<StorageWrite>,
    covered: Vec<u64>,
    call_sites: Vec<CallSite>,
    branches: usize,
    steps: usize,
    seq: usize,
    halted: Option<Terminal>,
}

impl State {
    fn new(instructions: usize) -> Self {
        State {
            idx: 0,
            stack: Vec::new(),
            memory: Memory::new(),
            storage: Storage::default(),
            constraints: Vec::new(),
            writes: Vec::new(),
            covered: vec![0; instructions.div_ceil(64)],
            call_sites: Vec::new(),
            branches: 0,
            steps: 0,
            seq: 0,
            halted: None,
        }
    }

    fn next_seq(&mut self) -> usize {
        let s = self.seq;
        self.seq += 1;
        s
    }

    fn pop(&mut self, n: usize) -> Option<Vec<TermRef>> {
        if self.stack.len() < n {
            return None;
        }
        let mut out = self.stack.split_off(self.stack.len() - n);
        out.reverse();
        Some(out)
    }
}

enum Step {
    Continue,
    Halt(Terminal),
    Fork { cond: TermRef, dest: TermRef, pc: usize },
}

struct Explorer<'a> {
    program: &'a Program,
    limits: &'a ExplorationLimits,
    oracle: &'a dyn FeasibilityOracle,
    fresh: Fresh,
    start: Instant,
    paths: Vec<PathResult>,
    timed_out: bool,
    budget_exhausted: bool,
}

fn binary_op(opcode: u8) -> Option<Op> {
    Some(match opcode {
        opc::ADD => Op::Add,
        opc::MUL => Op::Mul,
        opc::SUB => Op::Sub,
        opc::DIV => Op::Div,
        opc::SDIV => Op::SDiv,
        opc::MOD => Op::Mod,
        opc::SMOD => Op::SMod,
        opc::EXP => Op::Exp,
        opc::SIGNEXTEND => Op::SignExtend,
        opc::LT => Op::Lt,
        opc::GT => Op::Gt,
        opc::SLT => Op::Slt,
        opc::SGT => Op::Sgt,
        opc::EQ => Op::Eq,
        opc::AND => Op::And,
        opc::OR => Op::Or,
        opc::XOR => Op::Xor,
        opc::BYTE => Op::Byte,
        opc::SHL => Op::Shl,
        opc::SHR => Op::Shr,
        opc::SAR => Op::Sar,
        _ => return None,
    })
}

impl<'a> Explorer<'a> {
    fn out_of_time(&self) -> bool {
        self.start.elapsed() >= self.limits.timeout
    }

    fn finish(&mut self, st: State, terminal: Terminal) {
        let covered = st
            .covered
            .iter()
            .enumerate()
            .flat_map(|(w, bits)| (0..64).filter(move |b| bits & (1u64 << b) != 0).map(move |b| w * 64 + b))
            .map(|i| self.program.instructions()[i].offset)
            .collect();
        self.paths.push(PathResult {
            constraints: st.constraints,
            writes: st.writes,
            covered,
            terminal,
            call_sites: st.call_sites,
        });
    }

    fn run(&mut self) {
        let mut pending = vec![State::new(self.program.len())];
        'paths: while let Some(mut st) = pending.pop() {
            if self.paths.len() >= self.limits.max_paths {
                self.budget_exhausted = true;
                break;
            }
            if let Some(t) = st.halted {
                self.finish(st, t);
                continue;
            }
            loop {
                if st.steps % 256 == 0 && self.out_of_time() {
                    self.timed_out = true;
                    self.finish(st, Terminal::Timeout);
                    break 'paths;
                }
                if st.steps >= self.limits.max_steps_per_path {
                    self.finish(st, Terminal::DepthLimit);
                    continue 'paths;
                }
                st.steps += 1;
                match self.step(&mut st) {
                    Step::Continue => {}
                    Step::Halt(t) => {
                        self.finish(st, t);
                        continue 'paths;
                    }
                    Step::Fork { cond, dest, pc } => {
                        if st.branches >= self.limits.max_path_length {
                            self.finish(st, Terminal::DepthLimit);
                            continue 'paths;
                        }
                        st.branches += 1;
                        let mut taken = st.clone();
                        if self.assume(&mut taken, truthy(&cond), pc) {
                            match self.jump_target(&dest) {
                                Some(i) => taken.idx = i,
                                None => taken.halted = Some(Terminal::Invalid),
                            }
                            pending.push(taken);
                        }
                        if !self.assume(&mut st, falsy(&cond), pc) {
                            continue 'paths;
                        }
                    }
                }
            }
        }
    }

    /// Adds `term` to the path condition; false if the oracle proves the
    /// extended condition infeasible.
    fn assume(&self, st: &mut State, term: TermRef, pc: usize) -> bool {
        let seq = st.seq;
        st.constraints.push(PathConstraint { term, pc, seq });
        if self.oracle.check(&st.constraints) == Feasibility::Unsat {
            st.constraints.pop();
            return false;
        }
        st.seq += 1;
        true
    }

    fn jump_target(&self, dest: &Term) -> Option<usize> {
        let off = usize::try_from(dest.as_const()?).ok()?;
        if self.program.is_jumpdest(off) {
            self.program.index_of(off)
        } else {
            None
        }
    }

    fn app(&mut self, op: Op, args: Vec<TermRef>) -> TermRef {
        Term::try_app(op, args).unwrap_or_else(|| self.fresh.fresh_unknown())
    }

    fn step(&mut self, st: &mut State) -> Step {
        let Some(ins) = self.program.instructions().get(st.idx) else {
            return Step::Halt(Terminal::Stop);
        };
        st.covered[st.idx / 64] |= 1u64 << (st.idx % 64);
        let op = ins.opcode;
        let pc = ins.offset;
        let Some(info) = opc::info(op) else {
            return Step::Halt(Terminal::Invalid);
        };
        let Some(args) = st.pop(info.pops) else {
            return Step::Halt(Terminal::Invalid);
        };
        if st.stack.len() + info.pushes > STACK_LIMIT {
            return Step::Halt(Terminal::Invalid);
        }
        st.idx += 1;

        if let Some(bop) = binary_op(op) {
            let t = self.app(bop, args);
            st.stack.push(t);
            return Step::Continue;
        }
        let result: Option<TermRef> = match op {
            opc::STOP => return Step::Halt(Terminal::Stop),
            opc::RETURN => return Step::Halt(Terminal::Return),
            opc::REVERT => return Step::Halt(Terminal::Revert),
            opc::INVALID => return Step::Halt(Terminal::Invalid),
            opc::SELFDESTRUCT => return Step::Halt(Terminal::SelfDestruct),
            opc::ADDMOD => Some(self.app(Op::AddMod, args)),
            opc::MULMOD => Some(self.app(Op::MulMod, args)),
            opc::ISZERO => Some(self.app(Op::IsZero, args)),
            opc::NOT => Some(self.app(Op::Not, args)),
            opc::KECCAK256 => Some(st.memory.keccak(&args[0], &args[1], &mut self.fresh)),
            opc::ADDRESS => Some(Term::sym(SymSource::Address, 0)),
            opc::ORIGIN => Some(Term::sym(SymSource::Origin, 0)),
            opc::CALLER => Some(Term::sym(SymSource::Caller, 0)),
            opc::CALLVALUE => Some(Term::sym(SymSource::CallValue, 0)),
            opc::CALLDATASIZE => Some(Term::sym(SymSource::CallDataSize, 0)),
            opc::TIMESTAMP => Some(Term::sym(SymSource::Timestamp, 0)),
            opc::NUMBER => Some(Term::sym(SymSource::Number, 0)),
            opc::GASPRICE
            | opc::COINBASE
            | opc::PREVRANDAO
            | opc::GASLIMIT
            | opc::CHAINID
            | opc::BASEFEE
            | opc::BLOBBASEFEE => Some(Term::sym(SymSource::Env(op), 0)),
            opc::BALANCE | opc::SELFBALANCE => Some(self.fresh.sym(SymSource::Balance)),
            opc::CALLDATALOAD => Some(Term::calldata(args[0].clone())),
            opc::CODESIZE => Some(Term::from_u64(self.program.raw().len() as u64)),
            opc::PC => Some(Term::from_u64(pc as u64)),
            opc::CALLDATACOPY => {
                st.memory.copy_calldata(&args[0], &args[1], &args[2]);
                None
            }
            opc::CODECOPY => {
                st.memory.copy_code(&args[0], &args[1], &args[2], self.program.raw());
                None
            }
            opc::RETURNDATACOPY => {
                st.memory.fill_unknown(&args[0], &args[2], &mut self.fresh);
                None
            }
            opc::EXTCODECOPY => {
                st.memory.fill_unknown(&args[1], &args[3], &mut self.fresh);
                None
            }
            opc::MCOPY => {
                st.memory.copy_within(&args[0], &args[1], &args[2], &mut self.fresh);
                None
            }
            opc::POP | opc::JUMPDEST | opc::TSTORE => None,
            opc::MLOAD => Some(st.memory.load(&args[0], &mut self.fresh)),
            opc::MSTORE => {
                st.memory.store(&args[0], &args[1]);
                None
            }
            opc::MSTORE8 => {
                st.memory.store8(&args[0], &args[1]);
                None
            }
            opc::SLOAD => Some(st.storage.read(&args[0])),
            opc::SSTORE => {
                let seq = st.next_seq();
                let (slot, value) = (args[0].clone(), args[1].clone());
                st.writes.push(StorageWrite {
                    tainted: value.is_tainted(),
                    address_term: slot.clone(),
                    value_term: value.clone(),
                    seq,
                    pc,
                });
                st.storage.write(slot, value);
                None
            }
            opc::JUMP => {
                return match self.jump_target(&args[0]) {
                    Some(i) => {
                        st.idx = i;
                        Step::Continue
                    }
                    None => Step::Halt(Terminal::Invalid),
                };
            }
            opc::JUMPI => {
                let (dest, cond) = (args[0].clone(), args[1].clone());
                return match cond.as_const() {
                    Some(v) if v.is_zero() => Step::Continue,
                    Some(_) => match self.jump_target(&dest) {
                        Some(i) => {
                            st.idx = i;
                            Step::Continue
                        }
                        None => Step::Halt(Terminal::Invalid),
                    },
                    None => Step::Fork { cond, dest, pc },
                };
            }
            opc::CALL | opc::CALLCODE | opc::DELEGATECALL | opc::STATICCALL => {
                let kind = CallKind::from_opcode(op).expect("call-family opcode");
                st.call_sites.push(CallSite { pc, kind, callee: args[1].clone() });
                let (ret_off, ret_len) = match kind {
                    CallKind::Call | CallKind::CallCode => (&args[5], &args[6]),
                    _ => (&args[4], &args[5]),
                };
                st.memory.fill_unknown(ret_off, ret_len, &mut self.fresh);
                Some(self.fresh.sym(SymSource::CallReturn))
            }
            _ if ins.is_push() => {
                let mut bytes = [0u8; 32];
                let n = ins.immediate.len();
                bytes[32 - n..].copy_from_slice(&ins.immediate);
                Some(Term::constant(super::word::U256::from_be_bytes(bytes)))
            }
            _ if (opc::DUP1..=opc::DUP16).contains(&op) => {
                let n = args.len();
                // args are in pop order: args[n-1] is the duplicated item
                let dup = args[n - 1].clone();
                for a in args.into_iter().rev() {
                    st.stack.push(a);
                }
                st.stack.push(dup);
                return Step::Continue;
            }
            _ if (opc::SWAP1..=opc::SWAP16).contains(&op) => {
                let mut args = args;
                let n = args.len();
                args.swap(0, n - 1);
                for a in args.into_iter().rev() {
                    st.stack.push(a);
                }
                return Step::Continue;
            }
            _ if (opc::LOG0..=opc::LOG4).contains(&op) => None,
            _ => {
                // Remaining modeled-arity opcodes (EXTCODESIZE, BLOCKHASH,
                // GAS, CREATE, ...) produce unconstrained values.
                (0..info.pushes).last().map(|_| self.fresh.fresh_unknown())
            }
        };
        if let Some(t) = result {
            st.stack.push(t);
        }
        Step::Continue
    }
}
