//! Linear-sweep disassembly of EVM runtime bytecode.
//!
//! Decoding is total: unassigned opcodes decode as INVALID-class
//! instructions and a PUSH that runs past the end of the code is padded with
//! zero bytes, which is what the EVM reads beyond the end of code.

pub mod opcode;

use std::fmt;

use crate::error::Error;
use crate::hash::keccak256;

/// One decoded instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    /// Byte position of the opcode in the code.
    pub offset: usize,
    pub opcode: u8,
    /// Immediate bytes; non-empty only for PUSH1..PUSH32, always exactly N
    /// bytes long for PUSHN.
    pub immediate: Vec<u8>,
}

impl Instruction {
    /// Canonical mnemonic; unassigned opcodes render as `INVALID`.
    pub fn mnemonic(&self) -> &'static str {
        opcode::info(self.opcode).map_or("INVALID", |i| i.name)
    }

    /// True for 0xfe and for every unassigned opcode.
    pub fn is_invalid(&self) -> bool {
        self.opcode == opcode::INVALID || opcode::info(self.opcode).is_none()
    }

    pub fn is_push(&self) -> bool {
        (opcode::PUSH0..=opcode::PUSH32).contains(&self.opcode)
    }

    /// Offset of the instruction that follows this one.
    pub fn next_offset(&self) -> usize {
        self.offset + 1 + self.immediate.len()
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.offset, self.mnemonic())?;
        if !self.immediate.is_empty() {
            write!(f, " 0x{}", hex::encode(&self.immediate))?;
        }
        Ok(())
    }
}

/// True exactly for CALL, CALLCODE, DELEGATECALL and STATICCALL.
pub fn is_call_family(instruction: &Instruction) -> bool {
    matches!(instruction.opcode, opcode::CALL | opcode::CALLCODE | opcode::DELEGATECALL | opcode::STATICCALL)
}

/// A decoded bytecode instance.
#[derive(Debug, Clone)]
pub struct Program {
    raw: Vec<u8>,
    instructions: Vec<Instruction>,
    code_hash: [u8; 32],
    // byte offset -> instruction index, u32::MAX where no instruction starts
    index: Vec<u32>,
}

impl Program {
    pub fn raw(&self) -> &[u8] {
        &self.raw
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn code_hash(&self) -> [u8; 32] {
        self.code_hash
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Index of the instruction starting at byte `offset`, if any.
    pub fn index_of(&self, offset: usize) -> Option<usize> {
        match self.index.get(offset) {
            Some(&i) if i != u32::MAX => Some(i as usize),
            _ => None,
        }
    }

    /// True when `offset` starts a JUMPDEST instruction (not inside a PUSH
    /// immediate).
    pub fn is_jumpdest(&self, offset: usize) -> bool {
        self.index_of(offset).is_some_and(|i| self.instructions[i].opcode == opcode::JUMPDEST)
    }

    /// Re-encodes the instruction stream. Truncated trailing immediates come
    /// back zero-padded, so the result may be longer than `raw`.
    pub fn reassemble(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.raw.len() + 32);
        for ins in &self.instructions {
            out.push(ins.opcode);
            out.extend_from_slice(&ins.immediate);
        }
        out
    }

    /// One line per instruction: `<offset>: <MNEMONIC> [0x<immediate>]`.
    pub fn listing(&self) -> String {
        let mut out = String::new();
        for ins in &self.instructions {
            out.push_str(&ins.to_string());
            out.push('\n');
        }
        out
    }
}

/// Decodes `raw` from offset 0. Never fails.
pub fn disassemble(raw: &[u8]) -> Program {
    let mut instructions = Vec::new();
    let mut index = vec![u32::MAX; raw.len()];
    let mut pc = 0;
    while pc < raw.len() {
        let op = raw[pc];
        let n = opcode::immediate_len(op);
        let start = (pc + 1).min(raw.len());
        let end = (pc + 1 + n).min(raw.len());
        let mut immediate = raw[start..end].to_vec();
        immediate.resize(n, 0);
        index[pc] = instructions.len() as u32;
        instructions.push(Instruction { offset: pc, opcode: op, immediate });
        pc += 1 + n;
    }
    Program { raw: raw.to_vec(), instructions, code_hash: keccak256(raw), index }
}

/// Parses a hex string with an optional `0x` prefix. Surrounding whitespace
/// is ignored.
pub fn parse_hex(text: &str) -> Result<Vec<u8>, Error> {
    let t = text.trim();
    let t = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")).unwrap_or(t);
    hex::decode(t).map_err(|e| Error::Hex(e.to_string()))
}
