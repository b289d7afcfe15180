//! Byte-addressed symbolic memory.
//!
//! Each written byte is either a concrete value or "byte j of word term t".
//! Reads that line up with a whole stored word get that word back; reads of
//! mixed or unknown bytes produce a fresh unknown symbol. A write at a
//! symbolic offset forgets everything and makes unwritten bytes unknown.

use std::collections::BTreeMap;

use super::term::{Op, Term, TermRef};
use super::word::U256;

/// Concrete offsets and lengths beyond this are treated as symbolic.
pub const MEMORY_LIMIT: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Cell {
    Byte(u8),
    Part(TermRef, u8),
}

#[derive(Debug, Clone, Default)]
pub struct Memory {
    cells: BTreeMap<usize, Cell>,
    // Bytes at or above this offset that are absent from `cells` are unknown
    // rather than zero.
    unknown_from: Option<usize>,
}

/// Source of fresh unknown words, supplied by the executing machine.
pub trait FreshSource {
    fn fresh_unknown(&mut self) -> TermRef;
}

pub fn concrete_offset(t: &Term) -> Option<usize> {
    t.as_const().and_then(|v| usize::try_from(v).ok()).filter(|&v| v <= MEMORY_LIMIT)
}

impl Memory {
    pub fn new() -> Self {
        Self::default()
    }

    fn cell(&self, at: usize) -> Option<Cell> {
        match self.cells.get(&at) {
            Some(c) => Some(c.clone()),
            None if self.unknown_from.is_some_and(|u| at >= u) => None,
            None => Some(Cell::Byte(0)),
        }
    }

    /// Forgets everything: all subsequent reads of unwritten bytes are unknown.
    pub fn poison(&mut self) {
        self.cells.clear();
        self.unknown_from = Some(0);
    }

    /// Makes every byte at or above `from` unknown.
    pub fn clobber_from(&mut self, from: usize) {
        self.cells.split_off(&from);
        self.unknown_from = Some(self.unknown_from.map_or(from, |u| u.min(from)));
    }

    fn set_word(&mut self, at: usize, value: &TermRef) {
        match value.as_const() {
            Some(v) => {
                for (j, b) in v.to_be_bytes::<32>().into_iter().enumerate() {
                    self.cells.insert(at + j, Cell::Byte(b));
                }
            }
            None => {
                for j in 0..32u8 {
                    self.cells.insert(at + j as usize, Cell::Part(value.clone(), j));
                }
            }
        }
    }

    pub fn store(&mut self, offset: &TermRef, value: &TermRef) {
        match concrete_offset(offset) {
            Some(at) => self.set_word(at, value),
            None => self.poison(),
        }
    }

    pub fn store8(&mut self, offset: &TermRef, value: &TermRef) {
        match concrete_offset(offset) {
            Some(at) => {
                let cell = match value.as_const() {
                    Some(v) => Cell::Byte(v.to_be_bytes::<32>()[31]),
                    None => Cell::Part(value.clone(), 31),
                };
                self.cells.insert(at, cell);
            }
            None => self.poison(),
        }
    }

    fn read_word_at(&self, at: usize) -> Option<TermRef> {
        let cells: Vec<Option<Cell>> = (0..32).map(|j| self.cell(at + j)).collect();
        if cells.iter().all(|c| matches!(c, Some(Cell::Byte(_)))) {
            let mut bytes = [0u8; 32];
            for (j, c) in cells.iter().enumerate() {
                if let Some(Cell::Byte(b)) = c {
                    bytes[j] = *b;
                }
            }
            return Some(Term::constant(U256::from_be_bytes(bytes)));
        }
        if let Some(Cell::Part(t, 0)) = &cells[0] {
            let whole = cells
                .iter()
                .enumerate()
                .all(|(j, c)| matches!(c, Some(Cell::Part(u, k)) if u == t && *k as usize == j));
            if whole {
                return Some(t.clone());
            }
        }
        None
    }

    pub fn load(&self, offset: &TermRef, fresh: &mut impl FreshSource) -> TermRef {
        concrete_offset(offset).and_then(|at| self.read_word_at(at)).unwrap_or_else(|| fresh.fresh_unknown())
    }

    /// Hash of `len` bytes at `offset`: a constant when every byte is
    /// known, an uninterpreted KECCAK over whole words otherwise.
    pub fn keccak(&self, offset: &TermRef, len: &TermRef, fresh: &mut impl FreshSource) -> TermRef {
        let (Some(at), Some(n)) = (concrete_offset(offset), concrete_offset(len)) else {
            return fresh.fresh_unknown();
        };
        let cells: Vec<Option<Cell>> = (0..n).map(|j| self.cell(at + j)).collect();
        if cells.iter().all(|c| matches!(c, Some(Cell::Byte(_)))) {
            let bytes: Vec<u8> = cells
                .iter()
                .map(|c| match c {
                    Some(Cell::Byte(b)) => *b,
                    _ => unreachable!(),
                })
                .collect();
            return Term::constant(U256::from_be_bytes(crate::hash::keccak256(&bytes)));
        }
        if n % 32 != 0 {
            return fresh.fresh_unknown();
        }
        let words: Vec<TermRef> =
            (0..n / 32).map(|k| self.read_word_at(at + 32 * k).unwrap_or_else(|| fresh.fresh_unknown())).collect();
        Term::try_app(Op::Keccak, words).unwrap_or_else(|| fresh.fresh_unknown())
    }

    /// Copies `len` bytes produced by `byte_at(i)` to `dest`. Non-concrete
    /// destinations poison memory; non-concrete lengths clobber everything
    /// from `dest` upward.
    fn copy_with(&mut self, dest: &TermRef, len: &TermRef, mut byte_at: impl FnMut(usize) -> Option<Cell>) {
        let Some(at) = concrete_offset(dest) else {
            self.poison();
            return;
        };
        let Some(n) = concrete_offset(len) else {
            self.clobber_from(at);
            return;
        };
        for i in 0..n {
            match byte_at(i) {
                Some(c) => {
                    self.cells.insert(at + i, c);
                }
                None => {
                    self.cells.remove(&(at + i));
                }
            }
        }
    }

    /// CALLDATACOPY: byte i is byte (i mod 32) of the calldata word at
    /// `src + 32 * (i / 32)`.
    pub fn copy_calldata(&mut self, dest: &TermRef, src: &TermRef, len: &TermRef) {
        let mut words: Vec<TermRef> = Vec::new();
        let src = src.clone();
        self.copy_with(dest, len, |i| {
            let k = i / 32;
            if words.len() <= k {
                let off = Term::app(Op::Add, vec![src.clone(), Term::from_u64(32 * k as u64)]);
                words.push(Term::calldata(off));
            }
            Some(Cell::Part(words[k].clone(), (i % 32) as u8))
        });
    }

    /// CODECOPY from the program's own bytes (zero past the end).
    pub fn copy_code(&mut self, dest: &TermRef, src: &TermRef, len: &TermRef, code: &[u8]) {
        match concrete_offset(src) {
            Some(s) => self.copy_with(dest, len, |i| Some(Cell::Byte(code.get(s + i).copied().unwrap_or(0)))),
            None => match concrete_offset(dest) {
                Some(at) => self.clobber_from(at),
                None => self.poison(),
            },
        }
    }

    /// Fills a region with bytes of fresh unknown words (return data,
    /// external code).
    pub fn fill_unknown(&mut self, dest: &TermRef, len: &TermRef, fresh: &mut impl FreshSource) {
        let mut words: Vec<TermRef> = Vec::new();
        self.copy_with(dest, len, |i| {
            let k = i / 32;
            if words.len() <= k {
                words.push(fresh.fresh_unknown());
            }
            Some(Cell::Part(words[k].clone(), (i % 32) as u8))
        });
    }

    /// MCOPY within memory.
    pub fn copy_within(&mut self, dest: &TermRef, src: &TermRef, len: &TermRef, fresh: &mut impl FreshSource) {
        let Some(s) = concrete_offset(src) else {
            self.fill_unknown(dest, len, fresh);
            return;
        };
        let Some(n) = concrete_offset(len) else {
            self.copy_with(dest, len, |_| None);
            return;
        };
        let snapshot: Vec<Cell> =
            (0..n).map(|i| self.cell(s + i).unwrap_or_else(|| Cell::Part(fresh.fresh_unknown(), 0))).collect();
        self.copy_with(dest, len, |i| Some(snapshot[i].clone()));
    }
}
