//! Reference interpreter for programs without symbolic inputs.
//!
//! Written against the EVM semantics directly; shares no code with the
//! symbolic engine beyond the 256-bit integer type.

use std::collections::BTreeMap;

use ruint::aliases::U256;

use super::keccak;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Halt {
    Stop,
    Return,
    Revert,
    Invalid,
    SelfDestruct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    /// (slot, value) as 32-byte big-endian words, in execution order.
    pub writes: Vec<([u8; 32], [u8; 32])>,
    pub halt: Halt,
}

/// The interpreter refuses inputs that would need symbolic values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unsupported(pub u8);

fn word(x: U256) -> [u8; 32] {
    x.to_be_bytes::<32>()
}

fn one() -> U256 {
    U256::from(1u8)
}

fn neg(x: U256) -> U256 {
    U256::ZERO.wrapping_sub(x)
}

fn sign(x: U256) -> bool {
    x >> 255 == one()
}

fn magnitude(x: U256) -> U256 {
    if sign(x) {
        neg(x)
    } else {
        x
    }
}

fn small(x: U256) -> Option<usize> {
    (x <= U256::from(1u64 << 20)).then(|| x.to::<usize>())
}

struct Machine<'a> {
    code: &'a [u8],
    pc: usize,
    stack: Vec<U256>,
    memory: Vec<u8>,
    storage: BTreeMap<U256, U256>,
    writes: Vec<([u8; 32], [u8; 32])>,
}

impl Machine<'_> {
    fn mem(&mut self, at: usize, len: usize) -> &mut [u8] {
        if len == 0 {
            return &mut [];
        }
        if self.memory.len() < at + len {
            self.memory.resize((at + len).div_ceil(32) * 32, 0);
        }
        &mut self.memory[at..at + len]
    }

    fn jumpdests(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.code.len() {
            let op = self.code[i];
            if op == 0x5b {
                out.push(i);
            }
            i += 1 + if (0x60..=0x7f).contains(&op) { (op - 0x5f) as usize } else { 0 };
        }
        out
    }
}

/// Runs `code` with empty calldata and zero-initialized storage until it
/// halts, or `max_steps` instructions have run.
pub fn run(code: &[u8], max_steps: usize) -> Result<Outcome, Unsupported> {
    let mut m =
        Machine { code, pc: 0, stack: Vec::new(), memory: Vec::new(), storage: BTreeMap::new(), writes: Vec::new() };
    let dests = m.jumpdests();
    let done = |m: Machine, halt| Ok(Outcome { writes: m.writes, halt });
    for _ in 0..max_steps {
        let Some(&op) = code.get(m.pc) else {
            return done(m, Halt::Stop);
        };
        let arity = match op {
            0x00 | 0x5b | 0x58 | 0x38 | 0x5f..=0x7f => 0,
            0x15 | 0x19 | 0x50 | 0x51 | 0x54 | 0x56 | 0xff => 1,
            0x08 | 0x09 | 0x39 => 3,
            0x80..=0x8f => (op - 0x7f) as usize,
            0x90..=0x9f => (op - 0x8e) as usize,
            0x01..=0x07
            | 0x0a..=0x0b
            | 0x10..=0x14
            | 0x16..=0x18
            | 0x1a..=0x1d
            | 0x20
            | 0x52
            | 0x53
            | 0x55
            | 0x57
            | 0xf3
            | 0xfd => 2,
            0xfe => return done(m, Halt::Invalid),
            other => return Err(Unsupported(other)),
        };
        if m.stack.len() < arity {
            return done(m, Halt::Invalid);
        }
        let mut a: Vec<U256> = (0..arity).map(|_| m.stack.pop().unwrap()).collect();
        let mut next = m.pc + 1;
        let bool_word = |b: bool| if b { one() } else { U256::ZERO };
        let push: Option<U256> = match op {
            0x00 => return done(m, Halt::Stop),
            0x01 => Some(a[0].wrapping_add(a[1])),
            0x02 => Some(a[0].wrapping_mul(a[1])),
            0x03 => Some(a[0].wrapping_sub(a[1])),
            0x04 => Some(if a[1] == U256::ZERO { U256::ZERO } else { a[0] / a[1] }),
            0x05 => Some(if a[1] == U256::ZERO {
                U256::ZERO
            } else {
                let q = magnitude(a[0]) / magnitude(a[1]);
                if sign(a[0]) ^ sign(a[1]) {
                    neg(q)
                } else {
                    q
                }
            }),
            0x06 => Some(if a[1] == U256::ZERO { U256::ZERO } else { a[0] % a[1] }),
            0x07 => Some(if a[1] == U256::ZERO {
                U256::ZERO
            } else {
                let r = magnitude(a[0]) % magnitude(a[1]);
                if sign(a[0]) {
                    neg(r)
                } else {
                    r
                }
            }),
            0x08 | 0x09 => Some(if a[2] == U256::ZERO {
                U256::ZERO
            } else {
                // 512-bit intermediate via limbs
                let wide = |x: U256| ruint::Uint::<512, 8>::from(x);
                let (x, y, n) = (wide(a[0]), wide(a[1]), wide(a[2]));
                let r = if op == 0x08 { (x + y) % n } else { (x * y) % n };
                U256::from(r)
            }),
            0x0a => {
                let (mut base, mut e, mut acc) = (a[0], a[1], one());
                while e != U256::ZERO {
                    if e & one() == one() {
                        acc = acc.wrapping_mul(base);
                    }
                    base = base.wrapping_mul(base);
                    e >>= 1;
                }
                Some(acc)
            }
            0x0b => Some(if a[0] < U256::from(31u8) {
                let bits = 8 * a[0].to::<usize>() + 8;
                let low_mask = (one() << bits).wrapping_sub(one());
                let top = (a[1] >> (bits - 1)) & one();
                if top == one() {
                    a[1] | !low_mask
                } else {
                    a[1] & low_mask
                }
            } else {
                a[1]
            }),
            0x10 => Some(bool_word(a[0] < a[1])),
            0x11 => Some(bool_word(a[0] > a[1])),
            0x12 | 0x13 => {
                let (x, y) = if op == 0x12 { (a[0], a[1]) } else { (a[1], a[0]) };
                // flip the sign bit to compare as unsigned
                let flip = one() << 255;
                Some(bool_word((x ^ flip) < (y ^ flip)))
            }
            0x14 => Some(bool_word(a[0] == a[1])),
            0x15 => Some(bool_word(a[0] == U256::ZERO)),
            0x16 => Some(a[0] & a[1]),
            0x17 => Some(a[0] | a[1]),
            0x18 => Some(a[0] ^ a[1]),
            0x19 => Some(!a[0]),
            0x1a => Some(if a[0] < U256::from(32u8) { U256::from(word(a[1])[a[0].to::<usize>()]) } else { U256::ZERO }),
            0x1b => Some(if a[0] < U256::from(256u16) { a[1] << a[0].to::<usize>() } else { U256::ZERO }),
            0x1c => Some(if a[0] < U256::from(256u16) { a[1] >> a[0].to::<usize>() } else { U256::ZERO }),
            0x1d => {
                let n = if a[0] < U256::from(256u16) { a[0].to::<usize>() } else { 256 };
                let fill = if sign(a[1]) { U256::MAX } else { U256::ZERO };
                Some(if n == 256 {
                    fill
                } else if n == 0 {
                    a[1]
                } else {
                    (a[1] >> n) | (fill << (256 - n))
                })
            }
            0x20 => {
                let (Some(at), Some(len)) = (small(a[0]), small(a[1])) else { return Err(Unsupported(op)) };
                let digest = keccak(m.mem(at, len));
                Some(U256::from_be_bytes(digest))
            }
            0x38 => Some(U256::from(code.len())),
            0x39 => {
                let (Some(dst), Some(src), Some(len)) = (small(a[0]), small(a[1]), small(a[2])) else {
                    return Err(Unsupported(op));
                };
                let bytes: Vec<u8> = (0..len).map(|i| code.get(src + i).copied().unwrap_or(0)).collect();
                m.mem(dst, len).copy_from_slice(&bytes);
                None
            }
            0x50 => None,
            0x51 => {
                let at = small(a[0]).ok_or(Unsupported(op))?;
                Some(U256::from_be_slice(m.mem(at, 32)))
            }
            0x52 => {
                let at = small(a[0]).ok_or(Unsupported(op))?;
                m.mem(at, 32).copy_from_slice(&word(a[1]));
                None
            }
            0x53 => {
                let at = small(a[0]).ok_or(Unsupported(op))?;
                m.mem(at, 1)[0] = word(a[1])[31];
                None
            }
            0x54 => match m.storage.get(&a[0]) {
                Some(v) => Some(*v),
                // unwritten storage has no concrete counterpart in the engine
                None => return Err(Unsupported(op)),
            },
            0x55 => {
                m.writes.push((word(a[0]), word(a[1])));
                m.storage.insert(a[0], a[1]);
                None
            }
            0x56 | 0x57 => {
                let taken = op == 0x56 || a[1] != U256::ZERO;
                if taken {
                    match small(a[0]).filter(|d| dests.contains(d)) {
                        Some(d) => next = d,
                        None => return done(m, Halt::Invalid),
                    }
                }
                None
            }
            0x58 => Some(U256::from(m.pc)),
            0x5b => None,
            0x5f..=0x7f => {
                let n = (op - 0x5f) as usize;
                let mut buf = [0u8; 32];
                for i in 0..n {
                    buf[32 - n + i] = code.get(m.pc + 1 + i).copied().unwrap_or(0);
                }
                next = m.pc + 1 + n;
                Some(U256::from_be_bytes(buf))
            }
            0x80..=0x8f => {
                let dup = *a.last().unwrap();
                a.reverse();
                m.stack.extend(a);
                Some(dup)
            }
            0x90..=0x9f => {
                let last = a.len() - 1;
                a.swap(0, last);
                a.reverse();
                m.stack.extend(a);
                None
            }
            0xf3 => return done(m, Halt::Return),
            0xfd => return done(m, Halt::Revert),
            0xff => return done(m, Halt::SelfDestruct),
            _ => unreachable!(),
        };
        if let Some(v) = push {
            if m.stack.len() == 1024 {
                return done(m, Halt::Invalid);
            }
            m.stack.push(v);
        }
        m.pc = next;
    }
    Err(Unsupported(0x56))
}
