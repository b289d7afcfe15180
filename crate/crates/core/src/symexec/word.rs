//! 256-bit EVM word semantics used for constant folding.

pub use ruint::aliases::U256;

use super::term::Op;

pub fn from_bool(b: bool) -> U256 {
    if b {
        U256::from(1u8)
    } else {
        U256::ZERO
    }
}

fn is_negative(x: U256) -> bool {
    x.bit(255)
}

fn negate(x: U256) -> U256 {
    (!x).wrapping_add(U256::from(1u8))
}

fn abs(x: U256) -> U256 {
    if is_negative(x) {
        negate(x)
    } else {
        x
    }
}

fn slt(a: U256, b: U256) -> bool {
    match (is_negative(a), is_negative(b)) {
        (true, false) => true,
        (false, true) => false,
        _ => a < b,
    }
}

fn shift_amount(s: U256) -> Option<usize> {
    usize::try_from(s).ok().filter(|&n| n < 256)
}

/// Evaluates `op` on constant arguments given in stack-pop order.
///
/// Returns `None` for operators that have no constant interpretation
/// (SLOAD, KECCAK) or when the argument count is wrong.
pub fn eval(op: Op, args: &[U256]) -> Option<U256> {
    let zero = U256::ZERO;
    let v = match (op, args) {
        (Op::Add, [a, b]) => a.wrapping_add(*b),
        (Op::Sub, [a, b]) => a.wrapping_sub(*b),
        (Op::Mul, [a, b]) => a.wrapping_mul(*b),
        (Op::Div, [a, b]) => a.checked_div(*b).unwrap_or(zero),
        (Op::Mod, [a, b]) => a.checked_rem(*b).unwrap_or(zero),
        (Op::SDiv, [a, b]) => {
            if b.is_zero() {
                zero
            } else {
                let q = abs(*a) / abs(*b);
                if is_negative(*a) != is_negative(*b) {
                    negate(q)
                } else {
                    q
                }
            }
        }
        (Op::SMod, [a, b]) => {
            if b.is_zero() {
                zero
            } else {
                let r = abs(*a) % abs(*b);
                if is_negative(*a) {
                    negate(r)
                } else {
                    r
                }
            }
        }
        (Op::AddMod, [a, b, n]) => a.add_mod(*b, *n),
        (Op::MulMod, [a, b, n]) => a.mul_mod(*b, *n),
        (Op::Exp, [a, b]) => a.wrapping_pow(*b),
        (Op::SignExtend, [b, x]) => match usize::try_from(*b) {
            Ok(k) if k < 31 => {
                let bit = 8 * k + 7;
                let mask = (U256::from(1u8) << (bit + 1)).wrapping_sub(U256::from(1u8));
                if x.bit(bit) {
                    *x | !mask
                } else {
                    *x & mask
                }
            }
            _ => *x,
        },
        (Op::Lt, [a, b]) => from_bool(a < b),
        (Op::Gt, [a, b]) => from_bool(a > b),
        (Op::Slt, [a, b]) => from_bool(slt(*a, *b)),
        (Op::Sgt, [a, b]) => from_bool(slt(*b, *a)),
        (Op::Eq, [a, b]) => from_bool(a == b),
        (Op::IsZero, [a]) => from_bool(a.is_zero()),
        (Op::And, [a, b]) => *a & *b,
        (Op::Or, [a, b]) => *a | *b,
        (Op::Xor, [a, b]) => *a ^ *b,
        (Op::Not, [a]) => !*a,
        (Op::Byte, [i, x]) => match usize::try_from(*i) {
            Ok(i) if i < 32 => U256::from(x.to_be_bytes::<32>()[i]),
            _ => zero,
        },
        (Op::Shl, [s, x]) => shift_amount(*s).map_or(zero, |n| *x << n),
        (Op::Shr, [s, x]) => shift_amount(*s).map_or(zero, |n| *x >> n),
        (Op::Sar, [s, x]) => {
            let neg = is_negative(*x);
            match shift_amount(*s) {
                Some(n) if neg => !((!*x) >> n),
                Some(n) => *x >> n,
                None if neg => U256::MAX,
                None => zero,
            }
        }
        _ => return None,
    };
    Some(v)
}
