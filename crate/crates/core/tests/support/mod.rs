//! Shared helpers for integration tests: fixture loading, a tiny assembler
//! and a reference concrete interpreter.

#![allow(dead_code)]

pub mod interp;

use std::path::PathBuf;

use sha3::{Digest, Keccak256};
use tokscan_core::disasm::{disassemble, parse_hex, Program};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture_bytes(name: &str) -> Vec<u8> {
    let path = fixtures_dir().join("bytecode").join(format!("{name}.hex"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_hex(&text).unwrap()
}

pub fn fixture(name: &str) -> Program {
    disassemble(&fixture_bytes(name))
}

/// Every compiled or hand-assembled bytecode fixture, sorted by name.
pub fn all_fixture_names() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(fixtures_dir().join("bytecode"))
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            (p.extension()? == "hex").then(|| p.file_stem().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    names.sort();
    names
}

/// Independent Keccak-256.
pub fn keccak(data: &[u8]) -> [u8; 32] {
    Keccak256::digest(data).into()
}

pub fn selector_oracle(signature: &str) -> [u8; 4] {
    let d = keccak(signature.as_bytes());
    [d[0], d[1], d[2], d[3]]
}

fn opcode_of(name: &str) -> Option<u8> {
    let fixed: &[(&str, u8)] = &[
        ("STOP", 0x00),
        ("ADD", 0x01),
        ("MUL", 0x02),
        ("SUB", 0x03),
        ("DIV", 0x04),
        ("SDIV", 0x05),
        ("MOD", 0x06),
        ("SMOD", 0x07),
        ("ADDMOD", 0x08),
        ("MULMOD", 0x09),
        ("EXP", 0x0a),
        ("SIGNEXTEND", 0x0b),
        ("LT", 0x10),
        ("GT", 0x11),
        ("SLT", 0x12),
        ("SGT", 0x13),
        ("EQ", 0x14),
        ("ISZERO", 0x15),
        ("AND", 0x16),
        ("OR", 0x17),
        ("XOR", 0x18),
        ("NOT", 0x19),
        ("BYTE", 0x1a),
        ("SHL", 0x1b),
        ("SHR", 0x1c),
        ("SAR", 0x1d),
        ("KECCAK256", 0x20),
        ("CALLER", 0x33),
        ("CALLVALUE", 0x34),
        ("CALLDATALOAD", 0x35),
        ("CALLDATASIZE", 0x36),
        ("CODESIZE", 0x38),
        ("CODECOPY", 0x39),
        ("POP", 0x50),
        ("MLOAD", 0x51),
        ("MSTORE", 0x52),
        ("MSTORE8", 0x53),
        ("SLOAD", 0x54),
        ("SSTORE", 0x55),
        ("JUMP", 0x56),
        ("JUMPI", 0x57),
        ("PC", 0x58),
        ("GAS", 0x5a),
        ("JUMPDEST", 0x5b),
        ("PUSH0", 0x5f),
        ("CALL", 0xf1),
        ("RETURN", 0xf3),
        ("DELEGATECALL", 0xf4),
        ("STATICCALL", 0xfa),
        ("REVERT", 0xfd),
        ("INVALID", 0xfe),
        ("SELFDESTRUCT", 0xff),
    ];
    if let Some((_, op)) = fixed.iter().find(|(n, _)| *n == name) {
        return Some(*op);
    }
    let numbered = |prefix: &str, base: u8, max: u8| {
        name.strip_prefix(prefix)
            .and_then(|n| n.parse::<u8>().ok())
            .filter(|n| (1..=max).contains(n))
            .map(|n| base + n - 1)
    };
    numbered("PUSH", 0x60, 32).or_else(|| numbered("DUP", 0x80, 16)).or_else(|| numbered("SWAP", 0x90, 16))
}

/// Assembles whitespace-separated mnemonics; `PUSHn` takes a hex immediate
/// that is left-padded to n bytes. `;` starts a comment.
pub fn asm(src: &str) -> Vec<u8> {
    let mut out = Vec::new();
    let mut tokens = src.lines().map(|l| l.split(';').next().unwrap()).flat_map(str::split_whitespace);
    while let Some(tok) = tokens.next() {
        let op = opcode_of(tok).unwrap_or_else(|| panic!("unknown mnemonic {tok}"));
        out.push(op);
        if (0x60..=0x7f).contains(&op) {
            let n = (op - 0x5f) as usize;
            let imm = tokens.next().unwrap_or_else(|| panic!("{tok} needs an immediate"));
            let mut bytes = hex::decode(format!("{:0>w$}", imm.trim_start_matches("0x"), w = 2 * n)).unwrap();
            assert_eq!(bytes.len(), n, "immediate {imm} too wide for {tok}");
            out.append(&mut bytes);
        }
    }
    out
}

/// Straight-line programs for the interpreter comparison, sorted by name.
pub fn straightline_fixtures() -> Vec<(String, Vec<u8>)> {
    let dir = fixtures_dir().join("straightline");
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "asm"))
        .map(|p| {
            let src = std::fs::read_to_string(&p).unwrap();
            (p.file_stem().unwrap().to_string_lossy().into_owned(), asm(&src))
        })
        .collect();
    out.sort();
    out
}
