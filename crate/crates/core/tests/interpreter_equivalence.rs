mod support;

use proptest::prelude::*;
use support::interp::{self, Halt};
use tokscan_core::disasm::disassemble;
use tokscan_core::symexec::{explore, ExplorationLimits, Terminal};

type Writes = Vec<([u8; 32], [u8; 32])>;

fn engine(code: &[u8]) -> (Writes, Terminal) {
    let report = explore(&disassemble(code), &ExplorationLimits::default());
    assert_eq!(report.paths.len(), 1, "concrete program forked");
    let path = &report.paths[0];
    let writes = path
        .writes
        .iter()
        .map(|w| {
            let slot = w.address_term.as_const().unwrap_or_else(|| panic!("symbolic slot {}", w.address_term));
            let value = w.value_term.as_const().unwrap_or_else(|| panic!("symbolic value {}", w.value_term));
            (slot.to_be_bytes::<32>(), value.to_be_bytes::<32>())
        })
        .collect();
    (writes, path.terminal)
}

fn terminal_of(h: Halt) -> Terminal {
    match h {
        Halt::Stop => Terminal::Stop,
        Halt::Return => Terminal::Return,
        Halt::Revert => Terminal::Revert,
        Halt::Invalid => Terminal::Invalid,
        Halt::SelfDestruct => Terminal::SelfDestruct,
    }
}

#[test]
fn straightline_fixtures_match_reference() {
    let fixtures = support::straightline_fixtures();
    assert!(fixtures.len() >= 10);
    for (name, code) in fixtures {
        let reference = interp::run(&code, 10_000).unwrap_or_else(|e| panic!("{name}: unsupported {e:?}"));
        assert!(!reference.writes.is_empty(), "{name} writes nothing");
        let (writes, terminal) = engine(&code);
        assert_eq!(writes, reference.writes, "{name}: storage writes differ");
        assert_eq!(terminal, terminal_of(reference.halt), "{name}: terminal differs");
    }
}

#[test]
fn reference_interpreter_sanity() {
    let out = interp::run(&support::asm("PUSH1 05 PUSH1 03 SUB PUSH1 00 SSTORE STOP"), 100).unwrap();
    let mut expect = [0u8; 32];
    expect[31] = 0xfe;
    expect[..31].fill(0xff);
    assert_eq!(out.writes[0].1, expect);
    assert_eq!(out.halt, Halt::Stop);
}

const BINARY: [&str; 21] = [
    "ADD",
    "MUL",
    "SUB",
    "DIV",
    "SDIV",
    "MOD",
    "SMOD",
    "EXP",
    "SIGNEXTEND",
    "LT",
    "GT",
    "SLT",
    "SGT",
    "EQ",
    "AND",
    "OR",
    "XOR",
    "BYTE",
    "SHL",
    "SHR",
    "SAR",
];

/// Turns random draws into a stack-balanced straight-line program.
fn build_program(steps: &[(u8, [u8; 32], u8)], end: u8) -> String {
    let mut src = String::new();
    let mut depth = 0usize;
    let mut written: Vec<u8> = Vec::new();
    let push = |src: &mut String, depth: &mut usize, value: &[u8; 32], width: u8| {
        let n = (width % 32) as usize + 1;
        src.push_str(&format!("PUSH{n} {} ", hex::encode(&value[32 - n..])));
        *depth += 1;
    };
    for (choice, value, small) in steps {
        match choice % 13 {
            1 if depth >= 2 => {
                src.push_str(BINARY[*small as usize % BINARY.len()]);
                src.push(' ');
                depth -= 1;
            }
            2 if depth >= 1 => src.push_str(if small % 2 == 0 { "ISZERO " } else { "NOT " }),
            3 if depth >= 3 => {
                src.push_str(if small % 2 == 0 { "ADDMOD " } else { "MULMOD " });
                depth -= 2;
            }
            4 if depth >= 1 => {
                let n = (*small as usize % depth.min(16)) + 1;
                src.push_str(&format!("DUP{n} "));
                depth += 1;
            }
            5 if depth >= 2 => {
                let n = (*small as usize % (depth - 1).min(16)) + 1;
                src.push_str(&format!("SWAP{n} "));
            }
            6 if depth >= 1 => {
                let slot = small % 8;
                src.push_str(&format!("PUSH1 {slot:02x} SSTORE "));
                written.push(slot);
                depth -= 1;
            }
            7 if !written.is_empty() => {
                let slot = written[*small as usize % written.len()];
                src.push_str(&format!("PUSH1 {slot:02x} SLOAD "));
                depth += 1;
            }
            8 if depth >= 1 => {
                src.push_str(&format!("PUSH1 {:02x} MSTORE ", small % 96));
                depth -= 1;
            }
            9 => {
                src.push_str(&format!("PUSH1 {:02x} MLOAD ", small % 96));
                depth += 1;
            }
            10 if depth >= 1 => {
                src.push_str(&format!("PUSH1 {:02x} MSTORE8 ", small % 96));
                depth -= 1;
            }
            11 => {
                src.push_str(&format!("PUSH1 {:02x} PUSH1 {:02x} KECCAK256 ", small % 70, value[0] % 64));
                depth += 1;
            }
            12 if depth >= 1 => {
                src.push_str("POP ");
                depth -= 1;
            }
            _ => push(&mut src, &mut depth, value, *small),
        }
        if depth > 900 {
            break;
        }
    }
    if depth >= 1 {
        src.push_str("PUSH1 20 SSTORE ");
    }
    src.push_str(match end % 4 {
        0 => "STOP",
        1 => "PUSH1 00 PUSH1 00 RETURN",
        2 => "PUSH1 00 PUSH1 00 REVERT",
        _ => "INVALID",
    });
    src
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn random_straightline_programs_match(steps in prop::collection::vec(any::<(u8, [u8; 32], u8)>(), 1..80), end in any::<u8>()) {
        let src = build_program(&steps, end);
        let code = support::asm(&src);
        let reference = interp::run(&code, 10_000).expect("generator emits supported opcodes only");
        let (writes, terminal) = engine(&code);
        prop_assert_eq!(writes, reference.writes, "program: {}", src);
        prop_assert_eq!(terminal, terminal_of(reference.halt));
    }
}
