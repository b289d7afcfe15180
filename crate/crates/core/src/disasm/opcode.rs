//! Opcode table: mnemonics, immediate sizes and stack arity.

pub const STOP: u8 = 0x00;
pub const ADD: u8 = 0x01;
pub const MUL: u8 = 0x02;
pub const SUB: u8 = 0x03;
pub const DIV: u8 = 0x04;
pub const SDIV: u8 = 0x05;
pub const MOD: u8 = 0x06;
pub const SMOD: u8 = 0x07;
pub const ADDMOD: u8 = 0x08;
pub const MULMOD: u8 = 0x09;
pub const EXP: u8 = 0x0a;
pub const SIGNEXTEND: u8 = 0x0b;
pub const LT: u8 = 0x10;
pub const GT: u8 = 0x11;
pub const SLT: u8 = 0x12;
pub const SGT: u8 = 0x13;
pub const EQ: u8 = 0x14;
pub const ISZERO: u8 = 0x15;
pub const AND: u8 = 0x16;
pub const OR: u8 = 0x17;
pub const XOR: u8 = 0x18;
pub const NOT: u8 = 0x19;
pub const BYTE: u8 = 0x1a;
pub const SHL: u8 = 0x1b;
pub const SHR: u8 = 0x1c;
pub const SAR: u8 = 0x1d;
pub const KECCAK256: u8 = 0x20;
pub const ADDRESS: u8 = 0x30;
pub const BALANCE: u8 = 0x31;
pub const ORIGIN: u8 = 0x32;
pub const CALLER: u8 = 0x33;
pub const CALLVALUE: u8 = 0x34;
pub const CALLDATALOAD: u8 = 0x35;
pub const CALLDATASIZE: u8 = 0x36;
pub const CALLDATACOPY: u8 = 0x37;
pub const CODESIZE: u8 = 0x38;
pub const CODECOPY: u8 = 0x39;
pub const GASPRICE: u8 = 0x3a;
pub const EXTCODESIZE: u8 = 0x3b;
pub const EXTCODECOPY: u8 = 0x3c;
pub const RETURNDATASIZE: u8 = 0x3d;
pub const RETURNDATACOPY: u8 = 0x3e;
pub const EXTCODEHASH: u8 = 0x3f;
pub const BLOCKHASH: u8 = 0x40;
pub const COINBASE: u8 = 0x41;
pub const TIMESTAMP: u8 = 0x42;
pub const NUMBER: u8 = 0x43;
pub const PREVRANDAO: u8 = 0x44;
pub const GASLIMIT: u8 = 0x45;
pub const CHAINID: u8 = 0x46;
pub const SELFBALANCE: u8 = 0x47;
pub const BASEFEE: u8 = 0x48;
pub const BLOBHASH: u8 = 0x49;
pub const BLOBBASEFEE: u8 = 0x4a;
pub const POP: u8 = 0x50;
pub const MLOAD: u8 = 0x51;
pub const MSTORE: u8 = 0x52;
pub const MSTORE8: u8 = 0x53;
pub const SLOAD: u8 = 0x54;
pub const SSTORE: u8 = 0x55;
pub const JUMP: u8 = 0x56;
pub const JUMPI: u8 = 0x57;
pub const PC: u8 = 0x58;
pub const MSIZE: u8 = 0x59;
pub const GAS: u8 = 0x5a;
pub const JUMPDEST: u8 = 0x5b;
pub const TLOAD: u8 = 0x5c;
pub const TSTORE: u8 = 0x5d;
pub const MCOPY: u8 = 0x5e;
pub const PUSH0: u8 = 0x5f;
pub const PUSH1: u8 = 0x60;
pub const PUSH4: u8 = 0x63;
pub const PUSH20: u8 = 0x73;
pub const PUSH32: u8 = 0x7f;
pub const DUP1: u8 = 0x80;
pub const DUP16: u8 = 0x8f;
pub const SWAP1: u8 = 0x90;
pub const SWAP16: u8 = 0x9f;
pub const LOG0: u8 = 0xa0;
pub const LOG4: u8 = 0xa4;
pub const CREATE: u8 = 0xf0;
pub const CALL: u8 = 0xf1;
pub const CALLCODE: u8 = 0xf2;
pub const RETURN: u8 = 0xf3;
pub const DELEGATECALL: u8 = 0xf4;
pub const CREATE2: u8 = 0xf5;
pub const STATICCALL: u8 = 0xfa;
pub const REVERT: u8 = 0xfd;
pub const INVALID: u8 = 0xfe;
pub const SELFDESTRUCT: u8 = 0xff;

/// Static description of one opcode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpInfo {
    pub name: &'static str,
    pub pops: usize,
    pub pushes: usize,
}

const fn op(name: &'static str, pops: usize, pushes: usize) -> Option<OpInfo> {
    Some(OpInfo { name, pops, pushes })
}

/// Returns the table entry for `opcode`, or `None` for unassigned bytes.
pub fn info(opcode: u8) -> Option<OpInfo> {
    if (PUSH1..=PUSH32).contains(&opcode) {
        return op(PUSH_NAMES[(opcode - PUSH1) as usize], 0, 1);
    }
    if (DUP1..=DUP16).contains(&opcode) {
        let n = (opcode - DUP1) as usize + 1;
        return op(DUP_NAMES[n - 1], n, n + 1);
    }
    if (SWAP1..=SWAP16).contains(&opcode) {
        let n = (opcode - SWAP1) as usize + 1;
        return op(SWAP_NAMES[n - 1], n + 1, n + 1);
    }
    if (LOG0..=LOG4).contains(&opcode) {
        let n = (opcode - LOG0) as usize;
        return op(LOG_NAMES[n], n + 2, 0);
    }
    match opcode {
        STOP => op("STOP", 0, 0),
        ADD => op("ADD", 2, 1),
        MUL => op("MUL", 2, 1),
        SUB => op("SUB", 2, 1),
        DIV => op("DIV", 2, 1),
        SDIV => op("SDIV", 2, 1),
        MOD => op("MOD", 2, 1),
        SMOD => op("SMOD", 2, 1),
        ADDMOD => op("ADDMOD", 3, 1),
        MULMOD => op("MULMOD", 3, 1),
        EXP => op("EXP", 2, 1),
        SIGNEXTEND => op("SIGNEXTEND", 2, 1),
        LT => op("LT", 2, 1),
        GT => op("GT", 2, 1),
        SLT => op("SLT", 2, 1),
        SGT => op("SGT", 2, 1),
        EQ => op("EQ", 2, 1),
        ISZERO => op("ISZERO", 1, 1),
        AND => op("AND", 2, 1),
        OR => op("OR", 2, 1),
        XOR => op("XOR", 2, 1),
        NOT => op("NOT", 1, 1),
        BYTE => op("BYTE", 2, 1),
        SHL => op("SHL", 2, 1),
        SHR => op("SHR", 2, 1),
        SAR => op("SAR", 2, 1),
        KECCAK256 => op("KECCAK256", 2, 1),
        ADDRESS => op("ADDRESS", 0, 1),
        BALANCE => op("BALANCE", 1, 1),
        ORIGIN => op("ORIGIN", 0, 1),
        CALLER => op("CALLER", 0, 1),
        CALLVALUE => op("CALLVALUE", 0, 1),
        CALLDATALOAD => op("CALLDATALOAD", 1, 1),
        CALLDATASIZE => op("CALLDATASIZE", 0, 1),
        CALLDATACOPY => op("CALLDATACOPY", 3, 0),
        CODESIZE => op("CODESIZE", 0, 1),
        CODECOPY => op("CODECOPY", 3, 0),
        GASPRICE => op("GASPRICE", 0, 1),
        EXTCODESIZE => op("EXTCODESIZE", 1, 1),
        EXTCODECOPY => op("EXTCODECOPY", 4, 0),
        RETURNDATASIZE => op("RETURNDATASIZE", 0, 1),
        RETURNDATACOPY => op("RETURNDATACOPY", 3, 0),
        EXTCODEHASH => op("EXTCODEHASH", 1, 1),
        BLOCKHASH => op("BLOCKHASH", 1, 1),
        COINBASE => op("COINBASE", 0, 1),
        TIMESTAMP => op("TIMESTAMP", 0, 1),
        NUMBER => op("NUMBER", 0, 1),
        PREVRANDAO => op("PREVRANDAO", 0, 1),
        GASLIMIT => op("GASLIMIT", 0, 1),
        CHAINID => op("CHAINID", 0, 1),
        SELFBALANCE => op("SELFBALANCE", 0, 1),
        BASEFEE => op("BASEFEE", 0, 1),
        BLOBHASH => op("BLOBHASH", 1, 1),
        BLOBBASEFEE => op("BLOBBASEFEE", 0, 1),
        POP => op("POP", 1, 0),
        MLOAD => op("MLOAD", 1, 1),
        MSTORE => op("MSTORE", 2, 0),
        MSTORE8 => op("MSTORE8", 2, 0),
        SLOAD => op("SLOAD", 1, 1),
        SSTORE => op("SSTORE", 2, 0),
        JUMP => op("JUMP", 1, 0),
        JUMPI => op("JUMPI", 2, 0),
        PC => op("PC", 0, 1),
        MSIZE => op("MSIZE", 0, 1),
        GAS => op("GAS", 0, 1),
        JUMPDEST => op("JUMPDEST", 0, 0),
        TLOAD => op("TLOAD", 1, 1),
        TSTORE => op("TSTORE", 2, 0),
        MCOPY => op("MCOPY", 3, 0),
        PUSH0 => op("PUSH0", 0, 1),
        CREATE => op("CREATE", 3, 1),
        CALL => op("CALL", 7, 1),
        CALLCODE => op("CALLCODE", 7, 1),
        RETURN => op("RETURN", 2, 0),
        DELEGATECALL => op("DELEGATECALL", 6, 1),
        CREATE2 => op("CREATE2", 4, 1),
        STATICCALL => op("STATICCALL", 6, 1),
        REVERT => op("REVERT", 2, 0),
        INVALID => op("INVALID", 0, 0),
        SELFDESTRUCT => op("SELFDESTRUCT", 1, 0),
        _ => None,
    }
}

/// Number of immediate bytes following `opcode` (N for PUSHN, else 0).
pub fn immediate_len(opcode: u8) -> usize {
    if (PUSH1..=PUSH32).contains(&opcode) {
        (opcode - PUSH1) as usize + 1
    } else {
        0
    }
}

#[rustfmt::skip]
const PUSH_NAMES: [&str; 32] = [
    "PUSH1", "PUSH2", "PUSH3", "PUSH4", "PUSH5", "PUSH6", "PUSH7", "PUSH8",
    "PUSH9", "PUSH10", "PUSH11", "PUSH12", "PUSH13", "PUSH14", "PUSH15", "PUSH16",
    "PUSH17", "PUSH18", "PUSH19", "PUSH20", "PUSH21", "PUSH22", "PUSH23", "PUSH24",
    "PUSH25", "PUSH26", "PUSH27", "PUSH28", "PUSH29", "PUSH30", "PUSH31", "PUSH32",
];

#[rustfmt::skip]
const DUP_NAMES: [&str; 16] = [
    "DUP1", "DUP2", "DUP3", "DUP4", "DUP5", "DUP6", "DUP7", "DUP8",
    "DUP9", "DUP10", "DUP11", "DUP12", "DUP13", "DUP14", "DUP15", "DUP16",
];

#[rustfmt::skip]
const SWAP_NAMES: [&str; 16] = [
    "SWAP1", "SWAP2", "SWAP3", "SWAP4", "SWAP5", "SWAP6", "SWAP7", "SWAP8",
    "SWAP9", "SWAP10", "SWAP11", "SWAP12", "SWAP13", "SWAP14", "SWAP15", "SWAP16",
];

const LOG_NAMES: [&str; 5] = ["LOG0", "LOG1", "LOG2", "LOG3", "LOG4"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_immediates() {
        assert_eq!(immediate_len(PUSH1), 1);
        assert_eq!(immediate_len(PUSH4), 4);
        assert_eq!(immediate_len(PUSH32), 32);
        assert_eq!(immediate_len(PUSH0), 0);
        assert_eq!(immediate_len(ADD), 0);
    }

    #[test]
    fn arity() {
        assert_eq!(info(CALL).unwrap().pops, 7);
        assert_eq!(info(DELEGATECALL).unwrap().pops, 6);
        assert_eq!(info(SWAP16).unwrap(), OpInfo { name: "SWAP16", pops: 17, pushes: 17 });
        assert_eq!(info(LOG4).unwrap().pops, 6);
        assert!(info(0x0c).is_none());
        assert!(info(0xef).is_none());
    }
}
