//! Signature-based detection: function selectors harvested from PUSH4
//! immediates, matched against a named selector set.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::disasm::{opcode, Program};
use crate::error::{Error, Result};
use crate::hash::keccak256;

/// Default threshold: at least 5 of the 6 ERC-20 selectors.
pub const DEFAULT_THRESHOLD: usize = 5;
/// Relaxed threshold for partial implementations.
pub const RELAXED_THRESHOLD: usize = 3;

pub const ERC20_SIGNATURES: [&str; 6] = [
    "totalSupply()",
    "balanceOf(address)",
    "allowance(address,address)",
    "transfer(address,uint256)",
    "approve(address,uint256)",
    "transferFrom(address,address,uint256)",
];

/// The six ERC-20 selectors as they appear in the detection set.
pub const ERC20_SELECTORS: [[u8; 4]; 6] = [
    [0x18, 0x16, 0x0d, 0xdd],
    [0x70, 0xa0, 0x82, 0x31],
    [0xdd, 0x62, 0xed, 0x3e],
    [0xa9, 0x05, 0x9c, 0xbb],
    [0x09, 0x5e, 0xa7, 0xb3],
    [0x23, 0xb8, 0x72, 0xdd],
];

pub const ERC777_SIGNATURES: [&str; 13] = [
    "name()",
    "symbol()",
    "totalSupply()",
    "granularity()",
    "balanceOf(address)",
    "defaultOperators()",
    "isOperatorFor(address,address)",
    "authorizeOperator(address)",
    "revokeOperator(address)",
    "send(address,uint256,bytes)",
    "operatorSend(address,address,uint256,bytes,bytes)",
    "burn(uint256,bytes)",
    "operatorBurn(address,uint256,bytes,bytes)",
];

/// A 4-byte function selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Selector(pub [u8; 4]);

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bytes = crate::disasm::parse_hex(s)?;
        let arr: [u8; 4] =
            bytes.try_into().map_err(|_| Error::SelectorSet(format!("selector {s:?} is not 4 bytes")))?;
        Ok(Selector(arr))
    }
}

impl Serialize for Selector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Selector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Leading 4 bytes of the Keccak-256 digest of a canonical signature such as
/// `transfer(address,uint256)`.
pub fn selector(signature: &str) -> Result<Selector> {
    let malformed = || Error::Signature(signature.to_string());
    if signature.chars().any(char::is_whitespace) {
        return Err(malformed());
    }
    let open = signature.find('(').ok_or_else(malformed)?;
    if open == 0 || !signature.ends_with(')') {
        return Err(malformed());
    }
    let digest = keccak256(signature.as_bytes());
    Ok(Selector([digest[0], digest[1], digest[2], digest[3]]))
}

/// A named set of selectors, optionally with the signatures they came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SelectorSet {
    pub name: String,
    pub selectors: BTreeSet<Selector>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_signatures: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct SelectorSetFile {
    name: String,
    #[serde(default)]
    signatures: Option<Vec<String>>,
    #[serde(default)]
    selectors: Option<Vec<Selector>>,
}

impl SelectorSet {
    pub fn from_signatures<S: AsRef<str>>(name: &str, signatures: &[S]) -> Result<Self> {
        let selectors = signatures.iter().map(|s| selector(s.as_ref())).collect::<Result<BTreeSet<_>>>()?;
        Ok(SelectorSet {
            name: name.to_string(),
            selectors,
            source_signatures: Some(signatures.iter().map(|s| s.as_ref().to_string()).collect()),
        })
    }

    pub fn from_selectors(name: &str, selectors: impl IntoIterator<Item = Selector>) -> Self {
        SelectorSet { name: name.to_string(), selectors: selectors.into_iter().collect(), source_signatures: None }
    }

    /// The built-in ERC-20 detection set.
    pub fn erc20() -> Self {
        SelectorSet {
            name: "erc20".into(),
            selectors: ERC20_SELECTORS.iter().copied().map(Selector).collect(),
            source_signatures: Some(ERC20_SIGNATURES.iter().map(|s| s.to_string()).collect()),
        }
    }

    /// ERC-777 selectors derived from its 13 function signatures.
    pub fn erc777() -> Self {
        Self::from_signatures("erc777", &ERC777_SIGNATURES).expect("built-in signatures are well formed")
    }

    /// Parses `{"name", "signatures": [...]}` or `{"name", "selectors": [...]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: SelectorSetFile = serde_json::from_str(text)?;
        match (file.signatures, file.selectors) {
            (Some(sigs), None) => Self::from_signatures(&file.name, &sigs),
            (None, Some(sels)) => Ok(Self::from_selectors(&file.name, sels)),
            (Some(sigs), Some(sels)) => {
                let set = Self::from_signatures(&file.name, &sigs)?;
                let extra: BTreeSet<_> = sels.into_iter().collect();
                if !set.selectors.is_superset(&extra) || !extra.is_superset(&set.selectors) {
                    return Err(Error::SelectorSet(format!("{}: selectors do not match signatures", file.name)));
                }
                Ok(set)
            }
            (None, None) => Err(Error::SelectorSet(format!("{}: needs \"signatures\" or \"selectors\"", file.name))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn len(&self) -> usize {
        self.selectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selectors.is_empty()
    }
}

/// Outcome of the signature check at one threshold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigVerdict {
    pub matched: BTreeSet<Selector>,
    pub matched_count: usize,
    pub threshold: usize,
    pub detected: bool,
}

/// Every distinct PUSH4 immediate in the program.
pub fn extract_push4(program: &Program) -> BTreeSet<Selector> {
    program
        .instructions()
        .iter()
        .filter(|i| i.opcode == opcode::PUSH4)
        .map(|i| Selector([i.immediate[0], i.immediate[1], i.immediate[2], i.immediate[3]]))
        .collect()
}

pub fn is_token_sig(program: &Program, set: &SelectorSet, threshold: usize) -> SigVerdict {
    verdict_from_constants(&extract_push4(program), set, threshold)
}

/// Same as [`is_token_sig`] for callers that already harvested the constants.
pub fn verdict_from_constants(constants: &BTreeSet<Selector>, set: &SelectorSet, threshold: usize) -> SigVerdict {
    let matched: BTreeSet<_> = constants.intersection(&set.selectors).copied().collect();
    let matched_count = matched.len();
    SigVerdict { matched, matched_count, threshold, detected: matched_count >= threshold }
}

/// `|extract_push4(program) ∩ set|`.
pub fn count_selector_hits(program: &Program, set: &SelectorSet) -> usize {
    extract_push4(program).intersection(&set.selectors).count()
}
