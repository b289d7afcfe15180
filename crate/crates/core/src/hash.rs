//! Keccak-256 helpers and fixed-width hex identifiers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use tiny_keccak::{Hasher, Keccak};

use crate::error::Error;

/// Keccak-256 digest of `data`.
pub fn keccak256<B: AsRef<[u8]>>(data: B) -> [u8; 32] {
    let mut output = [0u8; 32];
    let mut hasher = Keccak::v256();
    hasher.update(data.as_ref());
    hasher.finalize(&mut output);
    output
}

macro_rules! hex_id {
    ($(#[$m:meta])* $name:ident, $len:expr) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub [u8; $len]);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "0x{}", hex::encode(self.0))
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self, Error> {
                let bytes = crate::disasm::parse_hex(s)?;
                let arr: [u8; $len] = bytes.try_into().map_err(|_| {
                    Error::Hex(format!("{s:?} is not {} bytes", $len))
                })?;
                Ok($name(arr))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_id!(
    /// Keccak-256 of a runtime bytecode; identifies a bytecode instance.
    CodeHash,
    32
);
hex_id!(
    /// 20-byte account address.
    Address,
    20
);

impl CodeHash {
    pub fn of(code: &[u8]) -> Self {
        CodeHash(keccak256(code))
    }
}
