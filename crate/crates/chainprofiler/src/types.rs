//! Core value types shared across the pipeline: account addresses, transaction
//! hashes, and wei amounts.
//!
//! Monetary amounts are exact 256-bit unsigned integers. They parse from and
//! serialize to decimal strings; floating point enters only at the edges where
//! ratios or statistics are genuinely real-valued.

use std::fmt;
use std::str::FromStr;

use primitive_types::{U256, U512};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A 20-byte account address, normalized to lowercase `0x`-prefixed hex.
///
/// Byte ordering equals lexicographic ordering of the canonical string form,
/// so `Ord` on the raw bytes is the tie-break order used everywhere.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(pub [u8; 20]);

/// A 32-byte transaction hash, normalized to lowercase `0x`-prefixed hex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxHash(pub [u8; 32]);

/// An exact wei amount in [0, 2^256).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Wei(pub U256);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("invalid address {0:?}: expected 0x followed by 40 hex digits")]
    Address(String),
    #[error("invalid tx hash {0:?}: expected 0x followed by 64 hex digits")]
    TxHash(String),
    #[error("invalid wei amount {0:?}: expected a decimal integer below 2^256")]
    Wei(String),
}

fn parse_fixed_hex<const N: usize>(s: &str) -> Option<[u8; N]> {
    let body = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X"))?;
    if body.len() != 2 * N {
        return None;
    }
    let mut out = [0u8; N];
    hex::decode_to_slice(body, &mut out).ok()?;
    Some(out)
}

impl Address {
    /// Parses and normalizes; accepts mixed-case hex, stores lowercase.
    pub fn parse(s: &str) -> Result<Self, ParseError> {
        parse_fixed_hex::<20>(s)
            .map(Address)
            .ok_or_else(|| ParseError::Address(s.to_string()))
    }
}

impl TxHash {
    pub fn parse(s: &str) -> Result<Self, ParseError> {
        parse_fixed_hex::<32>(s)
            .map(TxHash)
            .ok_or_else(|| ParseError::TxHash(s.to_string()))
    }
}

impl Wei {
    pub const ZERO: Wei = Wei(U256::zero());

    /// Parses a non-negative decimal integer. Rejects signs, whitespace,
    /// fractional parts, and values that do not fit in 256 bits.
    pub fn parse(s: &str) -> Result<Self, ParseError> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseError::Wei(s.to_string()));
        }
        U256::from_dec_str(s)
            .map(Wei)
            .map_err(|_| ParseError::Wei(s.to_string()))
    }

    pub fn from_u64(v: u64) -> Self {
        Wei(U256::from(v))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// Remainder modulo 10^digits. `digits` must be in [1, 18] so the
    /// modulus fits in a u64.
    pub fn mod_pow10(&self, digits: u32) -> u64 {
        assert!((1..=18).contains(&digits), "digits out of range: {digits}");
        let modulus = U256::from(10u64.pow(digits));
        (self.0 % modulus).as_u64()
    }

    /// Widens to 512 bits for overflow-free sums and fee products.
    pub fn widen(&self) -> U512 {
        U512::from(self.0)
    }

    /// Lossy conversion for ratio and statistics code paths.
    pub fn to_f64(&self) -> f64 {
        // U256 → f64 via limbs; exact for values below 2^53, correctly
        // rounded scaling above.
        let mut acc = 0.0f64;
        for limb in self.0 .0.iter().rev() {
            acc = acc * 1.8446744073709552e19 + *limb as f64;
        }
        acc
    }
}

/// Remainder of a 512-bit magnitude modulo 10^digits.
pub fn u512_mod_pow10(v: U512, digits: u32) -> u64 {
    assert!((1..=18).contains(&digits), "digits out of range: {digits}");
    (v % U512::from(10u64.pow(digits))).as_u64()
}

/// Lossy conversion of a 512-bit magnitude, for ratio computation.
pub fn u512_to_f64(v: U512) -> f64 {
    let mut acc = 0.0f64;
    for limb in v.0.iter().rev() {
        acc = acc * 1.8446744073709552e19 + *limb as f64;
    }
    acc
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for TxHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for TxHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Wei {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // U256's Display is already plain decimal.
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for Wei {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Address {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Address::parse(s)
    }
}

impl FromStr for TxHash {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TxHash::parse(s)
    }
}

impl FromStr for Wei {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Wei::parse(s)
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }
        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(Address);
string_serde!(TxHash);
string_serde!(Wei);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn address_normalizes_case_and_round_trips() {
        let a = Address::parse("0xABCDEF0123456789abcdef0123456789ABCDEF01").unwrap();
        assert_eq!(a.to_string(), "0xabcdef0123456789abcdef0123456789abcdef01");
        assert_eq!(Address::parse(&a.to_string()).unwrap(), a);
    }

    #[test]
    fn address_rejects_bad_shapes() {
        for bad in [
            "",
            "0x",
            "abcdef0123456789abcdef0123456789abcdef01",      // missing prefix
            "0xabcdef0123456789abcdef0123456789abcdef0",     // 39 digits
            "0xabcdef0123456789abcdef0123456789abcdef012",   // 41 digits
            "0xabcdef0123456789abcdef0123456789abcdefgh",    // non-hex
        ] {
            assert!(Address::parse(bad).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn byte_order_matches_string_order() {
        let mut strs = vec![
            "0x00000000000000000000000000000000000000ff",
            "0xff00000000000000000000000000000000000000",
            "0x0a00000000000000000000000000000000000000",
            "0x00000000000000000000000000000000000000a0",
        ];
        let mut addrs: Vec<Address> = strs.iter().map(|s| s.parse().unwrap()).collect();
        strs.sort();
        addrs.sort();
        let rendered: Vec<String> = addrs.iter().map(|a| a.to_string()).collect();
        assert_eq!(rendered, strs);
    }

    #[test]
    fn wei_parses_decimal_and_round_trips() {
        let w = Wei::parse("5130909091").unwrap();
        assert_eq!(w.to_string(), "5130909091");
        assert_eq!(w.mod_pow10(9), 130909091);

        let max = Wei::parse(
            "115792089237316195423570985008687907853269984665640564039457584007913129639935",
        )
        .unwrap();
        assert_eq!(
            max.to_string(),
            "115792089237316195423570985008687907853269984665640564039457584007913129639935"
        );
    }

    #[test]
    fn wei_rejects_overflow_signs_and_fractions() {
        // 2^256 exactly, one above the maximum.
        assert!(Wei::parse(
            "115792089237316195423570985008687907853269984665640564039457584007913129639936"
        )
        .is_err());
        for bad in ["", "-1", "+1", "1.5", "1e9", " 1", "0x10"] {
            assert!(Wei::parse(bad).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn wei_mod_pow10_detects_round_and_manual_amounts() {
        assert_eq!(Wei::parse("5000000000").unwrap().mod_pow10(9), 0);
        assert_eq!(Wei::parse("1000000000000000000").unwrap().mod_pow10(9), 0);
        assert_ne!(Wei::parse("5130909091").unwrap().mod_pow10(9), 0);
        // 10^18 wei modulo 10^18 is 0 at the widest supported digit count.
        assert_eq!(Wei::parse("1000000000000000000").unwrap().mod_pow10(18), 0);
    }

    #[test]
    fn wei_to_f64_is_exact_below_2_53() {
        assert_eq!(Wei::from_u64(0).to_f64(), 0.0);
        assert_eq!(Wei::from_u64(1_000_000_000).to_f64(), 1e9);
        assert_eq!(Wei::parse("9007199254740992").unwrap().to_f64(), 9.007199254740992e15);
    }

    #[test]
    fn serde_uses_decimal_strings() {
        let w = Wei::parse("42").unwrap();
        assert_eq!(serde_json::to_string(&w).unwrap(), "\"42\"");
        let back: Wei = serde_json::from_str("\"42\"").unwrap();
        assert_eq!(back, w);

        let a: Address = serde_json::from_str("\"0xABCDEF0123456789abcdef0123456789ABCDEF01\"")
            .unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            "\"0xabcdef0123456789abcdef0123456789abcdef01\""
        );
    }
}
