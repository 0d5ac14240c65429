//! Monetary units.
//!
//! Every balance in the engine is an integer number of wei: unsigned
//! ([`Wei`]) for quantities that cannot go negative (tips, bids, revenue)
//! and signed ([`SignedWei`]) for balance deltas and profits. Conversion to
//! ETH happens only when a value leaves the engine in a report, so sums and
//! comparisons inside the pipeline never suffer float drift.
//!
//! Wei values are serialized as decimal strings rather than JSON numbers:
//! one ETH is 10^18 wei, which already exceeds the 2^53 range where IEEE
//! doubles are exact, and many JSON readers silently round large integers.

use serde::{Deserialize, Deserializer, Serializer};

/// Unsigned wei amount (tips, bids, revenue).
pub type Wei = u128;

/// Signed wei amount (balance deltas, profit).
pub type SignedWei = i128;

/// Number of wei in one ETH.
pub const WEI_PER_ETH: Wei = 1_000_000_000_000_000_000;

/// Converts an unsigned wei amount to ETH for reporting.
pub fn wei_to_eth(wei: Wei) -> f64 {
    wei as f64 / WEI_PER_ETH as f64
}

/// Converts a signed wei amount to ETH for reporting.
pub fn signed_wei_to_eth(wei: SignedWei) -> f64 {
    wei as f64 / WEI_PER_ETH as f64
}

/// Converts a non-negative ETH float to wei, rounding to the nearest wei.
///
/// Only used when turning human-written scenario configs into planted
/// amounts; analysis paths never convert in this direction.
pub fn eth_to_wei(eth: f64) -> Wei {
    assert!(
        eth.is_finite() && eth >= 0.0,
        "eth_to_wei requires a finite non-negative amount, got {eth}"
    );
    (eth * WEI_PER_ETH as f64).round() as Wei
}

/// Serde adapter: `u128` wei as a decimal string.
pub mod wei_string {
    use super::*;

    pub fn serialize<S: Serializer>(value: &Wei, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&value.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Wei, D::Error> {
        let raw = String::deserialize(de)?;
        raw.parse::<Wei>()
            .map_err(|_| serde::de::Error::custom(format!("invalid wei amount {raw:?}")))
    }
}

/// Serde adapter: `i128` wei as a decimal string with optional sign.
pub mod signed_wei_string {
    use super::*;

    pub fn serialize<S: Serializer>(value: &SignedWei, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&value.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<SignedWei, D::Error> {
        let raw = String::deserialize(de)?;
        raw.parse::<SignedWei>()
            .map_err(|_| serde::de::Error::custom(format!("invalid signed wei amount {raw:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eth_round_trip_on_exact_amounts() {
        assert_eq!(wei_to_eth(WEI_PER_ETH), 1.0);
        assert_eq!(wei_to_eth(WEI_PER_ETH / 2), 0.5);
        assert_eq!(eth_to_wei(1.0), WEI_PER_ETH);
        assert_eq!(eth_to_wei(0.0), 0);
    }

    #[test]
    fn signed_conversion_keeps_sign() {
        assert_eq!(signed_wei_to_eth(-(WEI_PER_ETH as SignedWei)), -1.0);
    }

    #[test]
    #[should_panic]
    fn eth_to_wei_rejects_negative() {
        eth_to_wei(-0.5);
    }
}
