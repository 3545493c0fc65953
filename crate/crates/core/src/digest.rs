//! Content digests and fixed-precision rendering for persisted artifacts.

use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};

/// Significant digits used for every float written to a JSON artifact.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Round `x` to [`SIGNIFICANT_DIGITS`] significant decimal digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .expect("formatted float parses")
}

pub fn serialize_sig<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round_sig(*x))
}

pub fn serialize_sig_vec<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(xs.iter().map(|&x| round_sig(x)))
}

/// Hex SHA-256 of raw bytes, truncated to 16 hex characters.
pub fn bytes_digest(bytes: &[u8]) -> String {
    let full = Sha256::digest(bytes);
    hex::encode(&full[..8])
}

/// Digest of the canonical compact JSON encoding of `value`.
pub fn json_digest<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("artifact types serialize");
    bytes_digest(&bytes)
}
