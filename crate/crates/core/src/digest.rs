use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// Digest of a serializable value through its canonical JSON form.
pub fn json_digest<T: serde::Serialize>(value: &T) -> String {
    sha256_hex(serde_json::to_vec(value).expect("value serializes"))
}
