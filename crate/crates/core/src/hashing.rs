//! SHA-256 helpers shared by sampling, manifests and probe case ids.

use std::io::{self, Read};
use std::path::Path;

use sha2::{Digest, Sha256};

/// Digest of several fields, each length-prefixed so that field boundaries
/// cannot be forged by concatenation.
pub fn digest_fields<'a>(fields: impl IntoIterator<Item = &'a [u8]>) -> [u8; 32] {
    let mut h = Sha256::new();
    for f in fields {
        h.update((f.len() as u64).to_le_bytes());
        h.update(f);
    }
    h.finalize().into()
}

pub fn hex_fields<'a>(fields: impl IntoIterator<Item = &'a [u8]>) -> String {
    hex::encode(digest_fields(fields))
}

pub fn sha256_reader<R: Read>(mut r: R) -> io::Result<String> {
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    sha256_reader(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_reader(&b"abc"[..]).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn field_boundaries_matter() {
        assert_ne!(hex_fields([&b"ab"[..], b"c"]), hex_fields([&b"a"[..], b"bc"]));
    }
}
