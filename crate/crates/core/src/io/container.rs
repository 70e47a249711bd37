//! Binary container: 8 magic bytes, a little-endian `u64` header length, a
//! JSON header, then a little-endian `f64` payload. The header always carries
//! the payload length and its SHA-256 digest.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC_LEN: usize = 8;
const MAX_HEADER: u64 = 1 << 24;

pub fn payload_bytes(payload: &[f64]) -> Vec<u8> {
    payload.iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn payload_digest(payload: &[f64]) -> String {
    hex::encode(Sha256::digest(payload_bytes(payload)))
}

/// Writes `header` (which must serialise to a JSON object) with the payload
/// length and digest added.
pub fn write_container<H: Serialize>(path: impl AsRef<Path>, magic: &[u8; MAGIC_LEN], header: &H, payload: &[f64]) -> Result<()> {
    let mut obj = match serde_json::to_value(header)? {
        Value::Object(m) => m,
        _ => return Err(Error::InvalidParameter("container header must be a JSON object".into())),
    };
    obj.insert("payload_len".into(), Value::from(payload.len() as u64));
    obj.insert("digest".into(), Value::from(payload_digest(payload)));
    let head = serde_json::to_vec(&Value::Object(obj))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(magic)?;
    w.write_all(&(head.len() as u64).to_le_bytes())?;
    w.write_all(&head)?;
    w.write_all(&payload_bytes(payload))?;
    w.flush()?;
    Ok(())
}

/// Raw container contents; the digest is not checked.
pub struct RawContainer {
    pub header: Map<String, Value>,
    pub payload: Vec<f64>,
}

impl RawContainer {
    pub fn stored_digest(&self) -> Option<&str> {
        self.header.get("digest").and_then(Value::as_str)
    }

    /// Recomputes the payload digest and compares it with the header.
    pub fn verify(&self) -> Result<()> {
        let want = self.stored_digest().ok_or_else(|| Error::Corrupt("header has no digest".into()))?;
        let got = payload_digest(&self.payload);
        if want != got {
            return Err(Error::Corrupt(format!("digest mismatch: header {want}, payload {got}")));
        }
        Ok(())
    }

    pub fn header_as<H: DeserializeOwned>(&self) -> Result<H> {
        Ok(serde_json::from_value(Value::Object(self.header.clone()))?)
    }
}

pub fn read_container(path: impl AsRef<Path>, magic: &[u8; MAGIC_LEN]) -> Result<RawContainer> {
    let mut r = BufReader::new(File::open(path)?);
    let mut m = [0u8; MAGIC_LEN];
    read_exact(&mut r, &mut m)?;
    if &m != magic {
        return Err(Error::Corrupt(format!("bad magic {:?}", String::from_utf8_lossy(&m))));
    }
    let mut len = [0u8; 8];
    read_exact(&mut r, &mut len)?;
    let len = u64::from_le_bytes(len);
    if len > MAX_HEADER {
        return Err(Error::Corrupt(format!("header length {len} is implausible")));
    }
    let mut head = vec![0u8; len as usize];
    read_exact(&mut r, &mut head)?;
    let header = match serde_json::from_slice::<Value>(&head).map_err(|e| Error::Corrupt(format!("header: {e}")))? {
        Value::Object(o) => o,
        _ => return Err(Error::Corrupt("header is not a JSON object".into())),
    };
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if rest.len() % 8 != 0 {
        return Err(Error::Corrupt("payload is not a whole number of f64 values".into()));
    }
    let payload: Vec<f64> = rest.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    if let Some(n) = header.get("payload_len").and_then(Value::as_u64) {
        if n as usize != payload.len() {
            return Err(Error::Corrupt(format!("header declares {n} values, file holds {}", payload.len())));
        }
    }
    Ok(RawContainer { header, payload })
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Corrupt("file is truncated".into()),
        _ => Error::Io(e),
    })
}
