//! Snapshots, reports and number formatting.
//!
//! Snapshot layout (little-endian):
//!
//! ```text
//! "DBEC" | version: u32 | n1 n2 n3: u32 | L1 L2 L3: f64 | (re, im): f64 x n1*n2*n3
//! ```
//!
//! Values are stored x-fastest, the same order as [`WaveField::data`].

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, WaveField, C64};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"DBEC";
pub const SNAPSHOT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 3 * 4 + 3 * 8;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn encode_snapshot(u: &WaveField) -> Vec<u8> {
    let g = u.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * g.len());
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    for n in g.n() {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for l in g.half_lengths() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    for z in u.data() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<WaveField> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "truncated header: {} bytes, need {HEADER_LEN}",
            bytes.len()
        )));
    }
    if &bytes[..4] != SNAPSHOT_MAGIC {
        return Err(Error::Format("bad magic, not a snapshot file".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(4);
    if version != SNAPSHOT_VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version}; supported versions: {SNAPSHOT_VERSION}"
        )));
    }
    let n = [u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize];
    let half = [f64_at(20), f64_at(28), f64_at(36)];
    let grid = GridSpec::new(n, half).map_err(|e| Error::Format(format!("bad grid in header: {e}")))?;
    let need = HEADER_LEN + 16 * grid.len();
    if bytes.len() != need {
        return Err(Error::Format(format!(
            "payload is {} bytes, expected {need} for a {}x{}x{} grid",
            bytes.len(),
            n[0],
            n[1],
            n[2]
        )));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect();
    WaveField::from_vec(&grid, data)
}

pub fn write_snapshot(path: &Path, u: &WaveField) -> Result<()> {
    write_bytes(path, &encode_snapshot(u))
}

pub fn read_snapshot(path: &Path) -> Result<WaveField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes)
}

/// Pretty JSON with keys sorted at every level.
pub fn report_json<T: Serialize>(report: &T) -> Result<String> {
    let value = serde_json::to_value(report).map_err(|e| Error::Format(e.to_string()))?;
    serde_json::to_string_pretty(&value).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    let mut s = report_json(report)?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes(path, text.as_bytes())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> WaveField {
        let grid = GridSpec::new([8, 16, 8], [3.0, 4.0, 5.0]).unwrap();
        WaveField::from_fn(&grid, |x| C64::new((-x[0] * x[0]).exp(), x[1] * 0.1))
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let u = field();
        let v = decode_snapshot(&encode_snapshot(&u)).unwrap();
        assert_eq!(u.grid().n(), v.grid().n());
        assert_eq!(u.grid().half_lengths(), v.grid().half_lengths());
        for (a, b) in u.data().iter().zip(v.data()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn rejects_truncation_magic_and_version() {
        let bytes = encode_snapshot(&field());
        assert!(matches!(decode_snapshot(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(decode_snapshot(&bytes[..10]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_snapshot(&bad), Err(Error::Format(_))));
        let mut v2 = bytes;
        v2[4..8].copy_from_slice(&(SNAPSHOT_VERSION + 1).to_le_bytes());
        match decode_snapshot(&v2) {
            Err(Error::Format(msg)) => assert!(msg.contains("supported versions: 1")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn floats_round_trip_through_text() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn report_keys_are_sorted() {
        #[derive(Serialize)]
        struct R {
            zeta: f64,
            alpha: f64,
        }
        let s = report_json(&R { zeta: 1.0, alpha: 2.0 }).unwrap();
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
    }
}
