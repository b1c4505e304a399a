//! File formats.
//!
//! Bitstream files start with a 16-byte little-endian header
//!
//! | offset | size | field                     |
//! |--------|------|---------------------------|
//! | 0      | 4    | magic `SIQB`              |
//! | 4      | 2    | version (1)               |
//! | 6      | 2    | reserved, zero            |
//! | 8      | 8    | length in bits            |
//!
//! followed by `ceil(len / 8)` packed bytes, least significant bit first.
//! Tally and report files are JSON with counts as exact integers.

use std::fs;
use std::io;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bits::BitBuffer;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::montecarlo::ClickTally;

pub const BITSTREAM_MAGIC: &[u8; 4] = b"SIQB";
pub const BITSTREAM_VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

pub fn encode_bitstream(bits: &BitBuffer) -> Vec<u8> {
    let body = bits.to_bytes();
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(BITSTREAM_MAGIC);
    out.extend_from_slice(&BITSTREAM_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(bits.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn decode_bitstream(data: &[u8]) -> Result<BitBuffer> {
    if data.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "bitstream header needs {HEADER_LEN} bytes, file has {}",
            data.len()
        )));
    }
    if &data[..4] != BITSTREAM_MAGIC {
        return Err(Error::Format("missing SIQB magic".into()));
    }
    let version = u16::from_le_bytes([data[4], data[5]]);
    if version != BITSTREAM_VERSION {
        return Err(Error::Format(format!(
            "unsupported bitstream version {version}"
        )));
    }
    let len = u64::from_le_bytes(data[8..16].try_into().expect("eight bytes"));
    let len = usize::try_from(len)
        .map_err(|_| Error::Format(format!("bit length {len} does not fit in memory")))?;
    BitBuffer::from_bytes(&data[HEADER_LEN..], len)
}

/// Like [`fs::read`], with the path in the error message.
pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| at(path, e))
}

/// Like [`fs::read_to_string`], with the path in the error message.
pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| at(path, e))
}

/// Like [`fs::write`], with the path in the error message.
pub fn write_file(path: &Path, data: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, data).map_err(|e| at(path, e))
}

fn at(path: &Path, e: io::Error) -> Error {
    Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn write_bitstream(path: &Path, bits: &BitBuffer) -> Result<()> {
    write_file(path, encode_bitstream(bits))
}

pub fn read_bitstream(path: &Path) -> Result<BitBuffer> {
    decode_bitstream(&read_file(path)?).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Tally counts as stored on disk. `n_cross` defaults to zero and
/// `n_vacuum` to whatever remains of `n_pulses`, so externally recorded
/// tallies only need the per-port counts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TallyRecord {
    n_pulses: u64,
    n_h_s: u64,
    n_v_s: u64,
    n_d_s: u64,
    n_a_s: u64,
    n_z_d: u64,
    n_x_d: u64,
    #[serde(default)]
    n_cross: u64,
    #[serde(default)]
    n_vacuum: Option<u64>,
}

impl TallyRecord {
    fn into_tally(self) -> Result<ClickTally> {
        let mut tally = ClickTally {
            n_pulses: self.n_pulses,
            n_h_s: self.n_h_s,
            n_v_s: self.n_v_s,
            n_d_s: self.n_d_s,
            n_a_s: self.n_a_s,
            n_z_d: self.n_z_d,
            n_x_d: self.n_x_d,
            n_cross: self.n_cross,
            n_vacuum: 0,
        };
        let events = tally.n_z_total() + tally.n_x_total() + tally.n_cross;
        tally.n_vacuum = match self.n_vacuum {
            Some(v) => v,
            None => self.n_pulses.checked_sub(events).ok_or_else(|| {
                Error::Format(format!(
                    "{events} recorded events exceed n_pulses = {}",
                    self.n_pulses
                ))
            })?,
        };
        tally.validate()?;
        Ok(tally)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TallyFile<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<RunConfig>,
    tally: T,
}

pub fn encode_tally(tally: &ClickTally, config: Option<&RunConfig>) -> String {
    serde_json::to_string_pretty(&TallyFile {
        config: config.cloned(),
        tally,
    })
    .expect("tally serializes")
}

/// Reads either `{"config": ..., "tally": {...}}` or a bare tally object.
pub fn decode_tally(text: &str) -> Result<(ClickTally, Option<RunConfig>)> {
    let parse_err = |e: serde_json::Error| {
        Error::Format(format!(
            "tally line {}, column {}: {}",
            e.line(),
            e.column(),
            e
        ))
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(parse_err)?;
    if value.get("tally").is_some() {
        let file: TallyFile<TallyRecord> = serde_json::from_value(value).map_err(parse_err)?;
        Ok((file.tally.into_tally()?, file.config))
    } else {
        let record: TallyRecord = serde_json::from_value(value).map_err(parse_err)?;
        Ok((record.into_tally()?, None))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_file(path, text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Format(format!(
            "{} line {}, column {}: {}",
            path.display(),
            e.line(),
            e.column(),
            e
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let bits: BitBuffer = [true, true, false, true].into_iter().collect();
        let data = encode_bitstream(&bits);
        assert_eq!(&data[..4], b"SIQB");
        assert_eq!(&data[4..8], &[1, 0, 0, 0]);
        assert_eq!(&data[8..16], &4u64.to_le_bytes());
        assert_eq!(&data[16..], &[0b1011]);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(decode_bitstream(b"SIQB").is_err());
        let mut data = encode_bitstream(&BitBuffer::zeros(9));
        data[0] = b'X';
        assert!(decode_bitstream(&data).is_err());
        let mut data = encode_bitstream(&BitBuffer::zeros(9));
        data[4] = 2;
        assert!(decode_bitstream(&data).is_err());
        let mut data = encode_bitstream(&BitBuffer::zeros(9));
        data.pop();
        assert!(decode_bitstream(&data).is_err());
    }

    #[test]
    fn bare_external_tally() {
        let text = r#"{
            "n_pulses": 10000000000,
            "n_h_s": 929000000, "n_v_s": 923000000,
            "n_d_s": 1920000000, "n_a_s": 2020000,
            "n_z_d": 161000000, "n_x_d": 728000
        }"#;
        let (tally, config) = decode_tally(text).unwrap();
        assert!(config.is_none());
        assert_eq!(tally.n_cross, 0);
        assert_eq!(
            tally.n_vacuum,
            10_000_000_000 - 2_013_000_000 - 1_922_748_000
        );
    }

    #[test]
    fn inconsistent_tally() {
        let text = r#"{"n_pulses": 10, "n_h_s": 11, "n_v_s": 0, "n_d_s": 0, "n_a_s": 0, "n_z_d": 0, "n_x_d": 0}"#;
        assert!(decode_tally(text).is_err());
    }

    #[test]
    fn tally_counts_are_integers() {
        let tally = ClickTally {
            n_pulses: u64::MAX,
            n_vacuum: u64::MAX,
            ..ClickTally::default()
        };
        let text = encode_tally(&tally, Some(&RunConfig::default()));
        assert!(text.contains("18446744073709551615"));
        let (back, config) = decode_tally(&text).unwrap();
        assert_eq!(back, tally);
        assert_eq!(config, Some(RunConfig::default()));
    }

    proptest! {
        #[test]
        fn bitstream_round_trip(v in prop::collection::vec(any::<bool>(), 0..2000)) {
            let bits: BitBuffer = v.into_iter().collect();
            prop_assert_eq!(decode_bitstream(&encode_bitstream(&bits)).unwrap(), bits);
        }
    }
}
