//! Flat binary mel cache: magic, version, bins, frames, normalized flag,
//! then bin-major little-endian `f32` values.

use std::fs;
use std::path::Path;

use super::{MelSpectrogram, MEL_BINS};
use crate::error::{Error, Result};

pub const MEL_CACHE_MAGIC: [u8; 4] = *b"V2FM";
pub const MEL_CACHE_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 1;

pub fn encode_mel(spec: &MelSpectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * spec.values().len());
    out.extend_from_slice(&MEL_CACHE_MAGIC);
    out.extend_from_slice(&MEL_CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(MEL_BINS as u32).to_le_bytes());
    out.extend_from_slice(&(spec.frames() as u32).to_le_bytes());
    out.push(spec.is_normalized() as u8);
    for v in spec.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_mel(bytes: &[u8]) -> std::result::Result<MelSpectrogram, String> {
    if bytes.len() < HEADER_LEN || bytes[..4] != MEL_CACHE_MAGIC {
        return Err("not a mel cache file".into());
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != MEL_CACHE_VERSION {
        return Err(format!("unsupported mel cache version {version}"));
    }
    let bins = word(8) as usize;
    let frames = word(12) as usize;
    if bins != MEL_BINS {
        return Err(format!("expected {MEL_BINS} bins, found {bins}"));
    }
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 4 * bins * frames {
        return Err(format!("payload is {} bytes, expected {}", payload.len(), 4 * bins * frames));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    MelSpectrogram::new(frames, values, bytes[16] != 0).map_err(|e| e.to_string())
}

pub fn write_mel_cache(path: &Path, spec: &MelSpectrogram) -> Result<()> {
    fs::write(path, encode_mel(spec)).map_err(|e| Error::io(path, e))
}

pub fn read_mel_cache(path: &Path) -> Result<MelSpectrogram> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mel(&bytes).map_err(|m| Error::InvalidAudio(format!("{}: {m}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let values: Vec<f32> = (0..MEL_BINS * 7).map(|i| (i as f32).sin() * 1e3).collect();
        let m = MelSpectrogram::new(7, values, true).unwrap();
        assert_eq!(decode_mel(&encode_mel(&m)).unwrap(), m);
    }

    #[test]
    fn rejects_bad_headers() {
        let m = MelSpectrogram::new(1, vec![0.0; MEL_BINS], false).unwrap();
        let mut bytes = encode_mel(&m);
        bytes[4] = 9;
        assert!(decode_mel(&bytes).unwrap_err().contains("version"));
        assert!(decode_mel(b"nope").is_err());
        let mut short = encode_mel(&m);
        short.pop();
        assert!(decode_mel(&short).is_err());
    }
}
