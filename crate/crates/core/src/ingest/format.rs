//! Binary interchange formats.
//!
//! Both formats share one layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes   "HFTPACT1" | "HFTPTRI1"
//! dims         3 × u32   (layers, neurons, timepoints) | (channels, trials, samples)
//! rate_hz      f64
//! meta_len     u32
//! meta         meta_len bytes of UTF-8 JSON
//! payload      f32 × product(dims), row-major in dims order
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ActivationTensor, ChannelMeta, ConditionLabel, TrialRecording};
use crate::error::{Error, Result};

pub const ACTIVATION_MAGIC: &[u8; 8] = b"HFTPACT1";
pub const RECORDING_MAGIC: &[u8; 8] = b"HFTPTRI1";

const FIXED_HEADER: usize = 8 + 3 * 4 + 8 + 4;

#[derive(Serialize, Deserialize)]
struct ActivationMeta {
    corpus_tag: String,
    condition: Option<ConditionLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    units_per_trial: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct RecordingMeta {
    condition: Option<ConditionLabel>,
    channels: Vec<ChannelMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

struct Header<'a> {
    dims: [usize; 3],
    rate_hz: f64,
    meta: &'a [u8],
    payload: &'a [u8],
}

fn encode(magic: &[u8; 8], dims: [usize; 3], rate_hz: f64, meta: &[u8], values: &[f32]) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(FIXED_HEADER + meta.len() + values.len() * 4);
    buf.extend_from_slice(magic);
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Validation(format!("dimension {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    buf.extend_from_slice(&rate_hz.to_le_bytes());
    let meta_len =
        u32::try_from(meta.len()).map_err(|_| Error::Validation("metadata too large".into()))?;
    buf.extend_from_slice(&meta_len.to_le_bytes());
    buf.extend_from_slice(meta);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

fn u32_at(bytes: &[u8], at: usize) -> usize {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize
}

fn decode<'a>(magic: &[u8; 8], bytes: &'a [u8]) -> Result<Header<'a>> {
    if bytes.len() < FIXED_HEADER {
        return Err(Error::Format(format!("file is {} bytes, shorter than the header", bytes.len())));
    }
    if &bytes[..8] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..8]),
            String::from_utf8_lossy(magic)
        )));
    }
    let dims = [u32_at(bytes, 8), u32_at(bytes, 12), u32_at(bytes, 16)];
    let rate_hz = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
    let meta_len = u32_at(bytes, 28);
    let meta_end = FIXED_HEADER
        .checked_add(meta_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::Format(format!("metadata length {meta_len} runs past end of file")))?;
    let payload = &bytes[meta_end..];
    let expected = dims
        .iter()
        .try_fold(4usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Corruption(format!("dimensions {dims:?} overflow")))?;
    if payload.len() != expected {
        return Err(Error::Corruption(format!(
            "header {dims:?} implies {expected} payload bytes, found {}",
            payload.len()
        )));
    }
    Ok(Header { dims, rate_hz, meta: &bytes[FIXED_HEADER..meta_end], payload })
}

fn payload_values(payload: &[u8]) -> Vec<f32> {
    payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

fn parse_meta<'a, T: Deserialize<'a>>(meta: &'a [u8]) -> Result<T> {
    serde_json::from_slice(meta).map_err(|e| Error::Format(format!("metadata JSON: {e}")))
}

/// Serializes a tensor to HFTP-ACT v1 bytes.
pub fn activation_bytes(t: &ActivationTensor) -> Result<Vec<u8>> {
    let meta = ActivationMeta {
        corpus_tag: t.corpus_tag.clone(),
        condition: t.condition,
        units_per_trial: t.units_per_trial,
        provenance: t.provenance.clone(),
    };
    let meta = serde_json::to_vec(&meta).expect("metadata serializes");
    encode(
        ACTIVATION_MAGIC,
        [t.n_layers(), t.n_neurons(), t.n_timepoints()],
        t.rate_hz(),
        &meta,
        t.values(),
    )
}

pub fn activation_from_bytes(bytes: &[u8]) -> Result<ActivationTensor> {
    let h = decode(ACTIVATION_MAGIC, bytes)?;
    let meta: ActivationMeta = parse_meta(h.meta)?;
    let [layers, neurons, timepoints] = h.dims;
    let mut t = ActivationTensor::new(layers, neurons, timepoints, h.rate_hz, payload_values(h.payload))?;
    t.corpus_tag = meta.corpus_tag;
    t.condition = meta.condition;
    t.provenance = meta.provenance;
    if let Some(per) = meta.units_per_trial {
        t = t.with_units_per_trial(per)?;
    }
    Ok(t)
}

pub fn recording_bytes(r: &TrialRecording) -> Result<Vec<u8>> {
    let meta = RecordingMeta {
        condition: r.condition,
        channels: r.channels().to_vec(),
        provenance: r.provenance.clone(),
    };
    let meta = serde_json::to_vec(&meta).expect("metadata serializes");
    encode(
        RECORDING_MAGIC,
        [r.n_channels(), r.n_trials(), r.n_samples()],
        r.rate_hz(),
        &meta,
        r.values(),
    )
}

pub fn recording_from_bytes(bytes: &[u8]) -> Result<TrialRecording> {
    let h = decode(RECORDING_MAGIC, bytes)?;
    let meta: RecordingMeta = parse_meta(h.meta)?;
    let [channels, trials, samples] = h.dims;
    if meta.channels.len() != channels {
        return Err(Error::Corruption(format!(
            "header declares {channels} channels, metadata describes {}",
            meta.channels.len()
        )));
    }
    let mut r = TrialRecording::new(trials, samples, h.rate_hz, meta.channels, payload_values(h.payload))?;
    r.condition = meta.condition;
    r.provenance = meta.provenance;
    Ok(r)
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    Ok(())
}

/// Writes an HFTP-ACT v1 file.
pub fn write_activation_file(t: &ActivationTensor, path: impl AsRef<Path>) -> Result<()> {
    write_all(path.as_ref(), &activation_bytes(t)?)
}

/// Reads an HFTP-ACT v1 file.
pub fn read_activation_file(path: impl AsRef<Path>) -> Result<ActivationTensor> {
    activation_from_bytes(&fs::read(path)?)
}

/// Writes an HFTP-TRI v1 file.
pub fn write_trial_recording(r: &TrialRecording, path: impl AsRef<Path>) -> Result<()> {
    write_all(path.as_ref(), &recording_bytes(r)?)
}

/// Reads an HFTP-TRI v1 file.
pub fn read_trial_recording(path: impl AsRef<Path>) -> Result<TrialRecording> {
    recording_from_bytes(&fs::read(path)?)
}
