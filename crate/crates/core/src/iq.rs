//! Core IQ sample types and raw `.cf32` file I/O.
//!
//! The on-disk payload format is the de-facto SDR raw capture format:
//! interleaved `[I0 Q0 I1 Q1 ...]` as 32-bit IEEE-754 little-endian floats.
//! The sample rate is not part of the payload; it lives in a sidecar
//! `<name>.meta.json` next to the payload so the payload stays compatible
//! with other SDR tooling.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One complex baseband sample. `re` is the in-phase (I) component, `im` the
/// quadrature (Q) component, both dimensionless with full scale around 1.0.
pub type IqSample = Complex<f32>;

/// An immutable run of IQ samples at a fixed sample rate.
///
/// Samples are indexed from 0; every sample index used downstream (detection
/// events, template clips) refers to a position in a stream of this type.
/// Construction validates that every sample is finite, so consumers can rely
/// on NaN/Inf never entering the processing chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    samples: Vec<IqSample>,
    sample_rate_hz: f64,
}

impl SampleStream {
    /// Build a stream, rejecting a non-positive rate or non-finite samples.
    pub fn new(samples: Vec<IqSample>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sample rate must be positive and finite, got {sample_rate_hz}"
            )));
        }
        validate_finite(&samples)?;
        Ok(SampleStream {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[IqSample] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn into_samples(self) -> Vec<IqSample> {
        self.samples
    }
}

fn validate_finite(samples: &[IqSample]) -> Result<()> {
    for (index, s) in samples.iter().enumerate() {
        if !s.re.is_finite() || !s.im.is_finite() {
            return Err(Error::NonFinite { index });
        }
    }
    Ok(())
}

/// Sidecar metadata for a `.cf32` payload. Unknown keys are preserved so
/// callers may attach free-form provenance (seed, scene name, notes).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamMeta {
    pub sample_rate_hz: f64,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl StreamMeta {
    pub fn new(sample_rate_hz: f64) -> Self {
        StreamMeta {
            sample_rate_hz,
            extra: serde_json::Map::new(),
        }
    }
}

/// Sidecar path for a payload: `foo.cf32` -> `foo.meta.json`.
pub fn meta_path(payload: &Path) -> PathBuf {
    payload.with_extension("meta.json")
}

/// Read raw interleaved complex float32 samples, without any rate metadata.
pub(crate) fn read_cf32_payload(path: &Path) -> Result<Vec<IqSample>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            len: bytes.len() as u64,
        });
    }
    let mut samples = Vec::with_capacity(bytes.len() / 8);
    for rec in bytes.chunks_exact(8) {
        let re = f32::from_le_bytes([rec[0], rec[1], rec[2], rec[3]]);
        let im = f32::from_le_bytes([rec[4], rec[5], rec[6], rec[7]]);
        samples.push(Complex::new(re, im));
    }
    validate_finite(&samples)?;
    Ok(samples)
}

pub(crate) fn write_cf32_payload(path: &Path, samples: &[IqSample]) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for s in samples {
        w.write_all(&s.re.to_le_bytes())
            .and_then(|_| w.write_all(&s.im.to_le_bytes()))
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_meta(payload: &Path) -> Result<StreamMeta> {
    let mpath = meta_path(payload);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let meta: StreamMeta = serde_json::from_str(&text).map_err(|e| Error::Meta {
        path: mpath.clone(),
        message: e.to_string(),
    })?;
    if !(meta.sample_rate_hz > 0.0) || !meta.sample_rate_hz.is_finite() {
        return Err(Error::Meta {
            path: mpath,
            message: format!("sample_rate_hz must be positive, got {}", meta.sample_rate_hz),
        });
    }
    Ok(meta)
}

pub fn write_meta(payload: &Path, meta: &StreamMeta) -> Result<()> {
    let mpath = meta_path(payload);
    let text = serde_json::to_string_pretty(meta).expect("meta serializes");
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))
}

/// Read a `.cf32` payload together with its required sidecar.
///
/// Fails hard on a truncated payload (a partial 8-byte record) and on the
/// first non-finite value, naming its sample index.
pub fn read_iq_file(path: &Path) -> Result<SampleStream> {
    let meta = read_meta(path)?;
    read_iq_file_with_rate(path, meta.sample_rate_hz)
}

/// Read a `.cf32` payload with the rate supplied by the caller (e.g. a CLI
/// flag) instead of a sidecar.
pub fn read_iq_file_with_rate(path: &Path, sample_rate_hz: f64) -> Result<SampleStream> {
    let samples = read_cf32_payload(path)?;
    SampleStream::new(samples, sample_rate_hz)
}

/// Write payload plus a minimal sidecar carrying the sample rate, making this
/// the exact inverse of [`read_iq_file`]. Finiteness is guaranteed by the
/// [`SampleStream`] invariant.
pub fn write_iq_file(stream: &SampleStream, path: &Path) -> Result<()> {
    write_cf32_payload(path, stream.samples())?;
    write_meta(path, &StreamMeta::new(stream.sample_rate_hz()))
}
