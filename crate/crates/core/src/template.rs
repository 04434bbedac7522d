//! Matched-filter templates: the reference taps for each monitored link.
//!
//! Templates come in two flavors. Protocol-aware templates are modulated
//! from known frame bytes (typically the SFD). Protocol-blind templates are
//! clipped verbatim from a noisy recording of a previous transmission, so
//! the receiver needs no knowledge of the packet format at all.
//!
//! On disk a template is a `.cf32` tap file plus a `<name>.meta.json`
//! sidecar carrying id, length, provenance, and normalization state, so
//! detection events stay attributable to a template identity.

use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iq::{self, IqSample, SampleStream};
use crate::synth::modulate_oqpsk;

/// Where a template's taps came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TemplateSource {
    Bytes {
        bytes: Vec<u8>,
        samples_per_chip: usize,
    },
    Recording {
        /// Free-form origin, e.g. the recording path.
        origin: Option<String>,
        start: usize,
        length: usize,
    },
}

/// Filter taps for one monitored link.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    id: String,
    taps: Vec<IqSample>,
    source: TemplateSource,
    normalized: bool,
}

#[derive(Serialize, Deserialize)]
struct TemplateMeta {
    id: String,
    n: usize,
    source: TemplateSource,
    normalized: bool,
}

impl Template {
    /// Protocol-aware template: modulate the given bytes.
    pub fn from_bytes(bytes: &[u8], samples_per_chip: usize, id: impl Into<String>) -> Result<Self> {
        if bytes.is_empty() {
            return Err(Error::InvalidTemplate("byte sequence is empty".into()));
        }
        if samples_per_chip == 0 {
            return Err(Error::InvalidTemplate("samples_per_chip must be >= 1".into()));
        }
        let taps = modulate_oqpsk(bytes, samples_per_chip).into_samples();
        let source = TemplateSource::Bytes {
            bytes: bytes.to_vec(),
            samples_per_chip,
        };
        Self::build(id.into(), taps, source, false)
    }

    /// Protocol-blind template: a verbatim clip of a recorded stream.
    pub fn from_recording(
        stream: &SampleStream,
        start: usize,
        length: usize,
        id: impl Into<String>,
    ) -> Result<Self> {
        let end = start
            .checked_add(length)
            .ok_or_else(|| Error::InvalidTemplate("clip range overflows".into()))?;
        if end > stream.len() {
            return Err(Error::InvalidTemplate(format!(
                "clip [{start}, {end}) is out of range for a stream of {} samples",
                stream.len()
            )));
        }
        let taps = stream.samples()[start..end].to_vec();
        let source = TemplateSource::Recording {
            origin: None,
            start,
            length,
        };
        Self::build(id.into(), taps, source, false)
    }

    fn build(id: String, taps: Vec<IqSample>, source: TemplateSource, normalized: bool) -> Result<Self> {
        if taps.len() < 2 {
            return Err(Error::InvalidTemplate(format!(
                "need at least 2 taps, got {}",
                taps.len()
            )));
        }
        for (i, t) in taps.iter().enumerate() {
            if !t.re.is_finite() || !t.im.is_finite() {
                return Err(Error::InvalidTemplate(format!("non-finite tap at index {i}")));
            }
        }
        if centered_energy(&taps) <= 0.0 {
            return Err(Error::InvalidTemplate(
                "all taps are equal; correlation would be singular".into(),
            ));
        }
        Ok(Template {
            id,
            taps,
            source,
            normalized,
        })
    }

    /// Scale taps to unit energy (sum of |tap|^2 = 1). The Pearson stage is
    /// scale-invariant, so this only affects MF magnitudes, keeping them
    /// comparable across filters of different lengths.
    pub fn normalize(self) -> Template {
        if self.normalized {
            return self;
        }
        let energy: f64 = self
            .taps
            .iter()
            .map(|t| (t.re as f64).powi(2) + (t.im as f64).powi(2))
            .sum();
        let scale = 1.0 / energy.sqrt();
        let taps = self
            .taps
            .iter()
            .map(|t| Complex::new((t.re as f64 * scale) as f32, (t.im as f64 * scale) as f32))
            .collect();
        Template {
            id: self.id,
            taps,
            source: self.source,
            normalized: true,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn taps(&self) -> &[IqSample] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires >= 2 taps
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn source(&self) -> &TemplateSource {
        &self.source
    }

    /// Record where a recording-derived template came from.
    pub fn set_origin(&mut self, origin: impl Into<String>) {
        if let TemplateSource::Recording { origin: o, .. } = &mut self.source {
            *o = Some(origin.into());
        }
    }

    /// Write `<path>` (taps as cf32) and `<path stem>.meta.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        iq::write_cf32_payload(path, &self.taps)?;
        let meta = TemplateMeta {
            id: self.id.clone(),
            n: self.taps.len(),
            source: self.source.clone(),
            normalized: self.normalized,
        };
        let mpath = iq::meta_path(path);
        let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
        std::fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let taps = iq::read_cf32_payload(path)?;
        let mpath = iq::meta_path(path);
        let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let meta: TemplateMeta = serde_json::from_str(&text).map_err(|e| Error::Meta {
            path: mpath.clone(),
            message: e.to_string(),
        })?;
        if meta.n != taps.len() {
            return Err(Error::Meta {
                path: mpath,
                message: format!("metadata says {} taps but payload has {}", meta.n, taps.len()),
            });
        }
        Self::build(meta.id, taps, meta.source, meta.normalized)
    }
}

pub(crate) fn centered_energy(taps: &[IqSample]) -> f64 {
    let n = taps.len() as f64;
    let mut sum = Complex::new(0.0f64, 0.0);
    for t in taps {
        sum += Complex::new(t.re as f64, t.im as f64);
    }
    let mean = sum / n;
    taps.iter()
        .map(|t| (Complex::new(t.re as f64, t.im as f64) - mean).norm_sqr())
        .sum()
}

/// Thin burst-localization helper for protocol-blind clipping: the first
/// index where the trailing `window`-sample mean power exceeds `threshold`.
/// The window is truncated at the stream start, mirroring the detector's
/// energy gate.
pub fn locate_burst(stream: &SampleStream, threshold: f64, window: usize) -> Option<usize> {
    assert!(window >= 1, "window must be >= 1");
    let mut ring = vec![0.0f64; window];
    let mut sum = 0.0f64;
    for (i, s) in stream.samples().iter().enumerate() {
        let p = (s.re as f64).powi(2) + (s.im as f64).powi(2);
        let slot = i % window;
        sum += p - ring[slot];
        ring[slot] = p;
        let count = (i + 1).min(window);
        if sum / count as f64 > threshold {
            return Some(i);
        }
    }
    None
}
