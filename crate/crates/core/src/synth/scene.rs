//! Declarative scene composition: place modulated emissions on a timeline,
//! apply per-emission complex gains, and add circularly-symmetric complex
//! Gaussian noise. Composition is deterministic in (scene, seed) down to the
//! bit, independent of the parallelism used to fill noise.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::iq::{IqSample, SampleStream};
use crate::synth::{
    build_frame, gen_gmsk_burst, gen_tone, modulate_oqpsk, FrameSpec, CHIP_RATE_HZ,
    DEFAULT_GMSK_BT,
};

/// Noise is filled in fixed-size blocks, each from its own RNG stream, so the
/// result does not depend on how blocks are scheduled across threads.
const NOISE_BLOCK: usize = 1 << 20;

fn default_preamble() -> usize {
    4
}
fn default_spc() -> usize {
    2
}
fn default_bt() -> f64 {
    DEFAULT_GMSK_BT
}
fn default_spb() -> usize {
    4
}
fn default_tone_freq() -> f64 {
    10_000.0
}
fn default_repeat() -> usize {
    1
}

/// One signal source that can be placed in a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceSpec {
    /// An O-QPSK frame (preamble, SFD, length, payload).
    Frame {
        label: String,
        /// SFD byte as hex, e.g. "a7".
        sfd: String,
        #[serde(default)]
        payload_hex: String,
        #[serde(default = "default_preamble")]
        preamble_bytes: usize,
        #[serde(default = "default_spc")]
        samples_per_chip: usize,
    },
    /// A GMSK burst, bits given MSB-first as hex.
    Gmsk {
        #[serde(default)]
        label: Option<String>,
        bits_hex: String,
        #[serde(default = "default_bt")]
        bt: f64,
        #[serde(default = "default_spb")]
        samples_per_bit: usize,
    },
    /// A constant-envelope tone at a fixed offset from DC.
    Tone {
        #[serde(default)]
        label: Option<String>,
        length: usize,
        #[serde(default = "default_tone_freq")]
        freq_hz: f64,
    },
}

/// A source placed at a start index with a complex gain. `repeat`/`period`
/// expand to a regular packet schedule (repeat=1 places it once).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    pub source: SourceSpec,
    pub start: usize,
    pub gain: Complex<f32>,
    #[serde(default = "default_repeat")]
    pub repeat: usize,
    #[serde(default)]
    pub period: usize,
}

impl Emission {
    pub fn once(source: SourceSpec, start: usize, gain: Complex<f32>) -> Self {
        Emission {
            source,
            start,
            gain,
            repeat: 1,
            period: 0,
        }
    }

    pub fn repeated(
        source: SourceSpec,
        start: usize,
        gain: Complex<f32>,
        repeat: usize,
        period: usize,
    ) -> Self {
        Emission {
            source,
            start,
            gain,
            repeat,
            period,
        }
    }
}

/// Declarative description of a synthetic experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    /// Total mean power of the complex Gaussian noise floor.
    pub noise_power: f64,
    pub emissions: Vec<Emission>,
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidScene(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn total_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    /// Validate rates, gains, and that every placement fits the duration,
    /// without rendering anything.
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0) || !self.sample_rate_hz.is_finite() {
            return Err(Error::InvalidScene(format!(
                "sample_rate_hz must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if !(self.duration_s >= 0.0) || !self.duration_s.is_finite() {
            return Err(Error::InvalidScene(format!(
                "duration_s must be non-negative, got {}",
                self.duration_s
            )));
        }
        if !(self.noise_power >= 0.0) || !self.noise_power.is_finite() {
            return Err(Error::InvalidScene(format!(
                "noise_power must be non-negative, got {}",
                self.noise_power
            )));
        }
        let total = self.total_samples();
        for (i, em) in self.emissions.iter().enumerate() {
            if !em.gain.re.is_finite() || !em.gain.im.is_finite() {
                return Err(Error::InvalidScene(format!("emission {i}: non-finite gain")));
            }
            if em.repeat == 0 {
                return Err(Error::InvalidScene(format!("emission {i}: repeat must be >= 1")));
            }
            if em.repeat > 1 && em.period == 0 {
                return Err(Error::InvalidScene(format!(
                    "emission {i}: repeat > 1 requires a nonzero period"
                )));
            }
            let len = source_length(&em.source, self.sample_rate_hz)?;
            for k in 0..em.repeat {
                let start = em
                    .start
                    .checked_add(k.checked_mul(em.period).ok_or_else(overflow_err(i))?)
                    .ok_or_else(overflow_err(i))?;
                let end = start.checked_add(len).ok_or_else(overflow_err(i))?;
                if end > total {
                    return Err(Error::InvalidScene(format!(
                        "emission {i} repetition {k} spans [{start}, {end}) past scene end {total}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn overflow_err(i: usize) -> impl Fn() -> Error {
    move || Error::InvalidScene(format!("emission {i}: placement index overflows"))
}

fn parse_hex_bytes(field: &str, s: &str) -> Result<Vec<u8>> {
    hex::decode(s.trim()).map_err(|e| Error::InvalidScene(format!("bad hex in {field}: {e}")))
}

fn bits_from_hex(s: &str) -> Result<Vec<bool>> {
    let bytes = parse_hex_bytes("bits_hex", s)?;
    let mut bits = Vec::with_capacity(bytes.len() * 8);
    for b in bytes {
        for k in (0..8).rev() {
            bits.push((b >> k) & 1 == 1);
        }
    }
    Ok(bits)
}

/// Render one source to its waveform at the scene rate.
pub fn source_waveform(source: &SourceSpec, sample_rate_hz: f64) -> Result<Vec<IqSample>> {
    match source {
        SourceSpec::Frame {
            label,
            sfd,
            payload_hex,
            preamble_bytes,
            samples_per_chip,
        } => {
            let sfd_bytes = parse_hex_bytes("sfd", sfd)?;
            if sfd_bytes.len() != 1 {
                return Err(Error::InvalidScene(format!(
                    "sfd must be exactly one byte, got {} bytes",
                    sfd_bytes.len()
                )));
            }
            if *samples_per_chip == 0 {
                return Err(Error::InvalidScene("samples_per_chip must be >= 1".into()));
            }
            let frame_rate = CHIP_RATE_HZ * *samples_per_chip as f64;
            if (frame_rate - sample_rate_hz).abs() > 1e-6 {
                return Err(Error::InvalidScene(format!(
                    "frame '{label}' modulates at {frame_rate} Hz but the scene runs at {sample_rate_hz} Hz"
                )));
            }
            let mut spec = FrameSpec::new(sfd_bytes[0], parse_hex_bytes("payload_hex", payload_hex)?, label.clone());
            spec.preamble_bytes = *preamble_bytes;
            let bytes = build_frame(&spec)?;
            Ok(modulate_oqpsk(&bytes, *samples_per_chip).into_samples())
        }
        SourceSpec::Gmsk {
            bits_hex,
            bt,
            samples_per_bit,
            ..
        } => {
            if *samples_per_bit == 0 {
                return Err(Error::InvalidScene("samples_per_bit must be >= 1".into()));
            }
            if !(*bt > 0.0 && *bt <= 1.0) {
                return Err(Error::InvalidScene(format!("bt must be in (0, 1], got {bt}")));
            }
            let bits = bits_from_hex(bits_hex)?;
            Ok(gen_gmsk_burst(&bits, *bt, *samples_per_bit).into_samples())
        }
        SourceSpec::Tone { length, freq_hz, .. } => {
            if !freq_hz.is_finite() {
                return Err(Error::InvalidScene("tone freq_hz must be finite".into()));
            }
            Ok(gen_tone(*length, freq_hz / sample_rate_hz, sample_rate_hz).into_samples())
        }
    }
}

fn source_length(source: &SourceSpec, sample_rate_hz: f64) -> Result<usize> {
    // Frames and tones have closed-form lengths; GMSK length depends on the
    // filter span, so render it (bursts are short).
    match source {
        SourceSpec::Frame {
            payload_hex,
            preamble_bytes,
            samples_per_chip,
            ..
        } => {
            let payload = parse_hex_bytes("payload_hex", payload_hex)?;
            if payload.len() > 127 {
                return Err(Error::InvalidFrame(format!(
                    "payload of {} bytes overflows the length byte (max 127)",
                    payload.len()
                )));
            }
            Ok((preamble_bytes + 2 + payload.len()) * 64 * samples_per_chip)
        }
        SourceSpec::Tone { length, .. } => Ok(*length),
        SourceSpec::Gmsk { .. } => Ok(source_waveform(source, sample_rate_hz)?.len()),
    }
}

/// Render all emissions onto the timeline and add the noise floor.
///
/// Overlap between emissions is allowed (that is the point of the
/// interference experiments); placements that run past the scene end are
/// rejected. Identical (scene, seed) produce bit-identical streams.
pub fn compose_scene(spec: &SceneSpec, seed: u64) -> Result<SampleStream> {
    spec.validate()?;
    let total = spec.total_samples();
    let mut buf = vec![Complex::new(0.0f32, 0.0f32); total];

    for em in &spec.emissions {
        let wave = source_waveform(&em.source, spec.sample_rate_hz)?;
        for k in 0..em.repeat {
            let start = em.start + k * em.period;
            for (j, &w) in wave.iter().enumerate() {
                buf[start + j] += em.gain * w;
            }
        }
    }

    if spec.noise_power > 0.0 {
        add_noise(&mut buf, spec.noise_power, seed);
    }

    SampleStream::new(buf, spec.sample_rate_hz)
}

/// Add circularly-symmetric complex Gaussian noise of the given total mean
/// power (variance noise_power/2 per component).
fn add_noise(buf: &mut [IqSample], noise_power: f64, seed: u64) {
    let sigma = (noise_power / 2.0).sqrt();

    let fill = |(block_idx, block): (usize, &mut [IqSample])| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(block_idx as u64);
        let normal = Normal::new(0.0f64, sigma).expect("valid sigma");
        for s in block.iter_mut() {
            s.re += normal.sample(&mut rng) as f32;
            s.im += normal.sample(&mut rng) as f32;
        }
    };

    #[cfg(feature = "parallel")]
    buf.par_chunks_mut(NOISE_BLOCK).enumerate().for_each(fill);

    #[cfg(not(feature = "parallel"))]
    buf.chunks_mut(NOISE_BLOCK).enumerate().for_each(fill);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_source(label: &str, sfd: &str) -> SourceSpec {
        SourceSpec::Frame {
            label: label.into(),
            sfd: sfd.into(),
            payload_hex: "aabb".into(),
            preamble_bytes: 4,
            samples_per_chip: 2,
        }
    }

    #[test]
    fn empty_scene_is_all_zero() {
        let spec = SceneSpec {
            duration_s: 0.001,
            sample_rate_hz: 4e6,
            noise_power: 0.0,
            emissions: vec![],
        };
        let s = compose_scene(&spec, 0).unwrap();
        assert_eq!(s.len(), 4000);
        assert!(s.samples().iter().all(|x| x.re == 0.0 && x.im == 0.0));
    }

    #[test]
    fn single_packet_identity() {
        let src = frame_source("tx1", "a7");
        let wave = source_waveform(&src, 4e6).unwrap();
        let spec = SceneSpec {
            duration_s: 0.002,
            sample_rate_hz: 4e6,
            noise_power: 0.0,
            emissions: vec![Emission::once(src, 100, Complex::new(1.0, 0.0))],
        };
        let s = compose_scene(&spec, 0).unwrap();
        assert!(s.samples()[..100].iter().all(|x| x.norm_sqr() == 0.0));
        assert_eq!(&s.samples()[100..100 + wave.len()], &wave[..]);
        assert!(s.samples()[100 + wave.len()..]
            .iter()
            .all(|x| x.norm_sqr() == 0.0));
    }

    #[test]
    fn out_of_range_placement_rejected() {
        let spec = SceneSpec {
            duration_s: 0.0001, // 400 samples
            sample_rate_hz: 4e6,
            noise_power: 0.0,
            emissions: vec![Emission::once(frame_source("tx1", "a7"), 0, Complex::new(1.0, 0.0))],
        };
        assert!(matches!(compose_scene(&spec, 0), Err(Error::InvalidScene(_))));
    }

    #[test]
    fn noise_power_matches_request() {
        // Law-of-large-numbers check over 10^6 samples.
        let spec = SceneSpec {
            duration_s: 0.25,
            sample_rate_hz: 4e6,
            noise_power: 0.02,
            emissions: vec![],
        };
        let s = compose_scene(&spec, 42).unwrap();
        assert_eq!(s.len(), 1_000_000);
        let p: f64 = s
            .samples()
            .iter()
            .map(|x| (x.re as f64).powi(2) + (x.im as f64).powi(2))
            .sum::<f64>()
            / s.len() as f64;
        assert!(
            (p - 0.02).abs() / 0.02 < 0.02,
            "empirical noise power {p} vs requested 0.02"
        );
    }

    #[test]
    fn same_seed_bit_identical_different_seed_not() {
        let spec = SceneSpec {
            duration_s: 0.01,
            sample_rate_hz: 4e6,
            noise_power: 1e-3,
            emissions: vec![Emission::once(frame_source("tx1", "a7"), 5_000, Complex::new(0.7, 0.1))],
        };
        let a = compose_scene(&spec, 9).unwrap();
        let b = compose_scene(&spec, 9).unwrap();
        assert_eq!(a, b);
        let c = compose_scene(&spec, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn superposition_of_noiseless_scenes() {
        // compose(A ∪ B) must equal compose(A) + compose(B) exactly when
        // noise is off: contributions accumulate in emission order with the
        // same f32 rounding either way.
        let a = Emission::repeated(frame_source("tx1", "a7"), 1_000, Complex::new(0.8, 0.0), 2, 3_000);
        let b = Emission::once(frame_source("tx2", "98"), 1_500, Complex::new(0.3, -0.4));
        let base = |emissions| SceneSpec {
            duration_s: 0.002,
            sample_rate_hz: 4e6,
            noise_power: 0.0,
            emissions,
        };
        let both = compose_scene(&base(vec![a.clone(), b.clone()]), 0).unwrap();
        let only_a = compose_scene(&base(vec![a]), 0).unwrap();
        let only_b = compose_scene(&base(vec![b]), 0).unwrap();
        for i in 0..both.len() {
            let sum = only_a.samples()[i] + only_b.samples()[i];
            assert_eq!(both.samples()[i], sum, "sample {i}");
        }
    }

    #[test]
    fn json_roundtrip() {
        let spec = SceneSpec {
            duration_s: 0.5,
            sample_rate_hz: 4e6,
            noise_power: 0.0049,
            emissions: vec![
                Emission::repeated(frame_source("tx1", "a7"), 200, Complex::new(0.7, 0.0), 3, 100_000),
                Emission::once(
                    SourceSpec::Tone {
                        label: Some("if1".into()),
                        length: 1_000,
                        freq_hz: 10_000.0,
                    },
                    0,
                    Complex::new(0.5, 0.0),
                ),
            ],
        };
        let back = SceneSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn missing_field_names_the_field() {
        let err = SceneSpec::from_json(r#"{"duration_s": 1.0, "sample_rate_hz": 4e6, "emissions": []}"#)
            .unwrap_err();
        assert!(err.to_string().contains("noise_power"), "{err}");
    }

    #[test]
    fn frame_rate_mismatch_rejected() {
        let spec = SceneSpec {
            duration_s: 0.01,
            sample_rate_hz: 8e6, // frame at spc=2 modulates at 4 MHz
            noise_power: 0.0,
            emissions: vec![Emission::once(frame_source("tx1", "a7"), 0, Complex::new(1.0, 0.0))],
        };
        assert!(matches!(compose_scene(&spec, 0), Err(Error::InvalidScene(_))));
    }
}
