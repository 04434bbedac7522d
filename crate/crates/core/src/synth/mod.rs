//! Baseband signal synthesis: 802.15.4-style O-QPSK frames, GMSK interferer
//! bursts, continuous-tone interferers, AWGN, and declarative scene
//! composition for building detection experiments without radio hardware.

mod gmsk;
mod oqpsk;
mod scene;

pub use gmsk::{gen_gmsk_burst, DEFAULT_GMSK_BT, GMSK_BIT_RATE_HZ};
pub use oqpsk::{modulate_oqpsk, symbol_chips, CHIP_RATE_HZ};
pub use scene::{compose_scene, Emission, SceneSpec, SourceSpec};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::iq::SampleStream;

/// Default continuous-burst tone offset: 10 kHz at the toolkit's default
/// 4 MHz sampling, i.e. deliberately not DC.
pub const DEFAULT_TONE_CYCLES_PER_SAMPLE: f64 = 0.0025;

/// Default sample rate used where no scene context pins one (4 MHz, i.e.
/// 2 Mchip/s O-QPSK at two samples per chip).
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 4_000_000.0;

/// One over-the-air frame: preamble, one-byte start frame delimiter, length
/// byte, payload (which carries any address bytes).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSpec {
    /// Number of all-zero preamble bytes.
    pub preamble_bytes: usize,
    pub sfd: u8,
    pub payload: Vec<u8>,
    /// Transmitter id; carried through scene schedules for bookkeeping.
    pub label: String,
}

impl FrameSpec {
    pub fn new(sfd: u8, payload: Vec<u8>, label: impl Into<String>) -> Self {
        FrameSpec {
            preamble_bytes: 4,
            sfd,
            payload,
            label: label.into(),
        }
    }
}

/// Assemble the frame byte sequence: preamble, SFD, length byte, payload.
pub fn build_frame(spec: &FrameSpec) -> Result<Vec<u8>> {
    if spec.payload.len() > 127 {
        return Err(Error::InvalidFrame(format!(
            "payload of {} bytes overflows the length byte (max 127)",
            spec.payload.len()
        )));
    }
    let mut frame = Vec::with_capacity(spec.preamble_bytes + 2 + spec.payload.len());
    frame.resize(spec.preamble_bytes, 0x00);
    frame.push(spec.sfd);
    frame.push(spec.payload.len() as u8);
    frame.extend_from_slice(&spec.payload);
    Ok(frame)
}

/// Unit-amplitude complex tone at the given normalized frequency.
pub fn gen_tone(len: usize, cycles_per_sample: f64, sample_rate_hz: f64) -> SampleStream {
    let w = 2.0 * std::f64::consts::PI * cycles_per_sample;
    let iq: Vec<Complex<f32>> = (0..len)
        .map(|n| {
            let phase = w * n as f64;
            Complex::new(phase.cos() as f32, phase.sin() as f32)
        })
        .collect();
    SampleStream::new(iq, sample_rate_hz).expect("tone is finite")
}

/// Constant-envelope continuous burst, as transmitted by a jamming-style
/// interferer: a unit tone at a small offset from DC.
pub fn gen_continuous_burst(len: usize) -> SampleStream {
    gen_tone(len, DEFAULT_TONE_CYCLES_PER_SAMPLE, DEFAULT_SAMPLE_RATE_HZ)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_layout_empty_payload() {
        let f = FrameSpec::new(0xA7, vec![], "tx1");
        assert_eq!(
            build_frame(&f).unwrap(),
            vec![0x00, 0x00, 0x00, 0x00, 0xA7, 0x00]
        );
    }

    #[test]
    fn frame_layout_with_payload() {
        let f = FrameSpec::new(0x98, vec![0xAA, 0xAA], "tx2");
        assert_eq!(
            build_frame(&f).unwrap(),
            vec![0x00, 0x00, 0x00, 0x00, 0x98, 0x02, 0xAA, 0xAA]
        );
    }

    #[test]
    fn oversized_payload_rejected() {
        let f = FrameSpec::new(0xA7, vec![0u8; 128], "tx1");
        assert!(build_frame(&f).is_err());
        let f = FrameSpec::new(0xA7, vec![0u8; 127], "tx1");
        assert!(build_frame(&f).is_ok());
    }

    #[test]
    fn tone_is_unit_envelope() {
        let s = gen_continuous_burst(4096);
        assert_eq!(s.len(), 4096);
        for x in s.samples() {
            let mag = (x.re as f64).hypot(x.im as f64);
            assert!((mag - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn tone_mean_power_is_unity() {
        let s = gen_continuous_burst(100_000);
        let p: f64 = s
            .samples()
            .iter()
            .map(|x| (x.re as f64).powi(2) + (x.im as f64).powi(2))
            .sum::<f64>()
            / s.len() as f64;
        // Unit by definition; the floor here is float32 sample quantization.
        assert!((p - 1.0).abs() < 1e-6, "mean power {p}");
    }

    #[test]
    fn zero_length_tone() {
        assert!(gen_continuous_burst(0).is_empty());
    }
}
