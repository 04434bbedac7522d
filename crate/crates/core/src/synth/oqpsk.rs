//! 802.15.4 2450 MHz band O-QPSK baseband modulator.
//!
//! Each byte is split into two 4-bit symbols (low nibble first), each symbol
//! maps to a 32-chip pseudo-noise sequence (IEEE 802.15.4-2011 Table 73),
//! even-indexed chips go to the I rail and odd-indexed chips to the Q rail
//! with a half-pulse (one chip period) offset, and every chip is shaped by a
//! half-sine pulse spanning two chip periods. The combined I/Q envelope is
//! constant in the signal interior.

use num_complex::Complex;

use crate::iq::{IqSample, SampleStream};

/// 802.15.4 2450 MHz chip rate. One chip period is `samples_per_chip` output
/// samples, so the stream rate is `CHIP_RATE_HZ * samples_per_chip`.
pub const CHIP_RATE_HZ: f64 = 2_000_000.0;

/// Symbol-to-chip mapping, IEEE 802.15.4-2011 Table 73 (2450 MHz band).
/// Bit k (LSB first) of entry `s` is chip c_k of data symbol `s`.
const CHIP_SEQUENCES: [u32; 16] = [
    0x744A_C39B,
    0x44AC_39B7,
    0x4AC3_9B74,
    0xAC39_B744,
    0xC39B_744A,
    0x39B7_44AC,
    0x9B74_4AC3,
    0xB744_AC39,
    0xDEE0_6931,
    0xEE06_931D,
    0xE069_31DE,
    0x0693_1DEE,
    0x6931_DEE0,
    0x931D_EE06,
    0x31DE_E069,
    0x1DEE_0693,
];

/// Antipodal chip values (+1/-1) for one data symbol, transmit order.
pub fn symbol_chips(symbol: u8) -> [f32; 32] {
    assert!(symbol < 16, "data symbol out of range: {symbol}");
    let seq = CHIP_SEQUENCES[symbol as usize];
    let mut chips = [0.0f32; 32];
    for (k, c) in chips.iter_mut().enumerate() {
        *c = if (seq >> k) & 1 == 1 { 1.0 } else { -1.0 };
    }
    chips
}

/// Modulate bytes to half-sine-shaped O-QPSK baseband.
///
/// Output length is exactly `bytes.len() * 64 * samples_per_chip`; the Q
/// rail's trailing half pulse is clipped at the stream end. Peak amplitude
/// is 1.0 and the combined envelope is 1.0 everywhere after the first
/// `samples_per_chip` samples.
pub fn modulate_oqpsk(bytes: &[u8], samples_per_chip: usize) -> SampleStream {
    assert!(samples_per_chip >= 1, "samples_per_chip must be >= 1");
    let spc = samples_per_chip;
    let rate = CHIP_RATE_HZ * spc as f64;

    let n_chips = bytes.len() * 64;
    let len = n_chips * spc;
    let mut iq = vec![Complex::new(0.0f32, 0.0f32); len];

    // Half-sine pulse sampled over two chip periods.
    let pulse: Vec<f32> = (0..2 * spc)
        .map(|m| (std::f64::consts::PI * m as f64 / (2 * spc) as f64).sin() as f32)
        .collect();

    let mut chip_index = 0usize;
    for &b in bytes {
        for sym in [b & 0x0F, b >> 4] {
            for chip in symbol_chips(sym) {
                let pair = chip_index / 2;
                let on_q = chip_index % 2 == 1;
                let start = pair * 2 * spc + if on_q { spc } else { 0 };
                for (m, &p) in pulse.iter().enumerate() {
                    let t = start + m;
                    if t >= len {
                        break;
                    }
                    if on_q {
                        iq[t].im = chip * p;
                    } else {
                        iq[t].re = chip * p;
                    }
                }
                chip_index += 1;
            }
        }
    }

    SampleStream::new(iq, rate).expect("modulator output is finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn chip_table_structure() {
        // Each of symbols 1..8 is the previous sequence cyclically shifted by
        // four chip positions; symbols 8..16 repeat 0..8 with odd-indexed
        // (Q-rail) chips inverted.
        for s in 0..7 {
            assert_eq!(
                CHIP_SEQUENCES[s + 1],
                CHIP_SEQUENCES[s].rotate_left(4),
                "symbol {} vs {}",
                s + 1,
                s
            );
        }
        for s in 0..8 {
            assert_eq!(CHIP_SEQUENCES[s + 8], CHIP_SEQUENCES[s] ^ 0xAAAA_AAAA);
        }
        // Spot-check symbol 0 against the spelled-out standard sequence.
        let expected = "11011001110000110101001000101110";
        for (k, ch) in expected.chars().enumerate() {
            let bit = (CHIP_SEQUENCES[0] >> k) & 1;
            assert_eq!(bit, if ch == '1' { 1 } else { 0 }, "chip {k}");
        }
    }

    #[test]
    fn one_byte_at_two_samples_per_chip_is_128_samples() {
        let s = modulate_oqpsk(&[0xA7], 2);
        assert_eq!(s.len(), 128);
        assert_eq!(s.sample_rate_hz(), 4e6);
    }

    #[test]
    fn empty_input_empty_stream() {
        assert!(modulate_oqpsk(&[], 2).is_empty());
    }

    #[test]
    fn length_scales_with_bytes_and_oversampling() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let n = rng.random_range(0..9usize);
            let spc = rng.random_range(1..5usize);
            let bytes: Vec<u8> = (0..n).map(|_| rng.random()).collect();
            assert_eq!(modulate_oqpsk(&bytes, spc).len(), n * 64 * spc);
        }
    }

    #[test]
    fn constant_envelope_in_interior() {
        // Numeric check of the half-sine O-QPSK definition: with the Q rail
        // offset by half a pulse, |I|^2 + |Q|^2 = 1 at every interior sample.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for spc in [1usize, 2, 3, 4] {
            let bytes: Vec<u8> = (0..32).map(|_| rng.random()).collect();
            let s = modulate_oqpsk(&bytes, spc);
            for (i, x) in s.samples().iter().enumerate().skip(spc) {
                let mag = (x.re as f64).hypot(x.im as f64);
                assert!(
                    (mag - 1.0).abs() < 1e-5,
                    "sample {i} at spc {spc}: |x| = {mag}"
                );
            }
        }
    }

    #[test]
    fn peak_amplitude_is_one() {
        let s = modulate_oqpsk(&[0x5A, 0xC3], 2);
        let peak = s
            .samples()
            .iter()
            .map(|x| x.re.abs().max(x.im.abs()))
            .fold(0.0f32, f32::max);
        assert_eq!(peak, 1.0);
    }

    #[test]
    fn chips_recoverable_at_pulse_centers() {
        // At pulse phase spc the half-sine is exactly 1, so the transmitted
        // chip values can be read back off the rails.
        let bytes = [0x31u8, 0x9E];
        let spc = 2;
        let s = modulate_oqpsk(&bytes, spc);
        let mut expected = Vec::new();
        for &b in &bytes {
            for sym in [b & 0x0F, b >> 4] {
                expected.extend_from_slice(&symbol_chips(sym));
            }
        }
        // Last odd chip's center falls past the clipped stream end.
        for (ci, &chip) in expected.iter().enumerate().take(expected.len() - 1) {
            let pair = ci / 2;
            let center = pair * 2 * spc + if ci % 2 == 1 { spc } else { 0 } + spc;
            let v = if ci % 2 == 1 {
                s.samples()[center].im
            } else {
                s.samples()[center].re
            };
            assert_eq!(v, chip, "chip {ci}");
        }
    }
}
