//! GMSK baseband burst generator.
//!
//! Gaussian-filtered minimum-shift keying with modulation index 0.5: each bit
//! advances the carrier phase by +-pi/2, with the frequency pulse smoothed by
//! a Gaussian filter of the given bandwidth-time product. The output is pure
//! phase modulation, so the envelope is exactly constant.

use num_complex::Complex;

use crate::iq::SampleStream;

/// Default bandwidth-time product for interferer bursts.
pub const DEFAULT_GMSK_BT: f64 = 0.3;

/// Bit-rate convention for the returned stream's sample rate:
/// `sample_rate_hz = samples_per_bit * GMSK_BIT_RATE_HZ`.
pub const GMSK_BIT_RATE_HZ: f64 = 1_000_000.0;

/// Generate a GMSK burst from a bit sequence.
///
/// The burst includes the Gaussian filter's leading and trailing transients,
/// so the output is slightly longer than `bits.len() * samples_per_bit`.
pub fn gen_gmsk_burst(bits: &[bool], bt: f64, samples_per_bit: usize) -> SampleStream {
    assert!(bt > 0.0 && bt <= 1.0, "bt must be in (0, 1], got {bt}");
    assert!(samples_per_bit >= 1, "samples_per_bit must be >= 1");
    let spb = samples_per_bit;
    let rate = GMSK_BIT_RATE_HZ * spb as f64;
    if bits.is_empty() {
        return SampleStream::new(vec![], rate).expect("empty stream");
    }

    // Discrete Gaussian smoothing kernel, truncated at four standard
    // deviations and normalized to unit sum so the per-bit phase advance
    // stays exactly pi/2.
    let sigma = (2.0f64.ln()).sqrt() / (2.0 * std::f64::consts::PI * bt) * spb as f64;
    let half = (4.0 * sigma).ceil().max(1.0) as usize;
    let mut kernel: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let t = i as f64 - half as f64;
            (-t * t / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let ksum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= ksum;
    }

    // NRZ frequency waveform: bits upsampled and smoothed by the kernel.
    let nrz: Vec<f64> = bits
        .iter()
        .flat_map(|&b| std::iter::repeat(if b { 1.0 } else { -1.0 }).take(spb))
        .collect();
    let out_len = nrz.len() + kernel.len() - 1;
    let mut freq = vec![0.0f64; out_len];
    for (i, &v) in nrz.iter().enumerate() {
        for (j, &k) in kernel.iter().enumerate() {
            freq[i + j] += v * k;
        }
    }

    // Integrate phase; pi/2 per bit period split across its samples.
    let step = std::f64::consts::FRAC_PI_2 / spb as f64;
    let mut phase = 0.0f64;
    let mut iq = Vec::with_capacity(out_len);
    for f in freq {
        phase += step * f;
        iq.push(Complex::new(phase.cos() as f32, phase.sin() as f32));
    }
    SampleStream::new(iq, rate).expect("gmsk output is finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_envelope() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let bits: Vec<bool> = (0..256).map(|_| rng.random()).collect();
        let s = gen_gmsk_burst(&bits, DEFAULT_GMSK_BT, 4);
        for (i, x) in s.samples().iter().enumerate() {
            let mag = (x.re as f64).hypot(x.im as f64);
            assert!((mag - 1.0).abs() < 1e-6, "sample {i}: |x| = {mag}");
        }
    }

    #[test]
    fn alternating_bits_alternate_instantaneous_frequency() {
        // Phase-difference oracle: at each bit center the per-sample phase
        // increment must carry the bit's sign.
        let bits: Vec<bool> = (0..64).map(|k| k % 2 == 0).collect();
        let spb = 8;
        let s = gen_gmsk_burst(&bits, 0.3, spb);
        let samples = s.samples();
        let sigma = (2.0f64.ln()).sqrt() / (2.0 * std::f64::consts::PI * 0.3) * spb as f64;
        let delay = (4.0 * sigma).ceil() as usize;
        for (k, &bit) in bits.iter().enumerate().skip(2).take(bits.len() - 4) {
            let c = delay + k * spb + spb / 2;
            let d = samples[c + 1] * samples[c].conj();
            let dphi = (d.im as f64).atan2(d.re as f64);
            assert_eq!(dphi > 0.0, bit, "bit {k}: phase step {dphi}");
        }
    }

    #[test]
    fn empty_bits_empty_stream() {
        assert!(gen_gmsk_burst(&[], 0.3, 4).is_empty());
    }

    #[test]
    fn isolated_bit_advances_phase_by_quarter_turn() {
        // A run of identical bits must advance the phase by pi/2 per bit in
        // steady state.
        let bits = vec![true; 20];
        let spb = 4;
        let s = gen_gmsk_burst(&bits, 0.3, spb);
        let samples = s.samples();
        let mid = samples.len() / 2;
        let d = samples[mid + spb] * samples[mid].conj();
        let dphi = (d.im as f64).atan2(d.re as f64);
        assert!(
            (dphi - std::f64::consts::FRAC_PI_2).abs() < 1e-6,
            "phase per bit: {dphi}"
        );
    }
}
