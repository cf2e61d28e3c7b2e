//! BPSK packet generation and received-window synthesis.
//!
//! Packets are `PACKET_LEN` bits: the 16-bit CCSDS syncword followed by
//! uniform payload bits. Bits map to antipodal symbols `1 - 2b` with unit
//! energy, so the per-sample noise deviation for an SNR of `x` dB is
//! `10^(-x/20)`. Users are symbol-synchronous and transmit at equal power;
//! colliding packets simply add.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Syncword length in symbols.
pub const PREAMBLE_LEN: usize = 16;
/// Packet length in symbols, syncword included.
pub const PACKET_LEN: usize = 256;
pub const PAYLOAD_LEN: usize = PACKET_LEN - PREAMBLE_LEN;

pub const PREAMBLE_BITS: [u8; PREAMBLE_LEN] = [1, 1, 1, 0, 1, 0, 1, 1, 1, 0, 0, 1, 0, 0, 0, 0];

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("non-binary value {value} at position {index}")]
    NonBinary { index: usize, value: u8 },
    #[error("invalid scenario configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreambleSequence {
    pub bits: [u8; PREAMBLE_LEN],
    pub symbols: [f64; PREAMBLE_LEN],
}

pub fn make_preamble() -> PreambleSequence {
    let mut symbols = [0.0; PREAMBLE_LEN];
    for (s, &b) in symbols.iter_mut().zip(PREAMBLE_BITS.iter()) {
        *s = bit_to_symbol(b);
    }
    PreambleSequence {
        bits: PREAMBLE_BITS,
        symbols,
    }
}

/// The syncword as antipodal symbols.
pub fn preamble_symbols() -> [f64; PREAMBLE_LEN] {
    make_preamble().symbols
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketBits {
    bits: Vec<u8>,
}

impl PacketBits {
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn symbols(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| bit_to_symbol(b)).collect()
    }
}

/// Syncword followed by `PAYLOAD_LEN` i.i.d. uniform bits.
pub fn make_packet<R: Rng + ?Sized>(rng: &mut R) -> PacketBits {
    let mut bits = Vec::with_capacity(PACKET_LEN);
    bits.extend_from_slice(&PREAMBLE_BITS);
    bits.extend((0..PAYLOAD_LEN).map(|_| rng.random_range(0..2u8)));
    PacketBits { bits }
}

#[inline]
fn bit_to_symbol(b: u8) -> f64 {
    1.0 - 2.0 * f64::from(b)
}

pub fn bpsk_map(bits: &[u8]) -> Result<Vec<f64>, ChannelError> {
    bits.iter()
        .enumerate()
        .map(|(index, &value)| match value {
            0 | 1 => Ok(bit_to_symbol(value)),
            _ => Err(ChannelError::NonBinary { index, value }),
        })
        .collect()
}

/// Noise standard deviation giving `E_s / sigma^2 = snr_db` for unit-energy symbols.
pub fn awgn_sigma(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 20.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// One packet in a window of `2 * PACKET_LEN` symbols.
    Awgn,
    /// Three packets in a window of `4 * PACKET_LEN` symbols.
    Interference,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Awgn => "awgn",
            Scenario::Interference => "interference",
        }
    }

    pub fn window_len(self) -> usize {
        match self {
            Scenario::Awgn => 2 * PACKET_LEN,
            Scenario::Interference => 4 * PACKET_LEN,
        }
    }

    pub fn num_packets(self) -> usize {
        match self {
            Scenario::Awgn => 1,
            Scenario::Interference => 3,
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "awgn" => Ok(Scenario::Awgn),
            "interference" | "interf" => Ok(Scenario::Interference),
            other => Err(ChannelError::InvalidConfig(format!(
                "unknown scenario `{other}` (expected awgn or interference)"
            ))),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub snr_db: f64,
    pub window_len: usize,
    pub num_packets: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, snr_db: f64, seed: u64) -> Self {
        Self {
            scenario,
            snr_db,
            window_len: scenario.window_len(),
            num_packets: scenario.num_packets(),
            seed,
        }
    }

    pub fn awgn(snr_db: f64, seed: u64) -> Self {
        Self::new(Scenario::Awgn, snr_db, seed)
    }

    pub fn interference(snr_db: f64, seed: u64) -> Self {
        Self::new(Scenario::Interference, snr_db, seed)
    }

    /// Packets per packet duration.
    pub fn load(&self) -> f64 {
        (self.num_packets * PACKET_LEN) as f64 / self.window_len as f64
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !self.snr_db.is_finite() {
            return Err(ChannelError::InvalidConfig(format!(
                "snr_db must be finite, got {}",
                self.snr_db
            )));
        }
        let (len, packets) = (self.scenario.window_len(), self.scenario.num_packets());
        if self.window_len != len || self.num_packets != packets {
            return Err(ChannelError::InvalidConfig(format!(
                "{} scenario requires window_len {len} and {packets} packet(s), got {} and {}",
                self.scenario, self.window_len, self.num_packets
            )));
        }
        Ok(())
    }
}

/// Received samples plus the ground-truth packet starts.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolWindow {
    pub samples: Vec<f64>,
    pub placements: Vec<usize>,
    pub noise_sigma: f64,
}

impl SymbolWindow {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Superimposes `packets` at the given starts and adds noise of deviation `sigma`.
///
/// Panics if a packet does not fit entirely inside the window.
pub fn place_packets<R: Rng + ?Sized>(
    window_len: usize,
    packets: &[(usize, PacketBits)],
    sigma: f64,
    rng: &mut R,
) -> SymbolWindow {
    let mut samples = vec![0.0; window_len];
    for (start, packet) in packets {
        assert!(
            start + PACKET_LEN <= window_len,
            "packet at {start} overruns window of {window_len}"
        );
        for (s, &b) in samples[*start..start + PACKET_LEN]
            .iter_mut()
            .zip(packet.bits())
        {
            *s += bit_to_symbol(b);
        }
    }
    if sigma > 0.0 {
        for s in samples.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *s += sigma * z;
        }
    }
    SymbolWindow {
        samples,
        placements: packets.iter().map(|(s, _)| *s).collect(),
        noise_sigma: sigma,
    }
}

/// Draws a window for `cfg` with the noise level implied by its SNR.
pub fn synth_window<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> SymbolWindow {
    synth_window_with_sigma(cfg, awgn_sigma(cfg.snr_db), rng)
}

/// Same as [`synth_window`] with an explicit noise deviation.
pub fn synth_window_with_sigma<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    sigma: f64,
    rng: &mut R,
) -> SymbolWindow {
    let max_start = cfg.window_len - PACKET_LEN;
    let packets: Vec<(usize, PacketBits)> = (0..cfg.num_packets)
        .map(|_| {
            let start = rng.random_range(0..=max_start);
            (start, make_packet(rng))
        })
        .collect();
    place_packets(cfg.window_len, &packets, sigma, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from_seed, stream};
    use proptest::prelude::*;

    #[test]
    fn preamble_matches_syncword() {
        let p = make_preamble();
        assert_eq!(p.bits, [1, 1, 1, 0, 1, 0, 1, 1, 1, 0, 0, 1, 0, 0, 0, 0]);
        assert_eq!(p.symbols.len(), 16);
        assert_eq!(p.symbols[0], -1.0);
        for (b, s) in p.bits.iter().zip(p.symbols.iter()) {
            assert_eq!(*s, 1.0 - 2.0 * f64::from(*b));
        }
    }

    #[test]
    fn preamble_symbol_sum_from_bit_counts() {
        // Eight ones and eight zeros: 8 * (+1) + 8 * (-1).
        let ones = PREAMBLE_BITS.iter().filter(|&&b| b == 1).count();
        let zeros = PREAMBLE_LEN - ones;
        assert_eq!((ones, zeros), (8, 8));
        let expected = zeros as f64 - ones as f64;
        assert_eq!(make_preamble().symbols.iter().sum::<f64>(), expected);
        assert_eq!(expected, 0.0);
    }

    #[test]
    fn packet_starts_with_preamble_and_is_deterministic() {
        let a = make_packet(&mut rng_from_seed(11));
        let b = make_packet(&mut rng_from_seed(11));
        assert_eq!(a, b);
        assert_eq!(a.bits().len(), PACKET_LEN);
        assert_eq!(&a.bits()[..PREAMBLE_LEN], &PREAMBLE_BITS);
    }

    #[test]
    fn payload_bits_are_balanced() {
        let mut rng = rng_from_seed(5);
        let mut ones = 0usize;
        let mut total = 0usize;
        while total < 100_000 {
            let p = make_packet(&mut rng);
            ones += p.bits()[PREAMBLE_LEN..]
                .iter()
                .map(|&b| b as usize)
                .sum::<usize>();
            total += PAYLOAD_LEN;
        }
        let mean = ones as f64 / total as f64;
        assert!((mean - 0.5).abs() < 0.02, "payload mean {mean}");
    }

    #[test]
    fn bpsk_mapping() {
        assert_eq!(bpsk_map(&[0]).unwrap(), vec![1.0]);
        assert_eq!(bpsk_map(&[1]).unwrap(), vec![-1.0]);
        assert_eq!(
            bpsk_map(&PREAMBLE_BITS).unwrap(),
            make_preamble().symbols.to_vec()
        );
        assert_eq!(
            bpsk_map(&[0, 1, 2]),
            Err(ChannelError::NonBinary { index: 2, value: 2 })
        );
    }

    #[test]
    fn sigma_convention() {
        assert_eq!(awgn_sigma(0.0), 1.0);
        assert!((awgn_sigma(20.0) - 0.1).abs() < 1e-15);
        assert!((awgn_sigma(3.0) - 0.707_945_784_384_138).abs() < 1e-12);
    }

    #[test]
    fn window_shapes() {
        let mut rng = rng_from_seed(1);
        let w = synth_window(&ScenarioConfig::awgn(3.0, 0), &mut rng);
        assert_eq!(w.len(), 512);
        assert_eq!(w.placements.len(), 1);
        let w = synth_window(&ScenarioConfig::interference(3.0, 0), &mut rng);
        assert_eq!(w.len(), 1024);
        assert_eq!(w.placements.len(), 3);
        assert_eq!(ScenarioConfig::interference(3.0, 0).load(), 0.75);
    }

    #[test]
    fn config_validation() {
        assert!(ScenarioConfig::awgn(0.0, 1).validate().is_ok());
        let mut bad = ScenarioConfig::interference(0.0, 1);
        bad.window_len = 512;
        assert!(bad.validate().is_err());
        assert!(ScenarioConfig::awgn(f64::NAN, 1).validate().is_err());
        assert_eq!(
            "Interference".parse::<Scenario>().unwrap(),
            Scenario::Interference
        );
        assert!("fading".parse::<Scenario>().is_err());
    }

    #[test]
    fn noise_free_window_is_exact() {
        let mut rng = rng_from_seed(2);
        let packet = make_packet(&mut rng);
        let w = place_packets(512, &[(100, packet.clone())], 0.0, &mut rng);
        for (i, &s) in w.samples.iter().enumerate() {
            if (100..356).contains(&i) {
                assert_eq!(s, packet.symbols()[i - 100]);
            } else {
                assert_eq!(s, 0.0);
            }
        }
    }

    #[test]
    fn overlapping_packets_add() {
        let mut rng = rng_from_seed(3);
        let (a, b) = (make_packet(&mut rng), make_packet(&mut rng));
        let w = place_packets(1024, &[(0, a), (100, b)], 0.0, &mut rng);
        for &s in &w.samples[100..256] {
            assert!(s == -2.0 || s == 0.0 || s == 2.0, "{s}");
        }
    }

    #[test]
    fn noise_outside_packets_has_expected_moments() {
        let cfg = ScenarioConfig::awgn(3.0, 0);
        let sigma = awgn_sigma(cfg.snr_db);
        let mut noise = Vec::new();
        let mut idx = 0u64;
        while noise.len() < 100_000 {
            let w = synth_window(&cfg, &mut stream(9, idx));
            idx += 1;
            let s = w.placements[0];
            noise.extend(
                w.samples
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i < s || *i >= s + PACKET_LEN)
                    .map(|(_, v)| *v),
            );
        }
        let n = noise.len() as f64;
        let mean = noise.iter().sum::<f64>() / n;
        let var = noise.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn interference_load_is_exact() {
        let cfg = ScenarioConfig::interference(8.0, 0);
        let mut packet_symbols = 0usize;
        let mut window_symbols = 0usize;
        for i in 0..200 {
            let w = synth_window(&cfg, &mut stream(4, i));
            packet_symbols += w.placements.len() * PACKET_LEN;
            window_symbols += w.len();
        }
        assert_eq!(packet_symbols as f64 / window_symbols as f64, 0.75);
    }

    proptest! {
        #[test]
        fn windows_are_deterministic_and_contained(seed in any::<u64>(), interf in any::<bool>(), snr in -5.0f64..15.0) {
            let cfg = if interf { ScenarioConfig::interference(snr, seed) } else { ScenarioConfig::awgn(snr, seed) };
            let a = synth_window(&cfg, &mut rng_from_seed(seed));
            let b = synth_window(&cfg, &mut rng_from_seed(seed));
            prop_assert_eq!(&a, &b);
            for &s in &a.placements {
                prop_assert!(s + PACKET_LEN <= cfg.window_len);
            }
        }
    }
}
