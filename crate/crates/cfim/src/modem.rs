//! Per-block signal chain: bit mapping, spreading, despreading, energy
//! detection, equalization, and bit recovery.
//!
//! A block's bits split three ways (modulated | code index | subcarrier
//! index). The modulated part drives a Gray-coded PSK symbol, the index
//! parts pick one spreading code and one subcarrier; the receiver inverts
//! the chain with a square-law energy detector over the despread matrix.

use crate::codebook::Codebook;
use crate::config::{EnergyBudget, SystemConfig};
use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use std::f64::consts::TAU;

/// Gray-coded M-ary PSK constellation on the unit circle.
///
/// Bit patterns are assigned so that neighbouring constellation points
/// differ in exactly one bit: the point at angle `2*pi*m/M` carries the
/// pattern `m ^ (m >> 1)`.
#[derive(Debug, Clone)]
pub struct GrayPsk {
    order: usize,
    bits_per_symbol: u32,
    /// bit-pattern value -> constellation index
    value_to_index: Vec<usize>,
}

impl GrayPsk {
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 || order & (order - 1) != 0 {
            return Err(Error::invalid("M", format!("{order} is not a power of two >= 2")));
        }
        let mut value_to_index = vec![0; order];
        for m in 0..order {
            value_to_index[m ^ (m >> 1)] = m;
        }
        Ok(GrayPsk {
            order,
            bits_per_symbol: order.trailing_zeros(),
            value_to_index,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.bits_per_symbol
    }

    /// Unit-energy point for a bit-pattern value.
    pub fn modulate(&self, value: u32) -> Complex64 {
        let m = self.value_to_index[value as usize];
        Complex64::from_polar(1.0, TAU * m as f64 / self.order as f64)
    }

    /// Nearest point by angular distance; an exact tie resolves to the
    /// smaller constellation index. Returns the bit-pattern value.
    pub fn demodulate(&self, point: Complex64) -> u32 {
        let angle = point.im.atan2(point.re);
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for m in 0..self.order {
            let target = TAU * m as f64 / self.order as f64;
            let mut d = (angle - target).rem_euclid(TAU);
            if d > TAU / 2.0 {
                d = TAU - d;
            }
            if d < best_dist {
                best_dist = d;
                best = m;
            }
        }
        (best ^ (best >> 1)) as u32
    }
}

/// One block after bit mapping: symbol plus the selected index pair.
///
/// Indices are 0-based: `code_index` in `0..Nc`, `subcarrier_index` in `0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedBlock {
    pub symbol: Complex64,
    pub code_index: usize,
    pub subcarrier_index: usize,
    pub source_bits: Vec<u8>,
}

fn bits_to_value(bits: &[u8]) -> u32 {
    bits.iter().fold(0u32, |acc, &b| (acc << 1) | u32::from(b))
}

fn value_to_bits(value: u32, width: u32) -> Vec<u8> {
    (0..width).rev().map(|i| ((value >> i) & 1) as u8).collect()
}

/// Map one block's bits to (symbol, code index, subcarrier index).
///
/// The first p1 bits drive the Gray PSK symbol scaled to sqrt(E_s); the
/// next p2 bits, read big-endian, select the code; the last p3 bits select
/// the subcarrier.
pub fn map_block(
    bits: &[u8],
    config: &SystemConfig,
    energy: &EnergyBudget,
) -> Result<MappedBlock> {
    let budget = config.bit_budget();
    if bits.len() != budget.bits_per_block as usize {
        return Err(Error::framing(format!(
            "expected {} bits per block, got {}",
            budget.bits_per_block,
            bits.len()
        )));
    }
    if bits.iter().any(|&b| b > 1) {
        return Err(Error::framing("bits must be 0 or 1"));
    }
    let p1 = budget.modulated_bits as usize;
    let p2 = budget.code_bits as usize;
    let psk = GrayPsk::new(config.modulation_order)?;
    let symbol = psk.modulate(bits_to_value(&bits[..p1])) * energy.symbol_energy.sqrt();
    Ok(MappedBlock {
        symbol,
        code_index: bits_to_value(&bits[p1..p1 + p2]) as usize,
        subcarrier_index: bits_to_value(&bits[p1 + p2..]) as usize,
        source_bits: bits.to_vec(),
    })
}

/// Spread one block onto its N x L chip matrix: the active subcarrier row
/// carries symbol * code, every other row is exactly zero.
pub fn spread(block: &MappedBlock, codebook: &Codebook, subcarriers: usize) -> Array2<Complex64> {
    let l = codebook.spreading_factor();
    let mut chips = Array2::zeros((subcarriers, l));
    let code = codebook.code(block.code_index);
    for (slot, &chip) in code.iter().enumerate() {
        chips[(block.subcarrier_index, slot)] = block.symbol * chip;
    }
    chips
}

/// Despread an N x L received matrix against every code in the codebook:
/// `out[i][j] = sum_l Y[i][l] * conj(c_j[l])`.
pub fn despread(received: ArrayView2<'_, Complex64>, codebook: &Codebook) -> Result<Array2<Complex64>> {
    let l = codebook.spreading_factor();
    if received.ncols() != l {
        return Err(Error::framing(format!(
            "received matrix has {} chips per row, codebook expects {}",
            received.ncols(),
            l
        )));
    }
    let n = received.nrows();
    let nc = codebook.num_codes();
    let mut out = Array2::zeros((n, nc));
    for i in 0..n {
        for j in 0..nc {
            let mut acc = Complex64::new(0.0, 0.0);
            for (slot, &chip) in codebook.code(j).iter().enumerate() {
                // real chips: conjugation is a no-op, kept for the general form
                acc += received[(i, slot)] * chip;
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Square-law energy statistics over (subcarrier, code) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionMatrix {
    pub zeta: Array2<f64>,
}

/// Square-law detection: argmax of squared magnitudes over the despread
/// matrix. Ties break toward the smallest subcarrier index, then the
/// smallest code index.
pub fn sled_detect(despread: &Array2<Complex64>) -> (usize, usize, DecisionMatrix) {
    let zeta = despread.mapv(|x| x.norm_sqr());
    let mut best = (0usize, 0usize);
    let mut best_val = f64::NEG_INFINITY;
    for i in 0..zeta.nrows() {
        for j in 0..zeta.ncols() {
            if zeta[(i, j)] > best_val {
                best_val = zeta[(i, j)];
                best = (i, j);
            }
        }
    }
    (best.0, best.1, DecisionMatrix { zeta })
}

/// A whole transmission: one N x L chip matrix per block.
///
/// Per block, exactly one subcarrier row is nonzero and carries
/// symbol * code; the frame after the channel shares the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadFrame {
    pub blocks: Vec<Array2<Complex64>>,
}

/// A frame observed after fading and noise; same layout as [`SpreadFrame`].
pub type ReceivedFrame = SpreadFrame;

impl SpreadFrame {
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn subcarriers(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.nrows())
    }

    pub fn chip_len(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.ncols())
    }

    pub fn same_shape(&self, other: &SpreadFrame) -> bool {
        self.num_blocks() == other.num_blocks()
            && self.subcarriers() == other.subcarriers()
            && self.chip_len() == other.chip_len()
    }
}

/// Map and spread a full K-block frame.
pub fn spread_frame(
    blocks: &[MappedBlock],
    codebook: &Codebook,
    config: &SystemConfig,
) -> SpreadFrame {
    SpreadFrame {
        blocks: blocks
            .iter()
            .map(|b| spread(b, codebook, config.subcarriers))
            .collect(),
    }
}

/// Recover a block's bits from the detected cell: equalize by the channel
/// coefficient of the selected subcarrier, demodulate, and re-encode the
/// detected indices. Output ordering matches [`map_block`]: (p1 | p2 | p3).
pub fn demap_block(
    despread: &Array2<Complex64>,
    subcarrier_index: usize,
    code_index: usize,
    channel_gain: Complex64,
    config: &SystemConfig,
) -> Result<Vec<u8>> {
    if channel_gain.norm_sqr() == 0.0 {
        return Err(Error::DegenerateChannel);
    }
    let budget = config.bit_budget();
    let psk = GrayPsk::new(config.modulation_order)?;
    let equalized = despread[(subcarrier_index, code_index)] / channel_gain;
    let value = psk.demodulate(equalized);
    let mut bits = value_to_bits(value, budget.modulated_bits);
    bits.extend(value_to_bits(code_index as u32, budget.code_bits));
    bits.extend(value_to_bits(subcarrier_index as u32, budget.subcarrier_bits));
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::calibrate_energy;
    use proptest::prelude::*;

    fn cfg(m: usize, n: usize, nc: usize, l: usize) -> SystemConfig {
        SystemConfig::single_user(1, n, nc, m, l).unwrap()
    }

    fn energy(config: &SystemConfig, db: f64) -> EnergyBudget {
        calibrate_energy(&config.bit_budget(), db)
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        // oracle: enumerate the table and check the Gray property
        for order in [2usize, 4, 8, 16] {
            let psk = GrayPsk::new(order).unwrap();
            for m in 0..order {
                let a = (m ^ (m >> 1)) as u32;
                let b = {
                    let n = (m + 1) % order;
                    (n ^ (n >> 1)) as u32
                };
                assert_eq!((a ^ b).count_ones(), 1, "order {order} position {m}");
            }
            // round trip through the constellation
            for v in 0..order as u32 {
                assert_eq!(psk.demodulate(psk.modulate(v)), v);
            }
        }
    }

    #[test]
    fn qpsk_value_three_sits_at_index_two() {
        let psk = GrayPsk::new(4).unwrap();
        let p = psk.modulate(0b11);
        // index 2 of 4: angle pi
        assert!((p.re + 1.0).abs() < 1e-12 && p.im.abs() < 1e-12);
    }

    #[test]
    fn demod_tie_breaks_to_smaller_index() {
        let psk = GrayPsk::new(4).unwrap();
        // exactly between indices 0 and 1: angle pi/4
        let mid = Complex64::from_polar(1.0, TAU / 8.0);
        assert_eq!(psk.demodulate(mid), 0);
        // zero input decodes deterministically to index 0
        assert_eq!(psk.demodulate(Complex64::new(0.0, 0.0)), 0);
    }

    #[test]
    fn worked_index_selection() {
        // code bits [1,0] select the third code, subcarrier bits [0,1] the second
        let config = cfg(2, 4, 4, 8);
        let e = energy(&config, 0.0);
        let block = map_block(&[0, 1, 0, 0, 1], &config, &e).unwrap();
        assert_eq!(block.code_index, 2);
        assert_eq!(block.subcarrier_index, 1);
    }

    #[test]
    fn all_zero_bits_select_first_indices() {
        let config = cfg(2, 4, 2, 8);
        let e = energy(&config, 0.0);
        let block = map_block(&[0, 0, 0, 0], &config, &e).unwrap();
        assert_eq!(block.code_index, 0);
        assert_eq!(block.subcarrier_index, 0);
        let expect = GrayPsk::new(2).unwrap().modulate(0) * e.symbol_energy.sqrt();
        assert!((block.symbol - expect).norm() < 1e-12);
    }

    #[test]
    fn qpsk_symbol_scaling() {
        let config = cfg(4, 2, 2, 8);
        let e = energy(&config, 0.0);
        let block = map_block(&[1, 1, 0, 0], &config, &e).unwrap();
        // Gray value 11 -> index 2 -> angle pi, scaled to sqrt(Es)
        let want = Complex64::new(-e.symbol_energy.sqrt(), 0.0);
        assert!((block.symbol - want).norm() < 1e-12);
        assert!((block.symbol.norm_sqr() - e.symbol_energy).abs() < 1e-12);
    }

    #[test]
    fn map_rejects_wrong_bit_count() {
        let config = cfg(2, 4, 2, 8);
        let e = energy(&config, 0.0);
        assert!(matches!(
            map_block(&[0, 0, 0], &config, &e),
            Err(Error::Framing(_))
        ));
    }

    #[test]
    fn spread_all_positive_code() {
        let config = cfg(2, 4, 2, 4);
        let e = energy(&config, 0.0);
        let book = Codebook::single_user(4, 2).unwrap();
        let block = map_block(&[0, 0, 0, 0], &config, &e).unwrap();
        let chips = spread(&block, &book, 4);
        let amp = e.symbol_energy.sqrt() / 2.0;
        for slot in 0..4 {
            assert!((chips[(0, slot)] - Complex64::new(amp, 0.0)).norm() < 1e-12);
        }
        for row in 1..4 {
            for slot in 0..4 {
                assert_eq!(chips[(row, slot)], Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn spread_second_code_two_chips() {
        let config = cfg(2, 2, 2, 2);
        let e = energy(&config, 0.0);
        let book = Codebook::single_user(2, 2).unwrap();
        // bits: modulated 1 -> -sqrt(Es); code bit 1 -> second code; subcarrier 0
        let block = map_block(&[1, 1, 0], &config, &e).unwrap();
        let chips = spread(&block, &book, 2);
        let amp = (e.symbol_energy / 2.0).sqrt();
        assert!((chips[(0, 0)] - Complex64::new(-amp, 0.0)).norm() < 1e-12);
        assert!((chips[(0, 1)] - Complex64::new(amp, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn frame_energy_equals_symbol_energy() {
        let config = cfg(4, 4, 4, 16);
        let e = energy(&config, 7.0);
        let book = Codebook::single_user(16, 4).unwrap();
        for bits_val in 0..(1u32 << 6) {
            let bits = value_to_bits(bits_val, 6);
            let block = map_block(&bits, &config, &e).unwrap();
            let chips = spread(&block, &book, 4);
            let total: f64 = chips.iter().map(|c| c.norm_sqr()).sum();
            assert!((total - e.symbol_energy).abs() < 1e-12);
        }
    }

    #[test]
    fn despread_inverts_noiseless_spread() {
        let config = cfg(2, 4, 2, 8);
        let e = energy(&config, 0.0);
        let book = Codebook::single_user(8, 2).unwrap();
        let block = map_block(&[1, 1, 0, 1], &config, &e).unwrap();
        let chips = spread(&block, &book, 4);
        let xhat = despread(chips.view(), &book).unwrap();
        for i in 0..4 {
            for j in 0..2 {
                let want = if (i, j) == (block.subcarrier_index, block.code_index) {
                    block.symbol
                } else {
                    Complex64::new(0.0, 0.0)
                };
                assert!((xhat[(i, j)] - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn despread_zero_is_zero() {
        let book = Codebook::single_user(8, 2).unwrap();
        let zeros = Array2::zeros((4, 8));
        let xhat = despread(zeros.view(), &book).unwrap();
        assert!(xhat.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn despread_carries_channel_rotation() {
        // oracle: direct double-loop sum
        let config = cfg(2, 4, 2, 8);
        let e = energy(&config, 0.0);
        let book = Codebook::single_user(8, 2).unwrap();
        let block = map_block(&[0, 1, 1, 0], &config, &e).unwrap();
        let h = Complex64::new(0.5, 0.5);
        let chips = spread(&block, &book, 4).mapv(|c| c * h);
        let xhat = despread(chips.view(), &book).unwrap();
        let mut oracle = Complex64::new(0.0, 0.0);
        for (slot, &chip) in book.code(block.code_index).iter().enumerate() {
            oracle += chips[(block.subcarrier_index, slot)] * chip;
        }
        let got = xhat[(block.subcarrier_index, block.code_index)];
        assert!((got - oracle).norm() < 1e-12);
        assert!((got - block.symbol * h).norm() < 1e-12);
    }

    #[test]
    fn despread_rejects_dimension_mismatch() {
        let book = Codebook::single_user(8, 2).unwrap();
        let wrong = Array2::zeros((4, 4));
        assert!(matches!(
            despread(wrong.view(), &book),
            Err(Error::Framing(_))
        ));
    }

    #[test]
    fn sled_finds_single_nonzero() {
        let mut xhat = Array2::zeros((4, 2));
        xhat[(1, 0)] = Complex64::new(0.0, 2.0);
        let (i, j, zeta) = sled_detect(&xhat);
        assert_eq!((i, j), (1, 0));
        assert!((zeta.zeta[(1, 0)] - 4.0).abs() < 1e-12);
        assert!(zeta.zeta.iter().all(|&z| z >= 0.0));
    }

    #[test]
    fn sled_tie_breaks_row_major() {
        let xhat = Array2::from_elem((3, 3), Complex64::new(1.0, -1.0));
        let (i, j, _) = sled_detect(&xhat);
        assert_eq!((i, j), (0, 0));
    }

    #[test]
    fn sled_matches_exhaustive_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let xhat = Array2::from_shape_fn((4, 2), |_| {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let (i, j, _) = sled_detect(&xhat);
            let mut best = (0, 0);
            let mut best_v = f64::NEG_INFINITY;
            for a in 0..4 {
                for b in 0..2 {
                    if xhat[(a, b)].norm_sqr() > best_v {
                        best_v = xhat[(a, b)].norm_sqr();
                        best = (a, b);
                    }
                }
            }
            assert_eq!((i, j), best);
        }
    }

    fn round_trip(config: &SystemConfig, db: f64, h: Complex64) {
        let e = energy(config, db);
        let book = Codebook::single_user(config.spreading_factor, config.codes).unwrap();
        let p = config.bit_budget().bits_per_block;
        for value in 0..(1u64 << p) {
            let bits = value_to_bits(value as u32, p);
            let block = map_block(&bits, config, &e).unwrap();
            let chips = spread(&block, &book, config.subcarriers).mapv(|c| c * h);
            let xhat = despread(chips.view(), &book).unwrap();
            let (i, j, _) = sled_detect(&xhat);
            let got = demap_block(&xhat, i, j, h, config).unwrap();
            assert_eq!(got, bits, "config {config:?} value {value}");
        }
    }

    #[test]
    fn noiseless_round_trip_is_exact() {
        round_trip(&cfg(2, 4, 2, 32), 0.0, Complex64::new(1.0, 0.0));
        round_trip(&cfg(4, 2, 2, 8), 6.0, Complex64::new(1.0, 0.0));
        round_trip(&cfg(2, 1, 1, 4), 0.0, Complex64::new(1.0, 0.0));
        round_trip(&cfg(8, 4, 8, 16), 3.0, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn round_trip_survives_channel_rotation() {
        let h = Complex64::from_polar(1.0, std::f64::consts::PI / 3.0);
        round_trip(&cfg(2, 4, 2, 32), 0.0, h);
        round_trip(&cfg(4, 4, 4, 16), 0.0, Complex64::new(0.3, -0.8));
    }

    #[test]
    fn wrong_index_demaps_to_different_mapped_bits() {
        // forcing a wrong cell reads a zero-signal entry; the re-encoded
        // index bits must differ from what was sent
        let config = cfg(2, 4, 2, 8);
        let e = energy(&config, 0.0);
        let book = Codebook::single_user(8, 2).unwrap();
        let bits = [1, 0, 1, 1];
        let block = map_block(&bits, &config, &e).unwrap();
        let chips = spread(&block, &book, 4);
        let xhat = despread(chips.view(), &book).unwrap();
        let wrong_i = (block.subcarrier_index + 1) % 4;
        let got = demap_block(&xhat, wrong_i, block.code_index, Complex64::new(1.0, 0.0), &config).unwrap();
        assert_ne!(&got[2..], &bits[2..]);
        // the forced cell carries no signal at all
        assert_eq!(xhat[(wrong_i, block.code_index)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn demap_rejects_zero_channel() {
        let config = cfg(2, 4, 2, 8);
        let xhat = Array2::zeros((4, 2));
        assert!(matches!(
            demap_block(&xhat, 0, 0, Complex64::new(0.0, 0.0), &config),
            Err(Error::DegenerateChannel)
        ));
    }

    proptest! {
        // despread(a*Y1 + b*Y2) = a*despread(Y1) + b*despread(Y2)
        #[test]
        fn despreader_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let book = Codebook::single_user(8, 4).unwrap();
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                Array2::from_shape_fn((4, 8), |_| {
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                })
            };
            let y1 = mk(&mut rng);
            let y2 = mk(&mut rng);
            let combined = &y1 * Complex64::new(a, 0.0) + &y2 * Complex64::new(b, 0.0);
            let lhs = despread(combined.view(), &book).unwrap();
            let rhs = despread(y1.view(), &book).unwrap() * Complex64::new(a, 0.0)
                + despread(y2.view(), &book).unwrap() * Complex64::new(b, 0.0);
            for (x, y) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((x - y).norm() < 1e-10);
            }
        }

        // random bits round-trip noiselessly for random valid shapes
        #[test]
        fn random_shape_round_trip(e1 in 1u32..3, e2 in 0u32..3, e3 in 0u32..3, value in 0u32..256) {
            let (m, nc, n) = (1usize << e1, 1usize << e2, 1usize << e3);
            let l = 16usize;
            let config = cfg(m, n, nc, l);
            let e = energy(&config, 10.0);
            let book = Codebook::single_user(l, nc).unwrap();
            let p = config.bit_budget().bits_per_block;
            let bits = value_to_bits(value & ((1 << p) - 1), p);
            let block = map_block(&bits, &config, &e).unwrap();
            let chips = spread(&block, &book, n);
            let xhat = despread(chips.view(), &book).unwrap();
            let (i, j, _) = sled_detect(&xhat);
            let got = demap_block(&xhat, i, j, Complex64::new(1.0, 0.0), &config).unwrap();
            prop_assert_eq!(got, bits);
        }
    }
}
