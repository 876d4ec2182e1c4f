//! Time-domain synthesis and peak-to-average power measurement.
//!
//! Block k's subcarrier i lands on FFT bin N(k-1) + (i-1); each chip index
//! is one OFDM symbol of N_T samples, so a whole transmission spans L
//! successive inverse-FFT slots. PAPR is measured per slot on the Nyquist
//! grid (an oversampling factor is available for interpolated peaks).

use crate::codebook::hadamard_matrix;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::seeding;
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::str::FromStr;
use std::sync::Arc;

/// Unitary inverse transform of one slot's frequency bins.
///
/// Parseval holds: the time samples carry exactly the bins' energy.
pub fn synthesize_chip_slot(bins: &[Complex64]) -> Vec<Complex64> {
    let n = bins.len();
    let fft = FftPlanner::new().plan_fft_inverse(n);
    let mut buf = bins.to_vec();
    fft.process(&mut buf);
    let scale = 1.0 / (n as f64).sqrt();
    for v in &mut buf {
        *v *= scale;
    }
    buf
}

/// Peak-to-average power ratio of a sample stream (linear, >= 1).
pub fn measure_papr(samples: &[Complex64]) -> Result<f64> {
    let mut peak = 0.0f64;
    let mut total = 0.0f64;
    for s in samples {
        let p = s.norm_sqr();
        peak = peak.max(p);
        total += p;
    }
    if samples.is_empty() || total == 0.0 {
        return Err(Error::UndefinedPapr);
    }
    Ok(peak / (total / samples.len() as f64))
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Transmit-side scheme for the PAPR experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaprScheme {
    /// One active subcarrier per block, spread over L chip slots.
    Cfim,
    /// Every subcarrier active, one spreading code per subcarrier.
    Ofdm,
    /// `active_per_block` of N subcarriers on per block, index-selected by
    /// random bits from a fixed lookup of subcarrier combinations.
    OfdmIm { active_per_block: usize },
}

impl PaprScheme {
    pub fn label(&self) -> &'static str {
        match self {
            PaprScheme::Cfim => "cfim",
            PaprScheme::Ofdm => "ofdm",
            PaprScheme::OfdmIm { .. } => "ofdm_im",
        }
    }
}

impl FromStr for PaprScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cfim" => Ok(PaprScheme::Cfim),
            "ofdm" => Ok(PaprScheme::Ofdm),
            "ofdm-im" | "ofdm_im" | "ofdmim" => Ok(PaprScheme::OfdmIm { active_per_block: 2 }),
            other => Err(Error::UnknownScheme(other.to_string())),
        }
    }
}

/// Layout of the synthesis grid: transform length, signal-bearing bins,
/// and chip slots per transmission. Bins beyond `active_bins` stay zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaveformGrid {
    pub n_fft: usize,
    pub active_bins: usize,
    pub chip_slots: usize,
}

impl WaveformGrid {
    pub fn new(config: &SystemConfig, n_fft: usize) -> Result<Self> {
        let active_bins = config.blocks * config.subcarriers;
        if active_bins > n_fft {
            return Err(Error::invalid(
                "N_T",
                format!("{active_bins} active bins exceed the transform length {n_fft}"),
            ));
        }
        Ok(WaveformGrid {
            n_fft,
            active_bins,
            chip_slots: config.spreading_factor,
        })
    }
}

fn bin_index(block: usize, subcarrier: usize, subcarriers_per_block: usize) -> usize {
    subcarriers_per_block * block + subcarrier
}

/// Lexicographic subcarrier combinations of size `g` out of `n`.
fn combinations(n: usize, g: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(g);
    fn recurse(start: usize, n: usize, g: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == g {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            recurse(i + 1, n, g, current, out);
            current.pop();
        }
    }
    recurse(0, n, g, &mut current, &mut out);
    out
}

struct SlotContext {
    config: SystemConfig,
    grid: WaveformGrid,
    chips: Array2<f64>,
    psk_points: Vec<Complex64>,
    im_combos: Vec<Vec<usize>>,
}

impl SlotContext {
    fn new(scheme: PaprScheme, config: &SystemConfig, n_fft: usize) -> Result<Self> {
        config.validate()?;
        let grid = WaveformGrid::new(config, n_fft)?;
        let order = config.modulation_order;
        let psk_points = (0..order)
            .map(|m| Complex64::from_polar(1.0, std::f64::consts::TAU * m as f64 / order as f64))
            .collect();
        let im_combos = match scheme {
            PaprScheme::OfdmIm { active_per_block } => {
                if active_per_block < 1 || active_per_block > config.subcarriers {
                    return Err(Error::invalid(
                        "g",
                        format!("{active_per_block} active of {} subcarriers", config.subcarriers),
                    ));
                }
                let all = combinations(config.subcarriers, active_per_block);
                let usable = 1usize << all.len().ilog2();
                all.into_iter().take(usable).collect()
            }
            _ => Vec::new(),
        };
        Ok(SlotContext {
            config: *config,
            grid,
            chips: hadamard_matrix(config.spreading_factor)?,
            psk_points,
            im_combos,
        })
    }

    /// Frequency bins of every chip slot of one transmission.
    fn trial_bins<R: Rng>(&self, scheme: PaprScheme, rng: &mut R) -> Vec<Vec<Complex64>> {
        let cfg = &self.config;
        let (k_blocks, n, l) = (cfg.blocks, cfg.subcarriers, self.grid.chip_slots);
        let draw_symbol = |rng: &mut R| self.psk_points[rng.gen_range(0..self.psk_points.len())];
        let mut slots = vec![vec![Complex64::new(0.0, 0.0); self.grid.n_fft]; l];
        match scheme {
            PaprScheme::Cfim => {
                for k in 0..k_blocks {
                    let symbol = draw_symbol(rng);
                    let code = rng.gen_range(0..cfg.codes);
                    let subcarrier = rng.gen_range(0..n);
                    let bin = bin_index(k, subcarrier, n);
                    for (slot, bins) in slots.iter_mut().enumerate() {
                        bins[bin] = symbol * self.chips[(code, slot)];
                    }
                }
            }
            PaprScheme::Ofdm => {
                for k in 0..k_blocks {
                    for i in 0..n {
                        let symbol = draw_symbol(rng);
                        let bin = bin_index(k, i, n);
                        let code = bin % l;
                        for (slot, bins) in slots.iter_mut().enumerate() {
                            bins[bin] = symbol * self.chips[(code, slot)];
                        }
                    }
                }
            }
            PaprScheme::OfdmIm { .. } => {
                for k in 0..k_blocks {
                    let combo = &self.im_combos[rng.gen_range(0..self.im_combos.len())];
                    for &i in combo {
                        let symbol = draw_symbol(rng);
                        let bin = bin_index(k, i, n);
                        let code = bin % l;
                        for (slot, bins) in slots.iter_mut().enumerate() {
                            bins[bin] = symbol * self.chips[(code, slot)];
                        }
                    }
                }
            }
        }
        slots
    }
}

fn slot_papr_db(bins: &[Complex64], fft: &Arc<dyn Fft<f64>>, oversample: usize) -> f64 {
    let n_long = bins.len() * oversample;
    let mut buf = vec![Complex64::new(0.0, 0.0); n_long];
    buf[..bins.len()].copy_from_slice(bins);
    fft.process(&mut buf);
    // PAPR is scale-invariant, so the unitary factor is irrelevant here
    let mut peak = 0.0f64;
    let mut total = 0.0f64;
    for v in &buf {
        let p = v.norm_sqr();
        peak = peak.max(p);
        total += p;
    }
    linear_to_db(peak / (total / n_long as f64))
}

const STREAM_PAPR: u64 = 0x9A9A;

/// Per-slot PAPR samples in dB for `trials` independent transmissions
/// (each contributes L slot samples). Deterministic in `seed` and the
/// worker count.
pub fn papr_samples(
    scheme: PaprScheme,
    config: &SystemConfig,
    n_fft: usize,
    trials: usize,
    seed: u64,
    oversample: usize,
) -> Result<Vec<f64>> {
    if oversample < 1 {
        return Err(Error::invalid("oversample", "must be at least 1"));
    }
    let ctx = SlotContext::new(scheme, config, n_fft)?;
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_inverse(n_fft * oversample);
    let per_trial: Vec<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeding::trial_rng(seed, STREAM_PAPR, t);
            ctx.trial_bins(scheme, &mut rng)
                .iter()
                .map(|bins| slot_papr_db(bins, &fft, oversample))
                .collect()
        })
        .collect();
    Ok(per_trial.into_iter().flatten().collect())
}

/// Fraction of samples strictly above `threshold_db`.
pub fn ccdf_at(samples_db: &[f64], threshold_db: f64) -> f64 {
    if samples_db.is_empty() {
        return 0.0;
    }
    samples_db.iter().filter(|&&s| s > threshold_db).count() as f64 / samples_db.len() as f64
}

pub fn ccdf_series(samples_db: &[f64], thresholds_db: &[f64]) -> Vec<f64> {
    thresholds_db.iter().map(|&t| ccdf_at(samples_db, t)).collect()
}

/// Empirical PAPR value whose CCDF equals `level` (e.g. `1e-3`).
pub fn ccdf_quantile_db(samples_db: &[f64], level: f64) -> f64 {
    let mut sorted = samples_db.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("PAPR samples are finite"));
    let idx = ((level * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
    sorted[idx]
}

/// Full CCDF experiment for one scheme.
pub fn papr_ccdf(
    scheme: PaprScheme,
    config: &SystemConfig,
    n_fft: usize,
    thresholds_db: &[f64],
    trials: usize,
    seed: u64,
    oversample: usize,
) -> Result<Vec<f64>> {
    if trials < 1000 {
        return Err(Error::invalid("trials", "CCDF estimation needs at least 10^3 trials"));
    }
    let samples = papr_samples(scheme, config, n_fft, trials, seed, oversample)?;
    Ok(ccdf_series(&samples, thresholds_db))
}
