//! End-to-end Monte Carlo experiments: BER sweeps, direct-spread
//! baselines, and the synchronous multiuser scenarios.
//!
//! Every frame trial draws from a counter-derived generator, so results
//! are bit-identical for any worker count; stopping decisions happen at
//! fixed batch boundaries for the same reason.

use crate::analysis::{self, BerBreakdown, BerOptions};
use crate::channel;
use crate::codebook::{hadamard_matrix, partition_codebooks};
use crate::config::{calibrate_energy, EnergyBudget, SystemConfig};
use crate::error::{Error, Result};
use crate::modem::{self, GrayPsk, SpreadFrame};
use crate::seeding;
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// Transmission direction of a multiuser scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Downlink,
    Uplink,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "downlink" | "dl" => Ok(Direction::Downlink),
            "uplink" | "ul" => Ok(Direction::Uplink),
            other => Err(Error::UnknownScheme(other.to_string())),
        }
    }
}

/// A synchronous multiuser experiment: `config.users` users share the
/// code pool through disjoint codebooks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiuserScenario {
    pub config: SystemConfig,
    pub direction: Direction,
}

/// Direct-spread baseline chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineScheme {
    /// CFIM with a single spreading code (frequency indexing only).
    DsFim,
    /// Every subcarrier active with one spread PSK symbol, coherent
    /// detection with perfect channel knowledge.
    DsOfdm,
}

impl FromStr for BaselineScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ds-fim" | "dsfim" | "fim" => Ok(BaselineScheme::DsFim),
            "ds-ofdm" | "dsofdm" | "ofdm" => Ok(BaselineScheme::DsOfdm),
            other => Err(Error::UnknownScheme(other.to_string())),
        }
    }
}

/// Measured and analytic error rates at one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub ebs_over_n0_db: f64,
    pub ber_total: f64,
    pub ber_mapped: f64,
    pub ber_modulated: f64,
    pub index_error_rate: f64,
    pub bits_simulated: u64,
    pub error_count: u64,
    pub mapped_bits: u64,
    pub mapped_errors: u64,
    pub modulated_bits: u64,
    pub modulated_errors: u64,
    pub blocks_simulated: u64,
    pub index_errors: u64,
    pub analytic: Option<BerBreakdown>,
}

impl SweepPoint {
    pub const CSV_HEADER: &'static str = "ebs_over_n0_db,ber_total,ber_mapped,ber_modulated,index_error_rate,bits_simulated,error_count,mapped_bits,mapped_errors,modulated_bits,modulated_errors,blocks_simulated,index_errors,analytic_p_ed,analytic_p_map,analytic_p_b,analytic_p_mod,analytic_p_cfim";

    pub fn to_csv_row(&self) -> String {
        let analytic = match &self.analytic {
            Some(a) => format!("{},{},{},{},{}", a.p_ed, a.p_map, a.p_b, a.p_mod, a.p_cfim),
            None => ",,,,".to_string(),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.ebs_over_n0_db,
            self.ber_total,
            self.ber_mapped,
            self.ber_modulated,
            self.index_error_rate,
            self.bits_simulated,
            self.error_count,
            self.mapped_bits,
            self.mapped_errors,
            self.modulated_bits,
            self.modulated_errors,
            self.blocks_simulated,
            self.index_errors,
            analytic
        )
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    mapped_errors: u64,
    modulated_errors: u64,
    index_errors: u64,
}

fn safe_ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

const FRAMES_PER_BATCH: u64 = 2048;
const STREAM_ANALYTIC: u64 = 0xA11;

/// How many frames to run before re-checking the stop rule.
fn stop_reached(bits: u64, min_errors: u64, min_bits: u64, max_errors: u64) -> bool {
    bits >= min_bits && (min_errors >= max_errors || bits >= min_bits.saturating_mul(100))
}

fn draw_bits<R: Rng>(rng: &mut R, count: u32) -> Vec<u8> {
    (0..count).map(|_| rng.gen::<bool>() as u8).collect()
}

/// Simulate one operating point of the (multiuser) CFIM chain.
fn simulate_cfim_point(
    config: &SystemConfig,
    direction: Direction,
    energy: &EnergyBudget,
    min_bits: u64,
    max_errors: u64,
    seed: u64,
    stream: u64,
) -> Result<(Vec<Tally>, u64)> {
    let users = config.users;
    let budget = config.bit_budget();
    let books = partition_codebooks(config.spreading_factor, users, config.codes)?;
    let p = budget.bits_per_block;
    let p1 = budget.modulated_bits as usize;
    let bits_per_frame = config.blocks as u64 * p as u64;

    let frame_fn = |t: u64| -> Result<Vec<Tally>> {
        let mut rng = seeding::trial_rng(seed, stream, t);
        let mut sent: Vec<Vec<modem::MappedBlock>> = Vec::with_capacity(users);
        for _ in 0..users {
            let blocks: Result<Vec<_>> = (0..config.blocks)
                .map(|_| modem::map_block(&draw_bits(&mut rng, p), config, energy))
                .collect();
            sent.push(blocks?);
        }
        let frames: Vec<SpreadFrame> = sent
            .iter()
            .zip(&books)
            .map(|(blocks, book)| modem::spread_frame(blocks, book, config))
            .collect();
        let (received, gains_of_user): (SpreadFrame, Vec<Array2<Complex64>>) = match direction {
            Direction::Downlink => {
                let (rx, ch) = channel::apply_multiuser_downlink_with_rng(&frames, energy, &mut rng)?;
                let shared = ch.gains;
                (rx, vec![shared; users])
            }
            Direction::Uplink => {
                let (rx, chs) = channel::apply_multiuser_uplink_with_rng(&frames, energy, &mut rng)?;
                (rx, chs.into_iter().map(|c| c.gains).collect())
            }
        };
        let mut tallies = vec![Tally::default(); users];
        for (u, book) in books.iter().enumerate() {
            for (k, chips) in received.blocks.iter().enumerate() {
                let xhat = modem::despread(chips.view(), book)?;
                let (i_hat, j_hat, _) = modem::sled_detect(&xhat);
                let h = gains_of_user[u][(k, i_hat)];
                let decoded = modem::demap_block(&xhat, i_hat, j_hat, h, config)?;
                let truth = &sent[u][k];
                if (i_hat, j_hat) != (truth.subcarrier_index, truth.code_index) {
                    tallies[u].index_errors += 1;
                }
                for (pos, (a, b)) in decoded.iter().zip(&truth.source_bits).enumerate() {
                    if a != b {
                        if pos < p1 {
                            tallies[u].modulated_errors += 1;
                        } else {
                            tallies[u].mapped_errors += 1;
                        }
                    }
                }
            }
        }
        Ok(tallies)
    };

    let mut totals = vec![Tally::default(); users];
    let mut frames_done = 0u64;
    loop {
        let batch: Result<Vec<Vec<Tally>>> = (frames_done..frames_done + FRAMES_PER_BATCH)
            .into_par_iter()
            .map(frame_fn)
            .collect();
        for frame_tallies in batch? {
            for (total, t) in totals.iter_mut().zip(frame_tallies) {
                total.mapped_errors += t.mapped_errors;
                total.modulated_errors += t.modulated_errors;
                total.index_errors += t.index_errors;
            }
        }
        frames_done += FRAMES_PER_BATCH;
        let bits = frames_done * bits_per_frame;
        let min_errors = totals
            .iter()
            .map(|t| t.mapped_errors + t.modulated_errors)
            .min()
            .unwrap_or(0);
        if stop_reached(bits, min_errors, min_bits, max_errors) {
            break;
        }
    }
    Ok((totals, frames_done))
}

fn build_point(
    config: &SystemConfig,
    db: f64,
    tally: &Tally,
    frames: u64,
    analytic: Option<BerBreakdown>,
) -> SweepPoint {
    let budget = config.bit_budget();
    let blocks = frames * config.blocks as u64;
    let mapped_bits = blocks * budget.mapped_bits() as u64;
    let modulated_bits = blocks * budget.modulated_bits as u64;
    let bits = mapped_bits + modulated_bits;
    let errors = tally.mapped_errors + tally.modulated_errors;
    SweepPoint {
        ebs_over_n0_db: db,
        ber_total: safe_ratio(errors, bits),
        ber_mapped: safe_ratio(tally.mapped_errors, mapped_bits),
        ber_modulated: safe_ratio(tally.modulated_errors, modulated_bits),
        index_error_rate: safe_ratio(tally.index_errors, blocks),
        bits_simulated: bits,
        error_count: errors,
        mapped_bits,
        mapped_errors: tally.mapped_errors,
        modulated_bits,
        modulated_errors: tally.modulated_errors,
        blocks_simulated: blocks,
        index_errors: tally.index_errors,
        analytic,
    }
}

/// Per-user BER sweeps of a synchronous multiuser scenario. The returned
/// outer vector is indexed by user; each inner vector follows the grid.
pub fn run_multiuser(
    scenario: &MultiuserScenario,
    grid_db: &[f64],
    min_bits: u64,
    max_errors: u64,
    seed: u64,
) -> Result<Vec<Vec<SweepPoint>>> {
    let config = &scenario.config;
    config.validate()?;
    let budget = config.bit_budget();
    let mut per_user: Vec<Vec<SweepPoint>> = vec![Vec::new(); config.users];
    for (g, &db) in grid_db.iter().enumerate() {
        let energy = calibrate_energy(&budget, db);
        let (tallies, frames) = simulate_cfim_point(
            config,
            scenario.direction,
            &energy,
            min_bits,
            max_errors,
            seed,
            2 * g as u64,
        )?;
        // the analytic curve is per-user identical: no multiuser interference
        let analytic = analysis::ber_closed_form_with_options(
            config,
            &energy,
            BerOptions {
                seed: seeding::derive(seed, STREAM_ANALYTIC, g as u64),
                ..BerOptions::default()
            },
        )?;
        for (u, tally) in tallies.iter().enumerate() {
            per_user[u].push(build_point(config, db, tally, frames, Some(analytic)));
        }
    }
    Ok(per_user)
}

/// Single-user BER sweep over the operating-point grid.
pub fn run_ber_sweep(
    config: &SystemConfig,
    grid_db: &[f64],
    min_bits: u64,
    max_errors: u64,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    let scenario = MultiuserScenario {
        config: SystemConfig { users: 1, ..*config },
        direction: Direction::Downlink,
    };
    Ok(run_multiuser(&scenario, grid_db, min_bits, max_errors, seed)?.remove(0))
}

/// Direct-spread baseline sweeps sharing the frame layout and spreading
/// factor of `config`.
pub fn run_baseline_ber(
    scheme: BaselineScheme,
    config: &SystemConfig,
    grid_db: &[f64],
    min_bits: u64,
    max_errors: u64,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    match scheme {
        BaselineScheme::DsFim => {
            let fim = SystemConfig { codes: 1, ..*config };
            fim.validate()?;
            run_ber_sweep(&fim, grid_db, min_bits, max_errors, seed)
        }
        BaselineScheme::DsOfdm => run_ds_ofdm(config, grid_db, min_bits, max_errors, seed),
    }
}

/// Coherent DS-OFDM: every subcarrier carries one spread PSK symbol; the
/// receiver despreads with the subcarrier's own code and equalizes with
/// the known channel gain.
fn run_ds_ofdm(
    config: &SystemConfig,
    grid_db: &[f64],
    min_bits: u64,
    max_errors: u64,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    config.validate()?;
    let (k_blocks, n, l) = (config.blocks, config.subcarriers, config.spreading_factor);
    let p1 = config.bit_budget().modulated_bits;
    let psk = GrayPsk::new(config.modulation_order)?;
    let chips = hadamard_matrix(l)?;
    // all bits are physical here, so the per-bit SNR is E_bs/N_0 directly
    let es = p1 as f64;
    let bits_per_frame = (k_blocks * n) as u64 * p1 as u64;

    let mut points = Vec::with_capacity(grid_db.len());
    for (g, &db) in grid_db.iter().enumerate() {
        let energy = calibrate_energy(&config.bit_budget(), db);
        let frame_fn = |t: u64| -> Result<u64> {
            let mut rng = seeding::trial_rng(seed, 2 * g as u64, t);
            let mut values = vec![0u32; k_blocks * n];
            let mut frame_blocks = Vec::with_capacity(k_blocks);
            for k in 0..k_blocks {
                let mut block = Array2::zeros((n, l));
                for i in 0..n {
                    let value =
                        draw_bits(&mut rng, p1).iter().fold(0u32, |acc, &b| (acc << 1) | u32::from(b));
                    values[k * n + i] = value;
                    let symbol = psk.modulate(value) * es.sqrt();
                    let row = (k * n + i) % l;
                    for slot in 0..l {
                        block[(i, slot)] = symbol * chips[(row, slot)];
                    }
                }
                frame_blocks.push(block);
            }
            let frame = SpreadFrame { blocks: frame_blocks };
            let (received, ch) = channel::apply_with_rng(&frame, &energy, &mut rng);
            let mut errors = 0u64;
            for k in 0..k_blocks {
                for i in 0..n {
                    let row = (k * n + i) % l;
                    let mut acc = Complex64::new(0.0, 0.0);
                    for slot in 0..l {
                        acc += received.blocks[k][(i, slot)] * chips[(row, slot)];
                    }
                    let h = ch.gains[(k, i)];
                    if h.norm_sqr() == 0.0 {
                        return Err(Error::DegenerateChannel);
                    }
                    let decided = psk.demodulate(acc / h);
                    errors += u64::from((decided ^ values[k * n + i]).count_ones());
                }
            }
            Ok(errors)
        };

        let mut error_count = 0u64;
        let mut frames_done = 0u64;
        loop {
            let batch: Result<Vec<u64>> = (frames_done..frames_done + FRAMES_PER_BATCH)
                .into_par_iter()
                .map(frame_fn)
                .collect();
            error_count += batch?.iter().sum::<u64>();
            frames_done += FRAMES_PER_BATCH;
            let bits = frames_done * bits_per_frame;
            if stop_reached(bits, error_count, min_bits, max_errors) {
                break;
            }
        }
        let bits = frames_done * bits_per_frame;
        let p_b = analysis::p_b_mpsk_rayleigh_ideal(
            config.modulation_order,
            energy.system_bit_energy / energy.noise_density,
        );
        points.push(SweepPoint {
            ebs_over_n0_db: db,
            ber_total: safe_ratio(error_count, bits),
            ber_mapped: 0.0,
            ber_modulated: safe_ratio(error_count, bits),
            index_error_rate: 0.0,
            bits_simulated: bits,
            error_count,
            mapped_bits: 0,
            mapped_errors: 0,
            modulated_bits: bits,
            modulated_errors: error_count,
            blocks_simulated: frames_done * k_blocks as u64,
            index_errors: 0,
            analytic: Some(BerBreakdown {
                p_ed: 0.0,
                p_map: 0.0,
                p_b,
                p_mod: p_b,
                p_cfim: p_b,
            }),
        });
    }
    Ok(points)
}

/// Largest spectral efficiency one of `users` users can reach: the widest
/// power-of-two codebook that still fits `floor(L/users)` rows sets the
/// code bits, on top of the subcarrier and modulation bits.
pub fn max_se_per_user(
    modulation_order: usize,
    subcarriers: usize,
    spreading_factor: usize,
    users: usize,
) -> Result<f64> {
    if users == 0 {
        return Err(Error::invalid("U", "must be at least 1"));
    }
    let budget_probe = crate::config::derive_bit_budget(modulation_order, subcarriers, 1)?;
    if spreading_factor == 0 || spreading_factor & (spreading_factor - 1) != 0 {
        return Err(Error::invalid(
            "L",
            format!("{spreading_factor} is not a power of two"),
        ));
    }
    let share = spreading_factor / users;
    if share < 1 {
        return Ok(0.0);
    }
    let code_bits = share.ilog2();
    let p = budget_probe.bits_per_block + code_bits;
    Ok(p as f64 / subcarriers as f64)
}
