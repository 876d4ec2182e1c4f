//! System parameters, bit budget, and energy accounting.
//!
//! A [`SystemConfig`] fixes the scheme shape (blocks, subcarriers, codes,
//! modulation order, spreading factor, users). The derived [`BitBudget`]
//! splits each block's bits into a modulated part and two index-mapped
//! parts, and the [`EnergyBudget`] converts an operating point in dB into
//! linear energies with the system bit energy normalized to one.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

fn is_power_of_two(x: usize) -> bool {
    x != 0 && x & (x - 1) == 0
}

fn log2(x: usize) -> u32 {
    debug_assert!(is_power_of_two(x));
    x.trailing_zeros()
}

/// Scheme parameters shared by every module.
///
/// Immutable after construction; safe to share across workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of blocks (K). Each block occupies `subcarriers` adjacent bins.
    pub blocks: usize,
    /// Subcarriers per block (N); one is activated per block.
    pub subcarriers: usize,
    /// Spreading codes per user codebook (Nc).
    pub codes: usize,
    /// Modulation order (M) of the PSK constellation.
    pub modulation_order: usize,
    /// Spreading factor (L): chips per code.
    pub spreading_factor: usize,
    /// Number of users sharing the code pool (U).
    pub users: usize,
}

impl SystemConfig {
    pub fn new(
        blocks: usize,
        subcarriers: usize,
        codes: usize,
        modulation_order: usize,
        spreading_factor: usize,
        users: usize,
    ) -> Result<Self> {
        let cfg = SystemConfig {
            blocks,
            subcarriers,
            codes,
            modulation_order,
            spreading_factor,
            users,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Single-user config, the common case in the BER experiments.
    pub fn single_user(
        blocks: usize,
        subcarriers: usize,
        codes: usize,
        modulation_order: usize,
        spreading_factor: usize,
    ) -> Result<Self> {
        Self::new(blocks, subcarriers, codes, modulation_order, spreading_factor, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks < 1 {
            return Err(Error::invalid("K", "must be at least 1"));
        }
        if !is_power_of_two(self.subcarriers) {
            return Err(Error::invalid("N", format!("{} is not a power of two", self.subcarriers)));
        }
        if !is_power_of_two(self.codes) {
            return Err(Error::invalid("Nc", format!("{} is not a power of two", self.codes)));
        }
        if !is_power_of_two(self.modulation_order) || self.modulation_order < 2 {
            return Err(Error::invalid(
                "M",
                format!("{} is not a power of two >= 2", self.modulation_order),
            ));
        }
        if !is_power_of_two(self.spreading_factor) {
            return Err(Error::invalid(
                "L",
                format!("{} is not a power of two", self.spreading_factor),
            ));
        }
        if self.users < 1 {
            return Err(Error::invalid("U", "must be at least 1"));
        }
        if self.users * self.codes > self.spreading_factor {
            return Err(Error::Capacity {
                users: self.users,
                codes_per_user: self.codes,
                spreading_factor: self.spreading_factor,
                max_users: self.spreading_factor / self.codes,
            });
        }
        Ok(())
    }

    pub fn bit_budget(&self) -> BitBudget {
        // Validity is established at construction.
        derive_bit_budget(self.modulation_order, self.subcarriers, self.codes)
            .expect("validated config")
    }

    /// Parse the flat `key = value` text format (keys: K, N, Nc, M, L, U,
    /// ebs_over_n0_db). Missing keys fall back to `defaults`; the operating
    /// point is returned separately when present.
    pub fn from_key_values(text: &str, defaults: &SystemConfig) -> Result<(SystemConfig, Option<f64>)> {
        let mut cfg = *defaults;
        let mut db = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid("config", format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let parse_count = |field: &'static str| -> Result<usize> {
                value
                    .parse::<usize>()
                    .map_err(|_| Error::invalid(field, format!("`{value}` is not a count")))
            };
            match key {
                "K" => cfg.blocks = parse_count("K")?,
                "N" => cfg.subcarriers = parse_count("N")?,
                "Nc" => cfg.codes = parse_count("Nc")?,
                "M" => cfg.modulation_order = parse_count("M")?,
                "L" => cfg.spreading_factor = parse_count("L")?,
                "U" => cfg.users = parse_count("U")?,
                "ebs_over_n0_db" => {
                    let v: f64 = value
                        .parse()
                        .map_err(|_| Error::invalid("ebs_over_n0_db", format!("`{value}` is not a number")))?;
                    db = Some(v);
                }
                other => {
                    return Err(Error::invalid(
                        "config",
                        format!("line {}: unknown key `{other}`", lineno + 1),
                    ))
                }
            }
        }
        cfg.validate()?;
        Ok((cfg, db))
    }

    /// Emit the flat key-value form read back by [`Self::from_key_values`].
    pub fn to_key_values(&self, ebs_over_n0_db: Option<f64>) -> String {
        let mut out = format!(
            "K = {}\nN = {}\nNc = {}\nM = {}\nL = {}\nU = {}\n",
            self.blocks, self.subcarriers, self.codes, self.modulation_order, self.spreading_factor, self.users
        );
        if let Some(db) = ebs_over_n0_db {
            out.push_str(&format!("ebs_over_n0_db = {db}\n"));
        }
        out
    }
}

/// Per-block bit split: modulated bits plus the two index-mapped parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitBudget {
    /// Bits carried by the PSK symbol (p1 = log2 M).
    pub modulated_bits: u32,
    /// Bits selecting the spreading code (p2 = log2 Nc).
    pub code_bits: u32,
    /// Bits selecting the active subcarrier (p3 = log2 N).
    pub subcarrier_bits: u32,
    /// Total bits per block (p = p1 + p2 + p3).
    pub bits_per_block: u32,
}

impl BitBudget {
    /// Bits conveyed by index selection alone, never transmitted as energy.
    pub fn mapped_bits(&self) -> u32 {
        self.code_bits + self.subcarrier_bits
    }
}

/// Split the per-block bit count from the scheme shape.
pub fn derive_bit_budget(
    modulation_order: usize,
    subcarriers: usize,
    codes: usize,
) -> Result<BitBudget> {
    if !is_power_of_two(modulation_order) || modulation_order < 2 {
        return Err(Error::invalid(
            "M",
            format!("{modulation_order} is not a power of two >= 2"),
        ));
    }
    if !is_power_of_two(subcarriers) {
        return Err(Error::invalid("N", format!("{subcarriers} is not a power of two")));
    }
    if !is_power_of_two(codes) {
        return Err(Error::invalid("Nc", format!("{codes} is not a power of two")));
    }
    let p1 = log2(modulation_order);
    let p2 = log2(codes);
    let p3 = log2(subcarriers);
    Ok(BitBudget {
        modulated_bits: p1,
        code_bits: p2,
        subcarrier_bits: p3,
        bits_per_block: p1 + p2 + p3,
    })
}

/// Linear energy quantities at one operating point.
///
/// The system bit energy is normalized to 1, so `noise_density` alone
/// carries the operating point. The physical bit energy is derived: only
/// the modulated bits cost transmit energy, so spreading the budget over
/// all bits gives `bit_energy = (p1/p) * system_bit_energy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget {
    /// Energy per physically modulated bit (E_b).
    pub bit_energy: f64,
    /// Equivalent energy per information bit (E_bs), normalized to 1.
    pub system_bit_energy: f64,
    /// Symbol energy (E_s = p1 * E_bs).
    pub symbol_energy: f64,
    /// Noise spectral density (N_0); noise variance per complex chip.
    pub noise_density: f64,
    /// Average SNR per symbol under unit-mean-square fading (E_s / N_0).
    pub symbol_snr: f64,
    /// Operating point in dB (E_bs / N_0).
    pub operating_point_db: f64,
}

/// Fix the operating point: with E_bs = 1, N_0 = 10^(-dB/10).
pub fn calibrate_energy(budget: &BitBudget, ebs_over_n0_db: f64) -> EnergyBudget {
    let ebs = 1.0;
    let n0 = ebs / 10f64.powf(ebs_over_n0_db / 10.0);
    let es = budget.modulated_bits as f64 * ebs;
    EnergyBudget {
        bit_energy: budget.modulated_bits as f64 / budget.bits_per_block as f64 * ebs,
        system_bit_energy: ebs,
        symbol_energy: es,
        noise_density: n0,
        symbol_snr: es / n0,
        operating_point_db: ebs_over_n0_db,
    }
}
