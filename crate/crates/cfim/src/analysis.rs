//! Closed-form and semi-analytic performance expressions: index-error
//! probability, mapped/modulated bit error rates, spectral efficiency,
//! energy saving, operation counts, and peak-power bounds.

use crate::config::{BitBudget, EnergyBudget, SystemConfig};
use crate::error::{Error, Result};
use crate::seeding;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

// ---------------------------------------------------------------------------
// quadrature

fn simpson_estimate(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson_estimate(fa, flm, fm, m - a);
    let right = simpson_estimate(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive_step(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + adaptive_step(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fb = f(b);
    let fm = f(m);
    let whole = simpson_estimate(fa, fm, fb, b - a);
    adaptive_step(&f, a, fa, b, fb, m, fm, whole, tol, 60)
}

// ---------------------------------------------------------------------------
// index-pair error probability

/// Probability that the square-law detector picks a wrong (subcarrier,
/// code) cell: a noncoherent N*Nc-ary orthogonal detection over Rayleigh
/// fading at average symbol SNR `symbol_snr`.
///
/// Equals the alternating sum
/// `sum_{mu=1}^{NNc-1} (-1)^(mu+1) C(NNc-1, mu) / (1 + mu + mu*snr)`,
/// evaluated here in its integral form `int_0^1 1 - (1 - t^A)^(NNc-1) dt`
/// with `A = 1 + snr`, which is the same quantity without the catastrophic
/// cancellation the sum suffers for large N*Nc.
pub fn p_ed_closed_form(subcarriers: usize, codes: usize, symbol_snr: f64) -> f64 {
    let hypotheses = subcarriers * codes;
    if hypotheses <= 1 {
        return 0.0;
    }
    let n_minus_1 = (hypotheses - 1) as f64;
    let a = 1.0 + symbol_snr.max(0.0);
    let f = |t: f64| -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return 1.0;
        }
        let ta = (a * t.ln()).exp();
        -((n_minus_1 * (-ta).ln_1p()).exp_m1())
    };
    integrate(f, 0.0, 1.0, 1e-12).clamp(0.0, 1.0 - 1.0 / hypotheses as f64)
}

/// Mapped-bit error probability given the index-pair error probability:
/// a wrong pair is uniform over the alternatives, flipping on average
/// `2^(q-1)/(2^q - 1)` of the q index bits.
pub fn p_map(code_bits: u32, subcarrier_bits: u32, p_ed: f64) -> f64 {
    let q = code_bits + subcarrier_bits;
    if q == 0 {
        // no mapped bits exist; 0 by convention
        return 0.0;
    }
    let coeff = 2f64.powi(q as i32 - 1) / (2f64.powi(q as i32) - 1.0);
    coeff * p_ed
}

// ---------------------------------------------------------------------------
// modulated-bit error probability (Gray PSK)

/// Sector weights for the Gray PSK bit-error expansion: entry `m-1` holds
/// `w_m + w_(M-m)`, the Hamming weight of the patterns `m` places away in
/// both directions (the antipodal sector at `m = M/2` counts twice).
fn gray_sector_weights(order: usize) -> Vec<f64> {
    let gray_weight = |m: usize| (m ^ (m >> 1)).count_ones() as f64;
    (1..=order / 2)
        .map(|m| gray_weight(m) + gray_weight(order - m))
        .collect()
}

/// One-sided probability that the received phase exceeds `psi` at symbol
/// SNR `gamma_s` in AWGN: `(1/2pi) int_0^(pi-psi) exp(-gamma_s sin^2 psi / sin^2 th) dth`.
fn phase_exceedance_awgn(psi: f64, gamma_s: f64, tol: f64) -> f64 {
    if psi >= PI {
        return 0.0;
    }
    let a = gamma_s * psi.sin().powi(2);
    let f = |th: f64| -> f64 {
        if a == 0.0 {
            return 1.0;
        }
        let s = th.sin().powi(2);
        (-a / s).exp()
    };
    integrate(f, 0.0, PI - psi, tol) / (2.0 * PI)
}

/// The same exceedance averaged over a unit-mean exponential symbol SNR
/// with mean `mean_gamma_s` (Rayleigh fading): the exponential averages to
/// `sin^2 th / (sin^2 th + mean_gamma_s sin^2 psi)` inside the integral.
fn phase_exceedance_rayleigh(psi: f64, mean_gamma_s: f64, tol: f64) -> f64 {
    if psi >= PI {
        return 0.0;
    }
    let b = mean_gamma_s * psi.sin().powi(2);
    let f = |th: f64| -> f64 {
        if b == 0.0 {
            return 1.0;
        }
        let s = th.sin().powi(2);
        s / (s + b)
    };
    integrate(f, 0.0, PI - psi, tol) / (2.0 * PI)
}

const PHASE_TOL: f64 = 1e-10;

fn p_b_mpsk_generic<F: Fn(f64) -> f64>(order: usize, exceedance: F) -> f64 {
    let p1 = order.trailing_zeros() as f64;
    let weights = gray_sector_weights(order);
    let mut total = 0.0;
    for (idx, w) in weights.iter().enumerate() {
        let m = (idx + 1) as f64;
        let lower = (2.0 * m - 1.0) * PI / order as f64;
        let upper = (2.0 * m + 1.0) * PI / order as f64;
        total += w * (exceedance(lower) - exceedance(upper));
    }
    total / p1
}

/// Bit error probability of Gray PSK at a fixed (instantaneous) per-bit
/// SNR `gamma_b` in AWGN.
pub fn p_b_mpsk_conditional(order: usize, gamma_b: f64) -> f64 {
    let gamma_s = order.trailing_zeros() as f64 * gamma_b;
    p_b_mpsk_generic(order, |psi| phase_exceedance_awgn(psi, gamma_s, PHASE_TOL))
}

/// Bit error probability of Gray PSK over Rayleigh fading at average
/// per-bit SNR `snr_b`, assuming the fading gain is never conditioned on
/// anything (chi-square with two degrees of freedom).
pub fn p_b_mpsk_rayleigh_ideal(order: usize, snr_b: f64) -> f64 {
    let mean_gamma_s = order.trailing_zeros() as f64 * snr_b;
    p_b_mpsk_generic(order, |psi| phase_exceedance_rayleigh(psi, mean_gamma_s, PHASE_TOL))
}

/// Modulated-bit error probability conditioned on *correct* index
/// detection, estimated by Monte Carlo: draw fading and detector noise,
/// keep the trials where the energy detector picks the signal cell, and
/// average the conditional PSK bit error at each retained per-bit SNR.
///
/// At low SNR the detector preferentially keeps strong fades, so the
/// retained SNR distribution is no longer exponential; this estimator is
/// the replacement for the closed form there. Deterministic in `seed`.
pub fn p_b_semi_analytic(
    config: &SystemConfig,
    energy: &EnergyBudget,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials < 10_000 {
        return Err(Error::invalid("trials", "semi-analytic estimate needs at least 10^4 trials"));
    }
    let hypotheses = config.subcarriers * config.codes;
    let order = config.modulation_order;
    let es = energy.symbol_energy;
    let n0 = energy.noise_density;
    let ebs_over_n0 = energy.system_bit_energy / n0;
    let per_dim_noise = (n0 / 2.0).sqrt();
    let contributions: Vec<Option<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeding::trial_rng(seed, STREAM_SEMI_ANALYTIC, t);
            let h = Complex64::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            ) * (0.5f64).sqrt();
            let eta = Complex64::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            ) * per_dim_noise;
            let signal = (h * es.sqrt() + eta).norm_sqr();
            let mut max_noise = 0.0f64;
            for _ in 1..hypotheses {
                let z = Complex64::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                ) * per_dim_noise;
                max_noise = max_noise.max(z.norm_sqr());
            }
            if signal > max_noise {
                let gamma_b = h.norm_sqr() * ebs_over_n0;
                Some(p_b_mpsk_conditional(order, gamma_b))
            } else {
                None
            }
        })
        .collect();
    let kept: Vec<f64> = contributions.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::InsufficientSamples { kept: 0, trials });
    }
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

const STREAM_SEMI_ANALYTIC: u64 = 0x5EA1;

// ---------------------------------------------------------------------------
// composed BER

/// The error-rate decomposition of one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerBreakdown {
    /// Index-pair error probability.
    pub p_ed: f64,
    /// Mapped-bit error probability.
    pub p_map: f64,
    /// Modulated-bit error probability given correct indices.
    pub p_b: f64,
    /// Modulated-bit error probability.
    pub p_mod: f64,
    /// Total bit error rate.
    pub p_cfim: f64,
}

impl BerBreakdown {
    pub const CSV_HEADER: &'static str = "p_ed,p_map,p_b,p_mod,p_cfim";

    pub fn to_csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.p_ed, self.p_map, self.p_b, self.p_mod, self.p_cfim)
    }
}

/// Knobs for [`ber_closed_form_with_options`].
#[derive(Debug, Clone, Copy)]
pub struct BerOptions {
    /// Below this index-error probability the ideal chi-square form of the
    /// modulated-bit error is used instead of the semi-analytic estimate.
    pub pb_ideal_threshold: f64,
    pub pb_trials: usize,
    pub seed: u64,
}

impl Default for BerOptions {
    fn default() -> Self {
        BerOptions {
            pb_ideal_threshold: 1e-4,
            pb_trials: 100_000,
            seed: 0,
        }
    }
}

/// Compose the complete analytic BER at one operating point.
pub fn ber_closed_form(
    config: &SystemConfig,
    energy: &EnergyBudget,
    trials_for_pb: usize,
    seed: u64,
) -> Result<BerBreakdown> {
    ber_closed_form_with_options(
        config,
        energy,
        BerOptions {
            pb_trials: trials_for_pb,
            seed,
            ..BerOptions::default()
        },
    )
}

pub fn ber_closed_form_with_options(
    config: &SystemConfig,
    energy: &EnergyBudget,
    options: BerOptions,
) -> Result<BerBreakdown> {
    let budget = config.bit_budget();
    let p_ed = p_ed_closed_form(config.subcarriers, config.codes, energy.symbol_snr);
    let snr_b = energy.system_bit_energy / energy.noise_density;
    let p_b = if p_ed < options.pb_ideal_threshold {
        p_b_mpsk_rayleigh_ideal(config.modulation_order, snr_b)
    } else {
        p_b_semi_analytic(config, energy, options.pb_trials, options.seed)?
    };
    let p_mod = p_b * (1.0 - p_ed) + 0.5 * p_ed;
    let p_map_v = p_map(budget.code_bits, budget.subcarrier_bits, p_ed);
    let p = budget.bits_per_block as f64;
    let p_cfim = budget.modulated_bits as f64 / p * p_mod + budget.mapped_bits() as f64 / p * p_map_v;
    Ok(BerBreakdown {
        p_ed,
        p_map: p_map_v,
        p_b,
        p_mod,
        p_cfim,
    })
}

// ---------------------------------------------------------------------------
// efficiency, complexity, peak power

/// Information bits per subcarrier slot: p / N.
pub fn spectral_efficiency(budget: &BitBudget) -> f64 {
    budget.bits_per_block as f64 / (1usize << budget.subcarrier_bits) as f64
}

/// Fraction of the per-block energy saved by carrying bits in indices
/// rather than waveform energy: 1 - p1/p. Accepts p1 = 0 (pure index
/// modulation), unlike the simulated chain.
pub fn energy_saving_parts(modulated_bits: u32, total_bits: u32) -> f64 {
    1.0 - modulated_bits as f64 / total_bits as f64
}

pub fn energy_saving(budget: &BitBudget) -> f64 {
    energy_saving_parts(budget.modulated_bits, budget.bits_per_block)
}

fn mod_demod_ops(modulated_bits: u32) -> u64 {
    3 * modulated_bits as u64 - 1
}

/// Operation count of the CFIM chain:
/// detector (N Nc K) plus, per block, spreading/despreading
/// (2 N L Nc - N Nc + L) and modulation/demodulation (3 p1 - 1).
pub fn complexity_cfim(config: &SystemConfig) -> u64 {
    let (k, n, nc, l) = (
        config.blocks as u64,
        config.subcarriers as u64,
        config.codes as u64,
        config.spreading_factor as u64,
    );
    let p1 = config.bit_budget().modulated_bits;
    let sled = n * nc * k;
    let spread_despread = 2 * n * l * nc - n * nc + l;
    sled + k * (spread_despread + mod_demod_ops(p1))
}

/// Operation count of direct-spread OFDM: every subcarrier carries one
/// spread symbol, so K*N*(3L - 1 + 3p1 - 1).
pub fn complexity_ds_ofdm(config: &SystemConfig) -> u64 {
    let (k, n, l) = (
        config.blocks as u64,
        config.subcarriers as u64,
        config.spreading_factor as u64,
    );
    let p1 = config.bit_budget().modulated_bits;
    k * n * (3 * l - 1 + mod_demod_ops(p1))
}

/// Operation count of direct-spread OFDM with index modulation and
/// maximum-likelihood detection, `g` of N subcarriers active per block:
/// `K (g ((N choose g) g! (2L-1) + gL) + 3p1 - 1) + 2^(g p1) M^g`.
pub fn complexity_ofdm_im(config: &SystemConfig, active_per_block: usize) -> Result<u64> {
    let g = active_per_block as u64;
    if g < 1 || active_per_block > config.subcarriers {
        return Err(Error::invalid("g", format!("{active_per_block} active of {} subcarriers", config.subcarriers)));
    }
    let (k, n, l, m) = (
        config.blocks as u64,
        config.subcarriers as u64,
        config.spreading_factor as u64,
        config.modulation_order as u64,
    );
    let p1 = config.bit_budget().modulated_bits as u64;
    // (N choose g) * g! = N (N-1) ... (N-g+1)
    let falling: u64 = (0..g).map(|i| n - i).product();
    let spread_despread = falling * (2 * l - 1) + g * l;
    let mld = 2u64.pow((g * p1) as u32) * m.pow(g as u32);
    Ok(k * (g * spread_despread + mod_demod_ops(p1 as u32)) + mld)
}

/// Maximum expected peak-to-average power ratios, (OFDM, CFIM):
/// all K*N subcarriers aligned give K*N*L; one active subcarrier per block
/// gives K*L, a reduction of exactly 1/N.
pub fn papr_bounds(config: &SystemConfig) -> (u64, u64) {
    let (k, n, l) = (
        config.blocks as u64,
        config.subcarriers as u64,
        config.spreading_factor as u64,
    );
    (k * n * l, k * l)
}

/// Summary metrics of a config and its direct-spread baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub spectral_efficiency: f64,
    pub energy_saving: f64,
    pub ops_cfim: u64,
    pub ops_ds_fim: u64,
    pub ops_ds_ofdm: u64,
    pub ops_ofdm_im: u64,
    pub papr_max_ofdm: u64,
    pub papr_max_cfim: u64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str =
        "spectral_efficiency,energy_saving,ops_cfim,ops_ds_fim,ops_ds_ofdm,ops_ofdm_im,papr_max_ofdm,papr_max_cfim";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.spectral_efficiency,
            self.energy_saving,
            self.ops_cfim,
            self.ops_ds_fim,
            self.ops_ds_ofdm,
            self.ops_ofdm_im,
            self.papr_max_ofdm,
            self.papr_max_cfim
        )
    }
}

/// Metrics for `config` with the OFDM-IM baseline activating
/// `im_active_per_block` subcarriers per block.
pub fn metrics_report(config: &SystemConfig, im_active_per_block: usize) -> Result<MetricsReport> {
    let budget = config.bit_budget();
    let ds_fim = SystemConfig {
        codes: 1,
        ..*config
    };
    let (papr_max_ofdm, papr_max_cfim) = papr_bounds(config);
    Ok(MetricsReport {
        spectral_efficiency: spectral_efficiency(&budget),
        energy_saving: energy_saving(&budget),
        ops_cfim: complexity_cfim(config),
        ops_ds_fim: complexity_cfim(&ds_fim),
        ops_ds_ofdm: complexity_ds_ofdm(config),
        ops_ofdm_im: complexity_ofdm_im(config, im_active_per_block)?,
        papr_max_ofdm,
        papr_max_cfim,
    })
}

/// One row of the cross-system comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub system: String,
    pub complexity: u64,
    pub spectral_efficiency: f64,
    pub energy_saving_percent: f64,
}

impl ComparisonRow {
    pub const CSV_HEADER: &'static str = "system,complexity,spectral_efficiency,energy_saving_percent";

    pub fn to_csv_row(&self) -> String {
        // system names carry commas ("CFIM(4,2)"), so that field is quoted
        format!(
            "\"{}\",{},{},{}",
            self.system.replace('"', "\"\""),
            self.complexity,
            self.spectral_efficiency,
            self.energy_saving_percent
        )
    }
}

fn floor_log2(x: u64) -> u32 {
    63 - x.leading_zeros()
}

fn binomial(n: u64, k: u64) -> u64 {
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Compare CFIM against its direct-spread baselines at one shape. The
/// OFDM-IM row activates `im_active_per_block` subcarriers and carries
/// `floor(log2 C(N, g))` index bits per block.
pub fn system_comparison(config: &SystemConfig, im_active_per_block: usize) -> Result<Vec<ComparisonRow>> {
    let budget = config.bit_budget();
    let p1 = budget.modulated_bits;
    let n = config.subcarriers;
    let mut rows = Vec::new();
    rows.push(ComparisonRow {
        system: format!("CFIM({},{})", n, config.codes),
        complexity: complexity_cfim(config),
        spectral_efficiency: spectral_efficiency(&budget),
        energy_saving_percent: 100.0 * energy_saving(&budget),
    });
    let ds_fim_cfg = SystemConfig { codes: 1, ..*config };
    let ds_fim_budget = ds_fim_cfg.bit_budget();
    rows.push(ComparisonRow {
        system: "DS-FIM".to_string(),
        complexity: complexity_cfim(&ds_fim_cfg),
        spectral_efficiency: spectral_efficiency(&ds_fim_budget),
        energy_saving_percent: 100.0 * energy_saving(&ds_fim_budget),
    });
    rows.push(ComparisonRow {
        system: "DS-OFDM".to_string(),
        complexity: complexity_ds_ofdm(config),
        spectral_efficiency: p1 as f64,
        energy_saving_percent: 0.0,
    });
    let g = im_active_per_block;
    let index_bits = floor_log2(binomial(n as u64, g as u64));
    let im_total = g as u32 * p1 + index_bits;
    rows.push(ComparisonRow {
        system: format!("DS-OFDM-IM({n},{g})"),
        complexity: complexity_ofdm_im(config, g)?,
        spectral_efficiency: im_total as f64 / n as f64,
        energy_saving_percent: 100.0 * energy_saving_parts(g as u32 * p1, im_total),
    });
    Ok(rows)
}

/// The reference comparison: CFIM(4,2), CFIM(4,8), CFIM(4,32), DS-FIM,
/// DS-OFDM, and DS-OFDM-IM(4,2), all at M = 2, L = 32, K = 1.
pub fn reference_comparison() -> Vec<ComparisonRow> {
    let mut rows = Vec::new();
    for nc in [2usize, 8, 32] {
        let cfg = SystemConfig::single_user(1, 4, nc, 2, 32).expect("valid shape");
        rows.push(system_comparison(&cfg, 2).expect("valid shape").remove(0));
    }
    let base = SystemConfig::single_user(1, 4, 2, 2, 32).expect("valid shape");
    rows.extend(system_comparison(&base, 2).expect("valid shape").into_iter().skip(1));
    rows
}
