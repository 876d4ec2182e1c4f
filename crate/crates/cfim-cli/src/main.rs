//! `cfim` — experiments for the code-frequency index modulation toolkit.
//!
//! Every subcommand is deterministic given its flags and `--seed`, at any
//! `--threads` setting. File outputs get a sidecar `<out>.manifest.json`
//! carrying the resolved parameters and a SHA-256 of each output.

mod manifest;
mod output;

use cfim::analysis;
use cfim::config::SystemConfig;
use cfim::seeding;
use cfim::sim::{self, Direction, MultiuserScenario};
use cfim::waveform::{self, PaprScheme};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Debug)]
pub(crate) enum CliError {
    Usage(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<cfim::Error> for CliError {
    fn from(e: cfim::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub(crate) type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "cfim",
    version,
    about = "Link-level experiments for code-frequency index modulation",
    after_help = "Exit codes: 0 success, 2 invalid parameters/usage, 3 I/O failure.\n\
                  All runs are reproducible: identical flags and --seed give byte-identical\n\
                  output files at any --threads setting. CFIM_SEED sets the default seed."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo BER sweep with the analytic curve alongside.
    ///
    /// CSV columns: ebs_over_n0_db, ber_total, ber_mapped, ber_modulated,
    /// index_error_rate, bits_simulated, error_count, mapped_bits,
    /// mapped_errors, modulated_bits, modulated_errors, blocks_simulated,
    /// index_errors, analytic_p_ed, analytic_p_map, analytic_p_b,
    /// analytic_p_mod, analytic_p_cfim.
    Ber(BerArgs),
    /// Spectral efficiency, energy saving, and operation counts for CFIM
    /// and its direct-spread baselines.
    ///
    /// CSV columns: system, complexity, spectral_efficiency,
    /// energy_saving_percent.
    Metrics(MetricsArgs),
    /// PAPR CCDF measurement over synthesized chip slots.
    ///
    /// CSV columns: threshold_db, then one ccdf_<scheme> column per
    /// requested scheme (cfim, ofdm, ofdm_im).
    Papr(PaprArgs),
    /// Synchronous multiuser BER (one output per user), or the per-user
    /// spectral-efficiency ceiling curve with --se-curve.
    ///
    /// BER files use the `ber` columns; the SE curve has columns
    /// users, max_se_bps_hz.
    Multiuser(MultiuserArgs),
}

/// Scheme shape; flags override the config file, which overrides defaults
/// (the 4-subcarrier, 2-code, BPSK, L=32 single-block setup).
#[derive(Args, Clone)]
struct ConfigArgs {
    /// Key-value config file (keys: K, N, Nc, M, L, U, ebs_over_n0_db).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Number of blocks.
    #[arg(long = "K", value_name = "COUNT")]
    blocks: Option<usize>,
    /// Subcarriers per block (power of two).
    #[arg(long = "N", value_name = "COUNT")]
    subcarriers: Option<usize>,
    /// Spreading codes per user codebook (power of two).
    #[arg(long = "Nc", value_name = "COUNT")]
    codes: Option<usize>,
    /// PSK modulation order (power of two, at least 2).
    #[arg(long = "M", value_name = "COUNT")]
    modulation_order: Option<usize>,
    /// Spreading factor: chips per code (power of two, >= U*Nc).
    #[arg(long = "L", value_name = "COUNT")]
    spreading_factor: Option<usize>,
    /// Number of users.
    #[arg(long = "U", value_name = "COUNT")]
    users: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> CliResult<SystemConfig> {
        let mut cfg = SystemConfig {
            blocks: 1,
            subcarriers: 4,
            codes: 2,
            modulation_order: 2,
            spreading_factor: 32,
            users: 1,
        };
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)?;
            let (parsed, _db) = SystemConfig::from_key_values(&text, &cfg)?;
            cfg = parsed;
        }
        if let Some(v) = self.blocks {
            cfg.blocks = v;
        }
        if let Some(v) = self.subcarriers {
            cfg.subcarriers = v;
        }
        if let Some(v) = self.codes {
            cfg.codes = v;
        }
        if let Some(v) = self.modulation_order {
            cfg.modulation_order = v;
        }
        if let Some(v) = self.spreading_factor {
            cfg.spreading_factor = v;
        }
        if let Some(v) = self.users {
            cfg.users = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Clone)]
pub(crate) struct RunArgs {
    /// Master seed for all randomness.
    #[arg(long, env = "CFIM_SEED", default_value_t = 0)]
    pub(crate) seed: u64,
    /// Worker threads (0 = all cores). Output never depends on this.
    #[arg(long, default_value_t = 0)]
    pub(crate) threads: usize,
    /// Output file; stdout when omitted. File outputs get a manifest.
    #[arg(long, value_name = "FILE")]
    pub(crate) out: Option<PathBuf>,
    /// Output encoding. Both carry identical values.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub(crate) format: Format,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct BerArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Chain to simulate: cfim, ds-fim, or ds-ofdm.
    #[arg(long, default_value = "cfim")]
    scheme: String,
    /// Operating points in dB: `start:stop:step` (inclusive) or a comma list.
    #[arg(long, default_value = "0:25:5")]
    grid: String,
    /// Minimum information bits per grid point.
    #[arg(long, default_value_t = 100_000)]
    min_bits: u64,
    /// After min_bits, keep running until this many bit errors (bounded by
    /// 100x min_bits).
    #[arg(long, default_value_t = 200)]
    max_errors: u64,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct MetricsArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Emit the six-row reference comparison (CFIM(4,2)/(4,8)/(4,32),
    /// DS-FIM, DS-OFDM, DS-OFDM-IM(4,2) at M=2, L=32, K=1).
    #[arg(long)]
    table1: bool,
    /// Emit the full single-config report instead of the comparison table.
    ///
    /// Columns: spectral_efficiency, energy_saving, ops_cfim, ops_ds_fim,
    /// ops_ds_ofdm, ops_ofdm_im, papr_max_ofdm, papr_max_cfim.
    #[arg(long, conflicts_with = "table1")]
    detail: bool,
    /// Active subcarriers per block for the OFDM-IM baseline row.
    #[arg(long, default_value_t = 2)]
    im_g: usize,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct PaprArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Schemes to measure (repeatable): cfim, ofdm, ofdm-im.
    #[arg(long = "scheme", value_name = "NAME")]
    schemes: Vec<String>,
    /// Transform length N_T (>= K*N).
    #[arg(long, default_value_t = 64)]
    fft_len: usize,
    /// CCDF thresholds in dB: `start:stop:step` or comma list.
    #[arg(long, default_value = "0:12:0.5")]
    thresholds: String,
    /// Transmissions per scheme; each contributes L chip-slot samples.
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Time-domain oversampling factor for interpolated peaks.
    #[arg(long, default_value_t = 1)]
    oversample: usize,
    /// Active subcarriers per block for ofdm-im.
    #[arg(long, default_value_t = 2)]
    im_g: usize,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct MultiuserArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Number of users (overrides --U).
    #[arg(long = "users")]
    user_count: Option<usize>,
    /// downlink or uplink.
    #[arg(long, default_value = "downlink")]
    direction: String,
    /// Emit the per-user maximum spectral efficiency over a user sweep
    /// instead of running BER.
    #[arg(long)]
    se_curve: bool,
    /// Largest user count of the --se-curve sweep (default: L).
    #[arg(long)]
    max_users: Option<usize>,
    /// Operating points in dB (as in `ber`).
    #[arg(long, default_value = "0:25:5")]
    grid: String,
    #[arg(long, default_value_t = 100_000)]
    min_bits: u64,
    #[arg(long, default_value_t = 200)]
    max_errors: u64,
    #[command(flatten)]
    run: RunArgs,
}

fn parse_grid(text: &str) -> CliResult<Vec<f64>> {
    let parse_one = |s: &str| -> CliResult<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| CliError::Usage(format!("grid value `{s}` is not a number")))
    };
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.len() {
        1 => text.split(',').map(parse_one).collect::<CliResult<Vec<_>>>()?,
        3 => {
            let start = parse_one(parts[0])?;
            let stop = parse_one(parts[1])?;
            let step = parse_one(parts[2])?;
            if step <= 0.0 || stop < start {
                return Err(CliError::Usage(format!(
                    "grid `{text}` must be start:stop:step with step > 0 and stop >= start"
                )));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            (0..count).map(|i| start + i as f64 * step).collect()
        }
        _ => {
            return Err(CliError::Usage(format!(
                "grid `{text}` must be start:stop:step or a comma list"
            )))
        }
    };
    if grid.is_empty() {
        return Err(CliError::Usage("grid is empty".to_string()));
    }
    Ok(grid)
}

fn in_pool<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> CliResult<T> {
    if threads == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build a {threads}-thread pool: {e}")))?;
    Ok(pool.install(job))
}

fn cmd_ber(args: &BerArgs) -> CliResult<()> {
    let config = args.config.resolve()?;
    let grid = parse_grid(&args.grid)?;
    let points = in_pool(args.run.threads, || {
        if args.scheme.eq_ignore_ascii_case("cfim") {
            sim::run_ber_sweep(&config, &grid, args.min_bits, args.max_errors, args.run.seed)
        } else {
            let scheme: sim::BaselineScheme = args.scheme.parse()?;
            sim::run_baseline_ber(scheme, &config, &grid, args.min_bits, args.max_errors, args.run.seed)
        }
    })??;
    let body = output::render_sweep(&points, args.run.format == Format::Json)?;
    let params = serde_json::json!({
        "scheme": args.scheme.to_ascii_lowercase(),
        "grid_db": grid,
        "min_bits": args.min_bits,
        "max_errors": args.max_errors,
        "format": format_name(args.run.format),
    });
    output::emit("ber", &args.run, &config, params, &body)
}

fn cmd_metrics(args: &MetricsArgs) -> CliResult<()> {
    let config = if args.table1 {
        SystemConfig::single_user(1, 4, 2, 2, 32).expect("reference shape")
    } else {
        args.config.resolve()?
    };
    let json = args.run.format == Format::Json;
    let body = if args.detail {
        let report = analysis::metrics_report(&config, args.im_g)?;
        output::render_report(&report, json)?
    } else {
        let rows = if args.table1 {
            analysis::reference_comparison()
        } else {
            analysis::system_comparison(&config, args.im_g)?
        };
        output::render_comparison(&rows, json)?
    };
    let params = serde_json::json!({
        "table1": args.table1,
        "detail": args.detail,
        "im_g": args.im_g,
        "format": format_name(args.run.format),
    });
    output::emit("metrics", &args.run, &config, params, &body)
}

fn cmd_papr(args: &PaprArgs) -> CliResult<()> {
    let config = args.config.resolve()?;
    let thresholds = parse_grid(&args.thresholds)?;
    let mut schemes: Vec<PaprScheme> = if args.schemes.is_empty() {
        vec![
            PaprScheme::Cfim,
            PaprScheme::Ofdm,
            PaprScheme::OfdmIm { active_per_block: args.im_g },
        ]
    } else {
        args.schemes
            .iter()
            .map(|s| {
                let parsed = s.parse::<PaprScheme>().map_err(CliError::from)?;
                Ok(match parsed {
                    PaprScheme::OfdmIm { .. } => PaprScheme::OfdmIm { active_per_block: args.im_g },
                    other => other,
                })
            })
            .collect::<CliResult<Vec<_>>>()?
    };
    schemes.dedup_by_key(|s| s.label());
    let columns = in_pool(args.run.threads, || -> cfim::Result<Vec<(String, Vec<f64>)>> {
        schemes
            .iter()
            .enumerate()
            .map(|(idx, &scheme)| {
                let seed = seeding::derive(args.run.seed, 0xCCDF, idx as u64);
                let ccdf = waveform::papr_ccdf(
                    scheme,
                    &config,
                    args.fft_len,
                    &thresholds,
                    args.trials,
                    seed,
                    args.oversample,
                )?;
                Ok((format!("ccdf_{}", scheme.label()), ccdf))
            })
            .collect()
    })??;
    let body = output::render_ccdf(&thresholds, &columns, args.run.format == Format::Json)?;
    let params = serde_json::json!({
        "schemes": schemes.iter().map(|s| s.label()).collect::<Vec<_>>(),
        "fft_len": args.fft_len,
        "thresholds_db": thresholds,
        "trials": args.trials,
        "oversample": args.oversample,
        "im_g": args.im_g,
        "format": format_name(args.run.format),
    });
    output::emit("papr", &args.run, &config, params, &body)
}

fn cmd_multiuser(args: &MultiuserArgs) -> CliResult<()> {
    let mut config = args.config.resolve()?;
    if let Some(u) = args.user_count {
        config = SystemConfig { users: u, ..config };
        config.validate()?;
    }
    if args.se_curve {
        let top = args.max_users.unwrap_or(config.spreading_factor);
        let mut rows = Vec::new();
        for users in 1..=top {
            let se = sim::max_se_per_user(
                config.modulation_order,
                config.subcarriers,
                config.spreading_factor,
                users,
            )?;
            rows.push((users, se));
        }
        let body = output::render_se_curve(&rows, args.run.format == Format::Json)?;
        let params = serde_json::json!({
            "se_curve": true,
            "max_users": top,
            "format": format_name(args.run.format),
        });
        return output::emit("multiuser", &args.run, &config, params, &body);
    }
    let direction: Direction = args
        .direction
        .parse()
        .map_err(|e: cfim::Error| CliError::Usage(e.to_string()))?;
    let grid = parse_grid(&args.grid)?;
    let scenario = MultiuserScenario { config, direction };
    let per_user = in_pool(args.run.threads, || {
        sim::run_multiuser(&scenario, &grid, args.min_bits, args.max_errors, args.run.seed)
    })??;
    let json = args.run.format == Format::Json;
    let bodies: Vec<String> = per_user
        .iter()
        .map(|points| output::render_sweep(points, json))
        .collect::<CliResult<Vec<_>>>()?;
    let params = serde_json::json!({
        "direction": args.direction,
        "grid_db": grid,
        "min_bits": args.min_bits,
        "max_errors": args.max_errors,
        "users": config.users,
        "format": format_name(args.run.format),
    });
    output::emit_per_user("multiuser", &args.run, &config, params, &bodies)
}

fn format_name(f: Format) -> &'static str {
    match f {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Ber(args) => cmd_ber(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Papr(args) => cmd_papr(args),
        Command::Multiuser(args) => cmd_multiuser(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
