//! Flat Rayleigh fading plus additive white Gaussian noise.
//!
//! Each (block, subcarrier) pair draws one circularly-symmetric complex
//! Gaussian gain with unit mean-square that multiplies all L chips of its
//! row; every chip independently picks up complex noise of total variance
//! N_0 (N_0/2 per real dimension). All randomness is fixed by the seed.

use crate::config::EnergyBudget;
use crate::error::{Error, Result};
use crate::modem::{ReceivedFrame, SpreadFrame};
use crate::seeding;
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

/// Per-(block, subcarrier) channel gains of one realization. The receiver
/// is assumed to know these exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// K x N complex gains, unit mean-square by construction.
    pub gains: Array2<Complex64>,
}

fn complex_normal<R: Rng>(rng: &mut R, per_dim_std: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * per_dim_std, im * per_dim_std)
}

fn draw_gains<R: Rng>(rng: &mut R, blocks: usize, subcarriers: usize) -> Array2<Complex64> {
    let per_dim = (0.5f64).sqrt();
    Array2::from_shape_fn((blocks, subcarriers), |_| complex_normal(rng, per_dim))
}

fn add_noise<R: Rng>(frame: &mut ReceivedFrame, rng: &mut R, noise_density: f64) {
    let per_dim = (noise_density / 2.0).sqrt();
    for block in &mut frame.blocks {
        for cell in block.iter_mut() {
            *cell += complex_normal(rng, per_dim);
        }
    }
}

/// Single-user channel: `Y[i][l] = h[i] * X[i][l] + Z[i][l]` per block.
pub fn apply(frame: &SpreadFrame, energy: &EnergyBudget, seed: u64) -> (ReceivedFrame, ChannelRealization) {
    let mut rng = seeding::trial_rng(seed, 0, 0);
    apply_with_rng(frame, energy, &mut rng)
}

/// As [`apply`] but drawing from a caller-owned generator.
pub fn apply_with_rng<R: Rng>(
    frame: &SpreadFrame,
    energy: &EnergyBudget,
    rng: &mut R,
) -> (ReceivedFrame, ChannelRealization) {
    let gains = draw_gains(rng, frame.num_blocks(), frame.subcarriers());
    let mut received = fade(frame, &gains);
    add_noise(&mut received, rng, energy.noise_density);
    (received, ChannelRealization { gains })
}

fn fade(frame: &SpreadFrame, gains: &Array2<Complex64>) -> ReceivedFrame {
    let blocks = frame
        .blocks
        .iter()
        .enumerate()
        .map(|(k, chips)| {
            let mut out = chips.clone();
            for i in 0..out.nrows() {
                let h = gains[(k, i)];
                for l in 0..out.ncols() {
                    out[(i, l)] *= h;
                }
            }
            out
        })
        .collect();
    SpreadFrame { blocks }
}

fn check_shapes(frames: &[SpreadFrame]) -> Result<()> {
    let first = frames
        .first()
        .ok_or_else(|| Error::framing("multiuser superposition needs at least one frame"))?;
    if frames.iter().any(|f| !f.same_shape(first)) {
        return Err(Error::framing("user frames disagree on (K, N, L) shape"));
    }
    Ok(())
}

/// Downlink: all users' frames superpose at the transmitter, so one gain
/// field multiplies the sum and one noise field is added.
pub fn apply_multiuser_downlink(
    frames: &[SpreadFrame],
    energy: &EnergyBudget,
    seed: u64,
) -> Result<(ReceivedFrame, ChannelRealization)> {
    let mut rng = seeding::trial_rng(seed, 0, 0);
    apply_multiuser_downlink_with_rng(frames, energy, &mut rng)
}

pub fn apply_multiuser_downlink_with_rng<R: Rng>(
    frames: &[SpreadFrame],
    energy: &EnergyBudget,
    rng: &mut R,
) -> Result<(ReceivedFrame, ChannelRealization)> {
    check_shapes(frames)?;
    let gains = draw_gains(rng, frames[0].num_blocks(), frames[0].subcarriers());
    let mut received = fade(&superpose(frames), &gains);
    add_noise(&mut received, rng, energy.noise_density);
    Ok((received, ChannelRealization { gains }))
}

/// Uplink: each user's frame fades independently before superposing at the
/// base station; one noise field is added there.
pub fn apply_multiuser_uplink(
    frames: &[SpreadFrame],
    energy: &EnergyBudget,
    seed: u64,
) -> Result<(ReceivedFrame, Vec<ChannelRealization>)> {
    let mut rng = seeding::trial_rng(seed, 0, 0);
    apply_multiuser_uplink_with_rng(frames, energy, &mut rng)
}

pub fn apply_multiuser_uplink_with_rng<R: Rng>(
    frames: &[SpreadFrame],
    energy: &EnergyBudget,
    rng: &mut R,
) -> Result<(ReceivedFrame, Vec<ChannelRealization>)> {
    check_shapes(frames)?;
    let realizations: Vec<ChannelRealization> = frames
        .iter()
        .map(|f| ChannelRealization {
            gains: draw_gains(rng, f.num_blocks(), f.subcarriers()),
        })
        .collect();
    let faded: Vec<ReceivedFrame> = frames
        .iter()
        .zip(&realizations)
        .map(|(f, r)| fade(f, &r.gains))
        .collect();
    let mut received = superpose(&faded);
    add_noise(&mut received, rng, energy.noise_density);
    Ok((received, realizations))
}

fn superpose(frames: &[SpreadFrame]) -> SpreadFrame {
    let mut total = frames[0].clone();
    for frame in &frames[1..] {
        for (acc, add) in total.blocks.iter_mut().zip(&frame.blocks) {
            *acc += add;
        }
    }
    total
}
