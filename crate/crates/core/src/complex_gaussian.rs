//! Standard complex Gaussian sampling and its closed-form laws.
//!
//! A standard complex Gaussian `w` has density `exp(-|w|^2) / pi`, so `|w|^2`
//! is unit-exponential and `arg w` is uniform. Samples are drawn in exactly
//! that form: modulus squared by inverse CDF, phase uniform. This makes the
//! conditioned laws used by the omega sampler exact.
//!
//! Randomness comes from Philox4x32-10, a counter-based generator: every output
//! block is a pure function of `(key, counter)`, so trials can run on any
//! number of workers and still reproduce bit for bit.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{GefError, Result};

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = (a as u64) * (b as u64);
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
#[inline]
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// SplitMix64 finalizer. A bijection on `u64`.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Position in a counter-based random stream.
///
/// Two states with equal fields produce identical sequences. The state is a
/// plain value: advancing it never touches anything shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngState {
    pub master_seed: u64,
    pub stream_id: u32,
    pub counter: u64,
}

impl RngState {
    pub fn new(master_seed: u64, stream_id: u32) -> Self {
        RngState {
            master_seed,
            stream_id,
            counter: 0,
        }
    }

    /// The 128-bit block at the current counter; advances the counter by one.
    #[inline]
    pub fn next_block(&mut self) -> [u32; 4] {
        let ctr = [
            self.counter as u32,
            (self.counter >> 32) as u32,
            self.stream_id,
            0,
        ];
        let key = [self.master_seed as u32, (self.master_seed >> 32) as u32];
        self.counter = self.counter.wrapping_add(1);
        philox4x32_10(ctr, key)
    }

    /// Two independent uniforms in `[0, 1)` with 53-bit resolution, from one block.
    #[inline]
    pub fn next_uniform_pair(&mut self) -> (f64, f64) {
        let b = self.next_block();
        let a = ((b[1] as u64) << 32) | b[0] as u64;
        let c = ((b[3] as u64) << 32) | b[2] as u64;
        (unit_f64(a), unit_f64(c))
    }

    /// Draws a complex number with the given modulus-squared quantile function
    /// applied to the first uniform and a uniform phase from the second.
    #[inline]
    pub(crate) fn next_polar(&mut self, modulus_sq: impl FnOnce(f64) -> f64) -> Complex64 {
        let (u, v) = self.next_uniform_pair();
        Complex64::from_polar(modulus_sq(u).sqrt(), TAU * v)
    }

    /// Standard complex Gaussian: `|w|^2 ~ Exp(1)`, phase uniform.
    #[inline]
    pub fn next_standard_complex(&mut self) -> Complex64 {
        // u < 1, so the log is finite
        self.next_polar(|u| -(-u).ln_1p())
    }
}

#[inline(always)]
fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Functional form of [`RngState::next_standard_complex`].
pub fn sample_standard_complex(mut state: RngState) -> (Complex64, RngState) {
    let w = state.next_standard_complex();
    (w, state)
}

/// State for trial `trial_index` of stream `stream_id` under `master_seed`.
///
/// The trial index is folded into the Philox key through a bijective mixer, so
/// for a fixed master seed distinct trials get distinct keys and independent
/// streams. Pure function; trials may be evaluated in any order.
pub fn derive_trial_rng(master_seed: u64, stream_id: u32, trial_index: u64) -> RngState {
    let key = mix64(master_seed ^ mix64(trial_index.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    RngState {
        master_seed: key,
        stream_id,
        counter: 0,
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 {
        Ok(())
    } else {
        Err(GefError::domain(format!("lambda must be >= 0, got {lambda}")))
    }
}

/// `P(|w| >= lambda) = exp(-lambda^2)`.
pub fn gaussian_tail(lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok((-lambda * lambda).exp())
}

/// Natural log of [`gaussian_tail`].
pub fn ln_gaussian_tail(lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(-lambda * lambda)
}

/// `P(|w| <= lambda) = 1 - exp(-lambda^2)`.
///
/// Computed as the complement of [`gaussian_tail`] so the two sum to exactly
/// 1.0. Use [`ln_gaussian_small_ball`] when full relative accuracy at tiny
/// `lambda` matters.
pub fn gaussian_small_ball(lambda: f64) -> Result<f64> {
    Ok(1.0 - gaussian_tail(lambda)?)
}

/// Natural log of [`gaussian_small_ball`].
pub fn ln_gaussian_small_ball(lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if lambda == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(ln_small_ball_from_ln_radius(lambda.ln()))
}

/// `ln P(|w| <= exp(ln_lambda))`, valid where `exp(ln_lambda)` itself underflows.
pub fn ln_small_ball_from_ln_radius(ln_lambda: f64) -> f64 {
    let ln_x = 2.0 * ln_lambda; // ln(lambda^2)
    if ln_x < -40.0 {
        // 1 - e^{-x} = x (1 - x/2 + ...), and x < 1e-17 here
        ln_x - 0.5 * ln_x.exp()
    } else {
        (-(-ln_x.exp()).exp_m1()).ln()
    }
}
