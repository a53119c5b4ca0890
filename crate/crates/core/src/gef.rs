//! Certified finite truncations of the Gaussian entire function
//! `psi(z) = sum_k zeta_k z^k / sqrt(k!)`.
//!
//! A [`TruncatedGef`] keeps the first `N + 1` coefficients together with a
//! bound `tau` on the discarded tail over the disc `|z| <= r_cert`. The bound
//! holds on the envelope event `|zeta_k| <= k` for all `k > N`; the log of the
//! probability that this envelope fails is stored alongside it.

use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::complex_gaussian::RngState;
use crate::error::{GefError, Result};

/// Relative slack allowed when comparing a requested radius with the
/// certified one.
pub(crate) const RADIUS_SLACK: f64 = 1e-12;

/// How many coefficients to keep for a given radius: `N = max(ceil(alpha r^2), min_degree)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    pub alpha: f64,
    pub min_degree: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy {
            alpha: 8.0,
            min_degree: 24,
        }
    }
}

/// Circle sampling density for maximum-modulus searches.
///
/// `psi` has about `rho^2` zeros inside `|z| <= rho`, so `|psi|` oscillates on
/// an angular scale of roughly `1 / rho^2`; `per_zero` points are spent per
/// unit of `rho^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPolicy {
    pub min_points: usize,
    pub per_zero: f64,
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy {
            min_points: 256,
            per_zero: 64.0,
        }
    }
}

impl GridPolicy {
    pub fn n_points(&self, rho: f64) -> usize {
        self.min_points.max((self.per_zero * rho * rho).ceil() as usize)
    }
}

pub fn truncation_degree(r: f64, policy: TruncationPolicy) -> Result<usize> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(GefError::domain(format!("radius must be positive, got {r}")));
    }
    Ok(((policy.alpha * r * r).ceil() as usize).max(policy.min_degree))
}

/// Tail certificate for a truncation at degree `N` on the disc of radius `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound {
    /// `sum_{k>N} k r^k / sqrt(k!)`.
    pub tau: f64,
    /// `ln sum_{k>N} exp(-k^2)`, the log-probability that `|zeta_k| > k` for some `k > N`.
    pub failure_log_prob: f64,
}

/// Tail bound; requires `N >= ceil(8 r^2)` so consecutive summands shrink by at
/// least a factor of about `1/sqrt(8)` and the series converges geometrically.
pub fn tail_bound(degree: usize, r: f64) -> Result<TailBound> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(GefError::domain(format!("radius must be positive, got {r}")));
    }
    let required = (8.0 * r * r).ceil() as usize;
    if degree < required.max(1) {
        return Err(GefError::DegreeTooSmall {
            degree,
            radius: r,
            required: required.max(1),
        });
    }

    // first summand k = N + 1 in log space; no factorials are formed
    let k0 = degree + 1;
    let ln_fact: f64 = (2..=k0).map(|j| (j as f64).ln()).sum();
    let ln_first = (k0 as f64).ln() + k0 as f64 * r.ln() - 0.5 * ln_fact;
    let first = ln_first.exp();

    let mut term = first;
    let mut tau = first;
    let mut k = k0 as f64;
    while term > 1e-30 * tau && term > 0.0 {
        // t_{k+1} / t_k = (k + 1) / k * r / sqrt(k + 1)
        term *= (k + 1.0) / k * r / (k + 1.0).sqrt();
        tau += term;
        k += 1.0;
    }

    let lead = (k0 as f64) * (k0 as f64);
    let rest: f64 = (1..64u32)
        .map(|j| {
            let kj = (k0 as f64) + j as f64;
            (lead - kj * kj).exp()
        })
        .sum();
    Ok(TailBound {
        tau,
        failure_log_prob: -lead + rest.ln_1p(),
    })
}

fn inv_sqrt_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| (0..4096).map(|k| 1.0 / ((k as f64) + 1.0).sqrt()).collect())
}

/// `1 / sqrt(k + 1)`.
#[inline(always)]
fn inv_sqrt_succ(table: &[f64], k: usize) -> f64 {
    match table.get(k) {
        Some(&v) => v,
        None => 1.0 / ((k as f64) + 1.0).sqrt(),
    }
}

/// A truncated sample of the Gaussian entire function with its tail certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GefRecord", into = "GefRecord")]
pub struct TruncatedGef {
    coefficients: Vec<Complex64>,
    certified_radius: f64,
    tail_bound: f64,
    tail_failure_log_prob: f64,
}

impl TruncatedGef {
    /// Wraps sampled coefficients and certifies them on `|z| <= radius` with
    /// [`tail_bound`]. The degree must satisfy the tail-bound precondition.
    pub fn with_tail(coefficients: Vec<Complex64>, radius: f64) -> Result<Self> {
        if coefficients.len() < 2 {
            return Err(GefError::domain("need at least two coefficients"));
        }
        let tb = tail_bound(coefficients.len() - 1, radius)?;
        Ok(TruncatedGef {
            coefficients,
            certified_radius: radius,
            tail_bound: tb.tau,
            tail_failure_log_prob: tb.failure_log_prob,
        })
    }

    /// A deterministic function equal to its own truncation: the tail is
    /// identically zero, so `tau = 0` and the envelope never fails. Used for
    /// fixtures such as `psi(z) = z - a`.
    pub fn polynomial(coefficients: Vec<Complex64>, radius: f64) -> Result<Self> {
        if coefficients.len() < 2 {
            return Err(GefError::domain("need at least two coefficients"));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(GefError::domain(format!("radius must be positive, got {radius}")));
        }
        Ok(TruncatedGef {
            coefficients,
            certified_radius: radius,
            tail_bound: 0.0,
            tail_failure_log_prob: f64::NEG_INFINITY,
        })
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn certified_radius(&self) -> f64 {
        self.certified_radius
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn tail_failure_log_prob(&self) -> f64 {
        self.tail_failure_log_prob
    }

    /// Sum of the kept terms at `z`, via `t_0 = 1`, `t_{k+1} = t_k z / sqrt(k+1)`.
    ///
    /// Inside the certified disc the result is within `tail_bound()` of the
    /// untruncated function on the envelope event.
    #[inline]
    pub fn evaluate(&self, z: Complex64) -> Complex64 {
        let table = inv_sqrt_table();
        let mut t = Complex64::new(1.0, 0.0);
        let mut acc = self.coefficients[0];
        for (k, c) in self.coefficients.iter().enumerate().skip(1) {
            t = t * z * inv_sqrt_succ(table, k - 1);
            acc += c * t;
        }
        acc
    }

    /// Power-series coefficients `zeta_k / sqrt(k!)`, built by the same
    /// recurrence as [`evaluate`](Self::evaluate).
    pub fn polynomial_coefficients(&self) -> Vec<Complex64> {
        let table = inv_sqrt_table();
        let mut w = 1.0;
        self.coefficients
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                if k > 0 {
                    w *= inv_sqrt_succ(table, k - 1);
                }
                c * w
            })
            .collect()
    }

    pub fn is_identically_zero(&self) -> bool {
        self.coefficients.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    /// Errors unless the closed disc `center + radius D` lies in the certified disc.
    pub fn check_disc(&self, center: Complex64, radius: f64) -> Result<()> {
        if !(radius >= 0.0) {
            return Err(GefError::domain(format!("radius must be nonnegative, got {radius}")));
        }
        let reach = center.norm() + radius;
        if reach > self.certified_radius * (1.0 + RADIUS_SLACK) {
            return Err(GefError::Certification(format!(
                "disc of radius {radius} at {center} reaches {reach}, beyond certified radius {}",
                self.certified_radius
            )));
        }
        Ok(())
    }

    /// Coefficient-wise sum of two truncations of the same degree. The tail
    /// fields of `self` are kept.
    pub fn coefficient_sum(&self, other: &TruncatedGef) -> Result<TruncatedGef> {
        if self.degree() != other.degree() {
            return Err(GefError::domain("degrees differ"));
        }
        let mut out = self.clone();
        for (a, b) in out.coefficients.iter_mut().zip(&other.coefficients) {
            *a += b;
        }
        Ok(out)
    }

    /// Returns a copy keeping only the first `degree + 1` coefficients,
    /// recertified at the same radius.
    pub fn truncated_to(&self, degree: usize) -> Result<TruncatedGef> {
        if degree > self.degree() {
            return Err(GefError::domain("cannot extend a truncation"));
        }
        TruncatedGef::with_tail(self.coefficients[..=degree].to_vec(), self.certified_radius)
    }
}

/// Samples a truncation certified on `|z| <= r`, drawing `N + 1` coefficients
/// from `state` with `N = truncation_degree(r, policy)`.
pub fn sample_gef(r: f64, state: &mut RngState, policy: TruncationPolicy) -> Result<TruncatedGef> {
    let degree = truncation_degree(r, policy)?;
    let coefficients = (0..=degree).map(|_| state.next_standard_complex()).collect();
    TruncatedGef::with_tail(coefficients, r)
}

/// `max |psi|` over equispaced points of the circle `|z| = rho`; by the
/// maximum principle this is the maximum over the disc up to grid resolution.
pub fn max_modulus_on_circle(gef: &TruncatedGef, rho: f64, grid: GridPolicy) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(GefError::domain(format!("rho must be positive, got {rho}")));
    }
    gef.check_disc(Complex64::new(0.0, 0.0), rho)?;
    let n = grid.n_points(rho);
    let step = std::f64::consts::TAU / n as f64;
    Ok((0..n)
        .map(|j| gef.evaluate(Complex64::from_polar(rho, step * j as f64)).norm())
        .fold(0.0, f64::max))
}

#[derive(Serialize, Deserialize)]
struct GefRecord {
    degree: usize,
    certified_radius: f64,
    tail_bound: f64,
    /// `null` when the tail is identically zero.
    tail_failure_log_prob: Option<f64>,
    coefficients: Vec<[f64; 2]>,
}

impl From<TruncatedGef> for GefRecord {
    fn from(g: TruncatedGef) -> Self {
        GefRecord {
            degree: g.degree(),
            certified_radius: g.certified_radius,
            tail_bound: g.tail_bound,
            tail_failure_log_prob: g
                .tail_failure_log_prob
                .is_finite()
                .then_some(g.tail_failure_log_prob),
            coefficients: g.coefficients.iter().map(|c| [c.re, c.im]).collect(),
        }
    }
}

impl TryFrom<GefRecord> for TruncatedGef {
    type Error = GefError;

    fn try_from(r: GefRecord) -> Result<Self> {
        if r.degree < 1 || r.coefficients.len() != r.degree + 1 {
            return Err(GefError::domain(format!(
                "degree {} does not match {} coefficients",
                r.degree,
                r.coefficients.len()
            )));
        }
        if !(r.certified_radius > 0.0) || !(r.tail_bound >= 0.0) {
            return Err(GefError::domain("invalid certificate fields"));
        }
        Ok(TruncatedGef {
            coefficients: r.coefficients.iter().map(|&[re, im]| Complex64::new(re, im)).collect(),
            certified_radius: r.certified_radius,
            tail_bound: r.tail_bound,
            tail_failure_log_prob: r.tail_failure_log_prob.unwrap_or(f64::NEG_INFINITY),
        })
    }
}
