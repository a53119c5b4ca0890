//! Monte Carlo drivers: event-probability estimators with certified
//! outcomes, zero-count histograms, the explicit hole-forcing coefficient
//! event (its exact probability, a conditional sampler and the deterministic
//! inequality chain), and the power-law fit of `-log p(r)`.
//!
//! Every trial draws from `derive_trial_rng(master_seed, stream, i)` and
//! outcomes are reduced by integer addition, so results do not depend on how
//! many worker threads run the trials.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::complex_gaussian::{derive_trial_rng, ln_gaussian_tail, ln_small_ball_from_ln_radius, RngState};
use crate::error::{GefError, Result};
use crate::gef::{max_modulus_on_circle, sample_gef, truncation_degree, GridPolicy, TruncatedGef, TruncationPolicy};
use crate::potential::{
    circle_mean_log_modulus, local_sup_log_modulus, probe_deviation, CircleGrid, LogMode, PoissonProbe, ProbePlacement,
};
use crate::stats::{wilson_interval, Z_95};
use crate::zeros::{count_verdict, winding_count, HoleVerdict};

/// Where the local supremum event is probed, as a fraction of `r`
/// along the positive real axis.
pub const LOCAL_SUP_CENTER_FRACTION: f64 = 0.7;

/// Events whose probability can be estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventSpec {
    /// No zeros in `|z| <= r`.
    Hole,
    /// `|n(r) / r^2 - 1| >= delta`.
    CountDeviation,
    /// `|log M(r) / r^2 - 1/2| >= delta`.
    LogMDeviation,
    /// `mean_{|z|=r} log|psi| / r^2 <= 1/2 - delta`.
    CircleMeanLow,
    /// `sup_{|z - z0| <= delta r} log|psi| <= (1/2 - 3 delta) |z0|^2` with
    /// `z0 = 0.7 r`.
    Claim32Failure,
    /// `mean_{|z|=r} |log|psi|| > 10 r^2`.
    Claim34Failure,
}

impl EventSpec {
    pub const ALL: [EventSpec; 6] = [
        EventSpec::Hole,
        EventSpec::CountDeviation,
        EventSpec::LogMDeviation,
        EventSpec::CircleMeanLow,
        EventSpec::Claim32Failure,
        EventSpec::Claim34Failure,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventSpec::Hole => "hole",
            EventSpec::CountDeviation => "count_deviation",
            EventSpec::LogMDeviation => "logM_deviation",
            EventSpec::CircleMeanLow => "circle_mean_low",
            EventSpec::Claim32Failure => "claim32_failure",
            EventSpec::Claim34Failure => "claim34_failure",
        }
    }

    /// RNG stream reserved for this event.
    pub fn stream_id(self) -> u32 {
        match self {
            EventSpec::Hole => 1,
            EventSpec::CountDeviation => 2,
            EventSpec::LogMDeviation => 3,
            EventSpec::CircleMeanLow => 4,
            EventSpec::Claim32Failure => 5,
            EventSpec::Claim34Failure => 6,
        }
    }

    pub fn needs_delta(self) -> bool {
        !matches!(self, EventSpec::Hole | EventSpec::Claim34Failure)
    }
}

impl fmt::Display for EventSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EventSpec {
    type Err = GefError;

    fn from_str(s: &str) -> Result<Self> {
        EventSpec::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| GefError::domain(format!("unknown event {s:?}")))
    }
}

/// Monte Carlo estimate of an event probability.
///
/// Uncertain trials are kept: `p_low_bound` counts them as failures,
/// `p_high_bound` as successes, and `p_hat` with its Wilson interval uses the
/// certified trials only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub event_name: String,
    pub r: f64,
    pub delta: Option<f64>,
    pub trials: u64,
    pub successes: u64,
    pub uncertain: u64,
    pub p_hat: f64,
    pub p_low_bound: f64,
    pub p_high_bound: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub master_seed: u64,
}

impl McEstimate {
    fn from_tally(event: EventSpec, r: f64, delta: Option<f64>, tally: Tally, master_seed: u64) -> Self {
        let n = tally.trials as f64;
        let certified = tally.trials - tally.uncertain;
        let p_low_bound = tally.successes as f64 / n;
        let p_high_bound = (tally.successes + tally.uncertain) as f64 / n;
        let (p_hat, ci_low, ci_high) = if certified > 0 {
            let (lo, hi) = wilson_interval(tally.successes, certified, Z_95);
            (tally.successes as f64 / certified as f64, lo, hi)
        } else {
            (0.5 * (p_low_bound + p_high_bound), 0.0, 1.0)
        };
        McEstimate {
            event_name: event.name().to_string(),
            r,
            delta,
            trials: tally.trials,
            successes: tally.successes,
            uncertain: tally.uncertain,
            p_hat,
            p_low_bound,
            p_high_bound,
            ci_low,
            ci_high,
            master_seed,
        }
    }

    /// `ln p_hat`, or `None` when no success was observed.
    pub fn log_p_hat(&self) -> Option<f64> {
        (self.p_hat > 0.0).then(|| self.p_hat.ln())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Success,
    Failure,
    Uncertain,
}

impl Outcome {
    fn from_bool(b: bool) -> Self {
        if b {
            Outcome::Success
        } else {
            Outcome::Failure
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tally {
    trials: u64,
    successes: u64,
    uncertain: u64,
}

impl Tally {
    fn add(mut self, o: Outcome) -> Self {
        self.trials += 1;
        match o {
            Outcome::Success => self.successes += 1,
            Outcome::Uncertain => self.uncertain += 1,
            Outcome::Failure => {}
        }
        self
    }

    fn merge(self, o: Tally) -> Tally {
        Tally {
            trials: self.trials + o.trials,
            successes: self.successes + o.successes,
            uncertain: self.uncertain + o.uncertain,
        }
    }
}

/// Signed circle mean, nudging the grid phase off an exact zero if one is hit.
fn robust_circle_mean(gef: &TruncatedGef, r: f64, mode: LogMode) -> Result<f64> {
    let grid = CircleGrid::new(r)?;
    let mut phase = 0.0;
    for _ in 0..8 {
        match circle_mean_log_modulus(gef, &grid.with_phase(phase), mode) {
            Err(GefError::SingularGrid { .. }) => phase += 0.5 / grid.n_points as f64,
            other => return other,
        }
    }
    circle_mean_log_modulus(gef, &grid.with_phase(phase), mode)
}

fn run_trial(event: EventSpec, r: f64, delta: f64, state: &mut RngState) -> Result<Outcome> {
    let policy = TruncationPolicy::default();
    let cert = if r > 0.0 { r } else { 1.0 };
    let gef = sample_gef(cert, state, policy)?;
    let r2 = r * r;
    let origin = Complex64::new(0.0, 0.0);
    Ok(match event {
        EventSpec::Hole => match crate::zeros::classify_hole(&gef, r)? {
            HoleVerdict::Hole => Outcome::Success,
            HoleVerdict::NotHole { .. } => Outcome::Failure,
            HoleVerdict::Uncertain { .. } => Outcome::Uncertain,
        },
        EventSpec::CountDeviation => {
            let cr = winding_count(&gef, origin, r)?;
            match count_verdict(&cr) {
                HoleVerdict::Uncertain { .. } => Outcome::Uncertain,
                _ => Outcome::from_bool((cr.count as f64 / r2 - 1.0).abs() >= delta),
            }
        }
        EventSpec::LogMDeviation => {
            let m = max_modulus_on_circle(&gef, r, GridPolicy::default())?;
            Outcome::from_bool((m.ln() / r2 - 0.5).abs() >= delta)
        }
        EventSpec::CircleMeanLow => {
            let mean = robust_circle_mean(&gef, r, LogMode::Signed)?;
            Outcome::from_bool(mean / r2 <= 0.5 - delta)
        }
        EventSpec::Claim32Failure => {
            let z0 = Complex64::new(LOCAL_SUP_CENTER_FRACTION * r, 0.0);
            let sup = local_sup_log_modulus(&gef, z0, delta * r)?;
            Outcome::from_bool(sup <= (0.5 - 3.0 * delta) * z0.norm_sqr())
        }
        EventSpec::Claim34Failure => {
            let mean = robust_circle_mean(&gef, r, LogMode::Absolute)?;
            Outcome::from_bool(mean > 10.0 * r2)
        }
    })
}

/// Estimates `P(event)` at radius `r` from `trials` independent samples.
pub fn estimate_event_probability(
    event: EventSpec,
    r: f64,
    delta: Option<f64>,
    trials: u64,
    master_seed: u64,
) -> Result<McEstimate> {
    if trials == 0 {
        return Err(GefError::domain("trials must be at least 1"));
    }
    let r_ok = match event {
        EventSpec::Hole => r >= 0.0,
        _ => r > 0.0,
    };
    if !r_ok || !r.is_finite() {
        return Err(GefError::domain(format!("invalid radius {r} for {event}")));
    }
    let d = match (event.needs_delta(), delta) {
        (true, Some(d)) if d > 0.0 && d <= 0.25 => d,
        (true, Some(d)) => return Err(GefError::domain(format!("delta must lie in (0, 1/4], got {d}"))),
        (true, None) => return Err(GefError::domain(format!("{event} requires delta"))),
        (false, _) => 0.0,
    };
    let stream = event.stream_id();
    let tally = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut state = derive_trial_rng(master_seed, stream, i);
            run_trial(event, r, d, &mut state)
        })
        .try_fold(Tally::default, |t, o| o.map(|o| t.add(o)))
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;
    let delta = if event.needs_delta() { delta } else { None };
    Ok(McEstimate::from_tally(event, r, delta, tally, master_seed))
}

/// Distribution of the certified zero count in `|z - center| <= radius`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CountHistogram {
    /// `counts[n]` is the number of certified trials with exactly `n` zeros.
    pub counts: Vec<u64>,
    pub uncertain: u64,
    pub trials: u64,
}

impl CountHistogram {
    pub fn certified(&self) -> u64 {
        self.trials - self.uncertain
    }

    pub fn mean(&self) -> f64 {
        let total: u64 = self.counts.iter().enumerate().map(|(n, &c)| n as u64 * c).sum();
        total as f64 / self.certified() as f64
    }

    fn record(mut self, n: Option<usize>) -> Self {
        self.trials += 1;
        match n {
            Some(n) => {
                if self.counts.len() <= n {
                    self.counts.resize(n + 1, 0);
                }
                self.counts[n] += 1;
            }
            None => self.uncertain += 1,
        }
        self
    }

    fn merge(mut self, other: CountHistogram) -> Self {
        if self.counts.len() < other.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.uncertain += other.uncertain;
        self.trials += other.trials;
        self
    }
}

/// Samples `trials` functions certified on `|z| <= certified_radius` and
/// histograms the winding count of the disc `center + radius D`.
pub fn count_histogram(
    center: Complex64,
    radius: f64,
    certified_radius: f64,
    trials: u64,
    master_seed: u64,
    stream_id: u32,
) -> Result<CountHistogram> {
    if trials == 0 {
        return Err(GefError::domain("trials must be at least 1"));
    }
    if center.norm() + radius > certified_radius {
        return Err(GefError::Certification(format!(
            "disc at {center} of radius {radius} exceeds certified radius {certified_radius}"
        )));
    }
    let policy = TruncationPolicy::default();
    (0..trials)
        .into_par_iter()
        .map(|i| -> Result<Option<usize>> {
            let mut state = derive_trial_rng(master_seed, stream_id, i);
            let gef = sample_gef(certified_radius, &mut state, policy)?;
            let cr = winding_count(&gef, center, radius)?;
            Ok(cr.is_certified().then_some(cr.count))
        })
        .try_fold(CountHistogram::default, |h, n| n.map(|n| h.record(n)))
        .try_reduce(CountHistogram::default, |a, b| Ok(a.merge(b)))
}

/// Number of indices `1 <= k <= 48 r^2` constrained to be tiny in the omega event.
pub fn omega_middle_count(r: f64) -> usize {
    (48.0 * r * r).floor() as usize
}

/// Coefficients the conditional sampler materializes: every constrained
/// middle index plus one, and at least the usual truncation degree.
pub fn omega_degree(r: f64) -> Result<usize> {
    let base = truncation_degree(r, TruncationPolicy::default())?;
    Ok(base.max((48.0 * r * r).ceil() as usize + 1))
}

fn check_omega_radius(r: f64) -> Result<()> {
    if r >= 1.0 && r.is_finite() {
        Ok(())
    } else {
        Err(GefError::domain(format!("omega construction needs r >= 1, got {r}")))
    }
}

/// Exact `ln P(Omega_r)` for the event
/// (i) `|zeta_0| >= 2`, (ii) `|zeta_k| <= exp(-2 r^2)` for `1 <= k <= 48 r^2`,
/// (iii) `|zeta_k| <= 2^k` for `k > 48 r^2`.
pub fn log_prob_omega(r: f64) -> Result<f64> {
    check_omega_radius(r)?;
    let m = omega_middle_count(r);
    let first = ln_gaussian_tail(2.0)?;
    let middle = m as f64 * ln_small_ball_from_ln_radius(-2.0 * r * r);
    let mut tail = 0.0;
    for k in (m + 1).. {
        let miss = (-(4f64).powf(k as f64)).exp();
        if miss == 0.0 {
            break;
        }
        tail += (-miss).ln_1p();
    }
    Ok(first + middle + tail)
}

/// Samples from the law of the coefficients conditioned on `Omega_r`,
/// certified on `|z| <= r`.
pub fn sample_conditional_omega(r: f64, state: &mut RngState, degree: usize) -> Result<TruncatedGef> {
    check_omega_radius(r)?;
    let m = omega_middle_count(r);
    if (degree as f64) < 48.0 * r * r {
        return Err(GefError::domain(format!(
            "degree {degree} does not cover the constrained indices up to 48 r^2 = {}",
            48.0 * r * r
        )));
    }
    let mut coeffs = Vec::with_capacity(degree + 1);
    // |zeta_0|^2 given |zeta_0| >= 2 is 4 + Exp(1)
    coeffs.push(state.next_polar(|u| 4.0 - (-u).ln_1p()));
    // Exp(1) conditioned on <= a, by inverse CDF
    let cap_sq = (-4.0 * r * r).exp();
    let mass = (-cap_sq).exp_m1();
    for _ in 1..=m {
        coeffs.push(state.next_polar(|u| -(u * mass).ln_1p()));
    }
    for k in (m + 1)..=degree {
        let bound = 2f64.powi(k.min(1000) as i32);
        let z = loop {
            let z = state.next_standard_complex();
            if z.norm() <= bound {
                break z;
            }
        };
        coeffs.push(z);
    }
    TruncatedGef::with_tail(coeffs, r)
}

/// The lower-bound chain `|psi(z)| >= |zeta_0| - S' - S''` on `|z| <= r` for a
/// sample in `Omega_r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OmegaChainReport {
    pub r: f64,
    pub zeta0_abs: f64,
    /// `S' = sum_{1 <= k <= 48 r^2} |zeta_k| r^k / sqrt(k!)`, computed from the sample.
    pub sum_prime: f64,
    /// Deterministic bound `S'' <= 1/2` implied by constraint (iii).
    pub sum_double_prime_bound: f64,
    pub lower_bound_on_min_psi: f64,
    pub chain_holds: bool,
}

pub fn verify_omega_chain(gef: &TruncatedGef, r: f64) -> Result<OmegaChainReport> {
    check_omega_radius(r)?;
    let m = omega_middle_count(r);
    let c = gef.coefficients();
    if gef.degree() < m {
        return Err(GefError::NotInOmega(format!(
            "only {} coefficients materialized, {m} middle indices constrained",
            gef.degree()
        )));
    }
    let zeta0_abs = c[0].norm();
    if !(zeta0_abs >= 2.0) {
        return Err(GefError::NotInOmega(format!("(i) fails: |zeta_0| = {zeta0_abs} < 2")));
    }
    let cap = (-2.0 * r * r).exp();
    if let Some(k) = (1..=m).find(|&k| c[k].norm() > cap) {
        return Err(GefError::NotInOmega(format!(
            "(ii) fails at k = {k}: |zeta_k| = {} > exp(-2 r^2)",
            c[k].norm()
        )));
    }
    if let Some(k) = ((m + 1)..c.len()).find(|&k| c[k].norm() > 2f64.powi(k.min(1000) as i32)) {
        return Err(GefError::NotInOmega(format!("(iii) fails at k = {k}")));
    }

    let mut weight = 1.0; // r^k / sqrt(k!)
    let mut sum_prime = 0.0;
    for (k, ck) in c.iter().enumerate().take(m + 1).skip(1) {
        weight *= r / (k as f64).sqrt();
        sum_prime += ck.norm() * weight;
    }
    let sum_double_prime_bound = 0.5;
    let lower = zeta0_abs - sum_prime - sum_double_prime_bound;
    Ok(OmegaChainReport {
        r,
        zeta0_abs,
        sum_prime,
        sum_double_prime_bound,
        lower_bound_on_min_psi: lower,
        chain_holds: lower >= 1.0,
    })
}

/// Power-law fit `neg_log_p = amplitude * r^exponent` by least squares in log-log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub amplitude: f64,
    pub exponent: f64,
    pub window: Vec<(f64, f64)>,
    pub residual_rms: f64,
}

pub fn fit_decay_exponent(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(GefError::domain(format!("need at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(r, y)| !(r > 0.0) || !(y > 0.0) || !y.is_finite()) {
        return Err(GefError::domain("radii and -log p values must be positive and finite"));
    }
    if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(GefError::domain("radii must be strictly increasing"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let residual_rms = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - exponent * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(FitResult {
        amplitude: intercept.exp(),
        exponent,
        window: points.to_vec(),
        residual_rms,
    })
}

/// RNG stream for the Jensen residual sweep.
pub const JENSEN_STREAM: u32 = 7;
/// RNG stream for conditional omega samples.
pub const OMEGA_STREAM: u32 = 8;
/// Residual above which a Jensen trial counts as a failure.
pub const JENSEN_TOLERANCE: f64 = 1e-6;

/// Summary of `jensen_residual` over independent samples at one radius.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JensenSummary {
    pub r: f64,
    pub trials: u64,
    pub max_residual: f64,
    pub mean_residual: f64,
    /// Trials with residual at or above `JENSEN_TOLERANCE`, or where the zeros
    /// could not be resolved.
    pub failures: u64,
    pub seed: u64,
}

pub fn jensen_sweep(r: f64, trials: u64, master_seed: u64) -> Result<JensenSummary> {
    if trials == 0 {
        return Err(GefError::domain("trials must be at least 1"));
    }
    let policy = TruncationPolicy::default();
    let residuals: Vec<Option<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<Option<f64>> {
            let mut state = derive_trial_rng(master_seed, JENSEN_STREAM, i);
            let gef = sample_gef(r, &mut state, policy)?;
            match crate::potential::jensen_residual(&gef, r) {
                Ok(v) => Ok(Some(v)),
                Err(GefError::Convergence { .. }) | Err(GefError::Degenerate(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let ok: Vec<f64> = residuals.iter().flatten().copied().collect();
    let failures = residuals
        .iter()
        .filter(|v| v.map_or(true, |v| !(v < JENSEN_TOLERANCE)))
        .count() as u64;
    let mean_residual = if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / ok.len() as f64 };
    Ok(JensenSummary {
        r,
        trials,
        max_residual: ok.iter().copied().fold(f64::NAN, f64::max),
        mean_residual,
        failures,
        seed: master_seed,
    })
}

/// Exact omega probability together with a check of conditional samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaRow {
    pub r: f64,
    pub log_prob_omega: f64,
    pub conditional_samples: u64,
    /// Samples classified as a certified hole whose inequality chain also holds.
    pub holes_certified: u64,
}

pub fn omega_verification(r: f64, samples: u64, master_seed: u64) -> Result<OmegaRow> {
    let log_prob = log_prob_omega(r)?;
    let degree = omega_degree(r)?;
    let holes_certified = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<u64> {
            let mut state = derive_trial_rng(master_seed, OMEGA_STREAM, i);
            let gef = sample_conditional_omega(r, &mut state, degree)?;
            let chain = verify_omega_chain(&gef, r)?;
            let hole = crate::zeros::classify_hole(&gef, r)?.is_hole();
            Ok(u64::from(hole && chain.chain_holds))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(OmegaRow {
        r,
        log_prob_omega: log_prob,
        conditional_samples: samples,
        holes_certified,
    })
}

/// RNG stream for random probe placements.
pub const PROBE_STREAM: u32 = 9;

/// How probe points are placed in a probe sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlacementKind {
    Centers,
    Uniform,
    Adversarial,
}

impl FromStr for PlacementKind {
    type Err = GefError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "centers" => Ok(PlacementKind::Centers),
            "uniform" => Ok(PlacementKind::Uniform),
            "adversarial" => Ok(PlacementKind::Adversarial),
            _ => Err(GefError::domain(format!("unknown placement {s:?}"))),
        }
    }
}

/// Worst probe deviation at one `delta`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRow {
    pub delta: f64,
    pub r: f64,
    pub kappa: f64,
    pub n_discs: usize,
    pub max_deviation: f64,
    pub deviation_over_sqrt_delta: f64,
}

/// `probe_deviation` at `delta`, maximized over `placements` independent
/// uniform placements (deterministic placements are evaluated once).
pub fn probe_sweep(delta: f64, r: f64, kind: PlacementKind, placements: u64, master_seed: u64) -> Result<ProbeRow> {
    if placements == 0 {
        return Err(GefError::domain("placements must be at least 1"));
    }
    let n = if kind == PlacementKind::Uniform { placements } else { 1 };
    let probes = (0..n)
        .into_par_iter()
        .map(|i| {
            let placement = match kind {
                PlacementKind::Centers => ProbePlacement::Centers,
                PlacementKind::Adversarial => ProbePlacement::Adversarial,
                PlacementKind::Uniform => ProbePlacement::Uniform(derive_trial_rng(master_seed, PROBE_STREAM, i)),
            };
            PoissonProbe::new(delta, r, placement).map(|p| (p.kappa, p.n_discs, probe_deviation(&p)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (kappa, n_discs, _) = probes[0];
    let max_deviation = probes.iter().map(|p| p.2).fold(0.0, f64::max);
    Ok(ProbeRow {
        delta,
        r,
        kappa,
        n_discs,
        max_deviation,
        deviation_over_sqrt_delta: max_deviation / delta.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_one_sample;
    use crate::zeros::classify_hole;

    #[test]
    fn event_names_round_trip() {
        for e in EventSpec::ALL {
            assert_eq!(e.name().parse::<EventSpec>().unwrap(), e);
        }
        assert!("nope".parse::<EventSpec>().is_err());
    }

    // Reference: 60-digit evaluation of the closed form.
    #[test]
    fn omega_log_probability() {
        let cases = [
            (1.0, -196.438_904_409_949_4),
            (1.2, -401.548_684_802_823_8),
            (1.4, -740.978_501_837_924),
            (2.0, -3_076.000_010_803_377),
            (4.0, -49156.0),
            (8.0, -786_436.0),
        ];
        for (r, expected) in cases {
            let v = log_prob_omega(r).unwrap();
            assert!((v - expected).abs() <= 1e-12 * expected.abs(), "r = {r}: {v}");
        }
        let ratios: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().map(|&r| log_prob_omega(r).unwrap() / r.powi(4)).collect();
        assert!(ratios.windows(2).all(|w| (w[1] + 192.0).abs() < (w[0] + 192.0).abs()));
        assert!((ratios[3] / -192.0 - 1.0).abs() < 0.05);
        assert!(log_prob_omega(0.9).is_err());
    }

    #[test]
    fn conditional_samples_satisfy_constraints_and_are_holes() {
        let r = 2.0;
        let degree = omega_degree(r).unwrap();
        assert_eq!(degree, 193);
        for i in 0..100 {
            let gef = sample_conditional_omega(r, &mut derive_trial_rng(3, 20, i), degree).unwrap();
            let rep = verify_omega_chain(&gef, r).unwrap();
            assert!(rep.sum_prime <= 14.0 * (-6.0f64).exp());
            assert!(rep.lower_bound_on_min_psi >= rep.zeta0_abs - 1.0);
            assert!(rep.chain_holds);
            assert_eq!(classify_hole(&gef, r).unwrap(), HoleVerdict::Hole);
        }
    }

    #[test]
    fn conditional_leading_modulus_is_shifted_exponential() {
        let degree = omega_degree(1.0).unwrap();
        let xs: Vec<f64> = (0..100_000)
            .map(|i| {
                let g = sample_conditional_omega(1.0, &mut derive_trial_rng(17, 20, i), degree).unwrap();
                g.coefficients()[0].norm_sqr() - 4.0
            })
            .collect();
        let p = ks_one_sample(&xs, |x| -(-x).exp_m1());
        assert!(p > 1e-3, "p = {p}");
    }

    #[test]
    fn chain_rejects_samples_outside_omega() {
        let mut c = vec![Complex64::new(0.0, 0.0); 60];
        c[0] = Complex64::new(1.0, 0.0);
        let g = TruncatedGef::with_tail(c.clone(), 1.0).unwrap();
        assert!(matches!(verify_omega_chain(&g, 1.0), Err(GefError::NotInOmega(_))));
        c[0] = Complex64::new(3.0, 0.0);
        c[5] = Complex64::new(0.5, 0.0);
        let g = TruncatedGef::with_tail(c, 1.0).unwrap();
        assert!(matches!(verify_omega_chain(&g, 1.0), Err(GefError::NotInOmega(_))));
        assert!(sample_conditional_omega(2.0, &mut derive_trial_rng(0, 0, 0), 150).is_err());
    }

    #[test]
    fn jensen_sweep_is_clean() {
        let s = jensen_sweep(2.0, 20, 3).unwrap();
        assert_eq!(s.failures, 0);
        assert!(s.max_residual < JENSEN_TOLERANCE && s.mean_residual <= s.max_residual);
        assert!(jensen_sweep(2.0, 0, 3).is_err());
    }

    #[test]
    fn omega_row_at_one() {
        let row = omega_verification(1.0, 20, 1).unwrap();
        assert!((row.log_prob_omega + 196.44).abs() < 0.01);
        assert_eq!(row.holes_certified, 20);
    }

    #[test]
    fn probe_sweep_geometry() {
        let row = probe_sweep(0.25, 1.0, PlacementKind::Centers, 5, 0).unwrap();
        assert_eq!(row.n_discs, 25);
        assert!((row.kappa - 0.292_893_218_813_452_5).abs() < 1e-15);
        let u = probe_sweep(0.04, 1.0, PlacementKind::Uniform, 8, 0).unwrap();
        assert!(u.deviation_over_sqrt_delta < 1.0);
        assert!(probe_sweep(0.5, 1.0, PlacementKind::Uniform, 8, 0).is_err());
    }

    #[test]
    fn fit_exact_power_law() {
        let pts: Vec<(f64, f64)> = [0.8f64, 1.0, 1.2, 1.4].iter().map(|&r| (r, 5.0 * r.powi(4))).collect();
        let f = fit_decay_exponent(&pts).unwrap();
        assert!((f.exponent - 4.0).abs() < 1e-12);
        assert!((f.amplitude - 5.0).abs() < 1e-12);
        assert!(f.residual_rms < 1e-12);
        assert!(fit_decay_exponent(&pts[..2]).is_err());
        assert!(fit_decay_exponent(&[(1.0, 1.0), (2.0, -1.0), (3.0, 1.0)]).is_err());
        assert!(fit_decay_exponent(&[(1.0, 1.0), (1.0, 2.0), (3.0, 1.0)]).is_err());
    }

    #[test]
    fn fit_with_multiplicative_noise() {
        let mut state = RngState::new(404, 0);
        for _ in 0..100 {
            let pts: Vec<(f64, f64)> = [0.8f64, 1.0, 1.2, 1.4]
                .iter()
                .map(|&r| {
                    let (u, v) = state.next_uniform_pair();
                    // Box-Muller normal with sd 0.01
                    let g = (-2.0 * (1.0 - u).ln()).sqrt() * (std::f64::consts::TAU * v).cos();
                    (r, 5.0 * r.powi(4) * (1.0 + 0.01 * g))
                })
                .collect();
            let f = fit_decay_exponent(&pts).unwrap();
            assert!((f.exponent - 4.0).abs() < 0.15, "{}", f.exponent);
        }
    }

    #[test]
    fn hole_at_radius_zero_is_certain() {
        let est = estimate_event_probability(EventSpec::Hole, 0.0, None, 2000, 1).unwrap();
        assert_eq!(est.p_hat, 1.0);
        assert_eq!(est.uncertain, 0);
    }

    #[test]
    fn estimator_validation() {
        assert!(estimate_event_probability(EventSpec::Hole, 1.0, None, 0, 1).is_err());
        assert!(estimate_event_probability(EventSpec::CountDeviation, 1.0, None, 10, 1).is_err());
        assert!(estimate_event_probability(EventSpec::CountDeviation, 1.0, Some(0.3), 10, 1).is_err());
        assert!(estimate_event_probability(EventSpec::LogMDeviation, 1.0, Some(0.0), 10, 1).is_err());
        assert!(estimate_event_probability(EventSpec::LogMDeviation, -1.0, Some(0.1), 10, 1).is_err());
    }

    #[test]
    fn estimate_invariants_and_seed_stability() {
        for event in EventSpec::ALL {
            let delta = event.needs_delta().then_some(0.2);
            let a = estimate_event_probability(event, 1.5, delta, 300, 77).unwrap();
            let b = estimate_event_probability(event, 1.5, delta, 300, 77).unwrap();
            assert_eq!(a, b);
            assert!(a.successes + a.uncertain <= a.trials);
            assert!(a.p_low_bound <= a.p_hat && a.p_hat <= a.p_high_bound);
            assert!(0.0 <= a.ci_low && a.ci_low <= a.p_hat && a.p_hat <= a.ci_high && a.ci_high <= 1.0);
        }
    }

    #[test]
    fn count_deviation_at_two_is_count_not_four() {
        let est = estimate_event_probability(EventSpec::CountDeviation, 2.0, Some(0.25), 2000, 5).unwrap();
        let hist = count_histogram(Complex64::new(0.0, 0.0), 2.0, 2.0, 2000, 5, EventSpec::CountDeviation.stream_id()).unwrap();
        let not_four = hist.certified() - hist.counts.get(4).copied().unwrap_or(0);
        assert_eq!(est.successes, not_four);
        assert_eq!(est.uncertain, hist.uncertain);
    }
}
