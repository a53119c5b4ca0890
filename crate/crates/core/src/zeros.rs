//! Zero counting and location for truncated samples.
//!
//! Counting uses the argument principle on an adaptively refined circle. A
//! count is certified when the smallest modulus seen on the circle exceeds the
//! tail bound: then, by Rouché, the untruncated function has the same number of
//! zeros in the disc (on the tail envelope event). Location uses Ehrlich-Aberth
//! simultaneous iteration on the truncated polynomial.

use std::f64::consts::{FRAC_PI_2, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GefError, Result};
use crate::gef::TruncatedGef;

pub const DEFAULT_MAX_DEPTH: u32 = 16;

/// Arcs whose argument increment reaches this are bisected. Correctness only
/// needs increments below pi.
const ARC_THRESHOLD: f64 = FRAC_PI_2;

pub const MAX_SWEEPS: usize = 200;
const STEP_TOLERANCE: f64 = 1e-12;
const CLUSTER_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountResult {
    pub count: usize,
    pub min_circle_modulus: f64,
    /// `min_circle_modulus - tail_bound`.
    pub guard_margin: f64,
    pub refinement_depth: u32,
    /// Some arc still had a large increment at the maximum depth, or the
    /// accumulated winding was not close to an integer.
    pub budget_exhausted: bool,
}

impl CountResult {
    pub fn is_certified(&self) -> bool {
        self.guard_margin > 0.0 && !self.budget_exhausted
    }
}

/// Number of initial arcs for a circle of radius `radius` around `center`.
fn initial_arcs(center: Complex64, radius: f64) -> usize {
    let reach = center.norm() + radius;
    32usize.max((8.0 * radius * reach).ceil() as usize)
}

pub fn winding_count(gef: &TruncatedGef, center: Complex64, radius: f64) -> Result<CountResult> {
    winding_count_with_depth(gef, center, radius, DEFAULT_MAX_DEPTH)
}

pub fn winding_count_with_depth(
    gef: &TruncatedGef,
    center: Complex64,
    radius: f64,
    max_depth: u32,
) -> Result<CountResult> {
    if !(radius > 0.0) {
        return Err(GefError::domain(format!("radius must be positive, got {radius}")));
    }
    gef.check_disc(center, radius)?;
    if gef.is_identically_zero() {
        return Err(GefError::Degenerate("all coefficients are zero"));
    }

    let at = |theta: f64| gef.evaluate(center + Complex64::from_polar(radius, theta));
    let n0 = initial_arcs(center, radius);
    let step = TAU / n0 as f64;

    let f_start = at(0.0);
    let mut min_mod = f_start.norm();
    let mut total = 0.0;
    let mut deepest = 0;
    let mut exhausted = false;
    // (theta_a, f_a, theta_b, f_b, depth)
    let mut stack: Vec<(f64, Complex64, f64, Complex64, u32)> = Vec::with_capacity(2 * max_depth as usize + 2);

    let mut theta_a = 0.0;
    let mut f_a = f_start;
    for j in 1..=n0 {
        let (theta_b, f_b) = if j == n0 {
            (TAU, f_start)
        } else {
            let t = step * j as f64;
            let f = at(t);
            min_mod = min_mod.min(f.norm());
            (t, f)
        };
        stack.push((theta_a, f_a, theta_b, f_b, 0));
        while let Some((ta, fa, tb, fb, depth)) = stack.pop() {
            let inc = (fb * fa.conj()).arg();
            if inc.abs() >= ARC_THRESHOLD {
                if depth < max_depth {
                    let tm = 0.5 * (ta + tb);
                    let fm = at(tm);
                    min_mod = min_mod.min(fm.norm());
                    deepest = deepest.max(depth + 1);
                    stack.push((tm, fm, tb, fb, depth + 1));
                    stack.push((ta, fa, tm, fm, depth + 1));
                    continue;
                }
                exhausted = true;
            }
            total += inc;
        }
        theta_a = theta_b;
        f_a = f_b;
    }

    let winding = total / TAU;
    let rounded = winding.round();
    if (winding - rounded).abs() > 0.1 || rounded < 0.0 {
        exhausted = true;
    }
    Ok(CountResult {
        count: rounded.max(0.0) as usize,
        min_circle_modulus: min_mod,
        guard_margin: min_mod - gef.tail_bound(),
        refinement_depth: deepest,
        budget_exhausted: exhausted,
    })
}

/// Zeros of the truncation inside an open disc, with multiplicity (a multiple
/// zero is listed once per multiplicity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscZeroSet {
    pub zeros: Vec<Complex64>,
    pub radius: f64,
    pub center: Complex64,
    pub max_poly_residual: f64,
}

impl DiscZeroSet {
    pub fn len(&self) -> usize {
        self.zeros.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeros.is_empty()
    }

    /// Distinct points with their multiplicities.
    pub fn distinct(&self) -> Vec<(Complex64, usize)> {
        let mut out: Vec<(Complex64, usize)> = Vec::new();
        for &z in &self.zeros {
            match out.iter_mut().find(|(w, _)| *w == z) {
                Some((_, m)) => *m += 1,
                None => out.push((z, 1)),
            }
        }
        out
    }
}

/// Value, derivative and a running-error bound for `p(w) = sum_k b_k w^k`,
/// evaluated so that nothing overflows for `|w| > 1`.
///
/// Returns the Newton ratio `p / p'` and whether `|p|` is already at the
/// rounding-error level.
#[inline]
fn newton_ratio(b: &[Complex64], w: Complex64) -> (Complex64, bool) {
    let d = b.len() - 1;
    let level = 4.0 * d as f64 * f64::EPSILON;
    if w.norm_sqr() <= 1.0 {
        let aw = w.norm();
        let mut p = b[d];
        let mut dp = Complex64::new(0.0, 0.0);
        let mut e = b[d].norm();
        for k in (0..d).rev() {
            dp = dp * w + p;
            p = p * w + b[k];
            e = e * aw + b[k].norm();
        }
        (p / dp, p.norm() <= level * e)
    } else {
        // p(w) = w^d q(u) with u = 1/w and q(u) = sum_k b_k u^{d-k}
        let u = w.inv();
        let au = u.norm();
        let mut q = b[0];
        let mut dq = Complex64::new(0.0, 0.0);
        let mut e = b[0].norm();
        for bk in &b[1..] {
            dq = dq * u + q;
            q = q * u + bk;
            e = e * au + bk.norm();
        }
        // p'/p = u (d - u q'/q)
        let log_deriv = u * (d as f64 - u * dq / q);
        (log_deriv.inv(), q.norm() <= level * e)
    }
}

/// Fujiwara bound on the root moduli of `sum_k b_k w^k` (`b_d != 0`).
fn fujiwara_bound(b: &[Complex64]) -> f64 {
    let d = b.len() - 1;
    let lead = b[d].norm();
    (1..=d)
        .map(|j| {
            let ratio = b[d - j].norm() / lead;
            let ratio = if j == d { ratio / 2.0 } else { ratio };
            ratio.powf(1.0 / j as f64)
        })
        .fold(0.0, f64::max)
        * 2.0
}

/// Ehrlich-Aberth iteration, Gauss-Seidel ordering. Returns the iterates and
/// whether every root met the stopping rule.
fn aberth(b: &[Complex64]) -> (Vec<Complex64>, bool, usize) {
    let d = b.len() - 1;
    let outer = fujiwara_bound(b).max(f64::MIN_POSITIVE);
    // radii (k + 1/2)/(d + 1) * 1.2 * outer; golden-angle phases break symmetry
    const GOLDEN: f64 = 2.399_963_229_728_653;
    let mut roots: Vec<Complex64> = (0..d)
        .map(|k| {
            let rho = (k as f64 + 0.5) / (d as f64 + 1.0) * 1.2 * outer;
            Complex64::from_polar(rho, 0.4 + GOLDEN * k as f64)
        })
        .collect();
    let mut done = vec![false; d];

    for sweep in 1..=MAX_SWEEPS {
        for i in 0..d {
            if done[i] {
                continue;
            }
            let zi = roots[i];
            let (ratio, at_noise) = newton_ratio(b, zi);
            if at_noise || ratio.is_nan() {
                done[i] = true;
                continue;
            }
            if ratio.is_infinite() {
                // critical point that is not a root
                roots[i] = zi * Complex64::new(1.0 + 1e-7, 1e-7) + 1e-7;
                continue;
            }
            let repulsion: Complex64 = roots
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &zj)| (zi - zj).inv())
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if !step.is_finite() {
                done[i] = true;
                continue;
            }
            roots[i] = zi - step;
            if step.norm() < STEP_TOLERANCE {
                done[i] = true;
            }
        }
        if done.iter().all(|&x| x) {
            return (roots, true, sweep);
        }
    }
    (roots, false, MAX_SWEEPS)
}

/// Replaces clusters of points closer than `tol` by their centroid, repeated
/// once per member.
fn merge_clusters(points: &[Complex64], tol: f64) -> Vec<Complex64> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (points[i] - points[j]).norm() < tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj] = ri;
                }
            }
        }
    }
    let mut groups: Vec<(usize, Complex64, usize)> = Vec::new();
    for (i, &p) in points.iter().enumerate() {
        let root = find(&mut parent, i);
        match groups.iter_mut().find(|g| g.0 == root) {
            Some(g) => {
                g.1 += p;
                g.2 += 1;
            }
            None => groups.push((root, p, 1)),
        }
    }
    groups
        .into_iter()
        .flat_map(|(_, sum, m)| std::iter::repeat(sum / m as f64).take(m))
        .collect()
}

/// Zeros of the degree-`N` truncation in the open disc `|z| < radius`.
pub fn find_zeros(gef: &TruncatedGef, radius: f64) -> Result<DiscZeroSet> {
    if !(radius > 0.0) {
        return Err(GefError::domain(format!("radius must be positive, got {radius}")));
    }
    let origin = Complex64::new(0.0, 0.0);
    gef.check_disc(origin, radius)?;
    if gef.is_identically_zero() {
        return Err(GefError::Degenerate("all coefficients are zero"));
    }

    let mut a = gef.polynomial_coefficients();
    while a.last().is_some_and(|c| c.norm() == 0.0) {
        a.pop();
    }
    if a.len() == 1 {
        return Ok(DiscZeroSet {
            zeros: Vec::new(),
            radius,
            center: origin,
            max_poly_residual: 0.0,
        });
    }

    // work in w = z / radius so the disc of interest is the unit disc
    let mut scale = 1.0;
    let b: Vec<Complex64> = a
        .iter()
        .map(|&ak| {
            let bk = ak * scale;
            scale *= radius;
            bk
        })
        .collect();

    let (scaled_roots, converged, sweeps) = aberth(&b);
    let roots: Vec<Complex64> = scaled_roots.iter().map(|w| w * radius).collect();
    let merged = merge_clusters(&roots, CLUSTER_TOLERANCE * radius);
    let zeros: Vec<Complex64> = merged.into_iter().filter(|z| z.norm() < radius).collect();
    let max_poly_residual = zeros
        .iter()
        .map(|&z| gef.evaluate(z).norm())
        .fold(0.0, f64::max);
    let set = DiscZeroSet {
        zeros,
        radius,
        center: origin,
        max_poly_residual,
    };
    if converged {
        Ok(set)
    } else {
        Err(GefError::Convergence {
            sweeps,
            partial: Box::new(set),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HoleVerdict {
    /// Certified: no zeros in the closed disc.
    Hole,
    /// Certified: `count >= 1` zeros in the closed disc.
    NotHole { count: usize },
    Uncertain { reason: String },
}

impl HoleVerdict {
    pub fn is_hole(&self) -> bool {
        matches!(self, HoleVerdict::Hole)
    }

    pub fn is_uncertain(&self) -> bool {
        matches!(self, HoleVerdict::Uncertain { .. })
    }
}

/// Decides whether the function has no zeros in `|z| <= r`.
///
/// Only certified counts produce `Hole` or `NotHole`; a boundary-grazing zero
/// or an exhausted refinement budget yields `Uncertain`.
pub fn classify_hole(gef: &TruncatedGef, r: f64) -> Result<HoleVerdict> {
    if !(r >= 0.0) {
        return Err(GefError::domain(format!("radius must be nonnegative, got {r}")));
    }
    let origin = Complex64::new(0.0, 0.0);
    gef.check_disc(origin, r)?;
    if r == 0.0 {
        let margin = gef.coefficients()[0].norm() - gef.tail_bound();
        return Ok(if margin > 0.0 {
            HoleVerdict::Hole
        } else {
            HoleVerdict::Uncertain {
                reason: format!("|psi(0)| within tail bound (margin {margin:e})"),
            }
        });
    }
    let cr = winding_count(gef, origin, r)?;
    Ok(count_verdict(&cr))
}

pub(crate) fn count_verdict(cr: &CountResult) -> HoleVerdict {
    if cr.budget_exhausted {
        HoleVerdict::Uncertain {
            reason: format!("refinement budget exhausted at depth {}", cr.refinement_depth),
        }
    } else if !(cr.guard_margin > 0.0) {
        HoleVerdict::Uncertain {
            reason: format!("guard margin {:e} is not positive", cr.guard_margin),
        }
    } else if cr.count == 0 {
        HoleVerdict::Hole
    } else {
        HoleVerdict::NotHole { count: cr.count }
    }
}
