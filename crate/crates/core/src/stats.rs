//! Small statistical toolkit: binomial intervals and goodness-of-fit tests
//! used by the estimators and by the distributional tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo.min(p), hi.max(p))
}

fn chi_square_sf(stat: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    dist.sf(stat)
}

/// Pearson chi-square goodness of fit. `estimated` is the number of parameters
/// fitted from the data (subtracted from the degrees of freedom). Returns the
/// p-value.
pub fn chi_square_gof(observed: &[u64], expected: &[f64], estimated: usize) -> f64 {
    assert_eq!(observed.len(), expected.len());
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .filter(|(_, &e)| e > 0.0)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    let bins = expected.iter().filter(|&&e| e > 0.0).count();
    chi_square_sf(stat, bins.saturating_sub(1 + estimated))
}

/// Two-sample chi-square homogeneity test on histograms over the same bins.
///
/// Bins are pooled from the upper end until every pooled bin has an expected
/// count of at least 5 in both samples. Returns `(statistic, dof, p_value)`.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> (f64, usize, f64) {
    let len = a.len().max(b.len());
    let get = |h: &[u64], i: usize| h.get(i).copied().unwrap_or(0);
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let n = (na + nb) as f64;
    if na == 0 || nb == 0 {
        return (0.0, 0, 1.0);
    }
    let min_frac = (na.min(nb)) as f64 / n;

    // pool adjacent bins (ascending) until each pooled cell is large enough
    let mut cells: Vec<(u64, u64)> = Vec::new();
    let mut acc = (0u64, 0u64);
    for i in 0..len {
        acc.0 += get(a, i);
        acc.1 += get(b, i);
        if ((acc.0 + acc.1) as f64) * min_frac >= 5.0 {
            cells.push(acc);
            acc = (0, 0);
        }
    }
    if acc.0 + acc.1 > 0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => cells.push(acc),
        }
    }

    let stat: f64 = cells
        .iter()
        .map(|&(x, y)| {
            let tot = (x + y) as f64;
            let ea = tot * na as f64 / n;
            let eb = tot * nb as f64 / n;
            (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb
        })
        .sum();
    let dof = cells.len().saturating_sub(1);
    (stat, dof, chi_square_sf(stat, dof))
}

/// Asymptotic Kolmogorov survival function `P(K > lambda)`.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = (-2.0 * j * j * lambda * lambda).exp();
        sum += if j as u32 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF. Returns the p-value.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// Two-sample Kolmogorov-Smirnov test. Returns the p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d)
}

/// Sample Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_brackets_the_point_estimate() {
        for &(s, n) in &[(0u64, 10u64), (10, 10), (3, 10), (1, 1_000_000), (500, 1000)] {
            let (lo, hi) = wilson_interval(s, n, Z_95);
            let p = s as f64 / n as f64;
            assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0, "{s}/{n}: {lo} {hi}");
        }
        // textbook value: 5/10 -> (0.2366, 0.7634)
        let (lo, hi) = wilson_interval(5, 10, Z_95);
        assert!((lo - 0.236_593).abs() < 1e-5 && (hi - 0.763_407).abs() < 1e-5);
    }

    #[test]
    fn chi_square_identical_histograms() {
        let h = [100, 200, 300, 50, 3, 1];
        let (stat, dof, p) = chi_square_two_sample(&h, &h);
        assert_eq!(stat, 0.0);
        assert!(dof >= 3);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_detects_shift() {
        let a = [500, 300, 200];
        let b = [200, 300, 500];
        let (_, _, p) = chi_square_two_sample(&a, &b);
        assert!(p < 1e-10);
    }

    #[test]
    fn ks_uniform_grid_passes() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_one_sample(&xs, |x| x) > 0.99);
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert!(ks_one_sample(&ys, |x| x) < 1e-6);
        assert!(ks_two_sample(&xs, &xs) > 0.99);
        assert!(ks_two_sample(&xs, &ys) < 1e-6);
    }
}
