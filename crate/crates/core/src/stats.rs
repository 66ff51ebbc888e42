//! Empirical CDFs and the two-sample Kolmogorov-Smirnov distance.

use crate::error::{Error, Result};

/// Right-continuous empirical CDF as `(value, Pr(X ≤ value))` at each
/// distinct sample value, ascending.
pub fn empirical_cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    let sorted = sorted_finite(samples, "CDF samples")?;
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => out.push((v, frac)),
        }
    }
    Ok(out)
}

/// `sup_x |F_a(x) − F_b(x)|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted_finite(a, "first sample")?;
    let b = sorted_finite(b, "second sample")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic critical value `sqrt(−ln(α/2)/2) · sqrt((n + m)/(n m))`.
pub fn ks_critical_value(alpha: f64, n: usize, m: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::arg(format!("significance level must lie in (0, 1), got {alpha}")));
    }
    if n == 0 || m == 0 {
        return Err(Error::arg("sample sizes must be positive"));
    }
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    Ok(c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt())
}

fn sorted_finite(samples: &[f64], what: &str) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::arg(format!("{what} is empty")));
    }
    if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::arg(format!("{what} contains non-finite value {v}")));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}
