use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Streaming-free sample moments of a slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Empty("need at least two samples"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(Self { count: values.len(), mean, variance })
    }

    pub fn stderr(&self) -> f64 {
        (self.variance / self.count as f64).sqrt()
    }
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension { expected: xs.len(), actual: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::Empty("slope needs two points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("slope needs distinct x values".into()));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KendallResult {
    /// Kendall's tau-b.
    pub tau: f64,
    pub z: f64,
    /// One-sided p-value for a decreasing trend (`tau < 0`).
    pub p_decreasing: f64,
    /// One-sided p-value for an increasing trend.
    pub p_increasing: f64,
}

fn tie_sums(values: &[f64]) -> (f64, f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut t0, mut t1, mut t2) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        if t > 1.0 {
            t0 += t * (t - 1.0) / 2.0;
            t1 += t * (t - 1.0) * (2.0 * t + 5.0);
            t2 += t * (t - 1.0) * (t - 2.0);
        }
        i = j + 1;
    }
    (t0, t1, t2)
}

/// Kendall's tau-b with the large-sample normal approximation (tie-corrected variance).
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<KendallResult> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension { expected: xs.len(), actual: ys.len() });
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::Empty("kendall tau needs three points"));
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = (xs[j] - xs[i]).signum() * f64::from(xs[j] != xs[i]);
            let dy = (ys[j] - ys[i]).signum() * f64::from(ys[j] != ys[i]);
            s += dx * dy;
        }
    }
    let nf = n as f64;
    let n0 = nf * (nf - 1.0) / 2.0;
    let (tx0, tx1, tx2) = tie_sums(xs);
    let (ty0, ty1, ty2) = tie_sums(ys);
    let denom = ((n0 - tx0) * (n0 - ty0)).sqrt();
    if denom == 0.0 {
        return Err(Error::InvalidArgument("kendall tau undefined for constant input".into()));
    }
    let tau = s / denom;
    let var = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - tx1 - ty1) / 18.0
        + tx2 * ty2 / (9.0 * nf * (nf - 1.0) * (nf - 2.0))
        + (2.0 * tx0) * (2.0 * ty0) / (2.0 * nf * (nf - 1.0));
    let z = s / var.sqrt();
    let normal = Normal::standard();
    Ok(KendallResult { tau, z, p_decreasing: normal.cdf(z), p_increasing: normal.sf(z) })
}
