//! Summary statistics, Kolmogorov–Smirnov distances and least squares.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Error, Result};

/// Neumaier-compensated sum in the given order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

pub fn mean(xs: &[f64]) -> f64 {
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

/// Unbiased sample variance (0 for a single sample).
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    compensated_sum(xs.iter().map(|x| (x - m) * (x - m))) / (xs.len() - 1) as f64
}

/// Unbiased sample covariance.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return 0.0;
    }
    let (mx, my) = (mean(xs), mean(ys));
    compensated_sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my))) / (xs.len() - 1) as f64
}

pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    covariance(xs, ys) / (variance(xs) * variance(ys)).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Standard error of the unbiased variance estimator, from the sample
/// fourth central moment.
pub fn variance_standard_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = mean(xs);
    let m2 = compensated_sum(xs.iter().map(|x| (x - m).powi(2))) / n;
    let m4 = compensated_sum(xs.iter().map(|x| (x - m).powi(4))) / n;
    ((m4 - (n - 3.0) / (n - 1.0) * m2 * m2) / n).max(0.0).sqrt()
}

pub fn std_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn std_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// KS distance of the empirical CDF of `xs` to an arbitrary CDF.
pub fn ks_distance_to<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::invalid("KS distance of an empty sample"));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in v.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// KS distance to the standard normal.
pub fn ks_distance(xs: &[f64]) -> Result<f64> {
    ks_distance_to(xs, std_normal_cdf)
}

/// Two-sample KS distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("KS distance of an empty sample"));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SummaryStats {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub ks_normal: f64,
    /// 95% normal-approximation interval for the mean.
    pub mean_ci: (f64, f64),
    /// 95% normal-approximation interval for the variance.
    pub variance_ci: (f64, f64),
}

/// Standard estimators. `kurtosis` is the excess kurtosis.
pub fn summarize(xs: &[f64]) -> Result<SummaryStats> {
    if xs.is_empty() {
        return Err(Error::invalid("summary of an empty sample"));
    }
    let n = xs.len() as f64;
    let m = mean(xs);
    let var = variance(xs);
    let m2 = compensated_sum(xs.iter().map(|x| (x - m).powi(2))) / n;
    let m3 = compensated_sum(xs.iter().map(|x| (x - m).powi(3))) / n;
    let m4 = compensated_sum(xs.iter().map(|x| (x - m).powi(4))) / n;
    let (skewness, kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let z = 1.959_963_984_540_054;
    let se_m = (var / n).sqrt();
    let se_v = if xs.len() > 1 { variance_standard_error(xs) } else { 0.0 };
    let ks_normal = if var > 0.0 {
        ks_distance(&xs.iter().map(|x| (x - m) / var.sqrt()).collect::<Vec<_>>())?
    } else {
        ks_distance(xs)?
    };
    Ok(SummaryStats {
        count: xs.len(),
        mean: m,
        variance: var,
        skewness,
        kurtosis,
        ks_normal,
        mean_ci: (m - z * se_m, m + z * se_m),
        variance_ci: (var - z * se_v, var + z * se_v),
    })
}

/// Sample covariance matrix of the columns (`rows` replicas × `k` statistics).
pub fn covariance_matrix(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = columns.len();
    let mut out = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let c = covariance(&columns[i], &columns[j]);
            out[i][j] = c;
            out[j][i] = c;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

/// Weighted least squares `y ≈ intercept + slope·x` with weights `1/σ²`.
/// With `sigma = None` all weights are one and the slope error comes from
/// the residuals.
pub fn linear_fit(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("linear fit needs at least two matched points"));
    }
    let w: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|s| 1.0 / (s * s)).collect(),
        None => vec![1.0; x.len()],
    };
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let det = sw * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return Err(Error::invalid("degenerate abscissae in linear fit"));
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / sw;
    let slope_se = match sigma {
        Some(_) => (sw / det).sqrt(),
        None if x.len() > 2 => {
            let rss: f64 = x.iter().zip(y).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
            (rss / (x.len() - 2) as f64 * sw / det).sqrt()
        }
        None => 0.0,
    };
    Ok(LinearFit {
        slope,
        intercept,
        slope_se,
    })
}
