//! Empirical distributions and the Kolmogorov–Smirnov machinery.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// A sorted sample with its right-continuous step CDF.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalDistribution {
    sorted: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Insufficient("empty sample".into()));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Numerical("NaN in sample".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(EmpiricalDistribution { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    /// `F(x) = #{v <= x} / n`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.len() as f64
    }

    /// Linear-interpolated quantile, `p` in `[0, 1]`.
    pub fn quantile(&self, p: f64) -> f64 {
        let h = p.clamp(0.0, 1.0) * (self.len() - 1) as f64;
        let i = h.floor() as usize;
        let j = (i + 1).min(self.len() - 1);
        self.sorted[i] + (h - i as f64) * (self.sorted[j] - self.sorted[i])
    }

    pub fn iqr(&self) -> f64 {
        self.quantile(0.75) - self.quantile(0.25)
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.len() as f64
    }

    /// Unbiased sample variance (zero for a single point).
    pub fn variance(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        self.sorted.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
    }

    /// Two-sample KS distance `sup |F - G|`.
    pub fn ks(&self, other: &Self) -> f64 {
        ks_two_sample(&self.sorted, &other.sorted)
    }

    /// KS distance against `N(mean, sd^2)`.
    pub fn ks_normal(&self, mean: f64, sd: f64) -> f64 {
        let normal = Normal::new(mean, sd).expect("positive standard deviation");
        ks_against(&self.sorted, |x| normal.cdf(x))
    }
}

/// Centered partial sums `S_n - n m` of many independent samples, recorded at
/// each `n` of an increasing list; normalization is applied afterwards so one
/// run serves several norming exponents.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CenteredSums {
    pub n_list: Vec<u64>,
    /// `sums[i][j]` is sample `j` at `n_list[i]`.
    pub sums: Vec<Vec<f64>>,
}

impl CenteredSums {
    /// Transposes per-sample rows (one value per `n`) into per-`n` columns.
    pub fn from_rows(n_list: Vec<u64>, rows: Vec<Vec<f64>>) -> Self {
        let mut sums = vec![Vec::with_capacity(rows.len()); n_list.len()];
        for row in rows {
            for (col, v) in sums.iter_mut().zip(row) {
                col.push(v);
            }
        }
        CenteredSums { n_list, sums }
    }

    pub fn samples(&self) -> usize {
        self.sums.first().map_or(0, Vec::len)
    }

    /// Distributions of `scale * (S_n - n m) / n^exponent` for every recorded `n`.
    pub fn normalized(&self, exponent: f64, scale: f64) -> Result<Vec<EmpiricalDistribution>> {
        self.n_list
            .iter()
            .zip(&self.sums)
            .map(|(&n, col)| {
                let norm = scale / (n as f64).powf(exponent);
                EmpiricalDistribution::new(col.iter().map(|v| v * norm).collect())
            })
            .collect()
    }

    /// The distribution at one recorded `n`.
    pub fn at(&self, n: u64, exponent: f64, scale: f64) -> Result<EmpiricalDistribution> {
        let i = self
            .n_list
            .iter()
            .position(|&m| m == n)
            .ok_or_else(|| Error::Config(format!("n = {n} was not recorded")))?;
        let norm = scale / (n as f64).powf(exponent);
        EmpiricalDistribution::new(self.sums[i].iter().map(|v| v * norm).collect())
    }
}

/// Two-sample KS statistic of sorted slices.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample KS statistic of a sorted slice against a continuous CDF.
pub fn ks_against<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// 95% two-sample KS noise level, `1.36 sqrt((n + m) / (n m))`.
pub fn ks_noise_floor(n: usize, m: usize) -> f64 {
    1.36 * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Mean and batch-means standard error of a correlated series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BatchMeans {
    pub mean: f64,
    pub se: f64,
    pub batches: usize,
}

/// Accumulates a stream into `batches` equal batches of `batch_len` values.
#[derive(Clone, Debug)]
pub struct BatchAccumulator {
    batch_len: u64,
    count: u64,
    current: f64,
    sums: Vec<f64>,
}

impl BatchAccumulator {
    pub fn new(batch_len: u64) -> Self {
        BatchAccumulator {
            batch_len: batch_len.max(1),
            count: 0,
            current: 0.0,
            sums: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, v: f64) {
        self.current += v;
        self.count += 1;
        if self.count == self.batch_len {
            self.sums.push(self.current);
            self.current = 0.0;
            self.count = 0;
        }
    }

    /// Batch means of the completed batches.
    pub fn means(&self) -> Vec<f64> {
        self.sums.iter().map(|s| s / self.batch_len as f64).collect()
    }

    pub fn finish(&self) -> Result<BatchMeans> {
        batch_means(&self.means())
    }
}

/// Combines per-batch means into an overall mean and standard error.
pub fn batch_means(means: &[f64]) -> Result<BatchMeans> {
    let b = means.len();
    if b < 2 {
        return Err(Error::Insufficient(format!("{b} batches")));
    }
    let m = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (b - 1) as f64;
    Ok(BatchMeans {
        mean: m,
        se: (var / b as f64).sqrt(),
        batches: b,
    })
}
