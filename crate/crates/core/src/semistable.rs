//! The i.i.d. side: heavy-tailed samplers, normalized sums along geometric
//! subsequences, KS comparisons against dynamical sums, and the Laplace-transform
//! envelope of a return-time tail.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotics::TailTable;
use crate::error::{Error, Result};
use crate::numeric::adaptive_quad;
use crate::rng::{self, unit_open_closed};
use crate::stats::{CenteredSums, EmpiricalDistribution};

/// How a tail table is continued past its last entry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Extrapolation {
    /// `s(y) = s(H) (y / H)^(-beta)`.
    PowerLaw { beta: f64 },
    /// `s(c y) = c^(-beta) s(y)`, i.e. the last log-period repeated.
    LogPeriodic { ratio: f64, beta: f64 },
}

const GUIDE_BUCKETS: usize = 1 << 16;

/// Inverse-CDF sampler for an integer variable with tabulated survival `s(n) = P(X > n)`.
#[derive(Clone, Debug)]
pub struct TableSampler {
    survival: Arc<Vec<f64>>,
    extrapolation: Extrapolation,
    /// `guide[b] = X((b + 1) / B)`, the smallest value drawn from bucket `b`.
    guide: Vec<usize>,
    mean: f64,
    tail_mean: f64,
}

impl TableSampler {
    pub fn new(table: &TailTable, extrapolation: Extrapolation) -> Result<Self> {
        let survival = Arc::new(table.survival.clone());
        let h = survival.len() - 1;
        if h < 2 || survival[h] <= 0.0 {
            return Err(Error::Insufficient("tail table needs a positive last entry".into()));
        }
        let count = |u: f64| survival.partition_point(|&v| v >= u);
        let guide = (0..GUIDE_BUCKETS).map(|b| count((b + 1) as f64 / GUIDE_BUCKETS as f64)).collect();
        let head: f64 = survival.iter().sum();
        let sh = survival[h];
        let hf = h as f64;
        let tail_mean = match extrapolation {
            Extrapolation::PowerLaw { beta } => {
                if beta <= 1.0 {
                    return Err(Error::Config("mean is infinite for beta <= 1".into()));
                }
                sh * hf.powf(beta) * (hf + 0.5).powf(1.0 - beta) / (beta - 1.0)
            }
            Extrapolation::LogPeriodic { ratio, beta } => {
                if beta <= 1.0 || ratio <= 1.0 {
                    return Err(Error::Config("log-periodic extension needs beta > 1 and ratio > 1".into()));
                }
                let lo = (hf / ratio).floor() as usize;
                let block: f64 = survival[lo + 1..=h].iter().sum::<f64>() * ratio.powf(1.0 - beta);
                block / (1.0 - ratio.powf(1.0 - beta))
            }
        };
        Ok(TableSampler {
            survival,
            extrapolation,
            guide,
            mean: head + tail_mean,
            tail_mean,
        })
    }

    pub fn horizon(&self) -> usize {
        self.survival.len() - 1
    }

    /// `E[X] = sum_n s(n)`, including the extrapolated part.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Part of the mean contributed by the extrapolation.
    pub fn extrapolated_mean(&self) -> f64 {
        self.tail_mean
    }

    /// `P(X > y)` including the extrapolated range.
    pub fn survival(&self, y: f64) -> f64 {
        if y < 0.0 {
            return 1.0;
        }
        let h = self.horizon();
        let n = y.floor();
        if n <= h as f64 {
            return self.survival[n as usize];
        }
        match self.extrapolation {
            Extrapolation::PowerLaw { beta } => self.survival[h] * (n / h as f64).powf(-beta),
            Extrapolation::LogPeriodic { ratio, beta } => {
                let k = ((n / h as f64).ln() / ratio.ln()).ceil();
                let m = (n / ratio.powf(k)).floor().min(h as f64);
                self.survival[m as usize] * ratio.powf(-k * beta)
            }
        }
    }

    /// `X(u) = min { n : s(n) < u }` for `u` in `(0, 1]`; second value flags extrapolation.
    pub fn invert(&self, u: f64) -> (u64, bool) {
        let h = self.horizon();
        if u <= self.survival[h] {
            return (self.invert_beyond(u), true);
        }
        let b = ((u * GUIDE_BUCKETS as f64) as usize).min(GUIDE_BUCKETS - 1);
        let lo = self.guide[b];
        let hi = if b == 0 { h + 1 } else { self.guide[b - 1] };
        let slice = &self.survival[lo..hi.min(h + 1)];
        (lo as u64 + slice.partition_point(|&v| v >= u) as u64, false)
    }

    fn invert_beyond(&self, u: f64) -> u64 {
        let h = self.horizon();
        let hf = h as f64;
        match self.extrapolation {
            Extrapolation::PowerLaw { beta } => (hf * (self.survival[h] / u).powf(1.0 / beta)).floor() as u64 + 1,
            Extrapolation::LogPeriodic { ratio, beta } => {
                let mut k = 1.0;
                loop {
                    let uk = u * ratio.powf(k * beta);
                    if uk > self.survival[h] || k > 200.0 {
                        let m = self.survival.partition_point(|&v| v >= uk.min(1.0));
                        return (m as f64 * ratio.powf(k)).round().max(hf + 1.0) as u64;
                    }
                    k += 1.0;
                }
            }
        }
    }
}

/// Sources of i.i.d. heavy-tailed draws.
#[derive(Clone, Debug)]
pub enum TailSampler {
    /// `P(X > y) = 2^frac(beta log2 y) y^(-beta)` for `y >= 2^(1/beta)`.
    StPetersburg { beta: f64 },
    /// `X` with `P(X > n) = s(n)` from a tail table.
    FromTailTable(TableSampler),
    /// Per-step excursion lengths: `X = 0` with probability `1 - p`, otherwise a
    /// draw from the table, so `P(X > n) = p s(n)`. With `p = 1 / E[tau]` this is the
    /// time-stationary version of the return-time tail and `E[X] = 1`.
    Renewal { table: TableSampler, p: f64 },
}

impl TailSampler {
    /// The stationary renewal sampler with `p = 1 / E[tau]`.
    pub fn stationary(table: TableSampler) -> Self {
        let p = 1.0 / table.mean();
        TailSampler::Renewal { table, p }
    }

    pub fn st_petersburg(beta: f64) -> Result<Self> {
        if !(beta > 1.0 && beta < 2.0) {
            return Err(Error::Config(format!("beta = {beta} outside (1, 2)")));
        }
        Ok(TailSampler::StPetersburg { beta })
    }

    pub fn mean(&self) -> f64 {
        match self {
            TailSampler::StPetersburg { beta } => {
                let r = 2f64.powf(1.0 / beta - 1.0);
                r / (1.0 - r)
            }
            TailSampler::FromTailTable(t) => t.mean(),
            TailSampler::Renewal { table, p } => p * table.mean(),
        }
    }

    pub fn survival(&self, y: f64) -> f64 {
        match self {
            TailSampler::StPetersburg { beta } => {
                if y < 2f64.powf(1.0 / beta) {
                    return 1.0;
                }
                let t = beta * y.log2();
                let r = t.round();
                let frac = if (t - r).abs() < 1e-12 { 0.0 } else { t - t.floor() };
                2f64.powf(frac) * y.powf(-beta)
            }
            TailSampler::FromTailTable(t) => t.survival(y),
            TailSampler::Renewal { table, p } => {
                if y < 0.0 {
                    1.0
                } else {
                    p * table.survival(y)
                }
            }
        }
    }

    /// One draw; the flag marks extrapolated values.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> (f64, bool) {
        match self {
            TailSampler::StPetersburg { beta } => {
                let u = unit_open_closed(rng);
                let k = (-u.log2()).ceil().max(1.0);
                (2f64.powf(k / beta), false)
            }
            TailSampler::FromTailTable(t) => {
                let (x, e) = t.invert(unit_open_closed(rng));
                (x as f64, e)
            }
            TailSampler::Renewal { table, p } => {
                if rng.random::<f64>() >= *p {
                    return (0.0, false);
                }
                let (x, e) = table.invert(unit_open_closed(rng));
                (x as f64, e)
            }
        }
    }

    pub fn sample_heavy(&self, count: usize, seed: u64) -> (Vec<f64>, usize) {
        let mut rng = rng::stream(seed, 0);
        let mut flagged = 0;
        let v = (0..count)
            .map(|_| {
                let (x, e) = self.draw(&mut rng);
                flagged += e as usize;
                x
            })
            .collect();
        (v, flagged)
    }

    /// Partial sums of one sample path at each `n` of `n_list`, centered by `n E[X]`.
    fn centered_path<R: Rng>(&self, rng: &mut R, n_list: &[u64], mean: f64) -> (Vec<f64>, usize) {
        let mut out = Vec::with_capacity(n_list.len());
        let mut flagged = 0usize;
        let mut sum = 0.0;
        match self {
            TailSampler::Renewal { table: t, p } => {
                // geometric gaps between nonzero draws
                let log_q = (-p).ln_1p();
                let mut pos: u64 = 0;
                let mut next = pos + gap(rng, log_q);
                for &n in n_list {
                    while next <= n {
                        let (x, e) = t.invert(unit_open_closed(rng));
                        sum += x as f64;
                        flagged += e as usize;
                        pos = next;
                        next = pos + gap(rng, log_q);
                    }
                    out.push(sum - n as f64 * mean);
                }
            }
            _ => {
                let mut i: u64 = 0;
                for &n in n_list {
                    while i < n {
                        let (x, e) = self.draw(rng);
                        sum += x;
                        flagged += e as usize;
                        i += 1;
                    }
                    out.push(sum - n as f64 * mean);
                }
            }
        }
        (out, flagged)
    }
}

#[inline]
fn gap<R: Rng>(rng: &mut R, log_q: f64) -> u64 {
    let u = unit_open_closed(rng);
    ((u.ln() / log_q).floor() as u64) + 1
}

/// Sums of i.i.d. draws together with the count of extrapolated draws.
#[derive(Clone, Debug, Serialize)]
pub struct OracleRun {
    pub sums: CenteredSums,
    pub mean: f64,
    pub extrapolated_draws: usize,
    pub seed: u64,
}

/// `sum_{i <= n} X_i - n E[X]` for every `n` in `n_list`, `samples` independent paths.
/// Normalize with [`CenteredSums::normalized`] (exponent `1/beta`).
pub fn iid_sums(sampler: &TailSampler, n_list: &[u64], samples: usize, seed: u64) -> Result<OracleRun> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] == 0 {
        return Err(Error::Config("n_list must be positive and strictly increasing".into()));
    }
    if samples == 0 {
        return Err(Error::Config("samples must be positive".into()));
    }
    let mean = sampler.mean();
    let rows: Vec<(Vec<f64>, usize)> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i);
            sampler.centered_path(&mut rng, n_list, mean)
        })
        .collect();
    let extrapolated_draws = rows.iter().map(|r| r.1).sum();
    let rows = rows.into_iter().map(|r| r.0).collect();
    Ok(OracleRun {
        sums: CenteredSums::from_rows(n_list.to_vec(), rows),
        mean,
        extrapolated_draws,
        seed,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MergeThresholds {
    /// Largest admissible KS(dynamical, oracle) at the last `n`.
    pub merge_max: f64,
    /// Largest admissible KS between consecutive `n` at the last pair.
    pub consecutive_max: f64,
}

impl Default for MergeThresholds {
    fn default() -> Self {
        MergeThresholds {
            merge_max: 0.1,
            consecutive_max: 0.1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MergeReport {
    pub n_list: Vec<u64>,
    pub samples: (usize, usize),
    pub dynamical_vs_oracle: Vec<f64>,
    pub dynamical_consecutive: Vec<f64>,
    pub oracle_consecutive: Vec<f64>,
    /// `matrix[i][j] = KS(dynamical at n_i, oracle at n_j)`.
    pub matrix: Vec<Vec<f64>>,
    pub thresholds: MergeThresholds,
    pub merge_pass: bool,
    pub consecutive_decreasing: bool,
    pub consecutive_pass: bool,
}

/// KS comparison of dynamical and oracle distributions recorded at the same `n`.
pub fn merging_check(
    n_list: &[u64],
    dynamical: &[EmpiricalDistribution],
    oracle: &[EmpiricalDistribution],
    thresholds: MergeThresholds,
) -> Result<MergeReport> {
    if dynamical.len() != n_list.len() || oracle.len() != n_list.len() || n_list.is_empty() {
        return Err(Error::Config("dynamical and oracle must cover the same n list".into()));
    }
    let consecutive = |d: &[EmpiricalDistribution]| d.windows(2).map(|w| w[0].ks(&w[1])).collect::<Vec<_>>();
    let dynamical_vs_oracle: Vec<f64> = dynamical.iter().zip(oracle).map(|(a, b)| a.ks(b)).collect();
    let dynamical_consecutive = consecutive(dynamical);
    let oracle_consecutive = consecutive(oracle);
    let matrix = dynamical.iter().map(|a| oracle.iter().map(|b| a.ks(b)).collect()).collect();
    let merge_pass = *dynamical_vs_oracle.last().unwrap() <= thresholds.merge_max;
    let consecutive_decreasing = dynamical_consecutive.windows(2).all(|w| w[1] < w[0]);
    let consecutive_pass = dynamical_consecutive.last().is_none_or(|&d| d <= thresholds.consecutive_max);
    Ok(MergeReport {
        n_list: n_list.to_vec(),
        samples: (dynamical[0].len(), oracle[0].len()),
        dynamical_vs_oracle,
        dynamical_consecutive,
        oracle_consecutive,
        matrix,
        thresholds,
        merge_pass,
        consecutive_decreasing,
        consecutive_pass,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeRow {
    pub s: f64,
    /// `E[exp(-s X) - 1 + s X] / s^beta`.
    pub value: f64,
    /// Share of `value` coming from the extrapolated tail.
    pub extrapolated_fraction: f64,
}

/// `E[e^{-sX} - 1 + sX] / s^beta` for an integer variable with survival table `s(n)`.
///
/// The expectation is summed by parts, `sum_n P(X > n) (phi(n+1) - phi(n))` with
/// `phi(y) = e^{-sy} - 1 + sy`, written so that no cancellation occurs. Past the
/// table the sampler's extrapolation is integrated on a logarithmic grid.
pub fn laplace_envelope(sampler: &TableSampler, beta: f64, s_grid: &[f64]) -> Result<Vec<EnvelopeRow>> {
    let h = sampler.horizon();
    s_grid
        .iter()
        .map(|&s| {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::Domain(format!("s = {s} outside (0, 1)")));
            }
            let a = s + (-s).exp_m1();
            let b = (-s).exp_m1();
            let mut head = 0.0;
            let mut comp = 0.0;
            for (n, &sv) in sampler.survival.iter().enumerate() {
                let d = a + (-s * n as f64).exp_m1() * b;
                let y = sv * d - comp;
                let t = head + y;
                comp = (t - head) - y;
                head = t;
            }
            // continuum tail: int_H^inf s(y) s (1 - e^{-sy}) dy over t = log y
            let integrand = |t: f64| {
                let y = t.exp();
                sampler.survival(y) * s * -(-s * y).exp_m1() * y
            };
            let t0 = (h as f64 + 1.0).ln();
            let span = 60.0;
            let mut tail = 0.0;
            let step = 0.25;
            let mut t = t0;
            while t < t0 + span {
                tail += adaptive_quad(&integrand, t, t + step, 1e-14 * (head + tail).max(1e-300)).unwrap_or_else(|| {
                    crate::numeric::gauss_legendre5(&integrand, t, t + step)
                });
                t += step;
            }
            let total = head + tail;
            Ok(EnvelopeRow {
                s,
                value: total / s.powf(beta),
                extrapolated_fraction: tail / total,
            })
        })
        .collect()
}

/// Fit of `value(s) = level + t1 s^(2 - beta) + t2 s + t3 s log s + a cos(w log s) + b sin(w log s)`
/// with `w = 2 pi / period`. The `t` terms absorb the smooth higher-order part
/// of the expansion in `s`.
#[derive(Clone, Debug, Serialize)]
pub struct OscillationFit {
    pub period: f64,
    pub level: f64,
    pub trend: [f64; 3],
    /// `sqrt(a^2 + b^2) / level`.
    pub amplitude: f64,
    /// Root-mean-square fit residual relative to `level`.
    pub residual: f64,
}

/// Separates the log-periodic part of an envelope from its smooth second-order drift.
pub fn envelope_oscillation(rows: &[EnvelopeRow], beta: f64, period: f64) -> Result<OscillationFit> {
    if rows.len() < 12 || !(period > 0.0) {
        return Err(Error::Insufficient("need at least 12 envelope rows and a positive period".into()));
    }
    let w = 2.0 * std::f64::consts::PI / period;
    let ls: Vec<f64> = rows.iter().map(|r| r.s.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let design = vec![
        vec![1.0; rows.len()],
        rows.iter().map(|r| r.s.powf(2.0 - beta)).collect(),
        rows.iter().map(|r| r.s).collect(),
        rows.iter().map(|r| r.s * r.s.ln()).collect(),
        ls.iter().map(|l| (w * l).cos()).collect(),
        ls.iter().map(|l| (w * l).sin()).collect(),
    ];
    let c = crate::numeric::least_squares(&design, &y).ok_or_else(|| Error::Singular(period))?;
    let rss: f64 = (0..rows.len())
        .map(|i| {
            let fit: f64 = c.iter().zip(&design).map(|(cj, col)| cj * col[i]).sum();
            (y[i] - fit).powi(2)
        })
        .sum();
    Ok(OscillationFit {
        period,
        level: c[0],
        trend: [c[1], c[2], c[3]],
        amplitude: c[4].hypot(c[5]) / c[0].abs(),
        residual: (rss / rows.len() as f64).sqrt() / c[0].abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::TailKind;

    fn geometric_table(q: f64, len: usize) -> TailTable {
        TailTable::new(TailKind::TauExact, (0..len).map(|n| q.powi(n as i32)).collect()).unwrap()
    }

    #[test]
    fn st_petersburg_boundary() {
        let s = TailSampler::st_petersburg(4.0 / 3.0).unwrap();
        let y = 2f64.powf(0.75);
        assert!((s.survival(y) - 0.5).abs() < 1e-15);
        assert_eq!(s.survival(1.0), 1.0);
    }

    #[test]
    fn st_petersburg_mean_series() {
        let beta: f64 = 1.5;
        let s = TailSampler::st_petersburg(beta).unwrap();
        let series: f64 = (1..400).map(|k| 2f64.powf(-(k as f64)) * 2f64.powf(k as f64 / beta)).sum();
        assert!((s.mean() - series).abs() < 1e-10);
    }

    #[test]
    fn table_inversion_matches_linear_scan() {
        let table = geometric_table(0.9, 300);
        let t = TableSampler::new(&table, Extrapolation::PowerLaw { beta: 1.5 }).unwrap();
        for i in 1..2000 {
            let u = i as f64 / 2000.0;
            let (x, flagged) = t.invert(u);
            if !flagged {
                let scan = table.survival.iter().position(|&v| v < u).unwrap();
                assert_eq!(x as usize, scan, "u = {u}");
            }
        }
    }

    #[test]
    fn head_of_table_is_p_x_gt_0() {
        let table = geometric_table(0.5, 60);
        let t = TailSampler::FromTailTable(TableSampler::new(&table, Extrapolation::PowerLaw { beta: 1.5 }).unwrap());
        assert_eq!(t.survival(0.0), 1.0);
        assert_eq!(t.survival(1.0), 0.5);
        let (draws, _) = t.sample_heavy(1000, 1);
        assert!(draws.iter().all(|&x| x >= 1.0));
    }

    #[test]
    fn renewal_mean_is_one() {
        let table = geometric_table(0.8, 200);
        let t = TailSampler::stationary(TableSampler::new(&table, Extrapolation::PowerLaw { beta: 1.5 }).unwrap());
        let (draws, _) = t.sample_heavy(200_000, 5);
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((m - 1.0).abs() < 0.02, "{m}");
    }

    #[test]
    fn renewal_sums_match_bernoulli_definition() {
        // gap sampling and per-step sampling agree in distribution
        let table = geometric_table(0.7, 100);
        let ts = TableSampler::new(&table, Extrapolation::PowerLaw { beta: 1.5 }).unwrap();
        let fast = iid_sums(&TailSampler::stationary(ts.clone()), &[50, 200], 4000, 3).unwrap();
        let mut rows = Vec::new();
        let sampler = TailSampler::stationary(ts);
        for i in 0..4000u64 {
            let mut rng = rng::stream(99, i);
            let mut sum = 0.0;
            let mut row = Vec::new();
            for n in 1..=200u64 {
                sum += sampler.draw(&mut rng).0;
                if n == 50 || n == 200 {
                    row.push(sum - n as f64);
                }
            }
            rows.push(row);
        }
        let slow = CenteredSums::from_rows(vec![50, 200], rows);
        let a = fast.sums.normalized(0.5, 1.0).unwrap();
        let b = slow.normalized(0.5, 1.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(x.ks(y) < 0.05);
        }
    }

    #[test]
    fn merging_of_identical_inputs() {
        let d: Vec<EmpiricalDistribution> =
            (0..3).map(|k| EmpiricalDistribution::new((0..100).map(|i| (i * (k + 1)) as f64).collect()).unwrap()).collect();
        let r = merging_check(&[1, 2, 3], &d, &d, MergeThresholds::default()).unwrap();
        assert!(r.dynamical_vs_oracle.iter().all(|&v| v == 0.0));
        assert!(merging_check(&[1, 2], &d, &d, MergeThresholds::default()).is_err());
    }

    #[test]
    fn envelope_of_point_mass() {
        // X = m: E[e^{-sX} - 1 + sX] = e^{-sm} - 1 + sm
        let m = 7usize;
        let mut sv = vec![1.0; m];
        sv.extend(vec![0.0; 50]);
        let table = TailTable::new(TailKind::TauExact, sv).unwrap();
        // positive last entry required by the sampler: use a negligible tail
        let mut t = table.clone();
        *t.survival.last_mut().unwrap() = 1e-300;
        let ts = TableSampler::new(&t, Extrapolation::PowerLaw { beta: 1.5 }).unwrap();
        for s in [1e-3, 1e-2, 0.3] {
            let row = &laplace_envelope(&ts, 1.0, &[s]).unwrap()[0];
            let exact = (-s * m as f64).exp_m1() + s * m as f64;
            assert!(((row.value * s - exact) / exact).abs() < 1e-9, "s = {s}");
        }
    }

    #[test]
    fn oscillation_fit_recovers_a_synthetic_wiggle() {
        let (beta, period) = (4.0 / 3.0, 2.25);
        let w = 2.0 * std::f64::consts::PI / period;
        let rows: Vec<EnvelopeRow> = (0..=80)
            .map(|i| {
                let s = 10f64.powf(-5.0 + 0.04 * i as f64);
                let value = 2.0 + 0.3 * s.powf(2.0 - beta) + 0.01 * (w * s.ln() + 0.4).cos();
                EnvelopeRow {
                    s,
                    value,
                    extrapolated_fraction: 0.0,
                }
            })
            .collect();
        let fit = envelope_oscillation(&rows, beta, period).unwrap();
        assert!((fit.level - 2.0).abs() < 1e-9);
        assert!((fit.amplitude - 0.005).abs() < 1e-9, "{}", fit.amplitude);
        assert!(fit.residual < 1e-9);
        // a smooth envelope carries no oscillation
        let flat: Vec<EnvelopeRow> = rows.iter().map(|r| EnvelopeRow { value: 2.0 + 0.3 * r.s.powf(2.0 - beta), ..r.clone() }).collect();
        assert!(envelope_oscillation(&flat, beta, period).unwrap().amplitude < 1e-9);
        assert!(envelope_oscillation(&rows[..5], beta, period).is_err());
    }
}
