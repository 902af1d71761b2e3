//! Orbit sampling: invariant-measure estimates, Birkhoff sums, induced-observable
//! tails, CLT checks and correlation decay.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::TailTable;
use crate::error::{Error, Result};
use crate::maps::MapSpec;
use crate::numeric::log_grid;
use crate::rng::{self, unit_open_closed, SampleRng};
use crate::stats::{batch_means, BatchMeans, CenteredSums, EmpiricalDistribution};

/// `v(x) = v0 + kappa x^nu` on `[support_min, 1]`, zero below it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observable {
    pub v0: f64,
    pub kappa: f64,
    pub nu: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub support_min: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl Default for Observable {
    fn default() -> Self {
        Observable::one_plus_x()
    }
}

impl Observable {
    pub fn one_plus_x() -> Self {
        Observable {
            v0: 1.0,
            kappa: 1.0,
            nu: 1.0,
            support_min: 0.0,
        }
    }

    pub fn constant(v0: f64) -> Self {
        Observable {
            v0,
            kappa: 0.0,
            nu: 1.0,
            support_min: 0.0,
        }
    }

    /// `x^nu`, vanishing at the fixed point.
    pub fn power(nu: f64) -> Self {
        Observable {
            v0: 0.0,
            kappa: 1.0,
            nu,
            support_min: 0.0,
        }
    }

    /// The same observable restricted to `[lo, 1]`.
    pub fn supported_from(self, lo: f64) -> Self {
        Observable { support_min: lo, ..self }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if x < self.support_min {
            0.0
        } else if self.kappa == 0.0 {
            self.v0
        } else if self.nu == 1.0 {
            self.v0 + self.kappa * x
        } else {
            self.v0 + self.kappa * x.powf(self.nu)
        }
    }

    /// `v(0)`.
    pub fn at_zero(&self) -> f64 {
        if self.support_min > 0.0 {
            0.0
        } else {
            self.v0
        }
    }

    /// Hölder condition needed by the semistable limit theorem.
    pub fn admissible_for(&self, alpha: f64) -> bool {
        self.nu > 0.0 && self.nu <= 1.0 && self.nu > alpha - 0.5
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialLaw {
    #[default]
    Uniform,
    UniformY,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub seed: u64,
    pub samples: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: u64,
    #[serde(default)]
    pub initial: InitialLaw,
}

fn default_burn_in() -> u64 {
    1000
}

impl SamplerConfig {
    pub fn new(seed: u64, samples: usize) -> Self {
        SamplerConfig {
            seed,
            samples,
            burn_in: default_burn_in(),
            initial: InitialLaw::Uniform,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// A single trajectory with its own random stream and a count of float-guard hits.
pub struct Trajectory<'a> {
    spec: &'a MapSpec,
    pub x: f64,
    pub guards: u64,
}

impl<'a> Trajectory<'a> {
    pub fn start(spec: &'a MapSpec, law: InitialLaw, rng: &mut SampleRng) -> Self {
        let u = unit_open_closed(rng);
        let x = match law {
            InitialLaw::Uniform => u,
            InitialLaw::UniformY => 0.5 + 0.5 * u,
        };
        Trajectory { spec, x, guards: 0 }
    }

    pub fn at(spec: &'a MapSpec, x: f64) -> Self {
        Trajectory { spec, x, guards: 0 }
    }

    #[inline]
    pub fn advance(&mut self) -> f64 {
        let (y, hit) = self.spec.guarded_step(self.x);
        self.guards += hit as u64;
        self.x = y;
        y
    }

    pub fn burn(&mut self, steps: u64) {
        for _ in 0..steps {
            self.advance();
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantConfig {
    pub seed: u64,
    /// Independent orbits, each one batch.
    pub batches: usize,
    /// Steps per orbit after burn-in.
    pub length: u64,
    pub burn_in: u64,
    pub bins: usize,
}

impl Default for InvariantConfig {
    fn default() -> Self {
        InvariantConfig {
            seed: 1,
            batches: 32,
            length: 2_000_000,
            burn_in: 1000,
            bins: 1000,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantEstimate {
    /// Density on `bins` equal cells of `[0, 1]`.
    pub density: Vec<f64>,
    pub mean: BatchMeans,
    pub guards: u64,
}

impl InvariantEstimate {
    pub fn bin_width(&self) -> f64 {
        1.0 / self.density.len() as f64
    }

    /// Mass of `[0, k h]` for the first `k` bins.
    pub fn mass_below(&self, k: usize) -> f64 {
        self.density[..k].iter().sum::<f64>() * self.bin_width()
    }

    /// One-sided density at `1/2^+`, by linear extrapolation of the first bins of `Y`.
    pub fn density_right_of_half(&self) -> f64 {
        let h = self.bin_width();
        let first = (0.5 / h).round() as usize;
        let k = (self.density.len() / 50).max(4);
        let xs: Vec<f64> = (0..k).map(|i| (i as f64 + 0.5) * h).collect();
        let ys = &self.density[first..first + k];
        crate::numeric::linear_fit(&xs, ys).1
    }
}

/// Long-orbit histogram and Birkhoff average of `v`, with the standard error taken
/// across independent orbits.
pub fn invariant_estimate(spec: &MapSpec, v: &Observable, cfg: &InvariantConfig) -> Result<InvariantEstimate> {
    if cfg.batches < 2 || cfg.length == 0 || cfg.bins == 0 {
        return Err(Error::Config("need at least two batches, a positive length and bins".into()));
    }
    let bins = cfg.bins;
    let per_orbit: Vec<(Vec<u64>, f64, u64)> = (0..cfg.batches as u64)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(cfg.seed, b);
            let mut t = Trajectory::start(spec, InitialLaw::Uniform, &mut r);
            t.burn(cfg.burn_in);
            let mut hist = vec![0u64; bins];
            let mut sum = 0.0;
            for _ in 0..cfg.length {
                let x = t.x;
                hist[((x * bins as f64) as usize).min(bins - 1)] += 1;
                sum += v.eval(x);
                t.advance();
            }
            (hist, sum / cfg.length as f64, t.guards)
        })
        .collect();
    let total = (cfg.batches as u64 * cfg.length) as f64;
    let mut density = vec![0.0; bins];
    for (hist, _, _) in &per_orbit {
        for (d, &c) in density.iter_mut().zip(hist) {
            *d += c as f64;
        }
    }
    for d in &mut density {
        *d *= bins as f64 / total;
    }
    let means: Vec<f64> = per_orbit.iter().map(|p| p.1).collect();
    if means.iter().any(|m| !m.is_finite()) {
        return Err(Error::Numerical("orbit left [0, 1]".into()));
    }
    Ok(InvariantEstimate {
        density,
        mean: batch_means(&means)?,
        guards: per_orbit.iter().map(|p| p.2).sum(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenewalMeanConfig {
    pub seed: u64,
    /// Independent orbits; the standard error is taken across them.
    pub chains: usize,
    pub length: u64,
    pub burn_in: u64,
    /// Excursions with `tau > cutoff` are integrated from the backward orbit
    /// instead of being sampled.
    pub cutoff: usize,
    /// Bins of `z = 2y - 1` on `(0, window]` used to fit the entry density at `z = 0`.
    pub density_bins: usize,
    pub window: f64,
}

impl Default for RenewalMeanConfig {
    fn default() -> Self {
        RenewalMeanConfig {
            seed: 1,
            chains: 32,
            length: 3_000_000,
            burn_in: 1000,
            cutoff: 64,
            density_bins: 20,
            window: 0.1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RenewalMean {
    pub mean: BatchMeans,
    /// Density of `z = 2y - 1` at `0^+` under the induced measure on `Y`.
    pub entry_density: f64,
    /// `E[tau]` under the induced measure, i.e. `1 / mu(Y)`.
    pub mean_return: f64,
    /// Share of `E[tau]` carried by the integrated long excursions.
    pub tail_share: f64,
    pub returns: u64,
}

impl RenewalMean {
    /// `mu(Y and tau > n) / s(n)` for large `n`, i.e. `h(1/2^+) / 2`.
    pub fn tail_weight(&self) -> f64 {
        self.entry_density / self.mean_return
    }
}

#[derive(Default)]
struct ChainTotals {
    returns: u64,
    g: f64,
    tau: f64,
    bins: Vec<u64>,
}

/// `int v dmu` as `E[g] / E[tau]` over excursions from `Y = (1/2, 1]`. Short
/// excursions are sampled; the long ones start at `z = 2y - 1 <= x_K`, where
/// the entry density is nearly constant, and are summed along the backward
/// orbit `x_k` of `1/2`. This removes the heavy part of the sampling error that
/// a plain Birkhoff average suffers from.
pub fn renewal_mean(spec: &MapSpec, v: &Observable, orbit_x: &[f64], cfg: &RenewalMeanConfig) -> Result<RenewalMean> {
    if v.support_min != 0.0 {
        return Err(Error::Config("renewal mean needs an observable defined down to 0".into()));
    }
    let k_cut = cfg.cutoff;
    if cfg.chains < 2 || cfg.length == 0 || cfg.density_bins < 2 || k_cut < 1 || orbit_x.len() < 4 * k_cut {
        return Err(Error::Config("renewal mean needs two chains, bins and an orbit well past the cutoff".into()));
    }
    let z_cut = orbit_x[k_cut];
    let dz = cfg.window / cfg.density_bins as f64;
    let chains: Vec<ChainTotals> = (0..cfg.chains as u64)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(cfg.seed, c);
            let mut t = Trajectory::start(spec, InitialLaw::UniformY, &mut r);
            t.burn(cfg.burn_in);
            while t.x <= 0.5 {
                t.advance();
            }
            let mut tot = ChainTotals {
                bins: vec![0; cfg.density_bins],
                ..Default::default()
            };
            let (mut g, mut tau, mut short) = (0.0, 0u64, true);
            for _ in 0..cfg.length {
                let x = t.x;
                if x > 0.5 && tau > 0 {
                    tot.returns += 1;
                    if short {
                        tot.g += g;
                        tot.tau += tau as f64;
                    }
                    let z = 2.0 * x - 1.0;
                    short = z > z_cut;
                    if z <= cfg.window {
                        tot.bins[((z / dz) as usize).min(cfg.density_bins - 1)] += 1;
                    }
                    g = 0.0;
                    tau = 0;
                }
                g += v.eval(x);
                tau += 1;
                t.advance();
            }
            tot
        })
        .collect();

    let tail = LongExcursions::new(spec, v, orbit_x, k_cut);
    let centers: Vec<f64> = (0..cfg.density_bins).map(|i| (i as f64 + 0.5) * dz).collect();
    let per_chain: Vec<(f64, f64, f64)> = chains
        .iter()
        .map(|c| {
            let n = c.returns.max(1) as f64;
            let dens: Vec<f64> = c.bins.iter().map(|&b| b as f64 / (n * dz)).collect();
            let (slope, f0) = crate::numeric::linear_fit(&centers, &dens);
            let (ga, ta) = tail.integrate(f0, slope);
            (c.g / n + ga, c.tau / n + ta, f0)
        })
        .collect();
    let m = per_chain.len() as f64;
    let a = per_chain.iter().map(|p| p.0).sum::<f64>() / m;
    let b = per_chain.iter().map(|p| p.1).sum::<f64>() / m;
    let mean = a / b;
    // delta method for the ratio of means
    let resid: Vec<f64> = per_chain.iter().map(|p| (p.0 - mean * p.1) / b).collect();
    let var = resid.iter().map(|e| e * e).sum::<f64>() / (m - 1.0);
    let f0 = per_chain.iter().map(|p| p.2).sum::<f64>() / m;
    let (_, tail_tau) = tail.integrate(f0, 0.0);
    if !mean.is_finite() {
        return Err(Error::Numerical("renewal mean is not finite".into()));
    }
    Ok(RenewalMean {
        mean: BatchMeans {
            mean,
            se: (var / m).sqrt(),
            batches: per_chain.len(),
        },
        entry_density: f0,
        mean_return: b,
        tail_share: tail_tau / b,
        returns: chains.iter().map(|c| c.returns).sum(),
    })
}

/// Long excursions `tau = k + 1 > K + 1`, entered from `z in (x_k, x_{k-1}]`.
/// For each `k` the per-unit-density weights of `g` and `tau`, with the `z`
/// moment for the linear term of the entry density.
struct LongExcursions {
    /// (sum w_k G_k, sum w_k zbar_k G_k, sum w_k tau_k, sum w_k zbar_k tau_k)
    sums: [f64; 4],
}

impl LongExcursions {
    fn new(spec: &MapSpec, v: &Observable, x: &[f64], k_cut: usize) -> Self {
        let h = x.len() - 1;
        let vy = v.eval(0.5);
        // V_k = sum over the k ladder steps, trapezoid on each cylinder
        let mut ladder = 0.0;
        let mut sums = [0.0; 4];
        for k in 1..=h {
            ladder += 0.5 * (v.eval(x[k - 1]) + v.eval(x[k]));
            if k <= k_cut {
                continue;
            }
            let w = x[k - 1] - x[k];
            let zbar = 0.5 * (x[k - 1] + x[k]);
            let g = vy + ladder;
            let tau = (k + 1) as f64;
            sums[0] += w * g;
            sums[1] += w * zbar * g;
            sums[2] += w * tau;
            sums[3] += w * zbar * tau;
        }
        // past the horizon: sum_{k>H} w_k F_k = x_H F_{H+1} + sum_{k>H} x_k (F_{k+1} - F_k)
        let ratio = spec.subsequence_ratio().unwrap_or(std::f64::consts::E);
        let beta = spec.beta();
        let lo = ((h as f64) / ratio).floor() as usize;
        let block = |p: f64| -> f64 {
            let q = ratio.powf(1.0 - beta * p);
            x[lo + 1..=h].iter().map(|xi| xi.powf(p)).sum::<f64>() * q / (1.0 - q)
        };
        let xh = x[h];
        let next = ladder + v.eval(xh);
        let tail_x = block(1.0);
        let tail_vx = v.v0 * tail_x + if v.kappa == 0.0 { 0.0 } else { v.kappa * block(1.0 + v.nu) };
        sums[0] += xh * (vy + next) + tail_vx;
        sums[2] += xh * (h as f64 + 2.0) + tail_x;
        LongExcursions { sums }
    }

    /// `(E[g; long], E[tau; long])` for the entry density `f0 + slope z`.
    fn integrate(&self, f0: f64, slope: f64) -> (f64, f64) {
        let s = &self.sums;
        (f0 * s[0] + slope * s[1], f0 * s[2] + slope * s[3])
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BirkhoffRun {
    pub sums: CenteredSums,
    pub centering: f64,
    pub guards: u64,
    pub seed: u64,
}

/// Refuses a centering whose standard error is not small against `n^(alpha - 1)`.
pub fn check_centering(centering: &BatchMeans, alpha: f64, n_max: u64, factor: f64) -> Result<()> {
    let limit = factor * (n_max as f64).powf(alpha - 1.0);
    if centering.se > limit {
        // SE of a Birkhoff average decays like L^(alpha - 1)
        let ratio = centering.se / limit;
        let required = (ratio.powf(1.0 / (1.0 - alpha)) * centering.batches as f64).ceil() as u64;
        return Err(Error::CenteringPrecision {
            se: centering.se,
            limit,
            required,
        });
    }
    Ok(())
}

/// `S_n v - n m` for every `n` of `n_list` along `samples` independent orbits,
/// streamed from one orbit per sample. Normalize with exponent `alpha`.
pub fn birkhoff_samples(spec: &MapSpec, v: &Observable, n_list: &[u64], cfg: &SamplerConfig, centering: f64) -> Result<BirkhoffRun> {
    cfg.validate()?;
    if n_list.is_empty() || n_list[0] == 0 || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("n_list must be positive and strictly increasing".into()));
    }
    let rows: Vec<(Vec<f64>, u64)> = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(cfg.seed, i);
            let mut t = Trajectory::start(spec, cfg.initial, &mut r);
            t.burn(cfg.burn_in);
            let mut out = Vec::with_capacity(n_list.len());
            let mut sum = 0.0;
            let mut done = 0u64;
            for &n in n_list {
                while done < n {
                    sum += v.eval(t.x);
                    t.advance();
                    done += 1;
                }
                out.push(sum - n as f64 * centering);
            }
            (out, t.guards)
        })
        .collect();
    let guards = rows.iter().map(|r| r.1).sum();
    Ok(BirkhoffRun {
        sums: CenteredSums::from_rows(n_list.to_vec(), rows.into_iter().map(|r| r.0).collect()),
        centering,
        guards,
        seed: cfg.seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InducedTailConfig {
    pub seed: u64,
    pub samples: usize,
    /// Smallest `2 (y - 1/2)` drawn; excursions from below it are not simulated.
    pub u_min: f64,
    pub per_decade: usize,
}

impl Default for InducedTailConfig {
    fn default() -> Self {
        InducedTailConfig {
            seed: 1,
            samples: 200_000,
            u_min: 1e-6,
            per_decade: 10,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InducedTailReport {
    pub t: Vec<f64>,
    pub g_tail: Vec<f64>,
    pub phi_tail: Vec<f64>,
    pub ratio: Vec<f64>,
    /// Largest `t` at which the truncation at `u_min` cannot bias the tails.
    pub t_reliable: f64,
}

impl InducedTailReport {
    /// Ratios over `t` in `[t_hi / 10, t_hi]` for the largest reliable `t_hi`.
    pub fn top_decade(&self) -> Vec<f64> {
        let hi = self.t.iter().copied().filter(|&t| t <= self.t_reliable).fold(0.0, f64::max);
        self.t
            .iter()
            .zip(&self.ratio)
            .filter(|(t, r)| **t >= hi / 10.0 && **t <= hi && r.is_finite())
            .map(|(_, r)| *r)
            .collect()
    }
}

/// Tails of `g_Y = sum_{j < tau} v(f^j y)` and of the first return `tau` on `Y`.
///
/// Points are drawn with `u = 2 (y - 1/2)` log-uniform on `[u_min, 1]` and reweighted
/// to Lebesgue measure on `Y`, so every decade of return times is populated.
pub fn induced_tail_check(spec: &MapSpec, v: &Observable, cfg: &InducedTailConfig) -> Result<InducedTailReport> {
    if !(cfg.u_min > 0.0 && cfg.u_min < 1.0) || cfg.samples == 0 {
        return Err(Error::Config("u_min must lie in (0, 1) and samples be positive".into()));
    }
    let log_range = -cfg.u_min.ln();
    let draws: Vec<(f64, f64, u64)> = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(cfg.seed, i);
            let u = (-log_range * r.random::<f64>()).exp();
            let weight = u * log_range;
            let mut t = Trajectory::at(spec, 0.5 + 0.5 * u);
            let mut g = 0.0;
            let mut tau = 0u64;
            loop {
                g += v.eval(t.x);
                tau += 1;
                let y = t.advance();
                if y > 0.5 {
                    break;
                }
            }
            (weight, g.abs(), tau)
        })
        .collect();
    // the smallest simulated u has tau = tau(u_min); beyond it tails are truncated
    let tau_min_cut = {
        let mut t = Trajectory::at(spec, 0.5 + 0.5 * cfg.u_min);
        let mut k = 1u64;
        while t.advance() <= 0.5 {
            k += 1;
        }
        k
    };
    let t_hi = draws.iter().map(|d| d.2).max().unwrap_or(1).max(2);
    let grid: Vec<f64> = log_grid(1, t_hi, cfg.per_decade).into_iter().map(|t| t as f64).collect();
    let total = cfg.samples as f64;
    let tail = |pick: &dyn Fn(&(f64, f64, u64)) -> f64| -> Vec<f64> {
        let mut vals: Vec<(f64, f64)> = draws.iter().map(|d| (pick(d), d.0)).collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut suffix = vec![0.0; vals.len() + 1];
        for i in (0..vals.len()).rev() {
            suffix[i] = suffix[i + 1] + vals[i].1;
        }
        grid.iter()
            .map(|&t| {
                let k = vals.partition_point(|p| p.0 <= t);
                suffix[k] / total
            })
            .collect()
    };
    let g_tail = tail(&|d| d.1);
    let phi_tail = tail(&|d| d.2 as f64);
    let ratio = g_tail.iter().zip(&phi_tail).map(|(g, p)| if *p > 0.0 { g / p } else { f64::NAN }).collect();
    Ok(InducedTailReport {
        t: grid,
        g_tail,
        phi_tail,
        ratio,
        t_reliable: tau_min_cut as f64 / 2.0,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CltReport {
    pub n: u64,
    pub samples: usize,
    pub mean: f64,
    pub sigma2: f64,
    pub ks: f64,
}

/// KS distance of `(S_n v - n m) / sqrt(n)` from the normal law with fitted mean and variance.
pub fn clt_check(spec: &MapSpec, v: &Observable, n: u64, cfg: &SamplerConfig, centering: f64) -> Result<CltReport> {
    let run = birkhoff_samples(spec, v, &[n], cfg, centering)?;
    let d = run.sums.at(n, 0.5, 1.0)?;
    let sigma2 = d.variance();
    if sigma2 < 1e-12 {
        return Err(Error::Degenerate(sigma2));
    }
    let mean = d.mean();
    Ok(CltReport {
        n,
        samples: d.len(),
        mean,
        sigma2,
        ks: d.ks_normal(mean, sigma2.sqrt()),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationConfig {
    pub seed: u64,
    pub orbits: usize,
    pub length: u64,
    pub burn_in: u64,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        CorrelationConfig {
            seed: 1,
            orbits: 16,
            length: 5_000_000,
            burn_in: 1000,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelationRow {
    pub n: u64,
    pub c_hat: f64,
    pub leading: f64,
}

/// `sum_{j > n} s(j)` from a table continued as a pure power law of exponent `beta`.
pub fn tail_sum(tail: &TailTable, n: usize, beta: f64) -> f64 {
    let h = tail.horizon();
    let head: f64 = if n < h { tail.survival[n + 1..].iter().sum() } else { 0.0 };
    let start = (n.max(h) as f64) + 0.5;
    let sh = tail.survival[h];
    head + sh * (h as f64).powf(beta) * start.powf(1.0 - beta) / (beta - 1.0)
}

/// `C(n) = E[v w∘f^n] - E v E w` from independent long orbits, next to the leading
/// term `(1 / E tau) sum_{j > n} P(tau > j) E v E w`.
pub fn correlation_decay(
    spec: &MapSpec,
    v: &Observable,
    w: &Observable,
    n_list: &[u64],
    tail: &TailTable,
    cfg: &CorrelationConfig,
) -> Result<Vec<CorrelationRow>> {
    let lag_max = *n_list.iter().max().ok_or_else(|| Error::Config("empty lag list".into()))? as usize;
    let ring_len = lag_max + 1;
    let per_orbit: Vec<(Vec<f64>, f64, f64)> = (0..cfg.orbits as u64)
        .into_par_iter()
        .map(|o| {
            let mut r = rng::stream(cfg.seed, o);
            let mut t = Trajectory::start(spec, InitialLaw::Uniform, &mut r);
            t.burn(cfg.burn_in);
            let mut ring = vec![0.0; ring_len];
            let mut acc = vec![0.0; n_list.len()];
            let (mut sv, mut sw) = (0.0, 0.0);
            let mut counted = 0u64;
            for step in 0..cfg.length + lag_max as u64 {
                let x = t.x;
                let idx = (step % ring_len as u64) as usize;
                ring[idx] = v.eval(x);
                if step >= lag_max as u64 {
                    let wx = w.eval(x);
                    for (a, &n) in acc.iter_mut().zip(n_list) {
                        let j = (step - n) % ring_len as u64;
                        *a += ring[j as usize] * wx;
                    }
                    sv += ring[((step - lag_max as u64) % ring_len as u64) as usize];
                    sw += wx;
                    counted += 1;
                }
                t.advance();
            }
            let c = counted as f64;
            (acc.into_iter().map(|a| a / c).collect(), sv / c, sw / c)
        })
        .collect();
    let k = per_orbit.len() as f64;
    let mv = per_orbit.iter().map(|p| p.1).sum::<f64>() / k;
    let mw = per_orbit.iter().map(|p| p.2).sum::<f64>() / k;
    let mean_tau: f64 = tail_sum(tail, 0, spec.beta()) + 1.0;
    Ok(n_list
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let cross = per_orbit.iter().map(|p| p.0[i]).sum::<f64>() / k;
            CorrelationRow {
                n,
                c_hat: cross - mv * mw,
                leading: tail_sum(tail, n as usize, spec.beta()) / mean_tau * mv * mw,
            }
        })
        .collect())
}

/// Distribution of the first return time on `Y` from uniform starting points.
pub fn first_return_times(spec: &MapSpec, samples: usize, seed: u64, cap: u64) -> Vec<u64> {
    (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i);
            let mut t = Trajectory::start(spec, InitialLaw::UniformY, &mut r);
            let mut k = 1u64;
            while t.advance() <= 0.5 && k < cap {
                k += 1;
            }
            k
        })
        .collect()
}

/// IQR of `(S_n - n m) / n^e` at every `n`, for each exponent `e`.
pub fn spread_table(sums: &CenteredSums, exponents: &[f64]) -> Result<Vec<Vec<f64>>> {
    exponents
        .iter()
        .map(|&e| Ok(sums.normalized(e, 1.0)?.iter().map(EmpiricalDistribution::iqr).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_observable_sums_vanish() {
        let spec = MapSpec::m2(0.75, 1.0, 0.4, 3.0).unwrap();
        let run = birkhoff_samples(&spec, &Observable::constant(1.0), &[10, 100], &SamplerConfig::new(3, 50), 1.0).unwrap();
        assert!(run.sums.sums.iter().flatten().all(|&s| s == 0.0));
    }

    #[test]
    fn invariant_mean_of_one_is_one() {
        let spec = MapSpec::lsv(0.5).unwrap();
        let cfg = InvariantConfig {
            length: 10_000,
            ..Default::default()
        };
        let est = invariant_estimate(&spec, &Observable::constant(1.0), &cfg).unwrap();
        assert_eq!(est.mean.mean, 1.0);
        let mass: f64 = est.density.iter().sum::<f64>() * est.bin_width();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn birkhoff_is_deterministic_per_seed() {
        let spec = MapSpec::m1(0.75, 3.0).unwrap();
        let cfg = SamplerConfig::new(11, 20);
        let a = birkhoff_samples(&spec, &Observable::one_plus_x(), &[5, 50], &cfg, 1.3).unwrap();
        let b = birkhoff_samples(&spec, &Observable::one_plus_x(), &[5, 50], &cfg, 1.3).unwrap();
        assert_eq!(a.sums, b.sums);
    }

    #[test]
    fn streaming_matches_recomputation() {
        let spec = MapSpec::m2(0.75, 1.0, 0.4, 3.0).unwrap();
        let v = Observable::one_plus_x();
        let cfg = SamplerConfig::new(5, 10);
        let run = birkhoff_samples(&spec, &v, &[100, 1000], &cfg, 0.0).unwrap();
        for i in 0..10u64 {
            let mut r = rng::stream(5, i);
            let mut t = Trajectory::start(&spec, InitialLaw::Uniform, &mut r);
            t.burn(cfg.burn_in);
            let mut s = 0.0;
            for _ in 0..1000 {
                s += v.eval(t.x);
                t.advance();
            }
            let got = run.sums.sums[1][i as usize];
            assert!(((got - s) / s).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_observable_is_degenerate() {
        let spec = MapSpec::m2(0.3, 1.0, 0.4, 3.0).unwrap();
        let r = clt_check(&spec, &Observable::constant(0.0), 100, &SamplerConfig::new(1, 100), 0.0);
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn centering_guard_reports_required_length() {
        let bm = BatchMeans { mean: 1.0, se: 0.1, batches: 32 };
        match check_centering(&bm, 0.75, 10_000, 0.1) {
            Err(Error::CenteringPrecision { required, .. }) => assert!(required > 32),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn induced_tail_for_unit_observable_is_tau() {
        let spec = MapSpec::m2(0.75, 1.0, 0.4, 3.0).unwrap();
        let cfg = InducedTailConfig {
            samples: 5000,
            u_min: 1e-4,
            ..Default::default()
        };
        let r = induced_tail_check(&spec, &Observable::constant(1.0), &cfg).unwrap();
        for (g, p) in r.g_tail.iter().zip(&r.phi_tail) {
            assert!((g - p).abs() <= 1e-12 * p.max(1e-300));
        }
    }

    fn short_renewal() -> RenewalMeanConfig {
        RenewalMeanConfig {
            chains: 8,
            length: 200_000,
            ..Default::default()
        }
    }

    #[test]
    fn renewal_mean_of_one_is_one() {
        let spec = MapSpec::m2(0.75, 1.0, 0.4, 3.0).unwrap();
        let orbit = crate::asymptotics::backward_orbit(&spec, 10_000).unwrap();
        let r = renewal_mean(&spec, &Observable::constant(1.0), &orbit.x, &short_renewal()).unwrap();
        assert!((r.mean.mean - 1.0).abs() < 1e-9, "{}", r.mean.mean);
        assert!(r.tail_share > 0.0 && r.tail_share < 1.0);
    }

    #[test]
    fn renewal_mean_agrees_with_long_orbit_average() {
        let spec = MapSpec::m2(0.75, 1.0, 0.4, 3.0).unwrap();
        let v = Observable::one_plus_x();
        let orbit = crate::asymptotics::backward_orbit(&spec, 10_000).unwrap();
        let r = renewal_mean(&spec, &v, &orbit.x, &short_renewal()).unwrap();
        let inv = invariant_estimate(
            &spec,
            &v,
            &InvariantConfig {
                batches: 8,
                length: 500_000,
                ..Default::default()
            },
        )
        .unwrap();
        let se = (r.mean.se.powi(2) + inv.mean.se.powi(2)).sqrt();
        assert!((r.mean.mean - inv.mean.mean).abs() < 4.0 * se, "{} vs {} (se {se})", r.mean.mean, inv.mean.mean);
        // the renewal estimate is the sharper one
        assert!(r.mean.se < inv.mean.se);
    }

    #[test]
    fn support_cut_zeroes_the_observable() {
        let v = Observable::one_plus_x().supported_from(0.5);
        assert_eq!(v.eval(0.49), 0.0);
        assert_eq!(v.eval(0.75), 1.75);
        assert_eq!(v.at_zero(), 0.0);
        let spec = MapSpec::m2(0.75, 1.0, 0.4, 3.0).unwrap();
        let orbit = crate::asymptotics::backward_orbit(&spec, 1000).unwrap();
        assert!(renewal_mean(&spec, &v, &orbit.x, &short_renewal()).is_err());
        let text = serde_json::to_string(&Observable::one_plus_x()).unwrap();
        assert!(!text.contains("support_min"));
    }
}
