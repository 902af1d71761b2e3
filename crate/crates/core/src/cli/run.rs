//! The subcommands: each writes its artifacts, a JSON report and a manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Centering, CenteringMethod, ExperimentConfig, OracleSource};
use super::output::{read_samples, real, write_json, CsvSink, Manifest};
use crate::asymptotics::{
    backward_orbit, h3_decompose, m0_convergence, tail_ratio, tau_tail, BackwardOrbit, MbarSolver, SubsequenceGrid, TailTable,
};
use crate::error::{Error, Result};
use crate::inducing::{first_return_partition, gibbs_markov_diagnostics, induce, partition_phi_tail, tail_slope, PartitionElement};
use crate::maps::MapSpec;
use crate::montecarlo::{
    birkhoff_samples, check_centering, clt_check, correlation_decay, induced_tail_check, invariant_estimate, renewal_mean,
    InducedTailConfig, InvariantConfig, Observable, SamplerConfig,
};
use crate::numeric::log_grid;
use crate::semistable::{iid_sums, merging_check, Extrapolation, MergeThresholds, TableSampler, TailSampler};
use crate::stats::{CenteredSums, EmpiricalDistribution};

/// Log-period of the tail ratio used for maps whose tails vary regularly.
pub const CONTROL_RATIO: f64 = 9.487735836358526; // e^2.25

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Orbit,
    Mbar,
    Tails,
    Induce,
    Birkhoff,
    Oracle,
    Merge,
    Clt,
    Correlate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Orbit => "orbit",
            Command::Mbar => "mbar",
            Command::Tails => "tails",
            Command::Induce => "induce",
            Command::Birkhoff => "birkhoff",
            Command::Oracle => "oracle",
            Command::Merge => "merge",
            Command::Clt => "clt",
            Command::Correlate => "correlate",
        }
    }
}

/// A named threshold and whether it held.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub passed: bool,
}

fn check(name: &str, value: f64, passed: bool) -> Check {
    Check {
        name: name.to_string(),
        value,
        passed,
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    pub checks: Vec<Check>,
    pub wall_time_s: f64,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Work<'a> {
    cfg: &'a ExperimentConfig,
    dir: &'a Path,
    artifacts: Vec<PathBuf>,
    checks: Vec<Check>,
}

impl Work<'_> {
    fn spec(&self) -> &MapSpec {
        &self.cfg.map
    }

    fn csv(&self, name: &str, columns: &[&str]) -> Result<CsvSink> {
        CsvSink::create(&self.dir.join(name), self.spec(), self.cfg.seed, columns)
    }

    fn keep(&mut self, path: PathBuf) {
        self.artifacts.push(path);
    }

    fn report<T: Serialize>(&mut self, name: &str, body: &T) -> Result<()> {
        let value = json!({ "map": self.spec(), "seed": self.cfg.seed, "report": body, "checks": self.checks });
        let path = write_json(&self.dir.join(name), &value)?;
        self.keep(path);
        Ok(())
    }
}

/// Runs one subcommand and writes `<out>/<name>.manifest.json`. `check` only
/// decides whether the verdict is recorded; the caller maps it to an exit code.
pub fn execute(cmd: Command, cfg: &ExperimentConfig, check: bool) -> Result<Outcome> {
    fs::create_dir_all(&cfg.out)?;
    let start = Instant::now();
    let mut work = Work {
        cfg,
        dir: &cfg.out,
        artifacts: Vec::new(),
        checks: Vec::new(),
    };
    match cmd {
        Command::Orbit => orbit(&mut work)?,
        Command::Mbar => mbar(&mut work)?,
        Command::Tails => tails(&mut work)?,
        Command::Induce => induce_cmd(&mut work)?,
        Command::Birkhoff => birkhoff(&mut work)?,
        Command::Oracle => oracle(&mut work)?,
        Command::Merge => merge(&mut work)?,
        Command::Clt => clt(&mut work)?,
        Command::Correlate => correlate(&mut work)?,
    }
    let outcome = Outcome {
        artifacts: work.artifacts,
        checks: work.checks,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let names = outcome
        .artifacts
        .iter()
        .map(|p| p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned()))
        .collect();
    Manifest {
        subcommand: cmd.name(),
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
        wall_time_s: outcome.wall_time_s,
        config: cfg,
        artifacts: names,
        check_passed: check.then(|| outcome.passed()),
    }
    .write(&cfg.out)?;
    Ok(outcome)
}

// ---- orbit, mbar, tails --------------------------------------------------------------

fn orbit(w: &mut Work) -> Result<()> {
    let spec = w.spec().clone();
    let o = backward_orbit(&spec, w.cfg.orbit.n)?;
    let mut sink = w.csv("orbit.csv", &["n", "x_n", "M0", "jump", "residual"])?;
    for n in 0..o.len() {
        sink.row([n.to_string(), real(o.x[n]), real(o.m0[n]), u8::from(o.jump[n]).to_string(), real(o.residual[n])])?;
    }
    w.keep(sink.finish()?);

    let consistency = forward_consistency(&spec, &o, 100_000)?;
    w.checks.push(check("forward_consistency", consistency, consistency <= 1e-12));
    let excess = spec.params().c1.map(|c1| jump_excess(&o, spec.beta(), c1));
    if let Some(e) = excess {
        w.checks.push(check("jump_count_excess", e, e <= 3.0));
    }
    let m0 = spec.subsequence_ratio().and_then(|c| m0_convergence(&o, c).ok());
    let body = json!({
        "points": o.len(),
        "jumps": o.jump_indices().count(),
        "forward_consistency": consistency,
        "jump_excess": excess,
        "m0": m0,
    });
    w.report("orbit.json", &body)
}

/// `max |f(x_{n+1}) - x_n| / x_n` over the non-jump `n < limit`.
pub fn forward_consistency(spec: &MapSpec, o: &BackwardOrbit, limit: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for n in 0..limit.min(o.last()) {
        if !o.jump[n] {
            worst = worst.max((spec.eval_map(o.x[n + 1])? - o.x[n]).abs() / o.x[n]);
        }
    }
    Ok(worst)
}

/// `max_n (#jumps up to n - beta log(n) / c1)`.
pub fn jump_excess(o: &BackwardOrbit, beta: f64, c1: f64) -> f64 {
    let mut count = 0usize;
    let mut worst = f64::MIN;
    for n in 1..=o.last() {
        count += usize::from(o.jump[n - 1]);
        worst = worst.max(count as f64 - beta * (n as f64).ln() / c1);
    }
    worst
}

fn mbar(w: &mut Work) -> Result<()> {
    let spec = w.spec().clone();
    let b = &w.cfg.mbar;
    let solver = MbarSolver::new(&spec)?;
    let o = backward_orbit(&spec, b.orbit_n)?;
    let shift = solver.c_hat().exp();
    let decades = (b.x_max / b.x_min).log10();
    let count = ((decades * b.per_decade as f64).ceil() as usize).max(1);
    let mut sink = w.csv("mbar.csv", &["x", "Mbar", "M0", "period_defect"])?;
    let mut defects = Vec::new();
    for i in 0..=count {
        let x = b.x_min * (b.x_max / b.x_min).powf(i as f64 / count as f64);
        let m = solver.eval(x)?;
        let d = (solver.eval(shift * x)? / m - 1.0).abs();
        let m0 = o.m0.get(x.floor() as usize).copied().unwrap_or(f64::NAN);
        sink.row([real(x), real(m), real(m0), real(d)])?;
        defects.push((x, d));
    }
    w.keep(sink.finish()?);

    let worst_scaled = defects.iter().map(|(x, d)| x * d).fold(0.0, f64::max);
    w.checks.push(check("period_defect_times_x", worst_scaled, worst_scaled <= 10.0));
    // compare once per decade, where the decay dominates the wiggles
    let per_decade: Vec<f64> = defects.iter().step_by(b.per_decade.max(1)).map(|p| p.1).collect();
    let decreasing = per_decade.windows(2).all(|p| p[1] < p[0]);
    w.checks.push(check("period_defect_decreasing", f64::from(u8::from(decreasing)), decreasing));
    let n = b.orbit_n;
    let vs_m0 = (solver.eval(n as f64)? / o.m0[n] - 1.0).abs();
    w.checks.push(check("mbar_vs_m0", vs_m0, vs_m0 <= 0.02));
    let body = json!({ "c_hat": solver.c_hat(), "g_infinity": solver.g_infinity(), "mbar_vs_m0_at": n });
    w.report("mbar.json", &body)
}

/// `lambda^beta R_lambda(n)` over `n` on a log grid of `[lo, hi]`: `(min, max)`.
pub fn ratio_range(tail: &TailTable, lambda: f64, beta: f64, lo: u64, hi: u64) -> Option<(f64, f64)> {
    let scale = lambda.powf(beta);
    log_grid(lo, hi, 40).into_iter().try_fold((f64::MAX, f64::MIN), |(mn, mx), n| {
        let r = tail_ratio(tail, lambda, n)? * scale;
        Some((mn.min(r), mx.max(r)))
    })
}

/// Ratio of the geometric subsequence, or the control ratio for regularly varying tails.
pub fn ratio_of(spec: &MapSpec) -> f64 {
    spec.subsequence_ratio().unwrap_or(CONTROL_RATIO)
}

fn tails(w: &mut Work) -> Result<()> {
    let spec = w.spec().clone();
    let t = &w.cfg.tails;
    let o = backward_orbit(&spec, t.n)?;
    let tail = tau_tail(&o);
    let c = ratio_of(&spec);
    let lambdas = if t.lambda_list.is_empty() { vec![c, c.sqrt()] } else { t.lambda_list.clone() };
    let lam_max = lambdas.iter().copied().fold(1.0, f64::max);
    let grid = SubsequenceGrid::new(c, spec.beta(), t.n as u64)?;
    let top = ((tail.horizon() as f64 / lam_max).floor() as u64).max(10);
    let ratio_ns = log_grid(10, top, 20);
    let fit = h3_decompose(&tail, &grid, t.n_delta, &lambdas, &ratio_ns)?;

    let mut sink = w.csv("tail.csv", &["n", "survival"])?;
    for (n, s) in tail.survival.iter().enumerate() {
        sink.row([n.to_string(), real(*s)])?;
    }
    w.keep(sink.finish()?);
    let mut sink = w.csv("h3.csv", &["n", "delta", "Mtilde", "h"])?;
    for r in &fit.rows {
        sink.row([r.n.to_string(), real(r.delta), real(r.value), real(r.h)])?;
    }
    w.keep(sink.finish()?);
    let mut sink = w.csv("ratios.csv", &["n", "lambda", "R"])?;
    for r in &fit.ratios {
        sink.row([r.n.to_string(), real(r.lambda), real(r.ratio)])?;
    }
    w.keep(sink.finish()?);

    let (lo, hi) = (10_000u64, 100_000u64);
    let mut ranges = Vec::new();
    if (hi as f64) * c <= tail.horizon() as f64 {
        let wobbly = spec.subsequence_ratio().is_some();
        for (lam, should_converge) in [(c, true), (c.sqrt(), !wobbly)] {
            let (mn, mx) = ratio_range(&tail, lam, spec.beta(), lo, hi).ok_or_else(|| Error::Insufficient("tail too short".into()))?;
            let dev = (mx - 1.0).max(1.0 - mn);
            let amplitude = (mx - mn) / (mx + mn);
            if should_converge {
                w.checks.push(check(&format!("ratio_{lam:.4}_within_2pct"), dev, dev <= 0.02));
            } else {
                w.checks.push(check(&format!("ratio_{lam:.4}_oscillates"), amplitude, amplitude >= 0.05));
            }
            ranges.push(json!({ "lambda": lam, "min": mn, "max": mx, "amplitude": amplitude }));
        }
    }
    let body = json!({
        "c": c,
        "m_tilde_spread": fit.m_tilde_spread(),
        "deltas": fit.deltas,
        "m_tilde": fit.m_tilde,
        "ratio_ranges": ranges,
    });
    w.report("tails.json", &body)
}

// ---- induce --------------------------------------------------------------------------

fn induce_cmd(w: &mut Work) -> Result<()> {
    let spec = w.spec().clone();
    let icfg = &w.cfg.induce;
    let n_max = icfg.n_max;
    let o = backward_orbit(&spec, 2 * n_max as usize + 100)?;
    let beta = spec.beta();
    let (elements, phi_tail, t_tail, censored, summary): (Vec<PartitionElement>, TailTable, Option<TailTable>, Vec<f64>, Value);
    if spec.has_singularities() {
        let run = induce(&spec, &o, icfg)?;
        let gm = gibbs_markov_diagnostics(&run, &spec, 1000, w.cfg.seed)?;
        let truncated = run.ledger.truncated / 0.5;
        w.checks.push(check("mass_defect", run.ledger.defect, run.ledger.defect <= 1e-9));
        w.checks.push(check("truncated_mass", truncated, truncated <= 0.01));
        w.checks.push(check("h2_violations", gm.h2_violations as f64, gm.h2_violations == 0));
        w.checks.push(check("h1_spread", gm.h1_spread, gm.h1_spread <= 5.0));
        summary = json!({
            "scales": run.scales,
            "ledger": run.ledger,
            "stops": run.stops,
            "margin_ok": run.margin_ok,
            "xi_hat": run.xi_hat,
            "excursions": run.excursions,
            "warnings": run.warnings,
            "gibbs_markov": gm,
        });
        elements = run.elements;
        phi_tail = run.phi_tail;
        t_tail = Some(run.t_tail);
        censored = run.censored;
    } else {
        elements = first_return_partition(&o, n_max)?;
        phi_tail = partition_phi_tail(&elements, n_max)?;
        t_tail = None;
        censored = vec![0.0; n_max as usize + 1];
        summary = json!({ "scheme": "first-return" });
    }

    let mut sink = w.csv("elements.csv", &["id", "u", "v", "status", "T", "phi", "itinerary"])?;
    for e in &elements {
        let t = e.large_scale.last().map_or_else(String::new, u32::to_string);
        let phi = e.phi.map_or_else(String::new, |p| p.to_string());
        sink.row([e.id.to_string(), real(e.u), real(e.v), e.status.as_str().to_string(), t, phi, e.itinerary_string()])?;
    }
    w.keep(sink.finish()?);
    let mut sink = w.csv("tails.csv", &["n", "LebTgt", "muPhiGt", "truncated_mass"])?;
    for n in 0..=n_max as usize {
        let t = t_tail.as_ref().and_then(|t| t.at(n)).map_or_else(String::new, real);
        sink.row([n.to_string(), t, real(phi_tail.at(n).unwrap_or(f64::NAN)), real(censored[n])])?;
    }
    w.keep(sink.finish()?);

    let lo = 100usize;
    let hi = n_max as usize;
    let mut slopes = serde_json::Map::new();
    if hi > 2 * lo {
        let named = [("phi", Some(&phi_tail)), ("T", t_tail.as_ref())];
        for (name, tail) in named {
            if let Some(tail) = tail {
                let s = tail_slope(tail, lo, hi)?;
                w.checks.push(check(&format!("{name}_slope"), s, (s + beta).abs() <= 0.15));
                slopes.insert(name.into(), s.into());
            }
        }
    }
    let h5 = induced_tail_check(&spec, &w.cfg.birkhoff.observable, &InducedTailConfig { seed: w.cfg.seed, ..Default::default() })?;
    let top = h5.top_decade();
    let h5_dev = median_deviation(&top);
    w.checks.push(check("h5_top_decade_deviation", h5_dev, h5_dev <= 0.2));
    let counts = |s: &str| elements.iter().filter(|e| e.status.as_str() == s).count();
    let body = json!({
        "config": icfg,
        "counts": {
            "returned": counts("returned"),
            "horizon": counts("horizon"),
            "truncated": counts("truncated"),
            "flagged": counts("flagged"),
        },
        "slopes": slopes,
        "h5": { "top_decade": top, "max_deviation_from_median": h5_dev, "t_reliable": h5.t_reliable },
        "diagnostics": summary,
    });
    w.report("induce.json", &body)
}

/// `max |r / median - 1|`; infinite when there is nothing to compare.
pub fn median_deviation(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::INFINITY;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let med = sorted[sorted.len() / 2];
    values.iter().map(|r| (r / med - 1.0).abs()).fold(0.0, f64::max)
}

// ---- birkhoff, oracle, merge ----------------------------------------------------------

/// `alpha` when the observable feels the neutral fixed point in the heavy-tailed
/// regime, `1/2` otherwise.
pub fn default_exponent(spec: &MapSpec, v: &Observable) -> f64 {
    if spec.alpha() > 0.5 && v.at_zero() != 0.0 {
        spec.alpha()
    } else {
        0.5
    }
}

struct Mean {
    value: f64,
    se: Option<f64>,
    batches: usize,
    method: &'static str,
    tail_weight: Option<f64>,
}

fn centering(w: &Work, v: &Observable, how: Centering) -> Result<Mean> {
    let spec = w.spec();
    let b = &w.cfg.birkhoff;
    Ok(match how {
        Centering::Value(m) => Mean {
            value: m,
            se: None,
            batches: 0,
            method: "fixed",
            tail_weight: None,
        },
        Centering::Method(CenteringMethod::Invariant) => {
            let inv = invariant_estimate(spec, v, &InvariantConfig { seed: w.cfg.seed, ..Default::default() })?;
            Mean {
                value: inv.mean.mean,
                se: Some(inv.mean.se),
                batches: inv.mean.batches,
                method: "invariant",
                tail_weight: None,
            }
        }
        Centering::Method(CenteringMethod::Renewal) => {
            let o = backward_orbit(spec, b.orbit_n)?;
            let r = renewal_mean(spec, v, &o.x, &b.renewal)?;
            Mean {
                value: r.mean.mean,
                se: Some(r.mean.se),
                batches: r.mean.batches,
                method: "renewal",
                tail_weight: Some(r.tail_weight()),
            }
        }
    })
}

fn write_samples(w: &mut Work, name: &str, sums: &CenteredSums, exponent: f64, scale: f64) -> Result<Vec<EmpiricalDistribution>> {
    let mut sink = w.csv(name, &["sample_id", "n", "normalized_sum"])?;
    for i in 0..sums.samples() {
        for (&n, col) in sums.n_list.iter().zip(&sums.sums) {
            sink.row([i.to_string(), n.to_string(), real(col[i] * scale / (n as f64).powf(exponent))])?;
        }
    }
    w.keep(sink.finish()?);
    sums.normalized(exponent, scale)
}

fn consecutive(w: &mut Work, dists: &[EmpiricalDistribution]) -> Vec<f64> {
    let ks: Vec<f64> = dists.windows(2).map(|p| p[0].ks(&p[1])).collect();
    if let Some(&last) = ks.last() {
        let decreasing = ks.windows(2).all(|p| p[1] < p[0]);
        w.checks.push(check("consecutive_ks_decreasing", f64::from(u8::from(decreasing)), decreasing));
        w.checks.push(check("last_consecutive_ks", last, last <= MergeThresholds::default().consecutive_max));
    }
    ks
}

fn birkhoff(w: &mut Work) -> Result<()> {
    let spec = w.spec().clone();
    let b = w.cfg.birkhoff.clone();
    let n_list = b.sizes.resolve(&spec)?;
    let mean = centering(w, &b.observable, b.centering)?;
    let n_max = *n_list.last().unwrap();
    let centering_ok = match mean.se {
        Some(se) => {
            let bm = crate::stats::BatchMeans {
                mean: mean.value,
                se,
                batches: mean.batches,
            };
            check_centering(&bm, spec.alpha(), n_max, 0.1).is_ok()
        }
        None => true,
    };
    w.checks.push(check("centering_precision", mean.se.unwrap_or(0.0), centering_ok));
    let sampler = SamplerConfig {
        seed: w.cfg.seed,
        samples: b.samples,
        burn_in: b.burn_in,
        initial: b.initial,
    };
    let run = birkhoff_samples(&spec, &b.observable, &n_list, &sampler, mean.value)?;
    let exponent = b.exponent.unwrap_or_else(|| default_exponent(&spec, &b.observable));
    let dists = write_samples(w, "birkhoff.csv", &run.sums, exponent, 1.0)?;
    let ks = consecutive(w, &dists);
    let body = json!({
        "n_list": n_list,
        "samples": b.samples,
        "exponent": exponent,
        "centering": { "method": mean.method, "mean": mean.value, "se": mean.se, "tail_weight": mean.tail_weight },
        "guards": run.guards,
        "consecutive_ks": ks,
        "iqr": dists.iter().map(EmpiricalDistribution::iqr).collect::<Vec<_>>(),
    });
    w.report("birkhoff.json", &body)
}

/// Return-time table of `spec` with the extrapolation matching its tail.
pub fn return_time_sampler(spec: &MapSpec, orbit_n: usize) -> Result<TableSampler> {
    let o = backward_orbit(spec, orbit_n)?;
    let ext = match spec.subsequence_ratio() {
        Some(c) => Extrapolation::LogPeriodic { ratio: c, beta: spec.beta() },
        None => Extrapolation::PowerLaw { beta: spec.beta() },
    };
    TableSampler::new(&tau_tail(&o), ext)
}

fn oracle(w: &mut Work) -> Result<()> {
    let spec = w.spec().clone();
    let oc = w.cfg.oracle.clone();
    let b = w.cfg.birkhoff.clone();
    let n_list = oc.sizes.resolve(&spec)?;
    let (sampler, scale, extra) = match oc.source {
        OracleSource::Tau => (TailSampler::FromTailTable(return_time_sampler(&spec, oc.table_n)?), 1.0, Value::Null),
        OracleSource::StPetersburg => (TailSampler::st_petersburg(spec.beta())?, 1.0, Value::Null),
        OracleSource::Renewal => {
            let table = return_time_sampler(&spec, oc.table_n)?;
            let mean = centering(w, &b.observable, Centering::Method(CenteringMethod::Renewal))?;
            let p = mean.tail_weight.unwrap_or_else(|| 1.0 / table.mean());
            let scale = b.observable.at_zero() - mean.value;
            (TailSampler::Renewal { table, p }, scale, json!({ "mu": mean.value, "p": p }))
        }
    };
    let run = iid_sums(&sampler, &n_list, oc.samples, w.cfg.seed)?;
    let exponent = oc.exponent.unwrap_or(1.0 / spec.beta());
    let dists = write_samples(w, "oracle.csv", &run.sums, exponent, scale)?;
    let ks = consecutive(w, &dists);
    let body = json!({
        "source": oc.source,
        "n_list": n_list,
        "samples": oc.samples,
        "exponent": exponent,
        "scale": scale,
        "mean": run.mean,
        "extrapolated_draws": run.extrapolated_draws,
        "renewal": extra,
        "consecutive_ks": ks,
    });
    w.report("oracle.json", &body)
}

fn merge(w: &mut Work) -> Result<()> {
    let m = w.cfg.merge.clone();
    let dyn_path = m.dynamical.unwrap_or_else(|| w.dir.join("birkhoff.csv"));
    let orc_path = m.oracle.unwrap_or_else(|| w.dir.join("oracle.csv"));
    let dynamical = read_samples(&dyn_path)?;
    let oracle = read_samples(&orc_path)?;
    let n_list: Vec<u64> = dynamical.columns.keys().copied().filter(|n| oracle.columns.contains_key(n)).collect();
    if n_list.is_empty() {
        return Err(Error::Config("dynamical and oracle samples share no n".into()));
    }
    let load = |cols: &std::collections::BTreeMap<u64, Vec<f64>>| -> Result<Vec<EmpiricalDistribution>> {
        n_list.iter().map(|n| EmpiricalDistribution::new(cols[n].clone())).collect()
    };
    let thresholds = MergeThresholds {
        merge_max: m.merge_max,
        consecutive_max: m.consecutive_max,
    };
    let report = merging_check(&n_list, &load(&dynamical.columns)?, &load(&oracle.columns)?, thresholds)?;
    w.checks.push(check("merge", *report.dynamical_vs_oracle.last().unwrap(), report.merge_pass));
    let last = report.dynamical_consecutive.last().copied().unwrap_or(0.0);
    w.checks.push(check("consecutive_decreasing", last, report.consecutive_decreasing));
    w.checks.push(check("consecutive", last, report.consecutive_pass));
    let body = json!({
        "inputs": { "dynamical": dyn_path, "oracle": orc_path },
        "headers": { "dynamical": dynamical.header, "oracle": oracle.header },
        "merge": report,
    });
    w.report("merge.json", &body)
}

// ---- clt, correlate ------------------------------------------------------------------

fn clt(w: &mut Work) -> Result<()> {
    let spec = w.spec().clone();
    let c = w.cfg.clt.clone();
    let mean = centering(w, &c.observable, c.centering)?;
    let sampler = SamplerConfig {
        seed: w.cfg.seed,
        samples: c.samples,
        burn_in: c.burn_in,
        initial: Default::default(),
    };
    let report = clt_check(&spec, &c.observable, c.n, &sampler, mean.value)?;
    w.checks.push(check("ks_normal", report.ks, report.ks <= c.ks_max));
    let body = json!({
        "observable": c.observable,
        "centering": { "method": mean.method, "mean": mean.value, "se": mean.se },
        "clt": report,
    });
    w.report("clt.json", &body)
}

fn correlate(w: &mut Work) -> Result<()> {
    let spec = w.spec().clone();
    let c = w.cfg.correlate.clone();
    let tail = tau_tail(&backward_orbit(&spec, c.table_n)?);
    let run = crate::montecarlo::CorrelationConfig {
        seed: w.cfg.seed,
        ..c.run.clone()
    };
    let rows = correlation_decay(&spec, &c.v, &c.w, &c.n_list, &tail, &run)?;
    let mut sink = w.csv("correlate.csv", &["n", "c_hat", "leading"])?;
    for r in &rows {
        sink.row([r.n.to_string(), real(r.c_hat), real(r.leading)])?;
    }
    w.keep(sink.finish()?);
    let window: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| (100..=10_000).contains(&r.n) && r.c_hat > 0.0)
        .map(|r| (r.n as f64, r.c_hat))
        .collect();
    let slope = (window.len() >= 3).then(|| {
        let (n, c): (Vec<f64>, Vec<f64>) = window.into_iter().unzip();
        crate::numeric::log_log_slope(&n, &c)
    });
    if let Some(s) = slope.flatten() {
        let target = 1.0 - spec.beta();
        w.checks.push(check("correlation_slope", s, (s - target).abs() <= 0.2));
    }
    w.report("correlate.json", &json!({ "rows": rows }))
}
