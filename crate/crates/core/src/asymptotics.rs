//! Backward orbit of `1/2` along the left branch, the exact first-return tail on
//! `Y = (1/2, 1]`, the running averages `M0`, the continuum average `Mbar`, and the
//! log-periodic decomposition of the tail along geometric subsequences.
//!
//! All tail estimators take the slowly varying factor to be identically one.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::{MapSpec, Side, Variant};
use crate::numeric::{adaptive_quad, solve_increasing};

/// The orbit `x_0 = 1/2 > x_1 > ... > x_N` with `f(x_{n+1}) = x_n`, except at jump
/// indices where `x_n` lies in the gap `[f(s^-), f(s^+)]` and `x_{n+1} = s`.
///
/// `m0[n]` and `residual[n]` are `NaN` at `n = 0`.
#[derive(Clone, Debug)]
pub struct BackwardOrbit {
    pub x: Vec<f64>,
    /// `jump[n]` is set when `x_{n+1}` was placed on a discontinuity.
    pub jump: Vec<bool>,
    pub m0: Vec<f64>,
    pub residual: Vec<f64>,
}

impl BackwardOrbit {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Largest index `N`.
    pub fn last(&self) -> usize {
        self.x.len() - 1
    }

    /// Indices `n` for which `x_{n+1}` was set by the jump rule.
    pub fn jump_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.jump.iter().enumerate().filter(|(_, j)| **j).map(|(n, _)| n)
    }
}

fn lower_bracket(spec: &MapSpec, xn: f64) -> f64 {
    match spec.variant() {
        Variant::HollandLog => {
            let mut lo = 0.5 * xn;
            while spec.eval_on(lo, spec.branch_at(lo, Side::Above)) > xn && lo > f64::MIN_POSITIVE {
                lo *= 0.5;
            }
            lo
        }
        _ => xn / (1.0 + spec.sup_modulating() * xn.powf(spec.alpha())),
    }
}

/// One backward step: returns `(x_{n+1}, jumped)`.
fn preimage(spec: &MapSpec, xn: f64, step: usize) -> Result<(f64, bool)> {
    let lo = lower_bracket(spec, xn);
    let mut edges = vec![lo];
    edges.extend(spec.singularities_in(lo, xn, 0.0));
    edges.push(xn);
    // Walk the continuity pieces from the top down.
    for i in (0..edges.len() - 1).rev() {
        let (a, b) = (edges[i], edges[i + 1]);
        let branch = spec.branch_at(0.5 * (a + b), Side::Above);
        let fa = spec.eval_on(a, branch);
        if xn >= fa {
            let x = solve_increasing(|x| spec.eval_on(x, branch), |x| spec.deriv_on(x, branch), xn, a, b, 1e-16)
                .ok_or(Error::Bracket {
                    step,
                    lo: a,
                    hi: b,
                    target: xn,
                })?;
            return Ok((x, false));
        }
        if i > 0 {
            let below = spec.branch_at(a, Side::Below);
            if xn >= spec.eval_on(a, below) {
                return Ok((a, true));
            }
        }
    }
    Err(Error::Bracket {
        step,
        lo,
        hi: xn,
        target: xn,
    })
}

/// Computes `x_0 .. x_N` together with the running averages and residuals.
pub fn backward_orbit(spec: &MapSpec, n: usize) -> Result<BackwardOrbit> {
    if n == 0 {
        return Err(Error::Insufficient("orbit length must be at least 1".into()));
    }
    let alpha = spec.alpha();
    let beta = spec.beta();
    let mut x = Vec::with_capacity(n + 1);
    let mut jump = Vec::with_capacity(n + 1);
    let mut m0 = Vec::with_capacity(n + 1);
    let mut residual = Vec::with_capacity(n + 1);
    x.push(0.5);
    m0.push(f64::NAN);
    residual.push(f64::NAN);
    let mut sum = 0.0;
    let mut comp = 0.0;
    for k in 0..n {
        let (next, jumped) = preimage(spec, x[k], k)?;
        if !(next > 0.0 && next < x[k]) {
            return Err(Error::Numerical(format!("orbit stalled at step {k}: x = {next}")));
        }
        jump.push(jumped);
        x.push(next);
        // Kahan summation of M(x_j)
        let y = spec.modulating(next)? - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        let j = (k + 1) as f64;
        let avg = sum / j;
        m0.push(avg);
        residual.push(next * (alpha * j * avg).powf(beta) - 1.0);
    }
    jump.push(false);
    Ok(BackwardOrbit { x, jump, m0, residual })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailKind {
    TauExact,
    PhiEmpirical,
    TEmpirical,
    GyEmpirical,
}

/// Survival function `s(n) = mu_Y(X > n)` on `n = 0, 1, ..`, with `mu_Y(Y) = 1`.
#[derive(Clone, Debug, Serialize)]
pub struct TailTable {
    pub kind: TailKind,
    pub survival: Vec<f64>,
}

impl TailTable {
    pub fn new(kind: TailKind, mut survival: Vec<f64>) -> Result<Self> {
        if survival.first() != Some(&1.0) {
            return Err(Error::Numerical("survival must start at 1".into()));
        }
        // enforce monotonicity against roundoff in empirical tables
        for i in 1..survival.len() {
            if survival[i] > survival[i - 1] {
                if survival[i] - survival[i - 1] > 1e-12 {
                    return Err(Error::Numerical(format!("survival increases at {i}")));
                }
                survival[i] = survival[i - 1];
            }
            if survival[i] < 0.0 {
                return Err(Error::Numerical(format!("negative survival at {i}")));
            }
        }
        Ok(TailTable { kind, survival })
    }

    /// Largest `n` with a tabulated value.
    pub fn horizon(&self) -> usize {
        self.survival.len() - 1
    }

    pub fn at(&self, n: usize) -> Option<f64> {
        self.survival.get(n).copied()
    }

    /// `s(floor(y))` for real `y >= 0`.
    pub fn at_real(&self, y: f64) -> Option<f64> {
        if y < 0.0 {
            return None;
        }
        self.at(y.floor() as usize)
    }
}

/// First-return tail on `Y`: `s(0) = 1` and `s(n + 1) = x_n`.
pub fn tau_tail(orbit: &BackwardOrbit) -> TailTable {
    let mut s = Vec::with_capacity(orbit.len() + 1);
    s.push(1.0);
    s.extend_from_slice(&orbit.x);
    TailTable {
        kind: TailKind::TauExact,
        survival: s,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct M0Report {
    /// `w_k = floor(c^k)` for `k = 1, 2, ..` up to the orbit length.
    pub w: Vec<u64>,
    pub values: Vec<f64>,
    /// `|M0(w_{k+1}) - M0(w_k)|`; `gaps[i]` pairs `values[i]` and `values[i + 1]`.
    pub gaps: Vec<f64>,
    /// Last value, used as the limit estimate.
    pub zeta: f64,
    /// Geometric estimate of the variation still to come after the last `w_k`.
    pub remaining: f64,
    /// `(n, |M0(floor(c n)) / M0(n) - 1|)` on a log grid.
    pub defect: Vec<(u64, f64)>,
}

/// Convergence of `M0` along `w_k = floor(c^k)` and its log-periodicity defect.
pub fn m0_convergence(orbit: &BackwardOrbit, c: f64) -> Result<M0Report> {
    if c <= 1.0 {
        return Err(Error::Config(format!("ratio c = {c} must exceed 1")));
    }
    let n_max = orbit.last() as u64;
    let w: Vec<u64> = (1..)
        .map(|k| c.powi(k).floor() as u64)
        .take_while(|&w| w <= n_max)
        .collect();
    if w.len() < 3 {
        return Err(Error::Insufficient(format!("need three w_k below {n_max}")));
    }
    let values: Vec<f64> = w.iter().map(|&k| orbit.m0[k as usize]).collect();
    let gaps: Vec<f64> = values.windows(2).map(|p| (p[1] - p[0]).abs()).collect();
    let zeta = *values.last().unwrap();
    let g = &gaps[gaps.len() - 2..];
    let remaining = if g[1] < g[0] {
        let q = g[1] / g[0];
        g[1] * q / (1.0 - q)
    } else {
        g[1]
    };
    let defect = crate::numeric::log_grid(10, ((n_max as f64) / c).floor().max(10.0) as u64, 5)
        .into_iter()
        .filter_map(|n| {
            let cn = (c * n as f64).floor() as usize;
            (cn <= orbit.last()).then(|| (n, (orbit.m0[cn] / orbit.m0[n as usize] - 1.0).abs()))
        })
        .collect();
    Ok(M0Report {
        w,
        values,
        gaps,
        zeta,
        remaining,
        defect,
    })
}

/// The continuum average `Mbar(x) = (1/x) int_1^x M((alpha u Mbar(u))^(-beta)) du`.
///
/// With `V(x) = x Mbar(x) = exp(U(x))` the equation becomes `g(U) = x - 1 - G`, where
/// `g(U) = int_0^U e^z / m(z) dz`, `m(z) = M(exp(-beta z - beta log alpha))` has period
/// `c_hat = alpha * log_period` and `G = g(c_hat) / (e^c_hat - 1) = -g(-inf)`.
/// `g` is tabulated on one period and extended by
/// `g(l c_hat + w) = G (e^(l c_hat) - 1) + e^(l c_hat) g(w)`.
#[derive(Clone, Debug)]
pub struct MbarSolver {
    spec: MapSpec,
    c_hat: f64,
    nodes: Vec<f64>,
    g_nodes: Vec<f64>,
    g_period: f64,
    big_g: f64,
}

const MBAR_CELLS: usize = 512;

impl MbarSolver {
    pub fn new(spec: &MapSpec) -> Result<Self> {
        let c_hat = spec
            .tail_log_period()
            .ok_or_else(|| Error::Config("Mbar needs a log-periodic modulation".into()))?;
        let mut nodes: Vec<f64> = (0..=MBAR_CELLS).map(|i| c_hat * i as f64 / MBAR_CELLS as f64).collect();
        if spec.has_singularities() {
            // m jumps where z = -log(alpha) mod c_hat
            let z = (-spec.alpha().ln()).rem_euclid(c_hat);
            if z > 0.0 && z < c_hat {
                nodes.push(z);
            }
            nodes.sort_by(f64::total_cmp);
            nodes.dedup();
        }
        let mut solver = MbarSolver {
            spec: spec.clone(),
            c_hat,
            g_nodes: vec![0.0; nodes.len()],
            nodes,
            g_period: 0.0,
            big_g: 0.0,
        };
        let mut acc = 0.0;
        for i in 1..solver.nodes.len() {
            let (a, b) = (solver.nodes[i - 1], solver.nodes[i]);
            acc += solver.cell_integral(a, b)?;
            solver.g_nodes[i] = acc;
        }
        for w in solver.g_nodes.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Numerical("g is not increasing".into()));
            }
        }
        solver.g_period = acc;
        solver.big_g = acc / solver.c_hat.exp_m1();
        Ok(solver)
    }

    /// `m(z)` evaluated strictly inside a cell so the right piece is used.
    fn m_inner(&self, z: f64) -> f64 {
        let alpha = self.spec.alpha();
        let beta = self.spec.beta();
        self.spec.modulating_ln(-beta * z - beta * alpha.ln())
    }

    fn cell_integral(&self, a: f64, b: f64) -> Result<f64> {
        let f = |z: f64| z.exp() / self.m_inner(z);
        // Gauss nodes are interior, so a jump at a cell edge is never sampled.
        adaptive_quad(&f, a, b, 1e-15 * (b.exp())).ok_or_else(|| Error::Numerical(format!("quadrature failed on [{a}, {b}]")))
    }

    pub fn c_hat(&self) -> f64 {
        self.c_hat
    }

    /// `g(c_hat)`.
    pub fn g_period(&self) -> f64 {
        self.g_period
    }

    /// `G = -lim g(U)` as `U -> -inf`.
    pub fn g_infinity(&self) -> f64 {
        self.big_g
    }

    fn g_in_period(&self, w: f64) -> f64 {
        let i = match self.nodes.binary_search_by(|z| z.total_cmp(&w)) {
            Ok(i) => return self.g_nodes[i],
            Err(i) => i - 1,
        };
        let a = self.nodes[i];
        self.g_nodes[i] + adaptive_quad(&|z: f64| z.exp() / self.m_inner(z), a, w, 1e-16 * w.exp()).unwrap_or(f64::NAN)
    }

    /// `g(U)` for any real `U`.
    pub fn g(&self, u: f64) -> f64 {
        let l = (u / self.c_hat).floor();
        let w = u - l * self.c_hat;
        let e = (l * self.c_hat).exp();
        self.big_g * (e - 1.0) + e * self.g_in_period(w)
    }

    /// Solves `g(U) = x - 1 - G` and returns `U(x)`; requires `x > 1`.
    pub fn u_of(&self, x: f64) -> Result<f64> {
        if !(x > 1.0) {
            return Err(Error::Domain(format!("Mbar needs x > 1, got {x}")));
        }
        // G + g(l c_hat + w) = e^(l c_hat) (G + g(w)) = x - 1
        let y = x - 1.0;
        let ratio = y / self.big_g;
        let mut l = (ratio.ln() / self.c_hat).floor();
        let mut rem = y * (-l * self.c_hat).exp() - self.big_g;
        // guard the floor against roundoff at period boundaries
        if rem < 0.0 {
            l -= 1.0;
            rem = y * (-l * self.c_hat).exp() - self.big_g;
        } else if rem >= self.g_period {
            l += 1.0;
            rem = y * (-l * self.c_hat).exp() - self.big_g;
        }
        let rem = rem.clamp(0.0, self.g_period);
        let i = match self.g_nodes.binary_search_by(|g| g.total_cmp(&rem)) {
            Ok(i) => return Ok(l * self.c_hat + self.nodes[i]),
            Err(i) => i - 1,
        };
        let (a, b) = (self.nodes[i], self.nodes[i + 1]);
        let mid = 0.5 * (a + b);
        let m_cell = self.m_inner(mid);
        let w = solve_increasing(
            |w| self.g_in_period(w),
            |w| w.exp() / if self.spec.has_singularities() { m_cell } else { self.m_inner(w) },
            rem,
            a,
            b,
            1e-15,
        )
        .ok_or_else(|| Error::Numerical(format!("cannot invert g at {rem}")))?;
        Ok(l * self.c_hat + w)
    }

    /// `Mbar(x) = exp(U(x)) / x`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(self.u_of(x)?.exp() / x)
    }
}

/// Samples `Mbar` on a log grid of `per_decade` points per decade over `[x_min, x_max]`.
pub fn mbar_solve(spec: &MapSpec, x_min: f64, x_max: f64, per_decade: usize) -> Result<Vec<(f64, f64)>> {
    let solver = MbarSolver::new(spec)?;
    let decades = (x_max / x_min).log10();
    let count = ((decades * per_decade as f64).ceil() as usize).max(1);
    (0..=count)
        .map(|i| {
            let x = x_min * (x_max / x_min).powf(i as f64 / count as f64);
            Ok((x, solver.eval(x)?))
        })
        .collect()
}

/// Geometric subsequence `k_n = floor(c^n)` with norming `A_n = n^(1/beta)`.
#[derive(Clone, Debug, Serialize)]
pub struct SubsequenceGrid {
    pub c: f64,
    pub beta: f64,
    /// `k_0 = 1, k_1, ..`, all at most `n_max`.
    pub k: Vec<u64>,
}

impl SubsequenceGrid {
    pub fn new(c: f64, beta: f64, n_max: u64) -> Result<Self> {
        if !(c > 1.0) {
            return Err(Error::Config(format!("ratio c = {c} must exceed 1")));
        }
        let mut k = vec![1u64];
        for n in 1.. {
            let v = c.powi(n).floor();
            if v > n_max as f64 {
                break;
            }
            let v = v as u64;
            if v > *k.last().unwrap() {
                k.push(v);
            }
        }
        Ok(SubsequenceGrid { c, beta, k })
    }

    pub fn norming(&self, n: f64) -> f64 {
        n.powf(1.0 / self.beta)
    }

    /// `A_{k_n}` for each tabulated `k_n`.
    pub fn a_k(&self) -> Vec<f64> {
        self.k.iter().map(|&k| self.norming(k as f64)).collect()
    }

    /// `delta(x) = x / A_{k_n}` for `A_{k_n} <= x < A_{k_{n+1}}`.
    pub fn delta(&self, x: f64) -> Option<f64> {
        let a = self.a_k();
        let i = a.partition_point(|&v| v <= x);
        (i > 0 && i < a.len()).then(|| x / a[i - 1])
    }

    /// `gamma_x = x / k_n` for `k_{n-1} < x <= k_n`.
    pub fn gamma(&self, x: f64) -> Option<f64> {
        let i = self.k.partition_point(|&k| (k as f64) < x);
        self.k.get(i).map(|&k| x / k as f64)
    }

    /// Sample sizes `n_r = floor(lambda k_r)` whose `gamma` tends to `lambda`;
    /// `lambda = 1` yields `k_r` itself.
    pub fn classifier(&self, lambda: f64) -> Result<Vec<u64>> {
        if !(lambda > 1.0 / self.c && lambda <= 1.0) {
            return Err(Error::Config(format!("lambda = {lambda} outside (1/c, 1]")));
        }
        Ok(self
            .k
            .iter()
            .map(|&k| (lambda * k as f64).floor() as u64)
            .filter(|&n| n >= 1)
            .collect())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct H3Row {
    pub n: usize,
    pub delta: f64,
    pub value: f64,
    pub h: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioRow {
    pub n: u64,
    pub lambda: f64,
    pub ratio: f64,
}

/// `s(floor(A_{k_n} delta)) (A_{k_n} delta)^beta` sampled over `delta in [1, c^(1/beta))`.
#[derive(Clone, Debug, Serialize)]
pub struct LogPeriodicFit {
    pub deltas: Vec<f64>,
    /// Profile at the largest usable `n`.
    pub m_tilde: Vec<f64>,
    pub rows: Vec<H3Row>,
    pub ratios: Vec<RatioRow>,
}

impl LogPeriodicFit {
    pub fn m_tilde_spread(&self) -> f64 {
        let max = self.m_tilde.iter().copied().fold(f64::MIN, f64::max);
        let min = self.m_tilde.iter().copied().fold(f64::MAX, f64::min);
        max / min
    }

    /// Largest `|h|` over all `delta` at subsequence index `n`.
    pub fn h_max(&self, n: usize) -> Option<f64> {
        self.rows.iter().filter(|r| r.n == n).map(|r| r.h.abs()).reduce(f64::max)
    }
}

/// `R_lambda(n) = s(floor(lambda n)) / s(n)`.
pub fn tail_ratio(tail: &TailTable, lambda: f64, n: u64) -> Option<f64> {
    let num = tail.at_real(lambda * n as f64)?;
    let den = tail.at(n as usize)?;
    (den > 0.0).then(|| num / den)
}

pub fn h3_decompose(tail: &TailTable, grid: &SubsequenceGrid, n_delta: usize, lambdas: &[f64], ratio_ns: &[u64]) -> Result<LogPeriodicFit> {
    let beta = grid.beta;
    let top = grid.c.powf(1.0 / beta);
    let deltas: Vec<f64> = (0..n_delta).map(|i| top.powf(i as f64 / n_delta as f64)).collect();
    let a_k = grid.a_k();
    let usable: Vec<usize> = (0..a_k.len())
        .filter(|&n| n >= 1 && ((a_k[n] * top).floor() as usize) <= tail.horizon())
        .collect();
    if usable.is_empty() {
        return Err(Error::Insufficient("tail too short for one subsequence block".into()));
    }
    let profile = |n: usize| -> Vec<f64> {
        deltas
            .iter()
            .map(|&d| {
                let y = a_k[n] * d;
                tail.at_real(y).unwrap() * y.powf(beta)
            })
            .collect()
    };
    let last = *usable.last().unwrap();
    let m_tilde = profile(last);
    let mut rows = Vec::new();
    for &n in &usable {
        for ((d, v), m) in deltas.iter().zip(profile(n)).zip(&m_tilde) {
            rows.push(H3Row {
                n,
                delta: *d,
                value: v,
                h: v - m,
            });
        }
    }
    let ratios = lambdas
        .iter()
        .flat_map(|&lambda| {
            ratio_ns.iter().filter_map(move |&n| {
                Some(RatioRow {
                    n,
                    lambda,
                    ratio: tail_ratio(tail, lambda, n)?,
                })
            })
        })
        .collect();
    Ok(LogPeriodicFit {
        deltas,
        m_tilde,
        rows,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lsv_first_preimage_matches_bisection() {
        let spec = MapSpec::lsv(0.75).unwrap();
        let orbit = backward_orbit(&spec, 3).unwrap();
        assert_eq!(orbit.x[0], 0.5);
        let (mut lo, mut hi) = (0.0f64, 0.5f64);
        let a = 2f64.powf(0.75);
        while hi - lo > 1e-16 {
            let m = 0.5 * (lo + hi);
            if m * (1.0 + a * m.powf(0.75)) < 0.5 {
                lo = m;
            } else {
                hi = m;
            }
        }
        assert!((orbit.x[1] - lo).abs() < 1e-14);
    }

    #[test]
    fn orbit_is_strictly_decreasing_and_forward_consistent() {
        let spec = MapSpec::m1(0.75, 3.0).unwrap();
        let orbit = backward_orbit(&spec, 20_000).unwrap();
        for n in 0..orbit.last() {
            assert!(orbit.x[n + 1] < orbit.x[n]);
            if !orbit.jump[n] {
                let fx = spec.eval_map(orbit.x[n + 1]).unwrap();
                assert!((fx - orbit.x[n]).abs() <= 1e-12 * orbit.x[n], "n = {n}");
            } else {
                let s = orbit.x[n + 1];
                assert!(spec.is_singular(s));
                assert!(orbit.x[n] >= spec.eval_limit(s, Side::Below));
                assert!(orbit.x[n] <= spec.eval_limit(s, Side::Above));
            }
        }
        let (lo, hi) = (spec.inf_modulating(), spec.sup_modulating());
        assert!(orbit.m0[1..].iter().all(|&m| m >= lo && m <= hi));
    }

    #[test]
    fn tail_starts_at_one_half() {
        let spec = MapSpec::m2(0.75, 1.0, 0.4, 3.0).unwrap();
        let tail = tau_tail(&backward_orbit(&spec, 10).unwrap());
        assert_eq!(tail.at(0), Some(1.0));
        assert_eq!(tail.at(1), Some(0.5));
        assert_eq!(tail.horizon(), 11);
    }

    #[test]
    fn g_geometric_identity() {
        let spec = MapSpec::m1(0.75, 3.0).unwrap();
        let s = MbarSolver::new(&spec).unwrap();
        let c = s.c_hat();
        assert_eq!(s.g(0.0), 0.0);
        let lhs = s.g(2.0 * c);
        let rhs = (c.exp() + 1.0) * s.g_period();
        assert!(((lhs - rhs) / rhs).abs() < 1e-12);
        let g_neg = s.g(-40.0 * c);
        assert!((g_neg + s.g_infinity()).abs() < 1e-12);
    }

    #[test]
    fn g_increasing_across_the_jump() {
        let spec = MapSpec::m1(0.75, 3.0).unwrap();
        let s = MbarSolver::new(&spec).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..2000 {
            let u = -3.0 + 0.004 * i as f64;
            let g = s.g(u);
            assert!(g > prev);
            prev = g;
        }
    }

    #[test]
    fn mbar_inverts_g() {
        for spec in [MapSpec::m1(0.75, 3.0).unwrap(), MapSpec::m2(0.75, 1.0, 0.4, 3.0).unwrap()] {
            let s = MbarSolver::new(&spec).unwrap();
            for x in [1.5, 10.0, 123.4, 1e4, 3.3e6] {
                let u = s.u_of(x).unwrap();
                let back = s.g(u) + 1.0 + s.g_infinity();
                assert!(((back - x) / x).abs() < 1e-10, "x = {x}: {back}");
            }
        }
    }

    #[test]
    fn mbar_constant_for_constant_modulation() {
        // m = a: g(U) = (e^U - 1)/a, G = 1/a, so e^U = a (x - 1) and Mbar = a (1 - 1/x).
        let spec = MapSpec::m2(0.75, 1.7, 0.0, 3.0).unwrap();
        let s = MbarSolver::new(&spec).unwrap();
        for x in [2.0, 50.0, 1e5] {
            let expect = 1.7 * (1.0 - 1.0 / x);
            assert!((s.eval(x).unwrap() - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn subsequence_grid_basics() {
        let c = 2.25f64.exp();
        let g = SubsequenceGrid::new(c, 4.0 / 3.0, 1_000_000).unwrap();
        assert_eq!(g.k[1], 9);
        for &k in &g.k {
            assert_eq!(g.gamma(k as f64), Some(1.0));
        }
        for a in g.a_k().iter().take(g.k.len() - 1) {
            assert!((g.delta(*a).unwrap() - 1.0).abs() < 1e-15);
        }
        let n = g.classifier(0.5).unwrap();
        let last = *n.last().unwrap();
        assert!((g.gamma(last as f64).unwrap() - 0.5).abs() < 1e-3);
        assert!(g.classifier(0.05).is_err());
        assert!(g.classifier(1.5).is_err());
    }
}
