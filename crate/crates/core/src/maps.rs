//! The wobbly intermittent map family.
//!
//! Every variant shares the affine right branch `2x - 1` on `(1/2, 1]`; the
//! left branch is `x (1 + M(x) x^alpha)` (or `x (1 + M(x) x log(x)^2)` for the
//! Holland variant) with a modulating coefficient `M`:
//!
//! * `LSV`: `M = 2^alpha`, constant.
//! * `M1-step`: `M(x) = C0 * 2^(-frac(log(x) / c1))`, a log-periodic sawtooth with
//!   discontinuities at `s_l = exp(-l c1)`. `C0` is the supremum of `M1`, fixed so
//!   that the left branch is full: `f(1/2^-) = 1`, i.e. `C0 = 2^(alpha + 1 - log 2 / c1)`.
//!   The infimum `C0 / 2 = 2^(alpha - log 2 / c1)` is reported by
//!   [`MapSpec::inf_modulating`].
//! * `M2-sine`: `M(x) = a (1 + b sin(2 pi log(x) / c2))`, smooth and log-periodic.
//! * `Holland-log`: the `log(x)^2` left branch modulated by `M1` (evaluation only).
//!
//! At a discontinuity `s_l` the map takes its value from above, `f(s_l) = f(s_l^+)`,
//! and the jump `f(s_l^+) - f(s_l^-)` equals `(C0 / 2) s_l^(1 + alpha)`.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::solve_increasing;

/// Largest overshoot past the unit interval that is treated as roundoff.
pub const OVERSHOOT_TOL: f64 = 1e-14;

/// Half-width (in units of `log(x) / c1`) of the snapping zone around a singular level.
const LEVEL_SNAP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "LSV")]
    Lsv,
    #[serde(rename = "M1-step")]
    M1Step,
    #[serde(rename = "M2-sine")]
    M2Sine,
    #[serde(rename = "Holland-log")]
    HollandLog,
}

/// Serialized form of a [`MapSpec`]; derived constants are never stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapParams {
    pub variant: Variant,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
}

/// A validated map variant together with its derived constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapParams", into = "MapParams")]
pub struct MapSpec {
    params: MapParams,
    beta: f64,
    /// `C0` for M1/Holland, `2^alpha` for LSV, `a` for M2.
    amplitude: f64,
    /// `c1` or `c2`; zero for LSV.
    log_period: f64,
    /// `log 2 / c1` for M1/Holland.
    gamma: f64,
    /// `2 pi / c2` for M2.
    omega: f64,
}

/// Side from which a one-sided limit is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Below,
    Above,
}

/// A continuity piece of the map. `Left(level)` carries `floor(log(x) / c1)` for
/// the step-modulated variants and `0` otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    Left(i32),
    Right,
}

impl TryFrom<MapParams> for MapSpec {
    type Error = Error;

    fn try_from(p: MapParams) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if !(p.alpha > 0.0 && p.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        let beta = 1.0 / p.alpha;
        let (amplitude, log_period, gamma, omega) = match p.variant {
            Variant::Lsv => (2f64.powf(p.alpha), 0.0, 0.0, 0.0),
            Variant::M1Step | Variant::HollandLog => {
                let c1 = match p.c1 {
                    Some(c) if c > 0.0 => c,
                    _ => return bad("c1 > 0 required"),
                };
                if LN_2 / c1 >= 1.0 {
                    return bad("log 2 / c1 must be < 1");
                }
                let c0 = 2f64.powf(p.alpha + 1.0 - LN_2 / c1);
                (c0, c1, LN_2 / c1, 0.0)
            }
            Variant::M2Sine => {
                let (a, b, c2) = match (p.a, p.b, p.c2) {
                    (Some(a), Some(b), Some(c2)) => (a, b, c2),
                    _ => return bad("a, b and c2 required"),
                };
                if a <= 0.0 || c2 <= 0.0 {
                    return bad("a and c2 must be positive");
                }
                if !(0.0..0.5).contains(&b) {
                    return bad("b must lie in [0, 1/2)");
                }
                (a, c2, 0.0, 2.0 * PI / c2)
            }
        };
        Ok(MapSpec {
            params: p,
            beta,
            amplitude,
            log_period,
            gamma,
            omega,
        })
    }
}

impl From<MapSpec> for MapParams {
    fn from(s: MapSpec) -> Self {
        s.params
    }
}

impl MapSpec {
    pub fn lsv(alpha: f64) -> Result<Self> {
        MapParams {
            variant: Variant::Lsv,
            alpha,
            c1: None,
            a: None,
            b: None,
            c2: None,
        }
        .try_into()
    }

    pub fn m1(alpha: f64, c1: f64) -> Result<Self> {
        MapParams {
            variant: Variant::M1Step,
            alpha,
            c1: Some(c1),
            a: None,
            b: None,
            c2: None,
        }
        .try_into()
    }

    pub fn m2(alpha: f64, a: f64, b: f64, c2: f64) -> Result<Self> {
        MapParams {
            variant: Variant::M2Sine,
            alpha,
            c1: None,
            a: Some(a),
            b: Some(b),
            c2: Some(c2),
        }
        .try_into()
    }

    pub fn holland(alpha: f64, c1: f64) -> Result<Self> {
        MapParams {
            variant: Variant::HollandLog,
            alpha,
            c1: Some(c1),
            a: None,
            b: None,
            c2: None,
        }
        .try_into()
    }

    pub fn params(&self) -> &MapParams {
        &self.params
    }

    pub fn variant(&self) -> Variant {
        self.params.variant
    }

    pub fn alpha(&self) -> f64 {
        self.params.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `C0 = sup M1`; `None` for variants without the step modulation.
    pub fn c0(&self) -> Option<f64> {
        self.has_singularities().then_some(self.amplitude)
    }

    /// Log-period of `M` (`c1` or `c2`), `None` for LSV.
    pub fn log_period(&self) -> Option<f64> {
        (self.params.variant != Variant::Lsv).then_some(self.log_period)
    }

    /// `c_hat = alpha * log_period`, the log-period of the return-time tail.
    pub fn tail_log_period(&self) -> Option<f64> {
        self.log_period().map(|p| self.alpha() * p)
    }

    /// Subsequence ratio `c = exp(alpha * log_period)`.
    pub fn subsequence_ratio(&self) -> Option<f64> {
        self.tail_log_period().map(f64::exp)
    }

    pub fn has_singularities(&self) -> bool {
        matches!(self.params.variant, Variant::M1Step | Variant::HollandLog)
    }

    pub fn inf_modulating(&self) -> f64 {
        match self.params.variant {
            Variant::Lsv => self.amplitude,
            Variant::M1Step | Variant::HollandLog => 0.5 * self.amplitude,
            Variant::M2Sine => self.amplitude * (1.0 - self.params.b.unwrap_or(0.0)),
        }
    }

    pub fn sup_modulating(&self) -> f64 {
        match self.params.variant {
            Variant::Lsv | Variant::M1Step | Variant::HollandLog => self.amplitude,
            Variant::M2Sine => self.amplitude * (1.0 + self.params.b.unwrap_or(0.0)),
        }
    }

    /// `beta_1 = 1 + (1/alpha)(1 - log 2 / c1)`, the per-excursion decay exponent of
    /// the inducing construction.
    pub fn beta1(&self) -> Option<f64> {
        self.has_singularities()
            .then(|| 1.0 + self.beta * (1.0 - self.gamma))
    }

    // ---- pieces -------------------------------------------------------------------

    fn level(&self, x: f64, side: Side) -> i32 {
        self.level_ln(x.ln(), side)
    }

    fn level_ln(&self, ln_x: f64, side: Side) -> i32 {
        let q = ln_x / self.log_period;
        let r = q.round();
        if (q - r).abs() <= LEVEL_SNAP {
            match side {
                Side::Above => r as i32,
                Side::Below => r as i32 - 1,
            }
        } else {
            q.floor() as i32
        }
    }

    /// The continuity piece that governs the limit of `f` at `x` from `side`.
    pub fn branch_at(&self, x: f64, side: Side) -> Branch {
        if x > 0.5 || (x == 0.5 && side == Side::Above) {
            return Branch::Right;
        }
        if self.has_singularities() && x > 0.0 {
            Branch::Left(self.level(x, side))
        } else {
            Branch::Left(0)
        }
    }

    /// The piece used for the value `f(x)`: from above at `s_l`, the left branch at `1/2`.
    pub fn value_branch(&self, x: f64) -> Branch {
        if x > 0.5 {
            Branch::Right
        } else if x == 0.5 {
            self.branch_at(x, Side::Below)
        } else {
            self.branch_at(x, Side::Above)
        }
    }

    fn modulating_on(&self, ln_x: f64, level: i32) -> f64 {
        match self.params.variant {
            Variant::Lsv => self.amplitude,
            Variant::M1Step | Variant::HollandLog => {
                // C0 2^(-frac) with frac = log(x)/c1 - level
                self.amplitude * (LN_2 * level as f64 - self.gamma * ln_x).exp()
            }
            Variant::M2Sine => self.amplitude * (1.0 + self.params.b.unwrap() * (self.omega * ln_x).sin()),
        }
    }

    /// The modulating coefficient `M(x)` on `(0, 1]`.
    pub fn modulating(&self, x: f64) -> Result<f64> {
        if !(x > 0.0 && x <= 1.0) {
            return Err(Error::Domain(format!("M undefined at {x}")));
        }
        let level = match self.branch_at(x, Side::Above) {
            Branch::Left(l) => l,
            Branch::Right => {
                if self.has_singularities() {
                    self.level(x, Side::Above)
                } else {
                    0
                }
            }
        };
        Ok(self.modulating_on(x.ln(), level))
    }

    /// `M` as a function of `log x`, extended log-periodically to all of the real line.
    pub fn modulating_ln(&self, ln_x: f64) -> f64 {
        let level = if self.has_singularities() {
            self.level_ln(ln_x, Side::Above)
        } else {
            0
        };
        self.modulating_on(ln_x, level)
    }

    /// `f` restricted to one continuity piece (extended by continuity to its ends).
    #[inline]
    pub fn eval_on(&self, x: f64, branch: Branch) -> f64 {
        match branch {
            Branch::Right => 2.0 * x - 1.0,
            Branch::Left(level) => {
                if x <= 0.0 {
                    return 0.0;
                }
                let ln_x = x.ln();
                let m = self.modulating_on(ln_x, level);
                match self.params.variant {
                    Variant::HollandLog => x + m * x * x * ln_x * ln_x,
                    _ => x + m * x * (self.params.alpha * ln_x).exp(),
                }
            }
        }
    }

    /// Derivative of `f` on one continuity piece.
    pub fn deriv_on(&self, x: f64, branch: Branch) -> f64 {
        let level = match branch {
            Branch::Right => return 2.0,
            Branch::Left(l) => l,
        };
        if x <= 0.0 {
            return 1.0;
        }
        let alpha = self.params.alpha;
        let ln_x = x.ln();
        let m = self.modulating_on(ln_x, level);
        match self.params.variant {
            Variant::Lsv => 1.0 + (1.0 + alpha) * m * (alpha * ln_x).exp(),
            Variant::M1Step => 1.0 + (1.0 + alpha - self.gamma) * m * (alpha * ln_x).exp(),
            Variant::M2Sine => {
                let dm = self.amplitude * self.params.b.unwrap() * self.omega * (self.omega * ln_x).cos();
                1.0 + (alpha * ln_x).exp() * (dm + (1.0 + alpha) * m)
            }
            Variant::HollandLog => 1.0 + m * x * ln_x * ((2.0 - self.gamma) * ln_x + 2.0),
        }
    }

    /// Clamps roundoff overshoot past the unit interval.
    #[inline]
    fn clamp(&self, y: f64) -> Result<f64> {
        if y > 1.0 {
            if y - 1.0 <= OVERSHOOT_TOL {
                Ok(1.0)
            } else {
                Err(Error::Numerical(format!("map overshoot to {y}")))
            }
        } else if y < 0.0 {
            if -y <= OVERSHOOT_TOL {
                Ok(0.0)
            } else {
                Err(Error::Numerical(format!("map undershoot to {y}")))
            }
        } else {
            Ok(y)
        }
    }

    /// Evaluates the map on `[0, 1]`.
    pub fn eval_map(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
        }
        if x == 0.0 {
            return Ok(0.0);
        }
        self.clamp(self.eval_on(x, self.value_branch(x)))
    }

    /// One-sided limit `f(x^-)` or `f(x^+)`.
    pub fn eval_limit(&self, x: f64, side: Side) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let y = self.eval_on(x, self.branch_at(x, side));
        y.clamp(0.0, 1.0)
    }

    /// Unchecked forward step for orbit sampling. Clamps into `[0, 1]`.
    #[inline]
    pub fn step(&self, x: f64) -> f64 {
        if x > 0.5 {
            return 2.0 * x - 1.0;
        }
        self.eval_on(x, self.value_branch(x)).min(1.0)
    }

    /// Forward step with float guards: a point exactly on `1/2`, on `1` or on some
    /// `s_l` is first moved one ulp toward 0. The flag reports whether that happened.
    #[inline]
    pub fn guarded_step(&self, x: f64) -> (f64, bool) {
        let hit = x == 0.5 || x >= 1.0 || self.is_exact_singular(x);
        let x = if hit { f64::from_bits(x.min(1.0).to_bits() - 1) } else { x };
        (self.step(x), hit)
    }

    fn is_exact_singular(&self, x: f64) -> bool {
        if !self.has_singularities() || x >= 0.5 || x <= 0.0 {
            return false;
        }
        let q = -x.ln() / self.log_period;
        let l = q.round();
        (q - l).abs() < 1e-9 && l >= 1.0 && self.singular_point(l as u32) == Some(x)
    }

    /// Analytic derivative away from discontinuities.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
        }
        if self.is_singular(x) {
            return Err(Error::Singular(x));
        }
        Ok(self.deriv_on(x, self.value_branch(x)))
    }

    /// Whether `x` is `1/2` or (numerically) one of the `s_l`.
    pub fn is_singular(&self, x: f64) -> bool {
        if x == 0.5 {
            return true;
        }
        if !self.has_singularities() || x <= 0.0 || x >= 0.5 {
            return false;
        }
        let q = -x.ln() / self.log_period;
        (q - q.round()).abs() <= 1e-13 && q.round() >= 1.0
    }

    // ---- singularity set ----------------------------------------------------------

    /// `s_l = exp(-l c1)`; `None` for variants without singularities.
    pub fn singular_point(&self, level: u32) -> Option<f64> {
        (self.has_singularities() && level >= 1).then(|| (-(level as f64) * self.log_period).exp())
    }

    /// Jump `f(s_l^+) - f(s_l^-)`, evaluated from the one-sided branches.
    pub fn jump(&self, level: u32) -> Option<f64> {
        let s = self.singular_point(level)?;
        let ln_s = s.ln();
        let above = self.modulating_on(ln_s, -(level as i32));
        let below = self.modulating_on(ln_s, -(level as i32) - 1);
        Some((above - below) * s * s.powf(self.params.alpha))
    }

    pub fn singularity_set(&self, max_level: u32) -> SingularitySet {
        let points: Vec<SingularPoint> = (1..=max_level)
            .filter_map(|l| {
                Some(SingularPoint {
                    level: l,
                    x: self.singular_point(l)?,
                    jump: self.jump(l)?,
                })
            })
            .collect();
        SingularitySet { points }
    }

    /// Discontinuities of the left branch strictly inside `(lo, hi)`, ascending.
    /// Points below `floor` are not enumerated.
    pub fn singularities_in(&self, lo: f64, hi: f64, floor: f64) -> Vec<f64> {
        let mut out = Vec::new();
        if !self.has_singularities() || hi <= lo {
            return out;
        }
        let lo_eff = lo.max(floor).max(f64::MIN_POSITIVE);
        let hi_eff = hi.min(0.5);
        if hi_eff <= lo_eff {
            return out;
        }
        let l_min = (-hi_eff.ln() / self.log_period).floor().max(1.0) as i64;
        let l_max = (-lo_eff.ln() / self.log_period).ceil() as i64;
        for l in (l_min..=l_max).rev() {
            if l < 1 {
                continue;
            }
            let s = (-(l as f64) * self.log_period).exp();
            if s > lo && s < hi && s >= floor {
                out.push(s);
            }
        }
        out
    }

    /// All discontinuities (including `1/2`) strictly inside `(lo, hi)`, ascending.
    pub fn discontinuities_in(&self, lo: f64, hi: f64, floor: f64) -> Vec<f64> {
        let mut v = self.singularities_in(lo, hi, floor);
        if lo < 0.5 && hi > 0.5 {
            v.push(0.5);
        }
        v
    }

    /// Solves `f(x) = y` for `x` in `[lo, hi]` on a single continuity piece.
    pub fn invert_on(&self, y: f64, lo: f64, hi: f64, branch: Branch) -> Option<f64> {
        match branch {
            Branch::Right => {
                let x = 0.5 * (y + 1.0);
                (x >= lo - 1e-15 && x <= hi + 1e-15).then_some(x.clamp(lo, hi))
            }
            Branch::Left(_) => solve_increasing(
                |x| self.eval_on(x, branch),
                |x| self.deriv_on(x, branch),
                y,
                lo,
                hi,
                1e-16,
            ),
        }
    }

    /// Domain `[lo, hi]` of a continuity piece, closed at both ends.
    pub fn piece_domain(&self, branch: Branch) -> (f64, f64) {
        match branch {
            Branch::Right => (0.5, 1.0),
            Branch::Left(level) if self.has_singularities() => {
                let lo = (level as f64 * self.log_period).exp();
                let hi = ((level + 1) as f64 * self.log_period).exp().min(0.5);
                (lo, hi)
            }
            Branch::Left(_) => (0.0, 0.5),
        }
    }

    /// Inverse of one continuity piece, clamped to its domain.
    pub fn invert_piece(&self, y: f64, branch: Branch) -> f64 {
        self.piece_inverse(branch).apply(self, y)
    }

    /// The inverse of one piece with its constants evaluated once, for repeated use.
    pub fn piece_inverse(&self, branch: Branch) -> PieceInverse {
        let (lo, hi) = self.piece_domain(branch);
        let kind = match (branch, self.power_form(branch)) {
            (Branch::Right, _) => InverseKind::Affine,
            (_, Some((a, q))) => InverseKind::Power { a, q },
            (b, None) => InverseKind::General(b),
        };
        PieceInverse { kind, lo, hi }
    }

    /// The inverse table shared by all power-form pieces, if the map has them.
    pub fn power_table(&self) -> Option<PowerTable> {
        self.power_form(Branch::Left(-1)).map(|(_, q)| PowerTable::new(q))
    }

    /// `(A, q)` with `f(x) = x + A x^q` on the piece, when the branch has that form.
    fn power_form(&self, branch: Branch) -> Option<(f64, f64)> {
        let Branch::Left(level) = branch else { return None };
        let alpha = self.params.alpha;
        match self.params.variant {
            Variant::Lsv => Some((self.amplitude, 1.0 + alpha)),
            Variant::M1Step => Some((self.amplitude * (LN_2 * level as f64).exp(), 1.0 + alpha - self.gamma)),
            _ => None,
        }
    }

    // ---- Schwarzian diagnostics ---------------------------------------------------

    /// Numerical Schwarzian derivative `f'''/f' - (3/2)(f''/f')^2` at each point,
    /// by central differences of the analytic first derivative.
    pub fn schwarzian_report(&self, points: &[f64]) -> Vec<SchwarzianRow> {
        points
            .iter()
            .map(|&x| {
                if !(x > 0.0 && x <= 1.0) || self.is_singular(x) {
                    return SchwarzianRow {
                        x,
                        value: None,
                        sign: 0,
                        skipped: true,
                    };
                }
                let branch = self.value_branch(x);
                let mut h = 1e-3 * x.min(1.0 - x).max(1e-300);
                if let Branch::Left(_) = branch {
                    let near = self.discontinuities_in(x - 2.0 * h, x + 2.0 * h, 0.0);
                    if let Some(d) = near.iter().map(|s| (s - x).abs()).reduce(f64::min) {
                        h = h.min(0.25 * d);
                    }
                    h = h.min(0.25 * (0.5 - x).abs().max(f64::MIN_POSITIVE));
                }
                let d0 = self.deriv_on(x, branch);
                let dp = self.deriv_on(x + h, branch);
                let dm = self.deriv_on(x - h, branch);
                let f2 = (dp - dm) / (2.0 * h);
                let f3 = (dp - 2.0 * d0 + dm) / (h * h);
                let s = f3 / d0 - 1.5 * (f2 / d0).powi(2);
                let sign = if s.abs() < 1e-9 * (1.0 + (f3 / d0).abs()) {
                    0
                } else if s > 0.0 {
                    1
                } else {
                    -1
                };
                SchwarzianRow {
                    x,
                    value: Some(s),
                    sign,
                    skipped: false,
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingularPoint {
    pub level: u32,
    pub x: f64,
    pub jump: f64,
}

/// The discontinuities `s_l = exp(-l c1)` of the step-modulated left branch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingularitySet {
    pub points: Vec<SingularPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchwarzianRow {
    pub x: f64,
    pub value: Option<f64>,
    /// `-1`, `0` or `1`.
    pub sign: i8,
    pub skipped: bool,
}

#[derive(Clone, Copy, Debug)]
enum InverseKind {
    Affine,
    Power { a: f64, q: f64 },
    General(Branch),
}

/// See [`MapSpec::piece_inverse`].
#[derive(Clone, Copy, Debug)]
pub struct PieceInverse {
    kind: InverseKind,
    lo: f64,
    hi: f64,
}

impl PieceInverse {
    pub fn apply(&self, spec: &MapSpec, y: f64) -> f64 {
        let (lo, hi) = (self.lo, self.hi);
        match self.kind {
            InverseKind::Affine => (0.5 * (y + 1.0)).clamp(lo, hi),
            _ if y <= 0.0 => lo,
            InverseKind::Power { a, q } => invert_power(y, a, q, lo, hi),
            InverseKind::General(b) => {
                let x0 = (2.0 * y - spec.eval_on(y.min(hi), b)).clamp(lo, hi);
                newton_bracketed(x0, lo, hi, |x| (spec.eval_on(x, b) - y, spec.deriv_on(x, b)))
            }
        }
    }
}

impl PieceInverse {
    /// `count` inverse steps. Power pieces use `table` (built for the same map) and
    /// carry `t = a y^(q - 1)` along the run instead of recomputing it.
    pub fn apply_n(&self, spec: &MapSpec, table: Option<&PowerTable>, mut y: f64, count: u32) -> f64 {
        if let (InverseKind::Power { a, q }, Some(tab)) = (self.kind, table) {
            if tab.q == q && y > 0.0 {
                let mut t = a * y.powf(q - 1.0);
                for _ in 0..count {
                    match tab.eval(t) {
                        Some((h, g)) => {
                            y *= h;
                            t *= g;
                        }
                        None => {
                            y = invert_power(y, a, q, self.lo, self.hi);
                            t = a * y.powf(q - 1.0);
                        }
                    }
                }
                return y.clamp(self.lo, self.hi);
            }
        }
        for _ in 0..count {
            y = self.apply(spec, y);
        }
        y
    }
}

const SERIES_TERMS: usize = 8;
const SERIES_LIMIT: f64 = 1e-3;
const CHEB_DEGREE: usize = 16;
const SEGMENT_WIDTH: f64 = 0.5;
const TABLE_T_MAX: f64 = 64.0;

/// `h(t)` solving `h + t h^q = 1` and `g(t) = h(t)^(q - 1)`, so that `x + a x^q = y`
/// inverts to `x = y h(t)` with `t = a y^(q - 1)`, and the next `t` along a run on
/// the same piece is `t g(t)`. Power series below `1e-3`, piecewise Chebyshev in
/// `log t` up to `64`.
#[derive(Clone, Debug)]
pub struct PowerTable {
    q: f64,
    h_series: [f64; SERIES_TERMS],
    g_series: [f64; SERIES_TERMS],
    s0: f64,
    /// Per segment: values at the midpoint and Chebyshev coefficients of the
    /// deviation from them (which keeps the rounding relative to the small part).
    segments: Vec<([f64; 2], [[f64; CHEB_DEGREE + 1]; 2])>,
}

impl PowerTable {
    pub fn new(q: f64) -> Self {
        assert!(q > 1.0, "power table needs q > 1");
        // Lagrange inversion of w = t (1 - w)^q with h = 1 - w
        let binom = |z: f64, k: usize| (0..k).fold(1.0, |acc, i| acc * (z - i as f64) / (i + 1) as f64);
        let mut h_series = [0.0; SERIES_TERMS];
        let mut g_series = [0.0; SERIES_TERMS];
        h_series[0] = 1.0;
        g_series[0] = 1.0;
        for k in 1..SERIES_TERMS {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let kf = k as f64;
            h_series[k] = -sign * binom(q * kf, k - 1) / kf;
            g_series[k] = -sign * (q - 1.0) * binom(q * kf + q - 2.0, k - 1) / kf;
        }
        let s0 = SERIES_LIMIT.ln();
        let count = ((TABLE_T_MAX.ln() - s0) / SEGMENT_WIDTH).ceil() as usize;
        let segments = (0..count)
            .map(|i| {
                let lo = s0 + i as f64 * SEGMENT_WIDTH;
                let exact = |s: f64| {
                    let h = solve_h(s.exp(), q);
                    [h, h.powf(q - 1.0)]
                };
                let mid = exact(lo + 0.5 * SEGMENT_WIDTH);
                let dev = chebyshev_fit(lo, lo + SEGMENT_WIDTH, |s| {
                    let v = exact(s);
                    [v[0] - mid[0], v[1] - mid[1]]
                });
                (mid, dev)
            })
            .collect();
        PowerTable {
            q,
            h_series,
            g_series,
            s0,
            segments,
        }
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `(h(t), g(t))`, or `None` outside the tabulated range.
    #[inline]
    pub fn eval(&self, t: f64) -> Option<(f64, f64)> {
        if t < SERIES_LIMIT {
            if !(t >= 0.0) {
                return None;
            }
            let horner = |c: &[f64; SERIES_TERMS]| c.iter().rev().fold(0.0, |acc, &k| acc * t + k);
            return Some((horner(&self.h_series), horner(&self.g_series)));
        }
        let u = (t.ln() - self.s0) / SEGMENT_WIDTH;
        let i = u as usize;
        let (mid, dev) = self.segments.get(i)?;
        let x = 2.0 * (u - i as f64) - 1.0;
        Some((mid[0] + clenshaw(&dev[0], x), mid[1] + clenshaw(&dev[1], x)))
    }
}

fn solve_h(t: f64, q: f64) -> f64 {
    // h + t h^q = 1 on (0, 1]
    let mut h = if t < 1.0 { 1.0 / (1.0 + t) } else { t.powf(-1.0 / q) };
    for _ in 0..100 {
        let hq1 = h.powf(q - 1.0);
        let g = h + t * h * hq1 - 1.0;
        let next = (h - g / (1.0 + q * t * hq1)).clamp(0.5 * h, 1.0);
        let done = (next - h).abs() <= f64::EPSILON * h;
        h = next;
        if done {
            break;
        }
    }
    h
}

fn chebyshev_fit<F: Fn(f64) -> [f64; 2]>(lo: f64, hi: f64, f: F) -> [[f64; CHEB_DEGREE + 1]; 2] {
    let n = CHEB_DEGREE + 1;
    let nodes: Vec<(f64, [f64; 2])> = (0..n)
        .map(|j| {
            let theta = PI * (j as f64 + 0.5) / n as f64;
            (theta, f(0.5 * (lo + hi) + 0.5 * (hi - lo) * theta.cos()))
        })
        .collect();
    let mut out = [[0.0; CHEB_DEGREE + 1]; 2];
    for (c, coeffs) in out.iter_mut().enumerate() {
        for (k, slot) in coeffs.iter_mut().enumerate() {
            let sum: f64 = nodes.iter().map(|(theta, v)| v[c] * (k as f64 * theta).cos()).sum();
            *slot = sum * if k == 0 { 1.0 } else { 2.0 } / n as f64;
        }
    }
    out
}

#[inline]
fn clenshaw(c: &[f64; CHEB_DEGREE + 1], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c[1..].iter().rev() {
        (b1, b2) = (2.0 * x * b1 - b2 + ck, b1);
    }
    x * b1 - b2 + c[0]
}

/// Newton iteration for an increasing function, safeguarded by bisection.
fn newton_bracketed<F: Fn(f64) -> (f64, f64)>(mut x: f64, mut l: f64, mut h: f64, gd: F) -> f64 {
    for _ in 0..100 {
        let (g, d) = gd(x);
        if g == 0.0 {
            break;
        }
        if g < 0.0 {
            l = x;
        } else {
            h = x;
        }
        let mut next = x - g / d;
        if !(next >= l && next <= h) {
            next = 0.5 * (l + h);
        }
        let done = (next - x).abs() <= 4.0 * f64::EPSILON * x || h - l <= 2.0 * f64::EPSILON * h;
        x = next;
        if done {
            break;
        }
    }
    x
}

/// Solves `x + a x^q = y` on `[lo, hi]`, starting from the second-order series
/// `y - a y^q + q a^2 y^(2q - 1)`.
fn invert_power(y: f64, a: f64, q: f64, lo: f64, hi: f64) -> f64 {
    let t = a * y.powf(q - 1.0);
    let mut x = y * (1.0 - t + q * t * t);
    if !(x > lo && x < hi) || t > 0.2 {
        x = x.clamp(lo, hi);
        if x <= 0.0 {
            x = 0.5 * (lo + hi);
        }
    }
    newton_bracketed(x, lo, hi, |x| {
        let xq1 = x.powf(q - 1.0);
        (x * (1.0 + a * xq1) - y, 1.0 + q * a * xq1)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_table_solves_its_equation() {
        for q in [1.25, 1.0 + 0.75 - LN_2 / 3.0, 1.75] {
            let tab = PowerTable::new(q);
            for i in 0..4000 {
                let t = 10f64.powf(-12.0 + 13.8 * i as f64 / 4000.0);
                let (h, g) = tab.eval(t).unwrap();
                let exact = solve_h(t, q);
                assert!((h - exact).abs() <= 8.0 * f64::EPSILON * exact, "q {q} t {t}: {h} vs {exact}");
                let ge = exact.powf(q - 1.0);
                assert!((g - ge).abs() <= 8.0 * f64::EPSILON * ge, "q {q} t {t}: g {g} vs {ge}");
            }
            assert!(tab.eval(100.0).is_none());
        }
    }

    #[test]
    fn tabulated_runs_match_stepwise_inversion() {
        let spec = m1();
        let tab = spec.power_table().unwrap();
        for level in [-1, -2, -5] {
            let b = Branch::Left(level);
            let inv = spec.piece_inverse(b);
            let (lo, hi) = spec.piece_domain(b);
            for k in 1..20 {
                let y = spec.eval_on(lo + (hi - lo) * k as f64 / 20.0, b);
                let slow = (0..7).fold(y, |y, _| inv.apply(&spec, y));
                let fast = inv.apply_n(&spec, Some(&tab), y, 7);
                assert!((slow - fast).abs() <= 64.0 * f64::EPSILON * slow, "level {level}: {slow} vs {fast}");
            }
        }
    }

    #[test]
    fn invert_piece_is_a_right_inverse() {
        for spec in [MapSpec::m1(0.75, 3.0).unwrap(), MapSpec::lsv(0.75).unwrap(), MapSpec::m2(0.75, 1.0, 0.4, 3.0).unwrap()] {
            for &x in &[1e-9, 3.7e-5, 0.0123, 0.049, 0.2, 0.4999, 0.6, 0.93] {
                let b = spec.value_branch(x);
                let y = spec.eval_on(x, b);
                let back = spec.invert_piece(y, b);
                assert!((back - x).abs() <= 4.0 * f64::EPSILON * x, "{:?} x = {x} back = {back}", spec.variant());
            }
        }
    }

    fn m1() -> MapSpec {
        MapSpec::m1(0.75, 3.0).unwrap()
    }

    #[test]
    fn m1_infimum_closed_form() {
        // 2^(0.75 - ln 2 / 3) ~ 1.433
        let expected = 2f64.powf(0.75 - LN_2 / 3.0);
        assert!((m1().inf_modulating() - expected).abs() < 1e-15);
        assert!((expected - 1.4331).abs() < 1e-3);
    }

    #[test]
    fn modulating_at_singular_points_is_c0() {
        let s = m1();
        for l in 1..=8 {
            let x = s.singular_point(l).unwrap();
            assert!((s.modulating(x).unwrap() - s.c0().unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn m2_modulating_at_one() {
        let s = MapSpec::m2(0.75, 1.0, 0.4, 3.0).unwrap();
        assert!((s.modulating(1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lsv_modulating_constant() {
        let s = MapSpec::lsv(0.75).unwrap();
        for x in [1e-9, 0.01, 0.3, 0.5, 0.9] {
            assert_eq!(s.modulating(x).unwrap(), 2f64.powf(0.75));
        }
    }

    #[test]
    fn fixed_point_and_linear_branch() {
        for s in [m1(), MapSpec::lsv(0.75).unwrap(), MapSpec::m2(0.75, 1.0, 0.4, 3.0).unwrap()] {
            assert_eq!(s.eval_map(0.0).unwrap(), 0.0);
            assert_eq!(s.eval_map(0.75).unwrap(), 0.5);
            assert_eq!(s.derivative(0.9).unwrap(), 2.0);
        }
    }

    #[test]
    fn full_left_branch() {
        assert!((MapSpec::lsv(0.75).unwrap().eval_map(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((m1().eval_map(0.5).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn jump_identity() {
        let s = m1();
        let c0 = s.c0().unwrap();
        for l in 1..=20u32 {
            let x = s.singular_point(l).unwrap();
            let expected = 0.5 * c0 * x.powf(1.75);
            let got = s.jump(l).unwrap();
            assert!(((got - expected) / expected).abs() < 1e-12, "level {l}: {got} vs {expected}");
            let above = s.eval_limit(x, Side::Above);
            assert_eq!(s.eval_map(x).unwrap(), above);
        }
    }

    #[test]
    fn guards_move_off_sticky_points() {
        let s = m1();
        let (y, hit) = s.guarded_step(0.5);
        assert!(hit && y < 1.0);
        let (y, hit) = s.guarded_step(1.0);
        assert!(hit && y < 1.0);
        let sl = s.singular_point(3).unwrap();
        let (y, hit) = s.guarded_step(sl);
        assert!(hit && y < s.eval_limit(sl, Side::Above));
        assert!(!s.guarded_step(0.3).1);
    }

    #[test]
    fn domain_errors() {
        let s = m1();
        assert!(s.eval_map(-0.1).is_err());
        assert!(s.eval_map(1.1).is_err());
        assert!(s.modulating(0.0).is_err());
        assert!(matches!(s.derivative(0.5), Err(Error::Singular(_))));
        let sl = s.singular_point(2).unwrap();
        assert!(matches!(s.derivative(sl), Err(Error::Singular(_))));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(MapSpec::m1(0.75, 0.5).is_err());
        assert!(MapSpec::m2(0.75, 1.0, 0.6, 3.0).is_err());
        assert!(MapSpec::lsv(1.2).is_err());
    }

    #[test]
    fn json_round_trip_recomputes_derived_constants() {
        let s = m1();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, r#"{"variant":"M1-step","alpha":0.75,"c1":3.0}"#);
        let back: MapSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<MapSpec>(r#"{"variant":"M1-step","alpha":0.75,"c1":0.1}"#).is_err());
        assert!(serde_json::from_str::<MapSpec>(r#"{"variant":"LSV","alpha":0.75,"zeta":1}"#).is_err());
    }

    #[test]
    fn singularities_in_window() {
        let s = m1();
        let pts = s.singularities_in(1e-5, 0.5, 0.0);
        assert_eq!(pts.len(), 3);
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
        assert!((pts[2] - (-3f64).exp()).abs() < 1e-17);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        for spec in [m1(), MapSpec::m2(0.75, 1.0, 0.4, 3.0).unwrap(), MapSpec::lsv(0.6).unwrap()] {
            for &x in &[0.01, 0.07, 0.2, 0.33, 0.49, 0.6, 0.9] {
                let b = spec.value_branch(x);
                let h = 1e-6 * x;
                let fd = (spec.eval_on(x + h, b) - spec.eval_on(x - h, b)) / (2.0 * h);
                let d = spec.deriv_on(x, b);
                assert!((fd / d - 1.0).abs() < 1e-6, "{:?} x {x}: {fd} vs {d}", spec.variant());
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn pieces_are_increasing(u in 1e-6f64..0.5, du in 1e-9f64..1e-3) {
            for spec in [m1(), MapSpec::m2(0.75, 1.0, 0.4, 3.0).unwrap()] {
                let b = spec.branch_at(u, Side::Above);
                let (lo, hi) = spec.piece_domain(b);
                let v = (u + du).min(hi);
                proptest::prop_assume!(u >= lo && v > u);
                proptest::prop_assert!(spec.eval_on(v, b) > spec.eval_on(u, b));
            }
        }

        #[test]
        fn modulation_is_log_periodic(ln_x in -40f64..-0.8) {
            for spec in [m1(), MapSpec::m2(0.75, 1.0, 0.4, 3.0).unwrap()] {
                let p = spec.log_period().unwrap();
                let a = spec.modulating_ln(ln_x);
                let b = spec.modulating_ln(ln_x - p);
                proptest::prop_assert!((a / b - 1.0).abs() < 1e-12, "{} vs {}", a, b);
            }
        }

        #[test]
        fn modulation_stays_between_its_bounds(x in 1e-12f64..1.0) {
            for spec in [m1(), MapSpec::m2(0.75, 1.0, 0.4, 3.0).unwrap(), MapSpec::lsv(0.75).unwrap()] {
                let m = spec.modulating(x).unwrap();
                proptest::prop_assert!(m >= spec.inf_modulating() * (1.0 - 1e-12));
                proptest::prop_assert!(m <= spec.sup_modulating() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn schwarzian_of_affine_branch_vanishes() {
        let rows = m1().schwarzian_report(&[0.6, 0.8, 0.5, m1().singular_point(1).unwrap()]);
        assert_eq!(rows[0].value, Some(0.0));
        assert_eq!(rows[1].sign, 0);
        assert!(rows[2].skipped && rows[3].skipped);
    }
}
