//! Small numerical kernels shared by the map, orbit and quadrature code.

/// Solves `g(x) = target` for an increasing `g` on `[lo, hi]`.
///
/// Newton steps are taken from the best bracket point and rejected in favour of
/// bisection whenever they leave the bracket. Iteration stops once the bracket
/// is down to a couple of ulps or the Newton correction is below `rel_tol * x`.
/// Returns `None` when `target` is not bracketed by `g(lo)`, `g(hi)`.
pub fn solve_increasing<G, D>(
    g: G,
    dg: D,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    rel_tol: f64,
) -> Option<f64>
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let glo = g(lo) - target;
    let ghi = g(hi) - target;
    if glo > 0.0 || ghi < 0.0 {
        return None;
    }
    if glo == 0.0 {
        return Some(lo);
    }
    if ghi == 0.0 {
        return Some(hi);
    }
    let mut x = if ghi - glo > 0.0 {
        lo + (hi - lo) * (-glo / (ghi - glo))
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..200 {
        let gx = g(x) - target;
        if gx == 0.0 {
            return Some(x);
        }
        if gx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = dg(x);
        let newton = x - gx / d;
        let next = if d.is_finite() && d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let converged = (next - x).abs() <= rel_tol * x.abs() || hi - lo <= 2.0 * f64::EPSILON * hi.abs();
        x = next;
        if converged {
            return Some(x);
        }
    }
    Some(x)
}

/// Bisection on a monotone predicate: smallest `x` in `[lo, hi]` (to `tol`)
/// with `pred(x) == true`, assuming `pred(hi)` holds.
pub fn bisect_predicate<P: Fn(f64) -> bool>(pred: P, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Ordinary least squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Least-squares coefficients for the columns of `design` (modified Gram-Schmidt).
/// `None` when the columns are numerically dependent.
pub fn least_squares(design: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let p = design.len();
    let mut q: Vec<Vec<f64>> = design.to_vec();
    let mut r = vec![vec![0.0; p]; p];
    for j in 0..p {
        if q[j].len() != y.len() {
            return None;
        }
        for i in 0..j {
            let d: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
            r[i][j] = d;
            let qi = q[i].clone();
            q[j].iter_mut().zip(&qi).for_each(|(b, a)| *b -= d * a);
        }
        let norm = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = design[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-12 * scale) {
            return None;
        }
        r[j][j] = norm;
        q[j].iter_mut().for_each(|v| *v /= norm);
    }
    let qty: Vec<f64> = q.iter().map(|c| c.iter().zip(y).map(|(a, b)| a * b).sum()).collect();
    let mut coef = vec![0.0; p];
    for j in (0..p).rev() {
        let acc: f64 = (j + 1..p).map(|k| r[j][k] * coef[k]).sum();
        coef[j] = (qty[j] - acc) / r[j][j];
    }
    Some(coef)
}

/// Slope of `log y` against `log x`, skipping non-positive values.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .unzip();
    if lx.len() < 2 {
        return None;
    }
    Some(linear_fit(&lx, &ly).0)
}

/// Integer grid of roughly `per_decade` log-spaced points in `[lo, hi]`, deduplicated.
pub fn log_grid(lo: u64, hi: u64, per_decade: usize) -> Vec<u64> {
    assert!(lo >= 1 && hi >= lo);
    let decades = (hi as f64 / lo as f64).log10();
    let count = ((decades * per_decade as f64).ceil() as usize).max(1);
    let mut out: Vec<u64> = (0..=count)
        .map(|i| {
            let t = i as f64 / count as f64;
            (lo as f64 * (hi as f64 / lo as f64).powf(t)).round() as u64
        })
        .map(|v| v.clamp(lo, hi))
        .collect();
    out.dedup();
    out
}

/// Composite 5-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre5<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_08,
        0.236_926_885_056_189_08,
    ];
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    NODES
        .iter()
        .zip(WEIGHTS.iter())
        .map(|(t, w)| w * f(mid + half * t))
        .sum::<f64>()
        * half
}

/// Adaptive Gauss–Legendre quadrature with absolute/relative tolerance.
/// Returns `None` if the recursion depth is exhausted before convergence.
pub fn adaptive_quad<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Option<f64> {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> Option<f64> {
        let m = 0.5 * (a + b);
        let left = gauss_legendre5(f, a, m);
        let right = gauss_legendre5(f, m, b);
        let both = left + right;
        if (both - whole).abs() <= tol.max(1e-15 * both.abs()) {
            return Some(both);
        }
        if depth == 0 {
            return None;
        }
        Some(rec(f, a, m, left, 0.5 * tol, depth - 1)? + rec(f, m, b, right, 0.5 * tol, depth - 1)?)
    }
    if a == b {
        return Some(0.0);
    }
    let whole = gauss_legendre5(f, a, b);
    rec(f, a, b, whole, tol, 40)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_recovers_exact_fit() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let design = vec![vec![1.0; 20], x.clone(), x.iter().map(|v| v.sin()).collect()];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v + 3.0 * v.sin()).collect();
        let c = least_squares(&design, &y).unwrap();
        for (a, b) in c.iter().zip([2.0, -0.5, 3.0]) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(least_squares(&[x.clone(), x.clone()], &y).is_none());
    }

    #[test]
    fn solves_cubic() {
        let x = solve_increasing(|x| x * x * x, |x| 3.0 * x * x, 8.0, 0.0, 5.0, 1e-15).unwrap();
        assert!((x - 2.0).abs() < 1e-14);
        assert!(solve_increasing(|x| x, |_| 1.0, 10.0, 0.0, 5.0, 1e-15).is_none());
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let v = adaptive_quad(&|x: f64| x.exp(), 0.0, 2.0, 1e-13).unwrap();
        assert!((v - (2f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn slope_of_power_law() {
        let x: Vec<f64> = (1..50).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(-1.25)).collect();
        assert!((log_log_slope(&x, &y).unwrap() + 1.25).abs() < 1e-12);
    }

    #[test]
    fn log_grid_is_sorted_and_bounded() {
        let g = log_grid(100, 10_000, 10);
        assert_eq!(g[0], 100);
        assert_eq!(*g.last().unwrap(), 10_000);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
