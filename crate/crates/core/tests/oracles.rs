use wobbly::asymptotics::{backward_orbit, tau_tail};
use wobbly::montecarlo::first_return_times;
use wobbly::semistable::{Extrapolation, TableSampler};
use wobbly::MapSpec;

/// Simulated first returns from uniform points of `Y` follow the exact tail.
#[test]
fn simulated_returns_match_the_exact_tail() {
    let samples = 40_000;
    for spec in [MapSpec::m1(0.75, 3.0).unwrap(), MapSpec::m2(0.75, 1.0, 0.4, 3.0).unwrap(), MapSpec::lsv(0.6).unwrap()] {
        let tail = tau_tail(&backward_orbit(&spec, 2000).unwrap());
        let taus = first_return_times(&spec, samples, 9, 100_000);
        for n in [1usize, 2, 3, 5, 10, 30, 100, 300, 1000] {
            let p = tail.at(n).unwrap();
            let empirical = taus.iter().filter(|&&t| t as usize > n).count() as f64 / samples as f64;
            let se = (p * (1.0 - p) / samples as f64).sqrt();
            assert!((empirical - p).abs() <= 3.0 * se + 1e-12, "{:?} n {n}: {empirical} vs {p}", spec.variant());
        }
    }
}

/// Inverse-CDF draws from the table reproduce its survival function.
#[test]
fn table_sampler_reproduces_the_tail() {
    let spec = MapSpec::m2(0.75, 1.0, 0.4, 3.0).unwrap();
    let c = spec.subsequence_ratio().unwrap();
    let tail = tau_tail(&backward_orbit(&spec, 5000).unwrap());
    let ts = TableSampler::new(&tail, Extrapolation::LogPeriodic { ratio: c, beta: spec.beta() }).unwrap();
    let m = 20_000;
    let draws: Vec<u64> = (0..m).map(|i| ts.invert((i as f64 + 0.5) / m as f64).0).collect();
    for n in [1usize, 4, 20, 100, 1000, 4000] {
        let p = tail.at(n).unwrap();
        let empirical = draws.iter().filter(|&&x| x as usize > n).count() as f64 / m as f64;
        assert!((empirical - p).abs() <= 1.0 / m as f64 + 1e-12, "n {n}: {empirical} vs {p}");
    }
}
