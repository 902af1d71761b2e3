//! Experiment configuration: presets, JSON files and environment overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::inducing::InducingConfig;
use crate::maps::MapSpec;
use crate::montecarlo::{CorrelationConfig, InitialLaw, Observable, RenewalMeanConfig};
use crate::semistable::MergeThresholds;

/// Prefix of environment variables that override scalar keys, e.g.
/// `WOBBLY_BIRKHOFF__SAMPLES=500` or `WOBBLY_MAP__ALPHA=0.6`.
pub const ENV_PREFIX: &str = "WOBBLY_";

pub const PRESETS: [&str; 6] = [
    "m1-semistable",
    "m2-semistable",
    "lsv-stable",
    "clt-small-alpha",
    "clt-zero-at-fixed-point",
    "holland-eval",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub map: MapSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Worker threads; `0` lets the pool decide.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub orbit: OrbitBlock,
    #[serde(default)]
    pub mbar: MbarBlock,
    #[serde(default)]
    pub tails: TailsBlock,
    #[serde(default)]
    pub induce: InducingConfig,
    #[serde(default)]
    pub birkhoff: BirkhoffBlock,
    #[serde(default)]
    pub oracle: OracleBlock,
    #[serde(default)]
    pub merge: MergeBlock,
    #[serde(default)]
    pub clt: CltBlock,
    #[serde(default)]
    pub correlate: CorrelateBlock,
}

fn default_seed() -> u64 {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitBlock {
    /// Index of the last backward-orbit point.
    pub n: usize,
}

impl Default for OrbitBlock {
    fn default() -> Self {
        OrbitBlock { n: 1_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MbarBlock {
    pub x_min: f64,
    pub x_max: f64,
    pub per_decade: usize,
    /// Orbit length used to compare against `M0`.
    pub orbit_n: usize,
}

impl Default for MbarBlock {
    fn default() -> Self {
        MbarBlock {
            x_min: 100.0,
            x_max: 1e5,
            per_decade: 20,
            orbit_n: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailsBlock {
    /// Orbit length, which is also the horizon of the return-time tail.
    pub n: usize,
    /// Ratios `R_lambda(n)`; an empty list means `c` and `sqrt(c)`.
    pub lambda_list: Vec<f64>,
    /// Grid points per block of the log-periodic profile.
    pub n_delta: usize,
}

impl Default for TailsBlock {
    fn default() -> Self {
        TailsBlock {
            n: 1_000_000,
            lambda_list: Vec::new(),
            n_delta: 32,
        }
    }
}

/// Sample sizes: either explicit or `k_n = floor(c^n)` for `n` in a range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NList {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_range: Option<[u32; 2]>,
}

impl NList {
    pub fn resolve(&self, spec: &MapSpec) -> Result<Vec<u64>> {
        let list = match (&self.n_list, self.k_range) {
            (Some(l), None) => l.clone(),
            (None, Some([lo, hi])) => {
                let c = spec
                    .subsequence_ratio()
                    .ok_or_else(|| Error::Config("k_range needs a map with a subsequence ratio".into()))?;
                (lo..=hi).map(|n| c.powi(n as i32).floor() as u64).collect()
            }
            _ => return Err(Error::Config("give exactly one of n_list and k_range".into())),
        };
        if list.is_empty() || list[0] == 0 || list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("sample sizes {list:?} must be positive and increasing")));
        }
        Ok(list)
    }
}

impl Default for NList {
    fn default() -> Self {
        NList {
            n_list: None,
            k_range: Some([2, 5]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenteringMethod {
    /// Excursion-decomposed mean with the long excursions integrated exactly.
    Renewal,
    /// Plain long-orbit Birkhoff average.
    Invariant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Centering {
    Method(CenteringMethod),
    Value(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BirkhoffBlock {
    pub observable: Observable,
    #[serde(flatten)]
    pub sizes: NList,
    pub samples: usize,
    pub burn_in: u64,
    pub initial: InitialLaw,
    pub centering: Centering,
    pub renewal: RenewalMeanConfig,
    /// Backward-orbit length behind the renewal centering.
    pub orbit_n: usize,
    /// Norming exponent; defaults to `alpha` in the heavy-tailed regime and `1/2` otherwise.
    pub exponent: Option<f64>,
}

impl Default for BirkhoffBlock {
    fn default() -> Self {
        BirkhoffBlock {
            observable: Observable::one_plus_x(),
            sizes: NList::default(),
            samples: 20_000,
            burn_in: 1000,
            initial: InitialLaw::Uniform,
            centering: Centering::Method(CenteringMethod::Renewal),
            renewal: RenewalMeanConfig::default(),
            orbit_n: 1_000_000,
            exponent: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleSource {
    /// `X` distributed as the first return time on `Y` (Lebesgue start).
    Tau,
    /// Per-step excursion lengths with the renewal weight, scaled by `v(0) - mu(v)`;
    /// directly comparable with `birkhoff` output.
    Renewal,
    StPetersburg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleBlock {
    pub source: OracleSource,
    #[serde(flatten)]
    pub sizes: NList,
    pub samples: usize,
    /// Orbit length for the return-time table.
    pub table_n: usize,
    /// Norming exponent; defaults to `1/beta`.
    pub exponent: Option<f64>,
}

impl Default for OracleBlock {
    fn default() -> Self {
        OracleBlock {
            source: OracleSource::Renewal,
            sizes: NList::default(),
            samples: 20_000,
            table_n: 1_000_000,
            exponent: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeBlock {
    /// Defaults to `birkhoff.csv` in the output directory.
    pub dynamical: Option<PathBuf>,
    /// Defaults to `oracle.csv` in the output directory.
    pub oracle: Option<PathBuf>,
    pub merge_max: f64,
    pub consecutive_max: f64,
}

impl Default for MergeBlock {
    fn default() -> Self {
        let t = MergeThresholds::default();
        MergeBlock {
            dynamical: None,
            oracle: None,
            merge_max: t.merge_max,
            consecutive_max: t.consecutive_max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CltBlock {
    pub observable: Observable,
    pub n: u64,
    pub samples: usize,
    pub burn_in: u64,
    pub centering: Centering,
    /// Largest KS distance from the fitted normal that counts as Gaussian.
    pub ks_max: f64,
}

impl Default for CltBlock {
    fn default() -> Self {
        CltBlock {
            observable: Observable::one_plus_x(),
            n: 10_000,
            samples: 10_000,
            burn_in: 1000,
            centering: Centering::Method(CenteringMethod::Renewal),
            ks_max: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelateBlock {
    pub v: Observable,
    pub w: Observable,
    pub n_list: Vec<u64>,
    pub run: CorrelationConfig,
    pub table_n: usize,
}

impl Default for CorrelateBlock {
    fn default() -> Self {
        // supported in Y, where the leading term applies
        let v = Observable::one_plus_x().supported_from(0.5);
        CorrelateBlock {
            v,
            w: v,
            n_list: vec![1, 3, 10, 30, 100, 300, 1000, 3000, 10_000],
            run: CorrelationConfig::default(),
            table_n: 100_000,
        }
    }
}

impl ExperimentConfig {
    pub fn new(map: MapSpec) -> Self {
        ExperimentConfig {
            map,
            seed: default_seed(),
            out: default_out(),
            threads: 0,
            orbit: OrbitBlock::default(),
            mbar: MbarBlock::default(),
            tails: TailsBlock::default(),
            induce: InducingConfig::default(),
            birkhoff: BirkhoffBlock::default(),
            oracle: OracleBlock::default(),
            merge: MergeBlock::default(),
            clt: CltBlock::default(),
            correlate: CorrelateBlock::default(),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let cfg = match name {
            "m1-semistable" => {
                let map = MapSpec::m1(0.75, 3.0)?;
                match map.beta1() {
                    Some(b1) if b1 > 2.0 => {}
                    other => return Err(Error::Config(format!("m1-semistable needs beta1 > 2, got {other:?}"))),
                }
                ExperimentConfig::new(map)
            }
            "m2-semistable" => ExperimentConfig::new(MapSpec::m2(0.75, 1.0, 0.4, 3.0)?),
            "lsv-stable" => {
                let mut c = ExperimentConfig::new(MapSpec::lsv(0.75)?);
                c.birkhoff.sizes = NList {
                    n_list: Some(vec![100, 1000, 10_000, 100_000]),
                    k_range: None,
                };
                c.oracle.sizes = c.birkhoff.sizes.clone();
                c
            }
            "clt-small-alpha" => ExperimentConfig::new(MapSpec::m2(0.3, 1.0, 0.4, 3.0)?),
            "clt-zero-at-fixed-point" => {
                let mut c = ExperimentConfig::new(MapSpec::m2(0.75, 1.0, 0.4, 3.0)?);
                c.clt.observable = Observable::power(0.6);
                c.birkhoff.observable = Observable::power(0.6);
                c
            }
            "holland-eval" => {
                let mut c = ExperimentConfig::new(MapSpec::holland(0.75, 3.0)?);
                c.orbit.n = 10_000;
                c
            }
            _ => {
                return Err(Error::Config(format!(
                    "unknown preset '{name}'; expected one of {}",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    /// Preset (or nothing), then the file, then environment overrides.
    pub fn load(preset: Option<&str>, file: Option<&str>, env: &[(String, String)]) -> Result<Self> {
        let mut value = match preset {
            Some(p) => serde_json::to_value(Self::preset(p)?)?,
            None => Value::Object(Default::default()),
        };
        if let Some(text) = file {
            let overlay: Value = serde_json::from_str(text)?;
            if !overlay.is_object() {
                return Err(Error::Config("config file must hold a JSON object".into()));
            }
            merge_json(&mut value, overlay);
        }
        apply_env(&mut value, env)?;
        if value.get("map").is_none() {
            return Err(Error::Config("no map given: use --preset or a config with a \"map\" block".into()));
        }
        let cfg: ExperimentConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.orbit.n < 2 || self.tails.n < 10 {
            return Err(Error::Config("orbit and tail lengths are too short".into()));
        }
        if self.birkhoff.samples == 0 || self.oracle.samples == 0 || self.clt.samples == 0 {
            return Err(Error::Config("sample counts must be positive".into()));
        }
        if !(self.mbar.x_min > 0.0 && self.mbar.x_max > self.mbar.x_min) {
            return Err(Error::Config("mbar needs 0 < x_min < x_max".into()));
        }
        Ok(())
    }
}

/// Keys that are alternatives to each other; setting one drops the other.
const EXCLUSIVE: [(&str, &str); 1] = [("n_list", "k_range")];

/// Recursively overlays `top` onto `base`; objects merge key by key, anything else replaces.
pub fn merge_json(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (x, y) in EXCLUSIVE {
                if t.contains_key(x) && !t.contains_key(y) {
                    b.remove(y);
                } else if t.contains_key(y) && !t.contains_key(x) {
                    b.remove(x);
                }
            }
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Sets scalar keys from `WOBBLY_A__B=value` pairs; the value is read as JSON when it
/// parses, as a string otherwise.
pub fn apply_env(value: &mut Value, env: &[(String, String)]) -> Result<()> {
    for (key, raw) in env {
        let Some(path) = key.strip_prefix(ENV_PREFIX) else { continue };
        let parts: Vec<String> = path.split("__").map(str::to_lowercase).collect();
        if parts.iter().any(String::is_empty) {
            return Err(Error::Config(format!("malformed override {key}")));
        }
        let parsed = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.clone()));
        if parsed.is_object() || parsed.is_array() {
            return Err(Error::Config(format!("{key}: only scalar keys can be overridden")));
        }
        let mut slot = &mut *value;
        for p in &parts {
            if !slot.is_object() {
                return Err(Error::Config(format!("{key}: '{p}' is below a scalar")));
            }
            slot = slot.as_object_mut().unwrap().entry(p.clone()).or_insert(Value::Null);
        }
        if slot.is_object() || slot.is_array() {
            return Err(Error::Config(format!("{key}: only scalar keys can be overridden")));
        }
        *slot = parsed;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_loads_and_round_trips() {
        for name in PRESETS {
            let cfg = ExperimentConfig::preset(name).unwrap();
            let text = serde_json::to_string(&cfg).unwrap();
            let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
            assert_eq!(cfg, back, "{name}");
        }
        assert_eq!(ExperimentConfig::preset("m2-semistable").unwrap().map.alpha(), 0.75);
        assert!(ExperimentConfig::preset("nope").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let file = r#"{"birkhoff": {"samplez": 3}}"#;
        assert!(ExperimentConfig::load(Some("m2-semistable"), Some(file), &[]).is_err());
        let file = r#"{"colour": 3}"#;
        assert!(ExperimentConfig::load(Some("m2-semistable"), Some(file), &[]).is_err());
    }

    #[test]
    fn file_and_env_override_the_preset() {
        let file = r#"{"birkhoff": {"samples": 77}, "map": {"variant": "M2-sine", "alpha": 0.6, "a": 1.0, "b": 0.4, "c2": 3.0}}"#;
        let env = vec![
            ("WOBBLY_SEED".to_string(), "9".to_string()),
            ("WOBBLY_CLT__N".to_string(), "123".to_string()),
            ("OTHER".to_string(), "1".to_string()),
        ];
        let cfg = ExperimentConfig::load(Some("m1-semistable"), Some(file), &env).unwrap();
        assert_eq!(cfg.birkhoff.samples, 77);
        assert_eq!(cfg.map.alpha(), 0.6);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.clt.n, 123);
        let bad = vec![("WOBBLY_BIRKHOFF".to_string(), "1".to_string())];
        assert!(ExperimentConfig::load(Some("m1-semistable"), None, &bad).is_err());
    }

    #[test]
    fn k_range_uses_the_subsequence_ratio() {
        let cfg = ExperimentConfig::preset("m2-semistable").unwrap();
        let ks = cfg.birkhoff.sizes.resolve(&cfg.map).unwrap();
        assert_eq!(ks, vec![90, 854, 8103, 76879]);
    }

    #[test]
    fn an_explicit_list_replaces_the_preset_range() {
        let file = r#"{"birkhoff": {"n_list": [5, 50]}}"#;
        let cfg = ExperimentConfig::load(Some("m2-semistable"), Some(file), &[]).unwrap();
        assert_eq!(cfg.birkhoff.sizes.resolve(&cfg.map).unwrap(), vec![5, 50]);
        let both = r#"{"birkhoff": {"n_list": [5], "k_range": [2, 3]}}"#;
        let cfg = ExperimentConfig::load(Some("m2-semistable"), Some(both), &[]).unwrap();
        assert!(cfg.birkhoff.sizes.resolve(&cfg.map).is_err());
    }
}
