//! Scenario files: what to build, which suites to run, and with which
//! tolerances.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qvl_core::grid::DomainSpec;
use qvl_core::minimize::{Ball, SolveOptions};
use qvl_core::samples::Family;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteId {
    MetricProps,
    Retraction,
    Separation,
    RadialComparison,
    Interpolation,
    AlmostMin,
    Stationarity,
    Frequency,
    Vmo,
    LogDecay,
}

impl SuiteId {
    pub fn name(self) -> &'static str {
        match self {
            SuiteId::MetricProps => "metric-props",
            SuiteId::Retraction => "retraction",
            SuiteId::Separation => "separation",
            SuiteId::RadialComparison => "radial-comparison",
            SuiteId::Interpolation => "interpolation",
            SuiteId::AlmostMin => "almost-min",
            SuiteId::Stationarity => "stationarity",
            SuiteId::Frequency => "frequency",
            SuiteId::Vmo => "vmo",
            SuiteId::LogDecay => "log-decay",
        }
    }

    pub fn randomized(self) -> bool {
        matches!(self, SuiteId::MetricProps | SuiteId::Retraction | SuiteId::Separation | SuiteId::Interpolation)
    }

    /// Suites that only exercise the value space and ignore the field.
    pub fn needs_field(self) -> bool {
        !matches!(self, SuiteId::MetricProps | SuiteId::Retraction | SuiteId::Separation | SuiteId::Interpolation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    /// Closed-form sample on the scenario domain.
    Family(Family),
    /// Dirichlet minimizer with the family as boundary data.
    Solve {
        boundary: Family,
        #[serde(default)]
        options: SolveOptions,
    },
    /// Radial extension of the family's trace on the outer sphere.
    RadialExtension {
        trace: Family,
        alpha: f64,
        #[serde(default = "default_trace_resolution")]
        resolution: usize,
    },
    /// A field file written by `qvl generate`.
    File(String),
}

fn default_trace_resolution() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub metric_rel: f64,
    pub triangle_rel: f64,
    pub lipschitz: f64,
    pub separation: f64,
    /// Monotonicity margins and residuals are allowed `h_factor * h`.
    pub h_factor: f64,
    /// Relative tolerance on an expected frequency.
    pub frequency_rel: f64,
    /// Allowed half-width of the interpolation constants about their midrange.
    pub interpolation_spread: f64,
    /// Relative agreement with the one-dimensional transit closed form.
    pub transit_rel: f64,
    pub almost_min_slack: f64,
    pub vmo_rel: f64,
    /// Required ratio of the smallest to the largest dyadic modulus.
    pub modulus_vanish: f64,
    /// Perturbed residuals must exceed the baseline by this factor.
    pub perturbation_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            metric_rel: 1e-12,
            triangle_rel: 1e-9,
            lipschitz: 1e-12,
            separation: 1e-12,
            h_factor: 5.0,
            frequency_rel: 0.1,
            interpolation_spread: 0.2,
            transit_rel: 0.02,
            almost_min_slack: 1e-6,
            vmo_rel: 1e-6,
            modulus_vanish: 1e-3,
            perturbation_factor: 10.0,
        }
    }
}

impl Tolerances {
    /// Loosens (or tightens) every tolerance by `s`. Factors that are lower
    /// bounds are divided instead.
    pub fn scaled(&self, s: f64) -> Tolerances {
        Tolerances {
            metric_rel: self.metric_rel * s,
            triangle_rel: self.triangle_rel * s,
            lipschitz: self.lipschitz * s,
            separation: self.separation * s,
            h_factor: self.h_factor * s,
            frequency_rel: self.frequency_rel * s,
            interpolation_spread: self.interpolation_spread * s,
            transit_rel: self.transit_rel * s,
            almost_min_slack: self.almost_min_slack * s,
            vmo_rel: self.vmo_rel * s,
            modulus_vanish: self.modulus_vanish * s,
            perturbation_factor: self.perturbation_factor / s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleParams {
    pub samples: usize,
    pub max_q: usize,
    pub max_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparationParams {
    pub samples: usize,
    pub max_q: usize,
    pub max_n: usize,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadialParams {
    pub balls: Vec<Ball>,
    pub p: f64,
    pub big_m: f64,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpolationParams {
    pub datasets: usize,
    pub h: f64,
    pub eps: f64,
    pub p: f64,
    pub ntheta: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlmostMinParams {
    pub balls: Vec<Ball>,
    pub alpha0: f64,
    /// `omega(r) = c r^gamma`
    pub modular_c: f64,
    pub modular_gamma: f64,
    pub options: SolveOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationarityParams {
    pub center: Option<Vec<f64>>,
    pub inner: f64,
    pub outer: f64,
    pub identity_radii: Vec<f64>,
    pub perturbation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrequencyParams {
    /// Explicit radii; otherwise every ring or shell radius in `[r_min, r_max]`.
    pub radii: Option<Vec<f64>>,
    pub r_min: f64,
    pub r_max: f64,
    pub r0: Option<f64>,
    pub expected_n: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VmoParams {
    pub centers: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    /// Polar resolution of the per-ball grids used for closed-form fields.
    pub local_nr: usize,
    pub local_ntheta: usize,
    pub j_max: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteParams {
    pub metric_props: SampleParams,
    pub retraction: SampleParams,
    pub separation: SeparationParams,
    pub radial_comparison: RadialParams,
    pub interpolation: InterpolationParams,
    pub almost_min: AlmostMinParams,
    pub stationarity: StationarityParams,
    pub frequency: FrequencyParams,
    pub vmo: VmoParams,
}

impl Default for SampleParams {
    fn default() -> Self {
        SampleParams { samples: 1000, max_q: 6, max_n: 4 }
    }
}

impl Default for SeparationParams {
    fn default() -> Self {
        SeparationParams { samples: 200, max_q: 5, max_n: 3, eps: vec![1.0 / 16.0, 1.0 / 9.0] }
    }
}

impl Default for RadialParams {
    fn default() -> Self {
        RadialParams { balls: Vec::new(), p: 2.0, big_m: 0.0, c: None }
    }
}

impl Default for InterpolationParams {
    fn default() -> Self {
        InterpolationParams { datasets: 20, h: 1.0 / 64.0, eps: 0.125, p: 2.0, ntheta: 256 }
    }
}

impl Default for AlmostMinParams {
    fn default() -> Self {
        AlmostMinParams { balls: Vec::new(), alpha0: 1.0, modular_c: 0.0, modular_gamma: 1.0, options: SolveOptions::default() }
    }
}

impl Default for StationarityParams {
    fn default() -> Self {
        StationarityParams { center: None, inner: 0.2, outer: 0.8, identity_radii: vec![0.25, 0.5, 0.75], perturbation: 0.1 }
    }
}

impl Default for FrequencyParams {
    fn default() -> Self {
        FrequencyParams { radii: None, r_min: 0.25, r_max: 0.75, r0: None, expected_n: None }
    }
}

impl Default for VmoParams {
    fn default() -> Self {
        VmoParams {
            centers: vec![vec![0.0, 0.0], vec![0.25, 0.0], vec![0.0, 0.3], vec![-0.2, -0.2]],
            radii: (1..=10).map(|k| 0.05 * k as f64).collect(),
            local_nr: 64,
            local_ntheta: 128,
            j_max: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub generator: Generator,
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    pub suites: Vec<SuiteId>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub params: SuiteParams,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| format!("malformed scenario: {e}"))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Scenario::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.suites.is_empty() {
            return Err("scenario lists no suites".into());
        }
        if self.suites.iter().any(|s| s.randomized()) && self.seed.is_none() {
            return Err("randomized suites need a seed".into());
        }
        let needs_field = self.suites.iter().any(|s| s.needs_field());
        if needs_field && !matches!(self.generator, Generator::File(_)) && self.domain.is_none() {
            return Err("scenario needs a domain unless the field comes from a file".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization, after command-line overrides.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenarios serialize");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "disc",
        "generator": {"family": {"family": "harmonic", "k": 1}},
        "domain": {"kind": "polar", "inner": 0.0, "outer": 1.0, "nr": 32, "ntheta": 64},
        "suites": ["frequency"]
    }"#;

    #[test]
    fn parses_and_hashes() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        assert_eq!(s.suites, vec![SuiteId::Frequency]);
        assert_eq!(s.hash(), Scenario::from_json(MINIMAL).unwrap().hash());
        let mut t = s.clone();
        t.seed = Some(1);
        assert_ne!(s.hash(), t.hash());
    }

    #[test]
    fn rejects_bad_scenarios() {
        let empty = MINIMAL.replace(r#"["frequency"]"#, "[]");
        assert!(Scenario::from_json(&empty).unwrap_err().contains("no suites"));
        let unknown = MINIMAL.replace(r#"["frequency"]"#, r#"["nope"]"#);
        assert!(Scenario::from_json(&unknown).is_err());
        let unseeded = MINIMAL.replace(r#"["frequency"]"#, r#"["metric-props"]"#);
        assert!(Scenario::from_json(&unseeded).unwrap_err().contains("seed"));
    }
}
