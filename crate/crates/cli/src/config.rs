//! Per-command configuration documents. Unknown top-level keys are rejected.

use cocyrot::path::CocyclePath;
use cocyrot::{BasePoint, InvariantMeasure, MatrixCocycle, RotationOptions};
use serde::de::DeserializeOwned;
use serde::Deserialize;

/// A failed parse, with the JSON path of the offending field.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| ConfigError { field: e.path().to_string(), message: e.inner().to_string() })
}

/// Bundle of the finest dominated splitting, by position (1 = weakest).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleSelect {
    pub index: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

/// Rotation-number options; omitted keys take the library defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsDoc {
    pub n_list: Option<Vec<usize>>,
    pub grid: Option<usize>,
    pub refine: Option<usize>,
    pub bundle_n: Option<usize>,
    pub nbhd_radius: Option<f64>,
}

impl OptionsDoc {
    pub fn resolve(&self) -> RotationOptions {
        let d = RotationOptions::default();
        RotationOptions {
            n_list: self.n_list.clone().unwrap_or(d.n_list),
            grid: self.grid.unwrap_or(d.grid),
            refine: self.refine.unwrap_or(d.refine),
            bundle_n: self.bundle_n.unwrap_or(d.bundle_n),
            nbhd_radius: self.nbhd_radius.or(d.nbhd_radius),
        }
    }
}

fn default_n_max() -> usize {
    64
}

fn default_margin() -> f64 {
    0.02
}

fn default_knots() -> usize {
    cocyrot::stability::DEFAULT_KNOT_COUNT
}

fn default_eps_split() -> f64 {
    cocyrot::perturb::DEFAULT_EPS_SPLIT
}

fn default_noise() -> f64 {
    0.5
}

fn default_depth() -> usize {
    cocyrot::perturb::DEFAULT_SMOOTHING_DEPTH
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rotnum {
    pub path: CocyclePath,
    pub measure: InvariantMeasure,
    pub bundle: Option<BundleSelect>,
    #[serde(default)]
    pub options: OptionsDoc,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Relrot {
    pub a: MatrixCocycle,
    pub b: MatrixCocycle,
    pub measure: InvariantMeasure,
    pub bundle: Option<BundleSelect>,
    #[serde(default)]
    pub options: OptionsDoc,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dominate {
    pub cocycle: MatrixCocycle,
    pub samples: Option<Vec<BasePoint>>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_margin")]
    pub margin: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Modelock {
    pub cocycle: MatrixCocycle,
    pub measure: InvariantMeasure,
    pub bundle: Option<BundleSelect>,
    pub epsilon: f64,
    pub n_max: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Elliptic {
    pub cocycle: MatrixCocycle,
    pub bundle: Option<BundleSelect>,
    pub samples: Option<Vec<BasePoint>>,
    pub t_range: [f64; 2],
    pub steps: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointElliptic {
    pub cocycle: MatrixCocycle,
    /// positions in the finest splitting (1 = weakest), one per rotated plane
    pub bundles: Vec<usize>,
    #[serde(default = "default_n_max")]
    pub bundle_n_max: usize,
    pub eta: f64,
    pub eps_bundle: f64,
    #[serde(default = "default_depth")]
    pub depth: usize,
    pub per_axis: usize,
    pub measure: InvariantMeasure,
    pub samples: Option<Vec<BasePoint>>,
    #[serde(default)]
    pub options: OptionsDoc,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimpleSpectrum {
    pub cocycle: MatrixCocycle,
    pub p_max: usize,
    pub excursion_budget: usize,
    pub perturbation_budget: f64,
    #[serde(default = "default_eps_split")]
    pub eps_split: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conjugate {
    pub a: MatrixCocycle,
    pub b: MatrixCocycle,
    pub samples: Option<Vec<BasePoint>>,
    #[serde(default = "default_knots")]
    pub knot_count: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AkCheck {
    pub path: CocyclePath,
    pub measure: InvariantMeasure,
    pub n: usize,
    #[serde(default)]
    pub options: OptionsDoc,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvRedistribute {
    /// A_1, …, A_p as row-major nested arrays
    pub matrices: Vec<Vec<Vec<f64>>>,
    /// ascending; drawn from the seed when absent
    pub targets: Option<Vec<f64>>,
    /// half-width of the zero-sum log noise used for drawn targets
    #[serde(default = "default_noise")]
    pub noise: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Equalize {
    pub matrices: Vec<Vec<Vec<f64>>>,
    pub seed: Option<u64>,
}
