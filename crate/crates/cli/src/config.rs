//! TOML run configuration: flat `key = value` entries grouped in sections.
//! Every field has a default; the manifest records the resolved values so
//! defaults are always visible in the output.

use anyhow::{bail, Context};
use masslab::problem::LinearProblem;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub dataset: Option<DatasetConfig>,
    pub run: Option<RunConfig>,
    pub compare: Option<CompareConfig>,
    pub regimes: Option<RegimesConfig>,
    pub phase: Option<PhaseConfig>,
    pub verify: Option<VerifyConfig>,
}

#[derive(Debug, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: String,
    #[serde(default = "d_sigma1")]
    pub sigma1: f64,
    #[serde(default = "d_sigma2")]
    pub sigma2: f64,
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default)]
    pub cov: Vec<f64>,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub has_header: bool,
    #[serde(default = "d_dataset_seed")]
    pub seed: u64,
}

fn d_sigma1() -> f64 {
    1.0
}
fn d_sigma2() -> f64 {
    // variance 2^-9
    2.0_f64.powf(-4.5)
}
fn d_n() -> usize {
    2000
}
fn d_dataset_seed() -> u64 {
    7
}

impl DatasetConfig {
    pub fn build(&self) -> anyhow::Result<LinearProblem> {
        match self.kind.as_str() {
            "decoupled" => Ok(masslab::problem::gen_component_decoupled(
                self.sigma1,
                self.sigma2,
                self.n,
                self.seed,
            )?),
            "gaussian" => {
                if self.cov.is_empty() {
                    bail!("[dataset] kind = \"gaussian\" requires a cov = [..] diagonal");
                }
                Ok(masslab::problem::gen_gaussian(
                    &self.cov, self.n, self.seed,
                )?)
            }
            "csv" => {
                let path = self
                    .path
                    .as_ref()
                    .context("[dataset] kind = \"csv\" requires path = \"...\"")?;
                Ok(masslab::problem::load_csv(path, self.has_header)?)
            }
            other => bail!("unknown dataset kind {other:?} (decoupled | gaussian | csv)"),
        }
    }

    /// Population spectral constants when the dataset is generated.
    pub fn population_profile(&self) -> Option<masslab::SpectralProfile> {
        match self.kind.as_str() {
            "decoupled" => Some(masslab::problem::decoupled_population_profile(
                self.sigma1,
                self.sigma2,
            )),
            "gaussian" if !self.cov.is_empty() => {
                Some(masslab::problem::gaussian_population_profile(&self.cov))
            }
            _ => None,
        }
    }

    pub fn describe(&self) -> Vec<(String, String)> {
        let mut kv = vec![("dataset.kind".to_string(), self.kind.clone())];
        match self.kind.as_str() {
            "decoupled" => {
                kv.push(("dataset.sigma1".into(), format!("{:.17e}", self.sigma1)));
                kv.push(("dataset.sigma2".into(), format!("{:.17e}", self.sigma2)));
                kv.push(("dataset.n".into(), self.n.to_string()));
                kv.push(("dataset.seed".into(), self.seed.to_string()));
            }
            "gaussian" => {
                kv.push((
                    "dataset.cov".into(),
                    self.cov
                        .iter()
                        .map(|v| format!("{v:.17e}"))
                        .collect::<Vec<_>>()
                        .join(" "),
                ));
                kv.push(("dataset.n".into(), self.n.to_string()));
                kv.push(("dataset.seed".into(), self.seed.to_string()));
            }
            _ => {
                if let Some(p) = &self.path {
                    kv.push(("dataset.path".into(), p.display().to_string()));
                }
                kv.push(("dataset.has_header".into(), self.has_header.to_string()));
            }
        }
        kv
    }
}

#[derive(Debug, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "d_method")]
    pub method: String,
    /// "optimal" (from the empirical profile) or "explicit".
    #[serde(default = "d_params")]
    pub params: String,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub eta2: Option<f64>,
    #[serde(default = "d_m")]
    pub m: u64,
    #[serde(default)]
    pub full_batch: bool,
    #[serde(default)]
    pub without_replacement: bool,
    #[serde(default = "d_max_iters")]
    pub max_iters: u64,
    #[serde(default = "d_eval_every")]
    pub eval_every: u64,
    #[serde(default)]
    pub target_loss: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn d_method() -> String {
    "mass".into()
}
fn d_params() -> String {
    "optimal".into()
}
fn d_m() -> u64 {
    1
}
fn d_max_iters() -> u64 {
    1_000_000
}
fn d_eval_every() -> u64 {
    100
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    #[serde(default = "d_m")]
    pub m: u64,
    #[serde(default = "d_target_abs")]
    pub target_loss: f64,
    #[serde(default = "d_max_iters")]
    pub max_iters: u64,
    #[serde(default = "d_repeats")]
    pub repeats: usize,
    #[serde(default = "d_eta_min")]
    pub eta_min: f64,
    #[serde(default = "d_eta_max")]
    pub eta_max: f64,
    #[serde(default = "d_eta_points")]
    pub eta_points: usize,
    #[serde(default = "d_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn d_target_abs() -> f64 {
    1e-6
}
fn d_repeats() -> usize {
    5
}
fn d_eta_min() -> f64 {
    1e-4
}
fn d_eta_max() -> f64 {
    1.0
}
fn d_eta_points() -> usize {
    25
}
fn d_gammas() -> Vec<f64> {
    vec![0.0, 0.5, 0.8, 0.9, 0.95, 0.99]
}

impl Default for CompareConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct RegimesConfig {
    #[serde(default = "d_m_list")]
    pub m_list: Vec<u64>,
    /// Target loss as a fraction of the initial loss.
    #[serde(default = "d_target_ratio")]
    pub target_loss_ratio: f64,
    #[serde(default = "d_repeats")]
    pub repeats: usize,
    #[serde(default = "d_max_iters")]
    pub max_iters: u64,
    #[serde(default)]
    pub seed: u64,
}

fn d_m_list() -> Vec<u64> {
    vec![1, 2, 4, 8, 16, 32, 64, 128]
}
fn d_target_ratio() -> f64 {
    1e-6
}

impl Default for RegimesConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    #[serde(default = "d_sigma1_sq")]
    pub sigma1_sq: f64,
    #[serde(default = "d_sigma2_sq")]
    pub sigma2_sq: f64,
    #[serde(default = "d_u_values")]
    pub u_values: Vec<f64>,
    #[serde(default = "d_phase_eta_min")]
    pub eta_min: f64,
    #[serde(default = "d_phase_eta_max")]
    pub eta_max: f64,
    #[serde(default = "d_phase_eta_points")]
    pub eta_points: usize,
}

fn d_sigma1_sq() -> f64 {
    1.0
}
fn d_sigma2_sq() -> f64 {
    2.0_f64.powi(-9)
}
fn d_u_values() -> Vec<f64> {
    (1..=19).map(|k| k as f64 * 0.05).collect()
}
fn d_phase_eta_min() -> f64 {
    1e-3
}
fn d_phase_eta_max() -> f64 {
    0.5
}
fn d_phase_eta_points() -> usize {
    40
}

impl Default for PhaseConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "d_lyap_seeds")]
    pub lyapunov_seeds: usize,
    #[serde(default = "d_lyap_t_max")]
    pub lyapunov_t_max: u64,
    #[serde(default = "d_avr_samples")]
    pub avr_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn d_lyap_seeds() -> usize {
    200
}
fn d_lyap_t_max() -> u64 {
    200
}
fn d_avr_samples() -> usize {
    100_000
}

impl Default for VerifyConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

pub fn load_config(path: &Path) -> anyhow::Result<Config> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let config: Config =
        toml::from_str(&text).with_context(|| format!("cannot parse config {}", path.display()))?;
    Ok(config)
}

/// The dataset section is mandatory for dataset-driven commands; an empty
/// config is a usage error.
pub fn require_dataset(config: &Config) -> anyhow::Result<&DatasetConfig> {
    config.dataset.as_ref().context(
        "config is missing the [dataset] section; minimal example:\n\
         [dataset]\nkind = \"decoupled\"   # or gaussian | csv",
    )
}
