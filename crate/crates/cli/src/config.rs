//! Experiment configuration files: one JSON document per run, every field
//! optional with library defaults. The fully resolved config is echoed into
//! the run manifest so results are reproducible from the manifest alone.

use serde::{Deserialize, Serialize};
use ssm_core::params::{PolarizationConfig, Variant};
use ssm_core::tasks::{ARConfig, ModelConfig, TrainConfig};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub data: Option<ARConfig>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub analyze: Option<AnalyzeSection>,
    #[serde(default)]
    pub check: Option<CheckSection>,
    #[serde(default)]
    pub probe: Option<ProbeSection>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "d_vocab")]
    pub vocab: usize,
    #[serde(default = "d_dim")]
    pub dim: usize,
    #[serde(default = "d_state")]
    pub state_dim: usize,
    #[serde(default = "d_layers")]
    pub layers: usize,
    #[serde(default = "d_variant")]
    pub variant: Variant,
    #[serde(default)]
    pub polarization: PolarizationConfig,
    #[serde(default = "d_true")]
    pub conv: bool,
    #[serde(default)]
    pub seed: u64,
}

fn d_vocab() -> usize {
    64
}
fn d_dim() -> usize {
    64
}
fn d_state() -> usize {
    16
}
fn d_layers() -> usize {
    2
}
fn d_variant() -> Variant {
    Variant::Mamba
}
fn d_true() -> bool {
    true
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            vocab: d_vocab(),
            dim: d_dim(),
            state_dim: d_state(),
            layers: d_layers(),
            variant: d_variant(),
            polarization: PolarizationConfig::default(),
            conv: true,
            seed: 0,
        }
    }
}

impl ModelSection {
    pub fn to_model_config(&self, seed_override: Option<u64>) -> ModelConfig {
        ModelConfig {
            vocab: self.vocab,
            dim: self.dim,
            state_dim: self.state_dim,
            layers: self.layers,
            variant: self.variant,
            polarization: self.polarization,
            conv: self.conv,
            seed: seed_override.unwrap_or(self.seed),
        }
    }
}

/// Layer-level analysis inputs (influence, spectrum, gate-gap, smoothness).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeSection {
    #[serde(default = "d_variant")]
    pub variant: Variant,
    #[serde(default = "d_an_state")]
    pub state_dim: usize,
    #[serde(default = "d_an_channels")]
    pub channels: usize,
    #[serde(default = "d_an_t")]
    pub t_len: usize,
    #[serde(default)]
    pub polarization: PolarizationConfig,
    /// Inputs for gate-gap histograms.
    #[serde(default = "d_an_inputs")]
    pub num_inputs: usize,
    /// Layer count for the layerwise smoothness stack.
    #[serde(default = "d_an_layers")]
    pub layers: usize,
    /// ε targets for the spectrum cutoff report.
    #[serde(default = "d_eps")]
    pub epsilons: Vec<f64>,
}

fn d_an_state() -> usize {
    16
}
fn d_an_channels() -> usize {
    4
}
fn d_an_t() -> usize {
    256
}
fn d_an_inputs() -> usize {
    16
}
fn d_an_layers() -> usize {
    8
}
fn d_eps() -> Vec<f64> {
    vec![0.1, 0.01]
}

impl Default for AnalyzeSection {
    fn default() -> Self {
        AnalyzeSection {
            variant: d_variant(),
            state_dim: d_an_state(),
            channels: d_an_channels(),
            t_len: d_an_t(),
            polarization: PolarizationConfig::default(),
            num_inputs: d_an_inputs(),
            layers: d_an_layers(),
            epsilons: d_eps(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    #[serde(default = "d_par")]
    pub parallel_instances: usize,
    #[serde(default = "d_grad")]
    pub gradient_instances: usize,
    #[serde(default = "d_contr")]
    pub contraction_instances: usize,
    #[serde(default = "d_lp")]
    pub low_pass_instances: usize,
    #[serde(default = "d_selt")]
    pub selective_t: usize,
}

fn d_par() -> usize {
    1000
}
fn d_grad() -> usize {
    200
}
fn d_contr() -> usize {
    1000
}
fn d_lp() -> usize {
    100
}
fn d_selt() -> usize {
    256
}

impl Default for CheckSection {
    fn default() -> Self {
        CheckSection {
            parallel_instances: d_par(),
            gradient_instances: d_grad(),
            contraction_instances: d_contr(),
            low_pass_instances: d_lp(),
            selective_t: d_selt(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    /// Corrupted token count within the kv section.
    #[serde(default = "d_k")]
    pub k: usize,
    /// Eval split (kv pair count) to probe; defaults to the hardest.
    #[serde(default)]
    pub kv_pairs: Option<usize>,
}

fn d_k() -> usize {
    16
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection {
            k: d_k(),
            kv_pairs: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&std::path::Path>) -> anyhow::Result<RunConfig> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", p.display()))?;
                let cfg: RunConfig = serde_json::from_str(&text)
                    .map_err(|e| anyhow::anyhow!("config parse error in {}: {e}", p.display()))?;
                Ok(cfg)
            }
        }
    }

    /// Seed after CLI override.
    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(0)
    }
}
