//! Self-describing policy files: the alpha-vectors plus enough model
//! metadata to catch mismatched evaluations.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use aafib::model::{AlphaMatrix, PomdpModel};

pub const POLICY_FORMAT: &str = "aafib-policy-v1";

#[derive(Debug, Serialize, Deserialize)]
pub struct PolicyFile {
    pub format: String,
    pub solver: String,
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
    pub residual_inf: f64,
    pub model: ModelInfo,
    /// Flat alpha array, action-major.
    pub alpha: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelInfo {
    pub hash: String,
    pub num_states: usize,
    pub num_actions: usize,
    pub num_observations: usize,
    pub discount: f64,
}

/// SHA-256 over a canonical byte encoding of the model arrays.
pub fn model_hash(model: &PomdpModel) -> String {
    let mut hasher = Sha256::new();
    for dim in [
        model.num_states(),
        model.num_actions(),
        model.num_observations(),
    ] {
        hasher.update((dim as u64).to_le_bytes());
    }
    hasher.update(model.discount().to_le_bytes());
    for a in 0..model.num_actions() {
        for s in 0..model.num_states() {
            for v in model.transition_row(a, s) {
                hasher.update(v.to_le_bytes());
            }
            for v in model.observation_row(a, s) {
                hasher.update(v.to_le_bytes());
            }
        }
    }
    for s in 0..model.num_states() {
        for a in 0..model.num_actions() {
            hasher.update(model.reward(s, a).to_le_bytes());
        }
    }
    match model.start_belief() {
        Some(b) => {
            hasher.update(1u8.to_le_bytes());
            for v in b {
                hasher.update(v.to_le_bytes());
            }
        }
        None => hasher.update(0u8.to_le_bytes()),
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn model_info(model: &PomdpModel) -> ModelInfo {
    ModelInfo {
        hash: model_hash(model),
        num_states: model.num_states(),
        num_actions: model.num_actions(),
        num_observations: model.num_observations(),
        discount: model.discount(),
    }
}

pub fn write_policy(path: &Path, policy: &PolicyFile) -> Result<()> {
    let json = serde_json::to_string_pretty(policy)?;
    std::fs::write(path, json)
        .with_context(|| format!("cannot write policy file {}", path.display()))?;
    Ok(())
}

/// Loads a policy and checks it against the model: wrong shapes are an
/// error, a differing model hash only a warning (deliberate cross-model
/// evaluation stays possible).
pub fn load_policy(path: &Path, model: &PomdpModel) -> Result<(PolicyFile, AlphaMatrix)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read policy file {}", path.display()))?;
    let policy: PolicyFile = serde_json::from_str(&text)
        .with_context(|| format!("invalid policy file {}", path.display()))?;
    if policy.format != POLICY_FORMAT {
        bail!(
            "policy file {} has format `{}`, expected `{POLICY_FORMAT}`",
            path.display(),
            policy.format
        );
    }
    if policy.model.num_states != model.num_states()
        || policy.model.num_actions != model.num_actions()
    {
        bail!(
            "policy shape mismatch: file is for {} states x {} actions, model has {} x {}",
            policy.model.num_states,
            policy.model.num_actions,
            model.num_states(),
            model.num_actions()
        );
    }
    if policy.alpha.len() != model.num_states() * model.num_actions() {
        bail!(
            "policy alpha array has {} entries, expected {}",
            policy.alpha.len(),
            model.num_states() * model.num_actions()
        );
    }
    if policy.model.hash != model_hash(model) {
        eprintln!(
            "warning: policy file {} was computed for a different model (hash mismatch)",
            path.display()
        );
    }
    let alpha = AlphaMatrix::from_flat(
        model.num_states(),
        model.num_actions(),
        policy.alpha.clone(),
    );
    Ok((policy, alpha))
}
