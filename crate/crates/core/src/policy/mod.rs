//! Attention encoder-decoder construction policy.
//!
//! Node features are embedded linearly and refined by self-attention blocks
//! (multi-head attention and a two-layer feed-forward net, each with a
//! residual connection and instance normalization). The decoder builds a
//! context from the graph embedding, the last node's embedding and the
//! remaining capacity (plus the clock for windowed variants), takes one
//! masked multi-head glimpse and scores every node with a single head.

mod heuristic;
mod model;
mod rollout;

use std::fs;
use std::path::{Path, PathBuf};

pub use heuristic::{greedy_heuristic, HeuristicRule};
pub use model::{featurize, AttentionModel, Encoded, PolicyConfig, Variant};
pub use rollout::{BatchRollout, Chooser, DecodeMode, Rollout, Trace};

use crate::cvrptw::EnvError;
use crate::numeric::{load_checkpoint, save_checkpoint, NumericError};

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("policy configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("metadata {path}: {message}")]
    Meta { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sidecar file holding the model configuration next to a checkpoint.
pub fn meta_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn format_meta(c: &PolicyConfig) -> String {
    let clip = c.tanh_clip.map(|x| x.to_string()).unwrap_or_else(|| "none".into());
    format!(
        "variant = {}\nd_emb = {}\nlayers = {}\nheads = {}\nff_dim = {}\npair_coords = {}\ncontext_clock = {}\ntanh_clip = {clip}\n",
        c.variant, c.d_emb, c.layers, c.heads, c.ff_dim, c.pair_coords, c.context_clock
    )
}

pub fn parse_meta(text: &str, path: &Path) -> Result<PolicyConfig, PolicyError> {
    let err = |message: String| PolicyError::Meta { path: path.to_path_buf(), message };
    let mut kv = std::collections::HashMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line.split_once('=').ok_or_else(|| err(format!("malformed line `{line}`")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| kv.get(k).ok_or_else(|| err(format!("missing key `{k}`")));
    let num = |k: &str| get(k)?.parse::<usize>().map_err(|e| err(format!("{k}: {e}")));
    let flag = |k: &str| get(k)?.parse::<bool>().map_err(|e| err(format!("{k}: {e}")));
    let clip = match get("tanh_clip")?.as_str() {
        "none" => None,
        v => Some(v.parse::<f64>().map_err(|e| err(format!("tanh_clip: {e}")))?),
    };
    let config = PolicyConfig {
        variant: get("variant")?.parse()?,
        d_emb: num("d_emb")?,
        layers: num("layers")?,
        heads: num("heads")?,
        ff_dim: num("ff_dim")?,
        pair_coords: flag("pair_coords")?,
        context_clock: flag("context_clock")?,
        tanh_clip: clip,
    };
    config.validate()?;
    Ok(config)
}

impl AttentionModel {
    /// Writes the checkpoint and its metadata sidecar.
    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        save_checkpoint(&self.params, path)?;
        fs::write(meta_path(path), format_meta(&self.config))?;
        Ok(())
    }

    /// Rebuilds the model described by the sidecar and loads its weights.
    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let mp = meta_path(path);
        let config = parse_meta(&fs::read_to_string(&mp)?, &mp)?;
        let mut model = AttentionModel::new(config, 0)?;
        model.params = load_checkpoint(path, &model.params)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests;
