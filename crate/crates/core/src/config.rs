//! Model dimensions and the flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Network and scene dimensions shared by every module. Defaults are the
/// desk-scale sizes the acceptance suite runs at.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    /// Input latent dimensionality.
    pub dz: usize,
    /// Number of per-layer latent rows (the extended latent is `[k, d]`).
    pub k: usize,
    /// Per-row latent width.
    pub d: usize,
    /// Channels per tri-plane.
    pub plane_channels: usize,
    /// Tri-plane spatial resolution.
    pub plane_res: usize,
    /// Renderer feature channels (first 3 are RGB).
    pub feat_channels: usize,
    /// Decoder MLP hidden width.
    pub mlp_hidden: usize,
    /// Super-resolution intermediate channels (after pixel shuffle).
    pub sr_mid: usize,
    /// Scene half-extent; geometry lives in `[-bound, bound]^3`.
    pub bound: f64,
    /// Camera orbit radius.
    pub radius: f64,
    /// Vertical field of view, radians.
    pub fov_y: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dz: 16,
            k: 6,
            d: 32,
            plane_channels: 8,
            plane_res: 32,
            feat_channels: 8,
            mlp_hidden: 32,
            sr_mid: 16,
            bound: 1.0,
            radius: 2.7,
            fov_y: 0.8,
        }
    }
}

/// Flat configuration file: one `key = value` per line, `#` comments.
#[derive(Clone, Debug, Default)]
pub struct FlatConfig {
    values: BTreeMap<String, String>,
}

impl FlatConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    lineno + 1
                )));
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FlatConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(|s| s.as_str())
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::config(format!("key `{key}`: `{v}` is not a number"))),
        }
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::config(format!("key `{key}`: `{v}` is not an integer"))),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::config(format!("key `{key}`: `{v}` is not an integer"))),
        }
    }

    pub fn get_bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.values.get(key).map(|s| s.as_str()) {
            None => Ok(default),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(v) => Err(Error::config(format!("key `{key}`: `{v}` is not a bool"))),
        }
    }
}

impl ModelConfig {
    /// Apply overrides from a flat config (keys prefixed `model.`).
    pub fn with_overrides(mut self, cfg: &FlatConfig) -> Result<Self> {
        self.dz = cfg.get_usize("model.dz", self.dz)?;
        self.k = cfg.get_usize("model.k", self.k)?;
        self.d = cfg.get_usize("model.d", self.d)?;
        self.plane_channels = cfg.get_usize("model.plane_channels", self.plane_channels)?;
        self.plane_res = cfg.get_usize("model.plane_res", self.plane_res)?;
        self.feat_channels = cfg.get_usize("model.feat_channels", self.feat_channels)?;
        self.mlp_hidden = cfg.get_usize("model.mlp_hidden", self.mlp_hidden)?;
        self.sr_mid = cfg.get_usize("model.sr_mid", self.sr_mid)?;
        self.bound = cfg.get_f64("model.bound", self.bound)?;
        self.radius = cfg.get_f64("model.radius", self.radius)?;
        self.fov_y = cfg.get_f64("model.fov_y", self.fov_y)?;
        if self.feat_channels < 3 {
            return Err(Error::config("feat_channels must be >= 3 (RGB head)"));
        }
        if self.bound <= 0.0 || self.radius <= self.bound * 3f64.sqrt() {
            return Err(Error::config("camera radius must exceed bound * sqrt(3)"));
        }
        Ok(self)
    }
}
