use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::{Error, Result};

/// Network hyperparameters. Stage sizes are `n_c`, `n_c·up1`, `n_c·up1·up2`;
/// half of the coarse points come from each encoder branch.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Feature width `C`.
    pub c: usize,
    /// Expected input size `N_s`.
    pub n_s: usize,
    /// Coarse size `N_c`.
    pub n_c: usize,
    pub up1: usize,
    pub up2: usize,
    /// Neighbours per group.
    pub k: usize,
    pub depth: usize,
    pub heads: usize,
    /// Hidden width of feed-forward layers, as a multiple of `c`.
    pub ffn_mult: usize,
    /// Class-balance exponent of the substructure sampler.
    pub alpha: f64,
    /// Jitter applied to global key points during training (mm).
    pub jitter_sigma_mm: f64,
    /// Millimetres per network unit.
    pub coord_scale_mm: f64,
    pub init_seed: u64,
    /// Standard deviation of the offset-head output layer at init; zero
    /// makes the untrained network a pure replicator.
    pub offset_init_std: f64,
}

impl ModelConfig {
    /// Paper-scale sizes: 7,500 → 1,024 / 2,048 / 16,384.
    pub fn full() -> Self {
        ModelConfig {
            c: 128,
            n_s: 7500,
            n_c: 1024,
            up1: 2,
            up2: 8,
            k: 16,
            depth: 2,
            heads: 4,
            ffn_mult: 2,
            alpha: 0.5,
            jitter_sigma_mm: 0.5,
            coord_scale_mm: 50.0,
            init_seed: 0,
            offset_init_std: 0.0,
        }
    }

    /// Single-CPU scale: 512 → 128 / 256 / 2,048.
    pub fn desk() -> Self {
        ModelConfig {
            n_s: 512,
            n_c: 128,
            ..Self::full()
        }
    }

    /// 64-point configuration for finite-difference checks.
    pub fn toy() -> Self {
        ModelConfig {
            c: 8,
            n_s: 64,
            n_c: 16,
            k: 4,
            depth: 1,
            heads: 2,
            ..Self::full()
        }
    }

    pub fn mid(&self) -> usize {
        self.n_c * self.up1
    }

    pub fn fine(&self) -> usize {
        self.n_c * self.up1 * self.up2
    }

    pub fn half(&self) -> usize {
        self.n_c / 2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("model config: {m}")));
        if (self.up1, self.up2) != (2, 8) {
            return bad("upsampling factors must be (2, 8)");
        }
        if self.n_c < 2 || self.n_c % 2 != 0 {
            return bad("n_c must be even and >= 2");
        }
        if self.n_s < self.half() {
            return bad("n_s must be >= n_c / 2");
        }
        if self.k == 0 || self.k > self.n_s {
            return bad("k must be in 1..=n_s");
        }
        if self.c == 0 || self.heads == 0 || self.c % self.heads != 0 {
            return bad("c must be a positive multiple of heads");
        }
        if self.ffn_mult == 0 {
            return bad("ffn_mult must be >= 1");
        }
        if !(self.alpha.is_finite() && self.jitter_sigma_mm >= 0.0 && self.offset_init_std >= 0.0) {
            return bad("alpha, jitter and offset init must be finite and non-negative");
        }
        if !(self.coord_scale_mm > 0.0) {
            return bad("coord_scale_mm must be > 0");
        }
        Ok(())
    }

    /// `key = value` lines in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("model.c", self.c.to_string()),
            ("model.n_s", self.n_s.to_string()),
            ("model.n_c", self.n_c.to_string()),
            ("model.up1", self.up1.to_string()),
            ("model.up2", self.up2.to_string()),
            ("model.k", self.k.to_string()),
            ("model.depth", self.depth.to_string()),
            ("model.heads", self.heads.to_string()),
            ("model.ffn_mult", self.ffn_mult.to_string()),
            ("model.alpha", format!("{:?}", self.alpha)),
            ("model.jitter_sigma_mm", format!("{:?}", self.jitter_sigma_mm)),
            ("model.coord_scale_mm", format!("{:?}", self.coord_scale_mm)),
            ("model.init_seed", self.init_seed.to_string()),
            ("model.offset_init_std", format!("{:?}", self.offset_init_std)),
        ]
    }

    /// Applies `model.*` keys from a parsed key/value map onto `self`;
    /// other keys are ignored.
    pub fn apply(&mut self, kv: &BTreeMap<String, String>) -> Result<()> {
        fn parse<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::invalid(format!("bad value {v:?} for {k}")))
        }
        for (k, v) in kv {
            let Some(name) = k.strip_prefix("model.") else {
                continue;
            };
            match name {
                "c" => self.c = parse(k, v)?,
                "n_s" => self.n_s = parse(k, v)?,
                "n_c" => self.n_c = parse(k, v)?,
                "up1" => self.up1 = parse(k, v)?,
                "up2" => self.up2 = parse(k, v)?,
                "k" => self.k = parse(k, v)?,
                "depth" => self.depth = parse(k, v)?,
                "heads" => self.heads = parse(k, v)?,
                "ffn_mult" => self.ffn_mult = parse(k, v)?,
                "alpha" => self.alpha = parse(k, v)?,
                "jitter_sigma_mm" => self.jitter_sigma_mm = parse(k, v)?,
                "coord_scale_mm" => self.coord_scale_mm = parse(k, v)?,
                "init_seed" => self.init_seed = parse(k, v)?,
                "offset_init_std" => self.offset_init_std = parse(k, v)?,
                _ => return Err(Error::invalid(format!("unknown key {k}"))),
            }
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = ModelConfig::full();
        c.apply(&parse_kv(text)?)?;
        c.validate()?;
        Ok(c)
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; whitespace around keys and values is trimmed; a repeated key is
/// an error.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format("config", format!("line {}: expected 'key = value'", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::format("config", format!("line {}: empty key", n + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::format("config", format!("line {}: duplicate key {k}", n + 1)));
        }
    }
    Ok(out)
}
