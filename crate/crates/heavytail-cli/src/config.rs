//! Run configuration: defaults, flat key=value config files, flag overrides.

use anyhow::{bail, Context, Result};
use heavytail::{PriorConfig, SamplerConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Everything needed to reproduce a fit, embedded in every output manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub grid_len: usize,
    pub knots: usize,
    pub prior: PriorConfig,
    pub sampler: SamplerConfig,
    pub truncate_below: f64,
    pub jitter_half_width: f64,
    pub support_shift: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid_len: 101,
            knots: 11,
            prior: PriorConfig::default(),
            sampler: SamplerConfig::default(),
            truncate_below: 0.0,
            jitter_half_width: 0.0,
            support_shift: 0.0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_len < 2 * self.knots {
            bail!("grid_len {} must be at least twice the knot count {}", self.grid_len, self.knots);
        }
        self.prior.validate()?;
        self.sampler.validate()?;
        Ok(())
    }

    /// Apply one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        macro_rules! parse {
            () => {
                value.trim().parse().with_context(|| format!("bad value for {key}: {value}"))?
            };
        }
        match key {
            "grid_len" => self.grid_len = parse!(),
            "knots" => self.knots = parse!(),
            "n_iter" => {
                self.sampler.n_iter = parse!();
                self.sampler.burn_in = self.sampler.n_iter / 5;
            }
            "burn_in" => self.sampler.burn_in = parse!(),
            "thin" => self.sampler.thin = parse!(),
            "target_accept" => self.sampler.target_accept = parse!(),
            "adapt_decay" => self.sampler.adapt_decay = parse!(),
            "seed" => self.sampler.seed = parse!(),
            "alpha_min" => self.prior.alpha_min = parse!(),
            "a_kappa" => self.prior.a_kappa = parse!(),
            "b_kappa" => self.prior.b_kappa = parse!(),
            "a_lambda" => self.prior.a_lambda = parse!(),
            "b_lambda" => self.prior.b_lambda = parse!(),
            "truncate_below" => self.truncate_below = parse!(),
            "jitter_half_width" => self.jitter_half_width = parse!(),
            "support_shift" => self.support_shift = parse!(),
            other => bail!("unknown config key: {other}"),
        }
        Ok(())
    }

    /// Read a flat `key = value` file; `#` starts a comment.
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected key = value", path.display(), lineno + 1))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }
}

/// Shared preprocessing / sampler flags; flags win over the config file.
#[derive(Debug, Clone, clap::Args)]
pub struct CommonOpts {
    /// Flat key = value config file.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub knots: Option<usize>,
    #[arg(long)]
    pub grid_len: Option<usize>,
    /// Drop raw records strictly below this value.
    #[arg(long)]
    pub truncate_below: Option<f64>,
    /// Half-width of the uniform jitter added to retained records.
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Subtract this support shift before fitting; reports add it back.
    #[arg(long)]
    pub support_shift: Option<f64>,
}

impl CommonOpts {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.load_file(path)?;
        }
        if let Some(v) = self.iters {
            cfg.sampler.n_iter = v;
            cfg.sampler.burn_in = v / 5;
        }
        if let Some(v) = self.burn_in {
            cfg.sampler.burn_in = v;
        }
        if let Some(v) = self.thin {
            cfg.sampler.thin = v;
        }
        if let Some(v) = self.seed {
            cfg.sampler.seed = v;
        }
        if let Some(v) = self.knots {
            cfg.knots = v;
        }
        if let Some(v) = self.grid_len {
            cfg.grid_len = v;
        }
        if let Some(v) = self.truncate_below {
            cfg.truncate_below = v;
        }
        if let Some(v) = self.jitter {
            cfg.jitter_half_width = v;
        }
        if let Some(v) = self.support_shift {
            cfg.support_shift = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
