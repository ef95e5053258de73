//! Input parsing, preprocessing and draw persistence.

use crate::config::RunConfig;
use anyhow::{bail, Context, Result};
use heavytail::model::{Dataset, Provenance};
use heavytail::{ChainState, Grid, KnotSet, LambdaGrid, LambdaGridConfig, PosteriorDraws};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Raw input: one value column, an optional header, an optional leading date
/// column that the model ignores.
#[derive(Debug, Clone)]
pub struct RawInput {
    pub values: Vec<f64>,
    pub dates: Option<(String, String)>,
}

pub fn read_input(path: &Path) -> Result<RawInput> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("cannot open input file {}", path.display()))?;
    let mut values = Vec::new();
    let mut dates: Vec<String> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("malformed record at line {}", i + 1))?;
        let fields: Vec<&str> = record.iter().map(str::trim).collect();
        let (date, raw) = match fields.as_slice() {
            [v] => (None, *v),
            [d, v, ..] => (Some(*d), *v),
            [] => continue,
        };
        match raw.parse::<f64>() {
            Ok(v) => {
                if !(v.is_finite() && v >= 0.0) {
                    bail!("line {}: values must be finite and nonnegative, got {raw}", i + 1);
                }
                if let Some(d) = date {
                    dates.push(d.to_string());
                }
                values.push(v);
            }
            // a single non-numeric first row is a header
            Err(_) if i == 0 => continue,
            Err(_) => bail!("line {}: cannot parse value {raw:?}", i + 1),
        }
    }
    if values.is_empty() {
        bail!("input file {} contains no values", path.display());
    }
    let dates = match (dates.first(), dates.last()) {
        (Some(a), Some(b)) => Some((a.clone(), b.clone())),
        _ => None,
    };
    Ok(RawInput { values, dates })
}

/// Truncate, jitter and shift raw values into a model-ready dataset.
pub fn preprocess(raw: &[f64], cfg: &RunConfig) -> Result<Dataset> {
    let original_count = raw.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sampler.seed ^ 0x6a09_e667_f3bc_c908);
    let h = cfg.jitter_half_width;
    let mut out = Vec::new();
    for &v in raw.iter().filter(|&&v| v >= cfg.truncate_below) {
        let jitter = if h > 0.0 { rng.gen_range(-h..h) } else { 0.0 };
        let z = v + jitter - cfg.support_shift;
        if z <= 0.0 {
            bail!("preprocessed value {z} (from raw {v}) is not positive; adjust truncate_below/support_shift");
        }
        out.push(z);
    }
    if out.is_empty() {
        bail!("no records remain after truncation at {}", cfg.truncate_below);
    }
    let provenance = Provenance {
        truncate_below: cfg.truncate_below,
        jitter_half_width: h,
        support_shift: cfg.support_shift,
        seed: cfg.sampler.seed,
        original_count,
    };
    Ok(Dataset::new(out, provenance)?)
}

/// Load the lambda-grid from a JSON cache keyed by its build parameters, or
/// build and cache it.
pub fn lambda_grid_cached(
    cfg: &RunConfig,
    grid: &Grid,
    cache_dir: Option<&Path>,
) -> Result<LambdaGrid> {
    let key = format!(
        "lambda_grid_m{}_L{}_a{}_b{}.json",
        cfg.knots, cfg.grid_len, cfg.prior.a_lambda, cfg.prior.b_lambda
    );
    if let Some(dir) = cache_dir {
        let path = dir.join(&key);
        if path.exists() {
            let text = std::fs::read_to_string(&path)?;
            if let Ok(lg) = serde_json::from_str::<LambdaGrid>(&text) {
                return Ok(lg);
            }
            // stale or corrupt cache entry: rebuild below
        }
    }
    let knots = KnotSet::uniform(cfg.knots)?;
    let lg = LambdaGrid::build(&knots, grid, &LambdaGridConfig::default())?;
    if let Some(dir) = cache_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(&key), serde_json::to_string(&lg)?)?;
    }
    Ok(lg)
}

/// Sidecar manifest written next to every draws file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub command: String,
    pub config: RunConfig,
    pub provenance: Provenance,
    pub n: usize,
    pub retained_draws: usize,
    pub accept_rates: Vec<f64>,
    pub clamp_count: u64,
    pub lambda_grid_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dates: Option<(String, String)>,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read manifest {}", path.display()))?;
    Ok(serde_json::from_str(&text).with_context(|| format!("malformed manifest {}", path.display()))?)
}

pub fn write_draws(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let m = draws.states.first().map_or(0, |s| s.omega_s.len());
    let mut header = vec!["zeta".to_string(), "tau".to_string()];
    header.extend((0..m).map(|i| format!("omega_{i}")));
    header.extend(["alpha", "sigma", "xi", "log_post"].map(String::from));
    w.write_record(&header)?;
    for i in 0..draws.len() {
        let s = &draws.states[i];
        let mut row = vec![s.zeta.to_string(), s.tau.to_string()];
        row.extend(s.omega_s.iter().map(|v| v.to_string()));
        row.push(draws.alpha[i].to_string());
        row.push(draws.sigma[i].to_string());
        row.push(draws.xi[i].to_string());
        row.push(draws.log_post[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read back the chain states (and xi draws) persisted by [`write_draws`].
pub fn read_draws(path: &Path, m: usize) -> Result<(Vec<ChainState>, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open draws file {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let expected = m + 6;
    if headers.len() != expected {
        bail!(
            "draws file {} has {} columns, expected {expected} for {m} knots",
            path.display(),
            headers.len()
        );
    }
    let mut states = Vec::new();
    let mut xi = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let nums: Vec<f64> = record
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("draws row {}: non-numeric field", i + 1))?;
        states.push(ChainState {
            zeta: nums[0],
            tau: nums[1],
            omega_s: nums[2..2 + m].to_vec(),
        });
        xi.push(nums[m + 4]);
    }
    if states.is_empty() {
        bail!("draws file {} is empty", path.display());
    }
    Ok((states, xi))
}
