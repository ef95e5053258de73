//! Command line interface for heavy-tailed density estimation.

mod config;
mod data;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use config::CommonOpts;
use data::{lambda_grid_cached, preprocess, read_draws, read_input, read_manifest, Manifest};
use heavytail::summaries::{self, DrawDensity};
use heavytail::{
    fit_pot, pot_tail_quantile, run_experiment, ExperimentSpec, FamilyKind, Grid, Method,
    ModelTarget, SyntheticFamily,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "heavytail", version, about = "Semiparametric Bayesian tail estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyArg {
    Gpd,
    Gpd4,
    HalfT,
}

impl From<FamilyArg> for FamilyKind {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Gpd => FamilyKind::Gpd,
            FamilyArg::Gpd4 => FamilyKind::Gpd4,
            FamilyArg::HalfT => FamilyKind::HalfT,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Semi,
    Thresh,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Semi => Method::Semi,
            MethodArg::Thresh => Method::Thresh,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the semiparametric model and persist posterior draws.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Output directory for draws.csv and manifest.json.
        #[arg(long)]
        output_dir: PathBuf,
        /// Directory for the lambda-grid cache.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Fit a GPD to exceedances over a fixed threshold.
    FitPot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        threshold: f64,
        #[arg(long, default_value_t = 30)]
        floor: usize,
        /// Exceedance probabilities for extrapolated quantiles.
        #[arg(long, value_delimiter = ',')]
        p_list: Vec<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Draw a synthetic sample and write it as a single-column CSV.
    Simulate {
        #[arg(long, value_enum)]
        family: FamilyArg,
        /// Extreme value index (reciprocal tail index).
        #[arg(long)]
        xi: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run a replicated simulation experiment and report aggregate metrics.
    Study {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long)]
        xi: f64,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, default_value_t = 20)]
        replicates: usize,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 20_000)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output prefix; writes <prefix>.csv and <prefix>.json.
        #[arg(long)]
        output: PathBuf,
    },
    /// Summarize a persisted draws file: tail quantiles and return periods.
    Summarize {
        #[arg(long)]
        draws: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1e-2, 1e-3, 1e-4, 1e-5])]
        p_list: Vec<f64>,
        /// Return-period levels on the original data scale.
        #[arg(long, value_delimiter = ',')]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 365.25)]
        records_per_year: f64,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sweep POT fits over a threshold grid and emit the xi curve as CSV.
    XiCurve {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 30)]
        floor: usize,
        /// Threshold grid as start,step,end; defaults to 0.005,0.025,3.0.
        #[arg(long, value_delimiter = ',')]
        thresholds: Vec<f64>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Time likelihood evaluations and short chains across sample sizes.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = vec![1061usize, 3645, 6180])]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        evals: usize,
        #[arg(long, default_value_t = 2000)]
        chain_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}

/// 2 for input/configuration problems, 3 for numerical failures.
fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<heavytail::Error>() {
            return match e {
                heavytail::Error::Numerical(_)
                | heavytail::Error::NonFiniteLikelihood { .. }
                | heavytail::Error::BracketFailure(_)
                | heavytail::Error::TooFewExceedances { .. } => 3,
                _ => 2,
            };
        }
    }
    2
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { input, output_dir, cache_dir, common } => {
            cmd_fit(&input, &output_dir, cache_dir.as_deref(), &common)
        }
        Command::FitPot { input, threshold, floor, p_list, output, common } => {
            cmd_fit_pot(&input, threshold, floor, &p_list, output.as_deref(), &common)
        }
        Command::Simulate { family, xi, n, seed, output } => {
            cmd_simulate(family, xi, n, seed, &output)
        }
        Command::Study { family, xi, method, replicates, n, iters, seed, output } => {
            cmd_study(family, xi, method, replicates, n, iters, seed, &output)
        }
        Command::Summarize {
            draws,
            manifest,
            p_list,
            levels,
            records_per_year,
            cache_dir,
            output,
        } => cmd_summarize(
            &draws,
            &manifest,
            &p_list,
            &levels,
            records_per_year,
            cache_dir.as_deref(),
            output.as_deref(),
        ),
        Command::XiCurve { input, output, floor, thresholds, common } => {
            cmd_xi_curve(&input, &output, floor, &thresholds, &common)
        }
        Command::Bench { n_list, evals, chain_iters, seed } => {
            cmd_bench(&n_list, evals, chain_iters, seed)
        }
    }
}

fn cmd_fit(
    input: &std::path::Path,
    output_dir: &std::path::Path,
    cache_dir: Option<&std::path::Path>,
    common: &CommonOpts,
) -> Result<()> {
    let cfg = common.resolve()?;
    let raw = read_input(input)?;
    let dataset = preprocess(&raw.values, &cfg)?;
    let grid = Grid::uniform(cfg.grid_len)?;
    let lambda_grid = lambda_grid_cached(&cfg, &grid, cache_dir)?;

    let target = ModelTarget::new(&dataset, &lambda_grid, &grid, &cfg.prior);
    let init = heavytail::initialize(&dataset, &cfg.prior, cfg.knots)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sampler.seed);
    let draws = heavytail::run_chain(&target, &cfg.sampler, &init, &mut rng)?;

    std::fs::create_dir_all(output_dir)?;
    data::write_draws(&output_dir.join("draws.csv"), &draws)?;
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: std::env::args().collect::<Vec<_>>().join(" "),
        config: cfg,
        provenance: dataset.provenance.clone(),
        n: dataset.len(),
        retained_draws: draws.len(),
        accept_rates: draws.accept_rates.clone(),
        clamp_count: draws.clamp_count,
        lambda_grid_size: lambda_grid.len(),
        dates: raw.dates,
    };
    data::write_manifest(&output_dir.join("manifest.json"), &manifest)?;

    let (xi_mean, lo, hi) = summaries::xi_summary(&draws);
    println!(
        "n = {} (of {} raw), retained draws = {}, xi mean = {:.4} [{:.4}, {:.4}]",
        dataset.len(),
        dataset.provenance.original_count,
        draws.len(),
        xi_mean,
        lo,
        hi
    );
    println!("outputs in {}", output_dir.display());
    Ok(())
}

fn cmd_fit_pot(
    input: &std::path::Path,
    threshold: f64,
    floor: usize,
    p_list: &[f64],
    output: Option<&std::path::Path>,
    common: &CommonOpts,
) -> Result<()> {
    let cfg = common.resolve()?;
    let raw = read_input(input)?;
    let dataset = preprocess(&raw.values, &cfg)?;
    let fit = fit_pot(&dataset, threshold, &cfg.prior, &cfg.sampler, floor)?;
    let (xi_mean, lo, hi) = fit.xi_summary();
    let quantiles: Vec<serde_json::Value> = p_list
        .iter()
        .map(|&p| {
            let q = pot_tail_quantile(&fit, p)?;
            let (est, qlo, qhi) = summaries::median_and_interval(&q);
            Ok(serde_json::json!({"p": p, "estimate": est, "lower95": qlo, "upper95": qhi}))
        })
        .collect::<Result<_>>()?;
    let report = serde_json::json!({
        "threshold": fit.threshold,
        "exceedances": fit.count,
        "fraction": fit.fraction,
        "xi_mean": xi_mean,
        "xi_lower95": lo,
        "xi_upper95": hi,
        "accept_rate": fit.accept_rate,
        "quantiles": quantiles,
    });
    let text = serde_json::to_string_pretty(&report)?;
    match output {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_simulate(family: FamilyArg, xi: f64, n: usize, seed: u64, output: &std::path::Path) -> Result<()> {
    if !(xi > 0.0) {
        bail!("xi must be positive, got {xi}");
    }
    let fam = SyntheticFamily::new(family.into(), 1.0 / xi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = fam.sample(n, &mut rng);
    let mut w = csv::Writer::from_path(output)?;
    w.write_record(["value"])?;
    for v in values {
        w.write_record([v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_study(
    family: FamilyArg,
    xi: f64,
    method: MethodArg,
    replicates: usize,
    n: usize,
    iters: usize,
    seed: u64,
    output: &std::path::Path,
) -> Result<()> {
    if !(xi > 0.0) {
        bail!("xi must be positive, got {xi}");
    }
    let fam = SyntheticFamily::new(family.into(), 1.0 / xi)?;
    let spec = ExperimentSpec {
        n,
        replicates,
        sampler: heavytail::SamplerConfig::with_iters(iters),
        ..ExperimentSpec::desk_scale(fam, method.into(), seed)
    };
    let row = run_experiment(&spec)?;

    let csv_path = output.with_extension("csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    let mut header =
        vec!["xi_true".into(), "method".into(), "bias".into(), "rmse".into(), "coverage".into()];
    for q in &row.quantiles {
        header.push(format!("rmae_p{:e}", q.p));
        header.push(format!("cover_p{:e}", q.p));
    }
    header.extend(["replicates".into(), "failures".into(), "valid".into()] as [String; 3]);
    w.write_record(&header)?;
    let mut rec = vec![
        row.xi_true.to_string(),
        format!("{:?}", row.method).to_lowercase(),
        format!("{:.4}", row.bias),
        format!("{:.4}", row.rmse),
        format!("{:.1}", row.coverage),
    ];
    for q in &row.quantiles {
        rec.push(format!("{:.4}", q.rmae));
        rec.push(format!("{:.1}", q.coverage));
    }
    rec.push(row.replicates.to_string());
    rec.push(row.failures.to_string());
    rec.push(row.valid.to_string());
    w.write_record(&rec)?;
    w.flush()?;

    let manifest = serde_json::json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "command": std::env::args().collect::<Vec<_>>().join(" "),
        "spec": spec,
        "row": row,
        "note": "thresholding arm uses a fixed 90th-percentile empirical threshold",
    });
    std::fs::write(output.with_extension("json"), serde_json::to_string_pretty(&manifest)?)?;
    println!("bias {:.4}, rmse {:.4}, coverage {:.1}%", row.bias, row.rmse, row.coverage);
    println!("wrote {} and {}", csv_path.display(), output.with_extension("json").display());
    Ok(())
}

fn cmd_summarize(
    draws_path: &std::path::Path,
    manifest_path: &std::path::Path,
    p_list: &[f64],
    levels: &[f64],
    records_per_year: f64,
    cache_dir: Option<&std::path::Path>,
    output: Option<&std::path::Path>,
) -> Result<()> {
    let manifest = read_manifest(manifest_path)?;
    let cfg = &manifest.config;
    let (states, xi) = read_draws(draws_path, cfg.knots)?;
    let grid = Grid::uniform(cfg.grid_len)?;
    let lambda_grid = lambda_grid_cached(cfg, &grid, cache_dir)?;
    let shift = manifest.provenance.support_shift;
    let densities: Vec<DrawDensity> = states
        .iter()
        .map(|s| DrawDensity::from_state(s, &lambda_grid, &grid, &cfg.prior))
        .collect::<heavytail::Result<_>>()
        .context("reconstructing densities from draws")?;

    let (xi_mean, xi_lo, xi_hi) = summaries::mean_and_interval(&xi);
    let quantiles = summaries::quantile_report(&densities, p_list, shift)?;
    let inclusion = manifest.n as f64 / manifest.provenance.original_count.max(1) as f64;
    let returns: Vec<_> = levels
        .iter()
        .map(|&level| {
            summaries::return_period(&densities, level, records_per_year, inclusion, shift)
        })
        .collect::<heavytail::Result<_>>()?;

    let report = serde_json::json!({
        "xi_mean": xi_mean,
        "xi_lower95": xi_lo,
        "xi_upper95": xi_hi,
        "quantiles": quantiles,
        "return_periods": returns,
        "records_per_year": records_per_year,
        "inclusion_fraction": inclusion,
    });
    let text = serde_json::to_string_pretty(&report)?;
    match output {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_xi_curve(
    input: &std::path::Path,
    output: &std::path::Path,
    floor: usize,
    thresholds: &[f64],
    common: &CommonOpts,
) -> Result<()> {
    let cfg = common.resolve()?;
    let raw = read_input(input)?;
    let dataset = preprocess(&raw.values, &cfg)?;
    let grid = if thresholds.is_empty() {
        heavytail::pot::default_threshold_grid()
    } else {
        if thresholds.len() != 3 {
            bail!("--thresholds takes exactly three values: start,step,end");
        }
        let (start, step, end) = (thresholds[0], thresholds[1], thresholds[2]);
        if step <= 0.0 || end < start {
            bail!("thresholds must be start,step,end with step > 0 and end >= start");
        }
        let mut g = Vec::new();
        let mut t = start;
        while t <= end + 1e-12 {
            g.push(t);
            t += step;
        }
        g
    };
    let (points, gaps) = heavytail::pot_xi_curve(&dataset, &grid, &cfg.prior, &cfg.sampler, floor);
    let mut w = csv::Writer::from_path(output)?;
    w.write_record(["threshold", "exceedances", "xi_mean", "lower95", "upper95"])?;
    for p in &points {
        w.write_record([
            p.threshold.to_string(),
            p.count.to_string(),
            p.xi_mean.to_string(),
            p.lower95.to_string(),
            p.upper95.to_string(),
        ])?;
    }
    w.flush()?;
    println!("wrote {} points to {}", points.len(), output.display());
    if !gaps.is_empty() {
        println!("skipped {} thresholds with fewer than {floor} exceedances", gaps.len());
    }
    Ok(())
}

fn cmd_bench(n_list: &[usize], evals: usize, chain_iters: usize, seed: u64) -> Result<()> {
    use heavytail::model::Dataset;
    let cfg = config::RunConfig::default();
    let grid = Grid::uniform(cfg.grid_len)?;
    let lambda_grid = lambda_grid_cached(&cfg, &grid, None)?;
    let fam = SyntheticFamily::new(FamilyKind::Gpd, 2.0)?;

    println!("{:>8} {:>16} {:>16} {:>8}", "n", "us/likelihood", "chain ms", "ratio");
    let mut base: Option<f64> = None;
    for &n in n_list {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dataset = Dataset::from_values(fam.sample(n, &mut rng))?;
        let target = ModelTarget::new(&dataset, &lambda_grid, &grid, &cfg.prior);
        let init = heavytail::initialize(&dataset, &cfg.prior, cfg.knots)?;

        let t0 = Instant::now();
        let mut acc = 0.0;
        for i in 0..evals {
            let mut s = init.clone();
            s.tau += i as f64 * 1e-9;
            acc += target.log_posterior(&s)?;
        }
        let per_eval = t0.elapsed().as_secs_f64() * 1e6 / evals as f64;
        std::hint::black_box(acc);

        let sampler = heavytail::SamplerConfig {
            seed,
            ..heavytail::SamplerConfig::with_iters(chain_iters)
        };
        let t1 = Instant::now();
        let draws = heavytail::run_chain(&target, &sampler, &init, &mut rng)?;
        let chain_ms = t1.elapsed().as_secs_f64() * 1e3;
        std::hint::black_box(draws.len());

        let ratio = match base {
            None => {
                base = Some(chain_ms);
                1.0
            }
            Some(b) => chain_ms / b,
        };
        println!("{n:>8} {per_eval:>16.1} {chain_ms:>16.1} {ratio:>8.2}");
    }
    Ok(())
}
