//! `rtp-arb` command-line driver.
//!
//! Every subcommand reads the optional `--config` file first and then applies
//! its own flags on top, so a flag always wins over the file and the file wins
//! over the built-in defaults.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{Datelike, NaiveDate};
use clap::{Parser, Subcommand};

use rtp_arb::config::RunConfig;
use rtp_arb::dqn::Checkpoint;
use rtp_arb::experiment::{
    cross_test, daily_policy, emit_outputs, evaluate_greedy, read_training_curves_csv,
    render_plots, train_agent, TrainSchedule, YearEntry, TRAINING_CURVES_CSV,
};
use rtp_arb::ingest::{cache_path, fetch_year, read_price_csv, resolve_data_dir, FeedClient};
use rtp_arb::oracle::hindsight_optimal;
use rtp_arb::{Action, PriceSeries};

/// Year whose prices are excluded from the default protocol.
const IRREGULAR_YEAR: i32 = 2020;

#[derive(Debug, Parser)]
#[command(name = "rtp-arb", version, about = "Battery arbitrage against hourly real-time prices")]
struct Cli {
    /// Flat `key = value` configuration file; flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Download one year of 5-minute prices and cache them as hourly CSV
    Fetch {
        #[arg(long)]
        year: i32,
        /// Allow years excluded from the protocol
        #[arg(long)]
        force: bool,
        /// Download again even if the year is already cached
        #[arg(long)]
        refresh: bool,
        #[arg(long, value_name = "DIR")]
        data_dir: Option<PathBuf>,
        #[arg(long, value_name = "URL")]
        endpoint: Option<String>,
    },
    /// Train a DQN agent on one hourly price series
    Train {
        #[arg(long, value_name = "FILE")]
        prices: PathBuf,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        eval_every: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Label for the curve and checkpoint; defaults to the series' first year
        #[arg(long)]
        year: Option<i32>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Run a checkpoint's greedy policy over a price series
    Eval {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "FILE")]
        prices: PathBuf,
        /// Also write the hour-by-hour actions for this UTC date (YYYY-MM-DD)
        #[arg(long, value_name = "DATE")]
        policy_date: Option<NaiveDate>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Evaluate every agent on every year listed in a manifest
    CrossTest {
        /// CSV rows `year,checkpoint_path,prices_path`; relative paths are
        /// resolved against the manifest's directory
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Best achievable return on a series with perfect hindsight
    Oracle {
        #[arg(long, value_name = "FILE")]
        prices: PathBuf,
    },
    /// Render SVG charts for the report CSVs in a directory
    Plot {
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
    },
}

/// Parse `argv` (program name first), run the command and return the exit
/// code: 0 on success, 1 on a runtime or data error, 2 on a usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_target(false)
        .try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Fetch {
            year,
            force,
            refresh,
            data_dir,
            endpoint,
        } => fetch(config, year, force, refresh, data_dir, endpoint),
        Command::Train {
            prices,
            steps,
            eval_every,
            seed,
            year,
            out,
        } => {
            let mut config = config;
            if let Some(v) = steps {
                config.total_steps = v;
            }
            if let Some(v) = eval_every {
                config.eval_every = v;
            }
            if let Some(v) = seed {
                config.seed = v;
            }
            if let Some(v) = out {
                config.out_dir = v;
            }
            config.validate().context("invalid settings after applying flags")?;
            train(&config, &prices, year)
        }
        Command::Eval {
            checkpoint,
            prices,
            policy_date,
            out,
        } => eval(&checkpoint, &prices, policy_date, &out.unwrap_or(config.out_dir)),
        Command::CrossTest { manifest, out } => cross(&manifest, &out.unwrap_or(config.out_dir)),
        Command::Oracle { prices } => oracle(&config, &prices),
        Command::Plot { input } => {
            for path in render_plots(&input)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn load_prices(path: &Path) -> Result<PriceSeries> {
    read_price_csv(path).with_context(|| format!("cannot load prices from {}", path.display()))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("cannot load checkpoint {}", path.display()))
}

fn dollars(cents: f64) -> String {
    format!("${:.2}", cents / 100.0)
}

fn fetch(
    config: RunConfig,
    year: i32,
    force: bool,
    refresh: bool,
    data_dir: Option<PathBuf>,
    endpoint: Option<String>,
) -> Result<()> {
    if year == IRREGULAR_YEAR && !force {
        bail!("--year {year} is excluded because of irregular prices; pass --force to fetch it anyway");
    }
    let dir = resolve_data_dir(data_dir.as_deref(), config.data_dir.as_deref());
    let target = cache_path(&dir, year);
    if target.exists() && !refresh {
        let series = load_prices(&target)?;
        println!(
            "{} already cached ({} hours); pass --refresh to download again",
            target.display(),
            series.len()
        );
        return Ok(());
    }
    let client = FeedClient::http(endpoint.unwrap_or(config.endpoint));
    let (path, series, report, fetched) = fetch_year(&client, year, &dir)
        .with_context(|| format!("fetching {year} into {}", dir.display()))?;
    println!("wrote {} ({} hours)", path.display(), series.len());
    println!(
        "  {} five-minute samples, {} hours interpolated, {} empty day(s)",
        fetched.samples.len(),
        report.hours_interpolated.len(),
        fetched.empty_chunks.len()
    );
    Ok(())
}

fn train(config: &RunConfig, prices_path: &Path, year: Option<i32>) -> Result<()> {
    let series = load_prices(prices_path)?;
    let year = year.unwrap_or_else(|| series.start().year());
    let schedule = TrainSchedule {
        total_steps: config.total_steps,
        eval_every: config.eval_every,
        seed: config.seed,
    };
    let outcome = train_agent(&series, config.battery, &config.hyper, schedule, Some(year))?;

    let out = &config.out_dir;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let best_path = out.join(format!("agent_{year}.ckpt"));
    let last_path = out.join(format!("agent_{year}_last.ckpt"));
    outcome.best.save(&best_path)?;
    outcome.last.save(&last_path)?;
    // keep curves from earlier runs into the same directory, one per label
    let curves_path = out.join(TRAINING_CURVES_CSV);
    let mut curves = if curves_path.exists() {
        read_training_curves_csv(&curves_path)?
    } else {
        Vec::new()
    };
    curves.retain(|c| c.label != outcome.curve.label);
    curves.push(outcome.curve.clone());
    let written = emit_outputs(out, &curves, None, None)?;

    let optimum = hindsight_optimal(&series, &config.battery)?.value;
    let best = outcome.best.meta;
    println!(
        "trained {year} for {} steps ({} evaluations)",
        config.total_steps,
        outcome.curve.points.len()
    );
    println!(
        "  best greedy return {:.1}¢ ({}) at step {}",
        best.eval_return,
        dollars(best.eval_return),
        best.step
    );
    println!("  hindsight optimum  {optimum:.1}¢ ({})", dollars(optimum));
    println!("wrote {}", best_path.display());
    println!("wrote {}", last_path.display());
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn eval(checkpoint_path: &Path, prices_path: &Path, policy_date: Option<NaiveDate>, out: &Path) -> Result<()> {
    let checkpoint = load_checkpoint(checkpoint_path)?;
    let series = load_prices(prices_path)?;
    let battery = checkpoint.battery;
    let value = evaluate_greedy(&checkpoint, &series, &battery)?;
    let optimum = hindsight_optimal(&series, &battery)?.value;
    println!("greedy return      {value:.1}¢ ({})", dollars(value));
    println!("hindsight optimum  {optimum:.1}¢ ({})", dollars(optimum));
    if optimum > 0.0 {
        println!("fraction of optimum {:.3}", value / optimum);
    }
    if let Some(date) = policy_date {
        let rows = daily_policy(&checkpoint, &series, date)?;
        for r in &rows {
            println!(
                "  {}  {:>8.3}¢  {:<9}  {:.2} kWh",
                r.hour_start_utc.format("%H:%M"),
                r.price,
                r.action.name(),
                r.charge_after
            );
        }
        for path in emit_outputs(out, &[], None, Some(&rows))? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

struct ManifestRow {
    year: i32,
    checkpoint: PathBuf,
    prices: PathBuf,
}

fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read manifest {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("year,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [year, checkpoint, prices] = fields[..] else {
            bail!(
                "{} row {}: expected `year,checkpoint_path,prices_path`",
                path.display(),
                i + 1
            );
        };
        let year = year
            .parse()
            .with_context(|| format!("{} row {}: bad year `{year}`", path.display(), i + 1))?;
        rows.push(ManifestRow {
            year,
            checkpoint: base.join(checkpoint),
            prices: base.join(prices),
        });
    }
    Ok(rows)
}

fn cross(manifest: &Path, out: &Path) -> Result<()> {
    let entries = read_manifest(manifest)?
        .into_iter()
        .map(|row| {
            Ok(YearEntry {
                year: row.year,
                checkpoint: load_checkpoint(&row.checkpoint)?,
                series: load_prices(&row.prices)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let matrix = cross_test(&entries)?;

    print!("agent \\ test");
    for y in &matrix.years {
        print!("{y:>10}");
    }
    println!("{:>12}", "off-diag");
    let means = matrix.off_diagonal_means();
    for (a, agent) in matrix.years.iter().enumerate() {
        print!("{agent:<12}");
        for cell in &matrix.normalized[a] {
            match cell {
                Some(v) => print!("{v:>10.3}"),
                None => print!("{:>10}", "-"),
            }
        }
        match means[a] {
            Some(m) => println!("{m:>12.3}"),
            None => println!("{:>12}", "-"),
        }
    }
    for year in matrix.suppressed_years() {
        println!("note: {year} has a non-positive same-year return; its column is not normalized");
    }
    for path in emit_outputs(out, &[], Some(&matrix), None)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn oracle(config: &RunConfig, prices_path: &Path) -> Result<()> {
    let series = load_prices(prices_path)?;
    let plan = hindsight_optimal(&series, &config.battery)?;
    let count = |a: Action| plan.actions.iter().filter(|&&x| x == a).count();
    println!("hindsight optimum: {:?}¢ ({})", plan.value, dollars(plan.value));
    println!(
        "  {} steps: {} charge, {} discharge, {} idle",
        plan.actions.len(),
        count(Action::Charge),
        count(Action::Discharge),
        count(Action::Idle)
    );
    Ok(())
}
