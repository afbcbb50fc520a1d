use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lorasim::baseband::{fit_samples, read_samples_csv, run_campaign, write_samples_csv};
use lorasim::engine::RngFactory;
use lorasim::harness::{
    check_writable, emit_traces, run_experiment, summary_record, sweep, write_sweep_csv,
    ExperimentConfig, OutputPaths,
};
use lorasim::linkmodel::{CodeRate, ErrorModel, ErrorModelEntry, SpreadingFactor};
use lorasim::scenario::SfStrategy;

#[derive(Parser)]
#[command(
    name = "lorasim",
    version,
    about = "Discrete-event LoRaWAN network simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its CSV traces.
    Run(RunArgs),
    /// Run a grid of experiments over several seeds.
    Sweep(SweepArgs),
    /// Measure bit error rates of the baseband modem.
    BerCampaign(CampaignArgs),
    /// Fit error-model curves to measured bit error rates.
    Fit(FitArgs),
    /// Compare a fitted error model against the built-in table.
    RefitCheck(RefitArgs),
}

/// Experiment settings. Flags override values from `--config`.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML file with experiment settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_devices: Option<usize>,
    #[arg(long)]
    n_gateways: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    /// Place all devices at this distance from the origin.
    #[arg(long)]
    device_distance: Option<f64>,
    /// Uplink period in seconds.
    #[arg(long)]
    us_period: Option<f64>,
    #[arg(long)]
    us_confirmed: Option<bool>,
    /// Mean downlink inter-arrival time in seconds.
    #[arg(long)]
    ds_mean_iat: Option<f64>,
    #[arg(long)]
    ds_confirmed: Option<bool>,
    /// `random`, `fixed:<sf>` or `per:<threshold>`.
    #[arg(long, value_parser = parse_strategy)]
    sf_strategy: Option<SfStrategy>,
    /// Simulated time in uplink periods.
    #[arg(long)]
    sim_periods: Option<f64>,
    #[arg(long)]
    tx_power: Option<f64>,
    #[arg(long)]
    noise_floor: Option<f64>,
    /// Error-model CSV replacing the built-in table.
    #[arg(long)]
    error_model: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    run_index: Option<u32>,
}

fn parse_strategy(s: &str) -> Result<SfStrategy, String> {
    match s.split_once(':') {
        None if s == "random" => Ok(SfStrategy::Random),
        Some(("fixed", v)) => {
            let sf: u8 = v.parse().map_err(|e| format!("{e}"))?;
            SpreadingFactor::new(sf)
                .map(SfStrategy::Fixed)
                .map_err(|e| e.to_string())
        }
        Some(("per", v)) => v
            .parse()
            .map(SfStrategy::PerThreshold)
            .map_err(|e| format!("{e}")),
        _ => Err(format!("unknown strategy {s:?}")),
    }
}

impl ConfigArgs {
    fn build(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_toml_path(p)
                .with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = &self.$flag { cfg.$field = v.clone(); })*
            };
        }
        set!(
            n_devices => n_devices,
            n_gateways => n_gateways,
            radius => radius_m,
            us_period => us_period_s,
            us_confirmed => us_confirmed,
            ds_confirmed => ds_confirmed,
            sf_strategy => sf_strategy,
            sim_periods => sim_periods,
            tx_power => tx_power_dbm,
            noise_floor => noise_floor_dbm,
            seed => seed,
            run_index => run_index,
        );
        if self.device_distance.is_some() {
            cfg.device_distance_m = self.device_distance;
        }
        if self.ds_mean_iat.is_some() {
            cfg.ds_mean_iat_s = self.ds_mean_iat;
        }
        if self.error_model.is_some() {
            cfg.error_model = self.error_model.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Directory for the packet, summary and topology CSVs.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// File name prefix; defaults to the config hash and run index.
    #[arg(long)]
    stem: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated device counts.
    #[arg(long, value_delimiter = ',', default_values_t = [100usize, 500, 1000])]
    devices: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize])]
    gateways: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [600.0f64])]
    periods: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [false])]
    confirmed: Vec<bool>,
    #[arg(long, default_value_t = 5)]
    replicates: u32,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct CampaignArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [7u8])]
    sf: Vec<u8>,
    /// Code rate indices: 1 = 4/5, 2 = 4/7, 3 = 4/8.
    #[arg(long, value_delimiter = ',', default_values_t = [1u8, 3])]
    cr: Vec<u8>,
    #[arg(long, default_value_t = -20.0, allow_hyphen_values = true)]
    snr_min: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    snr_max: f64,
    #[arg(long, default_value_t = 1.0)]
    snr_step: f64,
    /// Minimum information bits per point.
    #[arg(long, default_value_t = 1_000_000)]
    bits: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "ber.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Samples written by `ber-campaign`.
    input: PathBuf,
    #[arg(long, default_value = "error_model.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct RefitArgs {
    /// Error-model CSV written by `fit`.
    input: PathBuf,
    /// Largest accepted cut-off difference in dB.
    #[arg(long, default_value_t = 1.5)]
    tolerance_db: f64,
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let cfg = args.config.build()?;
    let stem = args
        .stem
        .unwrap_or_else(|| format!("{}_{}", cfg.config_hash(), cfg.run_index));
    let paths = OutputPaths::in_dir(&args.out_dir, &stem);
    check_writable(&paths)
        .with_context(|| format!("output directory {}", args.out_dir.display()))?;
    let result = run_experiment(&cfg, true)?;
    emit_traces(&result, &paths)?;
    for (k, v) in summary_record(&result) {
        if !v.is_empty() && v != "0" {
            println!("{k:>28} {v}");
        }
    }
    println!("wrote {}", paths.summary.display());
    let violations = result.invariant_violations();
    for v in &violations {
        eprintln!("invariant violated: {v}");
    }
    Ok(if violations.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn run_sweep(args: SweepArgs) -> Result<ExitCode> {
    let base = args.config.build()?;
    let mut configs = Vec::new();
    for &period in &args.periods {
        for &gw in &args.gateways {
            for &confirmed in &args.confirmed {
                for &n in &args.devices {
                    let cfg = ExperimentConfig {
                        n_devices: n,
                        n_gateways: gw,
                        us_period_s: period,
                        us_confirmed: confirmed,
                        ..base.clone()
                    };
                    cfg.validate()?;
                    configs.push(cfg);
                }
            }
        }
    }
    let out =
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let points = match sweep(&configs, args.replicates) {
        Ok(p) => p,
        Err(e @ lorasim::Error::InvariantViolation(_)) => {
            eprintln!("{e}");
            return Ok(ExitCode::FAILURE);
        }
        Err(e) => return Err(e.into()),
    };
    for p in &points {
        let c = &p.config;
        let pdr = p
            .uplink_pdr()
            .map(|e| format!("{:.4} +- {:.4}", e.mean, e.stderr))
            .unwrap_or_default();
        println!(
            "n={:<6} gw={} period={:<6} confirmed={:<5} us_pdr={pdr}",
            c.n_devices, c.n_gateways, c.us_period_s, c.us_confirmed
        );
    }
    write_sweep_csv(&points, out)?;
    println!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn campaign(args: CampaignArgs) -> Result<ExitCode> {
    if args.snr_step.is_nan() || args.snr_step <= 0.0 || args.snr_max < args.snr_min {
        bail!("empty SNR range");
    }
    let steps = ((args.snr_max - args.snr_min) / args.snr_step + 1e-9).floor() as usize;
    let mut points = Vec::new();
    for &sf in &args.sf {
        let sf = SpreadingFactor::new(sf)?;
        for &cr in &args.cr {
            let cr = CodeRate::from_index(cr)?;
            for k in 0..=steps {
                points.push((sf, cr, args.snr_min + k as f64 * args.snr_step));
            }
        }
    }
    let out =
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let samples = run_campaign(&points, args.bits, &RngFactory::new(args.seed, 0))?;
    write_samples_csv(&samples, out)?;
    println!("wrote {} points to {}", samples.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn fit(args: FitArgs) -> Result<ExitCode> {
    let samples = read_samples_csv(
        File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?,
    )?;
    let mut keys: Vec<(u8, u8)> = samples
        .iter()
        .map(|s| (s.sf.value(), s.cr.index()))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    let mut entries = Vec::new();
    for (sf, cr) in keys {
        let group: Vec<_> = samples
            .iter()
            .filter(|s| s.sf.value() == sf && s.cr.index() == cr)
            .copied()
            .collect();
        let r = fit_samples(&group).with_context(|| format!("fitting SF{sf} CR{cr}"))?;
        println!(
            "SF{sf} CR{cr}: alpha {:.4} beta {:.4} r2 {:.4} cut-off {:.4} dB ({} points)",
            r.entry.alpha, r.entry.beta, r.r_squared, r.entry.snr_cutoff_db, r.points_used
        );
        entries.push(r.entry);
    }
    ErrorModel::from_entries(entries)?.write_csv(File::create(&args.out)?)?;
    println!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn refit_check(args: RefitArgs) -> Result<ExitCode> {
    let fitted = ErrorModel::from_csv_path(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let reference = ErrorModel::default();
    let mut ok = true;
    for e in fitted.entries() {
        let ErrorModelEntry { sf, cr, .. } = *e;
        let r = reference.entry(sf, cr)?;
        let delta = e.snr_cutoff_db - r.snr_cutoff_db;
        let pass = delta.abs() <= args.tolerance_db;
        ok &= pass;
        println!(
            "{sf} CR{}: alpha {:.2} vs {:.2}, beta {:.4} vs {:.4}, cut-off {:.2} vs {:.2} dB ({:+.2}) {}",
            cr.index(),
            e.alpha,
            r.alpha,
            e.beta,
            r.beta,
            e.snr_cutoff_db,
            r.snr_cutoff_db,
            delta,
            if pass { "ok" } else { "OUT OF TOLERANCE" }
        );
    }
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => run_sweep(a),
        Command::BerCampaign(a) => campaign(a),
        Command::Fit(a) => fit(a),
        Command::RefitCheck(a) => refit_check(a),
    }
}
