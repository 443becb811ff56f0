use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cfmimo::harness::{
    self, nmse_sweep, se_sweep, service_map, summarize_nmse, summarize_se, write_nmse_csv,
    write_se_csv, write_service_map_csv, write_summary_csv, Scheme, SweepGrid,
};
use cfmimo::pilots::PilotStrategy;
use cfmimo::SystemConfig;

/// Cell-free massive MIMO experiments.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; unset fields take the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config override `field=value` (TOML syntax for the value); repeatable.
    #[arg(long = "set", value_name = "FIELD=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Per-trial NMSE of pilot strategies over a UE-count grid.
    NmseSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Comma-separated K = L values.
        #[arg(long, value_delimiter = ',', default_value = "4,8,12,16,20")]
        ues: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "2,8")]
        taus: Vec<usize>,
        /// Pilot strategies; all four if omitted.
        #[arg(long, value_delimiter = ',')]
        scheme: Vec<String>,
        /// Also write per-point averages here.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Per-trial SE of full schemes over a UE-count grid.
    SeSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, value_delimiter = ',', default_value = "4,8,12,16,20")]
        ues: Vec<usize>,
        /// Schemes as `pilot+transmission`.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "heap_fd+zf_rd,heap_fd+zf_nrd,rand_fd+zf_rd,heap_hd+zf_rd"
        )]
        scheme: Vec<String>,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// AP service density and AP/DL-UE ratios for one draw.
    ServiceMap {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// One scheme on one trial, printed as key/value lines.
    SingleRun {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "heap_fd+zf_rd")]
        scheme: String,
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Write the optimizer trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<SystemConfig> {
    let base = match &common.config {
        Some(path) => std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?,
        None => SystemConfig::default().to_toml_string(),
    };
    let mut table: toml::Table = toml::from_str(&base).context("parsing config")?;
    for item in &common.overrides {
        let Some((key, value)) = item.split_once('=') else {
            bail!("override {item:?} is not FIELD=VALUE");
        };
        let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
            Ok(mut t) => t.remove("v").expect("key just parsed"),
            Err(_) => toml::Value::String(value.to_string()),
        };
        table.insert(key.trim().to_string(), value);
    }
    if let Some(seed) = common.seed {
        table.insert("rng_seed".into(), toml::Value::Integer(seed as i64));
    }
    let cfg = SystemConfig::from_toml_str(&toml::to_string(&table)?)?;
    Ok(cfg)
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::NmseSweep {
            common,
            trials,
            ues,
            taus,
            scheme,
            summary,
        } => {
            let cfg = load_config(&common)?;
            let strategies = if scheme.is_empty() {
                PilotStrategy::ALL.to_vec()
            } else {
                scheme.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
            };
            let grid = SweepGrid {
                ue_counts: ues,
                taus,
                trials,
            };
            let records = nmse_sweep(&cfg, &grid, &strategies)?;
            write_nmse_csv(sink(&common.out)?, &cfg, &records)?;
            if let Some(path) = summary {
                write_summary_csv(sink(&Some(path))?, &cfg, &summarize_nmse(&records))?;
            }
        }
        Command::SeSweep {
            common,
            trials,
            ues,
            scheme,
            summary,
        } => {
            let cfg = load_config(&common)?;
            let schemes: Vec<Scheme> = scheme.iter().map(|s| s.parse()).collect::<Result<_, _>>()?;
            let grid = SweepGrid {
                ue_counts: ues,
                taus: vec![cfg.pilot_len],
                trials,
            };
            let records = se_sweep(&cfg, &grid, &schemes)?;
            write_se_csv(sink(&common.out)?, &cfg, &records)?;
            if let Some(path) = summary {
                write_summary_csv(sink(&Some(path))?, &cfg, &summarize_se(&records))?;
            }
        }
        Command::ServiceMap { common, trial } => {
            let cfg = load_config(&common)?;
            let map = service_map(&cfg, trial)?;
            write_service_map_csv(sink(&common.out)?, &cfg, &map)?;
            eprintln!("nearest AP serves {:.1}% of DL UEs", 100.0 * map.nearest_served);
        }
        Command::SingleRun {
            common,
            scheme,
            trial,
            trace,
        } => {
            let cfg = load_config(&common)?;
            let scheme: Scheme = scheme.parse()?;
            let rec = harness::run_trial(&cfg, scheme, trial)?;
            let mut out = sink(&common.out)?;
            writeln!(out, "config_sha256 = {}", harness::config_hash(&cfg))?;
            writeln!(out, "scheme = {}", rec.scheme)?;
            writeln!(out, "feasible = {}", rec.feasible)?;
            writeln!(out, "f_se_bits = {:.6}", rec.f_se)?;
            writeln!(out, "effective_se_bits = {:.6}", rec.effective_se)?;
            writeln!(out, "effective_se_true_bits = {:.6}", rec.effective_se_true)?;
            writeln!(out, "min_rate_bits = {:.6}", rec.min_rate_bits)?;
            writeln!(out, "association_density = {:.4}", rec.association_density)?;
            writeln!(out, "sca_iterations = {}", rec.sca_iterations)?;
            writeln!(out, "converged = {}", rec.converged)?;
            if !rec.note.is_empty() {
                writeln!(out, "note = {}", rec.note)?;
            }
            if let Some(path) = trace {
                let state = harness::optimizer_state(&cfg, scheme, trial)?;
                state.write_trace_csv(sink(&Some(path))?)?;
            }
        }
    }
    Ok(())
}
