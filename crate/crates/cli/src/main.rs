use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use csifb::harness::{self, BasisChoice, ExperimentConfig, QuantizerChoice, ResultTable, Scheme};
use csifb::quantization::{mqe, train_lbg, LbgConfig};

/// Compressed CSI feedback experiments.
#[derive(Debug, Parser)]
#[command(name = "csifb", version, about)]
struct Cli {
    /// Base seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trials per grid point; overrides the config.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output path; overrides the config. Sweeps print CSV to stdout without one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalized-MSE sweep over the compression-ratio grid.
    MseSweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Multi-user sum-rate sweep over the SNR grid.
    RateSweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Trains an LBG codebook for one arm's feedback vectors.
    TrainCodebook {
        #[arg(long)]
        config: PathBuf,
        /// Codebook size in bits; defaults to the largest configured level.
        #[arg(long)]
        bits: Option<u32>,
        /// Arm index; defaults to the first LBG arm.
        #[arg(long)]
        arm: Option<usize>,
        /// Feedback length; defaults to the first grid point.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 0)]
        d_index: usize,
        #[arg(long, default_value_t = 0)]
        drop: usize,
        #[arg(long, default_value_t = 0)]
        user: usize,
    },
    /// Writes a sparsifying basis file.
    GenBasis {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = BasisArg::Klt)]
        basis: BasisArg,
        #[arg(long, default_value_t = 0)]
        d_index: usize,
        #[arg(long, default_value_t = 0)]
        drop: usize,
        #[arg(long, default_value_t = 0)]
        user: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BasisArg {
    Klt,
    Dct,
}

fn load_config(path: &Path, cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.trials = trials;
    }
    if let Some(out) = &cli.out {
        cfg.output = Some(out.clone());
    }
    Ok(cfg)
}

fn emit(table: &ResultTable, out: Option<&Path>) -> Result<()> {
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    match out {
        Some(path) => {
            let sidecar = table
                .save(path)
                .with_context(|| format!("writing {}", path.display()))?;
            eprintln!(
                "wrote {} rows to {} (config: {})",
                table.rows.len(),
                path.display(),
                sidecar.display()
            );
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            table.write_csv(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn required_out(cfg: &ExperimentConfig) -> Result<PathBuf> {
    match &cfg.output {
        Some(p) => Ok(p.clone()),
        None => bail!("--out is required for this command"),
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::MseSweep { config } => {
            let cfg = load_config(config, &cli)?;
            let table = harness::run_mse_sweep(&cfg)?;
            emit(&table, cfg.output.as_deref())
        }
        Command::RateSweep { config } => {
            let cfg = load_config(config, &cli)?;
            let table = harness::run_sum_rate_sweep(&cfg)?;
            emit(&table, cfg.output.as_deref())
        }
        Command::TrainCodebook {
            config,
            bits,
            arm,
            m,
            d_index,
            drop,
            user,
        } => {
            let cfg = load_config(config, &cli)?;
            let out = required_out(&cfg)?;
            let arm = match arm {
                Some(a) => *a,
                None => cfg
                    .arms
                    .iter()
                    .position(|a| a.quantizer == QuantizerChoice::Lbg)
                    .unwrap_or(0),
            };
            let arm_cfg = cfg
                .arms
                .get(arm)
                .with_context(|| format!("arm index {arm} out of range ({} arms)", cfg.arms.len()))?;
            let bits = match bits {
                Some(b) => *b,
                None => arm_cfg
                    .bits
                    .as_ref()
                    .unwrap_or(&cfg.bits)
                    .iter()
                    .copied()
                    .max()
                    .context("no --bits given and the config lists no bit levels")?,
            };
            let m = match (m, arm_cfg.scheme) {
                (_, Scheme::Perfect) => cfg.n()?,
                (Some(m), _) => *m,
                (None, _) => *cfg.m_grid()?.first().context("no --m given and the config has no eta/m grid")?,
            };
            let training = harness::quantizer_training_set(&cfg, arm, m, *d_index, *drop, *user)?;
            let mut lbg = LbgConfig::new(bits);
            lbg.epsilon = cfg.lbg_epsilon;
            let cb = train_lbg(&training, &lbg)?;
            cb.save(&out).with_context(|| format!("writing {}", out.display()))?;
            eprintln!(
                "wrote {}-bit codebook (dim {}, training MQE {:.6}) to {}",
                cb.bits(),
                cb.dim(),
                mqe(&cb, &training)?,
                out.display()
            );
            Ok(())
        }
        Command::GenBasis {
            config,
            basis,
            d_index,
            drop,
            user,
        } => {
            let cfg = load_config(config, &cli)?;
            let out = required_out(&cfg)?;
            let b = match basis {
                BasisArg::Dct => csifb::bases::dct2d_basis(cfg.geometry.n_r, cfg.geometry.n_t()?)?,
                BasisArg::Klt => {
                    let d = *cfg
                        .geometry
                        .d_over_lambda
                        .get(*d_index)
                        .with_context(|| format!("d index {d_index} out of range"))?;
                    if *user >= cfg.n_users {
                        bail!("user {user} out of range (n_users = {})", cfg.n_users);
                    }
                    let spec = cfg.geometry.correlation_spec(d)?;
                    harness::user_setup(&cfg, &spec, *drop, *user)?.klt
                }
            };
            b.save(&out).with_context(|| format!("writing {}", out.display()))?;
            let label = match basis {
                BasisArg::Klt => BasisChoice::Klt.label(),
                BasisArg::Dct => BasisChoice::Dct.label(),
            };
            eprintln!("wrote {label} basis (N = {}) to {}", b.dim(), out.display());
            Ok(())
        }
    }
}
