//! `biphoton`: simulate, bin, check, certify, and compute key rates for
//! two-basis photon-arrival data.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! precondition violated.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use biphoton_core::binning::{bin_timestamps, subspace_extract, BinningConfig};
use biphoton_core::bootstrap::BootstrapConfig;
use biphoton_core::error::{Error, Result};
use biphoton_core::io;
use biphoton_core::matrix::{BasisPair, CoincidenceMatrix};
use biphoton_core::mub;
use biphoton_core::pipeline::{run_pipeline, PipelineConfig};
use biphoton_core::security::{
    evaluate_rate, sweep_block_size, sweep_dimension, sweep_splitting, ProtocolConfig, RateInputs,
    Regime, SecurityParams, SweepTable,
};
use biphoton_core::sim::{simulate, SimConfig};
use biphoton_core::tags::{Basis, Channel, Party};
use biphoton_core::witness::{align_diagonal, TargetState, WitnessReport};

#[derive(Parser)]
#[command(
    name = "biphoton",
    version,
    about = "Joint temporal intensity analysis: binning, MUB checks, entanglement certification, and finite-size QKD key rates"
)]
struct Cli {
    /// RNG seed; required by `simulate`, used by `certify --bootstrap`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON configuration file (`simulate` and `report`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TagFormat {
    Binary,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepVarArg {
    Dimension,
    BlockSize,
    SplittingRatio,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Asymptotic,
    Collective,
    Coherent,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Regime {
        match r {
            RegimeArg::Asymptotic => Regime::Asymptotic,
            RegimeArg::Collective => Regime::Collective,
            RegimeArg::Coherent => Regime::Coherent,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the four detector streams of a simulated acquisition.
    Simulate {
        /// Tag file format.
        #[arg(long, value_enum, default_value = "binary")]
        format: TagFormat,
    },
    /// Pair and bin two channels of a tag file into a coincidence matrix.
    Bin {
        /// Tag file(s) holding the channels to pair.
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        /// Which basis pair to bin (TT, FF, TF, FT).
        #[arg(long, default_value = "TT")]
        basis_pair: String,
        #[arg(long, default_value_t = 800)]
        tau_ps: u64,
        #[arg(long, default_value_t = 1024)]
        n_bins: usize,
        #[arg(long, default_value_t = 0)]
        frame_origin_ps: i64,
        /// Maximum pairing delay; defaults to the frame length.
        #[arg(long)]
        pairing_window_ps: Option<u64>,
        /// Subspace dimension; defaults to the full frame.
        #[arg(long)]
        d: Option<usize>,
    },
    /// Cross-basis unbiasedness diagnostics on a TF or FT matrix.
    MubCheck {
        #[arg(long)]
        matrix: PathBuf,
        /// Subspace dimension; defaults to the matrix dimension.
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, default_value_t = mub::DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = mub::DEFAULT_DELTA_M_THRESHOLD)]
        delta_m_threshold: f64,
    },
    /// Entanglement certification from TT and FF coincidence matrices.
    Certify {
        #[arg(long)]
        tt: PathBuf,
        #[arg(long)]
        ff: PathBuf,
        /// Subspace dimension; defaults to the matrix dimension.
        #[arg(long)]
        d: Option<usize>,
        /// Bootstrap replicates for uncertainty (0 disables).
        #[arg(long, default_value_t = 0)]
        bootstrap: usize,
    },
    /// Finite-size key lengths (all regimes) from TT and FF matrices.
    Keyrate {
        #[arg(long)]
        tt: PathBuf,
        #[arg(long)]
        ff: PathBuf,
        #[arg(long)]
        d: Option<usize>,
        /// Block size N (total coincidence rounds).
        #[arg(long, default_value_t = 1e8)]
        n_total: f64,
        /// Splitting ratio q.
        #[arg(long, default_value_t = 0.5)]
        q: f64,
        #[arg(long, default_value_t = 1.1)]
        f_ec: f64,
        /// Coincidence rounds per second; measured from the matrices when absent.
        #[arg(long)]
        coincidence_rate: Option<f64>,
        /// JSON file overriding the default security parameters.
        #[arg(long)]
        security: Option<PathBuf>,
    },
    /// Key-rate sweep over dimension, block size, or splitting ratio.
    Sweep {
        #[arg(long)]
        tt: PathBuf,
        #[arg(long)]
        ff: PathBuf,
        #[arg(long, value_enum)]
        variable: SweepVarArg,
        /// Comma-separated grid values (dimensions, block sizes, or ratios).
        #[arg(long)]
        grid: String,
        #[arg(long, value_enum, default_value = "collective")]
        regime: RegimeArg,
        /// Dimension for block-size and splitting-ratio sweeps.
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, default_value_t = 1e8)]
        n_total: f64,
        #[arg(long, default_value_t = 0.5)]
        q: f64,
        #[arg(long, default_value_t = 1.1)]
        f_ec: f64,
        #[arg(long)]
        coincidence_rate: Option<f64>,
        #[arg(long)]
        security: Option<PathBuf>,
    },
    /// Run the full pipeline described by a JSON configuration.
    Report,
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

fn require_out(out: &Option<PathBuf>) -> Result<&PathBuf> {
    out.as_ref()
        .ok_or_else(|| Error::config("--out is required"))
}

fn load_channel_pair(
    paths: &[PathBuf],
    basis_pair: BasisPair,
) -> Result<(biphoton_core::TagStream, biphoton_core::TagStream)> {
    let mut streams = Vec::new();
    for p in paths {
        streams.extend(io::read_tags(p)?);
    }
    let (alice_basis, bob_basis) = match basis_pair {
        BasisPair::TT => (Basis::Time, Basis::Time),
        BasisPair::FF => (Basis::Frequency, Basis::Frequency),
        BasisPair::TF => (Basis::Time, Basis::Frequency),
        BasisPair::FT => (Basis::Frequency, Basis::Time),
    };
    let pick = |party: Party, basis: Basis| {
        streams
            .iter()
            .find(|s| s.channel() == Channel { party, basis })
            .cloned()
            .ok_or_else(|| Error::data(format!("no {:?} {:?} stream in the input", party, basis)))
    };
    Ok((
        pick(Party::Alice, alice_basis)?,
        pick(Party::Bob, bob_basis)?,
    ))
}

fn load_matrix_at(path: &Path, d: Option<usize>) -> Result<CoincidenceMatrix> {
    let m = io::read_matrix(path)?;
    match d {
        Some(d) if d != m.d() => subspace_extract(&m, d),
        _ => Ok(m),
    }
}

fn security_params(path: &Option<PathBuf>) -> Result<SecurityParams> {
    match path {
        Some(p) => read_config(p),
        None => Ok(SecurityParams::default()),
    }
}

fn rate_inputs_from(tt: &CoincidenceMatrix, ff: &CoincidenceMatrix) -> Result<RateInputs> {
    let (tt_aligned, _) = align_diagonal(&tt.normalize()?);
    let (ff_aligned, _) = align_diagonal(&ff.normalize()?);
    Ok(RateInputs {
        d: tt.d(),
        w: ff_aligned.diagonal_sum(),
        h_tt: biphoton_core::conditional_entropy(&tt_aligned),
        h_ff: biphoton_core::conditional_entropy(&ff_aligned),
    })
}

/// Coincidence rounds per second measured from the two matrices.
fn measured_rate(tt: &CoincidenceMatrix, ff: &CoincidenceMatrix) -> f64 {
    (tt.total() + ff.total()) as f64 / tt.duration_s()
}

fn parse_grid(grid: &str) -> Result<Vec<f64>> {
    grid.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("bad grid value {v:?}")))
        })
        .collect()
}

fn sweep_csv(path: &Path, table: &SweepTable) -> Result<()> {
    let rows: Vec<String> = table
        .points
        .iter()
        .map(|p| {
            let c = &p.components;
            format!(
                "{},{},{},{},{},{},{},{},{},{}",
                p.value,
                p.ell,
                p.rate_bps,
                c.w,
                c.mu,
                c.h_min,
                c.b_stat,
                c.lambda_ec,
                c.theta,
                c.log2_g
            )
        })
        .collect();
    io::write_csv(
        path,
        "variable,ell,rate_bps,w,mu,h_min,b_stat,lambda_ec,theta,log2_g",
        &rows,
    )
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { format } => {
            let config = cli
                .config
                .as_ref()
                .ok_or_else(|| Error::config("simulate needs --config <sim.json>"))?;
            let mut sim: SimConfig = read_config(config)?;
            let seed = cli
                .seed
                .ok_or_else(|| Error::config("simulate needs an explicit --seed"))?;
            sim.seed = seed;
            let out = require_out(&cli.out)?;
            let streams = simulate(&sim)?;
            let all = [
                &streams.alice_t,
                &streams.alice_f,
                &streams.bob_t,
                &streams.bob_f,
            ];
            match format {
                TagFormat::Binary => io::write_tags_binary(out, &all)?,
                TagFormat::Csv => io::write_tags_csv(out, &all)?,
            }
            eprintln!(
                "wrote {} ({} tags)",
                out.display(),
                all.iter().map(|s| s.len()).sum::<usize>()
            );
        }
        Command::Bin {
            input,
            basis_pair,
            tau_ps,
            n_bins,
            frame_origin_ps,
            pairing_window_ps,
            d,
        } => {
            let out = require_out(&cli.out)?;
            let bp = BasisPair::from_label(&basis_pair)?;
            let (a, b) = load_channel_pair(&input, bp)?;
            let window = pairing_window_ps.unwrap_or(tau_ps * n_bins as u64);
            let cfg = BinningConfig::new(tau_ps, n_bins, frame_origin_ps, window)?;
            let m = bin_timestamps(&a, &b, &cfg, d.unwrap_or(n_bins))?;
            io::write_matrix(out, &m)?;
            eprintln!(
                "wrote {} ({} coincidences, d={})",
                out.display(),
                m.total(),
                m.d()
            );
        }
        Command::MubCheck {
            matrix,
            d,
            alpha,
            delta_m_threshold,
        } => {
            let m = load_matrix_at(&matrix, d)?;
            let report = mub::assess(&m, alpha, delta_m_threshold)?;
            let text = serde_json::to_string_pretty(&report)?;
            match &cli.out {
                Some(out) => io::write_json(out, &report)?,
                None => println!("{text}"),
            }
        }
        Command::Certify {
            tt,
            ff,
            d,
            bootstrap,
        } => {
            let tt = load_matrix_at(&tt, d)?;
            let ff = load_matrix_at(&ff, d)?;
            let target = TargetState::maximally_entangled(tt.d())?;
            let report = if bootstrap > 0 {
                let cfg = BootstrapConfig {
                    n_samples: bootstrap,
                    seed: cli.seed.unwrap_or(0),
                    ..BootstrapConfig::default()
                };
                WitnessReport::compute_with_bootstrap(&tt, &ff, &target, &cfg)?
            } else {
                WitnessReport::compute(&tt, &ff, &target)?
            };
            match &cli.out {
                Some(out) => io::write_json(out, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
        Command::Keyrate {
            tt,
            ff,
            d,
            n_total,
            q,
            f_ec,
            coincidence_rate,
            security,
        } => {
            let tt = load_matrix_at(&tt, d)?;
            let ff = load_matrix_at(&ff, d)?;
            let sec = security_params(&security)?;
            let inputs = rate_inputs_from(&tt, &ff)?;
            let proto = ProtocolConfig {
                n_total,
                q,
                d: inputs.d,
                f_ec,
                coincidence_rate: coincidence_rate.unwrap_or_else(|| measured_rate(&tt, &ff)),
            };
            let mut results = std::collections::BTreeMap::new();
            for regime in [Regime::Asymptotic, Regime::Collective, Regime::Coherent] {
                let r = evaluate_rate(&proto, &sec, &inputs, regime)?;
                results.insert(format!("{regime:?}").to_lowercase(), r);
            }
            match &cli.out {
                Some(out) => io::write_json(out, &results)?,
                None => println!("{}", serde_json::to_string_pretty(&results)?),
            }
        }
        Command::Sweep {
            tt,
            ff,
            variable,
            grid,
            regime,
            d,
            n_total,
            q,
            f_ec,
            coincidence_rate,
            security,
        } => {
            let out = require_out(&cli.out)?;
            let sec = security_params(&security)?;
            let tt_full = io::read_matrix(&tt)?;
            let ff_full = io::read_matrix(&ff)?;
            let rate = coincidence_rate.unwrap_or_else(|| measured_rate(&tt_full, &ff_full));
            let grid = parse_grid(&grid)?;
            let regime: Regime = regime.into();
            let table = match variable {
                SweepVarArg::Dimension => {
                    let data: Vec<RateInputs> = grid
                        .iter()
                        .map(|&v| {
                            let d = v as usize;
                            rate_inputs_from(
                                &subspace_extract(&tt_full, d)?,
                                &subspace_extract(&ff_full, d)?,
                            )
                        })
                        .collect::<Result<_>>()?;
                    let template = ProtocolConfig {
                        n_total,
                        q,
                        d: data.first().map(|r| r.d).unwrap_or(2),
                        f_ec,
                        coincidence_rate: rate,
                    };
                    sweep_dimension(&data, &template, &sec, regime)?
                }
                SweepVarArg::BlockSize | SweepVarArg::SplittingRatio => {
                    let tt_m = match d {
                        Some(d) if d != tt_full.d() => subspace_extract(&tt_full, d)?,
                        _ => tt_full.clone(),
                    };
                    let ff_m = match d {
                        Some(d) if d != ff_full.d() => subspace_extract(&ff_full, d)?,
                        _ => ff_full.clone(),
                    };
                    let inputs = rate_inputs_from(&tt_m, &ff_m)?;
                    let template = ProtocolConfig {
                        n_total,
                        q,
                        d: inputs.d,
                        f_ec,
                        coincidence_rate: rate,
                    };
                    match variable {
                        SweepVarArg::BlockSize => {
                            sweep_block_size(&inputs, &grid, &template, &sec, regime)?
                        }
                        _ => sweep_splitting(&inputs, &grid, &template, &sec, regime)?,
                    }
                }
            };
            sweep_csv(out, &table)?;
            let best = table.best();
            eprintln!(
                "wrote {}; optimum at {} with {:.4e} bits/s",
                out.display(),
                best.value,
                best.rate_bps
            );
        }
        Command::Report => {
            let config = cli
                .config
                .as_ref()
                .ok_or_else(|| Error::config("report needs --config <pipeline.json>"))?;
            let mut cfg: PipelineConfig = read_config(config)?;
            if let Some(out) = &cli.out {
                cfg.out_dir = out.clone();
            }
            if let Some(seed) = cli.seed {
                if let biphoton_core::pipeline::InputSpec::Simulate { sim } = &mut cfg.input {
                    sim.seed = seed;
                }
            }
            let bundle = run_pipeline(&cfg)?;
            if !bundle.failures.is_empty() {
                for f in &bundle.failures {
                    eprintln!(
                        "stage {} failed{}: {}",
                        f.stage,
                        f.d.map(|d| format!(" at d={d}")).unwrap_or_default(),
                        f.message
                    );
                }
                return Err(Error::data(format!(
                    "{} pipeline stage(s) failed; partial results in {}",
                    bundle.failures.len(),
                    cfg.out_dir.display()
                )));
            }
            eprintln!("report bundle written to {}", cfg.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
