use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cellfree::codec::{self, Dataset};
use cellfree::learned::ModelKind;
use cellfree::pipeline::{self, BenchTarget, GenerateOptions, ModelBank, Strategy};
use cellfree::precoding::Precoder;
use cellfree::wmmse::{self, Objective};
use cellfree::{Error, ExperimentConfig};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cellfree", version, about = "Power allocation for cell-free massive MIMO downlink")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Sumse,
    Pf,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Sumse => Objective::SumSe,
            ObjectiveArg::Pf => Objective::Pf,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecoderArg {
    Mr,
    Rzf,
}

impl From<PrecoderArg> for Precoder {
    fn from(p: PrecoderArg) -> Self {
        match p {
            PrecoderArg::Mr => Precoder::Mr,
            PrecoderArg::Rzf => Precoder::Rzf,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Ddnn,
    DdnnSi,
    Cdnn,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Ddnn => ModelKind::Ddnn,
            KindArg::DdnnSi => ModelKind::DdnnSi,
            KindArg::Cdnn => ModelKind::Cdnn,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve drops with WMMSE and store them as a training set.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Master seed; defaults to the network seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: u64,
        #[arg(long, value_enum, default_value = "sumse")]
        objective: ObjectiveArg,
        #[arg(long, value_enum, default_value = "rzf")]
        precoder: PrecoderArg,
        /// Store the full SE statistics with every sample, not just their digest.
        #[arg(long)]
        full_params: bool,
        /// Continue an interrupted run in place.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model per AP or cluster on a dataset.
    Train {
        /// Dataset produced by `generate`.
        dataset: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Overrides the training seed of the dataset's config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for model files and loss curves.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score allocation strategies on fresh test drops.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding trained models.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Comma-separated strategies; defaults to every runnable one.
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<String>,
        /// Number of test drops.
        #[arg(long, default_value_t = 200)]
        samples: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "rzf")]
        precoder: PrecoderArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time WMMSE against learned inference.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        models: Option<PathBuf>,
        /// Comma-separated subset of wmmse-admm, ddnn, ddnn-si, cdnn, noop; defaults to all.
        #[arg(long, value_delimiter = ',')]
        targets: Vec<String>,
        #[arg(long, default_value_t = 100)]
        repeats: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV output; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a single drop and write its allocation and objective trace.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "sumse")]
        objective: ObjectiveArg,
        #[arg(long, value_enum, default_value = "rzf")]
        precoder: PrecoderArg,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the header of a dataset, model, statistics or allocation file.
    Inspect { file: PathBuf },
}

enum Failure {
    Data(Error),
    Degenerate(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

fn check_degeneracy(what: &str, fraction: f64, cfg: &ExperimentConfig) -> Result<(), Failure> {
    if fraction > cfg.max_degenerate_fraction {
        return Err(Failure::Degenerate(format!(
            "{what}: {:.1}% degenerate samples exceeds the {:.1}% limit",
            100.0 * fraction,
            100.0 * cfg.max_degenerate_fraction
        )));
    }
    Ok(())
}

fn load_bank(dir: Option<&Path>, kinds: &[ModelKind]) -> Result<ModelBank, Error> {
    let mut bank = ModelBank::default();
    if let Some(dir) = dir {
        for &k in kinds {
            match pipeline::load_models(dir, k) {
                Ok(m) => bank.insert(k, m),
                Err(Error::MissingModel(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(bank)
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Generate { config, seed, samples, objective, precoder, full_params, resume, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let opts = GenerateOptions {
                samples,
                objective: objective.into(),
                precoder: precoder.into(),
                master_seed: seed.unwrap_or(cfg.network.seed),
                full_params,
                resume,
            };
            let report = pipeline::generate(&cfg, &opts, &out)?;
            println!(
                "wrote {} samples to {} ({} resumed, {} degenerate, max imaginary residue {:.2}%)",
                report.written,
                out.display(),
                report.resumed_from,
                report.degenerate,
                100.0 * report.max_imag_residue
            );
            check_degeneracy("generate", report.degenerate_fraction(), &cfg)?;
        }
        Command::Train { dataset, kind, seed, out } => {
            let mut data = Dataset::read(&dataset)?;
            if let Some(s) = seed {
                data.header.config.train.seed = s;
            }
            let kind = ModelKind::from(kind);
            let trained = pipeline::train_models(&data, kind)?;
            pipeline::save_models(&out, &trained)?;
            for (g, (m, r)) in trained.iter().enumerate() {
                println!(
                    "{} {g:02}: APs {:?}, {} parameters, final train loss {:.3e}, validation {:.3e}",
                    kind.name(),
                    m.aps,
                    m.mlp.param_count(),
                    r.train_loss.last().copied().unwrap_or(f64::NAN),
                    r.validation_loss.last().copied().unwrap_or(f64::NAN)
                );
            }
        }
        Command::Evaluate { config, models, strategies, samples, seed, precoder, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let bank = load_bank(models.as_deref(), &ModelKind::ALL)?;
            let strategies: Vec<Strategy> = if strategies.is_empty() {
                Strategy::ALL
                    .into_iter()
                    .filter(|s| match s {
                        Strategy::Learned(k) => bank.get(*k).is_ok(),
                        _ => true,
                    })
                    .collect()
            } else {
                strategies.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
            };
            let report =
                pipeline::evaluate(&cfg, precoder.into(), &strategies, &bank, samples, seed.unwrap_or(cfg.network.seed))?;
            report.write_csv(&out)?;
            println!("{:<12} {:>14} {:>10} {:>12}", "strategy", "mean total SE", "p10 UE SE", "mean time s");
            for r in &report.results {
                println!(
                    "{:<12} {:>14.4} {:>10.4} {:>12.3e}",
                    r.strategy.name(),
                    r.mean_total_se(),
                    r.percentile(0.1),
                    r.mean_seconds()
                );
            }
            for r in &report.results {
                check_degeneracy(r.strategy.name(), r.degenerate as f64 / samples.max(1) as f64, &cfg)?;
            }
        }
        Command::Bench { config, models, targets, repeats, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let bank = load_bank(models.as_deref(), &ModelKind::ALL)?;
            let targets: Vec<BenchTarget> = if targets.is_empty() {
                BenchTarget::ALL.to_vec()
            } else {
                targets.iter().map(|t| t.parse()).collect::<Result<_, _>>()?
            };
            let rows = pipeline::bench(&cfg, &bank, &targets, repeats.max(1), seed.unwrap_or(cfg.network.seed))?;
            match out {
                Some(path) => pipeline::write_bench_csv(std::fs::File::create(path).map_err(Error::from)?, &rows)?,
                None => pipeline::write_bench_csv(std::io::stdout().lock(), &rows)?,
            }
        }
        Command::Solve { config, seed, objective, precoder, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            std::fs::create_dir_all(&out).map_err(Error::from)?;
            let drop = pipeline::simulate_drop(&cfg, seed, precoder.into())?;
            let result = pipeline::solve_drop(&cfg, &drop, objective.into())?;
            let trace = std::fs::File::create(out.join("trace.csv")).map_err(Error::from)?;
            wmmse::write_trace_csv(std::io::BufWriter::new(trace), &result.trace)?;
            codec::write_file(out.join("params.cfse"), &codec::encode_params(&drop.params))?;
            codec::write_file(out.join("allocation.cfpa"), &codec::encode_allocation(&result.allocation))?;
            let se = cellfree::precoding::compute_se(&drop.params, &result.allocation)?;
            println!(
                "{} iterations, converged: {}, utility {:.6}, total SE {:.4} bit/s/Hz",
                result.iterations(),
                result.converged,
                result.final_utility,
                se.iter().sum::<f64>()
            );
        }
        Command::Inspect { file } => inspect(&file)?,
    }
    Ok(())
}

fn inspect(path: &Path) -> Result<(), Error> {
    let bytes = std::fs::read(path)?;
    match bytes.get(..4) {
        Some(b"CFDS") => {
            let (h, count) = Dataset::read_header(path)?;
            let n = &h.config.network;
            println!("dataset, {count} samples");
            println!("objective {}, precoder {}, full statistics: {}", h.objective.name(), h.precoder.name(), h.full_params);
            println!("L = {}, K = {}, N = {}, {} realizations per drop", n.num_aps, n.num_ues, n.antennas, h.config.realizations);
        }
        Some(b"CFNN") => {
            let m = codec::decode_model(&bytes)?;
            let sizes: Vec<String> = std::iter::once(m.mlp.input_dim())
                .chain(m.mlp.layers.iter().map(|l| l.outputs()))
                .map(|s| s.to_string())
                .collect();
            println!("{} model for APs {:?}, K = {}", m.kind.name(), m.aps, m.num_ues);
            println!("layers {} ({} parameters)", sizes.join(" -> "), m.mlp.param_count());
        }
        Some(b"CFSE") => {
            let p = codec::decode_params(&bytes)?;
            println!("SE statistics, K = {}, L = {}, {} realizations", p.num_ues(), p.num_aps(), p.n_real);
            println!("noise {:.3e} W, pre-log {:.4}, digest {:016x}", p.sigma2, p.prelog, codec::params_digest(&p));
        }
        Some(b"CFPA") => {
            let a = codec::decode_allocation(&bytes)?;
            println!("allocation, K = {}, L = {}, budget {} W", a.num_ues(), a.num_aps(), a.budget());
            let used: Vec<String> = (0..a.num_aps()).map(|l| format!("{:.4}", a.ap_power(l))).collect();
            println!("per-AP power: {}", used.join(" "));
        }
        _ => return Err(Error::Format(format!("{} is not a recognized file", path.display()))),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
        Err(Failure::Degenerate(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
