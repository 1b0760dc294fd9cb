//! End-to-end runs: dataset generation, training, evaluation and timing.

use std::hint::black_box;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::codec::{self, Dataset, DatasetHeader, DatasetSample, DatasetWriter, SolveSummary};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::heuristic;
use crate::learned::{self, cluster_partition, fit_group, group_features, group_labels, LearnedModel, ModelKind, TrainReport};
use crate::network::{ap_layout, build_statistics, drop_scenario, Scenario};
use crate::pilots::{assign_pilots, mmse_estimate, sample_channels, PilotAssignment};
use crate::precoding::{compute_precoders, compute_se, estimate_se_parameters, PowerAllocation, Precoder, SeParameters};
use crate::seeds::{self, Stream};
use crate::wmmse::{wmmse_solve, Objective, SolverConfig, WmmseOutcome};

/// One UE drop with the statistics every allocator is evaluated on.
#[derive(Debug, Clone)]
pub struct SimulatedDrop {
    pub seed: u64,
    pub scenario: Scenario,
    pub beta: DMatrix<f64>,
    pub pilots: PilotAssignment,
    pub params: SeParameters,
    /// Zero precoders encountered while estimating `params`.
    pub degenerate_precoders: usize,
}

pub fn simulate_drop(cfg: &ExperimentConfig, seed: u64, precoder: Precoder) -> Result<SimulatedDrop> {
    let net = &cfg.network;
    let scenario = drop_scenario(net, seed)?;
    let stats = build_statistics(net, &scenario)?;
    let pilots = assign_pilots(&stats.beta, net.tau_p)?;
    let raw = sample_channels(&stats, cfg.realizations, seeds::stream_seed(seed, Stream::Channels));
    let batch = mmse_estimate(&raw, &stats, &pilots, net, seeds::stream_seed(seed, Stream::Noise))?;
    let w = compute_precoders(&batch, precoder, net.pilot_power_w, net.noise_power());
    let params = estimate_se_parameters(&batch, &w, net)?;
    Ok(SimulatedDrop { seed, scenario, beta: stats.beta, pilots, params, degenerate_precoders: w.degenerate })
}

pub fn solver_for(cfg: &ExperimentConfig, objective: Objective) -> SolverConfig {
    SolverConfig { objective, ..cfg.solver }
}

/// WMMSE from the configured starting point.
pub fn solve_drop(cfg: &ExperimentConfig, drop: &SimulatedDrop, objective: Objective) -> Result<WmmseOutcome> {
    let solver = solver_for(cfg, objective);
    let net = &cfg.network;
    let init = solver.initial_allocation(&drop.beta, net.v_exponent, net.max_dl_power_w)?;
    wmmse_solve(&drop.params, &solver, &init)
}

pub fn summarize(out: &WmmseOutcome) -> SolveSummary {
    let max_decrease = out.trace.windows(2).map(|w| w[0].utility - w[1].utility).fold(0.0, f64::max);
    SolveSummary {
        iterations: out.iterations(),
        converged: out.converged,
        initial_utility: out.trace[0].utility,
        final_utility: out.final_utility,
        max_decrease,
        backtracks: out.backtracks,
        subproblem_exhausted: out.subproblem_exhausted,
        flipped: out.flipped,
        clamp_events: out.clamp_events,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerateOptions {
    pub samples: u64,
    pub objective: Objective,
    pub precoder: Precoder,
    pub master_seed: u64,
    pub full_params: bool,
    /// Continue an existing file instead of starting over.
    pub resume: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GenerateReport {
    pub written: u64,
    pub resumed_from: u64,
    /// Samples whose solve did not converge or hit the inner iteration limit.
    pub degenerate: u64,
    /// Largest per-UE imaginary residue of `a` among the samples solved in this run.
    pub max_imag_residue: f64,
}

impl GenerateReport {
    pub fn degenerate_fraction(&self) -> f64 {
        if self.written == 0 {
            0.0
        } else {
            self.degenerate as f64 / self.written as f64
        }
    }
}

fn is_degenerate(s: &SolveSummary) -> bool {
    !s.converged || s.subproblem_exhausted > 0
}

fn make_sample(cfg: &ExperimentConfig, opts: &GenerateOptions, index: u64) -> Result<(DatasetSample, f64)> {
    let seed = seeds::sample_seed(seeds::TRAIN_NAMESPACE, opts.master_seed, index);
    let drop = simulate_drop(cfg, seed, opts.precoder)?;
    let out = solve_drop(cfg, &drop, opts.objective)?;
    let summary = summarize(&out);
    if is_degenerate(&summary) {
        log::warn!("sample {index}: solver stopped after {} iterations without converging", summary.iterations);
    }
    let residue = drop.params.imag_residue;
    let sample = DatasetSample {
        index,
        seed,
        params_digest: codec::params_digest(&drop.params),
        params: opts.full_params.then(|| drop.params.clone()),
        beta: drop.beta,
        pilots: drop.pilots.pilots,
        mu_star: out.allocation.into_mu(),
        summary,
    };
    Ok((sample, residue))
}

const GENERATE_CHUNK: u64 = 64;

/// Writes `opts.samples` solved drops to `path`, in index order.
pub fn generate(cfg: &ExperimentConfig, opts: &GenerateOptions, path: &Path) -> Result<GenerateReport> {
    cfg.validate()?;
    let header = DatasetHeader {
        config: cfg.clone(),
        objective: opts.objective,
        precoder: opts.precoder,
        full_params: opts.full_params,
    };
    let (mut writer, existing) = if opts.resume && path.exists() {
        DatasetWriter::resume(path, &header)?
    } else {
        (DatasetWriter::create(path, &header)?, Vec::new())
    };
    let mut report = GenerateReport {
        resumed_from: writer.count(),
        degenerate: existing.iter().filter(|s| is_degenerate(&s.summary)).count() as u64,
        ..GenerateReport::default()
    };
    let mut next = writer.count();
    while next < opts.samples {
        let end = (next + GENERATE_CHUNK).min(opts.samples);
        let chunk: Vec<(DatasetSample, f64)> =
            (next..end).into_par_iter().map(|i| make_sample(cfg, opts, i)).collect::<Result<_>>()?;
        for (s, residue) in &chunk {
            report.degenerate += is_degenerate(&s.summary) as u64;
            report.max_imag_residue = report.max_imag_residue.max(*residue);
            writer.append(s)?;
        }
        writer.commit()?;
        log::info!("generated {end}/{} samples", opts.samples);
        next = end;
    }
    writer.commit()?;
    if report.max_imag_residue > 0.01 {
        log::warn!(
            "imaginary part of the signal gains reached {:.2}% of their modulus; more realizations reduce it",
            100.0 * report.max_imag_residue
        );
    }
    report.written = writer.count();
    Ok(report)
}

/// AP groups served by one model each.
pub fn model_groups(cfg: &ExperimentConfig, kind: ModelKind) -> Result<Vec<Vec<usize>>> {
    match kind {
        ModelKind::Cdnn => cluster_partition(&ap_layout(&cfg.network)?, cfg.cluster_size),
        _ => Ok((0..cfg.network.num_aps).map(|l| vec![l]).collect()),
    }
}

/// Trains one model per AP (distributed kinds) or per cluster, in parallel.
pub fn train_models(dataset: &Dataset, kind: ModelKind) -> Result<Vec<(LearnedModel, TrainReport)>> {
    let cfg = &dataset.header.config;
    let net = &cfg.network;
    if dataset.samples.is_empty() {
        return Err(Error::Dimension("dataset has no samples".into()));
    }
    for s in &dataset.samples {
        if s.beta.shape() != (net.num_ues, net.num_aps) {
            return Err(Error::Dimension(format!("sample {} does not match the dataset header", s.index)));
        }
    }
    let groups = model_groups(cfg, kind)?;
    groups
        .into_par_iter()
        .enumerate()
        .map(|(g, aps)| {
            let features: Vec<Vec<f64>> = dataset
                .samples
                .iter()
                .map(|s| group_features(kind, &s.beta, net.v_exponent, net.max_dl_power_w, &aps))
                .collect();
            let labels: Vec<Vec<f64>> = dataset.samples.iter().map(|s| group_labels(&s.mu_star, &aps)).collect();
            fit_group(kind, aps, net.num_ues, &features, &labels, &cfg.train, seeds::derive(cfg.train.seed, g as u64))
        })
        .collect()
}

fn model_stem(kind: ModelKind, group: usize) -> String {
    format!("{}-{group:02}", kind.name())
}

pub fn save_models(dir: &Path, trained: &[(LearnedModel, TrainReport)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (g, (model, report)) in trained.iter().enumerate() {
        let stem = model_stem(model.kind, g);
        codec::write_file(dir.join(format!("{stem}.cfnn")), &codec::encode_model(model))?;
        let mut w = csv::Writer::from_path(dir.join(format!("{stem}-loss.csv")))?;
        w.write_record(["epoch", "train_loss", "validation_loss"])?;
        for (e, t) in report.train_loss.iter().enumerate() {
            let v = report.validation_loss.get(e).map_or(String::new(), |v| format!("{v:.9e}"));
            w.write_record([e.to_string(), format!("{t:.9e}"), v])?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn load_models(dir: &Path, kind: ModelKind) -> Result<Vec<LearnedModel>> {
    let mut models = Vec::new();
    loop {
        let path = dir.join(format!("{}.cfnn", model_stem(kind, models.len())));
        if !path.exists() {
            break;
        }
        let m = codec::decode_model(&std::fs::read(&path)?)?;
        if m.kind != kind {
            return Err(Error::Format(format!("{} holds a {} model", path.display(), m.kind.name())));
        }
        models.push(m);
    }
    if models.is_empty() {
        return Err(Error::MissingModel(format!("{} in {}", kind.name(), dir.display())));
    }
    Ok(models)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    WmmseSumSe,
    WmmsePf,
    Learned(ModelKind),
    Heuristic,
    Equal,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::WmmseSumSe,
        Strategy::WmmsePf,
        Strategy::Learned(ModelKind::Ddnn),
        Strategy::Learned(ModelKind::DdnnSi),
        Strategy::Learned(ModelKind::Cdnn),
        Strategy::Heuristic,
        Strategy::Equal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::WmmseSumSe => "wmmse-sumse",
            Strategy::WmmsePf => "wmmse-pf",
            Strategy::Learned(k) => k.name(),
            Strategy::Heuristic => "heuristic",
            Strategy::Equal => "equal",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy '{s}'")))
    }
}

/// Trained models by kind.
#[derive(Debug, Clone, Default)]
pub struct ModelBank {
    sets: Vec<(ModelKind, Vec<LearnedModel>)>,
}

impl ModelBank {
    pub fn insert(&mut self, kind: ModelKind, models: Vec<LearnedModel>) {
        self.sets.retain(|(k, _)| *k != kind);
        self.sets.push((kind, models));
    }

    pub fn get(&self, kind: ModelKind) -> Result<&[LearnedModel]> {
        self.sets
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, m)| m.as_slice())
            .ok_or_else(|| Error::MissingModel(kind.name().into()))
    }
}

#[derive(Debug, Clone)]
pub struct AllocationResult {
    pub allocation: PowerAllocation,
    /// Solver did not converge, or a learned model emitted a zero direction.
    pub degenerate: bool,
}

/// Computes the allocation of one strategy for one drop.
pub fn allocate(
    cfg: &ExperimentConfig,
    drop: &SimulatedDrop,
    strategy: Strategy,
    models: &ModelBank,
) -> Result<AllocationResult> {
    let net = &cfg.network;
    let (v, budget) = (net.v_exponent, net.max_dl_power_w);
    Ok(match strategy {
        Strategy::WmmseSumSe | Strategy::WmmsePf => {
            let objective = if strategy == Strategy::WmmseSumSe { Objective::SumSe } else { Objective::Pf };
            let out = solve_drop(cfg, drop, objective)?;
            AllocationResult { degenerate: is_degenerate(&summarize(&out)), allocation: out.allocation }
        }
        Strategy::Learned(kind) => {
            let p = learned::predict_allocation(models.get(kind)?, &drop.beta, v, budget)?;
            AllocationResult { degenerate: !p.degenerate_aps.is_empty(), allocation: p.allocation }
        }
        Strategy::Heuristic => AllocationResult {
            allocation: heuristic::heuristic_allocation(&drop.beta, v, budget)?,
            degenerate: false,
        },
        Strategy::Equal => AllocationResult {
            allocation: heuristic::equal_power(net.num_ues, net.num_aps, budget),
            degenerate: false,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyResult {
    pub strategy: Strategy,
    /// Per-UE SE (bit/s/Hz) for every drop.
    pub se: Vec<Vec<f64>>,
    /// Wall-clock seconds per allocation.
    pub seconds: Vec<f64>,
    /// Digest of the statistics each allocation was scored on.
    pub digests: Vec<u64>,
    pub max_violation: f64,
    pub degenerate: usize,
}

impl StrategyResult {
    pub fn total_se(&self) -> Vec<f64> {
        self.se.iter().map(|d| d.iter().sum()).collect()
    }

    pub fn mean_total_se(&self) -> f64 {
        mean(&self.total_se())
    }

    pub fn all_ue_se(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.se.concat();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Per-UE SE percentile over all drops, `q` in `[0, 1]`.
    pub fn percentile(&self, q: f64) -> f64 {
        learned::quantile(&self.all_ue_se(), q)
    }

    pub fn mean_seconds(&self) -> f64 {
        mean(&self.seconds)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Empirical CDF points `(x_i, i/n)` of sorted data.
pub fn empirical_cdf(sorted: &[f64]) -> Vec<(f64, f64)> {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().map(|(i, x)| (*x, (i + 1) as f64 / n)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub precoder: Precoder,
    pub drop_seeds: Vec<u64>,
    /// Digest of each drop's statistics.
    pub digests: Vec<u64>,
    pub results: Vec<StrategyResult>,
}

impl EvalReport {
    pub fn result(&self, s: Strategy) -> Option<&StrategyResult> {
        self.results.iter().find(|r| r.strategy == s)
    }

    /// True when every strategy was scored on the same statistics per drop.
    pub fn digests_consistent(&self) -> bool {
        self.results.iter().all(|r| r.digests == self.digests)
    }

    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut per_ue = csv::Writer::from_path(dir.join("per_ue_se.csv"))?;
        per_ue.write_record(["strategy", "drop", "ue", "se"])?;
        let mut cdf = csv::Writer::from_path(dir.join("cdf.csv"))?;
        cdf.write_record(["strategy", "se", "cdf"])?;
        let mut totals = csv::Writer::from_path(dir.join("total_se_cdf.csv"))?;
        totals.write_record(["strategy", "total_se", "cdf"])?;
        let mut summary = csv::Writer::from_path(dir.join("summary.csv"))?;
        summary.write_record([
            "strategy",
            "precoder",
            "drops",
            "mean_total_se",
            "mean_ue_se",
            "p10_ue_se",
            "median_ue_se",
            "mean_min_ue_se",
            "mean_seconds",
            "max_violation",
            "degenerate",
        ])?;
        for r in &self.results {
            let name = r.strategy.name();
            for (d, ses) in r.se.iter().enumerate() {
                for (k, se) in ses.iter().enumerate() {
                    per_ue.write_record([name.to_string(), d.to_string(), k.to_string(), format!("{se:.9e}")])?;
                }
            }
            for (x, p) in empirical_cdf(&r.all_ue_se()) {
                cdf.write_record([name.to_string(), format!("{x:.9e}"), format!("{p:.6}")])?;
            }
            let mut tot = r.total_se();
            tot.sort_by(f64::total_cmp);
            for (x, p) in empirical_cdf(&tot) {
                totals.write_record([name.to_string(), format!("{x:.9e}"), format!("{p:.6}")])?;
            }
            let min_ue: Vec<f64> = r.se.iter().map(|d| d.iter().copied().fold(f64::INFINITY, f64::min)).collect();
            let all = r.all_ue_se();
            summary.write_record([
                name.to_string(),
                self.precoder.name().to_string(),
                r.se.len().to_string(),
                format!("{:.6}", r.mean_total_se()),
                format!("{:.6}", mean(&all)),
                format!("{:.6}", r.percentile(0.1)),
                format!("{:.6}", r.percentile(0.5)),
                format!("{:.6}", mean(&min_ue)),
                format!("{:.6e}", r.mean_seconds()),
                format!("{:.3e}", r.max_violation),
                r.degenerate.to_string(),
            ])?;
        }
        per_ue.flush()?;
        cdf.flush()?;
        totals.flush()?;
        summary.flush()?;
        Ok(())
    }
}

/// One strategy scored on one drop.
struct Scored {
    se: Vec<f64>,
    seconds: f64,
    digest: u64,
    violation: f64,
    degenerate: bool,
}

/// Scores each strategy on `drops` fresh test drops. Drop seeds come from the
/// test namespace and never coincide with training seeds.
pub fn evaluate(
    cfg: &ExperimentConfig,
    precoder: Precoder,
    strategies: &[Strategy],
    models: &ModelBank,
    drops: u64,
    master_seed: u64,
) -> Result<EvalReport> {
    cfg.validate()?;
    for s in strategies {
        if let Strategy::Learned(kind) = s {
            models.get(*kind)?;
        }
    }
    let per_drop: Vec<(u64, u64, Vec<Scored>)> = (0..drops)
        .into_par_iter()
        .map(|i| {
            let seed = seeds::sample_seed(seeds::TEST_NAMESPACE, master_seed, i);
            let drop = simulate_drop(cfg, seed, precoder)?;
            let digest = codec::params_digest(&drop.params);
            let rows = strategies
                .iter()
                .map(|&s| {
                    let start = Instant::now();
                    let res = allocate(cfg, &drop, s, models)?;
                    let secs = start.elapsed().as_secs_f64();
                    let se = compute_se(&drop.params, &res.allocation)?;
                    let scored_on = codec::params_digest(&drop.params);
                    Ok(Scored {
                        se,
                        seconds: secs,
                        digest: scored_on,
                        violation: res.allocation.max_violation(),
                        degenerate: res.degenerate,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((seed, digest, rows))
        })
        .collect::<Result<_>>()?;

    let mut report = EvalReport {
        precoder,
        drop_seeds: per_drop.iter().map(|d| d.0).collect(),
        digests: per_drop.iter().map(|d| d.1).collect(),
        results: strategies
            .iter()
            .map(|&strategy| StrategyResult {
                strategy,
                se: Vec::new(),
                seconds: Vec::new(),
                digests: Vec::new(),
                max_violation: 0.0,
                degenerate: 0,
            })
            .collect(),
    };
    for (_, _, rows) in per_drop {
        for (r, row) in report.results.iter_mut().zip(rows) {
            r.se.push(row.se);
            r.seconds.push(row.seconds);
            r.digests.push(row.digest);
            r.max_violation = r.max_violation.max(row.violation);
            r.degenerate += row.degenerate as usize;
        }
    }
    Ok(report)
}

/// What `bench` can time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchTarget {
    Wmmse,
    Learned(ModelKind),
    /// Empty closure, the timing floor.
    Noop,
}

impl BenchTarget {
    pub const ALL: [BenchTarget; 5] = [
        BenchTarget::Wmmse,
        BenchTarget::Learned(ModelKind::Ddnn),
        BenchTarget::Learned(ModelKind::DdnnSi),
        BenchTarget::Learned(ModelKind::Cdnn),
        BenchTarget::Noop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchTarget::Wmmse => "wmmse-admm",
            BenchTarget::Learned(k) => k.name(),
            BenchTarget::Noop => "noop",
        }
    }
}

impl std::str::FromStr for BenchTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchTarget::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown bench target '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub target: BenchTarget,
    pub objective: Objective,
    pub precoder: Precoder,
    pub mean_seconds: f64,
    pub repeats: usize,
}

fn time_mean<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<f64> {
    black_box(f()?);
    let start = Instant::now();
    for _ in 0..repeats {
        black_box(f()?);
    }
    Ok(start.elapsed().as_secs_f64() / repeats as f64)
}

/// Untrained models of the right shape; inference time does not depend on the weights.
pub fn placeholder_models(cfg: &ExperimentConfig, kind: ModelKind) -> Result<Vec<LearnedModel>> {
    model_groups(cfg, kind)?
        .into_iter()
        .enumerate()
        .map(|(g, aps)| {
            let mlp = kind.build(cfg.network.num_ues, aps.len(), g as u64)?;
            let scaler = learned::RobustScaler::identity(mlp.input_dim());
            Ok(LearnedModel { kind, num_ues: cfg.network.num_ues, aps, scaler, mlp })
        })
        .collect()
}

/// Mean wall-clock time per allocation on a pre-generated instance, single
/// threaded, for every objective and precoder. Learned kinds without trained
/// models use placeholders.
pub fn bench(
    cfg: &ExperimentConfig,
    models: &ModelBank,
    targets: &[BenchTarget],
    repeats: usize,
    master_seed: u64,
) -> Result<Vec<BenchRow>> {
    let net = &cfg.network;
    let (v, budget) = (net.v_exponent, net.max_dl_power_w);
    let mut sets = Vec::new();
    for &t in targets {
        if let BenchTarget::Learned(kind) = t {
            let set = match models.get(kind) {
                Ok(m) => m.to_vec(),
                Err(_) => placeholder_models(cfg, kind)?,
            };
            sets.push((kind, set));
        }
    }
    let mut rows = Vec::new();
    for precoder in [Precoder::Mr, Precoder::Rzf] {
        let drop = simulate_drop(cfg, seeds::sample_seed(seeds::SCRATCH_NAMESPACE, master_seed, 0), precoder)?;
        for objective in [Objective::SumSe, Objective::Pf] {
            for &target in targets {
                let mean_seconds = match target {
                    BenchTarget::Wmmse => {
                        let solver = solver_for(cfg, objective);
                        let init = solver.initial_allocation(&drop.beta, v, budget)?;
                        time_mean(repeats, || wmmse_solve(black_box(&drop.params), &solver, &init))?
                    }
                    BenchTarget::Learned(kind) => {
                        let set = &sets.iter().find(|(k, _)| *k == kind).expect("loaded above").1;
                        time_mean(repeats, || learned::predict_allocation(set, black_box(&drop.beta), v, budget))?
                    }
                    BenchTarget::Noop => time_mean(repeats, || Ok(black_box(&drop.beta)))?,
                };
                rows.push(BenchRow { target, objective, precoder, mean_seconds, repeats });
            }
        }
    }
    Ok(rows)
}

/// One row per strategy, one column per objective and precoder.
pub fn write_bench_csv(out: impl Write, rows: &[BenchRow]) -> Result<()> {
    let columns = [
        (Objective::SumSe, Precoder::Mr),
        (Objective::SumSe, Precoder::Rzf),
        (Objective::Pf, Precoder::Mr),
        (Objective::Pf, Precoder::Rzf),
    ];
    let mut w = BufWriter::new(out);
    write!(w, "strategy")?;
    for (o, p) in columns {
        write!(w, ",{}_{}_s", o.name(), p.name())?;
    }
    writeln!(w)?;
    let mut targets: Vec<BenchTarget> = Vec::new();
    for r in rows {
        if !targets.contains(&r.target) {
            targets.push(r.target);
        }
    }
    for t in targets {
        write!(w, "{}", t.name())?;
        for (o, p) in columns {
            match rows.iter().find(|r| r.target == t && r.objective == o && r.precoder == p) {
                Some(r) => write!(w, ",{:.6e}", r.mean_seconds)?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}
