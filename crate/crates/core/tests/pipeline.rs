mod common;

use cellfree::codec::{self, Dataset};
use cellfree::learned::ModelKind;
use cellfree::pipeline::{self, GenerateOptions, ModelBank, Strategy};
use cellfree::precoding::Precoder;
use cellfree::seeds;
use cellfree::wmmse::Objective;
use common::quick_desk;

fn opts(samples: u64) -> GenerateOptions {
    GenerateOptions {
        samples,
        objective: Objective::SumSe,
        precoder: Precoder::Rzf,
        master_seed: 3,
        full_params: false,
        resume: false,
    }
}

#[test]
fn empty_dataset_has_a_valid_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.cfds");
    let cfg = quick_desk(100);
    pipeline::generate(&cfg, &opts(0), &path).unwrap();
    let data = Dataset::read(&path).unwrap();
    assert!(data.samples.is_empty());
    assert_eq!(data.header.config, cfg);
    assert_eq!(Dataset::read_header(&path).unwrap().1, 0);
}

#[test]
fn generation_is_deterministic_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_desk(100);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    pipeline::generate(&cfg, &opts(70), &a).unwrap();
    pipeline::generate(&cfg, &opts(70), &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    pipeline::generate(&cfg, &opts(20), &c).unwrap();
    let report = pipeline::generate(&cfg, &GenerateOptions { resume: true, ..opts(70) }, &c).unwrap();
    assert_eq!(report.resumed_from, 20);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());

    let other = GenerateOptions { resume: true, objective: Objective::Pf, ..opts(70) };
    assert!(pipeline::generate(&cfg, &other, &c).is_err());
}

#[test]
fn dataset_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("full.cfds");
    let cfg = quick_desk(100);
    pipeline::generate(&cfg, &GenerateOptions { full_params: true, ..opts(5) }, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let data = Dataset::decode(&bytes).unwrap();
    assert_eq!(data.encode().unwrap(), bytes);
    for s in &data.samples {
        let p = s.params.as_ref().unwrap();
        assert_eq!(codec::params_digest(p), s.params_digest);
        assert_eq!(codec::encode_params(&codec::decode_params(&codec::encode_params(p)).unwrap()), codec::encode_params(p));
    }
}

#[test]
fn desk_run_labels_are_feasible_and_traces_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("desk.cfds");
    let cfg = quick_desk(200);
    pipeline::generate(&cfg, &opts(100), &path).unwrap();
    let data = Dataset::read(&path).unwrap();
    assert_eq!(data.samples.len(), 100);
    let budget = cfg.network.max_dl_power_w;
    for s in &data.samples {
        assert_eq!(seeds::namespace_of(s.seed), seeds::TRAIN_NAMESPACE);
        assert!(s.mu_star.iter().all(|x| *x >= 0.0));
        for col in s.mu_star.column_iter() {
            assert!(col.norm_squared() <= budget * (1.0 + 1e-9));
        }
        assert!(s.summary.max_decrease <= 10.0 * cfg.solver.subproblem.eps_inner());
    }
}

#[test]
fn training_writes_curves_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_desk(100);
    cfg.train.epochs = 3;
    cfg.train.batch_size = 16;
    let path = dir.path().join("t.cfds");
    pipeline::generate(&cfg, &opts(60), &path).unwrap();
    let data = Dataset::read(&path).unwrap();
    for kind in ModelKind::ALL {
        let (m1, m2) = (dir.path().join(format!("{}-1", kind.name())), dir.path().join(format!("{}-2", kind.name())));
        let trained = pipeline::train_models(&data, kind).unwrap();
        let r = &trained[0].1;
        let train: std::collections::BTreeSet<_> = r.train_indices.iter().collect();
        assert!(r.validation_indices.iter().all(|i| !train.contains(i)));
        pipeline::save_models(&m1, &trained).unwrap();
        pipeline::save_models(&m2, &pipeline::train_models(&data, kind).unwrap()).unwrap();
        let groups = if kind == ModelKind::Cdnn { 2 } else { 4 };
        for g in 0..groups {
            let stem = format!("{}-{g:02}", kind.name());
            let a = std::fs::read(m1.join(format!("{stem}.cfnn"))).unwrap();
            assert_eq!(a, std::fs::read(m2.join(format!("{stem}.cfnn"))).unwrap());
            let model = codec::decode_model(&a).unwrap();
            assert_eq!(codec::encode_model(&model), a);
            let curve = std::fs::read_to_string(m1.join(format!("{stem}-loss.csv"))).unwrap();
            assert_eq!(curve.lines().count(), cfg.train.epochs + 1);
        }
        assert_eq!(pipeline::load_models(&m1, kind).unwrap().len(), groups);
    }
}

#[test]
fn evaluation_scores_every_strategy_on_the_same_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_desk(200);
    let mut bank = ModelBank::default();
    bank.insert(ModelKind::Ddnn, pipeline::placeholder_models(&cfg, ModelKind::Ddnn).unwrap());
    let strategies = [Strategy::WmmseSumSe, Strategy::Learned(ModelKind::Ddnn), Strategy::Heuristic, Strategy::Equal];
    let report = pipeline::evaluate(&cfg, Precoder::Rzf, &strategies, &bank, 40, 9).unwrap();
    assert!(report.digests_consistent());
    assert!(report.drop_seeds.iter().all(|s| seeds::namespace_of(*s) == seeds::TEST_NAMESPACE));
    assert!(report.results.iter().all(|r| r.max_violation <= 1e-9));
    let again = pipeline::evaluate(&cfg, Precoder::Rzf, &strategies, &bank, 40, 9).unwrap();
    for (a, b) in report.results.iter().zip(&again.results) {
        assert_eq!(a.se, b.se);
    }

    let wmmse = report.result(Strategy::WmmseSumSe).unwrap().total_se();
    for baseline in [Strategy::Heuristic, Strategy::Equal] {
        let other = report.result(baseline).unwrap().total_se();
        let wins = wmmse.iter().zip(&other).filter(|(w, o)| w >= o).count();
        assert!(wins as f64 >= 0.95 * wmmse.len() as f64, "{} beat WMMSE too often", baseline.name());
    }

    report.write_csv(dir.path()).unwrap();
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("equal,")));
    let mut rdr = csv::Reader::from_path(dir.path().join("cdf.csv")).unwrap();
    let mut last: Option<(String, f64)> = None;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let p: f64 = rec[2].parse().unwrap();
        if let Some((s, q)) = &last {
            if *s == rec[0] {
                assert!(p >= *q);
            }
        }
        last = Some((rec[0].to_string(), p));
    }
}
