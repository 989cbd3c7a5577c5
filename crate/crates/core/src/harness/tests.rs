use super::*;

#[test]
fn unknown_suite_is_a_config_error() {
    let err = run_suite(&ExperimentConfig::new("nope")).unwrap_err();
    match err {
        Error::Config(m) => assert!(m.contains("known suites") && m.contains("calderon"), "{m}"),
        e => panic!("{e}"),
    }
}

#[test]
fn config_rejects_unknown_fields_and_tolerances() {
    assert!(ExperimentConfig::parse("suite = \"quadratic\"\nbogus = 1\n").is_err());
    assert!(ExperimentConfig::parse("suite = \"quadratic\"\n[tolerances]\nnope = 1.0\n").is_err());
    assert!(ExperimentConfig::parse("suite = \"quadratic\"\n[tolerances]\nquadratic_rel = -1.0\n").is_err());
    let c = ExperimentConfig::parse("suite = \"quadratic\"\nseed = 3\nquick = true\n").unwrap();
    assert_eq!((c.seed, c.quick), (3, true));
}

#[test]
fn hash_ignores_output_dir() {
    let a = ExperimentConfig::new("leibniz");
    let mut b = a.clone();
    b.output.dir = Some("/tmp/x".into());
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.hash(), a.clone().with_seed(1).hash());
}

#[test]
fn quick_quadratic_passes() {
    let r = run_suite(&ExperimentConfig::new("quadratic").quick()).unwrap();
    assert!(r.passed(), "{:?}", r.failures());
    assert!(r.record("max_rel_deviation").is_some());
}

#[test]
fn quick_leibniz_passes() {
    let r = run_suite(&ExperimentConfig::new("leibniz").quick()).unwrap();
    assert!(r.passed(), "{:?}", r.failures());
}

#[test]
fn time_budget_is_enforced() {
    let mut c = ExperimentConfig::new("leibniz").quick();
    c.budget_secs = Some(1e-9);
    assert!(matches!(run_suite(&c), Err(Error::TimeBudget { .. })));
}

#[test]
fn refinement_needs_two_steps() {
    let c = ExperimentConfig::new("leibniz").quick();
    assert!(matches!(refinement_study(&c, Axis::Q, 1), Err(Error::Config(_))));
    assert!("x".parse::<Axis>().is_err());
    assert_eq!("trunc".parse::<Axis>().unwrap(), Axis::Trunc);
}

#[test]
fn refinement_tables_have_one_row_per_record_and_step() {
    let c = ExperimentConfig::new("leibniz").quick();
    let r = refinement_study(&c, Axis::Q, 3).unwrap();
    let base = run_suite(&c).unwrap().records.len();
    assert_eq!(r.tables[0].rows.len(), 3 * base);
    assert_eq!(r.tables[1].rows.len(), 2 * base);
    assert_eq!(r.tables[2].rows.len(), base);
}

#[test]
fn empty_report_gives_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let rep = ExperimentReport {
        suite: "quadratic".into(),
        provenance: provenance(&ExperimentConfig::new("quadratic")),
        records: Vec::new(),
        tables: Vec::new(),
    };
    let m = write_report(&rep, dir.path()).unwrap();
    assert!(m.files.is_empty());
    let back = read_report(dir.path()).unwrap();
    assert_eq!(back, rep);
}

#[test]
fn histogram_is_deterministic_and_complete() {
    let v: Vec<f64> = (0..100).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
    let a = Table::histogram("h", &v, 10);
    let b = Table::histogram("h", &v, 10);
    assert_eq!(a, b);
    let total: f64 = a.rows.iter().map(|r| r[2]).sum();
    assert_eq!(total, 100.0);
}

#[test]
fn jsonl_roundtrip_keeps_non_finite_values() {
    let rec = CheckRecord::new("quadratic", "x", f64::INFINITY, f64::NAN, Comparison::Info, "a");
    let rep = ExperimentReport {
        suite: "quadratic".into(),
        provenance: provenance(&ExperimentConfig::new("quadratic")),
        records: vec![
            rec,
            CheckRecord::new("quadratic", "y", 0.5, 1.0, Comparison::AtMost, "a").on("g"),
        ],
        tables: Vec::new(),
    };
    let back = ExperimentReport::from_jsonl(&rep.to_jsonl()).unwrap();
    assert!(back.records[0].value.is_infinite() && back.records[0].threshold.is_nan());
    assert_eq!(back.records[1], rep.records[1]);
    assert!(rep.to_jsonl().lines().last().unwrap().contains("\"summary\""));
}

#[test]
fn pool_runs_are_identical() {
    let c = ExperimentConfig::new("quadratic").quick();
    let a = run_in_pool(1, || run_suite(&c).map(|r| r.fingerprint()))
        .unwrap()
        .unwrap();
    let b = run_in_pool(3, || run_suite(&c).map(|r| r.fingerprint()))
        .unwrap()
        .unwrap();
    assert_eq!(a, b);
}
