//! Library-level harness behavior: shipped configs, reports and invariants.

use std::path::PathBuf;

use paralab::harness::{
    read_report, refinement_study, run_suite, write_report, Axis, ExperimentConfig, ExperimentReport, Suite, Table,
};
use paralab::tent::TGrid;
use proptest::prelude::*;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_configs_parse() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let c = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            c.custom_operator().unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 3);
}

#[test]
fn custom_space_config_runs() {
    let mut c = ExperimentConfig::load(&configs_dir().join("leibniz_torus.toml")).unwrap();
    c.quick = true;
    let r = run_suite(&c).unwrap();
    assert!(r.passed(), "{:?}", r.failures());
}

#[test]
fn every_suite_name_roundtrips() {
    for s in Suite::ALL {
        assert_eq!(Suite::from_name(s.name()).unwrap(), s);
    }
    assert!(Suite::from_name("nope").is_err());
}

#[test]
fn reports_roundtrip_through_disk() {
    let c = ExperimentConfig::new("para_identity").quick();
    let r = run_suite(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m = write_report(&r, dir.path()).unwrap();
    assert_eq!(m.files.len(), r.tables.len());
    let back = read_report(dir.path()).unwrap();
    assert_eq!(back.fingerprint(), r.fingerprint());
    assert_eq!(back.records.len(), r.records.len());
}

#[test]
fn tampered_tables_are_rejected() {
    let r = run_suite(&ExperimentConfig::new("leibniz").quick()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_report(&r, dir.path()).unwrap();
    let csv = dir.path().join("leibniz.csv");
    let text = std::fs::read_to_string(&csv).unwrap();
    std::fs::write(&csv, text.replacen('0', "1", 1)).unwrap();
    assert!(read_report(dir.path()).is_err());
}

#[test]
fn same_seed_same_fingerprint() {
    let c = ExperimentConfig::new("carleson").quick().with_seed(5);
    assert_eq!(
        run_suite(&c).unwrap().fingerprint(),
        run_suite(&c).unwrap().fingerprint()
    );
}

#[test]
fn refinement_adds_per_record_summaries() {
    let c = ExperimentConfig::new("quadratic").quick();
    let base = run_suite(&c).unwrap();
    let r = refinement_study(&c, Axis::Q, 3).unwrap();
    let names: Vec<&str> = r.records.iter().map(|x| x.name.as_str()).collect();
    for rec in &base.records {
        assert!(names.contains(&format!("last_delta[{}]", rec.name).as_str()));
        assert!(names.contains(&format!("observed_order[{}]", rec.name).as_str()));
    }
}

#[test]
fn empty_reports_are_valid() {
    let r = ExperimentReport {
        suite: "quadratic".into(),
        provenance: run_suite(&ExperimentConfig::new("quadratic").quick())
            .unwrap()
            .provenance,
        records: vec![],
        tables: vec![],
    };
    assert!(r.passed());
    assert_eq!(
        ExperimentReport::from_jsonl(&r.to_jsonl()).unwrap().fingerprint(),
        r.fingerprint()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_hash_ignores_output(seed in any::<u64>(), dir in "[a-z]{1,8}") {
        let a = ExperimentConfig::new("leibniz").with_seed(seed);
        let mut b = a.clone();
        b.output.dir = Some(dir.into());
        prop_assert_eq!(a.hash(), b.hash());
        prop_assert_ne!(a.hash(), a.clone().with_seed(seed.wrapping_add(1)).hash());
    }

    #[test]
    fn histogram_keeps_every_finite_value(v in prop::collection::vec(-1e6f64..1e6, 1..200), bins in 1usize..20) {
        let t = Table::histogram("h", &v, bins);
        let total: f64 = t.rows.iter().map(|r| r[2]).sum();
        prop_assert_eq!(total as usize, v.len());
        prop_assert_eq!(t.rows.len(), bins);
    }

    #[test]
    fn tgrid_nodes_geometric(delta in 1e-4f64..1.0, span in 1.0f64..1e4, q in 1u32..16) {
        let g = TGrid::new(delta, delta * span, q).unwrap();
        let nodes = g.nodes();
        prop_assert!((nodes[0] - delta).abs() <= 1e-12 * delta);
        prop_assert!(*nodes.last().unwrap() <= g.r * (1.0 + 1e-12));
        for w in nodes.windows(2) {
            prop_assert!(((w[1] / w[0]).log2() * q as f64 - 1.0).abs() < 1e-9);
        }
        prop_assert!(g.refine().nodes().len() >= 2 * nodes.len() - 1);
    }
}
