use serde_json::Value;
use spikegpf::report::{self, HEATMAP_HEADER, RUNS_HEADER};
use spikegpf::*;

fn record(method: &str, seed: u64, acc: f64, spiking: Option<(f64, usize)>) -> RunRecord {
    RunRecord {
        method: method.parse().unwrap(),
        shots: 5,
        num_atoms: 10,
        spiking: spiking.map(|(t, h)| SpikingConfig::new(t, t, h).unwrap()),
        attack_rate: 0.0,
        seed,
        lr: 1e-3,
        weight_decay: 4e-6,
        epochs_executed: 12,
        best_epoch: 3,
        train_loss: 0.25,
        val_accuracy: 0.8,
        val_loss: 0.4,
        test_accuracy: acc,
        sparsity: SparsityReport {
            sparsity_s_pre_softmax: 0.5,
            sparsity_p: 0.25,
            atoms_active_per_node: 2.0,
        },
        encoder_checksum: "abc".into(),
        history: Vec::new(),
        wall_seconds: 1.5,
    }
}

#[test]
fn one_record_gives_one_row() {
    let csv = report::runs_csv(&[record("gpf", 0, 0.5, None)]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines,
        vec![RUNS_HEADER, "gpf,5,10,,,,0,0,12,3,0.25,0.8,0.5,0.5,0.25,2"]
    );
}

#[test]
fn summary_uses_sample_std() {
    let recs = [
        record("spiking", 0, 0.5, Some((0.1, 4))),
        record("spiking", 1, 0.7, Some((0.1, 4))),
    ];
    let summary: Value = serde_json::from_str(&report::summary_json(&recs)).unwrap();
    let cell = &summary["cells"][0];
    assert_eq!(cell["runs"], 2);
    assert_eq!(cell["test_accuracy"]["mean"], 0.6);
    assert_eq!(cell["test_accuracy"]["std"], 0.141421);
    assert_eq!(cell["mu"], 0.1);

    let single: Value = serde_json::from_str(&report::summary_json(&recs[..1])).unwrap();
    assert_eq!(single["cells"][0]["test_accuracy"]["std"], 0.0);
}

#[test]
fn summary_groups_cells_in_first_appearance_order() {
    let recs = [
        record("gpf-plus", 0, 0.5, None),
        record("probe", 0, 0.4, None),
        record("gpf-plus", 1, 0.7, None),
    ];
    let summary: Value = serde_json::from_str(&report::summary_json(&recs)).unwrap();
    let methods: Vec<&str> = summary["cells"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["method"].as_str().unwrap())
        .collect();
    assert_eq!(methods, vec!["gpf-plus", "probe"]);
}

#[test]
fn heatmap_is_sorted_by_threshold_then_horizon() {
    let recs = [
        record("spiking", 0, 0.5, Some((0.2, 1))),
        record("spiking", 0, 0.6, Some((0.05, 8))),
        record("spiking", 1, 0.8, Some((0.05, 8))),
        record("gpf", 0, 0.9, None),
    ];
    let csv = report::heatmap_csv(&recs);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], HEATMAP_HEADER);
    assert_eq!(lines[1], "0.05,0.05,8,2,0.5,0.25,0.7");
    assert_eq!(lines[2], "0.2,0.2,1,1,0.5,0.25,0.5");
    assert_eq!(lines.len(), 3);
}

#[test]
fn reports_are_byte_stable_and_reload() {
    let recs = vec![
        record("probe", 0, 0.5, None),
        record("spiking", 0, 0.75, Some((0.3, 2))),
    ];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    report::write_report(a.path(), &recs).unwrap();
    let mut slower = recs.clone();
    slower[0].wall_seconds = 99.0;
    report::write_report(b.path(), &slower).unwrap();
    for name in [
        report::RUNS_CSV,
        report::SUMMARY_JSON,
        report::HEATMAP_CSV,
        report::RECORDS_JSON,
    ] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let loaded = report::load_records(a.path()).unwrap();
    assert_eq!(loaded.len(), 2);
    assert_eq!(loaded[1].test_accuracy, 0.75);
    assert_eq!(loaded[0].wall_seconds, 0.0);
}

#[test]
fn empty_report_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        report::write_report(dir.path(), &[]),
        Err(Error::NoRecords)
    ));
    assert!(matches!(
        report::load_records(dir.path()),
        Err(Error::MissingFile(_))
    ));
}
