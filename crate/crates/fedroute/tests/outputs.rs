use fedroute::bench::{
    read_report_lines, run_scenario, write_outputs, ComparisonTable, RunLine, RunOptions,
    TimingRow, REPORTS_FILE, RESOLVED_FILE, RUNS_FILE, SUMMARY_FILE, TABLE_FILE, TIMINGS_FILE,
};
use fedroute::scenario::Scenario;
use fedroute_core::strategies::Strategy;

const SMALL: &str = r#"{
  "name": "small",
  "topology": {"kind": "gabriel", "n_nodes": 8},
  "clients": 6,
  "sim": {"n_rounds": 2, "bg_lambda": 0.05, "k_paths": 4},
  "seeds": [1, 2]
}"#;

fn small() -> Scenario {
    Scenario::from_json(SMALL, None).unwrap()
}

#[test]
fn table_is_recomputable_from_the_written_records() {
    let dir = tempfile::tempdir().unwrap();
    let sc = small();
    let batch = run_scenario(&sc, RunOptions::default()).unwrap();
    assert_eq!(batch.failures(), 0);
    write_outputs(dir.path(), &sc, &batch).unwrap();

    let reports =
        read_report_lines(&std::fs::read_to_string(dir.path().join(REPORTS_FILE)).unwrap())
            .unwrap();
    assert_eq!(reports, batch.report_lines());
    assert_eq!(reports.len(), 4 * 2 * 2);
    let runs: Vec<RunLine> = std::fs::read_to_string(dir.path().join(RUNS_FILE))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let timings: Vec<TimingRow> = csv::Reader::from_path(dir.path().join(TIMINGS_FILE))
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(timings, batch.timing_rows());

    let table = ComparisonTable::from_records(&sc.strategies, &reports, &timings, &runs);
    assert_eq!(table, batch.table);
    assert_eq!(
        std::fs::read_to_string(dir.path().join(TABLE_FILE)).unwrap(),
        table.render()
    );
    for s in Strategy::ALL {
        let row = table.row(s).unwrap();
        assert_eq!((row.runs, row.failed, row.rounds), (2, 0, 4));
    }
}

#[test]
fn summary_and_resolved_config_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let sc = small();
    let batch = run_scenario(&sc, RunOptions::default()).unwrap();
    write_outputs(dir.path(), &sc, &batch).unwrap();

    let mut rdr = csv::Reader::from_path(dir.path().join(SUMMARY_FILE)).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "strategy",
            "topology",
            "seed",
            "round",
            "round_time_s",
            "s2c_reassign",
            "c2s_reassign",
            "timeouts"
        ]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().collect::<Result<_, _>>().unwrap();
    assert_eq!(rows.len(), 16);
    assert_eq!(&rows[0][1], "gabriel8");

    let echoed = Scenario::load(&dir.path().join(RESOLVED_FILE)).unwrap();
    assert_eq!(echoed, sc);
}

#[test]
fn traced_runs_write_per_run_traces() {
    let dir = tempfile::tempdir().unwrap();
    let mut sc = small();
    sc.strategies = vec![Strategy::SmartFlowGreedy];
    sc.seeds = vec![3];
    let batch = run_scenario(
        &sc,
        RunOptions {
            trace: true,
            sequential: true,
        },
    )
    .unwrap();
    write_outputs(dir.path(), &sc, &batch).unwrap();
    let t = dir.path().join("traces").join("smartflow-greedy-s3");
    let events = std::fs::read_to_string(t.join("events.jsonl")).unwrap();
    assert!(events.lines().next().unwrap().contains("\"event\""));
    let sched = std::fs::read_to_string(t.join("scheduler.csv")).unwrap();
    assert!(sched.starts_with("time_ms,direction,event,client,detail\n"));
    assert!(sched.lines().count() > 1);
    let tele = std::fs::read_to_string(t.join("telemetry.csv")).unwrap();
    assert!(
        tele.starts_with("time_ms,link_src,link_dst,throughput_mbps,loss_est,latency_est_ms\n"),
        "{tele:.80}"
    );

    // Untraced runs leave no trace directory.
    let plain = tempfile::tempdir().unwrap();
    let batch = run_scenario(&sc, RunOptions::default()).unwrap();
    write_outputs(plain.path(), &sc, &batch).unwrap();
    assert!(!plain.path().join("traces").exists());
}

#[test]
fn parallel_and_sequential_batches_agree() {
    let sc = small();
    let a = run_scenario(&sc, RunOptions::default()).unwrap();
    let b = run_scenario(
        &sc,
        RunOptions {
            trace: false,
            sequential: true,
        },
    )
    .unwrap();
    assert_eq!(a.report_lines(), b.report_lines());
    assert_eq!(a.run_lines(), b.run_lines());
}
