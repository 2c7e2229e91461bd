use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TABLE2: &str = "date,origin,destination,value\n\
                      10 / 5 / 2006,A,B,1\n\
                      10 / 5 / 2006,C,B,25\n\
                      10 / 7 / 2006,B,D,7\n\
                      10 / 8 / 2006,D,A,71\n";

const CALENDAR: &str = "year,start,end\n2014,2014-07-28,2014-07-29\n2015,2015-07-17,2015-07-18\n";

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_triadscope"));
    cmd.env_remove("TRIADSCOPE_KEY");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// A stream with two events, large enough for stable rankings.
fn synth_stream(dir: &Path, name: &str, banks: &str, end: &str, extra: &[&str]) -> PathBuf {
    let calendar = dir.join("cal.csv");
    fs::write(&calendar, CALENDAR).unwrap();
    let out = dir.join(name);
    let mut args = vec![
        "synth", "-o", p(&out), "--banks", banks, "--start", "2014-06-01", "--end", end,
        "--calendar", p(&calendar), "--seed", "3",
    ];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

#[test]
fn ingest_table2_sample() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t2.csv");
    fs::write(&input, TABLE2).unwrap();
    let store = dir.path().join("store");
    let o = run(&["ingest", p(&input), "-o", p(&store), "--date-format", "mdy", "--no-mask", "--no-timestamp"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = read_json(&store.join("manifest.json"));
    assert_eq!(
        manifest["days"],
        serde_json::json!({"2006-10-05": 2, "2006-10-07": 1, "2006-10-08": 1})
    );
    assert_eq!(fs::read_dir(store.join("days")).unwrap().count(), 3);
    let day = fs::read_to_string(store.join("days/2006-10-05.csv")).unwrap();
    assert_eq!(day, "date,origin,destination,value\n2006-10-05,A,B,1\n2006-10-05,C,B,25\n");
}

#[test]
fn ingest_masks_with_key_from_env_or_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t2.csv");
    fs::write(&input, TABLE2).unwrap();
    let key_file = dir.path().join("key");
    fs::write(&key_file, "a secret of some length\n").unwrap();

    let from_file = dir.path().join("a");
    let o = run(&["ingest", p(&input), "-o", p(&from_file), "--date-format", "mdy", "--key-file", p(&key_file), "--no-timestamp"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let from_env = dir.path().join("b");
    let o = bin()
        .args(["ingest", p(&input), "-o", p(&from_env), "--date-format", "mdy", "--no-timestamp"])
        .env("TRIADSCOPE_KEY", "a secret of some length")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let a = fs::read_to_string(from_file.join("days/2006-10-05.csv")).unwrap();
    let b = fs::read_to_string(from_env.join("days/2006-10-05.csv")).unwrap();
    assert_eq!(a, b);
    assert!(!a.contains(",A,") && !a.contains(",B,"));
    let first = a.lines().nth(1).unwrap();
    let origin = first.split(',').nth(1).unwrap();
    assert_eq!(origin.len(), 16);
    assert!(origin.bytes().all(|c| c.is_ascii_hexdigit()));
    assert_eq!(read_json(&from_file.join("manifest.json"))["masked"], true);
}

#[test]
fn ingest_without_key_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t2.csv");
    fs::write(&input, TABLE2).unwrap();
    let o = run(&["ingest", p(&input), "-o", p(&dir.path().join("s")), "--date-format", "mdy"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no masking key"));
}

#[test]
fn ingest_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.csv");
    fs::write(&input, "").unwrap();
    let store = dir.path().join("s");
    let o = run(&["ingest", p(&input), "-o", p(&store), "--no-mask"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = read_json(&store.join("manifest.json"));
    assert_eq!(manifest["days"], serde_json::json!({}));
    assert!(manifest["generated_at"].is_string());
}

#[test]
fn ingest_unreadable_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["ingest", p(&dir.path().join("missing.csv")), "-o", p(&dir.path().join("s")), "--no-mask"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("cannot read"));
}

#[test]
fn ingest_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "date,origin,destination,value\n2006-10-05,A,B,3\n2006-10-05,A,B,0\n2006-10-06,B,C,2\n").unwrap();

    let o = run(&["ingest", p(&input), "-o", p(&dir.path().join("a")), "--no-mask"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let store = dir.path().join("b");
    let o = run(&["ingest", p(&input), "-o", p(&store), "--no-mask", "--skip-bad-rows", "--no-timestamp"]);
    assert_eq!(code(&o), 1);
    let manifest = read_json(&store.join("manifest.json"));
    assert_eq!(manifest["dropped_rows"], serde_json::json!([{"line": 3, "reason": "value < 1"}]));
    assert_eq!(manifest["days"], serde_json::json!({"2006-10-05": 1, "2006-10-06": 1}));
}

#[test]
fn ingest_refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t2.csv");
    fs::write(&input, TABLE2).unwrap();
    let store = dir.path().join("s");
    let args = ["ingest", p(&input), "-o", p(&store), "--date-format", "mdy", "--no-mask"];
    assert_eq!(code(&run(&args)), 0);
    assert_eq!(code(&run(&args)), 2);
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(code(&run(&forced)), 0);
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        run(&["synth", "-o", p(out), "--seed", "7", "--banks", "20", "--start", "2014-07-01", "--end", "2014-08-31"])
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&args(&a)), 0);
    assert_eq!(code(&args(&b)), 0);
    for file in ["transactions.csv", "ground_truth.json", "metadata.json", "calendar.csv"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let c = dir.path().join("c");
    run(&["synth", "-o", p(&c), "--seed", "8", "--banks", "20", "--start", "2014-07-01", "--end", "2014-08-31"]);
    assert_ne!(fs::read(a.join("transactions.csv")).unwrap(), fs::read(c.join("transactions.csv")).unwrap());
}

#[test]
fn synth_default_events_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = run(&["synth", "-o", p(&out), "--banks", "8"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let truth = read_json(&out.join("ground_truth.json"));
    let dates: Vec<&str> = truth.as_object().unwrap().values().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(dates.len(), 10);
    assert!(dates.contains(&"2014-07-30"));
    assert!(dates.contains(&"2015-07-19"));
    assert_eq!(truth["2006-10-24..2006-10-25"], "2006-10-26");
    let meta = read_json(&out.join("metadata.json"));
    assert_eq!(meta["config"]["bank_count"], 8);
}

#[test]
fn synth_invalid_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["synth", "-o", p(&dir.path().join("a")), "--density", "0.95"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("unreachable"), "{}", stderr(&o));

    let config = dir.path().join("bad.toml");
    fs::write(&config, "bank_count = 10\nbogus = 1\n").unwrap();
    let o = run(&["synth", "-o", p(&dir.path().join("b")), "--config", p(&config)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn synth_reads_toml_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("gen.toml");
    fs::write(
        &config,
        "bank_count = 12\nstart_date = \"2014-07-01\"\nend_date = \"2014-08-15\"\nevents = [\"2014-07-28..2014-07-29\"]\nseed = 4\n",
    )
    .unwrap();
    let out = dir.path().join("s");
    let o = run(&["synth", "-o", p(&out), "--config", p(&config), "--seed", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let meta = read_json(&out.join("metadata.json"));
    assert_eq!(meta["config"]["seed"], 5);
    assert_eq!(meta["config"]["bank_count"], 12);
    assert_eq!(fs::read_to_string(out.join("ground_truth.json")).unwrap().trim(), "{\n  \"2014-07-28..2014-07-29\": \"2014-07-30\"\n}");
}

#[test]
fn analyze_synthetic_stream_ranks_class_300_first() {
    let dir = tempfile::tempdir().unwrap();
    let stream = synth_stream(dir.path(), "s", "100", "2015-08-31", &[]);
    let out = dir.path().join("a");
    let o = run(&["analyze", "--input", p(&stream.join("transactions.csv")), "--calendar", p(&stream.join("calendar.csv")), "-o", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ranking = read_json(&out.join("ranking.json"));
    assert_eq!(ranking[0]["pattern"], 16);
    let analysis = read_json(&out.join("analysis.json"));
    let edges: Vec<&str> = analysis["anomalies"]["edges"].as_array().unwrap().iter().map(|d| d.as_str().unwrap()).collect();
    assert!(edges.contains(&"2014-07-30") && edges.contains(&"2015-07-19"), "{edges:?}");
    for file in ["metrics.csv", "metrics_z.csv", "census.csv", "census_z.csv", "census_classes.csv", "zscores.csv"] {
        assert!(out.join(file).is_file(), "{file}");
    }
    let tables: Vec<_> = fs::read_dir(out.join("changes")).unwrap().collect();
    assert_eq!(tables.len(), 2);
    let table = fs::read_to_string(out.join("changes/change_2014_2014-07-28.csv")).unwrap();
    assert_eq!(table.lines().count(), 31);
}

#[test]
fn analyze_without_disruption_has_no_strong_detector() {
    let dir = tempfile::tempdir().unwrap();
    let stream = synth_stream(dir.path(), "s", "100", "2015-08-31", &["--severity", "0"]);
    let out = dir.path().join("a");
    let o = run(&["analyze", "--input", p(&stream.join("transactions.csv")), "--calendar", p(&stream.join("calendar.csv")), "-o", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ranking = read_json(&out.join("ranking.json"));
    let scores: Vec<f64> = ranking.as_array().unwrap().iter().filter_map(|e| e["score"].as_f64()).collect();
    assert_eq!(scores.len(), 16);
    // Day-to-day sampling noise only; a disrupted day moves class 300 by ~100%.
    assert!(scores[0] < 30.0, "{scores:?}");
}

#[test]
fn analyze_zero_event_calendar() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t2.csv");
    fs::write(&input, TABLE2).unwrap();
    let calendar = dir.path().join("none.csv");
    fs::write(&calendar, "year,start,end\n").unwrap();
    let out = dir.path().join("a");
    let o = run(&["analyze", "--input", p(&input), "--date-format", "mdy", "--calendar", p(&calendar), "-o", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
    assert!(metrics.starts_with("date,nodes,edges,avg_distance,density\n2006-10-05,3,2,1,"));
    // One triad, A->B<-C, is 021U. Two-node days have no triads and are left out.
    let census = fs::read_to_string(out.join("census.csv")).unwrap();
    assert_eq!(census.lines().nth(1), Some("2006-10-05,0,0,0,0,1,0,0,0,0,0,0,0,0,0,0,0"));
    assert_eq!(census.lines().count(), 2);
    assert!(!out.join("changes").exists());
    assert!(!out.join("ranking.json").exists());
}

#[test]
fn analyze_skips_windows_past_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t2.csv");
    fs::write(&input, TABLE2).unwrap();
    let out = dir.path().join("a");
    let o = run(&["analyze", "--input", p(&input), "--date-format", "mdy", "-o", p(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("event 2006-10-24..2006-10-25 skipped"), "{}", stderr(&o));
    let analysis = read_json(&out.join("analysis.json"));
    assert_eq!(analysis["skipped_events"].as_array().unwrap().len(), 10);
}

#[test]
fn analyze_rejects_bad_settings() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t2.csv");
    fs::write(&input, TABLE2).unwrap();
    let out = dir.path().join("a");
    for bad in [["--radius", "0"], ["--threshold", "0"]] {
        let mut args = vec!["analyze", "--input", p(&input), "--date-format", "mdy", "-o", p(&out)];
        args.extend(bad);
        assert_eq!(code(&run(&args)), 2);
    }
    assert_eq!(code(&run(&["analyze", "-o", p(&out)])), 2);
}

#[test]
fn detect_reproduces_fixture_ranking() {
    let tables = [fixture("change_2014.csv"), fixture("change_2015.csv")];
    let o = run(&["detect", p(&tables[0]), p(&tables[1])]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ranking: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(ranking[0], serde_json::json!({"pattern": 16, "score": 90.0, "rebound": 777.0}));
}

#[test]
fn detect_rejects_malformed_tables() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "Day,P1\nD+1,5%\n").unwrap();
    assert_eq!(code(&run(&["detect", p(&bad)])), 2);
}

/// Store-backed runs: ingest once, then analyze whole and split ranges.
#[test]
fn store_pipeline_is_deterministic_and_composable() {
    let dir = tempfile::tempdir().unwrap();
    let stream = synth_stream(dir.path(), "s", "40", "2014-09-30", &[]);
    let store = dir.path().join("store");
    let o = run(&["ingest", p(&stream.join("transactions.csv")), "-o", p(&store), "--no-mask", "--no-timestamp"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let analyze = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["analyze", "--store", p(&store), "--event", "2014-07-28..2014-07-29", "-o", p(&out)];
        args.extend_from_slice(extra);
        let o = run(&args);
        assert!(code(&o) <= 1, "{}", stderr(&o));
        out
    };
    let whole = analyze("whole", &[]);
    let again = analyze("again", &["--jobs", "1"]);
    for entry in fs::read_dir(&whole).unwrap() {
        let path = entry.unwrap().path();
        if path.is_file() {
            let name = path.file_name().unwrap();
            assert_eq!(fs::read(&path).unwrap(), fs::read(again.join(name)).unwrap(), "{name:?}");
        }
    }
    assert_eq!(
        fs::read(whole.join("changes/change_2014-07-28.csv")).unwrap(),
        fs::read(again.join("changes/change_2014-07-28.csv")).unwrap()
    );

    let first = analyze("first", &["--to", "2014-07-15"]);
    let second = analyze("second", &["--from", "2014-07-16"]);
    for file in ["metrics.csv", "census.csv"] {
        let whole = fs::read_to_string(whole.join(file)).unwrap();
        let a = fs::read_to_string(first.join(file)).unwrap();
        let b = fs::read_to_string(second.join(file)).unwrap();
        let joined: String = a.lines().chain(b.lines().skip(1)).map(|l| format!("{l}\n")).collect();
        assert_eq!(whole, joined, "{file}");
    }
}

#[test]
fn census_then_window_matches_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let stream = synth_stream(dir.path(), "s", "40", "2014-09-30", &[]);
    let input = stream.join("transactions.csv");
    let census = dir.path().join("census");
    assert_eq!(code(&run(&["census", "--input", p(&input), "-o", p(&census)])), 0);
    let classes = fs::read_to_string(census.join("census_classes.csv")).unwrap();
    assert!(classes.starts_with("index,column,code\n1,c1,003\n"));
    assert!(classes.ends_with("16,c16,300\n"));

    let windows = dir.path().join("windows");
    let o = run(&[
        "window", "--series", p(&census.join("census.csv")), "--event", "2014-07-28..2014-07-29", "--event",
        "2014-09-20..2014-09-21", "-o", p(&windows),
    ]);
    assert_eq!(code(&o), 1, "late window is skipped with a warning");
    let analyzed = dir.path().join("a");
    run(&["analyze", "--input", p(&input), "--event", "2014-07-28..2014-07-29", "-o", p(&analyzed)]);
    assert_eq!(
        fs::read(windows.join("change_2014-07-28.csv")).unwrap(),
        fs::read(analyzed.join("changes/change_2014-07-28.csv")).unwrap()
    );
    assert_eq!(
        fs::read(census.join("census.csv")).unwrap(),
        fs::read(analyzed.join("census.csv")).unwrap()
    );
}

#[test]
fn metrics_with_degree_distributions() {
    let dir = tempfile::tempdir().unwrap();
    let stream = synth_stream(dir.path(), "s", "40", "2014-07-31", &[]);
    let out = dir.path().join("m");
    let o = run(&[
        "metrics", "--input", p(&stream.join("transactions.csv")), "-o", p(&out), "--degrees", "in", "--degrees",
        "weighted-total",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let degrees = fs::read_to_string(out.join("degrees_in.csv")).unwrap();
    let nodes: u64 = degrees.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(nodes, 40);
    let fits = read_json(&out.join("power_law.json"));
    assert!(fits["weighted-total"]["alpha"].as_f64().unwrap() > 1.0);
    assert!(!out.join("census.csv").exists());
}
