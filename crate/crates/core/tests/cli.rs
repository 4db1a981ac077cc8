use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sdplan::cli::formats::{parse_plan, parse_sweep};

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn sdplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdplan"))
        .args(args)
        .env_remove("SDPLAN_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p: PathBuf = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const PROFILES_HEADER: &str = "{\"format\":\"sdplan-profiles\",\"version\":1}\n";

#[test]
fn ingest_reports_full_coverage_of_bundled_data() {
    let o = sdplan(&["ingest", "--profiles", &data("profiles.jsonl"), "--platform", &data("platform.jsonl")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("coverage: 24 of 24 (variant, mapping) pairs"), "{out}");
    assert!(!out.contains("warning"));
}

#[test]
fn ingest_rejects_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "empty.jsonl", "");
    let o = sdplan(&["ingest", "--profiles", &p]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no records"), "{}", stderr(&o));
}

#[test]
fn ingest_rejects_nonpositive_latency_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{PROFILES_HEADER}{}\n{}\n",
        r#"{"model_role":"target","unit_id":"cpu","allocation":1,"quantization":"fp16","seq_len":16,"latency_ms":5.0}"#,
        r#"{"model_role":"target","unit_id":"cpu","allocation":1,"quantization":"fp16","seq_len":32,"latency_ms":0.0}"#
    );
    let p = write(dir.path(), "bad.jsonl", &text);
    let o = sdplan(&["ingest", "--profiles", &p]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.jsonl:3: latency_ms must be positive"), "{}", stderr(&o));
}

#[test]
fn ingest_rejects_duplicates_and_warns_on_non_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let rec = |len: u32, ms: f64| {
        format!(r#"{{"model_role":"drafter","unit_id":"cpu","allocation":2,"quantization":"w8a8","seq_len":{len},"latency_ms":{ms}}}"#)
    };
    let dup = write(dir.path(), "dup.jsonl", &format!("{PROFILES_HEADER}{}\n{}\n", rec(16, 4.0), rec(16, 4.5)));
    let o = sdplan(&["ingest", "--profiles", &dup]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("first on line 2"), "{}", stderr(&o));

    let noisy = write(dir.path(), "noisy.jsonl", &format!("{PROFILES_HEADER}{}\n{}\n", rec(16, 4.0), rec(32, 3.5)));
    let o = sdplan(&["ingest", "--profiles", &noisy]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("warning: latency of drafter/cpux2/w8a8 decreases"), "{}", stdout(&o));
}

#[test]
fn alpha_matches_bundled_translation_percentiles() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let o = sdplan(&[
        "alpha",
        "--traces",
        &data("traces.jsonl"),
        "--config",
        "fp16/w8a8",
        "--task",
        "translation",
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("median  0.1700"), "{out}");
    assert!(out.contains("p90     0.9000"), "{out}");
    let samples = fs::read_to_string(out_dir.join("alpha_samples.jsonl")).unwrap();
    assert_eq!(samples.lines().count(), 22);
}

#[test]
fn alpha_single_sample_has_flat_percentiles() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "one.jsonl",
        "{\"format\":\"sdplan-traces\",\"version\":1}\n{\"task\":\"qa\",\"sample_id\":\"x\",\"config\":\"fp16/fp16\",\"drafted\":8,\"accepted\":3}\n",
    );
    let o = sdplan(&["alpha", "--traces", &p, "--config", "fp16/fp16", "--output-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let values: Vec<&str> = out.lines().skip(1).map(|l| l.split_whitespace().nth(1).unwrap()).collect();
    assert_eq!(values.len(), 6);
    assert!(values.iter().all(|v| *v == "0.3750"), "{values:?}");
}

#[test]
fn alpha_unknown_config_lists_known_tags() {
    let o = sdplan(&["alpha", "--traces", &data("traces.jsonl"), "--config", "fp32/fp32"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("unknown config tag fp32/fp32"), "{err}");
    for tag in ["fp16/w8a8", "fp16/fp16", "w8a8/w8a8"] {
        assert!(err.contains(tag), "{err}");
    }
}

fn plan_args(extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = vec![
        "plan".into(),
        "--platform".into(),
        data("platform.jsonl"),
        "--profiles".into(),
        data("profiles.jsonl"),
    ];
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run_owned(args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    sdplan(&refs)
}

#[test]
fn plan_at_high_alpha_writes_table_and_round_trippable_records() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let o = run_owned(&plan_args(&[
        "--traces",
        &data("traces.jsonl"),
        "--task",
        "translation",
        "--min-speedup",
        "1.0",
        "--output-dir",
        out_dir,
    ]));
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("plan.txt")).unwrap();
    assert_eq!(table, stdout(&o));
    let rows: Vec<&str> = table.lines().filter(|l| l.starts_with(char::is_numeric)).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows[0].contains("Yes (gamma = 4)") && rows[0].contains("1.68"), "{table}");
    assert!(rows[1].contains("Yes (gamma = 2)") && rows[1].contains("1.10"), "{table}");
    assert!(rows[4].contains("Yes (gamma = 1)") && rows[4].contains("1.02"), "{table}");
    for i in [2, 3, 5] {
        assert!(rows[i].contains(" No "), "{table}");
    }

    let path = dir.path().join("plan.jsonl");
    let decisions = parse_plan(&path, &fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(decisions.len(), 6);
    assert_eq!(decisions[0].heterogeneous, Some(true));
    assert_eq!(decisions[4].heterogeneous, Some(false));
    assert_eq!(fs::read_to_string(&path).unwrap(), sdplan::cli::formats::render_plan(&decisions));
}

#[test]
fn plan_at_median_alpha_is_all_no() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_owned(&plan_args(&[
        "--traces",
        &data("traces.jsonl"),
        "--task",
        "translation",
        "--alpha-percentile",
        "50",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]));
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("alpha 0.1700"), "{out}");
    assert!(!out.contains("Yes"), "{out}");
}

#[test]
fn plan_outside_profiled_lengths_is_a_coverage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_owned(&plan_args(&["--alpha", "0.9", "--seq-len", "300", "--output-dir", dir.path().to_str().unwrap()]));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("do not cover"), "{}", stderr(&o));
}

#[test]
fn plan_missing_input_file_is_an_input_error() {
    let o = sdplan(&["plan", "--platform", "/nonexistent/p.jsonl", "--profiles", &data("profiles.jsonl"), "--alpha", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(sdplan(&["plan", "--bogus"]).status.code(), Some(1));
    assert_eq!(sdplan(&[]).status.code(), Some(1));
    assert_eq!(sdplan(&["--help"]).status.code(), Some(0));
}

#[test]
fn single_unit_platform_has_no_heterogeneity_column() {
    let dir = tempfile::tempdir().unwrap();
    let platform = write(
        dir.path(),
        "platform.jsonl",
        "{\"format\":\"sdplan-platform\",\"version\":1}\n{\"unit_id\":\"a55\",\"kind\":\"cpu\",\"resource_count\":2}\n{\"partition_count\":2}\n",
    );
    let o = sdplan(&[
        "plan",
        "--platform",
        &platform,
        "--profiles",
        &data("profiles.jsonl"),
        "--alpha",
        "0.99",
        "--min-speedup",
        "1.0",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let path = dir.path().join("plan.jsonl");
    let decisions = parse_plan(&path, &fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(decisions.len(), 2);
    assert!(decisions.iter().all(|d| d.heterogeneous.is_none()));
    assert!(decisions.iter().any(|d| d.use_speculation));
}

#[test]
fn output_dir_environment_variable_wins() {
    let dir = tempfile::tempdir().unwrap();
    let env_dir = dir.path().join("from-env");
    let flag_dir = dir.path().join("from-flag");
    let o = Command::new(env!("CARGO_BIN_EXE_sdplan"))
        .args(["simulate", "--c", "0.4", "--alphas", "0.5", "--gammas", "2", "--rounds", "10"])
        .arg("--output-dir")
        .arg(&flag_dir)
        .env("SDPLAN_OUTPUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(env_dir.join("sweep.jsonl").exists());
    assert!(!flag_dir.exists());
}

#[test]
fn single_round_sweep_reports_absent_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let o = sdplan(&[
        "simulate",
        "--c",
        "0.3",
        "--alphas",
        "0.5,0.9",
        "--gammas",
        "1,3",
        "--rounds",
        "1",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let path = dir.path().join("sweep.jsonl");
    let records = parse_sweep(&path, &fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(records.len(), 4);
    assert!(records.iter().all(|r| r.stderr.is_none()));
    assert_eq!(
        records.iter().map(|r| (r.alpha, r.gamma)).collect::<Vec<_>>(),
        vec![(0.5, 1), (0.5, 3), (0.9, 1), (0.9, 3)]
    );
}

#[test]
fn simulate_from_profiles_and_fit_overhead() {
    let dir = tempfile::tempdir().unwrap();
    let o = sdplan(&[
        "simulate",
        "--platform",
        &data("platform.jsonl"),
        "--profiles",
        &data("profiles.jsonl"),
        "--mapping",
        "mali,a55",
        "--alphas",
        "0.9",
        "--gammas",
        "5",
        "--alpha",
        "0.9",
        "--gamma",
        "5",
        "--fit-alpha-shift",
        "0.04",
        "--rounds",
        "20000",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("c 0.3578"), "{out}");
    let cal: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("calibration.json")).unwrap()).unwrap();
    let o_ms = cal["per_module_call_ms"].as_f64().unwrap();
    assert!(o_ms > 0.0);
    let sim = cal["simulated_speedup"].as_f64().unwrap();
    let se = cal["simulated_stderr"].as_f64().unwrap();
    let pred = cal["predicted_speedup"].as_f64().unwrap();
    assert!((sim - pred).abs() < 4.0 * se, "{sim} vs {pred} (se {se})");
}

#[test]
fn simulate_unknown_unit_is_an_input_error() {
    let o = sdplan(&[
        "simulate",
        "--platform",
        &data("platform.jsonl"),
        "--profiles",
        &data("profiles.jsonl"),
        "--mapping",
        "npu,a55",
        "--rounds",
        "10",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown unit npu"));
}

#[test]
fn toy_greedy_run_matches_exact_statistics() {
    let o = sdplan(&[
        "toy",
        "--draft",
        &data("toy_draft.txt"),
        "--target",
        &data("toy_target.txt"),
        "--rule",
        "greedy",
        "--steps",
        "999",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("exact_mean_alpha 0.666667"), "{out}");
    assert!(out.contains("exact_tokens_per_round 3.000000"), "{out}");
}

#[test]
fn toy_rejects_mismatched_vocabularies() {
    let dir = tempfile::tempdir().unwrap();
    let small = write(dir.path(), "small.txt", "0.5 0.5\n0.5 0.5\n");
    let o = sdplan(&["toy", "--draft", &small, "--target", &data("toy_target.txt")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("vocabulary mismatch"), "{}", stderr(&o));
}
