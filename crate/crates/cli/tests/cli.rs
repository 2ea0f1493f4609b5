use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

use qax_core::squad::{
    parse_dataset, serialize_dataset, validate_dataset, Answer, Article, Dataset, Paragraph, Qa,
};
use serde_json::Value;

fn qax(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qax"))
        .args(args)
        .env_remove("QAX_TRANSLATE_URL")
        .env_remove("QAX_EMBED_URL")
        .env_remove("QAX_API_KEY")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn sample() -> Dataset {
    Dataset::new(
        "v2.0",
        vec![Article::new(
            "Ethiopia",
            vec![
                Paragraph::new(
                    "Addis Ababa is the capital of Ethiopia.",
                    vec![
                        Qa::answerable(
                            "q1",
                            "What is the capital?",
                            vec![Answer::new("Addis Ababa", 0)],
                        ),
                        Qa::answerable(
                            "q2",
                            "Capital of which country?",
                            vec![Answer::new("Ethiopia", 30)],
                        ),
                    ],
                ),
                Paragraph::new(
                    "The Blue Nile starts at Lake Tana.",
                    vec![
                        Qa::answerable(
                            "q3",
                            "Where does it start?",
                            vec![Answer::new("Lake Tana", 24)],
                        ),
                        Qa::unanswerable("q4", "How long is the Amazon?"),
                    ],
                ),
            ],
        )],
    )
}

fn write_dataset(dir: &Path, name: &str, d: &Dataset) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serialize_dataset(d).unwrap()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn core_data(name: &str) -> String {
    format!("{}/../core/tests/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn align_prints_json() {
    let o = qax(&[
        "align",
        "--context",
        "the cat sat",
        "--answer",
        "cat",
        "--rel-pos",
        "0.3",
    ]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["char_start"], 4);
    assert_eq!(v["text"], "cat");
    assert!((v["score"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!(v["candidates_examined"].as_u64().unwrap() > 0);
    assert!(v["proximity"].is_number());
}

#[test]
fn align_infeasible_exits_1() {
    let o = qax(&["align", "--context", "cat", "--answer", "the cat sat"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no feasible window"));
}

#[test]
fn align_echoes_update_rule() {
    let o = qax(&[
        "align",
        "--context",
        "the cat sat",
        "--answer",
        "cat",
        "--update-rule",
        "paper_literal",
    ]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["update_rule"], "paper_literal");
}

#[test]
fn bad_weights_exit_1() {
    let o = qax(&[
        "align",
        "--context",
        "a b",
        "--answer",
        "a",
        "--w1",
        "0.9",
        "--w2",
        "0.9",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn translate_identity_round() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_dataset(dir.path(), "in.json", &sample());
    let out = dir.path().join("out.json");
    let o = qax(&[
        "translate-dataset",
        s(&input),
        s(&out),
        "--split",
        "dev",
        "--quiet",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = parse_dataset(&std::fs::read(&out).unwrap()).unwrap();
    assert!(validate_dataset(&d).is_empty());
    assert_eq!(d.question_count(), 4);
    let report: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out.json.report.json")).unwrap())
            .unwrap();
    assert_eq!(report["counts"]["answerable_kept"], 3);
    assert_eq!(report["counts"]["unanswerable_kept"], 1);
    assert_eq!(report["histogram"][9], 3);
    assert!(stdout(&o).contains("answerable kept      3"));
}

#[test]
fn translate_requires_split() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_dataset(dir.path(), "in.json", &sample());
    let o = qax(&[
        "translate-dataset",
        s(&input),
        s(&dir.path().join("o.json")),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn unreadable_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let o = qax(&[
        "translate-dataset",
        s(&missing),
        s(&dir.path().join("o.json")),
        "--split",
        "train",
    ]);
    assert_eq!(code(&o), 1);
    let garbage = dir.path().join("bad.json");
    std::fs::write(&garbage, "{\"data\": [").unwrap();
    let o = qax(&[
        "translate-dataset",
        s(&garbage),
        s(&dir.path().join("o.json")),
        "--split",
        "train",
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
}

/// Echoes translations, but answers 400 for one question.
fn start_translator() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/translate", listener.local_addr().unwrap());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line.trim().is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let req: Value = serde_json::from_slice(&body).unwrap();
            let text = req["text"].as_str().unwrap();
            let (status, payload) = if text == "Where does it start?" {
                (400, r#"{"error":"refused"}"#.to_string())
            } else {
                (200, serde_json::json!({ "translation": text }).to_string())
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    url
}

#[test]
fn provider_failure_is_partial_success() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_dataset(dir.path(), "in.json", &sample());
    let out = dir.path().join("out.json");
    let url = start_translator();
    let o = qax(&[
        "translate-dataset",
        s(&input),
        s(&out),
        "--split",
        "dev",
        "--quiet",
        "--translator",
        "http",
        "--translate-url",
        &url,
        "--retry-base-ms",
        "1",
        "--cache-dir",
        s(&dir.path().join("cache")),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out.json.report.json")).unwrap())
            .unwrap();
    let failed: Vec<&Value> = report["outcomes"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["status"] == "translation_failed")
        .collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0]["qa_id"], "q3");
    let d = parse_dataset(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(d.question_count(), 3);

    let o = qax(&[
        "cache",
        "inspect",
        "--cache-dir",
        s(&dir.path().join("cache")),
    ]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("translations"));
    assert!(!stdout(&o).contains("entries      0"));
    let o = qax(&[
        "cache",
        "clear",
        "--cache-dir",
        s(&dir.path().join("cache")),
    ]);
    assert_eq!(code(&o), 0);
    let o = qax(&[
        "cache",
        "inspect",
        "--cache-dir",
        s(&dir.path().join("cache")),
    ]);
    assert!(stdout(&o).contains("entries      0"));
}

#[test]
fn stats_reads_reports_and_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_dataset(dir.path(), "in.json", &sample());
    let out = dir.path().join("out.json");
    assert_eq!(
        code(&qax(&[
            "translate-dataset",
            s(&input),
            s(&out),
            "--split",
            "dev",
            "--quiet"
        ])),
        0
    );

    let from_report = qax(&["stats", s(&dir.path().join("out.json.report.json"))]);
    assert_eq!(code(&from_report), 0);
    let text = stdout(&from_report);
    assert!(text.contains("[0.9, 1.0]        3"), "{text}");
    assert!(text.contains("unanswerable kept    1"));

    let from_dataset = qax(&["stats", s(&out)]);
    assert_eq!(code(&from_dataset), 0);
    assert!(stdout(&from_dataset).contains("[0.9, 1.0]        3"));

    let junk = dir.path().join("junk.json");
    std::fs::write(&junk, "[1, 2]").unwrap();
    assert_eq!(code(&qax(&["stats", s(&junk)])), 1);
    assert_eq!(code(&qax(&["stats", s(&dir.path().join("nope.json"))])), 1);
}

#[test]
fn evaluate_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let gold = write_dataset(dir.path(), "gold.json", &sample());
    let perfect = dir.path().join("perfect.json");
    std::fs::write(
        &perfect,
        r#"{"q1":"Addis Ababa","q2":"Ethiopia","q3":"Lake Tana","q4":""}"#,
    )
    .unwrap();
    let o = qax(&["evaluate", s(&perfect), s(&gold)]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().next(), Some("EM 100.00 F1 100.00"));

    let half = dir.path().join("half.json");
    std::fs::write(
        &half,
        r#"{"q1":"Addis Ababa","q2":"Kenya","q3":"Lake Tana","q4":"yes"}"#,
    )
    .unwrap();
    let o = qax(&["evaluate", s(&half), s(&gold)]);
    assert_eq!(stdout(&o).lines().next(), Some("EM 50.00 F1 50.00"));

    let o = qax(&[
        "evaluate",
        &core_data("metrics_pred.json"),
        &core_data("metrics_gold.json"),
    ]);
    assert_eq!(stdout(&o).lines().next(), Some("EM 45.00 F1 65.50"));

    let o = qax(&[
        "evaluate",
        "--json",
        &core_data("metrics_pred.json"),
        &core_data("metrics_gold.json"),
    ]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["f1"].as_f64().unwrap() - 65.5).abs() < 1e-9);
    assert_eq!(v["per_question"].as_object().unwrap().len(), 20);

    let unknown = dir.path().join("unknown.json");
    std::fs::write(&unknown, r#"{"zzz":"x"}"#).unwrap();
    let o = qax(&["evaluate", s(&unknown), s(&gold)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("zzz"));
}

#[test]
fn help_lists_defaults() {
    let o = qax(&["translate-dataset", "--help"]);
    let text = stdout(&o);
    for want in [
        "[default: 0.6]",
        "[default: 3]",
        "[default: 6000]",
        "[default: 700]",
        "[default: 0.6666666666666666]",
        "[default: 0.3333333333333333]",
        "[default: 8]",
        "[default: 5]",
        "[default: 250]",
    ] {
        assert!(text.contains(want), "missing {want}");
    }
    for sub in [
        &["align"][..],
        &["stats"],
        &["evaluate"],
        &["cache", "inspect"],
        &["cache", "clear"],
    ] {
        let mut args = sub.to_vec();
        args.push("--help");
        assert_eq!(code(&qax(&args)), 0);
    }
}

#[test]
fn config_file_layers_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("qax.conf");
    std::fs::write(
        &conf,
        "# scoring\nupdate-rule = paper_literal\nrel-pos = 0.3\n",
    )
    .unwrap();
    let o = qax(&[
        "align",
        "--config",
        s(&conf),
        "--context",
        "the cat sat",
        "--answer",
        "cat",
    ]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["update_rule"], "paper_literal");
    assert_eq!(v["char_start"], 4);

    let o = qax(&[
        "align",
        "--config",
        s(&conf),
        "--context",
        "the cat sat",
        "--answer",
        "cat",
        "--update-rule",
        "lexicographic",
    ]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["update_rule"], "lexicographic");

    std::fs::write(&conf, "no-such-flag = 1\n").unwrap();
    let o = qax(&[
        "align",
        "--config",
        s(&conf),
        "--context",
        "a",
        "--answer",
        "a",
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no-such-flag"));
}

#[test]
fn config_supplies_split() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_dataset(dir.path(), "in.json", &sample());
    let conf = dir.path().join("qax.conf");
    std::fs::write(
        &conf,
        "split = train\nunanswerable-keep-train = 0\nquiet = true\n",
    )
    .unwrap();
    let out = dir.path().join("out.json");
    let o = qax(&[
        "--config",
        s(&conf),
        "translate-dataset",
        s(&input),
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stderr.is_empty());
    let d = parse_dataset(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(d.question_count(), 3);
}
