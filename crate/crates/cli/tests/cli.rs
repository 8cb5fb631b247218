use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vulnscan_cli::{EXIT_PARSE, EXIT_RUNTIME, EXIT_USAGE};

fn vulnscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vulnscan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = vulnscan(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const THREE: &str = r#"{"id":"a","code":"int f(int x) { return x + 1; }","origin":"github"}
{"id":"b","code":"void g(char *p) { strcpy(p, \"hi\"); }","origin":"debian","findings":[{"tool":"flawfinder","finding":"buffer/strcpy"}]}
{"id":"c","code":"int h(void) { /* note */ return 0x10; }","origin":"sateiv","label":false}
"#;

#[test]
fn lex_three_functions() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = path(dir.path(), "c.jsonl");
    std::fs::write(&corpus, THREE).unwrap();
    let text = ok(&["lex", s(&corpus)]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("a\t"));
    // 0x10 lexes as the digits 1 and 6
    let c_ids: Vec<&str> = lines[2].split('\t').nth(1).unwrap().split(' ').collect();
    let table = ok(&["tokens"]);
    let id_of = |name: &str| {
        table
            .lines()
            .find(|l| l.split(',').nth(1) == Some(name))
            .unwrap()
            .split(',')
            .next()
            .unwrap()
            .to_string()
    };
    let (one, six) = (id_of("int_1"), id_of("int_6"));
    assert!(c_ids.windows(2).any(|w| w[0] == one && w[1] == six));
}

#[test]
fn token_table_dump() {
    let table = ok(&["tokens"]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "id,name,category");
    assert_eq!(lines.len(), 157);
}

#[test]
fn split_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = path(dir.path(), "syn.jsonl");
    ok(&[
        "synth",
        "-o",
        s(&corpus),
        "--functions",
        "60",
        "--seed",
        "3",
    ]);
    let (a, b) = (path(dir.path(), "a.json"), path(dir.path(), "b.json"));
    ok(&["split", s(&corpus), "-o", s(&a), "--seed", "7"]);
    ok(&["split", s(&corpus), "-o", s(&b), "--seed", "7"]);
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let v: serde_json::Value = serde_json::from_slice(&ta).unwrap();
    assert_eq!(v["seed"], 7);
    assert_eq!(v["train"].as_array().unwrap().len(), 48);
    assert_eq!(v["val"].as_array().unwrap().len(), 6);
}

#[test]
fn curate_and_label() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = path(dir.path(), "c.jsonl");
    let mut text = THREE.to_string();
    // same tokens as "a" after renaming
    text.push_str(r#"{"id":"d","code":"int q(int y) { return y + 1; }","origin":"github"}"#);
    text.push('\n');
    text.push_str(r#"{"id":"e","code":"int bad(void) { return `; }","origin":"other"}"#);
    text.push('\n');
    std::fs::write(&corpus, text).unwrap();
    let (curated, stats, labelled, freq) = (
        path(dir.path(), "cur.jsonl"),
        path(dir.path(), "st.json"),
        path(dir.path(), "lab.jsonl"),
        path(dir.path(), "f.csv"),
    );
    ok(&[
        "curate",
        s(&corpus),
        "-o",
        s(&curated),
        "--stats",
        s(&stats),
    ]);
    let kept = std::fs::read_to_string(&curated).unwrap();
    let ids: Vec<String> = kept
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["id"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert_eq!(ids, ["a", "b", "c"]);
    let st: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!(st["before"], 5);
    assert_eq!(st["after"], 3);
    assert_eq!(st["per_origin"]["github"]["duplicates"], 1);
    assert_eq!(st["per_origin"]["other"]["unlexable"], 1);

    ok(&[
        "label",
        s(&curated),
        "-o",
        s(&labelled),
        "--frequencies",
        s(&freq),
    ]);
    let labels: Vec<serde_json::Value> = std::fs::read_to_string(&labelled)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(labels[0]["label"], false);
    assert_eq!(labels[1]["label"], true);
    assert_eq!(labels[1]["cwes"], serde_json::json!(["CWE-120"]));
    assert_eq!(labels[2]["label"], false);
    assert_eq!(
        std::fs::read_to_string(&freq).unwrap(),
        "cwe,count,percent\nCWE-120,1,100.00\n"
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(vulnscan(&["frobnicate"]).status.code(), Some(EXIT_USAGE));

    let bad = path(dir.path(), "bad.jsonl");
    std::fs::write(&bad, "{\"id\": 1}\n").unwrap();
    let out = vulnscan(&["lex", s(&bad)]);
    assert_eq!(out.status.code(), Some(EXIT_PARSE));
    let msg = String::from_utf8(out.stderr).unwrap();
    assert_eq!(msg.lines().count(), 1, "{msg}");
    assert!(msg.contains("line 1"), "{msg}");

    let missing = path(dir.path(), "missing.jsonl");
    assert_eq!(
        vulnscan(&["lex", s(&missing)]).status.code(),
        Some(EXIT_RUNTIME)
    );

    let corpus = path(dir.path(), "syn.jsonl");
    let split = path(dir.path(), "split.json");
    ok(&["synth", "-o", s(&corpus), "--functions", "30"]);
    ok(&["label", s(&corpus), "-o", s(&corpus)]);
    ok(&["split", s(&corpus), "-o", s(&split)]);
    let ck = path(dir.path(), "ck.json");
    let out = vulnscan(&[
        "train",
        "--corpus",
        s(&corpus),
        "--split",
        s(&split),
        "-o",
        s(&ck),
        "--set",
        "width=3",
    ]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    let msg = String::from_utf8(out.stderr).unwrap();
    assert!(
        msg.contains("valid keys") && msg.contains("noise_variance"),
        "{msg}"
    );

    let conf = path(dir.path(), "run.conf");
    std::fs::write(&conf, "n 4\n").unwrap();
    let out = vulnscan(&[
        "train",
        "--corpus",
        s(&corpus),
        "--split",
        s(&split),
        "-o",
        s(&ck),
        "--config",
        s(&conf),
    ]);
    assert_eq!(out.status.code(), Some(EXIT_PARSE));
}

#[test]
fn small_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| path(dir.path(), n);
    ok(&[
        "synth",
        "-o",
        s(&p("raw.jsonl")),
        "--functions",
        "120",
        "--fraction",
        "0.25",
        "--seed",
        "1",
    ]);
    ok(&["curate", s(&p("raw.jsonl")), "-o", s(&p("cur.jsonl"))]);
    ok(&["label", s(&p("cur.jsonl")), "-o", s(&p("lab.jsonl"))]);
    ok(&[
        "split",
        s(&p("lab.jsonl")),
        "-o",
        s(&p("split.json")),
        "--seed",
        "5",
    ]);
    let conf = p("small.conf");
    std::fs::write(
        &conf,
        "n = 8\nk = 4\nhidden1 = 8\nhidden2 = 4\nepochs = 2\nbatch = 16\n",
    )
    .unwrap();
    ok(&[
        "train",
        "--corpus",
        s(&p("lab.jsonl")),
        "--split",
        s(&p("split.json")),
        "-o",
        s(&p("ck.json")),
        "--history",
        s(&p("hist.jsonl")),
        "--config",
        s(&conf),
        "--seed",
        "2",
    ]);
    let hist = std::fs::read_to_string(p("hist.jsonl")).unwrap();
    assert_eq!(hist.lines().count(), 2);
    assert!(hist.starts_with("{\"epoch\":1,\"train_loss\":"));

    ok(&[
        "features",
        "--checkpoint",
        s(&p("ck.json")),
        "--corpus",
        s(&p("lab.jsonl")),
        "-o",
        s(&p("feat.txt")),
    ]);
    let feats = std::fs::read_to_string(p("feat.txt")).unwrap();
    assert!(feats.starts_with("n=8\n"));
    assert_eq!(feats.lines().count(), 121);

    ok(&[
        "train-forest",
        "--features",
        s(&p("feat.txt")),
        "--corpus",
        s(&p("lab.jsonl")),
        "--split",
        s(&p("split.json")),
        "-o",
        s(&p("forest.json")),
        "--set",
        "trees=5",
        "--seed",
        "3",
    ]);
    let forest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p("forest.json")).unwrap()).unwrap();
    assert_eq!(forest["trees"].as_array().unwrap().len(), 5);
    assert_eq!(forest["config"]["seed"], 3);

    let report = ok(&[
        "eval",
        "--checkpoint",
        s(&p("ck.json")),
        "--forest",
        s(&p("forest.json")),
        "--corpus",
        s(&p("lab.jsonl")),
        "--split",
        s(&p("split.json")),
        "--threshold",
        "0.4",
    ]);
    let r: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(r["examples"], 12);
    for m in ["cnn", "forest"] {
        let c = &r["models"][m]["confusion"];
        let total: u64 = ["tp", "fp", "fn", "tn"]
            .iter()
            .map(|k| c[k].as_u64().unwrap())
            .sum();
        assert_eq!(total, 12);
        assert_eq!(r["models"][m]["threshold"], 0.4);
    }

    std::fs::write(
        p("f.c"),
        "int f(char *d, char *s) { strcat(d, s); return 0; }",
    )
    .unwrap();
    std::fs::write(p("tiny.c"), "int f() { }").unwrap();
    std::fs::write(p("broken.c"), "int f() { return @; }").unwrap();
    let verdicts = ok(&[
        "scan",
        "--checkpoint",
        s(&p("ck.json")),
        "--forest",
        s(&p("forest.json")),
        s(&p("f.c")),
        s(&p("tiny.c")),
        s(&p("broken.c")),
    ]);
    let v: Vec<serde_json::Value> = verdicts
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(v.len(), 3);
    assert!(v[0]["verdict"] == "vulnerable" || v[0]["verdict"] == "clean");
    assert!(v[0]["cnn"].is_f64() && v[0]["forest"].is_f64());
    assert_eq!(v[1]["verdict"], "skipped");
    assert_eq!(v[2]["verdict"], "skipped");
}
