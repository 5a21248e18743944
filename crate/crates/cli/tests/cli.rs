use std::path::Path;
use std::process::{Command, Output};

use cultvqa::evalkit::MetricReport;
use cultvqa::pipeline::AnswerOutput;

fn cultvqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cultvqa")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const DEMO: [&str; 5] = ["answer", "--image", "banh_xeo_demo", "--question", "Đây là món gì?"];

fn unused_port_url() -> String {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    format!("http://{}/", l.local_addr().unwrap())
}

#[test]
fn demo_answer_names_banh_xeo() {
    let o = cultvqa(&DEMO);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("bánh xèo"));

    let o = cultvqa(&[&DEMO[..], &["--format", "json-lines"]].concat());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1);
    let out: AnswerOutput = serde_json::from_str(text.trim_end()).unwrap();
    assert_eq!(out.answered_entity().as_deref(), Some("banh_xeo"));
    assert!(out.consistency.overall);
}

#[test]
fn structured_output_is_byte_identical_across_runs() {
    let args = [&DEMO[..], &["--format", "json-lines"]].concat();
    let runs: Vec<Vec<u8>> = (0..3).map(|_| cultvqa(&args).stdout).collect();
    assert!(runs.windows(2).all(|w| w[0] == w[1]));

    let eval = |threads: &str| cultvqa(&["eval", "--format", "json-lines", "--threads", threads]).stdout;
    assert_eq!(eval("1"), eval("4"));
}

#[test]
fn kb_lookup_folds_diacritics() {
    let o = cultvqa(&["kb", "lookup", "banh xeo"]);
    assert_eq!(o.status.code(), Some(0));
    let first = stdout(&o).lines().next().unwrap().to_string();
    let cols: Vec<&str> = first.split('\t').collect();
    assert_eq!(cols[0], "banh_xeo");
    assert_eq!(cols[1].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn dataset_stats_reproduces_composition_table() {
    let o = cultvqa(&["dataset", "stats", "--counts", "bundled"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let cuisine = text.lines().find(|l| l.starts_with("Cuisine ")).unwrap();
    assert!(cuisine.ends_with("10.3%"), "{cuisine}");
    assert!(text.contains("questions/image: 3.2"));
}

#[test]
fn ablate_without_kb_has_zero_accuracy() {
    let o = cultvqa(&["ablate", "--config", "no_kb", "--format", "json-lines"]);
    assert_eq!(o.status.code(), Some(0));
    let line: serde_json::Value = serde_json::from_str(stdout(&o).trim_end()).unwrap();
    let report: MetricReport = serde_json::from_value(line["report"].clone()).unwrap();
    assert_eq!(report.aggregate.cultural_accuracy, 0.0);

    let o = cultvqa(&["ablate"]);
    let text = stdout(&o);
    assert!(text.starts_with("Method/config | BLEU-4 | Cultural Accuracy | Explanation Quality"));
    assert_eq!(text.lines().filter(|l| l.starts_with("no_") && l.contains(" | ")).count(), 3);
}

#[test]
fn explain_writes_svg_overlay() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("overlay.svg");
    let o = cultvqa(&[
        "explain",
        "--image",
        "banh_xeo_demo",
        "--question",
        "Món ăn này có ý nghĩa gì?",
        "--svg",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("consistency: pass"));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.contains("<svg "));
    assert!(text.contains("<rect"));
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("answer.jsonl");
    let o = cultvqa(&[&DEMO[..], &["--format", "json-lines", "--out", path.to_str().unwrap()]].concat());
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    serde_json::from_str::<AnswerOutput>(text.trim_end()).unwrap();
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn dataset_validate_and_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write(
        dir.path(),
        "ok.jsonl",
        r#"{"image_id":"a","image_ref":"a.jpg","category":"Cuisine","questions":[{"question":"q","answer":"a","qtype":"identification","gold_entities":["khong_co"]}]}"#,
    );
    let o = cultvqa(&["dataset", "validate", "--manifest", &ok]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("khong_co"));
    assert_eq!(cultvqa(&["dataset", "validate", "--manifest", &ok, "--strict"]).status.code(), Some(8));

    let empty = write(
        dir.path(),
        "empty.jsonl",
        r#"{"image_id":"img_9","image_ref":"a.jpg","category":"Cuisine","questions":[]}"#,
    );
    let o = cultvqa(&["dataset", "validate", "--manifest", &empty]);
    assert_eq!(o.status.code(), Some(8));
    assert!(String::from_utf8_lossy(&o.stderr).contains("img_9"));

    // 20 yes/yes, 5 yes/no, 10 no/yes, 15 no/no
    let mut labels = String::new();
    for (a, b, n) in [("yes", "yes", 20), ("yes", "no", 5), ("no", "yes", 10), ("no", "no", 15)] {
        for _ in 0..n {
            labels.push_str(&format!("{a}\t{b}\n"));
        }
    }
    let path = write(dir.path(), "labels.tsv", &labels);
    let o = cultvqa(&["dataset", "agreement", &path]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("kappa: 0.4000"));
}

#[test]
fn error_classes_have_distinct_exit_codes() {
    let missing = cultvqa(&["answer", "--image", "no_such_image", "--question", "q"]);
    assert_eq!(missing.status.code(), Some(4));
    assert!(missing.stdout.is_empty());

    let usage = cultvqa(&["answer", "--question", "q"]);
    assert_eq!(usage.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&usage.stderr).contains("Usage"));

    assert_eq!(cultvqa(&[&DEMO[..], &["--kb", "/no/such/kb.jsonl"]].concat()).status.code(), Some(3));

    let url = unused_port_url();
    assert_eq!(cultvqa(&[&DEMO[..], &["--detector-url", &url]].concat()).status.code(), Some(5));

    let url = unused_port_url();
    let gen = cultvqa(&[&DEMO[..], &["--generator", "remote", "--generator-url", &url, "--no-fallback"]].concat());
    assert_eq!(gen.status.code(), Some(6));
    let fell_back = cultvqa(&[&DEMO[..], &["--generator", "remote", "--generator-url", &url]].concat());
    assert_eq!(fell_back.status.code(), Some(0));

    let out = cultvqa(&[&DEMO[..], &["--out", "/no/such/dir/x.txt"]].concat());
    assert_eq!(out.status.code(), Some(7));
}
