mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::json;

fn groundcheck(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_groundcheck"))
        .arg("--workdir")
        .arg(dir)
        .args(args)
        .env_remove("GROUNDCHECK_API_KEY")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn archive(assistant: &str, claim: &str, template: u8, body: &str, urls: &[&str]) -> serde_json::Value {
    json!({
        "assistant_id": assistant,
        "claim_id": claim,
        "role": if template <= 3 { "FactChecker" } else { "ClaimBeliever" },
        "template_id": if template <= 3 { template } else { template - 3 },
        "body": body,
        "sources": urls.iter().map(|u| json!({"url": u})).collect::<Vec<_>>(),
    })
}

/// A scratch directory holding a copy of the golden transcripts, ratings and
/// cache, laid out under the default relative paths.
fn golden_workdir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let golden = common::golden_dir();
    common::copy_dir(&golden.join("transcripts"), &dir.path().join("transcripts"));
    common::copy_dir(&golden.join("cache"), &dir.path().join("cache"));
    std::fs::copy(golden.join("ratings.csv"), dir.path().join("ratings.csv")).unwrap();
    std::fs::copy(golden.join("mock.json"), dir.path().join("mock.json")).unwrap();
    dir
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&groundcheck(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&groundcheck(dir.path(), &["ground", "--k", "many"])), 1);
    assert_eq!(code(&groundcheck(dir.path(), &[])), 1);
    let bad_config = dir.path().join("bad.toml");
    std::fs::write(&bad_config, "no_such_key = 3\n").unwrap();
    assert_eq!(code(&groundcheck(dir.path(), &["--config", "bad.toml", "credibility"])), 1);
    let help = groundcheck(dir.path(), &["--help"]);
    assert_eq!(code(&help), 0);
    assert!(String::from_utf8_lossy(&help.stdout).contains("credibility"));
}

#[test]
fn ingest_skips_a_corrupt_archive() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    std::fs::create_dir(&raw).unwrap();
    for (i, claim) in ["H1", "H2", "C1", "P1", "L1"].iter().enumerate() {
        let a = archive(
            "alpha",
            claim,
            (i % 6 + 1) as u8,
            "The claim is false.[1]\n\nAuthorities rejected it.[2]",
            &["https://www.factcheck.example/a", "https://tabloid.example/b"],
        );
        std::fs::write(raw.join(format!("{claim}.json")), a.to_string()).unwrap();
    }
    std::fs::write(raw.join("broken.json"), "{\"assistant_id\": ").unwrap();
    let out = groundcheck(dir.path(), &["ingest"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("broken.json"), "{stdout}");
    let written: Vec<_> = std::fs::read_dir(dir.path().join("transcripts")).unwrap().collect();
    assert_eq!(written.len(), 5);
    let t: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("transcripts/alpha__H1__FC-1.json")).unwrap())
            .unwrap();
    assert_eq!(t["topic"], "Health");
    assert_eq!(t["citations"][0]["domain"], "factcheck.example");
    assert_eq!(t["segments"][1]["citation_refs"], json!([2]));
}

#[test]
fn ingest_with_nothing_to_do_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("raw")).unwrap();
    let out = groundcheck(dir.path(), &["ingest"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("no inputs"), "{}", stderr(&out));

    std::fs::write(dir.path().join("raw/a.json"), "not json").unwrap();
    let out = groundcheck(dir.path(), &["ingest"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_inputs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&groundcheck(dir.path(), &["credibility"])), 2);
    assert_eq!(code(&groundcheck(dir.path(), &["report"])), 2);
}

#[test]
fn remote_grounding_without_a_key_is_a_backend_error() {
    let dir = golden_workdir();
    let out = groundcheck(dir.path(), &["ground", "--offline"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("GROUNDCHECK_API_KEY"), "{}", stderr(&out));
    assert!(!dir.path().join("out/groundedness.csv").exists());
}

#[test]
fn full_mock_pipeline_and_report() {
    let dir = golden_workdir();
    let cred = groundcheck(dir.path(), &["credibility"]);
    assert_eq!(code(&cred), 0, "{}", stderr(&cred));
    let ground = groundcheck(dir.path(), &["ground", "--mock", "mock.json", "--offline"]);
    assert_eq!(code(&ground), 0, "{}", stderr(&ground));
    let stdout = String::from_utf8_lossy(&ground.stdout);
    assert!(stdout.contains("20 transcripts (2 refused, 0 failed)"), "{stdout}");
    let report = groundcheck(dir.path(), &["report"]);
    assert_eq!(code(&report), 0, "{}", stderr(&report));

    let out = dir.path().join("out");
    for f in [
        "credibility.csv",
        "stats.json",
        "distribution.csv",
        "groundedness.csv",
        "hallucination.csv",
        "per_response.csv",
        "verdicts.jsonl",
        "grounding.json",
        "report.json",
        "summary.txt",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let cells = report["cells"].as_array().unwrap();
    let last = cells.last().unwrap();
    assert!(last["credibility"].is_object() && last["groundedness"].is_object());
    let overall = cells
        .iter()
        .filter(|c| c["key"]["assistant"].is_null() && c["key"]["topic"].is_null() && c["key"]["user_type"].is_null())
        .count();
    assert_eq!(overall, 1);
    let per = std::fs::read_to_string(out.join("per_response.csv")).unwrap();
    assert_eq!(per.lines().count(), 21);
    let worked = per.lines().find(|l| l.starts_with("alpha,L2,")).unwrap();
    assert!(worked.contains(",16,16,12,12,0,2,2,"), "{worked}");
}

#[test]
fn report_from_credibility_alone() {
    let dir = golden_workdir();
    assert_eq!(code(&groundcheck(dir.path(), &["credibility"])), 0);
    let out = groundcheck(dir.path(), &["report"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    for cell in report["cells"].as_array().unwrap() {
        assert!(cell["credibility"].is_object());
        assert!(cell["groundedness"].is_null());
    }
}

#[test]
fn conflicting_rows_stop_the_report() {
    let dir = golden_workdir();
    assert_eq!(code(&groundcheck(dir.path(), &["credibility"])), 0);
    let path = dir.path().join("out/credibility.csv");
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    // the same cell again with a different transcript count
    let col = headers.iter().position(|h| h == "transcripts").unwrap();
    let changed: csv::StringRecord =
        rows[0].iter().enumerate().map(|(i, v)| if i == col { "999" } else { v }).collect();
    let mut w = csv::Writer::from_path(&path).unwrap();
    w.write_record(&headers).unwrap();
    for r in rows.iter().chain([&changed]) {
        w.write_record(r).unwrap();
    }
    w.flush().unwrap();
    let out = groundcheck(dir.path(), &["report"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("conflicting rows"), "{}", stderr(&out));
}

#[test]
fn rerunning_ground_reproduces_every_file() {
    let dir = golden_workdir();
    let run = || {
        let out = groundcheck(dir.path(), &["ground", "--mock", "mock.json", "--offline"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let mut files = std::collections::BTreeMap::new();
        for e in std::fs::read_dir(dir.path().join("out")).unwrap() {
            let e = e.unwrap();
            files.insert(e.file_name(), std::fs::read(e.path()).unwrap());
        }
        files
    };
    let first = run();
    let second = run();
    assert_eq!(first, second);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = golden_workdir();
    std::fs::write(
        dir.path().join("run.toml"),
        "mock = \"mock.json\"\noffline = true\noutput = \"results\"\ngroup_by = [\"assistant\"]\n",
    )
    .unwrap();
    let out = groundcheck(dir.path(), &["--config", "run.toml", "ground", "--alpha", "0.25"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let hs = std::fs::read_to_string(dir.path().join("results/hallucination.csv")).unwrap();
    let lines: Vec<&str> = hs.lines().collect();
    assert_eq!(lines.len(), 4, "{hs}");
    assert!(lines[1].starts_with("assistant,alpha,"));
    assert!(lines.iter().skip(1).all(|l| l.contains(",0.25,")), "{hs}");
    let bad = groundcheck(dir.path(), &["--config", "run.toml", "ground", "--alpha", "1.5"]);
    assert_eq!(code(&bad), 1, "{}", stderr(&bad));
}
