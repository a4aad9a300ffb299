//! Exercises every CLI subcommand surface against small fixtures.

use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mmrag"))
}

fn run_ok(args: &[&str]) -> String {
    let output = cli().args(args).output().expect("CLI runs");
    assert!(
        output.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout).unwrap()
}

#[test]
fn mathtool_reads_stdin_and_reports_errors_on_stderr() {
    let mut child = cli()
        .arg("mathtool")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .as_mut()
        .unwrap()
        .write_all(b"Balance H2 + O2 -> H2O\n")
        .unwrap();
    let output = child.wait_with_output().unwrap();
    assert!(output.status.success());
    assert_eq!(
        String::from_utf8_lossy(&output.stdout).trim(),
        "2 H2 + 1 O2 -> 2 H2O"
    );

    // no tool matched: message on stderr, nonzero exit
    let output = cli()
        .args(["mathtool", "--query", "what color is the sky"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("no tool matched"));
    assert!(output.stdout.is_empty());

    // tool errors render as the refusal, still exit 0
    let stdout = run_ok(&["mathtool", "--query", "what is 1/0"]);
    assert_eq!(stdout.trim(), "i don't know");
}

#[test]
fn export_training_recipe_and_datasets() {
    let recipe = run_ok(&["export-training"]);
    assert!(recipe.contains("learning_rate=2e-4"));
    assert!(recipe.contains("max_seq_length=2048/4096"));

    let tmp = tempfile::tempdir().unwrap();
    let annotated = tmp.path().join("annotated.jsonl");
    let lines = [
        // explicit label
        serde_json::json!({
            "query_id": "q1", "question": "when", "context": "ctx",
            "label": "answerable", "ground_truth": "2019",
            "correct_answer": "2019",
            "samples": [["2019", "correct"], ["2018", "incorrect"]],
        }),
        // label estimated from samples: 0 of 2 correct -> unanswerable
        serde_json::json!({
            "query_id": "q2", "question": "who", "context": "ctx",
            "hallucinated_answer": "someone",
            "samples": [["a", "incorrect"], ["b", "incorrect"]],
        }),
    ];
    std::fs::write(
        &annotated,
        lines.iter().map(|l| format!("{l}\n")).collect::<String>(),
    )
    .unwrap();

    let sft = run_ok(&[
        "export-training",
        "--annotated",
        annotated.to_str().unwrap(),
        "--kind",
        "sft",
    ]);
    let records: Vec<serde_json::Value> = sft
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0]["target"], "2019");
    assert_eq!(records[1]["target"], "I don't know");

    let dpo = run_ok(&[
        "export-training",
        "--annotated",
        annotated.to_str().unwrap(),
        "--kind",
        "dpo",
    ]);
    let records: Vec<serde_json::Value> = dpo
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records[0]["better"], "2019");
    assert_eq!(records[0]["worse"], "I don't know");
    assert_eq!(records[1]["better"], "I don't know");
    assert_eq!(records[1]["worse"], "someone");

    let grpo = run_ok(&[
        "export-training",
        "--annotated",
        annotated.to_str().unwrap(),
        "--kind",
        "grpo",
        "--reward-scale",
        "2.0",
    ]);
    let records: Vec<serde_json::Value> = grpo
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 4);
    assert_eq!(records[0]["reward"], 2.0);
    assert_eq!(records[1]["reward"], -1.0);
}

fn write_dataset(path: &Path, n: usize) {
    let mut text = String::new();
    for i in 0..n {
        let domain = ["vehicle", "plant", "food", "animal"][i % 4];
        let line = serde_json::json!({
            "session_id": format!("s{i}"),
            "turn_index": 0,
            "question": format!("question {i}"),
            "image_path": format!("img-{i}"),
            "ground_truth": format!("answer {i}"),
            "domain": domain,
            "question_type": if i % 2 == 0 { "simple" } else { "aggregation" },
        });
        text.push_str(&format!("{line}\n"));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn split_is_deterministic_and_honors_ratio() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = tmp.path().join("dataset.jsonl");
    write_dataset(&dataset, 20);

    for out in ["split1", "split2"] {
        run_ok(&[
            "--seed",
            "7",
            "split",
            "--dataset",
            dataset.to_str().unwrap(),
            "--val-ratio",
            "0.25",
            "--out-dir",
            tmp.path().join(out).to_str().unwrap(),
        ]);
    }
    let train1 = std::fs::read(tmp.path().join("split1/train.jsonl")).unwrap();
    let train2 = std::fs::read(tmp.path().join("split2/train.jsonl")).unwrap();
    assert_eq!(train1, train2);
    let val = std::fs::read_to_string(tmp.path().join("split1/val.jsonl")).unwrap();
    assert_eq!(val.lines().count(), 5);
    let train = std::fs::read_to_string(tmp.path().join("split1/train.jsonl")).unwrap();
    assert_eq!(train.lines().count(), 15);
}

#[test]
fn split_keeps_multi_turn_sessions_intact() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = tmp.path().join("dataset.jsonl");
    // 6 singleton sessions plus one 3-turn session
    let mut text = String::new();
    for i in 0..6 {
        let line = serde_json::json!({
            "session_id": format!("s{i}"), "turn_index": 0,
            "question": format!("q{i}"), "image_path": "img",
            "domain": "vehicle", "question_type": "simple",
        });
        text.push_str(&format!("{line}\n"));
    }
    for turn in 0..3 {
        let line = serde_json::json!({
            "session_id": "multi", "turn_index": turn,
            "question": format!("turn {turn}"), "image_path": "img",
            "domain": "vehicle", "question_type": "multi-turn",
        });
        text.push_str(&format!("{line}\n"));
    }
    std::fs::write(&dataset, text).unwrap();

    run_ok(&[
        "--seed",
        "3",
        "split",
        "--dataset",
        dataset.to_str().unwrap(),
        "--val-ratio",
        "0.4",
        "--out-dir",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    // the 3-turn session must land whole on one side (both outputs load as
    // valid datasets, which enforces turn contiguity)
    let mut multi_sides = 0;
    for side in ["train.jsonl", "val.jsonl"] {
        let text = std::fs::read_to_string(tmp.path().join("out").join(side)).unwrap();
        let turns = text.lines().filter(|l| l.contains("\"multi\"")).count();
        assert!(
            turns == 0 || turns == 3,
            "session torn apart in {side}: {turns} turns"
        );
        if turns == 3 {
            multi_sides += 1;
        }
    }
    assert_eq!(multi_sides, 1);
}

#[test]
fn ensemble_select_search_apply_flow() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = tmp.path().join("dataset.jsonl");
    write_dataset(&dataset, 4);

    // matrix over the four dataset queries; ck1 beats ck2 everywhere
    let matrix_path = tmp.path().join("matrix.jsonl");
    let mut lines = String::new();
    for i in 0..4 {
        for (ck, answer, verdict) in [
            ("ck1", format!("answer {i}"), "correct"),
            ("ck2", "wrong".to_string(), "incorrect"),
        ] {
            let line = serde_json::json!({
                "checkpoint_id": ck,
                "query_id": format!("s{i}#0"),
                "answer": answer,
                "verdict": verdict,
            });
            lines.push_str(&format!("{line}\n"));
        }
    }
    std::fs::write(&matrix_path, lines).unwrap();

    let select_plan = tmp.path().join("select.jsonl");
    run_ok(&[
        "ensemble",
        "select",
        "--matrix",
        matrix_path.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
        "--out",
        select_plan.to_str().unwrap(),
    ]);
    let plan_text = std::fs::read_to_string(&select_plan).unwrap();
    // four domains, each selecting ck1
    assert_eq!(plan_text.lines().count(), 4);
    assert!(plan_text
        .lines()
        .all(|l| l.contains("ck1") && l.contains("subset")));

    let search_plan = tmp.path().join("search.jsonl");
    let stdout = run_ok(&[
        "ensemble",
        "search",
        "--matrix",
        matrix_path.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
        "--out",
        search_plan.to_str().unwrap(),
        "--per-domain",
    ]);
    assert!(stdout.contains("validation refusal score: 1.0000"));

    let results = tmp.path().join("ensembled.jsonl");
    run_ok(&[
        "ensemble",
        "apply",
        "--plan",
        search_plan.to_str().unwrap(),
        "--matrix",
        matrix_path.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
        "--out",
        results.to_str().unwrap(),
    ]);
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(&results)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 4);
    for (i, line) in lines.iter().enumerate() {
        assert_eq!(line["answer"], format!("answer {i}"));
    }
}

#[test]
fn evaluate_and_report_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = tmp.path().join("dataset.jsonl");
    write_dataset(&dataset, 4);

    // hand-written results: two right, one wrong, one refusal
    let results = tmp.path().join("results.jsonl");
    let mut text = String::new();
    for (i, answer) in ["answer 0", "answer 1", "not it", "i don't know"]
        .iter()
        .enumerate()
    {
        let line = serde_json::json!({"query_id": format!("s{i}#0"), "answer": answer});
        text.push_str(&format!("{line}\n"));
    }
    std::fs::write(&results, text).unwrap();

    let judged = tmp.path().join("judged.jsonl");
    let stdout = run_ok(&[
        "--echo",
        "evaluate",
        "--dataset",
        dataset.to_str().unwrap(),
        "--results",
        results.to_str().unwrap(),
        "--out",
        judged.to_str().unwrap(),
    ]);
    // (2 - 1) / 4
    assert!(stdout.contains("overall"), "{stdout}");
    assert!(stdout.contains("0.2500"), "{stdout}");

    let csv = tmp.path().join("report.csv");
    run_ok(&[
        "report",
        "--dataset",
        dataset.to_str().unwrap(),
        "--results",
        judged.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    let report = std::fs::read_to_string(&csv).unwrap();
    assert!(report.contains("overall,4,2,1,1,0.5000,0.2500"), "{report}");
}

#[test]
fn answer_and_classify_with_echo_fallback() {
    let tmp = tempfile::tempdir().unwrap();
    // echo mode: fixture misses answer with a marker string, so the whole
    // flow works with no fixtures at all
    let stdout = run_ok(&[
        "--echo",
        "answer",
        "--question",
        "what is 6*7?",
        "--domain",
        "math",
    ]);
    assert_eq!(stdout.trim(), "42");

    let dataset = tmp.path().join("dataset.jsonl");
    write_dataset(&dataset, 3);
    let stdout = run_ok(&["--echo", "classify", "--dataset", dataset.to_str().unwrap()]);
    // tagged domains are trusted, so no model call is needed
    let lines: Vec<serde_json::Value> = stdout
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["domain"], "vehicle");
    assert_eq!(lines[1]["domain"], "plant");
}
