mod common;

use common::*;

fn stdout(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn json(dir: &std::path::Path, rel: &str) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join(rel)).unwrap()).unwrap()
}

#[test]
fn validate_reports_findings_through_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let ok = instrux_line(
        dir.path(),
        "validate --family @multitask/task028.json --out ok.json",
    );
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(
        json(dir.path(), "ok.json")["violations"],
        serde_json::json!([])
    );
    assert!(dir.path().join("ok.manifest.json").exists());

    let mut family = json(&fixtures(), "multitask/task028.json");
    family["members"][1]["variant_index"] = serde_json::json!(2);
    family["members"][2]["definition"] = serde_json::json!("   ");
    let broken = serde_json::to_vec(&family).unwrap();
    std::fs::write(dir.path().join("broken.json"), broken).unwrap();
    let bad = instrux_line(dir.path(), "validate --family broken.json --out bad.json");
    assert_eq!(bad.status.code(), Some(1));
    let report = json(dir.path(), "bad.json");
    let fields: Vec<&str> = report["violations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["field"].as_str().unwrap())
        .collect();
    assert!(fields.contains(&"variant_index"), "{fields:?}");
    assert!(fields.contains(&"definition"), "{fields:?}");
}

#[test]
fn usage_errors_exit_2_and_help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let code = |line: &str| instrux_line(dir.path(), line).status.code();
    assert_eq!(code("frobnicate"), Some(2));
    assert_eq!(code("stats --bogus"), Some(2));
    assert_eq!(code("mix --setting ts"), Some(2));
    assert_eq!(code("--help"), Some(0));
    let missing = instrux_line(
        dir.path(),
        "run --train nope.jsonl --eval nope.jsonl --out x.json",
    );
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.jsonl"));
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn fractions_accept_percent_or_unit_form() {
    let dir = tempfile::tempdir().unwrap();
    let mix = |frac: &str, out: &str| {
        instrux_line(
            dir.path(),
            &format!("mix --setting ts --regime si --frac {frac} --family @multitask/task010.json --out-dir {out}"),
        )
    };
    assert_eq!(mix("5%", "a").status.code(), Some(0));
    assert_eq!(mix("0.05", "b").status.code(), Some(0));
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/train.jsonl"), read("b/train.jsonl"));
    for bad in ["0", "150%", "1.5", "-0.1", "abc"] {
        assert_eq!(
            mix(bad, "c").status.code(),
            Some(2),
            "fraction {bad} accepted"
        );
    }
}

#[test]
fn worth_prints_the_matched_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let worth = |score: &str| {
        instrux_line(
            dir.path(),
            &format!("worth --si-curve @curves/task_specific_si.json --mvi-score {score} --base 0.05 --instances 1000 --variants 5"),
        )
    };
    let out = worth("75.72");
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("matched SI fraction: 0.4871"), "{text}");
    assert!(text.contains("87.4"), "{text}");

    let saturated = worth("83.16");
    assert_eq!(saturated.status.code(), Some(0));
    let text = stdout(&saturated).to_lowercase();
    assert!(text.contains("saturat"), "{text}");
}

#[test]
fn the_seed_reaches_every_randomized_step() {
    let dir = tempfile::tempdir().unwrap();
    let line =
        "mix --setting ts --regime mvi --frac 0.5 --family @multitask/task010.json --out-dir";
    for (seed, out) in [("1", "s1"), ("2", "s2")] {
        let o = instrux_line(dir.path(), &format!("--seed {seed} {line} {out}"));
        assert_eq!(o.status.code(), Some(0));
    }
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_ne!(read("s1/train.jsonl"), read("s2/train.jsonl"));

    let fam = fixtures().join("multitask/task010.json");
    let env = std::process::Command::new(env!("CARGO_BIN_EXE_instrux"))
        .args(["mix", "--setting", "ts", "--regime", "mvi", "--frac", "0.5"])
        .arg("--family")
        .arg(&fam)
        .args(["--out-dir", "env1"])
        .env("INSTRUX_SEED", "1")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(env.status.code(), Some(0));
    assert_eq!(read("s1/train.jsonl"), read("env1/train.jsonl"));

    let manifest = json(dir.path(), "s1/manifest.json");
    assert_eq!(manifest["global_seed"], serde_json::json!(1));
    assert!(manifest["derived_seeds"]["mixture"].is_u64());
    assert_eq!(manifest["command"], serde_json::json!("mix"));
}

#[test]
fn commands_do_not_touch_their_inputs() {
    let before = snapshot(&fixtures());
    let dir = tempfile::tempdir().unwrap();
    let failures = cli_workload(dir.path(), "7", "2");
    assert!(failures.is_empty(), "{failures:?}");
    assert_eq!(before, snapshot(&fixtures()));
}

#[test]
fn mix_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = instrux_line(
        dir.path(),
        "mix --setting mt --regime mvi --frac 0.1 --families @multitask --out-dir mt",
    );
    assert_eq!(o.status.code(), Some(0));
    for f in [
        "train.jsonl",
        "eval.jsonl",
        "train.mixture.json",
        "eval.mixture.json",
        "manifest.json",
    ] {
        assert!(dir.path().join("mt").join(f).exists(), "{f} missing");
    }
    let train = std::fs::read_to_string(dir.path().join("mt/train.jsonl")).unwrap();
    for line in train.lines() {
        let item: serde_json::Value = serde_json::from_str(line).unwrap();
        let prompt = item["prompt"].as_str().unwrap();
        assert!(
            !prompt.contains("Positive Example 3"),
            "multi-task prompts keep at most two positives"
        );
    }
}

#[test]
fn cross_task_rejects_overlapping_families() {
    let dir = tempfile::tempdir().unwrap();
    let o = instrux_line(
        dir.path(),
        "mix --setting ct --regime si --frac 0.1 --families @multitask --eval-families @multitask --out-dir ct",
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("task010"));
}

#[test]
fn augment_outputs_can_be_read_back_as_a_family_directory() {
    let dir = tempfile::tempdir().unwrap();
    for t in ["rb001", "rb002"] {
        let o = instrux_line(
            dir.path(),
            &format!("augment --task @robustness/{t}.json --lexicon @robustness/lexicon.tsv --vectors @robustness/vectors.txt --rate 0.8 --out fams/{t}.json"),
        );
        assert_eq!(o.status.code(), Some(0));
    }
    assert!(dir.path().join("fams/rb001.manifest.json").exists());
    let o = instrux_line(dir.path(), "stats --families fams --out stats.json");
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        json(dir.path(), "stats.json")["families"]
            .as_array()
            .unwrap()
            .len(),
        2
    );
}
