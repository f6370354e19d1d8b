#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use instrux::analysis::{robustness_gap, RobustnessGap};
use instrux::augmentation::{generate_variants, AugmentConfig, Lexicon};
use instrux::baseline::run_experiment;
use instrux::evaluation::ScoreReport;
use instrux::metrics::{SimilarityBackend, WordVectors};
use instrux::mixtures::{
    build_eval_set, build_multitask_mixture, concat_eval_sets, MviOptions, Phrasing, Regime,
    Setting, SplitSpec,
};
use instrux::task_schema::{
    read_family_dir, read_task_file, InstructionFamily, PromptOptions, TaskCard,
};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn multitask_families() -> Vec<InstructionFamily> {
    read_family_dir(fixtures().join("multitask")).expect("multitask fixture")
}

/// Every card shipped in the fixtures, originals and variants alike.
pub fn all_fixture_cards() -> Vec<TaskCard> {
    let mut cards: Vec<TaskCard> = multitask_families()
        .iter()
        .flat_map(|f| f.members().cloned())
        .collect();
    cards.push(read_task_file(fixtures().join("task117/original.json")).unwrap());
    for t in ["rb001", "rb002"] {
        cards.push(read_task_file(fixtures().join(format!("robustness/{t}.json"))).unwrap());
    }
    cards
}

/// LCS by plain recursion over suffixes, memoized on (i, j).
pub fn lcs_memo<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    fn go<T: PartialEq>(
        a: &[T],
        b: &[T],
        i: usize,
        j: usize,
        memo: &mut HashMap<(usize, usize), usize>,
    ) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

/// Rouge-L F1 written as 2·LCS / (|p| + |r|), which equals 2PR/(P+R).
pub fn rouge_oracle(pred: &[&str], reference: &[&str]) -> f64 {
    let l = lcs_memo(pred, reference);
    if l == 0 {
        0.0
    } else {
        2.0 * l as f64 / (pred.len() + reference.len()) as f64
    }
}

/// Levenshtein distance over chars with the full (m+1)×(n+1) table.
pub fn edit_oracle(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in t.iter_mut().enumerate() {
        row[0] = i;
    }
    t[0] = (0..=b.len()).collect();
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = t[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            t[i][j] = sub.min(t[i - 1][j] + 1).min(t[i][j - 1] + 1);
        }
    }
    t[a.len()][b.len()]
}

pub struct RobustnessRun {
    pub families: Vec<InstructionFamily>,
    pub si_clean: ScoreReport,
    pub si_variants: ScoreReport,
    pub mvi_clean: ScoreReport,
    pub mvi_variants: ScoreReport,
    pub si_gap: RobustnessGap,
    pub mvi_gap: RobustnessGap,
}

pub fn robustness_families(seed: u64) -> Vec<InstructionFamily> {
    let dir = fixtures().join("robustness");
    let lexicon = Lexicon::read(dir.join("lexicon.tsv")).unwrap();
    let backend = SimilarityBackend::Vector(WordVectors::read(dir.join("vectors.txt")).unwrap());
    ["rb001", "rb002"]
        .iter()
        .map(|t| {
            let original = read_task_file(dir.join(format!("{t}.json"))).unwrap();
            let config = AugmentConfig {
                substitution_rate: 0.8,
                num_variants: 4,
                seed,
                min_similarity: 0.85,
            };
            generate_variants(&original, &lexicon, &[], &config, &backend).unwrap()
        })
        .collect()
}

/// augment → mix → run → score → robustness gap, for both regimes.
pub fn robustness_pipeline(seed: u64) -> RobustnessRun {
    let families = robustness_families(seed);
    let spec = SplitSpec::new(seed);
    let opts = PromptOptions::default();
    let mvi = MviOptions::default();
    let eval = |phrasing| {
        let sets: Vec<_> = families
            .iter()
            .map(|f| build_eval_set(f, &spec, &opts, phrasing, Setting::MultiTask).unwrap())
            .collect();
        concat_eval_sets(&sets)
    };
    let clean_eval = eval(Phrasing::Original);
    let variant_eval = eval(Phrasing::Variants);
    let score = |regime| {
        let train = build_multitask_mixture(&families, 1.0, regime, &spec, &opts, &mvi).unwrap();
        (
            run_experiment(&train, &clean_eval).unwrap().1,
            run_experiment(&train, &variant_eval).unwrap().1,
        )
    };
    let (si_clean, si_variants) = score(Regime::Si);
    let (mvi_clean, mvi_variants) = score(Regime::Mvi);
    let si_gap = robustness_gap(&si_clean, &si_variants).unwrap();
    let mvi_gap = robustness_gap(&mvi_clean, &mvi_variants).unwrap();
    RobustnessRun {
        families,
        si_clean,
        si_variants,
        mvi_clean,
        mvi_variants,
        si_gap,
        mvi_gap,
    }
}

/// A card with `n` instances and no examples, built through the file parser.
pub fn card_with(task_id: &str, definition: &str, n: usize) -> TaskCard {
    let instances: Vec<_> = (0..n)
        .map(|i| serde_json::json!({"id": format!("{task_id}-{i:05}"), "input": format!("item {i}"), "output": [format!("label {i}")]}))
        .collect();
    let value = serde_json::json!({
        "task_id": task_id,
        "name": task_id,
        "category": "Classification",
        "definition": definition,
        "positive_examples": [],
        "negative_examples": [],
        "instances": instances,
    });
    instrux::task_schema::parse_task_file(&serde_json::to_vec(&value).unwrap()).unwrap()
}

/// A family whose variants are copies of the original under new ids.
pub fn family_with(original: TaskCard, definitions: &[&str]) -> InstructionFamily {
    let variants = definitions
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let mut v = original.clone();
            v.task_id = format!("{}_v{}", original.task_id, k + 1);
            v.variant_index = k as u32 + 1;
            v.definition = d.to_string();
            v
        })
        .collect();
    InstructionFamily::new(original, variants)
}

pub fn instrux_bin(dir: &std::path::Path, args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_instrux"))
        .args(args)
        .current_dir(dir)
        .env_remove("INSTRUX_SEED")
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn instrux")
}

/// Relative path → bytes for every file under `root`.
pub fn snapshot(root: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    fn walk(
        root: &std::path::Path,
        dir: &std::path::Path,
        out: &mut std::collections::BTreeMap<String, Vec<u8>>,
    ) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Splits `line` on whitespace; a token starting with `@` names a file
/// under the fixtures directory.
pub fn instrux_line(dir: &std::path::Path, line: &str) -> std::process::Output {
    let args: Vec<String> = line
        .split_whitespace()
        .map(|t| match t.strip_prefix('@') {
            Some(rel) => fixtures().join(rel).to_string_lossy().into_owned(),
            None => t.to_string(),
        })
        .collect();
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    instrux_bin(dir, &refs)
}

/// One invocation of every subcommand, with outputs relative to the
/// working directory.
pub const WORKLOAD: &[&str] = &[
    "validate --family @multitask/task010.json --out validate.json",
    "augment --task @task117/original.json --pool @task117/pool.json --lexicon @lexicon.tsv --variants 4 --out task117.json",
    "augment --task @robustness/rb001.json --lexicon @robustness/lexicon.tsv --vectors @robustness/vectors.txt --rate 0.8 --out rb/rb001.json",
    "augment --task @robustness/rb002.json --lexicon @robustness/lexicon.tsv --vectors @robustness/vectors.txt --rate 0.8 --out rb/rb002.json",
    "stats --families @multitask --out stats.json",
    "mix --setting ts --regime si --frac 50% --family @multitask/task010.json --out-dir ts_si",
    "mix --setting ts --regime mvi --frac 0.5 --family @multitask/task010.json --equal-data with-original --out-dir ts_mvi",
    "mix --setting mt --regime si --frac 1.0 --families rb --out-dir mt_si",
    "mix --setting mt --regime mvi --frac 1.0 --families rb --eval-phrasing variants --out-dir mt_mvi",
    "mix --setting ct --regime mvi --frac 0.1 --task-frac 50% --families @multitask --eval-families rb --out-dir ct_mvi",
    "run --train mt_si/train.jsonl --eval mt_si/eval.jsonl --out mt_si/score.json",
    "run --train mt_mvi/train.jsonl --eval mt_mvi/eval.jsonl --out mt_mvi/score.json",
    "score --preds mt_mvi/score.preds.jsonl --eval mt_mvi/eval.jsonl --clean mt_si/score.json --out rescore.json",
    "worth --si-curve @curves/task_specific_si.json --mvi-score 75.72 --base 5% --instances 1000 --variants 5 --out worth.json",
    "perturb --task @task117/original.json --kind p2 --out p2.json",
    "contribute --family @multitask/task058.json --frac 1.0 --out-dir contrib",
];

/// Runs [`WORKLOAD`] inside `dir` and returns a description of every step
/// that did not exit 0.
pub fn cli_workload(dir: &std::path::Path, seed: &str, jobs: &str) -> Vec<String> {
    WORKLOAD
        .iter()
        .filter_map(|line| {
            let out = instrux_line(dir, &format!("--seed {seed} --jobs {jobs} {line}"));
            (out.status.code() != Some(0)).then(|| {
                format!(
                    "`{line}` -> {:?}: {}",
                    out.status.code(),
                    String::from_utf8_lossy(&out.stderr)
                )
            })
        })
        .collect()
}
