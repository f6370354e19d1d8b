//! Rouge-L scoring of predictions against evaluation mixtures.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixtures::Mixture;
use crate::stats;

/// Lowercases, splits on whitespace and strips leading/trailing punctuation
/// from each token. Interior punctuation (`don't`, `low-level`) is kept.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|raw| {
            raw.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Longest common subsequence length, O(|a|·|b|) time and O(|b|) memory.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Rouge-L F1 between two token sequences.
pub fn rouge_l_tokens<T: PartialEq>(prediction: &[T], reference: &[T]) -> f64 {
    if prediction.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_length(prediction, reference) as f64;
    let precision = lcs / prediction.len() as f64;
    let recall = lcs / reference.len() as f64;
    if precision + recall == 0.0 {
        return 0.0;
    }
    2.0 * precision * recall / (precision + recall)
}

/// Rouge-L F1 of `prediction` against the best-matching reference.
pub fn rouge_l<S: AsRef<str>>(prediction: &str, references: &[S]) -> f64 {
    let pred = tokenize(prediction);
    references
        .iter()
        .map(|r| rouge_l_tokens(&pred, &tokenize(r.as_ref())))
        .fold(0.0, f64::max)
}

/// Model outputs keyed by instance id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub predictions: BTreeMap<String, String>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct PredictionLine {
    id: String,
    prediction: String,
}

impl PredictionSet {
    pub fn insert(&mut self, id: impl Into<String>, prediction: impl Into<String>) -> Result<()> {
        let id = id.into();
        if self.predictions.contains_key(&id) {
            return Err(Error::Validation(format!("duplicate prediction id `{id}`")));
        }
        self.predictions.insert(id, prediction.into());
        Ok(())
    }

    /// Parses JSON-lines `{"id": ..., "prediction": ...}`; blank lines are skipped.
    pub fn from_jsonl(reader: impl BufRead) -> Result<Self> {
        let mut set = PredictionSet::default();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<predictions>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: PredictionLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                offset: e.column().saturating_sub(1),
                message: format!("line {}: {e}", n + 1),
            })?;
            set.insert(parsed.id, parsed.prediction)?;
        }
        Ok(set)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(std::io::BufReader::new(file))
    }

    /// Writes one line per prediction, sorted by id.
    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for (id, prediction) in &self.predictions {
            let line = serde_json::to_string(&PredictionLine {
                id: id.clone(),
                prediction: prediction.clone(),
            })?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceScore {
    pub instance_id: String,
    pub family_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub per_instance: Vec<InstanceScore>,
    pub per_family: BTreeMap<String, f64>,
    #[serde(rename = "macro")]
    pub macro_score: f64,
    #[serde(rename = "micro")]
    pub micro_score: f64,
    pub macro_x100: f64,
    pub micro_x100: f64,
    pub missing: Vec<String>,
    pub unmatched: Vec<String>,
}

impl ScoreReport {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::from_json(&bytes, e))
    }
}

/// Scores every evaluation item. Missing predictions score 0.
pub fn score_predictions(preds: &PredictionSet, eval_set: &Mixture) -> ScoreReport {
    let mut per_instance = Vec::with_capacity(eval_set.items.len());
    let mut by_family: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut missing = BTreeSet::new();
    let mut expected = BTreeSet::new();
    for item in &eval_set.items {
        expected.insert(item.instance_id.as_str());
        let score = match preds.predictions.get(&item.instance_id) {
            Some(p) => rouge_l(p, &item.references),
            None => {
                missing.insert(item.instance_id.clone());
                0.0
            }
        };
        by_family
            .entry(item.family_id.as_str())
            .or_default()
            .push(score);
        per_instance.push(InstanceScore {
            instance_id: item.instance_id.clone(),
            family_id: item.family_id.clone(),
            score,
        });
    }
    let unmatched: Vec<String> = preds
        .predictions
        .keys()
        .filter(|id| !expected.contains(id.as_str()))
        .cloned()
        .collect();
    let per_family: BTreeMap<String, f64> = by_family
        .iter()
        .map(|(fam, scores)| (fam.to_string(), stats::mean(scores)))
        .collect();
    let family_means: Vec<f64> = per_family.values().copied().collect();
    let all: Vec<f64> = per_instance.iter().map(|s| s.score).collect();
    let macro_score = stats::mean(&family_means);
    let micro_score = stats::mean(&all);
    ScoreReport {
        per_instance,
        per_family,
        macro_score,
        micro_score,
        macro_x100: macro_score * 100.0,
        micro_x100: micro_score * 100.0,
        missing: missing.into_iter().collect(),
        unmatched,
    }
}
