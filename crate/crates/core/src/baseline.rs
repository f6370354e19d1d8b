//! Nearest-neighbour instruction follower.
//!
//! The index stores one bag-of-tokens vector per training prompt (the full
//! serialized prompt, instruction included). Prediction returns the stored
//! output of the most cosine-similar prompt. Similarities are compared
//! exactly in integer arithmetic, so ties are genuine and are broken by the
//! lowest instance id, then by insertion order.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluation::{score_predictions, tokenize, PredictionSet, ScoreReport};
use crate::mixtures::Mixture;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    /// Sorted (dimension, count) pairs.
    counts: Vec<(usize, u64)>,
    norm_sq: u128,
    output: String,
    instance_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrievalIndex {
    vocabulary: BTreeMap<String, usize>,
    entries: Vec<Entry>,
}

fn count_tokens(tokens: &[String]) -> BTreeMap<&str, u64> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    counts
}

/// One entry per mixture item, keyed on the item's first reference.
pub fn fit(mixture: &Mixture) -> Result<RetrievalIndex> {
    if mixture.is_empty() {
        return Err(Error::EmptyMixture);
    }
    let mut vocabulary = BTreeMap::new();
    let mut entries = Vec::with_capacity(mixture.len());
    for item in &mixture.items {
        let tokens = tokenize(&item.prompt);
        let mut counts: Vec<(usize, u64)> = count_tokens(&tokens)
            .into_iter()
            .map(|(tok, c)| {
                let next = vocabulary.len();
                (*vocabulary.entry(tok.to_string()).or_insert(next), c)
            })
            .collect();
        counts.sort_unstable();
        let norm_sq = counts
            .iter()
            .map(|&(_, c)| u128::from(c) * u128::from(c))
            .sum();
        entries.push(Entry {
            counts,
            norm_sq,
            output: item.references[0].clone(),
            instance_id: item.instance_id.clone(),
        });
    }
    Ok(RetrievalIndex {
        vocabulary,
        entries,
    })
}

impl RetrievalIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary.len()
    }

    /// Multiplies every stored count by `factor`. Cosines, and therefore
    /// predictions, are unchanged.
    pub fn scaled(&self, factor: u64) -> Self {
        assert!(factor > 0, "scale factor must be positive");
        let mut out = self.clone();
        for e in &mut out.entries {
            for (_, c) in &mut e.counts {
                *c *= factor;
            }
            e.norm_sq = e
                .counts
                .iter()
                .map(|&(_, c)| u128::from(c) * u128::from(c))
                .sum();
        }
        out
    }

    fn query_counts(&self, prompt: &str) -> (BTreeMap<usize, u64>, u128) {
        let tokens = tokenize(prompt);
        let counts = count_tokens(&tokens);
        let norm_sq = counts
            .values()
            .map(|&c| u128::from(c) * u128::from(c))
            .sum();
        let in_vocab = counts
            .into_iter()
            .filter_map(|(t, c)| self.vocabulary.get(t).map(|&d| (d, c)))
            .collect();
        (in_vocab, norm_sq)
    }

    fn dot(entry: &Entry, query: &BTreeMap<usize, u64>) -> u128 {
        entry
            .counts
            .iter()
            .filter_map(|(d, c)| query.get(d).map(|q| u128::from(*c) * u128::from(*q)))
            .sum()
    }

    /// Index of the best entry and its cosine with the query.
    pub fn nearest(&self, prompt: &str) -> Option<(usize, f64)> {
        let (query, q_norm_sq) = self.query_counts(prompt);
        let mut best: Option<(usize, u128)> = None;
        for (i, e) in self.entries.iter().enumerate() {
            let d = Self::dot(e, &query);
            let better = match best {
                None => true,
                Some((j, bd)) => {
                    // compare d / sqrt(n_i) with bd / sqrt(n_j) exactly via squares
                    let lhs = d * d * self.entries[j].norm_sq;
                    let rhs = bd * bd * e.norm_sq;
                    match lhs.cmp(&rhs) {
                        Ordering::Greater => true,
                        Ordering::Less => false,
                        Ordering::Equal => e.instance_id < self.entries[j].instance_id,
                    }
                }
            };
            if better {
                best = Some((i, d));
            }
        }
        best.map(|(i, d)| {
            let denom = (q_norm_sq as f64).sqrt() * (self.entries[i].norm_sq as f64).sqrt();
            let cos = if denom == 0.0 { 0.0 } else { d as f64 / denom };
            (i, cos)
        })
    }

    /// Output of the most similar stored prompt.
    pub fn predict(&self, prompt: &str) -> String {
        match self.nearest(prompt) {
            Some((i, _)) => self.entries[i].output.clone(),
            None => String::new(),
        }
    }
}

/// Predictions for every item of `eval_set`, keyed by instance id.
pub fn predict_all(index: &RetrievalIndex, eval_set: &Mixture) -> PredictionSet {
    let outputs: Vec<(String, String)> = eval_set
        .items
        .par_iter()
        .map(|item| (item.instance_id.clone(), index.predict(&item.prompt)))
        .collect();
    let mut preds = PredictionSet::default();
    for (id, out) in outputs {
        // an instance repeated under several phrasings keeps its first prediction
        preds.predictions.entry(id).or_insert(out);
    }
    preds
        .metadata
        .insert("learner".into(), "nearest-neighbour bag-of-tokens".into());
    preds
        .metadata
        .insert("train_entries".into(), index.len().to_string());
    preds
}

/// Fit on `train`, predict `eval_set`, score.
pub fn run_experiment(train: &Mixture, eval_set: &Mixture) -> Result<(PredictionSet, ScoreReport)> {
    let index = fit(train)?;
    let preds = predict_all(&index, eval_set);
    let report = score_predictions(&preds, eval_set);
    Ok((preds, report))
}
