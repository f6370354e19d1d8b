//! Seeded variant generation: synonym rewrites of the definition plus
//! instance resampling from a pool of unused instances.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufRead;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{sts_score, SimilarityBackend};
use crate::seed;
use crate::task_schema::{Instance, InstructionFamily, TaskCard};

pub const DEFAULT_MIN_SIMILARITY: f64 = 0.85;
const MAX_ATTEMPTS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub substitution_rate: f64,
    pub num_variants: usize,
    pub seed: u64,
    pub min_similarity: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            substitution_rate: 0.3,
            num_variants: 4,
            seed: 0,
            min_similarity: DEFAULT_MIN_SIMILARITY,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.substitution_rate) {
            return Err(Error::Range(format!(
                "substitution_rate {} not in [0, 1]",
                self.substitution_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.min_similarity) {
            return Err(Error::Range(format!(
                "min_similarity {} not in [0, 1]",
                self.min_similarity
            )));
        }
        if self.num_variants == 0 {
            return Err(Error::Config("num_variants must be at least 1".into()));
        }
        Ok(())
    }
}

/// Lowercase token to synonyms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn new(entries: BTreeMap<String, Vec<String>>) -> Result<Self> {
        for (token, syns) in &entries {
            if syns.is_empty() {
                return Err(Error::Validation(format!(
                    "lexicon entry `{token}` has no synonyms"
                )));
            }
            if syns.iter().any(|s| s.to_lowercase() == *token) {
                return Err(Error::Validation(format!(
                    "lexicon entry `{token}` maps to itself"
                )));
            }
        }
        Ok(Lexicon { entries })
    }

    /// Parses `token<TAB>syn1,syn2,...` lines. Blank lines and `#` comments are skipped.
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<lexicon>", e))?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (token, syns) = line
                .split_once('\t')
                .ok_or_else(|| Error::Validation(format!("lexicon line {}: missing tab", n + 1)))?;
            let syns: Vec<String> = syns
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
                .collect();
            entries
                .entry(token.trim().to_lowercase())
                .or_default()
                .extend(syns);
        }
        Self::new(entries)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn get(&self, token: &str) -> Option<&[String]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// A whitespace-delimited chunk split into leading punctuation, the word
/// core, and trailing punctuation.
struct Chunk<'a> {
    lead: &'a str,
    core: &'a str,
    trail: &'a str,
}

fn split_chunk(chunk: &str) -> Chunk<'_> {
    let start = chunk
        .char_indices()
        .find(|(_, c)| c.is_alphanumeric())
        .map(|(i, _)| i)
        .unwrap_or(chunk.len());
    let end = chunk
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_alphanumeric())
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(start);
    Chunk {
        lead: &chunk[..start],
        core: &chunk[start..end],
        trail: &chunk[end..],
    }
}

/// Splits text into alternating whitespace and non-whitespace pieces,
/// preserving every byte.
fn pieces(text: &str) -> Vec<(bool, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut in_ws = None;
    for (i, c) in text.char_indices() {
        let ws = c.is_whitespace();
        match in_ws {
            Some(prev) if prev != ws => {
                out.push((prev, &text[start..i]));
                start = i;
            }
            _ => {}
        }
        in_ws = Some(ws);
    }
    if let Some(ws) = in_ws {
        out.push((ws, &text[start..]));
    }
    out
}

fn match_case(original: &str, replacement: &str) -> String {
    let letters = || original.chars().filter(|c| c.is_alphabetic());
    if letters().count() > 1 && letters().all(char::is_uppercase) {
        return replacement.to_uppercase();
    }
    let upper = original.chars().next().is_some_and(char::is_uppercase);
    if !upper {
        return replacement.to_string();
    }
    let mut chars = replacement.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Replaces `floor(rate × eligible)` lexicon tokens with a seeded synonym
/// choice. Whitespace and punctuation are kept byte-for-byte, and an initial
/// capital carries over to the synonym.
pub fn synonym_substitute(definition: &str, lexicon: &Lexicon, rate: f64, seed: u64) -> String {
    let parts = pieces(definition);
    let eligible: Vec<usize> = parts
        .iter()
        .enumerate()
        .filter(|(_, (ws, text))| {
            !ws && lexicon
                .get(&split_chunk(text).core.to_lowercase())
                .is_some()
        })
        .map(|(i, _)| i)
        .collect();
    let count = ((rate.clamp(0.0, 1.0) * eligible.len() as f64) + 1e-9).floor() as usize;
    let count = count.min(eligible.len());
    if count == 0 {
        return definition.to_string();
    }
    let mut rng = seed::rng(seed);
    let mut chosen: Vec<usize> = index::sample(&mut rng, eligible.len(), count)
        .into_iter()
        .map(|k| eligible[k])
        .collect();
    chosen.sort_unstable();
    let mut replacements = BTreeMap::new();
    for pos in chosen {
        let chunk = split_chunk(parts[pos].1);
        let syns = lexicon
            .get(&chunk.core.to_lowercase())
            .expect("eligible token");
        let pick = syns.choose(&mut rng).expect("non-empty synonyms");
        replacements.insert(
            pos,
            format!(
                "{}{}{}",
                chunk.lead,
                match_case(chunk.core, pick),
                chunk.trail
            ),
        );
    }
    parts
        .iter()
        .enumerate()
        .map(|(i, (_, text))| replacements.get(&i).map(String::as_str).unwrap_or(text))
        .collect()
}

/// Draws `min(count, |pool|)` pool instances without replacement.
pub fn resample_instances(
    original: &TaskCard,
    pool: &[Instance],
    count: usize,
    seed: u64,
) -> Result<Vec<Instance>> {
    let own: HashSet<&str> = original.instances.iter().map(|i| i.id.as_str()).collect();
    let overlap: BTreeSet<&str> = pool
        .iter()
        .map(|i| i.id.as_str())
        .filter(|id| own.contains(id))
        .collect();
    if !overlap.is_empty() {
        let ids: Vec<&str> = overlap.into_iter().collect();
        return Err(Error::Precondition(format!(
            "pool instances already in the original: {}",
            ids.join(", ")
        )));
    }
    let mut drawn = pool.to_vec();
    drawn.shuffle(&mut seed::rng(seed));
    drawn.truncate(count.min(pool.len()));
    Ok(drawn)
}

/// Builds a family of up to `num_variants` rewrites of `original`.
///
/// Each variant definition must reach `min_similarity` against the
/// original; a failing variant is retried with fresh derived seeds and
/// dropped after 16 attempts. With a non-empty pool, each variant receives
/// its own disjoint slice of pool instances (as many as the original has);
/// otherwise the original's instances are copied.
pub fn generate_variants(
    original: &TaskCard,
    lexicon: &Lexicon,
    pool: &[Instance],
    config: &AugmentConfig,
    similarity: &SimilarityBackend,
) -> Result<InstructionFamily> {
    config.validate()?;
    let mut variants = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut remaining: Vec<Instance> = pool.to_vec();
    for slot in 1..=config.num_variants {
        let mut accepted = None;
        for attempt in 0..MAX_ATTEMPTS {
            let s = seed::derive(
                config.seed,
                &format!("augment/{}/{slot}/{attempt}", original.task_id),
            );
            let definition =
                synonym_substitute(&original.definition, lexicon, config.substitution_rate, s);
            let score = sts_score(&original.definition, &definition, similarity)?;
            best = best.max(score);
            if score >= config.min_similarity {
                accepted = Some(definition);
                break;
            }
        }
        let Some(definition) = accepted else {
            log::warn!(
                "{}: variant slot {slot} dropped after {MAX_ATTEMPTS} attempts below similarity {}",
                original.task_id,
                config.min_similarity
            );
            continue;
        };
        let variant_index = variants.len() as u32 + 1;
        let instances = if remaining.is_empty() {
            original.instances.clone()
        } else {
            let s = seed::derive(
                config.seed,
                &format!("resample/{}/{slot}", original.task_id),
            );
            let drawn = resample_instances(original, &remaining, original.instances.len(), s)?;
            let taken: HashSet<&str> = drawn.iter().map(|i| i.id.as_str()).collect();
            remaining.retain(|i| !taken.contains(i.id.as_str()));
            drawn
        };
        variants.push(TaskCard {
            task_id: format!("{}_v{variant_index}", original.task_id),
            definition,
            instances,
            variant_index,
            ..original.clone()
        });
    }
    if variants.is_empty() {
        return Err(Error::Generation {
            best,
            required: config.min_similarity,
        });
    }
    Ok(InstructionFamily::new(original.clone(), variants))
}
