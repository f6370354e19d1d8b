//! Dataset property metrics: definition similarity, word-level
//! dissimilarity, length diversity and whole-dataset averages.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::tokenize;
use crate::stats;
use crate::task_schema::InstructionFamily;

/// Pretrained word vectors, all of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectors {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordVectors {
    pub fn new(vectors: HashMap<String, Vec<f64>>) -> Result<Self> {
        let dim = vectors.values().next().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(Error::Config(
                "word vectors must have dimension >= 1".into(),
            ));
        }
        if let Some((token, v)) = vectors.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::Config(format!(
                "vector for `{token}` has dimension {}, expected {dim}",
                v.len()
            )));
        }
        Ok(WordVectors { dim, vectors })
    }

    /// Reads the text format `token v1 v2 ... vd`, one token per line.
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut vectors = HashMap::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<vectors>", e))?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values = parts
                .map(|p| p.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Config(format!("vectors line {}: {e}", n + 1)))?;
            vectors.insert(token.to_lowercase(), values);
        }
        Self::new(vectors)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn mean_vector(&self, tokens: &[String]) -> Option<Vec<f64>> {
        let mut sum = vec![0.0; self.dim];
        let mut n = 0usize;
        for t in tokens {
            if let Some(v) = self.vectors.get(t) {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                n += 1;
            }
        }
        (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
    }
}

/// Similarity model behind [`sts_score`].
#[derive(Debug, Clone, Default)]
pub enum SimilarityBackend {
    /// Cosine of token-count vectors.
    #[default]
    Lexical,
    /// Cosine of mean word vectors, rescaled from [-1, 1] to [0, 1].
    Vector(WordVectors),
}

impl SimilarityBackend {
    pub fn mode(&self) -> &'static str {
        match self {
            SimilarityBackend::Lexical => "lexical",
            SimilarityBackend::Vector(_) => "vector",
        }
    }
}

/// Semantic similarity between two definitions in [0, 1]; symmetric.
pub fn sts_score(a: &str, b: &str, backend: &SimilarityBackend) -> Result<f64> {
    let ta = tokenize(a);
    let tb = tokenize(b);
    match backend {
        SimilarityBackend::Lexical => Ok(count_cosine(&ta, &tb)),
        SimilarityBackend::Vector(vectors) => {
            let (va, vb) = match (vectors.mean_vector(&ta), vectors.mean_vector(&tb)) {
                (Some(va), Some(vb)) => (va, vb),
                (None, None) => {
                    return Err(Error::UndefinedSimilarity(
                        "neither text has an in-vocabulary token".into(),
                    ))
                }
                _ => {
                    return Err(Error::UndefinedSimilarity(
                        "one text has no in-vocabulary token".into(),
                    ))
                }
            };
            let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
            let na: f64 = va.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                return Err(Error::UndefinedSimilarity(
                    "mean word vector has zero norm".into(),
                ));
            }
            let cos = (dot / (na * nb)).clamp(-1.0, 1.0);
            Ok(((cos + 1.0) / 2.0).clamp(0.0, 1.0))
        }
    }
}

fn count_cosine(a: &[String], b: &[String]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for t in a {
        counts.entry(t).or_default().0 += 1;
    }
    for t in b {
        counts.entry(t).or_default().1 += 1;
    }
    let (mut dot, mut na, mut nb) = (0u64, 0u64, 0u64);
    for (x, y) in counts.values() {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if dot == 0 {
        return 0.0;
    }
    if na == nb && dot == na {
        // identical count vectors
        return 1.0;
    }
    (dot as f64 / ((na as f64).sqrt() * (nb as f64).sqrt())).clamp(0.0, 1.0)
}

fn require_pairs(family: &InstructionFamily) -> Result<()> {
    let found = family.member_count();
    if found < 2 {
        return Err(Error::InsufficientMembers { needed: 2, found });
    }
    Ok(())
}

fn definitions(family: &InstructionFamily) -> Vec<&str> {
    family.members().map(|c| c.definition.as_str()).collect()
}

/// Mean and population SD of similarity over all unordered member pairs.
pub fn family_sts_stats(
    family: &InstructionFamily,
    backend: &SimilarityBackend,
) -> Result<(f64, f64)> {
    require_pairs(family)?;
    let defs = definitions(family);
    let mut scores = Vec::new();
    for i in 0..defs.len() {
        for j in i + 1..defs.len() {
            scores.push(sts_score(defs[i], defs[j], backend)?);
        }
    }
    Ok(stats::mean_sd(&scores))
}

/// Character-level Levenshtein distance with unit costs.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Scales distances by their maximum and returns (mean, population SD).
/// All-zero input yields (0, 0).
pub fn normalized_dissimilarity(distances: &[usize]) -> (f64, f64) {
    let max = distances.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return (0.0, 0.0);
    }
    let scores: Vec<f64> = distances.iter().map(|&d| d as f64 / max as f64).collect();
    stats::mean_sd(&scores)
}

/// Pairwise edit distances between member definitions, normalized by the
/// family maximum.
pub fn word_dissimilarity_stats(family: &InstructionFamily) -> Result<(f64, f64)> {
    require_pairs(family)?;
    let defs = definitions(family);
    let mut distances = Vec::new();
    for i in 0..defs.len() {
        for j in i + 1..defs.len() {
            distances.push(edit_distance(defs[i], defs[j]));
        }
    }
    Ok(normalized_dissimilarity(&distances))
}

/// Percentage by which the longest definition exceeds the shortest, lengths
/// in whitespace tokens. A zero-length shortest definition is treated as 1.
pub fn length_diversity(family: &InstructionFamily) -> f64 {
    let lengths: Vec<usize> = family
        .members()
        .map(|c| c.definition.split_whitespace().count())
        .collect();
    let max = lengths.iter().copied().max().unwrap_or(0);
    let min = lengths.iter().copied().min().unwrap_or(0);
    if max == min {
        return 0.0;
    }
    100.0 * (max - min) as f64 / min.max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyStats {
    pub family_id: String,
    pub num_variants: usize,
    pub sts_mean: f64,
    pub sts_sd: f64,
    pub dissim_mean: f64,
    pub dissim_sd: f64,
    pub length_diversity_pct: f64,
}

pub fn family_stats(
    family: &InstructionFamily,
    backend: &SimilarityBackend,
) -> Result<FamilyStats> {
    let (sts_mean, sts_sd) = family_sts_stats(family, backend)?;
    let (dissim_mean, dissim_sd) = word_dissimilarity_stats(family)?;
    Ok(FamilyStats {
        family_id: family.family_id.clone(),
        num_variants: family.variants.len(),
        sts_mean,
        sts_sd,
        dissim_mean,
        dissim_sd,
        length_diversity_pct: length_diversity(family),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_families: usize,
    pub avg_variants_per_task: f64,
    pub avg_instances_per_task: f64,
    pub avg_positive_examples: f64,
    pub avg_negative_examples: f64,
}

/// Averages over the dataset: variants per family, and instances/examples
/// per member card.
pub fn dataset_statistics(families: &[InstructionFamily]) -> Result<DatasetStats> {
    if families.is_empty() {
        return Err(Error::Precondition(
            "dataset_statistics needs at least one family".into(),
        ));
    }
    let variants: Vec<f64> = families.iter().map(|f| f.variants.len() as f64).collect();
    let cards: Vec<_> = families.iter().flat_map(|f| f.members()).collect();
    let avg = |f: &dyn Fn(&crate::task_schema::TaskCard) -> usize| {
        let values: Vec<f64> = cards.iter().map(|c| f(c) as f64).collect();
        stats::mean(&values)
    };
    Ok(DatasetStats {
        num_families: families.len(),
        avg_variants_per_task: stats::mean(&variants),
        avg_instances_per_task: avg(&|c| c.instances.len()),
        avg_positive_examples: avg(&|c| c.positives.len()),
        avg_negative_examples: avg(&|c| c.negatives.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task_schema::tests::card;
    use crate::task_schema::TaskCard;

    fn family_with_defs(defs: &[&str]) -> InstructionFamily {
        let cards: Vec<TaskCard> = defs
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let mut c = card(if i == 0 { "t" } else { "t-v" }, i as u32, 2);
                c.definition = d.to_string();
                c
            })
            .collect();
        let mut it = cards.into_iter();
        let original = it.next().unwrap();
        InstructionFamily::new(original, it.collect())
    }

    #[test]
    fn lexical_sts_cases() {
        let b = SimilarityBackend::Lexical;
        assert_eq!(
            sts_score("Classify the text.", "classify the text", &b).unwrap(),
            1.0
        );
        assert_eq!(sts_score("alpha beta", "gamma delta", &b).unwrap(), 0.0);
        let s = sts_score("a b c", "a b d", &b).unwrap();
        assert!((s - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s, sts_score("a b d", "a b c", &b).unwrap());
    }

    #[test]
    fn vector_sts() {
        let mut m = HashMap::new();
        m.insert("good".to_string(), vec![1.0, 0.0]);
        m.insert("fine".to_string(), vec![1.0, 0.1]);
        m.insert("bad".to_string(), vec![-1.0, 0.0]);
        let b = SimilarityBackend::Vector(WordVectors::new(m).unwrap());
        assert!((sts_score("good", "good", &b).unwrap() - 1.0).abs() < 1e-12);
        assert!(sts_score("good", "bad", &b).unwrap().abs() < 1e-12);
        assert!(sts_score("good", "fine", &b).unwrap() > 0.99);
        assert!(matches!(
            sts_score("unknown", "words", &b),
            Err(Error::UndefinedSimilarity(_))
        ));
    }

    #[test]
    fn vectors_file_dimension_check() {
        let ok = WordVectors::from_reader("a 1 2\nb 3 4\n".as_bytes()).unwrap();
        assert_eq!(ok.dim(), 2);
        assert!(WordVectors::from_reader("a 1 2\nb 3\n".as_bytes()).is_err());
        assert!(WordVectors::from_reader("".as_bytes()).is_err());
    }

    #[test]
    fn sts_stats_cases() {
        let b = SimilarityBackend::Lexical;
        let same = family_with_defs(&["do the task", "do the task", "do the task"]);
        assert_eq!(family_sts_stats(&same, &b).unwrap(), (1.0, 0.0));

        let two = family_with_defs(&["a b c", "a b d"]);
        let (m, sd) = family_sts_stats(&two, &b).unwrap();
        assert!((m - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(sd, 0.0);

        let single = family_with_defs(&["only"]);
        assert!(matches!(
            family_sts_stats(&single, &b),
            Err(Error::InsufficientMembers { found: 1, .. })
        ));
    }

    #[test]
    fn sts_stats_over_enumerated_pairs() {
        // pairs: (x,x)=1, (x,y)=0.5, (x,y)=0.5 under lexical cosine
        // "p q" vs "p r": dot 1, norms sqrt2*sqrt2 -> 0.5
        let fam = family_with_defs(&["p q", "p q", "p r"]);
        let (m, sd) = family_sts_stats(&fam, &SimilarityBackend::Lexical).unwrap();
        assert!((m - 2.0 / 3.0).abs() < 1e-12);
        assert!((sd - (1.0f64 / 18.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn edit_distance_cases() {
        assert_eq!(edit_distance("abc", "abc"), 0);
        assert_eq!(edit_distance("", "abc"), 3);
        assert_eq!(edit_distance("kitten", "sitting"), 3);
        assert_eq!(edit_distance("héllo", "hello"), 1);
    }

    #[test]
    fn dissimilarity_cases() {
        let same = family_with_defs(&["same words", "same words"]);
        assert_eq!(word_dissimilarity_stats(&same).unwrap(), (0.0, 0.0));
        let two = family_with_defs(&["abc", "xyz"]);
        assert_eq!(word_dissimilarity_stats(&two).unwrap(), (1.0, 0.0));
        // raw distances 5, 10, 5
        let three = family_with_defs(&["q", "qxxxxx", "qxxxxxyyyyy"]);
        let (m, _) = word_dissimilarity_stats(&three).unwrap();
        assert!((m - 2.0 / 3.0).abs() < 1e-12);
        let (m, sd) = normalized_dissimilarity(&[10, 5, 5]);
        assert!((m - 2.0 / 3.0).abs() < 1e-12);
        assert!((sd - (1.0f64 / 18.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn length_diversity_cases() {
        assert_eq!(length_diversity(&family_with_defs(&["a b", "c d"])), 0.0);
        let fifty = vec!["w"; 50].join(" ");
        let hundred = vec!["w"; 100].join(" ");
        assert_eq!(
            length_diversity(&family_with_defs(&[&fifty, &hundred])),
            100.0
        );
        let l40 = vec!["w"; 40].join(" ");
        let l60 = vec!["w"; 60].join(" ");
        assert_eq!(
            length_diversity(&family_with_defs(&[&l40, &fifty, &l60])),
            50.0
        );
    }

    #[test]
    fn dataset_statistics_single_family() {
        let mut cards: Vec<TaskCard> = (0..5).map(|i| card("t", i, 10)).collect();
        for c in &mut cards {
            c.positives.truncate(3);
            c.negatives.truncate(2);
        }
        let original = cards.remove(0);
        let fam = InstructionFamily::new(original, cards);
        let s = dataset_statistics(&[fam]).unwrap();
        assert_eq!(
            (
                s.avg_variants_per_task,
                s.avg_instances_per_task,
                s.avg_positive_examples,
                s.avg_negative_examples
            ),
            (4.0, 10.0, 3.0, 2.0)
        );
        assert!(dataset_statistics(&[]).is_err());
    }
}
