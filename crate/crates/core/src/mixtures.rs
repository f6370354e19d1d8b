//! Training and evaluation mixtures for single-instruction (SI) and
//! multi-variant-instruction (MVI) learning.
//!
//! All randomness flows from [`SplitSpec::seed`] through labelled derived
//! seeds, so a mixture is fully determined by its inputs and manifest:
//!
//! * `split/<task_id>` shuffles a card's instances before the 70/10/20 cut,
//! * `sample/<family_id>` draws the instance fraction from the train split,
//! * `shuffle/<setting>` orders the concatenated multi-family items,
//! * `tasks` samples cross-task training families.
//!
//! SI and MVI built with the same split settings therefore see the same instances.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{perturb, Perturbation};
use crate::error::{Error, Result};
use crate::seed;
use crate::task_schema::{
    serialize_prompt_with, Instance, InstructionFamily, PromptOptions, TaskCard,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    TaskSpecific,
    MultiTask,
    CrossTask,
}

impl Setting {
    pub fn label(&self) -> &'static str {
        match self {
            Setting::TaskSpecific => "task_specific",
            Setting::MultiTask => "multi_task",
            Setting::CrossTask => "cross_task",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "SI")]
    Si,
    #[serde(rename = "MVI")]
    Mvi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub dev_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    /// The standard 70% train / 10% dev / 20% test split.
    pub fn new(seed: u64) -> Self {
        SplitSpec {
            train_frac: 0.70,
            dev_frac: 0.10,
            test_frac: 0.20,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fracs = [self.train_frac, self.dev_frac, self.test_frac];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Range("split fractions must lie in [0, 1]".into()));
        }
        if (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Range("split fractions must sum to 1".into()));
        }
        Ok(())
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::new(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<Instance>,
    pub dev: Vec<Instance>,
    pub test: Vec<Instance>,
}

/// Seeded shuffle then contiguous cut: `round(train·N)` train, `round(test·N)`
/// test, the remainder to dev.
pub fn split_instances(card: &TaskCard, spec: &SplitSpec) -> Split {
    let n = card.instances.len();
    if n < 10 {
        log::warn!(
            "{}: only {n} instances, split sizes will be degenerate",
            card.task_id
        );
    }
    let mut shuffled = card.instances.clone();
    shuffled.shuffle(&mut seed::rng(seed::derive(
        spec.seed,
        &format!("split/{}", card.task_id),
    )));
    let n_train = seed::round_half_up(spec.train_frac * n as f64).min(n);
    let n_test = seed::round_half_up(spec.test_frac * n as f64).min(n - n_train);
    let n_dev = n - n_train - n_test;
    let test = shuffled.split_off(n_train + n_dev);
    let dev = shuffled.split_off(n_train);
    Split {
        train: shuffled,
        dev,
        test,
    }
}

/// Number of items kept when sampling fraction `p` of `n` items.
pub fn sample_size(n: usize, p: f64) -> usize {
    if n == 0 {
        return 0;
    }
    seed::round_half_up(p * n as f64).clamp(1, n)
}

fn check_fraction(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Range(format!("fraction {p} not in (0, 1]")));
    }
    Ok(())
}

/// Seeded sample without replacement of `max(1, round(p·N))` items.
pub fn sample_fraction<T: Clone>(items: &[T], p: f64, seed: u64) -> Result<Vec<T>> {
    check_fraction(p)?;
    let mut shuffled = items.to_vec();
    shuffled.shuffle(&mut seed::rng(seed));
    shuffled.truncate(sample_size(items.len(), p));
    Ok(shuffled)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MixtureItem {
    pub prompt: String,
    pub references: Vec<String>,
    pub family_id: String,
    pub variant_index: u32,
    pub instance_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MixtureManifest {
    pub seed: u64,
    pub source_families: Vec<String>,
    pub per_family_counts: BTreeMap<String, usize>,
    pub options: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub setting: Setting,
    pub regime: Regime,
    pub fraction: f64,
    pub items: Vec<MixtureItem>,
    pub manifest: MixtureManifest,
}

impl Mixture {
    pub fn new(
        setting: Setting,
        regime: Regime,
        fraction: f64,
        items: Vec<MixtureItem>,
        manifest: MixtureManifest,
    ) -> Self {
        Mixture {
            setting,
            regime,
            fraction,
            items,
            manifest,
        }
    }

    /// Wraps items read from a mixture file; the regime is inferred from
    /// the variant indices present.
    pub fn from_items(items: Vec<MixtureItem>) -> Self {
        let regime = if items.iter().all(|i| i.variant_index == 0) {
            Regime::Si
        } else {
            Regime::Mvi
        };
        Mixture::new(
            Setting::TaskSpecific,
            regime,
            1.0,
            items,
            MixtureManifest::default(),
        )
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn check_invariants(&self) -> Result<()> {
        check_fraction(self.fraction)?;
        if let Some(item) = self.items.iter().find(|i| i.references.is_empty()) {
            return Err(Error::Validation(format!(
                "item `{}` has no references",
                item.instance_id
            )));
        }
        if self.regime == Regime::Si {
            if let Some(item) = self.items.iter().find(|i| i.variant_index != 0) {
                return Err(Error::Validation(format!(
                    "SI mixture contains variant {} for `{}`",
                    item.variant_index, item.instance_id
                )));
            }
        }
        Ok(())
    }

    /// Sorted instance ids, with repetitions.
    pub fn instance_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.items.iter().map(|i| i.instance_id.clone()).collect();
        ids.sort();
        ids
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for item in &self.items {
            writeln!(w, "{}", serde_json::to_string(item)?)?;
        }
        Ok(())
    }

    pub fn read_jsonl(reader: impl BufRead) -> Result<Vec<MixtureItem>> {
        let mut items = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<mixture>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let item: MixtureItem = serde_json::from_str(&line).map_err(|e| Error::Parse {
                offset: e.column().saturating_sub(1),
                message: format!("line {}: {e}", n + 1),
            })?;
            if item.references.is_empty() {
                return Err(Error::Validation(format!(
                    "line {}: empty references",
                    n + 1
                )));
            }
            items.push(item);
        }
        Ok(items)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Mixture::from_items(Self::read_jsonl(
            std::io::BufReader::new(file),
        )?))
    }
}

/// How an MVI mixture sizes and lays out its instances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EqualData {
    /// Same sample as SI.
    #[default]
    Off,
    /// `ceil(n / (V + 1))` instances, counting the original as a member.
    WithOriginal,
    /// `ceil(n / V)` instances, counting variants only.
    VariantsOnly,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MviOptions {
    pub equal_data: EqualData,
    /// Serialize every sampled instance under every member instead of the
    /// round-robin partition. Multiplies the data by V + 1.
    pub every_member: bool,
}

fn item(card: &TaskCard, family_id: &str, inst: &Instance, opts: &PromptOptions) -> MixtureItem {
    MixtureItem {
        prompt: serialize_prompt_with(card, inst, opts),
        references: inst.references.clone(),
        family_id: family_id.to_string(),
        variant_index: card.variant_index,
        instance_id: inst.id.clone(),
    }
}

/// The SI instance sample for a family: a fraction of the original's train split.
pub fn family_sample(
    family: &InstructionFamily,
    p: f64,
    spec: &SplitSpec,
) -> Result<Vec<Instance>> {
    spec.validate()?;
    let split = split_instances(&family.original, spec);
    sample_fraction(
        &split.train,
        p,
        seed::derive(spec.seed, &format!("sample/{}", family.family_id)),
    )
}

fn base_manifest(
    spec: &SplitSpec,
    families: &[&InstructionFamily],
    items: &[MixtureItem],
) -> MixtureManifest {
    let mut per_family_counts: BTreeMap<String, usize> =
        families.iter().map(|f| (f.family_id.clone(), 0)).collect();
    for it in items {
        *per_family_counts.entry(it.family_id.clone()).or_default() += 1;
    }
    MixtureManifest {
        seed: spec.seed,
        source_families: families.iter().map(|f| f.family_id.clone()).collect(),
        per_family_counts,
        options: BTreeMap::new(),
    }
}

fn prompt_options_record(opts: &PromptOptions, manifest: &mut MixtureManifest) {
    let cap = |c: usize| {
        if c == usize::MAX {
            "all".to_string()
        } else {
            c.to_string()
        }
    };
    manifest.options.insert("max_pos".into(), cap(opts.max_pos));
    manifest.options.insert("max_neg".into(), cap(opts.max_neg));
    manifest.options.insert(
        "include_explanations".into(),
        opts.include_explanations.to_string(),
    );
}

/// Original instruction only, over a fraction of the original's train split.
pub fn build_si_mixture(
    family: &InstructionFamily,
    p: f64,
    spec: &SplitSpec,
    opts: &PromptOptions,
) -> Result<Mixture> {
    let sample = family_sample(family, p, spec)?;
    let items: Vec<MixtureItem> = sample
        .iter()
        .map(|inst| item(&family.original, &family.family_id, inst, opts))
        .collect();
    let mut manifest = base_manifest(spec, &[family], &items);
    prompt_options_record(opts, &mut manifest);
    Ok(Mixture::new(
        Setting::TaskSpecific,
        Regime::Si,
        p,
        items,
        manifest,
    ))
}

/// The SI sample distributed round-robin over the original and its variants.
pub fn build_mvi_mixture(
    family: &InstructionFamily,
    p: f64,
    spec: &SplitSpec,
    opts: &PromptOptions,
    mvi: &MviOptions,
) -> Result<Mixture> {
    if family.variants.is_empty() {
        return Err(Error::Config(format!(
            "family `{}` has no variants; MVI needs at least one",
            family.family_id
        )));
    }
    let mut sample = family_sample(family, p, spec)?;
    let members: Vec<&TaskCard> = std::iter::once(&family.original)
        .chain(family.variants_by_index())
        .collect();
    let divisor = match mvi.equal_data {
        EqualData::Off => 1,
        EqualData::WithOriginal => members.len(),
        EqualData::VariantsOnly => family.variants.len(),
    };
    sample.truncate(sample.len().div_ceil(divisor));
    let items: Vec<MixtureItem> = if mvi.every_member {
        sample
            .iter()
            .flat_map(|inst| members.iter().map(move |m| (m, inst)))
            .map(|(m, inst)| item(m, &family.family_id, inst, opts))
            .collect()
    } else {
        sample
            .iter()
            .enumerate()
            .map(|(i, inst)| item(members[i % members.len()], &family.family_id, inst, opts))
            .collect()
    };
    let mut manifest = base_manifest(spec, &[family], &items);
    prompt_options_record(opts, &mut manifest);
    manifest.options.insert(
        "equal_data".into(),
        format!("{:?}", mvi.equal_data).to_lowercase(),
    );
    manifest
        .options
        .insert("every_member".into(), mvi.every_member.to_string());
    Ok(Mixture::new(
        Setting::TaskSpecific,
        Regime::Mvi,
        p,
        items,
        manifest,
    ))
}

fn build_regime(
    family: &InstructionFamily,
    p: f64,
    regime: Regime,
    spec: &SplitSpec,
    opts: &PromptOptions,
    mvi: &MviOptions,
) -> Result<Mixture> {
    match regime {
        Regime::Si => build_si_mixture(family, p, spec, opts),
        Regime::Mvi => build_mvi_mixture(family, p, spec, opts, mvi),
    }
}

/// Canonical sort then seeded shuffle, so the result does not depend on the
/// order in which per-family work finished.
fn canonical_shuffle(items: &mut [MixtureItem], seed: u64) {
    items.sort_by(|a, b| {
        (&a.family_id, &a.instance_id, a.variant_index).cmp(&(
            &b.family_id,
            &b.instance_id,
            b.variant_index,
        ))
    });
    items.shuffle(&mut seed::rng(seed));
}

/// All families combined, at most two positives and two negatives per prompt.
pub fn build_multitask_mixture(
    families: &[InstructionFamily],
    p: f64,
    regime: Regime,
    spec: &SplitSpec,
    opts: &PromptOptions,
    mvi: &MviOptions,
) -> Result<Mixture> {
    if families.is_empty() {
        return Err(Error::Precondition(
            "multi-task mixture needs at least one family".into(),
        ));
    }
    let opts = PromptOptions {
        max_pos: opts.max_pos.min(2),
        max_neg: opts.max_neg.min(2),
        ..*opts
    };
    let parts = families
        .par_iter()
        .map(|f| build_regime(f, p, regime, spec, &opts, mvi))
        .collect::<Result<Vec<_>>>()?;
    let mut items: Vec<MixtureItem> = parts.into_iter().flat_map(|m| m.items).collect();
    canonical_shuffle(&mut items, seed::derive(spec.seed, "shuffle/multi_task"));
    let refs: Vec<&InstructionFamily> = families.iter().collect();
    let mut manifest = base_manifest(spec, &refs, &items);
    prompt_options_record(&opts, &mut manifest);
    if regime == Regime::Mvi {
        manifest.options.insert(
            "equal_data".into(),
            format!("{:?}", mvi.equal_data).to_lowercase(),
        );
    }
    Ok(Mixture::new(Setting::MultiTask, regime, p, items, manifest))
}

/// Instruction phrasing used for evaluation prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phrasing {
    Original,
    /// Round-robin over the family's variants (the original if it has none).
    Variants,
    Perturbed(Perturbation),
}

/// Test split of the original card, rendered under `phrasing`.
pub fn build_eval_set(
    family: &InstructionFamily,
    spec: &SplitSpec,
    opts: &PromptOptions,
    phrasing: Phrasing,
    setting: Setting,
) -> Result<Mixture> {
    spec.validate()?;
    let test = split_instances(&family.original, spec).test;
    let perturbed;
    let members: Vec<&TaskCard> = match phrasing {
        Phrasing::Original => vec![&family.original],
        Phrasing::Variants if !family.variants.is_empty() => family.variants_by_index(),
        Phrasing::Variants => vec![&family.original],
        Phrasing::Perturbed(kind) => {
            perturbed = perturb(&family.original, kind);
            vec![&perturbed]
        }
    };
    let items: Vec<MixtureItem> = test
        .iter()
        .enumerate()
        .map(|(i, inst)| item(members[i % members.len()], &family.family_id, inst, opts))
        .collect();
    let regime = if items.iter().all(|i| i.variant_index == 0) {
        Regime::Si
    } else {
        Regime::Mvi
    };
    let mut manifest = base_manifest(spec, &[family], &items);
    prompt_options_record(opts, &mut manifest);
    manifest.options.insert("split".into(), "test".into());
    manifest.options.insert(
        "phrasing".into(),
        match phrasing {
            Phrasing::Original => "original".to_string(),
            Phrasing::Variants => "variants".to_string(),
            Phrasing::Perturbed(k) => k.label().to_string(),
        },
    );
    Ok(Mixture::new(setting, regime, 1.0, items, manifest))
}

/// Concatenates per-family evaluation sets in family-id order.
pub fn concat_eval_sets(sets: &[Mixture]) -> Mixture {
    let mut sets: Vec<&Mixture> = sets.iter().collect();
    sets.sort_by(|a, b| a.manifest.source_families.cmp(&b.manifest.source_families));
    let items: Vec<MixtureItem> = sets.iter().flat_map(|m| m.items.iter().cloned()).collect();
    let mut manifest = MixtureManifest::default();
    for m in &sets {
        manifest.seed = m.manifest.seed;
        manifest
            .source_families
            .extend(m.manifest.source_families.iter().cloned());
        manifest.per_family_counts.extend(
            m.manifest
                .per_family_counts
                .iter()
                .map(|(k, v)| (k.clone(), *v)),
        );
        manifest.options.extend(
            m.manifest
                .options
                .iter()
                .map(|(k, v)| (k.clone(), v.clone())),
        );
    }
    let setting = sets
        .first()
        .map(|m| m.setting)
        .unwrap_or(Setting::TaskSpecific);
    let regime = if items.iter().all(|i| i.variant_index == 0) {
        Regime::Si
    } else {
        Regime::Mvi
    };
    Mixture::new(setting, regime, 1.0, items, manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossTaskMixtures {
    pub train: Mixture,
    pub eval_sets: Vec<Mixture>,
}

/// Train on a sample of tasks, evaluate on disjoint held-out tasks.
///
/// Training families contribute `instance_frac` of all their original
/// instances (nothing is held out from them); evaluation sets are the
/// held-out families' original test splits.
#[allow(clippy::too_many_arguments)]
pub fn build_crosstask_mixture(
    train_families: &[InstructionFamily],
    task_frac: f64,
    instance_frac: f64,
    regime: Regime,
    spec: &SplitSpec,
    eval_families: &[InstructionFamily],
    opts: &PromptOptions,
    mvi: &MviOptions,
) -> Result<CrossTaskMixtures> {
    spec.validate()?;
    check_fraction(instance_frac)?;
    let eval_ids: BTreeSet<&str> = eval_families.iter().map(|f| f.family_id.as_str()).collect();
    let overlap: Vec<String> = train_families
        .iter()
        .map(|f| f.family_id.as_str())
        .filter(|id| eval_ids.contains(id))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_owned)
        .collect();
    if !overlap.is_empty() {
        return Err(Error::Disjointness(overlap));
    }
    let mut pool: Vec<&InstructionFamily> = train_families.iter().collect();
    pool.sort_by(|a, b| a.family_id.cmp(&b.family_id));
    let chosen = sample_fraction(&pool, task_frac, seed::derive(spec.seed, "tasks"))?;

    let parts = chosen
        .par_iter()
        .map(|family| crosstask_family_items(family, instance_frac, regime, spec, opts, mvi))
        .collect::<Result<Vec<_>>>()?;
    let mut items: Vec<MixtureItem> = parts.into_iter().flatten().collect();
    canonical_shuffle(&mut items, seed::derive(spec.seed, "shuffle/cross_task"));
    let mut chosen_sorted = chosen.clone();
    chosen_sorted.sort_by(|a, b| a.family_id.cmp(&b.family_id));
    let mut manifest = base_manifest(spec, &chosen_sorted, &items);
    prompt_options_record(opts, &mut manifest);
    manifest
        .options
        .insert("task_frac".into(), task_frac.to_string());
    manifest
        .options
        .insert("instance_frac".into(), instance_frac.to_string());
    let train = Mixture::new(Setting::CrossTask, regime, instance_frac, items, manifest);

    let mut eval_sorted: Vec<&InstructionFamily> = eval_families.iter().collect();
    eval_sorted.sort_by(|a, b| a.family_id.cmp(&b.family_id));
    let eval_sets = eval_sorted
        .par_iter()
        .map(|f| build_eval_set(f, spec, opts, Phrasing::Original, Setting::CrossTask))
        .collect::<Result<Vec<_>>>()?;
    Ok(CrossTaskMixtures { train, eval_sets })
}

fn crosstask_family_items(
    family: &InstructionFamily,
    p: f64,
    regime: Regime,
    spec: &SplitSpec,
    opts: &PromptOptions,
    mvi: &MviOptions,
) -> Result<Vec<MixtureItem>> {
    let sample = sample_fraction(
        &family.original.instances,
        p,
        seed::derive(spec.seed, &format!("sample/{}", family.family_id)),
    )?;
    let members: Vec<&TaskCard> = match regime {
        Regime::Si => vec![&family.original],
        Regime::Mvi => std::iter::once(&family.original)
            .chain(family.variants_by_index())
            .collect(),
    };
    if regime == Regime::Mvi && mvi.every_member {
        return Ok(sample
            .iter()
            .flat_map(|inst| {
                members
                    .iter()
                    .map(move |m| item(m, &family.family_id, inst, opts))
            })
            .collect());
    }
    Ok(sample
        .iter()
        .enumerate()
        .map(|(i, inst)| item(members[i % members.len()], &family.family_id, inst, opts))
        .collect())
}
