//! Instruction task data model: task files, instruction families and prompt
//! serialization.
//!
//! A task file is a JSON object with `task_id`, `name`, `category`,
//! `definition`, `positive_examples`, `negative_examples`, `instances` and an
//! optional `variant_index`. A family file wraps several task objects:
//! `{"family_id": ..., "members": [...]}`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// A worked demonstration shown alongside the definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleCase {
    pub input: String,
    pub output: String,
    #[serde(default)]
    pub explanation: String,
}

/// An input to solve, with one or more acceptable gold outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub input: String,
    #[serde(rename = "output")]
    pub references: Vec<String>,
}

/// Which example block comes first in a serialized prompt.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleOrder {
    #[default]
    PositivesFirst,
    NegativesFirst,
}

impl ExampleOrder {
    fn is_default(&self) -> bool {
        *self == ExampleOrder::PositivesFirst
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaskCard {
    pub task_id: String,
    pub name: String,
    pub category: String,
    pub definition: String,
    #[serde(rename = "positive_examples")]
    pub positives: Vec<ExampleCase>,
    #[serde(rename = "negative_examples")]
    pub negatives: Vec<ExampleCase>,
    pub instances: Vec<Instance>,
    pub variant_index: u32,
    #[serde(skip_serializing_if = "ExampleOrder::is_default")]
    pub example_order: ExampleOrder,
}

/// An original task together with its variant phrasings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionFamily {
    pub family_id: String,
    pub original: TaskCard,
    pub variants: Vec<TaskCard>,
}

impl InstructionFamily {
    /// Builds a family keyed by the original's task id.
    pub fn new(original: TaskCard, variants: Vec<TaskCard>) -> Self {
        InstructionFamily {
            family_id: original.task_id.clone(),
            original,
            variants,
        }
    }

    /// Original first, then variants in stored order.
    pub fn members(&self) -> impl Iterator<Item = &TaskCard> {
        std::iter::once(&self.original).chain(self.variants.iter())
    }

    pub fn member_count(&self) -> usize {
        1 + self.variants.len()
    }

    /// Variants ordered by `variant_index` (stable for equal indices).
    pub fn variants_by_index(&self) -> Vec<&TaskCard> {
        let mut variants: Vec<&TaskCard> = self.variants.iter().collect();
        variants.sort_by_key(|v| v.variant_index);
        variants
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub variant_index: u32,
    pub field: String,
    pub message: String,
}

/// Every invariant violation found in a family; empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

const TASK_FIELDS: &[&str] = &[
    "task_id",
    "name",
    "category",
    "definition",
    "positive_examples",
    "negative_examples",
    "instances",
    "variant_index",
    "example_order",
];
const EXAMPLE_FIELDS: &[&str] = &["input", "output", "explanation"];
const INSTANCE_FIELDS: &[&str] = &["id", "input", "output"];

/// Parses and validates a single task file.
///
/// Unknown fields are ignored; each one is logged as a warning.
pub fn parse_task_file(bytes: &[u8]) -> Result<TaskCard> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| Error::from_json(bytes, e))?;
    let mut warnings = Vec::new();
    let card = decode_task(&value, "", &mut warnings)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    let violations = card_violations(&card);
    if !violations.is_empty() {
        let joined: Vec<String> = violations.into_iter().map(|v| v.message).collect();
        return Err(Error::Validation(joined.join("; ")));
    }
    Ok(card)
}

/// Decodes a task object without checking semantic invariants, returning the
/// card and the unknown-field warnings.
pub fn decode_task_value(value: &Value) -> Result<(TaskCard, Vec<String>)> {
    let mut warnings = Vec::new();
    let card = decode_task(value, "", &mut warnings)?;
    Ok((card, warnings))
}

/// Parses a family file. Members are decoded structurally only; run
/// [`validate_family`] to check invariants.
pub fn parse_family_file(bytes: &[u8]) -> Result<InstructionFamily> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| Error::from_json(bytes, e))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::schema("family", "expected a JSON object"))?;
    let family_id = string_field(obj, "family_id", "")?;
    let members = obj
        .get("members")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::schema("members", "expected an array of task objects"))?;
    let mut warnings = Vec::new();
    for key in obj.keys() {
        if key != "family_id" && key != "members" {
            warnings.push(format!("ignoring unknown field `{key}`"));
        }
    }
    let mut cards = Vec::with_capacity(members.len());
    for (i, m) in members.iter().enumerate() {
        cards.push(decode_task(m, &format!("members[{i}]."), &mut warnings)?);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let original_pos = cards
        .iter()
        .position(|c| c.variant_index == 0)
        .ok_or_else(|| Error::schema("members", "no member with variant_index 0"))?;
    let original = cards.remove(original_pos);
    Ok(InstructionFamily {
        family_id,
        original,
        variants: cards,
    })
}

pub fn read_task_file(path: impl AsRef<Path>) -> Result<TaskCard> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_task_file(&bytes)
}

pub fn read_family_file(path: impl AsRef<Path>) -> Result<InstructionFamily> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_family_file(&bytes)
}

/// Reads every `*.json` family file in `dir`, sorted by family id. Run
/// manifests (`*.manifest.json`) written next to augment outputs are skipped.
pub fn read_family_dir(dir: impl AsRef<Path>) -> Result<Vec<InstructionFamily>> {
    let dir = dir.as_ref();
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_manifest = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(".manifest.json"));
        if path.extension().is_some_and(|ext| ext == "json") && !is_manifest {
            paths.push(path);
        }
    }
    paths.sort();
    let mut families = paths
        .iter()
        .map(read_family_file)
        .collect::<Result<Vec<_>>>()?;
    families.sort_by(|a, b| a.family_id.cmp(&b.family_id));
    Ok(families)
}

/// Reads a JSON array of instance objects (the resampling pool format).
pub fn parse_instances(bytes: &[u8]) -> Result<Vec<Instance>> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| Error::from_json(bytes, e))?;
    let mut warnings = Vec::new();
    let out = decode_instances(Some(&value), "", &mut warnings)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(out)
}

pub fn serialize_task_file(card: &TaskCard) -> String {
    serde_json::to_string_pretty(card).expect("task cards always serialize")
}

#[derive(Serialize)]
struct FamilyFile<'a> {
    family_id: &'a str,
    members: Vec<&'a TaskCard>,
}

/// Family file JSON with the original first and variants by index.
pub fn serialize_family_file(family: &InstructionFamily) -> String {
    let mut members = vec![&family.original];
    members.extend(family.variants_by_index());
    let file = FamilyFile {
        family_id: &family.family_id,
        members,
    };
    serde_json::to_string_pretty(&file).expect("families always serialize")
}

fn decode_task(value: &Value, prefix: &str, warnings: &mut Vec<String>) -> Result<TaskCard> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::schema(format!("{prefix}task"), "expected a JSON object"))?;
    warn_unknown(obj, TASK_FIELDS, prefix, warnings);
    let variant_index = match obj.get("variant_index") {
        None | Some(Value::Null) => 0,
        Some(v) => v
            .as_u64()
            .and_then(|n| u32::try_from(n).ok())
            .ok_or_else(|| {
                Error::schema(
                    format!("{prefix}variant_index"),
                    "expected a non-negative integer",
                )
            })?,
    };
    let example_order = match obj.get("example_order") {
        None | Some(Value::Null) => ExampleOrder::default(),
        Some(v) => serde_json::from_value(v.clone()).map_err(|_| {
            Error::schema(
                format!("{prefix}example_order"),
                "expected \"positives_first\" or \"negatives_first\"",
            )
        })?,
    };
    Ok(TaskCard {
        task_id: string_field(obj, "task_id", prefix)?,
        name: string_field(obj, "name", prefix)?,
        category: string_field(obj, "category", prefix)?,
        definition: string_field(obj, "definition", prefix)?,
        positives: decode_examples(
            obj.get("positive_examples"),
            &format!("{prefix}positive_examples"),
            warnings,
        )?,
        negatives: decode_examples(
            obj.get("negative_examples"),
            &format!("{prefix}negative_examples"),
            warnings,
        )?,
        instances: decode_instances(
            obj.get("instances"),
            &format!("{prefix}instances"),
            warnings,
        )?,
        variant_index,
        example_order,
    })
}

fn decode_examples(
    value: Option<&Value>,
    path: &str,
    warnings: &mut Vec<String>,
) -> Result<Vec<ExampleCase>> {
    let items = value
        .and_then(Value::as_array)
        .ok_or_else(|| Error::schema(path, "expected an array"))?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let item_path = format!("{path}[{i}]");
            let obj = item
                .as_object()
                .ok_or_else(|| Error::schema(&item_path, "expected an object"))?;
            warn_unknown(obj, EXAMPLE_FIELDS, &format!("{item_path}."), warnings);
            let explanation = match obj.get("explanation") {
                None | Some(Value::Null) => String::new(),
                Some(_) => string_field(obj, "explanation", &format!("{item_path}."))?,
            };
            Ok(ExampleCase {
                input: string_field(obj, "input", &format!("{item_path}."))?,
                output: string_field(obj, "output", &format!("{item_path}."))?,
                explanation,
            })
        })
        .collect()
}

fn decode_instances(
    value: Option<&Value>,
    path: &str,
    warnings: &mut Vec<String>,
) -> Result<Vec<Instance>> {
    let field = if path.is_empty() { "instances" } else { path };
    let items = value
        .and_then(Value::as_array)
        .ok_or_else(|| Error::schema(field, "expected an array"))?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let item_path = format!("{path}[{i}]");
            let obj = item
                .as_object()
                .ok_or_else(|| Error::schema(&item_path, "expected an object"))?;
            let prefix = format!("{item_path}.");
            warn_unknown(obj, INSTANCE_FIELDS, &prefix, warnings);
            let references = match obj.get("output") {
                Some(Value::Array(outs)) => outs
                    .iter()
                    .map(|o| {
                        o.as_str().map(str::to_owned).ok_or_else(|| {
                            Error::schema(format!("{prefix}output"), "expected strings")
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
                // A bare string is accepted as a single reference.
                Some(Value::String(s)) => vec![s.clone()],
                _ => {
                    return Err(Error::schema(
                        format!("{prefix}output"),
                        "expected an array of strings",
                    ))
                }
            };
            Ok(Instance {
                id: string_field(obj, "id", &prefix)?,
                input: string_field(obj, "input", &prefix)?,
                references,
            })
        })
        .collect()
}

fn string_field(obj: &Map<String, Value>, name: &str, prefix: &str) -> Result<String> {
    match obj.get(name) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(Error::schema(
            format!("{prefix}{name}"),
            "expected a string",
        )),
        None => Err(Error::schema(format!("{prefix}{name}"), "")),
    }
}

fn warn_unknown(
    obj: &Map<String, Value>,
    known: &[&str],
    prefix: &str,
    warnings: &mut Vec<String>,
) {
    for key in obj.keys() {
        if !known.contains(&key.as_str()) {
            warnings.push(format!("ignoring unknown field `{prefix}{key}`"));
        }
    }
}

fn card_violations(card: &TaskCard) -> Vec<Violation> {
    let idx = card.variant_index;
    let mut out = Vec::new();
    let mut push = |field: String, message: String| {
        out.push(Violation {
            variant_index: idx,
            field,
            message,
        })
    };
    if card.definition.trim().is_empty() {
        push(
            "definition".into(),
            format!("member {idx}: definition is empty"),
        );
    }
    if card.category.trim().is_empty() {
        push(
            "category".into(),
            format!("member {idx}: category is empty"),
        );
    }
    for (label, examples) in [
        ("positive_examples", &card.positives),
        ("negative_examples", &card.negatives),
    ] {
        for (i, ex) in examples.iter().enumerate() {
            if ex.input.is_empty() {
                push(
                    format!("{label}[{i}].input"),
                    format!("member {idx}: {label}[{i}] has empty input"),
                );
            }
            if ex.output.is_empty() {
                push(
                    format!("{label}[{i}].output"),
                    format!("member {idx}: {label}[{i}] has empty output"),
                );
            }
        }
    }
    let mut seen = HashSet::new();
    for (i, inst) in card.instances.iter().enumerate() {
        if inst.id.is_empty() {
            push(
                format!("instances[{i}].id"),
                format!("member {idx}: instance {i} has an empty id"),
            );
        } else if !seen.insert(inst.id.as_str()) {
            push(
                format!("instances[{i}].id"),
                format!("member {idx}: duplicate instance id `{}`", inst.id),
            );
        }
        if inst.references.is_empty() {
            push(
                format!("instances[{i}].output"),
                format!(
                    "member {idx}: instance `{}` has no reference outputs",
                    inst.id
                ),
            );
        }
    }
    out
}

/// Checks every family invariant and reports each violation.
pub fn validate_family(family: &InstructionFamily) -> ValidationReport {
    let mut violations = Vec::new();
    if family.family_id != family.original.task_id {
        violations.push(Violation {
            variant_index: family.original.variant_index,
            field: "family_id".into(),
            message: format!(
                "family id `{}` does not match the original's task id `{}`",
                family.family_id, family.original.task_id
            ),
        });
    }
    if family.original.variant_index != 0 {
        violations.push(Violation {
            variant_index: family.original.variant_index,
            field: "variant_index".into(),
            message: "the original must have variant_index 0".into(),
        });
    }
    let mut indices = BTreeSet::new();
    for card in family.members() {
        if !indices.insert(card.variant_index) {
            violations.push(Violation {
                variant_index: card.variant_index,
                field: "variant_index".into(),
                message: format!(
                    "variant_index {} is used by more than one member",
                    card.variant_index
                ),
            });
        }
        if card.category != family.original.category {
            violations.push(Violation {
                variant_index: card.variant_index,
                field: "category".into(),
                message: format!(
                    "category `{}` differs from the original's `{}`",
                    card.category, family.original.category
                ),
            });
        }
        violations.extend(card_violations(card));
    }
    ValidationReport { violations }
}

/// Prompt rendering options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptOptions {
    pub max_pos: usize,
    pub max_neg: usize,
    pub include_explanations: bool,
}

impl Default for PromptOptions {
    fn default() -> Self {
        PromptOptions {
            max_pos: usize::MAX,
            max_neg: usize::MAX,
            include_explanations: true,
        }
    }
}

impl PromptOptions {
    pub fn capped(max_pos: usize, max_neg: usize) -> Self {
        PromptOptions {
            max_pos,
            max_neg,
            ..Default::default()
        }
    }
}

pub const INSTANCE_HEADER: &str = "Now complete the following instance -";

/// Renders the prompt for `instance` under `card`'s instruction, keeping the
/// first `max_pos` positives and first `max_neg` negatives.
pub fn serialize_prompt(
    card: &TaskCard,
    instance: &Instance,
    max_pos: usize,
    max_neg: usize,
) -> String {
    serialize_prompt_with(card, instance, &PromptOptions::capped(max_pos, max_neg))
}

pub fn serialize_prompt_with(card: &TaskCard, instance: &Instance, opts: &PromptOptions) -> String {
    let mut sections = Vec::new();
    sections.push(format!("Definition: {}", card.definition));
    let positives = example_blocks(
        "Positive",
        &card.positives,
        opts.max_pos,
        opts.include_explanations,
    );
    let negatives = example_blocks(
        "Negative",
        &card.negatives,
        opts.max_neg,
        opts.include_explanations,
    );
    match card.example_order {
        ExampleOrder::PositivesFirst => {
            sections.extend(positives);
            sections.extend(negatives);
        }
        ExampleOrder::NegativesFirst => {
            sections.extend(negatives);
            sections.extend(positives);
        }
    }
    sections.push(format!(
        "{INSTANCE_HEADER}\nInput: {}\nOutput:",
        instance.input
    ));
    sections.join("\n\n")
}

fn example_blocks(
    kind: &str,
    examples: &[ExampleCase],
    cap: usize,
    explanations: bool,
) -> Vec<String> {
    examples
        .iter()
        .take(cap)
        .enumerate()
        .map(|(i, ex)| {
            let mut block = format!(
                "{kind} Example {} -\nInput: {}\nOutput: {}",
                i + 1,
                ex.input,
                ex.output
            );
            if explanations {
                block.push_str("\nExplanation: ");
                block.push_str(&ex.explanation);
            }
            block
        })
        .collect()
}

/// Instance ids per member, used by disjointness checks.
pub fn instance_ids_by_member(family: &InstructionFamily) -> BTreeMap<u32, BTreeSet<String>> {
    family
        .members()
        .map(|c| {
            (
                c.variant_index,
                c.instances.iter().map(|i| i.id.clone()).collect(),
            )
        })
        .collect()
}
