//! Instruction-equivalence estimates, evaluation-time perturbations and the
//! per-variant contribution series.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::ScoreReport;
use crate::mixtures::{build_mvi_mixture, Mixture, MviOptions, SplitSpec};
use crate::stats;
use crate::task_schema::{ExampleOrder, InstructionFamily, PromptOptions, TaskCard};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    pub score: f64,
}

/// Score as a function of training-instance fraction, sampled at strictly
/// increasing fractions. Scores may be on any scale (0–1 or 0–100).
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceCurve {
    points: Vec<CurvePoint>,
}

impl PerformanceCurve {
    pub fn new(points: Vec<CurvePoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Validation(
                "a performance curve needs at least 2 points".into(),
            ));
        }
        for p in &points {
            if !(p.fraction > 0.0 && p.fraction <= 1.0) {
                return Err(Error::Range(format!(
                    "curve fraction {} not in (0, 1]",
                    p.fraction
                )));
            }
            if !p.score.is_finite() {
                return Err(Error::Range("curve scores must be finite".into()));
            }
        }
        if points.windows(2).any(|w| w[1].fraction <= w[0].fraction) {
            return Err(Error::Validation(
                "curve fractions must be strictly increasing".into(),
            ));
        }
        Ok(PerformanceCurve { points })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(fraction, score)| CurvePoint { fraction, score })
                .collect(),
        )
    }

    /// Reads a JSON array of `{fraction, score}` objects.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let points: Vec<CurvePoint> =
            serde_json::from_slice(&bytes).map_err(|e| Error::from_json(&bytes, e))?;
        Self::new(points)
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn min_fraction(&self) -> f64 {
        self.points[0].fraction
    }

    pub fn max_fraction(&self) -> f64 {
        self.points[self.points.len() - 1].fraction
    }

    /// Piecewise-linear score at `fraction`, clamped to the end knots.
    pub fn evaluate(&self, fraction: f64) -> f64 {
        let pts = &self.points;
        if fraction <= pts[0].fraction {
            return pts[0].score;
        }
        for w in pts.windows(2) {
            if fraction <= w[1].fraction {
                let t = (fraction - w[0].fraction) / (w[1].fraction - w[0].fraction);
                return w[0].score + t * (w[1].score - w[0].score);
            }
        }
        pts[pts.len() - 1].score
    }

    /// Running maximum of the scores, making the curve non-decreasing.
    pub fn monotone_envelope(&self) -> Self {
        let mut best = f64::NEG_INFINITY;
        let points = self
            .points
            .iter()
            .map(|p| {
                best = best.max(p.score);
                CurvePoint {
                    fraction: p.fraction,
                    score: best,
                }
            })
            .collect();
        PerformanceCurve { points }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Interpolated {
    Fraction {
        fraction: f64,
    },
    /// Target exceeds every score on the curve.
    Saturated {
        max_fraction: f64,
    },
}

impl Interpolated {
    pub fn fraction(&self) -> Option<f64> {
        match self {
            Interpolated::Fraction { fraction } => Some(*fraction),
            Interpolated::Saturated { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolationMode {
    /// First crossing scanning segments left to right.
    #[default]
    FirstCrossing,
    /// Interpolate on the running-maximum envelope of the curve.
    MonotoneEnvelope,
}

/// Smallest fraction at which the piecewise-linear curve reaches `target`.
///
/// A target below every score maps to the smallest fraction; above every
/// score gives [`Interpolated::Saturated`]. A flat segment at exactly the
/// target resolves to its left endpoint.
pub fn interpolate_fraction(curve: &PerformanceCurve, target: f64) -> Interpolated {
    let pts = curve.points();
    let max = pts
        .iter()
        .map(|p| p.score)
        .fold(f64::NEG_INFINITY, f64::max);
    let min = pts.iter().map(|p| p.score).fold(f64::INFINITY, f64::min);
    if target > max {
        return Interpolated::Saturated {
            max_fraction: curve.max_fraction(),
        };
    }
    if target < min {
        return Interpolated::Fraction {
            fraction: curve.min_fraction(),
        };
    }
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.score == target {
            return Interpolated::Fraction {
                fraction: a.fraction,
            };
        }
        let lo = a.score.min(b.score);
        let hi = a.score.max(b.score);
        if lo <= target && target <= hi {
            let t = (target - a.score) / (b.score - a.score);
            return Interpolated::Fraction {
                fraction: a.fraction + t * (b.fraction - a.fraction),
            };
        }
    }
    // target equals the last knot's score
    Interpolated::Fraction {
        fraction: curve.max_fraction(),
    }
}

pub fn interpolate_fraction_with(
    curve: &PerformanceCurve,
    target: f64,
    mode: InterpolationMode,
) -> Interpolated {
    match mode {
        InterpolationMode::FirstCrossing => interpolate_fraction(curve, target),
        InterpolationMode::MonotoneEnvelope => {
            interpolate_fraction(&curve.monotone_envelope(), target)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceInput {
    pub si_curve: PerformanceCurve,
    pub mvi_score: f64,
    pub base_fraction: f64,
    pub total_instances: usize,
    pub num_variants: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Worth {
    /// Training instances one additional instruction variant stands in for.
    Samples {
        matched_fraction: f64,
        samples_per_instruction: f64,
    },
    Saturated {
        max_fraction: f64,
    },
}

impl Worth {
    pub fn samples(&self) -> Option<f64> {
        match self {
            Worth::Samples {
                samples_per_instruction,
                ..
            } => Some(*samples_per_instruction),
            Worth::Saturated { .. } => None,
        }
    }
}

/// `(f* − base) × N / V`, where `f*` is the SI fraction matching the MVI
/// score. Negative when MVI underperforms SI at the base fraction.
pub fn instruction_worth(input: &EquivalenceInput) -> Result<Worth> {
    instruction_worth_with(input, InterpolationMode::FirstCrossing)
}

pub fn instruction_worth_with(input: &EquivalenceInput, mode: InterpolationMode) -> Result<Worth> {
    let curve = &input.si_curve;
    if input.base_fraction < curve.min_fraction() || input.base_fraction > curve.max_fraction() {
        return Err(Error::Range(format!(
            "base fraction {} outside the curve's range [{}, {}]",
            input.base_fraction,
            curve.min_fraction(),
            curve.max_fraction()
        )));
    }
    if input.total_instances == 0 {
        return Err(Error::Range("total_instances must be at least 1".into()));
    }
    if input.num_variants == 0 {
        return Err(Error::Range("num_variants must be at least 1".into()));
    }
    Ok(
        match interpolate_fraction_with(curve, input.mvi_score, mode) {
            Interpolated::Saturated { max_fraction } => Worth::Saturated { max_fraction },
            Interpolated::Fraction { fraction } => Worth::Samples {
                matched_fraction: fraction,
                samples_per_instruction: (fraction - input.base_fraction)
                    * input.total_instances as f64
                    / input.num_variants as f64,
            },
        },
    )
}

/// Mean of per-task worths; saturated tasks are skipped.
pub fn average_worth(worths: &[Worth]) -> Option<f64> {
    let values: Vec<f64> = worths.iter().filter_map(Worth::samples).collect();
    (!values.is_empty()).then(|| stats::mean(&values))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// P1: the definition is removed.
    RemoveDefinition,
    /// P2: positives are presented before negatives.
    PositivesFirst,
    /// P3: every positive and negative example is removed.
    RemoveExamples,
}

impl Perturbation {
    pub const ALL: [Perturbation; 3] = [
        Perturbation::RemoveDefinition,
        Perturbation::PositivesFirst,
        Perturbation::RemoveExamples,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Perturbation::RemoveDefinition => "p1",
            Perturbation::PositivesFirst => "p2",
            Perturbation::RemoveExamples => "p3",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.label().eq_ignore_ascii_case(label))
    }
}

/// Applies an evaluation-time perturbation. Instances are never touched.
pub fn perturb(card: &TaskCard, kind: Perturbation) -> TaskCard {
    let mut out = card.clone();
    match kind {
        // The prompt keeps its "Definition:" header with an empty body.
        Perturbation::RemoveDefinition => out.definition.clear(),
        Perturbation::PositivesFirst => out.example_order = ExampleOrder::PositivesFirst,
        Perturbation::RemoveExamples => {
            out.positives.clear();
            out.negatives.clear();
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessGap {
    /// clean − perturbed, per family mean.
    pub per_family: BTreeMap<String, f64>,
    /// clean − perturbed macro mean.
    pub overall: f64,
    pub overall_x100: f64,
}

pub fn robustness_gap(clean: &ScoreReport, perturbed: &ScoreReport) -> Result<RobustnessGap> {
    let a: BTreeSet<&String> = clean.per_family.keys().collect();
    let b: BTreeSet<&String> = perturbed.per_family.keys().collect();
    let mismatch: Vec<String> = a.symmetric_difference(&b).map(|s| s.to_string()).collect();
    if !mismatch.is_empty() {
        return Err(Error::Coverage(mismatch));
    }
    let per_family = clean
        .per_family
        .iter()
        .map(|(fam, score)| (fam.clone(), score - perturbed.per_family[fam]))
        .collect();
    let overall = clean.macro_score - perturbed.macro_score;
    Ok(RobustnessGap {
        per_family,
        overall,
        overall_x100: overall * 100.0,
    })
}

/// One entry of the contribution series.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionStep {
    /// `MVI_1`, `MVI_2`, ..., `MVI_All`.
    pub label: String,
    pub variants_used: usize,
    pub mixture: Mixture,
}

/// `MVI_j` for j = 1..k (original plus the first j variants by index),
/// followed by `MVI_All`. Every step shares the same instance sample.
pub fn variant_contribution_series(
    family: &InstructionFamily,
    p: f64,
    spec: &SplitSpec,
    opts: &PromptOptions,
) -> Result<Vec<ContributionStep>> {
    let ordered: Vec<TaskCard> = family.variants_by_index().into_iter().cloned().collect();
    if ordered.is_empty() {
        return Err(Error::Config(format!(
            "family `{}` has no variants to add",
            family.family_id
        )));
    }
    let mut steps = Vec::with_capacity(ordered.len() + 1);
    for j in 1..=ordered.len() {
        let sub = InstructionFamily {
            family_id: family.family_id.clone(),
            original: family.original.clone(),
            variants: ordered[..j].to_vec(),
        };
        let mut mixture = build_mvi_mixture(&sub, p, spec, opts, &MviOptions::default())?;
        mixture
            .manifest
            .options
            .insert("variants_used".into(), j.to_string());
        steps.push(ContributionStep {
            label: format!("MVI_{j}"),
            variants_used: j,
            mixture,
        });
    }
    let mut all = build_mvi_mixture(family, p, spec, opts, &MviOptions::default())?;
    all.manifest
        .options
        .insert("variants_used".into(), ordered.len().to_string());
    steps.push(ContributionStep {
        label: "MVI_All".into(),
        variants_used: ordered.len(),
        mixture: all,
    });
    Ok(steps)
}
