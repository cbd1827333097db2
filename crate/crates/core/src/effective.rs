//! Compute accounting over a lineage.
//!
//! The *weight chain* of a model is the sequence of creating events that carried its
//! weights forward: starting at the model, follow fine-tune, synthetic-data, expansion,
//! copy and software-combination events back to the event that trained the weights from
//! scratch (pretraining) or from teachers (distillation, kickstarting, reincarnation).
//! Teachers are not part of the chain; their compute is never summed into the student.
//!
//! Adjustments are multiplicative on the counted total, so each compute-inflation
//! adjustment has an exact threshold-lowering dual (`threshold_divisor`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compute::OomValue;
use crate::ledger::{DerivationEvent, EventKind, Lineage, NodeId};
use crate::scaling::{inference_training_equivalent, ScalingConfig, ScalingError};
use crate::Compute;

/// Relative slack when comparing a fine-tune fraction against its materiality fraction,
/// so that e.g. 1.5e25 on 1e26 reaches 15% despite log-domain rounding.
const FRACTION_SLACK: f64 = 1e-12;

pub const DISTILL_MULTIPLIER: f64 = 10.0;
pub const KICKSTART_MULTIPLIER: f64 = 9.58;
/// Midpoint of the 10x-15x range for matching the previous agent.
pub const REINCARNATE_MATCHING_MULTIPLIER: f64 = 12.5;
/// Midpoint of the 2x-5x range for surpassing it.
pub const REINCARNATE_SURPASSING_MULTIPLIER: f64 = 3.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EffectiveError {
    #[error("unknown model id {0}")]
    UnknownId(NodeId),
    #[error("model {0} does not descend from a pretraining or reuse event")]
    NoPretrainRoot(NodeId),
    #[error("{0} is not a model-reuse event kind")]
    KindError(EventKind),
    #[error("invalid counting policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FinetuneCounting {
    Never,
    Always,
    /// Count all fine-tuning once its aggregate reaches `fraction` of the base training compute.
    IfAggregateAtLeastFraction {
        fraction: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ReuseAdjustment {
    None,
    /// Inflate by the per-technique default savings factors.
    ByTechnique,
    MultiplyStudentCompute {
        factor: f64,
    },
    LowerThreshold {
        factor: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExpansionAdjustment {
    None,
    InflateByMaxSavings {
        savings: f64,
    },
    /// Inflate by the largest `expand_savings_fraction` declared on the chain.
    InflateByEventSavings,
    LowerThreshold {
        factor: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountingPolicy {
    pub count_finetune: FinetuneCounting,
    pub count_synthetic_data: bool,
    pub reuse_adjustment: ReuseAdjustment,
    pub expansion_adjustment: ExpansionAdjustment,
    pub inference_adjustment: bool,
}

impl Default for CountingPolicy {
    fn default() -> Self {
        Self {
            count_finetune: FinetuneCounting::Never,
            count_synthetic_data: false,
            reuse_adjustment: ReuseAdjustment::None,
            expansion_adjustment: ExpansionAdjustment::None,
            inference_adjustment: false,
        }
    }
}

impl CountingPolicy {
    pub fn validate(&self) -> Result<(), EffectiveError> {
        let bad = |m: String| Err(EffectiveError::InvalidPolicy(m));
        if let FinetuneCounting::IfAggregateAtLeastFraction { fraction } = self.count_finetune {
            if !(fraction > 0.0 && fraction < 1.0) {
                return bad(format!(
                    "fine-tune fraction must be in (0, 1), got {fraction}"
                ));
            }
        }
        match self.reuse_adjustment {
            ReuseAdjustment::MultiplyStudentCompute { factor }
            | ReuseAdjustment::LowerThreshold { factor }
                if !(factor.is_finite() && factor >= 1.0) =>
            {
                return bad(format!("reuse factor must be >= 1, got {factor}"))
            }
            _ => {}
        }
        match self.expansion_adjustment {
            ExpansionAdjustment::InflateByMaxSavings { savings }
                if !(0.0..1.0).contains(&savings) =>
            {
                return bad(format!(
                    "expansion savings must be in [0, 1), got {savings}"
                ))
            }
            ExpansionAdjustment::LowerThreshold { factor }
                if !(factor.is_finite() && factor >= 1.0) =>
            {
                return bad(format!("expansion factor must be >= 1, got {factor}"))
            }
            _ => {}
        }
        Ok(())
    }

    /// Counts everything a literal reading leaves open (fine-tuning, synthetic data).
    pub fn counting_everything(&self) -> Self {
        Self {
            count_finetune: FinetuneCounting::Always,
            count_synthetic_data: true,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReuseRecord {
    pub teacher: NodeId,
    pub kind: EventKind,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeBreakdown {
    /// Event that trained the weights: pretraining, or the reuse event that created a student.
    pub base_kind: EventKind,
    /// Compute of that base event (student-side compute for reuse).
    pub pretrain: Compute,
    pub finetune_total: Compute,
    pub finetune_fraction: f64,
    pub finetune_counted: bool,
    pub synthetic_data: Compute,
    pub synthetic_counted: bool,
    pub expansion: Compute,
    /// Sum of the counted parts before any adjustment.
    pub counted_total: Compute,
    pub reuse_events: Vec<ReuseRecord>,
    pub reuse_factor: f64,
    pub expansion_factor: f64,
    pub inference_equivalent_ooms: OomValue,
    /// Threshold-lowering adjustments: thresholds are divided by this instead of inflating.
    pub threshold_divisor: f64,
    pub effective: Compute,
    pub notes: Vec<String>,
}

impl ComputeBreakdown {
    /// `effective` recomputed from its parts.
    pub fn recompute_effective(&self) -> Compute {
        self.counted_total.scale_ooms(
            self.reuse_factor.log10()
                + self.expansion_factor.log10()
                + self.inference_equivalent_ooms.get(),
        )
    }
}

pub(crate) struct WeightChain<'a> {
    /// From the model back to the base event.
    events: Vec<&'a DerivationEvent>,
}

impl<'a> WeightChain<'a> {
    pub(crate) fn walk(lineage: &'a Lineage, id: &NodeId) -> Result<Self, EffectiveError> {
        if !lineage.contains(id) {
            return Err(EffectiveError::UnknownId(id.clone()));
        }
        let mut events = Vec::new();
        let mut at = id;
        loop {
            let e = lineage
                .creating_event(at)
                .ok_or_else(|| EffectiveError::NoPretrainRoot(id.clone()))?;
            events.push(e);
            if !e.kind.inherits_weights() {
                break;
            }
            if events.len() > lineage.len() {
                return Err(EffectiveError::NoPretrainRoot(id.clone()));
            }
            at = e
                .parents
                .first()
                .ok_or_else(|| EffectiveError::NoPretrainRoot(id.clone()))?;
        }
        Ok(Self { events })
    }

    pub(crate) fn base(&self) -> &'a DerivationEvent {
        self.events.last().expect("chain is never empty")
    }

    /// Oldest first.
    pub(crate) fn chronological(&self) -> impl Iterator<Item = &'a DerivationEvent> + '_ {
        self.events.iter().rev().copied()
    }

    pub(crate) fn has_planned(&self) -> bool {
        self.events.iter().any(|e| e.planned)
    }

    fn sum(&self, kind: EventKind) -> Compute {
        self.events
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.compute)
            .sum()
    }

    fn max_expand_savings(&self) -> Option<f64> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Expand)
            .map(|e| e.expand_savings_fraction.unwrap_or(0.0))
            .reduce(f64::max)
    }
}

fn reaches_fraction(fraction: f64, threshold: f64) -> bool {
    fraction >= threshold * (1.0 - FRACTION_SLACK)
}

/// Counted training compute along the weight chain, without savings or inference adjustments.
pub fn cumulative_training_compute(
    lineage: &Lineage,
    id: &NodeId,
    policy: &CountingPolicy,
) -> Result<ComputeBreakdown, EffectiveError> {
    let chain = WeightChain::walk(lineage, id)?;
    let base = chain.base();
    let pretrain = base.compute;
    let finetune_total = chain.sum(EventKind::FineTune);
    let synthetic_data = chain.sum(EventKind::SyntheticDataGen);
    let expansion = chain.sum(EventKind::Expand);
    let finetune_fraction = finetune_total.ratio(&pretrain);
    let mut notes = Vec::new();

    let finetune_counted = match policy.count_finetune {
        FinetuneCounting::Never => false,
        FinetuneCounting::Always => true,
        FinetuneCounting::IfAggregateAtLeastFraction { fraction } => {
            let counted = reaches_fraction(finetune_fraction, fraction);
            if !finetune_total.is_zero() {
                notes.push(format!(
                    "aggregate fine-tune compute {finetune_total} is {:.2}% of base training compute; {} the {:.0}% materiality fraction",
                    finetune_fraction * 100.0,
                    if counted { "at or above" } else { "below" },
                    fraction * 100.0
                ));
            }
            counted
        }
    };
    if !finetune_counted && !finetune_total.is_zero() {
        notes.push(format!("fine-tune compute {finetune_total} excluded"));
    }
    if !policy.count_synthetic_data && !synthetic_data.is_zero() {
        notes.push(format!("synthetic-data compute {synthetic_data} excluded"));
    }
    if base.kind.is_reuse() {
        notes.push(format!(
            "base training compute is the student-side compute of the {} event; teacher compute not summed",
            base.kind
        ));
    }

    let mut counted_total = pretrain + expansion;
    if finetune_counted {
        counted_total = counted_total + finetune_total;
    }
    if policy.count_synthetic_data {
        counted_total = counted_total + synthetic_data;
    }

    Ok(ComputeBreakdown {
        base_kind: base.kind,
        pretrain,
        finetune_total,
        finetune_fraction,
        finetune_counted,
        synthetic_data,
        synthetic_counted: policy.count_synthetic_data,
        expansion,
        counted_total,
        reuse_events: Vec::new(),
        reuse_factor: 1.0,
        expansion_factor: 1.0,
        inference_equivalent_ooms: OomValue::zero(),
        threshold_divisor: 1.0,
        effective: counted_total,
        notes,
    })
}

/// Aggregate fine-tune compute divided by the base training compute of the weight chain.
pub fn aggregate_finetune_fraction(lineage: &Lineage, id: &NodeId) -> Result<f64, EffectiveError> {
    let chain = WeightChain::walk(lineage, id)?;
    Ok(chain.sum(EventKind::FineTune).ratio(&chain.base().compute))
}

/// Savings factor of a reuse event. A policy factor, when set, applies to every technique.
pub fn reuse_multiplier(
    kind: EventKind,
    surpass_teacher: Option<bool>,
    policy: &CountingPolicy,
) -> Result<f64, EffectiveError> {
    if !kind.is_reuse() {
        return Err(EffectiveError::KindError(kind));
    }
    if let ReuseAdjustment::MultiplyStudentCompute { factor }
    | ReuseAdjustment::LowerThreshold { factor } = policy.reuse_adjustment
    {
        return Ok(factor);
    }
    Ok(match kind {
        EventKind::Distill => DISTILL_MULTIPLIER,
        EventKind::Kickstart => KICKSTART_MULTIPLIER,
        _ if surpass_teacher == Some(true) => REINCARNATE_SURPASSING_MULTIPLIER,
        _ => REINCARNATE_MATCHING_MULTIPLIER,
    })
}

/// Product of reuse multipliers down the teacher chain (largest branch for ensembles).
fn compounded_reuse_factor(
    lineage: &Lineage,
    id: &NodeId,
    policy: &CountingPolicy,
    records: &mut Vec<ReuseRecord>,
) -> Result<f64, EffectiveError> {
    let chain = WeightChain::walk(lineage, id)?;
    let base = chain.base();
    if !base.kind.is_reuse() {
        return Ok(1.0);
    }
    let m = if policy.reuse_adjustment == ReuseAdjustment::None {
        1.0
    } else {
        reuse_multiplier(base.kind, base.surpass_teacher, policy)?
    };
    let mut teacher_factor: f64 = 1.0;
    for teacher in &base.parents {
        records.push(ReuseRecord {
            teacher: teacher.clone(),
            kind: base.kind,
            multiplier: m,
        });
        teacher_factor =
            teacher_factor.max(compounded_reuse_factor(lineage, teacher, policy, records)?);
    }
    Ok(m * teacher_factor)
}

/// Cumulative compute with the policy's reuse, expansion and inference adjustments.
pub fn effective_compute(
    lineage: &Lineage,
    id: &NodeId,
    policy: &CountingPolicy,
    cfg: &ScalingConfig<f64>,
) -> Result<ComputeBreakdown, EffectiveError> {
    let mut b = cumulative_training_compute(lineage, id, policy)?;
    let chain = WeightChain::walk(lineage, id)?;

    if chain.base().kind.is_reuse() {
        let mut records = Vec::new();
        let factor = compounded_reuse_factor(lineage, id, policy, &mut records)?;
        b.reuse_events = records;
        match policy.reuse_adjustment {
            ReuseAdjustment::None => {}
            ReuseAdjustment::ByTechnique | ReuseAdjustment::MultiplyStudentCompute { .. } => {
                b.reuse_factor = factor;
                b.notes.push(format!(
                    "reuse savings: compute inflated x{factor} (compounded over the teacher chain)"
                ));
            }
            ReuseAdjustment::LowerThreshold { .. } => {
                b.threshold_divisor *= factor;
                b.notes.push(format!(
                    "reuse savings: threshold lowered by x{factor} (compounded over the teacher chain)"
                ));
            }
        }
    }

    if let Some(event_savings) = chain.max_expand_savings() {
        match policy.expansion_adjustment {
            ExpansionAdjustment::None => {}
            ExpansionAdjustment::InflateByMaxSavings { savings } => {
                b.expansion_factor = 1.0 / (1.0 - savings);
                b.notes.push(format!(
                    "expansion savings: compute inflated by 1/(1-{savings})"
                ));
            }
            ExpansionAdjustment::InflateByEventSavings => {
                b.expansion_factor = 1.0 / (1.0 - event_savings);
                b.notes.push(format!(
                    "expansion savings: compute inflated by 1/(1-{event_savings}) from the declared event savings"
                ));
            }
            ExpansionAdjustment::LowerThreshold { factor } => {
                b.threshold_divisor *= factor;
                b.notes
                    .push(format!("expansion savings: threshold lowered by x{factor}"));
            }
        }
    }

    if policy.inference_adjustment {
        let node = lineage.node(id).expect("walked above");
        if let Some(profile) = node.inference.as_ref() {
            if !b.counted_total.is_zero() {
                b.inference_equivalent_ooms =
                    inference_training_equivalent(b.counted_total, Some(profile), cfg)?;
                if b.inference_equivalent_ooms.get() > 0.0 {
                    b.notes.push(format!(
                        "above-optimal inference adds {:.3} OOM of training-equivalent compute",
                        b.inference_equivalent_ooms.get()
                    ));
                }
            }
        }
    }

    b.effective = b.recompute_effective();
    Ok(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportingEvent {
    /// The fine-tune event, identified by the model it created.
    pub event: NodeId,
    pub cumulative_fraction: f64,
}

/// Fine-tune event at which the running aggregate fraction first reaches `threshold`.
pub fn finetune_reporting_events(
    lineage: &Lineage,
    id: &NodeId,
    threshold: f64,
) -> Result<Vec<ReportingEvent>, EffectiveError> {
    let chain = WeightChain::walk(lineage, id)?;
    let base = chain.base().compute;
    let mut running = Compute::zero();
    for e in chain
        .chronological()
        .filter(|e| e.kind == EventKind::FineTune)
    {
        running = running + e.compute;
        let fraction = running.ratio(&base);
        if reaches_fraction(fraction, threshold) {
            return Ok(vec![ReportingEvent {
                event: e.child.clone(),
                cumulative_fraction: fraction,
            }]);
        }
    }
    Ok(Vec::new())
}
