//! Jurisdiction rule sets and verdicts.
//!
//! A [`Ruleset`] pairs a compute threshold with a [`CountingPolicy`]. Threshold tests are
//! strict ("greater than"); the only `>=` comparison is the SB 1047 fine-tune escalation
//! limb. Statuses are ordered `NotCovered < Ambiguous < Covered`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compute::MoneyAmount;
use crate::effective::{
    effective_compute, ComputeBreakdown, CountingPolicy, EffectiveError, ExpansionAdjustment,
    FinetuneCounting, ReuseAdjustment, WeightChain,
};
use crate::ledger::{EventKind, LedgerError, Lineage, NodeId};
use crate::scaling::ScalingConfig;
use crate::Compute;

/// Teacher recursion never legitimately goes deeper than the lineage; this only trips on
/// corrupted input.
pub const MAX_RECURSION_DEPTH: usize = 256;

pub const EU_NOTIFICATION_DAYS: u32 = 14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuleError {
    #[error("unknown model id {0}")]
    UnknownId(NodeId),
    #[error("teacher recursion exceeded {MAX_RECURSION_DEPTH} levels")]
    RecursionDepthExceeded,
    #[error("invalid rule set {id}: {message}")]
    InvalidRuleset { id: String, message: String },
    #[error("unknown rule set {0}")]
    UnknownRuleset(String),
    #[error(transparent)]
    Effective(EffectiveError),
    #[error(transparent)]
    Ledger(LedgerError),
}

impl From<LedgerError> for RuleError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::UnknownId(id) => RuleError::UnknownId(id),
            other => RuleError::Ledger(other),
        }
    }
}

impl From<EffectiveError> for RuleError {
    fn from(e: EffectiveError) -> Self {
        match e {
            EffectiveError::UnknownId(id) => RuleError::UnknownId(id),
            other => RuleError::Effective(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Jurisdiction {
    #[serde(rename = "US-Federal")]
    UsFederal,
    #[serde(rename = "EU")]
    Eu,
    #[serde(rename = "CA-State")]
    CaState,
}

impl fmt::Display for Jurisdiction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Jurisdiction::UsFederal => "US-Federal",
            Jurisdiction::Eu => "EU",
            Jurisdiction::CaState => "CA-State",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RuleEngine {
    /// Covered when effective compute (and total cost, if a cost threshold is set) exceed
    /// the threshold.
    ComputeThreshold,
    /// Covered-model / covered-model-derivative classification with a fine-tune
    /// escalation limb (`>=` on compute, `>` on cost).
    CoveredModel {
        finetune_threshold: Compute,
        finetune_cost: MoneyAmount,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotificationRule {
    pub window_days: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ruleset {
    pub id: String,
    pub jurisdiction: Jurisdiction,
    #[serde(default)]
    pub description: String,
    pub engine: RuleEngine,
    pub threshold: Compute,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_threshold: Option<MoneyAmount>,
    pub counting: CountingPolicy,
    /// Students are covered whenever any of their reuse teachers is.
    #[serde(default)]
    pub teacher_propagation: bool,
    /// Report `Ambiguous` when counting the compute this reading leaves out would flip the result.
    #[serde(default)]
    pub flag_ambiguity: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notification_rule: Option<NotificationRule>,
    #[serde(default)]
    pub citations: Vec<String>,
}

impl Ruleset {
    pub fn validate(&self) -> Result<(), RuleError> {
        let invalid = |message: String| RuleError::InvalidRuleset {
            id: self.id.clone(),
            message,
        };
        if self.id.trim().is_empty() {
            return Err(invalid("id must not be empty".into()));
        }
        if self.threshold.is_zero() {
            return Err(invalid("threshold must be > 0".into()));
        }
        self.counting
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        if let RuleEngine::CoveredModel {
            finetune_threshold, ..
        } = &self.engine
        {
            if finetune_threshold.is_zero() {
                return Err(invalid("fine-tune threshold must be > 0".into()));
            }
        }
        Ok(())
    }

    /// Threshold a model produced by one level of model reuse is held to.
    pub fn reuse_threshold(&self) -> Option<Compute> {
        match self.counting.reuse_adjustment {
            ReuseAdjustment::LowerThreshold { factor }
            | ReuseAdjustment::MultiplyStudentCompute { factor } => {
                Some(self.threshold.scale_ooms(-factor.log10()))
            }
            _ => None,
        }
    }

    /// Threshold a model produced by model expansion is held to.
    pub fn expansion_threshold(&self) -> Option<Compute> {
        match self.counting.expansion_adjustment {
            ExpansionAdjustment::LowerThreshold { factor } => {
                Some(self.threshold.scale_ooms(-factor.log10()))
            }
            ExpansionAdjustment::InflateByMaxSavings { savings } => {
                Some(self.threshold.scale(1.0 - savings))
            }
            _ => None,
        }
    }

    fn rule(&self, name: &str) -> String {
        format!("{}/{name}", self.id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Status {
    NotCovered,
    Ambiguous,
    Covered,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::NotCovered => "NotCovered",
            Status::Ambiguous => "Ambiguous",
            Status::Covered => "Covered",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DerivativeKind {
    Unmodified,
    NonFinetuneMods,
    SmallFinetune,
    CombinedSoftware,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "class", content = "kind")]
pub enum Classification {
    CoveredModel,
    CoveredModelDerivative(DerivativeKind),
    Neither,
}

impl Classification {
    fn is_regulated(self) -> bool {
        !matches!(self, Classification::Neither)
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classification::CoveredModel => f.write_str("CoveredModel"),
            Classification::CoveredModelDerivative(k) => write!(f, "CoveredModelDerivative({k:?})"),
            Classification::Neither => f.write_str("Neither"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Obligation {
    pub kind: String,
    pub deadline_days: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub ruleset: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<Classification>,
    /// Threshold actually applied after any threshold-lowering adjustment.
    pub threshold: Compute,
    pub triggered_rules: Vec<String>,
    pub breakdown: ComputeBreakdown,
    pub citations: Vec<String>,
    pub obligations: Vec<Obligation>,
    pub notes: Vec<String>,
}

/// Rule sets keyed (and iterated) by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    rulesets: BTreeMap<String, Ruleset>,
}

impl Registry {
    pub fn builtin() -> Self {
        let mut r = Registry::default();
        for rs in builtin_rulesets() {
            r.rulesets.insert(rs.id.clone(), rs);
        }
        r
    }

    pub fn insert(&mut self, ruleset: Ruleset) -> Result<(), RuleError> {
        ruleset.validate()?;
        if self.rulesets.contains_key(&ruleset.id) {
            return Err(RuleError::InvalidRuleset {
                id: ruleset.id.clone(),
                message: "id already registered".into(),
            });
        }
        self.rulesets.insert(ruleset.id.clone(), ruleset);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Ruleset> {
        self.rulesets.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Ruleset> {
        self.rulesets.values()
    }

    pub fn len(&self) -> usize {
        self.rulesets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rulesets.is_empty()
    }
}

fn c(s: &str) -> Compute {
    s.parse().expect("constant compute literal")
}

fn usd(v: f64) -> MoneyAmount {
    MoneyAmount::new(v).expect("constant money literal")
}

const EO_CITE: &str =
    "EO 14110 Sec. 4.2(b)(i): model trained using \"greater than 10^26 integer or floating-point operations\"";
const AIA_CITE: &str =
    "AI Act Art. 51(2): \"cumulative amount of computation used for its training\" \"greater than 10^25\" FLOP";
const AIA_R111_CITE: &str =
    "AI Act Recital 111: cumulative compute includes pre-training, synthetic data generation and fine-tuning";
const AIA_NOTIFY_CITE: &str =
    "AI Act Art. 52(1): notify the Commission without delay and in any event within two weeks";
const SB_COVERED_CITE: &str =
    "SB 1047 Sec. 22602 covered model: greater than 10^26 operations, cost exceeding $100,000,000";
const SB_FT_CITE: &str =
    "SB 1047 Sec. 22602 covered model: fine-tuning a covered model with \"equal to or greater than three times 10^25\" operations, cost exceeding $10,000,000";
const SB_DERIV_CITE: &str =
    "SB 1047 Sec. 22602 covered model derivative: unmodified copy, post-training modifications unrelated to fine-tuning, fine-tuning not exceeding 3x10^25, or combination with other software";
const FT15_CITE: &str =
    "fine-tune materiality rule: fine-tuning compute counts once, in one instance or in aggregate, it reaches 15% of training compute";
const REUSE_CITE: &str =
    "reuse patch: threshold lowered by the ~10x compute savings of distillation, kickstarting and reincarnation (US 1e25, EU 1e24)";
const TEACHER_CITE: &str =
    "reuse patch: a distilled, kickstarted or reincarnated model is covered whenever its teacher, deployed or not, is above the threshold";
const EXPANSION_MODERATE_CITE: &str =
    "expansion patch (moderate, ~50% savings): expanded models covered above 5e25 (US) / 5e24 (EU)";
const EXPANSION_CONSERVATIVE_CITE: &str =
    "expansion patch (conservative, up to 76% savings): expanded models covered above 2e25 (US) / 2e24 (EU)";
const INFERENCE_CITE: &str =
    "inference patch: above compute-optimal inference converted to training-equivalent OOMs and added to training compute";

fn base(id: &str, jurisdiction: Jurisdiction, description: &str) -> Ruleset {
    let (threshold, counting, notification_rule, citations) = match jurisdiction {
        Jurisdiction::Eu => (
            c("1e25"),
            CountingPolicy {
                count_finetune: FinetuneCounting::Always,
                count_synthetic_data: true,
                ..CountingPolicy::default()
            },
            Some(NotificationRule {
                window_days: EU_NOTIFICATION_DAYS,
            }),
            vec![
                AIA_CITE.to_string(),
                AIA_R111_CITE.to_string(),
                AIA_NOTIFY_CITE.to_string(),
            ],
        ),
        _ => (
            c("1e26"),
            CountingPolicy::default(),
            None,
            vec![EO_CITE.to_string()],
        ),
    };
    Ruleset {
        id: id.to_string(),
        jurisdiction,
        description: description.to_string(),
        engine: RuleEngine::ComputeThreshold,
        threshold,
        cost_threshold: None,
        counting,
        teacher_propagation: false,
        flag_ambiguity: false,
        notification_rule,
        citations,
    }
}

fn cite(mut rs: Ruleset, extra: &[&str]) -> Ruleset {
    rs.citations.extend(extra.iter().map(|s| s.to_string()));
    rs
}

/// Every built-in rule set, sorted by id.
pub fn builtin_rulesets() -> Vec<Ruleset> {
    use Jurisdiction::*;
    let mut out = Vec::new();

    out.push(Ruleset {
        flag_ambiguity: true,
        ..base(
            "eo14110-literal",
            UsFederal,
            "EO 14110 reporting threshold read literally: fine-tuning compute not counted",
        )
    });
    out.push(cite(
        Ruleset {
            counting: CountingPolicy {
                count_finetune: FinetuneCounting::IfAggregateAtLeastFraction { fraction: 0.15 },
                ..CountingPolicy::default()
            },
            ..base(
                "eo14110-ft15",
                UsFederal,
                "EO 14110 threshold with fine-tuning counted once it reaches 15% of training compute",
            )
        },
        &[FT15_CITE],
    ));
    out.push(base(
        "eu-aiact-literal",
        Eu,
        "AI Act systemic-risk presumption on cumulative training compute",
    ));

    for (j, prefix) in [(UsFederal, "us"), (Eu, "eu")] {
        let reuse = |id: String, adjustment, propagation, description: &str| {
            let mut rs = base(&id, j, description);
            rs.counting.reuse_adjustment = adjustment;
            rs.teacher_propagation = propagation;
            let mut extra = Vec::new();
            if adjustment != ReuseAdjustment::None {
                extra.push(REUSE_CITE);
            }
            if propagation {
                extra.push(TEACHER_CITE);
            }
            cite(rs, &extra)
        };
        out.push(reuse(
            format!("{prefix}-reuse-patch"),
            ReuseAdjustment::LowerThreshold { factor: 10.0 },
            true,
            "model-reuse patch: threshold lowered 10x for reuse-derived models, teachers propagate",
        ));
        out.push(reuse(
            format!("{prefix}-reuse-patch-inflation"),
            ReuseAdjustment::MultiplyStudentCompute { factor: 10.0 },
            true,
            "model-reuse patch, compute-inflation encoding: student compute x10, teachers propagate",
        ));
        out.push(reuse(
            format!("{prefix}-reuse-teacher-only"),
            ReuseAdjustment::None,
            true,
            "model-reuse patch, teacher propagation alone",
        ));

        for (level, factor, cite_text) in [
            ("moderate", 2.0, EXPANSION_MODERATE_CITE),
            ("conservative", 5.0, EXPANSION_CONSERVATIVE_CITE),
        ] {
            let mut lowered = base(
                &format!("{prefix}-expansion-{level}"),
                j,
                &format!("model-expansion patch ({level}): threshold lowered {factor}x for expanded models"),
            );
            lowered.counting.expansion_adjustment = ExpansionAdjustment::LowerThreshold { factor };
            out.push(cite(lowered, &[cite_text]));

            let mut inflated = base(
                &format!("{prefix}-expansion-{level}-inflation"),
                j,
                &format!("model-expansion patch ({level}), compute-inflation encoding"),
            );
            inflated.counting.expansion_adjustment = ExpansionAdjustment::InflateByMaxSavings {
                savings: 1.0 - 1.0 / factor,
            };
            out.push(cite(inflated, &[cite_text]));
        }

        let mut inference = base(
            &format!("{prefix}-inference-patch"),
            j,
            "inference patch: above-optimal inference counted as training-equivalent compute",
        );
        inference.counting.inference_adjustment = true;
        out.push(cite(inference, &[INFERENCE_CITE]));

        let mut all = base(
            &format!("{prefix}-all-patches"),
            j,
            "composite: fine-tune, reuse, expansion (moderate) and inference patches together",
        );
        if j == UsFederal {
            all.counting.count_finetune =
                FinetuneCounting::IfAggregateAtLeastFraction { fraction: 0.15 };
        }
        all.counting.reuse_adjustment = ReuseAdjustment::LowerThreshold { factor: 10.0 };
        all.counting.expansion_adjustment = ExpansionAdjustment::LowerThreshold { factor: 2.0 };
        all.counting.inference_adjustment = true;
        all.teacher_propagation = true;
        let mut extra = vec![
            REUSE_CITE,
            TEACHER_CITE,
            EXPANSION_MODERATE_CITE,
            INFERENCE_CITE,
        ];
        if j == UsFederal {
            extra.insert(0, FT15_CITE);
        }
        out.push(cite(all, &extra));
    }

    out.push(Ruleset {
        id: "sb1047-vetoed".to_string(),
        jurisdiction: CaState,
        description:
            "California SB 1047 (vetoed) covered model / covered model derivative classification"
                .to_string(),
        engine: RuleEngine::CoveredModel {
            finetune_threshold: c("3e25"),
            finetune_cost: usd(10_000_000.0),
        },
        threshold: c("1e26"),
        cost_threshold: Some(usd(100_000_000.0)),
        counting: CountingPolicy::default(),
        teacher_propagation: false,
        flag_ambiguity: false,
        notification_rule: None,
        citations: vec![
            SB_COVERED_CITE.to_string(),
            SB_FT_CITE.to_string(),
            SB_DERIV_CITE.to_string(),
        ],
    });

    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

fn obligations_for(rs: &Ruleset, anticipated: bool) -> Vec<Obligation> {
    let mut out = Vec::new();
    match rs.jurisdiction {
        Jurisdiction::UsFederal => out.push(Obligation {
            kind: "report-to-department-of-commerce".into(),
            deadline_days: None,
        }),
        Jurisdiction::Eu => out.push(Obligation {
            kind: "systemic-risk-model-obligations".into(),
            deadline_days: None,
        }),
        Jurisdiction::CaState => out.push(Obligation {
            kind: "safety-and-security-protocol".into(),
            deadline_days: None,
        }),
    }
    if let Some(rule) = rs.notification_rule {
        out.insert(
            0,
            Obligation {
                kind: if anticipated {
                    "notify-commission-anticipated-crossing".into()
                } else {
                    "notify-commission".into()
                },
                deadline_days: Some(rule.window_days),
            },
        );
    }
    out
}

fn chain_cost(lineage: &Lineage, id: &NodeId) -> Result<MoneyAmount, RuleError> {
    let chain = WeightChain::walk(lineage, id)?;
    let total: f64 = chain
        .chronological()
        .map(|e| e.cost.map(|c| c.usd()).unwrap_or(0.0))
        .sum();
    Ok(MoneyAmount::new(total).expect("sum of non-negative amounts"))
}

struct Evaluator<'a> {
    lineage: &'a Lineage,
    ruleset: &'a Ruleset,
    cfg: &'a ScalingConfig<f64>,
    memo: BTreeMap<NodeId, Status>,
}

impl Evaluator<'_> {
    fn verdict(&mut self, id: &NodeId, depth: usize) -> Result<Verdict, RuleError> {
        if depth > MAX_RECURSION_DEPTH {
            return Err(RuleError::RecursionDepthExceeded);
        }
        if !self.lineage.contains(id) {
            return Err(RuleError::UnknownId(id.clone()));
        }
        let rs = self.ruleset;
        let breakdown = effective_compute(self.lineage, id, &rs.counting, self.cfg)?;
        let threshold = rs
            .threshold
            .scale_ooms(-breakdown.threshold_divisor.log10());
        let cost_ok = match rs.cost_threshold {
            Some(limit) => chain_cost(self.lineage, id)? > limit,
            None => true,
        };

        let mut v = Verdict {
            ruleset: rs.id.clone(),
            status: Status::NotCovered,
            classification: None,
            threshold,
            triggered_rules: Vec::new(),
            breakdown,
            citations: if rs.citations.is_empty() {
                vec![format!("custom rule set {}", rs.id)]
            } else {
                rs.citations.clone()
            },
            obligations: Vec::new(),
            notes: Vec::new(),
        };

        if v.breakdown.effective > threshold && cost_ok {
            v.status = Status::Covered;
            v.triggered_rules.push(rs.rule("threshold"));
            v.notes.push(format!(
                "effective compute {} > threshold {}",
                v.breakdown.effective, threshold
            ));
        } else if rs.teacher_propagation {
            for (teacher, kind) in self.lineage.reuse_teachers(id)? {
                if self.status(&teacher, depth + 1)? == Status::Covered {
                    v.status = Status::Covered;
                    v.triggered_rules.push(rs.rule("teacher-propagation"));
                    let incognito = self
                        .lineage
                        .node(&teacher)
                        .map(|n| !n.deployed)
                        .unwrap_or(false);
                    v.notes.push(format!(
                        "covered through {kind} teacher {teacher}{}",
                        if incognito { " (never deployed)" } else { "" }
                    ));
                    break;
                }
            }
        }

        if v.status != Status::Covered && rs.flag_ambiguity {
            let wider = effective_compute(
                self.lineage,
                id,
                &rs.counting.counting_everything(),
                self.cfg,
            )?;
            if wider.effective > threshold && cost_ok {
                v.status = Status::Ambiguous;
                v.notes.push(format!(
                    "literal text does not say whether fine-tuning or synthetic-data compute counts; counting it gives {} > threshold {}",
                    wider.effective, threshold
                ));
            }
        }

        if v.status == Status::Covered {
            let anticipated = self.met_only_with_planned(id, depth)?;
            if anticipated {
                v.notes
                    .push("threshold is met only once planned events are carried out".to_string());
            }
            v.obligations = obligations_for(rs, anticipated);
            if v.triggered_rules
                .iter()
                .any(|r| r.ends_with("teacher-propagation"))
                && !v.citations.iter().any(|c| c == TEACHER_CITE)
            {
                v.citations.push(TEACHER_CITE.to_string());
            }
        }
        if !self.lineage.node(id).map(|n| n.deployed).unwrap_or(true) {
            v.notes.push("model is not deployed".to_string());
        }
        self.memo.insert(id.clone(), v.status);
        Ok(v)
    }

    fn status(&mut self, id: &NodeId, depth: usize) -> Result<Status, RuleError> {
        if let Some(s) = self.memo.get(id) {
            return Ok(*s);
        }
        Ok(self.verdict(id, depth)?.status)
    }

    fn met_only_with_planned(&self, id: &NodeId, depth: usize) -> Result<bool, RuleError> {
        let chain = WeightChain::walk(self.lineage, id)?;
        if !chain.has_planned() {
            return Ok(false);
        }
        let current = self.lineage.without_planned();
        if !current.contains(id) {
            return Ok(true);
        }
        let mut now = Evaluator {
            lineage: &current,
            ruleset: self.ruleset,
            cfg: self.cfg,
            memo: BTreeMap::new(),
        };
        Ok(now.verdict(id, depth + 1)?.status != Status::Covered)
    }
}

/// Verdict for `id` under one rule set.
pub fn evaluate(
    lineage: &Lineage,
    id: &NodeId,
    ruleset: &Ruleset,
    cfg: &ScalingConfig<f64>,
) -> Result<Verdict, RuleError> {
    match &ruleset.engine {
        RuleEngine::ComputeThreshold => Evaluator {
            lineage,
            ruleset,
            cfg,
            memo: BTreeMap::new(),
        }
        .verdict(id, 0),
        RuleEngine::CoveredModel { .. } => classify_with(lineage, id, ruleset, cfg),
    }
}

/// Verdicts under every registered rule set, keyed by rule set id.
pub fn evaluate_all(
    lineage: &Lineage,
    id: &NodeId,
    registry: &Registry,
    cfg: &ScalingConfig<f64>,
) -> Result<BTreeMap<String, Verdict>, RuleError> {
    if !lineage.contains(id) {
        return Err(RuleError::UnknownId(id.clone()));
    }
    registry
        .iter()
        .map(|rs| Ok((rs.id.clone(), evaluate(lineage, id, rs, cfg)?)))
        .collect()
}

/// SB 1047 classification under the built-in constants.
pub fn sb1047_classify(lineage: &Lineage, id: &NodeId) -> Result<Verdict, RuleError> {
    let rs = builtin_rulesets()
        .into_iter()
        .find(|r| r.id == "sb1047-vetoed")
        .expect("built-in sb1047 rule set");
    classify_with(lineage, id, &rs, &ScalingConfig::default())
}

struct ClassStep {
    class: Classification,
    rule: &'static str,
    note: Option<String>,
}

fn classify_node(
    lineage: &Lineage,
    id: &NodeId,
    rs: &Ruleset,
    memo: &mut BTreeMap<NodeId, Classification>,
    depth: usize,
) -> Result<ClassStep, RuleError> {
    use Classification::*;
    use DerivativeKind::*;
    if depth > MAX_RECURSION_DEPTH {
        return Err(RuleError::RecursionDepthExceeded);
    }
    let RuleEngine::CoveredModel {
        finetune_threshold,
        finetune_cost,
    } = &rs.engine
    else {
        unreachable!("classification needs a covered-model engine");
    };
    let event = lineage
        .creating_event(id)
        .ok_or_else(|| RuleError::Effective(EffectiveError::NoPretrainRoot(id.clone())))?;
    let cost = event.cost.map(|c| c.usd()).unwrap_or(0.0);
    let cost_limit = rs.cost_threshold.map(|c| c.usd()).unwrap_or(0.0);

    // Strongest class among the parents: CoveredModel, then any derivative, then Neither.
    let mut parent = Neither;
    for p in &event.parents {
        let class = match memo.get(p) {
            Some(c) => *c,
            None => {
                let c = classify_node(lineage, p, rs, memo, depth + 1)?.class;
                memo.insert(p.clone(), c);
                c
            }
        };
        parent = match (parent, class) {
            (CoveredModel, _) | (_, CoveredModel) => CoveredModel,
            (CoveredModelDerivative(k), _) | (_, CoveredModelDerivative(k)) => {
                CoveredModelDerivative(k)
            }
            _ => Neither,
        };
    }

    let step = |class, rule, note: Option<String>| ClassStep { class, rule, note };
    let trained_from_scratch = event.kind == EventKind::Pretrain || event.kind.is_reuse();
    if trained_from_scratch && event.compute > rs.threshold && cost > cost_limit {
        return Ok(step(CoveredModel, "covered-model", None));
    }
    match parent {
        CoveredModel => {}
        CoveredModelDerivative(_) if event.kind == EventKind::Copy => {
            return Ok(step(
                CoveredModelDerivative(Unmodified),
                "derivative-copy",
                None,
            ));
        }
        CoveredModelDerivative(_) => {
            return Ok(step(
                Neither,
                "neither",
                Some(format!(
                    "{} of a covered model derivative: only copies of derivatives stay derivatives",
                    event.kind
                )),
            ));
        }
        Neither => {
            let note = (event.kind != EventKind::Pretrain).then(|| {
                format!(
                    "{} of a model that is not a covered model is not regulated",
                    event.kind
                )
            });
            return Ok(step(Neither, "neither", note));
        }
    }
    Ok(match event.kind {
        EventKind::Pretrain => step(Neither, "neither", None),
        EventKind::FineTune => {
            let big = event.compute >= *finetune_threshold;
            let pricey = cost > finetune_cost.usd();
            match (big, pricey) {
                (true, true) => step(CoveredModel, "finetune-escalation", None),
                (true, false) => step(
                    Neither,
                    "neither",
                    Some(format!(
                        "fine-tune of {} meets the compute limb but not the cost limb (${cost} <= {finetune_cost}); neither the covered-model nor the derivative limb applies",
                        event.compute
                    )),
                ),
                (false, true) => step(
                    CoveredModelDerivative(SmallFinetune),
                    "derivative-finetune",
                    Some(format!(
                        "fine-tune cost ${cost} exceeds {finetune_cost} but compute {} is below the escalation limb; cost attaches only to the escalation limb",
                        event.compute
                    )),
                ),
                (false, false) => step(CoveredModelDerivative(SmallFinetune), "derivative-finetune", None),
            }
        }
        EventKind::Copy => step(CoveredModelDerivative(Unmodified), "derivative-copy", None),
        EventKind::CombineSoftware => step(
            CoveredModelDerivative(CombinedSoftware),
            "derivative-combined-software",
            None,
        ),
        EventKind::Expand
        | EventKind::SyntheticDataGen
        | EventKind::Distill
        | EventKind::Kickstart
        | EventKind::Reincarnate => step(
            CoveredModelDerivative(NonFinetuneMods),
            "derivative-post-training-modification",
            None,
        ),
    })
}

fn classify_with(
    lineage: &Lineage,
    id: &NodeId,
    rs: &Ruleset,
    cfg: &ScalingConfig<f64>,
) -> Result<Verdict, RuleError> {
    if !lineage.contains(id) {
        return Err(RuleError::UnknownId(id.clone()));
    }
    let mut memo = BTreeMap::new();
    let step = classify_node(lineage, id, rs, &mut memo, 0)?;
    let breakdown = effective_compute(lineage, id, &rs.counting, cfg)?;
    let status = if step.class.is_regulated() {
        Status::Covered
    } else {
        Status::NotCovered
    };
    let mut notes: Vec<String> = step.note.into_iter().collect();
    let event = lineage.creating_event(id).expect("classified above");
    if event.cost.is_none() {
        notes.push("no cost declared for the creating event; treated as $0".to_string());
    }
    Ok(Verdict {
        ruleset: rs.id.clone(),
        status,
        classification: Some(step.class),
        threshold: rs.threshold,
        triggered_rules: if status == Status::Covered {
            vec![rs.rule(step.rule)]
        } else {
            Vec::new()
        },
        breakdown,
        citations: rs.citations.clone(),
        obligations: if status == Status::Covered {
            obligations_for(rs, false)
        } else {
            Vec::new()
        },
        notes,
    })
}
