//! Scenario files, reports, sweeps and crossing search.
//!
//! A scenario is one JSON document: `models`, `events`, `subject`, optional `scaling`
//! overrides, optional `rulesets` (ids or inline definitions) and an optional `sweep`.
//! Compute values may be written as strings (`"9.9e25"`, `"10^25.5"`) or JSON numbers.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::ledger::{DerivationEvent, EventKind, Lineage, ModelNode, NodeId, Violation};
use crate::rulesets::{builtin_rulesets, evaluate, RuleError, Ruleset, Status, Verdict};
use crate::scaling::ScalingConfig;
use crate::Compute;

pub const MAX_SWEEP_STEPS: u32 = 10_000;
pub const DEFAULT_TOLERANCE_OOMS: f64 = 1e-3;

/// Verdicts keyed by rule set id.
pub type Report = BTreeMap<String, Verdict>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid field `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("lineage is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Violation>),
    #[error("sweep target `{0}` does not resolve to exactly one compute field")]
    SweepTargetUnresolved(String),
    #[error("scenario has no sweep section")]
    MissingSweep,
    #[error("no crossing: both endpoints are {0}")]
    NoCrossing(Status),
    #[error("status is not monotone in the sweep target: {0}")]
    NonMonotone(String),
    #[error(transparent)]
    Rule(#[from] RuleError),
}

impl ScenarioError {
    pub fn code(&self) -> &'static str {
        match self {
            ScenarioError::Syntax { .. } => "SyntaxError",
            ScenarioError::Schema { .. } => "SchemaError",
            ScenarioError::Validation(_) => "ValidationError",
            ScenarioError::SweepTargetUnresolved(_) => "SweepTargetUnresolved",
            ScenarioError::MissingSweep => "MissingSweep",
            ScenarioError::NoCrossing(_) => "NoCrossing",
            ScenarioError::NonMonotone(_) => "NonMonotone",
            ScenarioError::Rule(RuleError::UnknownId(_)) => "UnknownId",
            ScenarioError::Rule(RuleError::RecursionDepthExceeded) => "RecursionDepthExceeded",
            ScenarioError::Rule(_) => "RuleError",
        }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            ScenarioError::Schema { field, .. } => Some(field),
            ScenarioError::SweepTargetUnresolved(_) => Some("sweep.target"),
            ScenarioError::MissingSweep => Some("sweep"),
            _ => None,
        }
    }

    fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Schema {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// A rule set selected by a scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum RulesetSpec {
    Builtin(String),
    /// Fully resolved; a `base` given in the file has already been merged in.
    Inline(Ruleset),
}

impl Serialize for RulesetSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            RulesetSpec::Builtin(id) => s.serialize_str(id),
            RulesetSpec::Inline(rs) => rs.serialize(s),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepScale {
    #[default]
    Log10,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// `events.<child>.flop` or `models.<id>.inference.per_request_flop`.
    pub target: String,
    pub from: Compute,
    pub to: Compute,
    pub steps: u32,
    #[serde(default)]
    pub scale: SweepScale,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(2..=MAX_SWEEP_STEPS).contains(&self.steps) {
            return Err(ScenarioError::schema(
                "sweep.steps",
                format!("must be in 2..={MAX_SWEEP_STEPS}"),
            ));
        }
        if self.from.is_zero() || self.from >= self.to {
            return Err(ScenarioError::schema(
                "sweep.to",
                "sweep needs 0 < from < to",
            ));
        }
        Ok(())
    }

    /// Log-spaced grid; the last point is exactly `to`.
    pub fn values(&self) -> Vec<Compute> {
        grid(self.from, self.to, self.steps as usize)
    }
}

fn grid(from: Compute, to: Compute, steps: usize) -> Vec<Compute> {
    let (a, b) = (from.log10(), to.log10());
    (0..steps)
        .map(|i| {
            if i + 1 == steps {
                to
            } else {
                let l = a + (b - a) * i as f64 / (steps - 1) as f64;
                Compute::from_log10(l).expect("between two valid endpoints")
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Target {
    EventFlop(NodeId),
    InferenceFlop(NodeId),
}

fn resolve_target(lineage: &Lineage, path: &str) -> Result<Target, ScenarioError> {
    let unresolved = || ScenarioError::SweepTargetUnresolved(path.to_string());
    if let Some(child) = path
        .strip_prefix("events.")
        .and_then(|p| p.strip_suffix(".flop"))
    {
        let id = NodeId::from(child);
        let events = lineage.creating_events(&id);
        match events {
            [e] if !matches!(e.kind, EventKind::Copy | EventKind::CombineSoftware) => {
                Ok(Target::EventFlop(id))
            }
            _ => Err(unresolved()),
        }
    } else if let Some(model) = path
        .strip_prefix("models.")
        .and_then(|p| p.strip_suffix(".inference.per_request_flop"))
    {
        let id = NodeId::from(model);
        match lineage.node(&id) {
            Some(n) if n.inference.is_some() => Ok(Target::InferenceFlop(id)),
            _ => Err(unresolved()),
        }
    } else {
        Err(unresolved())
    }
}

fn with_value(lineage: &Lineage, target: &Target, value: Compute) -> Lineage {
    let mut out = lineage.clone();
    match target {
        Target::EventFlop(child) => {
            out.creating_event_mut(child)
                .expect("resolved target")
                .compute = value;
        }
        Target::InferenceFlop(id) => {
            out.node_mut(id)
                .and_then(|n| n.inference.as_mut())
                .expect("resolved target")
                .per_request_compute = value;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub lineage: Lineage,
    pub subject: NodeId,
    pub scaling: ScalingConfig<f64>,
    /// `None` selects every built-in rule set.
    pub rulesets: Option<Vec<RulesetSpec>>,
    pub sweep: Option<SweepSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    models: Vec<ModelNode>,
    #[serde(default)]
    events: Vec<DerivationEvent>,
    subject: NodeId,
    #[serde(default)]
    scaling: ScalingConfig<f64>,
    #[serde(default)]
    rulesets: Option<Vec<Value>>,
    #[serde(default)]
    sweep: Option<SweepSpec>,
}

#[derive(Serialize)]
struct ScenarioOut<'a> {
    models: Vec<&'a ModelNode>,
    events: &'a [DerivationEvent],
    subject: &'a NodeId,
    scaling: &'a ScalingConfig<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rulesets: Option<&'a Vec<RulesetSpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<&'a SweepSpec>,
}

fn resolve_ruleset(value: Value, field: &str) -> Result<RulesetSpec, ScenarioError> {
    let builtins = builtin_rulesets();
    let find = |id: &str| builtins.iter().find(|r| r.id == id);
    match value {
        Value::String(id) => match find(&id) {
            Some(_) => Ok(RulesetSpec::Builtin(id)),
            None => Err(ScenarioError::schema(
                field,
                format!("unknown rule set `{id}`"),
            )),
        },
        Value::Object(mut obj) => {
            let merged = match obj.remove("base") {
                Some(Value::String(base)) => {
                    let Some(rs) = find(&base) else {
                        return Err(ScenarioError::schema(
                            format!("{field}.base"),
                            format!("unknown rule set `{base}`"),
                        ));
                    };
                    let Value::Object(mut full) =
                        serde_json::to_value(rs).expect("rule sets serialize")
                    else {
                        unreachable!("rule sets serialize to objects");
                    };
                    if !obj.contains_key("id") {
                        return Err(ScenarioError::schema(
                            format!("{field}.id"),
                            "an inline rule set needs its own id",
                        ));
                    }
                    full.extend(obj);
                    Value::Object(full)
                }
                Some(_) => {
                    return Err(ScenarioError::schema(
                        format!("{field}.base"),
                        "expected a rule set id",
                    ))
                }
                None => Value::Object(obj),
            };
            let rs: Ruleset = serde_path_to_error::deserialize(merged).map_err(|e| {
                ScenarioError::schema(format!("{field}.{}", e.path()), e.inner().to_string())
            })?;
            if find(&rs.id).is_some() {
                return Err(ScenarioError::schema(
                    format!("{field}.id"),
                    format!("`{}` is a built-in rule set id", rs.id),
                ));
            }
            rs.validate()
                .map_err(|e| ScenarioError::schema(field, e.to_string()))?;
            Ok(RulesetSpec::Inline(rs))
        }
        _ => Err(ScenarioError::schema(
            field,
            "expected a rule set id or an inline rule set",
        )),
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawScenario = match serde_path_to_error::deserialize(&mut de) {
        Ok(raw) => raw,
        Err(e) => {
            let path = e.path().to_string();
            let inner = e.into_inner();
            return Err(match inner.classify() {
                serde_json::error::Category::Data => {
                    ScenarioError::schema(path, strip_position(&inner))
                }
                _ => ScenarioError::Syntax {
                    line: inner.line(),
                    column: inner.column(),
                    message: strip_position(&inner),
                },
            });
        }
    };
    de.end().map_err(|e| ScenarioError::Syntax {
        line: e.line(),
        column: e.column(),
        message: strip_position(&e),
    })?;

    let lineage = Lineage::from_parts(raw.models, raw.events)
        .map_err(|e| ScenarioError::schema("models", e.to_string()))?;
    let violations = lineage.validate();
    if !violations.is_empty() {
        return Err(ScenarioError::Validation(violations));
    }
    if !lineage.contains(&raw.subject) {
        return Err(ScenarioError::schema(
            "subject",
            format!("unknown model id {}", raw.subject),
        ));
    }
    raw.scaling
        .validate()
        .map_err(|e| ScenarioError::schema("scaling", e.to_string()))?;

    let rulesets = match raw.rulesets {
        None => None,
        Some(list) => {
            let mut out = Vec::with_capacity(list.len());
            for (i, v) in list.into_iter().enumerate() {
                out.push(resolve_ruleset(v, &format!("rulesets[{i}]"))?);
            }
            let mut ids: Vec<&str> = out.iter().map(spec_id).collect();
            ids.sort_unstable();
            if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
                return Err(ScenarioError::schema(
                    "rulesets",
                    format!("rule set `{}` selected twice", w[0]),
                ));
            }
            Some(out)
        }
    };

    if let Some(sweep) = &raw.sweep {
        sweep.validate()?;
        resolve_target(&lineage, &sweep.target)?;
    }

    Ok(Scenario {
        lineage,
        subject: raw.subject,
        scaling: raw.scaling,
        rulesets,
        sweep: raw.sweep,
    })
}

fn strip_position(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}

fn spec_id(spec: &RulesetSpec) -> &str {
    match spec {
        RulesetSpec::Builtin(id) => id,
        RulesetSpec::Inline(rs) => &rs.id,
    }
}

/// Canonical pretty-printed JSON; `parse_scenario` reads it back to an equal scenario.
pub fn render_scenario(scenario: &Scenario) -> String {
    let out = ScenarioOut {
        models: scenario.lineage.nodes().collect(),
        events: scenario.lineage.events(),
        subject: &scenario.subject,
        scaling: &scenario.scaling,
        rulesets: scenario.rulesets.as_ref(),
        sweep: scenario.sweep.as_ref(),
    };
    let mut s = serde_json::to_string_pretty(&out).expect("scenario serializes");
    s.push('\n');
    s
}

impl Scenario {
    /// The rule sets this scenario selects, in file order (all built-ins when unspecified).
    pub fn selected_rulesets(&self) -> Vec<Ruleset> {
        let builtins = builtin_rulesets();
        match &self.rulesets {
            None => builtins,
            Some(list) => list
                .iter()
                .map(|spec| match spec {
                    RulesetSpec::Builtin(id) => builtins
                        .iter()
                        .find(|r| &r.id == id)
                        .cloned()
                        .expect("ids were checked at parse time"),
                    RulesetSpec::Inline(rs) => rs.clone(),
                })
                .collect(),
        }
    }

    /// Replaces the selection with built-in ids (`["all"]` selects every built-in).
    pub fn select(&mut self, ids: &[String]) -> Result<(), ScenarioError> {
        if ids.len() == 1 && ids[0] == "all" {
            self.rulesets = None;
            return Ok(());
        }
        let inline: Vec<RulesetSpec> = self
            .rulesets
            .iter()
            .flatten()
            .filter(|s| matches!(s, RulesetSpec::Inline(_)))
            .cloned()
            .collect();
        let mut out = Vec::new();
        for (i, id) in ids.iter().enumerate() {
            if let Some(spec) = inline.iter().find(|s| spec_id(s) == id) {
                out.push(spec.clone());
            } else {
                out.push(resolve_ruleset(
                    Value::String(id.clone()),
                    &format!("rulesets[{i}]"),
                )?);
            }
        }
        self.rulesets = Some(out);
        Ok(())
    }

    pub fn evaluate(&self) -> Result<Report, ScenarioError> {
        self.evaluate_with(&self.selected_rulesets())
    }

    pub fn evaluate_with(&self, rulesets: &[Ruleset]) -> Result<Report, ScenarioError> {
        rulesets
            .iter()
            .map(|rs| {
                Ok((
                    rs.id.clone(),
                    evaluate(&self.lineage, &self.subject, rs, &self.scaling)?,
                ))
            })
            .collect()
    }

    fn sweep_spec(&self) -> Result<(&SweepSpec, Target), ScenarioError> {
        let spec = self.sweep.as_ref().ok_or(ScenarioError::MissingSweep)?;
        spec.validate()?;
        let target = resolve_target(&self.lineage, &spec.target)?;
        Ok((spec, target))
    }

    /// Verdict with the sweep target set to `value`.
    pub fn evaluate_at(&self, ruleset: &Ruleset, value: Compute) -> Result<Verdict, ScenarioError> {
        let (_, target) = self.sweep_spec()?;
        let lineage = with_value(&self.lineage, &target, value);
        Ok(evaluate(&lineage, &self.subject, ruleset, &self.scaling)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

/// Deterministic rendering of a report.
pub fn render_report(report: &Report, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("verdicts serialize");
            s.push('\n');
            s
        }
        ReportFormat::Text => {
            let mut out = String::new();
            let width = report.keys().map(String::len).max().unwrap_or(0).max(7);
            let _ = writeln!(
                out,
                "{:<width$}  {:<10}  {:<9}  {:<9}  TRIGGERED",
                "RULESET", "STATUS", "EFFECTIVE", "THRESHOLD"
            );
            for (id, v) in report {
                let status = match v.classification {
                    Some(c) => format!("{} [{c}]", v.status),
                    None => v.status.to_string(),
                };
                let triggered = if v.triggered_rules.is_empty() {
                    "-".to_string()
                } else {
                    v.triggered_rules.join(", ")
                };
                let _ = writeln!(
                    out,
                    "{id:<width$}  {status:<10}  {:<9}  {:<9}  {triggered}",
                    v.breakdown.effective.to_string(),
                    v.threshold.to_string(),
                );
                for c in &v.citations {
                    let _ = writeln!(out, "    citation: {c}");
                }
                for o in &v.obligations {
                    match o.deadline_days {
                        Some(d) => {
                            let _ = writeln!(out, "    obligation: {} (within {d} days)", o.kind);
                        }
                        None => {
                            let _ = writeln!(out, "    obligation: {}", o.kind);
                        }
                    }
                }
                for n in &v.notes {
                    let _ = writeln!(out, "    note: {n}");
                }
            }
            out
        }
    }
}

pub fn parse_report(text: &str) -> Result<Report, ScenarioError> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => {
                ScenarioError::schema(path, strip_position(&inner))
            }
            _ => ScenarioError::Syntax {
                line: inner.line(),
                column: inner.column(),
                message: strip_position(&inner),
            },
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: Compute,
    pub ruleset: String,
    pub status: Status,
    pub effective: Compute,
}

/// Evaluates every selected rule set at each grid point; rows are ordered by grid index,
/// then by rule set order.
pub fn sweep(scenario: &Scenario, rulesets: &[Ruleset]) -> Result<Vec<SweepRow>, ScenarioError> {
    let (spec, target) = scenario.sweep_spec()?;
    let mut rows = Vec::with_capacity(spec.steps as usize * rulesets.len());
    for value in spec.values() {
        let lineage = with_value(&scenario.lineage, &target, value);
        for rs in rulesets {
            let v = evaluate(&lineage, &scenario.subject, rs, &scenario.scaling)?;
            rows.push(SweepRow {
                value,
                ruleset: rs.id.clone(),
                status: v.status,
                effective: v.breakdown.effective,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub ruleset: String,
    pub target: String,
    /// Smallest value found that is Covered.
    pub value: Compute,
    /// Largest value found that is not Covered.
    pub below: Compute,
    pub tolerance_ooms: f64,
    pub evaluations: u32,
}

/// Bisects the sweep range in log-domain for the point where the subject becomes Covered.
pub fn find_crossing(
    scenario: &Scenario,
    ruleset: &Ruleset,
    tolerance_ooms: f64,
) -> Result<Crossing, ScenarioError> {
    if !(tolerance_ooms.is_finite() && tolerance_ooms > 0.0) {
        return Err(ScenarioError::schema(
            "tol_ooms",
            "must be a positive number",
        ));
    }
    let (spec, target) = scenario.sweep_spec()?;
    let mut evaluations = 0u32;
    let mut covered = |value: Compute| -> Result<bool, ScenarioError> {
        evaluations += 1;
        let lineage = with_value(&scenario.lineage, &target, value);
        let v = evaluate(&lineage, &scenario.subject, ruleset, &scenario.scaling)?;
        Ok(v.status == Status::Covered)
    };
    let (lo_cov, hi_cov) = (covered(spec.from)?, covered(spec.to)?);
    match (lo_cov, hi_cov) {
        (false, true) => {}
        (true, false) => {
            return Err(ScenarioError::NonMonotone(format!(
                "Covered at {} but not at {}",
                spec.from, spec.to
            )))
        }
        (c, _) => {
            return Err(ScenarioError::NoCrossing(if c {
                Status::Covered
            } else {
                Status::NotCovered
            }))
        }
    }
    let (mut lo, mut hi) = (spec.from.log10(), spec.to.log10());
    while hi - lo > tolerance_ooms {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if covered(Compute::from_log10(mid).expect("inside the sweep range"))? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let at = |l: f64, end: Compute, endpoint: f64| {
        if l == endpoint {
            end
        } else {
            Compute::from_log10(l).expect("inside the sweep range")
        }
    };
    Ok(Crossing {
        ruleset: ruleset.id.clone(),
        target: spec.target.clone(),
        value: at(hi, spec.to, spec.to.log10()),
        below: at(lo, spec.from, spec.from.log10()),
        tolerance_ooms,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const WORKED: &str = r#"{
        "models": [{"id": "A", "inference": {"per_request_flop": "1e14", "domain": "general"}}],
        "events": [{"kind": "pretrain", "child": "A", "flop": "1e24"}],
        "subject": "A"
    }"#;

    fn ft_sweep(ruleset: &str, from: &str, to: &str, steps: u32) -> Scenario {
        parse_scenario(&format!(
            r#"{{
                "models": [{{"id": "A"}}, {{"id": "B"}}],
                "events": [
                    {{"kind": "pretrain", "child": "A", "flop": "1e26"}},
                    {{"kind": "fine_tune", "parents": ["A"], "child": "B", "flop": "1e24"}}
                ],
                "subject": "B",
                "rulesets": ["{ruleset}"],
                "sweep": {{"target": "events.B.flop", "from": "{from}", "to": "{to}", "steps": {steps}}}
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn minimal_scenario() {
        let s = parse_scenario(r#"{"models":[{"id":"A"}],"events":[{"kind":"pretrain","child":"A","flop":"9.9e25"}],"subject":"A"}"#).unwrap();
        assert_eq!(s.lineage.len(), 1);
        assert_eq!(s.selected_rulesets().len(), builtin_rulesets().len());
        let e = s.lineage.creating_event(&NodeId::from("A")).unwrap();
        assert_eq!(e.compute, "9.9e25".parse().unwrap());
    }

    #[test]
    fn unknown_kind_is_schema_error() {
        let err = parse_scenario(
            r#"{"models":[{"id":"A"}],"events":[{"kind":"quantize","child":"A"}],"subject":"A"}"#,
        )
        .unwrap_err();
        match err {
            ScenarioError::Schema { field, .. } => assert_eq!(field, "events[0].kind"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_scenario("{\n  \"models\": [,\n}").unwrap_err();
        match err {
            ScenarioError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            parse_scenario(r#"{"subject":"A"} x"#).unwrap_err().code(),
            "SyntaxError"
        );
    }

    #[test]
    fn validation_and_reference_errors() {
        let e = parse_scenario(r#"{"models":[{"id":"A"}],"events":[],"subject":"A"}"#).unwrap_err();
        assert_eq!(e.code(), "ValidationError");
        let e = parse_scenario(r#"{"models":[{"id":"A"}],"events":[{"kind":"pretrain","child":"A","flop":"1e20"}],"subject":"Z"}"#).unwrap_err();
        assert_eq!(e.field(), Some("subject"));
        let e = parse_scenario(r#"{"models":[{"id":"A"}],"events":[{"kind":"pretrain","child":"A","flop":"1e20"}],"subject":"A","rulesets":["nope"]}"#).unwrap_err();
        assert_eq!(e.field(), Some("rulesets[0]"));
    }

    #[test]
    fn inline_ruleset_with_base() {
        let s = parse_scenario(r#"{"models":[{"id":"A"}],"events":[{"kind":"pretrain","child":"A","flop":"6e24"}],"subject":"A",
            "rulesets":[{"base":"eu-aiact-literal","id":"eu-5e24","threshold":"5e24","citations":[]}]}"#).unwrap();
        let report = s.evaluate().unwrap();
        let v = &report["eu-5e24"];
        assert_eq!(v.status, Status::Covered);
        assert_eq!(v.citations, vec!["custom rule set eu-5e24".to_string()]);
        let back = parse_scenario(&render_scenario(&s)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn worked_inference_example() {
        let s = parse_scenario(WORKED).unwrap();
        let r = s.evaluate().unwrap();
        assert_eq!(r["eu-inference-patch"].status, Status::Covered);
        assert_eq!(r["eu-aiact-literal"].status, Status::NotCovered);
    }

    #[test]
    fn text_report() {
        let s = parse_scenario(WORKED).unwrap();
        let mut r = s.evaluate().unwrap();
        r.retain(|k, _| k == "eu-inference-patch");
        let text = render_report(&r, ReportFormat::Text);
        assert!(text.contains("Covered"));
        assert!(text.contains("inference patch"));
        assert!(text.contains("1.00e+26"));
        let empty = render_report(&Report::new(), ReportFormat::Text);
        assert_eq!(empty.lines().count(), 1);
        assert!(empty.starts_with("RULESET"));
    }

    #[test]
    fn json_report_round_trip() {
        let r = parse_scenario(WORKED).unwrap().evaluate().unwrap();
        let json = render_report(&r, ReportFormat::Json);
        assert_eq!(parse_report(&json).unwrap(), r);
        assert_eq!(
            render_report(&parse_report(&json).unwrap(), ReportFormat::Json),
            json
        );
    }

    #[test]
    fn ft_sweep_flips_once() {
        let s = ft_sweep("eo14110-ft15", "1e24", "1e26", 5);
        let rows = sweep(&s, &s.selected_rulesets()).unwrap();
        let statuses: Vec<_> = rows.iter().map(|r| r.status).collect();
        let flips = statuses.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(flips, 1);
        assert_eq!(statuses[0], Status::NotCovered);
        assert_eq!(*statuses.last().unwrap(), Status::Covered);

        let literal = ft_sweep("eo14110-literal", "1e24", "1e26", 5);
        let rows = sweep(&literal, &literal.selected_rulesets()).unwrap();
        // Any fine-tuning on a 1e26 base would cross if counted, so every row is Ambiguous.
        assert!(rows.iter().all(|r| r.status == Status::Ambiguous));
    }

    #[test]
    fn ft_crossing_is_fifteen_percent() {
        let s = ft_sweep("eo14110-ft15", "1e24", "1e26", 5);
        let rs = &s.selected_rulesets()[0];
        let c = find_crossing(&s, rs, DEFAULT_TOLERANCE_OOMS).unwrap();
        let truth = (1.5e25f64).log10();
        assert!(c.value.log10() >= truth - 1e-12);
        assert!(c.value.log10() - truth <= DEFAULT_TOLERANCE_OOMS);
        assert!(c.below.log10() < truth);
    }

    #[test]
    fn no_crossing() {
        let s = ft_sweep("eo14110-literal", "1e24", "1e26", 5);
        let rs = &s.selected_rulesets()[0];
        assert_eq!(
            find_crossing(&s, rs, 1e-3).unwrap_err(),
            ScenarioError::NoCrossing(Status::NotCovered)
        );
    }

    #[test]
    fn unresolved_targets() {
        let base = r#"{"models":[{"id":"A"},{"id":"C"}],"events":[{"kind":"pretrain","child":"A","flop":"1e20"},{"kind":"copy","parents":["A"],"child":"C"}],"subject":"A","sweep":{"target":"TARGET","from":"1e20","to":"1e21","steps":3}}"#;
        for t in [
            "events.C.flop",
            "events.Z.flop",
            "models.A.inference.per_request_flop",
            "bogus",
        ] {
            let e = parse_scenario(&base.replace("TARGET", t)).unwrap_err();
            assert_eq!(e, ScenarioError::SweepTargetUnresolved(t.to_string()));
        }
        assert!(parse_scenario(&base.replace("TARGET", "events.A.flop")).is_ok());
        let bad_steps = base
            .replace("TARGET", "events.A.flop")
            .replace("\"steps\":3", "\"steps\":10001");
        assert_eq!(
            parse_scenario(&bad_steps).unwrap_err().field(),
            Some("sweep.steps")
        );
    }

    #[test]
    fn grid_endpoints_exact() {
        let from: Compute = "1e24".parse().unwrap();
        let to: Compute = "3e26".parse().unwrap();
        let g = grid(from, to, 7);
        assert_eq!(g[0], from);
        assert_eq!(g[6], to);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
