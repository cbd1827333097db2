//! Model lineage: nodes, the typed derivation events that produced them, and graph queries.
//!
//! A [`Lineage`] is a value. `add_node` and `add_event` return a new lineage and leave
//! the receiver untouched. Events are identified by the node they create, so each event
//! key is its child id.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compute::{ComputeAmount, MoneyAmount};
use crate::scalar::Scalar;
use crate::Compute;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum CapabilityDomain {
    #[default]
    General,
    MathCoding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct InferenceProfile<F: Scalar = f64> {
    #[serde(rename = "per_request_flop")]
    pub per_request_compute: ComputeAmount<F>,
    #[serde(rename = "domain", default)]
    pub capability_domain: CapabilityDomain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelNode {
    pub id: NodeId,
    #[serde(default)]
    pub name: String,
    /// `false` for a model that was trained but never released.
    #[serde(default = "yes")]
    pub deployed: bool,
    #[serde(default)]
    pub capability_domain: CapabilityDomain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inference: Option<InferenceProfile>,
}

fn yes() -> bool {
    true
}

impl ModelNode {
    pub fn new(id: impl Into<String>) -> Self {
        let id = id.into();
        Self {
            name: id.clone(),
            id: NodeId(id),
            deployed: true,
            capability_domain: CapabilityDomain::General,
            inference: None,
        }
    }

    pub fn incognito(mut self) -> Self {
        self.deployed = false;
        self
    }

    pub fn with_inference(mut self, per_request: Compute, domain: CapabilityDomain) -> Self {
        self.capability_domain = domain;
        self.inference = Some(InferenceProfile {
            per_request_compute: per_request,
            capability_domain: domain,
        });
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Pretrain,
    FineTune,
    SyntheticDataGen,
    Distill,
    Kickstart,
    Reincarnate,
    Expand,
    Copy,
    CombineSoftware,
}

impl EventKind {
    pub const ALL: [EventKind; 9] = [
        EventKind::Pretrain,
        EventKind::FineTune,
        EventKind::SyntheticDataGen,
        EventKind::Distill,
        EventKind::Kickstart,
        EventKind::Reincarnate,
        EventKind::Expand,
        EventKind::Copy,
        EventKind::CombineSoftware,
    ];

    /// Distill, Kickstart and Reincarnate: a new student trained with help from teachers.
    pub fn is_reuse(self) -> bool {
        matches!(
            self,
            EventKind::Distill | EventKind::Kickstart | EventKind::Reincarnate
        )
    }

    /// Events whose child carries its parent's weights forward.
    pub fn inherits_weights(self) -> bool {
        !self.is_reuse() && self != EventKind::Pretrain
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Pretrain => "pretrain",
            EventKind::FineTune => "fine_tune",
            EventKind::SyntheticDataGen => "synthetic_data_gen",
            EventKind::Distill => "distill",
            EventKind::Kickstart => "kickstart",
            EventKind::Reincarnate => "reincarnate",
            EventKind::Expand => "expand",
            EventKind::Copy => "copy",
            EventKind::CombineSoftware => "combine_software",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivationEvent {
    pub kind: EventKind,
    /// Teachers for reuse events, the modified model otherwise, empty for pretraining.
    #[serde(default)]
    pub parents: Vec<NodeId>,
    pub child: NodeId,
    #[serde(rename = "flop", default)]
    pub compute: Compute,
    #[serde(rename = "cost_usd", default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<MoneyAmount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expand_savings_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surpass_teacher: Option<bool>,
    /// Declared but not yet carried out.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub planned: bool,
}

impl DerivationEvent {
    pub fn new(kind: EventKind, parents: &[&str], child: &str, compute: Compute) -> Self {
        Self {
            kind,
            parents: parents.iter().map(|p| NodeId::from(*p)).collect(),
            child: NodeId::from(child),
            compute,
            cost: None,
            expand_savings_fraction: None,
            surpass_teacher: None,
            planned: false,
        }
    }

    pub fn pretrain(child: &str, compute: Compute) -> Self {
        Self::new(EventKind::Pretrain, &[], child, compute)
    }

    pub fn with_cost(mut self, usd: f64) -> Self {
        self.cost = MoneyAmount::new(usd).ok();
        self
    }

    pub fn with_savings(mut self, fraction: f64) -> Self {
        self.expand_savings_fraction = Some(fraction);
        self
    }

    pub fn surpassing(mut self, surpass: bool) -> Self {
        self.surpass_teacher = Some(surpass);
        self
    }

    pub fn planned(mut self) -> Self {
        self.planned = true;
        self
    }

    /// Field rules that depend only on the event itself.
    pub fn check_fields(&self) -> Result<(), String> {
        use EventKind::*;
        let n = self.parents.len();
        match self.kind {
            Pretrain if n != 0 => return Err("pretrain events take no parents".into()),
            Distill if n == 0 => return Err("distill needs at least one teacher".into()),
            Kickstart | Reincarnate if n != 1 => {
                return Err(format!("{} needs exactly one teacher", self.kind))
            }
            FineTune | SyntheticDataGen | Expand | Copy | CombineSoftware if n != 1 => {
                return Err(format!("{} needs exactly one parent", self.kind))
            }
            _ => {}
        }
        let distinct: BTreeSet<_> = self.parents.iter().collect();
        if distinct.len() != n {
            return Err("parents must be distinct".into());
        }
        match self.kind {
            Pretrain if self.compute.is_zero() => return Err("pretrain compute must be > 0".into()),
            Distill | Kickstart | Reincarnate if self.compute.is_zero() => {
                return Err(format!("{} student compute must be > 0", self.kind))
            }
            Copy | CombineSoftware if !self.compute.is_zero() => {
                return Err(format!("{} carries zero compute", self.kind))
            }
            _ => {}
        }
        match (self.kind, self.expand_savings_fraction) {
            (Expand, None) => return Err("expand requires expand_savings_fraction".into()),
            (Expand, Some(s)) if !(0.0..1.0).contains(&s) => {
                return Err(format!(
                    "expand_savings_fraction must be in [0, 1), got {s}"
                ))
            }
            (k, Some(_)) if k != Expand => {
                return Err("expand_savings_fraction is only valid on expand events".into())
            }
            _ => {}
        }
        if self.surpass_teacher.is_some() && self.kind != Reincarnate {
            return Err("surpass_teacher is only valid on reincarnate events".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LedgerError {
    #[error("duplicate model id {0}")]
    DuplicateId(NodeId),
    #[error("unknown model id {0}")]
    UnknownId(NodeId),
    #[error("event creating {0} would introduce a cycle")]
    CycleDetected(NodeId),
    #[error("event creating {child}: {rule}")]
    KindFieldMismatch { child: NodeId, rule: String },
    #[error("model {0} already has a creating event")]
    ChildAlreadyCreated(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationKind {
    UnknownId,
    CycleDetected,
    KindFieldMismatch,
    ChildAlreadyCreated,
    MissingCreatingEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Model the rule was checked against (the event child for event rules).
    pub node: NodeId,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {}: {}", self.kind, self.node, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lineage {
    nodes: BTreeMap<NodeId, ModelNode>,
    // Sorted by child id; insertion order is kept among events with the same child.
    events: Vec<DerivationEvent>,
}

impl Lineage {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a lineage without checking it. Use [`Lineage::validate`] afterwards.
    pub fn from_parts(
        nodes: impl IntoIterator<Item = ModelNode>,
        events: impl IntoIterator<Item = DerivationEvent>,
    ) -> Result<Self, LedgerError> {
        let mut lineage = Lineage::new();
        for node in nodes {
            if lineage.nodes.contains_key(&node.id) {
                return Err(LedgerError::DuplicateId(node.id));
            }
            lineage.nodes.insert(node.id.clone(), node);
        }
        for event in events {
            lineage.insert_event(event);
        }
        Ok(lineage)
    }

    pub fn add_node(&self, node: ModelNode) -> Result<Self, LedgerError> {
        if self.nodes.contains_key(&node.id) {
            return Err(LedgerError::DuplicateId(node.id));
        }
        let mut next = self.clone();
        next.nodes.insert(node.id.clone(), node);
        Ok(next)
    }

    pub fn add_event(&self, event: DerivationEvent) -> Result<Self, LedgerError> {
        for id in event.parents.iter().chain(std::iter::once(&event.child)) {
            if !self.nodes.contains_key(id) {
                return Err(LedgerError::UnknownId(id.clone()));
            }
        }
        for parent in &event.parents {
            if *parent == event.child || self.reaches(parent, &event.child) {
                return Err(LedgerError::CycleDetected(event.child.clone()));
            }
        }
        event
            .check_fields()
            .map_err(|rule| LedgerError::KindFieldMismatch {
                child: event.child.clone(),
                rule,
            })?;
        if !self.creating_events(&event.child).is_empty() {
            return Err(LedgerError::ChildAlreadyCreated(event.child.clone()));
        }
        let mut next = self.clone();
        next.insert_event(event);
        Ok(next)
    }

    /// The lineage as it stands today: planned events are dropped, along with every model
    /// that only exists because of one.
    pub fn without_planned(&self) -> Self {
        let mut dropped: BTreeSet<NodeId> = self
            .events
            .iter()
            .filter(|e| e.planned)
            .map(|e| e.child.clone())
            .collect();
        loop {
            let before = dropped.len();
            for e in &self.events {
                if e.parents.iter().any(|p| dropped.contains(p)) {
                    dropped.insert(e.child.clone());
                }
            }
            if dropped.len() == before {
                break;
            }
        }
        Lineage {
            nodes: self
                .nodes
                .iter()
                .filter(|(id, _)| !dropped.contains(*id))
                .map(|(id, n)| (id.clone(), n.clone()))
                .collect(),
            events: self
                .events
                .iter()
                .filter(|e| !dropped.contains(&e.child))
                .cloned()
                .collect(),
        }
    }

    fn insert_event(&mut self, event: DerivationEvent) {
        let at = self.events.partition_point(|e| e.child <= event.child);
        self.events.insert(at, event);
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ModelNode> {
        self.nodes.values()
    }

    pub fn events(&self) -> &[DerivationEvent] {
        &self.events
    }

    pub fn node(&self, id: &NodeId) -> Option<&ModelNode> {
        self.nodes.get(id)
    }

    pub fn node_mut(&mut self, id: &NodeId) -> Option<&mut ModelNode> {
        self.nodes.get_mut(id)
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// All events whose child is `id`; exactly one in a valid lineage.
    pub fn creating_events(&self, id: &NodeId) -> &[DerivationEvent] {
        let lo = self.events.partition_point(|e| e.child < *id);
        let hi = self.events.partition_point(|e| e.child <= *id);
        &self.events[lo..hi]
    }

    pub fn creating_event(&self, id: &NodeId) -> Option<&DerivationEvent> {
        self.creating_events(id).first()
    }

    pub fn creating_event_mut(&mut self, id: &NodeId) -> Option<&mut DerivationEvent> {
        let lo = self.events.partition_point(|e| e.child < *id);
        self.events.get_mut(lo).filter(|e| e.child == *id)
    }

    /// True if `target` is `from` or one of its ancestors.
    fn reaches(&self, from: &NodeId, target: &NodeId) -> bool {
        if from == target {
            return true;
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![from];
        while let Some(x) = stack.pop() {
            for e in self.creating_events(x) {
                for p in &e.parents {
                    if p == target {
                        return true;
                    }
                    if seen.insert(p) {
                        stack.push(p);
                    }
                }
            }
        }
        false
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut v = |kind, node: &NodeId, detail: String| {
            out.push(Violation {
                kind,
                node: node.clone(),
                detail,
            })
        };
        for e in &self.events {
            if !self.nodes.contains_key(&e.child) {
                v(
                    ViolationKind::UnknownId,
                    &e.child,
                    format!("{} event creates unknown model {}", e.kind, e.child),
                );
            }
            for p in &e.parents {
                if !self.nodes.contains_key(p) {
                    v(
                        ViolationKind::UnknownId,
                        &e.child,
                        format!("{} event references unknown model {p}", e.kind),
                    );
                }
            }
            if let Err(rule) = e.check_fields() {
                v(ViolationKind::KindFieldMismatch, &e.child, rule);
            }
        }
        for id in self.nodes.keys() {
            match self.creating_events(id).len() {
                0 => v(
                    ViolationKind::MissingCreatingEvent,
                    id,
                    "model has no creating event".into(),
                ),
                1 => {}
                n => v(
                    ViolationKind::ChildAlreadyCreated,
                    id,
                    format!("model has {n} creating events"),
                ),
            }
        }
        if let Err(stuck) = self.topological_order() {
            for id in stuck {
                v(
                    ViolationKind::CycleDetected,
                    &id,
                    "model is part of or downstream of a cycle".into(),
                );
            }
        }
        out.sort();
        out
    }

    /// Kahn order over known nodes; on a cycle returns the nodes that could not be placed.
    pub fn topological_order(&self) -> Result<Vec<NodeId>, Vec<NodeId>> {
        let mut indegree: BTreeMap<&NodeId, usize> = self.nodes.keys().map(|k| (k, 0)).collect();
        let mut children: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
        for e in &self.events {
            if !self.nodes.contains_key(&e.child) {
                continue;
            }
            for p in e.parents.iter().filter(|p| self.nodes.contains_key(*p)) {
                *indegree.get_mut(&e.child).expect("known child") += 1;
                children.entry(p).or_default().push(&e.child);
            }
        }
        let mut ready: VecDeque<&NodeId> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(k, _)| *k)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(x) = ready.pop_front() {
            order.push(x.clone());
            for c in children.get(x).into_iter().flatten() {
                let d = indegree.get_mut(c).expect("known child");
                *d -= 1;
                if *d == 0 {
                    ready.push_back(c);
                }
            }
        }
        if order.len() == self.nodes.len() {
            Ok(order)
        } else {
            let placed: BTreeSet<_> = order.iter().collect();
            Err(self
                .nodes
                .keys()
                .filter(|k| !placed.contains(k))
                .cloned()
                .collect())
        }
    }

    /// Transitive closure over parent edges, excluding `id`.
    pub fn ancestors(&self, id: &NodeId) -> Result<BTreeSet<NodeId>, LedgerError> {
        if !self.contains(id) {
            return Err(LedgerError::UnknownId(id.clone()));
        }
        let mut out = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(x) = stack.pop() {
            for e in self.creating_events(x) {
                for p in &e.parents {
                    if p != id && out.insert(p.clone()) {
                        stack.push(p);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Teachers of every Distill/Kickstart/Reincarnate event on any path into `id`.
    pub fn reuse_teachers(
        &self,
        id: &NodeId,
    ) -> Result<BTreeSet<(NodeId, EventKind)>, LedgerError> {
        let mut lineage = self.ancestors(id)?;
        lineage.insert(id.clone());
        let mut out = BTreeSet::new();
        for x in &lineage {
            for e in self.creating_events(x).iter().filter(|e| e.kind.is_reuse()) {
                for p in &e.parents {
                    out.insert((p.clone(), e.kind));
                }
            }
        }
        Ok(out)
    }
}
