//! Random lineage and scenario generators shared by the integration tests.

#![allow(dead_code)]

use ctl_core::compute::MoneyAmount;
use ctl_core::ledger::{CapabilityDomain, DerivationEvent, EventKind, Lineage, ModelNode, NodeId};
use ctl_core::rulesets::builtin_rulesets;
use ctl_core::scenario::{RulesetSpec, Scenario, SweepSpec};
use ctl_core::{Compute, Scaling};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn c(s: &str) -> Compute {
    s.parse().unwrap()
}

pub fn log_uniform(rng: &mut StdRng, lo: f64, hi: f64) -> Compute {
    Compute::from_log10(rng.gen_range(lo..hi)).unwrap()
}

/// A valid lineage of 1..=`max_nodes` models. Model `m0` is always pretrained; later models
/// are pretrained or derived from earlier ones with a uniformly chosen event kind.
pub fn lineage(rng: &mut StdRng, max_nodes: usize) -> Lineage {
    let n = rng.gen_range(1..=max_nodes);
    let mut nodes = Vec::new();
    let mut events = Vec::new();
    for i in 0..n {
        let id = format!("m{i}");
        let mut node = ModelNode::new(id.clone());
        node.deployed = rng.gen_bool(0.8);
        if rng.gen_bool(0.3) {
            let domain = if rng.gen_bool(0.5) {
                CapabilityDomain::General
            } else {
                CapabilityDomain::MathCoding
            };
            node = node.with_inference(log_uniform(rng, 10.0, 17.0), domain);
        }
        nodes.push(node);

        let kind = if i == 0 {
            EventKind::Pretrain
        } else {
            *EventKind::ALL.choose(rng).unwrap()
        };
        let compute = match kind {
            EventKind::Copy | EventKind::CombineSoftware => Compute::zero(),
            _ => log_uniform(rng, 21.0, 27.0),
        };
        let parents: Vec<String> = match kind {
            EventKind::Pretrain => vec![],
            EventKind::Distill if i >= 2 && rng.gen_bool(0.3) => {
                let mut ps: Vec<usize> = (0..i).collect();
                ps.shuffle(rng);
                ps[..2].iter().map(|p| format!("m{p}")).collect()
            }
            _ => vec![format!("m{}", rng.gen_range(0..i))],
        };
        let parent_refs: Vec<&str> = parents.iter().map(String::as_str).collect();
        let mut e = DerivationEvent::new(kind, &parent_refs, &id, compute);
        if rng.gen_bool(0.7) {
            e.cost = Some(MoneyAmount::new(10f64.powf(rng.gen_range(6.0..9.0))).unwrap());
        }
        if kind == EventKind::Expand {
            e.expand_savings_fraction = Some(rng.gen_range(0.0..0.9));
        }
        if kind == EventKind::Reincarnate {
            e.surpass_teacher = Some(rng.gen_bool(0.5));
        }
        e.planned = rng.gen_bool(0.1);
        events.push(e);
    }
    let l = Lineage::from_parts(nodes, events).unwrap();
    assert!(l.validate().is_empty(), "{:?}", l.validate());
    l
}

pub fn pick_subject(rng: &mut StdRng, lineage: &Lineage) -> NodeId {
    let ids: Vec<NodeId> = lineage.nodes().map(|n| n.id.clone()).collect();
    ids.choose(rng).unwrap().clone()
}

/// Every sweepable field of the lineage, as target paths.
pub fn sweep_targets(lineage: &Lineage) -> Vec<String> {
    let mut out = Vec::new();
    for e in lineage.events() {
        if !matches!(e.kind, EventKind::Copy | EventKind::CombineSoftware) {
            out.push(format!("events.{}.flop", e.child));
        }
    }
    for n in lineage.nodes() {
        if n.inference.is_some() {
            out.push(format!("models.{}.inference.per_request_flop", n.id));
        }
    }
    out
}

/// Random scenario exercising every optional section of the file format.
pub fn scenario(rng: &mut StdRng) -> Scenario {
    let lineage = lineage(rng, 7);
    let subject = pick_subject(rng, &lineage);
    let mut scaling = Scaling::default();
    if rng.gen_bool(0.3) {
        scaling.loss_compute_exponent = rng.gen_range(0.05..0.5);
        scaling.inference_optimal_coefficient = rng.gen_range(0.01..1.0);
    }
    let rulesets = if rng.gen_bool(0.5) {
        None
    } else {
        let mut all = builtin_rulesets();
        all.shuffle(rng);
        let k = rng.gen_range(0..4);
        let mut specs: Vec<RulesetSpec> = all[..k]
            .iter()
            .map(|r| RulesetSpec::Builtin(r.id.clone()))
            .collect();
        if rng.gen_bool(0.5) {
            let mut custom = all[k].clone();
            custom.id = format!("custom-{}", rng.gen_range(0..1000));
            custom.threshold = log_uniform(rng, 23.0, 27.0);
            custom.citations.clear();
            specs.push(RulesetSpec::Inline(custom));
        }
        Some(specs)
    };
    let targets = sweep_targets(&lineage);
    let sweep = (!targets.is_empty() && rng.gen_bool(0.5)).then(|| {
        let from = rng.gen_range(10.0..22.0);
        SweepSpec {
            target: targets.choose(rng).unwrap().clone(),
            from: Compute::from_log10(from).unwrap(),
            to: Compute::from_log10(from + rng.gen_range(0.5..8.0)).unwrap(),
            steps: rng.gen_range(2..50),
            scale: Default::default(),
        }
    });
    Scenario {
        lineage,
        subject,
        scaling,
        rulesets,
        sweep,
    }
}
