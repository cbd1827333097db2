//! Compute accounting and threshold rule evaluation for model lineages.
//!
//! Numeric building blocks ([`compute`], [`scaling`]) are generic over the float type;
//! the rule engine works in `f64`.

pub mod compute;
pub mod effective;
pub mod ledger;
pub mod rulesets;
pub mod scalar;
pub mod scaling;
pub mod scenario;

pub use compute::{ComputeError, MoneyAmount, OomValue};
pub use effective::{effective_compute, ComputeBreakdown, CountingPolicy};
pub use ledger::{CapabilityDomain, DerivationEvent, EventKind, Lineage, ModelNode, NodeId};
pub use rulesets::{evaluate, evaluate_all, Registry, Ruleset, Status, Verdict};
pub use scalar::Scalar;
pub use scenario::{parse_scenario, render_report, Report, ReportFormat, Scenario, ScenarioError};

pub type Compute = compute::ComputeAmount<f64>;
pub type Compute32 = compute::ComputeAmount<f32>;
pub type Scaling = scaling::ScalingConfig<f64>;
pub type Anchors = scaling::AnchorTable<f64>;
