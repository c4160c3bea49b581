//! Trigger sets, trigger injection, mixup and per-batch taint planning.

pub mod inject;
pub mod plan;
pub mod triggers;

pub use inject::{inject_trigger, mixup_perturb};
pub use plan::{plan_batch_taint, Assignment, InjectionConfig, TaintPlan};
pub use triggers::{generate_default_triggers, load_trigger_dir, load_triggers, TriggerSet, TriggerSource};
