//! Data-generating mechanisms and Monte-Carlo power studies.

pub mod distribution;
pub mod power;
pub mod scenario;

pub use distribution::DistributionSpec;
pub use power::{generate_dataset, group_sizes, run_power_study, PowerRow, PowerStudy};
pub use scenario::{lookup, registry, CensoringVariant, ScenarioFamily, ScenarioSpec};
