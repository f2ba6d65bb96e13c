pub mod dataset;
pub mod error;
pub mod km;
pub mod mvn;
pub mod normal;
pub mod partition;
pub mod permute;
pub mod rng;
pub mod simgen;
pub mod suite;
pub mod wlr;

pub use dataset::{CsvSchema, GroupSummary, SampleView, SurvivalDataset, SurvivalRecord};
pub use error::{Error, Result};
pub use km::KmCurve;
pub use partition::{konp_statistic, KonpResult, PartitionTable, TruncationBounds};
pub use permute::{PValueRule, PermutationPlan};
pub use simgen::{CensoringVariant, DistributionSpec, ScenarioFamily, ScenarioSpec};
pub use suite::{parse_methods, run_test_suite, Method, TestReport};
