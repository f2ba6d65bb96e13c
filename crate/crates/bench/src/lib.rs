//! Fixed datasets shared by the benchmarks.

use konp::rng::{stream, Domain};
use konp::simgen::{generate_dataset, lookup, CensoringVariant};
use konp::SurvivalDataset;

/// Two-group null dataset of size `n` with about 25% censoring in both arms.
pub fn null_two_group(n: usize) -> SurvivalDataset {
    let spec = lookup("null-2")
        .and_then(|f| f.variant(CensoringVariant::Equal25))
        .expect("built-in scenario");
    generate_dataset(&spec, n, &mut stream(17, Domain::Dataset, 0, n as u32)).expect("valid dataset")
}

/// Three-group dataset from scenario D with unequal censoring.
pub fn scenario_d(n: usize) -> SurvivalDataset {
    let spec = lookup("D-3")
        .and_then(|f| f.variant(CensoringVariant::UnequalSevere))
        .expect("built-in scenario");
    generate_dataset(&spec, n, &mut stream(18, Domain::Dataset, 0, n as u32)).expect("valid dataset")
}
