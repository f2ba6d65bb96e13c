//! Rejection rates of the test suite over simulated datasets.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{CensoringVariant, ScenarioSpec};
use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::permute::PermutationPlan;
use crate::rng::{stream, Domain};
use crate::suite::{self, Method};

/// Split `n` into group sizes proportional to `fractions` by the largest
/// remainder method (ties go to the earlier group).
pub fn group_sizes(n: usize, fractions: &[f64]) -> Vec<usize> {
    let total: f64 = fractions.iter().sum();
    let exact: Vec<f64> = fractions.iter().map(|f| n as f64 * f / total).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let short = n - sizes.iter().sum::<usize>();
    for &g in order.iter().take(short) {
        sizes[g] += 1;
    }
    sizes
}

/// Draw one dataset of total size `n` from `spec`. Group `g` is labelled
/// `g+1`; records are stored group by group.
pub fn generate_dataset<R: Rng + ?Sized>(spec: &ScenarioSpec, n: usize, rng: &mut R) -> Result<SurvivalDataset> {
    spec.validate()?;
    let sizes = group_sizes(n, &spec.group_fractions);
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidInput(format!("n = {n} leaves group {} empty", g + 1)));
    }
    let (mut times, mut events, mut groups) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (g, &size) in sizes.iter().enumerate() {
        for _ in 0..size {
            let x = spec.failure[g].sample(rng);
            let c = spec.censoring[g].sample(rng);
            times.push(x.min(c));
            events.push(x <= c);
            groups.push(g);
        }
    }
    let labels = (1..=spec.k).map(|g| g.to_string()).collect();
    SurvivalDataset::new(times, events, groups, labels)
}

#[derive(Debug, Clone)]
pub struct PowerStudy {
    pub scenario: ScenarioSpec,
    pub variant: CensoringVariant,
    pub sizes: Vec<usize>,
    pub replications: usize,
    pub methods: Vec<Method>,
    pub alpha: f64,
    /// Permutation settings; `seed` is the master seed of the whole study.
    pub plan: PermutationPlan,
    /// Stop each permutation test once its decision is fixed. Decisions are
    /// identical to a full run.
    pub early_exit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub scenario: String,
    pub variant: CensoringVariant,
    pub n: usize,
    pub method: Method,
    pub replications: usize,
    pub alpha: f64,
    pub rejections: usize,
    pub rejection_rate: f64,
    /// Binomial Monte-Carlo standard error of the rate.
    pub mc_se: f64,
    /// Mean censoring proportion of the generated datasets.
    pub censoring_rate: f64,
    /// Replications whose dataset had no events (counted as non-rejections).
    pub invalid_datasets: usize,
}

struct Replication {
    rejected: Vec<bool>,
    censored: f64,
    invalid: bool,
}

fn replicate(study: &PowerStudy, n_idx: usize, rep: usize) -> Result<Replication> {
    let n = study.sizes[n_idx];
    let mut rng = stream(study.plan.seed, Domain::Dataset, n_idx as u32, rep as u32);
    let ds = match generate_dataset(&study.scenario, n, &mut rng) {
        Ok(ds) => ds,
        Err(Error::NoEvents) => {
            return Ok(Replication {
                rejected: vec![false; study.methods.len()],
                censored: 1.0,
                invalid: true,
            })
        }
        Err(e) => return Err(e),
    };
    let plan = PermutationPlan {
        seed: rng.random(),
        ..study.plan
    };
    let rejected = if study.early_exit {
        suite::rejections(&ds, &study.methods, &plan, study.alpha)?
    } else {
        let reports = suite::run_test_suite(&ds, &study.methods, &plan)?;
        study
            .methods
            .iter()
            .map(|m| reports.iter().any(|r| r.method == *m && r.pvalue <= study.alpha))
            .collect()
    };
    let censored = ds.events().iter().filter(|&&e| !e).count() as f64 / n as f64;
    Ok(Replication {
        rejected,
        censored,
        invalid: false,
    })
}

/// Run the study: one row per (sample size, method). Each replication draws
/// its data from its own random stream, so results do not depend on the
/// thread count.
pub fn run_power_study(study: &PowerStudy) -> Result<Vec<PowerRow>> {
    if study.replications == 0 || study.sizes.is_empty() || study.methods.is_empty() {
        return Err(Error::InvalidInput("power study needs sizes, methods and replications".into()));
    }
    if !(study.alpha > 0.0 && study.alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {}", study.alpha)));
    }
    study.plan.validate()?;
    study.scenario.validate()?;

    let mut rows = Vec::new();
    for (n_idx, &n) in study.sizes.iter().enumerate() {
        let reps: Vec<Replication> = (0..study.replications)
            .into_par_iter()
            .map(|rep| replicate(study, n_idx, rep))
            .collect::<Result<_>>()?;
        let r = study.replications as f64;
        let censoring_rate = reps.iter().map(|x| x.censored).sum::<f64>() / r;
        let invalid = reps.iter().filter(|x| x.invalid).count();
        for (j, &method) in study.methods.iter().enumerate() {
            let rejections = reps.iter().filter(|x| x.rejected[j]).count();
            let rate = rejections as f64 / r;
            rows.push(PowerRow {
                scenario: study.scenario.name.clone(),
                variant: study.variant,
                n,
                method,
                replications: study.replications,
                alpha: study.alpha,
                rejections,
                rejection_rate: rate,
                mc_se: (rate * (1.0 - rate) / r).sqrt(),
                censoring_rate,
                invalid_datasets: invalid,
            });
        }
    }
    Ok(rows)
}
