//! Running several tests on one dataset.
//!
//! Permutation-referenced methods (both KONP statistics and Pepe–Fleming)
//! are evaluated on one shared pool of replicates. The Cauchy combination is
//! composed from the KONP and logrank p-values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{SampleView, SurvivalDataset};
use crate::error::{Error, Result};
use crate::partition::{KonpWorkspace, StatisticSet};
use crate::permute::{
    cauchy_combination, permutation_rejections, permutation_test, PermutationPlan, ReplicateStatistic,
};
use crate::wlr::{self, LogrankWeight, PepeFleming};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    KonpP,
    KonpLr,
    Cau,
    Logrank,
    PetoPeto,
    PepeFleming,
    Lee,
    Maxcombo,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::KonpP,
        Method::KonpLr,
        Method::Cau,
        Method::Logrank,
        Method::PetoPeto,
        Method::PepeFleming,
        Method::Lee,
        Method::Maxcombo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::KonpP => "konp_p",
            Method::KonpLr => "konp_lr",
            Method::Cau => "cau",
            Method::Logrank => "logrank",
            Method::PetoPeto => "peto_peto",
            Method::PepeFleming => "pepe_fleming",
            Method::Lee => "lee",
            Method::Maxcombo => "maxcombo",
        }
    }

    /// Reference distribution comes from the permutation engine.
    pub fn uses_permutations(self) -> bool {
        matches!(self, Method::KonpP | Method::KonpLr | Method::PepeFleming | Method::Cau)
    }

    pub fn two_groups_only(self) -> bool {
        matches!(self, Method::PepeFleming | Method::Lee | Method::Maxcombo)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::InvalidInput(format!("unknown method `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

/// Parse `all` or a comma-separated list of method names.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part.eq_ignore_ascii_case("all") {
            out.extend(Method::ALL);
        } else {
            out.push(part.parse()?);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("no methods requested".into()));
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Requested methods plus the inputs `cau` needs, in canonical order.
pub fn expand_methods(methods: &[Method]) -> Vec<Method> {
    let mut out = methods.to_vec();
    if out.contains(&Method::Cau) {
        out.extend([Method::KonpP, Method::KonpLr, Method::Logrank]);
    }
    out.sort();
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub method: Method,
    pub statistic: f64,
    pub pvalue: f64,
    /// `M·B` for permutation methods, 0 for asymptotic ones.
    pub replicates_used: usize,
    pub seed: u64,
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub df: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub std_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

/// The permutation statistics requested from one replicate pool, laid out as
/// `[Q_P, Q_LR]` (if any KONP method) followed by `|PF|` (if requested).
#[derive(Debug, Clone, Copy)]
struct PooledStatistic {
    konp: Option<StatisticSet>,
    pepe_fleming: bool,
}

impl PooledStatistic {
    fn konp_slot(&self) -> Option<usize> {
        self.konp.map(|_| 0)
    }

    fn pf_slot(&self) -> Option<usize> {
        self.pepe_fleming.then(|| if self.konp.is_some() { 2 } else { 0 })
    }
}

impl ReplicateStatistic for PooledStatistic {
    type Scratch = (KonpWorkspace, Vec<usize>);

    fn arity(&self) -> usize {
        2 * self.konp.is_some() as usize + self.pepe_fleming as usize
    }

    fn scratch(&self) -> Self::Scratch {
        (KonpWorkspace::new(), Vec::new())
    }

    fn evaluate(&self, view: &SampleView<'_>, scratch: &mut Self::Scratch, out: &mut [Option<f64>]) {
        if let Some(which) = self.konp {
            let r = scratch.0.evaluate(view, which, false);
            let value = |q: f64| (!r.degenerate).then_some(q);
            out[0] = value(r.q_pearson);
            out[1] = value(r.q_lr);
        }
        if let Some(slot) = self.pf_slot() {
            PepeFleming.evaluate(view, &mut scratch.1, &mut out[slot..slot + 1]);
        }
    }
}

fn pooled_for(methods: &[Method]) -> Option<PooledStatistic> {
    let p = methods.contains(&Method::KonpP);
    let lr = methods.contains(&Method::KonpLr);
    let pf = methods.contains(&Method::PepeFleming);
    let konp = (p || lr).then_some(StatisticSet {
        pearson: p,
        likelihood_ratio: lr,
    });
    (konp.is_some() || pf).then_some(PooledStatistic {
        konp,
        pepe_fleming: pf,
    })
}

fn check_groups(ds: &SurvivalDataset, methods: &[Method]) -> Result<()> {
    if let Some(m) = methods.iter().find(|m| m.two_groups_only()) {
        if ds.n_groups() != 2 {
            return Err(Error::RequiresTwoGroups {
                method: m.name(),
                groups: ds.n_groups(),
            });
        }
    }
    Ok(())
}

fn asymptotic_report(ds: &SurvivalDataset, method: Method, seed: u64) -> Result<TestReport> {
    let view = ds.view();
    let base = |statistic, pvalue, degenerate, note| TestReport {
        method,
        statistic,
        pvalue,
        replicates_used: 0,
        seed,
        degenerate,
        df: None,
        std_error: None,
        note,
    };
    Ok(match method {
        Method::Logrank | Method::PetoPeto => {
            let weight = if method == Method::Logrank {
                LogrankWeight::Unit
            } else {
                LogrankWeight::PooledKmLeft
            };
            let t = wlr::k_sample_logrank(&view, weight)?;
            TestReport {
                df: Some(t.df),
                ..base(t.statistic, t.pvalue, t.degenerate, t.note)
            }
        }
        Method::Lee | Method::Maxcombo => {
            let t = if method == Method::Lee {
                wlr::lee_test(&view, seed)?
            } else {
                wlr::maxcombo_test(&view, seed)?
            };
            TestReport {
                std_error: t.std_error,
                ..base(t.statistic, t.pvalue, t.degenerate, t.note)
            }
        }
        _ => unreachable!("{method} is not asymptotic"),
    })
}

/// Run `methods` on `ds`, returning one report per method (including the
/// inputs `cau` needs) in canonical order.
pub fn run_test_suite(ds: &SurvivalDataset, methods: &[Method], plan: &PermutationPlan) -> Result<Vec<TestReport>> {
    if methods.is_empty() {
        return Err(Error::InvalidInput("no methods requested".into()));
    }
    let methods = expand_methods(methods);
    check_groups(ds, &methods)?;
    plan.validate()?;

    let mut reports = Vec::with_capacity(methods.len());
    let pooled = pooled_for(&methods);
    let outcomes = match &pooled {
        Some(stat) => permutation_test(ds, stat, plan)?,
        None => Vec::new(),
    };
    for &method in &methods {
        let slot = match method {
            Method::KonpP => pooled.and_then(|p| p.konp_slot()),
            Method::KonpLr => pooled.and_then(|p| p.konp_slot()).map(|s| s + 1),
            Method::PepeFleming => pooled.and_then(|p| p.pf_slot()),
            Method::Cau => continue,
            _ => {
                reports.push(asymptotic_report(ds, method, plan.seed)?);
                continue;
            }
        };
        let o = &outcomes[slot.expect("permutation slot")];
        reports.push(TestReport {
            method,
            statistic: o.observed,
            pvalue: o.pvalue,
            replicates_used: o.replicates,
            seed: plan.seed,
            degenerate: o.degenerate,
            df: None,
            std_error: None,
            note: o.degenerate.then(|| "no partition table could be formed".to_string()),
        });
    }
    if methods.contains(&Method::Cau) {
        let p = |m: Method| reports.iter().find(|r| r.method == m).map(|r| r.pvalue).unwrap();
        let inputs = [p(Method::KonpP), p(Method::KonpLr), p(Method::Logrank)];
        let combined = cauchy_combination(&inputs, plan.floor());
        let statistic = (0.5 - combined) * std::f64::consts::PI;
        reports.push(TestReport {
            method: Method::Cau,
            statistic: statistic.tan(),
            pvalue: combined,
            replicates_used: plan.replicates(),
            seed: plan.seed,
            degenerate: false,
            df: None,
            std_error: None,
            note: None,
        });
        reports.sort_by_key(|r| r.method);
    }
    Ok(reports)
}

/// Level-`alpha` decisions for `methods` (no `cau` expansion in the output:
/// one entry per requested method, in the given order). Permutation methods
/// stop early once no decision can change, unless `cau` needs their
/// p-values.
pub fn rejections(
    ds: &SurvivalDataset,
    methods: &[Method],
    plan: &PermutationPlan,
    alpha: f64,
) -> Result<Vec<bool>> {
    if methods.contains(&Method::Cau) {
        let reports = run_test_suite(ds, methods, plan)?;
        return Ok(methods
            .iter()
            .map(|m| reports.iter().find(|r| r.method == *m).unwrap().pvalue <= alpha)
            .collect());
    }
    check_groups(ds, methods)?;
    let pooled = pooled_for(methods);
    let decided = match &pooled {
        Some(stat) => permutation_rejections(ds, stat, plan, alpha)?,
        None => Vec::new(),
    };
    methods
        .iter()
        .map(|&m| {
            Ok(match m {
                Method::KonpP => decided[pooled.unwrap().konp_slot().unwrap()],
                Method::KonpLr => decided[pooled.unwrap().konp_slot().unwrap() + 1],
                Method::PepeFleming => decided[pooled.unwrap().pf_slot().unwrap()],
                _ => asymptotic_report(ds, m, plan.seed)?.pvalue <= alpha,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds() -> SurvivalDataset {
        SurvivalDataset::from_labeled([
            (1.0, true, "a"),
            (2.0, false, "a"),
            (3.0, true, "a"),
            (4.0, true, "a"),
            (0.5, true, "a"),
            (1.5, true, "b"),
            (2.5, true, "b"),
            (3.5, false, "b"),
            (5.0, true, "b"),
            (6.0, true, "b"),
        ])
        .unwrap()
    }

    fn plan() -> PermutationPlan {
        PermutationPlan {
            imputations: 2,
            permutations: 100,
            seed: 11,
            rule: Default::default(),
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!(parse_methods("all").unwrap(), Method::ALL);
        assert_eq!(parse_methods("logrank, konp-p").unwrap(), [Method::KonpP, Method::Logrank]);
        assert!(parse_methods("yang_prentice").is_err());
        assert!(parse_methods(" , ").is_err());
    }

    #[test]
    fn single_method() {
        let r = run_test_suite(&ds(), &[Method::KonpP], &plan()).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].replicates_used, 200);
        let r = run_test_suite(&ds(), &[Method::Logrank], &plan()).unwrap();
        assert_eq!((r.len(), r[0].replicates_used, r[0].df), (1, 0, Some(1)));
    }

    #[test]
    fn cau_enables_its_inputs() {
        let r = run_test_suite(&ds(), &[Method::Cau], &plan()).unwrap();
        let methods: Vec<Method> = r.iter().map(|x| x.method).collect();
        assert_eq!(methods, [Method::KonpP, Method::KonpLr, Method::Cau, Method::Logrank]);
    }

    #[test]
    fn pooled_pvalues_match_separate_runs() {
        let all = run_test_suite(&ds(), &Method::ALL, &plan()).unwrap();
        for m in [Method::KonpP, Method::KonpLr, Method::PepeFleming] {
            let alone = run_test_suite(&ds(), &[m], &plan()).unwrap();
            let pooled = all.iter().find(|r| r.method == m).unwrap();
            assert_eq!(alone[0].pvalue, pooled.pvalue, "{m}");
        }
    }

    #[test]
    fn two_group_methods_rejected_for_three_groups() {
        let three = SurvivalDataset::from_labeled([
            (1.0, true, "a"),
            (2.0, true, "b"),
            (3.0, true, "c"),
        ])
        .unwrap();
        assert!(matches!(
            run_test_suite(&three, &[Method::Lee], &plan()),
            Err(Error::RequiresTwoGroups { .. })
        ));
    }

    #[test]
    fn rejections_agree_with_reports() {
        let methods = [Method::KonpP, Method::Logrank, Method::PepeFleming];
        for alpha in [0.05, 0.5] {
            let reports = run_test_suite(&ds(), &methods, &plan()).unwrap();
            let got = rejections(&ds(), &methods, &plan(), alpha).unwrap();
            let want: Vec<bool> = methods
                .iter()
                .map(|m| reports.iter().find(|r| r.method == *m).unwrap().pvalue <= alpha)
                .collect();
            assert_eq!(got, want);
        }
    }
}
