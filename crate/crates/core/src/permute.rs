//! Imputation-based permutation engine.
//!
//! Plain label permutation is invalid when censoring laws differ between
//! groups. Here a record that moves to another group gets a censoring time
//! drawn from the new group's censoring KM, and, if it was censored, a
//! failure time drawn from the pooled KM conditional on surviving past its
//! observed time. Records that keep their label are left untouched.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{SampleView, SurvivalDataset};
use crate::error::{Error, Result};
use crate::km::{tail_epsilon, KmCurve, TailPolicy};
use crate::partition::{KonpWorkspace, StatisticSet};
use crate::rng::replicate_rng;

/// Relative slack under which a replicate counts as tying the observed value.
pub const TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueRule {
    /// `#{replicate >= observed} / (M·B)`.
    #[default]
    Proportion,
    /// `(#{replicate >= observed} + 1) / (M·B + 1)`.
    AddOne,
}

impl PValueRule {
    pub fn pvalue(self, count_ge: usize, replicates: usize) -> f64 {
        match self {
            PValueRule::Proportion => count_ge as f64 / replicates as f64,
            PValueRule::AddOne => (count_ge + 1) as f64 / (replicates + 1) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationPlan {
    pub imputations: u32,
    pub permutations: u32,
    pub seed: u64,
    pub rule: PValueRule,
}

impl PermutationPlan {
    /// Plan for analysing a single dataset: 10 imputations of 10⁴ permutations.
    pub fn analysis(seed: u64) -> Self {
        Self {
            imputations: 10,
            permutations: 10_000,
            seed,
            rule: PValueRule::Proportion,
        }
    }

    /// Plan for simulation studies: one imputation of 1000 permutations.
    pub fn simulation(seed: u64) -> Self {
        Self {
            imputations: 1,
            permutations: 1000,
            seed,
            rule: PValueRule::Proportion,
        }
    }

    pub fn replicates(&self) -> usize {
        self.imputations as usize * self.permutations as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.imputations == 0 || self.permutations == 0 {
            return Err(Error::InvalidInput(
                "imputations and permutations must both be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Warning text when the plan cannot resolve p-values below 0.01.
    pub fn resolution_warning(&self) -> Option<String> {
        (self.replicates() < 100).then(|| {
            format!(
                "only {} permutation replicates; p-values are coarse",
                self.replicates()
            )
        })
    }

    /// Smallest p-value the plan can report, used to keep combined tests finite.
    pub fn floor(&self) -> f64 {
        1.0 / (self.replicates() + 1) as f64
    }

    fn replicate_indices(&self, r: usize) -> (u32, u32) {
        let b = self.permutations as usize;
        ((r / b) as u32, (r % b) as u32)
    }
}

/// One or more statistics evaluated on every permutation replicate.
pub trait ReplicateStatistic: Sync {
    type Scratch: Send;

    /// Number of statistics written per evaluation.
    fn arity(&self) -> usize;

    fn scratch(&self) -> Self::Scratch;

    /// Write each statistic into `out`; `None` marks a degenerate value.
    fn evaluate(&self, view: &SampleView<'_>, scratch: &mut Self::Scratch, out: &mut [Option<f64>]);
}

/// Adapter for closures returning a fixed-length vector of statistics.
pub struct FnStatistic<F> {
    arity: usize,
    f: F,
}

impl<F> FnStatistic<F>
where
    F: Fn(&SampleView<'_>) -> Vec<Option<f64>> + Sync,
{
    pub fn new(arity: usize, f: F) -> Self {
        Self { arity, f }
    }
}

impl<F> ReplicateStatistic for FnStatistic<F>
where
    F: Fn(&SampleView<'_>) -> Vec<Option<f64>> + Sync,
{
    type Scratch = ();

    fn arity(&self) -> usize {
        self.arity
    }

    fn scratch(&self) {}

    fn evaluate(&self, view: &SampleView<'_>, _: &mut (), out: &mut [Option<f64>]) {
        out.copy_from_slice(&(self.f)(view));
    }
}

/// `[Q_P, Q_LR]`; a statistic left out of `which` is reported as 0.
#[derive(Debug, Clone, Copy)]
pub struct KonpStatistic {
    pub which: StatisticSet,
}

impl ReplicateStatistic for KonpStatistic {
    type Scratch = KonpWorkspace;

    fn arity(&self) -> usize {
        2
    }

    fn scratch(&self) -> KonpWorkspace {
        KonpWorkspace::new()
    }

    fn evaluate(&self, view: &SampleView<'_>, ws: &mut KonpWorkspace, out: &mut [Option<f64>]) {
        let r = ws.evaluate(view, self.which, false);
        if r.degenerate {
            out[0] = None;
            out[1] = None;
        } else {
            out[0] = Some(r.q_pearson);
            out[1] = Some(r.q_lr);
        }
    }
}

/// Null-model ingredients shared by every replicate.
#[derive(Debug, Clone)]
pub struct NullModel {
    censoring: Vec<KmCurve>,
    /// Largest censored time per group; `None` means the group never censors.
    censoring_tail: Vec<Option<f64>>,
    conditional: Vec<KmCurve>,
    /// Per record: index into `conditional` for censored records.
    conditional_index: Vec<Option<usize>>,
    max_event_time: f64,
    epsilon: f64,
}

impl NullModel {
    pub fn new(ds: &SurvivalDataset) -> Self {
        let view = ds.view();
        let k = ds.n_groups();
        let censoring: Vec<KmCurve> = (0..k).map(|g| KmCurve::fit_censoring(&view, g)).collect();
        let mut censoring_tail: Vec<Option<f64>> = vec![None; k];
        let mut max_event_time = 0.0f64;
        let mut max_time = 0.0f64;
        for r in ds.records() {
            max_time = max_time.max(r.time);
            if r.event {
                max_event_time = max_event_time.max(r.time);
            } else {
                let tail = &mut censoring_tail[r.group];
                *tail = Some(tail.map_or(r.time, |t| t.max(r.time)));
            }
        }

        // conditional KMs on suffixes of the time-sorted pooled sample
        let times = ds.times();
        let events = ds.events();
        let mut order: Vec<usize> = (0..ds.len()).collect();
        order.sort_unstable_by(|&a, &b| times[a].total_cmp(&times[b]));
        let mut censored_times: Vec<f64> = order
            .iter()
            .filter(|&&i| !events[i])
            .map(|&i| times[i])
            .collect();
        censored_times.dedup();
        let conditional: Vec<KmCurve> = censored_times
            .iter()
            .map(|&t| {
                let start = order.partition_point(|&i| times[i] <= t);
                let suffix = &order[start..];
                KmCurve::fit_sorted(suffix.iter().map(|&i| (times[i], events[i])), suffix.len())
            })
            .collect();
        let conditional_index = (0..ds.len())
            .map(|i| {
                (!events[i]).then(|| censored_times.partition_point(|&t| t < times[i]))
            })
            .collect();

        Self {
            censoring,
            censoring_tail,
            conditional,
            conditional_index,
            max_event_time,
            epsilon: tail_epsilon(max_time),
        }
    }

    pub fn censoring_curve(&self, group: usize) -> &KmCurve {
        &self.censoring[group]
    }

    /// Draw a censoring time for a record joining `group`.
    pub fn draw_censoring<R: Rng + ?Sized>(&self, group: usize, rng: &mut R) -> f64 {
        match self.censoring_tail[group] {
            None => f64::INFINITY,
            Some(tail) => self.censoring[group]
                .sample(rng, TailPolicy::Value(tail))
                .map_or(tail, |(v, _)| v),
        }
    }

    /// Draw a failure time for censored record `i`; the flag reports a
    /// synthetic draw past the last observed failure.
    pub fn draw_failure<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> (f64, bool) {
        let idx = self.conditional_index[i].expect("record is not censored");
        let policy = TailPolicy::ValuePlusEpsilon {
            value: self.max_event_time,
            epsilon: self.epsilon,
        };
        self.conditional[idx]
            .sample(rng, policy)
            .unwrap_or((self.max_event_time + self.epsilon, true))
    }

    /// Fill `times`/`events` with the replicate for `labels`.
    pub fn impute_into<R: Rng + ?Sized>(
        &self,
        ds: &SurvivalDataset,
        labels: &[usize],
        rng: &mut R,
        times: &mut [f64],
        events: &mut [bool],
    ) {
        for i in 0..ds.len() {
            let (t, e, g) = (ds.times()[i], ds.events()[i], ds.groups()[i]);
            if labels[i] == g {
                times[i] = t;
                events[i] = e;
                continue;
            }
            let c = self.draw_censoring(labels[i], rng);
            let (x, synthetic) = if e { (t, false) } else { self.draw_failure(i, rng) };
            times[i] = x.min(c);
            events[i] = x <= c && !synthetic;
        }
    }
}

/// Replicate dataset for a given relabelling.
pub fn impute_replicate<R: Rng + ?Sized>(
    ds: &SurvivalDataset,
    permuted_labels: &[usize],
    null: &NullModel,
    rng: &mut R,
) -> Result<SurvivalDataset> {
    let mut sorted_new = permuted_labels.to_vec();
    let mut sorted_old = ds.groups().to_vec();
    sorted_new.sort_unstable();
    sorted_old.sort_unstable();
    if sorted_new != sorted_old {
        return Err(Error::InvalidInput(
            "labels are not a permutation of the dataset's groups".into(),
        ));
    }
    let mut times = vec![0.0; ds.len()];
    let mut events = vec![false; ds.len()];
    null.impute_into(ds, permuted_labels, rng, &mut times, &mut events);
    Ok(SurvivalDataset::from_parts_unchecked(
        times,
        events,
        permuted_labels.to_vec(),
        ds.labels().to_vec(),
        ds.group_counts().to_vec(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationOutcome {
    pub observed: f64,
    pub count_ge: usize,
    pub replicates: usize,
    pub pvalue: f64,
    pub degenerate: bool,
}

fn at_least(replicate: Option<f64>, observed: f64) -> bool {
    replicate.unwrap_or(0.0) >= observed - TIE_TOLERANCE * observed.abs()
}

struct Worker<S> {
    labels: Vec<usize>,
    times: Vec<f64>,
    events: Vec<bool>,
    out: Vec<Option<f64>>,
    scratch: S,
    counts: Vec<usize>,
}

struct Engine<'a, S: ReplicateStatistic> {
    ds: &'a SurvivalDataset,
    stat: &'a S,
    plan: PermutationPlan,
    null: NullModel,
    observed: Vec<Option<f64>>,
}

impl<'a, S: ReplicateStatistic> Engine<'a, S> {
    fn new(ds: &'a SurvivalDataset, stat: &'a S, plan: PermutationPlan) -> Result<Self> {
        plan.validate()?;
        let mut observed = vec![None; stat.arity()];
        stat.evaluate(&ds.view(), &mut stat.scratch(), &mut observed);
        Ok(Self {
            ds,
            stat,
            plan,
            null: NullModel::new(ds),
            observed,
        })
    }

    fn worker(&self) -> Worker<S::Scratch> {
        let n = self.ds.len();
        Worker {
            labels: vec![0; n],
            times: vec![0.0; n],
            events: vec![false; n],
            out: vec![None; self.stat.arity()],
            scratch: self.stat.scratch(),
            counts: vec![0; self.stat.arity()],
        }
    }

    fn run_replicate(&self, w: &mut Worker<S::Scratch>, r: usize) {
        let (m, b) = self.plan.replicate_indices(r);
        let mut rng = replicate_rng(self.plan.seed, m, b);
        w.labels.copy_from_slice(self.ds.groups());
        w.labels.shuffle(&mut rng);
        self.null
            .impute_into(self.ds, &w.labels, &mut rng, &mut w.times, &mut w.events);
        let view = SampleView {
            times: &w.times,
            events: &w.events,
            groups: &w.labels,
            n_groups: self.ds.n_groups(),
        };
        self.stat.evaluate(&view, &mut w.scratch, &mut w.out);
        for (c, (rep, obs)) in w.counts.iter_mut().zip(w.out.iter().zip(&self.observed)) {
            if let Some(obs) = obs {
                *c += at_least(*rep, *obs) as usize;
            }
        }
    }

    /// Exceedance counts over replicates `range`; integer sums, so the result
    /// does not depend on how rayon splits the work.
    fn count(&self, range: std::ops::Range<usize>) -> Vec<usize> {
        let k = self.stat.arity();
        range
            .into_par_iter()
            .fold(
                || self.worker(),
                |mut w, r| {
                    self.run_replicate(&mut w, r);
                    w
                },
            )
            .map(|w| w.counts)
            .reduce(
                || vec![0; k],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            )
    }
}

/// Permutation p-values for every statistic of `stat`, all computed on one
/// shared set of `M·B` replicates.
pub fn permutation_test<S: ReplicateStatistic>(
    ds: &SurvivalDataset,
    stat: &S,
    plan: &PermutationPlan,
) -> Result<Vec<PermutationOutcome>> {
    let engine = Engine::new(ds, stat, *plan)?;
    let total = plan.replicates();
    let counts = engine.count(0..total);
    Ok(engine
        .observed
        .iter()
        .zip(counts)
        .map(|(obs, count)| match obs {
            Some(o) => PermutationOutcome {
                observed: *o,
                count_ge: count,
                replicates: total,
                pvalue: plan.rule.pvalue(count, total),
                degenerate: false,
            },
            None => PermutationOutcome {
                observed: 0.0,
                count_ge: total,
                replicates: total,
                pvalue: 1.0,
                degenerate: true,
            },
        })
        .collect())
}

/// Whether each statistic's permutation p-value is at most `alpha`.
///
/// Replicates are evaluated in blocks; once every statistic has so many
/// exceedances that its p-value must exceed `alpha`, the remaining blocks
/// cannot change any decision and are skipped. The decisions are identical to
/// those of [`permutation_test`] with the same plan.
pub fn permutation_rejections<S: ReplicateStatistic>(
    ds: &SurvivalDataset,
    stat: &S,
    plan: &PermutationPlan,
    alpha: f64,
) -> Result<Vec<bool>> {
    const BLOCK: usize = 64;
    let engine = Engine::new(ds, stat, *plan)?;
    let total = plan.replicates();
    let mut counts = vec![0usize; stat.arity()];
    let undecided = |counts: &[usize]| {
        engine
            .observed
            .iter()
            .zip(counts)
            .any(|(obs, &c)| obs.is_some() && plan.rule.pvalue(c, total) <= alpha)
    };
    let mut start = 0;
    while start < total && undecided(&counts) {
        let end = (start + BLOCK).min(total);
        for (c, add) in counts.iter_mut().zip(engine.count(start..end)) {
            *c += add;
        }
        start = end;
    }
    Ok(engine
        .observed
        .iter()
        .zip(&counts)
        .map(|(obs, &c)| obs.is_some() && plan.rule.pvalue(c, total) <= alpha)
        .collect())
}

/// Cauchy combination of p-values with equal weights. Inputs are clamped to
/// `[floor, 1 - floor]` to keep the tangent finite.
pub fn cauchy_combination(pvalues: &[f64], floor: f64) -> f64 {
    assert!(!pvalues.is_empty(), "no p-values to combine");
    let mean = pvalues
        .iter()
        .map(|&p| {
            let p = p.clamp(floor, 1.0 - floor);
            ((0.5 - p) * std::f64::consts::PI).tan()
        })
        .sum::<f64>()
        / pvalues.len() as f64;
    if mean > 0.0 {
        // 0.5 - atan(x)/pi without cancellation for large x
        (1.0 / mean).atan() / std::f64::consts::PI
    } else {
        0.5 - mean.atan() / std::f64::consts::PI
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> SurvivalDataset {
        SurvivalDataset::from_labeled([
            (1.0, true, "a"),
            (2.0, false, "a"),
            (3.0, true, "a"),
            (4.0, true, "a"),
            (1.5, true, "b"),
            (2.5, true, "b"),
            (3.5, false, "b"),
            (5.0, true, "b"),
        ])
        .unwrap()
    }

    #[test]
    fn identity_permutation_is_a_copy() {
        let ds = small();
        let null = NullModel::new(&ds);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rep = impute_replicate(&ds, ds.groups(), &null, &mut rng).unwrap();
        assert_eq!(rep, ds);
    }

    #[test]
    fn only_moved_records_change() {
        let ds = small();
        let null = NullModel::new(&ds);
        let mut labels = ds.groups().to_vec();
        labels.swap(0, 7);
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rep = impute_replicate(&ds, &labels, &null, &mut rng).unwrap();
            for i in 1..7 {
                assert_eq!(rep.record(i).time, ds.record(i).time);
                assert_eq!(rep.record(i).event, ds.record(i).event);
            }
        }
    }

    #[test]
    fn rejects_non_permutation() {
        let ds = small();
        let null = NullModel::new(&ds);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(impute_replicate(&ds, &[0; 8], &null, &mut rng).is_err());
    }

    #[test]
    fn point_mass_censoring() {
        // group b censors only at 9, its last time, so its censoring curve is
        // a complete point mass at 9
        let ds = SurvivalDataset::from_labeled([
            (1.0, true, "a"),
            (12.0, true, "a"),
            (2.0, true, "b"),
            (9.0, false, "b"),
        ])
        .unwrap();
        let null = NullModel::new(&ds);
        assert!(null.censoring_curve(1).is_complete());
        let labels = [1, 0, 0, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rep = impute_replicate(&ds, &labels, &null, &mut rng).unwrap();
        assert_eq!((rep.times()[0], rep.events()[0]), (1.0, true));
    }

    #[test]
    fn group_without_censoring_never_censors() {
        let ds = SurvivalDataset::from_labeled([
            (1.0, true, "a"),
            (5.0, true, "a"),
            (2.0, true, "b"),
            (3.0, false, "b"),
        ])
        .unwrap();
        let null = NullModel::new(&ds);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(null.draw_censoring(0, &mut rng), f64::INFINITY);
    }

    #[test]
    fn synthetic_tail_forces_censoring() {
        // the censored record at 6 lies beyond every failure: its conditional
        // curve is empty, so the draw is always synthetic
        let ds = SurvivalDataset::from_labeled([
            (1.0, true, "a"),
            (2.0, true, "a"),
            (3.0, true, "b"),
            (6.0, false, "b"),
        ])
        .unwrap();
        let null = NullModel::new(&ds);
        let labels = [0, 1, 1, 0];
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rep = impute_replicate(&ds, &labels, &null, &mut rng).unwrap();
            assert!(!rep.events()[3]);
            assert_eq!(rep.times()[3], 3.0 + tail_epsilon(6.0));
        }
    }

    #[test]
    fn constant_statistic_gives_one() {
        let ds = small();
        let stat = FnStatistic::new(1, |_| vec![Some(2.5)]);
        let plan = PermutationPlan {
            imputations: 2,
            permutations: 50,
            seed: 4,
            rule: PValueRule::Proportion,
        };
        let out = permutation_test(&ds, &stat, &plan).unwrap();
        assert_eq!(out[0].pvalue, 1.0);
        assert_eq!(out[0].replicates, 100);
    }

    #[test]
    fn degenerate_observed() {
        let ds = small();
        let stat = FnStatistic::new(1, |_| vec![None]);
        let out = permutation_test(&ds, &stat, &PermutationPlan::simulation(1)).unwrap();
        assert!(out[0].degenerate);
        assert_eq!(out[0].pvalue, 1.0);
    }

    #[test]
    fn add_one_rule() {
        assert_eq!(PValueRule::AddOne.pvalue(0, 99), 0.01);
        assert_eq!(PValueRule::Proportion.pvalue(5, 100), 0.05);
    }

    #[test]
    fn early_exit_matches_full_run() {
        let ds = small();
        let stat = KonpStatistic {
            which: StatisticSet::BOTH,
        };
        for seed in 0..5 {
            let plan = PermutationPlan {
                imputations: 1,
                permutations: 300,
                seed,
                rule: PValueRule::Proportion,
            };
            let full = permutation_test(&ds, &stat, &plan).unwrap();
            for alpha in [0.05, 0.5, 0.9] {
                let quick = permutation_rejections(&ds, &stat, &plan, alpha).unwrap();
                let want: Vec<bool> = full.iter().map(|o| o.pvalue <= alpha).collect();
                assert_eq!(quick, want);
            }
        }
    }

    #[test]
    fn cauchy_examples() {
        assert!((cauchy_combination(&[0.5, 0.5, 0.5], 1e-4) - 0.5).abs() < 1e-12);
        for p in [0.01, 0.05, 0.5, 0.9] {
            assert!((cauchy_combination(&[p, p, p], 1e-6) - p).abs() < 1e-12);
        }
        let c = cauchy_combination(&[0.0109, 0.0108, 0.6350], 1e-5);
        assert!((c - 0.0164).abs() < 5e-4, "{c}");
        assert!(cauchy_combination(&[0.0, 0.0], 1e-3) > 0.0);
    }
}
