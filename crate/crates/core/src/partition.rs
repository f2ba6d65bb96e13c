//! KONP sample-space partition statistics.
//!
//! Every ordered pair of observed failure times `(i, j)` with `i` in group
//! `k` defines the interval `[a, b]` of points no farther from `T_i` than
//! `T_j` is. The pair yields a 2x2 table (in/out of the interval by group
//! `k`/other groups) whose cells are Kaplan–Meier weighted counts. `Q` is the
//! mean of the per-table Pearson or likelihood-ratio statistic over all
//! tables whose interval stays within the truncation bound `tau_k`.

use serde::Serialize;

use crate::dataset::SampleView;
use crate::km::KmCurve;

/// A margin at or below this value makes the table statistic zero.
pub const ZERO_MARGIN: f64 = 1e-12;

/// Per-group usable range of the Kaplan–Meier curves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationBounds {
    pub gamma: Vec<f64>,
    pub gamma_minus: Vec<f64>,
    pub tau: Vec<f64>,
    /// `false` for groups without any observed failure (`gamma = 0`).
    pub usable: Vec<bool>,
}

impl TruncationBounds {
    /// `max_time[k]`, `max_event[k]` per group and the pooled min/max time.
    fn from_extremes(max_time: &[f64], max_event: &[Option<f64>], t_min: f64, t_max: f64) -> Self {
        let k = max_time.len();
        let full_range = 2.0 * t_max - t_min;
        let gamma: Vec<f64> = (0..k)
            .map(|g| match max_event[g] {
                Some(e) if e == max_time[g] => full_range,
                Some(e) => e,
                None => 0.0,
            })
            .collect();
        let gamma_minus: Vec<f64> = (0..k)
            .map(|g| {
                (0..k)
                    .filter(|&m| m != g)
                    .map(|m| gamma[m])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let tau = (0..k).map(|g| gamma[g].min(gamma_minus[g])).collect();
        let usable = max_event.iter().map(Option::is_some).collect();
        Self {
            gamma,
            gamma_minus,
            tau,
            usable,
        }
    }
}

pub fn truncation_bounds(view: &SampleView<'_>) -> TruncationBounds {
    let k = view.n_groups;
    let mut max_time = vec![f64::NEG_INFINITY; k];
    let mut max_event: Vec<Option<f64>> = vec![None; k];
    let (mut t_min, mut t_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for ((&t, &e), &g) in view.times.iter().zip(view.events).zip(view.groups) {
        max_time[g] = max_time[g].max(t);
        if e {
            max_event[g] = Some(max_event[g].map_or(t, |m| m.max(t)));
        }
        t_min = t_min.min(t);
        t_max = t_max.max(t);
    }
    TruncationBounds::from_extremes(&max_time, &max_event, t_min, t_max)
}

/// One 2x2 table. Rows: inside / outside the interval; columns: group of
/// `i` / all other included groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartitionTable {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    /// Number of records in the groups whose curves reach `b`.
    pub n_included: usize,
    pub pair: (usize, usize),
}

impl PartitionTable {
    /// Cells with tiny negative values clamped to zero.
    pub fn clamped(&self) -> [f64; 4] {
        [self.a11.max(0.0), self.a12.max(0.0), self.a21.max(0.0), self.a22.max(0.0)]
    }

    pub fn total(&self) -> f64 {
        self.a11 + self.a12 + self.a21 + self.a22
    }
}

/// Pearson chi-square of a table.
pub fn pearson(table: &PartitionTable) -> f64 {
    let [a11, a12, a21, a22] = table.clamped();
    pearson_cells(a11, a12, a21, a22)
}

/// Log-likelihood-ratio (G) statistic of a table.
pub fn likelihood_ratio(table: &PartitionTable) -> f64 {
    let [a11, a12, a21, a22] = table.clamped();
    lr_cells(a11, a12, a21, a22)
}

#[inline]
fn pearson_cells(a11: f64, a12: f64, a21: f64, a22: f64) -> f64 {
    let (r1, r2, c1, c2) = (a11 + a12, a21 + a22, a11 + a21, a12 + a22);
    if r1 <= ZERO_MARGIN || r2 <= ZERO_MARGIN || c1 <= ZERO_MARGIN || c2 <= ZERO_MARGIN {
        return 0.0;
    }
    let cross = a12 * a21 - a11 * a22;
    (r1 + r2) * cross * cross / (r1 * r2 * c1 * c2)
}

#[inline]
fn lr_cells(a11: f64, a12: f64, a21: f64, a22: f64) -> f64 {
    let (r1, r2, c1, c2) = (a11 + a12, a21 + a22, a11 + a21, a12 + a22);
    if r1 <= ZERO_MARGIN || r2 <= ZERO_MARGIN || c1 <= ZERO_MARGIN || c2 <= ZERO_MARGIN {
        return 0.0;
    }
    let total = r1 + r2;
    #[inline]
    fn term(a: f64, expected_denominator: f64, total: f64) -> f64 {
        if a > 0.0 {
            a * (total * a / expected_denominator).ln()
        } else {
            0.0
        }
    }
    let s = term(a11, r1 * c1, total)
        + term(a12, r1 * c2, total)
        + term(a21, r2 * c1, total)
        + term(a22, r2 * c2, total);
    // rounding can leave a tiny negative on exactly independent tables
    (2.0 * s).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatisticSet {
    pub pearson: bool,
    pub likelihood_ratio: bool,
}

impl StatisticSet {
    pub const BOTH: Self = Self {
        pearson: true,
        likelihood_ratio: true,
    };
    pub const PEARSON: Self = Self {
        pearson: true,
        likelihood_ratio: false,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KonpResult {
    pub q_pearson: f64,
    pub q_lr: f64,
    pub n_tables: usize,
    /// No pair satisfied the inclusion rules; both statistics are reported as 0.
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tables: Option<Vec<PartitionTable>>,
}

/// Reference construction of the table for the event pair `(i, j)`, using
/// per-group curves and binary searches. Returns `None` when the pair is
/// excluded because `b > tau_k`.
pub fn partition_table(
    view: &SampleView<'_>,
    curves: &[KmCurve],
    bounds: &TruncationBounds,
    i: usize,
    j: usize,
) -> Option<PartitionTable> {
    assert!(i != j && view.events[i] && view.events[j], "pair must be two distinct failures");
    let (ti, tj) = (view.times[i], view.times[j]);
    let k = view.groups[i];
    let a = tj.min(2.0 * ti - tj);
    let b = tj.max(2.0 * ti - tj);
    if b > bounds.tau[k] {
        return None;
    }
    let counts = view.group_counts();
    let same = view.groups[j] == k;
    let j_included = bounds.gamma[view.groups[j]] >= b;
    let inside = |m: usize| curves[m].count_le(b) - curves[m].count_lt(a);

    let a11 = inside(k) - 1.0 - same as u8 as f64;
    let (mut out_inside, mut out_n) = (0.0, 0usize);
    for m in (0..view.n_groups).filter(|&m| m != k && bounds.gamma[m] >= b) {
        out_inside += inside(m);
        out_n += counts[m];
    }
    let j_out = (!same && j_included) as u8 as f64;
    let a12 = out_inside - j_out;
    let a21 = counts[k] as f64 - a11 - 1.0 - same as u8 as f64;
    let a22 = out_n as f64 - a12 - j_out;
    Some(PartitionTable {
        a11,
        a12,
        a21,
        a22,
        n_included: counts[k] + out_n,
        pair: (i, j),
    })
}

/// Reusable buffers for repeated evaluation of the statistic (one per worker).
///
/// All failures are pooled in time order. For every prefix of that list,
/// `prefix[s·K + g]` holds group `g`'s Kaplan–Meier count `n_g·F_g` over the
/// first `s` failures, so the count inside any interval whose ends fall on
/// tie-block boundaries is a difference of two rows.
#[derive(Debug, Default, Clone)]
pub struct KonpWorkspace {
    order: Vec<usize>,
    weight: Vec<f64>,
    at_risk: Vec<usize>,
    d: Vec<usize>,
    c: Vec<usize>,
    counts: Vec<usize>,
    max_time: Vec<f64>,
    max_event: Vec<Option<f64>>,
    ev_time: Vec<f64>,
    ev_group: Vec<usize>,
    ev_index: Vec<usize>,
    block_start: Vec<usize>,
    block_end: Vec<usize>,
    prefix: Vec<f64>,
    prefix_total: Vec<f64>,
}

impl KonpWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn reset(&mut self, k: usize) {
        for v in [&mut self.at_risk, &mut self.d, &mut self.c, &mut self.counts] {
            v.clear();
            v.resize(k, 0);
        }
        self.weight.clear();
        self.weight.resize(k, 1.0);
        self.max_time.clear();
        self.max_time.resize(k, f64::NEG_INFINITY);
        self.max_event.clear();
        self.max_event.resize(k, None);
        for v in [&mut self.ev_group, &mut self.ev_index, &mut self.block_start, &mut self.block_end] {
            v.clear();
        }
        self.ev_time.clear();
        self.prefix.clear();
        self.prefix.resize(k, 0.0);
        self.prefix_total.clear();
        self.prefix_total.push(0.0);
    }

    /// Sort once and accumulate every group's Kaplan–Meier counts in one pass.
    fn prepare(&mut self, view: &SampleView<'_>) {
        let k = view.n_groups;
        self.reset(k);
        let times = view.times;
        self.order.clear();
        self.order.extend(0..times.len());
        self.order.sort_unstable_by(|&a, &b| times[a].total_cmp(&times[b]));

        for &g in view.groups {
            self.counts[g] += 1;
        }
        self.at_risk.copy_from_slice(&self.counts);

        let n = self.order.len();
        let mut start = 0;
        while start < n {
            let t = times[self.order[start]];
            let first_event = self.ev_time.len();
            let mut end = start;
            while end < n && times[self.order[end]] == t {
                let r = self.order[end];
                let g = view.groups[r];
                if view.events[r] {
                    self.d[g] += 1;
                    let row = self.prefix.len() - k;
                    self.prefix.extend_from_within(row..row + k);
                    let last = self.prefix.len() - k + g;
                    self.prefix[last] += self.weight[g];
                    let total = *self.prefix_total.last().unwrap();
                    self.prefix_total.push(total + self.weight[g]);
                    self.ev_time.push(t);
                    self.ev_group.push(g);
                    self.ev_index.push(r);
                } else {
                    self.c[g] += 1;
                }
                end += 1;
            }
            let last_event = self.ev_time.len();
            for _ in first_event..last_event {
                self.block_start.push(first_event);
                self.block_end.push(last_event);
            }
            for g in 0..k {
                let (d, c) = (self.d[g], self.c[g]);
                if d == 0 && c == 0 {
                    continue;
                }
                self.max_time[g] = t;
                if d > 0 {
                    self.max_event[g] = Some(t);
                }
                let after_events = self.at_risk[g] - d;
                let remaining = after_events - c;
                if c > 0 && remaining > 0 {
                    self.weight[g] *= after_events as f64 / remaining as f64;
                }
                self.at_risk[g] = remaining;
                self.d[g] = 0;
                self.c[g] = 0;
            }
            start = end;
        }
    }

    /// Compute `Q` for the requested statistics. When `keep_tables` is set,
    /// every included table is retained in the result.
    pub fn evaluate(&mut self, view: &SampleView<'_>, which: StatisticSet, keep_tables: bool) -> KonpResult {
        self.prepare(view);
        let k = view.n_groups;
        let n = self.order.len();
        let (t_min, t_max) = match (self.order.first(), self.order.last()) {
            (Some(&f), Some(&l)) => (view.times[f], view.times[l]),
            _ => (0.0, 0.0),
        };
        let bounds = TruncationBounds::from_extremes(&self.max_time, &self.max_event, t_min, t_max);
        let gamma_min = bounds.gamma.iter().copied().fold(f64::INFINITY, f64::min);

        let mut tables = keep_tables.then(Vec::new);
        let (mut sum_p, mut sum_lr) = (0.0, 0.0);
        let mut n_tables = 0usize;
        let n_events = self.ev_time.len();
        let ev_time = &self.ev_time[..];
        let prefix = &self.prefix[..];
        let prefix_total = &self.prefix_total[..];

        // one table from prefix bounds [lo, hi) for the pair (p, q)
        let mut visit = |p: usize, q: usize, lo: usize, hi: usize, b: f64| {
            let gi = self.ev_group[p];
            let gj = self.ev_group[q];
            let same = gj == gi;
            let own = prefix[hi * k + gi] - prefix[lo * k + gi];
            let (out_inside, out_n, j_out) = if b <= gamma_min {
                let all = prefix_total[hi] - prefix_total[lo];
                (all - own, n - self.counts[gi], (!same) as u8 as f64)
            } else {
                let (mut inside, mut total) = (0.0, 0usize);
                for g in 0..k {
                    if g != gi && bounds.gamma[g] >= b {
                        inside += prefix[hi * k + g] - prefix[lo * k + g];
                        total += self.counts[g];
                    }
                }
                (inside, total, (!same && bounds.gamma[gj] >= b) as u8 as f64)
            };
            let drop_own = 1.0 + same as u8 as f64;
            let a11 = own - drop_own;
            let a12 = out_inside - j_out;
            let a21 = self.counts[gi] as f64 - a11 - drop_own;
            let a22 = out_n as f64 - a12 - j_out;
            let (c11, c12, c21, c22) = (a11.max(0.0), a12.max(0.0), a21.max(0.0), a22.max(0.0));
            if which.pearson {
                sum_p += pearson_cells(c11, c12, c21, c22);
            }
            if which.likelihood_ratio {
                sum_lr += lr_cells(c11, c12, c21, c22);
            }
            n_tables += 1;
            if let Some(t) = tables.as_mut() {
                t.push(PartitionTable {
                    a11,
                    a12,
                    a21,
                    a22,
                    n_included: self.counts[gi] + out_n,
                    pair: (self.ev_index[p], self.ev_index[q]),
                });
            }
        };

        for p in 0..n_events {
            let ti = ev_time[p];
            let tau = bounds.tau[self.ev_group[p]];
            if ti > tau {
                continue;
            }
            // upward: b = T_j, the reflected end a = 2T_i - T_j moves down
            let mut lo = p;
            for q in p + 1..n_events {
                let b = ev_time[q];
                if b > tau {
                    break;
                }
                let a = 2.0 * ti - b;
                while lo > 0 && ev_time[lo - 1] >= a {
                    lo -= 1;
                }
                visit(p, q, lo, self.block_end[q], b);
            }
            // downward: a = T_j, the reflected end b = 2T_i - T_j moves up
            let mut hi = p + 1;
            for q in (0..p).rev() {
                let b = 2.0 * ti - ev_time[q];
                if b > tau {
                    break;
                }
                while hi < n_events && ev_time[hi] <= b {
                    hi += 1;
                }
                visit(p, q, self.block_start[q], hi, b);
            }
        }
        debug_assert!(tables.as_ref().map_or(true, |t| t.len() == n_tables));

        let degenerate = n_tables == 0;
        let scale = if degenerate { 0.0 } else { 1.0 / n_tables as f64 };
        KonpResult {
            q_pearson: sum_p * scale,
            q_lr: sum_lr * scale,
            n_tables,
            degenerate,
            tables,
        }
    }
}

/// Both KONP statistics of a sample.
pub fn konp_statistic(view: &SampleView<'_>) -> KonpResult {
    KonpWorkspace::new().evaluate(view, StatisticSet::BOTH, false)
}

/// As [`konp_statistic`], also returning every included table.
pub fn konp_statistic_detailed(view: &SampleView<'_>) -> KonpResult {
    KonpWorkspace::new().evaluate(view, StatisticSet::BOTH, true)
}

/// Per-group Kaplan–Meier curves of a sample.
pub fn group_curves(view: &SampleView<'_>) -> Vec<KmCurve> {
    (0..view.n_groups)
        .map(|g| {
            let (t, e): (Vec<f64>, Vec<bool>) = view
                .times
                .iter()
                .zip(view.events)
                .zip(view.groups)
                .filter(|(_, &gg)| gg == g)
                .map(|((&t, &e), _)| (t, e))
                .unzip();
            KmCurve::fit(&t, &e)
        })
        .collect()
}
