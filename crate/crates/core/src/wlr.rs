//! Weighted logrank comparators and the weighted Kaplan–Meier statistic.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::SampleView;
use crate::error::{Error, Result};
use crate::mvn::{self, mvn_rectangle};
use crate::normal;
use crate::permute::ReplicateStatistic;

/// `(rho, gamma)` of the four members combined by MaxCombo.
pub const FAMILY: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)];

/// Which value of the pooled Kaplan–Meier curve enters the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightConvention {
    /// `S(t-)`, the value just before the event time.
    #[default]
    LeftLimit,
    /// `S(t)`, the value after the event time.
    RightContinuous,
}

/// Pooled risk-set summary at one distinct failure time.
#[derive(Debug, Clone)]
struct EventRow {
    s_left: f64,
    s_right: f64,
    at_risk: Vec<f64>,
    deaths: Vec<f64>,
}

impl EventRow {
    fn total_at_risk(&self) -> f64 {
        self.at_risk.iter().sum()
    }

    fn total_deaths(&self) -> f64 {
        self.deaths.iter().sum()
    }

    fn survival(&self, convention: WeightConvention) -> f64 {
        match convention {
            WeightConvention::LeftLimit => self.s_left,
            WeightConvention::RightContinuous => self.s_right,
        }
    }

    /// `(D/Y)(1 − (D − 1)/Y)`, shared by every variance below.
    fn tie_factor(&self) -> f64 {
        let (y, d) = (self.total_at_risk(), self.total_deaths());
        d / y * (1.0 - (d - 1.0) / y)
    }
}

fn event_rows(view: &SampleView<'_>) -> Vec<EventRow> {
    let k = view.n_groups;
    let mut order: Vec<usize> = (0..view.len()).collect();
    order.sort_unstable_by(|&a, &b| view.times[a].total_cmp(&view.times[b]));
    let mut at_risk = vec![0.0; k];
    for &g in view.groups {
        at_risk[g] += 1.0;
    }
    let mut rows = Vec::new();
    let mut s = 1.0;
    let mut start = 0;
    while start < order.len() {
        let t = view.times[order[start]];
        let mut deaths = vec![0.0; k];
        let mut leaving = vec![0.0; k];
        let mut end = start;
        while end < order.len() && view.times[order[end]] == t {
            let r = order[end];
            leaving[view.groups[r]] += 1.0;
            if view.events[r] {
                deaths[view.groups[r]] += 1.0;
            }
            end += 1;
        }
        let d: f64 = deaths.iter().sum();
        if d > 0.0 {
            let y: f64 = at_risk.iter().sum();
            let s_left = s;
            s *= 1.0 - d / y;
            rows.push(EventRow {
                s_left,
                s_right: s,
                at_risk: at_risk.clone(),
                deaths,
            });
        }
        for (a, l) in at_risk.iter_mut().zip(&leaving) {
            *a -= l;
        }
        start = end;
    }
    rows
}

fn weight(s: f64, rho: f64, gamma: f64) -> f64 {
    s.powf(rho) * (1.0 - s).powf(gamma)
}

fn require_two(view: &SampleView<'_>, method: &'static str) -> Result<()> {
    if view.n_groups != 2 {
        return Err(Error::RequiresTwoGroups {
            method,
            groups: view.n_groups,
        });
    }
    Ok(())
}

/// All four weighted statistics with their joint covariance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WlrStatistic {
    pub g: [f64; 4],
    pub sigma: [[f64; 4]; 4],
    pub z: [f64; 4],
}

impl WlrStatistic {
    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(4, 4, |i, j| self.sigma[i][j])
    }
}

fn wlr_terms(
    rows: &[EventRow],
    n1: f64,
    n2: f64,
    weights: &[(f64, f64)],
    convention: WeightConvention,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let m = weights.len();
    let mut g = vec![0.0; m];
    let mut sigma = vec![vec![0.0; m]; m];
    let mut w = vec![0.0; m];
    for row in rows {
        let s = row.survival(convention);
        for (wi, &(rho, gamma)) in w.iter_mut().zip(weights) {
            *wi = weight(s, rho, gamma);
        }
        let (y1, y2) = (row.at_risk[0], row.at_risk[1]);
        let (d1, d2) = (row.deaths[0], row.deaths[1]);
        let y = y1 + y2;
        let diff = (y2 * d1 - y1 * d2) / y;
        let v = y1 * y2 / y * row.tie_factor();
        for l in 0..m {
            g[l] += w[l] * diff;
            for k in 0..m {
                sigma[l][k] += w[l] * w[k] * v;
            }
        }
    }
    let f = (n1 + n2) / (n1 * n2);
    for l in 0..m {
        g[l] *= f.sqrt();
        for k in 0..m {
            sigma[l][k] *= f;
        }
    }
    (g, sigma)
}

fn two_group_sizes(view: &SampleView<'_>) -> (f64, f64) {
    let c = view.group_counts();
    (c[0] as f64, c[1] as f64)
}

/// `G^{rho,gamma}` and its variance estimate.
pub fn weighted_logrank(view: &SampleView<'_>, rho: f64, gamma: f64) -> Result<(f64, f64)> {
    require_two(view, "weighted logrank")?;
    let (n1, n2) = two_group_sizes(view);
    let (g, s) = wlr_terms(&event_rows(view), n1, n2, &[(rho, gamma)], WeightConvention::LeftLimit);
    Ok((g[0], s[0][0]))
}

pub fn wlr_covariance(view: &SampleView<'_>) -> Result<WlrStatistic> {
    wlr_covariance_with(view, WeightConvention::LeftLimit)
}

pub fn wlr_covariance_with(view: &SampleView<'_>, convention: WeightConvention) -> Result<WlrStatistic> {
    require_two(view, "weighted logrank")?;
    let (n1, n2) = two_group_sizes(view);
    let (g, s) = wlr_terms(&event_rows(view), n1, n2, &FAMILY, convention);
    let mut out = WlrStatistic {
        g: [0.0; 4],
        sigma: [[0.0; 4]; 4],
        z: [0.0; 4],
    };
    for l in 0..4 {
        out.g[l] = g[l];
        out.sigma[l].copy_from_slice(&s[l]);
        out.z[l] = if s[l][l] > 0.0 { g[l] / s[l][l].sqrt() } else { 0.0 };
    }
    Ok(out)
}

/// Outcome of a test with an asymptotic reference distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticTest {
    pub statistic: f64,
    pub pvalue: f64,
    /// Monte-Carlo standard error of the p-value, when it was integrated.
    pub std_error: Option<f64>,
    pub degenerate: bool,
    pub note: Option<String>,
}

impl AsymptoticTest {
    fn degenerate(note: &str) -> Self {
        Self {
            statistic: 0.0,
            pvalue: 1.0,
            std_error: None,
            degenerate: true,
            note: Some(note.into()),
        }
    }
}

/// Two-sided test based on one `G^{rho,gamma}`.
pub fn weighted_logrank_test(view: &SampleView<'_>, rho: f64, gamma: f64) -> Result<AsymptoticTest> {
    let (g, var) = weighted_logrank(view, rho, gamma)?;
    if var <= 0.0 {
        return Ok(AsymptoticTest::degenerate("zero variance"));
    }
    let z = g / var.sqrt();
    Ok(AsymptoticTest {
        statistic: z,
        pvalue: normal::two_sided(z),
        std_error: None,
        degenerate: false,
        note: None,
    })
}

/// `1 − P(|V_i| < c for all i in idx)` under the estimated null correlation.
fn max_abs_test(
    stat: &WlrStatistic,
    idx: &[usize],
    accuracy: f64,
    seed: u64,
) -> Result<AsymptoticTest> {
    if idx.iter().any(|&i| stat.sigma[i][i] <= 0.0) {
        return Ok(AsymptoticTest::degenerate("zero variance"));
    }
    let c = idx.iter().map(|&i| stat.z[i].abs()).fold(0.0, f64::max);
    let cov = DMatrix::from_fn(idx.len(), idx.len(), |a, b| stat.sigma[idx[a]][idx[b]]);
    let corr = mvn::correlation(&cov);
    let bound = vec![c; idx.len()];
    let lower: Vec<f64> = bound.iter().map(|b| -b).collect();
    match mvn_rectangle(&corr, &lower, &bound, accuracy, seed) {
        Ok(e) => Ok(AsymptoticTest {
            statistic: c,
            pvalue: (1.0 - e.probability).clamp(0.0, 1.0),
            std_error: Some(e.std_error),
            degenerate: false,
            note: e
                .regularized
                .then(|| format!("correlation matrix singular; ridge {:e} added", mvn::RIDGE)),
        }),
        Err(Error::NotPositiveSemidefinite) => Ok(AsymptoticTest {
            statistic: c,
            pvalue: (idx.len() as f64 * normal::two_sided(c)).min(1.0),
            std_error: None,
            degenerate: false,
            note: Some("correlation matrix not factorizable; Bonferroni bound".into()),
        }),
        Err(e) => Err(e),
    }
}

/// Lee's test: `max(|Z2|, |Z3|)`.
pub fn lee_test(view: &SampleView<'_>, seed: u64) -> Result<AsymptoticTest> {
    lee_test_with(view, WeightConvention::LeftLimit, seed)
}

pub fn lee_test_with(view: &SampleView<'_>, convention: WeightConvention, seed: u64) -> Result<AsymptoticTest> {
    require_two(view, "lee")?;
    let stat = wlr_covariance_with(view, convention)?;
    let corr = stat.sigma[1][2] / (stat.sigma[1][1] * stat.sigma[2][2]).sqrt();
    if corr.abs() >= 1.0 - 1e-12 {
        let c = stat.z[1].abs().max(stat.z[2].abs());
        return Ok(AsymptoticTest {
            statistic: c,
            pvalue: (2.0 * normal::two_sided(c)).min(1.0),
            std_error: None,
            degenerate: false,
            note: Some("singular correlation; Bonferroni bound".into()),
        });
    }
    max_abs_test(&stat, &[1, 2], mvn::DEFAULT_ACCURACY, seed)
}

/// MaxCombo: `max |Z_k|` over the four family members.
pub fn maxcombo_test(view: &SampleView<'_>, seed: u64) -> Result<AsymptoticTest> {
    maxcombo_test_with(view, WeightConvention::LeftLimit, seed)
}

pub fn maxcombo_test_with(
    view: &SampleView<'_>,
    convention: WeightConvention,
    seed: u64,
) -> Result<AsymptoticTest> {
    require_two(view, "maxcombo")?;
    let stat = wlr_covariance_with(view, convention)?;
    max_abs_test(&stat, &[0, 1, 2, 3], mvn::DEFAULT_ACCURACY, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogrankWeight {
    /// Logrank.
    Unit,
    /// Peto–Peto: the left-continuous pooled Kaplan–Meier curve.
    PooledKmLeft,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub df: usize,
    pub pvalue: f64,
    pub degenerate: bool,
    pub note: Option<String>,
}

/// K-sample (weighted) logrank chi-square with hypergeometric covariance.
pub fn k_sample_logrank(view: &SampleView<'_>, weight: LogrankWeight) -> Result<ChiSquareTest> {
    let k = view.n_groups;
    if k < 2 {
        return Err(Error::TooFewGroups(k));
    }
    let mut u = DVector::<f64>::zeros(k);
    let mut v = DMatrix::<f64>::zeros(k, k);
    for row in event_rows(view) {
        let w = match weight {
            LogrankWeight::Unit => 1.0,
            LogrankWeight::PooledKmLeft => row.s_left,
        };
        let y = row.total_at_risk();
        let d = row.total_deaths();
        let factor = w * w * row.tie_factor();
        for g in 0..k {
            let share = row.at_risk[g] / y;
            u[g] += w * (row.deaths[g] - share * d);
            for h in 0..k {
                let delta = if g == h { share } else { 0.0 };
                v[(g, h)] += factor * y * (delta - share * row.at_risk[h] / y);
            }
        }
    }
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale <= 0.0 {
        return Ok(ChiSquareTest {
            statistic: 0.0,
            df: 0,
            pvalue: 1.0,
            degenerate: true,
            note: Some("zero variance".into()),
        });
    }
    let svd = v.clone().svd(true, true);
    let tol = scale * 1e-10;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let pinv = svd
        .pseudo_inverse(tol)
        .map_err(|e| Error::InvalidInput(format!("covariance pseudo-inverse failed: {e}")))?;
    let statistic = (u.transpose() * pinv * &u)[(0, 0)].max(0.0);
    let note = (rank < k - 1).then(|| format!("covariance rank {rank} below {}; df reduced", k - 1));
    Ok(ChiSquareTest {
        statistic,
        df: rank,
        pvalue: normal::chi2_sf(statistic, rank as f64),
        degenerate: false,
        note,
    })
}

/// Weighted Kaplan–Meier statistic
/// `sqrt(n1·n2/n) ∫ w(t) {S1(t) − S2(t)} dt` with
/// `w = n·G1·G2 / (n1·G1 + n2·G2)`, integrated up to the smaller of the two
/// groups' largest observed times.
pub fn pepe_fleming_statistic(view: &SampleView<'_>) -> Result<f64> {
    require_two(view, "pepe_fleming")?;
    let mut order: Vec<usize> = (0..view.len()).collect();
    order.sort_unstable_by(|&a, &b| view.times[a].total_cmp(&view.times[b]));
    Ok(pepe_fleming_sorted(view, &order))
}

fn pepe_fleming_sorted(view: &SampleView<'_>, order: &[usize]) -> f64 {
    let mut n = [0.0f64; 2];
    let mut last = [0.0f64; 2];
    for (&t, &g) in view.times.iter().zip(view.groups) {
        n[g] += 1.0;
        last[g] = last[g].max(t);
    }
    let upper = last[0].min(last[1]);
    let total = n[0] + n[1];
    let mut at_risk = n;
    let (mut s, mut cens) = ([1.0f64; 2], [1.0f64; 2]);
    let mut integral = 0.0;
    let mut prev = 0.0;
    let mut start = 0;
    while start < order.len() {
        let t = view.times[order[start]];
        if t > upper {
            break;
        }
        let denom = n[0] * cens[0] + n[1] * cens[1];
        if denom > 0.0 {
            let w = total * cens[0] * cens[1] / denom;
            integral += w * (s[0] - s[1]) * (t - prev);
        }
        prev = t;
        let (mut d, mut c) = ([0.0f64; 2], [0.0f64; 2]);
        while start < order.len() && view.times[order[start]] == t {
            let r = order[start];
            if view.events[r] {
                d[view.groups[r]] += 1.0;
            } else {
                c[view.groups[r]] += 1.0;
            }
            start += 1;
        }
        for g in 0..2 {
            if at_risk[g] > 0.0 {
                s[g] *= 1.0 - d[g] / at_risk[g];
                cens[g] *= 1.0 - c[g] / at_risk[g];
            }
            at_risk[g] -= d[g] + c[g];
        }
    }
    (n[0] * n[1] / total).sqrt() * integral
}

/// `|pepe_fleming_statistic|` on every replicate.
#[derive(Debug, Clone, Copy, Default)]
pub struct PepeFleming;

impl ReplicateStatistic for PepeFleming {
    type Scratch = Vec<usize>;

    fn arity(&self) -> usize {
        1
    }

    fn scratch(&self) -> Vec<usize> {
        Vec::new()
    }

    fn evaluate(&self, view: &SampleView<'_>, order: &mut Vec<usize>, out: &mut [Option<f64>]) {
        order.clear();
        order.extend(0..view.len());
        order.sort_unstable_by(|&a, &b| view.times[a].total_cmp(&view.times[b]));
        out[0] = Some(pepe_fleming_sorted(view, order).abs());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view<'a>(t: &'a [f64], e: &'a [bool], g: &'a [usize], k: usize) -> SampleView<'a> {
        SampleView {
            times: t,
            events: e,
            groups: g,
            n_groups: k,
        }
    }

    #[test]
    fn duplicated_groups_give_zero() {
        let t = [1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0];
        let e = [true, false, true, true, true, false, true, true];
        let g = [0, 0, 0, 0, 1, 1, 1, 1];
        let v = view(&t, &e, &g, 2);
        let w = wlr_covariance(&v).unwrap();
        assert!(w.g.iter().all(|x| x.abs() < 1e-15));
        let chi = k_sample_logrank(&v, LogrankWeight::Unit).unwrap();
        assert!(chi.statistic.abs() < 1e-15);
        assert!((chi.pvalue - 1.0).abs() < 1e-12);
        assert!(pepe_fleming_statistic(&v).unwrap().abs() < 1e-15);
        let lee = lee_test(&v, 1).unwrap();
        assert_eq!(lee.pvalue, 1.0);
        assert_eq!(maxcombo_test(&v, 1).unwrap().pvalue, 1.0);
    }

    #[test]
    fn single_event_tie_factor_is_one() {
        let row = EventRow {
            s_left: 1.0,
            s_right: 0.9,
            at_risk: vec![4.0, 6.0],
            deaths: vec![1.0, 0.0],
        };
        assert_eq!(row.tie_factor(), 1.0 / 10.0);
    }

    /// Textbook O − E and hypergeometric variance over the 2×2 at-risk tables.
    fn brute_logrank(t: &[f64], e: &[bool], g: &[usize]) -> (f64, f64) {
        let mut times: Vec<f64> = t.iter().zip(e).filter(|(_, &d)| d).map(|(&x, _)| x).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let (mut o_minus_e, mut var) = (0.0, 0.0);
        for &u in &times {
            let r1 = (0..t.len()).filter(|&i| g[i] == 0 && t[i] >= u).count() as f64;
            let r = (0..t.len()).filter(|&i| t[i] >= u).count() as f64;
            let d1 = (0..t.len()).filter(|&i| g[i] == 0 && e[i] && t[i] == u).count() as f64;
            let d = (0..t.len()).filter(|&i| e[i] && t[i] == u).count() as f64;
            o_minus_e += d1 - d * r1 / r;
            var += r1 * (r - r1) * d / (r * r) * (1.0 - (d - 1.0) / r);
        }
        (o_minus_e, var)
    }

    #[test]
    fn logrank_matches_brute_force() {
        let t = [1.0, 2.0, 2.0, 3.0, 5.0, 6.0, 2.0, 3.0, 4.0, 4.0, 7.0, 8.0];
        let e = [true, true, false, true, true, false, true, true, true, true, false, true];
        let g = [0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1];
        let v = view(&t, &e, &g, 2);
        let (ome, var) = brute_logrank(&t, &e, &g);
        let (g0, s0) = weighted_logrank(&v, 0.0, 0.0).unwrap();
        let f: f64 = 12.0 / 36.0;
        assert!((g0 - f.sqrt() * ome).abs() < 1e-12);
        assert!((s0 - f * var).abs() < 1e-12);
        let chi = k_sample_logrank(&v, LogrankWeight::Unit).unwrap();
        assert!((chi.statistic - g0 * g0 / s0).abs() < 1e-9);
        assert!((chi.pvalue - normal::two_sided(g0 / s0.sqrt())).abs() < 1e-6);
        assert_eq!(chi.df, 1);
    }

    #[test]
    fn covariance_diagonal_matches_single_statistics() {
        let t = [0.5, 1.0, 1.5, 2.0, 3.0, 0.7, 1.1, 2.2, 2.5, 4.0];
        let e = [true, true, false, true, true, true, false, true, true, true];
        let g = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let v = view(&t, &e, &g, 2);
        let w = wlr_covariance(&v).unwrap();
        for (l, &(rho, gamma)) in FAMILY.iter().enumerate() {
            let (gl, sl) = weighted_logrank(&v, rho, gamma).unwrap();
            assert!((w.g[l] - gl).abs() < 1e-14);
            assert!((w.sigma[l][l] - sl).abs() < 1e-14);
        }
        let eig = w.sigma_matrix().symmetric_eigenvalues();
        assert!(eig.iter().all(|&x| x > -1e-10));
    }

    #[test]
    fn swap_invariance() {
        let t = [0.5, 1.0, 1.5, 2.0, 3.0, 0.7, 1.1, 2.2, 2.5, 4.0, 0.2];
        let e = [true, true, false, true, true, true, false, true, true, true, true];
        let g = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 2];
        let swapped: Vec<usize> = g.iter().map(|&x| [1, 2, 0][x]).collect();
        let a = k_sample_logrank(&view(&t, &e, &g, 3), LogrankWeight::PooledKmLeft).unwrap();
        let b = k_sample_logrank(&view(&t, &e, &swapped, 3), LogrankWeight::PooledKmLeft).unwrap();
        assert!((a.statistic - b.statistic).abs() < 1e-10);
        assert_eq!(a.df, 2);

        let g2 = &g[..10];
        let s2: Vec<usize> = g2.iter().map(|&x| 1 - x).collect();
        let za = wlr_covariance(&view(&t[..10], &e[..10], g2, 2)).unwrap();
        let zb = wlr_covariance(&view(&t[..10], &e[..10], &s2, 2)).unwrap();
        for l in 0..4 {
            assert!((za.z[l] + zb.z[l]).abs() < 1e-12);
        }
    }

    #[test]
    fn pepe_fleming_without_censoring_is_integrated_difference() {
        let t = [1.0, 2.0, 4.0, 1.5, 3.0, 5.0, 6.0];
        let e = [true; 7];
        let g = [0, 0, 0, 1, 1, 1, 1];
        let v = view(&t, &e, &g, 2);
        // ∫_0^4 (S1 − S2): fine grid over the step functions
        let s = |grp: usize, x: f64| {
            let members: Vec<f64> = (0..7).filter(|&i| g[i] == grp).map(|i| t[i]).collect();
            members.iter().filter(|&&m| m > x).count() as f64 / members.len() as f64
        };
        let steps = 400_000;
        let h = 4.0 / steps as f64;
        let integral: f64 = (0..steps)
            .map(|i| {
                let x = (i as f64 + 0.5) * h;
                s(0, x) - s(1, x)
            })
            .sum::<f64>()
            * h;
        let want = (3.0f64 * 4.0 / 7.0).sqrt() * integral;
        assert!((pepe_fleming_statistic(&v).unwrap() - want).abs() < 1e-4);
    }

    #[test]
    fn comparators_need_two_groups() {
        let t = [1.0, 2.0, 3.0];
        let e = [true; 3];
        let g = [0, 1, 2];
        let v = view(&t, &e, &g, 3);
        assert!(matches!(lee_test(&v, 0), Err(Error::RequiresTwoGroups { .. })));
        assert!(maxcombo_test(&v, 0).is_err());
        assert!(pepe_fleming_statistic(&v).is_err());
    }
}
