//! Kaplan–Meier estimation and sampling from fitted jump distributions.
//!
//! The curve is accumulated with redistribution-to-the-right weights on the
//! count scale: every record starts with weight 1 and a censored record
//! hands its weight to the records still at risk after it. The cumulative
//! count `n·F(t)` is then exact for uncensored data (it is an integer), and
//! agrees with the product-limit form `1 - prod(1 - d/r)` otherwise.
//! Events tied with censorings are processed first.

use rand::Rng;

use crate::dataset::SampleView;
use crate::error::{Error, Result};

/// Relative tolerance used for "total mass equals one".
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct KmCurve {
    jump_times: Vec<f64>,
    jump_masses: Vec<f64>,
    survival_after: Vec<f64>,
    /// `n·F` just after each jump.
    cum_counts: Vec<f64>,
    n: f64,
    complete: bool,
    support_end: f64,
}

/// What [`KmCurve::sample`] returns when the draw lands in the mass the curve
/// leaves unassigned beyond its last jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailPolicy {
    None,
    Value(f64),
    ValuePlusEpsilon { value: f64, epsilon: f64 },
}

impl TailPolicy {
    fn value(self) -> Option<f64> {
        match self {
            TailPolicy::None => None,
            TailPolicy::Value(v) => Some(v),
            TailPolicy::ValuePlusEpsilon { value, epsilon } => Some(value + epsilon),
        }
    }
}

/// Epsilon added beyond the last event time for synthetic tail draws.
pub fn tail_epsilon(max_observed_time: f64) -> f64 {
    1e-9 * (1.0 + max_observed_time)
}

impl KmCurve {
    /// Product-limit estimate of the CDF of failure times.
    pub fn fit(times: &[f64], events: &[bool]) -> Self {
        assert_eq!(times.len(), events.len(), "times/events length mismatch");
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_unstable_by(|&a, &b| times[a].total_cmp(&times[b]));
        Self::fit_sorted(order.iter().map(|&i| (times[i], events[i])), times.len())
    }

    /// Fit from `(time, event)` pairs already sorted by time.
    pub(crate) fn fit_sorted<I>(sorted: I, n: usize) -> Self
    where
        I: IntoIterator<Item = (f64, bool)>,
    {
        let nf = n as f64;
        let mut jump_times = Vec::new();
        let mut cum_counts = Vec::new();
        let mut weight = 1.0;
        let mut cum = 0.0;
        let mut at_risk = n;
        let mut support_end = 0.0f64;

        let mut iter = sorted.into_iter().peekable();
        while let Some((t, e)) = iter.next() {
            let (mut d, mut c) = (e as usize, (!e) as usize);
            while let Some(&(t2, e2)) = iter.peek() {
                if t2 != t {
                    break;
                }
                if e2 {
                    d += 1;
                } else {
                    c += 1;
                }
                iter.next();
            }
            support_end = support_end.max(t);
            if d > 0 {
                cum += d as f64 * weight;
                jump_times.push(t);
                cum_counts.push(cum);
            }
            let after_events = at_risk - d;
            let remaining = after_events - c;
            if c > 0 && remaining > 0 {
                weight *= after_events as f64 / remaining as f64;
            }
            at_risk = remaining;
        }

        let mut prev = 0.0;
        let mut jump_masses = Vec::with_capacity(cum_counts.len());
        let mut survival_after = Vec::with_capacity(cum_counts.len());
        for &c in &cum_counts {
            jump_masses.push((c - prev) / nf);
            survival_after.push((1.0 - c / nf).max(0.0));
            prev = c;
        }
        let complete = n > 0 && cum >= nf * (1.0 - MASS_TOLERANCE);
        Self {
            jump_times,
            jump_masses,
            survival_after,
            cum_counts,
            n: nf,
            complete,
            support_end,
        }
    }

    /// KM of the censoring distribution of one group (roles of event and
    /// censoring reversed).
    pub fn fit_censoring(view: &SampleView<'_>, group: usize) -> Self {
        let (times, flags): (Vec<f64>, Vec<bool>) = view
            .times
            .iter()
            .zip(view.events)
            .zip(view.groups)
            .filter(|(_, &g)| g == group)
            .map(|((&t, &e), _)| (t, !e))
            .unzip();
        Self::fit(&times, &flags)
    }

    /// Pooled KM of all records with observed time strictly above `threshold`,
    /// estimating `pr(X > x | X > threshold)` under the null.
    pub fn fit_conditional(view: &SampleView<'_>, threshold: f64) -> Self {
        let (times, flags): (Vec<f64>, Vec<bool>) = view
            .times
            .iter()
            .zip(view.events)
            .filter(|(&t, _)| t > threshold)
            .map(|(&t, &e)| (t, e))
            .unzip();
        Self::fit(&times, &flags)
    }

    /// Pooled KM over every record of the view.
    pub fn fit_pooled(view: &SampleView<'_>) -> Self {
        Self::fit(view.times, view.events)
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn jump_masses(&self) -> &[f64] {
        &self.jump_masses
    }

    pub fn survival_after(&self) -> &[f64] {
        &self.survival_after
    }

    /// `n·F` just after each jump.
    pub fn cumulative_counts(&self) -> &[f64] {
        &self.cum_counts
    }

    pub fn sample_size(&self) -> f64 {
        self.n
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn support_end(&self) -> f64 {
        self.support_end
    }

    pub fn n_jumps(&self) -> usize {
        self.jump_times.len()
    }

    pub fn total_mass(&self) -> f64 {
        match self.cum_counts.last() {
            Some(&c) => c / self.n,
            None => 0.0,
        }
    }

    fn count_at(&self, idx: usize) -> f64 {
        if idx == 0 {
            0.0
        } else {
            self.cum_counts[idx - 1]
        }
    }

    /// `n·F(t)`, exact for uncensored samples.
    pub fn count_le(&self, t: f64) -> f64 {
        self.count_at(self.jump_times.partition_point(|&x| x <= t))
    }

    /// `n·F(t-)`.
    pub fn count_lt(&self, t: f64) -> f64 {
        self.count_at(self.jump_times.partition_point(|&x| x < t))
    }

    /// Right-continuous `F(t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        if self.n == 0.0 {
            return 0.0;
        }
        self.count_le(t) / self.n
    }

    /// Left limit `F(t-)`.
    pub fn cdf_left(&self, t: f64) -> f64 {
        if self.n == 0.0 {
            return 0.0;
        }
        self.count_lt(t) / self.n
    }

    pub fn survival(&self, t: f64) -> f64 {
        1.0 - self.cdf(t)
    }

    pub fn survival_left(&self, t: f64) -> f64 {
        1.0 - self.cdf_left(t)
    }

    /// Draw a time with probability equal to its jump mass; the unassigned
    /// mass returns the policy's tail value with `synthetic_tail = true`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, policy: TailPolicy) -> Result<(f64, bool)> {
        let u: f64 = rng.random::<f64>() * self.n;
        let idx = self.cum_counts.partition_point(|&c| c <= u);
        if idx < self.cum_counts.len() {
            return Ok((self.jump_times[idx], false));
        }
        if let Some(v) = policy.value() {
            if !self.complete {
                return Ok((v, true));
            }
        }
        match self.jump_times.last() {
            // only reachable through rounding in the last cumulative count
            Some(&t) if self.complete => Ok((t, false)),
            _ => Err(Error::InvalidInput(
                "cannot sample an incomplete Kaplan-Meier curve without a tail value".into(),
            )),
        }
    }
}
