//! Right-censored K-sample survival data.
//!
//! A dataset is stored column-wise (times, event flags, group indices) so the
//! statistics and the permutation engine can borrow plain slices through
//! [`SampleView`]. Group indices follow the order in which labels first
//! appear in the input; the labels themselves are kept verbatim.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalRecord {
    pub time: f64,
    /// `true` for an observed failure, `false` for a censored time.
    pub event: bool,
    pub group: usize,
}

/// Borrowed column view used by every statistic.
#[derive(Debug, Clone, Copy)]
pub struct SampleView<'a> {
    pub times: &'a [f64],
    pub events: &'a [bool],
    pub groups: &'a [usize],
    pub n_groups: usize,
}

impl SampleView<'_> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn group_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_groups];
        for &g in self.groups {
            counts[g] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    times: Vec<f64>,
    events: Vec<bool>,
    groups: Vec<usize>,
    labels: Vec<String>,
    counts: Vec<usize>,
}

/// Column names used when reading and writing CSV files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub time: String,
    pub status: String,
    pub group: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            time: "time".into(),
            status: "status".into(),
            group: "group".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub n: usize,
    pub events: usize,
    pub censoring_rate: f64,
    pub max_event_time: Option<f64>,
    pub max_time: f64,
}

impl SurvivalDataset {
    /// Build a dataset from columns with group indices in `0..labels.len()`.
    pub fn new(
        times: Vec<f64>,
        events: Vec<bool>,
        groups: Vec<usize>,
        labels: Vec<String>,
    ) -> Result<Self> {
        if times.len() != events.len() || times.len() != groups.len() {
            return Err(Error::InvalidInput(format!(
                "column lengths differ: {} times, {} events, {} groups",
                times.len(),
                events.len(),
                groups.len()
            )));
        }
        if times.is_empty() {
            return Err(Error::Empty);
        }
        for (i, &t) in times.iter().enumerate() {
            let line = i as u64 + 1;
            if !t.is_finite() {
                return Err(Error::NonFiniteTime { line, value: t });
            }
            if t < 0.0 {
                return Err(Error::NegativeTime { line, value: t });
            }
        }
        let mut counts = vec![0usize; labels.len()];
        for &g in &groups {
            if g >= labels.len() {
                return Err(Error::InvalidInput(format!(
                    "group index {g} out of range for {} labels",
                    labels.len()
                )));
            }
            counts[g] += 1;
        }
        let present = counts.iter().filter(|&&c| c > 0).count();
        if present < 2 {
            return Err(Error::TooFewGroups(present));
        }
        if present != labels.len() {
            return Err(Error::InvalidInput("every label needs at least one record".into()));
        }
        if !events.iter().any(|&e| e) {
            return Err(Error::NoEvents);
        }
        Ok(Self {
            times,
            events,
            groups,
            labels,
            counts,
        })
    }

    /// Build a dataset from labelled records, assigning group indices in
    /// order of first appearance.
    pub fn from_labeled<S, I>(records: I) -> Result<Self>
    where
        S: AsRef<str>,
        I: IntoIterator<Item = (f64, bool, S)>,
    {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut labels = Vec::new();
        let (mut times, mut events, mut groups) = (Vec::new(), Vec::new(), Vec::new());
        for (t, e, label) in records {
            let label = label.as_ref();
            let g = match index.get(label) {
                Some(&g) => g,
                None => {
                    labels.push(label.to_string());
                    index.insert(label.to_string(), labels.len() - 1);
                    labels.len() - 1
                }
            };
            times.push(t);
            events.push(e);
            groups.push(g);
        }
        Self::new(times, events, groups, labels)
    }

    /// Replicate datasets produced by the permutation engine skip validation:
    /// their group sizes are inherited and an all-censored replicate is legal.
    pub(crate) fn from_parts_unchecked(
        times: Vec<f64>,
        events: Vec<bool>,
        groups: Vec<usize>,
        labels: Vec<String>,
        counts: Vec<usize>,
    ) -> Self {
        Self {
            times,
            events,
            groups,
            labels,
            counts,
        }
    }

    pub fn view(&self) -> SampleView<'_> {
        SampleView {
            times: &self.times,
            events: &self.events,
            groups: &self.groups,
            n_groups: self.labels.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_groups(&self) -> usize {
        self.labels.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn group_counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn record(&self, i: usize) -> SurvivalRecord {
        SurvivalRecord {
            time: self.times[i],
            event: self.events[i],
            group: self.groups[i],
        }
    }

    pub fn records(&self) -> impl Iterator<Item = SurvivalRecord> + '_ {
        (0..self.len()).map(move |i| self.record(i))
    }

    /// Same records with group labels renamed through `rename`; indices are kept.
    pub fn relabeled<F: Fn(&str) -> String>(&self, rename: F) -> Self {
        let mut out = self.clone();
        out.labels = self.labels.iter().map(|l| rename(l)).collect();
        out
    }

    pub fn summarize(&self) -> Vec<GroupSummary> {
        let k = self.n_groups();
        let mut events = vec![0usize; k];
        let mut max_event: Vec<Option<f64>> = vec![None; k];
        let mut max_time = vec![0.0f64; k];
        for r in self.records() {
            max_time[r.group] = max_time[r.group].max(r.time);
            if r.event {
                events[r.group] += 1;
                max_event[r.group] = Some(max_event[r.group].map_or(r.time, |m| m.max(r.time)));
            }
        }
        (0..k)
            .map(|g| GroupSummary {
                label: self.labels[g].clone(),
                n: self.counts[g],
                events: events[g],
                censoring_rate: (self.counts[g] - events[g]) as f64 / self.counts[g] as f64,
                max_event_time: max_event[g],
                max_time: max_time[g],
            })
            .collect()
    }

    pub fn load_csv<P: AsRef<Path>>(path: P, schema: &CsvSchema) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file, schema)
    }

    pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let column = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (ti, si, gi) = (column(&schema.time)?, column(&schema.status)?, column(&schema.group)?);

        let mut rows = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            // header is line 1
            let line = row.position().map_or(i as u64 + 2, |p| p.line());
            let raw_time = row.get(ti).unwrap_or("");
            let time: f64 = raw_time.parse().map_err(|_| Error::NonNumericTime {
                line,
                value: raw_time.to_string(),
            })?;
            if !time.is_finite() {
                return Err(Error::NonFiniteTime { line, value: time });
            }
            if time < 0.0 {
                return Err(Error::NegativeTime { line, value: time });
            }
            let event = match row.get(si).unwrap_or("") {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::InvalidStatus {
                        line,
                        value: other.to_string(),
                    })
                }
            };
            rows.push((time, event, row.get(gi).unwrap_or("").to_string()));
        }
        if rows.is_empty() {
            return Err(Error::Empty);
        }
        Self::from_labeled(rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W, schema: &CsvSchema) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([&schema.time, &schema.status, &schema.group])?;
        for r in self.records() {
            wtr.write_record([
                format_time(r.time),
                if r.event { "1" } else { "0" }.to_string(),
                self.labels[r.group].clone(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same `f64`.
fn format_time(t: f64) -> String {
    format!("{t:?}")
        .strip_suffix(".0")
        .map(str::to_string)
        .unwrap_or_else(|| format!("{t:?}"))
}
