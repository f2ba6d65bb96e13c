//! Report documents and their table / CSV / JSON renderings.
//!
//! Every document starts with a header carrying the tool version, the seed,
//! the permutation plan and the method list. Tables show 4 significant
//! digits, CSV and JSON carry full precision. CSV output puts the header on
//! leading `#` comment lines.

use konp::simgen::{PowerRow, ScenarioFamily};
use konp::{GroupSummary, Method, PermutationPlan, TestReport};
use serde::{Deserialize, Serialize};

use crate::args::Format;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub plan: PermutationPlan,
    pub methods: Vec<Method>,
    pub threads: usize,
}

impl Header {
    pub fn new(command: &str, plan: PermutationPlan, methods: &[Method]) -> Self {
        Self {
            tool: "konp".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: plan.seed,
            plan,
            methods: methods.to_vec(),
            threads: rayon::current_num_threads(),
        }
    }

    fn lines(&self) -> Vec<String> {
        let methods: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        vec![
            format!("{} {} {}", self.tool, self.version, self.command),
            format!(
                "seed {}, imputations {}, permutations {}, p-value rule {}, threads {}",
                self.seed,
                self.plan.imputations,
                self.plan.permutations,
                rule_name(&self.plan),
                self.threads
            ),
            format!("methods {}", methods.join(",")),
        ]
    }
}

fn rule_name(plan: &PermutationPlan) -> String {
    serde_json::to_value(plan.rule)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    #[serde(flatten)]
    pub report: TestReport,
    /// Wall-clock seconds of the whole run (methods share one permutation pool).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub runtime_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestDocument {
    #[serde(flatten)]
    pub header: Header,
    pub input: String,
    pub groups: Vec<GroupSummary>,
    pub warnings: Vec<String>,
    pub results: Vec<TestRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateDocument {
    #[serde(flatten)]
    pub header: Header,
    pub alpha: f64,
    pub replications: usize,
    pub early_exit: bool,
    pub scenario: ScenarioFamily,
    pub results: Vec<PowerRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub n: usize,
    pub variant: String,
    pub censoring_group1: f64,
    pub censoring_group2: f64,
    pub seconds: f64,
    pub seconds_per_replicate: f64,
    /// Reference single-thread time for the same setting, where one exists.
    pub reference_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkDocument {
    #[serde(flatten)]
    pub header: Header,
    pub scenario: String,
    pub results: Vec<BenchmarkRow>,
}

/// `x` with 4 significant digits.
pub fn sig4(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-4..=6).contains(&magnitude) {
        format!("{:.*}", (3 - magnitude).max(0) as usize, x)
    } else {
        format!("{x:.3e}")
    }
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn aligned(header: &[String], headings: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = headings.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out: String = header.iter().map(|l| format!("# {l}\n")).collect();
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    out += &line(headings.to_vec());
    for row in rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

fn csv_text(header: &[String], headings: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(headings).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
    header.iter().map(|l| format!("# {l}\n")).collect::<String>() + &body
}

fn json_text<T: Serialize>(doc: &T) -> String {
    serde_json::to_string_pretty(doc).expect("report serializes") + "\n"
}

/// A number for the requested format: 4 significant digits in tables.
fn num(x: f64, format: Format) -> String {
    match format {
        Format::Table => sig4(x),
        _ => x.to_string(),
    }
}

fn render(format: Format, header: &[String], headings: &[&str], rows: &[Vec<String>]) -> String {
    match format {
        Format::Csv => csv_text(header, headings, rows),
        _ => aligned(header, headings, rows),
    }
}

impl TestDocument {
    pub fn render(&self, format: Format) -> String {
        if format == Format::Json {
            return json_text(self);
        }
        let mut header = self.header.lines();
        header.push(format!("input {}", self.input));
        for g in &self.groups {
            header.push(format!(
                "group {}: n {}, events {}, censored {:.1}%",
                g.label,
                g.n,
                g.events,
                100.0 * g.censoring_rate
            ));
        }
        header.extend(self.warnings.iter().map(|w| format!("warning: {w}")));
        let timed = self.results.iter().any(|r| r.runtime_seconds.is_some());
        let mut headings = vec!["method", "statistic", "pvalue", "replicates", "seed", "df", "std_error", "degenerate", "note"];
        if timed {
            headings.push("runtime_seconds");
        }
        let rows: Vec<Vec<String>> = self
            .results
            .iter()
            .map(|row| {
                let r = &row.report;
                let mut cells = vec![
                    r.method.to_string(),
                    num(r.statistic, format),
                    num(r.pvalue, format),
                    r.replicates_used.to_string(),
                    r.seed.to_string(),
                    opt(r.df),
                    r.std_error.map(|s| num(s, format)).unwrap_or_default(),
                    r.degenerate.to_string(),
                    r.note.clone().unwrap_or_default(),
                ];
                if timed {
                    cells.push(row.runtime_seconds.map(|s| num(s, format)).unwrap_or_default());
                }
                cells
            })
            .collect();
        render(format, &header, &headings, &rows)
    }
}

impl SimulateDocument {
    pub fn render(&self, format: Format) -> String {
        if format == Format::Json {
            return json_text(self);
        }
        let mut header = self.header.lines();
        header.push(format!(
            "scenario {}, replications {}, alpha {}, early exit {}",
            self.scenario.name, self.replications, self.alpha, self.early_exit
        ));
        let headings = [
            "scenario",
            "censoring",
            "n",
            "method",
            "power",
            "se",
            "rejections",
            "replications",
            "alpha",
            "censoring_rate",
            "invalid_datasets",
        ];
        let rows: Vec<Vec<String>> = self
            .results
            .iter()
            .map(|r| {
                vec![
                    r.scenario.clone(),
                    r.variant.to_string(),
                    r.n.to_string(),
                    r.method.to_string(),
                    num(r.rejection_rate, format),
                    num(r.mc_se, format),
                    r.rejections.to_string(),
                    r.replications.to_string(),
                    r.alpha.to_string(),
                    num(r.censoring_rate, format),
                    r.invalid_datasets.to_string(),
                ]
            })
            .collect();
        render(format, &header, &headings, &rows)
    }
}

impl BenchmarkDocument {
    pub fn render(&self, format: Format) -> String {
        if format == Format::Json {
            return json_text(self);
        }
        let mut header = self.header.lines();
        header.push(format!("scenario {}", self.scenario));
        let headings = [
            "n",
            "censoring",
            "censored_group1",
            "censored_group2",
            "seconds",
            "seconds_per_replicate",
            "reference_seconds",
        ];
        let rows: Vec<Vec<String>> = self
            .results
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    r.variant.clone(),
                    num(r.censoring_group1, format),
                    num(r.censoring_group2, format),
                    num(r.seconds, format),
                    num(r.seconds_per_replicate, format),
                    opt(r.reference_seconds),
                ]
            })
            .collect();
        render(format, &header, &headings, &rows)
    }
}
