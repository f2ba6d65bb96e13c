mod args;
mod output;

use std::fmt;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use konp::rng::{stream, Domain};
use konp::simgen::{self, generate_dataset, run_power_study, CensoringVariant, PowerStudy, ScenarioFamily};
use konp::{parse_methods, run_test_suite, CsvSchema, PermutationPlan, SurvivalDataset};

use args::{BenchmarkArgs, Cli, Command, Common, ScenariosArgs, SimulateArgs, TestArgs};
use output::{BenchmarkDocument, BenchmarkRow, Header, SimulateDocument, TestDocument, TestRow};

/// Failure classes and their exit codes.
#[derive(Debug)]
enum Failure {
    Validation(String),
    Io(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Io(_) => 3,
            Failure::Internal(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) | Failure::Io(m) | Failure::Internal(m) => f.write_str(m),
        }
    }
}

impl From<konp::Error> for Failure {
    fn from(e: konp::Error) -> Self {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else if matches!(e, konp::Error::NotPositiveSemidefinite) {
            Failure::Internal(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

type Outcome<T> = Result<T, Failure>;

fn setup(common: &Common) -> Outcome<()> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Failure::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Internal(e.to_string()))?;
    }
    Ok(())
}

fn emit(common: &Common, text: &str) -> Outcome<()> {
    match &common.output {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display()))),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| Failure::Io(e.to_string()))
        }
    }
}

fn plan(common: &Common, imputations: u32, permutations: u32) -> Outcome<PermutationPlan> {
    let plan = PermutationPlan {
        imputations,
        permutations,
        seed: common.seed,
        rule: common.pvalue_rule.into(),
    };
    plan.validate()?;
    Ok(plan)
}

fn cmd_test(a: &TestArgs) -> Outcome<()> {
    setup(&a.common)?;
    let schema = CsvSchema {
        time: a.time_col.clone(),
        status: a.status_col.clone(),
        group: a.group_col.clone(),
    };
    let ds = SurvivalDataset::load_csv(&a.input, &schema)?;
    let methods = parse_methods(&a.tests)?;
    let plan = plan(&a.common, a.imputations, a.permutations)?;

    let mut warnings = Vec::new();
    if methods.iter().any(|m| m.uses_permutations()) {
        warnings.extend(plan.resolution_warning());
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let start = Instant::now();
    let reports = run_test_suite(&ds, &methods, &plan)?;
    let seconds = start.elapsed().as_secs_f64();
    let doc = TestDocument {
        header: Header::new("test", plan, &methods),
        input: a.input.display().to_string(),
        groups: ds.summarize(),
        warnings,
        results: reports
            .into_iter()
            .map(|report| TestRow {
                report,
                runtime_seconds: a.timings.then_some(seconds),
            })
            .collect(),
    };
    emit(&a.common, &doc.render(a.common.format))
}

fn parse_variants(text: &str, family: &ScenarioFamily) -> Outcome<Vec<CensoringVariant>> {
    if text.trim().eq_ignore_ascii_case("all") {
        return Ok(family.variants());
    }
    text.split(',')
        .map(|v| v.parse::<CensoringVariant>().map_err(Failure::from))
        .collect()
}

fn cmd_simulate(a: &SimulateArgs) -> Outcome<()> {
    setup(&a.common)?;
    let family = match (&a.scenario, &a.scenario_file) {
        (Some(name), _) => simgen::lookup(name)?,
        (None, Some(path)) => ScenarioFamily::load(path)?,
        (None, None) => unreachable!("clap requires one of the two"),
    };
    let methods = parse_methods(&a.tests)?;
    let plan = plan(&a.common, a.imputations, a.permutations)?;
    let mut results = Vec::new();
    for variant in parse_variants(&a.variant, &family)? {
        let study = PowerStudy {
            scenario: family.variant(variant)?,
            variant,
            sizes: a.n.clone(),
            replications: a.replications,
            methods: methods.clone(),
            alpha: a.alpha,
            plan,
            early_exit: !a.no_early_exit,
        };
        results.extend(run_power_study(&study)?);
    }
    let doc = SimulateDocument {
        header: Header::new("simulate", plan, &methods),
        alpha: a.alpha,
        replications: a.replications,
        early_exit: !a.no_early_exit,
        scenario: family,
        results,
    };
    emit(&a.common, &doc.render(a.common.format))
}

/// Reference single-thread seconds for one imputation and 1000 permutations.
fn reference_seconds(variant: CensoringVariant, n: usize) -> Option<f64> {
    let sizes = [100, 200, 300, 400, 1000];
    let row = match variant {
        CensoringVariant::Equal25 => [1.7, 7.1, 16.5, 30.0, 204.2],
        CensoringVariant::Equal50 => [0.9, 3.5, 8.0, 14.5, 97.3],
        CensoringVariant::UnequalSevere => [0.9, 3.8, 8.8, 16.1, 114.1],
        CensoringVariant::UnequalMild => [0.8, 3.2, 7.5, 13.7, 93.8],
    };
    sizes.iter().position(|&s| s == n).map(|i| row[i])
}

fn cmd_benchmark(a: &BenchmarkArgs) -> Outcome<()> {
    setup(&a.common)?;
    let family = simgen::lookup("null-2")?;
    let methods = parse_methods(&a.tests)?;
    let plan = plan(&a.common, a.imputations, a.permutations)?;
    let mut results = Vec::new();
    for (v_idx, variant) in parse_variants(&a.variant, &family)?.into_iter().enumerate() {
        let spec = family.variant(variant)?;
        for (n_idx, &n) in a.n.iter().enumerate() {
            let mut rng = stream(plan.seed, Domain::Dataset, v_idx as u32, n_idx as u32);
            let ds = generate_dataset(&spec, n, &mut rng)?;
            let start = Instant::now();
            run_test_suite(&ds, &methods, &plan)?;
            let seconds = start.elapsed().as_secs_f64();
            let rates: Vec<f64> = ds.summarize().iter().map(|g| g.censoring_rate).collect();
            results.push(BenchmarkRow {
                n,
                variant: variant.to_string(),
                censoring_group1: rates[0],
                censoring_group2: rates[1],
                seconds,
                seconds_per_replicate: seconds / plan.replicates() as f64,
                reference_seconds: (plan.replicates() == 1000 && methods.iter().all(|m| m.uses_permutations()))
                    .then(|| reference_seconds(variant, n))
                    .flatten(),
            });
        }
    }
    let doc = BenchmarkDocument {
        header: Header::new("benchmark", plan, &methods),
        scenario: family.name,
        results,
    };
    emit(&a.common, &doc.render(a.common.format))
}

fn cmd_scenarios(a: &ScenariosArgs) -> Outcome<()> {
    let text = match &a.show {
        Some(name) => simgen::lookup(name)?.to_toml(),
        None => {
            let mut out = String::new();
            for f in simgen::registry() {
                let laws: Vec<String> = f.failure.iter().map(|d| d.to_string()).collect();
                out += &format!("{:<6} K={}  {}\n", f.name, f.k(), laws.join(" | "));
            }
            out
        }
    };
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Scenarios(a) => cmd_scenarios(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
