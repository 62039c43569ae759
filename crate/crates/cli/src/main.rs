use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lownoise::report::{render, Metadata, ReportFormat};
use lownoise::scenarios::{build_scenario, Scenario, ScenarioConfig, ScenarioKind};
use lownoise::suite::{run_random_suite, SuiteReport};
use lownoise::sweep::{run_sweep_with, Report, SweepOptions};
use lownoise::Error;

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "lownoise", version, about = "Low-noise channel estimation sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep one scenario and write its report.
    Run(RunArgs),
    /// Run every named scenario and the random-channel suite.
    Verify {
        /// Number of random fixtures.
        #[arg(long, default_value_t = 100)]
        seeds: u64,
    },
    /// Check invariants on seeded random channels.
    RandomSuite {
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        /// First seed.
        #[arg(long, default_value_t = 0)]
        first: u64,
        /// Write one JSON line per fixture here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the named scenarios.
    List,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario name; see `lownoise list`. Optional when --config is given.
    scenario: Option<String>,
    /// TOML scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sweep direction, normalized to sum 1.
    #[arg(long, value_delimiter = ',')]
    direction: Option<Vec<f64>>,
    /// Noise scales, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo shots per sweep point.
    #[arg(long)]
    shots: Option<u64>,
    /// Sampling threads; results do not depend on this.
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Output file. Defaults to <LOWNOISE_OUT_DIR>/<scenario>.<ext>, or stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "jsonl")]
    format: ReportFormat,
    #[arg(long, env = "LOWNOISE_OUT_DIR", hide_env_values = true)]
    out_dir: Option<PathBuf>,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Verify { seeds } => verify(seeds),
        Command::RandomSuite { seeds, first, out } => random_suite(first, seeds, out),
        Command::List => {
            for kind in ScenarioKind::NAMED {
                println!("{:<14} {}", kind.name(), kind.describe());
            }
            Ok(true)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::ConfigInvalid(_) | Error::Io(_) => ExitCode::from(EXIT_CONFIG),
                _ => ExitCode::from(EXIT_CHECK_FAILED),
            }
        }
    }
}

fn load_scenario(args: &RunArgs) -> Result<Scenario, Error> {
    let base = match (&args.config, &args.scenario) {
        (Some(path), name) => {
            let cfg = ScenarioConfig::from_toml(&fs::read_to_string(path)?)?;
            if let Some(name) = name {
                if ScenarioKind::from_name(name)? != cfg.scenario {
                    return Err(Error::ConfigInvalid(format!(
                        "{} describes '{}', not '{name}'",
                        path.display(),
                        cfg.scenario.name()
                    )));
                }
            }
            cfg
        }
        (None, Some(name)) => ScenarioConfig::named(ScenarioKind::from_name(name)?),
        (None, None) => return Err(Error::ConfigInvalid("give a scenario name or --config".into())),
    };
    // Build once to fill in defaults, then apply overrides.
    let mut cfg = build_scenario(&base)?.config;
    let mut sweep = cfg.sweep.take().expect("built scenarios carry a sweep");
    if let Some(d) = &args.direction {
        sweep = sweep.with_direction(d)?;
    }
    if let Some(s) = &args.scales {
        sweep.scales = s.clone();
    }
    if let Some(seed) = args.seed {
        sweep.seed = seed;
    }
    cfg.sweep = Some(sweep);
    build_scenario(&cfg)
}

fn run(args: RunArgs) -> Result<bool, Error> {
    let sc = load_scenario(&args)?;
    let opts = SweepOptions {
        shots: args.shots,
        workers: args.workers.max(1),
    };
    let report = run_sweep_with(&sc, &opts)?;
    let text = render(&report, args.format, &Metadata::now())?;
    let path = args
        .out
        .or_else(|| args.out_dir.map(|d| d.join(format!("{}.{}", sc.name, args.format.extension()))));
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(&p, text)?;
            eprintln!("wrote {}", p.display());
        }
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    print_summary(&report);
    Ok(report.passed)
}

fn print_summary(r: &Report) {
    eprintln!("{} seed {} config {}", r.scenario, r.seed, &r.config_hash[..12]);
    for c in &r.checks {
        let status = match (c.pass, c.expected_pass) {
            (true, true) => "pass",
            (false, false) => "fail (expected)",
            (true, false) => "PASS (expected to fail)",
            (false, true) => "FAIL",
        };
        eprintln!("  {:<28} {:<24} {}", c.name, status, c.detail);
    }
    let errors = r.points.iter().filter(|p| !p.errors.is_empty()).count();
    if errors > 0 {
        eprintln!("  {errors} sweep points recorded errors");
    }
    eprintln!("{}", if r.passed { "passed" } else { "FAILED" });
}

fn summarize_suite(s: &SuiteReport) {
    let n = s.outcomes.len();
    let bad: Vec<_> = s.failures().collect();
    eprintln!("random suite: {n} fixtures, {} failures", bad.len());
    for (seed, f) in bad.iter().take(20) {
        eprintln!("  seed {seed}: {f}");
    }
    if let Some(v) = s.worst(|o| Some(o.tpcp), true) {
        eprintln!("  max TPCP residual {v:.2e}");
    }
    if let Some(v) = s.worst(|o| o.trace_power, true) {
        eprintln!("  max trace-power residual {v:.2e}");
    }
    if let Some(v) = s.worst(|o| o.completeness, true) {
        eprintln!("  max POVM completeness residual {v:.2e}");
    }
}

fn random_suite(first: u64, seeds: u64, out: Option<PathBuf>) -> Result<bool, Error> {
    let s = run_random_suite(first, seeds);
    if let Some(path) = out {
        let mut text = String::new();
        for o in &s.outcomes {
            text += &serde_json::to_string(o).map_err(|e| Error::Io(e.to_string()))?;
            text.push('\n');
        }
        fs::write(&path, text)?;
        eprintln!("wrote {}", path.display());
    }
    summarize_suite(&s);
    Ok(s.passed)
}

fn verify(seeds: u64) -> Result<bool, Error> {
    let mut all = true;
    for kind in ScenarioKind::NAMED {
        let r = run_sweep_with(&build_scenario(&ScenarioConfig::named(kind))?, &SweepOptions::default())?;
        let unexpected: Vec<&str> = r
            .checks
            .iter()
            .filter(|c| c.pass != c.expected_pass)
            .map(|c| c.name.as_str())
            .collect();
        println!(
            "{:<14} {}{}",
            kind.name(),
            if r.passed { "pass" } else { "FAIL" },
            if unexpected.is_empty() { String::new() } else { format!(" ({})", unexpected.join(", ")) }
        );
        all &= r.passed;
    }
    let s = run_random_suite(0, seeds);
    println!(
        "{:<14} {} ({} fixtures, {} failures)",
        "random-suite",
        if s.passed { "pass" } else { "FAIL" },
        s.outcomes.len(),
        s.failures().count()
    );
    Ok(all && s.passed)
}
