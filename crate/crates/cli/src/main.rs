use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pnc_core::auction::run_auction_then_pnc;
use pnc_core::harness::scenario::ModeKind;
use pnc_core::harness::{
    emit_report, load_with_overrides, prepare, run_experiment, LoadError, OutputFormat, Overrides,
    RunReport, Stage,
};
use pnc_core::mechanism::{identity_order, run_pnc};
use pnc_core::welfare::maximize_welfare;

const EXIT_VALIDATION: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "pnc",
    version,
    about = "Price-and-choose risk sharing on a finite menu grid"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run welfare, mechanism, auction and audits, then write the report.
    Run(RunArgs),
    /// Check a scenario file and list every problem found.
    Validate(ScenarioArg),
    /// Run without the auction stage.
    Audit(RunArgs),
    /// Time the pipeline stages.
    Bench(BenchArgs),
}

#[derive(Args)]
struct ScenarioArg {
    #[arg(long)]
    scenario: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Perturbed,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Structured,
    Tabular,
    Both,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    resolution: Option<u32>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    iota: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    resolution: Option<u32>,
    #[arg(long, default_value_t = 3)]
    repeat: usize,
}

impl RunArgs {
    fn overrides(&self, audit_only: bool) -> Overrides {
        Overrides {
            resolution: self.resolution,
            mode: self.mode.map(|m| match m {
                ModeArg::Exact => ModeKind::Exact,
                ModeArg::Perturbed => ModeKind::Perturbed,
            }),
            epsilon: self.epsilon,
            iota: self.iota,
            seed: self.seed,
            out: self.out.clone(),
            format: self.format.map(|f| match f {
                FormatArg::Structured => OutputFormat::Structured,
                FormatArg::Tabular => OutputFormat::Tabular,
                FormatArg::Both => OutputFormat::Both,
            }),
            audit_only,
        }
    }
}

fn report_load_error(e: &LoadError) -> ExitCode {
    eprintln!("invalid scenario:");
    for issue in e.issues() {
        eprintln!("  {issue}");
    }
    ExitCode::from(EXIT_VALIDATION)
}

fn print_summary(report: &RunReport) {
    println!(
        "scenario {} (seed {})",
        report.scenario.name, report.scenario.seed
    );
    println!(
        "grid: {} points, resolution {}, diameter {:.6}{}",
        report.grid.points,
        report.grid.resolution,
        report.grid.diameter,
        if report.grid.diameter_exact {
            ""
        } else {
            " (bound)"
        }
    );
    println!(
        "W_max {:.9}  eta {:.9}  L {:.6}",
        report.w_max, report.eta, report.lipschitz
    );
    if let Some(cf) = &report.closed_form {
        let w: Vec<String> = cf.weights.iter().map(|w| format!("{w:.6}")).collect();
        println!(
            "closed form: weights [{}], value {:.9}",
            w.join(", "),
            cf.value
        );
    }
    println!("chosen point {}", report.transcript.chosen);
    println!(
        "{:>5} {:>14} {:>14} {:>14} {:>14}",
        "agent", "avg", "under_avg", "g", "final"
    );
    for a in &report.agents {
        let fin = a
            .final_payoff
            .map_or("-".to_string(), |f| format!("{f:.9}"));
        println!(
            "{:>5} {:>14.9} {:>14.9} {:>14.9} {:>14}",
            a.agent, a.avg, a.under_avg, a.g, fin
        );
    }
    let failures = report.failures();
    println!(
        "invariants: {}/{} passed",
        report.invariants.len() - failures.len(),
        report.invariants.len()
    );
    for f in failures {
        eprintln!("  FAILED {}: {:e} > {:e}", f.name, f.value, f.tolerance);
    }
}

fn run(args: &RunArgs, audit_only: bool) -> ExitCode {
    let config = match load_with_overrides(&args.scenario, &args.overrides(audit_only)) {
        Ok(c) => c,
        Err(e) => return report_load_error(&e),
    };
    let report = match run_experiment(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return match e.stage {
                Stage::Build | Stage::Grid => ExitCode::from(EXIT_VALIDATION),
                _ => ExitCode::from(EXIT_INVARIANT),
            };
        }
    };
    print_summary(&report);
    let dir = PathBuf::from(&config.output.dir);
    match emit_report(&report, &dir, config.output.format) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: cannot write report: {e}");
            return ExitCode::FAILURE;
        }
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INVARIANT)
    }
}

fn validate(args: &ScenarioArg) -> ExitCode {
    match load_with_overrides(&args.scenario, &Overrides::default()) {
        Ok(c) => {
            println!(
                "{}: ok ({} agents, {} states)",
                c.name,
                c.agents.len(),
                c.space.probs.len()
            );
            ExitCode::SUCCESS
        }
        Err(e) => report_load_error(&e),
    }
}

fn bench(args: &BenchArgs) -> ExitCode {
    let overrides = Overrides {
        resolution: args.resolution,
        ..Default::default()
    };
    let config = match load_with_overrides(&args.scenario, &overrides) {
        Ok(c) => c,
        Err(e) => return report_load_error(&e),
    };
    let profile = config.utility_profile().expect("validated");
    let n = config.agents.len();
    let mut rows: Vec<(&str, f64)> = Vec::new();
    for _ in 0..args.repeat.max(1) {
        let t = Instant::now();
        let prep = match prepare(&config) {
            Ok(p) => p,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_VALIDATION);
            }
        };
        rows.push(("prepare", t.elapsed().as_secs_f64()));
        let ctx = prep.context();
        let t = Instant::now();
        let _ = maximize_welfare(&profile, &prep.grid, &prep.table, 0, false);
        rows.push(("welfare", t.elapsed().as_secs_f64()));
        let t = Instant::now();
        let _ = run_pnc(&ctx, config.mechanism.mode(), &identity_order(n));
        rows.push(("mechanism", t.elapsed().as_secs_f64()));
        let t = Instant::now();
        let _ = run_auction_then_pnc(&ctx, config.seed);
        rows.push(("auction", t.elapsed().as_secs_f64()));
    }
    println!("{:>10} {:>12}", "stage", "best (ms)");
    for stage in ["prepare", "welfare", "mechanism", "auction"] {
        let best = rows
            .iter()
            .filter(|(s, _)| *s == stage)
            .map(|(_, t)| *t)
            .fold(f64::INFINITY, f64::min);
        println!("{stage:>10} {:>12.3}", best * 1e3);
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(args) => run(args, false),
        Command::Audit(args) => run(args, true),
        Command::Validate(args) => validate(args),
        Command::Bench(args) => bench(args),
    }
}
