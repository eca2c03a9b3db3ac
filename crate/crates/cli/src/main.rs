use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use robustpd::harness::{
    run_loadbalance_experiment, run_ocp_experiment, run_welfare_experiment, verify, CheckGroup, RunConfig,
    RunReport, VerifyConfig, THREADS_ENV,
};
use robustpd::instance::{generate, FamilyKind, GeneratorParams, OptionStyle, Placement, Problem};
use robustpd::{AnyInstance, Mutation};

/// Exit code when any inequality check fails.
const EXIT_VIOLATION: u8 = 1;
/// Exit code for input, configuration and I/O errors.
const EXIT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "robustpd", version, about = "Primal-dual online algorithms under mixed adversarial/stochastic input")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Online convex programming with Monte-Carlo replications.
    RunOcp(RunArgs),
    /// Welfare maximization with Monte-Carlo replications.
    RunWelfare(RunArgs),
    /// l_p load balancing on an OCP instance.
    RunLoadbalance {
        #[command(flatten)]
        run: RunArgs,
        /// Norm exponent; defaults to the instance cost's p.
        #[arg(long)]
        p: Option<f64>,
    },
    /// Randomized property suite; prints a check matrix.
    Verify(VerifyArgs),
    /// Write a random instance.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 1000)]
    replications: usize,
    /// Overrides the seed stored in the instance.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long, default_value = "all")]
    check: CheckGroup,
    /// Deliberately broken variant, for testing the checks.
    #[arg(long, default_value = "none", hide = true)]
    mutation: Mutation,
    /// Worker threads.
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            replications: self.replications,
            seed: self.seed,
            mutation: self.mutation,
            checks: self.check,
            threads: self.threads,
            p: None,
        }
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Random configurations per check group.
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value = "all")]
    check: CheckGroup,
    #[arg(long, default_value = "none", hide = true)]
    mutation: Mutation,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Print the matrix as JSON instead of a table.
    #[arg(long)]
    json: bool,
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Ocp,
    Welfare,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    SumOfPowers,
    LinearPlusPower,
    SeparableGeneric,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlacementArg {
    Prefix,
    Suffix,
    Random,
    Interleaved,
}

#[derive(Clone, Copy, ValueEnum)]
enum StyleArg {
    Dense,
    Machines,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    problem: ProblemArg,
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, value_enum, default_value_t = FamilyArg::SumOfPowers)]
    family: FamilyArg,
    /// Number of adversarial steps.
    #[arg(long, default_value_t = 4)]
    adv: usize,
    #[arg(long, value_enum, default_value_t = PlacementArg::Random)]
    placement: PlacementArg,
    #[arg(long, default_value_t = 3)]
    support: usize,
    #[arg(long, default_value_t = 2)]
    options_min: usize,
    #[arg(long, default_value_t = 3)]
    options_max: usize,
    #[arg(long, value_enum, default_value_t = StyleArg::Machines)]
    style: StyleArg,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    reward_min: f64,
    #[arg(long, default_value_t = 20.0)]
    reward_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl GenerateArgs {
    fn params(&self) -> GeneratorParams {
        GeneratorParams {
            problem: match self.problem {
                ProblemArg::Ocp => Problem::Ocp,
                ProblemArg::Welfare => Problem::Welfare,
            },
            n: self.n,
            m: self.m,
            p: self.p,
            family: match self.family {
                FamilyArg::SumOfPowers => FamilyKind::SumOfPowers,
                FamilyArg::LinearPlusPower => FamilyKind::LinearPlusPower,
                FamilyArg::SeparableGeneric => FamilyKind::SeparableGeneric,
            },
            adv_count: self.adv,
            placement: match self.placement {
                PlacementArg::Prefix => Placement::Prefix,
                PlacementArg::Suffix => Placement::Suffix,
                PlacementArg::Random => Placement::Random,
                PlacementArg::Interleaved => Placement::Interleaved,
            },
            support_size: self.support,
            options_min: self.options_min,
            options_max: self.options_max,
            option_style: match self.style {
                StyleArg::Dense => OptionStyle::Dense,
                StyleArg::Machines => OptionStyle::Machines,
            },
            reward_range: (self.reward_min, self.reward_max),
        }
    }
}

fn emit(out_dir: Option<&Path>, file_name: &str, body: &str) -> anyhow::Result<()> {
    match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(file_name);
            std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        }
        None => std::io::stdout().lock().write_all(body.as_bytes())?,
    }
    Ok(())
}

fn write_report(report: &RunReport, args: &RunArgs) -> anyhow::Result<bool> {
    let (body, ext) = match args.format {
        Format::Csv => (report.to_csv(), "csv"),
        Format::Json => (report.to_json()?, "json"),
    };
    emit(args.out_dir.as_deref(), &format!("{}.{ext}", report.problem), &body)?;
    for c in report.failures() {
        eprintln!("FAIL {} (worst slack {:e}, tol {:e})", c.name, c.slack, c.tol);
    }
    Ok(report.passed())
}

fn load(path: &Path) -> anyhow::Result<AnyInstance> {
    AnyInstance::load(path).with_context(|| format!("loading instance {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::RunOcp(args) => {
            let AnyInstance::Ocp(inst) = load(&args.instance)? else {
                bail!("run-ocp needs an `ocp` instance");
            };
            write_report(&run_ocp_experiment(&inst, &args.config())?, &args)
        }
        Command::RunLoadbalance { run: args, p } => {
            let AnyInstance::Ocp(inst) = load(&args.instance)? else {
                bail!("run-loadbalance needs an `ocp` instance");
            };
            let cfg = RunConfig { p, ..args.config() };
            write_report(&run_loadbalance_experiment(&inst, &cfg)?, &args)
        }
        Command::RunWelfare(args) => {
            let AnyInstance::Welfare(inst) = load(&args.instance)? else {
                bail!("run-welfare needs a `welfare` instance");
            };
            write_report(&run_welfare_experiment(&inst, &args.config())?, &args)
        }
        Command::Verify(args) => {
            let matrix = verify(&VerifyConfig {
                seed: args.seed,
                count: args.count,
                mutation: args.mutation,
                checks: args.check,
                threads: args.threads,
            })?;
            let (body, name) = if args.json {
                (matrix.to_json()?, "verify.json")
            } else {
                (matrix.render(), "verify.txt")
            };
            emit(args.out_dir.as_deref(), name, &body)?;
            Ok(matrix.passed())
        }
        Command::Generate(args) => {
            let inst = generate(&args.params(), args.seed)?;
            match &args.out {
                Some(path) => inst.save(path).with_context(|| format!("writing {}", path.display()))?,
                None => println!("{}", inst.to_json()?),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VIOLATION),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
