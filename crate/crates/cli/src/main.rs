use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use amroute::bench::{
    aggregate, format_table, instance_seed, load_benchmark, read_results, solve_instance, table_csv, write_results,
    BestKnown, GroupBy, SolveMode, DEFAULT_SAMPLES,
};
use amroute::exec::Execution;
use amroute::instances::Rounding;
use amroute::policy::{AttentionModel, Variant};
use amroute::training::{train, TrainConfig, TrainOptions};
use amroute::verify::{run_suite, Suite};

#[derive(Parser)]
#[command(name = "amroute", version, about = "Attention construction policies for VRPTW and PDPTW")]
struct Cli {
    /// Run on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Greedy,
    Sample,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Cvrptw,
    Cpdptw,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoundingArg {
    Solomon,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    All,
    Insertion,
    Gradient,
    Mask,
    Precompute,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupArg {
    Family,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Solve benchmark files with a trained policy.
    Solve {
        #[arg(long)]
        instances: String,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "greedy")]
        mode: ModeArg,
        /// Rollouts per instance in sample mode.
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum)]
        variant: VariantArg,
        #[arg(long, value_enum, default_value = "exact")]
        rounding: RoundingArg,
        /// Customers (Solomon) or requests (Li & Lim) kept per file.
        #[arg(long, default_value_t = 50)]
        limit: usize,
        /// Best-known table; `data/best_known.csv` when present.
        #[arg(long)]
        best_known: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a policy from a TOML configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "train_out")]
        out: PathBuf,
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Validate the configuration and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Aggregate a results CSV by benchmark family.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, value_enum, default_value = "family")]
        group: GroupArg,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the randomized verification suites.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    match run(cli.command, exec) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command, exec: Execution) -> Result<bool> {
    match cmd {
        Command::Solve { instances, checkpoint, mode, k, seed, variant, rounding, limit, best_known, out } => {
            let variant = match variant {
                VariantArg::Cvrptw => Variant::Cvrptw,
                VariantArg::Cpdptw => Variant::Cpdptw,
            };
            let rounding = match rounding {
                RoundingArg::Solomon => Rounding::Solomon,
                RoundingArg::Exact => Rounding::Exact,
            };
            solve(&instances, &checkpoint, mode, k, seed, variant, rounding, limit, best_known, &out, exec)
        }
        Command::Train { config, out, resume, dry_run } => {
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let cfg: TrainConfig = toml::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
            cfg.validate()?;
            if dry_run {
                println!("{}: ok ({} epochs of {} steps)", config.display(), cfg.epochs, cfg.steps_per_epoch);
                return Ok(true);
            }
            let (_, summary) = train(&cfg, &TrainOptions { out_dir: out, execution: exec, resume })?;
            println!("trained {} steps; log {}", summary.steps, summary.log.display());
            if let Some(last) = summary.checkpoints.last() {
                println!("last checkpoint {}", last.display());
            }
            Ok(true)
        }
        Command::Eval { results, group, csv } => {
            let text = fs::read_to_string(&results).with_context(|| format!("reading {}", results.display()))?;
            let rows = read_results(&text)?;
            let by = match group {
                GroupArg::Family => GroupBy::Family,
                GroupArg::All => GroupBy::All,
            };
            let table = aggregate(&rows, by);
            print!("{}", format_table(&table));
            if let Some(p) = csv {
                fs::write(&p, table_csv(&table)?)?;
            }
            Ok(true)
        }
        Command::Verify { suite, seeds } => {
            let suite = match suite {
                SuiteArg::All => Suite::All,
                SuiteArg::Insertion => Suite::Insertion,
                SuiteArg::Gradient => Suite::Gradient,
                SuiteArg::Mask => Suite::Mask,
                SuiteArg::Precompute => Suite::Precompute,
            };
            let reports = run_suite(suite, seeds, None);
            for r in &reports {
                println!("{r}");
            }
            Ok(reports.iter().all(|r| r.passed()))
        }
    }
}

fn default_best_known() -> Option<PathBuf> {
    let p = Path::new("data/best_known.csv");
    p.exists().then(|| p.to_path_buf())
}

#[allow(clippy::too_many_arguments)]
fn solve(
    pattern: &str,
    checkpoint: &Path,
    mode: ModeArg,
    k: usize,
    seed: u64,
    variant: Variant,
    rounding: Rounding,
    limit: usize,
    best_known: Option<PathBuf>,
    out: &Path,
    exec: Execution,
) -> Result<bool> {
    let mut files: Vec<PathBuf> = glob::glob(pattern)?.collect::<Result<_, _>>()?;
    files.sort();
    if files.is_empty() {
        bail!("no files match `{pattern}`");
    }
    let model = AttentionModel::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    if model.config.variant != variant {
        bail!("checkpoint was trained for {}, not {variant}", model.config.variant);
    }
    let best = match best_known.or_else(default_best_known) {
        Some(p) => BestKnown::load(&p).with_context(|| format!("reading {}", p.display()))?,
        None => BestKnown::default(),
    };
    if k == 0 {
        bail!("--k must be positive");
    }
    fs::create_dir_all(out)?;
    let solved = exec.map(files.len(), |i| -> Result<_> {
        let inst = load_benchmark(&files[i], variant, Some(limit))?;
        let m = match mode {
            ModeArg::Greedy => SolveMode::Greedy,
            ModeArg::Sample => SolveMode::Sample { k, seed: instance_seed(seed, inst.name()) },
        };
        Ok(solve_instance(&model, &inst, m, rounding, &best)?)
    });
    let mut rows = Vec::new();
    for (path, s) in files.iter().zip(solved) {
        let s = s.with_context(|| format!("solving {}", path.display()))?;
        fs::write(out.join(format!("{}.sol", s.row.instance)), &s.text)?;
        rows.push(s.row);
    }
    fs::write(out.join("results.csv"), write_results(&rows)?)?;
    for r in &rows {
        let gap = r.gap.map(|g| format!("{g:.2}%")).unwrap_or_else(|| "-".into());
        let flag = if r.feasible { "" } else { "  INFEASIBLE" };
        println!("{:<12} vehicles {:>3}  distance {:>10.2}  gap {:>8}{flag}", r.instance, r.vehicles, r.distance, gap);
    }
    Ok(rows.iter().all(|r| r.feasible))
}
