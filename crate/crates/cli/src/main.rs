use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mfopt::harness::validate::FD_TOL;
use mfopt::harness::{
    gradient_fd_check, run_benchmark, sample_starts, single_run, validate, write_outputs, ExperimentConfig, Fault,
    Scale,
};
use mfopt::tr_opt::{Fidelity, Variant};

/// Multi-fidelity trust-region optimization of a parametrized heat equation.
#[derive(Parser)]
#[command(name = "mfopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML file overriding the preset.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (default: `experiment.out_dir`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for start points and validation samples.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Optimizer variant (run: restricts the benchmark to it).
    #[arg(long, value_name = "NAME")]
    variant: Option<Variant>,
    /// Problem size preset.
    #[arg(long, value_name = "desk|paper", default_value = "desk")]
    scale: Scale,
}

#[derive(Subcommand)]
enum Command {
    /// All variants from shared random starts; writes runs.csv, evals.csv, table.csv.
    Run {
        #[command(flatten)]
        common: Common,
        /// Number of start points (default: `experiment.starts`).
        #[arg(long)]
        starts: Option<usize>,
        /// Concurrent runs (default: `experiment.jobs`).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Gradient, reduced-basis, estimator and kernel self-checks.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Corrupt the reduced basis to confirm the checks can fail.
        #[arg(long)]
        inject_fault: bool,
    },
    /// One run with its convergence history.
    Single {
        #[command(flatten)]
        common: Common,
        /// Start point, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [0.026, 0.020])]
        mu0: Vec<f64>,
    },
    /// Adjoint gradient against central differences at random parameters.
    GradientCheck {
        #[command(flatten)]
        common: Common,
        /// Number of random parameters (default: `validation.points`).
        #[arg(long)]
        points: Option<usize>,
    },
}

fn load(common: &Common) -> mfopt::Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_file(path, common.scale)?,
        None => ExperimentConfig::preset(common.scale),
    };
    if let Some(seed) = common.seed {
        config.experiment.seed = seed;
    }
    if let Some(out) = &common.out {
        config.experiment.out_dir = out.clone();
    }
    Ok(config)
}

fn fmt_mu(mu: &[f64]) -> String {
    let parts: Vec<String> = mu.iter().map(|x| format!("{x:.5}")).collect();
    format!("({})", parts.join(", "))
}

fn cmd_run(common: &Common, starts: Option<usize>, jobs: Option<usize>) -> mfopt::Result<bool> {
    let mut config = load(common)?;
    if let Some(n) = starts {
        config.experiment.starts = n;
    }
    if let Some(j) = jobs {
        config.experiment.jobs = j;
    }
    config.validate()?;
    let problem = config.build_problem()?;
    let points = sample_starts(&problem.fom.bounds, config.experiment.starts, config.experiment.seed);
    let variants: Vec<Variant> = match common.variant {
        Some(v) => vec![v],
        None => Variant::ALL.to_vec(),
    };
    eprintln!(
        "{} dofs, {} steps; {} variant(s) × {} starts",
        problem.fom.dim(),
        problem.fom.time.steps,
        variants.len(),
        points.len()
    );
    let outcomes = run_benchmark(&problem, &config.optimizer, &variants, &points, config.experiment.jobs, |o| {
        eprintln!(
            "{:<17} start {:>2}  {} -> {}  {}  fom {:>3} rb {:>4} ml {:>4}  {:.2} s",
            o.variant.name(),
            o.start_index,
            fmt_mu(&o.mu0),
            fmt_mu(o.mu()),
            o.status,
            o.evals(Fidelity::Fom),
            o.evals(Fidelity::Rb),
            o.evals(Fidelity::Ml),
            o.total_time_s
        );
    });
    let dir = &config.experiment.out_dir;
    let files = write_outputs(dir, &outcomes)?;
    std::fs::write(dir.join("config.toml"), config.to_toml())?;
    println!("{:<17} {:>11} {:>8} {:>9} {:>9} {:>9}", "variant", "mean time", "speedup", "FOM", "RB", "ML");
    for row in &files.table {
        println!(
            "{:<17} {:>9.3} s {:>8.2} {:>9.1} {:>9.1} {:>9.1}",
            row.variant, row.mean_time_s, row.speedup, row.mean_fom_evals, row.mean_rb_evals, row.mean_ml_evals
        );
    }
    println!("results in {}", dir.display());
    Ok(outcomes.iter().all(|o| !o.status.starts_with("failed")))
}

fn cmd_validate(common: &Common, inject_fault: bool) -> mfopt::Result<bool> {
    let config = load(common)?;
    let problem = config.build_problem()?;
    let fault = inject_fault.then_some(Fault::CorruptBasis);
    let report = validate(&config, &problem, fault)?;
    print!("{report}");
    Ok(report.passed())
}

fn cmd_single(common: &Common, mu0: &[f64]) -> mfopt::Result<bool> {
    let config = load(common)?;
    let problem = config.build_problem()?;
    let variant = common.variant.unwrap_or(Variant::RelaxedTrRbMlOpt);
    let dir = config.experiment.out_dir.join(format!("single_{}", variant.name()));
    let record = single_run(&problem, &config.optimizer, variant, mu0, &dir)?;
    print!("{}", mfopt::harness::single::summary(&record));
    println!("history in {}", dir.display());
    Ok(record.converged())
}

fn cmd_gradient_check(common: &Common, points: Option<usize>) -> mfopt::Result<bool> {
    let config = load(common)?;
    let fom = config.build_fom()?;
    let n = points.unwrap_or(config.validation.points);
    let mus = sample_starts(&fom.bounds, n, config.experiment.seed);
    let samples = gradient_fd_check(&fom, &mus, config.validation.fd_step)?;
    let mut ok = true;
    for s in &samples {
        let pass = s.worst() <= FD_TOL;
        ok &= pass;
        println!(
            "{} mu {}  adjoint {:?}  differences {:?}  rel. error {:.2e}",
            if pass { "PASS" } else { "FAIL" },
            fmt_mu(&s.mu),
            s.adjoint,
            s.finite_difference,
            s.worst()
        );
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { common, starts, jobs } => cmd_run(common, *starts, *jobs),
        Command::Validate { common, inject_fault } => cmd_validate(common, *inject_fault),
        Command::Single { common, mu0 } => cmd_single(common, mu0),
        Command::GradientCheck { common, points } => cmd_gradient_check(common, *points),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
