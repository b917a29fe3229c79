use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use bessel_two_weight::dyadic::{default_min_level, whitney_decompose, whitney_properties, OpenSet, WhitneyMode};
use bessel_two_weight::harness::{
    decompose_energy, gen_instance, run_equivalence_suite, EnergyConfig, ExperimentConfig, MpConstantMode,
};
use bessel_two_weight::io::{instance_to_json, load_instance};
use bessel_two_weight::operators::{interval_family, DEFAULT_NORM_MAX_ITERS, DEFAULT_NORM_TOL};
use bessel_two_weight::{eval_kernel, BesselParam, KernelQuery, PreparedInstance};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

/// Bessel–Poisson two-weight norms, testing constants and proof checks.
#[derive(Parser)]
#[command(name = "btw", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate P_t(x, y) for one parameter.
    #[command(allow_negative_numbers = true)]
    Kernel {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        x: f64,
        #[arg(long)]
        y: f64,
        #[arg(long)]
        t: f64,
        /// Relative tolerance of the angular quadrature.
        #[arg(long)]
        rel_tol: Option<f64>,
    },
    /// Whitney decomposition of an open set given as "a1,b1;a2,b2".
    #[command(allow_negative_numbers = true)]
    Whitney {
        #[arg(long)]
        omega: String,
        #[arg(long)]
        min_level: Option<i32>,
        #[arg(long, default_value = "repaired")]
        mode: WhitneyMode,
    },
    /// Forward and backward testing constants, the norm and their ratio.
    Testing {
        #[command(flatten)]
        input: InputArgs,
        /// Enrich the interval family with one-third translates.
        #[arg(long)]
        shift_thirds: bool,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Operator norm by power iteration.
    Norm {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Run the equivalence suite on generated instances.
    Verify(VerifyArgs),
    /// Level-set energy decomposition for one instance.
    Decompose(DecomposeArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Instance file: {"lambda": .., "sigma": [[y, w]], "mu": [[x, t, w]]}.
    #[arg(long)]
    input: PathBuf,
    /// Overrides the file's lambda.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args)]
struct NormArgs {
    #[arg(long, default_value_t = DEFAULT_NORM_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_NORM_MAX_ITERS)]
    max_iters: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// JSON config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    instances: Option<usize>,
    /// Comma-separated list of lambda values.
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    n_sigma: Option<usize>,
    #[arg(long)]
    n_mu: Option<usize>,
    /// Maximum-principle constant: repaired-33, or paper-19 for the literal 19^{λ+1}.
    #[arg(long)]
    mode: Option<MpConstantMode>,
    /// Sampled configurations per kernel-comparison sweep.
    #[arg(long)]
    kernel_samples: Option<usize>,
    /// Write the full JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write one summary row per (instance, lambda) here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Decompose this instance with phi = 1 instead of a generated one.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Index of the generated instance.
    #[arg(long, default_value_t = 0)]
    index: u64,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 0.25)]
    delta: f64,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long, default_value = "repaired-33")]
    mode: MpConstantMode,
    #[arg(long, default_value_t = 12)]
    n_sigma: usize,
    #[arg(long, default_value_t = 12)]
    n_mu: usize,
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn whitney(omega: &str, min_level: Option<i32>, mode: WhitneyMode) -> Result<Value> {
    let omega = OpenSet::parse(omega)?;
    let w = whitney_decompose(&omega, min_level, mode)?;
    let intervals: Vec<Value> = w
        .intervals
        .iter()
        .map(|d| json!({"level": d.level, "index": d.index, "a": d.left(), "b": d.right()}))
        .collect();
    Ok(json!({
        "omega": omega.parts().iter().map(|p| [p.a(), p.b()]).collect::<Vec<_>>(),
        "mode": mode,
        "min_level": min_level.unwrap_or_else(|| default_min_level(&omega)),
        "intervals": intervals,
        "uncovered_tail": w.uncovered_tail,
        "report": whitney_properties(&w),
    }))
}

fn verify_config(args: &VerifyArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.instances {
        cfg.instance_count = v;
    }
    if let Some(v) = &args.lambda {
        cfg.lambda_set = v.clone();
    }
    if let Some(v) = args.delta {
        cfg.delta = v;
    }
    if let Some(v) = args.n_sigma {
        cfg.n_sigma = v;
    }
    if let Some(v) = args.n_mu {
        cfg.n_mu = v;
    }
    if let Some(v) = args.mode {
        cfg.mp_constant_mode = v;
    }
    if let Some(v) = args.kernel_samples {
        cfg.kernel_samples = v;
    }
    Ok(cfg)
}

fn write_csv(path: &Path, rows: &[bessel_two_weight::harness::CsvRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn verify(args: &VerifyArgs) -> Result<bool> {
    let cfg = verify_config(args)?;
    let report = run_equivalence_suite(&cfg)?;
    if let Some(path) = &args.out {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer_pretty(file, &report)?;
    }
    if let Some(path) = &args.csv {
        write_csv(path, &report.csv_rows())?;
    }
    print_json(&json!({
        "aggregate": report.aggregate,
        "failures": report.failures.len(),
        "failed_checks": report.failures.iter().map(|f| {
            json!({"index": f.index, "lambda": f.lambda, "check": f.check})
        }).collect::<Vec<_>>(),
    }))?;
    Ok(report.passed())
}

fn decompose(args: &DecomposeArgs) -> Result<Value> {
    let (instance, phi, source) = match &args.input {
        Some(path) => {
            let inst = load_instance(path, args.lambda)?;
            let phi = vec![1.0; inst.mu.len()];
            (inst, phi, json!({"input": path}))
        }
        None => {
            let cfg = ExperimentConfig {
                seed: args.seed,
                n_sigma: args.n_sigma,
                n_mu: args.n_mu,
                ..Default::default()
            };
            let g = gen_instance(&cfg, args.index, args.lambda.unwrap_or(1.0))?;
            (g.instance, g.phi, json!({"seed": args.seed, "index": args.index}))
        }
    };
    let lambda = instance.param.lambda();
    let cfg = ExperimentConfig {
        m: args.m,
        mp_constant_mode: args.mode,
        ..Default::default()
    };
    let ecfg = EnergyConfig {
        delta: args.delta,
        m: cfg.level_shift(lambda),
        whitney_mode: args.mode.whitney_mode(),
        grid_refinement: cfg.grid_refinement,
        comparability_samples: 2,
    };
    let prepared = PreparedInstance::new(instance)?;
    let report = decompose_energy(&prepared, &phi, &ecfg)?;
    Ok(json!({
        "source": source,
        "instance": instance_to_json(prepared.instance()),
        "phi": phi,
        "report": report,
    }))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Kernel { lambda, x, y, t, rel_tol } => {
            let p = match rel_tol {
                Some(tol) => BesselParam::with_quadrature(lambda, tol, BesselParam::new(lambda)?.quad_max_depth())?,
                None => BesselParam::new(lambda)?,
            };
            println!("{:.14e}", eval_kernel(&p, &KernelQuery::new(x, y, t)?)?);
        }
        Command::Whitney { omega, min_level, mode } => print_json(&whitney(&omega, min_level, mode)?)?,
        Command::Testing {
            input,
            shift_thirds,
            norm,
        } => {
            let prepared = PreparedInstance::new(load_instance(&input.input, input.lambda)?)?;
            let family = interval_family(prepared.instance(), shift_thirds);
            print_json(&prepared.testing(&family, norm.tol, norm.max_iters)?)?;
        }
        Command::Norm { input, norm } => {
            let prepared = PreparedInstance::new(load_instance(&input.input, input.lambda)?)?;
            print_json(&prepared.operator_norm(norm.tol, norm.max_iters)?)?;
        }
        Command::Verify(args) => return verify(&args),
        Command::Decompose(args) => print_json(&decompose(&args)?)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
