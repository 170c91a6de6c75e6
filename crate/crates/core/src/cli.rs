//! `interp-forge` command line.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::builder::{build_hardmax, build_softmax};
use crate::dynamics::{classify, simulate, trajectory_csv};
use crate::error::{Error, Result};
use crate::gen::{generate_dataset, GenConfig, MPolicy};
use crate::io::{
    read_dataset, read_dynamics_config, read_sequence, read_transformer, states_csv, to_json,
    write_json,
};
use crate::metric::hausdorff_distance;
use crate::training::{make_synthetic, train, TrainingConfig};

/// Exit code for verification and run failures.
pub const EXIT_FAILURE: i32 = 1;
/// Exit code for unusable input (bad flags, unreadable or invalid files).
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "interp-forge",
    version,
    about = "Build and check transformers that interpolate sequence datasets exactly"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random dataset satisfying the interpolation assumptions.
    GenDataset(GenArgs),
    /// Check a dataset file.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Build a transformer for a dataset.
    Construct(ConstructArgs),
    /// Apply a model to a dataset and compare with the targets.
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Run the hardmax self-attention dynamics.
    Simulate(SimulateArgs),
    /// Fit a one-block softmax transformer with Tikhonov regularization.
    TrainDemo(TrainArgs),
    /// Export token positions as CSV for plotting.
    PlotData(PlotArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(2..))]
    d: u64,
    #[arg(long = "N", default_value_t = 3)]
    n_sequences: usize,
    #[arg(long, default_value_t = 6)]
    n_max: usize,
    /// `uniform` or `fixed:<m>`.
    #[arg(long, default_value = "uniform")]
    m_policy: MPolicy,
    /// Probability of drawing an input token from the shared pool.
    #[arg(long, default_value_t = 0.3)]
    share: f64,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Hardmax,
    Softmax,
}

#[derive(Debug, Args)]
pub struct ConstructArgs {
    #[arg(long, value_enum, default_value = "hardmax")]
    mode: Mode,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Softmax temperature plan (softmax mode only).
    #[arg(long)]
    plan: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    x0: PathBuf,
    /// Step cap; defaults to one derived from `gamma`.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "N", default_value_t = 3)]
    n_sequences: usize,
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(2..))]
    d: u64,
    #[arg(long, default_value_t = 1e-3, value_parser = positive)]
    epsilon: f64,
    #[arg(long, default_value_t = 5000)]
    steps: usize,
    #[arg(long, default_value_t = 3e-4, value_parser = positive)]
    step_size: f64,
    /// Comma-separated ε values; one summary row per value instead of a single run.
    #[arg(long, value_delimiter = ',', value_parser = positive)]
    epsilon_sweep: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Construction report: one row block per construction step.
    #[arg(long, conflicts_with_all = ["model", "input"])]
    report: Option<PathBuf>,
    /// Model and dataset: the states after every block.
    #[arg(long, requires = "input")]
    model: Option<PathBuf>,
    #[arg(long = "in", requires = "model")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be a positive number, got {s}"))
    }
}

/// Maps an error to the exit code contract.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Dimension(_)
        | Error::InvalidInput(_)
        | Error::Dataset(_)
        | Error::Io(_)
        | Error::Json(_) => EXIT_INPUT,
        _ => EXIT_FAILURE,
    }
}

fn diagnostic(e: &Error) -> serde_json::Value {
    let kind = match e {
        Error::Dimension(_) => "dimension",
        Error::InvalidInput(_) => "invalid_input",
        Error::Dataset(_) => "dataset",
        Error::Hypothesis(_) => "hypothesis",
        Error::Construction { .. } => "construction",
        Error::Calibration { .. } => "calibration",
        Error::NonConvergence { .. } => "non_convergence",
        Error::Verification(_) => "verification",
        Error::Divergence { .. } => "divergence",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    };
    let mut v = json!({ "error": kind, "message": e.to_string() });
    match e {
        Error::Dataset(violation) => {
            v["clause"] = json!(violation.clause());
            v["violation"] = serde_json::to_value(violation).unwrap_or_default();
        }
        Error::Construction { step, .. } => v["step"] = json!(step),
        _ => {}
    }
    v
}

/// Runs the command line on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", diagnostic(&e));
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::GenDataset(a) => gen_dataset(a),
        Command::Validate { input } => {
            let ds = read_dataset(&input)?;
            println!(
                "{}",
                json!({ "valid": true, "d": ds.d, "N": ds.len(), "sum_m": ds.total_output_len() })
            );
            Ok(0)
        }
        Command::Construct(a) => construct(a),
        Command::Verify { model, input, tol } => verify(model, input, tol),
        Command::Simulate(a) => simulate_cmd(a),
        Command::TrainDemo(a) => train_demo(a),
        Command::PlotData(a) => plot_data(a),
    }
}

fn gen_dataset(a: GenArgs) -> Result<i32> {
    let cfg = GenConfig {
        seed: a.seed,
        d: a.d as usize,
        n_sequences: a.n_sequences,
        n_max: a.n_max,
        m_policy: a.m_policy,
        share: a.share,
    };
    let ds = generate_dataset(&cfg)?;
    match a.out {
        Some(path) => write_json(&path, &ds)?,
        None => print!("{}", to_json(&ds)?),
    }
    Ok(0)
}

fn construct(a: ConstructArgs) -> Result<i32> {
    let ds = read_dataset(&a.input)?;
    let (model, report, plan) = match a.mode {
        Mode::Hardmax => {
            let (m, r) = build_hardmax(&ds)?;
            (m, r, None)
        }
        Mode::Softmax => {
            let (m, r, p) = build_softmax(&ds)?;
            (m, r, Some(p))
        }
    };
    write_json(&a.out, &model)?;
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    if let (Some(path), Some(plan)) = (&a.plan, &plan) {
        write_json(path, plan)?;
    }
    println!(
        "{}",
        json!({
            "mode": report.mode,
            "L": report.num_blocks,
            "bound_L": report.bound_blocks,
            "P": report.param_count,
            "bound_P_coeff": report.param_coeff,
            "max_distance": report.max_distance(),
        })
    );
    Ok(0)
}

fn verify(model: PathBuf, input: PathBuf, tol: f64) -> Result<i32> {
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::InvalidInput(format!(
            "tolerance must be non-negative, got {tol}"
        )));
    }
    let t = read_transformer(&model)?;
    let ds = read_dataset(&input)?;
    if t.d != ds.d {
        return Err(Error::Dimension(format!(
            "model acts on R^{}, dataset lives in R^{}",
            t.d, ds.d
        )));
    }
    let mut pass = true;
    for (j, pair) in ds.pairs.iter().enumerate() {
        let dist = hausdorff_distance(&t.apply(&pair.input)?, &pair.output);
        let ok = dist <= tol;
        pass &= ok;
        println!(
            "sequence {j}: distance {dist:.6e} {}",
            if ok { "pass" } else { "FAIL" }
        );
    }
    println!(
        "{}",
        if pass {
            "all sequences within tolerance"
        } else {
            "verification failed"
        }
    );
    Ok(if pass { 0 } else { EXIT_FAILURE })
}

fn simulate_cmd(a: SimulateArgs) -> Result<i32> {
    let cfg = read_dynamics_config(&a.config)?;
    let x0 = read_sequence(&a.x0)?;
    let steps = a.steps.unwrap_or_else(|| cfg.default_max_steps(a.tol));
    let traj = simulate(&x0, &cfg, steps, a.tol)?;
    fs::write(&a.out, trajectory_csv(&traj))?;
    let (regime, prediction) = classify(&x0, &cfg);
    let last = traj.last();
    let deviation = prediction.map(|p| {
        p.iter()
            .zip(last.iter())
            .map(|(a, b)| a.dist(b))
            .fold(0.0, f64::max)
    });
    println!(
        "{}",
        json!({
            "classification": regime.label(),
            "steps": traj.steps_taken,
            "converged": traj.converged,
            "deviation": deviation,
        })
    );
    Ok(0)
}

fn train_demo(a: TrainArgs) -> Result<i32> {
    let syn = make_synthetic(a.seed, a.n_sequences, a.n, a.d as usize)?;
    let config = |eps: f64| TrainingConfig {
        step_size: a.step_size,
        ..TrainingConfig::new(eps, a.steps, a.seed)
    };
    match a.epsilon_sweep {
        Some(eps) => {
            let mut csv = String::from("epsilon,min_loss,threshold,crossed_at\n");
            for e in eps {
                let run = train(&config(e), &syn.arch, &syn.dataset, &syn.theta_exact, None)?;
                let crossed = run.crossed_at.map(|s| s.to_string()).unwrap_or_default();
                csv.push_str(&format!(
                    "{e:.16e},{:.16e},{:.16e},{crossed}\n",
                    run.min_loss(),
                    run.threshold
                ));
                println!(
                    "{}",
                    json!({ "epsilon": e, "min_loss": run.min_loss(), "threshold": run.threshold, "crossed_at": run.crossed_at })
                );
            }
            fs::write(&a.out, csv)?;
        }
        None => {
            let run = train(
                &config(a.epsilon),
                &syn.arch,
                &syn.dataset,
                &syn.theta_exact,
                None,
            )?;
            fs::write(&a.out, run.to_csv())?;
            println!(
                "{}",
                json!({
                    "kappa_exact": syn.kappa_exact,
                    "threshold": run.threshold,
                    "crossed_at": run.crossed_at,
                    "label": run.label,
                    "min_loss": run.min_loss(),
                })
            );
        }
    }
    Ok(0)
}

fn plot_data(a: PlotArgs) -> Result<i32> {
    let csv = if let Some(path) = a.report {
        let text = fs::read_to_string(&path)?;
        let report: crate::builder::ConstructionReport = serde_json::from_str(&text)?;
        states_csv(
            report
                .intermediate_states
                .iter()
                .enumerate()
                .map(|(k, s)| (k, s.after.as_str(), s.states.as_slice())),
        )
    } else if let (Some(model), Some(input)) = (a.model, a.input) {
        let t = read_transformer(&model)?;
        let ds = read_dataset(&input)?;
        let mut states = vec![ds.inputs()];
        for block in &t.blocks {
            let next = states
                .last()
                .expect("non-empty")
                .iter()
                .map(|s| block.apply(s))
                .collect::<Result<Vec<_>>>()?;
            states.push(next);
        }
        let labels: Vec<String> = (0..states.len())
            .map(|k| {
                if k == 0 {
                    "input".into()
                } else {
                    format!("block_{k}")
                }
            })
            .collect();
        states_csv(
            states
                .iter()
                .enumerate()
                .map(|(k, s)| (k, labels[k].as_str(), s.as_slice())),
        )
    } else {
        return Err(Error::InvalidInput(
            "plot-data needs --report, or --model with --in".into(),
        ));
    };
    fs::write(&a.out, csv)?;
    Ok(0)
}
