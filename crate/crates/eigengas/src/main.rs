//! Command-line front end: spectrum export, oracle validation, sweeps,
//! power-law fits, the trade-off intersection and SVG export.
//!
//! Exit codes: 0 on success, 2 when a validation check fails, 1 on error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use eigengas::gas;
use eigengas::hamiltonian::{BiasPreset, GateOp, HamiltonianSet};
use eigengas::harness::{self, RunConfig, SweepAxis};
use eigengas::noise::{AmplitudeSchedule, NoiseConfig, NoiseMode, NoisePath};

#[derive(Parser)]
#[command(
    name = "eigengas",
    about = "Noisy adiabatic CNOT simulation via eigenvalue-gas dynamics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of the config file (flags mirror config keys).
#[derive(Args, Clone, Debug, Default)]
struct Overrides {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed of the ensemble.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Gate operation: 00->00, 01->01, 10->11 or 11->10.
    #[arg(long, global = true)]
    operation: Option<String>,
    /// Bias preset: diagonal-ladder or commuting.
    #[arg(long, global = true)]
    bias_preset: Option<String>,
    /// Noise mode: off, frozen or ou.
    #[arg(long, global = true)]
    noise_mode: Option<String>,
    /// Constant-schedule amplitude.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Tanh-schedule amplitude; implies the tanh schedule.
    #[arg(long, global = true)]
    epsilon0: Option<f64>,
    /// Tanh-schedule decay constant.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    #[arg(long, global = true)]
    z_inv: Option<f64>,
    #[arg(long, global = true)]
    mu: Option<f64>,
    #[arg(long, global = true)]
    grid_points: Option<usize>,
    /// Ensemble size.
    #[arg(long, global = true)]
    ensemble_n: Option<usize>,
    /// Comma-separated sweep values (speeds or amplitudes).
    #[arg(long, global = true)]
    values: Option<String>,
    /// Fixed speed for amplitude sweeps.
    #[arg(long, global = true)]
    at_speed: Option<f64>,
    #[arg(long, global = true)]
    p_min: Option<f64>,
    #[arg(long, global = true)]
    p_max: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one realization and write its spectrum trace as CSV.
    Spectrum {
        #[command(flatten)]
        overrides: Overrides,
        /// Output CSV path for the level trajectories.
        #[arg(long)]
        out: PathBuf,
        /// Companion CSV of signed adjacent gaps (defaults to <out>.gaps.csv).
        #[arg(long)]
        gaps_out: Option<PathBuf>,
        /// Realization index within the ensemble.
        #[arg(long, default_value_t = 0)]
        realization: u64,
    },
    /// Sweep the gas and the diagonalization oracle over the same frozen
    /// noise and report the worst significant-figure agreement.
    Validate {
        #[command(flatten)]
        overrides: Overrides,
        /// Required worst-case agreement, in significant figures.
        #[arg(long, default_value_t = 4.0)]
        require: f64,
    },
    /// Run a speed or amplitude sweep and export the curve.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// speed or amplitude; defaults to the configured axis.
        #[arg(long)]
        axis: Option<String>,
        /// Curve CSV output path.
        #[arg(long)]
        out: PathBuf,
        /// Optional JSONL dump of every ensemble result.
        #[arg(long)]
        jsonl: Option<PathBuf>,
        /// Optional SVG chart of the curve.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Fit a power-law exponent to a sweep curve file.
    Fit {
        #[command(flatten)]
        overrides: Overrides,
        /// Curve CSV produced by `sweep`.
        #[arg(long)]
        curve: PathBuf,
        /// Restrict the fit to an axis window, as lo:hi.
        #[arg(long)]
        window: Option<String>,
    },
    /// Intersect success and fidelity curves of an amplitude sweep.
    Tradeoff {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        curve: PathBuf,
    },
    /// Render a sweep curve file as an SVG chart.
    ExportSvg {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "sweep")]
        title: String,
        /// Use a linear abscissa (amplitude sweeps) instead of log10.
        #[arg(long)]
        linear_x: bool,
    },
}

fn parse_operation(s: &str) -> Result<GateOp> {
    match s {
        "00->00" | "00" => Ok(GateOp::ZeroZero),
        "01->01" | "01" => Ok(GateOp::ZeroOne),
        "10->11" | "10" => Ok(GateOp::OneZero),
        "11->10" | "11" => Ok(GateOp::OneOne),
        other => anyhow::bail!("unknown operation {other:?}"),
    }
}

fn parse_preset(s: &str) -> Result<BiasPreset> {
    match s {
        "diagonal-ladder" => Ok(BiasPreset::DiagonalLadder),
        "commuting" => Ok(BiasPreset::Commuting),
        other => anyhow::bail!("unknown bias preset {other:?}"),
    }
}

fn parse_mode(s: &str) -> Result<NoiseMode> {
    match s {
        "off" => Ok(NoiseMode::Off),
        "frozen" => Ok(NoiseMode::Frozen),
        "ou" => Ok(NoiseMode::Ou),
        other => anyhow::bail!("unknown noise mode {other:?}"),
    }
}

fn parse_axis(s: &str) -> Result<SweepAxis> {
    match s {
        "speed" => Ok(SweepAxis::Speed),
        "amplitude" => Ok(SweepAxis::Amplitude),
        other => anyhow::bail!("unknown sweep axis {other:?}"),
    }
}

fn load_config(ov: &Overrides) -> Result<RunConfig> {
    let mut cfg = match &ov.config {
        Some(path) => RunConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = ov.seed {
        cfg.ensemble.seed = seed;
    }
    if let Some(op) = &ov.operation {
        cfg.operation = parse_operation(op)?;
    }
    if let Some(p) = &ov.bias_preset {
        cfg.bias_preset = parse_preset(p)?;
    }
    if let Some(m) = &ov.noise_mode {
        cfg.noise.mode = parse_mode(m)?;
    }
    if let Some(eps) = ov.epsilon {
        cfg.noise.schedule = AmplitudeSchedule::Constant { epsilon: eps };
    }
    if let Some(eps0) = ov.epsilon0 {
        let alpha = ov.alpha.unwrap_or(10.0);
        cfg.noise.schedule = AmplitudeSchedule::Tanh {
            epsilon0: eps0,
            alpha,
        };
    }
    if let Some(tau) = ov.tau {
        cfg.tau = tau;
    }
    if let Some(z_inv) = ov.z_inv {
        cfg.z_inv = z_inv;
    }
    if let Some(mu) = ov.mu {
        cfg.mu = mu;
    }
    if let Some(g) = ov.grid_points {
        cfg.grid_points = g;
    }
    if let Some(n) = ov.ensemble_n {
        cfg.ensemble.n = n;
    }
    if let Some(values) = &ov.values {
        cfg.sweep.values = values
            .split(',')
            .map(|v| v.trim().parse::<f64>().context("parsing --values"))
            .collect::<Result<Vec<f64>>>()?;
    }
    if let Some(s) = ov.at_speed {
        cfg.sweep.at_speed = Some(s);
    }
    if let Some(p) = ov.p_min {
        cfg.fit.p_min = p;
    }
    if let Some(p) = ov.p_max {
        cfg.fit.p_max = p;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_spectrum(
    ov: &Overrides,
    out: &PathBuf,
    gaps_out: &Option<PathBuf>,
    realization: u64,
) -> Result<()> {
    let cfg = load_config(ov)?;
    let set = HamiltonianSet::build(cfg.operation, cfg.bias_preset, cfg.z(), cfg.mu)?;
    let seed = harness::split_seed(cfg.ensemble.seed, realization);
    let mut path = NoisePath::init(
        &NoiseConfig {
            tau: cfg.tau,
            schedule: cfg.noise.schedule,
            mode: cfg.noise.mode,
            seed,
        },
        set.dim(),
    );
    let state0 = gas::init_exact(&set, &path.current().clone())?;
    let (trace, _) = gas::integrate(
        &state0,
        &mut path,
        &cfg.integrator.to_options(),
        cfg.grid_points,
    )?;
    harness::write_trace_csv(&trace, out)?;
    let gaps_path = gaps_out
        .clone()
        .unwrap_or_else(|| out.with_extension("gaps.csv"));
    harness::write_gaps_csv(&trace, &gaps_path)?;
    println!(
        "wrote {} ({} points, {} steps, {} refinements) and {}",
        out.display(),
        trace.points(),
        trace.diagnostics.steps,
        trace.diagnostics.refinements,
        gaps_path.display()
    );
    Ok(())
}

fn cmd_validate(ov: &Overrides, require: f64) -> Result<bool> {
    let cfg = load_config(ov)?;
    let figs = harness::validate_against_oracle(&cfg, cfg.ensemble.seed)?;
    let mode = if matches!(cfg.noise.mode, NoiseMode::Off) {
        "noise off"
    } else {
        "frozen noise"
    };
    let ok = figs >= require;
    println!(
        "{} {} {}: worst agreement {:.2} significant figures (require {:.2}) -> {}",
        cfg.operation,
        match cfg.bias_preset {
            BiasPreset::DiagonalLadder => "diagonal-ladder",
            BiasPreset::Commuting => "commuting",
        },
        mode,
        figs,
        require,
        if ok { "PASS" } else { "FAIL" }
    );
    Ok(ok)
}

fn cmd_sweep(
    ov: &Overrides,
    axis: &Option<String>,
    out: &PathBuf,
    jsonl: &Option<PathBuf>,
    svg: &Option<PathBuf>,
) -> Result<()> {
    let cfg = load_config(ov)?;
    let axis = match axis {
        Some(s) => parse_axis(s)?,
        None => cfg.sweep.axis,
    };
    let curve = harness::sweep(&cfg, axis)?;
    harness::write_curve_csv(&curve.points, out)?;
    println!("wrote {} ({} points)", out.display(), curve.points.len());
    if let Some(path) = jsonl {
        harness::write_jsonl(&curve.ensembles, path)?;
        println!("wrote {}", path.display());
    }
    if let Some(path) = svg {
        let series = [harness::SvgSeries {
            label: "mean success",
            points: &curve.points,
        }];
        harness::write_svg(
            &series,
            "success probability",
            matches!(axis, SweepAxis::Speed),
            path,
        )?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_fit(ov: &Overrides, curve: &PathBuf, window: &Option<String>) -> Result<()> {
    let cfg = load_config(ov)?;
    let points = harness::read_curve_csv(curve)?;
    let window = match window {
        Some(w) => {
            let (lo, hi) = w
                .split_once(':')
                .context("--window expects lo:hi")?;
            Some((lo.trim().parse::<f64>()?, hi.trim().parse::<f64>()?))
        }
        None => None,
    };
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.mean_success)).collect();
    let fit = harness::fit_power_law(&pairs, cfg.fit.p_min, cfg.fit.p_max, window)?;
    println!(
        "gamma = {:.4} +- {:.4}  (R^2 = {:.4}, {} points, window [{:.3e}, {:.3e}])",
        fit.gamma, fit.stderr, fit.r_squared, fit.points_used, fit.window.0, fit.window.1
    );
    Ok(())
}

fn cmd_tradeoff(curve: &PathBuf) -> Result<()> {
    let points = harness::read_curve_csv(curve)?;
    match harness::find_tradeoff(&points)? {
        harness::TradeoffResult::Intersection {
            epsilon_star,
            crossings,
        } => {
            println!("intersection at amplitude {epsilon_star:.5} ({crossings} crossing(s))");
        }
        harness::TradeoffResult::NoIntersection => {
            println!("no intersection of success and fidelity in the sampled range");
        }
    }
    Ok(())
}

fn cmd_export_svg(curve: &PathBuf, out: &PathBuf, title: &str, linear_x: bool) -> Result<()> {
    let points = harness::read_curve_csv(curve)?;
    let series = [
        harness::SvgSeries {
            label: "mean success",
            points: &points,
        },
        harness::SvgSeries {
            label: "mean fidelity",
            points: &fidelity_as_success(&points),
        },
    ];
    harness::write_svg(&series, title, !linear_x, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

/// Re-plot the fidelity column through the success renderer.
fn fidelity_as_success(points: &[harness::CurvePoint]) -> Vec<harness::CurvePoint> {
    points
        .iter()
        .map(|p| harness::CurvePoint {
            mean_success: p.mean_fidelity,
            stderr_success: p.stderr_fidelity,
            ..*p
        })
        .collect()
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Spectrum {
            overrides,
            out,
            gaps_out,
            realization,
        } => {
            cmd_spectrum(overrides, out, gaps_out, *realization)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { overrides, require } => {
            let ok = cmd_validate(overrides, *require)?;
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Sweep {
            overrides,
            axis,
            out,
            jsonl,
            svg,
        } => {
            cmd_sweep(overrides, axis, out, jsonl, svg)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Fit {
            overrides,
            curve,
            window,
        } => {
            cmd_fit(overrides, curve, window)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Tradeoff { curve, .. } => {
            cmd_tradeoff(curve)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportSvg {
            curve,
            out,
            title,
            linear_x,
            ..
        } => {
            cmd_export_svg(curve, out, title, *linear_x)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
