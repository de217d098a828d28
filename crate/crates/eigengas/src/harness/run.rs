//! Seeded ensemble execution: one realization end to end, deterministic
//! parallel ensembles, and speed/amplitude sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{RunConfig, SweepAxis};
use crate::error::{Error, Result};
use crate::gas;
use crate::hamiltonian::HamiltonianSet;
use crate::lzs::{self, CrossingEvent};
use crate::noise::{AmplitudeSchedule, NoiseConfig, NoisePath};
use crate::oracle;

/// Counter-based split of the master seed: realization `index` always gets
/// the same stream no matter how the ensemble is scheduled.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub lower: usize,
    pub lambda_star: f64,
    pub delta_min: f64,
    pub coupling: f64,
}

impl From<&CrossingEvent> for EventRecord {
    fn from(e: &CrossingEvent) -> Self {
        Self {
            lower: e.lower,
            lambda_star: e.lambda_star,
            delta_min: e.delta_min,
            coupling: e.coupling,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessPoint {
    /// Computation speed `1/T`.
    pub speed: f64,
    pub success: f64,
}

/// Everything recorded about one realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub index: u64,
    pub seed: u64,
    /// Failure reason; when set the numeric fields are zeroed and the
    /// record is excluded from aggregates.
    pub failed: Option<String>,
    pub successes: Vec<SuccessPoint>,
    pub fidelity: f64,
    /// Smallest refined gap between the two lowest levels; falls back to
    /// the smallest sampled gap when no ground-pair event exists.
    pub min_ground_gap: f64,
    pub events: Vec<EventRecord>,
    pub steps: u64,
    pub refinements: u64,
    pub max_corrector_residual: f64,
    pub coupling_floor_events: usize,
}

impl RealizationRecord {
    fn failure(index: u64, seed: u64, reason: String) -> Self {
        Self {
            index,
            seed,
            failed: Some(reason),
            successes: Vec::new(),
            fidelity: 0.0,
            min_ground_gap: 0.0,
            events: Vec::new(),
            steps: 0,
            refinements: 0,
            max_corrector_residual: 0.0,
            coupling_floor_events: 0,
        }
    }
}

/// One aggregated point of a sweep curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub mean_success: f64,
    pub stderr_success: f64,
    pub mean_fidelity: f64,
    pub stderr_fidelity: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

/// One ensemble: the per-realization records plus fixed-order aggregates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub config_hash: String,
    /// Amplitude the ensemble was run at, for amplitude sweeps.
    pub axis_value: Option<f64>,
    pub speeds: Vec<f64>,
    pub records: Vec<RealizationRecord>,
    pub points: Vec<CurvePoint>,
    pub failed: usize,
}

/// A full sweep: curve points in axis order, with the underlying ensembles.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepCurve {
    pub axis: SweepAxis,
    pub points: Vec<CurvePoint>,
    pub ensembles: Vec<EnsembleResult>,
}

/// Run one realization: build the Hamiltonians, seed the noise, initialise
/// the gas exactly, integrate the sweep, detect crossings, and evaluate the
/// transition cascade at every requested speed plus the final-state
/// fidelity. Failures are captured in the record rather than propagated.
pub fn run_realization(cfg: &RunConfig, index: u64, speeds: &[f64]) -> RealizationRecord {
    let seed = split_seed(cfg.ensemble.seed, index);
    match run_realization_inner(cfg, index, seed, speeds) {
        Ok(rec) => rec,
        Err(e) => RealizationRecord::failure(index, seed, e.to_string()),
    }
}

fn run_realization_inner(
    cfg: &RunConfig,
    index: u64,
    seed: u64,
    speeds: &[f64],
) -> Result<RealizationRecord> {
    let set = HamiltonianSet::build(cfg.operation, cfg.bias_preset, cfg.z(), cfg.mu)?;
    let noise_cfg = NoiseConfig {
        tau: cfg.tau,
        schedule: cfg.noise.schedule,
        mode: cfg.noise.mode,
        seed,
    };
    noise_cfg.validate()?;
    let mut path = NoisePath::init(&noise_cfg, set.dim());
    let dh1 = path.current().clone();
    let state0 = gas::init_exact(&set, &dh1)?;
    let opts = cfg.integrator.to_options();
    let (trace, _end) = gas::integrate(&state0, &mut path, &opts, cfg.grid_points)?;

    let events = lzs::detect_crossings(&trace);
    let successes: Vec<SuccessPoint> = speeds
        .iter()
        .map(|&speed| {
            let t = 1.0 / speed;
            SuccessPoint {
                speed,
                success: lzs::propagate(&events, t, trace.dim()).ground(),
            }
        })
        .collect();

    let fidelity = oracle::compute_fidelity(&set.h0, path.current())?.f;

    let min_ground_gap = events
        .iter()
        .filter(|e| e.lower == 0)
        .map(|e| e.delta_min)
        .fold(f64::INFINITY, f64::min);
    let min_ground_gap = if min_ground_gap.is_finite() {
        min_ground_gap
    } else {
        // No ground-pair minimum: report the smallest sampled gap instead.
        (0..trace.points())
            .map(|i| {
                let perm = trace.sort_permutation(i);
                trace.levels[i][perm[1]] - trace.levels[i][perm[0]]
            })
            .fold(f64::INFINITY, f64::min)
    };

    let coupling_floor_events = events.iter().filter(|e| e.coupling_floored()).count();
    Ok(RealizationRecord {
        index,
        seed,
        failed: None,
        successes,
        fidelity,
        min_ground_gap,
        events: events.iter().map(EventRecord::from).collect(),
        steps: trace.diagnostics.steps,
        refinements: trace.diagnostics.refinements,
        max_corrector_residual: trace.diagnostics.max_corrector_residual,
        coupling_floor_events,
    })
}

/// Mean and standard error over the successful records, folded in
/// realization-index order so the result does not depend on scheduling.
pub fn aggregate(records: &[RealizationRecord], speeds: &[f64]) -> Vec<CurvePoint> {
    let ok: Vec<&RealizationRecord> = records.iter().filter(|r| r.failed.is_none()).collect();
    let n_ok = ok.len();
    let n_failed = records.len() - n_ok;
    let mean_se = |values: &[f64]| -> (f64, f64) {
        if values.is_empty() {
            return (0.0, 0.0);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return (mean, 0.0);
        }
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    };
    let fid: Vec<f64> = ok.iter().map(|r| r.fidelity).collect();
    let (mean_fidelity, stderr_fidelity) = mean_se(&fid);

    speeds
        .iter()
        .enumerate()
        .map(|(si, &speed)| {
            let succ: Vec<f64> = ok.iter().map(|r| r.successes[si].success).collect();
            let (mean_success, stderr_success) = mean_se(&succ);
            CurvePoint {
                x: speed,
                mean_success,
                stderr_success,
                mean_fidelity,
                stderr_fidelity,
                n_ok,
                n_failed,
            }
        })
        .collect()
}

/// Run `cfg.ensemble.n` independent realizations (in parallel) and fold the
/// aggregates. More than 10% failed realizations rejects the ensemble.
pub fn run_ensemble(
    cfg: &RunConfig,
    speeds: &[f64],
    axis_value: Option<f64>,
) -> Result<EnsembleResult> {
    cfg.validate()?;
    let n = cfg.ensemble.n;
    let records: Vec<RealizationRecord> = (0..n as u64)
        .into_par_iter()
        .map(|i| run_realization(cfg, i, speeds))
        .collect();
    let failed = records.iter().filter(|r| r.failed.is_some()).count();
    if failed * 10 > n {
        return Err(Error::EnsembleFailed { failed, total: n });
    }
    let points = aggregate(&records, speeds);
    Ok(EnsembleResult {
        config_hash: cfg.hash(),
        axis_value,
        speeds: speeds.to_vec(),
        records,
        points,
        failed,
    })
}

fn with_amplitude(schedule: AmplitudeSchedule, value: f64) -> AmplitudeSchedule {
    match schedule {
        AmplitudeSchedule::Constant { .. } => AmplitudeSchedule::Constant { epsilon: value },
        AmplitudeSchedule::Tanh { alpha, .. } => AmplitudeSchedule::Tanh {
            epsilon0: value,
            alpha,
        },
    }
}

/// Run the sweep described by `cfg.sweep`.
///
/// A speed sweep integrates each realization once and reuses its crossing
/// events at every speed; an amplitude sweep runs one ensemble per amplitude
/// at the configured fixed speed.
pub fn sweep(cfg: &RunConfig, axis: SweepAxis) -> Result<SweepCurve> {
    match axis {
        SweepAxis::Speed => {
            let ensemble = run_ensemble(cfg, &cfg.sweep.values.clone(), None)?;
            Ok(SweepCurve {
                axis,
                points: ensemble.points.clone(),
                ensembles: vec![ensemble],
            })
        }
        SweepAxis::Amplitude => {
            let speed = cfg.sweep.at_speed.ok_or_else(|| {
                Error::InvalidConfig("amplitude sweeps need sweep.at_speed".into())
            })?;
            let mut points = Vec::with_capacity(cfg.sweep.values.len());
            let mut ensembles = Vec::with_capacity(cfg.sweep.values.len());
            for &eps in &cfg.sweep.values {
                let mut sub = cfg.clone();
                sub.noise.schedule = with_amplitude(cfg.noise.schedule, eps);
                let ensemble = run_ensemble(&sub, &[speed], Some(eps))?;
                let mut point = ensemble.points[0];
                point.x = eps;
                points.push(point);
                ensembles.push(ensemble);
            }
            Ok(SweepCurve {
                axis,
                points,
                ensembles,
            })
        }
    }
}

/// Sweep the gas and the diagonalization oracle over the same frozen noise
/// and report the worst significant-figure agreement. This is the
/// validation entry point: `mode = off` checks the noiseless sweep, any
/// other mode freezes the initial draw.
pub fn validate_against_oracle(cfg: &RunConfig, seed: u64) -> Result<f64> {
    let set = HamiltonianSet::build(cfg.operation, cfg.bias_preset, cfg.z(), cfg.mu)?;
    let noise_cfg = NoiseConfig {
        tau: cfg.tau,
        schedule: cfg.noise.schedule,
        mode: crate::noise::NoiseMode::Frozen,
        seed,
    };
    let mut path = match cfg.noise.mode {
        crate::noise::NoiseMode::Off => NoisePath::init(
            &NoiseConfig {
                mode: crate::noise::NoiseMode::Off,
                ..noise_cfg
            },
            set.dim(),
        ),
        _ => NoisePath::init(&noise_cfg, set.dim()),
    };
    let dh = path.current().clone();
    let state0 = gas::init_exact(&set, &dh)?;
    let opts = cfg.integrator.to_options();
    let (trace, _) = gas::integrate(&state0, &mut path, &opts, cfg.grid_points)?;
    let grid = oracle::lambda_grid(cfg.grid_points);
    let reference = oracle::reference_trace(&set, &dh, &grid)?;
    oracle::compare_traces(&reference, &trace)
}
