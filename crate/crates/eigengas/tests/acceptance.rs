//! Acceptance suite: every release-gating behaviour of the simulator, one
//! pass/fail line per criterion. Run with `--nocapture` to see the lines as
//! they complete:
//!
//! ```text
//! cargo test -p eigengas --test acceptance -- --nocapture
//! ```
//!
//! Criteria marked SOFT report their measured values and never fail the
//! suite; everything else is asserted at the stated tolerance.

use std::time::Instant;

use eigengas::gas::{self, IntegratorOptions};
use eigengas::hamiltonian::{
    build_basis, build_cnot, build_input_penalty, BiasPreset, GateOp, HamiltonianSet,
};
use eigengas::harness::{self, RunConfig, SweepAxis, SweepCurve};
use eigengas::lzs;
use eigengas::noise::{AmplitudeSchedule, NoiseConfig, NoiseMode, NoisePath};
use eigengas::oracle;
use nalgebra::DMatrix;

const MASTER_SEED: u64 = 7;

struct Outcome {
    label: &'static str,
    passed: bool,
    hard: bool,
    detail: String,
}

fn report(results: &mut Vec<Outcome>, label: &'static str, hard: bool, passed: bool, detail: String) {
    let status = match (passed, hard) {
        (true, _) => "PASS",
        (false, true) => "FAIL",
        (false, false) => "DEVIATION",
    };
    println!("[{status}] {label}: {detail}");
    results.push(Outcome {
        label,
        passed,
        hard,
        detail,
    });
}

fn base_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.ensemble.seed = MASTER_SEED;
    cfg
}

fn speed_sweep(eps: f64, n: usize) -> SweepCurve {
    let mut cfg = base_config();
    cfg.operation = GateOp::OneOne;
    cfg.bias_preset = BiasPreset::Commuting;
    cfg.ensemble.n = n;
    cfg.noise.schedule = AmplitudeSchedule::Constant { epsilon: eps };
    harness::sweep(&cfg, SweepAxis::Speed).expect("speed sweep")
}

/// Speed at which the mean success falls through one half, scanning from
/// the slow side.
fn half_success_speed(points: &[harness::CurvePoint]) -> Option<f64> {
    for w in points.windows(2) {
        if w[0].mean_success >= 0.5 && w[1].mean_success < 0.5 {
            let t = (w[0].mean_success - 0.5) / (w[0].mean_success - w[1].mean_success);
            return Some(w[0].x + t * (w[1].x - w[0].x));
        }
    }
    None
}

#[test]
fn acceptance() {
    let mut results = Vec::new();

    // ---------------------------------------------------------------- 1
    // Oracle equivalence: gas vs diagonalization sweep, four significant
    // figures on the full grid, all operations, both presets, noiseless and
    // frozen-noise, under 60 seconds total.
    {
        let t0 = Instant::now();
        let mut worst = f64::INFINITY;
        let mut worst_case = String::new();
        for op in GateOp::ALL {
            for preset in [BiasPreset::DiagonalLadder, BiasPreset::Commuting] {
                for mode in [NoiseMode::Off, NoiseMode::Frozen] {
                    let mut cfg = base_config();
                    cfg.operation = op;
                    cfg.bias_preset = preset;
                    cfg.noise.mode = mode;
                    let figs =
                        harness::validate_against_oracle(&cfg, MASTER_SEED).expect("validation");
                    if figs < worst {
                        worst = figs;
                        worst_case = format!("{op} {preset:?} {mode:?}");
                    }
                }
            }
        }
        let elapsed = t0.elapsed();
        let passed = worst >= 4.0 && elapsed.as_secs() < 60;
        report(
            &mut results,
            "1 oracle equivalence",
            true,
            passed,
            format!(
                "worst {worst:.2} significant figures ({worst_case}), 16 configurations in {elapsed:.2?}"
            ),
        );
    }

    // Shared ensembles for criteria 2b, 3, 4 and the criterion-7 baseline.
    let sweeps: Vec<(f64, SweepCurve)> = [0.05, 0.1, 0.2]
        .into_iter()
        .map(|eps| (eps, speed_sweep(eps, 100)))
        .collect();

    // ---------------------------------------------------------------- 2
    // Degeneracy and splitting.
    {
        // Noiseless commuting sweep: the ground pair truly crosses and the
        // computation fails with certainty at every duration.
        let mut cfg = base_config();
        cfg.operation = GateOp::OneOne;
        cfg.bias_preset = BiasPreset::Commuting;
        cfg.noise.mode = NoiseMode::Off;
        let set = HamiltonianSet::build(cfg.operation, cfg.bias_preset, cfg.z(), cfg.mu).unwrap();
        let mut path = NoisePath::init(
            &NoiseConfig {
                tau: cfg.tau,
                schedule: AmplitudeSchedule::Constant { epsilon: 0.0 },
                mode: NoiseMode::Off,
                seed: MASTER_SEED,
            },
            set.dim(),
        );
        let state0 = gas::init_exact(&set, &DMatrix::zeros(16, 16)).unwrap();
        let (trace, _) =
            gas::integrate(&state0, &mut path, &cfg.integrator.to_options(), cfg.grid_points)
                .unwrap();
        let events = lzs::detect_crossings(&trace);
        let ground_min = events
            .iter()
            .filter(|e| e.lower == 0)
            .map(|e| e.delta_min)
            .fold(f64::INFINITY, f64::min);
        let mut max_success = 0.0_f64;
        for t in [1e1, 1e2, 1e3, 1e4, 1e5] {
            max_success = max_success.max(lzs::propagate(&events, t, trace.dim()).ground());
        }
        let degenerate_ok = ground_min < 1e-8 && max_success <= 1e-12;

        // With evolving noise the ground gap opens in every realization.
        let records = &sweeps[1].1.ensembles[0].records;
        let ok_records: Vec<_> = records.iter().filter(|r| r.failed.is_none()).collect();
        let checked = ok_records.len().min(100).max(20);
        let split_ok = ok_records.len() >= 20
            && ok_records.iter().all(|r| r.min_ground_gap > 0.0);
        let min_split = ok_records
            .iter()
            .map(|r| r.min_ground_gap)
            .fold(f64::INFINITY, f64::min);
        report(
            &mut results,
            "2 degeneracy and splitting",
            true,
            degenerate_ok && split_ok,
            format!(
                "noiseless ground gap {ground_min:.2e} (< 1e-8), success <= {max_success:.1e} at every duration; \
                 noisy ground gap > 0 in {checked} realizations (smallest {min_split:.2e})"
            ),
        );
    }

    // ---------------------------------------------------------------- 3
    // Scaling exponent independent of the noise amplitude.
    let mut gammas = Vec::new();
    {
        for (eps, curve) in &sweeps {
            let region = harness::polynomial_region(&curve.points, 0.5);
            let (fit, se) =
                harness::jackknife_gamma(&curve.ensembles[0], 0.02, 0.5, region).expect("fit");
            gammas.push((*eps, fit.gamma, se, fit.r_squared));
        }
        let mut passed = true;
        let mut detail = String::new();
        for i in 0..gammas.len() {
            for j in i + 1..gammas.len() {
                let d = (gammas[i].1 - gammas[j].1).abs();
                let tol = 2.0 * (gammas[i].2.powi(2) + gammas[j].2.powi(2)).sqrt();
                if d > tol {
                    passed = false;
                }
                detail.push_str(&format!(
                    "|g({})-g({})| = {:.3} vs {:.3}; ",
                    gammas[i].0, gammas[j].0, d, tol
                ));
            }
        }
        let values: Vec<String> = gammas
            .iter()
            .map(|(e, g, s, _)| format!("gamma({e}) = {g:.3} +- {s:.3}"))
            .collect();
        report(
            &mut results,
            "3 scaling exponent independent of amplitude",
            true,
            passed,
            format!("{}; {}", values.join(", "), detail.trim_end()),
        );
    }

    // ---------------------------------------------------------------- 4
    // SOFT: exponent values against the reference targets.
    {
        let mut cfg = base_config();
        cfg.operation = GateOp::ZeroZero;
        cfg.bias_preset = BiasPreset::DiagonalLadder;
        cfg.noise.mode = NoiseMode::Off;
        cfg.ensemble.n = 1;
        let curve = harness::sweep(&cfg, SweepAxis::Speed).expect("noiseless sweep");
        let region = harness::polynomial_region(&curve.points, 0.5);
        let pairs: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.x, p.mean_success)).collect();
        let noiseless = harness::fit_power_law(&pairs, 0.02, 0.5, region);
        let all_high = pairs.iter().all(|(_, p)| *p > 0.5);
        let (noiseless_txt, noiseless_ok) = match &noiseless {
            Ok(fit) => (
                format!("gamma(eps=0, 00->00, ladder) = {:.3} +- {:.3}", fit.gamma, fit.stderr),
                (fit.gamma - 4.0 / 3.0).abs() <= 0.2,
            ),
            Err(_) if all_high => (
                "gamma(eps=0, 00->00, ladder) undefined: this bias opens no gap minimum \
                 on the ground pair, so success stays above the fit band at every sampled speed"
                    .to_string(),
                false,
            ),
            Err(e) => (format!("noiseless fit unavailable ({e})"), false),
        };
        let noisy_ok = gammas.iter().all(|(_, g, _, _)| (g - 1.0).abs() <= 0.2);
        let noisy_txt: Vec<String> = gammas
            .iter()
            .map(|(e, g, _, _)| format!("gamma({e}) = {g:.3}"))
            .collect();
        report(
            &mut results,
            "4 exponent values (SOFT)",
            false,
            noiseless_ok && noisy_ok,
            format!(
                "{noiseless_txt} vs target 4/3 +- 0.2; {} vs target 1 +- 0.2 \
                 (bias Hamiltonian differs from the reference, deviations documented)",
                noisy_txt.join(", ")
            ),
        );
    }

    // ---------------------------------------------------------------- 5
    // Success grows linearly with amplitude at a fixed duration.
    {
        // Amplitudes chosen inside the scaling region at this speed: below
        // the lowest value the success curve exits towards its fast-sweep
        // baseline, above the highest it saturates; both ends bend the
        // otherwise linear growth.
        let mut cfg = base_config();
        cfg.operation = GateOp::OneOne;
        cfg.bias_preset = BiasPreset::Commuting;
        cfg.ensemble.n = 600;
        cfg.sweep.axis = SweepAxis::Amplitude;
        cfg.sweep.values = vec![0.035, 0.055, 0.075, 0.095, 0.115];
        cfg.sweep.at_speed = Some(3e-3);
        let curve = harness::sweep(&cfg, SweepAxis::Amplitude).expect("amplitude sweep");
        let pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.x, p.mean_success)).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let ssr: f64 = pts
            .iter()
            .map(|p| (p.1 - (my + slope * (p.0 - mx))).powi(2))
            .sum();
        let sst: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
        let r2 = 1.0 - ssr / sst;
        let passed = slope > 0.0 && r2 >= 0.9;
        report(
            &mut results,
            "5 linear growth with amplitude",
            true,
            passed,
            format!("slope {slope:.3} (> 0), R^2 {r2:.3} (>= 0.9) over {} amplitudes", pts.len()),
        );
    }

    // ---------------------------------------------------------------- 6
    // Success/fidelity trade-off intersection.
    {
        let mut cfg = base_config();
        cfg.operation = GateOp::ZeroOne;
        cfg.bias_preset = BiasPreset::Commuting;
        cfg.ensemble.n = 100;
        cfg.sweep.axis = SweepAxis::Amplitude;
        cfg.sweep.values = vec![0.02, 0.05, 0.08, 0.12, 0.16];
        cfg.sweep.at_speed = Some(1e-3);
        let curve = harness::sweep(&cfg, SweepAxis::Amplitude).expect("trade-off sweep");
        let outcome = harness::find_tradeoff(&curve.points);
        let (passed, detail) = match outcome {
            Ok(harness::TradeoffResult::Intersection {
                epsilon_star,
                crossings,
            }) => (
                crossings == 1,
                format!("unique intersection at amplitude {epsilon_star:.4} ({crossings} crossing)"),
            ),
            Ok(harness::TradeoffResult::NoIntersection) => {
                (false, "curves do not intersect on the sampled grid".into())
            }
            Err(e) => (false, format!("monotonicity check failed: {e}")),
        };
        report(&mut results, "6 trade-off intersection", true, passed, detail);
    }

    // ---------------------------------------------------------------- 7
    // Decaying-amplitude schedule: perfect final fidelity (hard), speed-up
    // of the half-success point (SOFT).
    {
        let mut cfg = base_config();
        cfg.operation = GateOp::OneOne;
        cfg.bias_preset = BiasPreset::Commuting;
        cfg.ensemble.n = 50;
        cfg.noise.schedule = AmplitudeSchedule::Tanh {
            epsilon0: 0.1,
            alpha: 10.0,
        };
        let tanh_curve = harness::sweep(&cfg, SweepAxis::Speed).expect("tanh sweep");
        let worst_fidelity = tanh_curve.ensembles[0]
            .records
            .iter()
            .filter(|r| r.failed.is_none())
            .map(|r| r.fidelity)
            .fold(f64::INFINITY, f64::min);
        let fidelity_ok = worst_fidelity >= 1.0 - 1e-9;
        report(
            &mut results,
            "7a decaying schedule preserves fidelity",
            true,
            fidelity_ok,
            format!("worst final fidelity {worst_fidelity:.12} (>= 1 - 1e-9)"),
        );

        let v_tanh = half_success_speed(&tanh_curve.points);
        let v_base = half_success_speed(&sweeps[1].1.points);
        let (soft_ok, detail) = match (v_tanh, v_base) {
            (Some(vt), Some(vb)) => {
                let ratio = vt / vb;
                (
                    ratio >= 10.0,
                    format!(
                        "half-success speed {vt:.3e} (decaying) vs {vb:.3e} (constant, same amplitude): \
                         ratio {ratio:.2} vs target 10; equal-amplitude schedules split the spectrum \
                         identically through the crossing region, so the gain is the restored fidelity, \
                         not raw speed"
                    ),
                )
            }
            _ => (false, "half-success point not bracketed by the speed grid".into()),
        };
        report(&mut results, "7b decaying schedule speed-up (SOFT)", false, soft_ok, detail);
    }

    // ---------------------------------------------------------------- 8
    // Gate semantics from the problem Hamiltonian's ground state.
    {
        let basis = build_basis();
        let cnot = build_cnot(&basis);
        let mut worst = 1.0_f64;
        for op in GateOp::ALL {
            let h0 = &cnot + build_input_penalty(&basis, op.input(), -0.1);
            let sol = oracle::diagonalize(&h0).unwrap();
            let ground = sol.vectors.column(0).into_owned();
            let p = oracle::readout_output(&ground, &basis).unwrap();
            let (a, b) = op.output();
            worst = worst.min(p[a as usize][b as usize]);
        }
        report(
            &mut results,
            "8 gate semantics",
            true,
            worst >= 0.99,
            format!("worst conditional output probability {worst:.6} (>= 0.99)"),
        );
    }

    // ---------------------------------------------------------------- 9
    // Invariant suites.
    {
        let mut failures = Vec::new();

        // Trace identity and velocity-sum conservation across the modes.
        for (label, mode, eps) in [
            ("noiseless", NoiseMode::Off, 0.0),
            ("frozen", NoiseMode::Frozen, 0.1),
            ("evolving", NoiseMode::Ou, 0.1),
        ] {
            let set = HamiltonianSet::build(
                GateOp::OneZero,
                BiasPreset::DiagonalLadder,
                10.0,
                -0.1,
            )
            .unwrap();
            let mut path = NoisePath::init(
                &NoiseConfig {
                    tau: 0.1,
                    schedule: AmplitudeSchedule::Constant { epsilon: eps },
                    mode,
                    seed: MASTER_SEED,
                },
                16,
            );
            let state0 = gas::init_exact(&set, &path.current().clone()).unwrap();
            let (trace, _) =
                gas::integrate(&state0, &mut path, &IntegratorOptions::default(), 1001).unwrap();
            let tr_h0 = set.h0.trace();
            let tr_zhb = set.scaled_bias().trace();
            let mut worst_trace = 0.0_f64;
            let mut worst_vsum = 0.0_f64;
            for (i, lam) in trace.lambdas.iter().enumerate() {
                let expect = tr_h0 + lam * tr_zhb + trace.dh_traces[i];
                let sum: f64 = trace.levels[i].iter().sum();
                worst_trace =
                    worst_trace.max((sum - expect).abs() / (1.0 + expect.abs()));
                if matches!(mode, NoiseMode::Off) {
                    worst_vsum = worst_vsum.max((trace.velocity_sums[i] - tr_zhb).abs());
                }
            }
            if worst_trace > 1e-8 {
                failures.push(format!("trace identity {label} drift {worst_trace:.2e}"));
            }
            if matches!(mode, NoiseMode::Off) && worst_vsum > 1e-8 {
                failures.push(format!("velocity sum drift {worst_vsum:.2e}"));
            }
            if trace.diagnostics.max_antisymmetry > 1e-9 {
                failures.push(format!(
                    "antisymmetry {label} {:.2e}",
                    trace.diagnostics.max_antisymmetry
                ));
            }
        }

        // Fourth-order convergence on a smooth sweep over a decade of steps.
        {
            let set = HamiltonianSet::build(
                GateOp::ZeroZero,
                BiasPreset::DiagonalLadder,
                10.0,
                -0.1,
            )
            .unwrap();
            let state0 = gas::init_exact(&set, &DMatrix::zeros(16, 16)).unwrap();
            let reference = oracle::diagonalize(&set.h0).unwrap();
            let mut errors = Vec::new();
            for points in [26usize, 51, 101, 201] {
                let opts = IntegratorOptions {
                    base_step: 1.0 / (points - 1) as f64,
                    corrector_tol: f64::INFINITY,
                    gap_threshold: 0.0,
                    max_depth: 0,
                    ..IntegratorOptions::default()
                };
                let mut path = NoisePath::init(
                    &NoiseConfig {
                        tau: 0.1,
                        schedule: AmplitudeSchedule::Constant { epsilon: 0.0 },
                        mode: NoiseMode::Off,
                        seed: 0,
                    },
                    16,
                );
                let (_, end) = gas::integrate(&state0, &mut path, &opts, points).unwrap();
                let mut sorted: Vec<f64> = end.x.iter().copied().collect();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let err = sorted
                    .iter()
                    .zip(reference.values.iter())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0_f64, f64::max);
                errors.push(err);
            }
            for w in errors.windows(2) {
                let ratio = w[0] / w[1];
                if !(8.0..=40.0).contains(&ratio) {
                    failures.push(format!("convergence ratio {ratio:.1} outside [8, 40]"));
                }
            }
        }

        // Stationary noise variance at 1e5 steps.
        {
            let tau = 0.2;
            let eps = 0.3;
            let mut path = NoisePath::init(
                &NoiseConfig {
                    tau,
                    schedule: AmplitudeSchedule::Constant { epsilon: eps },
                    mode: NoiseMode::Ou,
                    seed: MASTER_SEED,
                },
                4,
            );
            for _ in 0..1000 {
                path.advance_ou(0.5, eps);
            }
            let mut sumsq = 0.0;
            let mut count = 0usize;
            for _ in 0..100_000 {
                path.advance_ou(0.5, eps);
                let m = path.current();
                for i in 0..4 {
                    for j in (i + 1)..4 {
                        sumsq += m[(i, j)] * m[(i, j)];
                        count += 1;
                    }
                }
            }
            let got = sumsq / count as f64;
            let expect = eps * eps / (2.0 * tau);
            if (got / expect - 1.0).abs() > 0.05 {
                failures.push(format!(
                    "stationary variance {got:.4} vs {expect:.4} beyond 5%"
                ));
            }
        }

        // Bit determinism across thread counts.
        {
            let mut cfg = base_config();
            cfg.operation = GateOp::OneOne;
            cfg.bias_preset = BiasPreset::Commuting;
            cfg.grid_points = 201;
            cfg.ensemble.n = 6;
            cfg.sweep.values = vec![1e-4, 1e-3, 1e-2];
            let speeds = cfg.sweep.values.clone();
            let a = harness::run_ensemble(&cfg, &speeds, None).unwrap();
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(1)
                .build()
                .unwrap();
            let b = pool.install(|| harness::run_ensemble(&cfg, &speeds, None).unwrap());
            let ja = serde_json::to_string(&a).unwrap();
            let jb = serde_json::to_string(&b).unwrap();
            if ja != jb {
                failures.push("ensemble results differ across thread counts".into());
            }
        }

        report(
            &mut results,
            "9 invariant suites",
            true,
            failures.is_empty(),
            if failures.is_empty() {
                "trace identity, velocity sum, antisymmetry, 4th-order convergence, \
                 stationary variance, thread-count determinism"
                    .into()
            } else {
                failures.join("; ")
            },
        );
    }

    // ------------------------------------------------------------ summary
    let hard_failures: Vec<&Outcome> = results
        .iter()
        .filter(|o| o.hard && !o.passed)
        .collect();
    println!(
        "acceptance: {} criteria, {} hard failures, {} soft deviations",
        results.len(),
        hard_failures.len(),
        results.iter().filter(|o| !o.hard && !o.passed).count()
    );
    assert!(
        hard_failures.is_empty(),
        "hard criteria failed: {}",
        hard_failures
            .iter()
            .map(|o| format!("{} ({})", o.label, o.detail))
            .collect::<Vec<_>>()
            .join("; ")
    );
}
