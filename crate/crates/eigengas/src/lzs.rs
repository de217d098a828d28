//! Crossing detection and the non-adiabatic transition cascade.
//!
//! Gap minima are located on the energy-sorted adjacent gaps of a spectrum
//! trace and refined by fitting a parabola to the squared gap through the
//! three bracketing samples; the squared gap of a two-level encounter is an
//! exact parabola for both avoided crossings and genuine ones, so the
//! refinement recovers zero minima at true crossings and the hyperbolic
//! minimum of avoided ones. Each minimum then contributes one two-level
//! transition with probability `exp(-gap^2 * T / coupling)` for a sweep of
//! duration `T`, and the occupation vector (indexed by instantaneous energy
//! order) is cascaded through the events from the start of the sweep to its
//! end.

use crate::gas::SpectrumTrace;

/// Floor for the coupling in the transition exponent. An exact crossing has
/// both a vanishing gap and a vanishing coupling; the vanishing gap wins and
/// the transition is certain, so the floor only guards pathological inputs.
pub const COUPLING_FLOOR: f64 = 1e-12;

/// Floor for the level separation when converting a stored coupling into
/// the bias matrix element at a crossing.
pub const SEPARATION_FLOOR: f64 = 1e-10;

/// One local minimum of an adjacent gap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossingEvent {
    /// Lower of the two levels, in instantaneous energy order: the event
    /// couples levels `lower` and `lower + 1`.
    pub lower: usize,
    /// Location of the gap minimum in the sweep parameter.
    pub lambda_star: f64,
    /// Minimal separation of the pair.
    pub delta_min: f64,
    /// `|<n|z hb|n+1>|` at the minimum, recovered as `|l| / |dx|`.
    pub coupling: f64,
}

impl CrossingEvent {
    /// True when the transition exponent had to fall back on the coupling
    /// floor despite a finite gap.
    pub fn coupling_floored(&self) -> bool {
        self.delta_min > 0.0 && self.coupling < COUPLING_FLOOR
    }
}

/// Occupation probabilities over the energy-ordered levels.
#[derive(Clone, Debug)]
pub struct OccupationVector(pub Vec<f64>);

impl OccupationVector {
    /// All weight on the ground level.
    pub fn ground_certain(dim: usize) -> Self {
        let mut p = vec![0.0; dim];
        p[0] = 1.0;
        OccupationVector(p)
    }

    /// Probability of the ground level.
    pub fn ground(&self) -> f64 {
        self.0[0]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Robust scale of the sample-to-sample roughness of a series, from the
/// median absolute second difference (zero for any locally linear or
/// quadratic smooth series, proportional to the noise scale on a jittery
/// one).
fn roughness(series: &[f64]) -> f64 {
    if series.len() < 3 {
        return 0.0;
    }
    let mut d2: Vec<f64> = series
        .windows(3)
        .map(|w| (w[0] - 2.0 * w[1] + w[2]).abs())
        .collect();
    let mid = d2.len() / 2;
    d2.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
    // median|d2| of iid noise with standard deviation s is about 1.65 s.
    0.61 * d2[mid]
}

/// Locate every interior local minimum of the energy-sorted adjacent gaps
/// of `trace`, refined through the squared-gap parabola. Events are returned
/// in sweep order (descending `lambda_star`). Endpoints never count as
/// crossings; a strictly monotone gap produces none.
///
/// Stochastic sweeps leave jitter on the gap series, so a minimum only
/// counts when the gap climbs clear of the local noise scale on both sides,
/// and minima sharing one valley are merged into its deepest point.
pub fn detect_crossings(trace: &SpectrumTrace) -> Vec<CrossingEvent> {
    let points = trace.points();
    let dim = trace.dim();
    if points < 3 || dim < 2 {
        return Vec::new();
    }

    // Sorted levels and the label permutation at each grid point.
    let mut sorted: Vec<Vec<f64>> = Vec::with_capacity(points);
    let mut perms: Vec<Vec<usize>> = Vec::with_capacity(points);
    for i in 0..points {
        let perm = trace.sort_permutation(i);
        let xs: Vec<f64> = perm.iter().map(|&n| trace.levels[i][n]).collect();
        sorted.push(xs);
        perms.push(perm);
    }

    let mut events = Vec::new();
    for pair in 0..dim - 1 {
        let g: Vec<f64> = (0..points)
            .map(|i| sorted[i][pair + 1] - sorted[i][pair])
            .collect();
        let thr = (6.0 * roughness(&g)).max(1e-12);
        let reach = (points / 4).clamp(2, 50);

        // Strict interior minima with enough prominence on both sides.
        let mut candidates: Vec<usize> = Vec::new();
        for i in 1..points - 1 {
            let is_min = g[i] <= g[i - 1]
                && g[i] <= g[i + 1]
                && (g[i] < g[i - 1] || g[i] < g[i + 1]);
            if !is_min {
                continue;
            }
            let rises = |range: &mut dyn Iterator<Item = usize>| -> bool {
                range.take(reach).any(|j| g[j] - g[i] >= thr)
            };
            if rises(&mut (0..i).rev()) && rises(&mut (i + 1..points)) {
                candidates.push(i);
            }
        }

        // Merge candidates that share a valley: unless the gap rises by the
        // threshold between two of them, they describe the same minimum.
        let mut kept: Vec<usize> = Vec::new();
        for &i in &candidates {
            match kept.last() {
                Some(&prev) => {
                    let barrier = g[prev..=i]
                        .iter()
                        .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    if barrier - g[prev].max(g[i]) >= thr {
                        kept.push(i);
                    } else if g[i] < g[prev] {
                        *kept.last_mut().unwrap() = i;
                    }
                }
                None => kept.push(i),
            }
        }

        for &i in &kept {
            // Only a genuine two-level encounter counts: the same two
            // labels must hold the sorted pair across the bracket (in
            // either order -- a true crossing swaps them). Otherwise the
            // adjacent gap merely changed identity because a third level
            // entered the window, and there is nothing to tunnel through.
            let pair_set = |j: usize| -> (usize, usize) {
                let (a, b) = (perms[j][pair], perms[j][pair + 1]);
                (a.min(b), a.max(b))
            };
            if pair_set(i - 1) != pair_set(i) || pair_set(i + 1) != pair_set(i) {
                continue;
            }
            // Parabola through the squared gaps; the squared gap of a
            // two-level encounter is exactly parabolic for avoided and true
            // crossings alike. A vertex outside the bracket means the fit
            // is dominated by jitter, in which case the sample itself wins.
            let (ym, y0, yp) = (
                g[i - 1] * g[i - 1],
                g[i] * g[i],
                g[i + 1] * g[i + 1],
            );
            let denom = ym - 2.0 * y0 + yp;
            let offset = if denom > 0.0 {
                (ym - yp) / (2.0 * denom)
            } else {
                f64::INFINITY
            };
            // A genuine two-level encounter has an exactly parabolic squared
            // gap with a non-negative vertex (zero for a symmetric true
            // crossing). A clearly negative vertex means the samples mix
            // branches of different slopes -- the gap changed identity, not
            // value -- and the sampled minimum is the honest answer.
            let neg_tol = 1e-9 * (ym + yp + f64::MIN_POSITIVE);
            let (lambda_star, delta_min) = if offset.abs() <= 1.0 {
                let y_min = y0 - 0.25 * (ym - yp) * offset;
                if y_min < -neg_tol {
                    (trace.lambdas[i], g[i])
                } else {
                    let lam = trace.lambdas[i]
                        + offset * (trace.lambdas[i + 1] - trace.lambdas[i]);
                    (lam, y_min.max(0.0).sqrt())
                }
            } else {
                (trace.lambdas[i], g[i])
            };
            // Bias matrix element from the gas variables at the central
            // sample, looked up through the label permutation.
            let (a, b) = (perms[i][pair], perms[i][pair + 1]);
            let sep = (trace.levels[i][a] - trace.levels[i][b])
                .abs()
                .max(SEPARATION_FLOOR);
            let coupling = trace.couplings[i][(a, b)].abs() / sep;
            events.push(CrossingEvent {
                lower: pair,
                lambda_star,
                delta_min,
                coupling,
            });
        }
    }
    events.sort_by(|a, b| {
        b.lambda_star
            .partial_cmp(&a.lambda_star)
            .unwrap()
            .then(a.lower.cmp(&b.lower))
    });
    events
}

/// Gaps below this are treated as exact degeneracies when the coupling has
/// also vanished; refined minima of true crossings carry floating-point
/// dust at this scale.
pub const TRUE_CROSSING_GAP: f64 = 1e-8;

/// Transition probability of one event for a sweep of duration `t`
/// (uniform evolution, `|dlambda/dt| = 1/t`). A vanishing minimal gap makes
/// the transition certain; so does a gap at the degeneracy scale when the
/// coupling has vanished too (a true crossing, where the 0/0 in the
/// exponent resolves to certainty rather than through the coupling floor).
pub fn lzs_probability(event: &CrossingEvent, t: f64) -> f64 {
    assert!(t > 0.0, "sweep duration must be positive");
    if event.delta_min == 0.0
        || (event.delta_min < TRUE_CROSSING_GAP && event.coupling < COUPLING_FLOOR)
    {
        return 1.0;
    }
    let coupling = event.coupling.max(COUPLING_FLOOR);
    (-event.delta_min * event.delta_min * t / coupling).exp()
}

/// Cascade the occupation vector through `events` (which must be in sweep
/// order, descending `lambda_star`). Each event mixes its two levels with
/// the doubly stochastic matrix `[[1-p, p], [p, 1-p]]`, which preserves the
/// total probability exactly.
pub fn propagate(events: &[CrossingEvent], t: f64, dim: usize) -> OccupationVector {
    let mut occ = OccupationVector::ground_certain(dim);
    for event in events {
        let p = lzs_probability(event, t);
        let (n, m) = (event.lower, event.lower + 1);
        let a = occ.0[n];
        let b = occ.0[m];
        occ.0[n] = (1.0 - p) * a + p * b;
        occ.0[m] = p * a + (1.0 - p) * b;
    }
    debug_assert!(occ.0.iter().all(|&p| (-1e-12..=1.0 + 1e-12).contains(&p)));
    debug_assert!((occ.sum() - 1.0).abs() <= 1e-12);
    occ
}

/// Probability of ending in the ground level after a sweep of duration `t`,
/// starting from the ground level with certainty.
pub fn success_probability(trace: &SpectrumTrace, t: f64) -> f64 {
    let events = detect_crossings(trace);
    propagate(&events, t, trace.dim()).ground()
}
