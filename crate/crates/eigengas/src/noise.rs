//! The stochastic perturbation: GOE matrix draws, an exact
//! Ornstein-Uhlenbeck update in the sweep parameter, amplitude schedules,
//! and the three noise modes (off, frozen, evolving).
//!
//! The evolving mode applies the mean-reverting update directly to the
//! matrix elements in the instantaneous eigenbasis; the GOE is invariant
//! under orthogonal conjugation, so its statistics do not depend on which
//! orthonormal basis the elements are read in. The frozen mode keeps the
//! initial draw fixed in the lab frame, which is what makes exact
//! diagonalization cross-checks possible.
//!
//! A time-dependent amplitude acts as a multiplicative envelope on a
//! unit-amplitude stationary process, so the perturbation really is bounded
//! by the instantaneous amplitude; in particular a schedule that vanishes at
//! the end of the sweep leaves the final state untouched.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// How the noise term participates in a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// No noise at all; the perturbation is identically zero.
    Off,
    /// A single draw at the start of the sweep, held fixed (lab frame).
    Frozen,
    /// Mean-reverting evolution along the sweep.
    Ou,
}

/// Noise amplitude as a function of the sweep parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum AmplitudeSchedule {
    Constant { epsilon: f64 },
    /// `epsilon0 * tanh(alpha * lambda)`: full strength through most of the
    /// sweep, decaying to zero as lambda approaches zero.
    Tanh { epsilon0: f64, alpha: f64 },
}

impl AmplitudeSchedule {
    /// Amplitude at a given value of the sweep parameter.
    pub fn amplitude_at(&self, lambda: f64) -> f64 {
        match *self {
            AmplitudeSchedule::Constant { epsilon } => epsilon,
            AmplitudeSchedule::Tanh { epsilon0, alpha } => epsilon0 * (alpha * lambda).tanh(),
        }
    }

    pub fn validate(&self) -> crate::error::Result<()> {
        let ok = match *self {
            AmplitudeSchedule::Constant { epsilon } => epsilon >= 0.0 && epsilon.is_finite(),
            AmplitudeSchedule::Tanh { epsilon0, alpha } => {
                epsilon0 >= 0.0 && epsilon0.is_finite() && alpha > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(crate::error::Error::InvalidConfig(format!(
                "invalid amplitude schedule {self:?}"
            )))
        }
    }
}

/// Free-function form of [`AmplitudeSchedule::amplitude_at`].
pub fn amplitude_at(schedule: &AmplitudeSchedule, lambda: f64) -> f64 {
    schedule.amplitude_at(lambda)
}

/// Parameters of one noise realization.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Mean-reversion rate of the coloured process.
    pub tau: f64,
    pub schedule: AmplitudeSchedule,
    pub mode: NoiseMode,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        if !(self.tau > 0.0) {
            return Err(crate::error::Error::InvalidConfig(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        self.schedule.validate()
    }
}

/// Draw a GOE-structured symmetric matrix: independent zero-mean Gaussian
/// entries with standard deviation `scale` off the diagonal and
/// `scale * sqrt(2)` on it.
///
/// Entries are drawn in a fixed order (upper triangle, row major, diagonal
/// included) so a given rng state always produces the same matrix.
pub fn sample_goe<R: rand::Rng>(dim: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    assert!(dim >= 1);
    assert!(scale >= 0.0 && scale.is_finite());
    let diag_scale = scale * std::f64::consts::SQRT_2;
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let g: f64 = StandardNormal.sample(rng);
            if i == j {
                m[(i, i)] = diag_scale * g;
            } else {
                m[(i, j)] = scale * g;
                m[(j, i)] = scale * g;
            }
        }
    }
    m
}

/// One seeded realization of the noise process, advanced from `lambda = 1`
/// downwards alongside the sweep.
#[derive(Clone, Debug)]
pub struct NoisePath {
    mode: NoiseMode,
    tau: f64,
    schedule: AmplitudeSchedule,
    lambda: f64,
    /// The matrix exposed to the dynamics.
    dh: DMatrix<f64>,
    /// Unit-amplitude carrier process; the envelope multiplies this. Only
    /// evolved for schedules with a lambda-dependent amplitude.
    carrier: DMatrix<f64>,
    rng: ChaCha12Rng,
}

impl NoisePath {
    /// Initialise the path at `lambda = 1`. For the frozen and evolving
    /// modes the initial matrix is a GOE draw whose per-element scale is the
    /// schedule amplitude at 1.
    pub fn init(config: &NoiseConfig, dim: usize) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        let (carrier, dh) = match config.mode {
            NoiseMode::Off => (DMatrix::zeros(dim, dim), DMatrix::zeros(dim, dim)),
            NoiseMode::Frozen | NoiseMode::Ou => {
                let unit = sample_goe(dim, 1.0, &mut rng);
                let dh = &unit * config.schedule.amplitude_at(1.0);
                (unit, dh)
            }
        };
        Self {
            mode: config.mode,
            tau: config.tau,
            schedule: config.schedule,
            lambda: 1.0,
            dh,
            carrier,
            rng,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    /// The current noise matrix.
    pub fn current(&self) -> &DMatrix<f64> {
        &self.dh
    }

    /// Exact mean-reverting update of the current matrix over a parameter
    /// interval `dlambda` with drive amplitude `eps_eff`:
    /// `dh <- exp(-tau*d) * dh + G`, where `G` is a fresh GOE-structured
    /// increment with per-element standard deviation
    /// `eps_eff * sqrt((1 - exp(-2*tau*d)) / (2*tau))`. Returns the change.
    ///
    /// The update is the closed-form solution of the linear stochastic
    /// equation, so the distribution of the path does not depend on how the
    /// interval is subdivided.
    pub fn advance_ou(&mut self, dlambda: f64, eps_eff: f64) -> DMatrix<f64> {
        assert!(dlambda > 0.0, "advance requires a positive step");
        let decay = (-self.tau * dlambda).exp();
        let sd = eps_eff * ((1.0 - (-2.0 * self.tau * dlambda).exp()) / (2.0 * self.tau)).sqrt();
        let increment = sample_goe(self.dh.nrows(), sd, &mut self.rng);
        let new = &self.dh * decay + &increment;
        let delta = &new - &self.dh;
        self.dh = new;
        self.lambda -= dlambda;
        delta
    }

    /// Advance the path to `new_lambda` (strictly below the current value),
    /// honouring the mode and schedule, and return the change in the noise
    /// matrix over the step.
    pub fn advance_to(&mut self, new_lambda: f64) -> DMatrix<f64> {
        let d = self.lambda - new_lambda;
        assert!(d > 0.0, "advance_to requires a decreasing lambda");
        match (self.mode, self.schedule) {
            (NoiseMode::Off, _) | (NoiseMode::Frozen, _) => {
                self.lambda = new_lambda;
                DMatrix::zeros(self.dh.nrows(), self.dh.ncols())
            }
            (NoiseMode::Ou, AmplitudeSchedule::Constant { epsilon }) => {
                let delta = self.advance_ou(d, epsilon);
                self.lambda = new_lambda;
                delta
            }
            (NoiseMode::Ou, schedule @ AmplitudeSchedule::Tanh { .. }) => {
                // Evolve the unit carrier, then re-apply the envelope at the
                // new parameter value. A vanishing envelope therefore zeroes
                // the noise exactly, whatever the carrier holds.
                let decay = (-self.tau * d).exp();
                let sd = ((1.0 - (-2.0 * self.tau * d).exp()) / (2.0 * self.tau)).sqrt();
                let increment = sample_goe(self.carrier.nrows(), sd, &mut self.rng);
                self.carrier = &self.carrier * decay + increment;
                self.lambda = new_lambda;
                let new = &self.carrier * schedule.amplitude_at(new_lambda);
                let delta = &new - &self.dh;
                self.dh = new;
                delta
            }
        }
    }
}
