//! Integro-differential Langevin solver for the reduced coordinate.
//!
//! The observed coordinate obeys
//!
//! ```text
//! Q̈ + Ω²Q + K(t)·Q(0) + ∫₀ᵗ K(t−s) Q̇(s) ds = [F(t) + drive(t)] / m
//! ```
//!
//! with the memory kernel `K` of the coupling model. The `K(t)·Q(0)` term
//! (the "slip") is what makes this equation exactly equivalent to
//! projecting the full conservative dynamics onto the system sector; it can
//! be disabled to study the commonly used approximation without it.
//!
//! Integration is a Heun predictor-corrector with the memory integral
//! evaluated by the trapezoid rule over the stored velocity history, giving
//! a globally second-order scheme. The memory sum may be truncated to the
//! numerical support of a decaying kernel; discrete-grid kernels recur and
//! must keep the full history.

use crate::bath::{mode_rng, trajectory_seed, BathGrid};
use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::model::{BetaSchedule, PhysicalParams, SpectralModel};
use crate::quad::QuadratureConfig;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Where the memory kernel comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSource {
    /// Continuum coupling density; the kernel decays and may be truncated.
    Continuum(SpectralModel),
    /// Discrete bath grid; `K_N(t) = (1/m) Σ g_i² cos ω_i t` recurs and the
    /// full history is always kept.
    Grid(BathGrid),
}

/// How much of the velocity history enters the memory integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryTruncation {
    /// Keep every past sample (always correct, O(steps²)).
    Full,
    /// Truncate where the kernel has decayed below 1e−8 of its peak.
    Auto,
    /// Truncate at a caller-chosen kernel support time.
    Window { support: f64 },
}

/// Deterministic external force added to the stochastic one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Drive {
    None,
    /// Smooth pulse `amplitude · sin²(π(t−start)/width)` on
    /// `start ≤ t ≤ start + width`; total impulse `amplitude · width / 2`.
    HannPulse {
        start: f64,
        width: f64,
        amplitude: f64,
    },
}

impl Drive {
    pub fn force_at(&self, t: f64) -> f64 {
        match *self {
            Drive::None => 0.0,
            Drive::HannPulse {
                start,
                width,
                amplitude,
            } => {
                if t < start || t > start + width {
                    0.0
                } else {
                    let phase = std::f64::consts::PI * (t - start) / width;
                    amplitude * phase.sin().powi(2)
                }
            }
        }
    }
}

/// Relative kernel level below which `Auto` truncation drops history.
const AUTO_TRUNCATION_LEVEL: f64 = 1e-8;

/// Full configuration of one solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GleConfig {
    pub params: PhysicalParams,
    pub kernel: KernelSource,
    /// Step size; refused unless dt ≤ 0.1 · min(1/ω_cut, 1/Ω).
    pub dt: f64,
    pub horizon: f64,
    /// Keep the `K(t)·Q(0)` term (default on; required for exact
    /// equivalence with the conservative dynamics).
    pub include_slip: bool,
    pub truncation: HistoryTruncation,
    pub drive: Drive,
}

impl GleConfig {
    /// Configuration with the slip term on, full history, and no drive.
    pub fn new(params: PhysicalParams, kernel: KernelSource, dt: f64, horizon: f64) -> Self {
        GleConfig {
            params,
            kernel,
            dt,
            horizon,
            include_slip: true,
            truncation: HistoryTruncation::Full,
            drive: Drive::None,
        }
    }

    /// Fastest frequency the step must resolve.
    fn cutoff_frequency(&self) -> f64 {
        match &self.kernel {
            KernelSource::Continuum(model) => model.cutoff,
            KernelSource::Grid(grid) => grid.omega_max,
        }
    }

    /// Largest admissible step, 0.1 · min(1/ω_cut, 1/Ω).
    pub fn max_step(&self) -> f64 {
        0.1 * (1.0 / self.cutoff_frequency()).min(1.0 / self.params.omega)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        match &self.kernel {
            KernelSource::Continuum(model) => model.validate()?,
            KernelSource::Grid(grid) => {
                grid.validate()?;
                if self.truncation != HistoryTruncation::Full {
                    return Err(Error::InvalidParameter(
                        "discrete-grid kernels recur and do not decay; history \
                         truncation would be silently wrong (use Full)"
                            .into(),
                    ));
                }
            }
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "step size must be positive, got {}",
                self.dt
            )));
        }
        if self.dt > self.max_step() {
            return Err(Error::InvalidParameter(format!(
                "step size {} cannot resolve the fastest timescale: need \
                 dt ≤ 0.1·min(1/ω_cut, 1/Ω) = {:.6e} (ω_cut = {}, Ω = {})",
                self.dt,
                self.max_step(),
                self.cutoff_frequency(),
                self.params.omega
            )));
        }
        if !(self.horizon >= self.dt) || !self.horizon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "horizon {} must cover at least one step of {}",
                self.horizon, self.dt
            )));
        }
        if let HistoryTruncation::Window { support } = self.truncation {
            if !(support > 0.0) || !support.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "truncation window must be positive, got {support}"
                )));
            }
        }
        if let Drive::HannPulse { width, .. } = self.drive {
            if !(width > 0.0) || !width.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "pulse width must be positive, got {width}"
                )));
            }
        }
        Ok(())
    }

    /// Number of integration steps (samples are `n_steps() + 1`).
    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }

    /// The uniform sample times 0, dt, …, n·dt.
    pub fn sample_times(&self) -> Vec<f64> {
        (0..=self.n_steps()).map(|i| i as f64 * self.dt).collect()
    }

    /// Kernel values at the sample times.
    pub fn kernel_table(&self) -> Result<Vec<f64>> {
        let quad = QuadratureConfig::default();
        match &self.kernel {
            KernelSource::Continuum(model) => self
                .sample_times()
                .iter()
                .map(|&t| model.kernel_value(&self.params, t, &quad))
                .collect(),
            KernelSource::Grid(grid) => Ok(self
                .sample_times()
                .iter()
                .map(|&t| grid.kernel_at(&self.params, t))
                .collect()),
        }
    }

    /// History length in steps implied by the truncation policy.
    fn window_steps(&self, table: &[f64]) -> usize {
        let peak = table.iter().fold(0.0f64, |m, k| m.max(k.abs()));
        if peak == 0.0 {
            return 0;
        }
        match self.truncation {
            HistoryTruncation::Full => table.len(),
            HistoryTruncation::Auto => {
                let mut last = 0;
                for (j, k) in table.iter().enumerate() {
                    if k.abs() >= AUTO_TRUNCATION_LEVEL * peak {
                        last = j;
                    }
                }
                last.max(1)
            }
            HistoryTruncation::Window { support } => ((support / self.dt).ceil() as usize).max(1),
        }
    }
}

/// One integrated trajectory on the uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    /// Acceleration consistent with the stored state and history at each
    /// sample (recomputable bit-for-bit from the other fields).
    pub acceleration: Vec<f64>,
    /// Total applied external force (stochastic plus drive).
    pub force: Vec<f64>,
    /// Seed provenance when the trajectory came from an ensemble draw.
    pub seed: Option<u64>,
}

impl Trajectory {
    /// Momentum samples m·Q̇.
    pub fn momentum(&self, params: &PhysicalParams) -> Vec<f64> {
        self.velocity.iter().map(|v| params.mass * v).collect()
    }

    /// CSV rendering of the sampled trajectory.
    #[must_use]
    pub fn write_csv(&self) -> String {
        let mut out = String::from(
            "# schema: qbm.trajectory v1\ntime,position,velocity,acceleration,force\n",
        );
        for i in 0..self.times.len() {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[i],
                self.position[i],
                self.velocity[i],
                self.acceleration[i],
                self.force[i]
            );
        }
        out
    }
}

/// Trapezoid memory sum over past samples only:
/// dt · [½K_n v₀ + Σ_{j=1}^{n−1} K_{n−j} v_j], truncated to `window` steps.
/// The caller adds the current endpoint ½·dt·K₀·v_n itself.
fn history_sum(kernel: &[f64], velocity: &[f64], n: usize, window: usize, dt: f64) -> f64 {
    if n == 0 || window == 0 {
        return 0.0;
    }
    let lo = n.saturating_sub(window);
    let mut sum = 0.0;
    for j in lo..n {
        let weight = if j == 0 { 0.5 } else { 1.0 };
        sum += weight * kernel[n - j] * velocity[j];
    }
    dt * sum
}

/// Integrate one trajectory with a caller-supplied kernel table (must hold
/// `K` at every sample time). `force`, when given, holds the stochastic
/// force at every sample time.
pub fn solve_with_kernel_table(
    config: &GleConfig,
    kernel: &[f64],
    q_init: f64,
    p_init: f64,
    force: Option<&[f64]>,
) -> Result<Trajectory> {
    config.validate()?;
    let steps = config.n_steps();
    if kernel.len() != steps + 1 {
        return Err(Error::DimensionMismatch(format!(
            "kernel table has {} entries, need one per sample time ({})",
            kernel.len(),
            steps + 1
        )));
    }
    if let Some(f) = force {
        if f.len() != steps + 1 {
            return Err(Error::DimensionMismatch(format!(
                "force has {} samples, need one per sample time ({})",
                f.len(),
                steps + 1
            )));
        }
    }
    let dt = config.dt;
    let m = config.params.mass;
    let omega_sq = config.params.omega * config.params.omega;
    let window = config.window_steps(kernel);
    let half_k0 = 0.5 * dt * kernel[0];

    let times = config.sample_times();
    let mut applied = vec![0.0; steps + 1];
    for (i, t) in times.iter().enumerate() {
        applied[i] = force.map_or(0.0, |f| f[i]) + config.drive.force_at(*t);
    }
    // Slip term K(t)·Q(0), present at every time when enabled.
    let slip: Vec<f64> = if config.include_slip {
        kernel.iter().map(|k| k * q_init).collect()
    } else {
        vec![0.0; steps + 1]
    };

    let mut q = vec![0.0; steps + 1];
    let mut v = vec![0.0; steps + 1];
    let mut acc = vec![0.0; steps + 1];
    q[0] = q_init;
    v[0] = p_init / m;
    acc[0] = -omega_sq * q[0] - slip[0] + applied[0] / m;

    for n in 0..steps {
        // Predictor (explicit Euler) to t_{n+1}.
        let q_pred = q[n] + dt * v[n];
        let v_pred = v[n] + dt * acc[n];
        // History through v_n is now fixed; only the v_{n+1} endpoint varies.
        let hist = history_sum(kernel, &v, n + 1, window, dt);
        let memory = if window == 0 { 0.0 } else { half_k0 };
        let a_pred =
            -omega_sq * q_pred - slip[n + 1] - (hist + memory * v_pred) + applied[n + 1] / m;
        // Corrector (trapezoid in both q̇ and v̇).
        q[n + 1] = q[n] + 0.5 * dt * (v[n] + v_pred);
        v[n + 1] = v[n] + 0.5 * dt * (acc[n] + a_pred);
        // Final acceleration consistent with the corrected state.
        acc[n + 1] =
            -omega_sq * q[n + 1] - slip[n + 1] - (hist + memory * v[n + 1]) + applied[n + 1] / m;
    }

    Ok(Trajectory {
        times,
        position: q,
        velocity: v,
        acceleration: acc,
        force: applied,
        seed: None,
    })
}

/// Integrate one trajectory from initial position and momentum, with an
/// optional stochastic force sampled at the uniform grid times.
pub fn solve_gle(
    config: &GleConfig,
    q_init: f64,
    p_init: f64,
    force: Option<&[f64]>,
) -> Result<Trajectory> {
    config.validate()?;
    let kernel = config.kernel_table()?;
    solve_with_kernel_table(config, &kernel, q_init, p_init, force)
}

/// Split of the memory force into a local friction part and the remainder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackreactionDecomposition {
    /// Local frequency of the rewritten equation (the physical Ω² — the
    /// counter term in the coupling leaves no frequency shift).
    pub omega_tilde_sq: f64,
    /// Zero-frequency friction coefficient of the kernel.
    pub gamma_local: f64,
    /// Remainder force: F_BR = m[2γ_local·Q̇ − slip − memory integral], so
    /// that m·Q̈ = −m·Ω̃²·Q − 2m·γ_local·Q̇ + F_applied + F_BR exactly.
    pub back_reaction: Vec<f64>,
    /// Largest relative violation of the defining identity when the memory
    /// integral is recomputed from the stored trajectory.
    pub identity_residual: f64,
}

/// Recompute the memory integral from a stored trajectory and split the
/// equation of motion into a local damped oscillator plus a back-reaction
/// force. Requires a continuum kernel (the local friction coefficient is
/// the zero-frequency limit of the coupling density).
pub fn decompose_backreaction(
    config: &GleConfig,
    traj: &Trajectory,
) -> Result<BackreactionDecomposition> {
    config.validate()?;
    let model = match &config.kernel {
        KernelSource::Continuum(model) => model,
        KernelSource::Grid(_) => {
            return Err(Error::InvalidParameter(
                "the local-friction split needs a continuum kernel; a discrete \
                 grid has no zero-frequency density"
                    .into(),
            ));
        }
    };
    let steps = config.n_steps();
    if traj.times.len() != steps + 1 {
        return Err(Error::DimensionMismatch(format!(
            "trajectory has {} samples but the configuration implies {}",
            traj.times.len(),
            steps + 1
        )));
    }
    let kernel = config.kernel_table()?;
    let window = config.window_steps(&kernel);
    let dt = config.dt;
    let m = config.params.mass;
    let omega_sq = config.params.omega * config.params.omega;
    let gamma_local = model.markovian_gamma(&config.params);
    let half_k0 = 0.5 * dt * kernel[0];
    let q_init = traj.position[0];

    let mut back_reaction = Vec::with_capacity(steps + 1);
    let mut residual = 0.0f64;
    let mut scale = 0.0f64;
    for n in 0..=steps {
        let slip = if config.include_slip {
            kernel[n] * q_init
        } else {
            0.0
        };
        let memory = if n == 0 || window == 0 {
            0.0
        } else {
            history_sum(&kernel, &traj.velocity, n, window, dt) + half_k0 * traj.velocity[n]
        };
        // The equation of motion, term by term, must close on the stored
        // acceleration.
        let defect = m * traj.acceleration[n] + m * (omega_sq * traj.position[n] + slip + memory)
            - traj.force[n];
        residual = residual.max(defect.abs());
        scale = scale
            .max((m * traj.acceleration[n]).abs())
            .max(traj.force[n].abs())
            .max(m * omega_sq * traj.position[n].abs());
        back_reaction.push(m * (2.0 * gamma_local * traj.velocity[n] - slip - memory));
    }

    Ok(BackreactionDecomposition {
        omega_tilde_sq: omega_sq,
        gamma_local,
        back_reaction,
        identity_residual: residual / scale.max(f64::MIN_POSITIVE),
    })
}

/// Side-by-side response of the coupled and uncoupled oscillator to the
/// same drive pulse, with late-time momentum amplitudes compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseComparison {
    pub coupled: Trajectory,
    pub free: Trajectory,
    /// Start of the measurement window for the peak amplitudes.
    pub measure_from: f64,
    pub coupled_peak_momentum: f64,
    pub free_peak_momentum: f64,
    /// coupled / free peak momentum; the inertia carried by the coupling
    /// shows up as a ratio below one.
    pub momentum_ratio: f64,
    pub warnings: Vec<String>,
}

/// Drive the oscillator with the configured pulse, once with the coupling
/// on and once uncoupled, and compare peak |m·Q̇| over `t ≥ measure_from`.
/// Starts from rest at the origin; no stochastic force.
pub fn impulse_response(config: &GleConfig, measure_from: f64) -> Result<ImpulseComparison> {
    config.validate()?;
    let Drive::HannPulse { start, width, .. } = config.drive else {
        return Err(Error::InvalidParameter(
            "impulse comparison needs a pulse drive".into(),
        ));
    };
    let mut warnings = Vec::new();
    if start + width > config.horizon {
        return Err(Error::InvalidParameter(format!(
            "pulse ends at {} but the horizon is {}",
            start + width,
            config.horizon
        )));
    }
    let memory_time = 1.0 / config.cutoff_frequency();
    if measure_from < start + width + 5.0 * memory_time {
        warnings.push(format!(
            "measurement window opens at {measure_from}, before the coupling \
             response settles (pulse ends at {}, memory time {memory_time:.3e})",
            start + width
        ));
    }
    if width > 0.5 / config.params.omega {
        warnings.push(format!(
            "pulse width {width} is not impulsive on the oscillator period \
             {:.3e}; the comparison then probes the driven response instead",
            std::f64::consts::TAU / config.params.omega
        ));
    }
    if measure_from >= config.horizon {
        return Err(Error::InvalidParameter(format!(
            "measurement start {measure_from} lies beyond the horizon {}",
            config.horizon
        )));
    }

    let coupled = solve_gle(config, 0.0, 0.0, None)?;
    let free_config = GleConfig {
        kernel: KernelSource::Continuum(SpectralModel::decoupled()),
        truncation: HistoryTruncation::Full,
        ..config.clone()
    };
    let free = solve_gle(&free_config, 0.0, 0.0, None)?;

    let peak = |traj: &Trajectory| -> f64 {
        traj.times
            .iter()
            .zip(&traj.velocity)
            .filter(|(t, _)| **t >= measure_from)
            .map(|(_, v)| (config.params.mass * v).abs())
            .fold(0.0, f64::max)
    };
    let coupled_peak = peak(&coupled);
    let free_peak = peak(&free);
    if free_peak == 0.0 {
        return Err(Error::Numerical(
            "free response vanished over the measurement window".into(),
        ));
    }
    Ok(ImpulseComparison {
        measure_from,
        coupled_peak_momentum: coupled_peak,
        free_peak_momentum: free_peak,
        momentum_ratio: coupled_peak / free_peak,
        coupled,
        free,
        warnings,
    })
}

/// Initial condition of the observed oscillator in an ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    Fixed { position: f64, momentum: f64 },
    Gaussian(GaussianState),
}

/// Monte-Carlo ensemble over bath (and optionally system) initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub gle: GleConfig,
    /// Grid whose thermal modes realize the stochastic force.
    pub noise_grid: BathGrid,
    pub schedule: BetaSchedule,
    pub initial: InitialCondition,
    pub trajectories: usize,
    pub seed: u64,
    /// Times at which moments are recorded (snapped to the step grid).
    pub record_times: Vec<f64>,
}

/// Ensemble moments with jackknife standard errors per record time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub trajectories: usize,
    pub mean_position: Vec<f64>,
    pub mean_momentum: Vec<f64>,
    pub var_position: Vec<f64>,
    pub var_momentum: Vec<f64>,
    pub cov_qp: Vec<f64>,
    pub se_mean_position: Vec<f64>,
    pub se_mean_momentum: Vec<f64>,
    pub se_var_position: Vec<f64>,
    pub se_var_momentum: Vec<f64>,
    pub se_cov_qp: Vec<f64>,
}

impl EnsembleStats {
    /// CSV rendering, one row per record time.
    #[must_use]
    pub fn write_csv(&self) -> String {
        let mut out = String::from(
            "# schema: qbm.ensemble_stats v1\n\
             time,mean_q,mean_p,var_q,var_p,cov_qp,\
             se_mean_q,se_mean_p,se_var_q,se_var_p,se_cov_qp\n",
        );
        for i in 0..self.times.len() {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[i],
                self.mean_position[i],
                self.mean_momentum[i],
                self.var_position[i],
                self.var_momentum[i],
                self.cov_qp[i],
                self.se_mean_position[i],
                self.se_mean_momentum[i],
                self.se_var_position[i],
                self.se_var_momentum[i],
                self.se_cov_qp[i]
            );
        }
        out
    }
}

/// Jackknife standard error of the unbiased sample variance.
fn jackknife_var_se(x: &[f64]) -> f64 {
    let n = x.len();
    let nf = n as f64;
    let s1: f64 = x.iter().sum();
    let s2: f64 = x.iter().map(|v| v * v).sum();
    let mut leave_out = Vec::with_capacity(n);
    for &xi in x {
        let mean_i = (s1 - xi) / (nf - 1.0);
        let var_i = (s2 - xi * xi - (nf - 1.0) * mean_i * mean_i) / (nf - 2.0);
        leave_out.push(var_i);
    }
    let mean_loo = leave_out.iter().sum::<f64>() / nf;
    let ss: f64 = leave_out.iter().map(|v| (v - mean_loo).powi(2)).sum();
    ((nf - 1.0) / nf * ss).sqrt()
}

/// Jackknife standard error of the unbiased sample covariance.
fn jackknife_cov_se(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let nf = n as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let mut leave_out = Vec::with_capacity(n);
    for (&xi, &yi) in x.iter().zip(y) {
        let mx = (sx - xi) / (nf - 1.0);
        let my = (sy - yi) / (nf - 1.0);
        let cov_i = (sxy - xi * yi - (nf - 1.0) * mx * my) / (nf - 2.0);
        leave_out.push(cov_i);
    }
    let mean_loo = leave_out.iter().sum::<f64>() / nf;
    let ss: f64 = leave_out.iter().map(|v| (v - mean_loo).powi(2)).sum();
    ((nf - 1.0) / nf * ss).sqrt()
}

/// Run `trajectories` independent draws and accumulate moments at the
/// record times. Trajectory `i` is seeded by `trajectory_seed(seed, i)`;
/// bath modes use per-mode streams and the system initial condition (when
/// Gaussian) uses the stream one past the last mode, so results are
/// independent of scheduling and thread count.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleStats> {
    cfg.gle.validate()?;
    cfg.noise_grid.validate()?;
    cfg.schedule.check_applicable(&cfg.gle.params)?;
    if cfg.trajectories < 3 {
        return Err(Error::InvalidParameter(format!(
            "ensemble needs at least 3 trajectories for jackknife errors, got {}",
            cfg.trajectories
        )));
    }
    if cfg.record_times.is_empty() {
        return Err(Error::InvalidParameter("no record times requested".into()));
    }
    let steps = cfg.gle.n_steps();
    let dt = cfg.gle.dt;
    let mut indices = Vec::with_capacity(cfg.record_times.len());
    for &t in &cfg.record_times {
        let idx = (t / dt).round();
        if !(0.0..=(steps as f64)).contains(&idx) || (t - idx * dt).abs() > 0.5 * dt + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "record time {t} does not lie on the step grid within the horizon"
            )));
        }
        indices.push(idx as usize);
    }
    let kernel = cfg.gle.kernel_table()?;
    let times = cfg.gle.sample_times();
    let mass = cfg.gle.params.mass;
    let n_modes = cfg.noise_grid.len() as u64;

    // Cholesky factor of the optional Gaussian initial covariance.
    let initial_chol = match &cfg.initial {
        InitialCondition::Fixed { .. } => None,
        InitialCondition::Gaussian(state) => {
            let c = &state.cov;
            let l11 = c[(0, 0)].max(0.0).sqrt();
            let l21 = if l11 > 0.0 { c[(0, 1)] / l11 } else { 0.0 };
            let l22 = (c[(1, 1)] - l21 * l21).max(0.0).sqrt();
            Some((state.mean, l11, l21, l22))
        }
    };

    let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.trajectories)
        .into_par_iter()
        .map(|i| -> Result<(Vec<f64>, Vec<f64>)> {
            let traj_seed = trajectory_seed(cfg.seed, i as u64);
            let sample =
                cfg.noise_grid
                    .sample_initial(&cfg.gle.params, &cfg.schedule, traj_seed)?;
            let force = cfg.noise_grid.force_history(&sample, &times)?;
            let (q0, p0) = match (&cfg.initial, &initial_chol) {
                (InitialCondition::Fixed { position, momentum }, _) => (*position, *momentum),
                (InitialCondition::Gaussian(_), Some((mean, l11, l21, l22))) => {
                    let mut rng = mode_rng(traj_seed, n_modes);
                    let (n1, n2): (f64, f64) =
                        (rng.sample(StandardNormal), rng.sample(StandardNormal));
                    (mean[0] + l11 * n1, mean[1] + l21 * n1 + l22 * n2)
                }
                _ => unreachable!("initial condition and factor match by construction"),
            };
            let traj = solve_with_kernel_table(&cfg.gle, &kernel, q0, p0, Some(&force))?;
            let qs: Vec<f64> = indices.iter().map(|&k| traj.position[k]).collect();
            let ps: Vec<f64> = indices.iter().map(|&k| mass * traj.velocity[k]).collect();
            Ok((qs, ps))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = cfg.trajectories;
    let nf = n as f64;
    let n_times = indices.len();
    let mut stats = EnsembleStats {
        times: indices.iter().map(|&k| times[k]).collect(),
        trajectories: n,
        mean_position: Vec::with_capacity(n_times),
        mean_momentum: Vec::with_capacity(n_times),
        var_position: Vec::with_capacity(n_times),
        var_momentum: Vec::with_capacity(n_times),
        cov_qp: Vec::with_capacity(n_times),
        se_mean_position: Vec::with_capacity(n_times),
        se_mean_momentum: Vec::with_capacity(n_times),
        se_var_position: Vec::with_capacity(n_times),
        se_var_momentum: Vec::with_capacity(n_times),
        se_cov_qp: Vec::with_capacity(n_times),
    };
    for k in 0..n_times {
        let q: Vec<f64> = draws.iter().map(|(qs, _)| qs[k]).collect();
        let p: Vec<f64> = draws.iter().map(|(_, ps)| ps[k]).collect();
        let mq = q.iter().sum::<f64>() / nf;
        let mp = p.iter().sum::<f64>() / nf;
        let vq = q.iter().map(|x| (x - mq).powi(2)).sum::<f64>() / (nf - 1.0);
        let vp = p.iter().map(|x| (x - mp).powi(2)).sum::<f64>() / (nf - 1.0);
        let cqp = q
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - mq) * (b - mp))
            .sum::<f64>()
            / (nf - 1.0);
        stats.mean_position.push(mq);
        stats.mean_momentum.push(mp);
        stats.var_position.push(vq);
        stats.var_momentum.push(vp);
        stats.cov_qp.push(cqp);
        stats.se_mean_position.push((vq / nf).sqrt());
        stats.se_mean_momentum.push((vp / nf).sqrt());
        stats.se_var_position.push(jackknife_var_se(&q));
        stats.se_var_momentum.push(jackknife_var_se(&p));
        stats.se_cov_qp.push(jackknife_cov_se(&q, &p));
    }
    Ok(stats)
}
