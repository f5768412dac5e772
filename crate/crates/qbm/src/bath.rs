//! Finite-mode rendering of the bath continuum, and Gaussian sampling of its
//! initial conditions.
//!
//! A [`BathGrid`] replaces `∫ dω g_ω² (…)` by `Σ_i g_i² (…)` with
//! `g_i² = g²(ω_i) w_i`. The discrete kernel
//! `K_N(t) = (1/m) Σ_i g_i² cos ω_i t` approximates the continuum kernel up to
//! the grid recurrence time `t_rec = 2π / min_i Δω_i`; dynamical runs must
//! keep their horizon below `t_rec / 2`.
//!
//! Initial conditions are drawn mode-by-mode from the factorized Gaussian
//! with `Var(q_i) = 1/(β_i ω_i²)` and `Var(p_i) = 1/β_i`, using one
//! counter-based RNG stream per mode so results do not depend on iteration
//! order.

use crate::error::{Error, Result};
use crate::model::{BetaSchedule, PhysicalParams, SpectralModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt::Write as _;

/// Placement rule for the discrete mode frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridScheme {
    /// Midpoint rule on a uniform `ω` grid. Good for flat (Ohmic) densities.
    Uniform,
    /// Equal-measure quantiles of `∫ g² dω`: every mode carries the same
    /// coupling weight. Resolves densities with strong UV or IR concentration
    /// and keeps the minimum mode spacing (hence the recurrence time) tied to
    /// where the coupling actually lives.
    EqualWeight,
}

/// `N` discrete bath modes standing in for the `ω`-continuum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathGrid {
    /// Mode frequencies, strictly increasing, all positive.
    pub omegas: Vec<f64>,
    /// Effective couplings `g_i ≥ 0` with `g_i² = g²(ω_i) w_i`.
    pub couplings: Vec<f64>,
    /// Quadrature weights `w_i` (widths of the `ω` cells).
    pub weights: Vec<f64>,
    pub scheme: GridScheme,
    /// Upper end of the discretized support.
    pub omega_max: f64,
}

/// One draw of the bath's initial phase-space coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathSample {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    /// Seed the draw was generated from (provenance).
    pub seed: u64,
}

impl BathGrid {
    /// Discretizes `model` into `n` modes.
    ///
    /// `omega_max` defaults to the model's grid support
    /// ([`SpectralModel::support_max`]).
    pub fn discretize(
        model: &SpectralModel,
        params: &PhysicalParams,
        n: usize,
        scheme: GridScheme,
        omega_max: Option<f64>,
    ) -> Result<BathGrid> {
        model.validate()?;
        params.validate()?;
        if n == 0 {
            return Err(Error::InvalidParameter(
                "bath grid needs at least one mode".into(),
            ));
        }
        let omega_max = omega_max.unwrap_or_else(|| model.support_max());
        if !(omega_max.is_finite() && omega_max > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "omega_max must be positive, got {omega_max}"
            )));
        }

        let grid = match scheme {
            GridScheme::Uniform => {
                let dw = omega_max / n as f64;
                let omegas: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * dw).collect();
                let couplings = omegas
                    .iter()
                    .map(|&w| (model.coupling_density(params, w) * dw).sqrt())
                    .collect();
                BathGrid {
                    omegas,
                    couplings,
                    weights: vec![dw; n],
                    scheme,
                    omega_max,
                }
            }
            GridScheme::EqualWeight => Self::discretize_equal_weight(model, params, n, omega_max)?,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Quantile construction: cell boundaries at equal shares of the
    /// cumulative measure `W(ω) = ∫_0^ω g² dω`, one mode per cell at the
    /// half-share point, each carrying `g_i² = W_total/n` exactly.
    fn discretize_equal_weight(
        model: &SpectralModel,
        params: &PhysicalParams,
        n: usize,
        omega_max: f64,
    ) -> Result<BathGrid> {
        // Cumulative trapezoid on a fine uniform grid, then linear inversion.
        let fine = 4096.max(32 * n);
        let dw = omega_max / fine as f64;
        let density: Vec<f64> = (0..=fine)
            .map(|k| model.coupling_density(params, k as f64 * dw))
            .collect();
        let mut cumulative = vec![0.0; fine + 1];
        for k in 0..fine {
            cumulative[k + 1] = cumulative[k] + 0.5 * (density[k] + density[k + 1]) * dw;
        }
        let total = cumulative[fine];
        if total <= 0.0 {
            // Decoupled model: keep a uniform frequency layout, zero weight.
            let dw = omega_max / n as f64;
            return Ok(BathGrid {
                omegas: (0..n).map(|i| (i as f64 + 0.5) * dw).collect(),
                couplings: vec![0.0; n],
                weights: vec![dw; n],
                scheme: GridScheme::EqualWeight,
                omega_max,
            });
        }

        let invert = |target: f64| -> f64 {
            let k = cumulative.partition_point(|&c| c < target).clamp(1, fine);
            let (c0, c1) = (cumulative[k - 1], cumulative[k]);
            let frac = if c1 > c0 {
                (target - c0) / (c1 - c0)
            } else {
                0.5
            };
            (k as f64 - 1.0 + frac) * dw
        };

        let share = total / n as f64;
        let mut omegas = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let lo = invert(share * i as f64);
            let hi = if i + 1 == n {
                omega_max
            } else {
                invert(share * (i as f64 + 1.0))
            };
            omegas.push(invert(share * (i as f64 + 0.5)));
            weights.push(hi - lo);
        }
        let couplings = vec![share.sqrt(); n];
        Ok(BathGrid {
            omegas,
            couplings,
            weights,
            scheme: GridScheme::EqualWeight,
            omega_max,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.omegas.len();
        if n == 0 || self.couplings.len() != n || self.weights.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "grid arrays must share one nonzero length, got {}/{}/{}",
                n,
                self.couplings.len(),
                self.weights.len()
            )));
        }
        let mut prev = 0.0;
        for &w in &self.omegas {
            if !(w.is_finite() && w > prev) {
                return Err(Error::InvalidParameter(
                    "grid frequencies must be positive, finite, strictly increasing".into(),
                ));
            }
            prev = w;
        }
        if self.couplings.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::InvalidParameter(
                "grid couplings must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// `Σ_i g_i²`: the discrete counter-term added to the system's potential
    /// curvature by the completed square in the Hamiltonian.
    #[must_use]
    pub fn coupling_weight(&self) -> f64 {
        self.couplings.iter().map(|g| g * g).sum()
    }

    /// Time of the first spurious echo of the finite grid,
    /// `t_rec = 2π / min_i (ω_{i+1} − ω_i)`; infinite for a single mode.
    #[must_use]
    pub fn recurrence_time(&self) -> f64 {
        let min_gap = self
            .omegas
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        if min_gap.is_finite() {
            TAU / min_gap
        } else {
            f64::INFINITY
        }
    }

    /// Discrete kernel `K_N(t) = (1/m) Σ_i g_i² cos ω_i t`.
    #[must_use]
    pub fn kernel_at(&self, params: &PhysicalParams, t: f64) -> f64 {
        let sum: f64 = self
            .omegas
            .iter()
            .zip(&self.couplings)
            .map(|(&w, &g)| g * g * (w * t).cos())
            .sum();
        sum / params.mass
    }

    /// Discrete noise correlation `ν_N(t) = Σ_i (g_i²/β_i) cos ω_i t`.
    #[must_use]
    pub fn noise_correlation_at(
        &self,
        params: &PhysicalParams,
        beta: &BetaSchedule,
        t: f64,
    ) -> f64 {
        self.omegas
            .iter()
            .zip(&self.couplings)
            .map(|(&w, &g)| g * g * beta.mode_energy(params, w) * (w * t).cos())
            .sum()
    }

    /// Sup-norm fidelity of the discrete kernel against the continuum one:
    /// `max_t |K_N(t) − K(t)| / max_t |K(t)|` over the given times.
    pub fn kernel_deviation(
        &self,
        model: &SpectralModel,
        params: &PhysicalParams,
        times: &[f64],
    ) -> Result<f64> {
        let quad = crate::quad::QuadratureConfig::default();
        let mut max_err: f64 = 0.0;
        let mut max_ref: f64 = 0.0;
        for &t in times {
            let exact = model.kernel_value(params, t, &quad)?;
            max_err = max_err.max((self.kernel_at(params, t) - exact).abs());
            max_ref = max_ref.max(exact.abs());
        }
        if max_ref == 0.0 {
            return Ok(max_err);
        }
        Ok(max_err / max_ref)
    }

    /// Draws the factorized Gaussian initial condition of the bath.
    ///
    /// Mode `i` is sampled from stream `i` of a counter-based generator keyed
    /// by `seed`, so the draw is independent of iteration order and safe to
    /// parallelize. Streams `>= n` are left to callers (the ensemble runner
    /// uses stream `n` for the system's own initial condition).
    pub fn sample_initial(
        &self,
        params: &PhysicalParams,
        beta: &BetaSchedule,
        seed: u64,
    ) -> Result<BathSample> {
        beta.check_applicable(params)?;
        let n = self.len();
        let mut q = Vec::with_capacity(n);
        let mut p = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = mode_rng(seed, i as u64);
            let energy = beta.mode_energy(params, self.omegas[i]);
            let sigma_p = energy.sqrt();
            let sigma_q = sigma_p / self.omegas[i];
            let (nq, np): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            q.push(sigma_q * nq);
            p.push(sigma_p * np);
        }
        Ok(BathSample { q, p, seed })
    }

    /// Free-bath stochastic force `F(t) = Σ_i g_i [ω_i q_i cos ω_i t + p_i sin ω_i t]`
    /// evaluated by direct summation at each requested time.
    pub fn force_history(&self, sample: &BathSample, times: &[f64]) -> Result<Vec<f64>> {
        if sample.q.len() != self.len() || sample.p.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "sample has {} modes, grid has {}",
                sample.q.len(),
                self.len()
            )));
        }
        Ok(times
            .iter()
            .map(|&t| {
                self.omegas
                    .iter()
                    .zip(&self.couplings)
                    .zip(sample.q.iter().zip(&sample.p))
                    .map(|((&w, &g), (&qi, &pi))| {
                        let (s, c) = (w * t).sin_cos();
                        g * (w * qi * c + pi * s)
                    })
                    .sum()
            })
            .collect())
    }

    /// CSV rendering `(omega, g_squared, weight)` for inspection.
    #[must_use]
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# schema: qbm.bath_grid v1\nomega,g_squared,weight\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e}",
                self.omegas[i],
                self.couplings[i] * self.couplings[i],
                self.weights[i]
            );
        }
        out
    }
}

/// Counter-based generator for one (seed, stream) pair.
///
/// Streams sharing a seed are statistically independent; the stream index is
/// set after seeding so any subset of streams can be drawn in any order.
#[must_use]
pub fn mode_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives the seed for one ensemble member from the run seed, by SplitMix64
/// mixing, so that trajectories are decorrelated and independently
/// reproducible.
#[must_use]
pub fn trajectory_seed(run_seed: u64, index: u64) -> u64 {
    let mut z = run_seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
