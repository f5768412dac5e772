//! Physical model definition: system parameters, bath spectral coupling
//! densities, inverse-temperature schedules, and the continuum quantities
//! derived from them.
//!
//! The bath couples to the system coordinate through a coupling density
//! `g_ω²`, defined so that the coupling-complete potential is a sum of squares
//! `½ ∫ dω (ω q_ω − g_ω Q)²`. Everything downstream is a functional of `g_ω²`
//! and of the per-mode inverse temperature `β_ω`:
//!
//! * memory kernel `K(t) = (1/m) ∫ dω g_ω² cos ωt`,
//! * noise correlation `ν(t) = ∫ dω (g_ω²/β_ω) cos ωt`,
//! * mass renormalization `Δm = ∫ dω g_ω²/ω²`,
//! * zero-frequency friction `γ_markov = (π/4m) g²(0)`.
//!
//! An Ohmic density is normalized as `π g_ω² = 4 m γ` below the cutoff, which
//! makes `K` integrate to `2γ` one-sided and reproduces the white-noise
//! fluctuation–dissipation relation `⟨F(t)F(t′)⟩ = 4 m γ k_B T δ(t−t′)` in the
//! classical large-cutoff limit.

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadratureConfig};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Dimensional constants of the system oscillator and its environment.
///
/// The crate's natural units are `m = Ω = ħ = k_B = 1`; these fields carry the
/// dimensions through every formula so other unit systems work unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalParams {
    /// System mass `m`.
    pub mass: f64,
    /// System angular frequency `Ω`.
    pub omega: f64,
    /// Reduced Planck constant `ħ`.
    pub hbar: f64,
    /// Boltzmann constant `k_B`.
    pub k_b: f64,
    /// Bath temperature `T` (may be zero only with the quantum schedule).
    pub temperature: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            mass: 1.0,
            omega: 1.0,
            hbar: 1.0,
            k_b: 1.0,
            temperature: 1.0,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mass", self.mass),
            ("omega", self.omega),
            ("hbar", self.hbar),
            ("k_b", self.k_b),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be nonnegative, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Thermal energy `k_B T`.
    #[must_use]
    pub fn thermal_energy(&self) -> f64 {
        self.k_b * self.temperature
    }
}

/// High-frequency regularization of the coupling density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffShape {
    /// Hard cutoff: density vanishes for `ω > Λ`.
    Sharp,
    /// Exponential roll-off `e^{−ω/Λ}`.
    Exponential,
}

/// Functional family of the coupling density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralKind {
    /// Flat density `g_ω² = 4mγ/π` (times the cutoff factor).
    Ohmic,
    /// `g_ω² = (4mγ/π)(ω/ω_ref)^{s−1}` (times the cutoff factor), `s ≥ 1`.
    ///
    /// The normalization ties the density to the Ohmic value at the reference
    /// frequency, so Ohmic and supra-Ohmic baths with equal `γ` have equal
    /// coupling weight at `ω = ω_ref`. `reference = None` uses the cutoff `Λ`.
    SupraOhmic {
        exponent: f64,
        reference: Option<f64>,
    },
    /// Piecewise-linear table of `(ω, g_ω²)` pairs with strictly increasing
    /// `ω ≥ 0`; the density is zero outside the tabulated range.
    Tabulated { table: Vec<(f64, f64)> },
}

/// A bath coupling density `g_ω²` with damping scale `γ` and cutoff `Λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralModel {
    pub kind: SpectralKind,
    /// Damping scale `γ ≥ 0`; `γ = 0` is the decoupled (free-system) model.
    pub gamma: f64,
    /// Cutoff frequency `Λ > 0`.
    pub cutoff: f64,
    pub shape: CutoffShape,
}

impl SpectralModel {
    #[must_use]
    pub fn ohmic(gamma: f64, cutoff: f64, shape: CutoffShape) -> Self {
        SpectralModel {
            kind: SpectralKind::Ohmic,
            gamma,
            cutoff,
            shape,
        }
    }

    #[must_use]
    pub fn supra_ohmic(
        gamma: f64,
        cutoff: f64,
        shape: CutoffShape,
        exponent: f64,
        reference: Option<f64>,
    ) -> Self {
        SpectralModel {
            kind: SpectralKind::SupraOhmic {
                exponent,
                reference,
            },
            gamma,
            cutoff,
            shape,
        }
    }

    /// Decoupled bath (`g ≡ 0`); useful as the free-oscillator reference.
    #[must_use]
    pub fn decoupled() -> Self {
        SpectralModel::ohmic(0.0, 1.0, CutoffShape::Exponential)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be nonnegative, got {}",
                self.gamma
            )));
        }
        if !(self.cutoff.is_finite() && self.cutoff > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cutoff must be positive, got {}",
                self.cutoff
            )));
        }
        match &self.kind {
            SpectralKind::Ohmic => {}
            SpectralKind::SupraOhmic {
                exponent,
                reference,
            } => {
                if !(exponent.is_finite() && *exponent >= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "supra-Ohmic exponent must satisfy s >= 1, got {exponent}"
                    )));
                }
                if let Some(r) = reference {
                    if !(r.is_finite() && *r > 0.0) {
                        return Err(Error::InvalidParameter(format!(
                            "reference frequency must be positive, got {r}"
                        )));
                    }
                }
            }
            SpectralKind::Tabulated { table } => {
                if table.len() < 2 {
                    return Err(Error::InvalidParameter(
                        "tabulated density needs at least two points".into(),
                    ));
                }
                let mut prev = -f64::INFINITY;
                for &(w, g2) in table {
                    if !(w.is_finite() && w >= 0.0 && w > prev) {
                        return Err(Error::InvalidParameter(
                            "tabulated frequencies must be nonnegative and strictly increasing"
                                .into(),
                        ));
                    }
                    if !(g2.is_finite() && g2 >= 0.0) {
                        return Err(Error::InvalidParameter(
                            "tabulated coupling densities must be nonnegative".into(),
                        ));
                    }
                    prev = w;
                }
            }
        }
        Ok(())
    }

    /// Coupling density `g_ω²` at frequency `ω ≥ 0`.
    #[must_use]
    pub fn coupling_density(&self, params: &PhysicalParams, omega: f64) -> f64 {
        if omega < 0.0 {
            return 0.0;
        }
        let cutoff_factor = match self.shape {
            CutoffShape::Sharp => {
                if omega <= self.cutoff {
                    1.0
                } else {
                    0.0
                }
            }
            CutoffShape::Exponential => (-omega / self.cutoff).exp(),
        };
        let base = 4.0 * params.mass * self.gamma / PI;
        match &self.kind {
            SpectralKind::Ohmic => base * cutoff_factor,
            SpectralKind::SupraOhmic {
                exponent,
                reference,
            } => {
                let r = reference.unwrap_or(self.cutoff);
                base * (omega / r).powf(exponent - 1.0) * cutoff_factor
            }
            SpectralKind::Tabulated { table } => {
                // Table carries its own units and cutoff; γ and Λ are ignored.
                interp_table(table, omega)
            }
        }
    }

    /// Upper end of the frequency support used when *discretizing* the bath.
    ///
    /// For the exponential cutoff this is `10Λ` (relative weight `e^{−10}`,
    /// inside the grid fidelity budget); quadratures use the wider
    /// [`Self::quadrature_span`] so continuum values are tail-exact.
    #[must_use]
    pub fn support_max(&self) -> f64 {
        match &self.kind {
            SpectralKind::Tabulated { table } => table.last().map_or(0.0, |p| p.0),
            _ => match self.shape {
                CutoffShape::Sharp => self.cutoff,
                CutoffShape::Exponential => 10.0 * self.cutoff,
            },
        }
    }

    /// Integration range for continuum quadratures (tail below 1e−19).
    #[must_use]
    pub fn quadrature_span(&self) -> f64 {
        match &self.kind {
            SpectralKind::Tabulated { table } => table.last().map_or(0.0, |p| p.0),
            _ => match self.shape {
                CutoffShape::Sharp => self.cutoff,
                CutoffShape::Exponential => 45.0 * self.cutoff,
            },
        }
    }

    /// Memory kernel `K(t) = (1/m) ∫_0^∞ dω g_ω² cos ωt` by quadrature.
    pub fn kernel_at(
        &self,
        params: &PhysicalParams,
        t: f64,
        cfg: &QuadratureConfig,
    ) -> Result<f64> {
        self.validate()?;
        params.validate()?;
        let span = self.quadrature_span();
        let m = params.mass;
        let val = match &self.kind {
            SpectralKind::Tabulated { table } => {
                integrate_table_segments(table, cfg, |w| (w * t).cos())?
            }
            _ => integrate(
                &|w| self.coupling_density(params, w) * (w * t).cos(),
                0.0,
                span,
                span * t.abs(),
                cfg,
            )?,
        };
        Ok(val / m)
    }

    /// Closed form of the kernel where one exists (used as the fast path in
    /// time-stepping loops; `kernel_at` stays the defining quadrature).
    #[must_use]
    pub fn kernel_closed_form(&self, params: &PhysicalParams, t: f64) -> Option<f64> {
        let g = self.gamma;
        let l = self.cutoff;
        let _ = params;
        match (&self.kind, self.shape) {
            (SpectralKind::Ohmic, CutoffShape::Sharp) => {
                // (4γ/π) sin(Λt)/t, value 4γΛ/π at t = 0.
                let v = if t == 0.0 {
                    4.0 * g * l / PI
                } else {
                    4.0 * g / PI * (l * t).sin() / t
                };
                Some(v)
            }
            (SpectralKind::Ohmic, CutoffShape::Exponential) => {
                Some(4.0 * g / PI * l / (1.0 + l * l * t * t))
            }
            (
                SpectralKind::SupraOhmic {
                    exponent,
                    reference,
                },
                CutoffShape::Exponential,
            ) => {
                let r = reference.unwrap_or(l);
                let u = l * t;
                let d = 1.0 + u * u;
                if (*exponent - 2.0).abs() < 1e-12 {
                    // ∫ ω e^{−ω/Λ} cos ωt dω = Λ²(1 − Λ²t²)/(1 + Λ²t²)²
                    Some(4.0 * g / (PI * r) * l * l * (1.0 - u * u) / (d * d))
                } else if (*exponent - 3.0).abs() < 1e-12 {
                    // ∫ ω² e^{−ω/Λ} cos ωt dω = 2Λ³(1 − 3Λ²t²)/(1 + Λ²t²)³
                    Some(
                        4.0 * g / (PI * r * r) * 2.0 * l.powi(3) * (1.0 - 3.0 * u * u)
                            / (d * d * d),
                    )
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    /// Kernel value preferring the closed form, falling back to quadrature.
    pub fn kernel_value(
        &self,
        params: &PhysicalParams,
        t: f64,
        cfg: &QuadratureConfig,
    ) -> Result<f64> {
        match self.kernel_closed_form(params, t) {
            Some(v) => Ok(v),
            None => self.kernel_at(params, t, cfg),
        }
    }

    /// Noise correlation `ν(t) = ∫_0^∞ dω (g_ω²/β_ω) cos ωt`.
    pub fn noise_correlation_at(
        &self,
        params: &PhysicalParams,
        beta: &BetaSchedule,
        t: f64,
        cfg: &QuadratureConfig,
    ) -> Result<f64> {
        self.validate()?;
        params.validate()?;
        beta.check_applicable(params)?;
        let span = self.quadrature_span();
        match &self.kind {
            SpectralKind::Tabulated { table } => integrate_table_segments(table, cfg, |w| {
                beta.mode_energy(params, w) * (w * t).cos()
            }),
            _ => integrate(
                &|w| self.coupling_density(params, w) * beta.mode_energy(params, w) * (w * t).cos(),
                0.0,
                span,
                span * t.abs(),
                cfg,
            ),
        }
    }

    /// One-sided time integral `∫_0^{t_max} ν(t) dt`, evaluated by swapping the
    /// integration order: `∫ dω (g_ω²/β_ω) sin(ω t_max)/ω`.
    ///
    /// For a classical Ohmic bath this converges to the white-noise weight
    /// `2 m γ k_B T` as `Λ t_max → ∞`.
    pub fn noise_time_integral(
        &self,
        params: &PhysicalParams,
        beta: &BetaSchedule,
        t_max: f64,
        cfg: &QuadratureConfig,
    ) -> Result<f64> {
        self.validate()?;
        params.validate()?;
        beta.check_applicable(params)?;
        if t_max < 0.0 {
            return Err(Error::InvalidParameter("t_max must be nonnegative".into()));
        }
        let sinc = move |w: f64| {
            if w.abs() < 1e-8 {
                t_max * (1.0 - (w * t_max).powi(2) / 6.0)
            } else {
                (w * t_max).sin() / w
            }
        };
        let span = self.quadrature_span();
        match &self.kind {
            SpectralKind::Tabulated { table } => {
                integrate_table_segments(table, cfg, |w| beta.mode_energy(params, w) * sinc(w))
            }
            _ => integrate(
                &|w| self.coupling_density(params, w) * beta.mode_energy(params, w) * sinc(w),
                0.0,
                span,
                span * t_max,
                cfg,
            ),
        }
    }

    /// Mass renormalization `Δm = ∫_0^∞ dω g_ω²/ω²`.
    ///
    /// Errors with [`Error::DivergentIntegral`] when the density does not
    /// vanish fast enough at `ω → 0` (any Ohmic model, supra-Ohmic `s ≤ 2`,
    /// or a table that is nonzero at the origin).
    pub fn renormalized_mass(
        &self,
        params: &PhysicalParams,
        cfg: &QuadratureConfig,
    ) -> Result<f64> {
        self.validate()?;
        params.validate()?;
        if self.gamma == 0.0 {
            if let SpectralKind::Tabulated { .. } = self.kind {
            } else {
                return Ok(0.0);
            }
        }
        match &self.kind {
            SpectralKind::Ohmic => Err(Error::DivergentIntegral(
                "g² is constant near ω=0 for an Ohmic density, so ∫ g²/ω² dω diverges".into(),
            )),
            SpectralKind::SupraOhmic { exponent, .. } => {
                if *exponent <= 2.0 {
                    return Err(Error::DivergentIntegral(format!(
                        "∫ g²/ω² dω ~ ∫ ω^(s-3) dω diverges at ω=0 for s = {exponent} <= 2"
                    )));
                }
                let span = self.quadrature_span();
                integrate(
                    &|w| {
                        if w <= 0.0 {
                            0.0
                        } else {
                            self.coupling_density(params, w) / (w * w)
                        }
                    },
                    0.0,
                    span,
                    0.0,
                    cfg,
                )
            }
            SpectralKind::Tabulated { table } => {
                if table[0].0 == 0.0 && (table[0].1 != 0.0 || table[1].1 != 0.0) {
                    return Err(Error::DivergentIntegral(
                        "tabulated density does not vanish fast enough at ω=0 for ∫ g²/ω² dω"
                            .into(),
                    ));
                }
                integrate_table_segments(table, cfg, |w| if w > 0.0 { 1.0 / (w * w) } else { 0.0 })
            }
        }
    }

    /// Zero-frequency (Markovian) friction constant implied by the kernel:
    /// `γ_markov = ½ ∫_0^∞ K(t) dt = (π/4m) g²(0⁺)`.
    #[must_use]
    pub fn markovian_gamma(&self, params: &PhysicalParams) -> f64 {
        let g2_origin = match &self.kind {
            // Cutoff factors equal 1 at ω = 0 for both shapes.
            SpectralKind::Ohmic => 4.0 * params.mass * self.gamma / PI,
            SpectralKind::SupraOhmic { exponent, .. } => {
                if *exponent > 1.0 {
                    0.0
                } else {
                    4.0 * params.mass * self.gamma / PI
                }
            }
            SpectralKind::Tabulated { table } => {
                if table[0].0 == 0.0 {
                    table[0].1
                } else {
                    0.0
                }
            }
        };
        PI / (4.0 * params.mass) * g2_origin
    }
}

/// Linear interpolation on a validated `(ω, g²)` table; zero outside.
fn interp_table(table: &[(f64, f64)], omega: f64) -> f64 {
    let n = table.len();
    if omega < table[0].0 || omega > table[n - 1].0 {
        return 0.0;
    }
    let idx = table.partition_point(|p| p.0 <= omega).min(n - 1);
    let (w1, g1) = table[idx - 1];
    let (w2, g2) = table[idx];
    if w2 == w1 {
        return g1;
    }
    g1 + (g2 - g1) * (omega - w1) / (w2 - w1)
}

/// Integrates `g²(ω)·weight(ω)` segment by segment so the interpolation kinks
/// never land inside a panel.
fn integrate_table_segments(
    table: &[(f64, f64)],
    cfg: &QuadratureConfig,
    weight: impl Fn(f64) -> f64,
) -> Result<f64> {
    let mut total = 0.0;
    for pair in table.windows(2) {
        let (a, ga) = pair[0];
        let (b, gb) = pair[1];
        if ga == 0.0 && gb == 0.0 {
            continue;
        }
        let f = |w: f64| {
            let g2 = ga + (gb - ga) * (w - a) / (b - a);
            g2 * weight(w)
        };
        total += integrate(&f, a, b, 0.0, cfg)?;
    }
    Ok(total)
}

/// Per-mode inverse temperature schedule `β_ω` of the initial bath state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSchedule {
    /// Classical equipartition: `β_ω = 1/(k_B T)` for every mode.
    ClassicalConstant,
    /// Quantum thermal occupation: `β_ω = (2/ħω) tanh(ħω/2k_BT)`, i.e. each
    /// mode carries the mean energy `(ħω/2) coth(ħω/2k_BT)`.
    QuantumTanh,
}

impl BetaSchedule {
    /// Errors early for the one undefined combination (classical at `T = 0`).
    pub fn check_applicable(&self, params: &PhysicalParams) -> Result<()> {
        params.validate()?;
        if *self == BetaSchedule::ClassicalConstant && params.temperature == 0.0 {
            return Err(Error::InvalidParameter(
                "classical schedule is undefined at T = 0 (β diverges)".into(),
            ));
        }
        Ok(())
    }

    /// Inverse temperature `β_ω` of the mode at frequency `ω > 0`.
    pub fn beta_at(&self, params: &PhysicalParams, omega: f64) -> Result<f64> {
        self.check_applicable(params)?;
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mode frequency must be positive, got {omega}"
            )));
        }
        Ok(match self {
            BetaSchedule::ClassicalConstant => 1.0 / params.thermal_energy(),
            BetaSchedule::QuantumTanh => {
                let hw = params.hbar * omega;
                if params.temperature == 0.0 {
                    2.0 / hw
                } else {
                    let x = hw / (2.0 * params.thermal_energy());
                    2.0 / hw * x.tanh()
                }
            }
        })
    }

    /// Mean mode energy `1/β_ω`; infallible interior helper for integrands
    /// (assumes `check_applicable` passed and `ω ≥ 0`).
    #[must_use]
    pub fn mode_energy(&self, params: &PhysicalParams, omega: f64) -> f64 {
        match self {
            BetaSchedule::ClassicalConstant => params.thermal_energy(),
            BetaSchedule::QuantumTanh => {
                let hw = params.hbar * omega;
                if params.temperature == 0.0 {
                    return 0.5 * hw;
                }
                let x = hw / (2.0 * params.thermal_energy());
                if x < 1e-8 {
                    // coth(x) ≈ 1/x + x/3
                    params.thermal_energy() + hw * x / 6.0
                } else {
                    0.5 * hw / x.tanh()
                }
            }
        }
    }
}

/// A memory kernel bound to one model: evaluator plus quadrature controls.
#[derive(Debug, Clone)]
pub struct MemoryKernel {
    pub model: SpectralModel,
    pub params: PhysicalParams,
    pub quad: QuadratureConfig,
}

impl MemoryKernel {
    pub fn new(model: SpectralModel, params: PhysicalParams) -> Result<Self> {
        model.validate()?;
        params.validate()?;
        Ok(MemoryKernel {
            model,
            params,
            quad: QuadratureConfig::default(),
        })
    }

    /// `K(t)`, using the closed form when the family has one.
    pub fn at(&self, t: f64) -> Result<f64> {
        self.model.kernel_value(&self.params, t, &self.quad)
    }
}
