//! Adaptive Gauss–Legendre quadrature over panels.
//!
//! All continuum frequency integrals in this crate (memory kernel, noise
//! correlation, mass renormalization) go through [`integrate`]. The integrand is
//! smooth but possibly highly oscillatory (`cos ωt` with `ωt` up to thousands of
//! radians), so the driver seeds the panel list with enough panels to keep a few
//! radians of phase per panel and then bisects adaptively until the local error
//! estimate meets the tolerance.

use crate::error::{Error, Result};
use std::sync::OnceLock;

/// Gauss–Legendre order used on every panel. High enough that a panel spanning
/// ~3 radians of phase is already converged to machine precision.
const GL_ORDER: usize = 16;

/// Resolution controls for the frequency-domain quadratures.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    /// Absolute tolerance on the integral value.
    pub abs_tol: f64,
    /// Hard cap on the number of accepted panels (guards runaway bisection).
    pub max_panels: usize,
    /// Minimum number of seed panels before adaptivity starts.
    pub min_panels: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            abs_tol: 1e-10,
            max_panels: 1 << 17,
            min_panels: 8,
        }
    }
}

impl QuadratureConfig {
    /// Same tolerances with the seed-panel count doubled; used by convergence tests.
    #[must_use]
    pub fn refined(self) -> Self {
        QuadratureConfig {
            min_panels: self.min_panels * 2,
            ..self
        }
    }
}

/// Nodes and weights of the `GL_ORDER`-point rule on [-1, 1], computed once by
/// Newton iteration on the Legendre polynomial.
fn gauss_legendre() -> &'static [(f64, f64); GL_ORDER] {
    static TABLE: OnceLock<[(f64, f64); GL_ORDER]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = GL_ORDER;
        let mut table = [(0.0f64, 0.0f64); GL_ORDER];
        for (i, slot) in table.iter_mut().enumerate() {
            // Tricomi initial guess, then Newton on P_n(x) = 0.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_and_derivative(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_and_derivative(n, x);
            slot.0 = x;
            slot.1 = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        table
    })
}

/// Evaluates (P_n(x), P_n'(x)) by the three-term recurrence.
fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Fixed-order Gauss–Legendre value of `f` on [a, b].
fn panel_value(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for &(x, w) in gauss_legendre().iter() {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Adaptive integral of `f` on [a, b].
///
/// `phase_span` is an oscillation hint: the total phase (in radians) the
/// integrand sweeps across [a, b] (use `|t| * (b - a)` for `cos ωt` factors, 0
/// for monotone integrands). The panel seed keeps ≲ 3 radians per panel so the
/// fixed-order rule starts inside its convergence regime.
pub fn integrate(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    phase_span: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter(
            "quadrature interval must be finite".into(),
        ));
    }
    if a == b {
        return Ok(0.0);
    }

    let seeds = ((phase_span.abs() / 3.0).ceil() as usize)
        .max(cfg.min_panels)
        .min(cfg.max_panels / 2);
    let width = (b - a) / seeds as f64;

    // Work stack of (a, b, coarse value); local tolerance is allocated
    // proportionally to panel width so the per-panel errors sum to abs_tol.
    let mut stack: Vec<(f64, f64, f64)> = (0..seeds)
        .rev()
        .map(|i| {
            let pa = a + i as f64 * width;
            let pb = if i + 1 == seeds { b } else { pa + width };
            (pa, pb, panel_value(f, pa, pb))
        })
        .collect();

    let mut total = 0.0;
    let mut accepted = 0usize;
    while let Some((pa, pb, coarse)) = stack.pop() {
        let pm = 0.5 * (pa + pb);
        let left = panel_value(f, pa, pm);
        let right = panel_value(f, pm, pb);
        let fine = left + right;
        let local_tol = cfg.abs_tol * ((pb - pa) / (b - a)).max(f64::MIN_POSITIVE);
        if (fine - coarse).abs() <= local_tol || (pb - pa) < 1e-14 * (b - a).abs() {
            total += fine;
            accepted += 1;
            if accepted + stack.len() > cfg.max_panels {
                return Err(Error::Quadrature(format!(
                    "panel budget {} exhausted on [{pa:.3e}, {pb:.3e}]",
                    cfg.max_panels
                )));
            }
        } else {
            if stack.len() + 2 > cfg.max_panels {
                return Err(Error::Quadrature(format!(
                    "panel budget {} exhausted while refining [{pa:.3e}, {pb:.3e}]",
                    cfg.max_panels
                )));
            }
            stack.push((pm, pb, right));
            stack.push((pa, pm, left));
        }
    }
    if !total.is_finite() {
        return Err(Error::Quadrature("integral is not finite".into()));
    }
    Ok(total)
}
