//! Exact classical evolution of the coupled system-bath oscillator network.
//!
//! The full phase space is ordered `z = (Q, P, q_1, p_1, ..., q_N, p_N)`.
//! The quadratic Hamiltonian
//!
//! ```text
//! H = P²/2m + (m/2)Ω²Q² + ½ Σ_i [ p_i² + (ω_i q_i − g_i Q)² ]
//! ```
//!
//! makes the flow linear, `z(t) = T(t) z(0)`. The reference method computes
//! `T(t)` exactly through the normal modes of the mass-scaled potential
//! matrix — an arrowhead eigenproblem solved by pole-anchored, safeguarded
//! Newton bisection — so the result is accurate to roundoff at any `t`,
//! positive or negative. A leapfrog stepper is provided as a second method
//! for cross-validation and for callers that want to avoid the eigensolve.
//!
//! The module also exposes [`ReducedChannel`], which evaluates the exact
//! reduced (system-sector) mean map, its added-noise covariance, and their
//! analytic time derivatives in O(N²) per sample time without ever forming
//! the full transition matrix.

use crate::bath::BathGrid;
use crate::error::{Error, Result};
use crate::model::{BetaSchedule, PhysicalParams};
use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

/// Index of the position coordinate of oscillator `i` in the interleaved
/// layout (`i = 0` is the system, `i = 1..=N` the bath modes).
#[inline]
fn q_index(i: usize) -> usize {
    2 * i
}

/// Index of the conjugate momentum of oscillator `i`.
#[inline]
fn p_index(i: usize) -> usize {
    2 * i + 1
}

/// The full linear system: the distinguished oscillator plus the discrete
/// bath, with the coupling counter-term κ = mΩ² + Σ g_i² kept inside the
/// system stiffness exactly as the completed-square Hamiltonian implies.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub params: PhysicalParams,
    pub grid: BathGrid,
    /// Counter-termed system stiffness κ = mΩ² + Σ g_i².
    pub kappa: f64,
}

/// Assemble the coupled linear system from a discretized bath.
pub fn build_system(grid: &BathGrid, params: &PhysicalParams) -> Result<LinearSystem> {
    params.validate()?;
    grid.validate()?;
    let kappa = params.mass * params.omega * params.omega + grid.coupling_weight();
    Ok(LinearSystem {
        params: *params,
        grid: grid.clone(),
        kappa,
    })
}

impl LinearSystem {
    /// Number of bath modes N.
    pub fn n_modes(&self) -> usize {
        self.grid.len()
    }

    /// Phase-space dimension 2(N+1).
    pub fn dimension(&self) -> usize {
        2 * (self.n_modes() + 1)
    }

    /// Drift matrix A with ż = A z in the interleaved layout.
    ///
    /// Built on demand: the matrix is O(N²) storage and only the generic
    /// linear-algebra paths need it; the structured solvers work from the
    /// grid directly.
    pub fn drift_matrix(&self) -> DMatrix<f64> {
        let dim = self.dimension();
        let m = self.params.mass;
        let mut a = DMatrix::zeros(dim, dim);
        a[(q_index(0), p_index(0))] = 1.0 / m;
        a[(p_index(0), q_index(0))] = -self.kappa;
        for i in 0..self.n_modes() {
            let w = self.grid.omegas[i];
            let g = self.grid.couplings[i];
            a[(q_index(i + 1), p_index(i + 1))] = 1.0;
            a[(p_index(i + 1), q_index(i + 1))] = -w * w;
            a[(p_index(0), q_index(i + 1))] = g * w;
            a[(p_index(i + 1), q_index(0))] = g * w;
        }
        a
    }

    /// Total energy of a full phase-space state.
    pub fn energy(&self, z: &DVector<f64>) -> Result<f64> {
        if z.len() != self.dimension() {
            return Err(Error::DimensionMismatch(format!(
                "state has length {} but the system dimension is {}",
                z.len(),
                self.dimension()
            )));
        }
        let m = self.params.mass;
        let omega = self.params.omega;
        let q = z[q_index(0)];
        let p = z[p_index(0)];
        let mut h = p * p / (2.0 * m) + 0.5 * m * omega * omega * q * q;
        for i in 0..self.n_modes() {
            let qi = z[q_index(i + 1)];
            let pi = z[p_index(i + 1)];
            let stretch = self.grid.omegas[i] * qi - self.grid.couplings[i] * q;
            h += 0.5 * (pi * pi + stretch * stretch);
        }
        Ok(h)
    }
}

/// Canonical symplectic form J for the interleaved layout: block-diagonal
/// copies of [[0, 1], [-1, 0]], one per oscillator.
pub fn symplectic_form(dimension: usize) -> DMatrix<f64> {
    assert!(dimension % 2 == 0, "phase-space dimension must be even");
    let mut j = DMatrix::zeros(dimension, dimension);
    for k in 0..dimension / 2 {
        j[(2 * k, 2 * k + 1)] = 1.0;
        j[(2 * k + 1, 2 * k)] = -1.0;
    }
    j
}

/// Transition matrix of the linear flow at a fixed time.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    /// Evolution time (may be negative).
    pub t: f64,
    /// The 2(N+1) × 2(N+1) map z(t) = T z(0).
    pub matrix: DMatrix<f64>,
}

impl TransitionMatrix {
    /// Phase-space dimension.
    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    /// Max-absolute-entry residual of TᵀJT − J.
    pub fn symplectic_residual(&self) -> f64 {
        let dim = self.dimension();
        // JT is a cheap row permutation with signs.
        let mut jt = DMatrix::zeros(dim, dim);
        for k in 0..dim / 2 {
            jt.row_mut(2 * k).copy_from(&self.matrix.row(2 * k + 1));
            let row = -self.matrix.row(2 * k);
            jt.row_mut(2 * k + 1).copy_from(&row);
        }
        let mut residual = self.matrix.transpose() * jt;
        residual -= symplectic_form(dim);
        residual.amax()
    }

    /// Deviation of the phase-space volume factor: ||det T| − 1|.
    pub fn volume_defect(&self) -> f64 {
        (self.matrix.determinant().abs() - 1.0).abs()
    }

    /// Dump the matrix as CSV rows (debugging aid).
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        for i in 0..self.matrix.nrows() {
            let row: Vec<String> = (0..self.matrix.ncols())
                .map(|j| format!("{:.16e}", self.matrix[(i, j)]))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Apply a transition matrix to a phase-space point.
pub fn propagate_point(t: &TransitionMatrix, z0: &DVector<f64>) -> Result<DVector<f64>> {
    if z0.len() != t.dimension() {
        return Err(Error::DimensionMismatch(format!(
            "point has length {} but the transition matrix is {}×{}",
            z0.len(),
            t.dimension(),
            t.dimension()
        )));
    }
    Ok(&t.matrix * z0)
}

/// Evolution method for [`evolve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EvolutionMethod {
    /// Exact diagonalization of the coupled quadratic form (reference).
    NormalMode,
    /// Velocity-Verlet (kick-drift-kick) stepping with the given step.
    SymplecticStep { dt: f64 },
}

/// Compute the transition matrix at time `t` (negative `t` evolves backward).
pub fn evolve(system: &LinearSystem, t: f64, method: EvolutionMethod) -> Result<TransitionMatrix> {
    match method {
        EvolutionMethod::NormalMode => Ok(normal_modes(system)?.transition(t)),
        EvolutionMethod::SymplecticStep { dt } => {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "symplectic step requires dt > 0, got {dt}"
                )));
            }
            Ok(symplectic_transition(system, t, dt))
        }
    }
}

/// Leapfrog half-kick/drift/half-kick applied to one state column.
fn leapfrog_step(system: &LinearSystem, z: &mut [f64], h: f64) {
    let m = system.params.mass;
    let n = system.n_modes();
    let half = 0.5 * h;
    // Half kick.
    let q = z[q_index(0)];
    let mut force_q = -system.kappa * q;
    for i in 0..n {
        force_q += system.grid.couplings[i] * system.grid.omegas[i] * z[q_index(i + 1)];
    }
    z[p_index(0)] += half * force_q;
    for i in 0..n {
        let w = system.grid.omegas[i];
        let g = system.grid.couplings[i];
        z[p_index(i + 1)] += half * (-w * w * z[q_index(i + 1)] + g * w * q);
    }
    // Drift.
    z[q_index(0)] += h * z[p_index(0)] / m;
    for i in 0..n {
        z[q_index(i + 1)] += h * z[p_index(i + 1)];
    }
    // Half kick from the updated positions.
    let q = z[q_index(0)];
    let mut force_q = -system.kappa * q;
    for i in 0..n {
        force_q += system.grid.couplings[i] * system.grid.omegas[i] * z[q_index(i + 1)];
    }
    z[p_index(0)] += half * force_q;
    for i in 0..n {
        let w = system.grid.omegas[i];
        let g = system.grid.couplings[i];
        z[p_index(i + 1)] += half * (-w * w * z[q_index(i + 1)] + g * w * q);
    }
}

fn symplectic_transition(system: &LinearSystem, t: f64, dt: f64) -> TransitionMatrix {
    let dim = system.dimension();
    let mut matrix = DMatrix::identity(dim, dim);
    let steps = (t.abs() / dt).ceil() as usize;
    if steps > 0 {
        // Sign carries the direction; leapfrog is exactly time-reversible.
        let h = t / steps as f64;
        for _ in 0..steps {
            for j in 0..dim {
                let mut col = matrix.column_mut(j);
                leapfrog_step(system, col.as_mut_slice(), h);
            }
        }
    }
    TransitionMatrix { t, matrix }
}

/// Normal modes of the mass-scaled potential matrix.
///
/// In coordinates `x = (√m Q, q_1, ..., q_N)` the potential is `½ xᵀVx` with
/// the arrowhead matrix `V₀₀ = Ω² + Σg_i²/m`, `V₀ᵢ = −g_iω_i/√m`,
/// `Vᵢᵢ = ω_i²`. `modes` holds the orthonormal eigenvectors as columns and
/// `frequencies` the corresponding ν_k = √λ_k in ascending order.
#[derive(Debug, Clone)]
pub struct NormalModes {
    pub frequencies: DVector<f64>,
    pub modes: DMatrix<f64>,
    mass: f64,
}

/// One solved root of the arrowhead secular equation, kept in shifted form
/// so that distances to the neighbouring pole stay fully accurate.
struct ArrowRoot {
    anchor: f64,
    delta: f64,
}

impl ArrowRoot {
    fn lambda(&self) -> f64 {
        self.anchor + self.delta
    }
}

/// Secular function f(λ) = α − λ − Σ c_i²/(d_i − λ) in shifted coordinates
/// λ = anchor + δ, returning (f, f′).
fn secular_shifted(alpha: f64, c: &[f64], d_shift: &[f64], anchor: f64, delta: f64) -> (f64, f64) {
    let mut f = alpha - anchor - delta;
    let mut fp = -1.0;
    for (ci, ds) in c.iter().zip(d_shift) {
        let gap = ds - delta; // d_i − λ
        let term = ci * ci / gap;
        f -= term;
        fp -= term / gap;
    }
    (f, fp)
}

/// Solve the secular equation on the open bracket (lo, hi), anchoring the
/// shift at whichever end the root hugs. `lo_is_pole`/`hi_is_pole` say
/// whether the bracket ends are poles of f (where the sign is structural)
/// or ordinary points (where f has already been checked).
fn arrow_root(alpha: f64, c: &[f64], d: &[f64], lo: f64, hi: f64, hi_is_pole: bool) -> ArrowRoot {
    // Pick the anchor by the midpoint sign: f is strictly decreasing, so
    // f(mid) > 0 puts the root in (mid, hi), i.e. near the upper end.
    let mid = 0.5 * (lo + hi);
    let d_mid: Vec<f64> = d.iter().map(|x| x - mid).collect();
    let (f_mid, _) = secular_shifted(alpha, c, &d_mid, mid, 0.0);
    let anchor = if f_mid > 0.0 && hi_is_pole { hi } else { lo };
    let d_shift: Vec<f64> = d.iter().map(|x| x - anchor).collect();

    // Bracket in δ-space; f decreasing means g(a) > 0 > g(b) for a < b.
    let (mut a, mut b) = (lo - anchor, hi - anchor);
    let mut x = 0.5 * (a + b);
    let mut best = x;
    for _ in 0..300 {
        let (g, gp) = secular_shifted(alpha, c, &d_shift, anchor, x);
        if g == 0.0 {
            best = x;
            break;
        }
        if g > 0.0 {
            a = x;
        } else {
            b = x;
        }
        let newton = x - g / gp;
        let next = if newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if next == x || (b - a).abs() <= f64::EPSILON * x.abs() {
            best = next;
            break;
        }
        x = next;
        best = x;
    }
    ArrowRoot {
        anchor,
        delta: best,
    }
}

/// Diagonalize the coupled quadratic form.
pub fn normal_modes(system: &LinearSystem) -> Result<NormalModes> {
    let n = system.n_modes();
    let m = system.params.mass;
    let sqrt_m = m.sqrt();
    let alpha = system.kappa / m;

    // Split off exactly decoupled modes; they keep their bare frequency and
    // a coordinate eigenvector.
    let mut coupled: Vec<usize> = Vec::new();
    let mut c: Vec<f64> = Vec::new();
    let mut d: Vec<f64> = Vec::new();
    let mut deflated: Vec<usize> = Vec::new();
    for i in 0..n {
        let ci = -system.grid.couplings[i] * system.grid.omegas[i] / sqrt_m;
        if ci == 0.0 {
            deflated.push(i);
        } else {
            coupled.push(i);
            c.push(ci);
            d.push(system.grid.omegas[i] * system.grid.omegas[i]);
        }
    }
    for pair in d.windows(2) {
        if !(pair[0] < pair[1]) {
            return Err(Error::Eigen(format!(
                "degenerate coupled bath frequencies (ω² = {} repeated); the \
                 secular solver requires distinct poles",
                pair[0]
            )));
        }
    }

    let nc = c.len();

    // Roots of the secular equation, one per interval between poles. The
    // counter-term guarantees f(0) = Ω² > 0, so zero brackets the lowest
    // root from below; the Gershgorin bound brackets the highest from above.
    let mut roots: Vec<ArrowRoot> = Vec::with_capacity(nc.saturating_sub(0) + 1);
    if nc > 0 {
        let c_sum: f64 = c.iter().map(|x| x.abs()).sum();
        let gersh_hi = d
            .iter()
            .zip(&c)
            .map(|(di, ci)| di + ci.abs())
            .fold(alpha + c_sum, f64::max);
        for j in 0..=nc {
            let (lo, hi, hi_is_pole) = if j == 0 {
                (0.0, d[0], true)
            } else if j == nc {
                (d[nc - 1], gersh_hi + 1.0, false)
            } else {
                (d[j - 1], d[j], true)
            };
            roots.push(arrow_root(alpha, &c, &d, lo, hi, hi_is_pole));
        }
    } else {
        // No coupled bath mode: the system itself is the single "root".
        roots.push(ArrowRoot {
            anchor: alpha,
            delta: 0.0,
        });
    }

    // Assemble eigenpairs: coupled roots with analytic eigenvectors, then
    // deflated coordinate directions.
    let np1 = n + 1;
    let mut pairs: Vec<(f64, DVector<f64>)> = Vec::with_capacity(np1);
    for root in &roots {
        let lambda = root.lambda();
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Eigen(format!(
                "non-positive normal-mode eigenvalue λ = {lambda} (α = {alpha}, \
                 {nc} coupled modes); the quadratic form should be positive definite"
            )));
        }
        let mut v = DVector::zeros(np1);
        v[0] = 1.0;
        let mut norm_sq = 1.0;
        for (k, &i) in coupled.iter().enumerate() {
            // λ − d_k in shifted form keeps near-pole roots accurate.
            let gap = root.delta - (d[k] - root.anchor);
            let comp = c[k] / gap; // v_i = c_i/(λ−d_i) with gap = λ−d_i
            v[i + 1] = comp;
            norm_sq += comp * comp;
        }
        let scale = 1.0 / norm_sq.sqrt();
        v *= scale;
        pairs.push((lambda, v));
    }
    for &i in &deflated {
        let lambda = system.grid.omegas[i] * system.grid.omegas[i];
        let mut v = DVector::zeros(np1);
        v[i + 1] = 1.0;
        pairs.push((lambda, v));
    }
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite eigenvalues"));

    let mut frequencies = DVector::zeros(np1);
    let mut modes = DMatrix::zeros(np1, np1);
    for (k, (lambda, v)) in pairs.into_iter().enumerate() {
        frequencies[k] = lambda.sqrt();
        modes.column_mut(k).copy_from(&v);
    }
    Ok(NormalModes {
        frequencies,
        modes,
        mass: m,
    })
}

impl NormalModes {
    /// Number of oscillators N+1.
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Max-absolute-entry defect of UᵀU − I (diagnostic).
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.modes.transpose() * &self.modes;
        (gram - DMatrix::identity(self.len(), self.len())).amax()
    }

    /// Exact transition matrix at time `t` in the interleaved layout.
    pub fn transition(&self, t: f64) -> TransitionMatrix {
        let np1 = self.len();
        let u = &self.modes;
        // Column-scaled copies of U: Uc = U cos(νt), Us = U sin(νt)/ν,
        // Uv = U ν sin(νt).
        let mut uc = u.clone();
        let mut us = u.clone();
        let mut uv = u.clone();
        for k in 0..np1 {
            let nu = self.frequencies[k];
            let (s, cos) = (nu * t).sin_cos();
            uc.column_mut(k).scale_mut(cos);
            us.column_mut(k).scale_mut(s / nu);
            uv.column_mut(k).scale_mut(nu * s);
        }
        let ut = u.transpose();
        let c = &uc * &ut;
        let s1 = &us * &ut;
        let s2 = &uv * &ut;

        // Undo the mass scaling: x = D_q (Q, q_i), ẋ = D_p (P, p_i) with
        // D_q = diag(√m, 1, ...), D_p = diag(1/√m, 1, ...).
        let sqrt_m = self.mass.sqrt();
        let dq = |i: usize| if i == 0 { sqrt_m } else { 1.0 };
        let dp = |i: usize| if i == 0 { 1.0 / sqrt_m } else { 1.0 };
        let dim = 2 * np1;
        let mut matrix = DMatrix::zeros(dim, dim);
        for i in 0..np1 {
            for j in 0..np1 {
                matrix[(q_index(i), q_index(j))] = c[(i, j)] * dq(j) / dq(i);
                matrix[(q_index(i), p_index(j))] = s1[(i, j)] * dp(j) / dq(i);
                matrix[(p_index(i), q_index(j))] = -s2[(i, j)] * dq(j) / dp(i);
                matrix[(p_index(i), p_index(j))] = c[(i, j)] * dp(j) / dp(i);
            }
        }
        TransitionMatrix { t, matrix }
    }

    /// Project a full initial state onto the modes for O(N)-per-time
    /// evaluation of the system coordinates.
    pub fn system_trajectory(&self, z0: &DVector<f64>) -> Result<SystemTrajectory> {
        let np1 = self.len();
        if z0.len() != 2 * np1 {
            return Err(Error::DimensionMismatch(format!(
                "state has length {} but the system dimension is {}",
                z0.len(),
                2 * np1
            )));
        }
        let sqrt_m = self.mass.sqrt();
        let mut x0 = DVector::zeros(np1);
        let mut v0 = DVector::zeros(np1);
        x0[0] = sqrt_m * z0[q_index(0)];
        v0[0] = z0[p_index(0)] / sqrt_m;
        for i in 1..np1 {
            x0[i] = z0[q_index(i)];
            v0[i] = z0[p_index(i)];
        }
        let ut = self.modes.transpose();
        Ok(SystemTrajectory {
            amplitudes: self.modes.row(0).transpose(),
            frequencies: self.frequencies.clone(),
            xi: &ut * x0,
            eta: &ut * v0,
            mass: self.mass,
        })
    }
}

/// Modal projection of one full-system initial condition; evaluates the
/// system's (Q, P) at any time in O(N).
#[derive(Debug, Clone)]
pub struct SystemTrajectory {
    amplitudes: DVector<f64>,
    frequencies: DVector<f64>,
    xi: DVector<f64>,
    eta: DVector<f64>,
    mass: f64,
}

impl SystemTrajectory {
    /// (Q, P) at time `t`.
    pub fn state_at(&self, t: f64) -> (f64, f64) {
        let mut x = 0.0;
        let mut v = 0.0;
        for k in 0..self.frequencies.len() {
            let nu = self.frequencies[k];
            let (s, c) = (nu * t).sin_cos();
            let a = self.amplitudes[k];
            x += a * (self.xi[k] * c + self.eta[k] * s / nu);
            v += a * (-self.xi[k] * nu * s + self.eta[k] * c);
        }
        let sqrt_m = self.mass.sqrt();
        (x / sqrt_m, v * sqrt_m)
    }
}

/// Exact reduced evolution data at one time: the system-sector mean map M,
/// the added-noise covariance Σ_add from tracing out the thermal bath, and
/// their analytic time derivatives (no finite differencing anywhere).
#[derive(Debug, Clone, Copy)]
pub struct ChannelSample {
    pub t: f64,
    /// M(t): system block of the transition matrix.
    pub mean_map: Matrix2<f64>,
    /// Ṁ(t) from the full-system drift restricted to the system rows.
    pub mean_map_dot: Matrix2<f64>,
    /// Σ_add(t) = X Σ_bath Xᵀ with X the system-rows/bath-columns block.
    pub sigma_add: Matrix2<f64>,
    /// d/dt Σ_add(t), again through the drift restriction.
    pub sigma_add_dot: Matrix2<f64>,
}

/// Reduced linear map plus added noise — the data a Gaussian or cat state
/// needs to be transported exactly.
#[derive(Debug, Clone, Copy)]
pub struct ReducedMap {
    pub map: Matrix2<f64>,
    pub noise: Matrix2<f64>,
}

impl ChannelSample {
    pub fn reduced_map(&self) -> ReducedMap {
        ReducedMap {
            map: self.mean_map,
            noise: self.sigma_add,
        }
    }

    /// Propagate system moments: mean ↦ M·mean, cov ↦ M cov Mᵀ + Σ_add.
    pub fn apply(
        &self,
        mean: &nalgebra::Vector2<f64>,
        cov: &Matrix2<f64>,
    ) -> (nalgebra::Vector2<f64>, Matrix2<f64>) {
        (
            self.mean_map * mean,
            self.mean_map * cov * self.mean_map.transpose() + self.sigma_add,
        )
    }

    /// Time derivative of the covariance for an initial system covariance
    /// `cov0`: Σ̇ = Ṁ Σ₀ Mᵀ + M Σ₀ Ṁᵀ + Σ̇_add.
    pub fn cov_dot(&self, cov0: &Matrix2<f64>) -> Matrix2<f64> {
        let a = self.mean_map_dot * cov0 * self.mean_map.transpose();
        a + a.transpose() + self.sigma_add_dot
    }
}

/// Precomputed modal data for exact reduced-channel evaluation.
///
/// Per sample time the cost is one (N+1)×5 mode-matrix product plus O(N)
/// contractions, so long horizons with many samples stay affordable at
/// large N.
#[derive(Debug, Clone)]
pub struct ReducedChannel {
    mass: f64,
    kappa: f64,
    /// a_k = U[0,k]: system amplitude of each mode.
    sys_amp: DVector<f64>,
    /// β_k = √m (α − λ_k) a_k: modal projection of the coupling row, used
    /// for the drift-restricted derivatives.
    force_amp: DVector<f64>,
    /// Thermal variances of the bath coordinates and momenta.
    var_q: DVector<f64>,
    var_p: DVector<f64>,
    modes: NormalModes,
}

impl ReducedChannel {
    pub fn new(system: &LinearSystem, schedule: &BetaSchedule) -> Result<Self> {
        schedule.check_applicable(&system.params)?;
        let modes = normal_modes(system)?;
        let n = system.n_modes();
        let np1 = n + 1;
        let alpha = system.kappa / system.params.mass;
        let sqrt_m = system.params.mass.sqrt();
        let sys_amp = modes.modes.row(0).transpose();
        let mut force_amp = DVector::zeros(np1);
        for k in 0..np1 {
            let lambda = modes.frequencies[k] * modes.frequencies[k];
            force_amp[k] = sqrt_m * (alpha - lambda) * sys_amp[k];
        }
        let mut var_q = DVector::zeros(n);
        let mut var_p = DVector::zeros(n);
        for i in 0..n {
            let w = system.grid.omegas[i];
            let energy = schedule.mode_energy(&system.params, w);
            var_p[i] = energy;
            var_q[i] = energy / (w * w);
        }
        Ok(ReducedChannel {
            mass: system.params.mass,
            kappa: system.kappa,
            sys_amp,
            force_amp,
            var_q,
            var_p,
            modes,
        })
    }

    pub fn modes(&self) -> &NormalModes {
        &self.modes
    }

    /// Evaluate the exact reduced-channel data at time `t`.
    pub fn sample(&self, t: f64) -> ChannelSample {
        let np1 = self.modes.len();
        let n = np1 - 1;
        let m = self.mass;
        let sqrt_m = m.sqrt();

        // Five modal column vectors: a·cos, a·sin/ν, a·ν·sin, β·cos, β·sin/ν.
        let mut rhs = DMatrix::zeros(np1, 5);
        let mut bc = 0.0; // Σ β_k a_k cos — the coupling row applied to u_c
        let mut bs = 0.0; // Σ β_k a_k sin/ν
        for k in 0..np1 {
            let nu = self.modes.frequencies[k];
            let (s, cos) = (nu * t).sin_cos();
            let sinc = s / nu;
            let a = self.sys_amp[k];
            let be = self.force_amp[k];
            rhs[(k, 0)] = a * cos;
            rhs[(k, 1)] = a * sinc;
            rhs[(k, 2)] = a * nu * s;
            rhs[(k, 3)] = be * cos;
            rhs[(k, 4)] = be * sinc;
            bc += be * a * cos;
            bs += be * a * sinc;
        }
        let prod = &self.modes.modes * rhs;

        let m00 = prod[(0, 0)];
        let m01 = prod[(0, 1)] / m;
        let m10 = -m * prod[(0, 2)];
        let m11 = m00;
        let mean_map = Matrix2::new(m00, m01, m10, m11);
        let mean_map_dot = Matrix2::new(
            m10 / m,
            m11 / m,
            -self.kappa * m00 + sqrt_m * bc,
            -self.kappa * m01 + bs / sqrt_m,
        );

        let mut s00 = 0.0;
        let mut s01 = 0.0;
        let mut s11 = 0.0;
        let mut x0r = 0.0;
        let mut x1r = 0.0;
        for i in 0..n {
            let uc = prod[(i + 1, 0)];
            let us = prod[(i + 1, 1)];
            let uv = prod[(i + 1, 2)];
            let wc = prod[(i + 1, 3)];
            let ws = prod[(i + 1, 4)];
            let vq = self.var_q[i];
            let vp = self.var_p[i];
            s00 += vq * uc * uc + vp * us * us;
            s01 += -vq * uc * uv + vp * us * uc;
            s11 += vq * uv * uv + vp * uc * uc;
            x0r += vq * uc * wc + vp * us * ws;
            x1r += -vq * uv * wc + vp * uc * ws;
        }
        s00 /= m;
        s11 *= m;
        x0r /= sqrt_m;
        x1r *= sqrt_m;
        let sigma_add = Matrix2::new(s00, s01, s01, s11);
        let sd00 = 2.0 * s01 / m;
        let sd01 = s11 / m - self.kappa * s00 + x0r;
        let sd11 = 2.0 * (-self.kappa * s01 + x1r);
        let sigma_add_dot = Matrix2::new(sd00, sd01, sd01, sd11);

        ChannelSample {
            t,
            mean_map,
            mean_map_dot,
            sigma_add,
            sigma_add_dot,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::GridScheme;
    use crate::model::{CutoffShape, SpectralModel};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn unit_params() -> PhysicalParams {
        PhysicalParams {
            mass: 1.0,
            omega: 1.0,
            hbar: 1.0,
            k_b: 1.0,
            temperature: 1.0,
        }
    }

    fn heavy_params() -> PhysicalParams {
        PhysicalParams {
            mass: 2.5,
            omega: 1.3,
            hbar: 1.0,
            k_b: 1.0,
            temperature: 0.8,
        }
    }

    fn ohmic_system(n: usize, params: &PhysicalParams) -> LinearSystem {
        let model = SpectralModel::ohmic(0.1, 10.0, CutoffShape::Exponential);
        let grid = BathGrid::discretize(&model, params, n, GridScheme::Uniform, None).unwrap();
        build_system(&grid, params).unwrap()
    }

    fn random_state(dim: usize, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn drift_matrix_is_hamiltonian() {
        let params = heavy_params();
        let system = ohmic_system(12, &params);
        let a = system.drift_matrix();
        let ja = symplectic_form(system.dimension()) * &a;
        let defect = (&ja - ja.transpose()).amax();
        assert!(defect <= 1e-14, "JA asymmetry {defect}");
    }

    #[test]
    fn decoupled_drift_is_block_diagonal() {
        let params = unit_params();
        let model = SpectralModel::decoupled();
        let grid =
            BathGrid::discretize(&model, &params, 4, GridScheme::Uniform, Some(8.0)).unwrap();
        let system = build_system(&grid, &params).unwrap();
        let a = system.drift_matrix();
        for i in 0..4 {
            assert_eq!(a[(p_index(0), q_index(i + 1))], 0.0);
            assert_eq!(a[(p_index(i + 1), q_index(0))], 0.0);
        }
        assert_eq!(system.kappa, params.mass * params.omega * params.omega);
    }

    #[test]
    fn single_mode_frequencies_match_two_by_two_closed_form() {
        // One bath mode: eigenvalues of [[α, c], [c, ω²]] in closed form.
        let params = heavy_params();
        let model = SpectralModel::ohmic(0.2, 3.0, CutoffShape::Exponential);
        let grid =
            BathGrid::discretize(&model, &params, 1, GridScheme::Uniform, Some(4.0)).unwrap();
        let system = build_system(&grid, &params).unwrap();
        let m = params.mass;
        let alpha = system.kappa / m;
        let c = -grid.couplings[0] * grid.omegas[0] / m.sqrt();
        let d = grid.omegas[0] * grid.omegas[0];
        let tr = alpha + d;
        let disc = ((alpha - d) * (alpha - d) + 4.0 * c * c).sqrt();
        let lam_lo = 0.5 * (tr - disc);
        let lam_hi = 0.5 * (tr + disc);
        let modes = normal_modes(&system).unwrap();
        assert_relative_eq!(
            modes.frequencies[0] * modes.frequencies[0],
            lam_lo,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            modes.frequencies[1] * modes.frequencies[1],
            lam_hi,
            max_relative = 1e-12
        );
    }

    #[test]
    fn arrowhead_matches_dense_symmetric_eigensolver() {
        let params = heavy_params();
        let system = ohmic_system(24, &params);
        let modes = normal_modes(&system).unwrap();
        assert!(modes.orthonormality_defect() <= 1e-13);

        // Dense oracle on the mass-scaled potential matrix.
        let np1 = system.n_modes() + 1;
        let m = params.mass;
        let mut v = DMatrix::zeros(np1, np1);
        v[(0, 0)] = system.kappa / m;
        for i in 0..system.n_modes() {
            let w = system.grid.omegas[i];
            let g = system.grid.couplings[i];
            v[(i + 1, i + 1)] = w * w;
            v[(0, i + 1)] = -g * w / m.sqrt();
            v[(i + 1, 0)] = -g * w / m.sqrt();
        }
        let dense = nalgebra::SymmetricEigen::new(v.clone());
        let mut dense_lams: Vec<f64> = dense.eigenvalues.iter().copied().collect();
        dense_lams.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for k in 0..np1 {
            assert_relative_eq!(
                modes.frequencies[k] * modes.frequencies[k],
                dense_lams[k],
                max_relative = 1e-10
            );
        }
        // Residual of the eigen-equation itself.
        let residual = (&v * &modes.modes
            - &modes.modes * DMatrix::from_diagonal(&modes.frequencies.map(|nu| nu * nu)))
        .amax();
        assert!(residual <= 1e-10 * v.amax(), "eigen residual {residual}");
    }

    #[test]
    fn transition_at_zero_is_identity() {
        let params = unit_params();
        let system = ohmic_system(16, &params);
        let t0 = evolve(&system, 0.0, EvolutionMethod::NormalMode).unwrap();
        let defect =
            (&t0.matrix - DMatrix::identity(system.dimension(), system.dimension())).amax();
        assert!(defect <= 1e-12, "T(0) defect {defect}");
    }

    #[test]
    fn decoupled_transition_is_free_rotation() {
        let params = heavy_params();
        let model = SpectralModel::decoupled();
        let grid =
            BathGrid::discretize(&model, &params, 3, GridScheme::Uniform, Some(6.0)).unwrap();
        let system = build_system(&grid, &params).unwrap();
        let t = 0.7;
        let tm = evolve(&system, t, EvolutionMethod::NormalMode).unwrap();
        let m = params.mass;
        let om = params.omega;
        let (s, c) = (om * t).sin_cos();
        assert_abs_diff_eq!(tm.matrix[(0, 0)], c, epsilon = 1e-12);
        assert_abs_diff_eq!(tm.matrix[(0, 1)], s / (m * om), epsilon = 1e-12);
        assert_abs_diff_eq!(tm.matrix[(1, 0)], -m * om * s, epsilon = 1e-12);
        assert_abs_diff_eq!(tm.matrix[(1, 1)], c, epsilon = 1e-12);
        for i in 0..3 {
            let w = grid.omegas[i];
            let (sw, cw) = (w * t).sin_cos();
            assert_abs_diff_eq!(
                tm.matrix[(q_index(i + 1), q_index(i + 1))],
                cw,
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                tm.matrix[(q_index(i + 1), p_index(i + 1))],
                sw / w,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn energy_is_conserved_along_the_exact_flow() {
        let params = heavy_params();
        let system = ohmic_system(24, &params);
        let modes = normal_modes(&system).unwrap();
        let z0 = random_state(system.dimension(), 42);
        let h0 = system.energy(&z0).unwrap();
        for &t in &[0.5, 2.0, 7.0, -3.0] {
            let zt = propagate_point(&modes.transition(t), &z0).unwrap();
            let ht = system.energy(&zt).unwrap();
            assert_relative_eq!(ht, h0, max_relative = 1e-9);
        }
    }

    #[test]
    fn transition_is_symplectic_with_unit_volume() {
        let params = unit_params();
        let system = ohmic_system(64, &params);
        let tm = evolve(&system, 10.0, EvolutionMethod::NormalMode).unwrap();
        assert!(tm.symplectic_residual() <= 1e-10);
        assert!(tm.volume_defect() <= 1e-9);
    }

    #[test]
    fn group_property_holds() {
        let params = heavy_params();
        let system = ohmic_system(16, &params);
        let modes = normal_modes(&system).unwrap();
        let (t1, t2) = (0.9, 2.3);
        let lhs = modes.transition(t1 + t2).matrix;
        let rhs = modes.transition(t2).matrix * modes.transition(t1).matrix;
        let scale = lhs.amax();
        assert!((lhs - rhs).amax() <= 1e-11 * scale.max(1.0));
    }

    #[test]
    fn backward_evolution_inverts_forward() {
        let params = heavy_params();
        let system = ohmic_system(16, &params);
        let modes = normal_modes(&system).unwrap();
        let z0 = random_state(system.dimension(), 7);
        let zt = propagate_point(&modes.transition(4.2), &z0).unwrap();
        let back = propagate_point(&modes.transition(-4.2), &zt).unwrap();
        let defect = (&back - &z0).amax();
        assert!(defect <= 1e-9, "round-trip defect {defect}");
    }

    #[test]
    fn propagate_point_checks_dimensions_and_fixes_origin() {
        let params = unit_params();
        let system = ohmic_system(4, &params);
        let tm = evolve(&system, 1.0, EvolutionMethod::NormalMode).unwrap();
        assert!(matches!(
            propagate_point(&tm, &DVector::zeros(3)),
            Err(Error::DimensionMismatch(_))
        ));
        let image = propagate_point(&tm, &DVector::zeros(system.dimension())).unwrap();
        assert_eq!(image.amax(), 0.0);
    }

    #[test]
    fn leapfrog_agrees_with_normal_modes() {
        // All bath modes sit at or below the system frequency (sharp cutoff
        // at Λ = Ω), so the dt = 1e-3/Ω stepper keeps its phase error well
        // under the 1e-6 relative budget over ten periods.
        let params = unit_params();
        let model = SpectralModel::ohmic(0.1, 1.0, CutoffShape::Sharp);
        let grid = BathGrid::discretize(&model, &params, 16, GridScheme::Uniform, None).unwrap();
        let system = build_system(&grid, &params).unwrap();
        let t = 10.0;
        let exact = evolve(&system, t, EvolutionMethod::NormalMode).unwrap();
        let stepped = evolve(&system, t, EvolutionMethod::SymplecticStep { dt: 1e-3 }).unwrap();
        let z0 = random_state(system.dimension(), 11);
        let ze = propagate_point(&exact, &z0).unwrap();
        let zs = propagate_point(&stepped, &z0).unwrap();
        let deviation = (&ze - &zs).amax() / ze.amax();
        assert!(deviation <= 1e-6, "method deviation {deviation}");
        // The stepper is symplectic to roundoff at any dt.
        assert!(stepped.symplectic_residual() <= 1e-11);
        // And exactly reversible: backward stepping inverts forward.
        let back = evolve(&system, -t, EvolutionMethod::SymplecticStep { dt: 1e-3 }).unwrap();
        let round = propagate_point(&back, &zs).unwrap();
        assert!((&round - &z0).amax() <= 1e-8);
    }

    #[test]
    fn evolve_rejects_nonpositive_step() {
        let params = unit_params();
        let system = ohmic_system(2, &params);
        assert!(matches!(
            evolve(&system, 1.0, EvolutionMethod::SymplecticStep { dt: 0.0 }),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn system_trajectory_matches_full_transition() {
        let params = heavy_params();
        let system = ohmic_system(16, &params);
        let modes = normal_modes(&system).unwrap();
        let z0 = random_state(system.dimension(), 3);
        let traj = modes.system_trajectory(&z0).unwrap();
        for &t in &[0.3, 1.9, 6.4] {
            let zt = propagate_point(&modes.transition(t), &z0).unwrap();
            let (q, p) = traj.state_at(t);
            assert_abs_diff_eq!(q, zt[0], epsilon = 1e-12 * zt.amax().max(1.0));
            assert_abs_diff_eq!(p, zt[1], epsilon = 1e-12 * zt.amax().max(1.0));
        }
    }

    #[test]
    fn reduced_channel_matches_brute_force_blocks() {
        // The O(N²) channel pipeline must agree with direct block algebra on
        // the full transition matrix, including both analytic derivatives
        // (cross-checked against Ṫ = A·T, no finite differences).
        let params = heavy_params();
        let system = ohmic_system(24, &params);
        let schedule = BetaSchedule::QuantumTanh;
        let channel = ReducedChannel::new(&system, &schedule).unwrap();
        let modes = normal_modes(&system).unwrap();
        let a = system.drift_matrix();
        let n = system.n_modes();
        for &t in &[0.0, 0.4, 1.7, 6.3] {
            let sample = channel.sample(t);
            let tm = modes.transition(t);
            let tdot = &a * &tm.matrix;

            // Mean map and its derivative.
            for (r, gr) in [(0usize, q_index(0)), (1, p_index(0))] {
                for (c, gc) in [(0usize, q_index(0)), (1, p_index(0))] {
                    assert_abs_diff_eq!(
                        sample.mean_map[(r, c)],
                        tm.matrix[(gr, gc)],
                        epsilon = 1e-11
                    );
                    assert_abs_diff_eq!(
                        sample.mean_map_dot[(r, c)],
                        tdot[(gr, gc)],
                        epsilon = 1e-9
                    );
                }
            }

            // Added noise and its derivative from the bath block.
            let mut sig: Matrix2<f64> = Matrix2::zeros();
            let mut sig_dot: Matrix2<f64> = Matrix2::zeros();
            for i in 0..n {
                let w = system.grid.omegas[i];
                let energy = schedule.mode_energy(&params, w);
                let (vq, vp) = (energy / (w * w), energy);
                for (r, gr) in [(0usize, q_index(0)), (1, p_index(0))] {
                    for (c, gc) in [(0usize, q_index(0)), (1, p_index(0))] {
                        let xq = tm.matrix[(gr, q_index(i + 1))];
                        let xp = tm.matrix[(gr, p_index(i + 1))];
                        let yq = tm.matrix[(gc, q_index(i + 1))];
                        let yp = tm.matrix[(gc, p_index(i + 1))];
                        let dxq = tdot[(gr, q_index(i + 1))];
                        let dxp = tdot[(gr, p_index(i + 1))];
                        let dyq = tdot[(gc, q_index(i + 1))];
                        let dyp = tdot[(gc, p_index(i + 1))];
                        sig[(r, c)] += vq * xq * yq + vp * xp * yp;
                        sig_dot[(r, c)] += vq * (dxq * yq + xq * dyq) + vp * (dxp * yp + xp * dyp);
                    }
                }
            }
            let scale = sig.amax().max(1.0);
            assert!((sample.sigma_add - sig).amax() <= 1e-11 * scale);
            let dscale = sig_dot.amax().max(1.0);
            assert!(
                (sample.sigma_add_dot - sig_dot).amax() <= 1e-9 * dscale,
                "sigma_add_dot mismatch at t={t}: {}",
                (sample.sigma_add_dot - sig_dot).amax()
            );
        }
    }

    #[test]
    fn reduced_channel_at_zero_is_identity_channel() {
        let params = unit_params();
        let system = ohmic_system(12, &params);
        let channel = ReducedChannel::new(&system, &BetaSchedule::ClassicalConstant).unwrap();
        let s = channel.sample(0.0);
        assert_abs_diff_eq!(s.mean_map[(0, 0)], 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(s.mean_map[(1, 1)], 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(s.mean_map[(0, 1)], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(s.mean_map[(1, 0)], 0.0, epsilon = 1e-13);
        assert!(s.sigma_add.amax() <= 1e-13);
        assert!(s.sigma_add_dot.amax() <= 1e-12);
        // Ṁ(0) is the reduced drift block.
        assert_abs_diff_eq!(s.mean_map_dot[(0, 1)], 1.0 / params.mass, epsilon = 1e-12);
        assert_abs_diff_eq!(s.mean_map_dot[(1, 0)], -system.kappa, epsilon = 1e-11);
    }
}
