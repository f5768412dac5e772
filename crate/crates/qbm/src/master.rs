//! Time-local coefficient extraction for the reduced phase-space equation.
//!
//! The exact reduced evolution of the observed sector is an affine Gaussian
//! channel. Whenever the mean map is invertible, that channel is generated
//! by a time-local equation for the Wigner density,
//!
//! ```text
//! ∂f/∂t = −(P/m)∂_Q f + mΩ̄²(t) Q ∂_P f + 2γ̄(t) ∂_P(P f)
//!         + d(t) ∂²f/∂Q∂P + D(t) ∂²f/∂P²
//! ```
//!
//! whose four coefficients follow from the channel: (Ω̄², γ̄) solve the
//! momentum equation on the two fundamental mean solutions, and (d, D) then
//! close the covariance flow. The extraction is algebraic — no finite
//! differences are involved when the channel supplies exact derivatives —
//! and the coefficients are independent of the reference state, which
//! [`verify_locality`] checks directly.

use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::model::{BetaSchedule, PhysicalParams};
use crate::propagator::{ChannelSample, LinearSystem, ReducedChannel};
use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Relative Wronskian level below which a time is masked as near-caustic.
const WRONSKIAN_FLOOR: f64 = 1e-9;

/// Sampled coefficients of the time-local equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterCoefficients {
    pub times: Vec<f64>,
    /// Effective squared frequency Ω̄²(t).
    pub omega_bar_sq: Vec<f64>,
    /// Effective friction γ̄(t) (momentum relaxes at rate 2γ̄).
    pub gamma_bar: Vec<f64>,
    /// Anomalous mixed diffusion d(t) (∂²/∂Q∂P term).
    pub anomalous: Vec<f64>,
    /// Momentum diffusion D(t) (∂²/∂P² term).
    pub diffusion: Vec<f64>,
    /// False where the fundamental solutions were too close to parallel for
    /// the extraction to be trusted.
    pub mask: Vec<bool>,
}

impl MasterCoefficients {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of masked (untrusted) samples.
    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|m| !**m).count()
    }

    /// CSV rendering, one row per sample.
    #[must_use]
    pub fn write_csv(&self) -> String {
        let mut out = String::from(
            "# schema: qbm.master_coefficients v1\n\
             time,omega_bar_sq,gamma_bar,anomalous,diffusion,valid\n",
        );
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                self.times[i],
                self.omega_bar_sq[i],
                self.gamma_bar[i],
                self.anomalous[i],
                self.diffusion[i],
                u8::from(self.mask[i])
            );
        }
        out
    }
}

/// One time's extraction from channel data and a reference covariance.
fn extract_at(
    sample: &ChannelSample,
    cov0: &Matrix2<f64>,
    mass: f64,
) -> (f64, f64, f64, f64, bool) {
    let m = &sample.mean_map;
    let md = &sample.mean_map_dot;
    // Momentum equations of the two fundamental solutions (columns of M):
    //   Ṗ_i = −mΩ̄² Q_i − 2γ̄ P_i,  (Q_i, P_i) = (M[0,i], M[1,i]).
    let det = m[(0, 0)] * m[(1, 1)] - m[(1, 0)] * m[(0, 1)];
    let scale = m.amax() * m.amax();
    let valid = det.abs() > WRONSKIAN_FLOOR * scale.max(f64::MIN_POSITIVE);
    let b0 = -md[(1, 0)];
    let b1 = -md[(1, 1)];
    // Solve [[Q₀, P₀], [Q₁, P₁]] · (mΩ̄², 2γ̄) = (−Ṗ₀, −Ṗ₁).
    let x0 = (b0 * m[(1, 1)] - b1 * m[(1, 0)]) / det;
    let x1 = (m[(0, 0)] * b1 - m[(0, 1)] * b0) / det;
    let omega_bar_sq = x0 / mass;
    let gamma_bar = 0.5 * x1;
    // Covariance flow of the reference state closes on (d, D).
    let (_, cov) = sample.apply(&Vector2::zeros(), cov0);
    let cov_dot = sample.cov_dot(cov0);
    let anomalous = cov_dot[(0, 1)] - cov[(1, 1)] / mass
        + mass * omega_bar_sq * cov[(0, 0)]
        + 2.0 * gamma_bar * cov[(0, 1)];
    let diffusion = 0.5
        * (cov_dot[(1, 1)]
            + 2.0 * mass * omega_bar_sq * cov[(0, 1)]
            + 4.0 * gamma_bar * cov[(1, 1)]);
    (omega_bar_sq, gamma_bar, anomalous, diffusion, valid)
}

fn extract_with_reference(
    channel: &ReducedChannel,
    times: &[f64],
    reference: &GaussianState,
    mass: f64,
) -> MasterCoefficients {
    let n = times.len();
    let mut coeffs = MasterCoefficients {
        times: times.to_vec(),
        omega_bar_sq: Vec::with_capacity(n),
        gamma_bar: Vec::with_capacity(n),
        anomalous: Vec::with_capacity(n),
        diffusion: Vec::with_capacity(n),
        mask: Vec::with_capacity(n),
    };
    for &t in times {
        let sample = channel.sample(t);
        let (w, g, d, dd, valid) = extract_at(&sample, &reference.cov, mass);
        coeffs.omega_bar_sq.push(w);
        coeffs.gamma_bar.push(g);
        coeffs.anomalous.push(d);
        coeffs.diffusion.push(dd);
        coeffs.mask.push(valid);
    }
    coeffs
}

/// Extract the four coefficients at the given times from the exact reduced
/// channel of `system`, using the minimum-uncertainty state as the
/// covariance reference (any reference gives the same values; see
/// [`verify_locality`]).
pub fn extract_coefficients(
    system: &LinearSystem,
    schedule: &BetaSchedule,
    times: &[f64],
) -> Result<MasterCoefficients> {
    if times.is_empty() {
        return Err(Error::InvalidParameter("no extraction times given".into()));
    }
    let channel = ReducedChannel::new(system, schedule)?;
    let reference = GaussianState::minimum_uncertainty(&system.params, Vector2::zeros());
    Ok(extract_with_reference(
        &channel,
        times,
        &reference,
        system.params.mass,
    ))
}

/// Largest relative disagreement between coefficients extracted with
/// different reference states — a direct check that the reduced dynamics is
/// generated by one state-independent time-local equation. Needs at least
/// two states.
pub fn verify_locality(
    system: &LinearSystem,
    schedule: &BetaSchedule,
    times: &[f64],
    states: &[GaussianState],
) -> Result<f64> {
    if states.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "locality needs at least two reference states, got {}",
            states.len()
        )));
    }
    if times.is_empty() {
        return Err(Error::InvalidParameter("no extraction times given".into()));
    }
    let channel = ReducedChannel::new(system, schedule)?;
    let mass = system.params.mass;
    let baseline = extract_with_reference(&channel, times, &states[0], mass);
    let scale = |xs: &[f64]| -> f64 {
        xs.iter()
            .map(|x| x.abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE)
    };
    let scales = [
        scale(&baseline.omega_bar_sq),
        scale(&baseline.gamma_bar),
        scale(&baseline.anomalous),
        scale(&baseline.diffusion),
    ];
    let mut worst = 0.0f64;
    for state in &states[1..] {
        let other = extract_with_reference(&channel, times, state, mass);
        for i in 0..times.len() {
            if !baseline.mask[i] || !other.mask[i] {
                continue;
            }
            worst = worst
                .max((other.omega_bar_sq[i] - baseline.omega_bar_sq[i]).abs() / scales[0])
                .max((other.gamma_bar[i] - baseline.gamma_bar[i]).abs() / scales[1])
                .max((other.anomalous[i] - baseline.anomalous[i]).abs() / scales[2])
                .max((other.diffusion[i] - baseline.diffusion[i]).abs() / scales[3]);
        }
    }
    Ok(worst)
}

/// Externally supplied moment history of one evolving Gaussian state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    pub mean_q: Vec<f64>,
    pub mean_p: Vec<f64>,
    pub var_q: Vec<f64>,
    pub var_p: Vec<f64>,
    pub cov_qp: Vec<f64>,
}

impl MomentSeries {
    fn validate(&self) -> Result<f64> {
        let n = self.times.len();
        if n < 3 {
            return Err(Error::InvalidParameter(
                "moment series needs at least three samples for centered \
                 derivatives"
                    .into(),
            ));
        }
        for (name, v) in [
            ("mean_q", &self.mean_q),
            ("mean_p", &self.mean_p),
            ("var_q", &self.var_q),
            ("var_p", &self.var_p),
            ("cov_qp", &self.cov_qp),
        ] {
            if v.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{name} has {} samples, times has {n}",
                    v.len()
                )));
            }
        }
        let dt = self.times[1] - self.times[0];
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(
                "series times must be strictly increasing".into(),
            ));
        }
        for w in self.times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt {
                return Err(Error::InvalidParameter(format!(
                    "series must be uniformly sampled: spacing {} vs {dt}",
                    w[1] - w[0]
                )));
            }
        }
        Ok(dt)
    }
}

/// Centered derivative of a uniformly sampled series (endpoints zero; the
/// caller masks them).
fn centered_derivative(x: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (x[i + 1] - x[i - 1]) / (2.0 * dt);
    }
    d
}

/// Extract the coefficients from sampled moment histories alone: at least
/// two series with linearly independent means for (Ω̄², γ̄), with (d, D)
/// closed on the first series' covariances. Derivatives are centered
/// differences, so the endpoints are masked and accuracy is O(Δt²).
pub fn extract_from_series(
    params: &PhysicalParams,
    series: &[MomentSeries],
) -> Result<MasterCoefficients> {
    params.validate()?;
    if series.len() < 2 {
        return Err(Error::MissingData(
            "coefficient extraction needs two moment series with linearly \
             independent means"
                .into(),
        ));
    }
    let dt = series[0].validate()?;
    let n = series[0].times.len();
    for s in &series[1..] {
        let dt_s = s.validate()?;
        if s.times.len() != n || (dt_s - dt).abs() > 1e-9 * dt {
            return Err(Error::DimensionMismatch(
                "all series must share the same time grid".into(),
            ));
        }
    }
    let mass = params.mass;
    let (a, b) = (&series[0], &series[1]);
    let pa_dot = centered_derivative(&a.mean_p, dt);
    let pb_dot = centered_derivative(&b.mean_p, dt);
    let vq_dot = centered_derivative(&a.var_q, dt);
    let vp_dot = centered_derivative(&a.var_p, dt);
    let cqp_dot = centered_derivative(&a.cov_qp, dt);
    let _ = &vq_dot; // position-variance equation carries no coefficient

    let mut coeffs = MasterCoefficients {
        times: a.times.clone(),
        omega_bar_sq: vec![0.0; n],
        gamma_bar: vec![0.0; n],
        anomalous: vec![0.0; n],
        diffusion: vec![0.0; n],
        mask: vec![false; n],
    };
    for i in 1..n - 1 {
        let (q0, p0) = (a.mean_q[i], a.mean_p[i]);
        let (q1, p1) = (b.mean_q[i], b.mean_p[i]);
        let det = q0 * p1 - q1 * p0;
        let scale = q0.abs().max(p0.abs()).max(q1.abs()).max(p1.abs()).powi(2);
        if det.abs() <= WRONSKIAN_FLOOR * scale.max(f64::MIN_POSITIVE) {
            continue;
        }
        let (b0, b1) = (-pa_dot[i], -pb_dot[i]);
        let x0 = (b0 * p1 - b1 * p0) / det;
        let x1 = (q0 * b1 - q1 * b0) / det;
        let omega_bar_sq = x0 / mass;
        let gamma_bar = 0.5 * x1;
        coeffs.omega_bar_sq[i] = omega_bar_sq;
        coeffs.gamma_bar[i] = gamma_bar;
        coeffs.anomalous[i] = cqp_dot[i] - a.var_p[i] / mass
            + mass * omega_bar_sq * a.var_q[i]
            + 2.0 * gamma_bar * a.cov_qp[i];
        coeffs.diffusion[i] = 0.5
            * (vp_dot[i] + 2.0 * mass * omega_bar_sq * a.cov_qp[i] + 4.0 * gamma_bar * a.var_p[i]);
        coeffs.mask[i] = true;
    }
    Ok(coeffs)
}

/// Result of re-integrating the moment equations with extracted
/// coefficients and comparing against the exact reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardCheck {
    /// Times where the comparison was made (every second coefficient
    /// sample — the integrator step spans two samples).
    pub times: Vec<f64>,
    /// |integrated − exact| per time, sup over the two mean components.
    pub mean_deviation: Vec<f64>,
    /// |integrated − exact| per time, sup over covariance entries.
    pub cov_deviation: Vec<f64>,
    /// Sup of `mean_deviation` over the exact means' sup scale.
    pub max_mean_deviation: f64,
    /// Sup of `cov_deviation` over the exact covariances' sup scale.
    pub max_cov_deviation: f64,
    /// How many masked coefficient samples had to be interpolated.
    pub interpolated: usize,
}

/// Patch masked samples by linear interpolation between valid neighbours.
fn fill_masked(values: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    let n = values.len();
    if mask.iter().all(|m| !m) {
        return Err(Error::MissingData(
            "every coefficient sample is masked".into(),
        ));
    }
    let mut out = values.to_vec();
    let mut i = 0;
    while i < n {
        if mask[i] {
            i += 1;
            continue;
        }
        let left = (0..i).rev().find(|&j| mask[j]);
        let right = (i + 1..n).find(|&j| mask[j]);
        out[i] = match (left, right) {
            (Some(l), Some(r)) => {
                let w = (i - l) as f64 / (r - l) as f64;
                values[l] + w * (values[r] - values[l])
            }
            (Some(l), None) => values[l],
            (None, Some(r)) => values[r],
            (None, None) => unreachable!("checked above"),
        };
        i += 1;
    }
    Ok(out)
}

/// Integrate the five moment equations with the extracted coefficients
/// (classic Runge-Kutta, one step per two coefficient samples so stage
/// times fall on the grid) and compare against the exact channel reduction
/// of the same initial state. The coefficient grid must be uniform with an
/// odd number of samples.
pub fn forward_check(
    system: &LinearSystem,
    schedule: &BetaSchedule,
    coeffs: &MasterCoefficients,
    initial: &GaussianState,
) -> Result<ForwardCheck> {
    let n = coeffs.len();
    if n < 3 || n % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "forward check needs an odd number of at least 3 samples so the \
             integrator midpoints fall on the grid, got {n}"
        )));
    }
    let dt = coeffs.times[1] - coeffs.times[0];
    for w in coeffs.times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs() {
            return Err(Error::InvalidParameter(
                "coefficient times must be uniform".into(),
            ));
        }
    }
    if coeffs.times[0] != 0.0 {
        return Err(Error::InvalidParameter(
            "forward check starts from t = 0".into(),
        ));
    }
    let interpolated = coeffs.masked_count();
    let omega = fill_masked(&coeffs.omega_bar_sq, &coeffs.mask)?;
    let gamma = fill_masked(&coeffs.gamma_bar, &coeffs.mask)?;
    let anom = fill_masked(&coeffs.anomalous, &coeffs.mask)?;
    let diff = fill_masked(&coeffs.diffusion, &coeffs.mask)?;
    let mass = system.params.mass;

    // State vector z = (⟨Q⟩, ⟨P⟩, σ_QQ, σ_QP, σ_PP).
    let f = |k: usize, z: &[f64; 5]| -> [f64; 5] {
        let (w, g, d, dd) = (omega[k], gamma[k], anom[k], diff[k]);
        [
            z[1] / mass,
            -mass * w * z[0] - 2.0 * g * z[1],
            2.0 * z[3] / mass,
            z[4] / mass - mass * w * z[2] - 2.0 * g * z[3] + d,
            -2.0 * mass * w * z[3] - 4.0 * g * z[4] + 2.0 * dd,
        ]
    };
    let mut z = [
        initial.mean[0],
        initial.mean[1],
        initial.cov[(0, 0)],
        initial.cov[(0, 1)],
        initial.cov[(1, 1)],
    ];
    let channel = ReducedChannel::new(system, schedule)?;
    let h = 2.0 * dt;
    let steps = (n - 1) / 2;

    let mut out = ForwardCheck {
        times: Vec::with_capacity(steps + 1),
        mean_deviation: Vec::with_capacity(steps + 1),
        cov_deviation: Vec::with_capacity(steps + 1),
        max_mean_deviation: 0.0,
        max_cov_deviation: 0.0,
        interpolated,
    };
    let mut mean_scale = 0.0f64;
    let mut cov_scale = 0.0f64;
    let mut record = |t: f64, z: &[f64; 5], out: &mut ForwardCheck| -> Result<()> {
        let exact = crate::gaussian::reduce_with_channel(&channel.sample(t), initial)?;
        let dm = (z[0] - exact.mean[0])
            .abs()
            .max((z[1] - exact.mean[1]).abs());
        let dc = (z[2] - exact.cov[(0, 0)])
            .abs()
            .max((z[3] - exact.cov[(0, 1)]).abs())
            .max((z[4] - exact.cov[(1, 1)]).abs());
        mean_scale = mean_scale.max(exact.mean[0].abs()).max(exact.mean[1].abs());
        cov_scale = cov_scale
            .max(exact.cov[(0, 0)].abs())
            .max(exact.cov[(0, 1)].abs())
            .max(exact.cov[(1, 1)].abs());
        out.times.push(t);
        out.mean_deviation.push(dm);
        out.cov_deviation.push(dc);
        Ok(())
    };
    record(0.0, &z, &mut out)?;
    for step in 0..steps {
        let k = 2 * step;
        let k1 = f(k, &z);
        let mut z2 = z;
        for i in 0..5 {
            z2[i] = z[i] + 0.5 * h * k1[i];
        }
        let k2 = f(k + 1, &z2);
        let mut z3 = z;
        for i in 0..5 {
            z3[i] = z[i] + 0.5 * h * k2[i];
        }
        let k3 = f(k + 1, &z3);
        let mut z4 = z;
        for i in 0..5 {
            z4[i] = z[i] + h * k3[i];
        }
        let k4 = f(k + 2, &z4);
        for i in 0..5 {
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        record(coeffs.times[k + 2], &z, &mut out)?;
    }
    out.max_mean_deviation = out.mean_deviation.iter().fold(0.0f64, |m, d| m.max(*d))
        / mean_scale.max(f64::MIN_POSITIVE);
    out.max_cov_deviation =
        out.cov_deviation.iter().fold(0.0f64, |m, d| m.max(*d)) / cov_scale.max(f64::MIN_POSITIVE);
    Ok(out)
}
