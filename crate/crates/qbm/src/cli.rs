//! Batch scenario runner: one JSON configuration in, CSV tables and a JSON
//! manifest out.
//!
//! The binary exposes a single subcommand,
//!
//! ```text
//! qbm run <config.json> [--out DIR] [--seed N] [--threads K]
//! ```
//!
//! Every run computes all of its outputs in memory first and only then
//! touches the filesystem, so a failing configuration leaves no files
//! behind. Data files are CSV with a `# schema:` first line and 17
//! significant digits; each run also writes `manifest.json` recording the
//! configuration echo, its SHA-256, the seed, the crate version, wall-clock
//! time, and scenario-specific results.
//!
//! Exit codes: 0 on success, 2 on configuration or validation errors, 3 on
//! numerical failures. All failures print a machine-readable JSON
//! diagnostic to stderr.

use crate::bath::{BathGrid, GridScheme};
use crate::error::{Error, Result};
use crate::gaussian::{eq10_demo, f1_mixture, transport_cat, CatState, F1Form, GaussianState};
use crate::langevin::{
    decompose_backreaction, impulse_response, run_ensemble, solve_gle, Drive, EnsembleConfig,
    GleConfig, HistoryTruncation, InitialCondition, KernelSource,
};
use crate::master::{extract_coefficients, forward_check, verify_locality};
use crate::model::{BetaSchedule, PhysicalParams, SpectralModel};
use crate::propagator::{build_system, ReducedChannel};
use crate::quad::QuadratureConfig;
use clap::{Parser, Subcommand};
use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "QBM_OUT_DIR";

/// Refuse Wigner grids above this many points (~1 GB of text).
pub const MAX_GRID_POINTS: usize = 16_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Tabulate the memory kernel and noise correlation.
    Kernel,
    /// Integrate the generalized Langevin dynamics (single trajectory and,
    /// optionally, a Monte-Carlo ensemble).
    Simulate,
    /// Extract the time-local coefficients and check forward closure.
    Extract,
    /// Check that the extracted coefficients are state-independent.
    Locality,
    /// Transport a two-lump superposition state and track fringe visibility.
    Decohere,
    /// Compare driven responses with the coupling on and off.
    Counterpunch,
    /// Two-oscillator purity demo (mixture vs. entangled pure state).
    Eq10,
}

impl Scenario {
    fn name(self) -> &'static str {
        match self {
            Scenario::Kernel => "kernel",
            Scenario::Simulate => "simulate",
            Scenario::Extract => "extract",
            Scenario::Locality => "locality",
            Scenario::Decohere => "decohere",
            Scenario::Counterpunch => "counterpunch",
            Scenario::Eq10 => "eq10",
        }
    }

    fn needs_spectral(self) -> bool {
        !matches!(self, Scenario::Eq10)
    }
}

fn default_n_modes() -> usize {
    256
}

fn default_scheme() -> GridScheme {
    GridScheme::EqualWeight
}

/// Bath discretization controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    #[serde(default = "default_n_modes")]
    pub n_modes: usize,
    #[serde(default = "default_scheme")]
    pub scheme: GridScheme,
    /// Upper edge of the discretized band (defaults to the model's grid
    /// support).
    #[serde(default)]
    pub omega_max: Option<f64>,
}

impl Default for BathConfig {
    fn default() -> Self {
        BathConfig {
            n_modes: default_n_modes(),
            scheme: default_scheme(),
            omega_max: None,
        }
    }
}

fn default_dt() -> f64 {
    1e-3
}

fn default_horizon() -> f64 {
    10.0
}

fn default_samples() -> usize {
    201
}

fn default_seed() -> u64 {
    1
}

fn default_true() -> bool {
    true
}

/// Step sizes, horizons, sampling, and ensemble controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Number of output sample times on `[0, horizon]`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Ensemble size; 0 skips the ensemble.
    #[serde(default)]
    pub trajectories: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Keep the initial-condition kernel term in the Langevin dynamics.
    #[serde(default = "default_true")]
    pub slip: bool,
    /// Memory-integral truncation (defaults to the full history).
    #[serde(default)]
    pub truncation: Option<HistoryTruncation>,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            dt: default_dt(),
            horizon: default_horizon(),
            samples: default_samples(),
            trajectories: 0,
            seed: default_seed(),
            slip: true,
            truncation: None,
        }
    }
}

/// Superposition-state controls for the `decohere` scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatConfig {
    /// Lump displacement `±a` (defaults to `a² = 20 ħ/mΩ`).
    #[serde(default)]
    pub separation: Option<f64>,
}

/// Controls for the two-oscillator purity demo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoConfig {
    /// Mixture lump displacement (defaults to `a² = 20 ħ/mΩ`).
    #[serde(default)]
    pub separation: Option<f64>,
    /// Position cross-coupling of the entangled state (defaults to `mΩ/ħ`).
    #[serde(default)]
    pub cross_coupling: Option<f64>,
}

/// Rectangular phase-space grid for Wigner emission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub q_min: f64,
    pub q_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub nq: usize,
    pub np: usize,
}

/// A phase-space density that [`emit_grid`] can evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSpec {
    Gaussian(GaussianState),
    Cat(CatState),
    /// Convex mixture of Gaussian lumps (weights should sum to one).
    Mixture {
        components: Vec<WeightedGaussian>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedGaussian {
    pub weight: f64,
    pub state: GaussianState,
}

impl StateSpec {
    fn eval(&self, q: f64, p: f64) -> Result<f64> {
        match self {
            StateSpec::Gaussian(g) => g.wigner_eval(q, p),
            StateSpec::Cat(c) => c.wigner_eval(q, p),
            StateSpec::Mixture { components } => {
                let mut f = 0.0;
                for c in components {
                    f += c.weight * c.state.wigner_eval(q, p)?;
                }
                Ok(f)
            }
        }
    }
}

/// Evaluate `state` on the grid and render `(q, p, f)` rows, row-major in
/// `q` with `p` varying fastest. The first line is a fixed schema header.
pub fn emit_grid(state: &StateSpec, grid: &GridSpec) -> Result<String> {
    if grid.nq == 0 || grid.np == 0 {
        return Err(Error::InvalidParameter(format!(
            "wigner grid must have at least one point per axis, got {}×{}",
            grid.nq, grid.np
        )));
    }
    if grid.nq.saturating_mul(grid.np) > MAX_GRID_POINTS {
        return Err(Error::InvalidParameter(format!(
            "wigner grid {}×{} exceeds the {MAX_GRID_POINTS}-point cap",
            grid.nq, grid.np
        )));
    }
    if grid.q_max < grid.q_min || grid.p_max < grid.p_min {
        return Err(Error::InvalidParameter(
            "wigner grid bounds must satisfy min ≤ max".into(),
        ));
    }
    let axis = |lo: f64, hi: f64, n: usize, i: usize| -> f64 {
        if n == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    };
    let mut out = String::from("# schema: qbm.wigner v1\nq,p,f\n");
    for i in 0..grid.nq {
        let q = axis(grid.q_min, grid.q_max, grid.nq, i);
        for j in 0..grid.np {
            let p = axis(grid.p_min, grid.p_max, grid.np, j);
            let f = state.eval(q, p)?;
            let _ = writeln!(out, "{q:.16e},{p:.16e},{f:.16e}");
        }
    }
    Ok(out)
}

fn default_schedule() -> BetaSchedule {
    BetaSchedule::ClassicalConstant
}

/// One scenario run, fully described.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub params: PhysicalParams,
    /// Coupling density; required by every scenario except `eq10`.
    #[serde(default)]
    pub spectral: Option<SpectralModel>,
    #[serde(default = "default_schedule")]
    pub schedule: BetaSchedule,
    #[serde(default)]
    pub bath: BathConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    /// Initial condition for trajectory scenarios (default: unit position
    /// displacement at rest).
    #[serde(default)]
    pub initial: Option<InitialCondition>,
    /// External drive for `simulate`/`counterpunch`.
    #[serde(default)]
    pub drive: Option<Drive>,
    /// Start of the late-time measurement window (`counterpunch`).
    #[serde(default)]
    pub measure_from: Option<f64>,
    #[serde(default)]
    pub cat: Option<CatConfig>,
    #[serde(default)]
    pub demo: Option<DemoConfig>,
    /// When present, scenarios with a distinguished state also emit it on
    /// this Wigner grid.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// Output directory (overridden by `--out`, then by `$QBM_OUT_DIR`).
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.schedule.check_applicable(&self.params)?;
        if let Some(spectral) = &self.spectral {
            spectral.validate()?;
        } else if self.scenario.needs_spectral() {
            return Err(Error::Config(format!(
                "scenario '{}' requires a spectral model",
                self.scenario.name()
            )));
        }
        if self.bath.n_modes == 0 {
            return Err(Error::Config("bath.n_modes must be positive".into()));
        }
        let n = &self.numerics;
        if !(n.dt > 0.0) || !(n.horizon > 0.0) {
            return Err(Error::Config(
                "numerics.dt and numerics.horizon must be positive".into(),
            ));
        }
        if n.samples < 2 {
            return Err(Error::Config("numerics.samples must be at least 2".into()));
        }
        Ok(())
    }

    fn spectral(&self) -> Result<&SpectralModel> {
        self.spectral.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "scenario '{}' requires a spectral model",
                self.scenario.name()
            ))
        })
    }

    fn bath_grid(&self) -> Result<BathGrid> {
        BathGrid::discretize(
            self.spectral()?,
            &self.params,
            self.bath.n_modes,
            self.bath.scheme,
            self.bath.omega_max,
        )
    }

    fn sample_times(&self, n: usize) -> Vec<f64> {
        let h = self.numerics.horizon;
        (0..n).map(|i| h * i as f64 / (n - 1) as f64).collect()
    }

    /// Sample count forced odd (the forward check integrates two samples
    /// per step).
    fn odd_samples(&self) -> usize {
        self.numerics.samples | 1
    }

    fn initial_fixed(&self) -> (f64, f64) {
        match &self.initial {
            Some(InitialCondition::Fixed { position, momentum }) => (*position, *momentum),
            Some(InitialCondition::Gaussian(g)) => (g.mean[0], g.mean[1]),
            None => (1.0, 0.0),
        }
    }

    fn initial_gaussian(&self) -> GaussianState {
        match &self.initial {
            Some(InitialCondition::Gaussian(g)) => g.clone(),
            Some(InitialCondition::Fixed { position, momentum }) => {
                GaussianState::minimum_uncertainty(&self.params, Vector2::new(*position, *momentum))
            }
            None => GaussianState::minimum_uncertainty(&self.params, Vector2::new(1.0, 0.0)),
        }
    }

    fn gle_config(&self) -> Result<GleConfig> {
        Ok(GleConfig {
            params: self.params,
            kernel: KernelSource::Continuum(self.spectral()?.clone()),
            dt: self.numerics.dt,
            horizon: self.numerics.horizon,
            include_slip: self.numerics.slip,
            truncation: self.numerics.truncation.unwrap_or(HistoryTruncation::Full),
            drive: self.drive.unwrap_or(Drive::None),
        })
    }
}

/// In-memory output file.
struct OutputFile {
    name: &'static str,
    contents: String,
}

type ScenarioOutput = (Vec<OutputFile>, Map<String, Value>);

fn linspace_csv_header(columns: &[&str], schema: &str) -> String {
    format!("# schema: {schema}\n{}\n", columns.join(","))
}

fn run_kernel(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    let spectral = config.spectral()?;
    let params = &config.params;
    let quad = QuadratureConfig::default();
    let grid = config.bath_grid()?;
    let times = config.sample_times(config.numerics.samples);

    let mut csv = linspace_csv_header(
        &[
            "time",
            "memory_kernel",
            "memory_kernel_discrete",
            "noise_correlation",
            "noise_correlation_discrete",
        ],
        "qbm.kernel v1",
    );
    for &t in &times {
        let k = spectral.kernel_value(params, t, &quad)?;
        let kd = grid.kernel_at(params, t);
        let nu = spectral.noise_correlation_at(params, &config.schedule, t, &quad)?;
        let nud = grid.noise_correlation_at(params, &config.schedule, t);
        let _ = writeln!(csv, "{t:.16e},{k:.16e},{kd:.16e},{nu:.16e},{nud:.16e}");
    }

    let mut extra = Map::new();
    extra.insert(
        "markovian_gamma".into(),
        json!(spectral.markovian_gamma(params)),
    );
    if let Ok(dm) = spectral.renormalized_mass(params, &quad) {
        extra.insert("mass_shift".into(), json!(dm));
    }
    Ok((
        vec![OutputFile {
            name: "kernel.csv",
            contents: csv,
        }],
        extra,
    ))
}

fn run_simulate(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    let gle = config.gle_config()?;
    let (q0, p0) = config.initial_fixed();
    let traj = solve_gle(&gle, q0, p0, None)?;
    let decomposition = decompose_backreaction(&gle, &traj)?;

    let mut br_csv = linspace_csv_header(&["time", "back_reaction"], "qbm.backreaction v1");
    for (t, f) in traj.times.iter().zip(&decomposition.back_reaction) {
        let _ = writeln!(br_csv, "{t:.16e},{f:.16e}");
    }

    let mut files = vec![
        OutputFile {
            name: "trajectory.csv",
            contents: traj.write_csv(),
        },
        OutputFile {
            name: "backreaction.csv",
            contents: br_csv,
        },
    ];
    let mut extra = Map::new();
    extra.insert(
        "local_frequency_sq".into(),
        json!(decomposition.omega_tilde_sq),
    );
    extra.insert("local_gamma".into(), json!(decomposition.gamma_local));
    extra.insert(
        "backreaction_identity_residual".into(),
        json!(decomposition.identity_residual),
    );

    if config.numerics.trajectories > 0 {
        let n_steps = gle.n_steps();
        let samples = config.numerics.samples.min(n_steps + 1);
        let mut record_times: Vec<f64> = (0..samples)
            .map(|i| {
                let idx = (i as f64 * n_steps as f64 / (samples - 1) as f64).round() as usize;
                idx as f64 * gle.dt
            })
            .collect();
        record_times.dedup();
        let ensemble = run_ensemble(&EnsembleConfig {
            gle: gle.clone(),
            noise_grid: config.bath_grid()?,
            schedule: config.schedule.clone(),
            initial: config.initial.clone().unwrap_or(InitialCondition::Fixed {
                position: q0,
                momentum: p0,
            }),
            trajectories: config.numerics.trajectories,
            seed: config.numerics.seed,
            record_times,
        })?;
        extra.insert("trajectories".into(), json!(ensemble.trajectories));
        files.push(OutputFile {
            name: "ensemble.csv",
            contents: ensemble.write_csv(),
        });
    }
    Ok((files, extra))
}

fn run_extract(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    let grid = config.bath_grid()?;
    let system = build_system(&grid, &config.params)?;
    let times = config.sample_times(config.odd_samples());
    let coeffs = extract_coefficients(&system, &config.schedule, &times)?;
    let check = forward_check(
        &system,
        &config.schedule,
        &coeffs,
        &config.initial_gaussian(),
    )?;

    let mut extra = Map::new();
    extra.insert(
        "forward_max_mean_deviation".into(),
        json!(check.max_mean_deviation),
    );
    extra.insert(
        "forward_max_cov_deviation".into(),
        json!(check.max_cov_deviation),
    );
    extra.insert("masked_samples".into(), json!(coeffs.masked_count()));
    extra.insert("interpolated_samples".into(), json!(check.interpolated));
    Ok((
        vec![OutputFile {
            name: "coefficients.csv",
            contents: coeffs.write_csv(),
        }],
        extra,
    ))
}

/// Three covariance shapes spanning the reference-state space: minimal,
/// strongly squeezed, and hot with cross-correlation.
fn locality_states(params: &PhysicalParams) -> Vec<GaussianState> {
    let sq = params.hbar / (2.0 * params.mass * params.omega);
    let sp = params.mass * params.omega * params.hbar / 2.0;
    vec![
        GaussianState::minimum_uncertainty(params, Vector2::zeros()),
        GaussianState {
            mean: Vector2::zeros(),
            cov: Matrix2::new(4.0 * sq, 0.0, 0.0, 0.25 * sp),
        },
        GaussianState {
            mean: Vector2::new(1.0, 0.0),
            cov: Matrix2::new(
                3.0 * sq,
                0.5 * (sq * sp).sqrt(),
                0.5 * (sq * sp).sqrt(),
                3.0 * sp,
            ),
        },
    ]
}

fn run_locality(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    let grid = config.bath_grid()?;
    let system = build_system(&grid, &config.params)?;
    let times = config.sample_times(config.numerics.samples);
    let states = locality_states(&config.params);
    let max_deviation = verify_locality(&system, &config.schedule, &times, &states)?;
    let coeffs = extract_coefficients(&system, &config.schedule, &times)?;

    let mut extra = Map::new();
    extra.insert("max_deviation".into(), json!(max_deviation));
    extra.insert("reference_states".into(), json!(states.len()));
    Ok((
        vec![OutputFile {
            name: "coefficients.csv",
            contents: coeffs.write_csv(),
        }],
        extra,
    ))
}

fn run_decohere(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    let params = &config.params;
    let separation = config
        .cat
        .and_then(|c| c.separation)
        .unwrap_or_else(|| (20.0 * params.hbar / (params.mass * params.omega)).sqrt());
    let cat0 = CatState::pure_superposition(params, separation)?;
    let grid = config.bath_grid()?;
    let system = build_system(&grid, params)?;
    let channel = ReducedChannel::new(&system, &config.schedule)?;
    let times = config.sample_times(config.numerics.samples);

    let mut csv = linspace_csv_header(
        &["time", "fringe_visibility", "purity"],
        "qbm.decoherence v1",
    );
    let mut visibilities = Vec::with_capacity(times.len());
    let mut final_cat = cat0.clone();
    for &t in &times {
        let map = channel.sample(t).reduced_map();
        let cat_t = transport_cat(&map, &cat0)?;
        let vis = cat_t.fringe_visibility()?;
        let purity = cat_t.purity(params)?;
        let _ = writeln!(csv, "{t:.16e},{vis:.16e},{purity:.16e}");
        visibilities.push(vis);
        final_cat = cat_t;
    }

    // First crossing of half the initial visibility, linearly interpolated.
    let target = 0.5 * visibilities[0];
    let half_life = times
        .windows(2)
        .zip(visibilities.windows(2))
        .find(|(_, v)| v[0] >= target && v[1] < target)
        .map(|(t, v)| t[0] + (t[1] - t[0]) * (v[0] - target) / (v[0] - v[1]));

    let mut extra = Map::new();
    extra.insert("separation".into(), json!(separation));
    extra.insert("visibility_half_life".into(), json!(half_life));
    if let Some(spectral) = &config.spectral {
        let gamma = spectral.markovian_gamma(params);
        if gamma > 0.0 {
            let relaxation = 1.0 / (2.0 * gamma);
            extra.insert("relaxation_time".into(), json!(relaxation));
            if let Some(t_half) = half_life {
                extra.insert(
                    "relaxation_over_half_life".into(),
                    json!(relaxation / t_half),
                );
            }
        }
    }

    let mut files = vec![OutputFile {
        name: "decoherence.csv",
        contents: csv,
    }];
    if let Some(grid_spec) = &config.grid {
        files.push(OutputFile {
            name: "wigner_initial.csv",
            contents: emit_grid(&StateSpec::Cat(cat0), grid_spec)?,
        });
        files.push(OutputFile {
            name: "wigner_final.csv",
            contents: emit_grid(&StateSpec::Cat(final_cat), grid_spec)?,
        });
    }
    Ok((files, extra))
}

fn run_counterpunch(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    let spectral = config.spectral()?;
    let params = &config.params;
    let mut gle = config.gle_config()?;
    if matches!(gle.drive, Drive::None) {
        let scale = 20.0 / spectral.cutoff;
        gle.drive = Drive::HannPulse {
            start: scale,
            width: scale,
            amplitude: 1.0,
        };
    }
    let Drive::HannPulse { start, width, .. } = gle.drive else {
        unreachable!("drive defaulted above");
    };
    let measure_from = config
        .measure_from
        .unwrap_or(start + width + 0.05 / params.omega);
    let comparison = impulse_response(&gle, measure_from)?;

    let mut csv = linspace_csv_header(
        &[
            "time",
            "coupled_position",
            "coupled_momentum",
            "free_position",
            "free_momentum",
        ],
        "qbm.counterpunch v1",
    );
    let coupled_p = comparison.coupled.momentum(params);
    let free_p = comparison.free.momentum(params);
    for i in 0..comparison.coupled.times.len() {
        let _ = writeln!(
            csv,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            comparison.coupled.times[i],
            comparison.coupled.position[i],
            coupled_p[i],
            comparison.free.position[i],
            free_p[i]
        );
    }

    let mut extra = Map::new();
    extra.insert("momentum_ratio".into(), json!(comparison.momentum_ratio));
    extra.insert(
        "coupled_peak_momentum".into(),
        json!(comparison.coupled_peak_momentum),
    );
    extra.insert(
        "free_peak_momentum".into(),
        json!(comparison.free_peak_momentum),
    );
    extra.insert("measure_from".into(), json!(comparison.measure_from));
    extra.insert("warnings".into(), json!(comparison.warnings));
    if let Ok(dm) = spectral.renormalized_mass(params, &QuadratureConfig::default()) {
        extra.insert("mass_shift".into(), json!(dm));
        extra.insert(
            "predicted_ratio".into(),
            json!(params.mass / (params.mass + dm)),
        );
    }
    Ok((
        vec![OutputFile {
            name: "counterpunch.csv",
            contents: csv,
        }],
        extra,
    ))
}

fn run_eq10(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    let params = &config.params;
    let a = config
        .demo
        .and_then(|d| d.separation)
        .unwrap_or_else(|| (20.0 * params.hbar / (params.mass * params.omega)).sqrt());
    let c = config
        .demo
        .and_then(|d| d.cross_coupling)
        .unwrap_or(params.mass * params.omega / params.hbar);
    let report = eq10_demo(params, a, c)?;

    let mut files = vec![OutputFile {
        name: "eq10_report.json",
        contents: serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Config(format!("report serialization: {e}")))?
            + "\n",
    }];
    if let Some(grid_spec) = &config.grid {
        // Single-oscillator marginal of the mixture: two lumps, no fringes
        // — the global coherence is invisible here.
        let components = f1_mixture(params, a, F1Form::Symmetrized)?
            .into_iter()
            .map(|(weight, two_mode)| {
                Ok(WeightedGaussian {
                    weight,
                    state: two_mode.reduce_to_mode(0)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        files.push(OutputFile {
            name: "wigner_marginal.csv",
            contents: emit_grid(&StateSpec::Mixture { components }, grid_spec)?,
        });
    }

    let mut extra = Map::new();
    extra.insert(
        "report".into(),
        serde_json::to_value(&report).map_err(|e| Error::Config(e.to_string()))?,
    );
    Ok((files, extra))
}

fn execute(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    match config.scenario {
        Scenario::Kernel => run_kernel(config),
        Scenario::Simulate => run_simulate(config),
        Scenario::Extract => run_extract(config),
        Scenario::Locality => run_locality(config),
        Scenario::Decohere => run_decohere(config),
        Scenario::Counterpunch => run_counterpunch(config),
        Scenario::Eq10 => run_eq10(config),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

/// Completed run: where the files went and the manifest that was written.
#[derive(Debug)]
pub struct RunOutcome {
    pub directory: PathBuf,
    pub files: Vec<PathBuf>,
    pub manifest: Value,
}

fn resolve_output_dir(cli_out: Option<&Path>, config: &ScenarioConfig) -> PathBuf {
    if let Some(dir) = cli_out {
        return dir.to_path_buf();
    }
    if let Some(dir) = &config.output_dir {
        return dir.clone();
    }
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from(".")
}

/// Load, validate, execute, and write out one scenario run.
///
/// All computation happens before any file is created: a failing run
/// leaves the output directory untouched.
pub fn run(
    config_path: &Path,
    out_dir: Option<&Path>,
    seed: Option<u64>,
    threads: Option<usize>,
) -> Result<RunOutcome> {
    let raw = std::fs::read(config_path)?;
    let mut config: ScenarioConfig = serde_json::from_slice(&raw)
        .map_err(|e| Error::Config(format!("{}: {e}", config_path.display())))?;
    if let Some(seed) = seed {
        config.numerics.seed = seed;
    }
    config.validate()?;
    if let Some(threads) = threads {
        if threads == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }

    let started = Instant::now();
    let (files, results) = execute(&config)?;
    let wall_clock = started.elapsed().as_secs_f64();

    let directory = resolve_output_dir(out_dir, &config);
    std::fs::create_dir_all(&directory)?;
    let mut written = Vec::with_capacity(files.len() + 1);
    for file in &files {
        let path = directory.join(file.name);
        std::fs::write(&path, &file.contents)?;
        written.push(path);
    }

    let manifest = json!({
        "schema": "qbm.manifest v1",
        "scenario": config.scenario.name(),
        "config_sha256": sha256_hex(&raw),
        "config": serde_json::to_value(&config)
            .map_err(|e| Error::Config(e.to_string()))?,
        "seed": config.numerics.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_clock_seconds": wall_clock,
        "outputs": files.iter().map(|f| f.name).collect::<Vec<_>>(),
        "results": Value::Object(results),
    });
    let manifest_path = directory.join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))? + "\n",
    )?;
    written.push(manifest_path);

    Ok(RunOutcome {
        directory,
        files: written,
        manifest,
    })
}

/// Exit code contract: 2 for configuration/validation problems, 3 for
/// numerical failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Quadrature(_)
        | Error::Eigen(_)
        | Error::Singular(_)
        | Error::DivergentIntegral(_)
        | Error::Numerical(_) => 3,
        _ => 2,
    }
}

#[derive(Parser)]
#[command(
    name = "qbm",
    version,
    about = "Open-system oscillator scenario runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario described by a JSON configuration file.
    Run {
        /// Path to the scenario configuration.
        config: PathBuf,
        /// Output directory (default: config's `output_dir`, then
        /// `$QBM_OUT_DIR`, then the working directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the configured random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Size of the worker thread pool.
        #[arg(long)]
        threads: Option<usize>,
    },
}

/// Binary entry point; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => match run(&config, out.as_deref(), seed, threads) {
            Ok(outcome) => {
                println!("{}", outcome.directory.join("manifest.json").display());
                0
            }
            Err(err) => {
                let code = exit_code(&err);
                let diagnostic = json!({
                    "error": err.to_string(),
                    "kind": if code == 3 { "numerical" } else { "validation" },
                    "exit_code": code,
                });
                eprintln!("{diagnostic}");
                code
            }
        },
    }
}
