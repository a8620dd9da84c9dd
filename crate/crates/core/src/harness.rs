//! Scenario configuration, initial data, run orchestration and sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::diagnostics::{
    beta_iteration, check_e_phi_inequality, dissipation, dyadic_fourier_budget, envelope_constant,
    fit_decay_exponent, h1_norm, lambda_envelope, positivity_window, third_derivative_budget,
    xi_limit, BetaTable, DecayFit, DiagnosticsRecord, DyadicBudget, ModeSample, Snapshot,
    XiEstimate,
};
use crate::error::{Error, Result};
use crate::integrator::{advance, uniform_outputs, Observer, SimState, StepController};
use crate::model::{steady_state, ModelParams, SteadyStateParams};
use crate::spectral::{make_grid, Grid, PeriodicField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Cos,
    Sin,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub n: u32,
    pub phase: Phase,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSpec {
    /// Sum of modes, rescaled to the target H¹ distance.
    Modes(Vec<ModeSpec>),
    /// An exact steady state, used without rescaling.
    Steady(SteadyStateParams),
    /// Random coefficients on modes `2..=n+1` (and ±1 when included),
    /// rescaled to the target H¹ distance.
    Random { n_modes: u32 },
    /// Whitespace-separated nodal values, used without rescaling.
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotPolicy {
    None,
    Dyadic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_points: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub h_bar: f64,
    pub t_end: f64,
    pub output_interval: f64,
    pub controller: StepController,
    pub initial: InitialSpec,
    pub include_pm1: bool,
    pub seed: u64,
    pub snapshots: SnapshotPolicy,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_points: 256,
            alpha: 2.0,
            sigma: 1e-3,
            epsilon: 0.05,
            h_bar: 1.0,
            t_end: 1000.0,
            output_interval: 1.0,
            controller: StepController::default(),
            initial: InitialSpec::Modes(vec![ModeSpec {
                n: 2,
                phase: Phase::Cos,
                amplitude: 1.0,
            }]),
            include_pm1: false,
            seed: 0,
            snapshots: SnapshotPolicy::None,
        }
    }
}

impl ScenarioConfig {
    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.alpha, self.sigma)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        make_grid(self.n_points)?;
        self.controller.validate()?;
        let positive = [
            ("epsilon", self.epsilon),
            ("h_bar", self.h_bar),
            ("t_end", self.t_end),
            ("output_interval", self.output_interval),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        match &self.initial {
            InitialSpec::Modes(modes) => {
                if modes.is_empty() {
                    return Err(Error::Config("init.modes lists no modes".into()));
                }
                for m in modes {
                    if m.n == 0 {
                        return Err(Error::Config("mode 0 would change the mean height".into()));
                    }
                    if m.n == 1 && !self.include_pm1 {
                        return Err(Error::Config(
                            "mode 1 is excluded unless init.include_pm1 = true".into(),
                        ));
                    }
                    if !m.amplitude.is_finite() {
                        return Err(Error::Config(format!(
                            "amplitude of mode {} is not finite",
                            m.n
                        )));
                    }
                }
            }
            InitialSpec::Steady(p) => p.validate()?,
            InitialSpec::Random { n_modes } => {
                if *n_modes == 0 {
                    return Err(Error::Config("init.random needs at least one mode".into()));
                }
            }
            InitialSpec::File(_) => {}
        }
        Ok(())
    }
}

fn perturbation(cfg: &ScenarioConfig, grid: &Grid) -> Result<Option<PeriodicField>> {
    let modes: Vec<ModeSpec> = match &cfg.initial {
        InitialSpec::Modes(m) => m.clone(),
        InitialSpec::Random { n_modes } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let first = if cfg.include_pm1 { 1 } else { 2 };
            (first..=n_modes + 1)
                .flat_map(|n| [Phase::Cos, Phase::Sin].map(|phase| (n, phase)))
                .map(|(n, phase)| ModeSpec {
                    n,
                    phase,
                    amplitude: rng.gen_range(-1.0..1.0),
                })
                .collect()
        }
        _ => return Ok(None),
    };
    for m in &modes {
        if i64::from(m.n) > grid.dealias_cutoff() {
            return Err(Error::Resolution {
                n: i64::from(m.n),
                n_points: grid.n_points(),
            });
        }
    }
    Ok(Some(grid.sample(|x| {
        modes
            .iter()
            .map(|m| {
                let arg = f64::from(m.n) * x;
                m.amplitude
                    * match m.phase {
                        Phase::Cos => arg.cos(),
                        Phase::Sin => arg.sin(),
                    }
            })
            .sum()
    })))
}

/// Initial film height for the scenario.
pub fn build_initial_data(cfg: &ScenarioConfig) -> Result<PeriodicField> {
    cfg.validate()?;
    let grid = make_grid(cfg.n_points)?;
    let h0 = match perturbation(cfg, &grid)? {
        Some(p) => {
            let norm = h1_norm(&p);
            if !(norm > 0.0) {
                return Err(Error::Config("perturbation vanishes on the grid".into()));
            }
            let scale = cfg.epsilon / norm;
            p.map(|v| cfg.h_bar + scale * v)
        }
        None => match &cfg.initial {
            InitialSpec::Steady(p) => steady_state(*p, &grid)?,
            InitialSpec::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                let values = text
                    .split_whitespace()
                    .map(|tok| {
                        tok.parse::<f64>().map_err(|_| {
                            Error::Config(format!("{}: bad value {tok:?}", path.display()))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                PeriodicField::new(&grid, values).map_err(|e| Error::Config(e.to_string()))?
            }
            _ => unreachable!("mode-based specs handled above"),
        },
    };
    if !(h0.min() > 0.0) {
        return Err(Error::Config(format!(
            "initial height is not positive (min {:e})",
            h0.min()
        )));
    }
    Ok(h0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Touchdown { t: f64 },
    Stiffness { t: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    /// Accepted steps with `ΔE > energy_guard_tol · E(0)`.
    pub guard_exceedances: u64,
    /// Largest `ΔE / E(0)` over accepted steps.
    pub max_energy_rise: Option<f64>,
    /// Largest relative change of the zeroth Fourier coefficient.
    pub max_mass_drift: f64,
    /// Largest `|E + D − E(0)|`, divided by `E(0)` when it is positive.
    pub max_identity_residual: f64,
    pub phi_inequality_violations: u64,
    /// Mean height of the initial datum.
    pub h_bar: f64,
    /// First record outside `[h̄/2, 2h̄]`.
    pub positivity_violation: Option<f64>,
    /// `max E / J^{2/(α+1)}` over records inside the positivity band.
    pub energy_dissipation_ratio_max: Option<f64>,
    pub non_finite_records: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fits {
    pub energy: Option<DecayFit>,
    pub phi_h1: Option<DecayFit>,
    /// `-2/(α-1)` and `-1/(α-1)`.
    pub expected_energy_slope: f64,
    pub expected_phi_slope: f64,
    pub notes: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    /// Largest `C` with `E ≤ Λ_ε²` at every record.
    pub c: f64,
    /// Same, restricted to the records up to `ε^{1-α}`.
    pub c_early: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThirdDerivativeEntry {
    pub t_bar: f64,
    pub p: f64,
    pub value: f64,
    pub lambda: Option<f64>,
    /// `value / Λ_ε(t̄)` for `p = α`.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    pub fourier: Option<DyadicBudget>,
    pub third_derivative: Vec<ThirdDerivativeEntry>,
    pub notes: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiReport {
    pub estimate: XiEstimate,
    /// `ε (1 + ln ε^{1-α})`.
    pub scale: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub config: ScenarioConfig,
    pub status: RunStatus,
    pub summary: RunSummary,
    pub fits: Fits,
    pub envelope: Option<EnvelopeFit>,
    pub beta_table: BetaTable,
    pub budgets: Budgets,
    pub xi: Option<XiReport>,
    pub records: Vec<DiagnosticsRecord>,
    /// `h_{±1}` after every accepted step.
    pub mode_track: Vec<ModeSample>,
    #[serde(skip)]
    pub snapshots: Vec<Snapshot>,
}

/// Snapshot times: 16 equal steps across each `[2^{k-1}, 2^k]`, `k ≥ -4`.
pub fn dyadic_snapshot_times(t_end: f64) -> Vec<f64> {
    let k_max = t_end.log2().ceil() as i32;
    let mut out = Vec::new();
    for k in -4..=k_max {
        let hi = 2f64.powi(k);
        let lo = 0.5 * hi;
        for j in 0..=16 {
            let t = lo + (hi - lo) * f64::from(j) / 16.0;
            if t <= t_end && out.last() != Some(&t) {
                out.push(t);
            }
        }
    }
    out
}

/// Uniform outputs plus 20 logarithmically spaced times per decade from
/// `10⁻²`.
fn output_times(cfg: &ScenarioConfig, snapshots: &[f64]) -> Vec<f64> {
    let mut times = uniform_outputs(0.0, cfg.t_end, cfg.output_interval);
    let mut k = 0;
    loop {
        let t = 10f64.powf(-2.0 + f64::from(k) / 20.0);
        if t >= cfg.t_end {
            break;
        }
        times.push(t);
        k += 1;
    }
    times.extend_from_slice(snapshots);
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

struct Recorder<'a> {
    params: ModelParams,
    snapshot_times: &'a [f64],
    records: Vec<DiagnosticsRecord>,
    track: Vec<ModeSample>,
    snapshots: Vec<Snapshot>,
    d_accum: f64,
    last_j: (f64, f64),
    e0: f64,
    mass0: f64,
    max_mass_drift: f64,
    max_residual: f64,
    phi_violations: u64,
    last: Option<SimState>,
    failure: Option<Error>,
}

impl Recorder<'_> {
    fn record(&mut self, state: &SimState) {
        match DiagnosticsRecord::from_field(state.t, &state.h, self.params, self.d_accum) {
            Ok(r) => self.records.push(r),
            Err(e) => {
                self.failure.get_or_insert(e);
            }
        }
        if !check_e_phi_inequality(&state.h).holds {
            self.phi_violations += 1;
        }
        if self
            .snapshot_times
            .binary_search_by(|t| t.total_cmp(&state.t))
            .is_ok()
        {
            self.snapshots.push(Snapshot {
                t: state.t,
                h: state.h.clone(),
            });
        }
    }
}

impl Observer for Recorder<'_> {
    fn on_step(&mut self, state: &SimState) {
        let s = state.h.spectrum();
        let j = dissipation(&state.h, self.params).unwrap_or(f64::NAN);
        let (t0, j0) = self.last_j;
        self.d_accum += 0.5 * (j + j0) * (state.t - t0);
        self.last_j = (state.t, j);
        let c0 = s.coefficient(0).map_or(f64::NAN, |c| c.re);
        self.max_mass_drift = self
            .max_mass_drift
            .max(((c0 - self.mass0) / self.mass0).abs());
        self.max_residual = self
            .max_residual
            .max((state.energy + self.d_accum - self.e0).abs());
        if let (Ok(h_m1), Ok(h_1)) = (s.coefficient(-1), s.coefficient(1)) {
            self.track.push(ModeSample {
                t: state.t,
                h_m1,
                h_1,
            });
        }
        self.last = Some(state.clone());
    }

    fn on_output(&mut self, state: &SimState) {
        self.record(state);
    }
}

/// Runs one scenario. Configuration problems are errors; touchdown and
/// stiffness end the run early and are reported in the status.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<TrajectoryReport> {
    let params = cfg.params()?;
    let h0 = build_initial_data(cfg)?;
    let ctrl = cfg.controller;
    let dt0 = 1e-4f64.clamp(ctrl.dt_min, ctrl.dt_max);
    let state = SimState::new(h0.clone(), dt0)?;
    let snapshot_times = match cfg.snapshots {
        SnapshotPolicy::None => Vec::new(),
        SnapshotPolicy::Dyadic => dyadic_snapshot_times(cfg.t_end),
    };
    let outputs = output_times(cfg, &snapshot_times);
    let s0 = h0.spectrum();
    let mut rec = Recorder {
        params,
        snapshot_times: &snapshot_times,
        records: Vec::new(),
        track: vec![ModeSample {
            t: 0.0,
            h_m1: s0.coefficient(-1)?,
            h_1: s0.coefficient(1)?,
        }],
        snapshots: Vec::new(),
        d_accum: 0.0,
        last_j: (0.0, dissipation(&h0, params)?),
        e0: state.energy,
        mass0: s0.coefficient(0)?.re,
        max_mass_drift: 0.0,
        max_residual: 0.0,
        phi_violations: 0,
        last: None,
        failure: None,
    };
    rec.record(&state);
    let outcome = advance(state.clone(), cfg.t_end, params, &ctrl, &outputs, &mut rec);
    let (status, last) = match outcome {
        Ok(s) => (RunStatus::Completed, s),
        Err(Error::Touchdown { t }) => (
            RunStatus::Touchdown { t },
            rec.last.clone().unwrap_or(state),
        ),
        Err(Error::Stiffness { t, .. }) => (
            RunStatus::Stiffness { t },
            rec.last.clone().unwrap_or(state),
        ),
        Err(e) => return Err(e),
    };
    if status != RunStatus::Completed && rec.records.last().map(|r| r.t) != Some(last.t) {
        rec.record(&last);
    }
    if let Some(e) = rec.failure.take() {
        return Err(e);
    }
    let h_bar = rec.mass0;
    let e0 = rec.e0;
    let summary = RunSummary {
        accepted_steps: last.accepted_steps,
        rejected_steps: last.rejected_steps,
        guard_exceedances: last.guard_exceedances,
        max_energy_rise: last
            .max_energy_rise
            .is_finite()
            .then_some(last.max_energy_rise),
        max_mass_drift: rec.max_mass_drift,
        max_identity_residual: if e0 > 0.0 {
            rec.max_residual / e0
        } else {
            rec.max_residual
        },
        phi_inequality_violations: rec.phi_violations,
        h_bar,
        positivity_violation: positivity_window(&rec.records, h_bar),
        energy_dissipation_ratio_max: energy_dissipation_ratio(&rec.records, cfg.alpha, h_bar),
        non_finite_records: rec
            .records
            .iter()
            .filter(|r| {
                ![
                    r.t,
                    r.mass,
                    r.energy,
                    r.modified_energy,
                    r.dissipation,
                    r.d_accum,
                    r.h_min,
                    r.h_max,
                ]
                .iter()
                .all(|v| v.is_finite())
            })
            .count() as u64,
    };
    let fits = decay_fits(cfg, &rec.records);
    let envelope = fit_envelope(cfg, &rec.records);
    let budgets = budgets(cfg, &rec.track, &rec.snapshots, envelope);
    let xi = xi_report(cfg, &rec.track);
    Ok(TrajectoryReport {
        config: cfg.clone(),
        status,
        summary,
        fits,
        envelope,
        beta_table: beta_iteration(cfg.alpha, 10)?,
        budgets,
        xi,
        records: rec.records,
        mode_track: rec.track,
        snapshots: rec.snapshots,
    })
}

fn energy_dissipation_ratio(records: &[DiagnosticsRecord], alpha: f64, h_bar: f64) -> Option<f64> {
    records
        .iter()
        .take_while(|r| r.h_min >= 0.5 * h_bar && r.h_max <= 2.0 * h_bar)
        .filter(|r| r.dissipation > 0.0 && r.energy > 0.0)
        .map(|r| r.energy / r.dissipation.powf(2.0 / (alpha + 1.0)))
        .reduce(f64::max)
}

/// Fit window `[T/100, T]`.
pub fn fit_window(t_end: f64) -> (f64, f64) {
    (t_end / 100.0, t_end)
}

fn has_signal(cfg: &ScenarioConfig, records: &[DiagnosticsRecord]) -> bool {
    let floor = 1e-24 * (1.0 + cfg.h_bar * cfg.h_bar);
    records.iter().any(|r| r.energy.abs() > floor)
}

fn decay_fits(cfg: &ScenarioConfig, records: &[DiagnosticsRecord]) -> Fits {
    let window = fit_window(cfg.t_end);
    let mut notes = Vec::new();
    if !has_signal(cfg, records) {
        return Fits {
            energy: None,
            phi_h1: None,
            expected_energy_slope: -2.0 / (cfg.alpha - 1.0),
            expected_phi_slope: -1.0 / (cfg.alpha - 1.0),
            notes: vec!["no decaying signal: E vanishes on every record".into()],
        };
    }
    let mut fit = |name: &str, series: Vec<(f64, f64)>| match fit_decay_exponent(&series, window) {
        Ok(f) => Some(f),
        Err(e) => {
            notes.push(format!("{name}: {e}"));
            None
        }
    };
    let energy = fit("E", records.iter().map(|r| (r.t, r.energy)).collect());
    let phi_h1 = fit(
        "phi_h1",
        records.iter().map(|r| (r.t, r.phi_h1_norm)).collect(),
    );
    Fits {
        energy,
        phi_h1,
        expected_energy_slope: -2.0 / (cfg.alpha - 1.0),
        expected_phi_slope: -1.0 / (cfg.alpha - 1.0),
        notes,
    }
}

fn fit_envelope(cfg: &ScenarioConfig, records: &[DiagnosticsRecord]) -> Option<EnvelopeFit> {
    if !has_signal(cfg, records) {
        return None;
    }
    let series: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.energy)).collect();
    let c = envelope_constant(&series, cfg.epsilon, cfg.alpha)?;
    let tau = cfg.epsilon.powf(1.0 - cfg.alpha);
    let early: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t <= tau).collect();
    let c_early = envelope_constant(&early, cfg.epsilon, cfg.alpha)?;
    (c.is_finite() && c > 0.0).then_some(EnvelopeFit {
        c,
        c_early: if c_early.is_finite() { c_early } else { c },
    })
}

fn budgets(
    cfg: &ScenarioConfig,
    track: &[ModeSample],
    snapshots: &[Snapshot],
    envelope: Option<EnvelopeFit>,
) -> Budgets {
    let mut notes = Vec::new();
    let fourier = match dyadic_fourier_budget(track, cfg.epsilon, cfg.alpha) {
        Ok(b) => Some(b),
        Err(e) => {
            notes.push(format!("fourier budget: {e}"));
            None
        }
    };
    let mut third_derivative = Vec::new();
    if snapshots.is_empty() {
        notes.push("third-derivative budget: no stored fields".into());
    } else {
        let mut t_bar = 10.0;
        while t_bar <= cfg.t_end {
            for p in [cfg.alpha, cfg.alpha + 1.0] {
                match third_derivative_budget(snapshots, t_bar, p) {
                    Ok(value) => {
                        let lambda = envelope
                            .map(|env| lambda_envelope(t_bar, cfg.epsilon, env.c, cfg.alpha));
                        let ratio = lambda.filter(|_| p == cfg.alpha).map(|l| value / l);
                        third_derivative.push(ThirdDerivativeEntry {
                            t_bar,
                            p,
                            value,
                            lambda,
                            ratio,
                        });
                    }
                    Err(e) => notes.push(format!("third-derivative budget at t = {t_bar}: {e}")),
                }
            }
            t_bar *= 10.0;
        }
    }
    Budgets {
        fourier,
        third_derivative,
        notes,
    }
}

fn xi_report(cfg: &ScenarioConfig, track: &[ModeSample]) -> Option<XiReport> {
    let estimate = xi_limit(track).ok()?;
    let scale = log_scale(cfg.epsilon, cfg.alpha);
    Some(XiReport {
        estimate,
        scale,
        ratio: estimate.xi_1.norm() / scale,
    })
}

/// Number of worker threads for sweeps: `THINFILM_THREADS` if set, else
/// the available parallelism.
pub fn sweep_threads() -> usize {
    std::env::var("THINFILM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs the scenarios concurrently; each result is independent of the
/// others and of the thread count.
pub fn sweep(configs: &[ScenarioConfig]) -> Vec<Result<TrajectoryReport>> {
    if configs.is_empty() {
        return Vec::new();
    }
    match rayon::ThreadPoolBuilder::new()
        .num_threads(sweep_threads())
        .build()
    {
        Ok(pool) => pool.install(|| configs.par_iter().map(run_scenario).collect()),
        Err(_) => configs.iter().map(run_scenario).collect(),
    }
}

/// `ε (1 + ln ε^{1-α})`.
pub fn log_scale(epsilon: f64, alpha: f64) -> f64 {
    epsilon * (1.0 + epsilon.powf(1.0 - alpha).ln())
}
