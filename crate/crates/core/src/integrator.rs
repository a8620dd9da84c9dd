//! Adaptive stabilised IMEX time stepping.
//!
//! Each step freezes a scalar coefficient `A` and treats the linear operator
//! `-A ∂_θ²(∂_θ² + 1)` implicitly while the full nonlinear right-hand side,
//! corrected by the same linear term, is explicit:
//!
//! ```text
//! (1 + dt A λ_n) ĥ_n^{k+1} = ĥ_n^k + dt [ r̂_n(h^k) + A λ_n ĥ_n^k ],   λ_n = n²(n² - 1).
//! ```
//!
//! The implicit solve is diagonal in Fourier space. `λ_0 = λ_{±1} = 0`, so
//! the mean and the steady-state modes are only moved by the (mean-free)
//! explicit part. Local error is estimated by step doubling.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::energy;
use crate::error::{Error, Result};
use crate::model::{ensure_positive, rhs_spectrum, slope_curvature, ModelParams};
use crate::spectral::PeriodicField;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepController {
    pub rel_tol: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub safety: f64,
    pub energy_guard_tol: f64,
}

impl Default for StepController {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            dt_min: 1e-12,
            dt_max: 1.0,
            safety: 0.8,
            energy_guard_tol: 1e-8,
        }
    }
}

impl StepController {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(Error::Config(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if !(self.dt_min > 0.0 && self.dt_min < self.dt_max) || !self.dt_max.is_finite() {
            return Err(Error::Config(format!(
                "need 0 < dt_min < dt_max, got dt_min = {}, dt_max = {}",
                self.dt_min, self.dt_max
            )));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return Err(Error::Config(format!(
                "safety must lie in (0, 1), got {}",
                self.safety
            )));
        }
        if !(self.energy_guard_tol >= 0.0) {
            return Err(Error::Config(
                "energy_guard_tol must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn clamp(&self, dt: f64) -> f64 {
        dt.clamp(self.dt_min, self.dt_max)
    }
}

/// Live simulation state.
#[derive(Clone, Debug)]
pub struct SimState {
    pub t: f64,
    pub h: PeriodicField,
    /// Step size the controller will try next.
    pub dt: f64,
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    /// `E[h₀]`, the scale for the energy guard.
    pub energy_ref: f64,
    /// `E[h]` of the current field.
    pub energy: f64,
    /// Largest `ΔE / E[h₀]` over accepted steps (negative while E decreases).
    pub max_energy_rise: f64,
    /// Accepted steps whose energy rise exceeded `energy_guard_tol · E[h₀]`.
    pub guard_exceedances: u64,
}

impl SimState {
    pub fn new(h: PeriodicField, dt: f64) -> Result<Self> {
        ensure_positive(&h)?;
        if !(dt > 0.0) {
            return Err(Error::Config(format!(
                "initial dt must be positive, got {dt}"
            )));
        }
        let e = energy(&h);
        Ok(Self {
            t: 0.0,
            h,
            dt,
            accepted_steps: 0,
            rejected_steps: 0,
            energy_ref: e,
            energy: e,
            max_energy_rise: f64::NEG_INFINITY,
            guard_exceedances: 0,
        })
    }
}

/// `max_θ h^{α+2} (|∂_θh + ∂_θ³h|² + σ²)^{(α-1)/2}`, the largest
/// mobility-times-viscosity coefficient of the current field.
pub fn linear_stabilizer(h: &PeriodicField, params: ModelParams) -> Result<f64> {
    ensure_positive(h)?;
    let w = slope_curvature(h);
    let half = 0.5 * (params.alpha - 1.0);
    let sigma2 = params.sigma * params.sigma;
    Ok(h.values()
        .iter()
        .zip(w.values())
        .map(|(&hv, &wv)| hv.powf(params.alpha + 2.0) * (wv * wv + sigma2).powf(half))
        .fold(0.0, f64::max))
}

/// Implicit coefficient actually used by the scheme. The linearised
/// coefficient of the flux is at most `α` times [`linear_stabilizer`]; the
/// stabilised scheme is linearly stable when the implicit coefficient is at
/// least half of it.
fn implicit_coefficient(h: &PeriodicField, params: ModelParams) -> Result<f64> {
    Ok(linear_stabilizer(h, params)? * (0.5 * params.alpha).max(1.0))
}

fn imex_update(h: &PeriodicField, params: ModelParams, dt: f64) -> Result<PeriodicField> {
    let a = implicit_coefficient(h, params)?;
    let r = rhs_spectrum(h, params)?;
    let mut s = h.spectrum();
    for ((n, c), (_, rc)) in s.modes_mut().zip(r.modes()) {
        let nf = n as f64;
        let lambda = nf * nf * (nf * nf - 1.0);
        let denom = 1.0 + dt * a * lambda;
        *c = (*c * (1.0 + dt * a * lambda) + rc * dt) / denom;
        if !(c.re.is_finite() && c.im.is_finite()) {
            *c = Complex64::new(f64::NAN, f64::NAN);
        }
    }
    Ok(s.to_field())
}

enum Rejection {
    Error(f64),
    Energy,
    Positivity,
}

struct Trial {
    h: PeriodicField,
    err: f64,
    energy: f64,
}

fn attempt(
    state: &SimState,
    params: ModelParams,
    ctrl: &StepController,
    dt: f64,
) -> std::result::Result<Trial, Rejection> {
    let degenerate = |e: Error| match e {
        Error::Degenerate { .. } => Rejection::Positivity,
        _ => Rejection::Error(f64::INFINITY),
    };
    let full = imex_update(&state.h, params, dt).map_err(degenerate)?;
    let mid = imex_update(&state.h, params, 0.5 * dt).map_err(degenerate)?;
    let fine = imex_update(&mid, params, 0.5 * dt).map_err(degenerate)?;
    if fine.values().iter().any(|v| !v.is_finite()) || full.values().iter().any(|v| !v.is_finite())
    {
        return Err(Rejection::Error(f64::INFINITY));
    }
    let scale = fine.max_abs().max(f64::MIN_POSITIVE);
    let diff = full
        .values()
        .iter()
        .zip(fine.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let err = diff / scale;
    if err > ctrl.rel_tol {
        return Err(Rejection::Error(err));
    }
    if !(fine.min() > 0.0) {
        return Err(Rejection::Positivity);
    }
    let e_new = energy(&fine);
    if e_new - state.energy > energy_allowance(state, ctrl) {
        return Err(Rejection::Energy);
    }
    Ok(Trial {
        h: fine,
        err,
        energy: e_new,
    })
}

/// Admissible energy rise per step. The absolute floor only matters when
/// `E[h₀]` itself sits at round-off level (steady states).
fn energy_allowance(state: &SimState, ctrl: &StepController) -> f64 {
    let mean = state.h.values().iter().sum::<f64>() / state.h.values().len() as f64;
    let floor = 1e3 * f64::EPSILON * f64::EPSILON * (1.0 + mean * mean);
    (ctrl.energy_guard_tol * state.energy_ref).max(floor)
}

/// One accepted step, trying `state.dt` first.
pub fn step(state: &SimState, params: ModelParams, ctrl: &StepController) -> Result<SimState> {
    step_until(state, params, ctrl, f64::INFINITY)
}

/// One accepted step that does not pass `t_target`; lands exactly on it
/// when the proposed step would overshoot.
pub fn step_until(
    state: &SimState,
    params: ModelParams,
    ctrl: &StepController,
    t_target: f64,
) -> Result<SimState> {
    ensure_positive(&state.h)?;
    let mut rejected = 0;
    let mut dt = state.dt;
    loop {
        let remaining = t_target - state.t;
        let landing = dt >= remaining;
        let dt_try = if landing { remaining } else { dt };
        match attempt(state, params, ctrl, dt_try) {
            Ok(trial) => {
                let factor = if trial.err > 0.0 {
                    (ctrl.safety * (ctrl.rel_tol / trial.err).sqrt()).clamp(0.2, 5.0)
                } else {
                    5.0
                };
                let mut next = dt_try * factor;
                if landing && factor >= 1.0 {
                    next = next.max(dt);
                }
                let rise = trial.energy - state.energy;
                let rel_rise = if state.energy_ref > 0.0 {
                    rise / state.energy_ref
                } else {
                    0.0
                };
                let exceeded = rise > ctrl.energy_guard_tol * state.energy_ref;
                return Ok(SimState {
                    t: if landing { t_target } else { state.t + dt_try },
                    h: trial.h,
                    dt: ctrl.clamp(next),
                    accepted_steps: state.accepted_steps + 1,
                    rejected_steps: state.rejected_steps + rejected,
                    energy_ref: state.energy_ref,
                    energy: trial.energy,
                    max_energy_rise: state.max_energy_rise.max(rel_rise),
                    guard_exceedances: state.guard_exceedances + u64::from(exceeded),
                });
            }
            Err(reason) => {
                rejected += 1;
                if dt_try <= ctrl.dt_min {
                    return Err(match reason {
                        Rejection::Positivity => Error::Touchdown { t: state.t },
                        _ => Error::Stiffness {
                            t: state.t,
                            dt_min: ctrl.dt_min,
                        },
                    });
                }
                let shrink = match reason {
                    Rejection::Error(err) if err.is_finite() => {
                        (ctrl.safety * (ctrl.rel_tol / err).sqrt()).clamp(0.2, 0.5)
                    }
                    _ => 0.5,
                };
                dt = (dt_try * shrink).max(ctrl.dt_min);
            }
        }
    }
}

/// Receives the state after every accepted step and at output times.
pub trait Observer {
    fn on_step(&mut self, _state: &SimState) {}
    fn on_output(&mut self, state: &SimState);
}

impl<F: FnMut(&SimState)> Observer for F {
    fn on_output(&mut self, state: &SimState) {
        self(state)
    }
}

/// Steps until `t_end`, landing exactly on every time in `outputs` that lies
/// in `(state.t, t_end]` and invoking `observer.on_output` there.
///
/// On failure the observer keeps everything recorded up to the last
/// accepted step.
pub fn advance<O: Observer + ?Sized>(
    state: SimState,
    t_end: f64,
    params: ModelParams,
    ctrl: &StepController,
    outputs: &[f64],
    observer: &mut O,
) -> Result<SimState> {
    if t_end < state.t {
        return Err(Error::Usage(format!(
            "t_end = {t_end} lies before the current time {}",
            state.t
        )));
    }
    let t0 = state.t;
    let mut pending = outputs
        .iter()
        .copied()
        .filter(|&t| t > t0 && t <= t_end)
        .peekable();
    let mut state = state;
    while state.t < t_end {
        let target = pending.peek().copied().unwrap_or(t_end).min(t_end);
        state = step_until(&state, params, ctrl, target)?;
        observer.on_step(&state);
        if pending.peek() == Some(&state.t) {
            pending.next();
            observer.on_output(&state);
        }
    }
    Ok(state)
}

/// `n` evenly spaced output times `t_start + k·interval` up to `t_end`.
pub fn uniform_outputs(t_start: f64, t_end: f64, interval: f64) -> Vec<f64> {
    if !(interval > 0.0) {
        return vec![t_end];
    }
    let count = ((t_end - t_start) / interval).floor() as u64;
    let mut out: Vec<f64> = (1..=count).map(|k| t_start + k as f64 * interval).collect();
    if out.last().is_none_or(|&t| t < t_end) {
        out.push(t_end);
    }
    out
}
