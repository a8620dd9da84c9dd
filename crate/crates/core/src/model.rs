//! Right-hand side of the (regularised) thin-film equation, the
//! nonlinearity kernels, and the steady-state circles.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{dealias, Grid, PeriodicField, Spectrum};

/// Flow-behaviour exponent `alpha > 1` and regularisation `sigma ∈ [0, 1)`.
/// `sigma = 0` integrates the unregularised equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub sigma: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, sigma: f64) -> Result<Self> {
        let p = Self { alpha, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!(
                "alpha must be > 1, got {}",
                self.alpha
            )));
        }
        if !(0.0..1.0).contains(&self.sigma) {
            return Err(Error::Config(format!(
                "sigma must lie in [0, 1), got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// `h̄₀ + κ₋₁ cos θ + κ₁ sin θ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateParams {
    pub h_bar: f64,
    pub kappa_m1: f64,
    pub kappa_1: f64,
}

impl SteadyStateParams {
    pub fn new(h_bar: f64, kappa_m1: f64, kappa_1: f64) -> Result<Self> {
        let p = Self {
            h_bar,
            kappa_m1,
            kappa_1,
        };
        p.validate()?;
        Ok(p)
    }

    /// Minimum of the steady state over the circle.
    pub fn min_height(&self) -> f64 {
        self.h_bar - self.kappa_m1.hypot(self.kappa_1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_bar > 0.0) {
            return Err(Error::Config(format!(
                "h_bar must be positive, got {}",
                self.h_bar
            )));
        }
        if !(self.min_height() > 0.0) {
            return Err(Error::Config(format!(
                "steady state touches zero: h_bar - |kappa| = {}",
                self.min_height()
            )));
        }
        Ok(())
    }
}

/// `ψ(s) = |s|^{α-1} s`.
pub fn psi(s: f64, alpha: f64) -> f64 {
    s.abs().powf(alpha - 1.0) * s
}

/// `ψ_σ(s) = (s² + σ²)^{(α-1)/2} s`.
pub fn psi_sigma(s: f64, params: ModelParams) -> f64 {
    (s * s + params.sigma * params.sigma).powf(0.5 * (params.alpha - 1.0)) * s
}

/// Spectral symbol of `∂_θ + ∂_θ³`, i.e. `i n (1 - n²)`. Vanishes on the
/// Nyquist mode.
pub(crate) fn w_symbol(n: i64, n_points: usize) -> Complex64 {
    if n == n_points as i64 / 2 {
        return Complex64::new(0.0, 0.0);
    }
    let nf = n as f64;
    Complex64::new(0.0, nf * (1.0 - nf * nf))
}

/// `w = ∂_θh + ∂_θ³h`, applied as one multiplier to avoid cancellation
/// between the two derivatives.
pub fn slope_curvature(h: &PeriodicField) -> PeriodicField {
    let n_points = h.grid().n_points();
    let mut s = h.spectrum().roundoff_filtered();
    s.apply(|n| w_symbol(n, n_points));
    s.to_field()
}

pub(crate) fn ensure_positive(h: &PeriodicField) -> Result<()> {
    let (j, min) = h.argmin();
    if !(min > 0.0) {
        return Err(Error::Degenerate {
            min,
            theta: h.grid().node(j),
        });
    }
    Ok(())
}

/// Pointwise flux `h^{α+2} ψ_σ(∂_θh + ∂_θ³h)`.
pub fn flux(h: &PeriodicField, params: ModelParams) -> Result<PeriodicField> {
    ensure_positive(h)?;
    let w = slope_curvature(h);
    Ok(h.zip_with(&w, |hv, wv| {
        hv.powf(params.alpha + 2.0) * psi_sigma(wv, params)
    }))
}

/// Spectrum of `-∂_θ(flux)`, with the flux dealiased before differentiation.
/// The `n = 0` coefficient is exactly zero.
pub fn rhs_spectrum(h: &PeriodicField, params: ModelParams) -> Result<Spectrum> {
    let f = flux(h, params)?;
    let mut s = dealias(&f.spectrum());
    s.apply(|n| Complex64::new(0.0, -(n as f64)));
    Ok(s)
}

/// `∂_t h = -∂_θ(h^{α+2} ψ_σ(∂_θh + ∂_θ³h))`.
pub fn rhs(h: &PeriodicField, params: ModelParams) -> Result<PeriodicField> {
    Ok(rhs_spectrum(h, params)?.to_field())
}

/// Samples `h̄₀ + κ₋₁ cos θ + κ₁ sin θ`.
pub fn steady_state(p: SteadyStateParams, grid: &Grid) -> Result<PeriodicField> {
    p.validate()?;
    Ok(grid.sample(|x| p.h_bar + p.kappa_m1 * x.cos() + p.kappa_1 * x.sin()))
}

/// Recovers the real amplitudes `(κ₋₁, κ₁)` of `κ₋₁ cos θ + κ₁ sin θ` from
/// the complex modes `h₋₁`, `h₁` of a real field.
pub fn kappa_from_modes(h_m1: Complex64, h_1: Complex64) -> Result<(f64, f64)> {
    let tol = 1e-10 * h_1.norm().max(h_m1.norm()).max(1.0);
    if (h_m1 - h_1.conj()).norm() > tol {
        return Err(Error::Data(format!(
            "modes are not a conjugate pair: h_-1 = {h_m1}, h_1 = {h_1}"
        )));
    }
    let kappa_m1 = (h_m1 + h_1).re;
    let kappa_1 = (Complex64::i() * (h_1 - h_m1)).re;
    Ok((kappa_m1, kappa_1))
}

/// Polar parametrisation `h̃_ε` of the circle with radius `1 + εh̄₀` centred
/// at `(εκ₋₁, 0)`. Requires `κ₁ = 0`, `0 < ε < 1/2` and `κ₋₁ < h̄₀`.
pub fn circle_embed(epsilon: f64, p: SteadyStateParams, grid: &Grid) -> Result<PeriodicField> {
    p.validate()?;
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::Config(format!(
            "epsilon must lie in (0, 1/2), got {epsilon}"
        )));
    }
    if p.kappa_1 != 0.0 {
        return Err(Error::Config("circle_embed expects kappa_1 = 0".into()));
    }
    if !(p.kappa_m1 < p.h_bar) {
        return Err(Error::Config(
            "circle_embed expects kappa_m1 < h_bar".into(),
        ));
    }
    let ek = epsilon * p.kappa_m1;
    let r = 1.0 + epsilon * p.h_bar;
    Ok(grid.sample(|x| {
        let c = x.cos();
        ek * c + (ek * ek * c * c + r * r - ek * ek).sqrt()
    }))
}
