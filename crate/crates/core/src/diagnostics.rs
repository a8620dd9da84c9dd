//! Functionals, inequalities, envelopes and exponents computed on fields and
//! trajectories.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ensure_positive, slope_curvature, ModelParams};
use crate::spectral::{derivative, fourier_coefficient, integrate, PeriodicField, Spectrum};

/// Diagnostics of one recorded field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    #[serde(rename = "e")]
    pub modified_energy: f64,
    #[serde(rename = "J")]
    pub dissipation: f64,
    #[serde(rename = "D_accum")]
    pub d_accum: f64,
    pub h_m1: Complex64,
    pub h_1: Complex64,
    pub phi_h1_norm: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl DiagnosticsRecord {
    /// `h_m1` is stored as the conjugate of `h_1`, exact for real fields.
    pub fn from_field(
        t: f64,
        h: &PeriodicField,
        params: ModelParams,
        d_accum: f64,
    ) -> Result<Self> {
        let h_1 = fourier_coefficient(h, 1)?;
        Ok(Self {
            t,
            mass: mass(h),
            energy: energy(h),
            modified_energy: modified_energy(h),
            dissipation: dissipation(h, params)?,
            d_accum,
            h_m1: h_1.conj(),
            h_1,
            phi_h1_norm: h1_norm(&phi_remainder(h)),
            h_min: h.min(),
            h_max: h.max(),
        })
    }
}

/// Coefficients of the modes ±1 at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSample {
    pub t: f64,
    pub h_m1: Complex64,
    pub h_1: Complex64,
}

impl ModeSample {
    pub fn from_field(t: f64, h: &PeriodicField) -> Result<Self> {
        Ok(Self {
            t,
            h_m1: fourier_coefficient(h, -1)?,
            h_1: fourier_coefficient(h, 1)?,
        })
    }
}

/// Stored field at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub h: PeriodicField,
}

pub fn mass(h: &PeriodicField) -> f64 {
    integrate(h)
}

fn energy_of_spectrum(s: &Spectrum) -> f64 {
    0.5 * s.weighted_norm_sq(|n| {
        let n = n as f64;
        if n == 0.0 {
            0.0
        } else {
            n * n - 1.0
        }
    })
}

/// `E[h] = π h̄² + ½∫(h'² − h²)`, evaluated as `π Σ_{n≠0} (n²−1)|h_n|²`.
pub fn energy(h: &PeriodicField) -> f64 {
    energy_of_spectrum(&h.spectrum())
}

/// `e[h] = ½∫(h'² − h²)` by quadrature.
pub fn modified_energy(h: &PeriodicField) -> f64 {
    let d = derivative(h, 1).expect("first derivative is always available");
    let integrand = d.zip_with(h, |dv, hv| dv * dv - hv * hv);
    0.5 * integrate(&integrand)
}

/// `J[h] = ∫ h^{α+2} (w² + σ²)^{(α−1)/2} w²` with `w = h' + h'''`.
pub fn dissipation(h: &PeriodicField, params: ModelParams) -> Result<f64> {
    ensure_positive(h)?;
    let w = slope_curvature(h);
    let half = 0.5 * (params.alpha - 1.0);
    let sigma2 = params.sigma * params.sigma;
    let integrand = h.zip_with(&w, |hv, wv| {
        let w2 = wv * wv;
        hv.powf(params.alpha + 2.0) * (w2 + sigma2).powf(half) * w2
    });
    Ok(integrate(&integrand))
}

/// `|E(t) + D(t) − E(0)|` along the records.
pub fn energy_identity_residual(records: &[DiagnosticsRecord]) -> Vec<f64> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    records
        .iter()
        .map(|r| (r.energy + r.d_accum - first.energy - first.d_accum).abs())
        .collect()
}

/// `h` with the Fourier modes 0 and ±1 removed.
pub fn phi_remainder(h: &PeriodicField) -> PeriodicField {
    let mut s = h.spectrum();
    for (n, c) in s.modes_mut() {
        if n.abs() <= 1 {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    s.to_field()
}

/// `sqrt(2π Σ (n²+1)|f_n|²)`.
pub fn h1_norm(f: &PeriodicField) -> f64 {
    f.spectrum()
        .weighted_norm_sq(|n| (n * n) as f64 + 1.0)
        .sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiInequality {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `‖φ‖²_{H¹} ≤ 4E[h]`.
pub fn check_e_phi_inequality(h: &PeriodicField) -> PhiInequality {
    let lhs = h1_norm(&phi_remainder(h)).powi(2);
    let rhs = 4.0 * energy(h);
    PhiInequality {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-10,
    }
}

/// `Λ_ε(t) = ε / (1 + C ε^{α−1} t)^{1/(α−1)}`.
pub fn lambda_envelope(t: f64, epsilon: f64, c: f64, alpha: f64) -> f64 {
    epsilon / (1.0 + c * epsilon.powf(alpha - 1.0) * t).powf(1.0 / (alpha - 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub window: (f64, f64),
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares fit of `log y = slope · log t + intercept` over samples with
/// `t` in the closed window.
pub fn fit_decay_exponent(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::Fit(format!("invalid window [{lo}, {hi}]")));
    }
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t >= lo && *t <= hi)
        .copied()
        .collect();
    if pts.len() < 10 {
        return Err(Error::Fit(format!(
            "{} samples in [{lo}, {hi}], need at least 10",
            pts.len()
        )));
    }
    if let Some((t, y)) = pts.iter().find(|(_, y)| !(*y > 0.0) || !y.is_finite()) {
        return Err(Error::Fit(format!("non-positive value {y} at t = {t}")));
    }
    let xs: Vec<f64> = pts.iter().map(|(t, _)| t.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, y)| y.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all samples share one time".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy <= f64::EPSILON * f64::EPSILON * n * (1.0 + my * my) {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(DecayFit {
        window,
        slope,
        intercept,
        r_squared,
        points: pts.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaTable {
    pub alpha: f64,
    /// `β_0 ..= β_{n_max}`.
    pub betas: Vec<f64>,
    /// First index with `β_n = 2α/(α+1)`.
    pub steps_to_fixed_point: usize,
    pub fixed_point: f64,
    /// Iteration without the cap, `β_0 ..= β_{n_max}`.
    pub linear_betas: Vec<f64>,
    /// `β_n = α(α²+1)/(α+1) · (1 − (α/(α+1))ⁿ)` for the same indices.
    pub linear_closed_form: Vec<f64>,
    pub linear_limit: f64,
}

pub fn beta_iteration(alpha: f64, n_max: usize) -> Result<BetaTable> {
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::Config(format!("alpha must exceed 1, got {alpha}")));
    }
    let q = alpha / (alpha + 1.0);
    let fixed_point = 2.0 * alpha / (alpha + 1.0);
    let offset = alpha * (alpha * alpha + 1.0) / (alpha + 1.0).powi(2);
    let linear_limit = alpha * (alpha * alpha + 1.0) / (alpha + 1.0);
    let capped = |b: f64| fixed_point.min(offset + b * q);

    let mut betas = vec![0.0];
    let mut linear_betas = vec![0.0];
    for _ in 0..n_max {
        betas.push(capped(*betas.last().unwrap()));
        linear_betas.push(offset + linear_betas.last().unwrap() * q);
    }
    let linear_closed_form = (0..=n_max)
        .map(|n| linear_limit * (1.0 - q.powi(n as i32)))
        .collect();

    // The uncapped sequence tends to a limit above the cap, so this ends.
    let mut steps_to_fixed_point = 0;
    let mut b = 0.0;
    while b != fixed_point {
        b = capped(b);
        steps_to_fixed_point += 1;
    }
    Ok(BetaTable {
        alpha,
        betas,
        steps_to_fixed_point,
        fixed_point,
        linear_betas,
        linear_closed_form,
        linear_limit,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetWindow {
    pub t_lo: f64,
    pub t_hi: f64,
    pub variation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicBudget {
    pub windows: Vec<BudgetWindow>,
    pub total: f64,
    /// `total / (ε (1 + ln ε^{1−α}))`.
    pub ratio: f64,
}

/// Total variation of `h_1` on `[lo, hi]`, with increments straddling a
/// window edge split by linear interpolation.
fn variation_on(track: &[ModeSample], lo: f64, hi: f64) -> f64 {
    track
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].t, w[1].t);
            let overlap = (b.min(hi) - a.max(lo)).max(0.0);
            if b > a && overlap > 0.0 {
                (w[1].h_1 - w[0].h_1).norm() * overlap / (b - a)
            } else {
                0.0
            }
        })
        .sum()
}

/// Variation of the mode `h_1` over dyadic windows around `ε^{1−α}`.
///
/// Below `τ = ε^{1−α}` the windows are `[τ 2^{−(n+1)}, τ 2^{−n})`, the last
/// one reaching down to the first sample. Above it they are
/// `[τ 2ⁿ, τ 2^{n+1})`, the last one ending at the final sample.
pub fn dyadic_fourier_budget(
    track: &[ModeSample],
    epsilon: f64,
    alpha: f64,
) -> Result<DyadicBudget> {
    if !(epsilon > 0.0 && alpha > 1.0) {
        return Err(Error::Config("need epsilon > 0 and alpha > 1".into()));
    }
    let (Some(first), Some(last)) = (track.first(), track.last()) else {
        return Err(Error::Coverage("empty mode track".into()));
    };
    let tau = epsilon.powf(1.0 - alpha);
    if last.t < tau {
        return Err(Error::Coverage(format!(
            "trajectory ends at t = {} before ε^(1−α) = {tau}",
            last.t
        )));
    }
    let second = track
        .iter()
        .map(|s| s.t)
        .find(|&t| t > first.t)
        .unwrap_or(last.t);
    let mut windows = Vec::new();
    let mut hi = tau;
    loop {
        let lo = 0.5 * hi;
        if lo <= second {
            windows.push((first.t, hi));
            break;
        }
        windows.push((lo, hi));
        hi = lo;
    }
    windows.reverse();
    let mut lo = tau;
    while lo < last.t {
        let hi = (2.0 * lo).min(last.t);
        windows.push((lo, hi));
        lo = hi;
    }
    let windows: Vec<BudgetWindow> = windows
        .into_iter()
        .map(|(t_lo, t_hi)| BudgetWindow {
            t_lo,
            t_hi,
            variation: variation_on(track, t_lo, t_hi),
        })
        .collect();
    let total = windows.iter().map(|w| w.variation).sum();
    let ratio = total / (epsilon * (1.0 + tau.ln()));
    Ok(DyadicBudget {
        windows,
        total,
        ratio,
    })
}

/// `∫_{t̄/2}^{t̄} ∫ |∂_θ³φ|^p dθ dt` from stored snapshots, trapezoidal in time
/// with linear interpolation at the window edges.
pub fn third_derivative_budget(snapshots: &[Snapshot], t_bar: f64, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !(t_bar > 0.0) {
        return Err(Error::Usage(format!(
            "need p >= 1 and t_bar > 0, got p = {p}, t_bar = {t_bar}"
        )));
    }
    let (lo, hi) = (0.5 * t_bar, t_bar);
    let slack = 1e-9 * t_bar;
    let covered = snapshots.first().is_some_and(|s| s.t <= lo + slack)
        && snapshots.last().is_some_and(|s| s.t >= hi - slack);
    if !covered {
        return Err(Error::Coverage(format!(
            "no stored fields covering [{lo}, {hi}]"
        )));
    }
    let samples: Vec<(f64, f64)> = snapshots
        .iter()
        .enumerate()
        .filter(|(i, s)| {
            let prev_in = *i > 0 && snapshots[i - 1].t < hi;
            let next_in = snapshots.get(i + 1).is_some_and(|n| n.t > lo);
            (s.t >= lo && s.t <= hi) || (s.t < lo && next_in) || (s.t > hi && prev_in)
        })
        .map(|(_, s)| {
            let d3 = derivative(&phi_remainder(&s.h), 3)?;
            Ok((s.t, integrate(&d3.map(|v| v.abs().powf(p)))))
        })
        .collect::<Result<_>>()?;
    Ok(samples
        .windows(2)
        .map(|w| {
            let ((ta, ga), (tb, gb)) = (w[0], w[1]);
            let a = ta.max(lo);
            let b = tb.min(hi);
            if b <= a || tb <= ta {
                return 0.0;
            }
            let at = |t: f64| ga + (gb - ga) * (t - ta) / (tb - ta);
            0.5 * (at(a) + at(b)) * (b - a)
        })
        .sum())
}

/// First recorded time with `h_min < h̄/2` or `h_max > 2h̄`; `None` if the
/// band holds throughout.
pub fn positivity_window(records: &[DiagnosticsRecord], h_bar: f64) -> Option<f64> {
    records
        .iter()
        .find(|r| r.h_min < 0.5 * h_bar || r.h_max > 2.0 * h_bar)
        .map(|r| r.t)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiEstimate {
    pub xi_m1: Complex64,
    pub xi_1: Complex64,
    /// Variation of `h_1` over the tail window.
    pub uncertainty: f64,
    pub window: (f64, f64),
}

/// Average of `h_{±1}` over `[T/2, T]` with the tail variation as error bar.
pub fn xi_limit(track: &[ModeSample]) -> Result<XiEstimate> {
    let Some(last) = track.last() else {
        return Err(Error::Coverage("empty mode track".into()));
    };
    let lo = 0.5 * last.t;
    let tail: Vec<&ModeSample> = track.iter().filter(|s| s.t >= lo).collect();
    let n = tail.len() as f64;
    let xi_m1 = tail.iter().map(|s| s.h_m1).sum::<Complex64>() / n;
    let xi_1 = tail.iter().map(|s| s.h_1).sum::<Complex64>() / n;
    Ok(XiEstimate {
        xi_m1,
        xi_1,
        uncertainty: variation_on(track, lo, last.t),
        window: (lo, last.t),
    })
}

/// Largest `C` with `E(t) ≤ Λ_ε(t)²` at every sample with `t > 0`, or
/// `None` when some sample already exceeds `ε²`.
pub fn envelope_constant(series: &[(f64, f64)], epsilon: f64, alpha: f64) -> Option<f64> {
    let mut c = f64::INFINITY;
    for &(t, e) in series {
        let cap = epsilon * epsilon;
        if e > cap * (1.0 + 1e-12) {
            return None;
        }
        if t > 0.0 && e > 0.0 {
            let bound =
                ((cap / e).powf(0.5 * (alpha - 1.0)) - 1.0) / (epsilon.powf(alpha - 1.0) * t);
            c = c.min(bound);
        }
    }
    Some(c.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{steady_state, SteadyStateParams};
    use crate::spectral::make_grid;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn simpson(f: impl Fn(f64) -> f64, m: usize) -> f64 {
        let h = 2.0 * PI / m as f64;
        let mut s = f(0.0) + f(2.0 * PI);
        for j in 1..m {
            s += if j % 2 == 1 { 4.0 } else { 2.0 } * f(j as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn mass_examples() {
        let g = make_grid(64).unwrap();
        assert!(close(mass(&g.constant(1.0)), 2.0 * PI, 1e-13));
        assert!(close(
            mass(&g.sample(|x| 1.0 + 0.3 * x.cos())),
            2.0 * PI,
            1e-13
        ));
        let s = steady_state(SteadyStateParams::new(1.0, 0.2, 0.1).unwrap(), &g).unwrap();
        let oracle = simpson(|x| 1.0 + 0.2 * x.cos() + 0.1 * x.sin(), 2000);
        assert!(close(mass(&s), oracle, 1e-12));
    }

    #[test]
    fn energy_examples() {
        let g = make_grid(64).unwrap();
        let s = steady_state(SteadyStateParams::new(1.7, 0.2, -0.3).unwrap(), &g).unwrap();
        assert!(energy(&s).abs() < 1e-13);
        let c2 = g.sample(|x| (2.0 * x).cos());
        let oracle = 0.5
            * simpson(
                |x| 4.0 * (2.0 * x).sin().powi(2) - (2.0 * x).cos().powi(2),
                4000,
            );
        assert!(close(oracle, 1.5 * PI, 1e-10));
        assert!(close(energy(&c2), 1.5 * PI, 1e-12));
        assert!(close(
            energy(&g.sample(|x| 1.0 + (2.0 * x).cos())),
            1.5 * PI,
            1e-12
        ));
        assert!(close(modified_energy(&c2), 1.5 * PI, 1e-12));
        assert!(close(modified_energy(&g.constant(1.3)), -PI * 1.69, 1e-12));
    }

    #[test]
    fn dissipation_examples() {
        let g = make_grid(512).unwrap();
        let p0 = ModelParams::new(2.0, 0.0).unwrap();
        let s = steady_state(SteadyStateParams::new(1.0, 0.2, 0.1).unwrap(), &g).unwrap();
        assert!(dissipation(&s, ModelParams::new(2.0, 0.3).unwrap()).unwrap() < 1e-20);
        assert_eq!(dissipation(&g.constant(2.0), p0).unwrap(), 0.0);
        let h = g.sample(|x| 1.0 + 0.1 * (2.0 * x).cos());
        // w = -0.2 sin2θ + 0.8 sin2θ = 0.6 sin2θ
        let oracle = simpson(
            |x| {
                let hv = 1.0 + 0.1 * (2.0 * x).cos();
                let w = 0.6 * (2.0 * x).sin();
                hv.powi(4) * w.abs() * w * w
            },
            20_000,
        );
        let j = dissipation(&h, p0).unwrap();
        assert!(j > 0.0);
        assert!(close(j, oracle, 1e-8), "{j} vs {oracle}");
        assert!(dissipation(&g.sample(|x| x.cos()), p0).is_err());
    }

    #[test]
    fn e_and_energy_relation() {
        let g = make_grid(64).unwrap();
        let h = g.sample(|x| 1.2 + 0.1 * x.cos() + 0.05 * (3.0 * x).sin() - 0.02 * (5.0 * x).cos());
        let mean = mass(&h) / (2.0 * PI);
        assert!(close(
            energy(&h),
            modified_energy(&h) + PI * mean * mean,
            1e-10
        ));
    }

    #[test]
    fn phi_and_norm_examples() {
        let g = make_grid(64).unwrap();
        let s = steady_state(SteadyStateParams::new(1.0, 0.2, 0.1).unwrap(), &g).unwrap();
        assert!(phi_remainder(&s).max_abs() < 1e-15);
        let h = g.sample(|x| 1.0 + x.cos() + 0.1 * (3.0 * x).cos());
        let phi = phi_remainder(&h);
        let expected = g.sample(|x| 0.1 * (3.0 * x).cos());
        assert!(phi.zip_with(&expected, |a, b| a - b).max_abs() < 1e-15);
        for n in 2..20 {
            let a = fourier_coefficient(&phi, n).unwrap();
            let b = fourier_coefficient(&h, n).unwrap();
            assert!((a - b).norm() < 1e-16);
        }
        assert_eq!(h1_norm(&g.zeros()), 0.0);
        let oracle = simpson(|x| x.cos().powi(2) + x.sin().powi(2), 1000).sqrt();
        assert!(close(h1_norm(&g.sample(f64::cos)), oracle, 1e-12));
        assert!(close(
            h1_norm(&g.sample(f64::cos)),
            (2.0 * PI).sqrt(),
            1e-13
        ));
        assert!(close(
            h1_norm(&g.constant(-0.7)),
            (2.0 * PI).sqrt() * 0.7,
            1e-13
        ));
    }

    #[test]
    fn phi_inequality_examples() {
        let g = make_grid(64).unwrap();
        let s = steady_state(SteadyStateParams::new(1.0, 0.2, 0.1).unwrap(), &g).unwrap();
        let r = check_e_phi_inequality(&s);
        assert!(r.holds && r.lhs < 1e-28 && r.rhs.abs() < 1e-12);
        let r = check_e_phi_inequality(&g.sample(|x| (2.0 * x).cos()));
        assert!(close(r.lhs, 5.0 * PI, 1e-12) && close(r.rhs, 6.0 * PI, 1e-12) && r.holds);
    }

    #[test]
    fn phi_inequality_random_fields() {
        let g = make_grid(64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let mut s = Spectrum::zeros(&g);
            for n in 0..=20i64 {
                let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let c = if n == 0 { Complex64::new(c.re, 0.0) } else { c };
                s.set_coefficient(n, c).unwrap();
                if n > 0 {
                    s.set_coefficient(-n, c.conj()).unwrap();
                }
            }
            let r = check_e_phi_inequality(&s.to_field());
            assert!(r.holds, "{r:?}");
        }
    }

    #[test]
    fn envelope_examples() {
        assert_eq!(lambda_envelope(0.0, 0.05, 3.0, 2.5), 0.05);
        assert!(close(lambda_envelope(1.0, 1.0, 1.0, 2.0), 0.5, 1e-15));
        for alpha in [1.5, 2.0, 3.0] {
            let eps = 0.05;
            let cbar = (0..=80)
                .map(|k| 10f64.powf(-2.0 + k as f64 * 0.1))
                .map(|t| t * lambda_envelope(t, eps, 1.0, alpha).powf(alpha - 1.0))
                .fold(0.0, f64::max);
            assert!(cbar <= 1.0 + 1e-12);
            let a = lambda_envelope(10.0, eps, 1.0, alpha);
            let b = lambda_envelope(11.0, eps, 1.0, alpha);
            assert!(b < a);
        }
    }

    #[test]
    fn fit_examples() {
        let pts: Vec<(f64, f64)> = (0..50)
            .map(|k| 10f64.powf(k as f64 / 10.0))
            .map(|t| (t, t.powi(-2)))
            .collect();
        let f = fit_decay_exponent(&pts, (1.0, 1e5)).unwrap();
        assert!(close(f.slope, -2.0, 1e-6) && close(f.r_squared, 1.0, 1e-12));

        let pts: Vec<(f64, f64)> = (0..=200)
            .map(|k| 10f64.powf(3.0 + 2.0 * k as f64 / 200.0))
            .map(|t| (t, lambda_envelope(t, 0.05, 1.0, 2.0).powi(2)))
            .collect();
        let f = fit_decay_exponent(&pts, (1e3, 1e5)).unwrap();
        assert!((f.slope + 2.0).abs() < 0.1, "slope {}", f.slope);

        let pts: Vec<(f64, f64)> = (1..=20).map(|k| (k as f64, 3.0)).collect();
        let f = fit_decay_exponent(&pts, (1.0, 20.0)).unwrap();
        assert!(f.slope.abs() < 1e-14 && (0.0..=1.0).contains(&f.r_squared));

        assert!(matches!(
            fit_decay_exponent(&pts[..5], (1.0, 20.0)),
            Err(Error::Fit(_))
        ));
        let mut bad = pts.clone();
        bad[3].1 = 0.0;
        assert!(matches!(
            fit_decay_exponent(&bad, (1.0, 20.0)),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn beta_examples() {
        let t = beta_iteration(2.0, 10).unwrap();
        assert!(close(t.betas[1], 10.0 / 9.0, 1e-15));
        assert_eq!(t.betas[2], 4.0 / 3.0);
        assert_eq!(t.steps_to_fixed_point, 2);
        assert!(t.betas[2..].iter().all(|&b| b == 4.0 / 3.0));
        assert!(close(t.linear_limit, 10.0 / 3.0, 1e-15));
        let long = beta_iteration(2.0, 200).unwrap();
        assert!(close(*long.linear_betas.last().unwrap(), 10.0 / 3.0, 1e-12));
        assert!(beta_iteration(1.0, 3).is_err());
    }

    proptest! {
        #[test]
        fn beta_properties(alpha in 1.01f64..20.0) {
            let t = beta_iteration(alpha, 50).unwrap();
            prop_assert_eq!(t.betas[0], 0.0);
            prop_assert!(t.betas.windows(2).all(|w| w[1] >= w[0]));
            prop_assert!(t.steps_to_fixed_point < 200);
            let k = t.steps_to_fixed_point.min(50);
            prop_assert!(t.betas[k..].iter().all(|&b| b == t.fixed_point));
            for (a, b) in t.linear_betas.iter().zip(&t.linear_closed_form) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn energy_forms_agree(c in proptest::collection::vec(-0.5f64..0.5, 12), mean in 0.5f64..3.0) {
            let g = make_grid(64).unwrap();
            let h = g.sample(|x| {
                mean + c.iter().enumerate().map(|(k, a)| {
                    let n = (k / 2 + 1) as f64;
                    if k % 2 == 0 { a * (n * x).cos() } else { a * (n * x).sin() }
                }).sum::<f64>()
            });
            let e = energy(&h);
            prop_assert!(e >= -1e-12);
            let m = mass(&h) / (2.0 * PI);
            prop_assert!((e - modified_energy(&h) - PI * m * m).abs() < 1e-10);
        }
    }

    fn track(f: impl Fn(f64) -> f64, ts: &[f64]) -> Vec<ModeSample> {
        ts.iter()
            .map(|&t| ModeSample {
                t,
                h_m1: Complex64::new(f(t), 0.0),
                h_1: Complex64::new(f(t), 0.0),
            })
            .collect()
    }

    #[test]
    fn dyadic_budget_examples() {
        let ts: Vec<f64> = (0..=20_000).map(|k| k as f64 * 0.05).collect();
        let flat = dyadic_fourier_budget(&track(|_| 0.1, &ts), 0.05, 2.0).unwrap();
        assert!(flat.windows.iter().all(|w| w.variation == 0.0) && flat.total == 0.0);

        let eps = 0.05;
        let t_end = *ts.last().unwrap();
        let b = dyadic_fourier_budget(&track(|t| eps / (1.0 + t), &ts), eps, 2.0).unwrap();
        let exact = eps * t_end / (1.0 + t_end);
        assert!(close(b.total, exact, 1e-12), "{} vs {exact}", b.total);
        assert!(close(b.ratio, exact / (eps * (1.0 + 20f64.ln())), 1e-12));
        // windows tile [0, T]
        assert_eq!(b.windows.first().unwrap().t_lo, 0.0);
        assert_eq!(b.windows.last().unwrap().t_hi, t_end);
        assert!(b.windows.windows(2).all(|w| w[0].t_hi == w[1].t_lo));
        assert!(b.windows.iter().any(|w| w.t_lo == 20.0));
        assert!(b.windows.iter().any(|w| w.t_lo == 10.0 && w.t_hi == 20.0));

        let short: Vec<f64> = (0..100).map(|k| k as f64 * 0.1).collect();
        assert!(matches!(
            dyadic_fourier_budget(&track(|_| 0.0, &short), 0.05, 2.0),
            Err(Error::Coverage(_))
        ));
    }

    #[test]
    fn third_derivative_budget_examples() {
        let g = make_grid(64).unwrap();
        let a = |t: f64| 0.1 / (1.0 + t);
        let snaps: Vec<Snapshot> = (0..=400)
            .map(|k| 4.0 + k as f64 * 0.01)
            .map(|t| Snapshot {
                t,
                h: g.sample(|x| 1.0 + 0.2 * x.cos() + a(t) * (2.0 * x).cos()),
            })
            .collect();
        for p in [2.0, 3.0] {
            let spatial = simpson(|x| (8.0 * (2.0 * x).sin()).abs().powf(p), 20_000);
            let temporal =
                simpson(|s| a(4.0 + 4.0 * s / (2.0 * PI)).powf(p), 4000) * 4.0 / (2.0 * PI);
            let oracle = spatial * temporal;
            let got = third_derivative_budget(&snaps, 8.0, p).unwrap();
            assert!(
                (got - oracle).abs() / oracle < 1e-4,
                "p={p}: {got} vs {oracle}"
            );
        }
        let steady: Vec<Snapshot> = snaps
            .iter()
            .map(|s| Snapshot {
                t: s.t,
                h: g.sample(|x| 1.0 + 0.2 * x.cos()),
            })
            .collect();
        assert!(third_derivative_budget(&steady, 8.0, 2.0).unwrap() < 1e-20);
        assert!(matches!(
            third_derivative_budget(&snaps, 20.0, 2.0),
            Err(Error::Coverage(_))
        ));
    }

    fn record(t: f64, h_min: f64, h_max: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            mass: 2.0 * PI,
            energy: 0.0,
            modified_energy: -PI,
            dissipation: 0.0,
            d_accum: 0.0,
            h_m1: Complex64::new(0.0, 0.0),
            h_1: Complex64::new(0.0, 0.0),
            phi_h1_norm: 0.0,
            h_min,
            h_max,
        }
    }

    #[test]
    fn positivity_window_examples() {
        let ok: Vec<_> = (0..10).map(|k| record(k as f64, 0.7, 1.3)).collect();
        assert_eq!(positivity_window(&ok, 1.0), None);
        let dip: Vec<_> = (0..10)
            .map(|k| record(k as f64, if k >= 7 { 0.45 } else { 0.8 }, 1.2))
            .collect();
        assert_eq!(positivity_window(&dip, 1.0), Some(7.0));
    }

    #[test]
    fn residual_and_xi_examples() {
        assert_eq!(
            energy_identity_residual(&[record(0.0, 1.0, 1.0)]),
            vec![0.0]
        );
        let ts: Vec<f64> = (0..100).map(f64::from).collect();
        let flat = xi_limit(&track(|_| 0.3, &ts)).unwrap();
        assert!((flat.xi_1 - 0.3).norm() < 1e-15 && (flat.xi_m1 - 0.3).norm() < 1e-15);
        assert_eq!(flat.uncertainty, 0.0);
    }

    #[test]
    fn envelope_constant_examples() {
        let (eps, alpha, c) = (0.05, 2.0, 3.0);
        let series: Vec<(f64, f64)> = (0..100)
            .map(|k| k as f64)
            .map(|t| (t, lambda_envelope(t, eps, c, alpha).powi(2)))
            .collect();
        assert!(close(
            envelope_constant(&series, eps, alpha).unwrap(),
            c,
            1e-9
        ));
        assert_eq!(envelope_constant(&[(0.0, 1.0)], eps, alpha), None);
    }
}
