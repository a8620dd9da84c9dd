//! Uniform periodic grid on `[0, 2π)` with FFT-based differentiation,
//! quadrature and dealiasing.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Smallest admissible number of collocation nodes.
pub const MIN_POINTS: usize = 16;

/// Uniform grid `θ_j = 2πj/N` with cached forward and inverse FFT plans.
///
/// Cloning is cheap; the plans are shared.
#[derive(Clone)]
pub struct Grid {
    n_points: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n_points", &self.n_points)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n_points == other.n_points
    }
}

/// Builds a grid with `n_points` nodes. `n_points` must be even and at
/// least [`MIN_POINTS`].
pub fn make_grid(n_points: usize) -> Result<Grid> {
    Grid::new(n_points)
}

impl Grid {
    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < MIN_POINTS || !n_points.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "n_points must be even and >= {MIN_POINTS}, got {n_points}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n_points,
            forward: planner.plan_fft_forward(n_points),
            inverse: planner.plan_fft_inverse(n_points),
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n_points as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        self.spacing() * j as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.node(j)).collect()
    }

    /// Signed wavenumber stored at FFT slot `k`. The Nyquist slot maps to `+N/2`.
    pub fn wavenumber(&self, k: usize) -> i64 {
        let n = self.n_points as i64;
        let k = k as i64;
        if k <= n / 2 {
            k
        } else {
            k - n
        }
    }

    fn slot(&self, n: i64) -> usize {
        n.rem_euclid(self.n_points as i64) as usize
    }

    /// Largest wavenumber kept by the 2/3 rule.
    pub fn dealias_cutoff(&self) -> i64 {
        self.n_points as i64 / 3
    }

    /// Samples `f` at the grid nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> PeriodicField {
        let values = (0..self.n_points).map(|j| f(self.node(j))).collect();
        PeriodicField {
            grid: self.clone(),
            values,
        }
    }

    pub fn constant(&self, c: f64) -> PeriodicField {
        self.sample(|_| c)
    }

    pub fn zeros(&self) -> PeriodicField {
        self.constant(0.0)
    }

    pub(crate) fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
        let scale = 1.0 / self.n_points as f64;
        for c in buf.iter_mut() {
            *c *= scale;
        }
    }

    pub(crate) fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
    }
}

/// Real samples of a 2π-periodic function on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicField {
    grid: Grid,
    values: Vec<f64>,
}

impl PeriodicField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::Data(format!(
                "expected {} samples, got {}",
                grid.n_points(),
                values.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite sample at node {j}")));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index and value of the smallest sample.
    pub fn argmin(&self) -> (usize, f64) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (j, v)| if v < acc.1 { (j, v) } else { acc },
            )
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> PeriodicField {
        PeriodicField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination with another field on the same grid.
    pub fn zip_with(&self, other: &PeriodicField, f: impl Fn(f64, f64) -> f64) -> PeriodicField {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        PeriodicField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn spectrum(&self) -> Spectrum {
        let mut buf: Vec<Complex64> = self
            .values
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        self.grid.forward_in_place(&mut buf);
        Spectrum {
            grid: self.grid.clone(),
            coeffs: buf,
        }
    }
}

/// Fourier coefficients `f_n`, `n = -N/2+1 ..= N/2`, normalised so that
/// `f(θ) = Σ f_n e^{inθ}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    grid: Grid,
    // FFT ordering: slot k holds wavenumber grid.wavenumber(k).
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            coeffs: vec![Complex64::new(0.0, 0.0); grid.n_points()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn check_range(&self, n: i64) -> Result<()> {
        let half = self.grid.n_points() as i64 / 2;
        if n <= -half || n > half {
            return Err(Error::Resolution {
                n,
                n_points: self.grid.n_points(),
            });
        }
        Ok(())
    }

    pub fn coefficient(&self, n: i64) -> Result<Complex64> {
        self.check_range(n)?;
        Ok(self.coeffs[self.grid.slot(n)])
    }

    pub fn set_coefficient(&mut self, n: i64, value: Complex64) -> Result<()> {
        self.check_range(n)?;
        let slot = self.grid.slot(n);
        self.coeffs[slot] = value;
        Ok(())
    }

    /// `(n, f_n)` pairs in FFT storage order.
    pub fn modes(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(k, &c)| (self.grid.wavenumber(k), c))
    }

    pub fn modes_mut(&mut self) -> impl Iterator<Item = (i64, &mut Complex64)> + '_ {
        let grid = &self.grid;
        self.coeffs
            .iter_mut()
            .enumerate()
            .map(move |(k, c)| (grid.wavenumber(k), c))
    }

    /// Multiplies every coefficient by `symbol(n)`.
    pub fn apply(&mut self, symbol: impl Fn(i64) -> Complex64) {
        for (n, c) in self.modes_mut() {
            *c *= symbol(n);
        }
    }

    /// Sum `2π Σ weight(n) |f_n|²` over all resolved modes.
    pub fn weighted_norm_sq(&self, weight: impl Fn(i64) -> f64) -> f64 {
        2.0 * PI
            * self
                .modes()
                .map(|(n, c)| weight(n) * c.norm_sqr())
                .sum::<f64>()
    }

    /// Zeroes coefficients below the FFT round-off plateau,
    /// `|f_n| < N·ε·max_m |f_m|`. Differentiation amplifies that plateau by
    /// up to `(N/2)^k`, so derivatives are taken from the filtered spectrum.
    pub fn roundoff_filtered(&self) -> Spectrum {
        let peak = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        let floor = self.grid.n_points() as f64 * f64::EPSILON * peak;
        let mut out = self.clone();
        for c in out.coeffs.iter_mut() {
            if c.norm() < floor {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        out
    }

    /// Synthesises the real field. Imaginary parts left by non-Hermitian
    /// input are discarded.
    pub fn to_field(&self) -> PeriodicField {
        let mut buf = self.coeffs.clone();
        self.grid.inverse_in_place(&mut buf);
        PeriodicField {
            grid: self.grid.clone(),
            values: buf.into_iter().map(|c| c.re).collect(),
        }
    }
}

/// Symbol `(in)^k` of the k-th derivative; zero on the Nyquist mode for odd k.
pub(crate) fn derivative_symbol(n: i64, k: u32, n_points: usize) -> Complex64 {
    if k % 2 == 1 && n == n_points as i64 / 2 {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::new(0.0, n as f64).powu(k)
}

/// Spectral `∂_θ^k f` for `k ∈ 1..=4`, taken from the round-off filtered
/// spectrum.
pub fn derivative(f: &PeriodicField, k: u32) -> Result<PeriodicField> {
    if !(1..=4).contains(&k) {
        return Err(Error::Usage(format!(
            "derivative order must be in 1..=4, got {k}"
        )));
    }
    let mut s = f.spectrum().roundoff_filtered();
    let n_points = f.grid().n_points();
    s.apply(|n| derivative_symbol(n, k, n_points));
    Ok(s.to_field())
}

/// Rectangle rule `(2π/N) Σ f_j`, exact for trigonometric polynomials of
/// degree below `N`.
pub fn integrate(f: &PeriodicField) -> f64 {
    f.grid().spacing() * f.values().iter().sum::<f64>()
}

/// Discrete `f_n = (1/2π) ∫ f e^{-inθ} dθ` for `|n| < N/2`.
pub fn fourier_coefficient(f: &PeriodicField, n: i64) -> Result<Complex64> {
    let n_points = f.grid().n_points();
    if n.unsigned_abs() as usize >= n_points / 2 {
        return Err(Error::Resolution { n, n_points });
    }
    f.spectrum().coefficient(n)
}

/// 2/3-rule: zeroes every coefficient with `|n| > N/3`.
pub fn dealias(s: &Spectrum) -> Spectrum {
    let mut out = s.clone();
    let cutoff = s.grid().dealias_cutoff();
    for (n, c) in out.modes_mut() {
        if n.abs() > cutoff {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_err(a: &PeriodicField, b: &PeriodicField) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    // Composite Simpson on a fine mesh; independent of the FFT path.
    fn dense_quadrature(f: impl Fn(f64) -> f64) -> f64 {
        let m = 20_000;
        let h = 2.0 * PI / m as f64;
        let mut s = f(0.0) + f(2.0 * PI);
        for j in 1..m {
            let w = if j % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(j as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn grid_construction() {
        let g = make_grid(16).unwrap();
        for (j, x) in g.nodes().iter().enumerate() {
            assert!((x - j as f64 * PI / 8.0).abs() < 1e-15);
        }
        assert!(make_grid(15).is_err());
        assert!(make_grid(14).is_err());
        let g = make_grid(256).unwrap();
        assert!((g.spacing() - 2.0 * PI / 256.0).abs() < 1e-18);
        let nodes = g.nodes();
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn derivative_examples() {
        let g = make_grid(32).unwrap();
        let d = derivative(&g.sample(f64::sin), 1).unwrap();
        assert!(max_err(&d, &g.sample(f64::cos)) < 1e-12);
        let d = derivative(&g.sample(f64::cos), 3).unwrap();
        assert!(max_err(&d, &g.sample(f64::sin)) < 1e-12);
        for k in 1..=4 {
            let d = derivative(&g.constant(3.5), k).unwrap();
            assert!(d.max_abs() < 1e-12);
        }
        assert!(matches!(
            derivative(&g.constant(1.0), 0),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            derivative(&g.constant(1.0), 5),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn nyquist_zeroed_for_odd_orders() {
        let g = make_grid(16).unwrap();
        // cos(8θ) is the Nyquist mode, alternating ±1 on the nodes.
        let f = g.sample(|x| (8.0 * x).cos());
        assert!(derivative(&f, 1).unwrap().max_abs() < 1e-12);
        assert!(derivative(&f, 3).unwrap().max_abs() < 1e-12);
        let d2 = derivative(&f, 2).unwrap();
        assert!(max_err(&d2, &f.map(|v| -64.0 * v)) < 1e-10);
    }

    #[test]
    fn integrate_examples() {
        let g = make_grid(64).unwrap();
        assert!((integrate(&g.constant(1.0)) - 2.0 * PI).abs() < 1e-13);
        assert!(integrate(&g.sample(f64::sin)).abs() < 1e-13);
        let oracle = dense_quadrature(|x| x.cos().powi(2));
        assert!((oracle - PI).abs() < 1e-10);
        assert!((integrate(&g.sample(|x| x.cos().powi(2))) - oracle).abs() < 1e-10);
    }

    #[test]
    fn fourier_coefficient_examples() {
        let g = make_grid(32).unwrap();
        let c = fourier_coefficient(&g.sample(f64::cos), 1).unwrap();
        assert!((c - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        let c = fourier_coefficient(&g.constant(2.25), 0).unwrap();
        assert!((c - Complex64::new(2.25, 0.0)).norm() < 1e-14);

        let re = dense_quadrature(|x| x.sin() * x.cos()) / (2.0 * PI);
        let im = dense_quadrature(|x| -x.sin() * x.sin()) / (2.0 * PI);
        let c = fourier_coefficient(&g.sample(f64::sin), 1).unwrap();
        assert!((c - Complex64::new(re, im)).norm() < 1e-10);
        assert!((c - Complex64::new(0.0, -0.5)).norm() < 1e-14);

        assert!(matches!(
            fourier_coefficient(&g.sample(f64::sin), 16),
            Err(Error::Resolution { n: 16, .. })
        ));
        assert!(fourier_coefficient(&g.sample(f64::sin), -16).is_err());
        assert!(fourier_coefficient(&g.sample(f64::sin), 15).is_ok());
    }

    #[test]
    fn dealias_examples() {
        let g = make_grid(16).unwrap();
        let low = g.sample(f64::cos).spectrum();
        let d = dealias(&low);
        for n in -5..=5 {
            assert_eq!(d.coefficient(n).unwrap(), low.coefficient(n).unwrap());
        }
        assert!((d.to_field().zip_with(&g.sample(f64::cos), |a, b| a - b)).max_abs() < 1e-15);
        let high = g.sample(|x| (7.0 * x).cos()).spectrum();
        let d = dealias(&high);
        assert!(
            d.coefficient(7).unwrap().norm() == 0.0 && d.coefficient(-7).unwrap().norm() == 0.0
        );
        assert!(d.modes().all(|(_, c)| c.norm() < 1e-15));
        let zero = Spectrum::zeros(&g);
        assert_eq!(dealias(&zero), zero);
        // 16/3 = 5: mode 5 kept, mode 6 removed.
        let mixed = g.sample(|x| (5.0 * x).sin() + (6.0 * x).sin()).spectrum();
        let d = dealias(&mixed).to_field();
        assert!(max_err(&d, &g.sample(|x| (5.0 * x).sin())) < 1e-13);
    }

    // Samples cos/sin(nθ_j) with the argument reduced exactly, so the
    // reference carries no phase error of size n·θ·ε.
    fn exact_mode(g: &Grid, n: i64, phase: f64) -> PeriodicField {
        let np = g.n_points() as i64;
        let vals = (0..np)
            .map(|j| (2.0 * PI * (n * j).rem_euclid(np) as f64 / np as f64 + phase).cos())
            .collect();
        PeriodicField::new(g, vals).unwrap()
    }

    /// Largest node error of `∂^k` on `e^{inθ}`, relative to `max(1, |n|^k)`.
    pub(crate) fn worst_monomial_error(n_points: usize) -> f64 {
        let g = make_grid(n_points).unwrap();
        let mut worst = 0.0f64;
        for n in 0..(n_points as i64 / 2) {
            for k in 1..=4u32 {
                let scale = (n as f64).powi(k as i32).max(1.0);
                // (in)^k e^{inθ} = n^k e^{i(nθ + kπ/2)}; real and imaginary parts.
                for phase in [0.0, -0.5 * PI] {
                    let d = derivative(&exact_mode(&g, n, phase), k).unwrap();
                    let expect = exact_mode(&g, n, phase + 0.5 * PI * k as f64);
                    let expect = expect.map(|v| v * (n as f64).powi(k as i32));
                    worst = worst.max(max_err(&d, &expect) / scale);
                }
            }
        }
        worst
    }

    #[test]
    fn derivative_exact_on_all_resolved_modes() {
        let worst = worst_monomial_error(64);
        assert!(worst < 1e-10, "worst relative error {worst:e}");
    }

    #[test]
    fn roundoff_filter_keeps_resolved_content() {
        let g = make_grid(128).unwrap();
        let f = g.sample(|x| 1.0 + 1e-9 * (40.0 * x).cos() + 0.3 * (3.0 * x).sin());
        let s = f.spectrum();
        assert_eq!(
            s.roundoff_filtered().coefficient(40).unwrap(),
            s.coefficient(40).unwrap()
        );
        assert_eq!(s.roundoff_filtered().coefficient(41).unwrap().norm(), 0.0);
    }

    fn random_field(n_points: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, n_points)
    }

    proptest! {
        #[test]
        fn roundtrip_is_exact(values in random_field(64)) {
            let g = make_grid(64).unwrap();
            let f = PeriodicField::new(&g, values).unwrap();
            let back = f.spectrum().to_field();
            let scale = f.max_abs().max(1e-300);
            prop_assert!(max_err(&f, &back) / scale < 1e-12);
        }

        #[test]
        fn derivative_integrates_to_zero(values in random_field(48)) {
            let g = make_grid(48).unwrap();
            let f = PeriodicField::new(&g, values).unwrap();
            let d = derivative(&f, 1).unwrap();
            prop_assert!(integrate(&d).abs() < 1e-12);
        }

        #[test]
        fn plancherel(values in random_field(32)) {
            let g = make_grid(32).unwrap();
            let f = PeriodicField::new(&g, values).unwrap();
            let lhs = integrate(&f.map(|v| v * v));
            let rhs = f.spectrum().weighted_norm_sq(|_| 1.0);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1e-300));
        }

        #[test]
        fn hermitian_symmetry(values in random_field(32)) {
            let g = make_grid(32).unwrap();
            let f = PeriodicField::new(&g, values).unwrap();
            let s = f.spectrum();
            for n in 1..16 {
                let a = s.coefficient(n).unwrap();
                let b = s.coefficient(-n).unwrap();
                prop_assert!((a - b.conj()).norm() < 1e-12);
            }
        }
    }
}
