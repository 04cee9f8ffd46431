//! Uniform periodic grid on `[0, L)` with Fourier differentiation.
//!
//! Fields are stored as nodal values at `x_k = k * dx`. All spectral
//! operators go through a forward/inverse FFT pair that is planned once per
//! grid and shared by every field living on it.

use std::fmt;
use std::io::{Read, Write};
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Exponent of the exponential spectral filter applied to tendencies.
pub const FILTER_ORDER: i32 = 36;

/// Periodic 1-D mesh with cached transform plans.
pub struct Grid<T: Real> {
    n_points: usize,
    length: T,
    dx: T,
    wavenumbers: Vec<T>,
    filter: Vec<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> fmt::Debug for Grid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n_points", &self.n_points)
            .field("length", &self.length)
            .finish()
    }
}

impl<T: Real> Grid<T> {
    /// Builds a grid with `n_points` nodes (a power of two, at least 8) on `[0, length)`.
    pub fn new(n_points: usize, length: T) -> Result<Arc<Self>> {
        if n_points < 8 || !n_points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n_points must be a power of two >= 8, got {n_points}"
            )));
        }
        if !(length > T::zero()) || !length.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "length must be positive and finite, got {length}"
            )));
        }
        let n = n_points as i64;
        let two_pi = lit::<T>(2.0 * std::f64::consts::PI);
        let wavenumbers = (0..n)
            .map(|k| {
                let signed = if k <= n / 2 { k } else { k - n };
                two_pi * lit::<T>(signed as f64) / length
            })
            .collect();
        let strength = lit::<T>(1e16_f64.ln());
        let half = lit::<T>((n / 2) as f64);
        let filter = (0..n)
            .map(|k| {
                let signed = if k <= n / 2 { k } else { k - n };
                let eta = lit::<T>(signed.unsigned_abs() as f64) / half;
                (-strength * eta.powi(FILTER_ORDER)).exp()
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Arc::new(Self {
            n_points,
            length,
            dx: length / lit(n_points as f64),
            wavenumbers,
            filter,
            forward: planner.plan_fft_forward(n_points),
            inverse: planner.plan_fft_inverse(n_points),
        }))
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn length(&self) -> T {
        self.length
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    /// Node coordinate `x_k = k * dx`.
    pub fn node(&self, k: usize) -> T {
        lit::<T>(k as f64) * self.dx
    }

    pub fn nodes(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.n_points).map(|k| self.node(k))
    }

    /// Physical wavenumber of FFT bin `k`, `2 pi k / L` with negative frequencies folded.
    pub fn wavenumber(&self, k: usize) -> T {
        self.wavenumbers[k]
    }

    pub fn wavenumbers(&self) -> &[T] {
        &self.wavenumbers
    }

    pub fn nyquist(&self) -> usize {
        self.n_points / 2
    }

    /// Normalized forward transform: `c_k = (1/N) sum_j f_j exp(-i kappa_k x_j)`.
    pub fn forward(&self, values: &[T]) -> Vec<Complex<T>> {
        let mut buf: Vec<Complex<T>> = values.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.forward.process(&mut buf);
        let scale = T::one() / lit(self.n_points as f64);
        for c in &mut buf {
            *c = *c * scale;
        }
        buf
    }

    /// Inverse of [`Grid::forward`]; the imaginary part is discarded.
    pub fn inverse(&self, mut spectrum: Vec<Complex<T>>) -> Vec<T> {
        self.inverse.process(&mut spectrum);
        spectrum.into_iter().map(|c| c.re).collect()
    }

    /// Applies a real multiplier per bin (bin index, wavenumber) in spectral space.
    pub(crate) fn apply_multiplier(&self, values: &[T], mult: impl Fn(usize, T) -> T) -> Vec<T> {
        let mut spec = self.forward(values);
        for (k, c) in spec.iter_mut().enumerate() {
            *c = *c * mult(k, self.wavenumbers[k]);
        }
        self.inverse(spec)
    }

    fn same(&self, other: &Grid<T>) -> bool {
        self.n_points == other.n_points && self.length == other.length
    }
}

/// Nodal values of a real function on a [`Grid`].
#[derive(Clone)]
pub struct Field<T: Real> {
    grid: Arc<Grid<T>>,
    values: Vec<T>,
}

impl<T: Real> fmt::Debug for Field<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("n_points", &self.grid.n_points)
            .field("values", &self.values)
            .finish()
    }
}

impl<T: Real> Field<T> {
    pub fn from_values(grid: &Arc<Grid<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.n_points {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.n_points,
                values.len()
            )));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub(crate) fn from_vec_unchecked(grid: &Arc<Grid<T>>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.n_points);
        Self {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn from_fn(grid: &Arc<Grid<T>>, f: impl Fn(T) -> T) -> Self {
        let values = grid.nodes().map(f).collect();
        Self::from_vec_unchecked(grid, values)
    }

    pub fn constant(grid: &Arc<Grid<T>>, c: T) -> Self {
        Self::from_vec_unchecked(grid, vec![c; grid.n_points])
    }

    pub fn zeros(grid: &Arc<Grid<T>>) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_vec_unchecked(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        self.check_grid(other);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::from_vec_unchecked(&self.grid, values)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: T, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + c * b)
    }

    pub fn add_scalar(&self, c: T) -> Self {
        self.map(|v| v + c)
    }

    fn check_grid(&self, other: &Self) {
        assert!(
            Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same(&other.grid),
            "fields live on different grids"
        );
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    /// Arithmetic mean of the nodal values, `(1/N) sum f_k`.
    pub fn mean(&self) -> T {
        let sum = self.values.iter().fold(T::zero(), |s, &v| s + v);
        sum / lit(self.values.len() as f64)
    }

    /// Trapezoidal (spectrally exact) integral over one period.
    pub fn integral(&self) -> T {
        self.mean() * self.grid.length
    }

    pub fn zero_mean(&self) -> Self {
        let m = self.mean();
        self.map(|v| v - m)
    }

    /// Discrete L2 inner product `dx * sum f g`.
    pub fn dot(&self, other: &Self) -> T {
        self.check_grid(other);
        let s = self
            .values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |s, (&a, &b)| s + a * b);
        s * self.grid.dx
    }

    pub fn l2_norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn spectrum(&self) -> Vec<Complex<T>> {
        self.grid.forward(&self.values)
    }

    pub fn from_spectrum(grid: &Arc<Grid<T>>, spectrum: Vec<Complex<T>>) -> Self {
        Self::from_vec_unchecked(grid, grid.inverse(spectrum))
    }

    /// Spectral derivative of the given order. The Nyquist mode is dropped for
    /// odd orders so that real fields stay real.
    pub fn derivative(&self, order: u32) -> Self {
        if order == 0 {
            return self.clone();
        }
        let nyq = self.grid.nyquist();
        let odd = order % 2 == 1;
        let mut spec = self.spectrum();
        for (k, c) in spec.iter_mut().enumerate() {
            if odd && k == nyq {
                *c = Complex::new(T::zero(), T::zero());
                continue;
            }
            let ik = Complex::new(T::zero(), self.grid.wavenumbers[k]);
            *c = *c * ik.powu(order);
        }
        Self::from_spectrum(&self.grid, spec)
    }

    pub fn dx(&self) -> Self {
        self.derivative(1)
    }

    /// Mean-free periodic antiderivative of the mean-free part of `self`.
    pub fn antiderivative(&self) -> Self {
        let nyq = self.grid.nyquist();
        let mut spec = self.spectrum();
        for (k, c) in spec.iter_mut().enumerate() {
            if k == 0 || k == nyq {
                *c = Complex::new(T::zero(), T::zero());
            } else {
                *c = *c / Complex::new(T::zero(), self.grid.wavenumbers[k]);
            }
        }
        Self::from_spectrum(&self.grid, spec)
    }

    /// Discrete `H^s` norm, `sum_k (1 + kappa_k^2)^s |c_k|^2 L`.
    pub fn sobolev_norm(&self, s: u32) -> T {
        let spec = self.spectrum();
        let sum = spec
            .iter()
            .zip(&self.grid.wavenumbers)
            .fold(T::zero(), |acc, (c, &kappa)| {
                acc + (T::one() + kappa * kappa).powi(s as i32) * c.norm_sqr()
            });
        (sum * self.grid.length).sqrt()
    }

    /// `sum_{j <= s} ||d^j f||^2`, the unweighted derivative seminorm sum used by
    /// the energy functionals.
    pub fn derivative_norm_sq(&self, s: u32) -> T {
        (0..=s).fold(T::zero(), |acc, j| {
            let d = self.derivative(j);
            acc + d.dot(&d)
        })
    }

    /// Applies the exponential filter `exp(-ln(1e16) (|k|/(N/2))^36)`.
    pub fn filtered(&self) -> Self {
        let filter = &self.grid.filter;
        Self::from_vec_unchecked(
            &self.grid,
            self.grid.apply_multiplier(&self.values, |k, _| filter[k]),
        )
    }

    /// Trigonometric interpolant evaluated at an arbitrary point.
    pub fn eval_at(&self, x: T) -> T {
        let spec = self.spectrum();
        let nyq = self.grid.nyquist();
        let mut acc = T::zero();
        for (k, c) in spec.iter().enumerate() {
            let phase = self.grid.wavenumbers[k] * x;
            if k == nyq {
                acc = acc + c.re * phase.cos();
            } else {
                acc = acc + c.re * phase.cos() - c.im * phase.sin();
            }
        }
        acc
    }

    /// Writes `x,value` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,value")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(
                out,
                "{:.17e},{:.17e}",
                to_f64(self.grid.node(k)),
                to_f64(*v)
            )?;
        }
        Ok(())
    }

    /// Binary checkpoint: `n_points` (u64 LE), `L` (f64 LE), then the values as f64 LE.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&(self.grid.n_points as u64).to_le_bytes())?;
        out.write_all(&to_f64(self.grid.length).to_le_bytes())?;
        for v in &self.values {
            out.write_all(&to_f64(*v).to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a checkpoint. A grid is built from the header unless `grid` is
    /// supplied, in which case the header must match it.
    pub fn read_checkpoint<R: Read>(mut input: R, grid: Option<&Arc<Grid<T>>>) -> Result<Self> {
        let mut word = [0u8; 8];
        input.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        input.read_exact(&mut word)?;
        let length = f64::from_le_bytes(word);
        let grid = match grid {
            Some(g) => {
                if g.n_points != n || to_f64(g.length) != length {
                    return Err(Error::Format(format!(
                        "checkpoint grid ({n}, {length}) does not match ({}, {})",
                        g.n_points, g.length
                    )));
                }
                Arc::clone(g)
            }
            None => Grid::new(n, lit(length))?,
        };
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            input.read_exact(&mut word)?;
            values.push(lit(f64::from_le_bytes(word)));
        }
        Field::from_values(&grid, values)
    }
}

impl<T: Real> Add for &Field<T> {
    type Output = Field<T>;
    fn add(self, rhs: Self) -> Field<T> {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl<T: Real> Sub for &Field<T> {
    type Output = Field<T>;
    fn sub(self, rhs: Self) -> Field<T> {
        self.zip_map(rhs, |a, b| a - b)
    }
}

/// Pointwise product.
impl<T: Real> Mul for &Field<T> {
    type Output = Field<T>;
    fn mul(self, rhs: Self) -> Field<T> {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl<T: Real> Neg for &Field<T> {
    type Output = Field<T>;
    fn neg(self) -> Field<T> {
        self.map(|v| -v)
    }
}

macro_rules! owned_binop {
    ($tr:ident, $method:ident) => {
        impl<T: Real> $tr for Field<T> {
            type Output = Field<T>;
            fn $method(self, rhs: Self) -> Field<T> {
                (&self).$method(&rhs)
            }
        }

        impl<T: Real> $tr<&Field<T>> for Field<T> {
            type Output = Field<T>;
            fn $method(self, rhs: &Field<T>) -> Field<T> {
                (&self).$method(rhs)
            }
        }

        impl<T: Real> $tr<Field<T>> for &Field<T> {
            type Output = Field<T>;
            fn $method(self, rhs: Field<T>) -> Field<T> {
                self.$method(&rhs)
            }
        }
    };
}

owned_binop!(Add, add);
owned_binop!(Sub, sub);
owned_binop!(Mul, mul);

impl<T: Real> Neg for Field<T> {
    type Output = Field<T>;
    fn neg(self) -> Field<T> {
        -&self
    }
}

impl<T: Real> AddAssign<&Field<T>> for Field<T> {
    fn add_assign(&mut self, rhs: &Field<T>) {
        self.check_grid(rhs);
        for (a, &b) in self.values.iter_mut().zip(&rhs.values) {
            *a = *a + b;
        }
    }
}

impl<T: Real> SubAssign<&Field<T>> for Field<T> {
    fn sub_assign(&mut self, rhs: &Field<T>) {
        self.check_grid(rhs);
        for (a, &b) in self.values.iter_mut().zip(&rhs.values) {
            *a = *a - b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(n: usize, l: f64) -> Arc<Grid<f64>> {
        Grid::new(n, l).unwrap()
    }

    /// Band-limited field with modes up to `kmax` built from deterministic coefficients.
    fn band_limited(g: &Arc<Grid<f64>>, coeffs: &[(f64, f64)]) -> Field<f64> {
        let l = g.length();
        Field::from_fn(g, |x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(j, (a, b))| {
                    let k = 2.0 * PI * (j + 1) as f64 / l;
                    a * (k * x).cos() + b * (k * x).sin()
                })
                .sum()
        })
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(Grid::<f64>::new(4, 1.0).is_err());
        assert!(Grid::<f64>::new(24, 1.0).is_err());
        assert!(Grid::<f64>::new(16, 0.0).is_err());
        assert!(Grid::<f64>::new(16, 1.0).is_ok());
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = grid(32, 2.0);
        let f = Field::constant(&g, 3.5);
        for order in 1..4 {
            assert!(f.derivative(order).max_abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_of_sine() {
        let l = 3.0;
        let g = grid(64, l);
        let k = 2.0 * PI / l;
        let f = Field::from_fn(&g, |x| (k * x).sin());
        let d = f.derivative(1);
        for (i, x) in g.nodes().enumerate() {
            assert!((d.values()[i] - k * (k * x).cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn second_derivative_matches_finite_difference_oracle() {
        let g = grid(128, 1.0);
        let f = band_limited(&g, &[(0.3, -0.2), (0.1, 0.4), (-0.25, 0.05), (0.07, 0.02)]);
        let d2 = f.derivative(2);
        let n = g.n_points();
        let h = g.dx();
        let v = f.values();
        // dense central-difference oracle; truncation error is (h^2/12) f''''
        let f4 = f.derivative(4).max_abs();
        let bound = 1.05 * h * h / 12.0 * f4;
        for i in 0..n {
            let fd = (v[(i + 1) % n] - 2.0 * v[i] + v[(i + n - 1) % n]) / (h * h);
            assert!((fd - d2.values()[i]).abs() <= bound, "node {i}");
        }
    }

    #[test]
    fn sobolev_norm_examples() {
        let g = grid(32, 1.0);
        let c = Field::constant(&g, -2.0);
        for s in 0..4 {
            assert_relative_eq!(c.sobolev_norm(s), 2.0, max_relative = 1e-13);
        }
        let l = 2.5;
        let g2 = grid(32, l);
        let c2 = Field::constant(&g2, 3.0);
        assert_relative_eq!(c2.sobolev_norm(2), 3.0 * l.sqrt(), max_relative = 1e-13);

        let f = Field::from_fn(&g, |x| (2.0 * PI * x).sin());
        assert_relative_eq!(f.sobolev_norm(0), 0.5_f64.sqrt(), max_relative = 1e-13);
        let expected = ((1.0 + 4.0 * PI * PI) / 2.0).sqrt();
        assert_relative_eq!(f.sobolev_norm(1), expected, max_relative = 1e-13);
    }

    #[test]
    fn mean_and_zero_mean() {
        let g = grid(16, 1.0);
        let five = Field::constant(&g, 5.0);
        assert_eq!(five.mean(), 5.0);
        assert!(five.zero_mean().max_abs() < 1e-15);
        let s = Field::from_fn(&g, |x| (2.0 * PI * x).sin());
        assert!(s.mean().abs() < 1e-14);
    }

    #[test]
    fn filter_keeps_low_modes() {
        let g = grid(64, 1.0);
        let f = band_limited(&g, &[(1.0, 0.5), (0.2, 0.1)]);
        let diff = &f.filtered() - &f;
        assert!(diff.max_abs() < 1e-14);
        let nyq = Field::from_fn(&g, |x| (2.0 * PI * 32.0 * x).cos());
        assert!(nyq.filtered().max_abs() < 1e-15);
    }

    #[test]
    fn antiderivative_inverts_derivative() {
        let g = grid(64, 2.0);
        let f = band_limited(&g, &[(0.4, 0.1), (0.0, 0.3), (0.2, 0.0)]);
        let back = f.dx().antiderivative();
        assert!((&back - &f.zero_mean()).max_abs() < 1e-13);
    }

    #[test]
    fn interpolation_reproduces_band_limited_function() {
        let g = grid(32, 1.0);
        let f = band_limited(&g, &[(0.4, 0.1), (0.0, 0.3)]);
        for &x in &[0.013, 0.377, 0.9] {
            let exact = 0.4 * (2.0 * PI * x).cos()
                + 0.1 * (2.0 * PI * x).sin()
                + 0.3 * (4.0 * PI * x).sin();
            assert!((f.eval_at(x) - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let g = grid(16, 1.5);
        let f = band_limited(&g, &[(0.4, 0.1)]);
        let mut buf = Vec::new();
        f.write_checkpoint(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 8 * 16);
        assert_eq!(&buf[0..8], &16u64.to_le_bytes());
        assert_eq!(&buf[8..16], &1.5f64.to_le_bytes());
        let back = Field::<f64>::read_checkpoint(buf.as_slice(), None).unwrap();
        assert_eq!(back.values(), f.values());
        let other = grid(32, 1.5);
        assert!(Field::<f64>::read_checkpoint(buf.as_slice(), Some(&other)).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let g = grid(8, 1.0);
        let f = Field::constant(&g, 1.0);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,value\n"));
        assert_eq!(text.lines().count(), 9);
    }

    #[test]
    fn single_precision_derivative() {
        let g = Grid::<f32>::new(32, 1.0).unwrap();
        let k = 2.0 * std::f32::consts::PI;
        let f = Field::from_fn(&g, |x| (k * x).sin());
        let d = f.dx();
        for (i, x) in g.nodes().enumerate() {
            assert!((d.values()[i] - k * (k * x).cos()).abs() < 1e-4);
        }
    }

    fn coeffs_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..8)
    }

    proptest! {
        #[test]
        fn parseval(coeffs in coeffs_strategy(), offset in -2.0..2.0f64) {
            let g = grid(32, 1.7);
            let f = band_limited(&g, &coeffs).add_scalar(offset);
            let direct: f64 = g.dx() * f.values().iter().map(|v| v * v).sum::<f64>();
            let n0 = f.sobolev_norm(0);
            prop_assert!((n0 * n0 - direct).abs() <= 1e-12 * direct.max(1e-300));
        }

        #[test]
        fn norms_are_ordered(values in prop::collection::vec(-3.0..3.0f64, 16)) {
            let g = grid(16, 1.0);
            let f = Field::from_values(&g, values).unwrap();
            for s in 0..4 {
                prop_assert!(f.sobolev_norm(s) <= f.sobolev_norm(s + 1) * (1.0 + 1e-14));
            }
        }

        #[test]
        fn repeated_first_derivative_is_second(coeffs in coeffs_strategy()) {
            let g = grid(32, 1.0);
            let f = band_limited(&g, &coeffs);
            let twice = f.dx().dx();
            let direct = f.derivative(2);
            let scale = direct.max_abs().max(1.0);
            prop_assert!((&twice - &direct).max_abs() <= 1e-10 * scale);
        }

        #[test]
        fn derivative_is_linear_and_norm_homogeneous(
            a in prop::collection::vec(-1.0..1.0f64, 16),
            b in prop::collection::vec(-1.0..1.0f64, 16),
            c in -5.0..5.0f64,
        ) {
            let g = grid(16, 1.0);
            let fa = Field::from_values(&g, a).unwrap();
            let fb = Field::from_values(&g, b).unwrap();
            let lhs = fa.axpy(c, &fb).dx();
            let rhs = fa.dx().axpy(c, &fb.dx());
            prop_assert!((&lhs - &rhs).max_abs() <= 1e-10 * (1.0 + c.abs()) * 20.0);
            for s in 0..3 {
                let scaled = fa.scale(c).sobolev_norm(s);
                prop_assert!((scaled - c.abs() * fa.sobolev_norm(s)).abs() <= 1e-12 * scaled.max(1e-12));
            }
        }

        #[test]
        fn mean_matches_naive_sum(values in prop::collection::vec(-10.0..10.0f64, 32)) {
            let g = grid(32, 1.0);
            let naive = values.iter().sum::<f64>() / 32.0;
            let f = Field::from_values(&g, values).unwrap();
            prop_assert_eq!(f.mean(), naive);
            prop_assert!(f.zero_mean().mean().abs() <= 1e-14);
        }
    }
}
