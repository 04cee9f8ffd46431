//! Truncated power series whose coefficients are fields.
//!
//! `Series { c_0, c_1, .., c_K }` represents `sum_k c_k z^k` modulo `z^{K+1}`.
//! The same arithmetic serves two purposes: Taylor coefficients in time
//! (`z = t - t0`, so `c_k = f^{(k)}(t0) / k!`) for exact profile time
//! derivatives, and expansions in `z = eps^2` for the enthalpy corrections.

use std::sync::Arc;

use crate::grid::{Field, Grid};
use crate::scalar::{lit, Real};

#[derive(Clone, Debug)]
pub struct Series<T: Real> {
    coeffs: Vec<Field<T>>,
}

impl<T: Real> Series<T> {
    pub fn new(coeffs: Vec<Field<T>>) -> Self {
        assert!(
            !coeffs.is_empty(),
            "a series needs at least one coefficient"
        );
        Self { coeffs }
    }

    /// Order-`order` series whose only nonzero coefficient is the constant term.
    pub fn constant(value: Field<T>, order: usize) -> Self {
        let grid = Arc::clone(value.grid());
        let mut coeffs = vec![value];
        coeffs.extend((0..order).map(|_| Field::zeros(&grid)));
        Self { coeffs }
    }

    pub fn scalar(grid: &Arc<Grid<T>>, c: T, order: usize) -> Self {
        Self::constant(Field::constant(grid, c), order)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, k: usize) -> &Field<T> {
        &self.coeffs[k]
    }

    pub fn coeffs(&self) -> &[Field<T>] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Field<T>> {
        self.coeffs
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        self.coeffs[0].grid()
    }

    pub fn push(&mut self, c: Field<T>) {
        self.coeffs.push(c);
    }

    pub fn truncate(&self, order: usize) -> Self {
        Self::new(self.coeffs[..=order.min(self.order())].to_vec())
    }

    /// Coefficient-wise map (linear operators such as spatial derivatives).
    pub fn map(&self, f: impl Fn(&Field<T>) -> Field<T>) -> Self {
        Self::new(self.coeffs.iter().map(f).collect())
    }

    fn zip(&self, other: &Self, f: impl Fn(&Field<T>, &Field<T>) -> Field<T>) -> Self {
        let order = self.order().min(other.order());
        Self::new(
            (0..=order)
                .map(|k| f(&self.coeffs[k], &other.coeffs[k]))
                .collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn neg(&self) -> Self {
        self.map(|c| -c)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|c| c.scale(s))
    }

    /// Adds `f` to the constant coefficient.
    pub fn add_field(&self, f: &Field<T>) -> Self {
        let mut out = self.clone();
        out.coeffs[0] = &out.coeffs[0] + f;
        out
    }

    pub fn add_scalar(&self, c: T) -> Self {
        let mut out = self.clone();
        out.coeffs[0] = out.coeffs[0].add_scalar(c);
        out
    }

    /// Multiplies every coefficient pointwise by a fixed field.
    pub fn mul_field(&self, f: &Field<T>) -> Self {
        self.map(|c| c * f)
    }

    /// Cauchy product, truncated to the smaller order.
    pub fn mul(&self, other: &Self) -> Self {
        let order = self.order().min(other.order());
        let coeffs = (0..=order)
            .map(|k| {
                let mut acc = &self.coeffs[0] * &other.coeffs[k];
                for j in 1..=k {
                    acc += &(&self.coeffs[j] * &other.coeffs[k - j]);
                }
                acc
            })
            .collect();
        Self::new(coeffs)
    }

    pub fn dx(&self) -> Self {
        self.map(Field::dx)
    }

    /// Series of the derivative in the expansion variable: `(k+1) c_{k+1}`.
    /// The order drops by one.
    pub fn shift_derivative(&self) -> Self {
        assert!(self.order() >= 1, "cannot differentiate an order-0 series");
        Self::new(
            (1..=self.order())
                .map(|k| self.coeffs[k].scale(lit(k as f64)))
                .collect(),
        )
    }

    /// `sum_k c_k z^k` at a given value of the expansion variable.
    pub fn evaluate(&self, z: T) -> Field<T> {
        let mut acc = self.coeffs[self.order()].clone();
        for k in (0..self.order()).rev() {
            acc = self.coeffs[k].axpy(z, &acc);
        }
        acc
    }

    /// Multiplicative inverse; the constant coefficient must be nonzero pointwise.
    pub fn recip(&self) -> Self {
        let a0 = &self.coeffs[0];
        let mut r = vec![a0.map(|v| T::one() / v)];
        for k in 1..=self.order() {
            let mut acc = &self.coeffs[1] * &r[k - 1];
            for j in 2..=k {
                acc += &(&self.coeffs[j] * &r[k - j]);
            }
            r.push((&acc * &r[0]).scale(-T::one()));
        }
        Self::new(r)
    }

    pub fn exp(&self) -> Self {
        let mut e = vec![self.coeffs[0].map(T::exp)];
        for k in 1..=self.order() {
            let mut acc = Field::zeros(self.grid());
            for j in 1..=k {
                acc = acc.axpy(lit(j as f64), &(&self.coeffs[j] * &e[k - j]));
            }
            e.push(acc.scale(T::one() / lit(k as f64)));
        }
        Self::new(e)
    }

    /// Natural logarithm; the constant coefficient must be positive pointwise.
    #[allow(clippy::needless_range_loop)]
    pub fn ln(&self) -> Self {
        let a0 = &self.coeffs[0];
        let inv0 = a0.map(|v| T::one() / v);
        let mut l = vec![a0.map(T::ln)];
        for k in 1..=self.order() {
            let mut acc = self.coeffs[k].clone();
            for j in 1..k {
                let w = lit::<T>(j as f64) / lit(k as f64);
                acc = acc.axpy(-w, &(&l[j] * &self.coeffs[k - j]));
            }
            l.push(&acc * &inv0);
        }
        Self::new(l)
    }

    /// Real power `a^p`; the constant coefficient must be positive pointwise.
    pub fn powf(&self, p: T) -> Self {
        let a0 = &self.coeffs[0];
        let inv0 = a0.map(|v| T::one() / v);
        let mut w = vec![a0.map(|v| v.powf(p))];
        for k in 1..=self.order() {
            let mut acc = Field::zeros(self.grid());
            for j in 1..=k {
                let weight = p * lit(j as f64) - lit((k - j) as f64);
                acc = acc.axpy(weight, &(&self.coeffs[j] * &w[k - j]));
            }
            w.push((&acc * &inv0).scale(T::one() / lit(k as f64)));
        }
        Self::new(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Arc<Grid<f64>> {
        Grid::new(8, 1.0).unwrap()
    }

    fn scalar_series(coeffs: &[f64]) -> Series<f64> {
        let g = grid();
        Series::new(coeffs.iter().map(|&c| Field::constant(&g, c)).collect())
    }

    fn first(s: &Series<f64>) -> Vec<f64> {
        s.coeffs().iter().map(|c| c.values()[0]).collect()
    }

    #[test]
    fn product_and_reciprocal() {
        let a = scalar_series(&[2.0, 1.0, -0.5, 0.25]);
        let prod = a.mul(&a.recip());
        let c = first(&prod);
        assert!((c[0] - 1.0).abs() < 1e-15);
        for v in &c[1..] {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn exp_ln_match_scalar_taylor() {
        // exp(t) and ln(1 + t)
        let t = scalar_series(&[0.0, 1.0, 0.0, 0.0, 0.0]);
        let e = first(&t.exp());
        let fact = [1.0, 1.0, 2.0, 6.0, 24.0];
        for k in 0..5 {
            assert!((e[k] - 1.0 / fact[k]).abs() < 1e-15);
        }
        let l = first(&t.add_scalar(1.0).ln());
        let expected = [0.0, 1.0, -0.5, 1.0 / 3.0, -0.25];
        for k in 0..5 {
            assert!((l[k] - expected[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn powf_matches_binomial() {
        // (1 + t)^p
        let p = 5.0 / 3.0;
        let s = scalar_series(&[1.0, 1.0, 0.0, 0.0]).powf(p);
        let c = first(&s);
        let expected = [1.0, p, p * (p - 1.0) / 2.0, p * (p - 1.0) * (p - 2.0) / 6.0];
        for k in 0..4 {
            assert!((c[k] - expected[k]).abs() < 1e-14);
        }
        // composite base (2 + 3t - t^2)^2 = 4 + 12t + 5t^2 - 6t^3 + ..
        let sq = first(&scalar_series(&[2.0, 3.0, -1.0, 0.0]).powf(2.0));
        let exp2 = [4.0, 12.0, 5.0, -6.0];
        for k in 0..4 {
            assert!((sq[k] - exp2[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn evaluate_and_shift() {
        let s = scalar_series(&[1.0, 2.0, 3.0]);
        assert_eq!(s.evaluate(0.5).values()[0], 1.0 + 1.0 + 0.75);
        let d = first(&s.shift_derivative());
        assert_eq!(d, vec![2.0, 6.0]);
    }
}
