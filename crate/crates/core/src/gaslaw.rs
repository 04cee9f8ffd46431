//! Power-law pressure, enthalpy and mass-scaling parameters.
//!
//! The enthalpy is the primitive of `p'(n)/n` normalized by `h(1) = 0`:
//!
//! * isothermal (`gamma = 1`): `h(n) = a^2 ln n`
//! * adiabatic (`gamma > 1`): `h(n) = a^2 gamma/(gamma-1) (n^(gamma-1) - 1)`
//!
//! Both branches invert in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::scalar::{lit, Real};
use crate::series::Series;

/// Highest order of the enthalpy Taylor expansion in `eps^2`.
pub const MAX_TAYLOR_ORDER: usize = 4;

/// `p(n) = a^2 n^gamma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GasLaw<T: Real> {
    a: T,
    gamma: T,
}

impl<T: Real> GasLaw<T> {
    pub fn new(a: T, gamma: T) -> Result<Self> {
        if !(a > T::zero()) || !a.is_finite() {
            return Err(Error::Domain(format!(
                "sound coefficient a must be positive, got {a}"
            )));
        }
        if !(gamma >= T::one()) || !gamma.is_finite() {
            return Err(Error::Domain(format!(
                "adiabatic exponent must be >= 1, got {gamma}"
            )));
        }
        Ok(Self { a, gamma })
    }

    pub fn isothermal(a: T) -> Result<Self> {
        Self::new(a, T::one())
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn is_isothermal(&self) -> bool {
        self.gamma == T::one()
    }

    fn a2(&self) -> T {
        self.a * self.a
    }

    fn check_density(n: T) -> Result<()> {
        if n > T::zero() && n.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("density must be positive, got {n}")))
        }
    }

    pub fn pressure(&self, n: T) -> Result<T> {
        Self::check_density(n)?;
        Ok(self.a2() * n.powf(self.gamma))
    }

    /// `p'(n) = a^2 gamma n^(gamma-1)`, the squared sound speed at unit mass.
    pub fn pressure_derivative(&self, n: T) -> T {
        self.a2() * self.gamma * n.powf(self.gamma - T::one())
    }

    pub fn enthalpy(&self, n: T) -> Result<T> {
        Self::check_density(n)?;
        Ok(self.enthalpy_unchecked(n))
    }

    pub(crate) fn enthalpy_unchecked(&self, n: T) -> T {
        if self.is_isothermal() {
            self.a2() * n.ln()
        } else {
            let g1 = self.gamma - T::one();
            self.a2() * self.gamma / g1 * (n.powf(g1) - T::one())
        }
    }

    /// `h'(n) = p'(n)/n = a^2 gamma n^(gamma-2)`.
    pub fn enthalpy_derivative(&self, n: T) -> T {
        self.a2() * self.gamma * n.powf(self.gamma - lit(2.0))
    }

    /// Lower end of the range of `h` (`-inf` for the isothermal law).
    pub fn enthalpy_floor(&self) -> T {
        if self.is_isothermal() {
            T::neg_infinity()
        } else {
            -self.a2() * self.gamma / (self.gamma - T::one())
        }
    }

    pub fn enthalpy_inverse(&self, h: T) -> Result<T> {
        if !h.is_finite() || h <= self.enthalpy_floor() {
            return Err(Error::Domain(format!(
                "enthalpy {h} outside the range ({}, inf)",
                self.enthalpy_floor()
            )));
        }
        Ok(self.enthalpy_inverse_unchecked(h))
    }

    pub(crate) fn enthalpy_inverse_unchecked(&self, h: T) -> T {
        if self.is_isothermal() {
            (h / self.a2()).exp()
        } else {
            let g1 = self.gamma - T::one();
            (T::one() + g1 * h / (self.a2() * self.gamma)).powf(T::one() / g1)
        }
    }

    /// Pointwise `h(n)`; fails on nonpositive densities.
    pub fn enthalpy_field(&self, n: &Field<T>) -> Result<Field<T>> {
        if !(n.min() > T::zero()) {
            return Err(Error::Domain(format!(
                "density must be positive, min = {}",
                n.min()
            )));
        }
        Ok(n.map(|v| self.enthalpy_unchecked(v)))
    }

    pub fn enthalpy_derivative_field(&self, n: &Field<T>) -> Field<T> {
        n.map(|v| self.enthalpy_derivative(v))
    }

    pub fn enthalpy_inverse_field(&self, h: &Field<T>) -> Result<Field<T>> {
        let floor = self.enthalpy_floor();
        if !(h.min() > floor) || !h.is_finite() {
            return Err(Error::Domain(format!(
                "enthalpy min {} outside the range ({floor}, inf)",
                h.min()
            )));
        }
        Ok(h.map(|v| self.enthalpy_inverse_unchecked(v)))
    }

    /// `h` composed with a power series (constant term must be positive).
    pub fn enthalpy_series(&self, n: &Series<T>) -> Series<T> {
        if self.is_isothermal() {
            n.ln().scale(self.a2())
        } else {
            let g1 = self.gamma - T::one();
            n.powf(g1)
                .add_scalar(-T::one())
                .scale(self.a2() * self.gamma / g1)
        }
    }

    /// `h'` composed with a power series.
    pub fn enthalpy_derivative_series(&self, n: &Series<T>) -> Series<T> {
        n.powf(self.gamma - lit(2.0)).scale(self.a2() * self.gamma)
    }

    /// `1/h'(n) = n^(2-gamma) / (a^2 gamma)` composed with a power series.
    pub fn inverse_enthalpy_derivative_series(&self, n: &Series<T>) -> Series<T> {
        n.powf(lit::<T>(2.0) - self.gamma)
            .scale(T::one() / (self.a2() * self.gamma))
    }

    /// `h^{-1}` composed with a power series.
    pub fn enthalpy_inverse_series(&self, h: &Series<T>) -> Series<T> {
        if self.is_isothermal() {
            h.scale(T::one() / self.a2()).exp()
        } else {
            let g1 = self.gamma - T::one();
            h.scale(g1 / (self.a2() * self.gamma))
                .add_scalar(T::one())
                .powf(T::one() / g1)
        }
    }
}

/// Coefficients of `eps^(2j)`, `j = 0..=order`, in the expansion of
/// `h(n0 + sum_{j>=1} eps^(2j) n_j)`.
///
/// Entry 0 is `h(n0)`, entry 1 is `h'(n0) n_1`, and entries `j >= 2` bundle
/// `h'(n0) n_j` with the nonlinear correction generated by the lower orders.
pub fn enthalpy_taylor_terms<T: Real>(
    law: &GasLaw<T>,
    n0: &Field<T>,
    corrections: &[Field<T>],
    order: usize,
) -> Result<Vec<Field<T>>> {
    if order > MAX_TAYLOR_ORDER {
        return Err(Error::Domain(format!(
            "Taylor order {order} exceeds the supported maximum {MAX_TAYLOR_ORDER}"
        )));
    }
    if corrections.len() < order {
        return Err(Error::Domain(format!(
            "need {order} correction fields, got {}",
            corrections.len()
        )));
    }
    if !(n0.min() > T::zero()) {
        return Err(Error::Domain(format!(
            "base density must be positive, min = {}",
            n0.min()
        )));
    }
    let mut coeffs = vec![n0.clone()];
    coeffs.extend(corrections[..order].iter().cloned());
    Ok(law.enthalpy_series(&Series::new(coeffs)).into_coeffs())
}

/// Which singular limit an expansion describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MassLimit {
    /// `m_i = 1`, `m_e = eps^2`.
    #[serde(rename = "zero-electron", alias = "zero-electron-mass")]
    ZeroElectronMass,
    /// `m_e = 1`, `m_i = 1/eps^2`.
    #[serde(rename = "infinity-ion", alias = "infinity-ion-mass")]
    InfinityIonMass,
}

impl MassLimit {
    pub fn name(&self) -> &'static str {
        match self {
            MassLimit::ZeroElectronMass => "zero-electron",
            MassLimit::InfinityIonMass => "infinity-ion",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regime<T: Real> {
    Limit(MassLimit),
    RawMasses { m_e: T, m_i: T },
}

/// Mass ratio root `eps = sqrt(m_e/m_i)`, Debye length and the active regime.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingParams<T: Real> {
    eps: T,
    lambda: T,
    regime: Regime<T>,
}

impl<T: Real> ScalingParams<T> {
    pub fn new(limit: MassLimit, eps: T, lambda: T) -> Result<Self> {
        if !(eps > T::zero()) || !eps.is_finite() {
            return Err(Error::Domain(format!("eps must be positive, got {eps}")));
        }
        Self::check_lambda(lambda)?;
        Ok(Self {
            eps,
            lambda,
            regime: Regime::Limit(limit),
        })
    }

    pub fn zero_electron(eps: T, lambda: T) -> Result<Self> {
        Self::new(MassLimit::ZeroElectronMass, eps, lambda)
    }

    pub fn infinity_ion(eps: T, lambda: T) -> Result<Self> {
        Self::new(MassLimit::InfinityIonMass, eps, lambda)
    }

    pub fn raw_masses(m_e: T, m_i: T, lambda: T) -> Result<Self> {
        if !(m_e > T::zero()) || !(m_i > T::zero()) {
            return Err(Error::Domain(format!(
                "masses must be positive, got ({m_e}, {m_i})"
            )));
        }
        Self::check_lambda(lambda)?;
        Ok(Self {
            eps: (m_e / m_i).sqrt(),
            lambda,
            regime: Regime::RawMasses { m_e, m_i },
        })
    }

    fn check_lambda(lambda: T) -> Result<()> {
        if lambda > T::zero() && lambda.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "lambda must be positive, got {lambda}"
            )))
        }
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn regime(&self) -> Regime<T> {
        self.regime
    }

    pub fn limit(&self) -> Option<MassLimit> {
        match self.regime {
            Regime::Limit(l) => Some(l),
            Regime::RawMasses { .. } => None,
        }
    }

    /// `(m_e, m_i)` implied by the regime.
    pub fn masses(&self) -> (T, T) {
        match self.regime {
            Regime::Limit(MassLimit::ZeroElectronMass) => (self.eps * self.eps, T::one()),
            Regime::Limit(MassLimit::InfinityIonMass) => {
                (T::one(), T::one() / (self.eps * self.eps))
            }
            Regime::RawMasses { m_e, m_i } => (m_e, m_i),
        }
    }
}

/// Gas laws of the two species.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpeciesLaws<T: Real> {
    pub electron: GasLaw<T>,
    pub ion: GasLaw<T>,
}

impl<T: Real> SpeciesLaws<T> {
    pub fn isothermal(a_e: T, a_i: T) -> Result<Self> {
        Ok(Self {
            electron: GasLaw::isothermal(a_e)?,
            ion: GasLaw::isothermal(a_i)?,
        })
    }
}
