//! Profiles of the asymptotic expansion in `eps^2` for both mass limits.
//!
//! Zero-electron-mass limit (`m_e = eps^2`):
//!
//! * order 0: ions follow a unipolar Euler-Poisson system closed by the
//!   Poisson-Boltzmann equation, electrons sit on `n_e = h_e^{-1}(phi)`, and
//!   the electron velocity and the Lagrange-type pressure `P_e` are recovered
//!   from the constrained electron equations;
//! * order 1: a linear ion system forced by order 0, with the elliptic
//!   equation `-lambda^2 phi1'' + b phi1 = n_i1 - b P_e0`, `b = 1/h_e'(n_e0)`.
//!
//! Infinity-ion-mass limit (`m_i = 1/eps^2`):
//!
//! * order 0: pressureless ions and a unipolar electron Euler-Poisson system;
//! * order 1: the linearization forced by the ion source `(h_i(n_i0) + phi0)'`.
//!
//! The electron quantities of the zero-electron limit involve time
//! derivatives of the ion state. They are obtained exactly from truncated
//! Taylor series in time, built by recursion on the ion equations.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    evolve, uniform_times, Evolution, StepperOptions, DENSITY_FLOOR, NEUTRALITY_TOL,
};
use crate::elliptic::{
    extend_boltzmann_series, solve_poisson, solve_poisson_boltzmann_with, solve_screened,
    LinearOptions, NewtonOptions,
};
use crate::error::{Error, Result};
use crate::gaslaw::{GasLaw, MassLimit, SpeciesLaws};
use crate::grid::{Field, Grid};
use crate::scalar::{lit, to_f64, Real};
use crate::series::Series;

/// One profile order at one sample time, with exact first time derivatives.
#[derive(Clone, Debug)]
pub struct ProfileSample<T: Real> {
    pub n_e: Field<T>,
    pub u_e: Field<T>,
    pub n_i: Field<T>,
    pub u_i: Field<T>,
    pub phi: Field<T>,
    /// Electron pressure-type multiplier (zero-electron limit only).
    pub p_e: Option<Field<T>>,
    pub dn_e: Field<T>,
    pub du_e: Field<T>,
    pub dn_i: Field<T>,
    pub du_i: Field<T>,
}

const FIELD_NAMES: [&str; 9] = [
    "n_e", "u_e", "n_i", "u_i", "phi", "dn_e", "du_e", "dn_i", "du_i",
];

impl<T: Real> ProfileSample<T> {
    fn fields(&self) -> [&Field<T>; 9] {
        [
            &self.n_e, &self.u_e, &self.n_i, &self.u_i, &self.phi, &self.dn_e, &self.du_e,
            &self.dn_i, &self.du_i,
        ]
    }

    fn from_fields(mut f: Vec<Field<T>>, p_e: Option<Field<T>>) -> Self {
        let mut next = || f.remove(0);
        Self {
            n_e: next(),
            u_e: next(),
            n_i: next(),
            u_i: next(),
            phi: next(),
            p_e,
            dn_e: next(),
            du_e: next(),
            dn_i: next(),
            du_i: next(),
        }
    }
}

/// Initial data of a zero-electron profile order. The electron velocity is
/// fixed by the constraint up to its spatial mean.
#[derive(Clone, Debug)]
pub struct ZeroElectronData<T: Real> {
    pub n_i: Field<T>,
    pub u_i: Field<T>,
    pub mean_u_e: T,
}

/// Initial data of an infinity-ion profile order.
#[derive(Clone, Debug)]
pub struct InfinityIonData<T: Real> {
    pub n_i: Field<T>,
    pub u_i: Field<T>,
    pub n_e: Field<T>,
    pub u_e: Field<T>,
}

#[derive(Clone, Copy, Debug)]
pub struct ProfileOptions {
    /// Number of sampling intervals on `[0, t_end]`.
    pub n_samples: usize,
    pub stepper: StepperOptions,
    pub linear: LinearOptions,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            n_samples: 10,
            stepper: StepperOptions::default(),
            linear: LinearOptions::default(),
        }
    }
}

/// Expansion profiles `j = 0..=order` sampled on a shared uniform time grid.
#[derive(Clone, Debug)]
pub struct ProfileSet<T: Real> {
    pub limit: MassLimit,
    pub laws: SpeciesLaws<T>,
    pub lambda: T,
    pub times: Vec<T>,
    /// `orders[j][k]` is profile `j` at `times[k]`.
    pub orders: Vec<Vec<ProfileSample<T>>>,
    pub options: ProfileOptions,
}

impl<T: Real> ProfileSet<T> {
    pub fn order(&self) -> usize {
        self.orders.len() - 1
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        self.orders[0][0].n_i.grid()
    }

    pub fn t_end(&self) -> T {
        *self.times.last().expect("non-empty time grid")
    }

    pub fn sample(&self, order: usize, k: usize) -> &ProfileSample<T> {
        &self.orders[order][k]
    }

    fn zero_electron_data(&self, order: usize) -> ZeroElectronData<T> {
        let s = &self.orders[order][0];
        ZeroElectronData {
            n_i: s.n_i.clone(),
            u_i: s.u_i.clone(),
            mean_u_e: s.u_e.mean(),
        }
    }

    fn infinity_ion_data(&self, order: usize) -> InfinityIonData<T> {
        let s = &self.orders[order][0];
        InfinityIonData {
            n_i: s.n_i.clone(),
            u_i: s.u_i.clone(),
            n_e: s.n_e.clone(),
            u_e: s.u_e.clone(),
        }
    }
}

fn check_times<T: Real>(t_end: T, opts: &ProfileOptions) -> Result<Vec<T>> {
    if !(t_end > T::zero()) {
        return Err(Error::Domain(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    if opts.n_samples == 0 {
        return Err(Error::Domain(
            "at least one sampling interval is required".into(),
        ));
    }
    Ok(uniform_times(t_end, opts.n_samples))
}

fn floor_check<T: Real>(n: &Field<T>, species: &'static str, t: T) -> Result<()> {
    if n.min() >= lit(DENSITY_FLOOR) {
        Ok(())
    } else {
        Err(Error::DensityFloor {
            species,
            min: to_f64(n.min()),
            floor: DENSITY_FLOOR,
            time: to_f64(t),
        })
    }
}

fn antiderivative_series<T: Real>(s: &Series<T>) -> Series<T> {
    s.map(Field::antiderivative)
}

/// Velocity series `u = (numer + c(t)) / n` with the scalar series `c`
/// chosen so that `mean(u)` equals `mean0` at all times.
fn velocity_with_mean<T: Real>(numer: &Series<T>, recip_n: &Series<T>, mean0: T) -> Series<T> {
    let r0_mean = recip_n.coeff(0).mean();
    let mut c: Vec<T> = Vec::new();
    let mut u: Vec<Field<T>> = Vec::new();
    for k in 0..=numer.order() {
        let mut known = numer.coeff(0) * recip_n.coeff(k);
        for j in 1..=k {
            known += &(numer.coeff(j) * recip_n.coeff(k - j));
        }
        for (j, &cj) in c.iter().enumerate() {
            known = known.axpy(cj, recip_n.coeff(k - j));
        }
        let target = if k == 0 { mean0 } else { T::zero() };
        let ck = (target - known.mean()) / r0_mean;
        u.push(known.axpy(ck, recip_n.coeff(0)));
        c.push(ck);
    }
    Series::new(u)
}

/// Taylor jets of the zero-electron hierarchy around one instant.
struct ZeroElectronJets<T: Real> {
    n_i0: Series<T>,
    u_i0: Series<T>,
    phi0: Series<T>,
    n_e0: Series<T>,
    order1: Option<Order1Jets<T>>,
}

struct Order1Jets<T: Real> {
    n_i1: Series<T>,
    u_i1: Series<T>,
    phi1: Series<T>,
}

struct ZeroElectronSystem<'a, T: Real> {
    laws: &'a SpeciesLaws<T>,
    lambda: T,
    linear: LinearOptions,
    mean_u_e0: T,
    with_order1: bool,
}

impl<T: Real> ZeroElectronSystem<'_, T> {
    fn leading_phi(&self, n_i: &Field<T>) -> Result<Field<T>> {
        let opts = NewtonOptions {
            linear: self.linear,
            ..NewtonOptions::default()
        };
        Ok(solve_poisson_boltzmann_with(n_i, self.lambda, &self.laws.electron, &opts)?.phi)
    }

    /// Ion order-0 series to order `k0` (potential and electron density to
    /// the same order) and, if order-1 data is given, ion order-1 series to
    /// order `k1 <= k0 - 1` with `phi1` to order `min(k1, k0 - 2)`.
    fn jets(&self, y: &[Field<T>], k0: usize, k1: Option<usize>) -> Result<ZeroElectronJets<T>> {
        let (law_e, law_i) = (&self.laws.electron, &self.laws.ion);
        let mut n = Series::new(vec![y[0].clone()]);
        let mut u = Series::new(vec![y[1].clone()]);
        let mut phi = Series::new(vec![self.leading_phi(&y[0])?]);
        for k in 0..k0 {
            extend_boltzmann_series(&mut phi, &n, self.lambda, law_e, self.linear)?;
            let h = law_i.enthalpy_series(&n);
            let inv = lit::<T>(1.0 / (k as f64 + 1.0));
            let dn = n.mul(&u).coeff(k).dx().scale(-inv);
            let du = (u.mul(&u.dx()).coeff(k) + (h.coeff(k) + phi.coeff(k)).dx()).scale(-inv);
            n.push(dn);
            u.push(du);
        }
        extend_boltzmann_series(&mut phi, &n, self.lambda, law_e, self.linear)?;
        let n_e = law_e.enthalpy_inverse_series(&phi);

        let order1 = match k1 {
            Some(k1) => {
                assert!(k0 >= 2 && k1 < k0, "order-1 jets need deeper order-0 jets");
                let (p_e0, _) = electron_leading(&n_e, self.mean_u_e0);
                let p_e0 = p_e0.expect("k0 >= 2");
                let b = law_e.inverse_enthalpy_derivative_series(&n_e);
                let hi_prime = law_i.enthalpy_derivative_series(&n);
                let bp = b.mul(&p_e0);
                let mut n1 = Series::new(vec![y[2].clone()]);
                let mut u1 = Series::new(vec![y[3].clone()]);
                let mut phi1: Vec<Field<T>> = Vec::new();
                for k in 0..=k1 {
                    if k <= k0 - 2 {
                        let mut rhs = n1.coeff(k) - bp.coeff(k);
                        for j in 1..=k {
                            rhs -= &(b.coeff(j) * &phi1[k - j]);
                        }
                        phi1.push(solve_screened(b.coeff(0), &rhs, self.lambda, self.linear)?);
                    }
                    if k < k1 {
                        let phi1s = Series::new(phi1.clone());
                        let inv = lit::<T>(1.0 / (k as f64 + 1.0));
                        let flux = n.mul(&u1).add(&n1.mul(&u));
                        let dn = flux.coeff(k).dx().scale(-inv);
                        let adv = u.mul(&u1).coeff(k).dx();
                        let force = (hi_prime.mul(&n1).coeff(k) + phi1s.coeff(k)).dx();
                        let du = (adv + force).scale(-inv);
                        n1.push(dn);
                        u1.push(du);
                    }
                }
                Some(Order1Jets {
                    n_i1: n1,
                    u_i1: u1,
                    phi1: Series::new(phi1),
                })
            }
            None => None,
        };
        Ok(ZeroElectronJets {
            n_i0: n,
            u_i0: u,
            phi0: phi,
            n_e0: n_e,
            order1,
        })
    }
}

/// `P_e0` (order `K-2`, if available) and `u_e0` (order `K-1`) from the
/// electron density series of order `K`.
fn electron_leading<T: Real>(n_e: &Series<T>, mean_u: T) -> (Option<Series<T>>, Series<T>) {
    let r = n_e.recip();
    let g = antiderivative_series(&n_e.shift_derivative()).neg();
    let u = velocity_with_mean(&g, &r, mean_u);
    let p = pressure_multiplier(&u, &u.mul(&u.dx()));
    (p, u)
}

/// Mean-zero `P` with `P' = -(u_t + a)`, where `a` is the advective term.
fn pressure_multiplier<T: Real>(u: &Series<T>, adv: &Series<T>) -> Option<Series<T>> {
    if u.order() == 0 {
        return None;
    }
    let dt = u.shift_derivative();
    Some(antiderivative_series(&dt.add(adv)).neg())
}

impl<T: Real> Evolution<T> for ZeroElectronSystem<'_, T> {
    fn rhs(&self, _t: T, y: &[Field<T>]) -> Result<Vec<Field<T>>> {
        let jets = if self.with_order1 {
            self.jets(y, 2, Some(1))?
        } else {
            self.jets(y, 1, None)?
        };
        let mut out = vec![jets.n_i0.coeff(1).clone(), jets.u_i0.coeff(1).clone()];
        if let Some(o1) = jets.order1 {
            out.push(o1.n_i1.coeff(1).clone());
            out.push(o1.u_i1.coeff(1).clone());
        }
        Ok(out)
    }

    /// Ion-acoustic speed with Boltzmann electrons, `p_i'(n_i) + n_i h_e'(n_e)`.
    fn max_wave_speed(&self, _t: T, y: &[Field<T>]) -> T {
        let (n, u) = (&y[0], &y[1]);
        n.values()
            .iter()
            .zip(u.values())
            .fold(T::zero(), |acc, (&n, &u)| {
                let c2 = self.laws.ion.pressure_derivative(n)
                    + n * self.laws.electron.enthalpy_derivative(n);
                acc.max(u.abs() + c2.sqrt())
            })
    }

    fn validate(&self, t: T, y: &[Field<T>]) -> Result<()> {
        floor_check(&y[0], "ion", t)
    }
}

fn zero_electron_samples<T: Real>(
    sys: &ZeroElectronSystem<'_, T>,
    y: &[Field<T>],
    mean_u_e1: T,
) -> Result<Vec<ProfileSample<T>>> {
    let laws = sys.laws;
    let k0 = if sys.with_order1 { 4 } else { 2 };
    let jets = sys.jets(y, k0, sys.with_order1.then_some(2))?;
    let (p_e0, u_e0) = electron_leading(&jets.n_e0, sys.mean_u_e0);
    let p_e0 = p_e0.expect("k0 >= 2");
    let first = |s: &Series<T>| s.coeff(1).clone();
    let zero = ProfileSample {
        n_e: jets.n_e0.coeff(0).clone(),
        u_e: u_e0.coeff(0).clone(),
        n_i: jets.n_i0.coeff(0).clone(),
        u_i: jets.u_i0.coeff(0).clone(),
        phi: jets.phi0.coeff(0).clone(),
        p_e: Some(p_e0.coeff(0).clone()),
        dn_e: first(&jets.n_e0),
        du_e: first(&u_e0),
        dn_i: first(&jets.n_i0),
        du_i: first(&jets.u_i0),
    };
    let mut out = vec![zero];
    if let Some(o1) = &jets.order1 {
        // n_e1 = b (P_e0 + phi1), order 2
        let b = laws.electron.inverse_enthalpy_derivative_series(&jets.n_e0);
        let n_e1 = b.mul(&p_e0.add(&o1.phi1));
        let r = jets.n_e0.recip();
        let g1 = antiderivative_series(&n_e1.shift_derivative()).neg();
        let numer = g1.sub(&n_e1.mul(&u_e0));
        let u_e1 = velocity_with_mean(&numer, &r, mean_u_e1);
        let p_e1 = pressure_multiplier(&u_e1, &u_e0.mul(&u_e1).dx()).expect("order-1 velocity jet");
        out.push(ProfileSample {
            n_e: n_e1.coeff(0).clone(),
            u_e: u_e1.coeff(0).clone(),
            n_i: o1.n_i1.coeff(0).clone(),
            u_i: o1.u_i1.coeff(0).clone(),
            phi: o1.phi1.coeff(0).clone(),
            p_e: Some(p_e1.coeff(0).clone()),
            dn_e: first(&n_e1),
            du_e: first(&u_e1),
            dn_i: first(&o1.n_i1),
            du_i: first(&o1.u_i1),
        });
    }
    Ok(out)
}

fn run_zero_electron<T: Real>(
    init0: &ZeroElectronData<T>,
    init1: Option<&ZeroElectronData<T>>,
    laws: &SpeciesLaws<T>,
    lambda: T,
    t_end: T,
    opts: &ProfileOptions,
) -> Result<ProfileSet<T>> {
    let times = check_times(t_end, opts)?;
    if !(init0.n_i.min() > T::zero()) {
        return Err(Error::Domain("leading ion density must be positive".into()));
    }
    let sys = ZeroElectronSystem {
        laws,
        lambda,
        linear: opts.linear,
        mean_u_e0: init0.mean_u_e,
        with_order1: init1.is_some(),
    };
    let mut y0 = vec![init0.n_i.clone(), init0.u_i.clone()];
    if let Some(d) = init1 {
        y0.push(d.n_i.clone());
        y0.push(d.u_i.clone());
    }
    let states = evolve(&sys, y0, &times, &opts.stepper)?;
    let mean1 = init1.map_or(T::zero(), |d| d.mean_u_e);
    let order = usize::from(init1.is_some());
    let mut orders: Vec<Vec<ProfileSample<T>>> = vec![Vec::new(); order + 1];
    for y in &states {
        for (j, s) in zero_electron_samples(&sys, y, mean1)?
            .into_iter()
            .enumerate()
        {
            orders[j].push(s);
        }
    }
    Ok(ProfileSet {
        limit: MassLimit::ZeroElectronMass,
        laws: *laws,
        lambda,
        times,
        orders,
        options: *opts,
    })
}

/// Order-0 profiles of the zero-electron-mass limit.
pub fn solve_zero_electron_leading<T: Real>(
    init: &ZeroElectronData<T>,
    laws: &SpeciesLaws<T>,
    lambda: T,
    t_end: T,
    opts: &ProfileOptions,
) -> Result<ProfileSet<T>> {
    run_zero_electron(init, None, laws, lambda, t_end, opts)
}

/// Adds the order-1 profiles. Order 0 is integrated again from its initial
/// samples, jointly with order 1, so that every stage sees consistent data.
pub fn solve_zero_electron_order1<T: Real>(
    order0: &ProfileSet<T>,
    init1: &ZeroElectronData<T>,
) -> Result<ProfileSet<T>> {
    if order0.limit != MassLimit::ZeroElectronMass {
        return Err(Error::Domain(
            "order-0 profiles belong to the other limit".into(),
        ));
    }
    let init0 = order0.zero_electron_data(0);
    run_zero_electron(
        &init0,
        Some(init1),
        &order0.laws,
        order0.lambda,
        order0.t_end(),
        &order0.options,
    )
}

struct InfinityIonSystem<'a, T: Real> {
    laws: &'a SpeciesLaws<T>,
    lambda: T,
    /// Minimum slope of the initial ion velocity, for the crossing monitor.
    min_slope: T,
    with_order1: bool,
}

impl<T: Real> InfinityIonSystem<'_, T> {
    fn potential(&self, n_e: &Field<T>, n_i: &Field<T>, scale: T) -> Result<Field<T>> {
        let charge = n_i - n_e;
        let tol = lit::<T>(NEUTRALITY_TOL) * scale;
        if charge.integral().abs() > tol {
            return Err(Error::Compatibility {
                mean: to_f64(charge.mean()),
                tolerance: to_f64(tol / n_i.grid().length()),
            });
        }
        solve_poisson(&charge.zero_mean(), self.lambda)
    }

    fn phis(&self, y: &[Field<T>]) -> Result<(Field<T>, Option<Field<T>>)> {
        let scale = y[0].integral().abs();
        let phi0 = self.potential(&y[2], &y[0], scale)?;
        let phi1 = if self.with_order1 {
            Some(self.potential(&y[6], &y[4], scale)?)
        } else {
            None
        };
        Ok((phi0, phi1))
    }

    fn tendencies(
        &self,
        y: &[Field<T>],
        phi0: &Field<T>,
        phi1: Option<&Field<T>>,
    ) -> Result<Vec<Field<T>>> {
        let (law_e, law_i) = (&self.laws.electron, &self.laws.ion);
        let (n_i0, u_i0, n_e0, u_e0) = (&y[0], &y[1], &y[2], &y[3]);
        let mut out = vec![
            -(n_i0 * u_i0).dx(),
            -(u_i0 * &u_i0.dx()),
            -(n_e0 * u_e0).dx(),
            -(u_e0 * &u_e0.dx()) - (law_e.enthalpy_field(n_e0)? - phi0).dx(),
        ];
        if let Some(phi1) = phi1 {
            let (n_i1, u_i1, n_e1, u_e1) = (&y[4], &y[5], &y[6], &y[7]);
            let source = (law_i.enthalpy_field(n_i0)? + phi0).dx();
            out.push(-(n_i0 * u_i1 + n_i1 * u_i0).dx());
            out.push(-(u_i0 * u_i1).dx() - source);
            out.push(-(n_e0 * u_e1 + n_e1 * u_e0).dx());
            let pressure = law_e.enthalpy_derivative_field(n_e0) * n_e1 - phi1;
            out.push(-(u_e0 * u_e1).dx() - pressure.dx());
        }
        Ok(out)
    }
}

impl<T: Real> Evolution<T> for InfinityIonSystem<'_, T> {
    fn rhs(&self, _t: T, y: &[Field<T>]) -> Result<Vec<Field<T>>> {
        let (phi0, phi1) = self.phis(y)?;
        self.tendencies(y, &phi0, phi1.as_ref())
    }

    fn max_wave_speed(&self, _t: T, y: &[Field<T>]) -> T {
        let ion = y[1].max_abs();
        let law = &self.laws.electron;
        y[2].values()
            .iter()
            .zip(y[3].values())
            .fold(ion, |acc, (&n, &u)| {
                acc.max(u.abs() + law.pressure_derivative(n).sqrt())
            })
    }

    fn validate(&self, t: T, y: &[Field<T>]) -> Result<()> {
        let margin = T::one() + t * self.min_slope;
        if !(margin > T::zero()) {
            return Err(Error::CharacteristicCrossing {
                time: to_f64(t),
                margin: to_f64(margin),
            });
        }
        floor_check(&y[0], "ion", t)?;
        floor_check(&y[2], "electron", t)
    }
}

fn run_infinity_ion<T: Real>(
    init0: &InfinityIonData<T>,
    init1: Option<&InfinityIonData<T>>,
    laws: &SpeciesLaws<T>,
    lambda: T,
    t_end: T,
    opts: &ProfileOptions,
) -> Result<ProfileSet<T>> {
    let times = check_times(t_end, opts)?;
    let min_slope = init0.u_i.dx().min();
    let margin = T::one() + t_end * min_slope;
    if !(margin > T::zero()) {
        return Err(Error::CharacteristicCrossing {
            time: to_f64(t_end),
            margin: to_f64(margin),
        });
    }
    let sys = InfinityIonSystem {
        laws,
        lambda,
        min_slope,
        with_order1: init1.is_some(),
    };
    let mut y0 = vec![
        init0.n_i.clone(),
        init0.u_i.clone(),
        init0.n_e.clone(),
        init0.u_e.clone(),
    ];
    if let Some(d) = init1 {
        y0.extend([d.n_i.clone(), d.u_i.clone(), d.n_e.clone(), d.u_e.clone()]);
    }
    let states = evolve(&sys, y0, &times, &opts.stepper)?;
    let order = usize::from(init1.is_some());
    let mut orders: Vec<Vec<ProfileSample<T>>> = vec![Vec::new(); order + 1];
    for y in &states {
        let (phi0, phi1) = sys.phis(y)?;
        let d = sys.tendencies(y, &phi0, phi1.as_ref())?;
        let phis = [Some(phi0), phi1];
        for j in 0..=order {
            let b = 4 * j;
            orders[j].push(ProfileSample {
                n_i: y[b].clone(),
                u_i: y[b + 1].clone(),
                n_e: y[b + 2].clone(),
                u_e: y[b + 3].clone(),
                phi: phis[j].clone().expect("potential of every order"),
                p_e: None,
                dn_i: d[b].clone(),
                du_i: d[b + 1].clone(),
                dn_e: d[b + 2].clone(),
                du_e: d[b + 3].clone(),
            });
        }
    }
    Ok(ProfileSet {
        limit: MassLimit::InfinityIonMass,
        laws: *laws,
        lambda,
        times,
        orders,
        options: *opts,
    })
}

/// Order-0 profiles of the infinity-ion-mass limit.
pub fn solve_infinity_ion_leading<T: Real>(
    init: &InfinityIonData<T>,
    laws: &SpeciesLaws<T>,
    lambda: T,
    t_end: T,
    opts: &ProfileOptions,
) -> Result<ProfileSet<T>> {
    run_infinity_ion(init, None, laws, lambda, t_end, opts)
}

/// Adds the order-1 profiles, re-integrating order 0 jointly.
pub fn solve_infinity_ion_order1<T: Real>(
    order0: &ProfileSet<T>,
    init1: &InfinityIonData<T>,
) -> Result<ProfileSet<T>> {
    if order0.limit != MassLimit::InfinityIonMass {
        return Err(Error::Domain(
            "order-0 profiles belong to the other limit".into(),
        ));
    }
    let init0 = order0.infinity_ion_data(0);
    run_infinity_ion(
        &init0,
        Some(init1),
        &order0.laws,
        order0.lambda,
        order0.t_end(),
        &order0.options,
    )
}

#[derive(Serialize, Deserialize)]
struct LawEntry {
    a: f64,
    gamma: f64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    schema: u32,
    regime: MassLimit,
    order: usize,
    lambda: f64,
    electron: LawEntry,
    ion: LawEntry,
    n_points: usize,
    length: f64,
    times: Vec<f64>,
    n_samples: usize,
    cfl: f64,
    variables: Vec<String>,
}

fn law_entry<T: Real>(law: &GasLaw<T>) -> LawEntry {
    LawEntry {
        a: to_f64(law.a()),
        gamma: to_f64(law.gamma()),
    }
}

fn file_name(order: usize, k: usize, var: &str) -> String {
    format!("o{order}_s{k:04}_{var}.bin")
}

impl<T: Real> ProfileSet<T> {
    /// Writes one binary checkpoint per field plus `manifest.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let grid = self.grid();
        let mut variables: Vec<String> = FIELD_NAMES.iter().map(|s| s.to_string()).collect();
        if self.limit == MassLimit::ZeroElectronMass {
            variables.push("p_e".into());
        }
        let manifest = Manifest {
            schema: 1,
            regime: self.limit,
            order: self.order(),
            lambda: to_f64(self.lambda),
            electron: law_entry(&self.laws.electron),
            ion: law_entry(&self.laws.ion),
            n_points: grid.n_points(),
            length: to_f64(grid.length()),
            times: self.times.iter().map(|&t| to_f64(t)).collect(),
            n_samples: self.options.n_samples,
            cfl: self.options.stepper.cfl,
            variables,
        };
        let out = BufWriter::new(File::create(dir.join("manifest.json"))?);
        serde_json::to_writer_pretty(out, &manifest).map_err(|e| Error::Format(e.to_string()))?;
        for (j, samples) in self.orders.iter().enumerate() {
            for (k, s) in samples.iter().enumerate() {
                for (name, f) in FIELD_NAMES.iter().zip(s.fields()) {
                    f.write_checkpoint(BufWriter::new(File::create(
                        dir.join(file_name(j, k, name)),
                    )?))?;
                }
                if let Some(p) = &s.p_e {
                    p.write_checkpoint(BufWriter::new(File::create(
                        dir.join(file_name(j, k, "p_e")),
                    )?))?;
                }
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let file = File::open(dir.join("manifest.json"))?;
        let m: Manifest = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Format(e.to_string()))?;
        if m.schema != 1 {
            return Err(Error::Format(format!(
                "unsupported manifest schema {}",
                m.schema
            )));
        }
        let grid = Grid::new(m.n_points, lit::<T>(m.length))?;
        let read = |j: usize, k: usize, var: &str| -> Result<Field<T>> {
            let f = File::open(dir.join(file_name(j, k, var)))?;
            Field::read_checkpoint(BufReader::new(f), Some(&grid))
        };
        let with_p = m.variables.iter().any(|v| v == "p_e");
        let mut orders = Vec::new();
        for j in 0..=m.order {
            let mut samples = Vec::new();
            for k in 0..m.times.len() {
                let fields = FIELD_NAMES
                    .iter()
                    .map(|v| read(j, k, v))
                    .collect::<Result<Vec<_>>>()?;
                let p = if with_p {
                    Some(read(j, k, "p_e")?)
                } else {
                    None
                };
                samples.push(ProfileSample::from_fields(fields, p));
            }
            orders.push(samples);
        }
        let law = |e: &LawEntry| GasLaw::new(lit::<T>(e.a), lit::<T>(e.gamma));
        Ok(Self {
            limit: m.regime,
            laws: SpeciesLaws {
                electron: law(&m.electron)?,
                ion: law(&m.ion)?,
            },
            lambda: lit(m.lambda),
            times: m.times.iter().map(|&t| lit(t)).collect(),
            orders,
            options: ProfileOptions {
                n_samples: m.n_samples,
                stepper: StepperOptions {
                    cfl: m.cfl,
                    ..StepperOptions::default()
                },
                linear: LinearOptions::default(),
            },
        })
    }
}
