//! Truncated expansions `sum_j eps^(2j) profile_j`, their remainders in the
//! bipolar equations, and well-prepared initial data.

use crate::dynamics::{rhs_with_potential, BipolarState, FluidState};
use crate::error::{Error, Result};
use crate::gaslaw::{MassLimit, ScalingParams};
use crate::grid::Field;
use crate::profiles::{ProfileSample, ProfileSet};
use crate::scalar::{lit, to_f64, Real};

/// Approximate fields and their exact time derivatives at one instant.
#[derive(Clone, Debug)]
pub struct Approximation<T: Real> {
    pub state: BipolarState<T>,
    pub dn_e: Field<T>,
    pub du_e: Field<T>,
    pub dn_i: Field<T>,
    pub du_i: Field<T>,
}

/// Locates `t` on the sample grid: `(k, w)` with `t = (1 - w) t_k + w t_{k+1}`.
fn locate<T: Real>(times: &[T], t: T) -> Result<(usize, T)> {
    let (start, end) = (times[0], *times.last().expect("non-empty time grid"));
    if !(t >= start && t <= end) {
        return Err(Error::OutOfRange {
            time: to_f64(t),
            start: to_f64(start),
            end: to_f64(end),
        });
    }
    if let Some(k) = times.iter().position(|&s| s == t) {
        return Ok((k, T::zero()));
    }
    let k = times.partition_point(|&s| s <= t) - 1;
    Ok((k, (t - times[k]) / (times[k + 1] - times[k])))
}

fn blend<T: Real>(a: &Field<T>, b: Option<&Field<T>>, w: T) -> Field<T> {
    match b {
        Some(b) if w != T::zero() => a.scale(T::one() - w).axpy(w, b),
        _ => a.clone(),
    }
}

fn interpolate<T: Real>(
    samples: &[ProfileSample<T>],
    k: usize,
    w: T,
    pick: impl Fn(&ProfileSample<T>) -> &Field<T>,
) -> Field<T> {
    blend(pick(&samples[k]), samples.get(k + 1).map(&pick), w)
}

/// `sum_j eps^(2j) f_j`, with linear interpolation between samples.
fn expand<T: Real>(
    profiles: &ProfileSet<T>,
    eps: T,
    k: usize,
    w: T,
    pick: impl Fn(&ProfileSample<T>) -> &Field<T> + Copy,
) -> Field<T> {
    let z = eps * eps;
    let mut weight = T::one();
    let mut acc = interpolate(&profiles.orders[0], k, w, pick);
    for order in &profiles.orders[1..] {
        weight = weight * z;
        acc = acc.axpy(weight, &interpolate(order, k, w, pick));
    }
    acc
}

pub fn approximation<T: Real>(profiles: &ProfileSet<T>, eps: T, t: T) -> Result<Approximation<T>> {
    if !(eps >= T::zero()) {
        return Err(Error::Domain(format!("eps must be nonnegative, got {eps}")));
    }
    let (k, w) = locate(&profiles.times, t)?;
    let f = |pick: fn(&ProfileSample<T>) -> &Field<T>| expand(profiles, eps, k, w, pick);
    let state = BipolarState {
        electron: FluidState::new(f(|s| &s.n_e), f(|s| &s.u_e)),
        ion: FluidState::new(f(|s| &s.n_i), f(|s| &s.u_i)),
        phi: f(|s| &s.phi),
        time: t,
    };
    Ok(Approximation {
        state,
        dn_e: f(|s| &s.dn_e),
        du_e: f(|s| &s.du_e),
        dn_i: f(|s| &s.dn_i),
        du_i: f(|s| &s.du_i),
    })
}

/// Approximate solution at time `t`; the potential is the expanded one, not re-solved.
pub fn build_approximate<T: Real>(
    profiles: &ProfileSet<T>,
    eps: T,
    t: T,
) -> Result<BipolarState<T>> {
    Ok(approximation(profiles, eps, t)?.state)
}

/// Remainders of the four evolution equations.
#[derive(Clone, Debug)]
pub struct Residual<T: Real> {
    pub n_e: Field<T>,
    pub u_e: Field<T>,
    pub n_i: Field<T>,
    pub u_i: Field<T>,
}

impl<T: Real> Residual<T> {
    pub fn fields(&self) -> [&Field<T>; 4] {
        [&self.n_e, &self.u_e, &self.n_i, &self.u_i]
    }

    /// `sqrt(sum ||R||_s^2)` over the four equations.
    pub fn norm(&self, s: u32) -> T {
        self.fields()
            .iter()
            .fold(T::zero(), |acc, f| {
                let n = f.sobolev_norm(s);
                acc + n * n
            })
            .sqrt()
    }
}

pub fn scaling_for<T: Real>(profiles: &ProfileSet<T>, eps: T) -> Result<ScalingParams<T>> {
    ScalingParams::new(profiles.limit, eps, profiles.lambda)
}

/// Remainders with the normalization of the convergence analysis.
///
/// Zero-electron limit: the electron momentum remainder is multiplied by
/// `eps^2`, so that it reads `eps^2 (u_t + u u') + (h_e(n_e) - phi)'`.
/// Infinity-ion limit: the ion momentum remainder reads
/// `u_t + u u' + eps^2 (h_i(n_i) + phi)'`.
pub fn residual<T: Real>(profiles: &ProfileSet<T>, eps: T, t: T) -> Result<Residual<T>> {
    let a = approximation(profiles, eps, t)?;
    let laws = &profiles.laws;
    let z = eps * eps;
    let (e, i, phi) = (&a.state.electron, &a.state.ion, &a.state.phi);
    let continuity = |dn: &Field<T>, s: &FluidState<T>| dn + &(&s.n * &s.u).dx();
    let inertia = |du: &Field<T>, s: &FluidState<T>| du + &(&s.u * &s.u.dx());
    let force_e = (laws.electron.enthalpy_field(&e.n)? - phi).dx();
    let force_i = (laws.ion.enthalpy_field(&i.n)? + phi).dx();
    let (u_e, u_i) = match profiles.limit {
        MassLimit::ZeroElectronMass => (
            inertia(&a.du_e, e).scale(z) + force_e,
            inertia(&a.du_i, i) + force_i,
        ),
        MassLimit::InfinityIonMass => (
            inertia(&a.du_e, e) + force_e,
            inertia(&a.du_i, i).axpy(z, &force_i),
        ),
    };
    Ok(Residual {
        n_e: continuity(&a.dn_e, e),
        u_e,
        n_i: continuity(&a.dn_i, i),
        u_i,
    })
}

/// The same remainders from the bipolar right-hand side: stored time
/// derivative minus the tendency, rescaled by the species mass where needed.
pub fn residual_via_bipolar_rhs<T: Real>(
    profiles: &ProfileSet<T>,
    eps: T,
    t: T,
) -> Result<Residual<T>> {
    let a = approximation(profiles, eps, t)?;
    let params = scaling_for(profiles, eps)?;
    let k = rhs_with_potential(&a.state, &params, &profiles.laws)?;
    let (m_e, m_i) = params.masses();
    let (we, wi) = match profiles.limit {
        MassLimit::ZeroElectronMass => (m_e, T::one()),
        MassLimit::InfinityIonMass => (T::one(), m_i * eps * eps),
    };
    Ok(Residual {
        n_e: &a.dn_e - &k.dn_e,
        u_e: (&a.du_e - &k.du_e).scale(we),
        n_i: &a.dn_i - &k.dn_i,
        u_i: (&a.du_i - &k.du_i).scale(wi),
    })
}

/// Fixed smooth shape of the initial velocity perturbation, unit `H^s` norm.
pub fn perturbation_shape<T: Real>(
    grid: &std::sync::Arc<crate::grid::Grid<T>>,
    s: u32,
) -> Field<T> {
    let tau = lit::<T>(2.0 * std::f64::consts::PI) / grid.length();
    let f = Field::from_fn(grid, |x| {
        (tau * x).sin() + lit::<T>(0.5) * (lit::<T>(2.0) * tau * x + lit(0.3)).cos()
    });
    let norm = f.sobolev_norm(s);
    f.scale(T::one() / norm)
}

/// Exponent `q` of the initial mismatch allowed by the convergence estimates.
pub fn hypothesis_exponent(limit: MassLimit, m: usize) -> i32 {
    match limit {
        MassLimit::ZeroElectronMass => 2 * m as i32 + 1,
        MassLimit::InfinityIonMass => 2 * m as i32 + 2,
    }
}

/// Expansion at `t = 0` plus an ion-velocity perturbation whose weighted
/// size in the convergence hypothesis equals `perturbation_scale * eps^q`: the
/// plain `H^s` norm in the zero-electron limit and the norm divided by `eps`
/// in the infinity-ion limit. The potential is solved from the densities.
pub fn well_prepared_initial<T: Real>(
    profiles: &ProfileSet<T>,
    eps: T,
    perturbation_scale: T,
    s: u32,
) -> Result<BipolarState<T>> {
    if !(perturbation_scale >= T::zero()) {
        return Err(Error::Domain(format!(
            "perturbation scale must be nonnegative, got {perturbation_scale}"
        )));
    }
    let base = build_approximate(profiles, eps, profiles.times[0])?;
    let q = hypothesis_exponent(profiles.limit, profiles.order());
    let weight = match profiles.limit {
        MassLimit::ZeroElectronMass => T::one(),
        MassLimit::InfinityIonMass => eps,
    };
    let amplitude = perturbation_scale * eps.powi(q) * weight;
    let mut ion = base.ion;
    if amplitude != T::zero() {
        ion.u = ion
            .u
            .axpy(amplitude, &perturbation_shape(profiles.grid(), s));
    }
    BipolarState::new(base.electron, ion, profiles.lambda, base.time)
}
