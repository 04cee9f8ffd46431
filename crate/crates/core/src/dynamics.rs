//! Full bipolar Euler-Poisson dynamics in enthalpy form and the explicit
//! time stepper shared with the limit-profile solvers.
//!
//! ```text
//! n_t + (n u)' = 0
//! u_e,t + u_e u_e' + (h_e(n_e) - phi)' / m_e = 0
//! u_i,t + u_i u_i' + (h_i(n_i) + phi)' / m_i = 0
//! -lambda^2 phi'' = n_i - n_e
//! ```

use crate::elliptic::solve_poisson;
use crate::error::{Error, Result};
use crate::gaslaw::{GasLaw, ScalingParams, SpeciesLaws};
use crate::grid::Field;
use crate::scalar::{lit, to_f64, Real};

/// Densities below this abort the run.
pub const DENSITY_FLOOR: f64 = 1e-8;
/// Any field whose sup norm exceeds this is treated as blow-up.
pub const BLOWUP_NORM: f64 = 1e6;
/// Relative neutrality tolerance `|int (n_i - n_e)| <= tol * int n_i`.
pub const NEUTRALITY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct FluidState<T: Real> {
    pub n: Field<T>,
    pub u: Field<T>,
}

impl<T: Real> FluidState<T> {
    pub fn new(n: Field<T>, u: Field<T>) -> Self {
        Self { n, u }
    }

    pub fn at_rest(n: Field<T>) -> Self {
        let u = Field::zeros(n.grid());
        Self { n, u }
    }

    pub fn mass(&self) -> T {
        self.n.integral()
    }
}

#[derive(Clone, Debug)]
pub struct BipolarState<T: Real> {
    pub electron: FluidState<T>,
    pub ion: FluidState<T>,
    pub phi: Field<T>,
    pub time: T,
}

impl<T: Real> BipolarState<T> {
    /// Assembles a state, solving the potential from the densities.
    pub fn new(electron: FluidState<T>, ion: FluidState<T>, lambda: T, time: T) -> Result<Self> {
        let phi = solve_potential(&electron.n, &ion.n, lambda)?;
        Ok(Self {
            electron,
            ion,
            phi,
            time,
        })
    }

    pub fn equilibrium(grid: &std::sync::Arc<crate::grid::Grid<T>>) -> Self {
        let rest = FluidState::at_rest(Field::constant(grid, T::one()));
        Self {
            electron: rest.clone(),
            ion: rest,
            phi: Field::zeros(grid),
            time: T::zero(),
        }
    }

    /// `int (n_i - n_e)`.
    pub fn net_charge(&self) -> T {
        (&self.ion.n - &self.electron.n).integral()
    }

    fn components(&self) -> Vec<Field<T>> {
        vec![
            self.electron.n.clone(),
            self.electron.u.clone(),
            self.ion.n.clone(),
            self.ion.u.clone(),
        ]
    }

    fn from_components(mut y: Vec<Field<T>>, lambda: T, time: T) -> Result<Self> {
        let u_i = y.pop().expect("four components");
        let n_i = y.pop().expect("four components");
        let u_e = y.pop().expect("four components");
        let n_e = y.pop().expect("four components");
        Self::new(
            FluidState::new(n_e, u_e),
            FluidState::new(n_i, u_i),
            lambda,
            time,
        )
    }
}

/// Mean-zero potential of the charge density `n_i - n_e`.
///
/// Global neutrality is checked against the ion mass; the residual mean
/// (roundoff) is then projected out so that the strict Poisson
/// compatibility test always applies to an exactly neutral source.
pub fn solve_potential<T: Real>(n_e: &Field<T>, n_i: &Field<T>, lambda: T) -> Result<Field<T>> {
    let charge = n_i - n_e;
    let net = charge.integral();
    let tol = lit::<T>(NEUTRALITY_TOL) * n_i.integral().abs();
    if net.abs() > tol {
        return Err(Error::Compatibility {
            mean: to_f64(charge.mean()),
            tolerance: to_f64(tol / n_i.grid().length()),
        });
    }
    solve_poisson(&charge.zero_mean(), lambda)
}

#[derive(Clone, Debug)]
pub struct Tendencies<T: Real> {
    pub dn_e: Field<T>,
    pub du_e: Field<T>,
    pub dn_i: Field<T>,
    pub du_i: Field<T>,
}

fn check_floor<T: Real>(n: &Field<T>, species: &'static str, time: T) -> Result<()> {
    let min = n.min();
    if min >= lit(DENSITY_FLOOR) {
        Ok(())
    } else {
        Err(Error::DensityFloor {
            species,
            min: to_f64(min),
            floor: DENSITY_FLOOR,
            time: to_f64(time),
        })
    }
}

fn species_tendency<T: Real>(
    n: &Field<T>,
    u: &Field<T>,
    law: &GasLaw<T>,
    potential: &Field<T>,
    mass: T,
) -> Result<(Field<T>, Field<T>)> {
    let dn = -(n * u).dx();
    let force = (law.enthalpy_field(n)? + potential)
        .dx()
        .scale(T::one() / mass);
    let du = -(u * &u.dx()) - force;
    Ok((dn, du))
}

fn tendencies_from<T: Real>(
    y: &[Field<T>],
    phi: &Field<T>,
    params: &ScalingParams<T>,
    laws: &SpeciesLaws<T>,
) -> Result<Tendencies<T>> {
    let (m_e, m_i) = params.masses();
    let (dn_e, du_e) = species_tendency(&y[0], &y[1], &laws.electron, &(-phi), m_e)?;
    let (dn_i, du_i) = species_tendency(&y[2], &y[3], &laws.ion, phi, m_i)?;
    Ok(Tendencies {
        dn_e,
        du_e,
        dn_i,
        du_i,
    })
}

/// Tendencies of the bipolar system with the potential re-solved from the densities.
pub fn rhs_bipolar<T: Real>(
    state: &BipolarState<T>,
    params: &ScalingParams<T>,
    laws: &SpeciesLaws<T>,
) -> Result<Tendencies<T>> {
    check_floor(&state.electron.n, "electron", state.time)?;
    check_floor(&state.ion.n, "ion", state.time)?;
    let phi = solve_potential(&state.electron.n, &state.ion.n, params.lambda())?;
    tendencies_from(&state.components(), &phi, params, laws)
}

/// Tendencies using the potential stored in `state` instead of re-solving it.
pub fn rhs_with_potential<T: Real>(
    state: &BipolarState<T>,
    params: &ScalingParams<T>,
    laws: &SpeciesLaws<T>,
) -> Result<Tendencies<T>> {
    tendencies_from(&state.components(), &state.phi, params, laws)
}

fn species_speed<T: Real>(n: &Field<T>, u: &Field<T>, law: &GasLaw<T>, mass: T) -> T {
    n.values()
        .iter()
        .zip(u.values())
        .fold(T::zero(), |acc, (&n, &u)| {
            acc.max(u.abs() + (law.pressure_derivative(n) / mass).sqrt())
        })
}

/// `max |u_nu| + sqrt(p_nu'(n_nu) / m_nu)` over species and nodes.
pub fn max_wave_speed<T: Real>(
    state: &BipolarState<T>,
    params: &ScalingParams<T>,
    laws: &SpeciesLaws<T>,
) -> T {
    let (m_e, m_i) = params.masses();
    species_speed(&state.electron.n, &state.electron.u, &laws.electron, m_e).max(species_speed(
        &state.ion.n,
        &state.ion.u,
        &laws.ion,
        m_i,
    ))
}

/// A system `y' = f(t, y)` of periodic fields advanced by [`evolve`].
pub trait Evolution<T: Real> {
    fn rhs(&self, t: T, y: &[Field<T>]) -> Result<Vec<Field<T>>>;

    /// Largest characteristic speed, used for the CFL step.
    fn max_wave_speed(&self, t: T, y: &[Field<T>]) -> T;

    /// Called after every completed step; reject states here.
    fn validate(&self, _t: T, _y: &[Field<T>]) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StepperOptions {
    pub cfl: f64,
    /// Exponential filter on every stage tendency.
    pub filter: bool,
}

impl Default for StepperOptions {
    fn default() -> Self {
        Self {
            cfl: 0.4,
            filter: true,
        }
    }
}

/// `n + 1` uniformly spaced times `t_end * k / n`, shared by every solver so
/// that samples of different systems coincide bit for bit.
pub fn uniform_times<T: Real>(t_end: T, n: usize) -> Vec<T> {
    let n = n.max(1);
    (0..=n)
        .map(|k| t_end * lit::<T>(k as f64) / lit::<T>(n as f64))
        .collect()
}

fn check_bounded<T: Real>(t: T, y: &[Field<T>]) -> Result<()> {
    for (k, f) in y.iter().enumerate() {
        if !f.is_finite() || f.max_abs() > lit(BLOWUP_NORM) {
            return Err(Error::BlowUp {
                time: to_f64(t),
                reason: format!("component {k} reached sup norm {}", f.max_abs()),
            });
        }
    }
    Ok(())
}

fn stage<T: Real, E: Evolution<T>>(
    sys: &E,
    t: T,
    y: &[Field<T>],
    opts: &StepperOptions,
) -> Result<Vec<Field<T>>> {
    let k = sys.rhs(t, y)?;
    Ok(if opts.filter {
        k.iter().map(Field::filtered).collect()
    } else {
        k
    })
}

/// One Shu-Osher SSP-RK3 step.
pub fn ssp_rk3_step<T: Real, E: Evolution<T>>(
    sys: &E,
    t: T,
    y: &[Field<T>],
    dt: T,
    opts: &StepperOptions,
) -> Result<Vec<Field<T>>> {
    let k1 = stage(sys, t, y, opts)?;
    let y1: Vec<_> = y.iter().zip(&k1).map(|(a, k)| a.axpy(dt, k)).collect();
    check_bounded(t + dt, &y1)?;
    let k2 = stage(sys, t + dt, &y1, opts)?;
    let (q, h) = (lit::<T>(0.25), lit::<T>(0.75));
    let y2: Vec<_> = y
        .iter()
        .zip(y1.iter().zip(&k2))
        .map(|(a, (b, k))| a.scale(h) + b.axpy(dt, k).scale(q))
        .collect();
    check_bounded(t + lit::<T>(0.5) * dt, &y2)?;
    let k3 = stage(sys, t + lit::<T>(0.5) * dt, &y2, opts)?;
    let (third, two_thirds) = (lit::<T>(1.0 / 3.0), lit::<T>(2.0 / 3.0));
    Ok(y.iter()
        .zip(y2.iter().zip(&k3))
        .map(|(a, (b, k))| a.scale(third) + b.axpy(dt, k).scale(two_thirds))
        .collect())
}

/// Integrates from `times[0]` and returns the state at every entry of `times`.
pub fn evolve<T: Real, E: Evolution<T>>(
    sys: &E,
    y0: Vec<Field<T>>,
    times: &[T],
    opts: &StepperOptions,
) -> Result<Vec<Vec<Field<T>>>> {
    assert!(!times.is_empty(), "at least one sample time");
    let dx = y0[0].grid().dx();
    let cfl = lit::<T>(opts.cfl);
    let mut t = times[0];
    let mut y = y0;
    check_bounded(t, &y)?;
    sys.validate(t, &y)?;
    let mut out = vec![y.clone()];
    for &target in &times[1..] {
        while t < target {
            let speed = sys.max_wave_speed(t, &y).max(lit(1e-12));
            let remaining = target - t;
            let mut dt = cfl * dx / speed;
            if dt >= remaining {
                dt = remaining;
            } else if dt + dt > remaining {
                dt = remaining * lit(0.5);
            }
            y = ssp_rk3_step(sys, t, &y, dt, opts)?;
            t = if dt == remaining { target } else { t + dt };
            check_bounded(t, &y)?;
            sys.validate(t, &y)?;
        }
        out.push(y.clone());
    }
    Ok(out)
}

struct BipolarSystem<'a, T: Real> {
    params: &'a ScalingParams<T>,
    laws: &'a SpeciesLaws<T>,
}

impl<T: Real> Evolution<T> for BipolarSystem<'_, T> {
    fn rhs(&self, t: T, y: &[Field<T>]) -> Result<Vec<Field<T>>> {
        check_floor(&y[0], "electron", t)?;
        check_floor(&y[2], "ion", t)?;
        let phi = solve_potential(&y[0], &y[2], self.params.lambda())?;
        let k = tendencies_from(y, &phi, self.params, self.laws)?;
        Ok(vec![k.dn_e, k.du_e, k.dn_i, k.du_i])
    }

    fn max_wave_speed(&self, _t: T, y: &[Field<T>]) -> T {
        let (m_e, m_i) = self.params.masses();
        species_speed(&y[0], &y[1], &self.laws.electron, m_e).max(species_speed(
            &y[2],
            &y[3],
            &self.laws.ion,
            m_i,
        ))
    }

    fn validate(&self, t: T, y: &[Field<T>]) -> Result<()> {
        check_floor(&y[0], "electron", t)?;
        check_floor(&y[2], "ion", t)
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory<T: Real> {
    pub states: Vec<BipolarState<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn times(&self) -> Vec<T> {
        self.states.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> &BipolarState<T> {
        self.states.last().expect("non-empty trajectory")
    }
}

/// Integrates the bipolar system and samples it at `n_samples + 1` uniform times.
pub fn integrate<T: Real>(
    initial: &BipolarState<T>,
    params: &ScalingParams<T>,
    laws: &SpeciesLaws<T>,
    t_end: T,
    n_samples: usize,
    opts: &StepperOptions,
) -> Result<Trajectory<T>> {
    if !(t_end > initial.time) {
        return Err(Error::Domain(format!(
            "t_end = {t_end} must exceed the initial time {}",
            initial.time
        )));
    }
    let t0 = initial.time;
    let times: Vec<T> = uniform_times(t_end - t0, n_samples)
        .into_iter()
        .map(|t| t + t0)
        .collect();
    let sys = BipolarSystem { params, laws };
    let samples = evolve(&sys, initial.components(), &times, opts)?;
    let states = samples
        .into_iter()
        .zip(&times)
        .map(|(y, &t)| BipolarState::from_components(y, params.lambda(), t))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory { states })
}

/// Diagonal of the block symmetrizer `diag(h'(n), m n)` per species.
#[derive(Clone, Debug)]
pub struct SymmetrizerDiag<T: Real> {
    pub electron: (Field<T>, Field<T>),
    pub ion: (Field<T>, Field<T>),
}

impl<T: Real> SymmetrizerDiag<T> {
    /// The velocity weight `n` acts on the scaled velocity `sqrt(m) U`.
    pub fn new(n_e: &Field<T>, n_i: &Field<T>, laws: &SpeciesLaws<T>) -> Self {
        Self {
            electron: (laws.electron.enthalpy_derivative_field(n_e), n_e.clone()),
            ion: (laws.ion.enthalpy_derivative_field(n_i), n_i.clone()),
        }
    }

    pub fn min_weight(&self) -> T {
        [&self.electron.0, &self.electron.1, &self.ion.0, &self.ion.1]
            .iter()
            .fold(T::infinity(), |m, f| m.min(f.min()))
    }
}

/// Differences between two bipolar states, species by species.
#[derive(Clone, Debug)]
pub struct StateDiff<T: Real> {
    pub n_e: Field<T>,
    pub u_e: Field<T>,
    pub n_i: Field<T>,
    pub u_i: Field<T>,
    pub phi: Field<T>,
}

impl<T: Real> StateDiff<T> {
    pub fn between(a: &BipolarState<T>, b: &BipolarState<T>) -> Self {
        Self {
            n_e: &a.electron.n - &b.electron.n,
            u_e: &a.electron.u - &b.electron.u,
            n_i: &a.ion.n - &b.ion.n,
            u_i: &a.ion.u - &b.ion.u,
            phi: &a.phi - &b.phi,
        }
    }

    pub fn scale(&self, c: T) -> Self {
        Self {
            n_e: self.n_e.scale(c),
            u_e: self.u_e.scale(c),
            n_i: self.n_i.scale(c),
            u_i: self.u_i.scale(c),
            phi: self.phi.scale(c),
        }
    }
}

fn weighted_seminorm<T: Real>(f: &Field<T>, w: &Field<T>, s: u32) -> T {
    (0..=s).fold(T::zero(), |acc, j| {
        let d = f.derivative(j);
        acc + (w * &(&d * &d)).integral()
    })
}

/// `sum_nu sum_{j<=s} <A_nu^0 d^j W_nu, d^j W_nu> + sum_{j<=s} ||d^j Phi'||^2`
/// with `W_nu = (N_nu, sqrt(m_nu) U_nu)`: `(N_e, eps U_e)`, `(N_i, U_i)` in the
/// zero-electron scaling and `(N_e, U_e)`, `(N_i, U_i / eps)` in the
/// infinity-ion scaling.
pub fn energy_functional<T: Real>(
    diff: &StateDiff<T>,
    n_e: &Field<T>,
    n_i: &Field<T>,
    params: &ScalingParams<T>,
    laws: &SpeciesLaws<T>,
    s: u32,
) -> T {
    let sym = SymmetrizerDiag::new(n_e, n_i, laws);
    let (m_e, m_i) = params.masses();
    let w_e = diff.u_e.scale(m_e.sqrt());
    let w_i = diff.u_i.scale(m_i.sqrt());
    weighted_seminorm(&diff.n_e, &sym.electron.0, s)
        + weighted_seminorm(&w_e, &sym.electron.1, s)
        + weighted_seminorm(&diff.n_i, &sym.ion.0, s)
        + weighted_seminorm(&w_i, &sym.ion.1, s)
        + diff.phi.dx().derivative_norm_sq(s)
}
