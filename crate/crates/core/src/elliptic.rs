//! Periodic elliptic solves: mean-zero Poisson, screened Poisson with a
//! variable coefficient, and the nonlinear Poisson-Boltzmann equation
//!
//! ```text
//! -lambda^2 phi'' + h_e^{-1}(phi) = n_i
//! ```
//!
//! whose solution fixes the additive constant in `phi` through global
//! neutrality, so no separate gauge condition is imposed on it.

use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::gaslaw::GasLaw;
use crate::grid::Field;
use crate::scalar::{lit, to_f64, Real};
use crate::series::Series;

/// Relative compatibility tolerance `|mean(source)| <= tol * ||source||_0`.
pub const COMPATIBILITY_TOL: f64 = 1e-10;

/// Mean-zero solution of `-lambda^2 phi'' = source`.
pub fn solve_poisson<T: Real>(source: &Field<T>, lambda: T) -> Result<Field<T>> {
    let mean = source.mean();
    let tol = lit::<T>(COMPATIBILITY_TOL) * source.l2_norm();
    if mean.abs() > tol {
        return Err(Error::Compatibility {
            mean: to_f64(mean),
            tolerance: to_f64(tol),
        });
    }
    Ok(invert_symbol(source, |kappa| {
        if kappa == T::zero() {
            T::zero()
        } else {
            T::one() / (lambda * lambda * kappa * kappa)
        }
    }))
}

/// Solves `(-lambda^2 d_xx + c) psi = rhs` for a constant `c > 0`.
pub fn solve_helmholtz<T: Real>(rhs: &Field<T>, lambda: T, c: T) -> Field<T> {
    invert_symbol(rhs, |kappa| {
        T::one() / (lambda * lambda * kappa * kappa + c)
    })
}

fn invert_symbol<T: Real>(f: &Field<T>, symbol: impl Fn(T) -> T) -> Field<T> {
    let grid = f.grid();
    let spec: Vec<Complex<T>> = f
        .spectrum()
        .into_iter()
        .zip(grid.wavenumbers())
        .map(|(c, &kappa)| c * symbol(kappa))
        .collect();
    Field::from_spectrum(grid, spec)
}

/// Inner solver settings for [`solve_screened`].
#[derive(Clone, Copy, Debug)]
pub struct LinearOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LinearOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iter: 400,
        }
    }
}

/// Applies `psi -> -lambda^2 psi'' + q psi`.
pub fn screened_operator<T: Real>(psi: &Field<T>, q: &Field<T>, lambda: T) -> Field<T> {
    psi.derivative(2).scale(-lambda * lambda) + q * psi
}

/// Solves `(-lambda^2 d_xx + q) psi = rhs` with `q > 0` pointwise.
///
/// Conjugate gradients, preconditioned by the constant-coefficient operator
/// at `mean(q)`. Convergence is measured in the preconditioned residual,
/// which stays clear of the roundoff amplification in `psi''`.
pub fn solve_screened<T: Real>(
    q: &Field<T>,
    rhs: &Field<T>,
    lambda: T,
    opts: LinearOptions,
) -> Result<Field<T>> {
    if !(q.min() > T::zero()) {
        return Err(Error::Domain(format!(
            "screening coefficient must be positive, min = {}",
            q.min()
        )));
    }
    let qbar = q.mean();
    let precond = |r: &Field<T>| solve_helmholtz(r, lambda, qbar);

    let mut x = precond(rhs);
    let mut r = rhs - &screened_operator(&x, q, lambda);
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let scale = rhs.dot(&precond(rhs)).sqrt();
    if scale == T::zero() {
        return Ok(Field::zeros(rhs.grid()));
    }
    let tol = lit::<T>(opts.tol) * scale;
    let mut best = rz.abs().sqrt();
    let mut stalled = 0;
    for _ in 0..opts.max_iter {
        let res = rz.abs().sqrt();
        if res <= tol {
            return Ok(x);
        }
        if res < best * lit(0.999) {
            best = res;
            stalled = 0;
        } else {
            stalled += 1;
            // roundoff plateau just above the requested tolerance
            if stalled >= 8 && res <= lit::<T>(1e3) * tol {
                return Ok(x);
            }
        }
        let ap = screened_operator(&p, q, lambda);
        let alpha = rz / p.dot(&ap);
        x = x.axpy(alpha, &p);
        r = r.axpy(-alpha, &ap);
        z = precond(&r);
        let rz_new = r.dot(&z);
        p = z.axpy(rz_new / rz, &p);
        rz = rz_new;
    }
    let res = rz.abs().sqrt();
    if res <= lit::<T>(1e3) * tol {
        return Ok(x);
    }
    Err(Error::NonConvergence {
        solver: "screened poisson cg",
        iterations: opts.max_iter,
        residual: to_f64(res / scale),
    })
}

/// Newton settings for [`solve_poisson_boltzmann_with`].
#[derive(Clone, Debug)]
pub struct NewtonOptions<T: Real> {
    pub max_iter: usize,
    /// Stop when `||F||_0 <= tol * max(1, ||n_i||_0)`.
    pub tol: f64,
    pub max_halvings: usize,
    pub initial_guess: Option<Field<T>>,
    pub linear: LinearOptions,
}

impl<T: Real> Default for NewtonOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-11,
            max_halvings: 20,
            initial_guess: None,
            linear: LinearOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoltzmannSolution<T: Real> {
    pub phi: Field<T>,
    pub n_e: Field<T>,
    pub iterations: usize,
    /// `||F||_0` before each Newton step and after the last one.
    pub residuals: Vec<f64>,
}

fn boltzmann_residual<T: Real>(
    phi: &Field<T>,
    n_e: &Field<T>,
    n_i: &Field<T>,
    lambda: T,
) -> Field<T> {
    phi.derivative(2).scale(-lambda * lambda) + n_e - n_i
}

/// `d/dphi h^{-1}(phi) = 1/h'(n)` at `n = h^{-1}(phi)`.
fn boltzmann_slope<T: Real>(law: &GasLaw<T>, n_e: &Field<T>) -> Field<T> {
    n_e.map(|n| T::one() / law.enthalpy_derivative(n))
}

/// Constant plus modewise linear response around the mean ion density.
fn linear_guess<T: Real>(n_i: &Field<T>, lambda: T, law: &GasLaw<T>) -> Result<Field<T>> {
    let nbar = n_i.mean();
    let phibar = law.enthalpy(nbar)?;
    let slope = T::one() / law.enthalpy_derivative(nbar);
    Ok(solve_helmholtz(&n_i.add_scalar(-nbar), lambda, slope).add_scalar(phibar))
}

pub fn solve_poisson_boltzmann<T: Real>(
    n_i: &Field<T>,
    lambda: T,
    law: &GasLaw<T>,
) -> Result<BoltzmannSolution<T>> {
    solve_poisson_boltzmann_with(n_i, lambda, law, &NewtonOptions::default())
}

/// Damped Newton iteration for `-lambda^2 phi'' + h_e^{-1}(phi) = n_i`.
pub fn solve_poisson_boltzmann_with<T: Real>(
    n_i: &Field<T>,
    lambda: T,
    law: &GasLaw<T>,
    opts: &NewtonOptions<T>,
) -> Result<BoltzmannSolution<T>> {
    if !(n_i.min() > T::zero()) || !n_i.is_finite() {
        return Err(Error::Domain(format!(
            "ion density must be positive, min = {}",
            n_i.min()
        )));
    }
    let tol = lit::<T>(opts.tol) * n_i.l2_norm().max(T::one());
    let mut phi = match &opts.initial_guess {
        Some(g) => g.clone(),
        None => linear_guess(n_i, lambda, law)?,
    };
    let mut n_e = law.enthalpy_inverse_field(&phi)?;
    let mut f = boltzmann_residual(&phi, &n_e, n_i, lambda);
    let mut norm = f.l2_norm();
    let mut residuals = vec![to_f64(norm)];

    for iter in 0..opts.max_iter {
        if norm <= tol {
            return Ok(BoltzmannSolution {
                phi,
                n_e,
                iterations: iter,
                residuals,
            });
        }
        let slope = boltzmann_slope(law, &n_e);
        let step = solve_screened(&slope, &(-&f), lambda, opts.linear)?;
        let mut alpha = T::one();
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial = phi.axpy(alpha, &step);
            if let Ok(ne_trial) = law.enthalpy_inverse_field(&trial) {
                if ne_trial.min() > T::zero() {
                    let f_trial = boltzmann_residual(&trial, &ne_trial, n_i, lambda);
                    let n_trial = f_trial.l2_norm();
                    if n_trial < norm {
                        accepted = Some((trial, ne_trial, f_trial, n_trial));
                        break;
                    }
                }
            }
            alpha = alpha * lit(0.5);
        }
        match accepted {
            Some((p, ne, fr, nr)) => {
                phi = p;
                n_e = ne;
                f = fr;
                norm = nr;
                residuals.push(to_f64(norm));
            }
            None => {
                // no decrease possible: accept only a roundoff-level plateau
                if norm <= lit::<T>(100.0) * tol {
                    return Ok(BoltzmannSolution {
                        phi,
                        n_e,
                        iterations: iter,
                        residuals,
                    });
                }
                return Err(Error::NonConvergence {
                    solver: "poisson-boltzmann newton",
                    iterations: iter,
                    residual: to_f64(norm),
                });
            }
        }
    }
    if norm <= tol {
        return Ok(BoltzmannSolution {
            phi,
            n_e,
            iterations: opts.max_iter,
            residuals,
        });
    }
    Err(Error::NonConvergence {
        solver: "poisson-boltzmann newton",
        iterations: opts.max_iter,
        residual: to_f64(norm),
    })
}

/// Taylor coefficients of `phi(t)` and `n_e(t) = h_e^{-1}(phi(t))` when the
/// ion density is a power series in `t`.
///
/// `phi0` must already solve the order-0 equation. Each higher coefficient
/// solves the linearized equation `(-lambda^2 d_xx + 1/h_e'(n_e)) phi_k = r_k`
/// with `r_k` collecting the nonlinear contributions of lower orders.
pub fn boltzmann_series<T: Real>(
    n_i: &Series<T>,
    phi0: &Field<T>,
    lambda: T,
    law: &GasLaw<T>,
    opts: LinearOptions,
) -> Result<(Series<T>, Series<T>)> {
    let mut phi = Series::new(vec![phi0.clone()]);
    extend_boltzmann_series(&mut phi, n_i, lambda, law, opts)?;
    let n_e = law.enthalpy_inverse_series(&phi);
    Ok((phi, n_e))
}

/// Appends coefficients to `phi` until its order matches `n_i`.
pub fn extend_boltzmann_series<T: Real>(
    phi: &mut Series<T>,
    n_i: &Series<T>,
    lambda: T,
    law: &GasLaw<T>,
    opts: LinearOptions,
) -> Result<()> {
    let grid = n_i.grid().clone();
    let n_e0 = law.enthalpy_inverse_field(phi.coeff(0))?;
    let slope = boltzmann_slope(law, &n_e0);
    for k in phi.order() + 1..=n_i.order() {
        let mut trial = phi.clone();
        trial.push(Field::zeros(&grid));
        let nonlinear = law.enthalpy_inverse_series(&trial);
        let rhs = n_i.coeff(k) - nonlinear.coeff(k);
        phi.push(solve_screened(&slope, &rhs, lambda, opts)?);
    }
    Ok(())
}
