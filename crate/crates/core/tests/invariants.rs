use std::f64::consts::PI;
use std::sync::Arc;

use eplim_core::dynamics::{
    energy_functional, integrate, rhs_bipolar, solve_potential, BipolarState, FluidState,
    StateDiff, StepperOptions, SymmetrizerDiag,
};
use eplim_core::elliptic::solve_poisson;
use eplim_core::expansion::{
    build_approximate, residual, residual_via_bipolar_rhs, well_prepared_initial,
};
use eplim_core::harness::{self, assemble_rate_report, EpsOutcome, StudyConfig};
use eplim_core::{Field, GasLaw, Grid, MassLimit, ScalingParams, SpeciesLaws};
use proptest::prelude::*;

const TAU: f64 = 2.0 * PI;

fn grid(n: usize) -> Arc<Grid<f64>> {
    Grid::new(n, 1.0).unwrap()
}

/// Zero-mean trigonometric polynomial with modes 1..=coeffs.len().
fn trig(g: &Arc<Grid<f64>>, coeffs: &[(f64, f64)]) -> Field<f64> {
    Field::from_fn(g, |x| {
        coeffs.iter().enumerate().fold(0.0, |acc, (m, (a, b))| {
            let k = TAU * (m + 1) as f64;
            acc + a * (k * x).cos() + b * (k * x).sin()
        })
    })
}

fn coeffs(amp: f64) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-amp..amp, -amp..amp), 3)
}

fn small_config(regime: MassLimit, m: usize, amp: f64) -> StudyConfig {
    let mut cfg = StudyConfig::default_for(regime, m);
    cfg.grid.n = 32;
    cfg.t_end = 0.05;
    cfg.n_samples = 4;
    cfg.sobolev_s = 1;
    cfg.initial.amplitude = amp;
    cfg
}

fn regimes() -> impl Strategy<Value = MassLimit> {
    prop_oneof![
        Just(MassLimit::ZeroElectronMass),
        Just(MassLimit::InfinityIonMass)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn poisson_inverts_the_operator(c in coeffs(1.0), lambda in 0.3f64..2.0) {
        let g = grid(64);
        let src = trig(&g, &c);
        let phi = solve_poisson(&src, lambda).unwrap();
        let back = phi.derivative(2).scale(-lambda * lambda);
        prop_assert!((&back - &src).max_abs() <= 1e-11 * (1.0 + src.max_abs()));
        prop_assert!(phi.mean().abs() <= 1e-14);
    }

    #[test]
    fn enthalpy_inverse_round_trip(a in 0.3f64..3.0, gamma in 1.0f64..3.0, n in 0.1f64..5.0) {
        let law = GasLaw::new(a, gamma).unwrap();
        let h = law.enthalpy(n).unwrap();
        let back = law.enthalpy_inverse(h).unwrap();
        prop_assert!((back - n).abs() <= 1e-10 * n);
    }

    #[test]
    fn runs_conserve_mass_and_charge(
        regime in regimes(),
        eps in 0.2f64..0.6,
        ce in coeffs(0.05),
        ci in coeffs(0.05),
        cu in coeffs(0.05),
    ) {
        let g = grid(32);
        let shared = trig(&g, &ci);
        let electron = FluidState::new(shared.add_scalar(1.0) + trig(&g, &ce).scale(0.2), trig(&g, &cu));
        let ion = FluidState::new(shared.add_scalar(1.0), trig(&g, &cu).scale(-0.5));
        let init = BipolarState::new(electron, ion, 1.0, 0.0).unwrap();
        let params = ScalingParams::new(regime, eps, 1.0).unwrap();
        let laws = SpeciesLaws::isothermal(1.0, 1.0).unwrap();
        let traj = integrate(&init, &params, &laws, 0.05, 5, &StepperOptions::default()).unwrap();
        let (me, mi, q) = (init.electron.mass(), init.ion.mass(), init.net_charge());
        for st in &traj.states {
            prop_assert!((st.electron.mass() - me).abs() <= 1e-8 * me);
            prop_assert!((st.ion.mass() - mi).abs() <= 1e-8 * mi);
            prop_assert!((st.net_charge() - q).abs() <= 1e-10);
            // gauge stability: the stored potential is the one the densities define
            let phi = solve_potential(&st.electron.n, &st.ion.n, 1.0).unwrap();
            prop_assert!((&phi - &st.phi).max_abs() <= 1e-12);
        }
    }

    #[test]
    fn symmetrizer_is_positive(c in coeffs(0.2), gamma in 1.0f64..3.0) {
        let g = grid(32);
        let n = trig(&g, &c).add_scalar(1.0);
        let laws = SpeciesLaws {
            electron: GasLaw::new(1.0, gamma).unwrap(),
            ion: GasLaw::new(0.7, gamma).unwrap(),
        };
        prop_assert!(SymmetrizerDiag::new(&n, &n, &laws).min_weight() > 0.0);
    }

    #[test]
    fn energy_is_a_positive_quadratic_form(
        regime in regimes(),
        eps in 0.1f64..0.9,
        s in 0u32..3,
        c in prop::collection::vec(coeffs(1.0), 5),
    ) {
        let g = grid(32);
        let n_e = Field::from_fn(&g, |x| 1.0 + 0.3 * (TAU * x).sin());
        let n_i = Field::from_fn(&g, |x| 1.0 + 0.2 * (TAU * x).cos());
        let laws = SpeciesLaws::isothermal(1.0, 1.0).unwrap();
        let params = ScalingParams::new(regime, eps, 1.0).unwrap();
        let diff = StateDiff {
            n_e: trig(&g, &c[0]),
            u_e: trig(&g, &c[1]),
            n_i: trig(&g, &c[2]),
            u_i: trig(&g, &c[3]),
            phi: trig(&g, &c[4]),
        };
        let e = energy_functional(&diff, &n_e, &n_i, &params, &laws, s);
        let e2 = energy_functional(&diff.scale(2.0), &n_e, &n_i, &params, &laws, s);
        prop_assert!((e2 - 4.0 * e).abs() <= 1e-12 * e2);
        // lower bound with the smallest symmetrizer weight and the mass scaling
        let cmin = SymmetrizerDiag::new(&n_e, &n_i, &laws).min_weight();
        let (m_e, m_i) = params.masses();
        let sq = |f: &Field<f64>| f.sobolev_norm(s).powi(2);
        let lower = cmin * (sq(&diff.n_e) + m_e * sq(&diff.u_e) + sq(&diff.n_i) + m_i * sq(&diff.u_i));
        prop_assert!(e >= lower * (1.0 - 1e-12));
        let zero = diff.scale(0.0);
        prop_assert_eq!(energy_functional(&zero, &n_e, &n_i, &params, &laws, s), 0.0);
    }

    #[test]
    fn residual_paths_agree_and_density_remainders_integrate_to_zero(
        regime in regimes(),
        m in 0usize..2,
        amp in 0.05f64..0.25,
        eps in 0.1f64..0.5,
    ) {
        let cfg = small_config(regime, m, amp);
        let p = harness::build_profiles(&cfg).unwrap();
        for &t in &p.times {
            let a = residual(&p, eps, t).unwrap();
            let b = residual_via_bipolar_rhs(&p, eps, t).unwrap();
            for (x, y) in a.fields().iter().zip(b.fields()) {
                prop_assert!((*x - y).max_abs() <= 1e-8);
            }
            prop_assert!(a.n_e.integral().abs() <= 1e-10);
            prop_assert!(a.n_i.integral().abs() <= 1e-10);
        }
    }

    #[test]
    fn well_prepared_data_is_neutral(regime in regimes(), eps in 0.05f64..0.5, scale in 0.0f64..3.0) {
        let cfg = small_config(regime, 1, 0.2);
        let p = harness::build_profiles(&cfg).unwrap();
        let st = well_prepared_initial(&p, eps, scale, 2).unwrap();
        prop_assert!(st.net_charge().abs() <= 1e-10);
        let base = build_approximate(&p, eps, 0.0).unwrap();
        let q = match regime {
            MassLimit::ZeroElectronMass => 3,
            MassLimit::InfinityIonMass => 5,
        };
        let added = (&st.ion.u - &base.ion.u).sobolev_norm(2);
        prop_assert!((added - scale * eps.powi(q)).abs() <= 1e-12 * (1.0 + added));
    }

    #[test]
    fn report_lists_every_eps_once(fail_mask in prop::collection::vec(any::<bool>(), 5)) {
        let cfg = small_config(MassLimit::InfinityIonMass, 1, 0.2);
        let outcomes: Vec<EpsOutcome> = cfg
            .eps_list
            .iter()
            .zip(&fail_mask)
            .map(|(&eps, &fail)| EpsOutcome::Failed { eps, numerical: fail, error: "x".into() })
            .collect();
        let rep = assemble_rate_report(&cfg, outcomes);
        let listed: Vec<f64> = rep.outcomes.iter().map(EpsOutcome::eps).collect();
        prop_assert_eq!(listed, cfg.eps_list.clone());
        prop_assert!(!rep.complete && !rep.pass);
    }
}

#[test]
fn remainder_slope_rises_by_two_with_the_order() {
    for regime in [MassLimit::ZeroElectronMass, MassLimit::InfinityIonMass] {
        let slope = |m| {
            let mut cfg = StudyConfig::default_for(regime, m);
            cfg.grid.n = 64;
            cfg.sobolev_s = 0;
            harness::run_residual_study(&cfg).unwrap().slopes[0]
                .fit
                .slope
        };
        let rise = slope(1) - slope(0);
        assert!((rise - 2.0).abs() <= 0.5, "{regime:?}: {rise}");
    }
}

#[test]
fn zero_electron_run_stays_bounded() {
    let mut cfg = StudyConfig::default_for(MassLimit::ZeroElectronMass, 1);
    cfg.n_samples = 20;
    let (_, states) = harness::run_single(&cfg, 0.2).unwrap();
    let norm = |st: &BipolarState<f64>| {
        [&st.electron.n, &st.electron.u, &st.ion.n, &st.ion.u]
            .iter()
            .map(|f| f.sobolev_norm(2).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let n0 = norm(&states[0]);
    for st in &states {
        assert!(norm(st) <= 10.0 * n0);
    }
}

#[test]
fn equilibrium_has_no_tendency_in_either_regime() {
    let g = grid(16);
    let st = BipolarState::equilibrium(&g);
    let laws = SpeciesLaws::isothermal(1.0, 1.0).unwrap();
    for regime in [MassLimit::ZeroElectronMass, MassLimit::InfinityIonMass] {
        let k = rhs_bipolar(&st, &ScalingParams::new(regime, 0.1, 1.0).unwrap(), &laws).unwrap();
        for f in [&k.dn_e, &k.du_e, &k.dn_i, &k.du_i] {
            assert_eq!(f.max_abs(), 0.0);
        }
    }
}
