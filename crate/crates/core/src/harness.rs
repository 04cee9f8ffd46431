//! Convergence studies: study configuration, rate fits, error tables and reports.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{energy_functional, integrate, BipolarState, StateDiff, StepperOptions};
use crate::error::{Error, Result};
use crate::expansion::{build_approximate, residual, well_prepared_initial};
use crate::gaslaw::{GasLaw, MassLimit, ScalingParams, SpeciesLaws};
use crate::grid::{Field, Grid};
use crate::profiles::{
    solve_infinity_ion_leading, solve_infinity_ion_order1, solve_zero_electron_leading,
    solve_zero_electron_order1, InfinityIonData, ProfileOptions, ProfileSet, ZeroElectronData,
};

/// Version tag written into every JSON report.
pub const REPORT_SCHEMA: u32 = 1;
/// Half-width of the accepted band around a predicted convergence slope.
pub const RATE_BAND: f64 = 0.6;
/// Half-width of the accepted band around a predicted remainder slope.
pub const RESIDUAL_BAND: f64 = 0.4;
/// Upper bound on the fitted growth constant of the energy diagnostic.
pub const ENERGY_GROWTH_LIMIT: f64 = 50.0;
/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "EPLIM_THREADS";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    #[serde(default = "one")]
    pub length: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LawConfig {
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default = "one")]
    pub gamma: f64,
}

impl Default for LawConfig {
    fn default() -> Self {
        Self { a: 1.0, gamma: 1.0 }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LawsConfig {
    #[serde(default)]
    pub electron: LawConfig,
    #[serde(default)]
    pub ion: LawConfig,
}

/// Named smooth families of initial profiles.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    /// One Fourier mode per field.
    Cosine,
    /// The first two Fourier modes, with phase shifts.
    TwoMode,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub recipe: Recipe,
    /// Amplitude of the leading-order perturbation of the constant state.
    pub amplitude: f64,
    /// Amplitude of the first-order correction profiles.
    #[serde(default = "default_order1_amplitude")]
    pub order1_amplitude: f64,
    /// Mean electron velocity of the zero-electron limit.
    #[serde(default)]
    pub mean_u_e: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write binary checkpoints of every sampled bipolar state.
    #[serde(default)]
    pub checkpoints: bool,
}

/// A convergence or remainder study, read from TOML.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub regime: MassLimit,
    /// Truncation order of the expansion (0 or 1).
    pub m: usize,
    pub grid: GridConfig,
    #[serde(default)]
    pub laws: LawsConfig,
    #[serde(default = "one")]
    pub lambda: f64,
    pub t_end: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub eps_list: Vec<f64>,
    /// Norms are reported for every `s` up to this index.
    #[serde(default = "default_sobolev_s")]
    pub sobolev_s: u32,
    pub initial: InitialConfig,
    #[serde(default = "one")]
    pub perturbation_scale: f64,
    /// Sobolev index in which the initial perturbation is normalized; defaults
    /// to the smallest index admitted by the convergence estimate of the regime.
    #[serde(default)]
    pub perturbation_s: Option<u32>,
    /// Sampling intervals on `[0, t_end]`.
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    pub output: OutputConfig,
}

fn one() -> f64 {
    1.0
}
fn default_cfl() -> f64 {
    0.4
}
fn default_sobolev_s() -> u32 {
    2
}
fn default_samples() -> usize {
    10
}
fn default_order1_amplitude() -> f64 {
    0.1
}

impl StudyConfig {
    /// Default study: N = 256 on the unit interval, isothermal unit sound
    /// speeds, `t_end = 0.1`, geometric sweep `0.4 .. 0.1`, cosine recipe.
    pub fn default_for(regime: MassLimit, m: usize) -> Self {
        Self {
            regime,
            m,
            grid: GridConfig {
                n: 256,
                length: 1.0,
            },
            laws: LawsConfig::default(),
            lambda: 1.0,
            t_end: 0.1,
            cfl: default_cfl(),
            eps_list: vec![0.4, 0.28, 0.2, 0.14, 0.1],
            sobolev_s: default_sobolev_s(),
            initial: InitialConfig {
                recipe: Recipe::Cosine,
                amplitude: 0.2,
                order1_amplitude: default_order1_amplitude(),
                mean_u_e: 0.0,
            },
            perturbation_scale: 1.0,
            perturbation_s: None,
            n_samples: default_samples(),
            output: OutputConfig {
                dir: PathBuf::from(format!("out/{}_m{m}", regime.name().replace('-', "_"))),
                checkpoints: false,
            },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.m > 1 {
            return bad(format!(
                "expansion order m = {} not supported (0 or 1)",
                self.m
            ));
        }
        if self.eps_list.is_empty() {
            return bad("eps_list is empty".into());
        }
        if let Some(e) = self.eps_list.iter().find(|&&e| !(e > 0.0 && e < 1.0)) {
            return bad(format!("eps = {e} outside (0, 1)"));
        }
        if self.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return bad("eps_list must be strictly decreasing".into());
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {} must be positive", self.t_end));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("cfl = {} outside (0, 1]", self.cfl));
        }
        if self.n_samples == 0 {
            return bad("n_samples must be positive".into());
        }
        if !(self.perturbation_scale >= 0.0) {
            return bad("perturbation_scale must be nonnegative".into());
        }
        if !(self.initial.amplitude.abs() < 1.0) {
            return bad("initial amplitude must lie in (-1, 1)".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Arc<Grid<f64>>> {
        Grid::new(self.grid.n, self.grid.length).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn laws(&self) -> Result<SpeciesLaws<f64>> {
        let law =
            |c: &LawConfig| GasLaw::new(c.a, c.gamma).map_err(|e| Error::Config(e.to_string()));
        Ok(SpeciesLaws {
            electron: law(&self.laws.electron)?,
            ion: law(&self.laws.ion)?,
        })
    }

    pub fn stepper(&self) -> StepperOptions {
        StepperOptions {
            cfl: self.cfl,
            ..StepperOptions::default()
        }
    }

    pub fn profile_options(&self) -> ProfileOptions {
        ProfileOptions {
            n_samples: self.n_samples,
            stepper: self.stepper(),
            ..ProfileOptions::default()
        }
    }

    /// `s > d/2 + 2` in the zero-electron limit, `s > d/2 + 1` in the
    /// infinity-ion limit, with `d = 1`.
    pub fn perturbation_index(&self) -> u32 {
        self.perturbation_s.unwrap_or(match self.regime {
            MassLimit::ZeroElectronMass => 3,
            MassLimit::InfinityIonMass => 2,
        })
    }

    pub fn params(&self, eps: f64) -> Result<ScalingParams<f64>> {
        ScalingParams::new(self.regime, eps, self.lambda)
    }
}

/// Leading-order and first-order initial fields of a recipe:
/// `(n_i, u_i, n_e, u_e)` per order, with zero-mean perturbations.
fn recipe_fields(grid: &Arc<Grid<f64>>, recipe: Recipe, amp: f64, order: usize) -> [Field<f64>; 4] {
    let k = 2.0 * PI / grid.length();
    let mode =
        |a: f64, j: f64, phase: f64| Field::from_fn(grid, move |x| a * (j * k * x + phase).cos());
    let base = if order == 0 { 1.0 } else { 0.0 };
    let j = if order == 0 { 1.0 } else { 2.0 };
    let fields = [
        mode(amp, j, 0.0).add_scalar(base),
        mode(amp, j, -0.5 * PI),
        mode(0.5 * amp, j, -0.5 * PI).add_scalar(base),
        mode(0.5 * amp, j, 0.0),
    ];
    match recipe {
        Recipe::Cosine => fields,
        Recipe::TwoMode => {
            let extra = [
                mode(0.4 * amp, j + 1.0, 0.7),
                mode(0.3 * amp, j + 1.0, 1.1),
                mode(0.25 * amp, j + 1.0, -0.4),
                mode(0.2 * amp, j + 1.0, 0.9),
            ];
            let mut it = extra.into_iter();
            fields.map(|f| f + it.next().expect("four fields"))
        }
    }
}

/// Builds the expansion profiles of orders `0..=m` on `[0, t_end]`.
pub fn build_profiles(cfg: &StudyConfig) -> Result<ProfileSet<f64>> {
    let grid = cfg.grid()?;
    let laws = cfg.laws()?;
    let opts = cfg.profile_options();
    let ic = &cfg.initial;
    let [n_i, u_i, n_e, u_e] = recipe_fields(&grid, ic.recipe, ic.amplitude, 0);
    let [n_i1, u_i1, n_e1, u_e1] = recipe_fields(&grid, ic.recipe, ic.order1_amplitude, 1);
    match cfg.regime {
        MassLimit::ZeroElectronMass => {
            let init = ZeroElectronData {
                n_i,
                u_i,
                mean_u_e: ic.mean_u_e,
            };
            let p = solve_zero_electron_leading(&init, &laws, cfg.lambda, cfg.t_end, &opts)?;
            if cfg.m == 0 {
                return Ok(p);
            }
            let init1 = ZeroElectronData {
                n_i: n_i1,
                u_i: u_i1,
                mean_u_e: 0.0,
            };
            solve_zero_electron_order1(&p, &init1)
        }
        MassLimit::InfinityIonMass => {
            let init = InfinityIonData { n_i, u_i, n_e, u_e };
            let p = solve_infinity_ion_leading(&init, &laws, cfg.lambda, cfg.t_end, &opts)?;
            if cfg.m == 0 {
                return Ok(p);
            }
            let init1 = InfinityIonData {
                n_i: n_i1,
                u_i: u_i1,
                n_e: n_e1,
                u_e: u_e1,
            };
            solve_infinity_ion_order1(&p, &init1)
        }
    }
}

/// Least-squares line through `(ln eps, ln value)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
}

pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<RateFit> {
    if let Some(&(e, v)) = pairs
        .iter()
        .find(|(e, v)| !(*e > 0.0 && *v > 0.0 && v.is_finite()))
    {
        return Err(Error::Domain(format!(
            "rate fit needs positive data, got ({e}, {v})"
        )));
    }
    let n = pairs.len();
    if n < 2 {
        return Err(Error::DegenerateFit(format!("{n} point(s)")));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let nf = n as f64;
    let xm = xs.iter().sum::<f64>() / nf;
    let ym = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    if sxx <= f64::EPSILON * nf * (1.0 + xm * xm) {
        return Err(Error::DegenerateFit("all eps equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let stderr = if n > 2 {
        let ss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (ss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(RateFit {
        slope,
        stderr,
        intercept,
        points: n,
    })
}

/// Runs `f` over `items` in a pool capped by `EPLIM_THREADS`, preserving order.
pub fn par_map<I: Sync, O: Send>(items: &[I], f: impl Fn(&I) -> O + Sync + Send) -> Vec<O> {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    match builder.build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

/// Squared norms of the differences between the exact and approximate solutions.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct ErrorNorms {
    pub n_e: f64,
    pub u_e: f64,
    pub n_i: f64,
    pub u_i: f64,
    pub dphi: f64,
    /// The weighted combination bounded by the convergence estimate.
    pub total: f64,
}

impl ErrorNorms {
    fn compute(diff: &StateDiff<f64>, limit: MassLimit, eps: f64, s: u32) -> Self {
        let sq = |f: &Field<f64>| f.sobolev_norm(s).powi(2);
        let (n_e, u_e, n_i, u_i) = (sq(&diff.n_e), sq(&diff.u_e), sq(&diff.n_i), sq(&diff.u_i));
        let dphi = sq(&diff.phi.dx());
        let (we, wi) = match limit {
            MassLimit::ZeroElectronMass => (eps, 1.0),
            MassLimit::InfinityIonMass => (1.0, 1.0 / (eps * eps)),
        };
        Self {
            n_e,
            u_e,
            n_i,
            u_i,
            dphi,
            total: n_e + n_i + dphi + we * u_e + wi * u_i,
        }
    }

    fn sup(self, o: Self) -> Self {
        Self {
            n_e: self.n_e.max(o.n_e),
            u_e: self.u_e.max(o.u_e),
            n_i: self.n_i.max(o.n_i),
            u_i: self.u_i.max(o.u_i),
            dphi: self.dphi.max(o.dphi),
            total: self.total.max(o.total),
        }
    }

    /// `(species, variable, value)` rows for the CSV table.
    pub fn rows(&self) -> [(&'static str, &'static str, f64); 6] {
        [
            ("electron", "n", self.n_e),
            ("electron", "u", self.u_e),
            ("ion", "n", self.n_i),
            ("ion", "u", self.u_i),
            ("potential", "dphi", self.dphi),
            ("combined", "total", self.total),
        ]
    }
}

/// Fitted growth of the energy diagnostic along one run.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct EnergyGrowth {
    /// Least-squares `C` in `ln E(t) - ln(E(0) + eps^(4m+2)) ~ C t`.
    pub c_fit: f64,
    /// Smallest `C >= 0` for which the bound holds at every sample.
    pub c_envelope: f64,
}

impl EnergyGrowth {
    fn from_series(times: &[f64], energy: &[f64], eps: f64, m: usize) -> Self {
        let base = (energy[0] + eps.powi(4 * m as i32 + 2)).ln();
        let (mut sty, mut stt, mut env) = (0.0, 0.0, 0.0f64);
        for (&t, &e) in times.iter().zip(energy).skip(1) {
            let y = e.max(f64::MIN_POSITIVE).ln() - base;
            sty += t * y;
            stt += t * t;
            env = env.max(y / t);
        }
        Self {
            c_fit: if stt > 0.0 { sty / stt } else { 0.0 },
            c_envelope: env,
        }
    }

    pub fn pass(&self) -> bool {
        self.c_fit.is_finite()
            && self.c_fit < ENERGY_GROWTH_LIMIT
            && self.c_envelope < ENERGY_GROWTH_LIMIT
    }
}

/// Errors of one exact-versus-approximate comparison.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EpsRecord {
    pub eps: f64,
    /// `sup_t` squared norms, indexed by `s`.
    pub sup_norms: Vec<ErrorNorms>,
    /// Energy diagnostic at `s = 0`.
    pub energy: EnergyGrowth,
}

/// Compares a sampled bipolar trajectory with the expansion at the same times.
pub fn compare_with_expansion(
    profiles: &ProfileSet<f64>,
    states: &[BipolarState<f64>],
    eps: f64,
    max_s: u32,
) -> Result<EpsRecord> {
    let params = ScalingParams::new(profiles.limit, eps, profiles.lambda)?;
    let mut sup = vec![ErrorNorms::default(); max_s as usize + 1];
    let mut energy = Vec::with_capacity(states.len());
    for st in states {
        let approx = build_approximate(profiles, eps, st.time)?;
        let diff = StateDiff::between(st, &approx);
        for (s, slot) in sup.iter_mut().enumerate() {
            *slot = slot.sup(ErrorNorms::compute(&diff, profiles.limit, eps, s as u32));
        }
        energy.push(energy_functional(
            &diff,
            &approx.electron.n,
            &approx.ion.n,
            &params,
            &profiles.laws,
            0,
        ));
    }
    let times: Vec<f64> = states.iter().map(|s| s.time).collect();
    Ok(EpsRecord {
        eps,
        sup_norms: sup,
        energy: EnergyGrowth::from_series(&times, &energy, eps, profiles.order()),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum EpsOutcome {
    Ok(EpsRecord),
    Failed {
        eps: f64,
        numerical: bool,
        error: String,
    },
}

impl EpsOutcome {
    pub fn eps(&self) -> f64 {
        match self {
            EpsOutcome::Ok(r) => r.eps,
            EpsOutcome::Failed { eps, .. } => *eps,
        }
    }

    pub fn record(&self) -> Option<&EpsRecord> {
        match self {
            EpsOutcome::Ok(r) => Some(r),
            EpsOutcome::Failed { .. } => None,
        }
    }
}

/// A fitted slope compared with a prediction.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SlopeCheck {
    pub s: u32,
    pub fit: RateFit,
    pub predicted: f64,
    /// Accepted interval for the slope.
    pub band: (f64, f64),
    pub pass: bool,
}

impl SlopeCheck {
    fn new(s: u32, fit: RateFit, predicted: f64, band: (f64, f64)) -> Self {
        let pass = fit.slope >= band.0 && fit.slope <= band.1;
        Self {
            s,
            fit,
            predicted,
            band,
            pass,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RateReport {
    pub schema: u32,
    pub regime: MassLimit,
    pub m: usize,
    pub outcomes: Vec<EpsOutcome>,
    /// Slopes of the weighted error combination, one per `s`.
    pub slopes: Vec<SlopeCheck>,
    /// Slopes of each squared variable norm at `s = 0`.
    pub variable_slopes: Vec<(String, f64)>,
    /// Zero-electron limit only: the `4m+2` band suggested by the L2 energy estimate.
    pub l2_band: Option<SlopeCheck>,
    /// Slopes at `s = 0` after dropping the `d` largest eps, `d = 0, 1, ...`.
    pub drop_largest_slopes: Vec<f64>,
    pub fallback_increasing: bool,
    pub energy_pass: bool,
    pub complete: bool,
    pub pass: bool,
}

/// Predicted slope of the squared error: `2(2m+1-s)` in the zero-electron
/// limit, `4m+2` in the infinity-ion limit.
pub fn predicted_error_slope(limit: MassLimit, m: usize, s: u32) -> f64 {
    let m = m as f64;
    match limit {
        MassLimit::ZeroElectronMass => 2.0 * (2.0 * m + 1.0 - s as f64),
        MassLimit::InfinityIonMass => 4.0 * m + 2.0,
    }
}

/// Assembles a report from per-eps outcomes (ordered as in the config).
pub fn assemble_rate_report(cfg: &StudyConfig, outcomes: Vec<EpsOutcome>) -> RateReport {
    let records: Vec<&EpsRecord> = outcomes.iter().filter_map(|o| o.record()).collect();
    let complete = records.len() == outcomes.len();
    let fit_s = |s: usize, pick: &dyn Fn(&ErrorNorms) -> f64, skip: usize| {
        let pairs: Vec<(f64, f64)> = records[skip.min(records.len())..]
            .iter()
            .map(|r| (r.eps, pick(&r.sup_norms[s])))
            .collect();
        fit_rate(&pairs).ok()
    };
    let mut slopes = Vec::new();
    for s in 0..=cfg.sobolev_s {
        let predicted = predicted_error_slope(cfg.regime, cfg.m, s);
        let band = match cfg.regime {
            MassLimit::ZeroElectronMass => (predicted - RATE_BAND, f64::INFINITY),
            MassLimit::InfinityIonMass => (predicted - RATE_BAND, predicted + RATE_BAND),
        };
        if let Some(fit) = fit_s(s as usize, &|e| e.total, 0) {
            slopes.push(SlopeCheck::new(s, fit, predicted, band));
        }
    }
    let mut variable_slopes = Vec::new();
    for (i, (species, var, _)) in ErrorNorms::default().rows().into_iter().enumerate() {
        if let Some(fit) = fit_s(0, &|e| e.rows()[i].2, 0) {
            variable_slopes.push((format!("{species}.{var}"), fit.slope));
        }
    }
    let l2_band = match cfg.regime {
        MassLimit::ZeroElectronMass => fit_s(0, &|e| e.total, 0).map(|fit| {
            let p = 4.0 * cfg.m as f64 + 2.0;
            SlopeCheck::new(0, fit, p, (p - RATE_BAND, p + RATE_BAND))
        }),
        MassLimit::InfinityIonMass => None,
    };
    let drop_largest_slopes: Vec<f64> = (0..records.len().saturating_sub(2))
        .filter_map(|d| fit_s(0, &|e| e.total, d).map(|f| f.slope))
        .collect();
    let fallback_increasing =
        drop_largest_slopes.len() >= 2 && drop_largest_slopes.windows(2).all(|w| w[1] > w[0]);
    let energy_pass = records.iter().all(|r| r.energy.pass());
    let s0_pass = slopes.first().is_some_and(|c| c.s == 0 && c.pass);
    let rate_pass = match cfg.regime {
        MassLimit::ZeroElectronMass => s0_pass || fallback_increasing,
        MassLimit::InfinityIonMass => s0_pass,
    };
    let enough = records.len() >= 4;
    RateReport {
        schema: REPORT_SCHEMA,
        regime: cfg.regime,
        m: cfg.m,
        outcomes,
        slopes,
        variable_slopes,
        l2_band,
        drop_largest_slopes,
        fallback_increasing,
        energy_pass,
        complete,
        pass: complete && enough && rate_pass && energy_pass,
    }
}

fn checkpoint_states(dir: &Path, eps_index: usize, states: &[BipolarState<f64>]) -> Result<()> {
    let dir = dir.join("checkpoints");
    fs::create_dir_all(&dir)?;
    for (k, st) in states.iter().enumerate() {
        let fields = [
            ("n_e", &st.electron.n),
            ("u_e", &st.electron.u),
            ("n_i", &st.ion.n),
            ("u_i", &st.ion.u),
            ("phi", &st.phi),
        ];
        for (name, f) in fields {
            let file = fs::File::create(dir.join(format!("e{eps_index}_s{k:04}_{name}.bin")))?;
            f.write_checkpoint(BufWriter::new(file))?;
        }
    }
    Ok(())
}

/// One well-prepared exact run compared with the expansion.
pub fn run_single_eps(
    cfg: &StudyConfig,
    profiles: &ProfileSet<f64>,
    eps: f64,
) -> Result<(EpsRecord, Vec<BipolarState<f64>>)> {
    let init = well_prepared_initial(
        profiles,
        eps,
        cfg.perturbation_scale,
        cfg.perturbation_index(),
    )?;
    let params = cfg.params(eps)?;
    let traj = integrate(
        &init,
        &params,
        &profiles.laws,
        cfg.t_end,
        cfg.n_samples,
        &cfg.stepper(),
    )?;
    let record = compare_with_expansion(profiles, &traj.states, eps, cfg.sobolev_s)?;
    Ok((record, traj.states))
}

fn outcome(eps: f64, r: Result<EpsRecord>) -> EpsOutcome {
    match r {
        Ok(rec) => EpsOutcome::Ok(rec),
        Err(e) => EpsOutcome::Failed {
            eps,
            numerical: e.is_numerical(),
            error: e.to_string(),
        },
    }
}

/// Full rate study. Profiles are built once; each eps runs in the worker pool.
pub fn run_convergence_study(cfg: &StudyConfig) -> Result<RateReport> {
    cfg.validate()?;
    let profiles = build_profiles(cfg)?;
    let indexed: Vec<(usize, f64)> = cfg.eps_list.iter().copied().enumerate().collect();
    let outcomes = par_map(&indexed, |&(i, eps)| {
        let r = run_single_eps(cfg, &profiles, eps).and_then(|(rec, states)| {
            if cfg.output.checkpoints {
                checkpoint_states(&cfg.output.dir, i, &states)?;
            }
            Ok(rec)
        });
        outcome(eps, r)
    });
    Ok(assemble_rate_report(cfg, outcomes))
}

/// Rate study in which the exact solver is replaced by the expansion plus a
/// planted `eps^3 (1 + t)` ion-density error. Guards the error and fit pipeline.
pub fn planted_rate_study(cfg: &StudyConfig, profiles: &ProfileSet<f64>) -> Result<RateReport> {
    let grid = profiles.grid().clone();
    let k = 2.0 * PI / grid.length();
    let shape = Field::from_fn(&grid, |x| (k * x).sin() + 0.3 * (2.0 * k * x).cos());
    let outcomes = par_map(&cfg.eps_list, |&eps| {
        let r = profiles
            .times
            .iter()
            .map(|&t| {
                let mut st = build_approximate(profiles, eps, t)?;
                st.ion.n = st.ion.n.axpy(eps.powi(3) * (1.0 + t), &shape);
                Ok(st)
            })
            .collect::<Result<Vec<_>>>()
            .and_then(|states| compare_with_expansion(profiles, &states, eps, cfg.sobolev_s));
        outcome(eps, r)
    });
    Ok(assemble_rate_report(cfg, outcomes))
}

/// Conserved quantities along one sampled run.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunSample {
    pub t: f64,
    pub mass_e: f64,
    pub mass_i: f64,
    pub net_charge: f64,
    pub min_n_e: f64,
    pub min_n_i: f64,
    /// Squared weighted error combination at `s = 0` against the expansion.
    pub error_total_sq: f64,
}

/// Relative mass drift tolerated per species.
pub const MASS_TOL: f64 = 1e-8;
/// Drift of the net charge tolerated along a run.
pub const NEUTRALITY_DRIFT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunReport {
    pub schema: u32,
    pub regime: MassLimit,
    pub eps: f64,
    pub samples: Vec<RunSample>,
    pub mass_drift_e: f64,
    pub mass_drift_i: f64,
    pub neutrality_drift: f64,
    pub pass: bool,
}

/// One well-prepared bipolar run with conservation diagnostics.
pub fn run_single(cfg: &StudyConfig, eps: f64) -> Result<(RunReport, Vec<BipolarState<f64>>)> {
    cfg.validate()?;
    let profiles = build_profiles(cfg)?;
    let init = well_prepared_initial(
        &profiles,
        eps,
        cfg.perturbation_scale,
        cfg.perturbation_index(),
    )?;
    let params = cfg.params(eps)?;
    let traj = integrate(
        &init,
        &params,
        &profiles.laws,
        cfg.t_end,
        cfg.n_samples,
        &cfg.stepper(),
    )?;
    let samples = traj
        .states
        .iter()
        .map(|st| {
            let approx = build_approximate(&profiles, eps, st.time)?;
            let diff = StateDiff::between(st, &approx);
            Ok(RunSample {
                t: st.time,
                mass_e: st.electron.mass(),
                mass_i: st.ion.mass(),
                net_charge: st.net_charge(),
                min_n_e: st.electron.n.min(),
                min_n_i: st.ion.n.min(),
                error_total_sq: ErrorNorms::compute(&diff, cfg.regime, eps, 0).total,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let first = samples[0];
    let drift = |f: fn(&RunSample) -> f64| {
        samples
            .iter()
            .map(|s| (f(s) - f(&first)).abs())
            .fold(0.0, f64::max)
    };
    let mass_drift_e = drift(|s| s.mass_e) / first.mass_e;
    let mass_drift_i = drift(|s| s.mass_i) / first.mass_i;
    let neutrality_drift = drift(|s| s.net_charge);
    let report = RunReport {
        schema: REPORT_SCHEMA,
        regime: cfg.regime,
        eps,
        samples,
        mass_drift_e,
        mass_drift_i,
        neutrality_drift,
        pass: mass_drift_e <= MASS_TOL
            && mass_drift_i <= MASS_TOL
            && neutrality_drift <= NEUTRALITY_DRIFT_TOL,
    };
    Ok((report, traj.states))
}

pub fn write_run_csv(report: &RunReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    writeln!(
        w,
        "t,mass_e,mass_i,net_charge,min_n_e,min_n_i,error_total_sq"
    )?;
    for s in &report.samples {
        writeln!(
            w,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            s.t, s.mass_e, s.mass_i, s.net_charge, s.min_n_e, s.min_n_i, s.error_total_sq
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Tolerance of the Maxwell-Boltzmann identity of the leading-order profiles.
pub const BOLTZMANN_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProfileReport {
    pub schema: u32,
    pub regime: MassLimit,
    pub m: usize,
    pub times: Vec<f64>,
    /// Zero-electron limit: `sup_t max |(h_e(n_e^0) - phi^0)'|`.
    pub boltzmann_defect: Option<f64>,
    pub pass: bool,
}

pub fn profile_report(profiles: &ProfileSet<f64>) -> Result<ProfileReport> {
    let boltzmann_defect = match profiles.limit {
        MassLimit::ZeroElectronMass => {
            let mut worst = 0.0f64;
            for s in &profiles.orders[0] {
                let h = profiles.laws.electron.enthalpy_field(&s.n_e)?;
                worst = worst.max((&h - &s.phi).dx().max_abs());
            }
            Some(worst)
        }
        MassLimit::InfinityIonMass => None,
    };
    Ok(ProfileReport {
        schema: REPORT_SCHEMA,
        regime: profiles.limit,
        m: profiles.order(),
        times: profiles.times.clone(),
        boltzmann_defect,
        pass: boltzmann_defect.is_none_or(|d| d <= BOLTZMANN_TOL),
    })
}

/// `sup_t` norms of the equation remainders at one eps.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ResidualRecord {
    pub eps: f64,
    /// Per `s`: `sup_t` of the combined remainder norm.
    pub sup_norm: Vec<f64>,
    /// Per `s`: `sup_t` of each remainder `(n_e, u_e, n_i, u_i)`.
    pub per_equation: Vec<[f64; 4]>,
}

pub fn residual_record(profiles: &ProfileSet<f64>, eps: f64, max_s: u32) -> Result<ResidualRecord> {
    let ns = max_s as usize + 1;
    let mut sup = vec![0.0f64; ns];
    let mut per = vec![[0.0f64; 4]; ns];
    for &t in &profiles.times {
        let r = residual(profiles, eps, t)?;
        for s in 0..ns {
            sup[s] = sup[s].max(r.norm(s as u32));
            for (slot, f) in per[s].iter_mut().zip(r.fields()) {
                *slot = slot.max(f.sobolev_norm(s as u32));
            }
        }
    }
    Ok(ResidualRecord {
        eps,
        sup_norm: sup,
        per_equation: per,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ResidualReport {
    pub schema: u32,
    pub regime: MassLimit,
    pub m: usize,
    pub records: Vec<ResidualRecord>,
    /// Slopes of `sup_t ||R||_s` against eps, one per `s`; `s = 0` decides the pass flag.
    pub slopes: Vec<SlopeCheck>,
    pub pass: bool,
}

/// Remainder slope study: predicted slope `2m + 2` for both limits.
pub fn run_residual_study(cfg: &StudyConfig) -> Result<ResidualReport> {
    cfg.validate()?;
    let profiles = build_profiles(cfg)?;
    let records = par_map(&cfg.eps_list, |&eps| {
        residual_record(&profiles, eps, cfg.sobolev_s)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let predicted = 2.0 * cfg.m as f64 + 2.0;
    let band = (predicted - RESIDUAL_BAND, predicted + RESIDUAL_BAND);
    let slopes = (0..=cfg.sobolev_s)
        .map(|s| {
            let pairs: Vec<(f64, f64)> = records
                .iter()
                .map(|r| (r.eps, r.sup_norm[s as usize]))
                .collect();
            fit_rate(&pairs).map(|fit| SlopeCheck::new(s, fit, predicted, band))
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = records.len() >= 4 && slopes[0].pass;
    Ok(ResidualReport {
        schema: REPORT_SCHEMA,
        regime: cfg.regime,
        m: cfg.m,
        records,
        slopes,
        pass,
    })
}

/// Linear-wave self-test of the bipolar integrator.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct DispersionCheck {
    pub eps: f64,
    pub wavenumber: f64,
    pub amplitude: f64,
    /// Frequency measured from the electron-density Fourier mode.
    pub measured: f64,
    /// Electron branch of the exact two-species linear relation.
    pub exact: f64,
    /// `sqrt((a_e^2 k^2 + 1/lambda^2) / eps^2)`, ion coupling neglected.
    pub electron_only: f64,
    pub rel_error_exact: f64,
    pub rel_error_electron_only: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DispersionSetup {
    pub n: usize,
    pub length: f64,
    pub eps: f64,
    pub lambda: f64,
    pub a_e: f64,
    pub a_i: f64,
    pub amplitude: f64,
    /// Number of electron periods to integrate.
    pub periods: f64,
    pub samples_per_period: usize,
    pub cfl: f64,
}

impl Default for DispersionSetup {
    fn default() -> Self {
        Self {
            n: 32,
            length: 1.0,
            eps: 0.5,
            lambda: 1.0,
            a_e: 1.0,
            a_i: 1.0,
            amplitude: 1e-6,
            periods: 2.0,
            samples_per_period: 40,
            cfl: 0.2,
        }
    }
}

/// Tolerance of the electron-only dispersion comparison.
pub const DISPERSION_TOL: f64 = 0.01;

/// Launches the electron eigenmode of the linearized system around the
/// uniform state at the first wavenumber, in the zero-electron scaling, and
/// reads off its frequency.
pub fn dispersion_check(setup: &DispersionSetup) -> Result<DispersionCheck> {
    let grid = Grid::new(setup.n, setup.length)?;
    let k = 2.0 * PI / setup.length;
    let (eps, l2) = (setup.eps, setup.lambda * setup.lambda);
    let (m_e, m_i) = (eps * eps, 1.0);
    // m w^2 N = (a^2 k^2 + 1/lambda^2) N -/+ N_other / lambda^2
    let a11 = (setup.a_e.powi(2) * k * k + 1.0 / l2) / m_e;
    let a12 = -1.0 / (l2 * m_e);
    let a21 = -1.0 / (l2 * m_i);
    let a22 = (setup.a_i.powi(2) * k * k + 1.0 / l2) / m_i;
    let tr = a11 + a22;
    let disc = ((a11 - a22).powi(2) + 4.0 * a12 * a21).sqrt();
    let w2 = 0.5 * (tr + disc);
    let exact = w2.sqrt();
    // eigenvector (1, r): a21 + a22 r = w2 r
    let r = a21 / (w2 - a22);
    let amp = setup.amplitude;
    let cos = Field::from_fn(&grid, |x| (k * x).cos());
    let electron = crate::dynamics::FluidState::at_rest(cos.scale(amp).add_scalar(1.0));
    let ion = crate::dynamics::FluidState::at_rest(cos.scale(amp * r).add_scalar(1.0));
    let init = BipolarState::new(electron, ion, setup.lambda, 0.0)?;
    let params = ScalingParams::new(MassLimit::ZeroElectronMass, eps, setup.lambda)?;
    let laws = SpeciesLaws::isothermal(setup.a_e, setup.a_i)?;
    let period = 2.0 * PI / exact;
    let n_samples = (setup.periods * setup.samples_per_period as f64).round() as usize;
    let opts = StepperOptions {
        cfl: setup.cfl,
        ..StepperOptions::default()
    };
    let traj = integrate(
        &init,
        &params,
        &laws,
        setup.periods * period,
        n_samples,
        &opts,
    )?;
    let c: Vec<f64> = traj
        .states
        .iter()
        .map(|s| s.electron.n.add_scalar(-1.0).dot(&cos))
        .collect();
    // c(t+h) + c(t-h) = 2 cos(w h) c(t) for a pure oscillation
    let (mut num, mut den) = (0.0, 0.0);
    for w in c.windows(3) {
        num += w[1] * (w[0] + w[2]);
        den += 2.0 * w[1] * w[1];
    }
    let h = setup.periods * period / n_samples as f64;
    let measured = (num / den).clamp(-1.0, 1.0).acos() / h;
    let electron_only = a11.sqrt();
    let rel_error_exact = (measured - exact).abs() / exact;
    let rel_error_electron_only = (measured - electron_only).abs() / electron_only;
    Ok(DispersionCheck {
        eps,
        wavenumber: k,
        amplitude: amp,
        measured,
        exact,
        electron_only,
        rel_error_exact,
        rel_error_electron_only,
        pass: rel_error_electron_only <= DISPERSION_TOL,
    })
}

fn csv_writer(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Table with columns `eps, s, species, variable, sup_norm_sq`.
pub fn write_rate_csv(report: &RateReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    writeln!(w, "eps,s,species,variable,sup_norm_sq")?;
    for rec in report.outcomes.iter().filter_map(|o| o.record()) {
        for (s, norms) in rec.sup_norms.iter().enumerate() {
            for (species, var, v) in norms.rows() {
                writeln!(w, "{:e},{s},{species},{var},{v:e}", rec.eps)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Table with columns `eps, s, sup_norm, r_n_e, r_u_e, r_n_i, r_u_i`.
pub fn write_residual_csv(report: &ResidualReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    writeln!(w, "eps,s,sup_norm,r_n_e,r_u_e,r_n_i,r_u_i")?;
    for rec in &report.records {
        for (s, (total, per)) in rec.sup_norm.iter().zip(&rec.per_equation).enumerate() {
            writeln!(
                w,
                "{:e},{s},{total:e},{:e},{:e},{:e},{:e}",
                rec.eps, per[0], per[1], per[2], per[3]
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
