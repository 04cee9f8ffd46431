use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eplim_core::harness::{self, DispersionSetup, EpsOutcome, StudyConfig};
use eplim_core::{Error, MassLimit};

/// Numerical laboratory for the two-species Euler-Poisson system and its
/// small-mass-ratio limits.
#[derive(Parser)]
#[command(name = "eplim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the expansion profiles and store them.
    Profiles(Common),
    /// Integrate the full system once from well-prepared data.
    Run {
        #[command(flatten)]
        common: Common,
        /// Defaults to the smallest eps of the config.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Remainder slope table.
    Residuals(Common),
    /// Convergence rate study.
    Study(Common),
    /// Linear-wave frequency self-test.
    Dispersion {
        /// TOML file with dispersion setup overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out/dispersion")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    ZeroElectron,
    InfinityIon,
}

impl From<RegimeArg> for MassLimit {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::ZeroElectron => MassLimit::ZeroElectronMass,
            RegimeArg::InfinityIon => MassLimit::InfinityIonMass,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Study config (TOML). Without it the built-in default study is used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    /// Expansion order.
    #[arg(long)]
    m: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<StudyConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => StudyConfig::load(path)?,
            None => StudyConfig::default_for(
                self.regime.map_or(MassLimit::ZeroElectronMass, Into::into),
                self.m.unwrap_or(1),
            ),
        };
        if let Some(r) = self.regime {
            cfg.regime = r.into();
        }
        if let Some(m) = self.m {
            cfg.m = m;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

enum Failure {
    Rate,
    Error(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn verdict(pass: bool) -> Result<(), Failure> {
    if pass {
        Ok(())
    } else {
        Err(Failure::Rate)
    }
}

fn status(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn profiles(common: &Common) -> Result<(), Failure> {
    let cfg = common.config()?;
    let dir = &cfg.output.dir;
    let set = harness::build_profiles(&cfg)?;
    set.save(&dir.join("profiles"))?;
    let report = harness::profile_report(&set)?;
    harness::write_json(&report, &dir.join("profiles.json"))?;
    let mut csv = String::from("t\n");
    for t in &report.times {
        csv.push_str(&format!("{t:e}\n"));
    }
    std::fs::write(dir.join("profile_times.csv"), csv).map_err(Error::from)?;
    match report.boltzmann_defect {
        Some(d) => println!("{} boltzmann identity defect {d:.3e}", status(report.pass)),
        None => println!(
            "{} profiles written to {}",
            status(report.pass),
            dir.display()
        ),
    }
    verdict(report.pass)
}

fn run(common: &Common, eps: Option<f64>) -> Result<(), Failure> {
    let cfg = common.config()?;
    let eps = eps.unwrap_or(*cfg.eps_list.last().expect("validated"));
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Config(format!("eps = {eps} outside (0, 1)")).into());
    }
    let (report, states) = harness::run_single(&cfg, eps)?;
    let dir = &cfg.output.dir;
    harness::write_run_csv(&report, &dir.join("run.csv"))?;
    harness::write_json(&report, &dir.join("run.json"))?;
    if let Some(last) = states.last() {
        for (name, f) in [
            ("n_e", &last.electron.n),
            ("u_e", &last.electron.u),
            ("n_i", &last.ion.n),
            ("u_i", &last.ion.u),
            ("phi", &last.phi),
        ] {
            let file = std::fs::File::create(dir.join(format!("final_{name}.csv")))
                .map_err(Error::from)?;
            f.write_csv(std::io::BufWriter::new(file))?;
        }
    }
    println!(
        "{} eps={eps} mass drift e={:.2e} i={:.2e} neutrality drift={:.2e}",
        status(report.pass),
        report.mass_drift_e,
        report.mass_drift_i,
        report.neutrality_drift
    );
    verdict(report.pass)
}

fn residuals(common: &Common) -> Result<(), Failure> {
    let cfg = common.config()?;
    let report = harness::run_residual_study(&cfg)?;
    let dir = &cfg.output.dir;
    harness::write_residual_csv(&report, &dir.join("residuals.csv"))?;
    harness::write_json(&report, &dir.join("residuals.json"))?;
    println!("{:>8} {:>12}", "eps", "sup|R|_0");
    for r in &report.records {
        println!("{:>8} {:>12.4e}", r.eps, r.sup_norm[0]);
    }
    for c in &report.slopes {
        println!(
            "s={} slope {:.3} +/- {:.3} (predicted {})",
            c.s, c.fit.slope, c.fit.stderr, c.predicted
        );
    }
    println!(
        "{} {} m={}",
        status(report.pass),
        report.regime.name(),
        report.m
    );
    verdict(report.pass)
}

fn study(common: &Common) -> Result<(), Failure> {
    let cfg = common.config()?;
    let report = harness::run_convergence_study(&cfg)?;
    let dir = &cfg.output.dir;
    harness::write_rate_csv(&report, &dir.join("study.csv"))?;
    harness::write_json(&report, &dir.join("study.json"))?;
    for o in &report.outcomes {
        match o {
            EpsOutcome::Ok(r) => println!("eps={:<6} error^2={:.4e}", r.eps, r.sup_norms[0].total),
            EpsOutcome::Failed { eps, error, .. } => println!("eps={eps:<6} failed: {error}"),
        }
    }
    for c in &report.slopes {
        println!(
            "s={} slope {:.3} +/- {:.3} (predicted {}) {}",
            c.s,
            c.fit.slope,
            c.fit.stderr,
            c.predicted,
            status(c.pass)
        );
    }
    if let Some(c) = &report.l2_band {
        println!(
            "L2 band {:.1} +/- {}: {}",
            c.predicted,
            harness::RATE_BAND,
            status(c.pass)
        );
    }
    println!(
        "{} {} m={}",
        status(report.pass),
        report.regime.name(),
        report.m
    );
    if report.outcomes.iter().any(|o| {
        matches!(
            o,
            EpsOutcome::Failed {
                numerical: true,
                ..
            }
        )
    }) {
        return Err(Failure::Error(Error::BlowUp {
            time: f64::NAN,
            reason: "at least one eps run failed".into(),
        }));
    }
    verdict(report.pass)
}

fn dispersion(config: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let setup = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str::<DispersionSetup>(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => DispersionSetup::default(),
    };
    let check = harness::dispersion_check(&setup)?;
    harness::write_json(&check, &out.join("dispersion.json"))?;
    println!(
        "{} measured {:.6} two-species {:.6} electron-only {:.6} (rel {:.2e})",
        status(check.pass),
        check.measured,
        check.exact,
        check.electron_only,
        check.rel_error_electron_only
    );
    verdict(check.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Profiles(c) => profiles(c),
        Command::Run { common, eps } => run(common, *eps),
        Command::Residuals(c) => residuals(c),
        Command::Study(c) => study(c),
        Command::Dispersion { config, out } => dispersion(config.as_deref(), out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Rate) => ExitCode::from(1),
        Err(Failure::Error(e)) => {
            eprintln!("eplim: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
