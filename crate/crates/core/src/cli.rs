//! Scenario runs from the command line.
//!
//! Each scenario writes into `<out>/<name>/`:
//! `trajectory_reference.csv`, `trajectory_geodesic.csv` (for the modes
//! run), `report.json` and `plot.tsv`. Files are staged next to their
//! destination and renamed into place only once all of them are complete.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use tempfile::NamedTempFile;
use thiserror::Error;

use crate::dynamics::{
    integrate, integrate_on_grid, DynamicsError, IntegrationMode, IntegrationOptions, Trajectory,
};
use crate::geometry::SignConvention;
use crate::scenario::{
    load_scenario, ModeSelection, Scenario, ScenarioError, SignChoice, ADAPTIVE_TOLERANCE,
};
use crate::verify::{
    calibrate_sign, run_checks, Identity, ResidualReport, Verification, VerifyError,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "torsion-geodesic",
    version,
    about = "Check classical trajectories against geodesics of a torsionful connection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate scenarios in both formulations and check every identity.
    Run(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario JSON files.
    #[arg(required = true)]
    pub scenarios: Vec<PathBuf>,
    /// Output root; each scenario writes to `<out>/<name>/`.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeSelection>,
    /// Step size, overriding the scenario's `h`.
    #[arg(long)]
    pub h: Option<f64>,
    /// Scenarios run concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, value_enum)]
    pub sign: Option<SignChoice>,
    /// Test hook: multiply the torsion driving the geodesic integrator by
    /// FACTOR. Any value other than 1 should make the run fail verification.
    #[arg(long, value_name = "FACTOR")]
    pub corrupt_torsion: Option<f64>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("{0}")]
    Usage(String),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Command-line settings that take precedence over the scenario file.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunOverrides {
    pub mode: Option<ModeSelection>,
    pub h: Option<f64>,
    pub sign: Option<SignChoice>,
    pub corrupt_torsion: Option<f64>,
}

impl RunOverrides {
    pub fn from_args(args: &RunArgs) -> Self {
        Self {
            mode: args.mode,
            h: args.h,
            sign: args.sign,
            corrupt_torsion: args.corrupt_torsion,
        }
    }

    fn describe(&self) -> String {
        let mut out = String::new();
        if let Some(m) = self.mode {
            let _ = write!(out, "mode={m};");
        }
        if let Some(h) = self.h {
            let _ = write!(out, "h={};", num(h));
        }
        if let Some(s) = self.sign {
            let _ = write!(out, "sign={s};");
        }
        if let Some(f) = self.corrupt_torsion {
            let _ = write!(out, "corrupt_torsion={};", num(f));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SignSource {
    Calibrated,
    Scenario,
    Override,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSettings {
    pub h: f64,
    pub t_end: f64,
    pub adaptive: bool,
    pub torsion_scale: f64,
    pub sign_source: SignSource,
    pub exit_code: i32,
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    schema: u32,
    #[serde(flatten)]
    report: &'a ResidualReport,
    run: &'a RunSettings,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub name: String,
    pub dir: PathBuf,
    pub report: ResidualReport,
    pub settings: RunSettings,
    pub exit_code: i32,
}

fn num(v: f64) -> String {
    let mut buf = ryu::Buffer::new();
    buf.format(v).to_owned()
}

fn resolve_sign(
    scenario: &Scenario,
    overrides: &RunOverrides,
) -> Result<(SignConvention, SignSource), RunError> {
    let (choice, source) = match overrides.sign {
        Some(s) => (s, SignSource::Override),
        None => (scenario.sign, SignSource::Scenario),
    };
    Ok(match choice.fixed() {
        Some(s) => (s, source),
        None => (calibrate_sign()?.chosen, SignSource::Calibrated),
    })
}

fn integrate_modes(
    scenario: &Scenario,
    modes: ModeSelection,
    h: f64,
    torsion_scale: f64,
) -> Result<(Option<Trajectory>, Option<Trajectory>), RunError> {
    let field = &scenario.field;
    let initial = &scenario.initial;
    let adaptive = scenario.adaptive.then_some(ADAPTIVE_TOLERANCE);
    let reference = if modes.reference() {
        let opts = IntegrationOptions {
            torsion_scale: 1.0,
            adaptive,
        };
        Some(integrate(
            IntegrationMode::Reference,
            field,
            initial,
            h,
            scenario.t_end,
            opts,
        )?)
    } else {
        None
    };
    let geo_opts = IntegrationOptions {
        torsion_scale,
        adaptive: None,
    };
    let geodesic = match (&reference, modes.geodesic()) {
        (_, false) => None,
        // Adaptive runs share the reference grid so samples pair up.
        (Some(r), true) if adaptive.is_some() && r.samples.len() >= 2 => Some(integrate_on_grid(
            IntegrationMode::Geodesic,
            field,
            initial,
            &r.times(),
            geo_opts,
        )?),
        _ => {
            let opts = IntegrationOptions {
                adaptive,
                ..geo_opts
            };
            Some(integrate(
                IntegrationMode::Geodesic,
                field,
                initial,
                h,
                scenario.t_end,
                opts,
            )?)
        }
    };
    Ok((reference, geodesic))
}

/// Runs one scenario and writes its outputs under `out_root`.
pub fn run_scenario(
    scenario: &Scenario,
    out_root: &Path,
    overrides: &RunOverrides,
) -> Result<RunOutcome, RunError> {
    let h = overrides.h.unwrap_or(scenario.h);
    if !(h > 0.0 && h.is_finite()) {
        return Err(RunError::Usage(format!("step must be positive, got {h}")));
    }
    let torsion_scale = overrides.corrupt_torsion.unwrap_or(1.0);
    if !torsion_scale.is_finite() {
        return Err(RunError::Usage(format!(
            "torsion factor must be finite, got {torsion_scale}"
        )));
    }
    let modes = overrides.mode.unwrap_or(scenario.mode);
    let (sign, sign_source) = resolve_sign(scenario, overrides)?;
    let (reference, geodesic) = integrate_modes(scenario, modes, h, torsion_scale)?;

    let mut verification = run_checks(
        reference.as_ref(),
        geodesic.as_ref(),
        &scenario.tolerances,
        sign,
    )?;
    verification.report.scenario = Some(scenario.name.clone());
    verification.report.fingerprint = Some(scenario.fingerprint(&overrides.describe()));
    let exit_code = if !verification.report.terminations.is_empty() {
        EXIT_RUNTIME
    } else if verification.report.passed() {
        EXIT_PASS
    } else {
        EXIT_VERIFY
    };
    let settings = RunSettings {
        h,
        t_end: scenario.t_end,
        adaptive: scenario.adaptive,
        torsion_scale,
        sign_source,
        exit_code,
    };

    let dir = out_root.join(&scenario.name);
    let trajectories: Vec<&Trajectory> = [reference.as_ref(), geodesic.as_ref()]
        .into_iter()
        .flatten()
        .collect();
    write_outputs(&dir, &trajectories, &verification, &settings)?;
    Ok(RunOutcome {
        name: scenario.name.clone(),
        dir,
        report: verification.report,
        settings,
        exit_code,
    })
}

pub fn trajectory_file_name(mode: IntegrationMode) -> String {
    format!("trajectory_{mode}.csv")
}

/// Trajectory CSV: kinematics, then one column per identity (empty where the
/// identity is not evaluated on this mode).
pub fn trajectory_csv(tr: &Trajectory, verification: &Verification) -> String {
    let columns: Vec<Option<&[f64]>> = Identity::ALL
        .iter()
        .map(|&id| {
            verification
                .mode_series(tr.mode)
                .find(|s| s.identity == id)
                .map(|s| s.values.as_slice())
        })
        .collect();
    let mut out = String::from("t,x,y,z,vx,vy,vz,tau,p0,goo");
    for id in Identity::ALL {
        out.push(',');
        out.push_str(id.name());
    }
    out.push('\n');
    let mut buf = ryu::Buffer::new();
    for (k, s) in tr.samples.iter().enumerate() {
        let st = &s.state;
        let fields = [
            st.t,
            st.x[0],
            st.x[1],
            st.x[2],
            st.v[0],
            st.v[1],
            st.v[2],
            st.tau,
            s.momentum.p0,
            s.connection.goo,
        ];
        for (i, v) in fields.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(buf.format(*v));
        }
        for col in &columns {
            out.push(',');
            if let Some(v) = col.and_then(|c| c.get(k)) {
                out.push_str(buf.format(*v));
            }
        }
        out.push('\n');
    }
    out
}

/// Plot data: one `# name` block of `t<TAB>value` lines per identity,
/// blocks separated by a blank line.
pub fn plot_tsv(verification: &Verification) -> String {
    let mut out = String::new();
    let mut buf = ryu::Buffer::new();
    for summary in &verification.report.identities {
        let Some((times, values)) = verification.combined(summary.name) else {
            continue;
        };
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str("# ");
        out.push_str(summary.name.name());
        out.push('\n');
        for (t, v) in times.iter().zip(&values) {
            out.push_str(buf.format(*t));
            out.push('\t');
            out.push_str(buf.format(*v));
            out.push('\n');
        }
    }
    out
}

pub fn report_json(report: &ResidualReport, settings: &RunSettings) -> String {
    let doc = ReportDocument {
        schema: crate::scenario::SCHEMA_VERSION,
        report,
        run: settings,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

fn write_outputs(
    dir: &Path,
    trajectories: &[&Trajectory],
    v: &Verification,
    settings: &RunSettings,
) -> Result<(), RunError> {
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| RunError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut files: Vec<(String, String)> = trajectories
        .iter()
        .map(|tr| (trajectory_file_name(tr.mode), trajectory_csv(tr, v)))
        .collect();
    files.push(("report.json".into(), report_json(&v.report, settings)));
    files.push(("plot.tsv".into(), plot_tsv(v)));

    let mut staged = Vec::with_capacity(files.len());
    for (name, content) in files {
        let dest = dir.join(name);
        let mut tmp = NamedTempFile::new_in(dir).map_err(io(&dest))?;
        tmp.write_all(content.as_bytes()).map_err(io(&dest))?;
        tmp.as_file().sync_all().map_err(io(&dest))?;
        staged.push((tmp, dest));
    }
    for (tmp, dest) in staged {
        tmp.persist(&dest).map_err(|e| RunError::Io {
            path: dest.clone(),
            source: e.error,
        })?;
    }
    for mode in [IntegrationMode::Reference, IntegrationMode::Geodesic] {
        if !trajectories.iter().any(|t| t.mode == mode) {
            let stale = dir.join(trajectory_file_name(mode));
            if stale.exists() {
                std::fs::remove_file(&stale).map_err(io(&stale))?;
            }
        }
    }
    Ok(())
}

/// Combined exit code: runtime errors outrank verification failures.
pub fn combine_exit_codes(codes: impl IntoIterator<Item = i32>) -> i32 {
    codes.into_iter().fold(EXIT_PASS, |acc, c| match (acc, c) {
        (EXIT_RUNTIME, _) | (_, EXIT_RUNTIME) => EXIT_RUNTIME,
        (EXIT_VERIFY, _) | (_, EXIT_VERIFY) => EXIT_VERIFY,
        _ => EXIT_PASS,
    })
}

fn summary_line(outcome: &RunOutcome) -> String {
    let r = &outcome.report;
    let status = if let Some(t) = r.terminations.first() {
        format!("terminated in {} mode: {}", t.mode, t.termination.message)
    } else if r.passed() {
        "pass".to_owned()
    } else {
        let failing: Vec<&str> = r.failing().iter().map(|i| i.name()).collect();
        format!("FAIL [{}]", failing.join(", "))
    };
    format!("{}: {} ({})", outcome.name, status, outcome.dir.display())
}

/// Runs every scenario in `args` and returns the process exit code.
pub fn run_command(args: &RunArgs) -> i32 {
    if args.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return EXIT_RUNTIME;
    }
    let overrides = RunOverrides::from_args(args);
    let loaded: Vec<(PathBuf, Result<Scenario, ScenarioError>)> = args
        .scenarios
        .iter()
        .map(|p| (p.clone(), load_scenario(p)))
        .collect();
    let mut seen = BTreeSet::new();
    for (path, s) in &loaded {
        if let Ok(s) = s {
            if !seen.insert(s.name.clone()) {
                eprintln!(
                    "error: {}: scenario name `{}` is used more than once",
                    path.display(),
                    s.name
                );
                return EXIT_RUNTIME;
            }
        }
    }
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_RUNTIME;
        }
    };
    let results: Vec<(PathBuf, Result<RunOutcome, RunError>)> = pool.install(|| {
        loaded
            .into_par_iter()
            .map(|(path, s)| {
                let outcome = s
                    .map_err(RunError::from)
                    .and_then(|s| run_scenario(&s, &args.out, &overrides));
                (path, outcome)
            })
            .collect()
    });
    let mut codes = Vec::with_capacity(results.len());
    for (path, result) in &results {
        match result {
            Ok(outcome) => {
                println!("{}", summary_line(outcome));
                codes.push(outcome.exit_code);
            }
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                codes.push(EXIT_RUNTIME);
            }
        }
    }
    combine_exit_codes(codes)
}

pub fn execute(cli: &Cli) -> i32 {
    match &cli.command {
        Command::Run(args) => run_command(args),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_code_precedence() {
        assert_eq!(combine_exit_codes([]), EXIT_PASS);
        assert_eq!(combine_exit_codes([0, 0]), EXIT_PASS);
        assert_eq!(combine_exit_codes([0, 2, 0]), EXIT_VERIFY);
        assert_eq!(combine_exit_codes([2, 1, 0]), EXIT_RUNTIME);
        assert_eq!(combine_exit_codes([1, 2]), EXIT_RUNTIME);
    }

    #[test]
    fn overrides_feed_the_fingerprint() {
        assert_eq!(RunOverrides::default().describe(), "");
        let o = RunOverrides {
            h: Some(0.002),
            corrupt_torsion: Some(2.0),
            ..Default::default()
        };
        assert_eq!(o.describe(), "h=0.002;corrupt_torsion=2.0;");
    }

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from([
            "torsion-geodesic",
            "run",
            "a.json",
            "b.json",
            "--out",
            "o",
            "--mode",
            "geodesic",
            "--h",
            "0.002",
            "--jobs",
            "4",
            "--sign",
            "minus",
            "--corrupt-torsion",
            "2",
        ])
        .unwrap();
        let Command::Run(args) = cli.command;
        assert_eq!(args.scenarios.len(), 2);
        assert_eq!(args.mode, Some(ModeSelection::Geodesic));
        assert_eq!(args.sign, Some(SignChoice::Minus));
        assert_eq!(
            (args.h, args.jobs, args.corrupt_torsion),
            (Some(0.002), 4, Some(2.0))
        );
        assert!(Cli::try_parse_from(["torsion-geodesic", "run"]).is_err());
        assert!(
            Cli::try_parse_from(["torsion-geodesic", "run", "a.json", "--mode", "sideways"])
                .is_err()
        );
    }
}
