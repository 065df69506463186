use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use multicbf::analysis::{certify, CertificationReport};
use multicbf::plot::{render_svg, PLANAR_ONLY};
use multicbf::scenario::{default_policy, Scenario};
use multicbf::simulator::{
    read_trajectory_csv, simulate, verify_invariance, write_trajectory_csv, ExitReason, RunReport,
};
use multicbf::Error;

/// `println!` that ignores a closed stdout, as when piped into `head`.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

/// Boundary samples per barrier used when certifying a scenario.
const CERT_BOUNDARY_SAMPLES: usize = 200;
/// Safe-set samples in the feasibility sweep.
const CERT_SWEEP_SAMPLES: usize = 500;
/// Allowed gap between a report's worst h and the value recomputed from CSV.
const ROUND_TRIP_TOL: f64 = 1e-12;

#[derive(Parser)]
#[command(
    name = "multicbf",
    version,
    about = "Certify and simulate multi-barrier safety specifications"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify a scenario; exit 0 iff certified.
    Check {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate the contraction margin gamma.
    Gamma {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Certify, then simulate every (policy, seed, start) case.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Output directory for trajectories and reports.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Run even if certification fails; outputs are marked UNCERTIFIED.
        #[arg(long)]
        force: bool,
        /// Override the step size.
        #[arg(long)]
        dt: Option<f64>,
        /// Run only this policy (taken from the file, or catalog defaults).
        #[arg(long)]
        policy: Option<String>,
        /// Include wall-clock times in the reports.
        #[arg(long)]
        timing: bool,
    },
    /// Render a planar trajectory and the barrier level sets as SVG.
    Plot {
        trajectory: PathBuf,
        scenario: PathBuf,
        /// Output SVG path (default: trajectory path with .svg extension).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-read trajectories and recompute the barrier values.
    Verify {
        scenario: PathBuf,
        /// A trajectory CSV or a run output directory.
        path: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Replace the scenario's seed list with a single seed.
    #[arg(long)]
    seed_override: Option<u64>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn domain(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn with_context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse(_) | Error::Io(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<u8, Failure>;

fn load(path: &Path, common: &Common) -> Result<Scenario, Failure> {
    let mut sc = Scenario::load(path)?;
    if let Some(seed) = common.seed_override {
        sc.seeds = vec![seed];
    }
    Ok(sc)
}

fn certify_scenario(sc: &Scenario) -> Result<CertificationReport, Failure> {
    Ok(certify(
        &sc.spec,
        &sc.sys,
        CERT_BOUNDARY_SAMPLES,
        CERT_SWEEP_SAMPLES,
        sc.seeds[0],
    )?)
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    use std::io::Write;
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let fail = |e: &dyn std::fmt::Display| Failure::io(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    tmp.write_all(contents).map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e))?;
    Ok(())
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(f64::to_string).collect();
    format!("[{}]", parts.join(", "))
}

fn cmd_check(scenario: &Path, common: &Common) -> CmdResult {
    let sc = load(scenario, common)?;
    let report = certify_scenario(&sc)?;
    out!("{}", report.to_json());
    for f in report.failures() {
        eprintln!("not certified: {f}");
    }
    Ok(if report.certified { 0 } else { 1 })
}

fn cmd_gamma(scenario: &Path, common: &Common) -> CmdResult {
    let sc = load(scenario, common)?;
    match sc.estimate_gamma() {
        Ok(est) => {
            out!("gamma = {}", est.gamma);
            out!("min_cheb_radius = {}", est.min_radius);
            out!("argmin = {}", fmt_vec(est.argmin.as_slice()));
            out!("samples = {}", est.samples);
            Ok(0)
        }
        Err(Error::SampleOutsideOmega { state }) => Err(Failure::domain(format!(
            "sampled state {} lies outside Omega: K(x) has empty interior",
            fmt_vec(&state)
        ))),
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct RunSummary {
    name: String,
    policy: String,
    seed: u64,
    x0: Vec<f64>,
    exit_reason: ExitReason,
    worst_h: f64,
    violations: usize,
    policy_events: usize,
}

#[derive(Serialize)]
struct Summary {
    certification: &'static str,
    gamma: f64,
    gamma_min_cheb_radius: Option<f64>,
    dt: f64,
    runs: Vec<RunSummary>,
    worst_h: f64,
    all_completed: bool,
    total_violations: usize,
}

struct Case {
    name: String,
    policy_index: usize,
    seed: u64,
    x0: nalgebra::DVector<f64>,
}

fn cmd_run(
    scenario: &Path,
    common: &Common,
    out: &Path,
    force: bool,
    dt: Option<f64>,
    policy: Option<&str>,
    timing: bool,
) -> CmdResult {
    let mut sc = load(scenario, common)?;
    if let Some(dt) = dt {
        sc.sim.dt = dt;
        sc.sim_config(0.0)
            .validate()
            .map_err(|e| Failure::io(format!("--dt: {e}")))?;
    }
    if let Some(name) = policy {
        let m = sc.spec.input_dim();
        let from_file: Vec<_> = sc.policies.iter().filter(|p| p.name() == name).cloned().collect();
        sc.policies = if from_file.is_empty() {
            vec![default_policy(name, m).map_err(|e| Failure::io(e.to_string()))?]
        } else {
            from_file
        };
    }

    let cert = certify_scenario(&sc)?;
    if !cert.certified {
        for f in cert.failures() {
            eprintln!("not certified: {f}");
        }
        if !force {
            return Err(Failure::domain("scenario is not certified; use --force to run anyway"));
        }
        eprintln!("warning: running an UNCERTIFIED scenario");
    }

    let (gamma, estimate) = match sc.resolve_gamma() {
        Ok(g) => g,
        Err(Error::SampleOutsideOmega { state }) => {
            return Err(Failure::domain(format!(
                "gamma estimation sampled {} outside Omega",
                fmt_vec(&state)
            )))
        }
        Err(e) => return Err(e.into()),
    };
    let cfg = sc.sim_config(gamma);

    std::fs::create_dir_all(out).map_err(|e| Failure::io(format!("cannot create {}: {e}", out.display())))?;

    let mut cases = Vec::new();
    for &seed in &sc.seeds {
        let starts = sc.initial_states(seed)?;
        for (pi, p) in sc.policies.iter().enumerate() {
            for (si, x0) in starts.iter().enumerate() {
                cases.push(Case {
                    name: format!("p{pi}_{}_seed{seed}_x{si}", p.name()),
                    policy_index: pi,
                    seed,
                    x0: x0.clone(),
                });
            }
        }
    }

    let m = sc.spec.input_dim();
    let results: Vec<Result<RunSummary, Failure>> = cases
        .par_iter()
        .map(|case| {
            let policy = &sc.policies[case.policy_index];
            let (traj, report) = simulate(&sc.spec, &sc.sys, policy, &case.x0, &cfg)
                .map_err(|e| Failure::from(e).with_context(&case.name))?;
            let mut csv = Vec::new();
            write_trajectory_csv(&traj, m, &mut csv)?;
            write_atomic(&out.join(format!("{}.csv", case.name)), &csv)?;
            write_atomic(
                &out.join(format!("{}.report.json", case.name)),
                report.to_json(timing).as_bytes(),
            )?;
            Ok(RunSummary {
                name: case.name.clone(),
                policy: policy.name().to_string(),
                seed: case.seed,
                x0: case.x0.iter().copied().collect(),
                exit_reason: report.exit_reason,
                worst_h: report.worst_h(),
                violations: report.violations.len(),
                policy_events: traj.policy_events.len(),
            })
        })
        .collect();
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let worst_h = runs.iter().map(|r| r.worst_h).fold(f64::NEG_INFINITY, f64::max);
    let all_completed = runs.iter().all(|r| r.exit_reason == ExitReason::Completed);
    let total_violations = runs.iter().map(|r| r.violations).sum();
    let summary = Summary {
        certification: if cert.certified { "CERTIFIED" } else { "UNCERTIFIED" },
        gamma,
        gamma_min_cheb_radius: estimate.map(|e| e.min_radius),
        dt: cfg.dt,
        runs,
        worst_h,
        all_completed,
        total_violations,
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_atomic(&out.join("summary.json"), text.as_bytes())?;
    if !cert.certified {
        write_atomic(
            &out.join("UNCERTIFIED"),
            b"certification failed; outputs produced with --force\n",
        )?;
    }

    for r in &summary.runs {
        out!(
            "{}: {:?}, worst h = {}, violations = {}",
            r.name,
            r.exit_reason,
            r.worst_h,
            r.violations
        );
    }
    out!(
        "{} runs, worst h = {}, all completed = {}, violations = {}, gamma = {}{}",
        summary.runs.len(),
        worst_h,
        all_completed,
        total_violations,
        gamma,
        if cert.certified { "" } else { " [UNCERTIFIED]" }
    );

    if !cert.certified {
        return Ok(3);
    }
    Ok(if all_completed && total_violations == 0 { 0 } else { 1 })
}

fn read_csv(path: &Path) -> Result<multicbf::Trajectory, Failure> {
    let file = std::fs::File::open(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    read_trajectory_csv(file).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn cmd_plot(trajectory: &Path, scenario: &Path, out: Option<&Path>) -> CmdResult {
    let sc = Scenario::load(scenario)?;
    if sc.state_dim() != 2 {
        return Err(Failure::domain(PLANAR_ONLY));
    }
    let traj = read_csv(trajectory)?;
    let svg = render_svg(&sc.spec, &traj)?;
    let target = out.map_or_else(|| trajectory.with_extension("svg"), Path::to_path_buf);
    write_atomic(&target, svg.as_bytes())?;
    out!("wrote {}", target.display());
    Ok(0)
}

fn cmd_verify(scenario: &Path, path: &Path) -> CmdResult {
    let sc = Scenario::load(scenario)?;
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(Failure::io(format!("no trajectory CSV files in {}", path.display())));
    }
    let tol = sc.sim.violation_tol;
    let mut worst = f64::NEG_INFINITY;
    let mut all_ok = true;
    for f in &files {
        let traj = read_csv(f)?;
        let chk = verify_invariance(&traj, &sc.spec, tol)?;
        let report_path = f.with_extension("report.json");
        if let Ok(text) = std::fs::read_to_string(&report_path) {
            let rep = RunReport::from_json(&text)?;
            if (rep.worst_h() - chk.worst).abs() > ROUND_TRIP_TOL {
                eprintln!(
                    "{}: recomputed worst h {} differs from the report's {}",
                    f.display(),
                    chk.worst,
                    rep.worst_h()
                );
                all_ok = false;
            }
        }
        out!(
            "{}: worst h = {} at {:?}, {}",
            f.file_name()
                .map_or_else(|| f.display().to_string(), |n| n.to_string_lossy().into_owned()),
            chk.worst,
            chk.argworst,
            if chk.ok { "ok" } else { "VIOLATED" }
        );
        worst = worst.max(chk.worst);
        all_ok &= chk.ok;
    }
    out!("{} trajectories, worst h = {worst}, tol = {tol}", files.len());
    Ok(if all_ok { 0 } else { 1 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Check { scenario, common } => cmd_check(scenario, common),
        Command::Gamma { scenario, common } => cmd_gamma(scenario, common),
        Command::Run {
            scenario,
            common,
            out,
            force,
            dt,
            policy,
            timing,
        } => cmd_run(scenario, common, out, *force, *dt, policy.as_deref(), *timing),
        Command::Plot {
            trajectory,
            scenario,
            out,
        } => cmd_plot(trajectory, scenario, out.as_deref()),
        Command::Verify { scenario, path } => cmd_verify(scenario, path),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
