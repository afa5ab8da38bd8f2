//! Command-line front end: subcommands over a [`Scenario`].

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::curvature::{anosov_report, magnetic_operator, magnetic_sectional_of_plane};
use crate::diagnostics::{
    conjugate_point_scan, lyapunov_spectrum, transversality_angle, volume_drift, LyapunovConfig,
};
use crate::error::{Error, Result};
use crate::flow::{dynamical_exp_derivative, integrate, PhaseState};
use crate::linalg::{self, Matrix, Vector};
use crate::magnetic::MagneticSystem;
use crate::registry::build_system;
use crate::scenario::{self, Scenario, SubmanifoldSpec, DEFAULT_TOLERANCE};
use crate::submanifolds::{
    alpha_defect, candidate_submanifold, cartan_probe, invariance_defect, AlphaConfig,
    CartanConfig, HyperplaneElement, ParamSubmanifold, SampleRegion,
};
use crate::transport::{closed_orbit_holonomy, transport_path};

const DEFAULT_SAMPLES: usize = 50;
const DEFAULT_PLANES: usize = 100;
const DEFAULT_SCAN_STEPS: usize = 100;

#[derive(Debug, Parser)]
#[command(
    name = "magflow",
    version,
    about = "Magnetic geodesic flows on chart-defined manifolds"
)]
pub struct Cli {
    /// Output directory; overrides `output.dir` of the scenario.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Sampling seed; overrides `seed` of the scenario
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for parallel sampling.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Speed tolerance; overrides `tolerance` of the scenario.
    #[arg(long, global = true, value_name = "X")]
    pub tolerance: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArg {
    pub scenario: PathBuf,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Trajectory CSV.
    Integrate(ScenarioArg),
    /// Dynamical exponential of `initial.v` at `initial.x` and its derivative.
    Exp(ScenarioArg),
    /// Magnetic curvature operator and sectional curvature at one point.
    Curvature(ScenarioArg),
    /// Sampled range of the magnetic sectional curvature.
    Sec(ScenarioArg),
    /// Curvature sign check over sampled planes with a verdict.
    AnosovReport(ScenarioArg),
    /// Invariance defect of `params.submanifold`.
    Defect(ScenarioArg),
    /// Search for totally magnetic k-planes through sampled points.
    CartanProbe(ScenarioArg),
    /// Magnetic parallel transport along the orbit.
    Transport(ScenarioArg),
    /// Holonomy of a closed orbit.
    Holonomy(ScenarioArg),
    /// Finite-time Lyapunov spectrum of the orbit.
    Lyapunov(ScenarioArg),
    /// Angle between the contracting and vertical subspaces.
    Angle(ScenarioArg),
    /// Phase-space volume drift along the orbit.
    Volume(ScenarioArg),
    /// Singular values of the exponential derivative along a ray.
    ConjugateScan(ScenarioArg),
    /// Sweep of `s` reporting the largest sectional curvature and top exponent.
    Regimes(ScenarioArg),
    /// Print the JSON schema of scenario files.
    Schema,
}

impl Command {
    /// The computation requested and its scenario file; `None` for `schema`.
    pub fn split(&self) -> Option<(Kind, &Path)> {
        let (kind, arg) = match self {
            Command::Integrate(a) => (Kind::Integrate, a),
            Command::Exp(a) => (Kind::Exp, a),
            Command::Curvature(a) => (Kind::Curvature, a),
            Command::Sec(a) => (Kind::Sec, a),
            Command::AnosovReport(a) => (Kind::AnosovReport, a),
            Command::Defect(a) => (Kind::Defect, a),
            Command::CartanProbe(a) => (Kind::CartanProbe, a),
            Command::Transport(a) => (Kind::Transport, a),
            Command::Holonomy(a) => (Kind::Holonomy, a),
            Command::Lyapunov(a) => (Kind::Lyapunov, a),
            Command::Angle(a) => (Kind::Angle, a),
            Command::Volume(a) => (Kind::Volume, a),
            Command::ConjugateScan(a) => (Kind::ConjugateScan, a),
            Command::Regimes(a) => (Kind::Regimes, a),
            Command::Schema => return None,
        };
        Some((kind, arg.scenario.as_path()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Integrate,
    Exp,
    Curvature,
    Sec,
    AnosovReport,
    Defect,
    CartanProbe,
    Transport,
    Holonomy,
    Lyapunov,
    Angle,
    Volume,
    ConjugateScan,
    Regimes,
}

impl Kind {
    pub const ALL: [Kind; 14] = [
        Kind::Integrate,
        Kind::Exp,
        Kind::Curvature,
        Kind::Sec,
        Kind::AnosovReport,
        Kind::Defect,
        Kind::CartanProbe,
        Kind::Transport,
        Kind::Holonomy,
        Kind::Lyapunov,
        Kind::Angle,
        Kind::Volume,
        Kind::ConjugateScan,
        Kind::Regimes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Integrate => "integrate",
            Kind::Exp => "exp",
            Kind::Curvature => "curvature",
            Kind::Sec => "sec",
            Kind::AnosovReport => "anosov-report",
            Kind::Defect => "defect",
            Kind::CartanProbe => "cartan-probe",
            Kind::Transport => "transport",
            Kind::Holonomy => "holonomy",
            Kind::Lyapunov => "lyapunov",
            Kind::Angle => "angle",
            Kind::Volume => "volume",
            Kind::ConjugateScan => "conjugate-scan",
            Kind::Regimes => "regimes",
        }
    }

    pub fn from_name(name: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// A named output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

impl Artifact {
    fn json<T: Serialize>(name: &str, value: &T) -> Self {
        let mut contents = serde_json::to_vec_pretty(value).expect("reports serialize");
        contents.push(b'\n');
        Artifact {
            name: name.into(),
            contents,
        }
    }

    fn csv(name: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Self {
        let mut contents = Vec::new();
        write(&mut contents).expect("writing to memory cannot fail");
        Artifact {
            name: name.into(),
            contents,
        }
    }

    pub fn is_json(&self) -> bool {
        self.name.ends_with(".json")
    }
}

/// Command-line values that take precedence over the scenario.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tolerance: Option<f64>,
}

/// Resolved inputs shared by all commands.
struct Context<'a> {
    scenario: &'a Scenario,
    sys: MagneticSystem,
    seed: u64,
    tolerance: f64,
}

impl Context<'_> {
    fn require<T: Copy>(&self, field: &str, value: Option<T>) -> Result<T> {
        value.ok_or_else(|| Error::InvalidConfig(format!("{field}: required by this command")))
    }

    fn horizon(&self) -> Result<f64> {
        self.require("horizon", self.scenario.horizon)
    }

    fn speed(&self) -> f64 {
        self.scenario.speed.unwrap_or(1.0)
    }

    fn initial(&self) -> Result<(Vector, Vector)> {
        let init = self
            .scenario
            .initial
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("initial: required by this command".into()))?;
        Ok((
            Vector::from_vec(init.x.clone()),
            Vector::from_vec(init.v.clone()),
        ))
    }

    /// `(initial.x, initial.v)` checked against `speed` when one is given.
    fn state(&self) -> Result<PhaseState> {
        let (x, v) = self.initial()?;
        self.sys.manifold().chart().check(&x)?;
        match self.scenario.speed {
            None => {
                let state = PhaseState::new(&self.sys, x, v)?;
                if state.speed == 0.0 {
                    return Err(Error::InvalidConfig("initial.v: must be nonzero".into()));
                }
                Ok(state)
            }
            Some(s) => {
                PhaseState::with_speed(&self.sys, x, v, s, self.tolerance).map_err(|e| match e {
                    Error::NonUnitVector { norm } => Error::InvalidConfig(format!(
                        "initial.v: g-norm is {} times the declared speed, outside tolerance {}",
                        norm, self.tolerance
                    )),
                    other => other,
                })
            }
        }
    }

    fn lyapunov(&self) -> LyapunovConfig {
        LyapunovConfig {
            interval: self
                .scenario
                .params
                .interval
                .unwrap_or(LyapunovConfig::default().interval),
            integrator: self.scenario.integrator,
        }
    }

    fn samples(&self) -> usize {
        self.scenario.params.samples.unwrap_or(DEFAULT_SAMPLES)
    }
}

#[derive(Serialize)]
struct ExpReport {
    x: Vec<f64>,
    u: Vec<f64>,
    point: Vec<f64>,
    /// Row-major `d_u exp_x`.
    derivative: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct CurvatureReport {
    s: f64,
    x: Vec<f64>,
    v: Vec<f64>,
    w: Vec<f64>,
    riemannian_sectional: f64,
    magnetic_sectional: f64,
    /// Matrix of `M^s` on `v^⊥` in the completed orthonormal frame.
    operator: Vec<Vec<f64>>,
    frame: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct SecReport {
    s: f64,
    min: f64,
    max: f64,
    mean: f64,
    samples: usize,
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

fn vec_of(v: &Vector) -> Vec<f64> {
    v.iter().cloned().collect()
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Runs one command and returns its output files. Pure apart from the rayon
/// pool it runs in; outputs depend only on the scenario and the overrides.
pub fn execute(kind: Kind, scenario: &Scenario, overrides: Overrides) -> Result<Vec<Artifact>> {
    scenario.validate()?;
    if let Some(tol) = overrides.tolerance {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "--tolerance: must be positive, got {tol}"
            )));
        }
    }
    let sys = build_system(&scenario.manifold, &scenario.magnetic)?;
    let ctx = Context {
        scenario,
        sys,
        seed: overrides.seed.unwrap_or(scenario.seed),
        tolerance: overrides
            .tolerance
            .or(scenario.tolerance)
            .unwrap_or(DEFAULT_TOLERANCE),
    };
    let sys = &ctx.sys;
    let cfg = &scenario.integrator;
    let params = &scenario.params;
    let name = kind.name();
    let out = match kind {
        Kind::Integrate => {
            let traj = integrate(sys, &ctx.state()?, ctx.horizon()?, cfg)?;
            if let Some(t) = traj.domain_exit {
                log::warn!("orbit left the chart at t = {t}; the trajectory is truncated");
            }
            vec![Artifact::csv("integrate.csv", |w| traj.write_csv(w))]
        }
        Kind::Exp => {
            let (x, u) = ctx.initial()?;
            let (point, d) = dynamical_exp_derivative(sys, &x, &u, cfg)?;
            let report = ExpReport {
                x: vec_of(&x),
                u: vec_of(&u),
                point: vec_of(&point),
                derivative: rows(&d),
            };
            vec![Artifact::json("exp.json", &report)]
        }
        Kind::Curvature => {
            let (x, v) = ctx.initial()?;
            let w = Vector::from_vec(params.vector.clone().ok_or_else(|| {
                Error::InvalidConfig("params.vector: required by this command".into())
            })?);
            let s = ctx.speed();
            let m = sys.manifold();
            let g = m.metric_eval(&x)?;
            let frame = linalg::gram_schmidt(&g, &[v.clone(), w.clone()], 1e-8, 2);
            if frame.len() < 2 {
                return Err(Error::DegeneratePlane { gram: 0.0 });
            }
            let op = magnetic_operator(sys, s, &x, &frame[0])?;
            let report = CurvatureReport {
                s,
                x: vec_of(&x),
                v: vec_of(&frame[0]),
                w: vec_of(&frame[1]),
                riemannian_sectional: m.sectional(&x, &v, &w)?,
                magnetic_sectional: magnetic_sectional_of_plane(sys, s, &x, &v, &w)?,
                operator: rows(&op.matrix),
                frame: op.frame.iter().map(vec_of).collect(),
            };
            vec![Artifact::json("curvature.json", &report)]
        }
        Kind::Sec => {
            let s = ctx.speed();
            let r = anosov_report(sys, s, ctx.samples(), ctx.seed)?;
            let report = SecReport {
                s,
                min: r.min,
                max: r.max,
                mean: r.mean,
                samples: r.samples,
            };
            vec![Artifact::json("sec.json", &report)]
        }
        Kind::AnosovReport => {
            let report = anosov_report(sys, ctx.speed(), ctx.samples(), ctx.seed)?;
            vec![Artifact::json("anosov-report.json", &report)]
        }
        Kind::Defect => {
            let spec = params.submanifold.as_ref().ok_or_else(|| {
                Error::InvalidConfig("params.submanifold: required by this command".into())
            })?;
            let report = match spec {
                SubmanifoldSpec::Hypersurface {
                    normal,
                    radius,
                    radii,
                } => {
                    let (x, _) = ctx.initial()?;
                    let plane = HyperplaneElement::from_normal(
                        sys.manifold(),
                        x,
                        Vector::from_vec(normal.clone()),
                    )?;
                    let mut config = AlphaConfig::with_radius(*radius, *radii);
                    config.integrator = *cfg;
                    alpha_defect(sys, &plane, &config)?
                }
                other => invariance_defect(
                    sys,
                    &build_submanifold(&ctx, other)?,
                    ctx.samples(),
                    ctx.seed,
                )?,
            };
            vec![Artifact::json("defect.json", &report)]
        }
        Kind::CartanProbe => {
            let config = CartanConfig {
                radius: params.radius.unwrap_or(CartanConfig::default().radius),
                integrator: *cfg,
                ..CartanConfig::default()
            };
            let k = params.k.unwrap_or(2);
            let report = cartan_probe(
                sys,
                k,
                params.planes.unwrap_or(DEFAULT_PLANES),
                ctx.seed,
                &config,
            )?;
            vec![
                Artifact::json("cartan-probe.json", &report),
                Artifact::csv("cartan-probe.csv", |w| report.write_csv(w)),
            ]
        }
        Kind::Transport => {
            let state = ctx.state()?;
            let ws = match &params.vectors {
                Some(ws) => ws.iter().map(|w| Vector::from_vec(w.clone())).collect(),
                None => sys.manifold().orthonormal_completion(&state.x, &state.v)?,
            };
            let path = transport_path(sys, &state, &ws, ctx.horizon()?, cfg)?;
            let csv = transport_csv(
                sys,
                &path.trajectory.times,
                &path.trajectory.states,
                &path.vectors,
            )?;
            vec![Artifact {
                name: "transport.csv".into(),
                contents: csv,
            }]
        }
        Kind::Holonomy => {
            let state = ctx.state()?;
            let period = ctx.require("params.period", params.period)?;
            let hol = closed_orbit_holonomy(sys, &state, period, cfg)?;
            vec![Artifact::csv("holonomy.csv", |w| hol.write_csv(w))]
        }
        Kind::Lyapunov => {
            let report = lyapunov_spectrum(sys, &ctx.state()?, ctx.horizon()?, &ctx.lyapunov())?;
            vec![
                Artifact::json("lyapunov.json", &report),
                Artifact::csv("lyapunov.csv", |w| report.write_csv(w)),
            ]
        }
        Kind::Angle => {
            let report = transversality_angle(sys, &ctx.state()?, ctx.horizon()?, &ctx.lyapunov())?;
            vec![Artifact::json("angle.json", &report)]
        }
        Kind::Volume => {
            let report = volume_drift(sys, &ctx.state()?, ctx.horizon()?, &ctx.lyapunov())?;
            vec![Artifact::json("volume.json", &report)]
        }
        Kind::ConjugateScan => {
            let (x, v) = ctx.initial()?;
            let direction = params.direction.clone().map(Vector::from_vec).unwrap_or(v);
            let t_max = ctx.require("params.t_max", params.t_max)?;
            let scan = conjugate_point_scan(
                sys,
                &x,
                &direction,
                t_max,
                params.steps.unwrap_or(DEFAULT_SCAN_STEPS),
                cfg,
            )?;
            vec![Artifact::csv("conjugate-scan.csv", |w| scan.write_csv(w))]
        }
        Kind::Regimes => vec![regimes(&ctx)?],
    };
    log::info!("{name}: produced {} file(s)", out.len());
    Ok(out)
}

fn build_submanifold(ctx: &Context, spec: &SubmanifoldSpec) -> Result<ParamSubmanifold> {
    let vectors = |vs: &[Vec<f64>]| {
        vs.iter()
            .map(|b| Vector::from_vec(b.clone()))
            .collect::<Vec<_>>()
    };
    match spec {
        SubmanifoldSpec::Affine {
            origin,
            basis,
            bounds,
        } => ParamSubmanifold::affine(
            Vector::from_vec(origin.clone()),
            vectors(basis),
            SampleRegion::Box(bounds.clone()),
        ),
        SubmanifoldSpec::Sphere {
            center,
            radius,
            margin,
        } => ParamSubmanifold::sphere(Vector::from_vec(center.clone()), *radius, *margin),
        SubmanifoldSpec::ExpImage {
            basis,
            radius,
            grid,
        } => {
            let (x, _) = ctx.initial()?;
            let basis = vectors(basis);
            let grid = grid.unwrap_or_else(|| crate::submanifolds::default_per_axis(basis.len()));
            candidate_submanifold(
                &ctx.sys,
                &x,
                &basis,
                *radius,
                grid,
                &ctx.scenario.integrator,
            )
        }
        SubmanifoldSpec::Hypersurface { .. } => unreachable!("handled by the fiber quadrature"),
    }
}

/// Header `t,x1..xn,v1..vn,w{j}_{i}...,gram_drift`, where `gram_drift` is
/// `max |G(t) − G(0)|` for the Gram matrix of the carried vectors.
fn transport_csv(
    sys: &MagneticSystem,
    times: &[f64],
    states: &[PhaseState],
    vectors: &[Vec<Vector>],
) -> Result<Vec<u8>> {
    let n = sys.dim();
    let count = vectors.first().map_or(0, |v| v.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("v{i}")));
    for j in 1..=count {
        header.extend((1..=n).map(|i| format!("w{j}_{i}")));
    }
    header.push("gram_drift".into());
    let mut out = Vec::new();
    let io = |e: std::io::Error| Error::InvalidConfig(e.to_string());
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    let mut gram0: Option<Matrix> = None;
    for ((t, s), ws) in times.iter().zip(states).zip(vectors) {
        let g = sys.manifold().metric_eval(&s.x)?;
        let e = linalg::columns(ws);
        let gram = e.transpose() * g * &e;
        let drift = linalg::max_abs(&(&gram - gram0.get_or_insert_with(|| gram.clone()).clone()));
        let mut row = vec![
            t.to_string(),
            join(s.x.iter().cloned()),
            join(s.v.iter().cloned()),
        ];
        row.extend(ws.iter().map(|w| join(w.iter().cloned())));
        row.push(drift.to_string());
        writeln!(out, "{}", row.join(",")).map_err(io)?;
    }
    Ok(out)
}

/// Header `s,max_sec,top_exponent`. Each row samples `Sec^s` and runs the
/// Lyapunov estimate from `initial` rescaled to speed `s`.
fn regimes(ctx: &Context) -> Result<Artifact> {
    let params = &ctx.scenario.params;
    let s_values = params
        .s_values
        .clone()
        .ok_or_else(|| Error::InvalidConfig("params.s_values: required by this command".into()))?;
    let (x, v) = ctx.initial()?;
    let horizon = ctx.horizon()?;
    let lyap = ctx.lyapunov();
    let mut out = String::from("s,max_sec,top_exponent\n");
    for s in s_values {
        let sec = anosov_report(&ctx.sys, s, ctx.samples(), ctx.seed)?;
        let state = PhaseState::normalized(&ctx.sys, x.clone(), v.clone(), s)?;
        let top = lyapunov_spectrum(&ctx.sys, &state, horizon, &lyap)?.exponents[0];
        out.push_str(&format!("{s},{},{top}\n", sec.max));
    }
    Ok(Artifact {
        name: "regimes.csv".into(),
        contents: out.into_bytes(),
    })
}

/// Process exit status for a failure: 2 for input problems, 3 for numerical ones.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: e.exit_code(),
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    }
}

fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> std::result::Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    for a in artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.contents).map_err(|e| io_failure(&path, e))?;
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn run_parsed(cli: Cli) -> std::result::Result<(), Failure> {
    let Some((kind, path)) = cli.command.split() else {
        println!("{}", scenario::schema());
        return Ok(());
    };
    let scenario = Scenario::from_path(path)?;
    let overrides = Overrides {
        seed: cli.seed,
        tolerance: cli.tolerance,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidConfig("--threads: must be at least 1".into()).into());
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Failure {
        code: 2,
        message: format!("--threads: {e}"),
    })?;
    let artifacts = pool.install(|| execute(kind, &scenario, overrides))?;
    let dir = cli
        .out
        .or_else(|| scenario.output.as_ref().map(|o| o.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    write_artifacts(&dir, &artifacts)?;
    let mut stdout = std::io::stdout().lock();
    for a in artifacts.iter().filter(|a| a.is_json()) {
        stdout
            .write_all(&a.contents)
            .map_err(|e| io_failure(Path::new("<stdout>"), e))?;
    }
    Ok(())
}

/// Entry point of the `magflow` binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter("MAGFLOW_LOG")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run_parsed(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(text: &str) -> Scenario {
        Scenario::from_json(text).unwrap()
    }

    #[test]
    fn subcommand_names_round_trip() {
        for k in Kind::ALL {
            assert_eq!(Kind::from_name(k.name()), Some(k));
        }
        let cli =
            Cli::try_parse_from(["magflow", "anosov-report", "s.json", "--seed", "4"]).unwrap();
        assert_eq!(cli.seed, Some(4));
        assert_eq!(
            cli.command.split().map(|(k, _)| k),
            Some(Kind::AnosovReport)
        );
        for k in Kind::ALL {
            let cli = Cli::try_parse_from(["magflow", k.name(), "s.json"]).unwrap();
            assert_eq!(cli.command.split().unwrap().0, k);
        }
        assert!(Cli::try_parse_from(["magflow", "integrat", "s.json"]).is_err());
    }

    #[test]
    fn missing_inputs_name_the_field() {
        let s = scenario(r#"{"manifold": {"name": "euclidean", "dim": 2}}"#);
        let err = execute(Kind::Integrate, &s, Overrides::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("initial: required"), "{err}");
        let err = execute(Kind::Holonomy, &s, Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("initial"), "{err}");
    }

    #[test]
    fn speed_mismatch_is_a_validation_error() {
        let s = scenario(
            r#"{"manifold": {"name": "euclidean", "dim": 2}, "speed": 2.0,
                "initial": {"x": [0, 0], "v": [1, 0]}, "horizon": 1}"#,
        );
        let err = execute(Kind::Integrate, &s, Overrides::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("initial.v"), "{err}");
        let err = execute(
            Kind::Integrate,
            &s,
            Overrides {
                tolerance: Some(-1.0),
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("--tolerance"), "{err}");
    }

    #[test]
    fn chart_exit_is_numerical() {
        let s = scenario(
            r#"{"manifold": {"name": "poincare_disk"}, "magnetic": {"name": "area_form", "b": 1.0},
                "initial": {"x": [0, 0], "v": [0.5, 0]}, "horizon": 1, "params": {"period": 1}}"#,
        );
        // Speed 1/2 orbits are closed circles; a wrong period guess is a numerical failure.
        let err = execute(Kind::Holonomy, &s, Overrides::default()).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");
    }

    #[test]
    fn curvature_reports_constant_disk_value() {
        let s = scenario(
            r#"{"manifold": {"name": "poincare_disk"}, "magnetic": {"name": "area_form", "b": 1.0},
                "speed": 2.0, "initial": {"x": [0.1, -0.2], "v": [1, 0.3]}, "params": {"vector": [0.2, 1]}}"#,
        );
        let out = execute(Kind::Curvature, &s, Overrides::default()).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&out[0].contents).unwrap();
        assert!((v["magnetic_sectional"].as_f64().unwrap() + 3.0).abs() < 1e-6);
        assert!((v["riemannian_sectional"].as_f64().unwrap() + 1.0).abs() < 1e-6);
    }

    #[test]
    fn transport_gram_drift_column_stays_small() {
        let s = scenario(
            r#"{"manifold": {"name": "euclidean", "dim": 3}, "magnetic": {"name": "constant", "b": 1.0},
                "initial": {"x": [0, 0, 0], "v": [0.6, 0, 0.8]}, "horizon": 2, "integrator": {"step": 0.01}}"#,
        );
        let out = execute(Kind::Transport, &s, Overrides::default()).unwrap();
        let text = String::from_utf8(out[0].contents.clone()).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("t,x1,x2,x3,v1,v2,v3,w1_1"), "{header}");
        assert!(header.ends_with("w3_3,gram_drift"), "{header}");
        for line in text.lines().skip(1) {
            let drift: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
            assert!(drift < 1e-9);
        }
    }
}
