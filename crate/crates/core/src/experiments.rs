//! Experiment drivers: the stability test, the layer convergence studies and
//! a smooth sanity case, with their file outputs.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{self, ProblemSpec, Scheme, SolutionPair};
use crate::eafe::ReactionMode;
use crate::error::{Error, Result};
use crate::fem::{constant_scalar, CoefficientField};
use crate::io::write_vtk;
use crate::mesh::{build_unit_square_with, DiagonalConvention, TriMesh, DEFAULT_VERTEX_CAP};
use crate::problems::{self, Manufactured};
use crate::verify::{
    self, certify_m_matrix, check_desired_state_bounds, ConvergenceTable, MMatrixReport, Region, Sign, StudyOptions,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Example {
    Stability,
    BoundaryLayer,
    InteriorLayer,
    Smooth,
    /// Desired-state problem with user-chosen constant coefficients and `y_d`.
    Custom,
}

impl Example {
    pub fn tag(self) -> &'static str {
        match self {
            Example::Stability => "stability",
            Example::BoundaryLayer => "boundary-layer",
            Example::InteriorLayer => "interior-layer",
            Example::Smooth => "smooth",
            Example::Custom => "custom",
        }
    }

    pub fn default_eps(self) -> f64 {
        match self {
            Example::Stability | Example::Custom => 1e-9,
            Example::BoundaryLayer | Example::InteriorLayer => 1e-2,
            Example::Smooth => 1.0,
        }
    }

    pub fn default_levels(self) -> Vec<u32> {
        match self {
            Example::Stability | Example::Custom => (3..=6).collect(),
            Example::BoundaryLayer | Example::InteriorLayer => (1..=8).collect(),
            Example::Smooth => (1..=6).collect(),
        }
    }

    pub fn default_schemes(self) -> SchemeChoice {
        match self {
            Example::Stability | Example::Custom => SchemeChoice::Both,
            _ => SchemeChoice::Eafe,
        }
    }

    fn is_desired_state(self) -> bool {
        matches!(self, Example::Stability | Example::Custom)
    }
}

impl FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Example::Stability, Example::BoundaryLayer, Example::InteriorLayer, Example::Smooth, Example::Custom]
            .into_iter()
            .find(|e| e.tag() == s)
            .ok_or_else(|| Error::Parse(format!("unknown example '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeChoice {
    Eafe,
    Galerkin,
    Both,
}

impl SchemeChoice {
    pub fn schemes(self) -> Vec<Scheme> {
        match self {
            SchemeChoice::Eafe => vec![Scheme::Eafe],
            SchemeChoice::Galerkin => vec![Scheme::Galerkin],
            SchemeChoice::Both => vec![Scheme::Eafe, Scheme::Galerkin],
        }
    }
}

impl FromStr for SchemeChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(SchemeChoice::Both),
            other => Ok(match other.parse::<Scheme>()? {
                Scheme::Eafe => SchemeChoice::Eafe,
                Scheme::Galerkin => SchemeChoice::Galerkin,
            }),
        }
    }
}

/// Parses an inclusive level range `a..b` (or a single level `a`).
pub fn parse_levels(s: &str) -> Result<Vec<u32>> {
    let bad = || Error::Parse(format!("levels '{s}' must look like a..b with 1 <= a <= b"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a.trim(), b.trim().trim_start_matches('=')),
        None => (s.trim(), s.trim()),
    };
    let (a, b) = (a.parse::<u32>().map_err(|_| bad())?, b.parse::<u32>().map_err(|_| bad())?);
    if a == 0 || a > b {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

/// Fully resolved experiment settings; echoed as `config.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub example: Example,
    pub eps: f64,
    pub levels: Vec<u32>,
    pub scheme: SchemeChoice,
    pub out: PathBuf,
    /// Local error region; defaults to the example's own subdomain.
    pub region: Option<Region>,
    pub lump_reaction: bool,
    pub diagonal: DiagonalConvention,
    /// Accepted and echoed; no experiment is stochastic.
    pub seed: u64,
    /// Desired state for the stability and custom examples.
    pub y_d: f64,
    /// Convection field for the custom example.
    pub zeta: [f64; 2],
    /// Reaction coefficient for the custom example.
    pub gamma: f64,
    pub beta: f64,
    /// Worker threads for the level loop; `None` uses all cores.
    pub threads: Option<usize>,
    /// Write VTK and solution dumps.
    pub write_fields: bool,
}

impl ExperimentConfig {
    pub fn new(example: Example, out: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            example,
            eps: example.default_eps(),
            levels: example.default_levels(),
            scheme: example.default_schemes(),
            out: out.into(),
            region: None,
            lump_reaction: true,
            diagonal: DiagonalConvention::default(),
            seed: 0,
            y_d: 1.0,
            zeta: [-1.0, 0.0],
            gamma: 0.0,
            beta: 1.0,
            threads: None,
            write_fields: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Spec(format!("eps must be positive, got {}", self.eps)));
        }
        if self.levels.is_empty() || self.levels[0] == 0 || self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Spec(format!("levels must be nonempty, ascending and >= 1, got {:?}", self.levels)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Spec(format!("beta must be positive, got {}", self.beta)));
        }
        if self.threads == Some(0) {
            return Err(Error::Spec("threads must be at least 1".into()));
        }
        Ok(())
    }

    pub fn reaction(&self) -> ReactionMode {
        if self.lump_reaction {
            ReactionMode::Lumped
        } else {
            ReactionMode::Consistent
        }
    }

    fn mesh(&self, level: u32) -> Result<TriMesh> {
        build_unit_square_with(level, self.diagonal, DEFAULT_VERTEX_CAP)
    }

    /// The manufactured pair of a convergence example.
    pub fn manufactured(&self) -> Option<Manufactured> {
        let m = match self.example {
            Example::BoundaryLayer => problems::boundary_layer(self.eps),
            Example::InteriorLayer => problems::interior_layer(self.eps),
            Example::Smooth => problems::smooth(),
            _ => return None,
        };
        Some(match self.region {
            Some(r) => m.with_local_region(r),
            None => m,
        })
    }

    fn desired_state_spec(&self) -> ProblemSpec {
        let coeff = match self.example {
            Example::Custom => CoefficientField::constant(self.eps, self.zeta, self.gamma),
            _ => problems::stability(self.eps, self.y_d).0,
        };
        ProblemSpec::desired_state(coeff.with_beta(self.beta), constant_scalar(self.y_d)).with_reaction(self.reaction())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityLevel {
    pub scheme: Scheme,
    pub k: u32,
    pub ok: bool,
    pub violations: usize,
    pub max_violation: f64,
    pub relative_max_violation: f64,
    pub residual: f64,
    pub m_matrix: MMatrixReport,
    pub report: serde_json::Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityResult {
    pub levels: Vec<StabilityLevel>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceResult {
    pub scheme: Scheme,
    pub global: ConvergenceTable,
    pub local: Option<ConvergenceTable>,
    pub region: Option<Region>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum ExperimentOutput {
    Stability(StabilityResult),
    Convergence(Vec<ConvergenceResult>),
}

fn with_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => job(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Spec(format!("thread pool: {e}")))?
            .install(job),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_fields(config: &ExperimentConfig, mesh: &TriMesh, scheme: Scheme, sol: &SolutionPair) -> Result<()> {
    let name = format!("{}_{}_k{}", config.example.tag(), scheme.tag(), mesh.level());
    let title = format!("{name} eps={:e} diagonal={}", config.eps, config.diagonal.tag());
    let mut out = create(&config.out.join(format!("{name}.vtk")))?;
    write_vtk(mesh, &title, &[("p_h", &sol.p_bar), ("y_h", &sol.y_bar), ("u_h", &sol.u_bar)], &mut out)?;
    out.flush()?;
    let mut csv = create(&config.out.join(format!("{name}.csv")))?;
    crate::io::write_solution_csv(mesh, sol, &mut csv)?;
    csv.flush()?;
    Ok(())
}

pub fn run_stability(config: &ExperimentConfig) -> Result<StabilityResult> {
    config.validate()?;
    if !config.example.is_desired_state() {
        return Err(Error::Spec(format!("{} is not a desired-state example", config.example.tag())));
    }
    let sign = if config.y_d >= 0.0 { Sign::Nonneg } else { Sign::Nonpos };
    let spec = config.desired_state_spec();
    let y_d = constant_scalar(config.y_d);
    let jobs: Vec<(Scheme, u32)> =
        config.scheme.schemes().into_iter().flat_map(|s| config.levels.iter().map(move |&k| (s, k))).collect();
    let solved: Vec<(TriMesh, SolutionPair, StabilityLevel)> = with_pool(config.threads, || {
        jobs.par_iter()
            .map(|&(scheme, k)| {
                let mesh = config.mesh(k)?;
                let sol = control::solve(&mesh, &spec, scheme)?;
                let report = check_desired_state_bounds(&mesh, &sol, &y_d, sign)?;
                let interior = mesh.interior_vertices();
                let a = control::assemble_operator(&mesh, &spec.coeff, scheme, spec.reaction)?;
                let m_matrix = certify_m_matrix(&a.submatrix(&interior, &interior))?;
                let level = StabilityLevel {
                    scheme,
                    k,
                    ok: report.ok,
                    violations: report.violations,
                    max_violation: report.max_violation,
                    relative_max_violation: if report.load_norm > 0.0 {
                        report.max_violation / report.load_norm
                    } else {
                        0.0
                    },
                    residual: sol.residual,
                    m_matrix,
                    report: report.summary(),
                };
                Ok((mesh, sol, level))
            })
            .collect()
    })?;

    let mut summary = String::from("scheme,k,ok,violations,max_violation,relative_max_violation,m_matrix\n");
    for (mesh, sol, level) in &solved {
        let _ = writeln!(
            summary,
            "{},{},{},{},{:e},{:e},{}",
            level.scheme, level.k, level.ok, level.violations, level.max_violation, level.relative_max_violation,
            level.m_matrix.passed
        );
        let path = config.out.join(format!("bounds_{}_k{}.json", level.scheme, level.k));
        serde_json::to_writer_pretty(create(&path)?, &level)?;
        if config.write_fields {
            write_fields(config, mesh, level.scheme, sol)?;
        }
    }
    fs::write(config.out.join("bounds.csv"), summary)?;
    Ok(StabilityResult { levels: solved.into_iter().map(|(_, _, l)| l).collect() })
}

fn run_convergence(config: &ExperimentConfig) -> Result<Vec<ConvergenceResult>> {
    config.validate()?;
    let problem = config
        .manufactured()
        .ok_or_else(|| Error::Spec(format!("{} has no exact solution", config.example.tag())))?;
    let region = problem.local_region;
    let regions = [None, region];
    let regions = if region.is_some() { &regions[..] } else { &regions[..1] };
    let mut results = Vec::new();
    for scheme in config.scheme.schemes() {
        let options = StudyOptions { scheme, reaction: config.reaction(), diagonal: config.diagonal };
        let mut tables =
            with_pool(config.threads, || verify::convergence_tables(&problem, options, &config.levels, regions))?;
        let local = if tables.len() > 1 { tables.pop() } else { None };
        let global = tables.pop().expect("global table");
        let stem = format!("{}_{}", config.example.tag(), scheme.tag());
        global.write_csv(create(&config.out.join(format!("{stem}_global.csv")))?)?;
        if let Some(local) = &local {
            local.write_csv(create(&config.out.join(format!("{stem}_local.csv")))?)?;
        }
        if config.write_fields {
            let spec = ProblemSpec::manufactured(&problem).with_reaction(config.reaction());
            for &k in &config.levels {
                let mesh = config.mesh(k)?;
                write_fields(config, &mesh, scheme, &control::solve(&mesh, &spec, scheme)?)?;
            }
        }
        results.push(ConvergenceResult { scheme, global, local, region });
    }
    Ok(results)
}

pub fn run_boundary_layer(config: &ExperimentConfig) -> Result<Vec<ConvergenceResult>> {
    expect_example(config, Example::BoundaryLayer)?;
    run_convergence(config)
}

pub fn run_interior_layer(config: &ExperimentConfig) -> Result<Vec<ConvergenceResult>> {
    expect_example(config, Example::InteriorLayer)?;
    run_convergence(config)
}

pub fn run_smooth(config: &ExperimentConfig) -> Result<Vec<ConvergenceResult>> {
    expect_example(config, Example::Smooth)?;
    run_convergence(config)
}

fn expect_example(config: &ExperimentConfig, example: Example) -> Result<()> {
    if config.example != example {
        return Err(Error::Spec(format!("expected example {}, got {}", example.tag(), config.example.tag())));
    }
    Ok(())
}

/// Runs the configured experiment, writing `config.json`, `run.log` and the
/// example's tables and field dumps into `config.out`.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    fs::create_dir_all(&config.out)?;
    let probe = config.out.join(".write-test");
    fs::write(&probe, b"")?;
    fs::remove_file(&probe)?;
    serde_json::to_writer_pretty(create(&config.out.join("config.json"))?, config)?;

    let started = std::time::Instant::now();
    let output = match config.example {
        Example::Stability | Example::Custom => ExperimentOutput::Stability(run_stability(config)?),
        Example::BoundaryLayer => ExperimentOutput::Convergence(run_boundary_layer(config)?),
        Example::InteriorLayer => ExperimentOutput::Convergence(run_interior_layer(config)?),
        Example::Smooth => ExperimentOutput::Convergence(run_smooth(config)?),
    };

    let mut log = format!(
        "example {} eps {:e} levels {:?} diagonal {} reaction {:?}\n",
        config.example.tag(),
        config.eps,
        config.levels,
        config.diagonal.tag(),
        config.reaction()
    );
    log.push_str(&render(&output));
    let _ = writeln!(log, "elapsed {:.3} s", started.elapsed().as_secs_f64());
    fs::write(config.out.join("run.log"), log)?;
    Ok(output)
}

/// Human-readable summary of an experiment's results.
pub fn render(output: &ExperimentOutput) -> String {
    let mut s = String::new();
    match output {
        ExperimentOutput::Stability(r) => {
            for l in &r.levels {
                let _ = writeln!(
                    s,
                    "{:<8} k={} bounds {} violations {} max {:.3e} (relative {:.3e}) m-matrix {}",
                    l.scheme.tag(),
                    l.k,
                    if l.ok { "ok" } else { "VIOLATED" },
                    l.violations,
                    l.max_violation,
                    l.relative_max_violation,
                    if l.m_matrix.passed { "yes" } else { "no" }
                );
            }
        }
        ExperimentOutput::Convergence(results) => {
            for r in results {
                let _ = writeln!(s, "{} global", r.scheme);
                s.push_str(&r.global.to_string());
                if let (Some(local), Some(region)) = (&r.local, &r.region) {
                    let _ = writeln!(s, "{} local on {region}", r.scheme);
                    s.push_str(&local.to_string());
                }
            }
        }
    }
    s
}
