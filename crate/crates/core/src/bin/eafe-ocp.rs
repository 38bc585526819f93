use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use eafe_ocp::control::{self, Scheme};
use eafe_ocp::experiments::{self, parse_levels, Example, ExperimentConfig, SchemeChoice};
use eafe_ocp::fem::CoefficientField;
use eafe_ocp::io::{write_mesh_text, write_vtk};
use eafe_ocp::mesh::{build_unit_square_with, delaunay_check, DiagonalConvention, DEFAULT_VERTEX_CAP};
use eafe_ocp::verify::{certify_m_matrix, Region};
use eafe_ocp::{Error, Result};

#[derive(Parser)]
#[command(name = "eafe-ocp", version, about = "Monotone EAFE discretization of elliptic optimal control problems")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment (the default when no subcommand is given).
    Run(RunArgs),
    /// Export a unit-square mesh as text and VTK and report its Delaunay status.
    Mesh(MeshArgs),
    /// Check the M-matrix property of an assembled interior operator.
    Certify(CertifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// stability | boundary-layer | interior-layer | smooth | custom
    #[arg(long, default_value = "stability", value_parser = parse_example)]
    example: Example,
    /// Diffusion coefficient; defaults depend on the example.
    #[arg(long)]
    eps: Option<f64>,
    /// Inclusive level range `a..b`.
    #[arg(long, value_parser = parse_level_range)]
    levels: Option<Levels>,
    /// eafe | galerkin | both
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<SchemeChoice>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Local error region `x0,x1,y0,y1`.
    #[arg(long, value_parser = parse_region, allow_hyphen_values = true)]
    region: Option<Region>,
    #[arg(long, value_enum, default_value = "on")]
    lump_reaction: Switch,
    /// ll-ur | ul-lr
    #[arg(long, default_value = "ll-ur", value_parser = parse_diagonal)]
    diagonal: DiagonalConvention,
    /// Accepted and echoed into config.json.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Constant desired state for stability and custom runs.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    yd: f64,
    /// Convection field `z1,z2` for custom runs.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    zeta: Option<[f64; 2]>,
    /// Reaction coefficient for custom runs.
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Worker threads; 1 gives bit-reproducible output.
    #[arg(long)]
    threads: Option<usize>,
    /// Skip VTK and solution CSV dumps.
    #[arg(long)]
    no_fields: bool,
}

#[derive(Args)]
struct MeshArgs {
    #[arg(long)]
    level: u32,
    #[arg(long, default_value = "ll-ur", value_parser = parse_diagonal)]
    diagonal: DiagonalConvention,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long, default_value = "1e-9")]
    eps: f64,
    #[arg(long, default_value = "-1,0", value_parser = parse_pair, allow_hyphen_values = true)]
    zeta: [f64; 2],
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value = "1..6", value_parser = parse_level_range)]
    levels: Levels,
    #[arg(long, default_value = "eafe", value_parser = parse_scheme)]
    scheme: SchemeChoice,
    #[arg(long, default_value = "ll-ur", value_parser = parse_diagonal)]
    diagonal: DiagonalConvention,
}

#[derive(Clone)]
struct Levels(Vec<u32>);

fn parse_example(s: &str) -> Result<Example> {
    s.parse()
}

fn parse_scheme(s: &str) -> Result<SchemeChoice> {
    s.parse()
}

fn parse_region(s: &str) -> Result<Region> {
    s.parse()
}

fn parse_diagonal(s: &str) -> Result<DiagonalConvention> {
    s.parse()
}

fn parse_level_range(s: &str) -> Result<Levels> {
    parse_levels(s).map(Levels)
}

fn parse_pair(s: &str) -> Result<[f64; 2]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{t}' in '{s}'"))))
        .collect::<Result<_>>()?;
    <[f64; 2]>::try_from(v).map_err(|_| Error::Parse(format!("expected two numbers, got '{s}'")))
}

fn config_from(args: &RunArgs) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(args.example, &args.out);
    if let Some(eps) = args.eps {
        c.eps = eps;
    }
    if let Some(Levels(levels)) = &args.levels {
        c.levels = levels.clone();
    }
    if let Some(s) = args.scheme {
        c.scheme = s;
    }
    c.region = args.region;
    c.lump_reaction = matches!(args.lump_reaction, Switch::On);
    c.diagonal = args.diagonal;
    c.seed = args.seed;
    c.y_d = args.yd;
    if let Some(z) = args.zeta {
        c.zeta = z;
    }
    if let Some(g) = args.gamma {
        c.gamma = g;
    }
    c.beta = args.beta;
    c.threads = args.threads;
    c.write_fields = !args.no_fields;
    c
}

fn run(args: &RunArgs) -> Result<()> {
    let config = config_from(args);
    let output = experiments::run(&config)?;
    print!("{}", experiments::render(&output));
    println!("wrote {}", config.out.display());
    Ok(())
}

fn mesh(args: &MeshArgs) -> Result<()> {
    let mesh = build_unit_square_with(args.level, args.diagonal, DEFAULT_VERTEX_CAP)?;
    fs::create_dir_all(&args.out)?;
    let stem = format!("mesh_k{}", args.level);
    write_mesh_text(
        &mesh,
        BufWriter::new(File::create(args.out.join(format!("{stem}.nodes")))?),
        BufWriter::new(File::create(args.out.join(format!("{stem}.elements")))?),
    )?;
    write_vtk(
        &mesh,
        &format!("unit square level {} diagonal {}", args.level, args.diagonal.tag()),
        &[],
        BufWriter::new(File::create(args.out.join(format!("{stem}.vtk")))?),
    )?;
    let report = delaunay_check(&mesh)?;
    println!(
        "level {} vertices {} triangles {} edges {} h {:.6} delaunay {}",
        mesh.level(),
        mesh.num_vertices(),
        mesh.num_triangles(),
        mesh.num_edges(),
        mesh.h(),
        if report.ok { "ok" } else { "VIOLATED" }
    );
    Ok(())
}

fn certify(args: &CertifyArgs) -> Result<bool> {
    let coeff = CoefficientField::constant(args.eps, args.zeta, args.gamma);
    let mut all = true;
    for scheme in args.scheme.schemes() {
        for &k in &args.levels.0 {
            let mesh = build_unit_square_with(k, args.diagonal, DEFAULT_VERTEX_CAP)?;
            let a = control::assemble_operator(&mesh, &coeff, scheme, Default::default())?;
            let interior = mesh.interior_vertices();
            let report = certify_m_matrix(&a.submatrix(&interior, &interior))?;
            all &= report.passed || scheme == Scheme::Galerkin;
            println!("{}", serde_json::json!({ "scheme": scheme.tag(), "k": k, "report": report }));
        }
    }
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        None => run(&cli.run).map(|_| true),
        Some(Command::Run(args)) => run(args).map(|_| true),
        Some(Command::Mesh(args)) => mesh(args).map(|_| true),
        Some(Command::Certify(args)) => certify(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("eafe-ocp: EAFE operator failed M-matrix certification");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("eafe-ocp: {e}");
            ExitCode::from(2)
        }
    }
}
