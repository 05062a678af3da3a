//! Argument definitions and subcommand dispatch.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use riesz_flow_core::kernel::validate_kernel;
use riesz_flow_core::manifold::validate_geometry;
use riesz_flow_core::spectral::linearized_spectrum;
use riesz_flow_core::sphere::{check_kelvin_identities, fit_bubble, flat_bubble, BubbleParams, KelvinGrid};
use riesz_flow_core::steady::{solve_extremal, steady_from_extremal, ExtremalOptions};
use riesz_flow_core::{build_sphere, SphereScheme};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::{self, Field};
use crate::presets;
use crate::report::report;
use crate::run::{self, MANIFEST};

#[derive(Debug, Parser)]
#[command(name = "riesz-flow", version, about = "Nonlocal porous-medium flows on discretized spheres")]
pub struct Cli {
    /// Worker threads for kernel products (default: all cores).
    #[arg(long, global = true, env = "RIESZ_FLOW_WORKERS")]
    pub workers: Option<usize>,

    /// Root for output directories that are not given explicitly.
    #[arg(long, global = true, env = "RIESZ_FLOW_OUT", default_value = "runs")]
    pub out_root: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build, check or export node sets.
    #[command(subcommand)]
    Geom(GeomCommand),
    /// Build, check or apply kernel matrices.
    #[command(subcommand)]
    Kernel(KernelCommand),
    /// Solve K S = S^m for a positive steady state.
    Steady(SteadyArgs),
    /// Evolve a configured flow and write a run directory.
    Run(RunArgs),
    /// Fit a scaled bubble to a field on a sphere.
    FitBubble(FitArgs),
    /// Check the Kelvin reflection identities on the line by quadrature.
    CheckKelvin(KelvinArgs),
    /// Eigenpairs of the linearization at a steady state.
    Spectrum(SpectrumArgs),
    /// Summarize a run directory.
    Report(ReportArgs),
    /// Check a configuration and list every violation.
    Validate(ConfigSource),
}

#[derive(Debug, Subcommand)]
pub enum GeomCommand {
    Build {
        #[command(flatten)]
        sphere: SphereArgs,
        /// Omit the distance table (it is recomputed on load).
        #[arg(long)]
        no_distances: bool,
        #[arg(long)]
        out: PathBuf,
    },
    Validate {
        file: PathBuf,
    },
    /// Write nodes and weights as CSV.
    Export {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum KernelCommand {
    Build {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        out: PathBuf,
    },
    Validate {
        #[arg(long)]
        geom: PathBuf,
        #[arg(long)]
        kernel: PathBuf,
    },
    /// Apply a kernel to a field.
    Apply {
        #[arg(long)]
        geom: PathBuf,
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SphereArgs {
    /// Sphere dimension.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, default_value_t = 256)]
    pub nodes: usize,
    /// Node layout; defaults to uniform_angle on S^1 and fibonacci on S^2.
    #[arg(long)]
    pub scheme: Option<String>,
}

impl SphereArgs {
    fn scheme_name(&self) -> String {
        self.scheme.clone().unwrap_or_else(|| if self.n == 1 { "uniform_angle" } else { "fibonacci" }.into())
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KernelKind {
    Intertwining,
    Tilted,
    File,
}

/// Geometry and kernel selection shared by several subcommands.
#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// Take geometry and kernel settings from a run directory's manifest.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Geometry file; overrides --n/--nodes/--scheme.
    #[arg(long)]
    pub geom: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelKind>,
    #[arg(long)]
    pub kernel_file: Option<PathBuf>,
    /// Perturbation strength of the tilted kernel.
    #[arg(long, allow_negative_numbers = true)]
    pub kernel_eps: Option<f64>,
    /// auto, zeta_corrected, equivalent_disc or zero.
    #[arg(long)]
    pub diagonal: Option<String>,
}

fn abs_string(p: &Path) -> String {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf()).to_string_lossy().into_owned()
}

impl ProblemArgs {
    /// Config holding the selected geometry and kernel, with the scheme
    /// defaulting to match the dimension.
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.run {
            Some(dir) => RunConfig::from_table(RunConfig::load_table(&dir.join(MANIFEST))?)?,
            None => RunConfig::default(),
        };
        if let Some(n) = self.n {
            cfg.n = n;
            if self.scheme.is_none() && self.run.is_none() {
                cfg.scheme = if n == 1 { "uniform_angle" } else { "fibonacci" }.into();
            }
        }
        if let Some(v) = self.nodes {
            cfg.nodes = v;
        }
        if let Some(s) = &self.scheme {
            cfg.scheme = s.clone();
        }
        if let Some(g) = &self.geom {
            cfg.geometry_file = Some(abs_string(g));
            if self.n.is_none() {
                cfg.n = io::load_geometry(g)?.dim();
            }
        }
        if let Some(s) = self.sigma {
            cfg.sigma = s;
        }
        if let Some(k) = self.kernel {
            cfg.kernel = match k {
                KernelKind::Intertwining => "intertwining",
                KernelKind::Tilted => "tilted",
                KernelKind::File => "file",
            }
            .into();
        }
        if let Some(f) = &self.kernel_file {
            cfg.kernel_file = Some(abs_string(f));
            if self.kernel.is_none() {
                cfg.kernel = "file".into();
            }
        }
        if let Some(e) = self.kernel_eps {
            cfg.kernel_eps = e;
        }
        if let Some(d) = &self.diagonal {
            cfg.diagonal = d.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SteadyArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub m: f64,
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Initial field (default: constant).
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Exponent θ of the damped update; default 1 for m >= 1, else 1/2.
    #[arg(long, allow_negative_numbers = true)]
    pub damping: Option<f64>,
    #[arg(long, default_value_t = 20_000)]
    pub max_iter: usize,
    /// Output directory (default: <out-root>/steady).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigSource {
    /// Config file, or a run manifest to repeat that run.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Bundled configuration by name.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub regime: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub m: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub t_end: Option<f64>,
    /// const:<v>, file:<path>, random:<seed>, bubble:<λ>[:<c>], separable:<c> or cosine:<a>.
    #[arg(long)]
    pub u0: Option<String>,
    #[arg(long, value_parser = ["on", "off"])]
    pub renormalize: Option<String>,
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Override any config key, e.g. `--set rtol=1e-10`. Values are TOML.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl ConfigSource {
    pub fn table(&self) -> Result<toml::Table> {
        let mut t = match (&self.config, &self.preset) {
            (Some(p), _) => RunConfig::load_table(p)?,
            (None, Some(name)) => presets::preset(name)?,
            (None, None) => toml::Table::new(),
        };
        let mut put = |k: &str, v: toml::Value| {
            t.insert(k.to_string(), v);
        };
        if let Some(r) = &self.regime {
            put("regime", toml::Value::String(r.clone()));
        }
        if let Some(m) = self.m {
            put("m", toml::Value::Float(m));
        }
        if let Some(s) = self.sigma {
            put("sigma", toml::Value::Float(s));
        }
        if let Some(x) = self.t_end {
            put("t_end", toml::Value::Float(x));
        }
        if let Some(u) = &self.u0 {
            let u = match u.strip_prefix("file:") {
                Some(p) => format!("file:{}", abs_string(Path::new(p))),
                None => u.clone(),
            };
            put("u0", toml::Value::String(u));
        }
        if let Some(r) = &self.renormalize {
            put("renormalize", toml::Value::Boolean(r == "on"));
        }
        if let Some(v) = self.nodes {
            put("nodes", toml::Value::Integer(v as i64));
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            let k = k.trim();
            let value = match format!("v = {v}").parse::<toml::Table>() {
                Ok(mut one) => one.remove("v").expect("parsed key"),
                Err(_) => toml::Value::String(v.to_string()),
            };
            put(k, value);
        }
        Ok(t)
    }

    pub fn resolve(&self) -> Result<(RunConfig, crate::config::Validation)> {
        RunConfig::from_table_validated(self.table()?)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: ConfigSource,
    /// Output directory (default: <out-root>/<out or name>).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Field to fit; when it sits in a run directory that run's geometry
    /// and manifest are used.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Manifest to append the result to.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KelvinArgs {
    /// Radius of the inversion sphere.
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: f64,
    /// Centre of the inversion sphere.
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
    pub x0: Vec<f64>,
    #[arg(long, default_value_t = 0.25, allow_negative_numbers = true)]
    pub sigma: f64,
    /// Concentration of the flat bubble the identities are tested on.
    #[arg(long, default_value_t = 1.0)]
    pub bubble_lambda: f64,
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    /// Test points are uniform in (-range, range).
    #[arg(long, default_value_t = 3.0)]
    pub range: f64,
    #[arg(long, default_value_t = 3)]
    pub seed: u64,
    #[arg(long, default_value_t = 16)]
    pub panels: usize,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub steady: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Exponent of the steady state (default: critical).
    #[arg(long, allow_negative_numbers = true)]
    pub m: Option<f64>,
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Output directory (default: <out-root>/spectrum).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub dir: PathBuf,
    /// Print CSV instead of tables.
    #[arg(long)]
    pub csv: bool,
}

fn to_table<const N: usize>(entries: [(&str, toml::Value); N]) -> toml::Table {
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn problem_table(cfg: &RunConfig) -> toml::Table {
    let mut t = cfg.to_table();
    t.retain(|k, _| {
        matches!(
            k,
            "geometry_file" | "n" | "nodes" | "scheme" | "kernel" | "kernel_file" | "kernel_eps" | "diagonal" | "sigma"
        )
    });
    t
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.to_path_buf(), source: e })
}

/// Executes a parsed command line.
pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Geom(g) => geom(g),
        Command::Kernel(k) => kernel(k),
        Command::Steady(a) => steady(a, &cli.out_root),
        Command::Run(a) => run_cmd(a, &cli.out_root),
        Command::FitBubble(a) => fit(a),
        Command::CheckKelvin(a) => kelvin(a),
        Command::Spectrum(a) => spectrum(a, &cli.out_root),
        Command::Report(a) => {
            let r = report(&a.dir)?;
            print!("{}", if a.csv { r.to_csv() } else { r.to_text() });
            Ok(())
        }
        Command::Validate(src) => {
            let (_, v) = src.resolve()?;
            for w in &v.warnings {
                eprintln!("warning: {w}");
            }
            println!("ok");
            Ok(())
        }
    }
}

fn geom(cmd: &GeomCommand) -> Result<()> {
    match cmd {
        GeomCommand::Build { sphere, no_distances, out } => {
            let name = sphere.scheme_name();
            let scheme = SphereScheme::parse(&name).ok_or_else(|| CliError::config(format!("unknown scheme `{name}`")))?;
            let g = build_sphere(sphere.n, sphere.nodes, scheme)?;
            io::save_geometry(out, &g, !no_distances)?;
            println!("wrote {} nodes on S^{} ({name}) to {}", g.len(), g.dim(), out.display());
            Ok(())
        }
        GeomCommand::Validate { file } => {
            // Loading already rejects invalid geometries.
            let g = io::load_geometry(file)?;
            let r = validate_geometry(&g);
            println!(
                "ok: {} nodes, volume {}, {} triangle samples",
                r.node_count, r.total_volume, r.triangle_samples
            );
            Ok(())
        }
        GeomCommand::Export { file, out } => {
            let g = io::load_geometry(file)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header: Vec<String> = (0..g.ambient_dim()).map(|i| format!("x{i}")).collect();
            header.push("weight".into());
            w.write_record(&header).expect("in-memory write");
            for i in 0..g.len() {
                let mut row: Vec<String> = g.node(i).iter().map(|x| io::fmt17(*x)).collect();
                row.push(io::fmt17(g.weights()[i]));
                w.write_record(&row).expect("in-memory write");
            }
            io::write_atomic(out, &w.into_inner().expect("in-memory flush"))?;
            Ok(())
        }
    }
}

fn kernel(cmd: &KernelCommand) -> Result<()> {
    match cmd {
        KernelCommand::Build { problem, out } => {
            let cfg = problem.config()?;
            let k = cfg.build_kernel(cfg.build_geometry()?)?;
            io::save_kernel(out, &k)?;
            println!(
                "wrote {} x {} kernel (sigma {}, diagonal {}) to {}",
                k.len(),
                k.len(),
                k.sigma(),
                k.diagonal_rule().name(),
                out.display()
            );
            Ok(())
        }
        KernelCommand::Validate { geom, kernel } => {
            let g = io::load_geometry(geom)?;
            let k = io::load_kernel(kernel, g.into())?;
            let r = validate_kernel(&k);
            println!(
                "symmetric {} bounded {} lipschitz {} pole_uniform {}",
                r.symmetric, r.bounded, r.lipschitz, r.pole_uniform
            );
            println!(
                "scale {} lambda {} absolute_lambda {} pole {} pole_spread {:e}",
                r.fitted_scale, r.fitted_lambda, r.absolute_lambda, r.pole_constant, r.pole_spread
            );
            if r.passed() {
                Ok(())
            } else {
                Err(CliError::config("kernel failed validation"))
            }
        }
        KernelCommand::Apply { geom, kernel, field, out } => {
            let g = io::load_geometry(geom)?;
            let k = io::load_kernel(kernel, g.into())?;
            let f = io::load_field(field)?;
            if f.values.len() != k.len() {
                return Err(CliError::config(format!(
                    "field has {} values for {} nodes",
                    f.values.len(),
                    k.len()
                )));
            }
            io::save_field(out, &Field { values: k.apply(&f.values), t: f.t })
        }
    }
}

fn steady(a: &SteadyArgs, root: &Path) -> Result<()> {
    let cfg = problem_cfg_checked(&a.problem)?;
    let k = cfg.build_kernel(cfg.build_geometry()?)?;
    let init = match &a.init {
        Some(p) => io::load_field(p)?.values,
        None => vec![1.0; k.len()],
    };
    let opts = ExtremalOptions { tol: a.tol, max_iter: a.max_iter, damping: a.damping, ..Default::default() };
    let sol = solve_extremal(&k, a.m, &init, &opts)?;
    let field = if a.m == 1.0 { sol.clone() } else { steady_from_extremal(&sol)? };
    let dir = a.out.clone().unwrap_or_else(|| root.join("steady"));
    mkdir(&dir)?;
    io::save_field(&dir.join("steady.field"), &Field { values: field.field.clone(), t: None })?;
    let status = format!("{:?}", sol.status).to_lowercase();
    let mut entry = to_table([
        ("m", toml::Value::Float(a.m)),
        ("j_bar", toml::Value::Float(sol.j_bar)),
        ("residual", toml::Value::Float(sol.residual)),
        ("iterations", toml::Value::Integer(sol.iterations as i64)),
        ("status", toml::Value::String(status.clone())),
        ("tol", toml::Value::Float(a.tol)),
    ]);
    entry.insert("problem".into(), toml::Value::Table(problem_table(&cfg)));
    io::append_to_manifest(&dir.join(MANIFEST), "steady", entry)?;
    println!(
        "J_bar {} residual {:e} iterations {} status {status}",
        sol.j_bar, sol.residual, sol.iterations
    );
    if sol.status == riesz_flow_core::steady::SteadyStatus::Converged {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("steady iteration stopped with status {status}")))
    }
}

fn problem_cfg_checked(p: &ProblemArgs) -> Result<RunConfig> {
    let cfg = p.config()?;
    let half = cfg.n as f64 / 2.0;
    if !(cfg.sigma > 0.0 && cfg.sigma < half) {
        return Err(CliError::Violations(vec![format!("sigma = {} must lie in (0, {half})", cfg.sigma)]));
    }
    Ok(cfg)
}

fn run_cmd(a: &RunArgs, root: &Path) -> Result<()> {
    let (cfg, _) = a.source.resolve()?;
    let dir = match &a.out {
        Some(d) => d.clone(),
        None => root.join(cfg.out.as_deref().unwrap_or(&cfg.name)),
    };
    let out = run::execute(&cfg, &dir)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    let t = &out.trajectory;
    let last = t.records.last().expect("at least one record");
    println!(
        "{}: {} at t = {} after {} steps; V {} a {} J {} harnack {}",
        out.dir.display(),
        run::termination_name(t.termination),
        last.t,
        t.accepted,
        last.v,
        last.a,
        last.j,
        last.harnack
    );
    Ok(())
}

fn fit(a: &FitArgs) -> Result<()> {
    let field = io::load_field(&a.input)?;
    let run_dir = a.input.parent().filter(|d| d.join(MANIFEST).is_file()).map(Path::to_path_buf);
    let mut problem = a.problem.clone();
    if problem.run.is_none() {
        problem.run = run_dir.clone();
    }
    if problem.run.is_none() && problem.nodes.is_none() && problem.geom.is_none() {
        problem.nodes = Some(field.values.len());
    }
    let cfg = problem_cfg_checked(&problem)?;
    let geom = cfg.build_geometry()?;
    let fit = fit_bubble(&geom, cfg.sigma, &field.values)?;
    let p = &fit.params;
    println!(
        "xi0 {:?} lambda {} c {} residual {:e} converged {}",
        p.xi0, p.lambda, p.c, fit.residual, fit.converged
    );
    let manifest = a.manifest.clone().or_else(|| run_dir.map(|d| d.join(MANIFEST)));
    if let Some(path) = manifest {
        let mut entry = to_table([
            ("field", toml::Value::String(abs_string(&a.input))),
            ("xi0", toml::Value::Array(p.xi0.iter().map(|x| toml::Value::Float(*x)).collect())),
            ("lambda", toml::Value::Float(p.lambda)),
            ("c", toml::Value::Float(p.c)),
            ("residual", toml::Value::Float(fit.residual)),
            ("converged", toml::Value::Boolean(fit.converged)),
        ]);
        if let Some(t) = field.t {
            entry.insert("t".into(), toml::Value::Float(t));
        }
        io::append_to_manifest(&path, "fit_bubble", entry)?;
    }
    Ok(())
}

fn kelvin(a: &KelvinArgs) -> Result<()> {
    if a.x0.len() != 1 {
        return Err(CliError::config(format!(
            "--x0 has {} coordinates; the quadrature check is implemented on the line only",
            a.x0.len()
        )));
    }
    if !(a.range > 0.0 && a.points > 0 && a.panels > 0) {
        return Err(CliError::config("need --range > 0, --points > 0 and --panels > 0"));
    }
    let bubble = BubbleParams::new(vec![0.0, -1.0], a.bubble_lambda, 1.0)?;
    let v = |x: &[f64]| flat_bubble(1, a.sigma, &bubble, x);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let points: Vec<f64> = (0..a.points).map(|_| rng.gen_range(-a.range..a.range)).collect();
    let grid = KelvinGrid { panels: a.panels, ..KelvinGrid::default() };
    let coarse = check_kelvin_identities(&v, 1, a.sigma, a.x0[0], a.lambda, &points, &grid)?;
    let fine = check_kelvin_identities(&v, 1, a.sigma, a.x0[0], a.lambda, &points, &grid.refined())?;
    for r in [&coarse, &fine] {
        println!(
            "panels {:>4}: identity-1 {:e} identity-2 {:e} tail {:e} ({} points, {} skipped)",
            r.panels,
            r.id1_defect,
            r.id2_defect,
            r.tail_bound,
            r.points_used,
            r.skipped.len()
        );
    }
    if let Some(path) = &a.manifest {
        let entry = to_table([
            ("lambda", toml::Value::Float(a.lambda)),
            ("x0", toml::Value::Float(a.x0[0])),
            ("sigma", toml::Value::Float(a.sigma)),
            ("seed", toml::Value::Integer(a.seed as i64)),
            ("panels", toml::Value::Integer(a.panels as i64)),
            ("defect", toml::Value::Float(coarse.max_defect())),
            ("refined_defect", toml::Value::Float(fine.max_defect())),
            ("tail_bound", toml::Value::Float(fine.tail_bound)),
        ]);
        io::append_to_manifest(path, "check_kelvin", entry)?;
    }
    Ok(())
}

fn spectrum(a: &SpectrumArgs, root: &Path) -> Result<()> {
    let cfg = problem_cfg_checked(&a.problem)?;
    let k = cfg.build_kernel(cfg.build_geometry()?)?;
    let s = io::load_field(&a.steady)?.values;
    let m = a.m.unwrap_or_else(|| cfg.exponent());
    let res = linearized_spectrum(&k, &s, m, a.k)?;
    let dir = a.out.clone().unwrap_or_else(|| root.join("spectrum"));
    mkdir(&dir)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "eigenvalue"]).expect("in-memory write");
    for (i, l) in res.eigenvalues.iter().enumerate() {
        w.write_record([i.to_string(), io::fmt17(*l)]).expect("in-memory write");
        io::save_field(&dir.join(format!("eigen_{i}.field")), &Field { values: res.phi[i].clone(), t: None })?;
    }
    io::write_atomic(&dir.join("eigenvalues.csv"), &w.into_inner().expect("in-memory flush"))?;
    let mut entry = to_table([
        ("steady", toml::Value::String(abs_string(&a.steady))),
        ("m", toml::Value::Float(m)),
        ("count", toml::Value::Integer(a.k as i64)),
        ("steady_residual", toml::Value::Float(res.steady_residual)),
        ("max_residual", toml::Value::Float(res.max_residual)),
        ("orthonormality_defect", toml::Value::Float(res.orthonormality_defect)),
    ]);
    if let Some(g) = res.gap() {
        entry.insert("gap".into(), toml::Value::Float(g));
    }
    entry.insert("problem".into(), toml::Value::Table(problem_table(&cfg)));
    io::append_to_manifest(&dir.join(MANIFEST), "spectrum", entry)?;
    for (i, l) in res.eigenvalues.iter().enumerate() {
        println!("{i:>3} {l:.15}");
    }
    Ok(())
}
