use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;

use torusfit::dag::{testbed_q4, testbed_samples};
use torusfit::experiment::{
    eval_points, generate_dataset, parse_configs, preset, run_experiment, DatasetSpec,
    ExperimentConfig, Method, NamedTarget, NodeSet, Summary, Target,
};
use torusfit::kernel::{localization_slope, KernelSpec};
use torusfit::minimax::{
    pointwise_error_report, solve_regularization, write_pointwise_csv, RegProblem,
};
use torusfit::selfcheck::run_self_check;
use torusfit::{Dataset, Error, ErrorKind, TorusPoint};

#[derive(Parser)]
#[command(
    name = "torusfit",
    version,
    about = "Localized trigonometric fitting on the torus"
)]
struct Cli {
    /// more log output (repeat for debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a target on a node set and write CSV
    GenData(GenDataArgs),
    /// Tabulate the localized kernel and report its decay
    KernelProbe(KernelProbeArgs),
    /// Minimal-degree or localized interpolation
    Interpolate {
        /// lowest-degree interpolant instead of the localized one
        #[arg(long)]
        minimal: bool,
        #[command(flatten)]
        exp: ExpArgs,
    },
    /// Blended fit: projection base plus kernel correction
    Blend(ExpArgs),
    /// Straight kernel estimator
    Straight(ExpArgs),
    /// Sup-norm regularized fit by linear programming
    Regularize(RegularizeArgs),
    /// Blended fit realized as a periodic network
    NetBlend(ExpArgs),
    /// Compositional fit on the DAG testbed or a bundle
    DeepFit(ExpArgs),
    /// Block coordinate descent on the compositional regularizer
    DeepRegularize(ExpArgs),
    /// Run one of the pinned figure presets
    Reproduce {
        #[arg(value_parser = ["fig1", "fig2", "fig3"])]
        figure: String,
        /// output directory (defaults to each preset's own)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite
    SelfCheck {
        /// only checks whose module/name contains this
        #[arg(long)]
        filter: Option<String>,
        /// print results as JSON lines
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    AbsCos,
    MollifiedAbsCos,
    TestbedQ4,
}

impl From<TargetArg> for NamedTarget {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::AbsCos => NamedTarget::AbsCos,
            TargetArg::MollifiedAbsCos => NamedTarget::MollifiedAbsCos,
            TargetArg::TestbedQ4 => NamedTarget::TestbedQ4,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NodeKind {
    Dense,
    NonDense,
    Lattice,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_enum, default_value = "dense")]
    kind: NodeKind,
    #[arg(long)]
    m: usize,
    #[arg(long, value_enum, default_value = "abs-cos")]
    target: TargetArg,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KernelProbeArgs {
    #[arg(long = "N")]
    big_n: f64,
    #[arg(long, default_value_t = 1)]
    q: usize,
    /// samples along the first axis on [0, pi]
    #[arg(long, default_value_t = 1024)]
    points: usize,
    /// CSV path for the profile (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExpArgs {
    /// TOML with one experiment or an [[experiment]] list; flags are ignored
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "run")]
    name: String,
    #[arg(long, value_enum)]
    target: Option<TargetArg>,
    /// fitted bundle JSON used as the truth
    #[arg(long, conflicts_with = "target")]
    bundle: Option<PathBuf>,
    /// training CSV (x1..xq,y)
    #[arg(long, conflicts_with_all = ["dense", "non_dense", "lattice"])]
    data: Option<PathBuf>,
    #[arg(long)]
    dense: Option<usize>,
    #[arg(long)]
    non_dense: Option<usize>,
    /// distinct points of the q = 4 testbed lattice
    #[arg(long)]
    lattice: Option<usize>,
    #[arg(long)]
    n: Option<f64>,
    #[arg(long = "N")]
    big_n: Option<f64>,
    #[arg(long)]
    quadrature: Option<usize>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long, value_delimiter = ',')]
    degrees: Option<Vec<f64>>,
    #[arg(long)]
    table_grid: Option<usize>,
    #[arg(long)]
    grid_factor: Option<f64>,
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 1024)]
    eval_grid: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RegularizeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// training CSV (x1..xq,y)
    #[arg(long, required_unless_present = "config")]
    data: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    degree: Option<f64>,
    #[arg(long, default_value_t = 3.0)]
    grid_factor: f64,
    /// noise level recorded with the data
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// solution JSON (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// pointwise error CSV against the target at random probes
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "abs-cos")]
    target: TargetArg,
    #[arg(long, default_value_t = 1024)]
    probes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e.kind() {
                ErrorKind::Numerical => ExitCode::from(3),
                ErrorKind::Validation | ErrorKind::Io => ExitCode::from(2),
            }
        }
    }
}

fn run(cmd: Command) -> torusfit::Result<ExitCode> {
    match cmd {
        Command::GenData(a) => gen_data(a)?,
        Command::KernelProbe(a) => kernel_probe(a)?,
        Command::Interpolate { minimal, exp } => {
            let method = if minimal {
                Method::Minimal
            } else {
                Method::Localized
            };
            run_configs(exp.into_configs(method)?)?
        }
        Command::Blend(a) => run_configs(a.into_configs(Method::Blended)?)?,
        Command::Straight(a) => run_configs(a.into_configs(Method::Straight)?)?,
        Command::Regularize(a) => regularize(a)?,
        Command::NetBlend(a) => run_configs(a.into_configs(Method::NetBlended)?)?,
        Command::DeepFit(a) => run_configs(a.into_configs(Method::DeepBlended)?)?,
        Command::DeepRegularize(a) => run_configs(a.into_configs(Method::DeepRegularize)?)?,
        Command::Reproduce { figure, out } => {
            for cfg in preset(&figure)? {
                let s = run_experiment(&cfg, out.as_deref())?;
                print_summary(&s);
            }
        }
        Command::SelfCheck { filter, json } => return Ok(self_check(filter.as_deref(), json)),
    }
    Ok(ExitCode::SUCCESS)
}

fn open(path: &Path) -> torusfit::Result<File> {
    File::open(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn read_configs(path: &Path) -> torusfit::Result<Vec<ExperimentConfig>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    parse_configs(&text)
}

impl ExpArgs {
    fn into_configs(self, method: Method) -> torusfit::Result<Vec<ExperimentConfig>> {
        if let Some(path) = &self.config {
            let cfgs = read_configs(path)?;
            for c in cfgs.iter().filter(|c| c.method != method) {
                warn!(
                    "config `{}` uses method {:?}; running it as written",
                    c.name, c.method
                );
            }
            return Ok(cfgs);
        }
        let dataset = match (self.data, self.dense, self.non_dense, self.lattice) {
            (Some(path), None, None, None) => DatasetSpec::Csv { path },
            (None, Some(m), None, None) => DatasetSpec::Dense { m },
            (None, None, Some(m), None) => DatasetSpec::NonDense { m },
            (None, None, None, Some(m)) => DatasetSpec::Lattice { m },
            _ => {
                return Err(Error::InvalidInput(
                    "give exactly one of --data, --dense, --non-dense, --lattice (or --config)"
                        .into(),
                ))
            }
        };
        let target = match (self.bundle, self.target) {
            (Some(bundle), _) => Target::Bundle { bundle },
            (None, Some(t)) => Target::Named(t.into()),
            (None, None) if method == Method::DeepBlended || method == Method::DeepRegularize => {
                Target::Named(NamedTarget::TestbedQ4)
            }
            (None, None) => Target::Named(NamedTarget::AbsCos),
        };
        Ok(vec![ExperimentConfig {
            name: self.name,
            target,
            dataset,
            method,
            n: self.n,
            big_n: self.big_n,
            quadrature: self.quadrature,
            activation: self.activation,
            degrees: self.degrees,
            table_grid: self.table_grid,
            grid_factor: self.grid_factor,
            cycles: self.cycles,
            noise: self.noise,
            eval_grid: self.eval_grid,
            seed: self.seed,
            output: Some(self.out),
        }])
    }
}

fn run_configs(cfgs: Vec<ExperimentConfig>) -> torusfit::Result<()> {
    for cfg in &cfgs {
        cfg.validate()?;
    }
    for cfg in &cfgs {
        let s = run_experiment(cfg, None)?;
        print_summary(&s);
    }
    Ok(())
}

fn print_summary(s: &Summary) {
    println!(
        "{}: residual max {:.3e}, grid sup error {:.3e}, files {}",
        s.name,
        s.residual_max,
        s.grid_sup_error,
        s.files.join(", ")
    );
}

fn output(path: Option<&Path>) -> torusfit::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Box::new(File::create(p)?)
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn gen_data(a: GenDataArgs) -> torusfit::Result<()> {
    let data = match a.kind {
        NodeKind::Lattice => {
            let s = testbed_samples(&testbed_q4(), a.m, a.noise, a.seed)?;
            Dataset::new(s.points, s.values, a.noise)?
        }
        kind => {
            let (truth, q) = Target::Named(a.target.into()).truth()?;
            if q != 1 {
                return Err(Error::InvalidInput(
                    "dense and non-dense node sets are univariate".into(),
                ));
            }
            let set = if matches!(kind, NodeKind::Dense) {
                NodeSet::Dense
            } else {
                NodeSet::NonDense
            };
            generate_dataset(set, a.m, |x| truth(x), a.noise, a.seed)?
        }
    };
    data.write_csv(output(a.out.as_deref())?)
}

fn kernel_probe(a: KernelProbeArgs) -> torusfit::Result<()> {
    let spec = KernelSpec::new(a.q, a.big_n)?;
    if a.points < 2 {
        return Err(Error::InvalidInput("need at least 2 probe points".into()));
    }
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["x", "phi", "phi_over_N_q"])?;
    let scale = a.big_n.powi(a.q as i32);
    for i in 0..a.points {
        let x = std::f64::consts::PI * i as f64 / (a.points - 1) as f64;
        let mut c = vec![0.0; a.q];
        c[0] = x;
        let v = spec.eval(&TorusPoint::new(c)?)?;
        w.write_record([x.to_string(), v.to_string(), (v / scale).to_string()])?;
    }
    w.flush()?;
    eprintln!("Phi_N(0) / N^q = {:.6}", spec.at_origin() / scale);
    if a.big_n * std::f64::consts::PI >= 100.0 {
        eprintln!(
            "decay slope over N|x| in [5, 100] = {:.4}",
            localization_slope(&spec, 5.0, 100.0, 2000)?
        );
    }
    Ok(())
}

fn regularize(a: RegularizeArgs) -> torusfit::Result<()> {
    if let Some(path) = &a.config {
        return run_configs(read_configs(path)?);
    }
    let (Some(path), Some(degree)) = (a.data, a.degree) else {
        return Err(Error::InvalidInput(
            "--data and --degree are required".into(),
        ));
    };
    let data = Dataset::read_csv(open(&path)?, a.noise)?;
    let problem = RegProblem::new(data.clone(), degree)?.with_grid_factor(a.grid_factor);
    let sol = solve_regularization(&problem)?;
    let mut w = output(a.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &sol)?;
    writeln!(w)?;
    if let Some(report) = a.report {
        let (truth, q) = Target::Named(a.target.into()).truth()?;
        if q != data.q() {
            return Err(Error::DimensionMismatch {
                expected: q,
                got: data.q(),
            });
        }
        let probes: Vec<TorusPoint> = eval_points(q, a.probes, a.seed)
            .into_iter()
            .map(TorusPoint::new)
            .collect::<torusfit::Result<_>>()?;
        let rows = pointwise_error_report(&sol.polynomial, |x| truth(x), &data, degree, &probes)?;
        write_pointwise_csv(&rows, output(Some(&report))?)?;
    }
    eprintln!(
        "objective {:.6e} (training {:.3e}, seminorm {:.3e}), gap {:.1e}",
        sol.objective_value, sol.training_error, sol.sobolev_term, sol.certificate.lp.gap
    );
    Ok(())
}

fn self_check(filter: Option<&str>, json: bool) -> ExitCode {
    let results = run_self_check(filter);
    let mut failed = 0;
    for r in &results {
        if json {
            println!("{}", serde_json::to_string(r).unwrap_or_default());
        } else {
            println!(
                "{} {}/{}: {} [{:.2}s]",
                if r.passed { "PASS" } else { "FAIL" },
                r.module,
                r.name,
                r.detail,
                r.seconds
            );
        }
        failed += usize::from(!r.passed);
    }
    if !json {
        println!(
            "{} of {} checks passed",
            results.len() - failed,
            results.len()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}
