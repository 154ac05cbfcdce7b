//! Experiment configs, dataset generation and report files.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dag::{
    compose_eval, deep_blended_fit, default_degrees, minimize_deep_regularizer, propagation_check,
    testbed_q4, testbed_samples, BcdOptions, GFunction, Samples,
};
use crate::error::{Error, Result};
use crate::kernel::{default_dft_grid, fourier_dft, KernelSpec};
use crate::minimax::{
    pointwise_error_report, solve_regularization, write_pointwise_csv, RegProblem,
};
use crate::net::{min_quadrature_size, net_blended_fit, PeriodicActivation, PeriodicNet};
use crate::plot::{error_profile_svg, line_plot, Series};
use crate::shallow::{blended_fit, localized_interpolant, minimal_interpolant};
use crate::torus::{profile_grid, Dataset, TorusPoint};
use crate::trig_poly::TrigPoly;

/// Offset inside the square root of the smoothed `|cos x|`.
pub const MOLLIFIER: f64 = 0.01;

pub fn abs_cos(x: &[f64]) -> f64 {
    x[0].cos().abs()
}

/// `sqrt(cos^2 x + 0.01)`: a smooth stand-in for `|cos x|`.
pub fn mollified_abs_cos(x: &[f64]) -> f64 {
    (x[0].cos().powi(2) + MOLLIFIER).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedTarget {
    AbsCos,
    MollifiedAbsCos,
    TestbedQ4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Named(NamedTarget),
    /// a fitted G-function bundle used as black-box truth
    Bundle {
        bundle: PathBuf,
    },
}

pub type TruthFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

impl Target {
    /// The truth and its input dimension.
    pub fn truth(&self) -> Result<(TruthFn, usize)> {
        Ok(match self {
            Target::Named(NamedTarget::AbsCos) => (Arc::new(abs_cos), 1),
            Target::Named(NamedTarget::MollifiedAbsCos) => (Arc::new(mollified_abs_cos), 1),
            Target::Named(NamedTarget::TestbedQ4) => {
                let gf = testbed_q4();
                (
                    Arc::new(move |x: &[f64]| compose_eval(&gf, x).unwrap_or(f64::NAN)),
                    4,
                )
            }
            Target::Bundle { bundle } => {
                let gf = GFunction::from_bundle(serde_json::from_reader(File::open(bundle)?)?)?;
                let q = gf.dag().q();
                (
                    Arc::new(move |x: &[f64]| compose_eval(&gf, x).unwrap_or(f64::NAN)),
                    q,
                )
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeSet {
    /// `x_j = -pi + 2 pi j / M`
    Dense,
    /// `x_j = pi/4 + pi j / (2M)`
    NonDense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    Dense {
        m: usize,
    },
    NonDense {
        m: usize,
    },
    /// distinct points of the lattice used by the q = 4 testbed
    Lattice {
        m: usize,
    },
    Csv {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Minimal,
    Localized,
    Blended,
    Straight,
    Regularize,
    NetBlended,
    DeepBlended,
    DeepRegularize,
}

impl Method {
    fn is_deep(self) -> bool {
        matches!(self, Method::DeepBlended | Method::DeepRegularize)
    }
}

fn default_target() -> Target {
    Target::Named(NamedTarget::AbsCos)
}

fn default_eval_grid() -> usize {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_target")]
    pub target: Target,
    pub dataset: DatasetSpec,
    pub method: Method,
    /// base degree of the blended operators
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    /// kernel or regularization degree
    #[serde(default, rename = "N", skip_serializing_if = "Option::is_none")]
    pub big_n: Option<f64>,
    /// network quadrature size
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<String>,
    /// per-node degrees in node-list order
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degrees: Option<Vec<f64>>,
    /// DFT size for the base table
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycles: Option<usize>,
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "default_eval_grid")]
    pub eval_grid: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let need = |v: Option<f64>, what: &str| {
            v.filter(|d| d.is_finite() && *d > 0.0)
                .map(|_| ())
                .ok_or_else(|| {
                    Error::InvalidInput(format!("`{}` needs a positive `{what}`", self.name))
                })
        };
        match self.method {
            Method::Minimal => {}
            Method::Localized | Method::Straight | Method::Regularize => need(self.big_n, "N")?,
            Method::Blended | Method::NetBlended => {
                need(self.n, "n")?;
                need(self.big_n, "N")?;
            }
            Method::DeepBlended | Method::DeepRegularize => {
                if self.target != Target::Named(NamedTarget::TestbedQ4) {
                    return Err(Error::InvalidInput(
                        "deep methods need the testbed_q4 target (truth constituents are required)"
                            .into(),
                    ));
                }
                if let Some(d) = &self.degrees {
                    if d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                        return Err(Error::InvalidInput(
                            "per-node degrees must be positive".into(),
                        ));
                    }
                }
            }
        }
        if matches!(self.dataset, DatasetSpec::Lattice { .. }) && !self.method.is_deep() {
            return Err(Error::InvalidInput(
                "the lattice dataset is only used by deep methods".into(),
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise must be nonnegative, got {}",
                self.noise
            )));
        }
        if self.eval_grid < 2 {
            return Err(Error::InvalidInput("eval_grid must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Suite {
    experiment: Vec<ExperimentConfig>,
}

/// Parses either a single config or a list under `[[experiment]]`.
pub fn parse_configs(text: &str) -> Result<Vec<ExperimentConfig>> {
    let configs = match toml::from_str::<Suite>(text) {
        Ok(s) => s.experiment,
        Err(suite_err) => vec![toml::from_str::<ExperimentConfig>(text)
            .map_err(|e| Error::Toml(format!("{e} (as a suite: {suite_err})")))?],
    };
    for c in &configs {
        c.validate()?;
    }
    Ok(configs)
}

pub const PRESET_NAMES: [&str; 3] = ["fig1", "fig2", "fig3"];

pub fn preset(name: &str) -> Result<Vec<ExperimentConfig>> {
    let text = match name {
        "fig1" => include_str!("../presets/fig1.toml"),
        "fig2" => include_str!("../presets/fig2.toml"),
        "fig3" => include_str!("../presets/fig3.toml"),
        other => return Err(Error::InvalidInput(format!("unknown preset `{other}`"))),
    };
    parse_configs(text)
}

/// Node positions for the two univariate node sets.
pub fn node_positions(kind: NodeSet, m: usize) -> Vec<f64> {
    let mf = m as f64;
    (0..m)
        .map(|j| match kind {
            NodeSet::Dense => -std::f64::consts::PI + 2.0 * std::f64::consts::PI * j as f64 / mf,
            NodeSet::NonDense => {
                std::f64::consts::FRAC_PI_4 + std::f64::consts::PI * j as f64 / (2.0 * mf)
            }
        })
        .collect()
}

/// `y_j = f(x_j) + e_j` with `e_j` uniform in `[-noise, noise]`.
pub fn generate_dataset<F: Fn(&[f64]) -> f64>(
    kind: NodeSet,
    m: usize,
    f: F,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 nodes, got {m}"
        )));
    }
    let xs = node_positions(kind, m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let e = if noise > 0.0 {
                rng.gen_range(-noise..=noise)
            } else {
                0.0
            };
            f(&[x]) + e
        })
        .collect();
    Dataset::from_angles(&xs, &ys, noise)
}

/// A fitted model that can be evaluated pointwise.
#[derive(Debug, Clone)]
pub enum Model {
    Poly(TrigPoly),
    Net(PeriodicNet),
    Deep(GFunction),
}

impl Model {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            Model::Poly(t) => Ok(t.eval_coords(x)),
            Model::Net(n) => Ok(n.eval_complex(x).re),
            Model::Deep(g) => compose_eval(g, x),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Runtimes {
    pub dataset_s: f64,
    pub fit_s: f64,
    pub eval_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub method: Method,
    pub q: usize,
    pub training_points: usize,
    pub noise: f64,
    pub min_separation: Option<f64>,
    pub residual_max: f64,
    pub grid_sup_error: f64,
    pub eval_points: usize,
    pub condition_estimate: Option<f64>,
    pub dominance_margin: Option<f64>,
    pub details: serde_json::Value,
    pub runtimes: Runtimes,
    pub files: Vec<String>,
}

/// In-memory result of an experiment.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub model: Model,
    pub summary: Summary,
    pub eval_x: Vec<Vec<f64>>,
    pub truth: Vec<f64>,
    pub fit: Vec<f64>,
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<f64>,
    pub train_fit: Vec<f64>,
}

struct Fitted {
    model: Model,
    condition: Option<f64>,
    margin: Option<f64>,
    details: serde_json::Value,
}

fn base_table(
    cfg: &ExperimentConfig,
    truth: &TruthFn,
    q: usize,
    n: f64,
) -> Result<crate::kernel::FourierTable> {
    let grid = cfg.table_grid.unwrap_or_else(|| default_dft_grid(q, n));
    fourier_dft(|x| truth(x), q, n, grid)
}

fn load_samples(cfg: &ExperimentConfig, q: usize, truth: &TruthFn) -> Result<Samples> {
    Ok(match &cfg.dataset {
        DatasetSpec::Dense { m } => Samples::from(&generate_dataset(
            NodeSet::Dense,
            *m,
            |x| truth(x),
            cfg.noise,
            cfg.seed,
        )?),
        DatasetSpec::NonDense { m } => Samples::from(&generate_dataset(
            NodeSet::NonDense,
            *m,
            |x| truth(x),
            cfg.noise,
            cfg.seed,
        )?),
        DatasetSpec::Lattice { m } => testbed_samples(&testbed_q4(), *m, cfg.noise, cfg.seed)?,
        DatasetSpec::Csv { path } => {
            let d = Dataset::read_csv(File::open(path)?, cfg.noise)?;
            if d.q() != q {
                return Err(Error::DimensionMismatch {
                    expected: q,
                    got: d.q(),
                });
            }
            Samples::from(&d)
        }
    })
}

fn as_dataset(s: &Samples) -> Result<Dataset> {
    Dataset::new(s.points.clone(), s.values.clone(), s.noise_level)
}

fn fit_shallow(cfg: &ExperimentConfig, truth: &TruthFn, data: &Dataset) -> Result<Fitted> {
    let q = data.q();
    Ok(match cfg.method {
        Method::Minimal => {
            let fit = minimal_interpolant(data)?;
            Fitted {
                details: json!({ "degree": fit.poly.degree() - 1.0 }),
                condition: Some(fit.condition_estimate),
                margin: None,
                model: Model::Poly(fit.poly),
            }
        }
        Method::Localized => {
            let fit = localized_interpolant(data, cfg.big_n.expect("validated"))?;
            Fitted {
                details: json!({ "N": cfg.big_n, "coefficient_max": fit.coeffs.iter().fold(0.0f64, |m, a| m.max(a.abs())) }),
                condition: Some(fit.system.condition_estimate),
                margin: Some(fit.system.diag_dominance_margin),
                model: Model::Poly(fit.poly),
            }
        }
        Method::Blended => {
            let (n, big_n) = (cfg.n.expect("validated"), cfg.big_n.expect("validated"));
            let table = base_table(cfg, truth, q, n)?;
            let fit = blended_fit(data, &table, n, big_n)?;
            Fitted {
                details: json!({ "n": n, "N": big_n, "table_grid": cfg.table_grid.unwrap_or_else(|| default_dft_grid(q, n)) }),
                condition: Some(fit.system.condition_estimate),
                margin: Some(fit.system.diag_dominance_margin),
                model: Model::Poly(fit.combined),
            }
        }
        Method::Straight => {
            let big_n = cfg.big_n.expect("validated");
            let kernel = KernelSpec::new(q, big_n)?;
            let w: Vec<f64> = data
                .values()
                .iter()
                .map(|y| y / kernel.at_origin())
                .collect();
            Fitted {
                details: json!({ "N": big_n }),
                condition: None,
                margin: None,
                model: Model::Poly(kernel.combination(data.points(), &w)?),
            }
        }
        Method::Regularize => {
            let big_n = cfg.big_n.expect("validated");
            let mut problem = RegProblem::new(data.clone(), big_n)?;
            if let Some(g) = cfg.grid_factor {
                problem = problem.with_grid_factor(g);
            }
            let sol = solve_regularization(&problem)?;
            Fitted {
                details: json!({
                    "N": big_n,
                    "objective_value": sol.objective_value,
                    "training_error": sol.training_error,
                    "sobolev_term": sol.sobolev_term,
                    "certificate": sol.certificate,
                }),
                condition: None,
                margin: None,
                model: Model::Poly(sol.polynomial),
            }
        }
        Method::NetBlended => {
            let (n, big_n) = (cfg.n.expect("validated"), cfg.big_n.expect("validated"));
            let act =
                PeriodicActivation::by_name(cfg.activation.as_deref().unwrap_or("smooth_relu"))?;
            let nt = match cfg.quadrature {
                Some(v) => v,
                None => min_quadrature_size(data, big_n, &act, 1 << 12)?,
            };
            let table = base_table(cfg, truth, q, n)?;
            let fit = net_blended_fit(data, &table, n, big_n, nt, &act)?;
            Fitted {
                details: json!({
                    "n": n, "N": big_n, "quadrature": nt, "activation": act.name(),
                    "kernel_gap": fit.kernel_gap, "allowed_gap": fit.allowed_gap,
                    "units": fit.net.units().len(),
                }),
                condition: None,
                margin: None,
                model: Model::Net(fit.net),
            }
        }
        Method::DeepBlended | Method::DeepRegularize => unreachable!("handled by fit_deep"),
    })
}

fn fit_deep(cfg: &ExperimentConfig, samples: &Samples, probes: &[Vec<f64>]) -> Result<Fitted> {
    let gf = testbed_q4();
    let degrees = match &cfg.degrees {
        Some(d) => d.clone(),
        None => default_degrees(&gf, samples)?,
    };
    let fit = deep_blended_fit(&gf, samples, &degrees)?;
    let report = propagation_check(&gf, &fit, probes, 64)?;
    let warm = crate::dag::deep_regularizer(&fit.gfunction, samples, &degrees)?;
    let mut details = json!({
        "degrees": degrees,
        "nodes": fit.nodes,
        "propagation": report,
        "warm_start_regularizer": warm,
    });
    let model = if cfg.method == Method::DeepRegularize {
        let opts = BcdOptions {
            cycles: cfg.cycles.unwrap_or(5),
            grid_factor: cfg.grid_factor.unwrap_or(crate::trig_poly::SUP_GRID_FACTOR),
            ..Default::default()
        };
        let bcd = minimize_deep_regularizer(samples, &fit.gfunction, &degrees, opts)?;
        details["history"] = json!(bcd.history);
        details["steps"] = json!(bcd.steps);
        Model::Deep(bcd.gfunction)
    } else {
        Model::Deep(fit.gfunction)
    };
    let margin = fit
        .nodes
        .iter()
        .map(|n| n.dominance_margin)
        .fold(f64::INFINITY, f64::min);
    let condition = fit
        .nodes
        .iter()
        .map(|n| n.condition_estimate)
        .fold(0.0f64, f64::max);
    Ok(Fitted {
        model,
        condition: Some(condition),
        margin: Some(margin),
        details,
    })
}

/// Evaluation points: the uniform profile grid for `q = 1`, seeded uniform
/// probes otherwise.
pub fn eval_points(q: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    if q == 1 {
        return profile_grid(count).into_iter().map(|x| vec![x]).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    (0..count)
        .map(|_| {
            (0..q)
                .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
                .collect()
        })
        .collect()
}

/// Fits and evaluates without touching the filesystem.
pub fn evaluate_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let mut runtimes = Runtimes::default();
    let t0 = Instant::now();
    let (truth, q) = cfg.target.truth().map_err(|e| e.in_stage("target"))?;
    let samples = load_samples(cfg, q, &truth).map_err(|e| e.in_stage("dataset"))?;
    runtimes.dataset_s = t0.elapsed().as_secs_f64();
    let eval_x = eval_points(q, cfg.eval_grid, cfg.seed);
    let t1 = Instant::now();
    let (fitted, min_sep) = if cfg.method.is_deep() {
        (
            fit_deep(cfg, &samples, &eval_x).map_err(|e| e.in_stage("fit"))?,
            None,
        )
    } else {
        let data = as_dataset(&samples).map_err(|e| e.in_stage("dataset"))?;
        (
            fit_shallow(cfg, &truth, &data).map_err(|e| e.in_stage("fit"))?,
            data.min_sep(),
        )
    };
    runtimes.fit_s = t1.elapsed().as_secs_f64();
    let t2 = Instant::now();
    let model = fitted.model;
    let fit: Vec<f64> = eval_x
        .par_iter()
        .map(|x| model.eval(x))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("evaluate"))?;
    let truth_v: Vec<f64> = eval_x.par_iter().map(|x| truth(x)).collect();
    let train_x: Vec<Vec<f64>> = samples.points.iter().map(|p| p.coords().to_vec()).collect();
    let train_fit: Vec<f64> = train_x
        .par_iter()
        .map(|x| model.eval(x))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("evaluate"))?;
    runtimes.eval_s = t2.elapsed().as_secs_f64();
    let residual_max = samples
        .values
        .iter()
        .zip(&train_fit)
        .fold(0.0f64, |m, (y, f)| m.max((y - f).abs()));
    let grid_sup_error = truth_v
        .iter()
        .zip(&fit)
        .fold(0.0f64, |m, (t, f)| m.max((f - t).abs()));
    info!(
        "{}: residual max {residual_max:.3e}, grid sup error {grid_sup_error:.3e} ({:.2} s fit)",
        cfg.name, runtimes.fit_s
    );
    let summary = Summary {
        name: cfg.name.clone(),
        method: cfg.method,
        q,
        training_points: samples.len(),
        noise: cfg.noise,
        min_separation: min_sep,
        residual_max,
        grid_sup_error,
        eval_points: eval_x.len(),
        condition_estimate: fitted.condition,
        dominance_margin: fitted.margin,
        details: fitted.details,
        runtimes,
        files: Vec::new(),
    };
    Ok(Outcome {
        model,
        summary,
        eval_x,
        truth: truth_v,
        fit,
        train_x,
        train_y: samples.values,
        train_fit,
    })
}

fn coord_header(q: usize) -> Vec<String> {
    if q == 1 {
        vec!["x".into()]
    } else {
        (1..=q).map(|i| format!("x{i}")).collect()
    }
}

fn write_profile_csv(path: &Path, o: &Outcome) -> Result<()> {
    let mut wr = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header = coord_header(o.summary.q);
    header.extend(["truth", "fit", "error"].map(String::from));
    wr.write_record(&header)?;
    for ((x, t), f) in o.eval_x.iter().zip(&o.truth).zip(&o.fit) {
        let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        rec.extend([t.to_string(), f.to_string(), (f - t).to_string()]);
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

fn write_residual_csv(path: &Path, o: &Outcome) -> Result<()> {
    let mut wr = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header = coord_header(o.summary.q);
    header.extend(["y", "fit", "residual"].map(String::from));
    wr.write_record(&header)?;
    for ((x, y), f) in o.train_x.iter().zip(&o.train_y).zip(&o.train_fit) {
        let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        rec.extend([y.to_string(), f.to_string(), (y - f).to_string()]);
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// Runs one experiment and writes `<name>_profile.csv`,
/// `<name>_residuals.csv`, `<name>_summary.json`, `<name>_error.svg` and
/// `<name>_residuals.svg` (plus `<name>_pointwise.csv` for regularization)
/// under `out_dir`, or the config's own output directory.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<Summary> {
    let mut o = evaluate_experiment(cfg)?;
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let write = || -> Result<Vec<String>> {
        fs::create_dir_all(&dir)?;
        let stem = &cfg.name;
        let mut files = Vec::new();
        let mut emit = |suffix: &str| {
            let name = format!("{stem}_{suffix}");
            files.push(name.clone());
            dir.join(name)
        };
        write_profile_csv(&emit("profile.csv"), &o)?;
        write_residual_csv(&emit("residuals.csv"), &o)?;
        let one_d = o.summary.q == 1;
        let xs: Vec<f64> = if one_d {
            o.eval_x.iter().map(|x| x[0]).collect()
        } else {
            (0..o.eval_x.len()).map(|i| i as f64).collect()
        };
        let errs: Vec<f64> = o.fit.iter().zip(&o.truth).map(|(f, t)| f - t).collect();
        fs::write(
            emit("error.svg"),
            error_profile_svg(&format!("{stem}: error profile"), &xs, &errs),
        )?;
        let res = Series {
            label: "y - fit".into(),
            points: o
                .train_x
                .iter()
                .enumerate()
                .zip(o.train_y.iter().zip(&o.train_fit))
                .map(|((i, x), (y, f))| (if one_d { x[0] } else { i as f64 }, y - f))
                .collect(),
        };
        let x_label = if one_d { "x" } else { "training index" };
        fs::write(
            emit("residuals.svg"),
            line_plot(
                &format!("{stem}: residuals at the training points"),
                x_label,
                "residual",
                &[res],
            ),
        )?;
        if let (Model::Poly(t), Method::Regularize) = (&o.model, cfg.method) {
            let (truth, _) = cfg.target.truth()?;
            let data = Dataset::new(
                o.train_x
                    .iter()
                    .map(|x| TorusPoint::new(x.clone()))
                    .collect::<Result<_>>()?,
                o.train_y.clone(),
                cfg.noise,
            )?;
            let probes: Vec<TorusPoint> = o
                .eval_x
                .iter()
                .map(|x| TorusPoint::new(x.clone()))
                .collect::<Result<_>>()?;
            let rows = pointwise_error_report(
                t,
                |x| truth(x),
                &data,
                cfg.big_n.expect("validated"),
                &probes,
            )?;
            write_pointwise_csv(&rows, BufWriter::new(File::create(emit("pointwise.csv"))?))?;
        }
        files.push(format!("{stem}_summary.json"));
        Ok(files)
    };
    o.summary.files = write().map_err(|e| e.in_stage("write"))?;
    let summary_path = dir.join(format!("{}_summary.json", cfg.name));
    fs::write(
        &summary_path,
        serde_json::to_string_pretty(&o.summary)? + "\n",
    )
    .map_err(|e| Error::from(e).in_stage("write"))?;
    Ok(o.summary)
}
