//! The invariant suite behind `torusfit self-check`.
//!
//! Every check is deterministic (fixed seeds) and reports the measured
//! quantity next to its threshold, so a red line says by how much it missed.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cutoff::h;
use crate::dag::{
    deep_blended_fit, deep_regularizer, default_degrees, propagation_check, testbed_q4,
    testbed_samples, DagSpec, GFunction, NodeSpec, Samples,
};
use crate::error::{Error, Result};
use crate::experiment::{abs_cos, generate_dataset, parse_configs, run_experiment, NodeSet};
use crate::kernel::{
    default_dft_grid, fourier_dft, grid_error, localization_slope, sigma_as_trigpoly, FourierTable,
    KernelSpec,
};
use crate::minimax::{
    evaluate_regularizer, solve_regularization, subgradient_descent, BasisKind, FeatureSet,
    RegProblem,
};
use crate::net::{
    min_quadrature_size, net_blended_fit, network_grid_gap, to_network, PeriodicActivation,
};
use crate::shallow::{blended_fit, dominance_check, localized_interpolant};
use crate::torus::{make_grid, min_separation, profile_grid, torus_dist, Dataset, TorusPoint};
use crate::trig_poly::{random_poly, TrigPoly};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type CheckFn = fn() -> Result<(bool, String)>;

const CHECKS: &[(&str, &str, CheckFn)] = &[
    ("torus", "metric_axioms", torus_metric),
    ("torus", "period_invariance", torus_periodic),
    ("torus", "subset_separation", torus_subsets),
    ("cutoff", "transition_symmetry", cutoff_symmetry),
    ("cutoff", "evenness", cutoff_even),
    ("cutoff", "smooth_gluing", cutoff_smooth),
    ("trig_poly", "linearity", poly_linear),
    ("trig_poly", "mixed_partials_commute", poly_commute),
    ("trig_poly", "sup_below_coefficient_sum", poly_sup_l1),
    ("trig_poly", "grid_sup_equivalence", poly_grid_equivalence),
    ("kernel", "localization_slope", kernel_slope),
    ("kernel", "origin_band", kernel_origin),
    ("kernel", "row_sum_bound", kernel_row_sum),
    ("kernel", "sigma_reproduces_and_is_linear", kernel_sigma),
    ("shallow", "zero_training_error", shallow_zero_error),
    ("shallow", "generalization", shallow_generalization),
    ("shallow", "coefficient_bound", shallow_coefficients),
    ("shallow", "permutation_symmetry", shallow_permutation),
    ("net", "linearity", net_linear),
    ("net", "bound_validity", net_bound),
    ("net", "perturbed_solve", net_alpha),
    ("minimax", "certificate", reg_certificate),
    ("minimax", "epigraph_tightness", reg_tightness),
    ("minimax", "minimizer_dominance", reg_dominance),
    ("minimax", "scaling", reg_scaling),
    ("minimax", "subgradient_oracle", reg_subgradient),
    ("dag", "validation", dag_validation),
    ("dag", "good_propagation", dag_propagation),
    ("dag", "duplicate_collapse", dag_duplicates),
    ("dag", "depth_zero_regularizer", dag_depth_zero),
    ("expcli", "determinism", cli_determinism),
    ("expcli", "summary_residual", cli_residual),
];

/// `(module, name)` of every registered check.
pub fn check_names() -> Vec<(&'static str, &'static str)> {
    CHECKS.iter().map(|(m, n, _)| (*m, *n)).collect()
}

/// Runs the checks whose `module/name` contains `filter` (all when `None`).
/// A check that errors counts as failed, with the error as its detail.
pub fn run_self_check(filter: Option<&str>) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .filter(|(m, n, _)| filter.map_or(true, |f| format!("{m}/{n}").contains(f)))
        .map(|&(module, name, f)| {
            let start = Instant::now();
            let (passed, detail) = match f() {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            let r = CheckResult {
                module,
                name,
                passed,
                detail,
                seconds: start.elapsed().as_secs_f64(),
            };
            log::info!("{}/{}: {} ({:.2}s)", r.module, r.name, r.passed, r.seconds);
            r
        })
        .collect()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_point(rng: &mut ChaCha8Rng, q: usize) -> Vec<f64> {
    (0..q).map(|_| rng.gen_range(-PI..PI)).collect()
}

fn pt(c: Vec<f64>) -> Result<TorusPoint> {
    TorusPoint::new(c)
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn coeff_gap(a: &TrigPoly, b: &TrigPoly) -> f64 {
    a.terms()
        .chain(b.terms())
        .map(|(k, _)| {
            let (u, v) = (a.coeff(k), b.coeff(k));
            (u.a - v.a).abs().max((u.b - v.b).abs())
        })
        .fold(0.0, f64::max)
}

fn dense_abs_cos(m: usize) -> Result<Dataset> {
    let xs = profile_grid(m);
    let ys: Vec<f64> = xs.iter().map(|x| x.cos().abs()).collect();
    Dataset::from_angles(&xs, &ys, 0.0)
}

fn non_dense_abs_cos(m: usize) -> Result<Dataset> {
    let xs: Vec<f64> = (0..m)
        .map(|j| PI / 4.0 + PI * j as f64 / (2 * m) as f64)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|x| x.cos().abs()).collect();
    Dataset::from_angles(&xs, &ys, 0.0)
}

// ---- torus ----

fn torus_metric() -> Result<(bool, String)> {
    let mut r = rng(1);
    let mut worst_sym = 0.0f64;
    let mut worst_tri = f64::NEG_INFINITY;
    let mut ident = true;
    for i in 0..300 {
        let q = 1 + i % 4;
        let (a, b, c) = (
            pt(random_point(&mut r, q))?,
            pt(random_point(&mut r, q))?,
            pt(random_point(&mut r, q))?,
        );
        let (ab, ba) = (torus_dist(&a, &b)?, torus_dist(&b, &a)?);
        worst_sym = worst_sym.max((ab - ba).abs());
        worst_tri = worst_tri.max(torus_dist(&a, &c)? - ab - torus_dist(&b, &c)?);
        ident &= torus_dist(&a, &a)? == 0.0 && (a == b || ab > 0.0);
    }
    Ok((
        worst_sym == 0.0 && worst_tri <= 1e-12 && ident,
        format!("asymmetry {worst_sym:.1e}, triangle excess {worst_tri:.1e}, identity {ident}"),
    ))
}

fn torus_periodic() -> Result<(bool, String)> {
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for i in 0..300 {
        let q = 1 + i % 4;
        let a = random_point(&mut r, q);
        let b = random_point(&mut r, q);
        let d = torus_dist(&pt(a.clone())?, &pt(b.clone())?)?;
        for axis in 0..q {
            for shift in [2.0 * PI, -2.0 * PI, 6.0 * PI] {
                let mut a2 = a.clone();
                a2[axis] += shift;
                let mut b2 = b.clone();
                b2[axis] -= shift;
                worst = worst.max((torus_dist(&pt(a2.clone())?, &pt(b.clone())?)? - d).abs());
                worst = worst.max((torus_dist(&pt(a.clone())?, &pt(b2)?)? - d).abs());
            }
        }
    }
    Ok((
        worst <= 1e-12,
        format!("max change {worst:.1e} (tol 1e-12)"),
    ))
}

fn torus_subsets() -> Result<(bool, String)> {
    let mut r = rng(3);
    let pts: Vec<TorusPoint> = (0..60)
        .map(|_| pt(random_point(&mut r, 2)))
        .collect::<Result<_>>()?;
    let full = min_separation(&pts)?;
    let mut ok = true;
    for _ in 0..50 {
        let k = r.gen_range(2..pts.len());
        let sub: Vec<TorusPoint> = pts.choose_multiple(&mut r, k).cloned().collect();
        ok &= min_separation(&sub)? >= full;
    }
    Ok((ok, format!("superset separation {full:.4}, 50 subsets")))
}

// ---- cutoff ----

fn cutoff_symmetry() -> Result<(bool, String)> {
    let worst = (0..=10_000)
        .map(|i| {
            let t = 0.5 + 0.5 * i as f64 / 10_000.0;
            (h(t) + h(1.5 - t) - 1.0).abs()
        })
        .fold(0.0, f64::max);
    Ok((
        worst < 1e-14,
        format!("max |h(t) + h(3/2 - t) - 1| = {worst:.1e}"),
    ))
}

fn cutoff_even() -> Result<(bool, String)> {
    let mut r = rng(4);
    let bad = (0..10_000)
        .filter(|_| {
            let t = r.gen_range(-3.0..3.0);
            h(t) != h(-t)
        })
        .count();
    Ok((bad == 0, format!("{bad} asymmetric samples of 10000")))
}

/// Centered k-th difference quotient of `h` at `t0`.
fn difference_quotient(order: usize, t0: f64, step: f64) -> f64 {
    let mut acc = 0.0;
    let mut binom = 1.0;
    for j in 0..=order {
        let x = t0 + (j as f64 - order as f64 / 2.0) * step;
        let sign = if (order - j) % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binom * h(x);
        binom = binom * (order - j) as f64 / (j + 1) as f64;
    }
    acc / step.powi(order as i32)
}

fn cutoff_smooth() -> Result<(bool, String)> {
    let steps = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
    let mut ok = true;
    let mut last = 0.0f64;
    for t0 in [0.5, 1.0] {
        for order in 1..=4 {
            let vals: Vec<f64> = steps
                .iter()
                .map(|&s| difference_quotient(order, t0, s).abs())
                .collect();
            ok &= vals.windows(2).all(|w| w[1] <= w[0] + 1e-12);
            last = last.max(vals[4]);
        }
    }
    ok &= last < 1e-6;
    Ok((
        ok,
        format!("largest difference quotient at step 1e-3: {last:.1e}"),
    ))
}

// ---- trig_poly ----

fn poly_linear() -> Result<(bool, String)> {
    let mut r = rng(5);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let q = 1 + i % 3;
        let t = random_poly(&mut r, q, 4.5);
        let s = random_poly(&mut r, q, 4.5);
        let (alpha, beta) = (r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0));
        let comb = t.scaled(alpha).add_scaled(&s, beta)?;
        for _ in 0..10 {
            let x = random_point(&mut r, q);
            let lhs = comb.eval_coords(&x);
            worst = worst.max((lhs - alpha * t.eval_coords(&x) - beta * s.eval_coords(&x)).abs());
        }
    }
    Ok((
        worst < 1e-11,
        format!("max deviation {worst:.1e} (tol 1e-11)"),
    ))
}

fn poly_commute() -> Result<(bool, String)> {
    let mut r = rng(6);
    let mut worst = 0.0f64;
    for q in [2, 3] {
        for _ in 0..10 {
            let t = random_poly(&mut r, q, 4.0);
            for i in 0..q {
                for j in 0..i {
                    let a = t.partial_derivative(i)?.partial_derivative(j)?;
                    let b = t.partial_derivative(j)?.partial_derivative(i)?;
                    worst = worst.max(coeff_gap(&a, &b));
                }
            }
        }
    }
    Ok((worst == 0.0, format!("max coefficient gap {worst:.1e}")))
}

fn poly_sup_l1() -> Result<(bool, String)> {
    let mut r = rng(7);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..60 {
        let q = 1 + i % 3;
        let t = random_poly(&mut r, q, [3.0, 5.5, 9.0][i % 3] / q as f64 + 1.0);
        worst = worst.max(t.discrete_sup_norm() - t.coeff_l1());
    }
    Ok((worst <= 1e-12, format!("max (sup - l1) = {worst:.3e}")))
}

fn poly_grid_equivalence() -> Result<(bool, String)> {
    // ratio of a much denser grid maximum to the 3 ceil(N) grid maximum
    let mut r = rng(8);
    let mut worst = 1.0f64;
    for _ in 0..100 {
        let t = random_poly(&mut r, 1, 16.0);
        worst = worst.max(t.discrete_sup_norm_with(4096.0, 1.0) / t.discrete_sup_norm());
    }
    for _ in 0..20 {
        let t = random_poly(&mut r, 2, 6.0);
        worst = worst.max(t.discrete_sup_norm_with(128.0, 1.0) / t.discrete_sup_norm());
    }
    Ok((
        worst <= 1.05,
        format!("worst dense/discrete ratio {worst:.4} (limit 1.05)"),
    ))
}

// ---- kernel ----

fn kernel_slope() -> Result<(bool, String)> {
    let mut slopes = Vec::new();
    for n in [32.0, 64.0, 128.0] {
        slopes.push(localization_slope(
            &KernelSpec::new(1, n)?,
            5.0,
            100.0,
            2000,
        )?);
    }
    let ok = slopes.iter().all(|&s| s <= -4.0);
    Ok((
        ok,
        format!("slopes {slopes:.3?} for N = 32, 64, 128 (limit -4)"),
    ))
}

fn kernel_origin() -> Result<(bool, String)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for n in 8..=256 {
        let r = KernelSpec::new(1, n as f64)?.at_origin() / n as f64;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok((
        lo >= 0.9 && hi <= 2.1,
        format!("Phi_N(0)/N in [{lo:.4}, {hi:.4}] for N = 8..256"),
    ))
}

/// Frozen ceiling for `sup_x sum_j |Phi_N(x - x_j)| / N` on equispaced nodes.
const ROW_SUM_CEILING: f64 = 3.0;

fn kernel_row_sum() -> Result<(bool, String)> {
    let mut ratios = Vec::new();
    for n in [16usize, 32, 64, 128] {
        let centers: Vec<TorusPoint> = profile_grid(n)
            .into_iter()
            .map(TorusPoint::scalar)
            .collect::<Result<_>>()?;
        let probes: Vec<TorusPoint> = profile_grid(8 * n)
            .into_iter()
            .map(TorusPoint::scalar)
            .collect::<Result<_>>()?;
        let spec = KernelSpec::new(1, n as f64)?;
        ratios.push(spec.row_sum_max(&centers, &probes)? / n as f64);
    }
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    Ok((
        hi <= ROW_SUM_CEILING,
        format!("row sum / N = {ratios:.4?} (ceiling {ROW_SUM_CEILING})"),
    ))
}

fn kernel_sigma() -> Result<(bool, String)> {
    let mut r = rng(9);
    let grid = make_grid(1, 1024)?;
    let mut repro = 0.0f64;
    for n in [8.0, 32.0, 128.0] {
        for _ in 0..20 {
            let t = random_poly(&mut r, 1, n / 2.0);
            let table = FourierTable::from_trig_poly(&t.clone().with_degree(n)?);
            let s = sigma_as_trigpoly(&table, n)?;
            repro = repro.max(grid_error(|x| t.eval_coords(x), &s, &grid)?);
        }
    }
    let mut lin = 0.0f64;
    for _ in 0..10 {
        let t = random_poly(&mut r, 2, 6.0);
        let s = random_poly(&mut r, 2, 6.0);
        let (a, b) = (r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
        let comb = t.scaled(a).add_scaled(&s, b)?;
        let st = sigma_as_trigpoly(&FourierTable::from_trig_poly(&t), 6.0)?;
        let ss = sigma_as_trigpoly(&FourierTable::from_trig_poly(&s), 6.0)?;
        let sc = sigma_as_trigpoly(&FourierTable::from_trig_poly(&comb), 6.0)?;
        lin = lin.max(coeff_gap(&sc, &st.scaled(a).add_scaled(&ss, b)?));
    }
    Ok((
        repro < 1e-10 && lin < 1e-12,
        format!("reproduction error {repro:.1e} (tol 1e-10), linearity gap {lin:.1e}"),
    ))
}

// ---- shallow ----

fn shallow_zero_error() -> Result<(bool, String)> {
    let table = |n: f64, g: usize| fourier_dft(abs_cos, 1, n, g);
    let cases = [
        (dense_abs_cos(128)?, 128.0, 256.0, 512),
        (non_dense_abs_cos(128)?, 128.0, 256.0, 512),
        (non_dense_abs_cos(128)?, 256.0, 256.0, 1024),
    ];
    let mut worst = 0.0f64;
    for (data, n, big_n, g) in cases {
        let fit = blended_fit(&data, &table(n, g)?, n, big_n)?;
        worst = worst.max(fit.residual_max / (1.0 + data.max_abs_value()));
    }
    let mut r = rng(10);
    let pts: Vec<TorusPoint> = profile_grid(12)
        .iter()
        .flat_map(|&a| profile_grid(12).into_iter().map(move |b| vec![a, b]))
        .map(pt)
        .collect::<Result<_>>()?;
    let f = |x: &[f64]| (x[0].cos() + x[1].sin()).exp();
    let ys: Vec<f64> = pts
        .iter()
        .map(|p| f(p.coords()) + r.gen_range(-1e-3..1e-3))
        .collect();
    let data = Dataset::new(pts, ys, 1e-3)?;
    let fit = blended_fit(
        &data,
        &fourier_dft(f, 2, 8.0, default_dft_grid(2, 8.0))?,
        8.0,
        24.0,
    )?;
    worst = worst.max(fit.residual_max / (1.0 + data.max_abs_value()));
    Ok((
        worst < 1e-8,
        format!("max relative residual {worst:.1e} (tol 1e-8)"),
    ))
}

/// Frozen generalization constant, calibrated on the first run.
const GENERALIZATION_C: f64 = 10.0;

fn shallow_generalization() -> Result<(bool, String)> {
    let grid = make_grid(1, 1024)?;
    let mut worst = 0.0f64;
    for n in [64usize, 128, 256] {
        let big_n = n as f64;
        let table = fourier_dft(abs_cos, 1, big_n / 2.0, default_dft_grid(1, big_n / 2.0))?;
        let base_err = grid_error(abs_cos, &sigma_as_trigpoly(&table, big_n / 2.0)?, &grid)?;
        for eps in [0.0, 1e-3, 1e-2] {
            let data = generate_dataset(NodeSet::Dense, n, abs_cos, eps, 100 + n as u64)?;
            let fit = blended_fit(&data, &table, big_n / 2.0, big_n)?;
            let err = grid_error(abs_cos, &fit.combined, &grid)?;
            worst = worst.max(err / (eps + base_err));
        }
    }
    Ok((
        worst <= GENERALIZATION_C,
        format!("max error / (eps + base error) = {worst:.3} (limit {GENERALIZATION_C})"),
    ))
}

fn shallow_coefficients() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for (data, n) in [
        (dense_abs_cos(128)?, 128.0),
        (dense_abs_cos(64)?, 96.0),
        (non_dense_abs_cos(128)?, 384.0),
        (non_dense_abs_cos(128)?, 512.0),
    ] {
        if !dominance_check(&data, n)?.1 {
            return Ok((false, format!("no dominance at N = {n}")));
        }
        let fit = localized_interpolant(&data, n)?;
        let amax = max_abs(fit.coeffs.iter().copied());
        let bmax = max_abs(fit.system.rhs.iter().copied());
        worst = worst.max(amax * n / bmax);
    }
    Ok((
        worst <= 4.0,
        format!("max N max|a| / max|b| = {worst:.3} (limit 4)"),
    ))
}

fn shallow_permutation() -> Result<(bool, String)> {
    let data = dense_abs_cos(128)?;
    let mut perm: Vec<usize> = (0..data.len()).collect();
    perm.shuffle(&mut rng(11));
    let pts: Vec<TorusPoint> = perm.iter().map(|&i| data.points()[i].clone()).collect();
    let ys: Vec<f64> = perm.iter().map(|&i| data.values()[i]).collect();
    let shuffled = Dataset::new(pts, ys, 0.0)?;
    let table = fourier_dft(abs_cos, 1, 64.0, 256)?;
    let a = blended_fit(&data, &table, 64.0, 128.0)?;
    let b = blended_fit(&shuffled, &table, 64.0, 128.0)?;
    let coeff = perm
        .iter()
        .enumerate()
        .map(|(i, &p)| (a.correction_coeffs[p] - b.correction_coeffs[i]).abs())
        .fold(0.0, f64::max);
    let poly = coeff_gap(&a.combined, &b.combined);
    Ok((
        coeff < 1e-12 && poly < 1e-12,
        format!("coefficient gap {coeff:.1e}, polynomial gap {poly:.1e} (tol 1e-12)"),
    ))
}

// ---- net ----

fn net_linear() -> Result<(bool, String)> {
    let mut r = rng(12);
    let act = PeriodicActivation::smooth_relu();
    let mut worst = 0.0f64;
    for q in [1, 2] {
        let t = random_poly(&mut r, q, 5.0);
        let s = random_poly(&mut r, q, 5.0);
        let sum = t.add_scaled(&s, 1.0)?;
        let nt = to_network(&t, &act, 6)?.net;
        let ns = to_network(&s, &act, 6)?.net;
        let nsum = to_network(&sum, &act, 6)?.net;
        for _ in 0..20 {
            let x = pt(random_point(&mut r, q))?;
            worst = worst.max((nsum.eval(&x)? - nt.eval(&x)? - ns.eval(&x)?).abs());
        }
    }
    Ok((
        worst < 1e-9,
        format!("max deviation {worst:.1e} (tol 1e-9)"),
    ))
}

fn net_bound() -> Result<(bool, String)> {
    let mut r = rng(13);
    let act = PeriodicActivation::smooth_relu();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let t = random_poly(&mut r, 1, 6.0);
        let conv = to_network(&t, &act, 8)?;
        let err = network_grid_gap(&conv.net, &t, 1024)?;
        worst = worst.max(err / (2.0 * conv.bound));
    }
    Ok((
        worst <= 1.0,
        format!("max error / (2 x bound) = {worst:.3e}"),
    ))
}

fn net_alpha() -> Result<(bool, String)> {
    let data = dense_abs_cos(64)?;
    let table = fourier_dft(abs_cos, 1, 64.0, default_dft_grid(1, 64.0))?;
    let act = PeriodicActivation::smooth_relu();
    let quad = min_quadrature_size(&data, 128.0, &act, 256)?;
    let poly = blended_fit(&data, &table, 64.0, 128.0)?;
    let net = net_blended_fit(&data, &table, 64.0, 128.0, quad, &act)?;
    let a_net = max_abs(net.coeffs.iter().copied());
    let a_poly = max_abs(poly.correction_coeffs.iter().copied());
    Ok((
        a_net <= 2.0 * a_poly && net.kernel_gap <= net.allowed_gap,
        format!("quadrature {quad}: max|a| {a_net:.3e} vs unperturbed {a_poly:.3e}"),
    ))
}

// ---- minimax ----

fn reg_certificate() -> Result<(bool, String)> {
    let sol = solve_regularization(&RegProblem::new(dense_abs_cos(32)?, 16.0)?)?;
    let c = &sol.certificate.lp;
    Ok((
        sol.certificate.holds(1e-7),
        format!(
            "gap {:.1e}, primal infeasibility {:.1e}, dual infeasibility {:.1e}, slackness {:.1e}",
            c.gap, c.primal_infeasibility, c.dual_infeasibility, c.complementarity
        ),
    ))
}

fn reg_tightness() -> Result<(bool, String)> {
    let data = dense_abs_cos(32)?;
    let sol = solve_regularization(&RegProblem::new(data.clone(), 16.0)?)?;
    let (_, train, sob) = evaluate_regularizer(&sol.polynomial, &data, 16.0)?;
    let (a, b) = (
        (sol.training_error - train).abs(),
        (sol.sobolev_term - sob).abs(),
    );
    Ok((
        a < 1e-8 && b < 1e-8,
        format!("residual term off by {a:.1e}, derivative term off by {b:.1e} (tol 1e-8)"),
    ))
}

fn reg_dominance() -> Result<(bool, String)> {
    let n = 16.0;
    let data = dense_abs_cos(32)?;
    let sol = solve_regularization(&RegProblem::new(data.clone(), n)?)?;
    let table = fourier_dft(abs_cos, 1, n, default_dft_grid(1, n))?;
    let cands = [
        blended_fit(&data, &fourier_dft(abs_cos, 1, 8.0, 64)?, 8.0, n)?.combined,
        sigma_as_trigpoly(&table, n)?,
        TrigPoly::zero(1, n)?,
    ];
    let mut slack = f64::INFINITY;
    for c in &cands {
        slack = slack.min(evaluate_regularizer(c, &data, n)?.0 + 1e-7 - sol.objective_value);
    }
    Ok((
        slack >= 0.0,
        format!(
            "optimum {:.6}, smallest margin to a candidate {slack:.3e}",
            sol.objective_value
        ),
    ))
}

fn reg_scaling() -> Result<(bool, String)> {
    let data = dense_abs_cos(20)?;
    let base = solve_regularization(&RegProblem::new(data.clone(), 10.0)?)?;
    let basis = FeatureSet::new(BasisKind::Full, 1, 10.0)?;
    let cb = basis.coords_of(&base.polynomial);
    let mut worst = 0.0f64;
    for lambda in [0.5, 3.0] {
        let ds = data.with_values(data.values().iter().map(|v| lambda * v).collect())?;
        let s = solve_regularization(&RegProblem::new(ds, 10.0)?)?;
        worst = worst
            .max((s.objective_value - lambda * base.objective_value).abs() / s.objective_value);
        let cs = basis.coords_of(&s.polynomial);
        let scale = max_abs(cs.iter().copied());
        for (a, c) in cb.iter().zip(&cs) {
            worst = worst.max((lambda * a - c).abs() / scale);
        }
    }
    Ok((
        worst < 1e-8,
        format!("max relative deviation {worst:.1e} (tol 1e-8)"),
    ))
}

fn reg_subgradient() -> Result<(bool, String)> {
    let p = RegProblem::new(dense_abs_cos(16)?, 10.0)?;
    if p.basis.len() > 20 {
        return Err(Error::InvalidInput(format!(
            "{} coefficients, expected at most 20",
            p.basis.len()
        )));
    }
    let lp = solve_regularization(&p)?;
    let (_, val) = subgradient_descent(&p, 200_000)?;
    let gap = val - lp.objective_value;
    Ok((
        gap.abs() < 1e-3,
        format!(
            "{} coefficients: LP {:.6}, descent {val:.6}",
            p.basis.len(),
            lp.objective_value
        ),
    ))
}

// ---- dag ----

fn dag_validation() -> Result<(bool, String)> {
    let n = |id: &str, ch: &[&str], inp: &[usize]| NodeSpec {
        id: id.into(),
        children: ch.iter().map(|s| s.to_string()).collect(),
        inputs: inp.to_vec(),
    };
    let rejected = [
        DagSpec::new(vec![n("a", &["b"], &[]), n("b", &["a"], &[])]).is_err(),
        DagSpec::new(vec![n("a", &[], &[0]), n("b", &[], &[1])]).is_err(),
        DagSpec::new(vec![n("a", &["x"], &[])]).is_err(),
    ];
    let build = || {
        DagSpec::new(vec![
            n("s", &["b", "a"], &[]),
            n("a", &[], &[0, 1]),
            n("b", &[], &[2, 2]),
        ])
    };
    let orders: Vec<Vec<usize>> = (0..5)
        .map(|_| build().map(|d| d.topo_order().to_vec()))
        .collect::<Result<_>>()?;
    let stable = orders.windows(2).all(|w| w[0] == w[1]);
    let ok = rejected.iter().all(|&b| b) && stable;
    Ok((
        ok,
        format!(
            "cycle/two sinks/unknown child rejected {rejected:?}, order {:?}",
            orders[0]
        ),
    ))
}

fn dag_propagation() -> Result<(bool, String)> {
    let gf = testbed_q4();
    let s = testbed_samples(&gf, 120, 0.0, 21)?;
    let fit = deep_blended_fit(&gf, &s, &default_degrees(&gf, &s)?)?;
    let mut r = rng(14);
    let probes: Vec<Vec<f64>> = (0..200).map(|_| random_point(&mut r, 4)).collect();
    let rep = propagation_check(&gf, &fit, &probes, 24)?;
    Ok((
        rep.holds(),
        format!(
            "sink error {:.3e} <= bound {:.3e}",
            rep.sink_error, rep.bound
        ),
    ))
}

fn dag_duplicates() -> Result<(bool, String)> {
    let gf = testbed_q4();
    let s = testbed_samples(&gf, 40, 0.0, 11)?;
    let mut dup = s.clone();
    dup.points.push(s.points[3].clone());
    dup.values.push(s.values[3]);
    let deg = default_degrees(&gf, &s)?;
    let a = deep_blended_fit(&gf, &s, &deg)?;
    let b = deep_blended_fit(&gf, &dup, &deg)?;
    let mut same_sets = true;
    let mut gap = 0.0f64;
    for i in 0..gf.dag().len() {
        same_sets &= a.propagated.sets[i].points() == b.propagated.sets[i].points();
        if let (Some(ta), Some(tb)) = (a.gfunction.polynomial(i), b.gfunction.polynomial(i)) {
            gap = gap.max(coeff_gap(ta, tb));
        }
    }
    Ok((
        same_sets && gap < 1e-12,
        format!("sets unchanged {same_sets}, coefficient gap {gap:.1e}"),
    ))
}

fn dag_depth_zero() -> Result<(bool, String)> {
    let gf = GFunction::truth(DagSpec::single(1)?, vec![Arc::new(abs_cos)])?;
    let data = dense_abs_cos(32)?;
    let samples = Samples::from(&data);
    let fit = deep_blended_fit(&gf, &samples, &[32.0])?;
    let deep = deep_regularizer(&fit.gfunction, &samples, &[32.0])?.total;
    let poly = fit
        .gfunction
        .polynomial(0)
        .ok_or_else(|| Error::InvalidInput("sink is not fitted".into()))?;
    let shallow = evaluate_regularizer(poly, &data, 32.0)?.0;
    let gap = (deep - shallow).abs();
    Ok((
        gap < 1e-12,
        format!("deep {deep:.12}, shallow {shallow:.12}"),
    ))
}

// ---- expcli ----

struct ScratchDir(PathBuf);

impl ScratchDir {
    fn new(tag: &str) -> Result<Self> {
        let p =
            std::env::temp_dir().join(format!("torusfit-selfcheck-{}-{tag}", std::process::id()));
        let _ = std::fs::remove_dir_all(&p);
        std::fs::create_dir_all(&p)?;
        Ok(Self(p))
    }
}

impl Drop for ScratchDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

const SMALL_EXPERIMENT: &str = r#"
name = "check"
method = "blended"
n = 16
N = 32
noise = 0.01
seed = 5
dataset = { kind = "dense", m = 32 }
"#;

fn cli_determinism() -> Result<(bool, String)> {
    let cfg = parse_configs(SMALL_EXPERIMENT)?.remove(0);
    let (a, b) = (ScratchDir::new("a")?, ScratchDir::new("b")?);
    let sa = run_experiment(&cfg, Some(&a.0))?;
    run_experiment(&cfg, Some(&b.0))?;
    let mut compared = 0;
    let mut same = true;
    for f in sa.files.iter().filter(|f| f.ends_with(".csv")) {
        let name = std::path::Path::new(f).file_name().unwrap_or_default();
        same &= std::fs::read(a.0.join(name))? == std::fs::read(b.0.join(name))?;
        compared += 1;
    }
    Ok((
        same && compared >= 2,
        format!("{compared} CSV files compared, identical {same}"),
    ))
}

fn cli_residual() -> Result<(bool, String)> {
    let cfg = parse_configs(SMALL_EXPERIMENT)?.remove(0);
    let dir = ScratchDir::new("r")?;
    let summary = run_experiment(&cfg, Some(&dir.0))?;
    let mut rdr = csv::Reader::from_path(dir.0.join("check_residuals.csv"))?;
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h == "residual")
        .ok_or_else(|| Error::InvalidInput("residual column missing".into()))?;
    let mut max = 0.0f64;
    for rec in rdr.records() {
        let v: f64 = rec?[col]
            .parse()
            .map_err(|e| Error::InvalidInput(format!("bad residual: {e}")))?;
        max = max.max(v.abs());
    }
    let gap = (max - summary.residual_max).abs();
    Ok((
        gap < 1e-12,
        format!("summary {:.3e}, csv {max:.3e}", summary.residual_max),
    ))
}
