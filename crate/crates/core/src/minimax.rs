//! Sup-norm regularized fitting: `R_N(T) = max_j |y_j - T(x_j)| + (1/N) sum_i ||D_i T||`
//! with the norms taken on the `(3 ceil N)^q` grid, minimized exactly as a
//! linear program over the coefficients.

use std::io::Write;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::even_lattice;
use crate::linalg::Matrix;
use crate::lp::{self, Certificate, InequalityLp, SimplexOptions};
use crate::torus::{check_dims, Dataset, TorusPoint};
use crate::trig_poly::{canonical_lattice, sup_grid_size, MultiIndex, TrigPoly, SUP_GRID_FACTOR};

/// Default cap on `variables x constraints` of the dense LP.
pub const DEFAULT_LP_CAP: usize = 40_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    /// `cos(k.x)`, `sin(k.x)` over canonical `k`
    Full,
    /// `prod_i cos(k_i x_i)` over `k >= 0`
    Even,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Wave {
    Cos,
    Sin,
}

/// Real basis of a polynomial space, in a fixed order.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    q: usize,
    degree: f64,
    kind: BasisKind,
    terms: Vec<(Vec<i32>, Wave)>,
}

impl FeatureSet {
    pub fn new(kind: BasisKind, q: usize, degree: f64) -> Result<Self> {
        if q == 0 || !(degree > 0.0) || !degree.is_finite() {
            return Err(Error::InvalidInput(format!(
                "bad basis dimensions q = {q}, N = {degree}"
            )));
        }
        let terms = match kind {
            BasisKind::Full => canonical_lattice(q, degree)
                .into_iter()
                .flat_map(|k| {
                    let zero = k.is_zero();
                    let mut v = vec![(k.0.clone(), Wave::Cos)];
                    if !zero {
                        v.push((k.0, Wave::Sin));
                    }
                    v
                })
                .collect(),
            BasisKind::Even => even_lattice(q, degree)
                .into_iter()
                .map(|k| (k.into_iter().map(|c| c as i32).collect(), Wave::Cos))
                .collect(),
        };
        Ok(Self {
            q,
            degree,
            kind,
            terms,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn degree(&self) -> f64 {
        self.degree
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn values(&self, x: &[f64]) -> Vec<f64> {
        self.terms
            .iter()
            .map(|(k, w)| match self.kind {
                BasisKind::Full => {
                    let t: f64 = k.iter().zip(x).map(|(a, b)| *a as f64 * b).sum();
                    match w {
                        Wave::Cos => t.cos(),
                        Wave::Sin => t.sin(),
                    }
                }
                BasisKind::Even => k
                    .iter()
                    .zip(x)
                    .map(|(a, b)| (*a as f64 * b).cos())
                    .product(),
            })
            .collect()
    }

    /// Values of `D_axis` of each feature at `x`.
    pub fn derivative_values(&self, axis: usize, x: &[f64]) -> Vec<f64> {
        self.terms
            .iter()
            .map(|(k, w)| {
                let ka = k[axis] as f64;
                if ka == 0.0 {
                    return 0.0;
                }
                match self.kind {
                    BasisKind::Full => {
                        let t: f64 = k.iter().zip(x).map(|(a, b)| *a as f64 * b).sum();
                        match w {
                            Wave::Cos => -ka * t.sin(),
                            Wave::Sin => ka * t.cos(),
                        }
                    }
                    BasisKind::Even => {
                        let mut p = -ka * (ka * x[axis]).sin();
                        for (i, (a, b)) in k.iter().zip(x).enumerate() {
                            if i != axis {
                                p *= (*a as f64 * b).cos();
                            }
                        }
                        p
                    }
                }
            })
            .collect()
    }

    pub fn to_poly(&self, coeffs: &[f64]) -> Result<TrigPoly> {
        check_dims(self.len(), coeffs.len())?;
        match self.kind {
            BasisKind::Full => {
                let mut t = TrigPoly::zero(self.q, self.degree)?;
                for ((k, w), &c) in self.terms.iter().zip(coeffs) {
                    if c == 0.0 {
                        continue;
                    }
                    let k = MultiIndex(k.clone());
                    match w {
                        Wave::Cos => t.add_term(&k, c, 0.0)?,
                        Wave::Sin => t.add_term(&k, 0.0, c)?,
                    }
                }
                Ok(t)
            }
            BasisKind::Even => {
                let terms: Vec<(Vec<u32>, f64)> = self
                    .terms
                    .iter()
                    .zip(coeffs)
                    .filter(|(_, c)| **c != 0.0)
                    .map(|((k, _), &c)| (k.iter().map(|v| *v as u32).collect(), c))
                    .collect();
                TrigPoly::from_even_terms(self.q, self.degree, &terms)
            }
        }
    }

    /// Coordinates of `t` in this basis (terms outside the span are dropped).
    pub fn coords_of(&self, t: &TrigPoly) -> Vec<f64> {
        self.terms
            .iter()
            .map(|(k, w)| {
                let mi = MultiIndex(k.clone());
                match self.kind {
                    BasisKind::Full => {
                        let c = t.coeff(&mi);
                        match w {
                            Wave::Cos => c.a,
                            Wave::Sin => c.b,
                        }
                    }
                    // prod cos(k_i x_i) puts 2^{1-nz} on each canonical index
                    BasisKind::Even => {
                        let nz = k.iter().filter(|v| **v != 0).count() as i32;
                        t.coeff(&mi.canonical().0).a * 2f64.powi((nz - 1).max(0))
                    }
                }
            })
            .collect()
    }
}

/// Points of the `n`-per-axis product grid. Even bases only need the
/// closed quarter `[0, pi]^q`, since `|D_i T|` is invariant under sign flips
/// of the arguments there.
pub fn derivative_grid(q: usize, n: usize, kind: BasisKind) -> Vec<Vec<f64>> {
    let per_axis: Vec<usize> = match kind {
        BasisKind::Full => (0..n).collect(),
        BasisKind::Even => (0..=n / 2).collect(),
    };
    let mut out = Vec::with_capacity(per_axis.len().pow(q as u32));
    let mut idx = vec![0usize; q];
    loop {
        out.push(
            idx.iter()
                .map(|&i| 2.0 * std::f64::consts::PI * per_axis[i] as f64 / n as f64)
                .collect(),
        );
        let mut axis = q;
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < per_axis.len() {
                break;
            }
            idx[axis] = 0;
        }
    }
}

/// Solved `min_c max_j |y_j - (F c)_j| + w sum_i max_g |(D_i c)_g|`.
#[derive(Debug, Clone)]
pub struct EpigraphSolution {
    pub coeffs: Vec<f64>,
    pub t_residual: f64,
    pub t_axes: Vec<f64>,
    pub certificate: Certificate,
    pub iterations: usize,
}

/// Assembles and solves the epigraph LP. `residual_rows` is `M x K`,
/// `derivative_rows[i]` is `G_i x K`.
pub fn solve_epigraph(
    residual_rows: &Matrix,
    targets: &[f64],
    derivative_rows: &[Matrix],
    weight: f64,
    cap: usize,
) -> Result<EpigraphSolution> {
    let k = residual_rows.cols();
    check_dims(residual_rows.rows(), targets.len())?;
    let q = derivative_rows.len();
    let nv = k + 1 + q;
    let n_rows =
        2 * residual_rows.rows() + derivative_rows.iter().map(|d| 2 * d.rows()).sum::<usize>();
    if nv.saturating_mul(n_rows) > cap {
        return Err(Error::LpTooLarge {
            vars: nv,
            rows: n_rows,
            cap,
        });
    }
    let mut objective = vec![0.0; nv];
    objective[k] = 1.0;
    for i in 0..q {
        objective[k + 1 + i] = weight;
    }
    let mut free = vec![true; nv];
    for f in free.iter_mut().skip(k) {
        *f = false;
    }
    let mut prob = InequalityLp::new(objective, free)?;
    let mut row = vec![0.0; nv];
    for (j, &y) in targets.iter().enumerate() {
        let f = residual_rows.row(j);
        for sign in [1.0, -1.0] {
            row.iter_mut().for_each(|v| *v = 0.0);
            for (r, v) in row.iter_mut().zip(f) {
                *r = sign * v;
            }
            row[k] = -1.0;
            prob.push_row(&row, sign * y);
        }
    }
    for (i, d) in derivative_rows.iter().enumerate() {
        check_dims(k, d.cols())?;
        for g in 0..d.rows() {
            let f = d.row(g);
            if f.iter().all(|v| *v == 0.0) {
                continue;
            }
            for sign in [1.0, -1.0] {
                row.iter_mut().for_each(|v| *v = 0.0);
                for (r, v) in row.iter_mut().zip(f) {
                    *r = sign * v;
                }
                row[k + 1 + i] = -1.0;
                prob.push_row(&row, 0.0);
            }
        }
    }
    let sol = lp::solve(&prob, SimplexOptions::default())?;
    let certificate = Certificate::check(&prob, &sol.x, &sol.multipliers);
    Ok(EpigraphSolution {
        coeffs: sol.x[..k].to_vec(),
        t_residual: sol.x[k],
        t_axes: sol.x[k + 1..].to_vec(),
        certificate,
        iterations: sol.iterations,
    })
}

pub fn feature_matrix(rows: &[Vec<f64>]) -> Matrix {
    let k = rows.first().map_or(0, |r| r.len());
    Matrix::from_rows(rows.len(), k, rows.concat()).expect("rows of equal length")
}

pub fn derivative_matrices(basis: &FeatureSet, grid: &[Vec<f64>]) -> Vec<Matrix> {
    (0..basis.q())
        .map(|axis| {
            let rows: Vec<Vec<f64>> = grid
                .par_iter()
                .map(|x| basis.derivative_values(axis, x))
                .collect();
            feature_matrix(&rows)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RegProblem {
    pub data: Dataset,
    pub degree: f64,
    pub basis: FeatureSet,
    pub grid_factor: f64,
    pub penalty_weight: f64,
    pub cap: usize,
}

impl RegProblem {
    pub fn new(data: Dataset, degree: f64) -> Result<Self> {
        let basis = FeatureSet::new(BasisKind::Full, data.q(), degree)?;
        Ok(Self {
            data,
            degree,
            basis,
            grid_factor: SUP_GRID_FACTOR,
            penalty_weight: 1.0 / degree,
            cap: DEFAULT_LP_CAP,
        })
    }

    pub fn with_basis(mut self, kind: BasisKind) -> Result<Self> {
        self.basis = FeatureSet::new(kind, self.data.q(), self.degree)?;
        Ok(self)
    }

    /// Coarser derivative grids for `q >= 2`; the norms then deviate from
    /// the reference discretization.
    pub fn with_grid_factor(mut self, factor: f64) -> Self {
        if factor < SUP_GRID_FACTOR {
            warn!("derivative grid factor {factor} is below {SUP_GRID_FACTOR}: seminorms are coarsened");
        }
        self.grid_factor = factor;
        self
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn grid_per_axis(&self) -> usize {
        sup_grid_size(self.degree, self.grid_factor)
    }

    pub fn lp_size(&self) -> (usize, usize) {
        let n = self.grid_per_axis();
        let g = derivative_grid(self.data.q(), n, self.basis.kind()).len();
        (
            self.basis.len() + 1 + self.data.q(),
            2 * self.data.len() + 2 * self.data.q() * g,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegCertificate {
    #[serde(flatten)]
    pub lp: Certificate,
    /// `|t_0 - max residual|`
    pub residual_tightness: f64,
    /// `max_i |t_i - grid max |D_i T||`
    pub derivative_tightness: f64,
    pub iterations: usize,
}

impl RegCertificate {
    pub fn holds(&self, tol: f64) -> bool {
        self.lp.is_optimal(tol) && self.residual_tightness < tol && self.derivative_tightness < tol
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegSolution {
    pub polynomial: TrigPoly,
    pub objective_value: f64,
    pub training_error: f64,
    pub sobolev_term: f64,
    pub certificate: RegCertificate,
}

/// `(total, training term, seminorm)` with the seminorm on the `(3 ceil N)^q` grid.
pub fn evaluate_regularizer(t: &TrigPoly, data: &Dataset, degree: f64) -> Result<(f64, f64, f64)> {
    evaluate_regularizer_with(t, data, degree, SUP_GRID_FACTOR)
}

pub fn evaluate_regularizer_with(
    t: &TrigPoly,
    data: &Dataset,
    degree: f64,
    factor: f64,
) -> Result<(f64, f64, f64)> {
    check_dims(data.q(), t.q())?;
    let fit = t.eval_many(data.points())?;
    let training = fit
        .iter()
        .zip(data.values())
        .fold(0.0f64, |m, (f, y)| m.max((y - f).abs()));
    let sob = t.sobolev_seminorm_with(degree, factor);
    Ok((training + sob / degree, training, sob))
}

pub fn solve_regularization(problem: &RegProblem) -> Result<RegSolution> {
    let data = &problem.data;
    let basis = &problem.basis;
    let n = problem.grid_per_axis();
    let grid = derivative_grid(data.q(), n, basis.kind());
    let rows: Vec<Vec<f64>> = data
        .points()
        .par_iter()
        .map(|p| basis.values(p.coords()))
        .collect();
    let res = feature_matrix(&rows);
    let der = derivative_matrices(basis, &grid);
    let (vars, cons) = problem.lp_size();
    info!("regularization LP: {vars} variables, {cons} constraints");
    let sol = solve_epigraph(
        &res,
        data.values(),
        &der,
        problem.penalty_weight,
        problem.cap,
    )?;
    let polynomial = basis.to_poly(&sol.coeffs)?;
    let (_, training, sob) =
        evaluate_regularizer_with(&polynomial, data, problem.degree, problem.grid_factor)?;
    let derivative_tightness = (0..data.q())
        .map(|i| {
            let m = polynomial
                .partial_derivative(i)
                .expect("axis in range")
                .discrete_sup_norm_with(problem.degree, problem.grid_factor);
            (sol.t_axes[i] - m).abs()
        })
        .fold(0.0, f64::max);
    let certificate = RegCertificate {
        lp: sol.certificate,
        residual_tightness: (sol.t_residual - training).abs(),
        derivative_tightness,
        iterations: sol.iterations,
    };
    if !certificate.holds(1e-7) {
        warn!("regularization certificate is weak: {certificate:?}");
    }
    Ok(RegSolution {
        polynomial,
        objective_value: training + problem.penalty_weight * sob,
        training_error: training,
        sobolev_term: sob,
        certificate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseRow {
    pub x: Vec<f64>,
    pub delta: f64,
    pub measured: f64,
    pub ratio: f64,
}

/// Per-probe error against a known truth, with `delta` the distance to the
/// nearest training point and `ratio = measured / (1 + N delta)`.
pub fn pointwise_error_report<F>(
    t: &TrigPoly,
    truth: F,
    data: &Dataset,
    degree: f64,
    probes: &[TorusPoint],
) -> Result<Vec<PointwiseRow>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    probes
        .par_iter()
        .map(|p| {
            let delta = data.nearest_distance(p)?;
            let measured = (truth(p.coords()) - t.eval(p)?).abs();
            Ok(PointwiseRow {
                x: p.coords().to_vec(),
                delta,
                measured,
                ratio: measured / (1.0 + degree * delta),
            })
        })
        .collect()
}

pub fn write_pointwise_csv<W: Write>(rows: &[PointwiseRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let q = rows.first().map_or(1, |r| r.x.len());
    let mut header: Vec<String> = (1..=q).map(|i| format!("x{i}")).collect();
    header.extend(["delta", "measured", "ratio"].map(String::from));
    wr.write_record(&header)?;
    for r in rows {
        let mut rec: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
        rec.push(r.delta.to_string());
        rec.push(r.measured.to_string());
        rec.push(r.ratio.to_string());
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// Plain subgradient descent on the same discretized objective, with
/// geometrically shrinking normalized steps. Used to cross-check the LP.
pub fn subgradient_descent(problem: &RegProblem, iterations: usize) -> Result<(Vec<f64>, f64)> {
    let basis = &problem.basis;
    let data = &problem.data;
    let grid = derivative_grid(data.q(), problem.grid_per_axis(), basis.kind());
    let f: Vec<Vec<f64>> = data
        .points()
        .iter()
        .map(|p| basis.values(p.coords()))
        .collect();
    let d: Vec<Vec<Vec<f64>>> = (0..data.q())
        .map(|a| grid.iter().map(|x| basis.derivative_values(a, x)).collect())
        .collect();
    let w = problem.penalty_weight;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let objective_and_grad = |c: &[f64]| {
        let mut g = vec![0.0; c.len()];
        let (mut best, mut arg, mut sgn) = (-1.0, 0, 0.0);
        for (j, row) in f.iter().enumerate() {
            let r = data.values()[j] - dot(row, c);
            if r.abs() > best {
                best = r.abs();
                arg = j;
                sgn = r.signum();
            }
        }
        for (gi, fi) in g.iter_mut().zip(&f[arg]) {
            *gi -= sgn * fi;
        }
        let mut total = best;
        for rows in &d {
            let (mut m, mut a, mut s) = (-1.0, 0, 0.0);
            for (gidx, row) in rows.iter().enumerate() {
                let v = dot(row, c);
                if v.abs() > m {
                    m = v.abs();
                    a = gidx;
                    s = v.signum();
                }
            }
            total += w * m;
            for (gi, di) in g.iter_mut().zip(&rows[a]) {
                *gi += w * s * di;
            }
        }
        (total, g)
    };
    let mut c = vec![0.0; basis.len()];
    let (mut best_val, _) = objective_and_grad(&c);
    let mut best = c.clone();
    let mut step = 0.5 * data.max_abs_value().max(1.0);
    let phases = 40;
    let per_phase = (iterations / phases).max(1);
    for _ in 0..phases {
        c.clone_from(&best);
        for it in 0..per_phase {
            let (val, g) = objective_and_grad(&c);
            if val < best_val {
                best_val = val;
                best.clone_from(&c);
            }
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Ok((best, best_val));
            }
            let s = step / ((it + 1) as f64).sqrt() / norm;
            for (ci, gi) in c.iter_mut().zip(&g) {
                *ci -= s * gi;
            }
        }
        step *= 0.7;
    }
    Ok((best, best_val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{default_dft_grid, fourier_dft};
    use crate::shallow::blended_fit;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn dense_abs_cos(m: usize) -> Dataset {
        let xs: Vec<f64> = (0..m)
            .map(|j| -PI + 2.0 * PI * j as f64 / m as f64)
            .collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.cos().abs()).collect();
        Dataset::from_angles(&xs, &ys, 0.0).unwrap()
    }

    #[test]
    fn zero_polynomial_regularizer() {
        let d = Dataset::from_angles(&[0.0, 1.0], &[1.0, -0.5], 0.0).unwrap();
        let z = TrigPoly::zero(1, 8.0).unwrap();
        assert_eq!(evaluate_regularizer(&z, &d, 8.0).unwrap(), (1.0, 1.0, 0.0));
    }

    #[test]
    fn interpolating_polynomial_costs_only_its_seminorm() {
        let mut t = TrigPoly::zero(1, 4.0).unwrap();
        t.add_term(&MultiIndex(vec![2]), 0.5, -0.25).unwrap();
        let xs = [0.1, 0.9, 2.0];
        let ys: Vec<f64> = xs.iter().map(|x| t.eval_coords(&[*x])).collect();
        let d = Dataset::from_angles(&xs, &ys, 0.0).unwrap();
        let (total, train, sob) = evaluate_regularizer(&t, &d, 4.0).unwrap();
        assert!(train < 1e-15);
        assert!((total - sob / 4.0).abs() < 1e-15);
    }

    #[test]
    fn features_match_their_polynomials() {
        for kind in [BasisKind::Full, BasisKind::Even] {
            let b = FeatureSet::new(kind, 2, 4.5).unwrap();
            let coeffs: Vec<f64> = (0..b.len())
                .map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0)
                .collect();
            let t = b.to_poly(&coeffs).unwrap();
            let back = b.coords_of(&t);
            for (a, c) in back.iter().zip(&coeffs) {
                assert!((a - c).abs() < 1e-12, "{kind:?}");
            }
            let x = [0.4, -1.3];
            let direct: f64 = b.values(&x).iter().zip(&coeffs).map(|(v, c)| v * c).sum();
            assert!((direct - t.eval_coords(&x)).abs() < 1e-12);
            for axis in 0..2 {
                let dv: f64 = b
                    .derivative_values(axis, &x)
                    .iter()
                    .zip(&coeffs)
                    .map(|(v, c)| v * c)
                    .sum();
                let dt = t.partial_derivative(axis).unwrap().eval_coords(&x);
                assert!((dv - dt).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn even_quarter_grid_sees_the_full_maximum() {
        let b = FeatureSet::new(BasisKind::Even, 2, 5.0).unwrap();
        let coeffs: Vec<f64> = (0..b.len())
            .map(|i| ((i * 5 % 7) as f64 - 3.0) / 3.0)
            .collect();
        let t = b.to_poly(&coeffs).unwrap();
        let n = sup_grid_size(5.0, 3.0);
        let quarter = derivative_grid(2, n, BasisKind::Even);
        for axis in 0..2 {
            let q = quarter
                .iter()
                .map(|x| {
                    b.derivative_values(axis, x)
                        .iter()
                        .zip(&coeffs)
                        .map(|(v, c)| v * c)
                        .sum::<f64>()
                        .abs()
                })
                .fold(0.0, f64::max);
            let full = t
                .partial_derivative(axis)
                .unwrap()
                .discrete_sup_norm_with(5.0, 3.0);
            assert!((q - full).abs() < 1e-12);
        }
    }

    #[test]
    fn single_point_gives_the_constant() {
        let d = Dataset::from_angles(&[0.0], &[1.0], 0.0).unwrap();
        let sol = solve_regularization(&RegProblem::new(d, 2.0).unwrap()).unwrap();
        assert!(sol.objective_value.abs() < 1e-12);
        assert!((sol.polynomial.eval_coords(&[1.7]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_low_degree_data_costs_at_most_the_truth() {
        let mut t0 = TrigPoly::zero(1, 4.0).unwrap();
        t0.add_term(&MultiIndex(vec![1]), 0.01, 0.02).unwrap();
        t0.add_term(&MultiIndex(vec![3]), -0.005, 0.0).unwrap();
        let xs: Vec<f64> = (0..24).map(|j| -PI + 2.0 * PI * j as f64 / 24.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| t0.eval_coords(&[*x])).collect();
        let d = Dataset::from_angles(&xs, &ys, 0.0).unwrap();
        let sol = solve_regularization(&RegProblem::new(d.clone(), 16.0).unwrap()).unwrap();
        let truth = evaluate_regularizer(&t0, &d, 16.0).unwrap().0;
        assert!(sol.objective_value <= truth + 1e-10);
        assert!(sol.certificate.holds(1e-7), "{:?}", sol.certificate);
    }

    #[test]
    fn certificate_and_dominance_on_dense_data() {
        let d = dense_abs_cos(32);
        let n = 16.0;
        let sol = solve_regularization(&RegProblem::new(d.clone(), n).unwrap()).unwrap();
        assert!(sol.certificate.holds(1e-7), "{:?}", sol.certificate);
        assert!((sol.objective_value - (sol.training_error + sol.sobolev_term / n)).abs() < 1e-12);
        assert!((sol.certificate.lp.primal_objective - sol.objective_value).abs() < 1e-8);
        let table = fourier_dft(|x| x[0].cos().abs(), 1, 8.0, default_dft_grid(1, 8.0)).unwrap();
        let fit = blended_fit(&d, &table, 8.0, n).unwrap();
        let cand = evaluate_regularizer(&fit.combined, &d, n).unwrap().0;
        assert!(sol.objective_value <= cand + 1e-7);
        let zero = evaluate_regularizer(&TrigPoly::zero(1, n).unwrap(), &d, n)
            .unwrap()
            .0;
        assert!(sol.objective_value <= zero + 1e-7);
    }

    #[test]
    fn homogeneous_in_the_data() {
        let d = dense_abs_cos(20);
        let base = solve_regularization(&RegProblem::new(d.clone(), 10.0).unwrap()).unwrap();
        let lambda = 3.0;
        let scaled_vals: Vec<f64> = d.values().iter().map(|v| lambda * v).collect();
        let ds = d.with_values(scaled_vals).unwrap();
        let s = solve_regularization(&RegProblem::new(ds, 10.0).unwrap()).unwrap();
        assert!(
            (s.objective_value - lambda * base.objective_value).abs() < 1e-8 * s.objective_value
        );
        let b = FeatureSet::new(BasisKind::Full, 1, 10.0).unwrap();
        let cb = b.coords_of(&base.polynomial);
        let cs = b.coords_of(&s.polynomial);
        let scale = cs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, c) in cb.iter().zip(&cs) {
            assert!((lambda * a - c).abs() < 1e-8 * scale);
        }
    }

    #[test]
    fn subgradient_oracle_agrees() {
        let d = dense_abs_cos(16);
        let p = RegProblem::new(d, 10.0).unwrap();
        assert!(p.basis.len() <= 20);
        let lp = solve_regularization(&p).unwrap();
        let (_, val) = subgradient_descent(&p, 200_000).unwrap();
        assert!(val >= lp.objective_value - 1e-9);
        assert!(
            val - lp.objective_value < 1e-3,
            "{val} vs {}",
            lp.objective_value
        );
    }

    #[test]
    fn cap_is_enforced() {
        let p = RegProblem::new(dense_abs_cos(16), 10.0)
            .unwrap()
            .with_cap(100);
        assert!(matches!(
            solve_regularization(&p),
            Err(Error::LpTooLarge { .. })
        ));
    }

    #[test]
    fn pointwise_report_at_training_points() {
        let d = dense_abs_cos(16);
        let sol = solve_regularization(&RegProblem::new(d.clone(), 8.0).unwrap()).unwrap();
        let rows =
            pointwise_error_report(&sol.polynomial, |x| x[0].cos().abs(), &d, 8.0, d.points())
                .unwrap();
        for r in &rows {
            assert_eq!(r.delta, 0.0);
            assert!(r.measured <= sol.objective_value + 1e-12);
        }
        let mut buf = Vec::new();
        write_pointwise_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("x1,delta,measured,ratio\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn optimum_never_exceeds_zero_candidate(ys in proptest::collection::vec(-1.0f64..1.0, 6)) {
            let xs: Vec<f64> = (0..6).map(|j| j as f64).collect();
            let d = Dataset::from_angles(&xs, &ys, 0.0).unwrap();
            let sol = solve_regularization(&RegProblem::new(d.clone(), 4.0).unwrap()).unwrap();
            prop_assert!(sol.objective_value <= d.max_abs_value() + 1e-9);
            prop_assert!(sol.certificate.holds(1e-7));
        }
    }
}
