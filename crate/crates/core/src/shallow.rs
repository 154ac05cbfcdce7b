//! Shallow fits: minimal-degree interpolation, localized-kernel
//! interpolation, blended fits with zero training error, and the straight
//! kernel estimator.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{sigma_as_trigpoly, EvenKernel, FourierTable, KernelSpec};
use crate::linalg::{Lu, Matrix};
use crate::torus::{check_dims, Dataset, TorusPoint};
use crate::trig_poly::{MultiIndex, TrigPoly};

/// A kernel usable for collocation: `A_lj = K(x_l, y_j)`.
pub trait CollocationKernel: Sync {
    fn dim(&self) -> usize;
    fn degree(&self) -> f64;
    fn matrix(&self, xs: &[TorusPoint], ys: &[TorusPoint]) -> Result<Matrix>;
    fn combination(&self, centers: &[TorusPoint], coeffs: &[f64]) -> Result<TrigPoly>;
}

impl CollocationKernel for KernelSpec {
    fn dim(&self) -> usize {
        self.q()
    }
    fn degree(&self) -> f64 {
        KernelSpec::degree(self)
    }
    fn matrix(&self, xs: &[TorusPoint], ys: &[TorusPoint]) -> Result<Matrix> {
        KernelSpec::matrix(self, xs, ys)
    }
    fn combination(&self, centers: &[TorusPoint], coeffs: &[f64]) -> Result<TrigPoly> {
        KernelSpec::combination(self, centers, coeffs)
    }
}

impl CollocationKernel for EvenKernel {
    fn dim(&self) -> usize {
        EvenKernel::dim(self)
    }
    fn degree(&self) -> f64 {
        EvenKernel::degree(self)
    }
    fn matrix(&self, xs: &[TorusPoint], ys: &[TorusPoint]) -> Result<Matrix> {
        EvenKernel::matrix(self, xs, ys)
    }
    fn combination(&self, centers: &[TorusPoint], coeffs: &[f64]) -> Result<TrigPoly> {
        EvenKernel::combination(self, centers, coeffs)
    }
}

#[derive(Debug, Clone)]
pub struct CollocationSystem {
    pub matrix: Matrix,
    pub rhs: Vec<f64>,
    /// `min_l (|A_ll| - sum_{j != l} |A_lj|)`
    pub diag_dominance_margin: f64,
    pub condition_estimate: f64,
}

/// Row-wise Gershgorin margin and whether it reaches half the smallest
/// diagonal entry.
pub fn matrix_dominance(a: &Matrix) -> (f64, bool) {
    let mut margin = f64::INFINITY;
    let mut min_diag = f64::INFINITY;
    for l in 0..a.rows() {
        let row = a.row(l);
        let d = row[l].abs();
        let off: f64 = row.iter().map(|v| v.abs()).sum::<f64>() - d;
        margin = margin.min(d - off);
        min_diag = min_diag.min(d);
    }
    (margin, margin >= min_diag / 2.0)
}

fn solve_system(matrix: Matrix, rhs: Vec<f64>) -> Result<(Vec<f64>, CollocationSystem)> {
    let (margin, _) = matrix_dominance(&matrix);
    let lu = Lu::factor(&matrix)?;
    let coeffs = lu.solve(&rhs);
    let condition_estimate = lu.condition_estimate();
    if coeffs.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix {
            condition: condition_estimate,
        });
    }
    Ok((
        coeffs,
        CollocationSystem {
            matrix,
            rhs,
            diag_dominance_margin: margin,
            condition_estimate,
        },
    ))
}

fn max_residual(t: &TrigPoly, data: &Dataset) -> f64 {
    data.points()
        .iter()
        .zip(data.values())
        .map(|(x, y)| (t.eval_coords(x.coords()) - y).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct MinimalFit {
    pub poly: TrigPoly,
    pub condition_estimate: f64,
    pub residual_max: f64,
}

/// The univariate interpolant of lowest degree: basis
/// `1, cos x, sin x, ..., cos nx, sin nx` with `n = ceil((M-1)/2)`, dropping
/// `sin nx` when `M` is even.
pub fn minimal_interpolant(data: &Dataset) -> Result<MinimalFit> {
    if data.q() != 1 {
        return Err(Error::InvalidInput(format!(
            "minimal-degree interpolation is univariate, got q = {}",
            data.q()
        )));
    }
    let m = data.len();
    let n = m / 2;
    // (k, is_sine)
    let mut basis = vec![(0i32, false)];
    for k in 1..=n as i32 {
        basis.push((k, false));
        basis.push((k, true));
    }
    basis.truncate(m);
    let xs: Vec<f64> = data.points().iter().map(|p| p.coords()[0]).collect();
    let a = Matrix::from_fn(m, m, |i, j| {
        let (k, sine) = basis[j];
        let t = k as f64 * xs[i];
        if sine {
            t.sin()
        } else {
            t.cos()
        }
    });
    let (coeffs, sys) = solve_system(a, data.values().to_vec())?;
    let mut poly = TrigPoly::zero(1, n as f64 + 1.0)?;
    for (&(k, sine), c) in basis.iter().zip(coeffs) {
        if sine {
            poly.add_term(&MultiIndex(vec![k]), 0.0, c)?;
        } else {
            poly.add_term(&MultiIndex(vec![k]), c, 0.0)?;
        }
    }
    let residual_max = max_residual(&poly, data);
    debug!(
        "minimal interpolant: M = {m}, degree {n}, condition {:e}, residual {residual_max:e}",
        sys.condition_estimate
    );
    Ok(MinimalFit {
        poly,
        condition_estimate: sys.condition_estimate,
        residual_max,
    })
}

#[derive(Debug, Clone)]
pub struct LocalizedFit {
    pub poly: TrigPoly,
    pub coeffs: Vec<f64>,
    pub system: CollocationSystem,
    pub residual_max: f64,
}

/// Solves `sum_j a_j K(x_l, x_j) = b_l` and returns `sum_j a_j K(., x_j)`.
pub fn kernel_interpolant<K: CollocationKernel + ?Sized>(
    kernel: &K,
    points: &[TorusPoint],
    rhs: Vec<f64>,
) -> Result<(TrigPoly, Vec<f64>, CollocationSystem)> {
    if let Some(p) = points.first() {
        check_dims(kernel.dim(), p.dim())?;
    }
    let a = kernel.matrix(points, points)?;
    let (coeffs, sys) = solve_system(a, rhs)?;
    if sys.diag_dominance_margin <= 0.0 {
        warn!(
            "collocation matrix is not diagonally dominant (margin {:.3e}) at N = {}; degree may be below the stable regime",
            sys.diag_dominance_margin,
            kernel.degree()
        );
    }
    let poly = kernel.combination(points, &coeffs)?;
    Ok((poly, coeffs, sys))
}

pub fn localized_interpolant(data: &Dataset, n: f64) -> Result<LocalizedFit> {
    let kernel = KernelSpec::new(data.q(), n)?;
    let (poly, coeffs, system) =
        kernel_interpolant(&kernel, data.points(), data.values().to_vec())?;
    let residual_max = max_residual(&poly, data);
    Ok(LocalizedFit {
        poly,
        coeffs,
        system,
        residual_max,
    })
}

#[derive(Debug, Clone)]
pub struct BlendedFit {
    pub base: TrigPoly,
    pub correction_coeffs: Vec<f64>,
    pub kernel_degree: f64,
    pub dataset: Dataset,
    pub combined: TrigPoly,
    pub system: CollocationSystem,
    pub residual_max: f64,
}

/// `sigma_n(f) + sum_j a_j Phi_N(. - x_j)` with the correction interpolating
/// the residual of the base at the data.
pub fn blended_fit(data: &Dataset, table: &FourierTable, n: f64, big_n: f64) -> Result<BlendedFit> {
    check_dims(table.q(), data.q())?;
    let base = sigma_as_trigpoly(table, n)?;
    let kernel = KernelSpec::new(data.q(), big_n)?;
    blended_with_kernel(data, base, &kernel)
}

/// Blended fit with an arbitrary base polynomial and collocation kernel.
pub fn blended_with_kernel<K: CollocationKernel + ?Sized>(
    data: &Dataset,
    base: TrigPoly,
    kernel: &K,
) -> Result<BlendedFit> {
    let rhs: Vec<f64> = data
        .points()
        .iter()
        .zip(data.values())
        .map(|(x, y)| y - base.eval_coords(x.coords()))
        .collect();
    let (correction, coeffs, system) = kernel_interpolant(kernel, data.points(), rhs)?;
    let combined = base.add_scaled(&correction, 1.0)?;
    let residual_max = max_residual(&combined, data);
    Ok(BlendedFit {
        base,
        correction_coeffs: coeffs,
        kernel_degree: kernel.degree(),
        dataset: data.clone(),
        combined,
        system,
        residual_max,
    })
}

/// `(1 / Phi_N(0)) sum_k y_k Phi_N(x - x_k)`.
pub fn straight_kernel_estimate(data: &Dataset, n: f64, x: &TorusPoint) -> Result<f64> {
    check_dims(data.q(), x.dim())?;
    let kernel = KernelSpec::new(data.q(), n)?;
    let m = kernel.matrix(std::slice::from_ref(x), data.points())?;
    let s: f64 = m.row(0).iter().zip(data.values()).map(|(k, y)| k * y).sum();
    Ok(s / kernel.at_origin())
}

/// `min_l [Phi_N(0) - sum_{j != l} |Phi_N(x_l - x_j)|]` and whether it is at
/// least `Phi_N(0) / 2`.
pub fn dominance_check(data: &Dataset, n: f64) -> Result<(f64, bool)> {
    let kernel = KernelSpec::new(data.q(), n)?;
    Ok(matrix_dominance(
        &kernel.matrix(data.points(), data.points())?,
    ))
}

/// Doubling then integer bisection for the smallest degree passing `passes`.
/// Fails once the degree would exceed `cap`.
pub fn search_min_degree(cap: f64, mut passes: impl FnMut(f64) -> Result<bool>) -> Result<f64> {
    let mut hi = 1.0;
    while !passes(hi)? {
        hi *= 2.0;
        if hi > cap {
            return Err(Error::SearchCap { cap });
        }
    }
    let mut lo = hi / 2.0;
    if hi == 1.0 {
        return Ok(1.0);
    }
    // invariant: passes(hi), !passes(lo)
    while hi - lo > 1.0 {
        let mid = ((lo + hi) / 2.0).floor();
        if passes(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

pub fn find_min_degree(data: &Dataset) -> Result<f64> {
    let eta = data.min_sep().unwrap_or(std::f64::consts::PI);
    let cap = 65536.0 / eta;
    let n = search_min_degree(cap, |n| Ok(dominance_check(data, n)?.1))?;
    debug!(
        "find_min_degree: N* = {n}, empirical B = N* eta = {:.3}",
        n * eta
    );
    Ok(n)
}

/// JSON summary of a fit.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FitReport {
    pub method: String,
    pub n: Option<f64>,
    #[serde(rename = "N")]
    pub big_n: Option<f64>,
    pub residual_max: f64,
    pub condition_estimate: Option<f64>,
    pub dominance_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub coefficients: Option<Vec<f64>>,
}

impl FitReport {
    pub fn for_blended(fit: &BlendedFit, n: f64, with_coeffs: bool) -> Self {
        Self {
            method: "blended".into(),
            n: Some(n),
            big_n: Some(fit.kernel_degree),
            residual_max: fit.residual_max,
            condition_estimate: Some(fit.system.condition_estimate),
            dominance_margin: Some(fit.system.diag_dominance_margin),
            coefficients: with_coeffs.then(|| fit.correction_coeffs.clone()),
        }
    }

    pub fn for_localized(fit: &LocalizedFit, with_coeffs: bool) -> Self {
        Self {
            method: "localized".into(),
            n: None,
            big_n: Some(fit.poly.degree()),
            residual_max: fit.residual_max,
            condition_estimate: Some(fit.system.condition_estimate),
            dominance_margin: Some(fit.system.diag_dominance_margin),
            coefficients: with_coeffs.then(|| fit.coeffs.clone()),
        }
    }

    pub fn for_minimal(fit: &MinimalFit) -> Self {
        Self {
            method: "minimal".into(),
            n: Some(fit.poly.degree() - 1.0),
            big_n: None,
            residual_max: fit.residual_max,
            condition_estimate: Some(fit.condition_estimate),
            dominance_margin: None,
            coefficients: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::fourier_dft;
    use crate::torus::{make_grid, profile_grid};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn d1() -> Dataset {
        let xs = profile_grid(128);
        let ys: Vec<f64> = xs.iter().map(|x| x.cos().abs()).collect();
        Dataset::from_angles(&xs, &ys, 0.0).unwrap()
    }

    fn d2() -> Dataset {
        let xs: Vec<f64> = (0..128).map(|j| PI / 4.0 + PI * j as f64 / 256.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.cos().abs()).collect();
        Dataset::from_angles(&xs, &ys, 0.0).unwrap()
    }

    #[test]
    fn minimal_examples() {
        let c =
            Dataset::from_angles(&[0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0], &[1.0; 3], 0.0).unwrap();
        let fit = minimal_interpolant(&c).unwrap();
        for (k, v) in fit.poly.terms() {
            let expect = if k.is_zero() { 1.0 } else { 0.0 };
            assert!((v.a - expect).abs() < 1e-12 && v.b.abs() < 1e-12);
        }
        let two = Dataset::from_angles(&[0.0, PI], &[1.0, -1.0], 0.0).unwrap();
        let fit = minimal_interpolant(&two).unwrap();
        assert!((fit.poly.coeff(&MultiIndex(vec![1])).a - 1.0).abs() < 1e-12);
        assert!(fit.poly.coeff(&MultiIndex(vec![0])).a.abs() < 1e-12);
        assert_eq!(fit.poly.coeff(&MultiIndex(vec![1])).b, 0.0);
        let fit = minimal_interpolant(&d1()).unwrap();
        assert!(fit.residual_max < 1e-8);
        assert!(fit.condition_estimate.is_finite());
    }

    #[test]
    fn localized_examples() {
        let one = Dataset::from_angles(&[0.0], &[5.0], 0.0).unwrap();
        let fit = localized_interpolant(&one, 8.0).unwrap();
        let k = KernelSpec::new(1, 8.0).unwrap();
        assert!((fit.coeffs[0] - 5.0 / k.at_origin()).abs() < 1e-14);
        assert!((fit.poly.eval(&TorusPoint::scalar(0.0).unwrap()).unwrap() - 5.0).abs() < 1e-12);

        let fit = localized_interpolant(&d1(), 128.0).unwrap();
        assert!(fit.residual_max < 1e-8);
        assert!(fit.system.diag_dominance_margin > 0.0);
        assert!(fit.system.matrix.is_symmetric(1e-10));
    }

    #[test]
    fn dominance_examples() {
        let one = Dataset::from_angles(&[0.3], &[1.0], 0.0).unwrap();
        let (m, ok) = dominance_check(&one, 8.0).unwrap();
        assert!((m - KernelSpec::new(1, 8.0).unwrap().at_origin()).abs() < 1e-12 && ok);
        assert!(dominance_check(&d1(), 128.0).unwrap().1);
        assert!(!dominance_check(&d1(), 4.0).unwrap().1);
    }

    #[test]
    fn min_degree_search() {
        let d = d1();
        let n = find_min_degree(&d).unwrap();
        let eta = d.min_sep().unwrap();
        assert!(dominance_check(&d, n).unwrap().1);
        assert!(!dominance_check(&d, n - 1.0).unwrap().1);
        assert!((1.0..=64.0).contains(&(n * eta)), "B = {}", n * eta);

        let anti = Dataset::from_angles(&[0.0, PI - 1e-12], &[1.0, 2.0], 0.0).unwrap();
        assert!(find_min_degree(&anti).unwrap() <= 8.0);

        // half the spacing needs about twice the degree
        let xs = profile_grid(64);
        let d64 = Dataset::from_angles(&xs, &vec![0.0; 64], 0.0).unwrap();
        let n64 = find_min_degree(&d64).unwrap();
        assert!((n - 2.0 * n64).abs() <= 2.0, "{n} vs {n64}");
    }

    #[test]
    fn blended_reproduces_half_band_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut t = TrigPoly::zero(1, 8.0).unwrap();
        for k in 0..8 {
            let b = if k == 0 {
                0.0
            } else {
                rng.gen_range(-1.0..1.0)
            };
            t.add_term(&MultiIndex(vec![k]), rng.gen_range(-1.0..1.0), b)
                .unwrap();
        }
        let xs = profile_grid(40);
        let ys: Vec<f64> = xs.iter().map(|&x| t.eval_coords(&[x])).collect();
        let data = Dataset::from_angles(&xs, &ys, 0.0).unwrap();
        let table = FourierTable::from_trig_poly(&t.clone().with_degree(16.0).unwrap());
        let fit = blended_fit(&data, &table, 16.0, 32.0).unwrap();
        assert!(fit.correction_coeffs.iter().all(|a| a.abs() < 1e-10));
        assert_eq!(fit.combined.degree(), 32.0);
    }

    #[test]
    fn blended_interpolates_and_generalizes() {
        let f = |x: &[f64]| x[0].cos().abs();
        let data = d1();
        let table = fourier_dft(f, 1, 128.0, 512).unwrap();
        let fit = blended_fit(&data, &table, 128.0, 256.0).unwrap();
        assert!(fit.residual_max < 1e-8 * (1.0 + 1.0));
        let g = make_grid(1, 1024).unwrap();
        let err = crate::kernel::grid_error(f, &fit.combined, &g).unwrap();
        assert!(err < 0.01, "grid error {err}");
    }

    #[test]
    fn straight_estimator_examples() {
        let one = Dataset::from_angles(&[0.0], &[2.5], 0.0).unwrap();
        let v = straight_kernel_estimate(&one, 16.0, &TorusPoint::scalar(0.0).unwrap()).unwrap();
        assert!((v - 2.5).abs() < 1e-13);

        // evaluated on the nodes of C with N eta = 8 pi
        let xs = profile_grid(128);
        let c = 3.0;
        let data = Dataset::from_angles(&xs, &vec![c; 128], 0.0).unwrap();
        for &x in &xs {
            let v =
                straight_kernel_estimate(&data, 512.0, &TorusPoint::scalar(x).unwrap()).unwrap();
            assert!((v - c).abs() <= 0.1 * c, "x = {x}: {v}");
        }

        let v = straight_kernel_estimate(&d2(), 256.0, &TorusPoint::scalar(-PI / 2.0).unwrap())
            .unwrap();
        assert!(v.abs() < 1e-3, "{v}");
    }

    #[test]
    fn coefficients_follow_inverse_degree_bound() {
        for (data, n) in [(d1(), 128.0), (d2(), 384.0), (d2(), 512.0)] {
            assert!(dominance_check(&data, n).unwrap().1);
            let fit = localized_interpolant(&data, n).unwrap();
            let amax = fit.coeffs.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            let bmax = fit.system.rhs.iter().fold(0.0f64, |m, b| m.max(b.abs()));
            assert!(amax <= 4.0 * bmax / n, "{amax} vs {}", 4.0 * bmax / n);
        }
    }

    #[test]
    fn permuting_rows_permutes_coefficients() {
        let data = d1();
        let mut perm: Vec<usize> = (0..data.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
        let pts: Vec<TorusPoint> = perm.iter().map(|&i| data.points()[i].clone()).collect();
        let ys: Vec<f64> = perm.iter().map(|&i| data.values()[i]).collect();
        let shuffled = Dataset::new(pts, ys, 0.0).unwrap();
        let table = fourier_dft(|x| x[0].cos().abs(), 1, 64.0, 256).unwrap();
        let a = blended_fit(&data, &table, 64.0, 128.0).unwrap();
        let b = blended_fit(&shuffled, &table, 64.0, 128.0).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert!((a.correction_coeffs[p] - b.correction_coeffs[i]).abs() < 1e-12);
        }
        for (k, c) in a.combined.terms() {
            let d = b.combined.coeff(k);
            assert!((c.a - d.a).abs() < 1e-12 && (c.b - d.b).abs() < 1e-12);
        }
    }

    #[test]
    fn report_json_shape() {
        let fit = localized_interpolant(&d1(), 128.0).unwrap();
        let r = FitReport::for_localized(&fit, false);
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in [
            "method",
            "n",
            "N",
            "residual_max",
            "condition_estimate",
            "dominance_margin",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v.get("coefficients").is_none());
    }
}
