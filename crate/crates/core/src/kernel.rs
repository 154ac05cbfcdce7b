//! The localized kernel `Phi_N`, Fourier tables and the filtered
//! projection `sigma_N`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cutoff::h;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::torus::{check_dims, make_grid, TorusGrid, TorusPoint};
use crate::trig_poly::{canonical_lattice, MultiIndex, TrigPoly};

/// `Phi_N(x) = sum_{|k|_2 < N} h(|k|_2 / N) cos(k.x)`.
///
/// Only the canonical half of the lattice is stored; the kernel is even, so
/// every nonzero index stands for the pair `{k, -k}`.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    q: usize,
    n: f64,
    lattice: Vec<(MultiIndex, f64)>,
}

impl KernelSpec {
    pub fn new(q: usize, n: f64) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidInput("kernel needs q >= 1".into()));
        }
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidInput(format!(
                "kernel degree must be positive, got {n}"
            )));
        }
        let lattice = canonical_lattice(q, n)
            .into_iter()
            .map(|k| {
                let w = h(k.norm2() / n);
                (k, w)
            })
            .collect();
        Ok(Self { q, n, lattice })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn degree(&self) -> f64 {
        self.n
    }

    pub fn lattice(&self) -> &[(MultiIndex, f64)] {
        &self.lattice
    }

    /// Both signs of every stored index.
    pub fn full_lattice(&self) -> Vec<(MultiIndex, f64)> {
        let mut out = Vec::with_capacity(2 * self.lattice.len());
        for (k, w) in &self.lattice {
            out.push((k.clone(), *w));
            if !k.is_zero() {
                out.push((k.negated(), *w));
            }
        }
        out
    }

    fn eval_coords(&self, x: &[f64]) -> f64 {
        self.lattice
            .iter()
            .map(|(k, w)| {
                let m = if k.is_zero() { 1.0 } else { 2.0 };
                m * w * k.dot(x).cos()
            })
            .sum()
    }

    pub fn eval(&self, x: &TorusPoint) -> Result<f64> {
        check_dims(self.q, x.dim())?;
        Ok(self.eval_coords(x.coords()))
    }

    pub fn at_origin(&self) -> f64 {
        self.lattice
            .iter()
            .map(|(k, w)| if k.is_zero() { *w } else { 2.0 * w })
            .sum()
    }

    /// `x -> Phi_N(x - center)` as a polynomial.
    pub fn as_trigpoly(&self, center: &TorusPoint) -> Result<TrigPoly> {
        check_dims(self.q, center.dim())?;
        let mut t = TrigPoly::zero(self.q, self.n)?;
        for (k, w) in &self.lattice {
            let m = if k.is_zero() { 1.0 } else { 2.0 };
            let (s, c) = k.dot(center.coords()).sin_cos();
            t.add_term(k, m * w * c, m * w * s)?;
        }
        Ok(t)
    }

    /// `sum_j a_j Phi_N(x - x_j)` as a polynomial.
    pub fn combination(&self, centers: &[TorusPoint], coeffs: &[f64]) -> Result<TrigPoly> {
        if centers.len() != coeffs.len() {
            return Err(Error::InvalidInput(format!(
                "{} centers but {} coefficients",
                centers.len(),
                coeffs.len()
            )));
        }
        for c in centers {
            check_dims(self.q, c.dim())?;
        }
        let terms: Vec<(f64, f64)> = self
            .lattice
            .par_iter()
            .map(|(k, w)| {
                let m = if k.is_zero() { 1.0 } else { 2.0 };
                let (mut a, mut b) = (0.0, 0.0);
                for (x, &cj) in centers.iter().zip(coeffs) {
                    let (s, c) = k.dot(x.coords()).sin_cos();
                    a += cj * c;
                    b += cj * s;
                }
                (m * w * a, m * w * b)
            })
            .collect();
        let mut t = TrigPoly::zero(self.q, self.n)?;
        for ((k, _), (a, b)) in self.lattice.iter().zip(terms) {
            t.add_term(k, a, b)?;
        }
        Ok(t)
    }

    /// `[Phi_N(x_l - y_j)]_{l,j}` assembled as `F_x W F_y^T` with cos/sin
    /// features.
    pub fn matrix(&self, xs: &[TorusPoint], ys: &[TorusPoint]) -> Result<Matrix> {
        for p in xs.iter().chain(ys) {
            check_dims(self.q, p.dim())?;
        }
        let fx = self.features(xs);
        let fy = if std::ptr::eq(xs, ys) {
            fx.clone()
        } else {
            self.features(ys)
        };
        let width = self.lattice.len();
        let weights: Vec<f64> = self
            .lattice
            .iter()
            .map(|(k, w)| if k.is_zero() { *w } else { 2.0 * w })
            .collect();
        let rows: Vec<Vec<f64>> = fx
            .par_iter()
            .map(|row_l| {
                fy.iter()
                    .map(|row_j| {
                        let mut acc = 0.0;
                        for i in 0..width {
                            let (cl, sl) = row_l[i];
                            let (cj, sj) = row_j[i];
                            acc += weights[i] * (cl * cj + sl * sj);
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        Matrix::from_rows(xs.len(), ys.len(), rows.into_iter().flatten().collect())
    }

    fn features(&self, xs: &[TorusPoint]) -> Vec<Vec<(f64, f64)>> {
        xs.par_iter()
            .map(|x| {
                self.lattice
                    .iter()
                    .map(|(k, _)| {
                        let (s, c) = k.dot(x.coords()).sin_cos();
                        (c, s)
                    })
                    .collect()
            })
            .collect()
    }

    /// Largest value over `probes` of `sum_j |Phi_N(x - x_j)|`.
    pub fn row_sum_max(&self, centers: &[TorusPoint], probes: &[TorusPoint]) -> Result<f64> {
        let m = self.matrix(probes, centers)?;
        Ok((0..m.rows())
            .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max))
    }
}

/// The even kernel `sum_{s in {+-1}^d} Phi_N(theta - s o theta')`, which
/// equals `2^d sum_{k in Z^d} h(|k|/N) prod_i cos(k_i theta_i) cos(k_i theta'_i)`.
/// Internal nodes of a DAG fit with it so their polynomials stay cosine-only
/// in every argument.
#[derive(Debug, Clone)]
pub struct EvenKernel {
    d: usize,
    n: f64,
    /// `(k >= 0 componentwise, 2^d 2^{nz(k)} h(|k|/N))`
    orthant: Vec<(Vec<u32>, f64)>,
}

impl EvenKernel {
    pub fn new(d: usize, n: f64) -> Result<Self> {
        if d == 0 || !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidInput(format!(
                "even kernel needs d >= 1 and N > 0, got d = {d}, N = {n}"
            )));
        }
        let scale = (1u64 << d) as f64;
        let orthant = even_lattice(d, n)
            .into_iter()
            .map(|k| {
                let nz = k.iter().filter(|&&c| c != 0).count();
                let norm = k.iter().map(|&c| (c as f64).powi(2)).sum::<f64>().sqrt();
                let w = scale * (1u64 << nz) as f64 * h(norm / n);
                (k, w)
            })
            .collect();
        Ok(Self { d, n, orthant })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn degree(&self) -> f64 {
        self.n
    }

    fn features(&self, xs: &[TorusPoint]) -> Vec<Vec<f64>> {
        xs.par_iter()
            .map(|x| {
                self.orthant
                    .iter()
                    .map(|(k, _)| {
                        k.iter()
                            .zip(x.coords())
                            .map(|(&ki, &t)| (ki as f64 * t).cos())
                            .product()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn eval(&self, theta: &TorusPoint, theta_prime: &TorusPoint) -> Result<f64> {
        check_dims(self.d, theta.dim())?;
        check_dims(self.d, theta_prime.dim())?;
        let a = &self.features(std::slice::from_ref(theta))[0];
        let b = &self.features(std::slice::from_ref(theta_prime))[0];
        Ok(self
            .orthant
            .iter()
            .zip(a.iter().zip(b))
            .map(|((_, w), (u, v))| w * u * v)
            .sum())
    }

    pub fn matrix(&self, xs: &[TorusPoint], ys: &[TorusPoint]) -> Result<Matrix> {
        for p in xs.iter().chain(ys) {
            check_dims(self.d, p.dim())?;
        }
        let fx = self.features(xs);
        let fy = self.features(ys);
        let rows: Vec<f64> = fx
            .par_iter()
            .flat_map_iter(|a| {
                fy.iter()
                    .map(|b| {
                        self.orthant
                            .iter()
                            .zip(a.iter().zip(b))
                            .map(|((_, w), (u, v))| w * u * v)
                            .sum::<f64>()
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        Matrix::from_rows(xs.len(), ys.len(), rows)
    }

    /// `sum_j a_j Phi^e(., theta_j)` as a cosine-only polynomial.
    pub fn combination(&self, centers: &[TorusPoint], coeffs: &[f64]) -> Result<TrigPoly> {
        if centers.len() != coeffs.len() {
            return Err(Error::InvalidInput(
                "center/coefficient count mismatch".into(),
            ));
        }
        let feats = self.features(centers);
        let even: Vec<(Vec<u32>, f64)> = self
            .orthant
            .iter()
            .enumerate()
            .map(|(i, (k, w))| {
                let c: f64 = feats.iter().zip(coeffs).map(|(f, a)| f[i] * a).sum();
                (k.clone(), w * c)
            })
            .collect();
        TrigPoly::from_even_terms(self.d, self.n, &even)
    }
}

/// `k in N^d` with `|k|_2 < n`, lexicographic.
pub fn even_lattice(d: usize, n: f64) -> Vec<Vec<u32>> {
    canonical_lattice(d, n)
        .into_iter()
        .flat_map(|k| [k.0.clone(), k.negated().0])
        .filter(|k| k.iter().all(|&c| c >= 0))
        .map(|k| k.into_iter().map(|c| c as u32).collect::<Vec<u32>>())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableSource {
    Exact,
    Dft { grid: usize },
}

/// Fourier coefficients `f^(k)` for `|k|_2 < n`, stored on canonical
/// indices; `f^(-k)` is the conjugate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct FourierTable {
    q: usize,
    n: f64,
    source: TableSource,
    coeffs: BTreeMap<MultiIndex, Complex64>,
}

#[derive(Serialize, Deserialize)]
struct CoeffRepr {
    k: Vec<i32>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    q: usize,
    n: f64,
    source: TableSource,
    coeffs: Vec<CoeffRepr>,
}

impl TryFrom<TableRepr> for FourierTable {
    type Error = Error;
    fn try_from(r: TableRepr) -> Result<Self> {
        let mut coeffs = BTreeMap::new();
        for c in r.coeffs {
            check_dims(r.q, c.k.len())?;
            let k = MultiIndex(c.k);
            if k.norm2() >= r.n {
                return Err(Error::DegreeBound {
                    index: k.0.clone(),
                    norm: k.norm2(),
                    bound: r.n,
                });
            }
            let (kc, flipped) = k.canonical();
            let v = Complex64::new(c.re, c.im);
            coeffs.insert(kc, if flipped { v.conj() } else { v });
        }
        Ok(Self {
            q: r.q,
            n: r.n,
            source: r.source,
            coeffs,
        })
    }
}

impl From<FourierTable> for TableRepr {
    fn from(t: FourierTable) -> Self {
        TableRepr {
            q: t.q,
            n: t.n,
            source: t.source,
            coeffs: t
                .coeffs
                .into_iter()
                .map(|(k, v)| CoeffRepr {
                    k: k.0,
                    re: v.re,
                    im: v.im,
                })
                .collect(),
        }
    }
}

impl FourierTable {
    /// Exact coefficients of a polynomial: `T^(k) = (a_k - i b_k) / 2`.
    pub fn from_trig_poly(t: &TrigPoly) -> Self {
        let coeffs = t
            .terms()
            .map(|(k, c)| {
                let v = if k.is_zero() {
                    Complex64::new(c.a, 0.0)
                } else {
                    Complex64::new(c.a / 2.0, -c.b / 2.0)
                };
                (k.clone(), v)
            })
            .collect();
        Self {
            q: t.q(),
            n: t.degree(),
            source: TableSource::Exact,
            coeffs,
        }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn degree(&self) -> f64 {
        self.n
    }

    pub fn source(&self) -> TableSource {
        self.source
    }

    pub fn get(&self, k: &MultiIndex) -> Complex64 {
        let (kc, flipped) = k.canonical();
        match self.coeffs.get(&kc) {
            Some(v) if flipped => v.conj(),
            Some(v) => *v,
            None => Complex64::new(0.0, 0.0),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, &Complex64)> {
        self.coeffs.iter()
    }
}

/// Trapezoid/DFT estimate of `f^(k)` for `|k|_2 < n` from samples of `f` on
/// the `grid^q` equispaced product grid.
pub fn fourier_dft<F>(f: F, q: usize, n: f64, grid: usize) -> Result<FourierTable>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if q == 0 || !(n > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need q >= 1 and n > 0, got q = {q}, n = {n}"
        )));
    }
    if !(grid as f64 > 2.0 * n) {
        return Err(Error::GridTooSmall {
            grid,
            degree: n,
            need: 2.0 * n,
        });
    }
    let g = make_grid(q, grid)?;
    let samples: Vec<f64> = g.points().par_iter().map(|p| f(p.coords())).collect();
    if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "target returned non-finite value {v}"
        )));
    }
    Ok(dft_from_samples(&samples, q, n, grid))
}

pub(crate) fn dft_from_samples(samples: &[f64], q: usize, n: f64, grid: usize) -> FourierTable {
    let lattice = canonical_lattice(q, n);
    // exp(-2 pi i r / grid) for r in 0..grid
    let roots: Vec<Complex64> = (0..grid)
        .map(|r| Complex64::from_polar(1.0, -2.0 * PI * r as f64 / grid as f64))
        .collect();
    let total = samples.len() as f64;
    let coeffs: Vec<(MultiIndex, Complex64)> = lattice
        .into_par_iter()
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut idx = vec![0usize; q];
            for &s in samples {
                let mut r: i64 = 0;
                for axis in 0..q {
                    r += k.0[axis] as i64 * idx[axis] as i64;
                }
                acc += roots[r.rem_euclid(grid as i64) as usize] * s;
                for axis in (0..q).rev() {
                    idx[axis] += 1;
                    if idx[axis] < grid {
                        break;
                    }
                    idx[axis] = 0;
                }
            }
            let mut v = acc / total;
            if k.is_zero() {
                v.im = 0.0;
            }
            (k, v)
        })
        .collect();
    FourierTable {
        q,
        n,
        source: TableSource::Dft { grid },
        coeffs: coeffs.into_iter().collect(),
    }
}

/// `sigma_N(f)` as a polynomial of degree bound `N`.
pub fn sigma_as_trigpoly(table: &FourierTable, n: f64) -> Result<TrigPoly> {
    if table.n < n {
        return Err(Error::InsufficientDegree {
            have: table.n,
            need: n,
        });
    }
    let mut t = TrigPoly::zero(table.q, n)?;
    for (k, v) in &table.coeffs {
        let norm = k.norm2();
        if norm >= n {
            continue;
        }
        let w = h(norm / n);
        if k.is_zero() {
            t.add_term(k, w * v.re, 0.0)?;
        } else {
            t.add_term(k, 2.0 * w * v.re, -2.0 * w * v.im)?;
        }
    }
    Ok(t)
}

/// `sigma_N(f)(x) = sum h(|k|/N) f^(k) e^{ik.x}`, summed over the full
/// lattice.
pub fn sigma_apply(table: &FourierTable, n: f64, x: &TorusPoint) -> Result<f64> {
    if table.n < n {
        return Err(Error::InsufficientDegree {
            have: table.n,
            need: n,
        });
    }
    check_dims(table.q, x.dim())?;
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, v) in &table.coeffs {
        let norm = k.norm2();
        if norm >= n {
            continue;
        }
        let w = h(norm / n);
        let e = Complex64::from_polar(1.0, k.dot(x.coords()));
        acc += w * v * e;
        if !k.is_zero() {
            acc += w * v.conj() * e.conj();
        }
    }
    if acc.im.abs() > 1e-10 * (1.0 + acc.re.abs()) {
        return Err(Error::InvalidInput(format!(
            "filtered sum has imaginary part {:e}; table is not Hermitian",
            acc.im
        )));
    }
    Ok(acc.re)
}

/// DFT size used when a black-box target needs a table of degree `n`:
/// the smallest power of two above `2n`, with extra oversampling in one
/// dimension where it is cheap.
pub fn default_dft_grid(q: usize, n: f64) -> usize {
    let mut g = 1usize;
    while g as f64 <= 2.0 * n {
        g *= 2;
    }
    if q == 1 {
        (4 * g).max(1024)
    } else {
        g
    }
}

/// Least-squares slope of `log |Phi_N|` against `log(N|x|)` along the
/// first axis for `N|x|` in `[lo, hi]`. The fit runs through the local
/// maxima of `|Phi_N|` on a log-spaced sample, so the zeros of the
/// oscillation do not pull it down.
pub fn localization_slope(spec: &KernelSpec, lo: f64, hi: f64, samples: usize) -> Result<f64> {
    if !(lo > 0.0 && hi > lo) || samples < 3 {
        return Err(Error::InvalidInput(
            "need 0 < lo < hi and at least 3 samples".into(),
        ));
    }
    let n = spec.degree();
    let q = spec.q();
    let curve: Vec<(f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let u = lo * (hi / lo).powf(i as f64 / (samples - 1) as f64);
            let mut x = vec![0.0; q];
            x[0] = u / n;
            (u.ln(), spec.eval_coords(&x).abs())
        })
        .collect();
    let peaks: Vec<(f64, f64)> = (1..samples - 1)
        .filter(|&i| {
            curve[i].1 > 0.0 && curve[i].1 >= curve[i - 1].1 && curve[i].1 >= curve[i + 1].1
        })
        .map(|i| (curve[i].0, curve[i].1.ln()))
        .collect();
    if peaks.len() < 2 {
        return Err(Error::InvalidInput(
            "too few local maxima for a slope fit".into(),
        ));
    }
    let m = peaks.len() as f64;
    let mx = peaks.iter().map(|p| p.0).sum::<f64>() / m;
    let my = peaks.iter().map(|p| p.1).sum::<f64>() / m;
    let num: f64 = peaks.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = peaks.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(num / den)
}

/// `max over the grid of |f - sigma_N(f)|`, an upper proxy for the degree
/// of approximation `E_N(f)` (not `E_N` itself).
pub fn estimate_degree_of_approx<F>(f: F, n: f64, eval_grid: &TorusGrid) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if eval_grid.is_empty() {
        return Err(Error::InvalidInput("evaluation grid is empty".into()));
    }
    let q = eval_grid.q();
    let table = fourier_dft(&f, q, n, default_dft_grid(q, n))?;
    grid_error(&f, &sigma_as_trigpoly(&table, n)?, eval_grid)
}

/// `max over the grid of |f - T|`.
pub fn grid_error<F>(f: F, t: &TrigPoly, grid: &TorusGrid) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_dims(t.q(), grid.q())?;
    Ok(grid
        .points()
        .par_iter()
        .map(|p| (f(p.coords()) - t.eval_coords(p.coords())).abs())
        .reduce(|| 0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(x: f64) -> TorusPoint {
        TorusPoint::scalar(x).unwrap()
    }

    /// Direct sum over the full lattice `[-r, r]^q`, independent of the
    /// canonical bookkeeping.
    fn phi_oracle(q: usize, n: f64, x: &[f64]) -> f64 {
        let r = n.ceil() as i32;
        let mut acc = 0.0;
        let mut k = vec![-r; q];
        loop {
            let norm = k.iter().map(|&c| (c as f64).powi(2)).sum::<f64>().sqrt();
            if norm < n {
                let dot: f64 = k.iter().zip(x).map(|(&c, &v)| c as f64 * v).sum();
                acc += h(norm / n) * dot.cos();
            }
            let mut axis = q;
            loop {
                if axis == 0 {
                    return acc;
                }
                axis -= 1;
                k[axis] += 1;
                if k[axis] <= r {
                    break;
                }
                k[axis] = -r;
            }
        }
    }

    #[test]
    fn phi_examples() {
        let k2 = KernelSpec::new(1, 2.0).unwrap();
        assert!((k2.eval(&pt(0.0)).unwrap() - 3.0).abs() < 1e-14);
        assert!((k2.eval(&pt(PI)).unwrap() + 1.0).abs() < 1e-14);
        let k4 = KernelSpec::new(1, 4.0).unwrap();
        assert!((k4.eval(&pt(0.0)).unwrap() - 6.0).abs() < 1e-14);
        assert!((phi_oracle(1, 4.0, &[0.0]) - 6.0).abs() < 1e-14);
    }

    #[test]
    fn phi_matches_lattice_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (q, n) in [(1, 7.3), (2, 5.5), (3, 3.2)] {
            let k = KernelSpec::new(q, n).unwrap();
            for _ in 0..10 {
                let x: Vec<f64> = (0..q).map(|_| rng.gen_range(-PI..PI)).collect();
                let v = k.eval(&TorusPoint::new(x.clone()).unwrap()).unwrap();
                assert!((v - phi_oracle(q, n, &x)).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn lattice_weights() {
        let k = KernelSpec::new(2, 6.0).unwrap();
        for (idx, w) in k.full_lattice() {
            assert!(w > 0.0 && w <= 1.0);
            if idx.norm2() <= 3.0 {
                assert_eq!(w, 1.0);
            }
        }
        let full = k.full_lattice();
        for (idx, w) in &full {
            assert!(full.iter().any(|(j, v)| *j == idx.negated() && v == w));
        }
    }

    #[test]
    fn phi_as_trigpoly_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = KernelSpec::new(2, 6.5).unwrap();
        let zero = TorusPoint::new(vec![0.0, 0.0]).unwrap();
        let t0 = k.as_trigpoly(&zero).unwrap();
        assert!(t0.terms().all(|(_, c)| c.b == 0.0));
        assert!((t0.eval(&zero).unwrap() - k.at_origin()).abs() < 1e-12);
        for _ in 0..20 {
            let c = TorusPoint::new(vec![rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)]).unwrap();
            let x = TorusPoint::new(vec![rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)]).unwrap();
            let t = k.as_trigpoly(&c).unwrap();
            let direct = k.eval(&x.sub(&c).unwrap()).unwrap();
            assert!((t.eval(&x).unwrap() - direct).abs() < 1e-10);
            assert!((t.eval(&c).unwrap() - k.at_origin()).abs() < 1e-10);
        }
    }

    #[test]
    fn kernel_matrix_matches_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = KernelSpec::new(1, 9.0).unwrap();
        let xs: Vec<TorusPoint> = (0..6).map(|_| pt(rng.gen_range(-PI..PI))).collect();
        let m = k.matrix(&xs, &xs).unwrap();
        assert!(m.is_symmetric(1e-12));
        for i in 0..6 {
            for j in 0..6 {
                let v = k.eval(&xs[i].sub(&xs[j]).unwrap()).unwrap();
                assert!((m[(i, j)] - v).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn even_kernel_is_sign_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ek = EvenKernel::new(2, 5.0).unwrap();
        for _ in 0..10 {
            let a = [rng.gen_range(0.0..PI), rng.gen_range(0.0..PI)];
            let b = [rng.gen_range(0.0..PI), rng.gen_range(0.0..PI)];
            let mut oracle = 0.0;
            for s0 in [-1.0, 1.0] {
                for s1 in [-1.0, 1.0] {
                    oracle += phi_oracle(2, 5.0, &[a[0] - s0 * b[0], a[1] - s1 * b[1]]);
                }
            }
            let ta = TorusPoint::new(a.to_vec()).unwrap();
            let tb = TorusPoint::new(b.to_vec()).unwrap();
            assert!((ek.eval(&ta, &tb).unwrap() - oracle).abs() < 1e-10);
            let poly = ek.combination(&[tb.clone()], &[1.0]).unwrap();
            assert!((poly.eval(&ta).unwrap() - oracle).abs() < 1e-10);
            assert!(poly.terms().all(|(_, c)| c.b.abs() < 1e-15));
        }
    }

    #[test]
    fn dft_examples() {
        let t = fourier_dft(|x| (2.0 * x[0]).cos(), 1, 4.0, 128).unwrap();
        for k in -3..=3 {
            let v = t.get(&MultiIndex(vec![k]));
            let expect = if k.abs() == 2 { 0.5 } else { 0.0 };
            assert!(
                (v - Complex64::new(expect, 0.0)).norm() < 1e-12,
                "k = {k}: {v}"
            );
        }
        let one = fourier_dft(|_| 1.0, 2, 3.0, 8).unwrap();
        for (k, v) in one.iter() {
            let expect = if k.is_zero() { 1.0 } else { 0.0 };
            assert!((v - Complex64::new(expect, 0.0)).norm() < 1e-13);
        }
        assert!(matches!(
            fourier_dft(|_| 1.0, 1, 4.0, 8),
            Err(Error::GridTooSmall { .. })
        ));
    }

    #[test]
    fn abs_cos_coefficients() {
        let t = fourier_dft(|x| x[0].cos().abs(), 1, 8.0, 1024).unwrap();
        assert!((t.get(&MultiIndex(vec![0])).re - 2.0 / PI).abs() < 1e-3);
        let c2 = 2.0 / (3.0 * PI);
        assert!((t.get(&MultiIndex(vec![2])).re - c2).abs() < 1e-3);
        assert!((t.get(&MultiIndex(vec![-2])).re - c2).abs() < 1e-3);
        assert!(t.get(&MultiIndex(vec![1])).norm() < 1e-12);
    }

    #[test]
    fn table_hermitian_and_json() {
        let t = fourier_dft(|x| (x[0] + 0.3).sin() + (2.0 * x[1]).cos(), 2, 3.0, 8).unwrap();
        let k = MultiIndex(vec![1, 0]);
        assert_eq!(t.get(&k.negated()), t.get(&k).conj());
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("\"re\"") && s.contains("\"im\""));
        let back: FourierTable = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn sigma_examples() {
        let mut c3 = TrigPoly::zero(1, 8.0).unwrap();
        c3.add_term(&MultiIndex(vec![3]), 1.0, 0.0).unwrap();
        let table = FourierTable::from_trig_poly(&c3);
        let s = sigma_as_trigpoly(&table, 8.0).unwrap();
        assert_eq!(s.coeff(&MultiIndex(vec![3])).a, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let x = pt(rng.gen_range(-PI..PI));
            let v = sigma_apply(&table, 8.0, &x).unwrap();
            assert!((v - c3.eval(&x).unwrap()).abs() < 1e-13);
        }
        let konst = fourier_dft(|_| 2.5, 1, 8.0, 32).unwrap();
        assert!((sigma_apply(&konst, 5.0, &pt(1.0)).unwrap() - 2.5).abs() < 1e-13);
        assert!(matches!(
            sigma_apply(&konst, 9.0, &pt(0.0)),
            Err(Error::InsufficientDegree { .. })
        ));
    }

    #[test]
    fn sigma_of_abs_cos_improves() {
        let f = |x: &[f64]| x[0].cos().abs();
        let g = make_grid(1, 1024).unwrap();
        let table = fourier_dft(f, 1, 128.0, 1024).unwrap();
        let e128 = grid_error(f, &sigma_as_trigpoly(&table, 128.0).unwrap(), &g).unwrap();
        let e64 = grid_error(f, &sigma_as_trigpoly(&table, 64.0).unwrap(), &g).unwrap();
        assert!(e128 <= e64);
    }

    #[test]
    fn degree_of_approx_examples() {
        let g = make_grid(1, 1024).unwrap();
        let e = estimate_degree_of_approx(|x| (3.0 * x[0]).cos() + 0.2, 8.0, &g).unwrap();
        assert!(e < 1e-10);
        let f = |x: &[f64]| x[0].cos().abs();
        let e32 = estimate_degree_of_approx(f, 32.0, &g).unwrap();
        let e64 = estimate_degree_of_approx(f, 64.0, &g).unwrap();
        let e128 = estimate_degree_of_approx(f, 128.0, &g).unwrap();
        assert!(e32 > e64 && e64 > e128, "{e32} {e64} {e128}");
        let e = estimate_degree_of_approx(|x| (16.0 * x[0]).cos(), 16.0, &g).unwrap();
        assert!((e - 1.0).abs() < 1e-10);
        // just inside the band the mode keeps only the weight h(16/16.5)
        let n = 16.5;
        let e = estimate_degree_of_approx(|x| (16.0 * x[0]).cos(), n, &g).unwrap();
        assert!((e - (1.0 - h(16.0 / n))).abs() < 1e-10);
        assert!(e > 0.9);
    }

    #[test]
    fn sigma_is_linear_and_reproduces_half_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 16.0;
        let mut t = TrigPoly::zero(2, n / 2.0).unwrap();
        for k in canonical_lattice(2, n / 2.0) {
            let b = if k.is_zero() {
                0.0
            } else {
                rng.gen_range(-1.0..1.0)
            };
            t.add_term(&k, rng.gen_range(-1.0..1.0), b).unwrap();
        }
        let full = sigma_as_trigpoly(
            &FourierTable::from_trig_poly(&t.clone().with_degree(n).unwrap()),
            n,
        )
        .unwrap();
        for (k, c) in t.terms() {
            let d = full.coeff(k);
            assert!((c.a - d.a).abs() < 1e-14 && (c.b - d.b).abs() < 1e-14);
        }
        let g = make_grid(2, 24).unwrap();
        let f1 = |x: &[f64]| x[0].sin() * x[1].cos();
        let f2 = |x: &[f64]| (2.0 * x[0] - x[1]).cos();
        let t1 = sigma_as_trigpoly(&fourier_dft(f1, 2, n, 64).unwrap(), n).unwrap();
        let t2 = sigma_as_trigpoly(&fourier_dft(f2, 2, n, 64).unwrap(), n).unwrap();
        let t12 = sigma_as_trigpoly(
            &fourier_dft(|x| 2.0 * f1(x) - 3.0 * f2(x), 2, n, 64).unwrap(),
            n,
        )
        .unwrap();
        for p in g.points() {
            let lhs = t12.eval(p).unwrap();
            let rhs = 2.0 * t1.eval(p).unwrap() - 3.0 * t2.eval(p).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
