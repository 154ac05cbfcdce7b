//! Real trigonometric polynomials on the torus stored as cosine/sine
//! coefficient pairs over canonical lattice indices.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{check_dims, TorusPoint};

/// Default number of grid points per axis per unit of `ceil(N)` used to
/// discretize sup norms.
pub const SUP_GRID_FACTOR: f64 = 3.0;

/// A lattice point `k` in `Z^q`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<i32>);

impl MultiIndex {
    pub fn zero(q: usize) -> Self {
        MultiIndex(vec![0; q])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn norm2(&self) -> f64 {
        self.0
            .iter()
            .map(|&c| (c as f64) * (c as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// First nonzero component positive (or the zero index).
    pub fn is_canonical(&self) -> bool {
        match self.0.iter().find(|&&c| c != 0) {
            Some(&c) => c > 0,
            None => true,
        }
    }

    pub fn negated(&self) -> Self {
        MultiIndex(self.0.iter().map(|c| -c).collect())
    }

    /// Canonical representative of `{k, -k}` and whether a flip happened.
    pub fn canonical(&self) -> (Self, bool) {
        if self.is_canonical() {
            (self.clone(), false)
        } else {
            (self.negated(), true)
        }
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(&k, &v)| k as f64 * v).sum()
    }
}

/// Canonical lattice points with `|k|_2 < bound`, in lexicographic order.
pub fn canonical_lattice(q: usize, bound: f64) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    if bound <= 0.0 || q == 0 {
        return out;
    }
    let r = bound.ceil() as i32;
    let mut cur = vec![-r; q];
    loop {
        let k = MultiIndex(cur.clone());
        if k.is_canonical() && k.norm2() < bound {
            out.push(k);
        }
        let mut axis = q;
        loop {
            if axis == 0 {
                out.sort();
                return out;
            }
            axis -= 1;
            cur[axis] += 1;
            if cur[axis] <= r {
                break;
            }
            cur[axis] = -r;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Coeff {
    /// cosine coefficient
    pub a: f64,
    /// sine coefficient
    pub b: f64,
}

/// `sum_k a_k cos(k.x) + b_k sin(k.x)` over canonical `k` with `|k|_2 < N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrigPolyRepr", into = "TrigPolyRepr")]
pub struct TrigPoly {
    q: usize,
    degree: f64,
    terms: BTreeMap<MultiIndex, Coeff>,
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    k: Vec<i32>,
    a: f64,
    b: f64,
}

#[derive(Serialize, Deserialize)]
struct TrigPolyRepr {
    q: usize,
    #[serde(rename = "N")]
    degree: f64,
    terms: Vec<TermRepr>,
}

impl TryFrom<TrigPolyRepr> for TrigPoly {
    type Error = Error;
    fn try_from(r: TrigPolyRepr) -> Result<Self> {
        let mut t = TrigPoly::zero(r.q, r.degree)?;
        for term in r.terms {
            t.add_term(&MultiIndex(term.k), term.a, term.b)?;
        }
        Ok(t)
    }
}

impl From<TrigPoly> for TrigPolyRepr {
    fn from(t: TrigPoly) -> Self {
        TrigPolyRepr {
            q: t.q,
            degree: t.degree,
            terms: t
                .terms
                .into_iter()
                .map(|(k, c)| TermRepr {
                    k: k.0,
                    a: c.a,
                    b: c.b,
                })
                .collect(),
        }
    }
}

impl TrigPoly {
    pub fn zero(q: usize, degree: f64) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidInput(
                "trigonometric polynomial needs q >= 1".into(),
            ));
        }
        if !(degree > 0.0) || !degree.is_finite() {
            return Err(Error::InvalidInput(format!(
                "degree bound must be positive, got {degree}"
            )));
        }
        Ok(Self {
            q,
            degree,
            terms: BTreeMap::new(),
        })
    }

    pub fn constant(q: usize, degree: f64, c: f64) -> Result<Self> {
        let mut t = Self::zero(q, degree)?;
        t.add_term(&MultiIndex::zero(q), c, 0.0)?;
        Ok(t)
    }

    /// Builds `sum_k c_k prod_i cos(k_i x_i)` over `k >= 0` componentwise.
    pub fn from_even_terms(q: usize, degree: f64, terms: &[(Vec<u32>, f64)]) -> Result<Self> {
        let mut t = Self::zero(q, degree)?;
        for (k, c) in terms {
            check_dims(q, k.len())?;
            let nz: Vec<usize> = (0..q).filter(|&i| k[i] != 0).collect();
            let share = c / (1u64 << nz.len()) as f64;
            for mask in 0..(1u64 << nz.len()) {
                let mut idx: Vec<i32> = k.iter().map(|&v| v as i32).collect();
                for (bit, &axis) in nz.iter().enumerate() {
                    if mask >> bit & 1 == 1 {
                        idx[axis] = -idx[axis];
                    }
                }
                t.add_term(&MultiIndex(idx), share, 0.0)?;
            }
        }
        Ok(t)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn degree(&self) -> f64 {
        self.degree
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Coeff)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, k: &MultiIndex) -> Coeff {
        let (c, flipped) = k.canonical();
        match self.terms.get(&c) {
            Some(v) if flipped => Coeff { a: v.a, b: -v.b },
            Some(v) => *v,
            None => Coeff::default(),
        }
    }

    /// Accumulates `a cos(k.x) + b sin(k.x)`; `k` may be given in either sign.
    pub fn add_term(&mut self, k: &MultiIndex, a: f64, b: f64) -> Result<()> {
        check_dims(self.q, k.dim())?;
        let norm = k.norm2();
        if norm >= self.degree {
            return Err(Error::DegreeBound {
                index: k.0.clone(),
                norm,
                bound: self.degree,
            });
        }
        let (c, flipped) = k.canonical();
        let b = if c.is_zero() {
            0.0
        } else if flipped {
            -b
        } else {
            b
        };
        let e = self.terms.entry(c).or_default();
        e.a += a;
        e.b += b;
        Ok(())
    }

    /// Raises the degree bound (never lowers it).
    pub fn with_degree(mut self, degree: f64) -> Result<Self> {
        if degree < self.degree {
            if let Some((k, _)) = self.terms.iter().find(|(k, _)| k.norm2() >= degree) {
                return Err(Error::DegreeBound {
                    index: k.0.clone(),
                    norm: k.norm2(),
                    bound: degree,
                });
            }
        }
        self.degree = degree;
        Ok(self)
    }

    /// Unchecked evaluation on raw coordinates.
    pub fn eval_coords(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (k, c) in &self.terms {
            let t = k.dot(x);
            let (s, co) = t.sin_cos();
            acc += c.a * co + c.b * s;
        }
        acc
    }

    pub fn eval(&self, x: &TorusPoint) -> Result<f64> {
        check_dims(self.q, x.dim())?;
        Ok(self.eval_coords(x.coords()))
    }

    pub fn eval_many(&self, xs: &[TorusPoint]) -> Result<Vec<f64>> {
        for x in xs {
            check_dims(self.q, x.dim())?;
        }
        Ok(xs
            .par_iter()
            .map(|x| self.eval_coords(x.coords()))
            .collect())
    }

    /// `D_axis T` (axis is zero-based).
    pub fn partial_derivative(&self, axis: usize) -> Result<TrigPoly> {
        if axis >= self.q {
            return Err(Error::InvalidInput(format!(
                "axis {axis} out of range for q = {}",
                self.q
            )));
        }
        let mut out = TrigPoly::zero(self.q, self.degree)?;
        for (k, c) in &self.terms {
            let kj = k.0[axis] as f64;
            if kj != 0.0 {
                out.terms.insert(
                    k.clone(),
                    Coeff {
                        a: kj * c.b,
                        b: -kj * c.a,
                    },
                );
            }
        }
        Ok(out)
    }

    /// `self + alpha * other`, degree bound the larger of the two.
    pub fn add_scaled(&self, other: &TrigPoly, alpha: f64) -> Result<TrigPoly> {
        check_dims(self.q, other.q)?;
        let mut out = self.clone();
        out.degree = self.degree.max(other.degree);
        for (k, c) in &other.terms {
            let e = out.terms.entry(k.clone()).or_default();
            e.a += alpha * c.a;
            e.b += alpha * c.b;
        }
        Ok(out)
    }

    pub fn scaled(&self, alpha: f64) -> TrigPoly {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            c.a *= alpha;
            c.b *= alpha;
        }
        out
    }

    /// `sum_k |a_k| + |b_k|`, an upper bound for the sup norm.
    pub fn coeff_l1(&self) -> f64 {
        self.terms.values().map(|c| c.a.abs() + c.b.abs()).sum()
    }

    /// `sum over all k in Z^q of |T^(k)|`, with `T^(+-k) = (a -+ i b)/2`.
    pub fn fourier_l1(&self) -> f64 {
        self.terms
            .iter()
            .map(|(k, c)| {
                if k.is_zero() {
                    c.a.abs()
                } else {
                    c.a.hypot(c.b)
                }
            })
            .sum()
    }

    pub fn max_coeff_abs(&self) -> f64 {
        self.terms
            .values()
            .fold(0.0, |m, c| m.max(c.a.abs()).max(c.b.abs()))
    }

    /// Values on the product grid `{2 pi m / n}^q`, row-major.
    pub fn eval_on_grid(&self, n_per_axis: usize) -> Vec<f64> {
        eval_grid_values(self, n_per_axis)
    }

    /// Max of `|T|` over the `(3 ceil(N))^q` grid.
    pub fn discrete_sup_norm(&self) -> f64 {
        self.discrete_sup_norm_with(self.degree, SUP_GRID_FACTOR)
    }

    /// Grid max for an explicit degree and grid factor
    /// (`ceil(factor * ceil(degree))` points per axis).
    pub fn discrete_sup_norm_with(&self, degree: f64, factor: f64) -> f64 {
        let n = sup_grid_size(degree, factor);
        self.eval_on_grid(n)
            .into_iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sum_j ||D_j T||` with discretized sup norms.
    pub fn sobolev_seminorm(&self) -> f64 {
        self.sobolev_seminorm_with(self.degree, SUP_GRID_FACTOR)
    }

    pub fn sobolev_seminorm_with(&self, degree: f64, factor: f64) -> f64 {
        (0..self.q)
            .map(|j| {
                self.partial_derivative(j)
                    .expect("axis in range")
                    .discrete_sup_norm_with(degree, factor)
            })
            .sum()
    }

    /// Largest `|k_i|` over stored terms and axes.
    pub fn max_abs_index(&self) -> i32 {
        self.terms
            .keys()
            .flat_map(|k| k.0.iter().map(|c| c.abs()))
            .max()
            .unwrap_or(0)
    }
}

/// Full-band polynomial with coefficients uniform in `[-1, 1]`.
pub fn random_poly<R: rand::Rng>(rng: &mut R, q: usize, degree: f64) -> TrigPoly {
    let mut t = TrigPoly::zero(q, degree).expect("positive degree");
    for idx in canonical_lattice(q, degree) {
        let a = rng.gen_range(-1.0..1.0);
        let b = if idx.is_zero() {
            0.0
        } else {
            rng.gen_range(-1.0..1.0)
        };
        t.add_term(&idx, a, b).expect("index inside the band");
    }
    t
}

pub fn sup_grid_size(degree: f64, factor: f64) -> usize {
    ((factor * degree.ceil()).ceil() as usize).max(1)
}

/// Grid evaluation through per-axis phase tables: `exp(i k.x)` is the
/// product of one tabulated factor per axis.
fn eval_grid_values(t: &TrigPoly, n: usize) -> Vec<f64> {
    let q = t.q;
    let kmax = t.max_abs_index() as i64;
    // table[m][k + kmax] = exp(i k 2 pi m / n)
    let table: Vec<Vec<(f64, f64)>> = (0..n)
        .map(|m| {
            (-kmax..=kmax)
                .map(|k| {
                    let r = (k * m as i64).rem_euclid(n as i64);
                    let ang = 2.0 * PI * r as f64 / n as f64;
                    (ang.cos(), ang.sin())
                })
                .collect()
        })
        .collect();
    let terms: Vec<(Vec<usize>, Coeff)> = t
        .terms
        .iter()
        .map(|(k, c)| {
            (
                k.0.iter().map(|&ki| (ki as i64 + kmax) as usize).collect(),
                *c,
            )
        })
        .collect();
    let total = n.pow(q as u32);
    (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut idx = vec![0usize; q];
            let mut rem = flat;
            for axis in (0..q).rev() {
                idx[axis] = rem % n;
                rem /= n;
            }
            let mut acc = 0.0;
            for (ks, c) in &terms {
                let (mut re, mut im) = (1.0, 0.0);
                for axis in 0..q {
                    let (cr, ci) = table[idx[axis]][ks[axis]];
                    let nr = re * cr - im * ci;
                    im = re * ci + im * cr;
                    re = nr;
                }
                acc += c.a * re + c.b * im;
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k(v: &[i32]) -> MultiIndex {
        MultiIndex(v.to_vec())
    }

    fn cos3() -> TrigPoly {
        let mut t = TrigPoly::zero(1, 4.0).unwrap();
        t.add_term(&k(&[3]), 1.0, 0.0).unwrap();
        t
    }

    #[test]
    fn lattice_enumeration() {
        let l = canonical_lattice(1, 4.0);
        assert_eq!(l, vec![k(&[0]), k(&[1]), k(&[2]), k(&[3])]);
        let l2 = canonical_lattice(2, 1.5);
        // 0, (0,1), (1,-1), (1,0), (1,1)
        assert_eq!(l2.len(), 5);
        assert!(l2.iter().all(|m| m.is_canonical() && m.norm2() < 1.5));
    }

    #[test]
    fn eval_examples() {
        let t = cos3();
        assert!((t.eval(&TorusPoint::scalar(0.0).unwrap()).unwrap() - 1.0).abs() < 1e-15);
        let mut t2 = cos3();
        t2.add_term(&k(&[1]), 0.0, 0.5).unwrap();
        let v = t2.eval(&TorusPoint::scalar(PI / 2.0).unwrap()).unwrap();
        assert!((v - 0.5).abs() < 1e-14);
        assert!(t2.eval(&TorusPoint::new(vec![0.0, 0.0]).unwrap()).is_err());
    }

    #[test]
    fn eval_matches_term_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut t = TrigPoly::zero(1, 20.0).unwrap();
            let mut raw = Vec::new();
            for _ in 0..5 {
                let kk = rng.gen_range(-19..20);
                let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                t.add_term(&k(&[kk]), a, b).unwrap();
                raw.push((kk as f64, a, if kk == 0 { 0.0 } else { b }));
            }
            let x = rng.gen_range(-PI..PI);
            let oracle: f64 = raw
                .iter()
                .map(|(kk, a, b)| a * (kk * x).cos() + b * (kk * x).sin())
                .sum();
            let v = t.eval(&TorusPoint::scalar(x).unwrap()).unwrap();
            assert!((v - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn canonicalization_and_bounds() {
        let mut t = TrigPoly::zero(1, 5.0).unwrap();
        t.add_term(&k(&[-2]), 1.0, 1.0).unwrap(); // cos(2x) - sin(2x)
        let c = t.coeff(&k(&[2]));
        assert_eq!((c.a, c.b), (1.0, -1.0));
        assert_eq!(t.coeff(&k(&[-2])).b, 1.0);
        assert!(t.add_term(&k(&[5]), 1.0, 0.0).is_err());
        t.add_term(&k(&[0]), 2.0, 3.0).unwrap();
        assert_eq!(t.coeff(&k(&[0])).b, 0.0);
    }

    #[test]
    fn derivative_examples() {
        let d = cos3().partial_derivative(0).unwrap();
        let c = d.coeff(&k(&[3]));
        assert_eq!((c.a, c.b), (0.0, -3.0));
        let konst = TrigPoly::constant(1, 2.0, 4.0).unwrap();
        assert_eq!(konst.partial_derivative(0).unwrap().num_terms(), 0);
        assert!(konst.partial_derivative(1).is_err());
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let t = random_poly(&mut rng, 2, 6.0);
            for axis in 0..2 {
                let d = t.partial_derivative(axis).unwrap();
                let x = [rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)];
                let h = 1e-5;
                let mut xp = x;
                let mut xm = x;
                xp[axis] += h;
                xm[axis] -= h;
                let fd = (t.eval_coords(&xp) - t.eval_coords(&xm)) / (2.0 * h);
                assert!((fd - d.eval_coords(&x)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn mixed_partials_commute() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_poly(&mut rng, 2, 5.0);
        let a = t
            .partial_derivative(0)
            .unwrap()
            .partial_derivative(1)
            .unwrap();
        let b = t
            .partial_derivative(1)
            .unwrap()
            .partial_derivative(0)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sup_norm_examples() {
        let mut t = TrigPoly::zero(1, 2.0).unwrap();
        t.add_term(&k(&[1]), 1.0, 0.0).unwrap();
        assert!((t.discrete_sup_norm() - 1.0).abs() < 1e-15);
        assert_eq!(TrigPoly::zero(1, 3.0).unwrap().discrete_sup_norm(), 0.0);
    }

    #[test]
    fn grid_evaluation_matches_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_poly(&mut rng, 2, 4.0);
        let n = 7;
        let vals = t.eval_on_grid(n);
        let g = crate::torus::make_grid(2, n).unwrap();
        for (p, v) in g.points().iter().zip(vals) {
            assert!((t.eval(p).unwrap() - v).abs() < 1e-12);
        }
    }

    #[test]
    fn discrete_sup_norm_brackets_dense_max() {
        // At the maximizer T' = 0 and |T''| <= n^2 ||T||, so the nearest grid
        // node (at most half a spacing away) loses at most n^2 d^2 / 2.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..50 {
            let t = random_poly(&mut rng, 1, 16.0);
            let disc = t.discrete_sup_norm();
            let dense = t.discrete_sup_norm_with(4096.0, 1.0);
            let n = t.max_abs_index() as f64;
            let d = PI / sup_grid_size(16.0, SUP_GRID_FACTOR) as f64;
            assert!(disc <= dense + 1e-12);
            assert!(
                disc >= dense * (1.0 - 0.5 * n * n * d * d),
                "disc {disc} dense {dense}"
            );
            assert!(disc <= t.coeff_l1() + 1e-12);
        }
    }

    #[test]
    fn seminorm_examples() {
        let mut t = TrigPoly::zero(1, 4.0).unwrap();
        t.add_term(&k(&[1]), 1.0, 0.0).unwrap();
        assert!((t.sobolev_seminorm() - 1.0).abs() < 1e-14);
        assert_eq!(
            TrigPoly::constant(1, 3.0, 2.0).unwrap().sobolev_seminorm(),
            0.0
        );
        let mut t2 = TrigPoly::zero(2, 4.0).unwrap();
        t2.add_term(&k(&[1, 0]), 1.0, 0.0).unwrap();
        t2.add_term(&k(&[0, 1]), 1.0, 0.0).unwrap();
        assert!((t2.sobolev_seminorm() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn json_shape() {
        let t = cos3();
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"q":1,"N":4.0,"terms":[{"k":[3],"a":1.0,"b":0.0}]}"#);
        let back: TrigPoly = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<TrigPoly>(
            r#"{"q":1,"N":2.0,"terms":[{"k":[3],"a":1.0,"b":0.0}]}"#
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn eval_is_linear(seed in 0u64..1000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0, x in -PI..PI, y in -PI..PI) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_poly(&mut rng, 2, 3.5);
            let s = random_poly(&mut rng, 2, 3.5);
            let comb = t.scaled(alpha).add_scaled(&s, beta).unwrap();
            let p = [x, y];
            let lhs = comb.eval_coords(&p);
            let rhs = alpha * t.eval_coords(&p) + beta * s.eval_coords(&p);
            prop_assert!((lhs - rhs).abs() < 1e-11);
        }
    }
}
