//! Dense bounded-variable revised simplex.
//!
//! Problems arrive in inequality form
//!
//! ```text
//! min f.x   s.t.  A x <= b,   x_v free or x_v >= 0
//! ```
//!
//! and are solved through their dual `max -b.l  s.t.  A_F^T l = -f_F,
//! -A_T^T l + s = f_T,  l, s >= 0`, which has one row per primal variable.
//! For the epigraph problems in this crate that is far fewer rows than the
//! primal has constraints. The primal solution is read off the simplex
//! multipliers: `x_F = -pi_F`, `x_T = pi_T`.

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{Lu, Matrix};

#[derive(Debug, Clone)]
pub struct InequalityLp {
    pub objective: Vec<f64>,
    pub free: Vec<bool>,
    /// row-major, `rows.len() / n_vars` constraints
    pub rows: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl InequalityLp {
    pub fn new(objective: Vec<f64>, free: Vec<bool>) -> Result<Self> {
        if objective.len() != free.len() {
            return Err(Error::InvalidInput(
                "objective and variable kinds differ in length".into(),
            ));
        }
        Ok(Self {
            objective,
            free,
            rows: Vec::new(),
            rhs: Vec::new(),
        })
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn push_row(&mut self, row: &[f64], rhs: f64) {
        assert_eq!(row.len(), self.n_vars());
        self.rows.extend_from_slice(row);
        self.rhs.push(rhs);
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_vars();
        &self.rows[i * n..(i + 1) * n]
    }

    fn validate(&self) -> Result<()> {
        for (v, (&f, &free)) in self.objective.iter().zip(&self.free).enumerate() {
            if free && f != 0.0 {
                return Err(Error::Lp(format!("free variable {v} must have zero cost")));
            }
            if !free && f < 0.0 {
                return Err(Error::Lp(format!(
                    "nonnegative variable {v} must have nonnegative cost"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    pub refactor_every: usize,
    /// consecutive degenerate pivots before switching to Bland's rule
    pub bland_after: usize,
    pub tol: f64,
    /// perturb the right-hand side at the first degenerate pivot
    pub perturb: bool,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200_000,
            refactor_every: 64,
            bland_after: 50,
            tol: 1e-9,
            perturb: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// one nonnegative multiplier per inequality row
    pub multipliers: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
}

/// Independent optimality check of a primal/dual pair.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Certificate {
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    /// `max(0, max_a (A x - b)_a)`
    pub primal_infeasibility: f64,
    /// stationarity residual plus any negative multiplier or reduced cost
    pub dual_infeasibility: f64,
    /// `max_a l_a |b_a - (A x)_a|`
    pub complementarity: f64,
}

impl Certificate {
    pub fn check(lp: &InequalityLp, x: &[f64], multipliers: &[f64]) -> Self {
        let n = lp.n_vars();
        let primal_objective: f64 = lp.objective.iter().zip(x).map(|(f, v)| f * v).sum();
        let dual_objective: f64 = -lp
            .rhs
            .iter()
            .zip(multipliers)
            .map(|(b, l)| b * l)
            .sum::<f64>();
        let mut primal_inf: f64 = 0.0;
        let mut compl: f64 = 0.0;
        let mut grad = lp.objective.clone();
        let mut neg: f64 = 0.0;
        for a in 0..lp.n_rows() {
            let row = lp.row(a);
            let ax: f64 = row.iter().zip(x).map(|(r, v)| r * v).sum();
            primal_inf = primal_inf.max(ax - lp.rhs[a]);
            let l = multipliers[a];
            neg = neg.max(-l);
            compl = compl.max(l.max(0.0) * (lp.rhs[a] - ax).abs());
            for v in 0..n {
                grad[v] += l * row[v];
            }
        }
        // f + A^T l = 0 on free variables, >= 0 on nonnegative ones
        let mut dual_inf = neg;
        for v in 0..n {
            if lp.free[v] {
                dual_inf = dual_inf.max(grad[v].abs());
            } else {
                dual_inf = dual_inf.max(-grad[v]);
                neg = neg.max(-x[v]);
                primal_inf = primal_inf.max(-x[v]);
            }
        }
        Self {
            primal_objective,
            dual_objective,
            gap: primal_objective - dual_objective,
            primal_infeasibility: primal_inf.max(0.0),
            dual_infeasibility: dual_inf,
            complementarity: compl,
        }
    }

    pub fn is_optimal(&self, tol: f64) -> bool {
        let scale = 1.0 + self.primal_objective.abs();
        self.gap.abs() < tol * scale
            && self.primal_infeasibility < tol * scale
            && self.dual_infeasibility < tol * scale
            && self.complementarity < tol * scale
    }
}

/// Smallest pivot magnitude accepted by the ratio tests.
const PIVOT_TOL: f64 = 1e-7;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Pricing {
    SteepestEdge,
    Bland,
}

/// `max c.z  s.t.  A z = b,  0 <= z <= u` with `b >= 0`, column-major `A`.
struct StandardForm {
    m: usize,
    n: usize,
    cols: Vec<f64>,
    c: Vec<f64>,
    b: Vec<f64>,
    upper: Vec<f64>,
}

impl StandardForm {
    fn col(&self, j: usize) -> &[f64] {
        &self.cols[j * self.m..(j + 1) * self.m]
    }
}

struct Simplex<'a> {
    lp: &'a StandardForm,
    basis: Vec<usize>,
    in_basis: Vec<Option<usize>>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    /// steepest-edge reference weights `1 + |B^{-1} a_j|^2`
    weights: Vec<f64>,
    /// working right-hand side, possibly perturbed
    b: Vec<f64>,
    /// columns whose ray test failed since the last pivot
    rejected: Vec<bool>,
    opts: SimplexOptions,
}

impl<'a> Simplex<'a> {
    fn refactor(&mut self) -> Result<()> {
        let m = self.lp.m;
        let bmat = Matrix::from_fn(m, m, |i, k| self.lp.col(self.basis[k])[i]);
        let lu = Lu::factor(&bmat).map_err(|_| Error::Lp("basis matrix became singular".into()))?;
        // B^{-1} column by column, stored row-major
        for j in 0..m {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            let col = lu.solve(&e);
            for i in 0..m {
                self.binv[i * m + j] = col[i];
            }
        }
        self.xb = self.mul_binv(&self.b);
        for v in self.xb.iter_mut() {
            if v.abs() < 1e-13 {
                *v = 0.0;
            }
        }
        Ok(())
    }

    fn mul_binv(&self, v: &[f64]) -> Vec<f64> {
        let m = self.lp.m;
        (0..m)
            .map(|i| {
                self.binv[i * m..(i + 1) * m]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.lp.m;
        let mut pi = vec![0.0; m];
        for (i, &bj) in self.basis.iter().enumerate() {
            let cb = self.lp.c[bj];
            if cb != 0.0 {
                for (p, r) in pi.iter_mut().zip(&self.binv[i * m..(i + 1) * m]) {
                    *p += cb * r;
                }
            }
        }
        pi
    }

    fn price(&self, pi: &[f64], rule: Pricing) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.lp.n {
            if self.in_basis[j].is_some() || self.lp.upper[j] <= 0.0 || self.rejected[j] {
                continue;
            }
            let col = self.lp.col(j);
            let d = self.lp.c[j] - col.iter().zip(pi).map(|(a, p)| a * p).sum::<f64>();
            let norm = 1.0 + col.iter().map(|a| a.abs()).fold(0.0, f64::max);
            if d > self.opts.tol * norm {
                match rule {
                    Pricing::Bland => return Some(j),
                    Pricing::SteepestEdge => {
                        let score = d * d / self.weights[j];
                        if best.map_or(true, |(_, s)| score > s) {
                            best = Some((j, score));
                        }
                    }
                }
            }
        }
        best.map(|(j, _)| j)
    }

    /// Goldfarb-Reid update of the reference weights for entering `q` at
    /// row `r`, using the pre-pivot inverse.
    fn update_weights(&mut self, q: usize, r: usize, alpha: &[f64]) {
        let m = self.lp.m;
        let pr = alpha[r];
        let gq = 1.0 + alpha.iter().map(|a| a * a).sum::<f64>();
        let row_r = &self.binv[r * m..(r + 1) * m];
        // w = B^{-T} alpha_q
        let mut w = vec![0.0; m];
        for (i, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                for (wk, b) in w.iter_mut().zip(&self.binv[i * m..(i + 1) * m]) {
                    *wk += a * b;
                }
            }
        }
        let leaving = self.basis[r];
        for j in 0..self.lp.n {
            if self.in_basis[j].is_some() || j == q || self.lp.upper[j] <= 0.0 {
                continue;
            }
            let col = self.lp.col(j);
            let arj: f64 = row_r.iter().zip(col).map(|(a, b)| a * b).sum();
            if arj == 0.0 {
                continue;
            }
            let ratio = arj / pr;
            let ajw: f64 = col.iter().zip(&w).map(|(a, b)| a * b).sum();
            self.weights[j] =
                (self.weights[j] - 2.0 * ratio * ajw + ratio * ratio * gq).max(1.0 + ratio * ratio);
        }
        self.weights[leaving] = (gq / (pr * pr)).max(1.0);
    }

    /// Leaving row and step length for increasing nonbasic `q` from 0.
    /// Steepest-edge mode uses a Harris two-pass test: bound the step with a small
    /// feasibility relaxation, then take the largest pivot within the bound.
    fn ratio(&self, alpha: &[f64], rule: Pricing) -> Option<(usize, f64)> {
        let piv_tol = PIVOT_TOL.max(1e-9 * alpha.iter().fold(0.0f64, |m, a| m.max(a.abs())));
        let relax = 1e-9;
        let exact = |i: usize, slack: f64| -> Option<f64> {
            let a = alpha[i];
            let ub = self.lp.upper[self.basis[i]];
            if a > piv_tol {
                Some((self.xb[i] + slack).max(0.0) / a)
            } else if a < -piv_tol && ub.is_finite() {
                Some((ub - self.xb[i] + slack).max(0.0) / -a)
            } else {
                None
            }
        };
        match rule {
            Pricing::Bland => {
                let amax = alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
                let mut best: Option<(usize, f64)> = None;
                for i in 0..self.lp.m {
                    if alpha[i].abs() < 1e-7 * amax || alpha[i].abs() < piv_tol {
                        continue;
                    }
                    let Some(t) = exact(i, 0.0) else { continue };
                    let better = match best {
                        None => true,
                        Some((r, bt)) => {
                            t < bt - 1e-12 || (t <= bt + 1e-12 && self.basis[i] < self.basis[r])
                        }
                    };
                    if better {
                        best = Some((i, t));
                    }
                }
                best
            }
            Pricing::SteepestEdge => {
                let bound = (0..self.lp.m)
                    .filter_map(|i| exact(i, relax))
                    .fold(f64::INFINITY, f64::min);
                if !bound.is_finite() {
                    return None;
                }
                let mut best: Option<(usize, f64)> = None;
                for i in 0..self.lp.m {
                    let Some(t) = exact(i, 0.0) else { continue };
                    if t <= bound && best.map_or(true, |(r, _)| alpha[i].abs() > alpha[r].abs()) {
                        best = Some((i, t));
                    }
                }
                best
            }
        }
    }

    fn pivot(&mut self, q: usize, r: usize, alpha: &[f64], step: f64) {
        let m = self.lp.m;
        for i in 0..m {
            self.xb[i] -= step * alpha[i];
        }
        self.xb[r] = step;
        let pr = alpha[r];
        let row_r: Vec<f64> = self.binv[r * m..(r + 1) * m]
            .iter()
            .map(|v| v / pr)
            .collect();
        for i in 0..m {
            if i == r {
                continue;
            }
            let f = alpha[i];
            if f != 0.0 {
                for (dst, src) in self.binv[i * m..(i + 1) * m].iter_mut().zip(&row_r) {
                    *dst -= f * src;
                }
            }
        }
        self.binv[r * m..(r + 1) * m].copy_from_slice(&row_r);
        let leaving = self.basis[r];
        self.in_basis[leaving] = None;
        self.basis[r] = q;
        self.in_basis[q] = Some(r);
    }

    /// Shifts the right-hand side so basic structural variables near zero
    /// move strictly inside their bounds. Breaks the ties behind degenerate
    /// pivots.
    fn perturb(&mut self, rng: &mut ChaCha8Rng) {
        let scale = 1e-6 * self.lp.b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let m = self.lp.m;
        for i in 0..m {
            let j = self.basis[i];
            if self.lp.upper[j].is_finite() || self.xb[i] > scale {
                continue;
            }
            let delta = scale * (1.0 + rng.gen::<f64>());
            for (bk, a) in self.b.iter_mut().zip(self.lp.col(j)) {
                *bk += delta * a;
            }
            self.xb[i] += delta;
        }
    }

    /// Dual simplex on a dual-feasible basis until the basic values respect
    /// their bounds again.
    fn dual_cleanup(&mut self, iterations: &mut usize) -> Result<()> {
        let m = self.lp.m;
        let tol = self.opts.tol * self.lp.b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut since_refactor = 0usize;
        while *iterations < self.opts.max_iterations {
            if since_refactor >= self.opts.refactor_every {
                self.refactor()?;
                since_refactor = 0;
            }
            // most violated row; all finite bounds in this form are 0 or +inf
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let ub = self.lp.upper[self.basis[i]];
                let viol = (-self.xb[i]).max(self.xb[i] - ub);
                if viol > tol && leave.map_or(true, |(_, v)| viol > v) {
                    leave = Some((i, viol));
                }
            }
            let Some((r, _)) = leave else { return Ok(()) };
            let below = self.xb[r] < 0.0;
            let pi = self.duals();
            let row_r = self.binv[r * m..(r + 1) * m].to_vec();
            // Harris two-pass on the dual ratios: bound with relaxed reduced
            // costs, then take the largest pivot within the bound
            let cands: Vec<(usize, f64, f64)> = (0..self.lp.n)
                .filter(|&j| self.in_basis[j].is_none() && self.lp.upper[j] > 0.0)
                .filter_map(|j| {
                    let col = self.lp.col(j);
                    let arj: f64 = row_r.iter().zip(col).map(|(a, b)| a * b).sum();
                    let eligible = if below {
                        arj < -PIVOT_TOL
                    } else {
                        arj > PIVOT_TOL
                    };
                    if !eligible {
                        return None;
                    }
                    let d = self.lp.c[j] - col.iter().zip(&pi).map(|(a, p)| a * p).sum::<f64>();
                    Some((j, arj.abs(), d.min(0.0).abs()))
                })
                .collect();
            let bound = cands
                .iter()
                .map(|&(_, a, d)| (d + self.opts.tol) / a)
                .fold(f64::INFINITY, f64::min);
            let enter = cands.iter().filter(|&&(_, a, d)| d / a <= bound).fold(
                None::<(usize, f64)>,
                |best, &(j, a, _)| match best {
                    Some((_, ba)) if ba >= a => best,
                    _ => Some((j, a)),
                },
            );
            let Some((q, _)) = enter else {
                return Err(Error::Lp(
                    "cleanup found no entering column (primal infeasible)".into(),
                ));
            };
            let alpha = self.mul_binv(self.lp.col(q));
            let bound = if below {
                0.0
            } else {
                self.lp.upper[self.basis[r]]
            };
            let step = (self.xb[r] - bound) / alpha[r];
            self.update_weights(q, r, &alpha);
            self.pivot(q, r, &alpha, step);
            since_refactor += 1;
            *iterations += 1;
        }
        Err(Error::Lp(format!(
            "iteration limit {} reached",
            self.opts.max_iterations
        )))
    }

    fn run(&mut self) -> Result<usize> {
        let mut iterations = 0usize;
        let mut may_perturb = self.opts.perturb;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        loop {
            let perturbed = self.primal(&mut iterations, &mut may_perturb, &mut rng)?;
            if !perturbed {
                return Ok(iterations);
            }
            self.b = self.lp.b.clone();
            self.refactor()?;
            may_perturb = false;
            self.dual_cleanup(&mut iterations)?;
            debug!("simplex: perturbation removed after {iterations} iterations");
        }
    }

    /// Primal simplex to optimality. Returns whether the right-hand side
    /// was perturbed on the way.
    fn primal(
        &mut self,
        iterations: &mut usize,
        may_perturb: &mut bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<bool> {
        let mut degenerate_run = 0usize;
        let mut rule = Pricing::SteepestEdge;
        let mut since_refactor = 0usize;
        let mut perturbed = false;
        while *iterations < self.opts.max_iterations {
            if since_refactor >= self.opts.refactor_every {
                self.refactor()?;
                since_refactor = 0;
            }
            let pi = self.duals();
            let Some(q) = self.price(&pi, rule) else {
                // confirm optimality on a fresh factorization
                if since_refactor > 0 {
                    self.refactor()?;
                    since_refactor = 0;
                    let pi = self.duals();
                    if self.price(&pi, rule).is_some() {
                        continue;
                    }
                }
                return Ok(perturbed);
            };
            let alpha = self.mul_binv(self.lp.col(q));
            let Some((r, step)) = self.ratio(&alpha, rule) else {
                // An unbounded ray is either real or rounding in a stale
                // inverse. Refactor first, then set the column aside.
                if since_refactor > 0 {
                    self.refactor()?;
                    since_refactor = 0;
                    continue;
                }
                if self.rejected.iter().filter(|&&r| r).count() < self.lp.n {
                    debug!("simplex: setting aside column {q} with no positive pivot");
                    self.rejected[q] = true;
                    continue;
                }
                return Err(Error::Lp(
                    "dual problem is unbounded (primal infeasible)".into(),
                ));
            };
            if self.rejected.iter().any(|&r| r) {
                self.rejected.iter_mut().for_each(|r| *r = false);
            }
            // evicting a fixed artificial is progress even at zero step
            let evicts_artificial = self.lp.upper[self.basis[r]] <= 0.0;
            if step <= 1e-12 && !evicts_artificial {
                if *may_perturb {
                    perturbed = true;
                    self.perturb(rng);
                    debug!("simplex: perturbing the right-hand side at iteration {iterations}");
                    continue;
                }
                degenerate_run += 1;
                if degenerate_run >= self.opts.bland_after && rule == Pricing::SteepestEdge {
                    debug!("simplex: switching to Bland's rule after {degenerate_run} degenerate pivots");
                    rule = Pricing::Bland;
                }
            } else if step > 1e-12 {
                degenerate_run = 0;
                rule = Pricing::SteepestEdge;
            }
            self.update_weights(q, r, &alpha);
            self.pivot(q, r, &alpha, step);
            since_refactor += 1;
            *iterations += 1;
        }
        Err(Error::Lp(format!(
            "iteration limit {} reached",
            self.opts.max_iterations
        )))
    }
}

/// Solves `min f.x s.t. A x <= b` (free variables must have zero cost,
/// nonnegative ones nonnegative cost, so the dual has an immediate feasible
/// basis).
pub fn solve(lp: &InequalityLp, opts: SimplexOptions) -> Result<LpSolution> {
    lp.validate()?;
    let nv = lp.n_vars();
    let na = lp.n_rows();
    let m = nv;
    // columns: multipliers (na), then one slack or fixed artificial per row
    let n = na + nv;
    let mut cols = vec![0.0; n * m];
    let mut c = vec![0.0; n];
    let mut upper = vec![f64::INFINITY; n];
    for a in 0..na {
        let row = lp.row(a);
        let col = &mut cols[a * m..(a + 1) * m];
        for v in 0..nv {
            col[v] = if lp.free[v] { row[v] } else { -row[v] };
        }
        c[a] = -lp.rhs[a];
    }
    let b: Vec<f64> = (0..nv)
        .map(|v| if lp.free[v] { 0.0 } else { lp.objective[v] })
        .collect();
    for v in 0..nv {
        let j = na + v;
        cols[j * m + v] = 1.0;
        if lp.free[v] {
            upper[j] = 0.0;
        }
    }
    let sf = StandardForm {
        m,
        n,
        cols,
        c,
        b,
        upper,
    };
    let basis: Vec<usize> = (na..na + nv).collect();
    let mut in_basis = vec![None; n];
    for (i, &j) in basis.iter().enumerate() {
        in_basis[j] = Some(i);
    }
    let mut sx = Simplex {
        lp: &sf,
        basis,
        in_basis,
        binv: vec![0.0; m * m],
        xb: vec![0.0; m],
        // exact for the identity starting basis
        rejected: vec![false; n],
        b: sf.b.clone(),
        weights: (0..n)
            .map(|j| 1.0 + sf.col(j).iter().map(|a| a * a).sum::<f64>())
            .collect(),
        opts,
    };
    sx.refactor()?;
    let iterations = sx.run()?;
    let pi = sx.duals();
    let x: Vec<f64> = (0..nv)
        .map(|v| if lp.free[v] { -pi[v] } else { pi[v] })
        .collect();
    let mut multipliers = vec![0.0; na];
    for (i, &j) in sx.basis.iter().enumerate() {
        if j < na {
            multipliers[j] = sx.xb[i].max(0.0);
        }
    }
    let primal_objective = lp.objective.iter().zip(&x).map(|(f, v)| f * v).sum();
    let dual_objective = -lp
        .rhs
        .iter()
        .zip(&multipliers)
        .map(|(b, l)| b * l)
        .sum::<f64>();
    debug!("simplex: {nv} rows x {n} columns, {iterations} iterations, objective {primal_objective:.12}");
    Ok(LpSolution {
        x,
        multipliers,
        primal_objective,
        dual_objective,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force vertex enumeration for two free variables plus one
    /// epigraph variable.
    fn vertex_oracle(lp: &InequalityLp) -> f64 {
        let n = lp.n_vars();
        let mut all: Vec<(Vec<f64>, f64)> = (0..lp.n_rows())
            .map(|a| (lp.row(a).to_vec(), lp.rhs[a]))
            .collect();
        for v in 0..n {
            if !lp.free[v] {
                let mut r = vec![0.0; n];
                r[v] = -1.0;
                all.push((r, 0.0));
            }
        }
        let mut best = f64::INFINITY;
        let k = all.len();
        for i in 0..k {
            for j in i + 1..k {
                for l in j + 1..k {
                    let a = Matrix::from_rows(
                        3,
                        3,
                        [all[i].0.clone(), all[j].0.clone(), all[l].0.clone()].concat(),
                    )
                    .unwrap();
                    let Ok(lu) = Lu::factor(&a) else { continue };
                    if lu.condition_estimate() > 1e10 {
                        continue;
                    }
                    let x = lu.solve(&[all[i].1, all[j].1, all[l].1]);
                    if all
                        .iter()
                        .all(|(r, b)| r.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= b + 1e-9)
                    {
                        best = best.min(lp.objective.iter().zip(&x).map(|(f, v)| f * v).sum());
                    }
                }
            }
        }
        best
    }

    fn linf_fit(rng: &mut ChaCha8Rng, m: usize) -> InequalityLp {
        // min t s.t. |y_j - c0 - c1 s_j| <= t
        let mut lp = InequalityLp::new(vec![0.0, 0.0, 1.0], vec![true, true, false]).unwrap();
        for _ in 0..m {
            let s: f64 = rng.gen_range(-1.0..1.0);
            let y: f64 = rng.gen_range(-1.0..1.0);
            lp.push_row(&[1.0, s, -1.0], y);
            lp.push_row(&[-1.0, -s, -1.0], -y);
        }
        lp
    }

    #[test]
    fn matches_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let lp = linf_fit(&mut rng, 6);
            let sol = solve(&lp, SimplexOptions::default()).unwrap();
            let oracle = vertex_oracle(&lp);
            assert!(
                (sol.primal_objective - oracle).abs() < 1e-9,
                "{} vs {oracle}",
                sol.primal_objective
            );
            let cert = Certificate::check(&lp, &sol.x, &sol.multipliers);
            assert!(cert.is_optimal(1e-9), "{cert:?}");
        }
    }

    #[test]
    fn larger_random_problems_certify() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            // min t0 + 0.1 t1 with a polynomial-like design
            let nv = 12;
            let mut obj = vec![0.0; nv];
            obj[nv - 2] = 1.0;
            obj[nv - 1] = 0.1;
            let mut free = vec![true; nv];
            free[nv - 2] = false;
            free[nv - 1] = false;
            let mut lp = InequalityLp::new(obj, free).unwrap();
            for _ in 0..80 {
                let mut r: Vec<f64> = (0..nv - 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let y: f64 = rng.gen_range(-2.0..2.0);
                r.push(-1.0);
                r.push(0.0);
                lp.push_row(&r, y);
                let neg: Vec<f64> = r[..nv - 2].iter().map(|v| -v).chain([-1.0, 0.0]).collect();
                lp.push_row(&neg, -y);
            }
            for _ in 0..40 {
                let mut r: Vec<f64> = (0..nv - 2).map(|_| rng.gen_range(-3.0..3.0)).collect();
                r.push(0.0);
                r.push(-1.0);
                lp.push_row(&r, 0.0);
                let neg: Vec<f64> = r[..nv - 2].iter().map(|v| -v).chain([0.0, -1.0]).collect();
                lp.push_row(&neg, 0.0);
            }
            let sol = solve(&lp, SimplexOptions::default()).unwrap();
            let cert = Certificate::check(&lp, &sol.x, &sol.multipliers);
            assert!(cert.is_optimal(1e-8), "{cert:?}");
        }
    }

    #[test]
    fn bland_rule_alone_reaches_the_same_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lp = linf_fit(&mut rng, 15);
        let a = solve(&lp, SimplexOptions::default()).unwrap();
        let b = solve(
            &lp,
            SimplexOptions {
                bland_after: 0,
                ..SimplexOptions::default()
            },
        )
        .unwrap();
        assert!((a.primal_objective - b.primal_objective).abs() < 1e-10);
    }

    #[test]
    fn rejects_unsupported_costs() {
        let lp = InequalityLp::new(vec![1.0], vec![true]).unwrap();
        assert!(solve(&lp, SimplexOptions::default()).is_err());
    }
}
