//! Shallow networks with a 2pi-periodic activation built from trigonometric
//! polynomials by quadrature over the activation's first Fourier mode.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{dft_from_samples, sigma_as_trigpoly, FourierTable, KernelSpec};
use crate::linalg::Matrix;
use crate::shallow::{matrix_dominance, BlendedFit};
use crate::torus::{check_dims, make_grid, Dataset, TorusPoint};
use crate::trig_poly::{sup_grid_size, MultiIndex, TrigPoly, SUP_GRID_FACTOR};

/// Periodization window `|j| <= J` for the smooth ReLU.
pub const PERIODIZATION_TERMS: i32 = 16;
const HAT_QUADRATURE: usize = 4096;

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `log((1 + e^{t+pi})(1 + e^{t-pi}) / (1 + e^t)^2)`
pub fn smooth_relu_bump(t: f64) -> f64 {
    softplus(t + PI) + softplus(t - PI) - 2.0 * softplus(t)
}

fn smooth_relu_periodized(t: f64) -> f64 {
    (-PERIODIZATION_TERMS..=PERIODIZATION_TERMS)
        .map(|j| smooth_relu_bump(t + 2.0 * PI * j as f64))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Cosine,
    /// even function stored as `c_0 + sum_m c_m cos(m t)`
    CosineSeries(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicActivation {
    name: String,
    shape: Shape,
    phi_hat_1: Complex64,
}

impl PeriodicActivation {
    pub fn cosine() -> Self {
        Self {
            name: "cos".into(),
            shape: Shape::Cosine,
            phi_hat_1: Complex64::new(0.5, 0.0),
        }
    }

    /// The periodized smooth ReLU. Its Fourier series is tabulated from a
    /// 4096-point DFT of the periodization and truncated where the
    /// coefficients fall below `1e-18`.
    pub fn smooth_relu() -> Self {
        let samples: Vec<f64> = (0..HAT_QUADRATURE)
            .map(|i| smooth_relu_periodized(2.0 * PI * i as f64 / HAT_QUADRATURE as f64))
            .collect();
        let table = dft_from_samples(&samples, 1, 64.0, HAT_QUADRATURE);
        let phi_hat_1 = table.get(&MultiIndex(vec![1]));
        let mut series = vec![table.get(&MultiIndex(vec![0])).re];
        for m in 1..64 {
            let c = table.get(&MultiIndex(vec![m]));
            if c.norm() < 1e-18 && m % 2 == 1 {
                break;
            }
            series.push(2.0 * c.re);
        }
        Self {
            name: "smooth_relu".into(),
            shape: Shape::CosineSeries(series),
            phi_hat_1,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "cos" | "cosine" => Ok(Self::cosine()),
            "smooth_relu" | "smooth-relu" => Ok(Self::smooth_relu()),
            other => Err(Error::InvalidInput(format!("unknown activation `{other}`"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn phi_hat_1(&self) -> Complex64 {
        self.phi_hat_1
    }

    pub fn eval(&self, t: f64) -> f64 {
        match &self.shape {
            Shape::Cosine => t.cos(),
            Shape::CosineSeries(c) => {
                // Clenshaw for sum c_m cos(m t)
                let x = t.cos();
                let (mut b1, mut b2) = (0.0, 0.0);
                for &cm in c[1..].iter().rev() {
                    let b0 = cm + 2.0 * x * b1 - b2;
                    b2 = b1;
                    b1 = b0;
                }
                c[0] + b1 * x - b2
            }
        }
    }

    /// The defining periodized sum, without the series shortcut.
    pub fn eval_exact(&self, t: f64) -> f64 {
        match self.shape {
            Shape::Cosine => t.cos(),
            Shape::CosineSeries(_) => smooth_relu_periodized(t),
        }
    }

    fn check_usable(&self) -> Result<()> {
        if self.phi_hat_1.norm() <= 1e-12 {
            return Err(Error::DegenerateActivation(self.phi_hat_1.norm()));
        }
        Ok(())
    }

    /// `||phi - sigma_m(phi)||` on a 4096-point grid, the stand-in for the
    /// degree of approximation `E_m(1; phi)`.
    pub fn degree_of_approx_proxy(&self, m: usize) -> f64 {
        if m == 0 {
            return f64::INFINITY;
        }
        let grid = HAT_QUADRATURE.max(4 * m + 1);
        let samples: Vec<f64> = (0..grid)
            .map(|i| self.eval_exact(2.0 * PI * i as f64 / grid as f64))
            .collect();
        let table = dft_from_samples(&samples, 1, m as f64, grid);
        let s = sigma_as_trigpoly(&table, m as f64).expect("table degree matches");
        (0..grid)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / grid as f64;
                (samples[i] - s.eval_coords(&[t])).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub k: Vec<i32>,
    pub threshold: f64,
    pub coeff_re: f64,
    pub coeff_im: f64,
}

/// `x -> sum_u c_u phi(k_u . x - t_u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetRepr", into = "NetRepr")]
pub struct PeriodicNet {
    activation: PeriodicActivation,
    quadrature: usize,
    q: usize,
    source_degree: f64,
    units: Vec<Unit>,
}

#[derive(Serialize, Deserialize)]
struct NetRepr {
    activation: String,
    #[serde(rename = "Ñ")]
    quadrature: usize,
    q: usize,
    n: f64,
    units: Vec<Unit>,
}

impl TryFrom<NetRepr> for PeriodicNet {
    type Error = Error;
    fn try_from(r: NetRepr) -> Result<Self> {
        for u in &r.units {
            check_dims(r.q, u.k.len())?;
        }
        Ok(Self {
            activation: PeriodicActivation::by_name(&r.activation)?,
            quadrature: r.quadrature,
            q: r.q,
            source_degree: r.n,
            units: r.units,
        })
    }
}

impl From<PeriodicNet> for NetRepr {
    fn from(n: PeriodicNet) -> Self {
        NetRepr {
            activation: n.activation.name,
            quadrature: n.quadrature,
            q: n.q,
            n: n.source_degree,
            units: n.units,
        }
    }
}

impl PeriodicNet {
    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn quadrature_size(&self) -> usize {
        self.quadrature
    }

    pub fn source_degree(&self) -> f64 {
        self.source_degree
    }

    pub fn activation(&self) -> &PeriodicActivation {
        &self.activation
    }

    pub fn eval_complex(&self, x: &[f64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for u in &self.units {
            let arg: f64 =
                u.k.iter().zip(x).map(|(&k, &v)| k as f64 * v).sum::<f64>() - u.threshold;
            acc += Complex64::new(u.coeff_re, u.coeff_im) * self.activation.eval(arg);
        }
        acc
    }

    /// Real part of the network output; fails if the imaginary residue
    /// exceeds `1e-8 (1 + |re|)`.
    pub fn eval(&self, x: &TorusPoint) -> Result<f64> {
        check_dims(self.q, x.dim())?;
        let v = self.eval_complex(x.coords());
        if v.im.abs() > 1e-8 * (1.0 + v.re.abs()) {
            return Err(Error::InvalidInput(format!(
                "network output has imaginary residue {:e}",
                v.im
            )));
        }
        Ok(v.re)
    }

    pub fn eval_many(&self, xs: &[TorusPoint]) -> Result<Vec<f64>> {
        xs.par_iter().map(|x| self.eval(x)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct NetConversion {
    pub net: PeriodicNet,
    /// `(4 / |phi^(1)|) E sum_k |T^(k)|` with `E` the activation proxy
    pub bound: f64,
    pub degree_of_approx_proxy: f64,
}

/// `G(x) = 1/((2N+1) phi^(1)) sum_j e^{2 pi i j/(2N+1)} sum_k T^(k) phi(k.x - 2 pi j/(2N+1))`.
pub fn to_network(
    t: &TrigPoly,
    activation: &PeriodicActivation,
    quadrature: usize,
) -> Result<NetConversion> {
    if quadrature < 1 {
        return Err(Error::InvalidInput("quadrature size must be >= 1".into()));
    }
    activation.check_usable()?;
    let table = FourierTable::from_trig_poly(t);
    let m = 2 * quadrature + 1;
    let scale = 1.0 / (m as f64 * activation.phi_hat_1);
    let mut full: Vec<(Vec<i32>, Complex64)> = Vec::new();
    for (k, v) in table.iter() {
        if v.norm() == 0.0 {
            continue;
        }
        full.push((k.0.clone(), *v));
        if !k.is_zero() {
            full.push((k.negated().0, v.conj()));
        }
    }
    let mut units = Vec::with_capacity(full.len() * m);
    for j in 0..m {
        let tj = 2.0 * PI * j as f64 / m as f64;
        let rot = Complex64::from_polar(1.0, tj) * scale;
        for (k, v) in &full {
            let c = rot * v;
            units.push(Unit {
                k: k.clone(),
                threshold: tj,
                coeff_re: c.re,
                coeff_im: c.im,
            });
        }
    }
    let proxy = activation.degree_of_approx_proxy(quadrature);
    let bound = 4.0 / activation.phi_hat_1.norm() * proxy * t.fourier_l1();
    Ok(NetConversion {
        net: PeriodicNet {
            activation: activation.clone(),
            quadrature,
            q: t.q(),
            source_degree: t.degree(),
            units,
        },
        bound,
        degree_of_approx_proxy: proxy,
    })
}

/// `G(phi, sigma_n(f))`.
pub fn net_sigma_approx(
    table: &FourierTable,
    n: f64,
    quadrature: usize,
    activation: &PeriodicActivation,
) -> Result<NetConversion> {
    to_network(&sigma_as_trigpoly(table, n)?, activation, quadrature)
}

/// `max over the (3 ceil(N))^q grid of |Phi_N - G(phi, Phi_N)|`.
pub fn kernel_network_gap(
    q: usize,
    big_n: f64,
    quadrature: usize,
    activation: &PeriodicActivation,
) -> Result<f64> {
    let kernel = KernelSpec::new(q, big_n)?;
    let phi = kernel.as_trigpoly(&TorusPoint::new(vec![0.0; q])?)?;
    let net = to_network(&phi, activation, quadrature)?.net;
    let grid = make_grid(q, sup_grid_size(big_n, SUP_GRID_FACTOR))?;
    let vals = phi.eval_on_grid(grid.n_per_axis());
    Ok(grid
        .points()
        .par_iter()
        .zip(vals)
        .map(|(p, v)| (net.eval_complex(p.coords()).re - v).abs())
        .reduce(|| 0.0, f64::max))
}

/// Smallest power-of-two quadrature size (up to `cap`) whose kernel gap
/// passes `gap <= margin / (2M)`.
pub fn min_quadrature_size(
    data: &Dataset,
    big_n: f64,
    activation: &PeriodicActivation,
    cap: usize,
) -> Result<usize> {
    let kernel = KernelSpec::new(data.q(), big_n)?;
    let (margin, _) = matrix_dominance(&kernel.matrix(data.points(), data.points())?);
    let allowed = margin / (2.0 * data.len() as f64);
    let mut nt = 1;
    while nt <= cap {
        if kernel_network_gap(data.q(), big_n, nt, activation)? <= allowed {
            return Ok(nt);
        }
        nt *= 2;
    }
    Err(Error::NetworkPrecondition(format!(
        "no quadrature size up to {cap} brings the kernel gap below {allowed:.3e}"
    )))
}

#[derive(Debug, Clone)]
pub struct NetBlendedFit {
    pub net: PeriodicNet,
    pub coeffs: Vec<f64>,
    pub kernel_gap: f64,
    pub allowed_gap: f64,
    pub residual_max: f64,
    pub collocation: Matrix,
    /// the polynomial whose network image is `net`
    pub polynomial: TrigPoly,
}

/// Network analogue of the blended fit: solves
/// `sum_j a_j G(Phi_N)(x_l - x_j) = y_l - G(sigma_n f)(x_l)`.
pub fn net_blended_fit(
    data: &Dataset,
    table: &FourierTable,
    n: f64,
    big_n: f64,
    quadrature: usize,
    activation: &PeriodicActivation,
) -> Result<NetBlendedFit> {
    let q = data.q();
    check_dims(table.q(), q)?;
    let kernel = KernelSpec::new(q, big_n)?;
    let (margin, _) = matrix_dominance(&kernel.matrix(data.points(), data.points())?);
    let allowed = margin / (2.0 * data.len() as f64);
    let gap = kernel_network_gap(q, big_n, quadrature, activation)?;
    if !(margin > 0.0) || gap > allowed {
        return Err(Error::NetworkPrecondition(format!(
            "kernel gap {gap:.3e} exceeds margin/(2M) = {allowed:.3e} at quadrature size {quadrature}; increase it (or N)"
        )));
    }
    let phi = kernel.as_trigpoly(&TorusPoint::new(vec![0.0; q])?)?;
    let phi_net = to_network(&phi, activation, quadrature)?.net;
    let base = sigma_as_trigpoly(table, n)?;
    let base_net = to_network(&base, activation, quadrature)?.net;
    let pts = data.points();
    let m = pts.len();
    let entries: Vec<f64> = (0..m * m)
        .into_par_iter()
        .map(|idx| {
            let (l, j) = (idx / m, idx % m);
            let d: Vec<f64> = pts[l]
                .coords()
                .iter()
                .zip(pts[j].coords())
                .map(|(a, b)| a - b)
                .collect();
            phi_net.eval_complex(&d).re
        })
        .collect();
    let a = Matrix::from_rows(m, m, entries)?;
    let rhs: Vec<f64> = pts
        .par_iter()
        .zip(data.values())
        .map(|(x, y)| y - base_net.eval_complex(x.coords()).re)
        .collect();
    let lu = crate::linalg::Lu::factor(&a)?;
    let coeffs = lu.solve(&rhs);
    if coeffs.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix {
            condition: lu.condition_estimate(),
        });
    }
    let correction = kernel.combination(pts, &coeffs)?;
    let polynomial = base.add_scaled(&correction, 1.0)?;
    let net = to_network(&polynomial, activation, quadrature)?.net;
    let residual_max = pts
        .par_iter()
        .zip(data.values())
        .map(|(x, y)| (net.eval_complex(x.coords()).re - y).abs())
        .reduce(|| 0.0, f64::max);
    Ok(NetBlendedFit {
        net,
        coeffs,
        kernel_gap: gap,
        allowed_gap: allowed,
        residual_max,
        collocation: a,
        polynomial,
    })
}

/// Sup of `|net - poly|` over a product grid.
pub fn network_grid_gap(net: &PeriodicNet, t: &TrigPoly, n_per_axis: usize) -> Result<f64> {
    let grid = make_grid(t.q(), n_per_axis)?;
    let vals = t.eval_on_grid(n_per_axis);
    Ok(grid
        .points()
        .par_iter()
        .zip(vals)
        .map(|(p, v)| (net.eval_complex(p.coords()).re - v).abs())
        .reduce(|| 0.0, f64::max))
}

impl From<&BlendedFit> for TrigPoly {
    fn from(b: &BlendedFit) -> Self {
        b.combined.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::fourier_dft;
    use crate::shallow::blended_fit;
    use crate::torus::profile_grid;
    use crate::trig_poly::canonical_lattice;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_poly(rng: &mut ChaCha8Rng, q: usize, degree: f64) -> TrigPoly {
        let mut t = TrigPoly::zero(q, degree).unwrap();
        for k in canonical_lattice(q, degree) {
            let b = if k.is_zero() {
                0.0
            } else {
                rng.gen_range(-1.0..1.0)
            };
            t.add_term(&k, rng.gen_range(-1.0..1.0), b).unwrap();
        }
        t
    }

    #[test]
    fn smooth_relu_fourier_data_matches_closed_form() {
        // phi^(0) = pi/2, phi^(m) = 2 / (m sinh(pi m)) for odd m, 0 for even m
        let act = PeriodicActivation::smooth_relu();
        assert!((act.phi_hat_1().re - 2.0 / PI.sinh()).abs() < 1e-14);
        assert!(act.phi_hat_1().im.abs() < 1e-14);
        if let Shape::CosineSeries(c) = &act.shape {
            assert!((c[0] - PI / 2.0).abs() < 1e-13);
            for (m, &cm) in c.iter().enumerate().skip(1) {
                let expect = if m % 2 == 1 {
                    4.0 / (m as f64 * (PI * m as f64).sinh())
                } else {
                    0.0
                };
                assert!((cm - expect).abs() < 1e-14, "m = {m}: {cm} vs {expect}");
            }
        } else {
            panic!("series expected");
        }
    }

    #[test]
    fn smooth_relu_is_periodic_and_series_is_exact() {
        let act = PeriodicActivation::smooth_relu();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let t = rng.gen_range(-10.0..10.0);
            assert!((act.eval_exact(t) - act.eval_exact(t + 2.0 * PI)).abs() < 1e-12);
            assert!((act.eval(t) - act.eval_exact(t)).abs() < 1e-13);
            assert!(act.eval(t).is_finite());
        }
        assert!(act.phi_hat_1().norm() > 0.0);
    }

    #[test]
    fn proxy_decays() {
        let act = PeriodicActivation::smooth_relu();
        let e8 = act.degree_of_approx_proxy(8);
        let e16 = act.degree_of_approx_proxy(16);
        assert!(e16 / e8 < 0.5, "{e8:e} {e16:e}");
    }

    #[test]
    fn cosine_activation_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_poly(&mut rng, 2, 4.0);
        for nt in [1, 3, 8] {
            let net = to_network(&t, &PeriodicActivation::cosine(), nt)
                .unwrap()
                .net;
            for _ in 0..20 {
                let x = [rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)];
                let v = net.eval(&TorusPoint::new(x.to_vec()).unwrap()).unwrap();
                assert!((v - t.eval_coords(&x)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn unit_count_and_json() {
        let mut t = TrigPoly::zero(1, 4.0).unwrap();
        t.add_term(&MultiIndex(vec![0]), 1.0, 0.0).unwrap();
        t.add_term(&MultiIndex(vec![3]), 1.0, 0.5).unwrap();
        let net = to_network(&t, &PeriodicActivation::smooth_relu(), 4)
            .unwrap()
            .net;
        // k in {0, 3, -3}
        assert_eq!(net.units().len(), 9 * 3);
        let s = serde_json::to_string(&net).unwrap();
        assert!(s.contains("\"Ñ\":4") && s.contains("\"smooth_relu\"") && s.contains("coeff_im"));
        let back: PeriodicNet = serde_json::from_str(&s).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn cos3_error_below_bound() {
        let mut t = TrigPoly::zero(1, 4.0).unwrap();
        t.add_term(&MultiIndex(vec![3]), 1.0, 0.0).unwrap();
        let conv = to_network(&t, &PeriodicActivation::smooth_relu(), 32).unwrap();
        let err = network_grid_gap(&conv.net, &t, 1024).unwrap();
        assert!(err < conv.bound, "err {err:e} bound {:e}", conv.bound);
    }

    #[test]
    fn network_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let act = PeriodicActivation::smooth_relu();
        let t = random_poly(&mut rng, 1, 6.0);
        let s = random_poly(&mut rng, 1, 6.0);
        let sum = t.add_scaled(&s, 1.0).unwrap();
        let (nt, ns, nsum) = (
            to_network(&t, &act, 4).unwrap().net,
            to_network(&s, &act, 4).unwrap().net,
            to_network(&sum, &act, 4).unwrap().net,
        );
        for _ in 0..20 {
            let x = TorusPoint::scalar(rng.gen_range(-PI..PI)).unwrap();
            let lhs = nsum.eval(&x).unwrap();
            let rhs = nt.eval(&x).unwrap() + ns.eval(&x).unwrap();
            assert!((lhs - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn sigma_network_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = random_poly(&mut rng, 1, 8.0);
        let table = FourierTable::from_trig_poly(&t.clone().with_degree(16.0).unwrap());
        let conv = net_sigma_approx(&table, 16.0, 3, &PeriodicActivation::cosine()).unwrap();
        assert!(network_grid_gap(&conv.net, &t, 256).unwrap() < 1e-9);

        let f = |x: &[f64]| x[0].cos().abs();
        let g = make_grid(1, 1024).unwrap();
        let table = fourier_dft(f, 1, 64.0, 1024).unwrap();
        let sigma_err =
            crate::kernel::grid_error(f, &sigma_as_trigpoly(&table, 64.0).unwrap(), &g).unwrap();
        let nt = (4.0 * 64f64.ln()).ceil() as usize;
        let act = PeriodicActivation::smooth_relu();
        let mut errs = Vec::new();
        for quad in [1, 2, nt, 2 * nt] {
            let net = net_sigma_approx(&table, 64.0, quad, &act).unwrap().net;
            let err = g
                .points()
                .iter()
                .map(|p| (f(p.coords()) - net.eval(p).unwrap()).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[2] <= 3.0 * sigma_err, "{} vs {sigma_err}", errs[2]);
        assert!((errs[3] - errs[2]).abs() < 1e-3 * sigma_err);
    }

    #[test]
    fn net_blend_with_cosine_matches_polynomial_fit() {
        let xs = profile_grid(32);
        let ys: Vec<f64> = xs.iter().map(|x| x.cos().abs()).collect();
        let data = Dataset::from_angles(&xs, &ys, 0.0).unwrap();
        let table = fourier_dft(|x| x[0].cos().abs(), 1, 32.0, 128).unwrap();
        let poly = blended_fit(&data, &table, 32.0, 64.0).unwrap();
        let net =
            net_blended_fit(&data, &table, 32.0, 64.0, 1, &PeriodicActivation::cosine()).unwrap();
        for (a, b) in poly.correction_coeffs.iter().zip(&net.coeffs) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(net.residual_max < 1e-10);
    }

    #[test]
    fn precondition_rejects_coarse_quadrature() {
        // kernel degree far below the stable regime gives a nonpositive margin
        let xs = profile_grid(64);
        let data = Dataset::from_angles(&xs, &vec![1.0; 64], 0.0).unwrap();
        let table = fourier_dft(|_| 1.0, 1, 4.0, 16).unwrap();
        let r = net_blended_fit(
            &data,
            &table,
            4.0,
            8.0,
            1,
            &PeriodicActivation::smooth_relu(),
        );
        assert!(matches!(r, Err(Error::NetworkPrecondition(_))));
    }
}
