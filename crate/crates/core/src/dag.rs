//! Compositional functions on directed acyclic graphs.
//!
//! Every node carries a constituent: a black-box function in truth mode or
//! a trigonometric polynomial in fitted mode. Source nodes read global
//! coordinates. Internal nodes read their children's outputs, which enter
//! fitted polynomials as angles `arccos(clamp(r(v)))`, with `r` an affine map
//! taking the child's observed training range onto `[-0.9, 0.9]`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use log::{debug, info, warn};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{default_dft_grid, fourier_dft, sigma_as_trigpoly, EvenKernel, KernelSpec};
use crate::linalg::Matrix;
use crate::minimax::{
    derivative_grid, derivative_matrices, feature_matrix, solve_epigraph, BasisKind, FeatureSet,
    DEFAULT_LP_CAP,
};
use crate::shallow::{blended_with_kernel, matrix_dominance, search_min_degree, CollocationKernel};
use crate::torus::{check_dims, dist_unchecked, Dataset, TorusPoint};
use crate::trig_poly::{sup_grid_size, TrigPoly, SUP_GRID_FACTOR};

pub const RANGE_MARGIN: f64 = 0.9;

/// Tolerance under which propagated points count as the same point.
const DUPLICATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<String>,
    /// global coordinates read by a source node (0-based, repeats allowed)
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct DagDoc {
    nodes: Vec<NodeSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "DagDoc", into = "DagDoc")]
pub struct DagSpec {
    nodes: Vec<NodeSpec>,
    children: Vec<Vec<usize>>,
    parents: Vec<Vec<usize>>,
    order: Vec<usize>,
    levels: Vec<usize>,
    sink: usize,
    q: usize,
}

impl TryFrom<DagDoc> for DagSpec {
    type Error = Error;
    fn try_from(d: DagDoc) -> Result<Self> {
        DagSpec::new(d.nodes)
    }
}

impl From<DagSpec> for DagDoc {
    fn from(d: DagSpec) -> Self {
        DagDoc { nodes: d.nodes }
    }
}

impl DagSpec {
    pub fn new(nodes: Vec<NodeSpec>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Dag("graph has no nodes".into()));
        }
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(Error::Dag(format!("duplicate node id `{}`", n.id)));
            }
        }
        let mut children = vec![Vec::new(); nodes.len()];
        let mut parents = vec![Vec::new(); nodes.len()];
        let mut q = 0usize;
        for (i, n) in nodes.iter().enumerate() {
            match (n.children.is_empty(), n.inputs.is_empty()) {
                (true, true) => {
                    return Err(Error::Dag(format!(
                        "node `{}` has neither children nor inputs",
                        n.id
                    )))
                }
                (false, false) => {
                    return Err(Error::Dag(format!(
                        "node `{}` mixes children and global inputs",
                        n.id
                    )))
                }
                _ => {}
            }
            for c in &n.children {
                let &ci = index.get(c).ok_or_else(|| {
                    Error::Dag(format!("node `{}` names unknown child `{c}`", n.id))
                })?;
                children[i].push(ci);
                if !parents[ci].contains(&i) {
                    parents[ci].push(i);
                }
            }
            for &s in &n.inputs {
                q = q.max(s + 1);
            }
        }
        let used: BTreeSet<usize> = nodes
            .iter()
            .flat_map(|n| n.inputs.iter().copied())
            .collect();
        if used.len() != q {
            return Err(Error::Dag(format!(
                "global coordinates 0..{q} are not all read by a source"
            )));
        }
        let sinks: Vec<usize> = (0..nodes.len())
            .filter(|&i| parents[i].is_empty())
            .collect();
        if sinks.len() != 1 {
            let ids: Vec<&str> = sinks.iter().map(|&i| nodes[i].id.as_str()).collect();
            return Err(Error::Dag(format!(
                "expected exactly one sink, found {ids:?}"
            )));
        }
        // Kahn's algorithm, smallest index first
        let mut pending: Vec<usize> = children.iter().map(|c| c.len()).collect();
        let mut ready: BTreeSet<usize> = (0..nodes.len()).filter(|&i| pending[i] == 0).collect();
        let mut order = Vec::with_capacity(nodes.len());
        let mut levels = vec![0usize; nodes.len()];
        while let Some(i) = ready.pop_first() {
            order.push(i);
            levels[i] = children[i]
                .iter()
                .map(|&c| levels[c] + 1)
                .max()
                .unwrap_or(0);
            for &p in &parents[i] {
                pending[p] -= children[p].iter().filter(|&&c| c == i).count();
                if pending[p] == 0 {
                    ready.insert(p);
                }
            }
        }
        if order.len() != nodes.len() {
            return Err(Error::Dag("graph has a cycle".into()));
        }
        Ok(Self {
            sink: sinks[0],
            nodes,
            children,
            parents,
            order,
            levels,
            q,
        })
    }

    /// One node reading all `q` coordinates.
    pub fn single(q: usize) -> Result<Self> {
        Self::new(vec![NodeSpec {
            id: "f".into(),
            children: vec![],
            inputs: (0..q).collect(),
        }])
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Toml(e.to_string()))
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> &NodeSpec {
        &self.nodes[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.order
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn is_source(&self, i: usize) -> bool {
        self.children[i].is_empty()
    }

    /// Input arity `d(v)`.
    pub fn arity(&self, i: usize) -> usize {
        if self.is_source(i) {
            self.nodes[i].inputs.len()
        } else {
            self.children[i].len()
        }
    }

    /// Longest path from the sources.
    pub fn level(&self, i: usize) -> usize {
        self.levels[i]
    }

    /// `(child, parent)` pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.len())
            .flat_map(|p| self.children[p].iter().map(move |&c| (c, p)))
            .collect()
    }

    fn basis_kind(&self, i: usize) -> BasisKind {
        if self.is_source(i) {
            BasisKind::Full
        } else {
            BasisKind::Even
        }
    }
}

/// Affine map of a child's training range onto `[-0.9, 0.9]`, then
/// clamp and arccos.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeMap {
    pub lo: f64,
    pub hi: f64,
}

impl RangeMap {
    pub fn from_values(values: &[f64]) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { lo, hi }
    }

    fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn normalize(&self, v: f64) -> f64 {
        if self.width() <= f64::EPSILON * (1.0 + self.lo.abs()) {
            0.0
        } else {
            -RANGE_MARGIN + 2.0 * RANGE_MARGIN * (v - self.lo) / self.width()
        }
    }

    pub fn to_angle(&self, v: f64) -> f64 {
        self.normalize(v).clamp(-1.0, 1.0).acos()
    }

    /// Inverse on `[0, pi]`, extended linearly past the training range.
    pub fn from_angle(&self, theta: f64) -> f64 {
        self.lo + (theta.cos() + RANGE_MARGIN) / (2.0 * RANGE_MARGIN) * self.width()
    }

    /// `d to_angle / dv`, zero where the clamp is active.
    pub fn angle_derivative(&self, v: f64) -> f64 {
        let z = self.normalize(v);
        if z.abs() >= 1.0 || self.width() <= 0.0 {
            return 0.0;
        }
        -(2.0 * RANGE_MARGIN / self.width()) / (1.0 - z * z).sqrt()
    }
}

pub type NodeFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Constituent {
    Truth(NodeFn),
    Fitted(TrigPoly),
}

impl fmt::Debug for Constituent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constituent::Truth(_) => write!(f, "Truth(<fn>)"),
            Constituent::Fitted(t) => write!(f, "Fitted({} terms)", t.num_terms()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GFunction {
    dag: DagSpec,
    constituents: Vec<Constituent>,
    range_maps: Vec<Option<RangeMap>>,
}

impl GFunction {
    /// Truth mode; `funcs` is indexed like the DAG's node list.
    pub fn truth(dag: DagSpec, funcs: Vec<NodeFn>) -> Result<Self> {
        check_dims(dag.len(), funcs.len())?;
        let n = dag.len();
        Ok(Self {
            dag,
            constituents: funcs.into_iter().map(Constituent::Truth).collect(),
            range_maps: vec![None; n],
        })
    }

    pub fn fitted(
        dag: DagSpec,
        polys: Vec<TrigPoly>,
        range_maps: Vec<Option<RangeMap>>,
    ) -> Result<Self> {
        check_dims(dag.len(), polys.len())?;
        check_dims(dag.len(), range_maps.len())?;
        for (i, t) in polys.iter().enumerate() {
            if t.q() != dag.arity(i) {
                return Err(Error::Node {
                    node: dag.node(i).id.clone(),
                    message: format!(
                        "polynomial has q = {} but the node has arity {}",
                        t.q(),
                        dag.arity(i)
                    ),
                });
            }
            if i != dag.sink() && range_maps[i].is_none() {
                return Err(Error::Node {
                    node: dag.node(i).id.clone(),
                    message: "non-sink node needs a range map".into(),
                });
            }
        }
        Ok(Self {
            dag,
            constituents: polys.into_iter().map(Constituent::Fitted).collect(),
            range_maps,
        })
    }

    pub fn dag(&self) -> &DagSpec {
        &self.dag
    }

    pub fn constituent(&self, i: usize) -> &Constituent {
        &self.constituents[i]
    }

    pub fn polynomial(&self, i: usize) -> Option<&TrigPoly> {
        match &self.constituents[i] {
            Constituent::Fitted(t) => Some(t),
            Constituent::Truth(_) => None,
        }
    }

    pub fn range_map(&self, i: usize) -> Option<RangeMap> {
        self.range_maps[i]
    }

    pub fn is_fitted(&self) -> bool {
        self.constituents
            .iter()
            .all(|c| matches!(c, Constituent::Fitted(_)))
    }

    fn with_polynomial(&self, i: usize, t: TrigPoly) -> Self {
        let mut out = self.clone();
        out.constituents[i] = Constituent::Fitted(t);
        out
    }

    /// Argument vector of node `i` given all node outputs computed so far:
    /// raw values in truth mode, angles in fitted mode.
    fn node_args(&self, i: usize, x: &[f64], outputs: &[f64]) -> Vec<f64> {
        if self.dag.is_source(i) {
            return self.dag.node(i).inputs.iter().map(|&s| x[s]).collect();
        }
        self.dag
            .children(i)
            .iter()
            .map(|&c| match &self.constituents[i] {
                Constituent::Truth(_) => outputs[c],
                Constituent::Fitted(_) => {
                    self.range_maps[c].expect("validated").to_angle(outputs[c])
                }
            })
            .collect()
    }

    /// Outputs of every node at `x`, in node-list order.
    pub fn node_outputs(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dims(self.dag.q(), x.len())?;
        let mut out = vec![f64::NAN; self.dag.len()];
        for &i in self.dag.topo_order() {
            let args = self.node_args(i, x, &out);
            let v = match &self.constituents[i] {
                Constituent::Truth(f) => f(&args),
                Constituent::Fitted(t) => t.eval_coords(&args),
            };
            if !v.is_finite() {
                return Err(Error::Node {
                    node: self.dag.node(i).id.clone(),
                    message: format!("non-finite output {v} at {x:?}"),
                });
            }
            out[i] = v;
        }
        Ok(out)
    }

    /// Truth constituent of node `i` as a function of its angle arguments.
    /// Sources keep their coordinate arguments.
    pub fn node_target(
        &self,
        i: usize,
        maps: &[Option<RangeMap>],
    ) -> Result<impl Fn(&[f64]) -> f64 + Sync + '_> {
        let Constituent::Truth(f) = &self.constituents[i] else {
            return Err(Error::Node {
                node: self.dag.node(i).id.clone(),
                message: "node target needs a truth-mode constituent".into(),
            });
        };
        let inv: Vec<RangeMap> = if self.dag.is_source(i) {
            Vec::new()
        } else {
            self.dag
                .children(i)
                .iter()
                .map(|&c| maps[c].expect("propagated maps cover every child"))
                .collect()
        };
        Ok(move |theta: &[f64]| {
            if inv.is_empty() {
                f(theta)
            } else {
                let raw: Vec<f64> = theta
                    .iter()
                    .zip(&inv)
                    .map(|(t, m)| m.from_angle(*t))
                    .collect();
                f(&raw)
            }
        })
    }

    pub fn to_bundle(&self) -> Result<FittedBundle> {
        let nodes = (0..self.dag.len())
            .map(|i| {
                let polynomial = self.polynomial(i).cloned().ok_or_else(|| Error::Node {
                    node: self.dag.node(i).id.clone(),
                    message: "only fitted constituents serialize".into(),
                })?;
                Ok(FittedNode {
                    id: self.dag.node(i).id.clone(),
                    polynomial,
                    range_map: self.range_maps[i],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FittedBundle {
            dag: self.dag.clone(),
            nodes,
        })
    }

    pub fn from_bundle(b: FittedBundle) -> Result<Self> {
        let mut polys = Vec::with_capacity(b.nodes.len());
        let mut maps = Vec::with_capacity(b.nodes.len());
        for i in 0..b.dag.len() {
            let id = &b.dag.node(i).id;
            let n = b
                .nodes
                .iter()
                .find(|n| &n.id == id)
                .ok_or_else(|| Error::Dag(format!("bundle lacks node `{id}`")))?;
            polys.push(n.polynomial.clone());
            maps.push(n.range_map);
        }
        Self::fitted(b.dag, polys, maps)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedNode {
    pub id: String,
    pub polynomial: TrigPoly,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub range_map: Option<RangeMap>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedBundle {
    pub dag: DagSpec,
    pub nodes: Vec<FittedNode>,
}

pub fn compose_eval(gf: &GFunction, x: &[f64]) -> Result<f64> {
    Ok(gf.node_outputs(x)?[gf.dag.sink()])
}

/// Training samples on the global torus. Unlike [`Dataset`], points may
/// repeat.
#[derive(Debug, Clone)]
pub struct Samples {
    pub points: Vec<TorusPoint>,
    pub values: Vec<f64>,
    pub noise_level: f64,
}

impl Samples {
    pub fn new(points: Vec<TorusPoint>, values: Vec<f64>, noise_level: f64) -> Result<Self> {
        check_dims(points.len(), values.len())?;
        if points.is_empty() {
            return Err(Error::InvalidInput("no samples".into()));
        }
        let q = points[0].dim();
        for p in &points {
            check_dims(q, p.dim())?;
        }
        Ok(Self {
            points,
            values,
            noise_level,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_abs_value(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl From<&Dataset> for Samples {
    fn from(d: &Dataset) -> Self {
        Self {
            points: d.points().to_vec(),
            values: d.values().to_vec(),
            noise_level: d.noise_level(),
        }
    }
}

/// Training sets seen by every node, in node-list order.
#[derive(Debug, Clone)]
pub struct Propagated {
    pub sets: Vec<Dataset>,
    pub range_maps: Vec<Option<RangeMap>>,
}

/// Collapses repeated points; repeated points must carry the same value.
fn collapse(node: &str, pts: Vec<Vec<f64>>, vals: Vec<f64>, noise: f64) -> Result<Dataset> {
    let mut keep_p: Vec<Vec<f64>> = Vec::new();
    let mut keep_v: Vec<f64> = Vec::new();
    for (p, v) in pts.into_iter().zip(vals) {
        if let Some(j) = keep_p
            .iter()
            .position(|k| dist_unchecked(k, &p) <= DUPLICATE_TOL)
        {
            if (keep_v[j] - v).abs() > DUPLICATE_TOL * (1.0 + v.abs()) {
                return Err(Error::Node {
                    node: node.into(),
                    message: format!(
                        "coincident propagated points carry different values {} and {v}",
                        keep_v[j]
                    ),
                });
            }
            continue;
        }
        keep_p.push(p);
        keep_v.push(v);
    }
    let points = keep_p
        .into_iter()
        .map(TorusPoint::new)
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(points, keep_v, noise)
}

pub fn propagate_training_sets(gf: &GFunction, samples: &Samples) -> Result<Propagated> {
    let dag = &gf.dag;
    let outputs: Vec<Vec<f64>> = samples
        .points
        .par_iter()
        .map(|p| gf.node_outputs(p.coords()))
        .collect::<Result<Vec<_>>>()?;
    if let Some(i) = (0..dag.len()).find(|&i| matches!(gf.constituents[i], Constituent::Fitted(_)))
    {
        return Err(Error::Node {
            node: dag.node(i).id.clone(),
            message: "propagation needs truth-mode constituents".into(),
        });
    }
    let range_maps: Vec<Option<RangeMap>> = (0..dag.len())
        .map(|i| {
            (i != dag.sink())
                .then(|| RangeMap::from_values(&outputs.iter().map(|o| o[i]).collect::<Vec<_>>()))
        })
        .collect();
    let sets = (0..dag.len())
        .map(|i| {
            let pts: Vec<Vec<f64>> = samples
                .points
                .iter()
                .zip(&outputs)
                .map(|(x, o)| {
                    if dag.is_source(i) {
                        dag.node(i).inputs.iter().map(|&s| x.coords()[s]).collect()
                    } else {
                        dag.children(i)
                            .iter()
                            .map(|&c| range_maps[c].expect("non-sink").to_angle(o[c]))
                            .collect()
                    }
                })
                .collect();
            let (vals, noise) = if i == dag.sink() {
                (samples.values.clone(), samples.noise_level)
            } else {
                (outputs.iter().map(|o| o[i]).collect(), 0.0)
            };
            let set = collapse(&dag.node(i).id, pts, vals, noise)?;
            debug!(
                "node `{}`: {} distinct points, eta = {:?}",
                dag.node(i).id,
                set.len(),
                set.min_sep()
            );
            Ok(set)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Propagated { sets, range_maps })
}

fn node_kernel(dag: &DagSpec, i: usize, n: f64) -> Result<Box<dyn CollocationKernel>> {
    Ok(if dag.is_source(i) {
        Box::new(KernelSpec::new(dag.arity(i), n)?)
    } else {
        Box::new(EvenKernel::new(dag.arity(i), n)?)
    })
}

/// Gershgorin margin of node `i`'s collocation matrix at degree `n`.
pub fn node_dominance(dag: &DagSpec, i: usize, set: &Dataset, n: f64) -> Result<(f64, bool)> {
    let k = node_kernel(dag, i, n)?;
    Ok(matrix_dominance(&k.matrix(set.points(), set.points())?))
}

pub fn node_min_degree(dag: &DagSpec, i: usize, set: &Dataset) -> Result<f64> {
    let eta = set.min_sep().unwrap_or(std::f64::consts::PI);
    search_min_degree(4096.0 / eta, |n| Ok(node_dominance(dag, i, set, n)?.1))
}

/// `find_min_degree` analogue for every node.
pub fn default_degrees(gf: &GFunction, samples: &Samples) -> Result<Vec<f64>> {
    let prop = propagate_training_sets(gf, samples)?;
    (0..gf.dag.len())
        .map(|i| node_min_degree(&gf.dag, i, &prop.sets[i]))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeFitInfo {
    pub node: String,
    pub n: f64,
    #[serde(rename = "N")]
    pub big_n: f64,
    pub points: usize,
    pub min_sep: Option<f64>,
    pub residual_max: f64,
    pub dominance_margin: f64,
    pub condition_estimate: f64,
}

#[derive(Debug, Clone)]
pub struct DeepFit {
    pub gfunction: GFunction,
    pub nodes: Vec<NodeFitInfo>,
    pub propagated: Propagated,
    /// `max_j |y_j - T(x_j)|` through the composed fitted function
    pub sink_residual_max: f64,
}

/// Node-wise blended fits: `sigma_{N_v/2}` of the node's truth target plus a
/// kernel correction interpolating the propagated set. Internal nodes use the
/// even kernel so their fits stay cosine-only.
pub fn deep_blended_fit(gf: &GFunction, samples: &Samples, degrees: &[f64]) -> Result<DeepFit> {
    let dag = &gf.dag;
    check_dims(dag.len(), degrees.len())?;
    let prop = propagate_training_sets(gf, samples)?;
    let fits = (0..dag.len())
        .into_par_iter()
        .map(|i| {
            let id = &dag.node(i).id;
            let set = &prop.sets[i];
            let big_n = degrees[i];
            let (margin, ok) = node_dominance(dag, i, set, big_n)?;
            if !ok {
                let need = node_min_degree(dag, i, set)?;
                return Err(Error::Node {
                    node: id.clone(),
                    message: format!(
                        "degree {big_n} fails the dominance check (margin {margin:.3e}); need at least {need}"
                    ),
                });
            }
            let n = big_n / 2.0;
            let d = dag.arity(i);
            let target = gf.node_target(i, &prop.range_maps)?;
            let table = fourier_dft(&target, d, n, default_dft_grid(d, n))?;
            let base = sigma_as_trigpoly(&table, n)?;
            let kernel = node_kernel(dag, i, big_n)?;
            let fit = blended_with_kernel(set, base, kernel.as_ref()).map_err(|e| Error::Node {
                node: id.clone(),
                message: e.to_string(),
            })?;
            let info = NodeFitInfo {
                node: id.clone(),
                n,
                big_n,
                points: set.len(),
                min_sep: set.min_sep(),
                residual_max: fit.residual_max,
                dominance_margin: fit.system.diag_dominance_margin,
                condition_estimate: fit.system.condition_estimate,
            };
            Ok((fit.combined.with_degree(big_n)?, info))
        })
        .collect::<Result<Vec<_>>>()?;
    let (polys, nodes): (Vec<_>, Vec<_>) = fits.into_iter().unzip();
    let fitted = GFunction::fitted(dag.clone(), polys, prop.range_maps.clone())?;
    let sink_residual_max = sink_residuals(&fitted, samples)?
        .into_iter()
        .fold(0.0f64, |m, r| m.max(r.abs()));
    info!("deep blended fit: sink residual {sink_residual_max:.3e}");
    Ok(DeepFit {
        gfunction: fitted,
        nodes,
        propagated: prop,
        sink_residual_max,
    })
}

/// `y_j - T(x_j)` through the composed function.
pub fn sink_residuals(gf: &GFunction, samples: &Samples) -> Result<Vec<f64>> {
    samples
        .points
        .par_iter()
        .zip(&samples.values)
        .map(|(p, y)| Ok(y - compose_eval(gf, p.coords())?))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeepRegValue {
    pub total: f64,
    pub training: f64,
    /// `sum_v ||T_v|| / N_v`
    pub penalty: f64,
}

fn node_seminorm(gf: &GFunction, i: usize, degree: f64, factor: f64) -> Result<f64> {
    let t = gf.polynomial(i).ok_or_else(|| Error::Node {
        node: gf.dag.node(i).id.clone(),
        message: "regularizer needs fitted constituents".into(),
    })?;
    Ok(t.sobolev_seminorm_with(degree, factor))
}

/// `max_j |y_j - T_{v*}(x_j)| + sum_v ||T_v|| / N_v`.
pub fn deep_regularizer(
    gf: &GFunction,
    samples: &Samples,
    degrees: &[f64],
) -> Result<DeepRegValue> {
    deep_regularizer_with(gf, samples, degrees, SUP_GRID_FACTOR)
}

pub fn deep_regularizer_with(
    gf: &GFunction,
    samples: &Samples,
    degrees: &[f64],
    factor: f64,
) -> Result<DeepRegValue> {
    check_dims(gf.dag.len(), degrees.len())?;
    let training = sink_residuals(gf, samples)?
        .into_iter()
        .fold(0.0f64, |m, r| m.max(r.abs()));
    let mut penalty = 0.0;
    for (i, &n) in degrees.iter().enumerate() {
        penalty += node_seminorm(gf, i, n, factor)? / n;
    }
    Ok(DeepRegValue {
        total: training + penalty,
        training,
        penalty,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct BcdOptions {
    pub cycles: usize,
    pub grid_factor: f64,
    /// step halvings tried on a rejected internal-node candidate
    pub max_halvings: usize,
    pub cap: usize,
    /// stop after a full cycle without an accepted step
    pub stop_on_stagnation: bool,
}

impl Default for BcdOptions {
    fn default() -> Self {
        Self {
            cycles: 5,
            grid_factor: SUP_GRID_FACTOR,
            max_halvings: 3,
            cap: DEFAULT_LP_CAP,
            stop_on_stagnation: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BcdStep {
    pub cycle: usize,
    pub node: String,
    pub accepted: bool,
    /// step length applied to the LP candidate (0 when rejected)
    pub step: f64,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone)]
pub struct BcdResult {
    pub gfunction: GFunction,
    /// objective at the warm start followed by its value after each cycle run
    pub history: Vec<f64>,
    pub steps: Vec<BcdStep>,
}

/// Per-sample forward state: node outputs and node arguments.
fn forward(gf: &GFunction, samples: &Samples) -> Result<Vec<(Vec<f64>, Vec<Vec<f64>>)>> {
    samples
        .points
        .par_iter()
        .map(|p| {
            let x = p.coords();
            let outs = gf.node_outputs(x)?;
            let args = (0..gf.dag.len())
                .map(|i| gf.node_args(i, x, &outs))
                .collect();
            Ok((outs, args))
        })
        .collect()
}

/// `d (sink output) / d (output of node v)` at every sample.
fn sink_sensitivity(
    gf: &GFunction,
    v: usize,
    state: &[(Vec<f64>, Vec<Vec<f64>>)],
) -> Result<Vec<f64>> {
    let dag = &gf.dag;
    let derivs: Vec<Vec<TrigPoly>> = (0..dag.len())
        .map(|i| {
            let t = gf.polynomial(i).expect("fitted");
            (0..dag.arity(i))
                .map(|a| t.partial_derivative(a))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(state
        .par_iter()
        .map(|(outs, args)| {
            let mut adj = vec![0.0; dag.len()];
            adj[dag.sink()] = 1.0;
            for &w in dag.topo_order().iter().rev() {
                if adj[w] == 0.0 || dag.is_source(w) {
                    continue;
                }
                for (a, &c) in dag.children(w).iter().enumerate() {
                    let dt = derivs[w][a].eval_coords(&args[w]);
                    let dtheta = gf.range_maps[c].expect("fitted").angle_derivative(outs[c]);
                    adj[c] += adj[w] * dt * dtheta;
                }
            }
            adj[v]
        })
        .collect())
}

/// Drops repeated `(row, target)` pairs; repeats only add degenerate
/// constraints to the LP.
fn dedup_rows(rows: Vec<Vec<f64>>, targets: Vec<f64>) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut seen = std::collections::HashSet::new();
    rows.into_iter()
        .zip(targets)
        .filter(|(r, t)| {
            let key: Vec<u64> = r
                .iter()
                .chain(std::iter::once(t))
                .map(|v| (v + 0.0).to_bits())
                .collect();
            seen.insert(key)
        })
        .unzip()
}

/// Block coordinate descent on the deep regularizer from a fitted warm start.
/// The sink block is solved exactly by linear programming; other blocks use
/// the first-order expansion of the sink output in their coefficients and are
/// kept only when the true objective decreases (with step halving).
pub fn minimize_deep_regularizer(
    samples: &Samples,
    warm_start: &GFunction,
    degrees: &[f64],
    opts: BcdOptions,
) -> Result<BcdResult> {
    let dag = warm_start.dag.clone();
    check_dims(dag.len(), degrees.len())?;
    if !warm_start.is_fitted() {
        return Err(Error::Dag("warm start must be a fitted G-function".into()));
    }
    let mut gf = warm_start.clone();
    let mut current = deep_regularizer_with(&gf, samples, degrees, opts.grid_factor)?.total;
    let mut history = vec![current];
    let mut steps = Vec::new();
    // blocks in sink-first order
    let blocks: Vec<usize> = dag.topo_order().iter().rev().copied().collect();
    for cycle in 0..opts.cycles {
        for &v in &blocks {
            let basis = FeatureSet::new(dag.basis_kind(v), dag.arity(v), degrees[v])?;
            let grid = derivative_grid(
                dag.arity(v),
                sup_grid_size(degrees[v], opts.grid_factor),
                basis.kind(),
            );
            let der = derivative_matrices(&basis, &grid);
            let state = forward(&gf, samples)?;
            let t_old = gf.polynomial(v).expect("fitted").clone();
            let (rows, targets): (Vec<Vec<f64>>, Vec<f64>) = if v == dag.sink() {
                state
                    .iter()
                    .zip(&samples.values)
                    .map(|((_, args), y)| (basis.values(&args[v]), *y))
                    .unzip()
            } else {
                let g = sink_sensitivity(&gf, v, &state)?;
                state
                    .iter()
                    .zip(&samples.values)
                    .zip(&g)
                    .map(|(((outs, args), y), gj)| {
                        let feats: Vec<f64> =
                            basis.values(&args[v]).into_iter().map(|f| gj * f).collect();
                        let lin = y - outs[dag.sink()] + gj * t_old.eval_coords(&args[v]);
                        (feats, lin)
                    })
                    .unzip()
            };
            let (rows, targets) = dedup_rows(rows, targets);
            let res: Matrix = feature_matrix(&rows);
            let sol =
                solve_epigraph(&res, &targets, &der, 1.0 / degrees[v], opts.cap).map_err(|e| {
                    Error::Node {
                        node: dag.node(v).id.clone(),
                        message: e.to_string(),
                    }
                })?;
            let cand = basis.to_poly(&sol.coeffs)?;
            let before = current;
            let mut accepted = None;
            let mut s = 1.0;
            let tries = if v == dag.sink() {
                1
            } else {
                opts.max_halvings + 1
            };
            for _ in 0..tries {
                let t_new = if s == 1.0 {
                    cand.clone()
                } else {
                    t_old.scaled(1.0 - s).add_scaled(&cand, s)?
                };
                let trial = gf.with_polynomial(v, t_new);
                let val = deep_regularizer_with(&trial, samples, degrees, opts.grid_factor)?.total;
                // decreases at roundoff level do not count
                if val < current - 1e-12 * (1.0 + current) {
                    accepted = Some((trial, val, s));
                    break;
                }
                s *= 0.5;
            }
            let step = match accepted {
                Some((trial, val, s)) => {
                    gf = trial;
                    current = val;
                    s
                }
                None => 0.0,
            };
            debug!(
                "cycle {cycle} node `{}`: {before:.6e} -> {current:.6e} (step {step})",
                dag.node(v).id
            );
            steps.push(BcdStep {
                cycle,
                node: dag.node(v).id.clone(),
                accepted: step > 0.0,
                step,
                before,
                after: current,
            });
        }
        info!("deep regularizer after cycle {cycle}: {current:.6e}");
        history.push(current);
        let moved = steps
            .iter()
            .rev()
            .take(blocks.len())
            .any(|s: &BcdStep| s.accepted);
        if !moved && opts.stop_on_stagnation {
            info!("no block moved in cycle {cycle}; stopping");
            break;
        }
    }
    Ok(BcdResult {
        gfunction: gf,
        history,
        steps,
    })
}

/// Grid maximum of `sum_i |d f / d theta_i|` for a black-box target, by
/// central differences.
pub fn seminorm_proxy<F: Fn(&[f64]) -> f64 + Sync>(
    f: F,
    d: usize,
    n_per_axis: usize,
    even: bool,
) -> Vec<f64> {
    let kind = if even {
        BasisKind::Even
    } else {
        BasisKind::Full
    };
    let grid = derivative_grid(d, n_per_axis, kind);
    let step = 1e-5;
    (0..d)
        .map(|a| {
            grid.par_iter()
                .map(|x| {
                    let mut p = x.clone();
                    let mut m = x.clone();
                    p[a] += step;
                    m[a] -= step;
                    ((f(&p) - f(&m)) / (2.0 * step)).abs()
                })
                .reduce(|| 0.0, f64::max)
        })
        .collect()
}

/// Grid proxies of `||f_v||` for every node's truth target, in the
/// coordinates its fit lives in (angles for internal nodes).
pub fn truth_seminorms(
    truth: &GFunction,
    prop: &Propagated,
    n_per_axis: usize,
) -> Result<Vec<f64>> {
    let dag = &truth.dag;
    (0..dag.len())
        .map(|i| {
            let target = truth.node_target(i, &prop.range_maps)?;
            Ok(
                seminorm_proxy(target, dag.arity(i), n_per_axis, !dag.is_source(i))
                    .iter()
                    .sum(),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropagationReport {
    /// measured sup error of the composed fit over the probes
    pub sink_error: f64,
    /// `B_{v*}` of the recursion `B_v = e_v + sum_i L_{v,i} B_{child_i}`
    pub bound: f64,
    /// per node: grid error in the node's output angle (raw for the sink)
    pub node_errors: Vec<f64>,
    /// per node and argument: grid max of the partial derivative of the
    /// node's angle-valued truth target
    pub lipschitz: Vec<Vec<f64>>,
}

impl PropagationReport {
    pub fn holds(&self) -> bool {
        self.sink_error <= self.bound
    }
}

/// Checks the error-propagation inequality: node-wise grid errors combined
/// through measured Lipschitz proxies must dominate the composed error.
pub fn propagation_check(
    truth: &GFunction,
    fit: &DeepFit,
    probes: &[Vec<f64>],
    n_per_axis: usize,
) -> Result<PropagationReport> {
    let dag = &truth.dag;
    let maps = &fit.propagated.range_maps;
    let mut node_errors = vec![0.0; dag.len()];
    let mut lipschitz = vec![Vec::new(); dag.len()];
    for i in 0..dag.len() {
        let d = dag.arity(i);
        let target = truth.node_target(i, maps)?;
        let t = fit.gfunction.polynomial(i).expect("fitted");
        let out_map = |v: f64| match maps[i] {
            Some(m) => m.to_angle(v),
            None => v,
        };
        let kind = dag.basis_kind(i);
        let grid = derivative_grid(d, n_per_axis, kind);
        node_errors[i] = grid
            .par_iter()
            .map(|x| (out_map(target(x)) - out_map(t.eval_coords(x))).abs())
            .reduce(|| 0.0, f64::max);
        if !dag.is_source(i) {
            lipschitz[i] = seminorm_proxy(
                |x| out_map(target(x)),
                d,
                n_per_axis,
                kind == BasisKind::Even,
            );
        }
    }
    let mut bound = vec![0.0; dag.len()];
    for &i in dag.topo_order() {
        bound[i] = node_errors[i]
            + dag
                .children(i)
                .iter()
                .zip(&lipschitz[i])
                .map(|(&c, l)| l * bound[c])
                .sum::<f64>();
    }
    let sink_error = probes
        .par_iter()
        .map(|x| Ok((compose_eval(truth, x)? - compose_eval(&fit.gfunction, x)?).abs()))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(PropagationReport {
        sink_error,
        bound: bound[dag.sink()],
        node_errors,
        lipschitz,
    })
}

/// Two-level test function on `T^4`: `f(g1(x1, x2), g2(x3, x4))` with
/// `g1 = exp((cos a + cos b) / 2)`, `g2 = cos c cos d` and
/// `f(u, w) = sin(u + w) + u w / 2`.
pub fn testbed_q4() -> GFunction {
    let dag = DagSpec::new(vec![
        NodeSpec {
            id: "g1".into(),
            children: vec![],
            inputs: vec![0, 1],
        },
        NodeSpec {
            id: "g2".into(),
            children: vec![],
            inputs: vec![2, 3],
        },
        NodeSpec {
            id: "f".into(),
            children: vec!["g1".into(), "g2".into()],
            inputs: vec![],
        },
    ])
    .expect("static DAG is valid");
    let g1: NodeFn = Arc::new(|x: &[f64]| (0.5 * (x[0].cos() + x[1].cos())).exp());
    let g2: NodeFn = Arc::new(|x: &[f64]| x[0].cos() * x[1].cos());
    let f: NodeFn = Arc::new(|x: &[f64]| (x[0] + x[1]).sin() + 0.5 * x[0] * x[1]);
    GFunction::truth(dag, vec![g1, g2, f]).expect("arities match")
}

/// `m` distinct points of the product lattice `{-pi + pi i / 2}^4`, drawn
/// without replacement, with sink values perturbed by uniform noise in
/// `[-noise, noise]`. On this lattice `g1` takes five values and `g2` three,
/// so the sink sees at most 15 distinct points.
pub fn testbed_samples(gf: &GFunction, m: usize, noise: f64, seed: u64) -> Result<Samples> {
    const PER_AXIS: usize = 4;
    let total = PER_AXIS.pow(4);
    if m > total {
        return Err(Error::InvalidInput(format!(
            "at most {total} lattice points are available, asked for {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, total, m).into_vec();
    picks.sort_unstable();
    let node =
        |i: usize| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / PER_AXIS as f64;
    let points: Vec<TorusPoint> = picks
        .iter()
        .map(|&p| {
            TorusPoint::new(
                (0..4)
                    .map(|a| node(p / PER_AXIS.pow(a) % PER_AXIS))
                    .collect(),
            )
        })
        .collect::<Result<_>>()?;
    let values = points
        .iter()
        .map(|p| {
            let e = if noise > 0.0 {
                rng.gen_range(-noise..=noise)
            } else {
                0.0
            };
            Ok(compose_eval(gf, p.coords())? + e)
        })
        .collect::<Result<Vec<_>>>()?;
    if noise > 0.0 {
        warn!("noisy sink values on the lattice testbed make repeated sink points inconsistent");
    }
    Samples::new(points, values, noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn chain() -> GFunction {
        let dag = DagSpec::new(vec![
            NodeSpec {
                id: "a".into(),
                children: vec![],
                inputs: vec![0],
            },
            NodeSpec {
                id: "b".into(),
                children: vec!["a".into()],
                inputs: vec![],
            },
        ])
        .unwrap();
        GFunction::truth(
            dag,
            vec![
                Arc::new(|x: &[f64]| x[0].sin()),
                Arc::new(|x: &[f64]| 2.0 * x[0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn validation_rejects_bad_graphs() {
        let n = |id: &str, ch: &[&str], inp: &[usize]| NodeSpec {
            id: id.into(),
            children: ch.iter().map(|s| s.to_string()).collect(),
            inputs: inp.to_vec(),
        };
        assert!(DagSpec::new(vec![n("a", &["b"], &[]), n("b", &["a"], &[])]).is_err());
        assert!(DagSpec::new(vec![n("a", &[], &[0]), n("b", &[], &[1])]).is_err());
        assert!(DagSpec::new(vec![n("a", &[], &[0]), n("a", &["a"], &[])]).is_err());
        assert!(DagSpec::new(vec![n("a", &[], &[1])]).is_err());
        assert!(DagSpec::new(vec![n("a", &["x"], &[])]).is_err());
        let ok = DagSpec::new(vec![
            n("s", &["a", "b"], &[]),
            n("a", &[], &[0, 1]),
            n("b", &[], &[2, 2]),
        ])
        .unwrap();
        assert_eq!(ok.q(), 3);
        assert_eq!(ok.sink(), 0);
        assert_eq!(ok.level(0), 1);
        assert_eq!(ok.topo_order(), &[1, 2, 0]);
        assert_eq!(ok.arity(2), 2);
        assert_eq!(ok.edges(), vec![(1, 0), (2, 0)]);
    }

    #[test]
    fn dag_documents_round_trip() {
        let toml_doc = r#"
            [[nodes]]
            id = "g1"
            inputs = [0, 1]
            [[nodes]]
            id = "g2"
            inputs = [2, 3]
            [[nodes]]
            id = "f"
            children = ["g1", "g2"]
        "#;
        let d = DagSpec::from_toml(toml_doc).unwrap();
        assert_eq!(d.q(), 4);
        let j = serde_json::to_string(&d).unwrap();
        let back = DagSpec::from_json(&j).unwrap();
        assert_eq!(back.topo_order(), d.topo_order());
        assert!(DagSpec::from_json(r#"{"nodes":[{"id":"a","children":["a"]}]}"#).is_err());
    }

    #[test]
    fn range_map_round_trip() {
        let m = RangeMap::from_values(&[-2.0, 0.5, 3.0]);
        assert!((m.normalize(-2.0) + 0.9).abs() < 1e-15);
        assert!((m.normalize(3.0) - 0.9).abs() < 1e-15);
        for v in [-2.0, -1.0, 0.3, 3.0] {
            assert!((m.from_angle(m.to_angle(v)) - v).abs() < 1e-12);
        }
        let h = 1e-6;
        let fd = (m.to_angle(0.3 + h) - m.to_angle(0.3 - h)) / (2.0 * h);
        assert!((fd - m.angle_derivative(0.3)).abs() < 1e-6);
        assert_eq!(m.to_angle(100.0), 0.0);
        assert_eq!(m.angle_derivative(100.0), 0.0);
    }

    #[test]
    fn composition_matches_hand_written_formula() {
        let gf = testbed_q4();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-PI..PI)).collect();
            let u = (0.5 * (x[0].cos() + x[1].cos())).exp();
            let w = x[2].cos() * x[3].cos();
            let direct = (u + w).sin() + 0.5 * u * w;
            assert!((compose_eval(&gf, &x).unwrap() - direct).abs() < 1e-14);
        }
        let g = chain();
        assert!((compose_eval(&g, &[0.7]).unwrap() - 2.0 * 0.7f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn constant_constituents_give_constants() {
        let dag = testbed_q4().dag().clone();
        let c: NodeFn = Arc::new(|_: &[f64]| 1.5);
        let gf = GFunction::truth(dag, vec![c.clone(), c.clone(), c]).unwrap();
        assert_eq!(compose_eval(&gf, &[0.1, 0.2, 0.3, 0.4]).unwrap(), 1.5);
        let xs = [vec![0.1, 0.2, 0.3, 0.4], vec![1.0, -1.0, 2.0, 0.0]];
        let s = Samples::new(
            xs.iter()
                .map(|x| TorusPoint::new(x.clone()).unwrap())
                .collect(),
            vec![1.5, 1.5],
            0.0,
        )
        .unwrap();
        let p = propagate_training_sets(&gf, &s).unwrap();
        assert_eq!(p.sets[2].len(), 1);
        assert_eq!(p.sets[0].len(), 2);
    }

    #[test]
    fn nan_is_reported_with_the_node() {
        let dag = DagSpec::single(1).unwrap();
        let gf = GFunction::truth(dag, vec![Arc::new(|_: &[f64]| f64::NAN)]).unwrap();
        match compose_eval(&gf, &[0.0]) {
            Err(Error::Node { node, .. }) => assert_eq!(node, "f"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn propagated_sets_follow_the_children() {
        let gf = testbed_q4();
        let s = testbed_samples(&gf, 60, 0.0, 1).unwrap();
        let p = propagate_training_sets(&gf, &s).unwrap();
        // sources: plain coordinate slices, collapsed
        let mut slices: Vec<Vec<f64>> = s.points.iter().map(|x| x.coords()[..2].to_vec()).collect();
        slices.sort_by(|a, b| a.partial_cmp(b).unwrap());
        slices.dedup();
        assert_eq!(p.sets[0].len(), slices.len());
        // sink points are the children's angles
        let m1 = p.range_maps[0].unwrap();
        let m2 = p.range_maps[1].unwrap();
        for x in &s.points {
            let c = x.coords();
            let th = [
                m1.to_angle((0.5 * (c[0].cos() + c[1].cos())).exp()),
                m2.to_angle(c[2].cos() * c[3].cos()),
            ];
            assert!(p.sets[2]
                .points()
                .iter()
                .any(|q| dist_unchecked(q.coords(), &th) < 1e-9));
        }
        assert!(p.sets[2].len() <= 15);
    }

    #[test]
    fn conflicting_values_are_rejected() {
        let gf = testbed_q4();
        let mut s = testbed_samples(&gf, 30, 0.0, 2).unwrap();
        let p0 = s.points[0].clone();
        s.points.push(p0);
        s.values.push(s.values[0] + 1.0);
        assert!(matches!(
            propagate_training_sets(&gf, &s),
            Err(Error::Node { .. })
        ));
    }

    #[test]
    fn depth_zero_fit_is_the_shallow_fit() {
        let gf = GFunction::truth(
            DagSpec::single(1).unwrap(),
            vec![Arc::new(|x: &[f64]| x[0].cos().abs())],
        )
        .unwrap();
        let xs: Vec<f64> = (0..32).map(|j| -PI + 2.0 * PI * j as f64 / 32.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.cos().abs()).collect();
        let data = Dataset::from_angles(&xs, &ys, 0.0).unwrap();
        let fit = deep_blended_fit(&gf, &Samples::from(&data), &[32.0]).unwrap();
        let table = fourier_dft(|x| x[0].cos().abs(), 1, 16.0, default_dft_grid(1, 16.0)).unwrap();
        let shallow = crate::shallow::blended_fit(&data, &table, 16.0, 32.0).unwrap();
        let a = fit.gfunction.polynomial(0).unwrap();
        let b = &shallow.combined;
        assert_eq!(a.num_terms(), b.num_terms());
        for (k, c) in a.terms() {
            let d = b.coeff(k);
            assert!((c.a - d.a).abs() < 1e-12 && (c.b - d.b).abs() < 1e-12);
        }
        let r = deep_regularizer(&fit.gfunction, &Samples::from(&data), &[32.0]).unwrap();
        let s = crate::minimax::evaluate_regularizer(b, &data, 32.0).unwrap();
        assert!((r.total - s.0).abs() < 1e-12);
    }

    #[test]
    fn low_degree_is_rejected_with_the_needed_degree() {
        let gf = testbed_q4();
        let s = testbed_samples(&gf, 40, 0.0, 3).unwrap();
        match deep_blended_fit(&gf, &s, &[1.0, 1.0, 1.0]) {
            Err(Error::Node { message, .. }) => assert!(message.contains("need at least")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bundle_round_trip() {
        let gf = testbed_q4();
        let s = testbed_samples(&gf, 40, 0.0, 5).unwrap();
        let deg = default_degrees(&gf, &s).unwrap();
        let fit = deep_blended_fit(&gf, &s, &deg).unwrap();
        let json = serde_json::to_string(&fit.gfunction.to_bundle().unwrap()).unwrap();
        let back = GFunction::from_bundle(serde_json::from_str(&json).unwrap()).unwrap();
        let x = [0.3, -0.2, 1.1, 2.0];
        assert_eq!(
            compose_eval(&back, &x).unwrap(),
            compose_eval(&fit.gfunction, &x).unwrap()
        );
    }

    #[test]
    fn duplicate_points_change_nothing() {
        let gf = testbed_q4();
        let s = testbed_samples(&gf, 40, 0.0, 11).unwrap();
        let mut dup = s.clone();
        dup.points.push(s.points[3].clone());
        dup.values.push(s.values[3]);
        let deg = default_degrees(&gf, &s).unwrap();
        assert_eq!(deg, default_degrees(&gf, &dup).unwrap());
        let a = deep_blended_fit(&gf, &s, &deg).unwrap();
        let b = deep_blended_fit(&gf, &dup, &deg).unwrap();
        for i in 0..3 {
            assert_eq!(a.propagated.sets[i].points(), b.propagated.sets[i].points());
            let (ta, tb) = (
                a.gfunction.polynomial(i).unwrap(),
                b.gfunction.polynomial(i).unwrap(),
            );
            assert_eq!(ta.num_terms(), tb.num_terms());
            for (k, c) in ta.terms() {
                let d = tb.coeff(k);
                assert!((c.a - d.a).abs() < 1e-12 && (c.b - d.b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn depth_zero_descent_is_the_shallow_solve() {
        let gf = GFunction::truth(
            DagSpec::single(1).unwrap(),
            vec![Arc::new(|x: &[f64]| x[0].cos().abs())],
        )
        .unwrap();
        let xs: Vec<f64> = (0..24)
            .map(|j| -PI + 2.0 * PI * (j as f64 + 0.3) / 24.0)
            .collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.cos().abs()).collect();
        let data = Dataset::from_angles(&xs, &ys, 0.0).unwrap();
        let samples = Samples::from(&data);
        let fit = deep_blended_fit(&gf, &samples, &[24.0]).unwrap();
        let bcd =
            minimize_deep_regularizer(&samples, &fit.gfunction, &[24.0], BcdOptions::default())
                .unwrap();
        let shallow = crate::minimax::solve_regularization(
            &crate::minimax::RegProblem::new(data, 24.0).unwrap(),
        )
        .unwrap();
        let (a, b) = (bcd.gfunction.polynomial(0).unwrap(), &shallow.polynomial);
        for (k, _) in a.terms().chain(b.terms()) {
            let (u, v) = (a.coeff(k), b.coeff(k));
            assert!(
                (u.a - v.a).abs() < 1e-12 && (u.b - v.b).abs() < 1e-12,
                "{k:?}"
            );
        }
        assert!((bcd.history.last().unwrap() - shallow.objective_value).abs() < 1e-12);
    }

    #[test]
    fn testbed_fit_interpolates_and_descent_is_monotone() {
        let gf = testbed_q4();
        let s = testbed_samples(&gf, 120, 0.0, 21).unwrap();
        let deg = default_degrees(&gf, &s).unwrap();
        let fit = deep_blended_fit(&gf, &s, &deg).unwrap();
        assert!(fit.sink_residual_max < 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let probes: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..4).map(|_| rng.gen_range(-PI..PI)).collect())
            .collect();
        assert!(propagation_check(&gf, &fit, &probes, 32).unwrap().holds());
        let opts = BcdOptions {
            cycles: 2,
            ..Default::default()
        };
        let bcd = minimize_deep_regularizer(&s, &fit.gfunction, &deg, opts).unwrap();
        assert!(bcd.history.windows(2).all(|w| w[1] <= w[0]));
    }
}
