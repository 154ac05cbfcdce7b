//! Points on the q-dimensional torus, training datasets and the structural
//! quantities (minimal separation, noise level) every fit is conditioned on.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Reduces an angle to the canonical representative in `[-pi, pi)`.
pub fn reduce_angle(theta: f64) -> f64 {
    let r = theta - TWO_PI * ((theta + PI) / TWO_PI).floor();
    if r >= PI {
        r - TWO_PI
    } else if r < -PI {
        r + TWO_PI
    } else {
        r
    }
}

/// Shorter arc length between two angles, in `[0, pi]`.
pub fn arc_dist(a: f64, b: f64) -> f64 {
    reduce_angle(a - b).abs()
}

/// A point of the torus with every coordinate reduced to `[-pi, pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("torus point needs q >= 1".into()));
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite coordinate {c}")));
        }
        Ok(Self {
            coords: coords.into_iter().map(reduce_angle).collect(),
        })
    }

    pub fn scalar(theta: f64) -> Result<Self> {
        Self::new(vec![theta])
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// `self - other`, reduced.
    pub fn sub(&self, other: &TorusPoint) -> Result<TorusPoint> {
        check_dims(self.dim(), other.dim())?;
        Ok(TorusPoint {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| reduce_angle(a - b))
                .collect(),
        })
    }
}

impl TryFrom<Vec<f64>> for TorusPoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        TorusPoint::new(v)
    }
}

impl From<TorusPoint> for Vec<f64> {
    fn from(p: TorusPoint) -> Self {
        p.coords
    }
}

pub(crate) fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Max-coordinate periodic distance `max_i |(a_i - b_i) mod 2pi|`.
pub fn torus_dist(a: &TorusPoint, b: &TorusPoint) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(dist_unchecked(a.coords(), b.coords()))
}

pub(crate) fn dist_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| arc_dist(*x, *y))
        .fold(0.0, f64::max)
}

/// Minimal separation of a point set over all unordered distinct pairs.
pub fn min_separation(points: &[TorusPoint]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidInput(
            "minimal separation needs at least two points".into(),
        ));
    }
    let q = points[0].dim();
    let mut best = f64::INFINITY;
    for (i, a) in points.iter().enumerate() {
        check_dims(q, a.dim())?;
        for (j, b) in points.iter().enumerate().skip(i + 1) {
            let d = dist_unchecked(a.coords(), b.coords());
            if d == 0.0 {
                return Err(Error::CoincidentPoints(i, j));
            }
            best = best.min(d);
        }
    }
    Ok(best)
}

/// Equispaced product grid `{2 pi m / n}^q` in row-major order.
#[derive(Debug, Clone)]
pub struct TorusGrid {
    q: usize,
    n_per_axis: usize,
    points: Vec<TorusPoint>,
}

impl TorusGrid {
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n_per_axis(&self) -> usize {
        self.n_per_axis
    }

    pub fn points(&self) -> &[TorusPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn make_grid(q: usize, n_per_axis: usize) -> Result<TorusGrid> {
    if q == 0 || n_per_axis == 0 {
        return Err(Error::InvalidInput(format!(
            "grid needs q >= 1 and n_per_axis >= 1 (got {q}, {n_per_axis})"
        )));
    }
    let total = n_per_axis
        .checked_pow(q as u32)
        .ok_or_else(|| Error::InvalidInput("grid too large".into()))?;
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![0usize; q];
    for _ in 0..total {
        let coords = idx
            .iter()
            .map(|&m| reduce_angle(TWO_PI * m as f64 / n_per_axis as f64))
            .collect();
        points.push(TorusPoint { coords });
        // row-major: last axis fastest
        for axis in (0..q).rev() {
            idx[axis] += 1;
            if idx[axis] < n_per_axis {
                break;
            }
            idx[axis] = 0;
        }
    }
    Ok(TorusGrid {
        q,
        n_per_axis,
        points,
    })
}

/// Equispaced points on `[-pi, pi)`, the layout used for error profiles.
pub fn profile_grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| -PI + TWO_PI * j as f64 / n as f64).collect()
}

/// Training pairs `(x_j, y_j)` with a declared noise level.
#[derive(Debug, Clone)]
pub struct Dataset {
    points: Vec<TorusPoint>,
    values: Vec<f64>,
    noise_level: f64,
    cached_min_sep: Option<f64>,
}

impl Dataset {
    pub fn new(points: Vec<TorusPoint>, values: Vec<f64>, noise_level: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput(
                "dataset needs at least one sample".into(),
            ));
        }
        if points.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        if !(noise_level >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise level must be nonnegative, got {noise_level}"
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value {v}")));
        }
        let q = points[0].dim();
        for p in &points {
            check_dims(q, p.dim())?;
        }
        let cached_min_sep = if points.len() >= 2 {
            Some(min_separation(&points)?)
        } else {
            None
        };
        Ok(Self {
            points,
            values,
            noise_level,
            cached_min_sep,
        })
    }

    /// Univariate convenience constructor.
    pub fn from_angles(xs: &[f64], ys: &[f64], noise_level: f64) -> Result<Self> {
        let pts = xs
            .iter()
            .map(|&x| TorusPoint::scalar(x))
            .collect::<Result<Vec<_>>>()?;
        Self::new(pts, ys.to_vec(), noise_level)
    }

    pub fn q(&self) -> usize {
        self.points[0].dim()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[TorusPoint] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn noise_level(&self) -> f64 {
        self.noise_level
    }

    /// Minimal separation; `None` for a single sample.
    pub fn min_sep(&self) -> Option<f64> {
        self.cached_min_sep
    }

    pub fn max_abs_value(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `M * eta^q`; bounded by a geometry constant for well-spread data.
    pub fn packing_ratio(&self) -> Option<f64> {
        self.cached_min_sep
            .map(|eta| self.len() as f64 * eta.powi(self.q() as i32))
    }

    /// Distance from `x` to the nearest training point.
    pub fn nearest_distance(&self, x: &TorusPoint) -> Result<f64> {
        check_dims(self.q(), x.dim())?;
        Ok(self
            .points
            .iter()
            .map(|p| dist_unchecked(p.coords(), x.coords()))
            .fold(f64::INFINITY, f64::min))
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::InvalidInput("value count mismatch".into()));
        }
        Ok(Self {
            points: self.points.clone(),
            values,
            noise_level: self.noise_level,
            cached_min_sep: self.cached_min_sep,
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let q = self.q();
        let mut header: Vec<String> = (1..=q).map(|i| format!("x{i}")).collect();
        header.push("y".into());
        wr.write_record(&header)?;
        for (p, y) in self.points.iter().zip(&self.values) {
            let mut rec: Vec<String> = p.coords().iter().map(|c| c.to_string()).collect();
            rec.push(y.to_string());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads `x1,...,xq,y` rows; the noise level is not part of the file.
    pub fn read_csv<R: Read>(r: R, noise_level: f64) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        let ncols = headers.len();
        if ncols < 2 || headers.get(ncols - 1) != Some("y") {
            return Err(Error::InvalidInput(
                "dataset CSV header must be x1,...,xq,y".into(),
            ));
        }
        for (i, h) in headers.iter().take(ncols - 1).enumerate() {
            if h != format!("x{}", i + 1) {
                return Err(Error::InvalidInput(format!(
                    "unexpected column `{h}`, expected x{}",
                    i + 1
                )));
            }
        }
        let mut points = Vec::new();
        let mut values = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let nums = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidInput(format!("bad number `{s}`: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if nums.len() != ncols {
                return Err(Error::InvalidInput("ragged CSV row".into()));
            }
            values.push(nums[ncols - 1]);
            points.push(TorusPoint::new(nums[..ncols - 1].to_vec())?);
        }
        Self::new(points, values, noise_level)
    }
}
