//! Localized trigonometric approximation on the torus: kernels, blended
//! interpolation, sup-norm regularization by linear programming, periodic
//! networks and compositional fits on DAGs.

pub mod cutoff;
pub mod dag;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod linalg;
pub mod lp;
pub mod minimax;
pub mod net;
pub mod plot;
pub mod selfcheck;
pub mod shallow;
pub mod torus;
pub mod trig_poly;

pub use error::{Error, ErrorKind, Result};
pub use torus::{make_grid, min_separation, torus_dist, Dataset, TorusGrid, TorusPoint};
pub use trig_poly::{MultiIndex, TrigPoly};
