//! Statistics for set-valued random variables.
//!
//! Compact convex sets in R^1 and R^2 are handled through their support
//! functions on a fixed direction grid. On top of that representation the
//! crate provides Fréchet (Minkowski) means, global Fréchet regression with
//! set-valued outcomes, inverse-probability-weighted means under missing
//! data, and Monte Carlo harnesses for the convergence rates of those
//! estimators.

pub mod cone;
pub mod error;
pub mod frechet;
pub mod geometry;
pub mod io;
pub mod missing;
pub mod simulate;

pub use cone::{is_support_vector, project_to_cone, reconstruct, ConeDescription};
pub use error::{Error, Result};
pub use geometry::{
    dkc_distance, hausdorff_distance, is_subset, minkowski_combine, support_eval,
    to_support_vector, ConvexBody, Point, Polygon, Shape, SphereGrid, SupportVector,
};
