//! A C¹ Anosov diffeomorphism of the 2-torus with a semi-thick Bowen horseshoe.
//!
//! The map is a power of the cat map `[[2,1],[1,1]]` modified inside a small
//! rectangle so that it carries a horseshoe whose unstable Cantor set has
//! positive length. The crate builds the map, verifies its hyperbolicity and
//! horseshoe structure on dense samples, and provides orbit, basin, stripe and
//! perturbation experiments on top of it.

pub mod anosov;
pub mod artifact;
pub mod bowen;
pub mod cantor;
pub mod dynamics;
pub mod error;
pub mod horseshoe;
pub mod linear;
pub mod perturb;
pub mod report;
pub mod roots;
pub mod statistics;
pub mod stripes;
pub mod torus;
pub mod verify;

pub use error::{Error, Result};
pub use linear::{
    apply_linear, apply_linear_inverse, dense_line_near_point, epsilon_net_radius, fixed_points,
    fixed_points_exact, make_linear_model, Direction, FixedPoint, LinearModel,
};
pub use torus::{LocalChart, TorusPoint};
