//! Trimmed spline surfaces that blend a base surface with reparametrized
//! boundary ribbons.

pub mod abc;
pub mod arith;
pub mod bezier;
pub mod diffgeo;
pub mod error;
pub mod export;
pub mod fit;
pub mod jet;
pub mod knots;
pub mod linalg;
pub mod scene;
pub mod spline;
pub mod trim;
pub mod weights;

pub use error::{AbcError, Result};
