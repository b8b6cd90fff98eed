//! Conversion of a blend into trimmed rational patches and file emission.

pub mod extract;
pub mod format;
pub mod levelset;
pub mod partition;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::abc::AbcSurface;
use crate::error::Result;
use crate::trim::point_in_polygon;
pub use extract::{extract_all, extract_rational, max_degree, merged_grid, pieces, Piece, RationalPatch};
pub use format::{emit, read_doc, write_doc, write_obj, ExportDoc};
pub use levelset::{critical_levelset, span_constraints, straightening_constraints, LevelSegment};
pub use partition::{partition, partition_with, Cell, CellKind, DomainPartition, EdgeKind, PartitionOptions};

/// How the boundary of each patch is described in the exchange file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrimMode {
    /// Planar polylines in the patch parameters.
    Parametric,
    /// Boundary arcs as ranges of the spatial curves `c_ℓ(u) = r_ℓ(u, 0)`.
    Geometric,
    /// Spatial on even segments, planar on odd ones.
    Hybrid,
}

impl TrimMode {
    pub fn parse(s: &str) -> Option<TrimMode> {
        match s.to_ascii_lowercase().as_str() {
            "parametric" => Some(TrimMode::Parametric),
            "geometric" => Some(TrimMode::Geometric),
            "hybrid" => Some(TrimMode::Hybrid),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TrimMode::Parametric => "parametric",
            TrimMode::Geometric => "geometric",
            TrimMode::Hybrid => "hybrid",
        }
    }

    /// Whether boundary arcs of segment `l` are written as spatial curves.
    pub fn spatial(self, l: usize) -> bool {
        match self {
            TrimMode::Parametric => false,
            TrimMode::Geometric => true,
            TrimMode::Hybrid => l % 2 == 0,
        }
    }
}

/// Agreement of extracted patches with direct evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchCheck {
    pub samples: usize,
    /// `max |patch − a| / max(1, |a|)`.
    pub max_relative_error: f64,
    pub min_denominator: f64,
}

/// Uniform random points inside `poly`, by rejection from its bounding box.
pub fn random_interior_points(poly: &[[f64; 2]], n: usize, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    let (lo, hi) = partition::bbox(poly);
    let mut out = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n && tries < 1000 * n {
        tries += 1;
        let x = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
        if point_in_polygon(poly, x) {
            out.push(x);
        }
    }
    out
}

/// Compares every patch with `a` at `samples` random interior points.
pub fn check_patches(a: &AbcSurface, patches: &[RationalPatch], samples: usize, seed: u64) -> Result<PatchCheck> {
    let mut worst = 0.0f64;
    let mut min_den = f64::INFINITY;
    let mut count = 0;
    for (i, p) in patches.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        for s in random_interior_points(&p.polygon, samples, &mut rng) {
            let exact = a.eval(s)?;
            let err = (p.eval(s) - exact).norm() / exact.norm().max(1.0);
            worst = worst.max(err);
            min_den = min_den.min(p.denominator.eval(s));
            count += 1;
        }
    }
    Ok(PatchCheck {
        samples: count,
        max_relative_error: worst,
        min_denominator: min_den,
    })
}
