//! Hausdorff distance between context sets.
//!
//! Point-pair distances are Euclidean over `[x, λy, vx, λvy]`. The squared
//! terms are always accumulated in field order and the square root is taken
//! last, so every kernel here produces bit-identical values.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{ContextPoint, ContextSet};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("cannot compare an empty context set")]
    EmptySet,
    #[error("lateral scales differ: {0} vs {1}")]
    LambdaMismatch(f64, f64),
}

/// A non-negative, finite distance. Ordered totally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Distance(f64);

impl Distance {
    pub const ZERO: Distance = Distance(0.0);
    pub const INFINITY: Distance = Distance(f64::INFINITY);

    /// Panics on negative or NaN input.
    pub fn new(value: f64) -> Self {
        assert!(value >= 0.0, "distance must be non-negative, got {value}");
        Distance(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Eq for Distance {}

impl PartialOrd for Distance {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Distance {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Anything with distance coordinates.
pub trait Point4 {
    fn coords(&self) -> [f64; 4];
}

impl Point4 for [f64; 4] {
    #[inline]
    fn coords(&self) -> [f64; 4] {
        *self
    }
}

impl Point4 for ContextPoint {
    #[inline]
    fn coords(&self) -> [f64; 4] {
        ContextPoint::coords(self)
    }
}

#[inline]
pub fn squared_distance(p: &[f64; 4], q: &[f64; 4]) -> f64 {
    let d0 = p[0] - q[0];
    let d1 = p[1] - q[1];
    let d2 = p[2] - q[2];
    let d3 = p[3] - q[3];
    d0 * d0 + d1 * d1 + d2 * d2 + d3 * d3
}

/// Raw kernels over point slices. Callers guarantee non-empty inputs.
pub mod kernel {
    use super::{squared_distance, Point4};

    /// Plain max-of-min double loop.
    pub fn directed_reference<P: Point4>(a: &[P], b: &[P]) -> f64 {
        let mut worst = 0.0f64;
        for p in a {
            let p = p.coords();
            let mut best = f64::INFINITY;
            for q in b {
                let d = squared_distance(&p, &q.coords());
                if d < best {
                    best = d;
                }
            }
            if best > worst {
                worst = best;
            }
        }
        worst.sqrt()
    }

    /// Max-of-min over squared distances seeded with `worst_sq`.
    ///
    /// An outer point is abandoned as soon as one inner distance falls below
    /// the running maximum, since its minimum can no longer raise it. Returns
    /// `None` once the running maximum exceeds `cutoff`.
    #[inline]
    fn scan<P: Point4>(a: &[P], b: &[P], mut worst_sq: f64, cutoff: f64) -> Option<f64> {
        'outer: for p in a {
            let p = p.coords();
            let mut best = f64::INFINITY;
            for q in b {
                let d = squared_distance(&p, &q.coords());
                if d < worst_sq {
                    continue 'outer;
                }
                if d < best {
                    best = d;
                }
            }
            // best >= worst_sq here
            worst_sq = best;
            if worst_sq.sqrt() > cutoff {
                return None;
            }
        }
        Some(worst_sq)
    }

    pub fn directed<P: Point4>(a: &[P], b: &[P]) -> f64 {
        scan(a, b, 0.0, f64::INFINITY)
            .expect("infinite cutoff")
            .sqrt()
    }

    pub fn hausdorff<P: Point4>(a: &[P], b: &[P]) -> f64 {
        bounded(a, b, f64::INFINITY).expect("infinite cutoff")
    }

    /// Exact Hausdorff distance if it is `<= cutoff`, else `None`.
    pub fn bounded<P: Point4>(a: &[P], b: &[P], cutoff: f64) -> Option<f64> {
        let w = scan(a, b, 0.0, cutoff)?;
        let w = scan(b, a, w, cutoff)?;
        Some(w.sqrt())
    }
}

fn check(a: &ContextSet, b: &ContextSet) -> Result<(), MetricError> {
    if a.points.is_empty() || b.points.is_empty() {
        return Err(MetricError::EmptySet);
    }
    if a.lambda != b.lambda {
        return Err(MetricError::LambdaMismatch(a.lambda, b.lambda));
    }
    Ok(())
}

/// `max_{p in a} min_{q in b} ‖p − q‖`.
pub fn directed_hausdorff(a: &ContextSet, b: &ContextSet) -> Result<Distance, MetricError> {
    check(a, b)?;
    Ok(Distance(kernel::directed(&a.points, &b.points)))
}

/// Symmetric Hausdorff distance; the sets may differ in size.
pub fn hausdorff(a: &ContextSet, b: &ContextSet) -> Result<Distance, MetricError> {
    check(a, b)?;
    Ok(Distance(kernel::hausdorff(&a.points, &b.points)))
}

/// The exact distance when it does not exceed `cutoff`, otherwise `None`.
pub fn hausdorff_bounded(
    a: &ContextSet,
    b: &ContextSet,
    cutoff: Distance,
) -> Result<Option<Distance>, MetricError> {
    check(a, b)?;
    Ok(kernel::bounded(&a.points, &b.points, cutoff.0).map(Distance))
}
