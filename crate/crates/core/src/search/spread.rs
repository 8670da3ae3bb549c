use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::context::ContextSet;
use crate::metric::squared_distance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Summary of the retrieved context sets, on unscaled coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSpread {
    pub sets: usize,
    pub points: usize,
    /// Pooled statistics of `[x, y, vx, vy]` over all retrieved points.
    pub axes: [AxisStats; 4],
    /// Largest `|Δ|` per axis between a retrieved point and the query point
    /// it lies closest to (in the scaled metric).
    pub max_abs_deviation: [f64; 4],
    /// Number of retrieved sets per set size.
    pub cardinality: BTreeMap<usize, usize>,
}

/// Spread of `retrieved` around `query`. `retrieved` must be non-empty.
pub fn spread_report(query: &ContextSet, retrieved: &[ContextSet]) -> ContextSpread {
    let mut cardinality = BTreeMap::new();
    let mut lo = [f64::INFINITY; 4];
    let mut hi = [f64::NEG_INFINITY; 4];
    let mut sum = [0.0; 4];
    let mut dev = [0.0f64; 4];
    let mut points = 0;
    for set in retrieved {
        *cardinality.entry(set.points.len()).or_insert(0) += 1;
        for p in &set.points {
            points += 1;
            let u = p.unscaled();
            for k in 0..4 {
                lo[k] = lo[k].min(u[k]);
                hi[k] = hi[k].max(u[k]);
                sum[k] += u[k];
            }
            let c = p.coords();
            let nearest = query
                .points
                .iter()
                .min_by(|a, b| {
                    squared_distance(&a.coords(), &c).total_cmp(&squared_distance(&b.coords(), &c))
                })
                .expect("query set is non-empty");
            let q = nearest.unscaled();
            for k in 0..4 {
                dev[k] = dev[k].max((u[k] - q[k]).abs());
            }
        }
    }
    let n = points.max(1) as f64;
    let axes = std::array::from_fn(|k| AxisStats {
        min: lo[k],
        max: hi[k],
        mean: sum[k] / n,
    });
    ContextSpread {
        sets: retrieved.len(),
        points,
        axes,
        max_abs_deviation: dev,
        cardinality,
    }
}
