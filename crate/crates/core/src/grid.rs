//! Deterministic sampling grids: regular axis-aligned lattices over cubes,
//! optionally filtered to Euclidean balls, enumerated in row-major order.

use crate::geometry::Vector;
use crate::scalar::{cast, Scalar};

/// `count` equally spaced values on `[center-radius, center+radius]`,
/// endpoints included. `count == 1` yields the center alone.
pub fn linspace<T: Scalar>(center: T, radius: T, count: usize) -> Vec<T> {
    assert!(count >= 1);
    if count == 1 {
        return vec![center];
    }
    let step = cast::<T>(2.0) * radius / cast::<T>((count - 1) as f64);
    (0..count).map(|i| center - radius + step * cast::<T>(i as f64)).collect()
}

/// Row-major lattice over the cube `center ± radius` with `per_axis` points
/// per axis (last axis fastest).
pub fn cube_grid<T: Scalar>(center: &Vector<T>, radius: T, per_axis: usize) -> Vec<Vector<T>> {
    let n = center.dim();
    let axes: Vec<Vec<T>> = (0..n).map(|i| linspace(center[i], radius, per_axis)).collect();
    let total = per_axis.pow(n as u32);
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        out.push(Vector::new(idx.iter().enumerate().map(|(ax, &i)| axes[ax][i]).collect()));
        for ax in (0..n).rev() {
            idx[ax] += 1;
            if idx[ax] < per_axis {
                break;
            }
            idx[ax] = 0;
        }
    }
    out
}

/// Cube lattice filtered to the closed Euclidean ball of the same radius.
pub fn ball_grid<T: Scalar>(center: &Vector<T>, radius: T, per_axis: usize) -> Vec<Vector<T>> {
    let slack = radius * (T::one() + cast::<T>(1e-12));
    cube_grid(center, radius, per_axis)
        .into_iter()
        .filter(|p| p.dist(center) <= slack)
        .collect()
}

/// Nested refinement of a per-axis count: `c → 2c − 1` keeps every existing
/// lattice point, so minima shrink and maxima grow monotonically with level.
pub fn refine(per_axis: usize, level: usize) -> usize {
    let mut c = per_axis;
    for _ in 0..level {
        c = 2 * c - 1;
    }
    c
}

/// Per-axis budget keeping multi-dimensional lattices at desk scale.
pub fn axis_budget(requested: usize, dim: usize) -> usize {
    match dim {
        0 | 1 => requested,
        2 => requested.min(13),
        3 => requested.min(9),
        _ => requested.min(5),
    }
}
