//! Metric substrate: Euclidean vectors, the parametric product metric
//! `max{d(u1,u2), γ d(v1,v2)}` and its dual norm `‖x*‖ + γ⁻¹‖y*‖`,
//! extended reals with a distinguished `+∞`, polyhedra `{x : Ax ≤ b}` with
//! exact Euclidean projection, and the set excess `e(A,B)`.

use thiserror::Error;

use crate::linalg::{norm, solve_lu, Matrix};
use crate::scalar::{cast, Scalar};

/// Errors surfaced by the geometric primitives and everything built on them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch { context: &'static str, expected: usize, got: usize },
    #[error("empty set: {0}")]
    EmptySet(&'static str),
    #[error("problem size {got} exceeds the desk-scale bound {bound} for {context}")]
    TooLarge { context: &'static str, bound: usize, got: usize },
    #[error("base point is not on the graph (residual {residual})")]
    BasePointOffGraph { residual: f64 },
    #[error("representation is not invertible in closed form; use grid-based preimage search")]
    NotInvertible,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("subproblem unsolvable: {0}")]
    SubproblemUnsolvable(String),
    #[error("contraction violated at iterations {at}: residuals {triple:?} grew consecutively")]
    ContractionViolated { at: usize, triple: [f64; 3] },
    #[error("iterate escaped the confinement ball at iteration {0}")]
    LeftBall(usize),
    #[error("insufficient decay window: {0} admissible error pairs (need at least 3)")]
    InsufficientDecayWindow(usize),
    #[error("jacobian oracle disagrees with finite differences (max relative error {0})")]
    JacobianMismatch(f64),
}

pub type Result<V> = std::result::Result<V, Error>;

/// Point of a finite-dimensional Euclidean space. All entries are finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector<T>(Vec<T>);

impl<T: Scalar> Vector<T> {
    pub fn new(coords: Vec<T>) -> Self {
        assert!(coords.iter().all(|v| v.is_finite()), "vector entries must be finite");
        Self(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![T::zero(); dim])
    }

    pub fn scalar(value: T) -> Self {
        Self::new(vec![value])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[T] {
        &self.0
    }

    pub fn norm(&self) -> T {
        norm(&self.0)
    }

    pub fn dist(&self, other: &Self) -> T {
        assert_eq!(self.dim(), other.dim(), "distance between mismatched dimensions");
        self.0
            .iter()
            .zip(&other.0)
            .fold(T::zero(), |s, (a, b)| s + (*a - *b) * (*a - *b))
            .sqrt()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| *a + *b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| *a - *b).collect())
    }

    pub fn scale(&self, c: T) -> Self {
        Self(self.0.iter().map(|a| *a * c).collect())
    }

    pub fn dot(&self, other: &Self) -> T {
        self.0.iter().zip(&other.0).fold(T::zero(), |s, (a, b)| s + *a * *b)
    }
}

impl<T: Scalar> std::ops::Index<usize> for Vector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T: Scalar> From<Vec<T>> for Vector<T> {
    fn from(coords: Vec<T>) -> Self {
        Self::new(coords)
    }
}

/// Positive parameter γ of the product metric.
#[derive(Clone, Copy, Debug)]
pub struct ParametricGamma<T>(T);

impl<T: Scalar> ParametricGamma<T> {
    pub fn new(gamma: T) -> Self {
        assert!(gamma.is_finite() && gamma > T::zero(), "gamma must be finite and positive");
        Self(gamma)
    }

    pub fn get(&self) -> T {
        self.0
    }
}

/// Nonnegative extended real with a distinguished `+∞`; never a float infinity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal<T> {
    Finite(T),
    PlusInf,
}

impl<T: Scalar> ExtReal<T> {
    pub fn finite(v: T) -> Self {
        debug_assert!(v.is_finite());
        ExtReal::Finite(v)
    }

    pub fn is_inf(&self) -> bool {
        matches!(self, ExtReal::PlusInf)
    }

    pub fn value(&self) -> Option<T> {
        match self {
            ExtReal::Finite(v) => Some(*v),
            ExtReal::PlusInf => None,
        }
    }

    /// `q`-th power, with `(+∞)^q = +∞`.
    pub fn powq(&self, q: T) -> Self {
        match self {
            ExtReal::Finite(v) => ExtReal::Finite(v.powf(q)),
            ExtReal::PlusInf => ExtReal::PlusInf,
        }
    }

    pub fn add(&self, other: Self) -> Self {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(*a + b),
            _ => ExtReal::PlusInf,
        }
    }

    /// Difference under the convention `(+∞) − (+∞) = 0`; subtracting a
    /// finite value from `+∞` stays `+∞`, and `a − (+∞)` is clamped to zero.
    pub fn sub_with_inf_convention(&self, other: Self) -> Self {
        match (self, other) {
            (ExtReal::PlusInf, ExtReal::PlusInf) => ExtReal::Finite(T::zero()),
            (ExtReal::PlusInf, ExtReal::Finite(_)) => ExtReal::PlusInf,
            (ExtReal::Finite(_), ExtReal::PlusInf) => ExtReal::Finite(T::zero()),
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(*a - b),
        }
    }

    pub fn min(self, other: Self) -> Self {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a.min(b)),
            (ExtReal::Finite(a), _) | (_, ExtReal::Finite(a)) => ExtReal::Finite(a),
            _ => ExtReal::PlusInf,
        }
    }

    pub fn max(self, other: Self) -> Self {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a.max(b)),
            _ => ExtReal::PlusInf,
        }
    }
}

impl<T: Scalar> PartialOrd for ExtReal<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        use std::cmp::Ordering::*;
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.partial_cmp(b),
            (ExtReal::Finite(_), ExtReal::PlusInf) => Some(Less),
            (ExtReal::PlusInf, ExtReal::Finite(_)) => Some(Greater),
            (ExtReal::PlusInf, ExtReal::PlusInf) => Some(Equal),
        }
    }
}

impl<T: Scalar> std::fmt::Display for ExtReal<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PlusInf => write!(f, "inf"),
        }
    }
}

/// Product-space distance `max{d(p0,q0), γ·d(p1,q1)}`.
pub fn product_distance<T: Scalar>(
    p: (&Vector<T>, &Vector<T>),
    q: (&Vector<T>, &Vector<T>),
    gamma: ParametricGamma<T>,
) -> Result<T> {
    if p.0.dim() != q.0.dim() {
        return Err(Error::DimensionMismatch {
            context: "product_distance first slot",
            expected: p.0.dim(),
            got: q.0.dim(),
        });
    }
    if p.1.dim() != q.1.dim() {
        return Err(Error::DimensionMismatch {
            context: "product_distance second slot",
            expected: p.1.dim(),
            got: q.1.dim(),
        });
    }
    Ok(p.0.dist(q.0).max(gamma.get() * p.1.dist(q.1)))
}

/// Dual norm `‖xs‖ + γ⁻¹‖ys‖` of the product norm above.
pub fn dual_product_norm<T: Scalar>(xs: &Vector<T>, ys: &Vector<T>, gamma: ParametricGamma<T>) -> T {
    xs.norm() + ys.norm() / gamma.get()
}

/// Polyhedron `{x : A x ≤ b}` in H-representation.
#[derive(Clone, Debug)]
pub struct Polyhedron<T> {
    a: Matrix<T>,
    b: Vec<T>,
}

/// Active-set enumeration handles at most this many inequality rows.
pub const MAX_PROJECTION_ROWS: usize = 12;

impl<T: Scalar> Polyhedron<T> {
    pub fn new(a: Matrix<T>, b: Vec<T>) -> Self {
        assert_eq!(a.rows(), b.len(), "row count of A must equal length of b");
        Self { a, b }
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn rhs(&self) -> &[T] {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    pub fn contains(&self, x: &Vector<T>, tol: T) -> bool {
        self.a
            .matvec(x.coords())
            .iter()
            .zip(&self.b)
            .all(|(lhs, rhs)| *lhs <= *rhs + tol)
    }

    /// Detects emptiness through the feasibility of the projection solve.
    pub fn is_empty(&self) -> bool {
        project_polyhedron(self, &Vector::zeros(self.dim())).is_err()
    }
}

/// Euclidean nearest point of a polyhedron, by enumerating candidate active
/// sets of size ≤ dim and checking primal feasibility and multiplier signs.
/// Fails with [`Error::EmptySet`] when no candidate is feasible.
pub fn project_polyhedron<T: Scalar>(p: &Polyhedron<T>, x: &Vector<T>) -> Result<Vector<T>> {
    if x.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            context: "project_polyhedron",
            expected: p.dim(),
            got: x.dim(),
        });
    }
    let k = p.a.rows();
    if k > MAX_PROJECTION_ROWS {
        return Err(Error::TooLarge {
            context: "project_polyhedron",
            bound: MAX_PROJECTION_ROWS,
            got: k,
        });
    }
    let n = p.dim();
    let feas_tol = cast::<T>(1e-9) * scale_of(p, x);
    let mult_tol = cast::<T>(1e-9);

    let mut best: Option<(T, Vector<T>)> = None;
    let mut consider = |cand: Vector<T>| {
        if p.contains(&cand, feas_tol) {
            let d = cand.dist(x);
            if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
                best = Some((d, cand));
            }
        }
    };

    // Empty active set: x itself.
    consider(x.clone());

    let max_active = n.min(k);
    for mask in 1u32..(1u32 << k) {
        let active: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        if active.is_empty() || active.len() > max_active {
            continue;
        }
        // Solve (A_S A_S^T) λ = A_S x − b_S, then candidate = x − A_S^T λ.
        let s = active.len();
        let mut gram = Matrix::zeros(s, s);
        let mut rhs = vec![T::zero(); s];
        for (ii, &i) in active.iter().enumerate() {
            let ri = p.a.row(i);
            for (jj, &j) in active.iter().enumerate() {
                gram[(ii, jj)] = dot(ri, p.a.row(j));
            }
            rhs[ii] = dot(ri, x.coords()) - p.b[i];
        }
        let Some(lambda) = solve_lu(&gram, &rhs) else { continue };
        if lambda.iter().any(|l| *l < -mult_tol) {
            continue;
        }
        let mut cand = x.coords().to_vec();
        for (ii, &i) in active.iter().enumerate() {
            for (j, c) in cand.iter_mut().enumerate() {
                *c = *c - lambda[ii] * p.a.row(i)[j];
            }
        }
        if cand.iter().all(|v| v.is_finite()) {
            consider(Vector::new(cand));
        }
    }

    best.map(|(_, v)| v).ok_or(Error::EmptySet("polyhedron has no feasible point"))
}

fn scale_of<T: Scalar>(p: &Polyhedron<T>, x: &Vector<T>) -> T {
    let mut s = T::one();
    for v in p.rhs() {
        s = s.max(v.abs());
    }
    s.max(x.norm())
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (x, y)| s + *x * *y)
}

/// Excess `e(A,B) = sup_{x∈A} d(x,B)` of a finite set beyond a set given by a
/// distance oracle. Empty `A` yields zero (for nonempty `B`); an empty `B`
/// surfaces as `+∞` through the oracle.
pub fn excess<T: Scalar>(
    points: &[Vector<T>],
    dist_b: impl Fn(&Vector<T>) -> ExtReal<T>,
) -> ExtReal<T> {
    points
        .iter()
        .map(dist_b)
        .fold(ExtReal::Finite(T::zero()), |acc, d| acc.max(d))
}
