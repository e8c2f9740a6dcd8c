//! Set-valued mappings F: R^n ⇒ R^m and the two primitive quantities of the
//! regularity estimates: the residual d(y, F(x)) and the solution distance
//! d(x, F^{-1}(y)).

use std::sync::Arc;

use crate::geometry::{project_polyhedron, Error, ExtReal, Polyhedron, Result, Vector};
use crate::grid::{axis_budget, ball_grid, cube_grid};
use crate::linalg::{solve_or_minnorm, Matrix};
use crate::scalar::{cast, graph_tol, membership_tol, Scalar};

/// Pure vector-valued function oracle.
#[derive(Clone)]
pub struct VectorFn<T> {
    dim_in: usize,
    dim_out: usize,
    f: Arc<dyn Fn(&Vector<T>) -> Vector<T> + Send + Sync>,
}

impl<T: Scalar> VectorFn<T> {
    pub fn new(
        dim_in: usize,
        dim_out: usize,
        f: impl Fn(&Vector<T>) -> Vector<T> + Send + Sync + 'static,
    ) -> Self {
        Self { dim_in, dim_out, f: Arc::new(f) }
    }

    pub fn zero(dim_in: usize, dim_out: usize) -> Self {
        Self::new(dim_in, dim_out, move |_| Vector::zeros(dim_out))
    }

    pub fn eval(&self, x: &Vector<T>) -> Vector<T> {
        assert_eq!(x.dim(), self.dim_in, "function oracle input dimension");
        let y = (self.f)(x);
        assert_eq!(y.dim(), self.dim_out, "function oracle output dimension");
        y
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    /// Pointwise difference `self − other`.
    pub fn minus(&self, other: &VectorFn<T>) -> VectorFn<T> {
        assert_eq!(self.dim_in, other.dim_in);
        assert_eq!(self.dim_out, other.dim_out);
        let a = self.clone();
        let b = other.clone();
        VectorFn::new(self.dim_in, self.dim_out, move |x| a.eval(x).sub(&b.eval(x)))
    }
}

impl<T> std::fmt::Debug for VectorFn<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "VectorFn({} -> {})", self.dim_in, self.dim_out)
    }
}

/// Jacobian oracle of a [`VectorFn`].
#[derive(Clone)]
pub struct JacobianFn<T> {
    dim_in: usize,
    dim_out: usize,
    j: Arc<dyn Fn(&Vector<T>) -> Matrix<T> + Send + Sync>,
}

impl<T: Scalar> JacobianFn<T> {
    pub fn new(
        dim_in: usize,
        dim_out: usize,
        j: impl Fn(&Vector<T>) -> Matrix<T> + Send + Sync + 'static,
    ) -> Self {
        Self { dim_in, dim_out, j: Arc::new(j) }
    }

    pub fn eval(&self, x: &Vector<T>) -> Matrix<T> {
        assert_eq!(x.dim(), self.dim_in, "jacobian oracle input dimension");
        let m = (self.j)(x);
        assert_eq!((m.rows(), m.cols()), (self.dim_out, self.dim_in), "jacobian shape");
        m
    }

    pub fn constant(m: Matrix<T>) -> Self {
        let (r, c) = (m.rows(), m.cols());
        Self::new(c, r, move |_| m.clone())
    }
}

impl<T> std::fmt::Debug for JacobianFn<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "JacobianFn({} -> {}x{})", self.dim_in, self.dim_out, self.dim_in)
    }
}

/// Representations of a set-valued mapping F: R^n ⇒ R^m.
#[derive(Clone, Debug)]
pub enum SetValuedMap<T> {
    /// F(x) = {A x}.
    Linear { a: Matrix<T> },
    /// gph F = {(x,y) : A x + B y ≤ c}.
    PolyhedralGraph { a: Matrix<T>, b: Matrix<T>, c: Vec<T> },
    /// F(x) = N_C(x), the normal cone of the box C = [lower, upper]
    /// (entries may be ±∞; the image is empty outside the box).
    NormalConeOfBox { lower: Vec<T>, upper: Vec<T> },
    /// F(x) = {f(x)} with a supplied Jacobian.
    Smooth { f: VectorFn<T>, jac: JacobianFn<T> },
    /// Finite list of graph points.
    SampledGraph { pairs: Vec<(Vector<T>, Vector<T>)> },
    /// x ↦ base(x) + f(x).
    SumWithFunction { base: Box<SetValuedMap<T>>, f: VectorFn<T>, jac: Option<JacobianFn<T>> },
    /// F(x) = {0}.
    Zero,
}

/// Where and how finely to sample a mapping: balls B_δx(x̄), B_δy(ȳ) with a
/// points-per-axis resolution.
#[derive(Clone, Debug)]
pub struct EvalRegion<T> {
    pub xbar: Vector<T>,
    pub ybar: Vector<T>,
    pub delta_x: T,
    pub delta_y: T,
    pub resolution: usize,
}

impl<T: Scalar> EvalRegion<T> {
    pub fn new(xbar: Vector<T>, ybar: Vector<T>, delta_x: T, delta_y: T, resolution: usize) -> Self {
        assert!(delta_x > T::zero() && delta_y > T::zero(), "region radii must be positive");
        assert!(resolution >= 3, "resolution must be at least 3");
        Self { xbar, ybar, delta_x, delta_y, resolution }
    }
}

/// Outcome of a preimage search.
#[derive(Clone, Debug)]
pub struct Preimage<T> {
    /// d(x, F^{-1}(y)), `+∞` when nothing was found.
    pub distance: ExtReal<T>,
    /// Point of F^{-1}(y) nearest to the query, when one was found.
    pub nearest: Option<Vector<T>>,
    /// True when `+∞` may be a resolution artifact rather than true emptiness.
    pub search_limited: bool,
}

impl<T: Scalar> SetValuedMap<T> {
    pub fn linear(a: Matrix<T>) -> Self {
        SetValuedMap::Linear { a }
    }

    pub fn identity(n: usize) -> Self {
        SetValuedMap::Linear { a: Matrix::identity(n) }
    }

    pub fn normal_cone_of_box(lower: Vec<T>, upper: Vec<T>) -> Self {
        assert_eq!(lower.len(), upper.len());
        assert!(
            lower.iter().zip(&upper).all(|(l, u)| !l.is_nan() && !u.is_nan() && *l <= *u),
            "box bounds must satisfy lower ≤ upper"
        );
        SetValuedMap::NormalConeOfBox { lower, upper }
    }

    pub fn smooth(f: VectorFn<T>, jac: JacobianFn<T>) -> Self {
        SetValuedMap::Smooth { f, jac }
    }

    pub fn sampled(pairs: Vec<(Vector<T>, Vector<T>)>) -> Self {
        assert!(!pairs.is_empty(), "sampled graph must be nonempty");
        SetValuedMap::SampledGraph { pairs }
    }

    pub fn polyhedral_graph(a: Matrix<T>, b: Matrix<T>, c: Vec<T>) -> Self {
        assert_eq!(a.rows(), b.rows());
        assert_eq!(a.rows(), c.len());
        SetValuedMap::PolyhedralGraph { a, b, c }
    }

    pub fn dim_in(&self) -> Option<usize> {
        match self {
            SetValuedMap::Linear { a } => Some(a.cols()),
            SetValuedMap::PolyhedralGraph { a, .. } => Some(a.cols()),
            SetValuedMap::NormalConeOfBox { lower, .. } => Some(lower.len()),
            SetValuedMap::Smooth { f, .. } => Some(f.dim_in()),
            SetValuedMap::SampledGraph { pairs } => Some(pairs[0].0.dim()),
            SetValuedMap::SumWithFunction { base, f, .. } => base.dim_in().or(Some(f.dim_in())),
            SetValuedMap::Zero => None,
        }
    }

    pub fn dim_out(&self) -> Option<usize> {
        match self {
            SetValuedMap::Linear { a } => Some(a.rows()),
            SetValuedMap::PolyhedralGraph { b, .. } => Some(b.cols()),
            SetValuedMap::NormalConeOfBox { lower, .. } => Some(lower.len()),
            SetValuedMap::Smooth { f, .. } => Some(f.dim_out()),
            SetValuedMap::SampledGraph { pairs } => Some(pairs[0].1.dim()),
            SetValuedMap::SumWithFunction { base, f, .. } => base.dim_out().or(Some(f.dim_out())),
            SetValuedMap::Zero => None,
        }
    }

    fn check_dims(&self, x: &Vector<T>, y: &Vector<T>) -> Result<()> {
        if let Some(n) = self.dim_in() {
            if x.dim() != n {
                return Err(Error::DimensionMismatch {
                    context: "mapping input",
                    expected: n,
                    got: x.dim(),
                });
            }
        }
        if let Some(m) = self.dim_out() {
            if y.dim() != m {
                return Err(Error::DimensionMismatch {
                    context: "mapping output",
                    expected: m,
                    got: y.dim(),
                });
            }
        }
        Ok(())
    }

    /// The value f(x) when the mapping is single-valued, with `m` the
    /// expected output dimension (needed only by the zero map).
    pub fn single_value(&self, x: &Vector<T>, m: usize) -> Option<Vector<T>> {
        match self {
            SetValuedMap::Linear { a } => Some(Vector::new(a.matvec(x.coords()))),
            SetValuedMap::Smooth { f, .. } => Some(f.eval(x)),
            SetValuedMap::Zero => Some(Vector::zeros(m)),
            SetValuedMap::SumWithFunction { base, f, .. } => {
                base.single_value(x, m).map(|v| v.add(&f.eval(x)))
            }
            _ => None,
        }
    }

    /// Jacobian of the single-valued representation, when available.
    pub fn jacobian_at(&self, x: &Vector<T>, m: usize) -> Option<Matrix<T>> {
        match self {
            SetValuedMap::Linear { a } => Some(a.clone()),
            SetValuedMap::Smooth { jac, .. } => Some(jac.eval(x)),
            SetValuedMap::Zero => Some(Matrix::zeros(m, x.dim())),
            SetValuedMap::SumWithFunction { base, jac, .. } => {
                let bj = base.jacobian_at(x, m)?;
                let fj = jac.as_ref()?.eval(x);
                let mut out = Matrix::zeros(bj.rows(), bj.cols());
                for i in 0..bj.rows() {
                    for j in 0..bj.cols() {
                        out[(i, j)] = bj[(i, j)] + fj[(i, j)];
                    }
                }
                Some(out)
            }
            _ => None,
        }
    }
}

/// Residual d(y, F(x)) in the Euclidean norm; `+∞` when F(x) is empty.
pub fn image_distance<T: Scalar>(
    map: &SetValuedMap<T>,
    x: &Vector<T>,
    y: &Vector<T>,
) -> Result<ExtReal<T>> {
    map.check_dims(x, y)?;
    let tol = membership_tol::<T>();
    match map {
        SetValuedMap::Linear { a } => {
            Ok(ExtReal::finite(Vector::new(a.matvec(x.coords())).dist(y)))
        }
        SetValuedMap::Smooth { f, .. } => Ok(ExtReal::finite(f.eval(x).dist(y))),
        SetValuedMap::Zero => Ok(ExtReal::finite(y.norm())),
        SetValuedMap::SumWithFunction { base, f, .. } => {
            image_distance(base, x, &y.sub(&f.eval(x)))
        }
        SetValuedMap::PolyhedralGraph { a, b, c } => {
            let slice = graph_slice(a, b, c, x);
            match project_polyhedron(&slice, y) {
                Ok(p) => Ok(ExtReal::finite(p.dist(y))),
                Err(Error::EmptySet(_)) => Ok(ExtReal::PlusInf),
                Err(e) => Err(e),
            }
        }
        SetValuedMap::NormalConeOfBox { lower, upper } => {
            let mut sq = T::zero();
            for i in 0..lower.len() {
                match cone_face(lower[i], upper[i], x[i], tol) {
                    ConeFace::Outside => return Ok(ExtReal::PlusInf),
                    ConeFace::WholeLine => {}
                    ConeFace::Lower => sq = sq + y[i].max(T::zero()).powi(2),
                    ConeFace::Upper => sq = sq + (-y[i]).max(T::zero()).powi(2),
                    ConeFace::Interior => sq = sq + y[i] * y[i],
                }
            }
            Ok(ExtReal::finite(sq.sqrt()))
        }
        SetValuedMap::SampledGraph { pairs } => {
            let mut best: Option<T> = None;
            for (px, py) in pairs {
                if px.dist(x) <= tol {
                    let d = py.dist(y);
                    if best.map_or(true, |b| d < b) {
                        best = Some(d);
                    }
                }
            }
            Ok(best.map_or(ExtReal::PlusInf, ExtReal::finite))
        }
    }
}

enum ConeFace {
    Outside,
    WholeLine,
    Lower,
    Upper,
    Interior,
}

fn cone_face<T: Scalar>(l: T, u: T, x: T, tol: T) -> ConeFace {
    if x < l - tol || x > u + tol {
        return ConeFace::Outside;
    }
    if u - l <= tol {
        return ConeFace::WholeLine;
    }
    if l.is_finite() && (x - l).abs() <= tol {
        ConeFace::Lower
    } else if u.is_finite() && (u - x).abs() <= tol {
        ConeFace::Upper
    } else {
        ConeFace::Interior
    }
}

fn graph_slice<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, c: &[T], x: &Vector<T>) -> Polyhedron<T> {
    let ax = a.matvec(x.coords());
    let rhs: Vec<T> = c.iter().zip(&ax).map(|(ci, axi)| *ci - *axi).collect();
    Polyhedron::new(b.clone(), rhs)
}

fn preimage_polyhedron<T: Scalar>(
    a: &Matrix<T>,
    b: &Matrix<T>,
    c: &[T],
    y: &Vector<T>,
) -> Polyhedron<T> {
    let by = b.matvec(y.coords());
    let rhs: Vec<T> = c.iter().zip(&by).map(|(ci, byi)| *ci - *byi).collect();
    Polyhedron::new(a.clone(), rhs)
}

/// Solution distance d(x, F^{-1}(y)). Exact for linear, polyhedral, box-cone,
/// zero and sampled representations; Gauss-Newton or zoom search seeded on the
/// region grid otherwise.
pub fn preimage_distance<T: Scalar>(
    map: &SetValuedMap<T>,
    x: &Vector<T>,
    y: &Vector<T>,
    region: &EvalRegion<T>,
) -> Result<Preimage<T>> {
    map.check_dims(x, y)?;
    let tol = membership_tol::<T>();
    match map {
        SetValuedMap::Linear { a } => {
            let ax = a.matvec(x.coords());
            let r: Vec<T> = y.coords().iter().zip(&ax).map(|(yi, axi)| *yi - *axi).collect();
            let (d, res) = solve_or_minnorm(a, &r);
            let scale = T::one().max(y.norm());
            if res <= cast::<T>(1e-8) * scale {
                let nearest = x.add(&Vector::new(d));
                Ok(found(x, nearest))
            } else {
                Ok(empty(false))
            }
        }
        SetValuedMap::Zero => {
            if y.norm() <= tol {
                Ok(found(x, x.clone()))
            } else {
                Ok(empty(false))
            }
        }
        SetValuedMap::PolyhedralGraph { a, b, c } => {
            let pre = preimage_polyhedron(a, b, c, y);
            match project_polyhedron(&pre, x) {
                Ok(p) => Ok(found(x, p)),
                Err(Error::EmptySet(_)) => Ok(empty(false)),
                Err(e) => Err(e),
            }
        }
        SetValuedMap::NormalConeOfBox { lower, upper } => {
            let mut nearest = Vec::with_capacity(lower.len());
            for i in 0..lower.len() {
                let (l, u, yi, xi) = (lower[i], upper[i], y[i], x[i]);
                let target = if u - l <= tol {
                    Some(l)
                } else if yi < -tol {
                    l.is_finite().then_some(l)
                } else if yi > tol {
                    u.is_finite().then_some(u)
                } else {
                    // y_i ≈ 0 belongs to the cone everywhere on the box
                    Some(clamp(xi, l, u))
                };
                match target {
                    Some(t) => nearest.push(t),
                    None => return Ok(empty(false)),
                }
            }
            Ok(found(x, Vector::new(nearest)))
        }
        SetValuedMap::SampledGraph { pairs } => {
            let mut best: Option<(T, Vector<T>)> = None;
            for (px, py) in pairs {
                if py.dist(y) <= tol {
                    let d = px.dist(x);
                    if best.as_ref().map_or(true, |(b, _)| d < *b) {
                        best = Some((d, px.clone()));
                    }
                }
            }
            match best {
                Some((_, p)) => Ok(found(x, p)),
                None => Ok(empty(true)),
            }
        }
        SetValuedMap::Smooth { .. } | SetValuedMap::SumWithFunction { .. } => {
            let roots = preimage_root_set_near(map, y, region, Some(x))?;
            let nearest = roots
                .into_iter()
                .map(|r| (r.dist(x), r))
                .min_by(|(a, _), (b, _)| a.partial_cmp(b).unwrap());
            match nearest {
                Some((_, p)) => Ok(found(x, p)),
                None => Ok(empty(true)),
            }
        }
    }
}

fn found<T: Scalar>(x: &Vector<T>, nearest: Vector<T>) -> Preimage<T> {
    Preimage { distance: ExtReal::finite(nearest.dist(x)), nearest: Some(nearest), search_limited: false }
}

fn empty<T: Scalar>(search_limited: bool) -> Preimage<T> {
    Preimage { distance: ExtReal::PlusInf, nearest: None, search_limited }
}

fn clamp<T: Scalar>(x: T, l: T, u: T) -> T {
    x.max(l).min(u)
}

/// Points of F^{-1}(y) located inside / near the region's x-box, found by
/// Gauss-Newton polishing (single-valued representations with a Jacobian) or
/// deterministic zoom search, seeded on the region grid. An empty result may
/// be a resolution artifact ("search-limited").
pub fn preimage_root_set<T: Scalar>(
    map: &SetValuedMap<T>,
    y: &Vector<T>,
    region: &EvalRegion<T>,
) -> Result<Vec<Vector<T>>> {
    preimage_root_set_near(map, y, region, None)
}

/// Like [`preimage_root_set`], additionally seeding the search at `near` so
/// that set-valued preimages (continua) are probed close to the query point.
pub fn preimage_root_set_near<T: Scalar>(
    map: &SetValuedMap<T>,
    y: &Vector<T>,
    region: &EvalRegion<T>,
    near: Option<&Vector<T>>,
) -> Result<Vec<Vector<T>>> {
    let n = region.xbar.dim();
    let m = y.dim();
    let per_axis = axis_budget(region.resolution, n).clamp(3, 9);
    let mut starts = cube_grid(&region.xbar, region.delta_x, per_axis);
    if let Some(p) = near {
        starts.insert(0, p.clone());
    }
    let single = map.single_value(&region.xbar, m).is_some();
    let jac_ok = map.jacobian_at(&region.xbar, m).is_some();
    if single && jac_ok {
        gauss_newton_roots(map, y, &starts, m)
    } else {
        zoom_roots(map, y, &starts, region.delta_x / cast::<T>((per_axis - 1) as f64).max(T::one()), near)
    }
}

fn gauss_newton_roots<T: Scalar>(
    map: &SetValuedMap<T>,
    y: &Vector<T>,
    starts: &[Vector<T>],
    m: usize,
) -> Result<Vec<Vector<T>>> {
    let accept = membership_tol::<T>();
    let mut roots: Vec<Vector<T>> = Vec::new();
    for s in starts {
        let mut u = s.clone();
        let mut r = map.single_value(&u, m).expect("single-valued").sub(y);
        let mut rn = r.norm();
        for _ in 0..60 {
            if rn <= cast::<T>(1e-12) {
                break;
            }
            let Some(j) = map.jacobian_at(&u, m) else { break };
            let neg_r: Vec<T> = r.coords().iter().map(|v| -*v).collect();
            let (step, _) = solve_or_minnorm(&j, &neg_r);
            if step.iter().any(|v| !v.is_finite()) {
                break;
            }
            let step = Vector::new(step);
            // Backtrack on residual growth.
            let mut alpha = T::one();
            let mut improved = false;
            for _ in 0..25 {
                let cand = u.add(&step.scale(alpha));
                let rc = map.single_value(&cand, m).expect("single-valued").sub(y);
                let rcn = rc.norm();
                if rcn < rn {
                    u = cand;
                    r = rc;
                    rn = rcn;
                    improved = true;
                    break;
                }
                alpha = alpha * cast::<T>(0.5);
            }
            if !improved {
                break;
            }
        }
        if rn <= accept && roots.iter().all(|q| q.dist(&u) > cast::<T>(1e-7)) {
            roots.push(u);
        }
    }
    Ok(roots)
}

fn zoom_roots<T: Scalar>(
    map: &SetValuedMap<T>,
    y: &Vector<T>,
    starts: &[Vector<T>],
    cell: T,
    near: Option<&Vector<T>>,
) -> Result<Vec<Vector<T>>> {
    let accept = membership_tol::<T>();
    let big = cast::<T>(1e30);
    let mut scored: Vec<(T, Vector<T>)> = Vec::new();
    for s in starts {
        let r = match image_distance(map, s, y)? {
            ExtReal::Finite(v) => v,
            ExtReal::PlusInf => big,
        };
        scored.push((r, s.clone()));
    }
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // Zoom around the query point and up to 6 well-separated best seeds.
    let mut seeds: Vec<Vector<T>> = Vec::new();
    if let Some(p) = near {
        seeds.push(p.clone());
    }
    let sep = cell * cast::<T>(1.5);
    for (_, s) in &scored {
        if seeds.len() >= 7 {
            break;
        }
        if seeds.iter().all(|q| q.dist(s) > sep) {
            seeds.push(s.clone());
        }
    }
    let mut roots: Vec<Vector<T>> = Vec::new();
    for seed in seeds {
        let mut center = seed;
        let mut radius = cell;
        let mut best = match image_distance(map, &center, y)? {
            ExtReal::Finite(v) => v,
            ExtReal::PlusInf => big,
        };
        for _ in 0..48 {
            for cand in cube_grid(&center, radius, 5) {
                let r = match image_distance(map, &cand, y)? {
                    ExtReal::Finite(v) => v,
                    ExtReal::PlusInf => big,
                };
                // On residual plateaus (set-valued preimages) move toward
                // the query point instead of wandering.
                let closer = near.map_or(false, |p| cand.dist(p) < center.dist(p));
                if r < best || (r == best && closer) {
                    best = r;
                    center = cand;
                }
            }
            radius = radius * cast::<T>(0.5);
            if best <= cast::<T>(1e-13) && near.is_none() {
                break;
            }
        }
        if best <= accept && roots.iter().all(|q| q.dist(&center) > cast::<T>(1e-7)) {
            roots.push(center);
        }
    }
    // Pull each root toward the query point along the connecting segment:
    // for convex slices this recovers the nearest boundary point exactly.
    if let Some(p) = near {
        let in_set = |u: &Vector<T>| -> Result<bool> {
            Ok(matches!(image_distance(map, u, y)?, ExtReal::Finite(r) if r <= accept))
        };
        if !in_set(p)? {
            for root in roots.iter_mut() {
                let mut lo = T::zero(); // toward p: not in the set
                let mut hi = T::one(); // at the root: in the set
                for _ in 0..60 {
                    let mid = (lo + hi) / cast::<T>(2.0);
                    let cand = p.add(&root.sub(p).scale(mid));
                    if in_set(&cand)? {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                *root = p.add(&root.sub(p).scale(hi));
            }
        }
    }
    Ok(roots)
}

/// Deterministic sample of graph points inside the region (row-major grid
/// order); every returned pair has residual at most `1e-8`, and the base
/// point is included whenever it lies on the graph.
pub fn graph_sample<T: Scalar>(
    map: &SetValuedMap<T>,
    region: &EvalRegion<T>,
) -> Result<Vec<(Vector<T>, Vector<T>)>> {
    let gt = graph_tol::<T>();
    let y_slack = region.delta_y * (T::one() + cast::<T>(1e-12));
    let x_slack = region.delta_x * (T::one() + cast::<T>(1e-12));
    let mut out: Vec<(Vector<T>, Vector<T>)> = Vec::new();

    if let SetValuedMap::SampledGraph { pairs } = map {
        for (px, py) in pairs {
            if px.dist(&region.xbar) <= x_slack && py.dist(&region.ybar) <= y_slack {
                out.push((px.clone(), py.clone()));
            }
        }
    } else {
        let n = region.xbar.dim();
        let m = region.ybar.dim();
        let xs = ball_grid(&region.xbar, region.delta_x, axis_budget(region.resolution, n));
        let ys = cube_grid(&region.ybar, region.delta_y, axis_budget(region.resolution, m));
        for x in xs {
            for y in slice_candidates(map, &x, &ys, m)? {
                if y.dist(&region.ybar) <= y_slack {
                    out.push((x.clone(), y));
                }
            }
        }
    }

    // Keep only verified graph points.
    out.retain(|(x, y)| matches!(image_distance(map, x, y), Ok(ExtReal::Finite(r)) if r <= gt));

    // The base point joins the sample when it is a genuine graph point.
    let base = (region.xbar.clone(), region.ybar.clone());
    let on_graph =
        matches!(image_distance(map, &base.0, &base.1), Ok(ExtReal::Finite(r)) if r <= gt);
    if on_graph
        && !out
            .iter()
            .any(|(x, y)| x.dist(&base.0) <= cast(1e-9) && y.dist(&base.1) <= cast(1e-9))
    {
        out.push(base);
    }
    Ok(out)
}

/// Representative points of F(x) near the sampling lattice `ys`.
pub(crate) fn slice_candidates<T: Scalar>(
    map: &SetValuedMap<T>,
    x: &Vector<T>,
    ys: &[Vector<T>],
    m: usize,
) -> Result<Vec<Vector<T>>> {
    let tol = membership_tol::<T>();
    let mut cands: Vec<Vector<T>> = Vec::new();
    let push_unique = |v: Vector<T>, cands: &mut Vec<Vector<T>>| {
        if cands.iter().all(|c| c.dist(&v) > tol) {
            cands.push(v);
        }
    };
    match map {
        SetValuedMap::Linear { .. } | SetValuedMap::Smooth { .. } | SetValuedMap::Zero => {
            if let Some(v) = map.single_value(x, m) {
                cands.push(v);
            }
        }
        SetValuedMap::SumWithFunction { base, f, .. } => {
            let shift = f.eval(x);
            let shifted: Vec<Vector<T>> = ys.iter().map(|y| y.sub(&shift)).collect();
            for v in slice_candidates(base, x, &shifted, m)? {
                push_unique(v.add(&shift), &mut cands);
            }
        }
        SetValuedMap::NormalConeOfBox { lower, upper } => {
            // Project each lattice point onto the product cone at x.
            let faces: Option<Vec<ConeFace>> = {
                let mut fs = Vec::with_capacity(lower.len());
                let mut outside = false;
                for i in 0..lower.len() {
                    match cone_face(lower[i], upper[i], x[i], tol) {
                        ConeFace::Outside => {
                            outside = true;
                            break;
                        }
                        f => fs.push(f),
                    }
                }
                (!outside).then_some(fs)
            };
            if let Some(faces) = faces {
                for y in ys {
                    let proj: Vec<T> = faces
                        .iter()
                        .enumerate()
                        .map(|(i, f)| match f {
                            ConeFace::WholeLine => y[i],
                            ConeFace::Lower => y[i].min(T::zero()),
                            ConeFace::Upper => y[i].max(T::zero()),
                            ConeFace::Interior => T::zero(),
                            ConeFace::Outside => unreachable!(),
                        })
                        .collect();
                    push_unique(Vector::new(proj), &mut cands);
                }
            }
        }
        SetValuedMap::PolyhedralGraph { a, b, c } => {
            let slice = graph_slice(a, b, c, x);
            for y in ys {
                match project_polyhedron(&slice, y) {
                    Ok(p) => push_unique(p, &mut cands),
                    Err(Error::EmptySet(_)) => break,
                    Err(e) => return Err(e),
                }
            }
        }
        SetValuedMap::SampledGraph { pairs } => {
            for (px, py) in pairs {
                if px.dist(x) <= tol {
                    push_unique(py.clone(), &mut cands);
                }
            }
        }
    }
    Ok(cands)
}

/// Closed-form inverse: gph(F^{-1}) = {(y,x) : (x,y) ∈ gph F}. Only linear,
/// polyhedral and sampled representations invert in closed form.
pub fn inverse<T: Scalar>(map: &SetValuedMap<T>) -> Result<SetValuedMap<T>> {
    match map {
        SetValuedMap::Linear { a } => {
            // {(y,x) : A x − y = 0} as two inequality blocks.
            let (m, n) = (a.rows(), a.cols());
            let mut ia = Matrix::zeros(2 * m, m);
            let mut ib = Matrix::zeros(2 * m, n);
            let c = vec![T::zero(); 2 * m];
            for i in 0..m {
                ia[(i, i)] = -T::one();
                ia[(m + i, i)] = T::one();
                for j in 0..n {
                    ib[(i, j)] = a[(i, j)];
                    ib[(m + i, j)] = -a[(i, j)];
                }
            }
            Ok(SetValuedMap::PolyhedralGraph { a: ia, b: ib, c })
        }
        SetValuedMap::PolyhedralGraph { a, b, c } => {
            Ok(SetValuedMap::PolyhedralGraph { a: b.clone(), b: a.clone(), c: c.clone() })
        }
        SetValuedMap::SampledGraph { pairs } => Ok(SetValuedMap::SampledGraph {
            pairs: pairs.iter().map(|(x, y)| (y.clone(), x.clone())).collect(),
        }),
        _ => Err(Error::NotInvertible),
    }
}

/// The perturbed mapping x ↦ F(x) + f(x).
pub fn sum_with_function<T: Scalar>(
    map: &SetValuedMap<T>,
    f: VectorFn<T>,
    jac: Option<JacobianFn<T>>,
) -> SetValuedMap<T> {
    if let Some(n) = map.dim_in() {
        assert_eq!(f.dim_in(), n, "perturbation input dimension");
    }
    if let Some(m) = map.dim_out() {
        assert_eq!(f.dim_out(), m, "perturbation output dimension");
    }
    SetValuedMap::SumWithFunction { base: Box::new(map.clone()), f, jac }
}
