//! Josephy-Newton method for generalized equations f(x) + F(x) ∋ 0: the
//! subproblem linearizes f and keeps F, solved exactly by active-set
//! enumeration, with quadratic-rate diagnostics on the iterate history.

use crate::geometry::{project_polyhedron, Error, ExtReal, Polyhedron, Result, Vector};
use crate::linalg::{solve_lu, Matrix};
use crate::mappings::{image_distance, JacobianFn, SetValuedMap, VectorFn};
use crate::scalar::{cast, membership_tol, Scalar};

/// Box activity patterns are enumerated exhaustively up to this dimension.
pub const MAX_BOX_DIM: usize = 8;

/// The problem f(x) + F(x) ∋ 0 with F restricted to representations whose
/// Newton subproblem solves exactly.
#[derive(Clone, Debug)]
pub struct GeneralizedEquation<T> {
    f: VectorFn<T>,
    jac: JacobianFn<T>,
    map: SetValuedMap<T>,
    dim: usize,
}

impl<T: Scalar> GeneralizedEquation<T> {
    /// Validates the representation restriction and spot-checks the Jacobian
    /// oracle against central finite differences at 5 deterministic
    /// pseudo-random points (max relative error 1e-5).
    pub fn new(f: VectorFn<T>, jac: JacobianFn<T>, map: SetValuedMap<T>) -> Result<Self> {
        match &map {
            SetValuedMap::Zero
            | SetValuedMap::NormalConeOfBox { .. }
            | SetValuedMap::PolyhedralGraph { .. } => {}
            _ => {
                return Err(Error::Precondition(
                    "generalized equation supports Zero, NormalConeOfBox and PolyhedralGraph".into(),
                ))
            }
        }
        let n = f.dim_in();
        assert_eq!(f.dim_out(), n, "generalized equation is square");
        let mut state = 0x5deece66du64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        // Central differences balance truncation against rounding at ε^{1/3}.
        let h = T::epsilon().powf(cast(1.0 / 3.0));
        let mut worst = T::zero();
        for _ in 0..5 {
            let x = Vector::new((0..n).map(|_| cast::<T>(next() * 0.5)).collect());
            let j = jac.eval(&x);
            for col in 0..n {
                let mut xp = x.coords().to_vec();
                let mut xm = x.coords().to_vec();
                xp[col] = xp[col] + h;
                xm[col] = xm[col] - h;
                let fp = f.eval(&Vector::new(xp));
                let fm = f.eval(&Vector::new(xm));
                for row in 0..n {
                    let fd = (fp[row] - fm[row]) / (cast::<T>(2.0) * h);
                    let rel = (fd - j[(row, col)]).abs() / T::one().max(j[(row, col)].abs());
                    worst = worst.max(rel);
                }
            }
        }
        if worst > cast(1e-5) {
            return Err(Error::JacobianMismatch(worst.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Self { f, jac, map, dim: n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn map(&self) -> &SetValuedMap<T> {
        &self.map
    }

    pub fn function(&self) -> &VectorFn<T> {
        &self.f
    }

    pub fn jacobian(&self) -> &JacobianFn<T> {
        &self.jac
    }
}

/// Starting point, stopping tolerance and iteration cap.
#[derive(Clone, Debug)]
pub struct NewtonConfig<T> {
    pub x0: Vector<T>,
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> NewtonConfig<T> {
    pub fn new(x0: Vector<T>) -> Self {
        Self { x0, tol: cast(1e-10), max_iter: 50 }
    }

    pub fn with_tol(mut self, tol: T) -> Self {
        assert!(tol > T::zero());
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        assert!(max_iter > 0);
        self.max_iter = max_iter;
        self
    }
}

/// Least-squares fit of the error recurrence e_{k+1} ≈ γ·e_k^p.
#[derive(Clone, Copy, Debug)]
pub struct RateFit<T> {
    pub exponent: T,
    pub gamma: T,
    pub pairs_used: usize,
}

/// Iterate, residual and (optional) error history of a Newton run.
#[derive(Clone, Debug)]
pub struct NewtonTrace<T> {
    pub iterates: Vec<Vector<T>>,
    /// d(0, f(x_k) + F(x_k)) per iterate.
    pub residuals: Vec<ExtReal<T>>,
    pub errors_to_ref: Option<Vec<T>>,
    pub rate: Option<RateFit<T>>,
    pub converged: bool,
    /// Failing iteration and message when a subproblem was unsolvable.
    pub failure: Option<(usize, String)>,
}

impl<T: Scalar> NewtonTrace<T> {
    /// Attaches a reference solution: records per-iterate errors and, when
    /// the decay window allows, the fitted convergence rate.
    pub fn with_reference(mut self, xstar: &Vector<T>) -> Self {
        let errors: Vec<T> = self.iterates.iter().map(|x| x.dist(xstar)).collect();
        self.rate = fit_rate(&errors).ok();
        self.errors_to_ref = Some(errors);
        self
    }
}

/// Residual d(0, f(x) + F(x)) = d(−f(x), F(x)).
pub fn residual<T: Scalar>(ge: &GeneralizedEquation<T>, x: &Vector<T>) -> Result<ExtReal<T>> {
    let fx = ge.f.eval(x);
    let target = Vector::new(fx.coords().iter().map(|v| -*v).collect());
    image_distance(&ge.map, x, &target)
}

/// One exact Josephy-Newton subproblem: find x⁺ with
/// 0 ∈ f(x_k) + ∇f(x_k)(x⁺ − x_k) + F(x⁺).
pub fn solve_subproblem<T: Scalar>(ge: &GeneralizedEquation<T>, xk: &Vector<T>) -> Result<Vector<T>> {
    let g = ge.f.eval(xk);
    let m = ge.jac.eval(xk);
    match &ge.map {
        SetValuedMap::Zero => {
            let rhs: Vec<T> = g.coords().iter().map(|v| -*v).collect();
            let d = solve_lu(&m, &rhs).ok_or_else(|| {
                Error::SubproblemUnsolvable("singular Jacobian in the Newton system".into())
            })?;
            Ok(xk.add(&Vector::new(d)))
        }
        SetValuedMap::NormalConeOfBox { lower, upper } => {
            solve_box_subproblem(&g, &m, xk, lower, upper)
        }
        SetValuedMap::PolyhedralGraph { a, b, c } => {
            // w := −f(x_k) − M(x⁺ − x_k) must lie in the slice at x⁺, which
            // rewrites as (A − B·M) x⁺ ≤ c + B·(M x_k − f(x_k)).
            let n = ge.dim;
            let k_rows = c.len();
            let mut aa = Matrix::zeros(k_rows, n);
            for i in 0..k_rows {
                for j in 0..n {
                    let mut bm = T::zero();
                    for l in 0..b.cols() {
                        bm = bm + b[(i, l)] * m[(l, j)];
                    }
                    aa[(i, j)] = a[(i, j)] - bm;
                }
            }
            let mxk = m.matvec(xk.coords());
            let shift: Vec<T> = mxk.iter().zip(g.coords()).map(|(mv, gv)| *mv - *gv).collect();
            let bshift = b.matvec(&shift);
            let rhs: Vec<T> = c.iter().zip(&bshift).map(|(ci, si)| *ci + *si).collect();
            let feasible = Polyhedron::new(aa, rhs);
            match project_polyhedron(&feasible, xk) {
                Ok(p) => Ok(p),
                Err(Error::EmptySet(_)) => {
                    Err(Error::SubproblemUnsolvable("linearized inclusion is infeasible".into()))
                }
                Err(e) => Err(e),
            }
        }
        _ => unreachable!("constructor restricts the representation"),
    }
}

fn solve_box_subproblem<T: Scalar>(
    g: &Vector<T>,
    m: &Matrix<T>,
    xk: &Vector<T>,
    lower: &[T],
    upper: &[T],
) -> Result<Vector<T>> {
    let n = xk.dim();
    if n > MAX_BOX_DIM {
        return Err(Error::TooLarge { context: "box activity enumeration", bound: MAX_BOX_DIM, got: n });
    }
    let tol = membership_tol::<T>();
    let mut candidates: Vec<Vector<T>> = Vec::new();
    let mut singular_patterns = 0usize;
    let total = 3usize.pow(n as u32);
    'patterns: for code in 0..total {
        // Digit 0: at lower bound, 1: free, 2: at upper bound.
        let mut digits = Vec::with_capacity(n);
        let mut rest = code;
        for _ in 0..n {
            digits.push(rest % 3);
            rest /= 3;
        }
        let mut fixed = vec![T::zero(); n];
        let mut free: Vec<usize> = Vec::new();
        for i in 0..n {
            match digits[i] {
                0 => {
                    if !lower[i].is_finite() {
                        continue 'patterns;
                    }
                    fixed[i] = lower[i];
                }
                2 => {
                    if !upper[i].is_finite() || upper[i] - lower[i] <= tol {
                        continue 'patterns; // pinned coords are handled as "lower"
                    }
                    fixed[i] = upper[i];
                }
                _ => free.push(i),
            }
        }
        // Reduced system M_FF d_F = −g_F − M_FA d_A on the free block.
        let s = free.len();
        let mut red = Matrix::zeros(s, s);
        let mut rhs = vec![T::zero(); s];
        for (ii, &i) in free.iter().enumerate() {
            let mut r = -g[i];
            for j in 0..n {
                if let Some(jj) = free.iter().position(|&fj| fj == j) {
                    red[(ii, jj)] = m[(i, j)];
                } else {
                    r = r - m[(i, j)] * (fixed[j] - xk[j]);
                }
            }
            rhs[ii] = r;
        }
        let d_free = if s == 0 {
            Vec::new()
        } else {
            match solve_lu(&red, &rhs) {
                Some(d) => d,
                None => {
                    singular_patterns += 1;
                    continue;
                }
            }
        };
        let mut x = vec![T::zero(); n];
        for i in 0..n {
            x[i] = match digits[i] {
                1 => {
                    let ii = free.iter().position(|&fi| fi == i).unwrap();
                    xk[i] + d_free[ii]
                }
                _ => fixed[i],
            };
        }
        if x.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let x = Vector::new(x);
        // Primal feasibility on free coordinates.
        for (i, &digit) in digits.iter().enumerate() {
            if digit == 1 && (x[i] < lower[i] - tol || x[i] > upper[i] + tol) {
                continue 'patterns;
            }
        }
        // Multiplier signs: r = g + M(x − x_k) must point into the cone.
        let d: Vec<T> = x.coords().iter().zip(xk.coords()).map(|(a, b)| *a - *b).collect();
        let md = m.matvec(&d);
        for (i, &digit) in digits.iter().enumerate() {
            let r = g[i] + md[i];
            match digit {
                0 if upper[i] - lower[i] > tol && r < -tol => continue 'patterns,
                1 if r.abs() > tol => continue 'patterns,
                2 if r > tol => continue 'patterns,
                _ => {}
            }
        }
        candidates.push(x);
    }
    pick_candidate(candidates, xk).ok_or_else(|| {
        Error::SubproblemUnsolvable(format!(
            "no feasible activity pattern among {total} ({singular_patterns} singular)"
        ))
    })
}

/// Nearest candidate to the current iterate, ties broken lexicographically.
fn pick_candidate<T: Scalar>(candidates: Vec<Vector<T>>, xk: &Vector<T>) -> Option<Vector<T>> {
    let tie = cast::<T>(1e-12);
    let mut best: Option<(T, Vector<T>)> = None;
    for cand in candidates {
        let d = cand.dist(xk);
        match &best {
            None => best = Some((d, cand)),
            Some((bd, bx)) => {
                if d < *bd - tie {
                    best = Some((d, cand));
                } else if (d - *bd).abs() <= tie && lex_less(&cand, bx) {
                    best = Some((d, cand));
                }
            }
        }
    }
    best.map(|(_, x)| x)
}

fn lex_less<T: Scalar>(a: &Vector<T>, b: &Vector<T>) -> bool {
    for i in 0..a.dim() {
        if a[i] < b[i] {
            return true;
        }
        if a[i] > b[i] {
            return false;
        }
    }
    false
}

/// Runs the Josephy-Newton iteration until the residual drops below `tol`
/// or the iteration cap is hit; a failed subproblem flags the trace instead
/// of discarding it.
pub fn josephy_newton<T: Scalar>(
    ge: &GeneralizedEquation<T>,
    cfg: &NewtonConfig<T>,
) -> Result<NewtonTrace<T>> {
    let mut iterates = vec![cfg.x0.clone()];
    let mut residuals = vec![residual(ge, &cfg.x0)?];
    let mut converged = false;
    let mut failure = None;
    for k in 0..cfg.max_iter {
        if matches!(residuals[k], ExtReal::Finite(r) if r <= cfg.tol) {
            converged = true;
            break;
        }
        match solve_subproblem(ge, &iterates[k]) {
            Ok(next) => {
                residuals.push(residual(ge, &next)?);
                iterates.push(next);
            }
            Err(e) => {
                failure = Some((k, e.to_string()));
                break;
            }
        }
    }
    if !converged {
        converged = matches!(residuals.last(), Some(ExtReal::Finite(r)) if *r <= cfg.tol);
    }
    Ok(NewtonTrace { iterates, residuals, errors_to_ref: None, rate: None, converged, failure })
}

/// Fits log e_{k+1} = p·log e_k + log γ over the admissible decay window
/// (errors strictly between 1e-14 and 1e-1).
pub fn estimate_rate<T: Scalar>(trace: &NewtonTrace<T>, xstar: &Vector<T>) -> Result<RateFit<T>> {
    let errors: Vec<T> = trace.iterates.iter().map(|x| x.dist(xstar)).collect();
    fit_rate(&errors)
}

fn fit_rate<T: Scalar>(errors: &[T]) -> Result<RateFit<T>> {
    let lo = cast::<T>(1e-14);
    let hi = cast::<T>(1e-1);
    let admissible = |e: T| e > lo && e < hi;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for w in errors.windows(2) {
        if admissible(w[0]) && admissible(w[1]) {
            xs.push(w[0].ln());
            ys.push(w[1].ln());
        }
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::InsufficientDecayWindow(n));
    }
    let nt = cast::<T>(n as f64);
    let sx = xs.iter().fold(T::zero(), |a, b| a + *b);
    let sy = ys.iter().fold(T::zero(), |a, b| a + *b);
    let sxx = xs.iter().fold(T::zero(), |a, b| a + *b * *b);
    let sxy = xs.iter().zip(&ys).fold(T::zero(), |a, (x, y)| a + *x * *y);
    let denom = nt * sxx - sx * sx;
    if denom.abs() <= cast(1e-12) {
        return Err(Error::InsufficientDecayWindow(n));
    }
    let p = (nt * sxy - sx * sy) / denom;
    let intercept = (sy - p * sx) / nt;
    Ok(RateFit { exponent: p, gamma: intercept.exp(), pairs_used: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(c: &[f64]) -> Vector<f64> {
        Vector::new(c.to_vec())
    }

    fn square_minus_two() -> GeneralizedEquation<f64> {
        GeneralizedEquation::new(
            VectorFn::new(1, 1, |x: &Vector<f64>| Vector::new(vec![x[0] * x[0] - 2.0])),
            JacobianFn::new(1, 1, |x: &Vector<f64>| Matrix::new(1, 1, vec![2.0 * x[0]])),
            SetValuedMap::Zero,
        )
        .unwrap()
    }

    fn halfline() -> SetValuedMap<f64> {
        SetValuedMap::normal_cone_of_box(vec![0.0], vec![f64::INFINITY])
    }

    #[test]
    fn rejects_unsupported_representation() {
        let r = GeneralizedEquation::new(
            VectorFn::new(1, 1, |x: &Vector<f64>| x.clone()),
            JacobianFn::constant(Matrix::identity(1)),
            SetValuedMap::identity(1),
        );
        assert!(r.is_err());
    }

    #[test]
    fn rejects_wrong_jacobian() {
        let r = GeneralizedEquation::new(
            VectorFn::new(1, 1, |x: &Vector<f64>| Vector::new(vec![x[0] * x[0]])),
            JacobianFn::constant(Matrix::new(1, 1, vec![1.0])),
            SetValuedMap::Zero,
        );
        assert!(matches!(r, Err(Error::JacobianMismatch(_))));
    }

    #[test]
    fn residual_examples() {
        let ge = square_minus_two();
        let r = residual(&ge, &v(&[2.0f64.sqrt()])).unwrap().value().unwrap();
        assert!(r <= 1e-15);

        let affine = GeneralizedEquation::new(
            VectorFn::new(1, 1, |x: &Vector<f64>| Vector::new(vec![x[0] + 1.0])),
            JacobianFn::constant(Matrix::identity(1)),
            halfline(),
        )
        .unwrap();
        assert_eq!(residual(&affine, &v(&[0.0])).unwrap().value().unwrap(), 0.0);
        assert_relative_eq!(residual(&affine, &v(&[1.0])).unwrap().value().unwrap(), 2.0);
    }

    #[test]
    fn subproblem_classical_newton_step() {
        let ge = square_minus_two();
        let next = solve_subproblem(&ge, &v(&[3.0])).unwrap();
        assert_relative_eq!(next[0], 11.0 / 6.0, max_relative = 1e-14);
    }

    #[test]
    fn subproblem_complementarity_corner() {
        // f(u) = u + 1 over N_{[0,∞)}: the lower-active pattern wins.
        let ge = GeneralizedEquation::new(
            VectorFn::new(1, 1, |x: &Vector<f64>| Vector::new(vec![x[0] + 1.0])),
            JacobianFn::constant(Matrix::identity(1)),
            halfline(),
        )
        .unwrap();
        let next = solve_subproblem(&ge, &v(&[0.5])).unwrap();
        assert_eq!(next[0], 0.0);
    }

    #[test]
    fn subproblem_complementarity_free() {
        // f(u) = u² + u − 3 at x_k = 2: model 3 + 5(u−2), free root 1.4.
        let ge = GeneralizedEquation::new(
            VectorFn::new(1, 1, |x: &Vector<f64>| Vector::new(vec![x[0] * x[0] + x[0] - 3.0])),
            JacobianFn::new(1, 1, |x: &Vector<f64>| Matrix::new(1, 1, vec![2.0 * x[0] + 1.0])),
            halfline(),
        )
        .unwrap();
        let next = solve_subproblem(&ge, &v(&[2.0])).unwrap();
        assert_relative_eq!(next[0], 1.4, max_relative = 1e-14);
    }

    #[test]
    fn subproblem_satisfies_inclusion() {
        let ge = GeneralizedEquation::new(
            VectorFn::new(1, 1, |x: &Vector<f64>| Vector::new(vec![x[0] * x[0] + x[0] - 3.0])),
            JacobianFn::new(1, 1, |x: &Vector<f64>| Matrix::new(1, 1, vec![2.0 * x[0] + 1.0])),
            halfline(),
        )
        .unwrap();
        for xk in [-0.4, 0.0, 0.7, 2.0, 5.0] {
            let xk = v(&[xk]);
            let next = solve_subproblem(&ge, &xk).unwrap();
            let g = ge.function().eval(&xk);
            let m = ge.jacobian().eval(&xk);
            let lin = g[0] + m[(0, 0)] * (next[0] - xk[0]);
            let d = image_distance(ge.map(), &next, &v(&[-lin])).unwrap().value().unwrap();
            assert!(d <= 1e-9, "inclusion residual {d}");
        }
    }

    #[test]
    fn newton_sqrt_two() {
        let ge = square_minus_two();
        let trace = josephy_newton(&ge, &NewtonConfig::new(v(&[3.0])).with_tol(1e-12)).unwrap();
        assert!(trace.converged);
        assert!(trace.iterates.len() - 1 <= 7);
        let root = 2.0f64.sqrt();
        assert!((trace.iterates.last().unwrap()[0] - root).abs() <= 1e-12);
        // Matches the textbook recurrence exactly.
        let mut u = 3.0f64;
        for x in trace.iterates.iter().skip(1) {
            u = u - (u * u - 2.0) / (2.0 * u);
            assert!((x[0] - u).abs() <= 1e-12);
        }
    }

    #[test]
    fn newton_complementarity_root() {
        let ge = GeneralizedEquation::new(
            VectorFn::new(1, 1, |x: &Vector<f64>| Vector::new(vec![x[0] * x[0] + x[0] - 3.0])),
            JacobianFn::new(1, 1, |x: &Vector<f64>| Matrix::new(1, 1, vec![2.0 * x[0] + 1.0])),
            halfline(),
        )
        .unwrap();
        let trace = josephy_newton(&ge, &NewtonConfig::new(v(&[2.0]))).unwrap();
        assert!(trace.converged);
        let root = (-1.0 + 13.0f64.sqrt()) / 2.0;
        assert!((trace.iterates.last().unwrap()[0] - root).abs() <= 1e-10);
    }

    #[test]
    fn newton_affine_solves_in_two_steps() {
        let ge = GeneralizedEquation::new(
            VectorFn::new(1, 1, |x: &Vector<f64>| Vector::new(vec![x[0] + 1.0])),
            JacobianFn::constant(Matrix::identity(1)),
            halfline(),
        )
        .unwrap();
        let trace = josephy_newton(&ge, &NewtonConfig::new(v(&[5.0]))).unwrap();
        assert!(trace.converged);
        assert!(trace.iterates.len() <= 3); // one subproblem solves it exactly
        assert_eq!(trace.iterates.last().unwrap()[0], 0.0);
    }

    #[test]
    fn rate_fit_quadratic() {
        let ge = square_minus_two();
        let trace = josephy_newton(&ge, &NewtonConfig::new(v(&[3.0])).with_tol(1e-13)).unwrap();
        let fit = estimate_rate(&trace, &v(&[2.0f64.sqrt()])).unwrap();
        assert!(fit.exponent >= 1.8 && fit.exponent <= 2.2, "exponent {}", fit.exponent);
        let gamma_star = 1.0 / (2.0 * 2.0f64.sqrt());
        assert!(
            (fit.gamma - gamma_star).abs() <= 0.5 * gamma_star,
            "gamma {} vs {}",
            fit.gamma,
            gamma_star
        );
    }

    #[test]
    fn rate_fit_synthetic_linear() {
        let iterates: Vec<Vector<f64>> = (0..20).map(|k| v(&[0.5f64.powi(k)])).collect();
        let trace = NewtonTrace {
            residuals: vec![ExtReal::finite(0.0); iterates.len()],
            iterates,
            errors_to_ref: None,
            rate: None,
            converged: true,
            failure: None,
        };
        let fit = estimate_rate(&trace, &v(&[0.0])).unwrap();
        assert!((fit.exponent - 1.0).abs() <= 0.05, "exponent {}", fit.exponent);
    }

    #[test]
    fn rate_fit_needs_window() {
        let trace = NewtonTrace {
            iterates: vec![v(&[5.0]), v(&[0.0])],
            residuals: vec![ExtReal::finite(5.0), ExtReal::finite(0.0)],
            errors_to_ref: None,
            rate: None,
            converged: true,
            failure: None,
        };
        assert!(matches!(
            estimate_rate(&trace, &v(&[0.0])),
            Err(Error::InsufficientDecayWindow(_))
        ));
    }

    #[test]
    fn basin_selection_on_multi_solution_instance() {
        // 0 ∈ −(x − 0.5) + N_{[0,1]}(x) has solutions {0, 0.5, 1}; starts
        // near a solution stay with it under the nearest-candidate rule.
        let ge = GeneralizedEquation::new(
            VectorFn::new(1, 1, |x: &Vector<f64>| Vector::new(vec![-(x[0] - 0.5)])),
            JacobianFn::constant(Matrix::new(1, 1, vec![-1.0])),
            SetValuedMap::normal_cone_of_box(vec![0.0], vec![1.0]),
        )
        .unwrap();
        for (x0, expected) in [(0.05, 0.0), (0.45, 0.5), (0.9, 1.0)] {
            let trace = josephy_newton(&ge, &NewtonConfig::new(v(&[x0]))).unwrap();
            assert!(trace.converged);
            assert!(
                (trace.iterates.last().unwrap()[0] - expected).abs() <= 1e-12,
                "from {x0} landed at {}",
                trace.iterates.last().unwrap()[0]
            );
        }
    }

    #[test]
    fn polyhedral_graph_subproblem() {
        // F(x) = [x, x+1]: solving u² − 2 + F(u) ∋ 0 linearized at 1.0.
        let strip = SetValuedMap::polyhedral_graph(
            Matrix::from_rows(&[vec![1.0], vec![-1.0]]),
            Matrix::from_rows(&[vec![-1.0], vec![1.0]]),
            vec![0.0, 1.0],
        );
        let ge = GeneralizedEquation::new(
            VectorFn::new(1, 1, |x: &Vector<f64>| Vector::new(vec![x[0] * x[0] - 2.0])),
            JacobianFn::new(1, 1, |x: &Vector<f64>| Matrix::new(1, 1, vec![2.0 * x[0]])),
            strip,
        )
        .unwrap();
        let trace = josephy_newton(&ge, &NewtonConfig::new(v(&[1.0]))).unwrap();
        assert!(trace.converged);
        let x = trace.iterates.last().unwrap()[0];
        let r = residual(&ge, &v(&[x])).unwrap().value().unwrap();
        assert!(r <= 1e-10, "residual {r} at {x}");
    }
}
