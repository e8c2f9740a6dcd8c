//! Primal (slope) and dual (coderivative) regularity conditions, evaluated
//! numerically on sampled neighborhoods, the slope chain rule, and an exact
//! Ekeland-point oracle on finite metric spaces.
//!
//! Sampled verdicts are evidence, not proof: the conditions quantify over
//! continuum regions, so checkers report `holds_on_samples`, never "holds".

use crate::geometry::{product_distance, Error, ExtReal, ParametricGamma, Result, Vector};
use crate::grid::{axis_budget, ball_grid, cube_grid};
use crate::linalg::{solve_or_minnorm, Matrix};
use crate::mappings::{
    graph_sample, image_distance, preimage_distance, slice_candidates, EvalRegion, SetValuedMap,
};
use crate::moduli::{estimate_rg_q, ModulusEstimate, ModulusQuery};
use crate::scalar::{cast, exclusion_band, graph_tol, membership_tol, Scalar};

/// ψ_y(u,v) = ‖v − y‖^q on the graph of F, `+∞` off it.
pub fn psi_value<T: Scalar>(
    map: &SetValuedMap<T>,
    y: &Vector<T>,
    q: T,
    u: &Vector<T>,
    v: &Vector<T>,
) -> Result<ExtReal<T>> {
    let on_graph = matches!(image_distance(map, u, v)?, ExtReal::Finite(r) if r <= graph_tol::<T>());
    if on_graph {
        Ok(ExtReal::finite(v.dist(y).powf(q)))
    } else {
        Ok(ExtReal::PlusInf)
    }
}

/// A slope query: where, toward which target, and at which radii to sample.
#[derive(Clone, Debug)]
pub struct SlopeQuery<T> {
    /// Point (x, z) on the graph of F.
    pub point: (Vector<T>, Vector<T>),
    /// Target y of ψ_y.
    pub y: Vector<T>,
    pub q: T,
    pub gamma: ParametricGamma<T>,
    /// Strictly decreasing radii, each at least 1e-5.
    pub radii: Vec<T>,
    pub resolution: usize,
}

impl<T: Scalar> SlopeQuery<T> {
    pub fn new(
        point: (Vector<T>, Vector<T>),
        y: Vector<T>,
        q: T,
        gamma: ParametricGamma<T>,
        radii: Vec<T>,
        resolution: usize,
    ) -> Self {
        assert!(!radii.is_empty(), "at least one radius");
        assert!(
            radii.windows(2).all(|w| w[1] < w[0]) && radii.iter().all(|r| *r >= cast(1e-5)),
            "radii must be strictly decreasing and at least 1e-5"
        );
        Self { point, y, q, gamma, radii, resolution }
    }

    /// Geometric radius ladder r0, r0/2, ..., with `levels` rungs.
    pub fn geometric_radii(r0: T, levels: usize) -> Vec<T> {
        (0..levels).map(|k| r0 / cast::<T>(2.0f64.powi(k as i32))).collect()
    }
}

/// Local slope of ψ_y along the graph of F at (x,z), per radius: the largest
/// quotient (‖z−y‖^q − ‖v−y‖^q)_+ / d_γ((u,v),(x,z)) over sampled graph
/// points within the product-metric ball. Each value is a lower bound on the
/// true local supremum at its radius; the smallest radius is the working
/// limsup estimate. A radius with no graph points records `None`.
pub fn slope_psi<T: Scalar>(
    map: &SetValuedMap<T>,
    query: &SlopeQuery<T>,
) -> Result<Vec<(T, Option<T>)>> {
    let (x, z) = (&query.point.0, &query.point.1);
    match image_distance(map, x, z)? {
        ExtReal::Finite(r) if r <= graph_tol::<T>() => {}
        _ => return Err(Error::Precondition("slope point must lie on the graph".into())),
    }
    let base = z.dist(&query.y).powf(query.q);
    let mut out = Vec::with_capacity(query.radii.len());
    for &radius in &query.radii {
        let region = EvalRegion::new(
            x.clone(),
            z.clone(),
            radius,
            radius / query.gamma.get(),
            query.resolution.max(3),
        );
        let pairs = graph_sample(map, &region)?;
        let mut best: Option<T> = None;
        for (u, v) in &pairs {
            let d = product_distance((u, v), (x, z), query.gamma)?;
            if d <= cast(1e-12) || d > radius * (T::one() + cast(1e-9)) {
                continue;
            }
            let numer = (base - v.dist(&query.y).powf(query.q)).max(T::zero());
            let quot = numer / d;
            if best.map_or(true, |b| quot > b) {
                best = Some(quot);
            }
        }
        out.push((radius, best));
    }
    Ok(out)
}

/// Witness of a failed sampled condition.
#[derive(Clone, Debug)]
pub struct ConditionWitness<T> {
    pub x: Vector<T>,
    pub y: Vector<T>,
    pub z: Vector<T>,
    /// Dual element for the coderivative condition, absent for the slope one.
    pub ystar: Option<Vector<T>>,
    /// The quantity that fell below the threshold.
    pub observed: T,
}

/// Verdict of a sampled sufficiency check.
#[derive(Clone, Debug)]
pub struct ConditionVerdict<T> {
    pub holds_on_samples: bool,
    pub witness: Option<ConditionWitness<T>>,
    pub admissible_count: usize,
    /// When the condition held, the conclusion is cross-checked: the capped
    /// rg estimate must reach 0.9·τ.
    pub rg_cross_check: Option<ModulusEstimate<T>>,
    pub cross_check_ok: Option<bool>,
}

/// Admissible triples (x, y, z): x in B_{δ+μ}(x̄), y in B_δ(ȳ) with x outside
/// F^{-1}(y), z in F(x) with ‖z−y‖ below the residual window (τμ)^{1/q}.
#[allow(clippy::too_many_arguments)]
fn admissible_triples<T: Scalar>(
    map: &SetValuedMap<T>,
    xbar: &Vector<T>,
    ybar: &Vector<T>,
    q: T,
    tau: T,
    delta: T,
    mu: T,
    resolution: usize,
) -> Result<Vec<(Vector<T>, Vector<T>, Vector<T>)>> {
    let window = (tau * mu).powf(T::one() / q);
    let n = xbar.dim();
    let m = ybar.dim();
    let xs = ball_grid(xbar, delta + mu, axis_budget(resolution, n));
    let ys = ball_grid(ybar, delta, axis_budget(resolution, m));
    let search = EvalRegion::new(
        xbar.clone(),
        ybar.clone(),
        cast::<T>(2.0) * (delta + mu),
        cast::<T>(2.0) * delta,
        resolution.max(5),
    );
    let band = exclusion_band::<T>();
    let mut triples = Vec::new();
    for y in &ys {
        let zs_lattice = cube_grid(y, window, axis_budget(resolution, m).min(9));
        for x in &xs {
            let pre = preimage_distance(map, x, y, &search)?;
            match pre.distance {
                ExtReal::Finite(p) if p <= band => continue,
                _ => {}
            }
            for z in slice_candidates(map, x, &zs_lattice, m)? {
                if z.dist(y) < window {
                    triples.push((x.clone(), y.clone(), z));
                }
            }
        }
    }
    Ok(triples)
}

/// Samples the slope condition for order-q metric regularity with constants
/// (τ, δ, μ, γ): every admissible triple must show a final slope estimate of
/// at least 0.9·τ (10% sampling slack). An inconclusive sampling reports
/// `holds_on_samples` with an admissible count of zero.
#[allow(clippy::too_many_arguments)]
pub fn check_slope_sufficiency<T: Scalar>(
    map: &SetValuedMap<T>,
    xbar: &Vector<T>,
    ybar: &Vector<T>,
    q: T,
    tau: T,
    delta: T,
    mu: T,
    gamma: ParametricGamma<T>,
    resolution: usize,
) -> Result<ConditionVerdict<T>> {
    let slack = cast::<T>(0.9);
    let radii = SlopeQuery::geometric_radii(delta / cast(4.0), 3);
    let mut admissible = 0usize;
    let mut witness = None;
    for (x, y, z) in admissible_triples(map, xbar, ybar, q, tau, delta, mu, resolution)? {
        let query =
            SlopeQuery::new((x.clone(), z.clone()), y.clone(), q, gamma, radii.clone(), resolution);
        let estimates = slope_psi(map, &query)?;
        let Some((_, Some(final_est))) = estimates.last().copied() else { continue };
        admissible += 1;
        if final_est < tau * slack {
            witness = Some(ConditionWitness { x, y, z, ystar: None, observed: final_est });
            break;
        }
    }
    finish_verdict(map, xbar, ybar, q, tau, delta, mu, resolution, admissible, witness)
}

#[allow(clippy::too_many_arguments)]
fn finish_verdict<T: Scalar>(
    map: &SetValuedMap<T>,
    xbar: &Vector<T>,
    ybar: &Vector<T>,
    q: T,
    tau: T,
    delta: T,
    mu: T,
    resolution: usize,
    admissible_count: usize,
    witness: Option<ConditionWitness<T>>,
) -> Result<ConditionVerdict<T>> {
    let holds = witness.is_none();
    let (rg_cross_check, cross_check_ok) = if holds && admissible_count > 0 {
        let query = ModulusQuery::new(q, xbar.clone(), ybar.clone(), delta)
            .with_mu(mu)
            .with_residual_cap(tau * mu)
            .with_resolution(resolution.max(9));
        let est = estimate_rg_q(map, &query)?;
        let ok = matches!(est.tau_hat, ExtReal::Finite(t) if t >= tau * cast::<T>(0.9));
        (Some(est), Some(ok))
    } else {
        (None, None)
    };
    Ok(ConditionVerdict {
        holds_on_samples: holds,
        witness,
        admissible_count,
        rg_cross_check,
        cross_check_ok,
    })
}

/// Finitely generated normal cone of a polyhedral graph at a graph point:
/// the nonnegative hull of the active constraint normals.
#[derive(Clone, Debug)]
pub struct PolyhedralNormalCone<T> {
    /// Active-row normals (u_i, v_i) in R^n × R^m.
    pub generators: Vec<(Vector<T>, Vector<T>)>,
}

/// Support enumeration for the coderivative handles at most this many
/// active generators.
pub const MAX_GENERATORS: usize = 12;

/// Active rows of the polyhedral graph constraints at (x, z).
pub fn normal_cone_polyhedral_graph<T: Scalar>(
    map: &SetValuedMap<T>,
    x: &Vector<T>,
    z: &Vector<T>,
) -> Result<PolyhedralNormalCone<T>> {
    let SetValuedMap::PolyhedralGraph { a, b, c } = map else {
        return Err(Error::Precondition("normal cone requires a polyhedral graph".into()));
    };
    let tol = membership_tol::<T>();
    let ax = a.matvec(x.coords());
    let bz = b.matvec(z.coords());
    let mut generators = Vec::new();
    for i in 0..c.len() {
        let lhs = ax[i] + bz[i];
        if lhs > c[i] + tol {
            return Err(Error::Precondition("point is not on the polyhedral graph".into()));
        }
        if (lhs - c[i]).abs() <= tol {
            generators.push((Vector::new(a.row(i).to_vec()), Vector::new(b.row(i).to_vec())));
        }
    }
    Ok(PolyhedralNormalCone { generators })
}

/// d(0, D*F(x,z)(y*)) for a polyhedral graph: the least ‖Σ λ_i u_i‖ over
/// λ ≥ 0 with Σ λ_i v_i = −y*, solved exactly by support enumeration;
/// `+∞` when the coderivative image is empty.
pub fn coderivative_distance<T: Scalar>(
    map: &SetValuedMap<T>,
    x: &Vector<T>,
    z: &Vector<T>,
    ystar: &Vector<T>,
) -> Result<ExtReal<T>> {
    let cone = normal_cone_polyhedral_graph(map, x, z)?;
    coderivative_distance_from_cone(&cone, ystar)
}

/// Same computation starting from an explicit normal cone.
pub fn coderivative_distance_from_cone<T: Scalar>(
    cone: &PolyhedralNormalCone<T>,
    ystar: &Vector<T>,
) -> Result<ExtReal<T>> {
    let k = cone.generators.len();
    if k > MAX_GENERATORS {
        return Err(Error::TooLarge {
            context: "coderivative support enumeration",
            bound: MAX_GENERATORS,
            got: k,
        });
    }
    let m = ystar.dim();
    let eq_tol = cast::<T>(1e-9) * T::one().max(ystar.norm());
    let mut best: Option<T> = None;

    // Empty support: λ = 0 works exactly when y* = 0.
    if ystar.norm() <= eq_tol {
        best = Some(T::zero());
    }

    for mask in 1u32..(1u32 << k) {
        let support: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let s = support.len();
        // KKT of: min ‖U λ‖² s.t. V λ = −y*, restricted to this support.
        let dim = s + m;
        let mut kkt = Matrix::zeros(dim, dim);
        let mut rhs = vec![T::zero(); dim];
        for (ii, &i) in support.iter().enumerate() {
            let (ui, vi) = &cone.generators[i];
            for (jj, &j) in support.iter().enumerate() {
                let (uj, _) = &cone.generators[j];
                kkt[(ii, jj)] = cast::<T>(2.0) * ui.dot(uj);
            }
            for r in 0..m {
                kkt[(ii, s + r)] = vi[r];
                kkt[(s + r, ii)] = vi[r];
            }
        }
        for r in 0..m {
            rhs[s + r] = -ystar[r];
        }
        let (sol, _) = solve_or_minnorm(&kkt, &rhs);
        if sol.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let lambda = &sol[..s];
        if lambda.iter().any(|l| *l < -cast::<T>(1e-9)) {
            continue;
        }
        // Verify the equality constraint; the KKT system may be inconsistent.
        let mut v_sum = vec![T::zero(); m];
        for (ii, &i) in support.iter().enumerate() {
            let (_, vi) = &cone.generators[i];
            for r in 0..m {
                v_sum[r] = v_sum[r] + lambda[ii] * vi[r];
            }
        }
        let feas = v_sum
            .iter()
            .zip(ystar.coords())
            .fold(T::zero(), |acc, (a, b)| acc + (*a + *b) * (*a + *b))
            .sqrt();
        if feas > eq_tol {
            continue;
        }
        let n = cone.generators[0].0.dim();
        let mut u_sum = vec![T::zero(); n];
        for (ii, &i) in support.iter().enumerate() {
            let (ui, _) = &cone.generators[i];
            for r in 0..n {
                u_sum[r] = u_sum[r] + lambda[ii] * ui[r];
            }
        }
        let value = Vector::new(u_sum).norm();
        if best.map_or(true, |b| value < b) {
            best = Some(value);
        }
    }
    Ok(best.map_or(ExtReal::PlusInf, ExtReal::finite))
}

/// Parameters for the sampled coderivative sufficiency check.
#[derive(Clone, Debug)]
pub struct CoderivativeConditionQuery<T> {
    pub q: T,
    pub tau: T,
    pub delta: T,
    pub mu: T,
    /// Dual perturbation budget, in (0,1).
    pub eta: T,
    /// Alignment threshold for z*, in (0,1).
    pub alpha: T,
    pub spatial_resolution: usize,
    /// Unit-sphere directions tried for z*.
    pub direction_samples: usize,
    /// Perturbation directions for y* per accepted z*.
    pub dual_perturbations: usize,
    pub seed: u64,
}

impl<T: Scalar> CoderivativeConditionQuery<T> {
    pub fn new(q: T, tau: T, delta: T, mu: T, eta: T, alpha: T) -> Self {
        assert!(eta > T::zero() && eta < T::one(), "eta must lie in (0,1)");
        assert!(alpha > T::zero() && alpha < T::one(), "alpha must lie in (0,1)");
        Self {
            q,
            tau,
            delta,
            mu,
            eta,
            alpha,
            spatial_resolution: 9,
            direction_samples: 32,
            dual_perturbations: 4,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_resolution(mut self, resolution: usize) -> Self {
        self.spatial_resolution = resolution;
        self
    }
}

/// Deterministic unit-sphere sample: alternating signs in R, a golden-angle
/// circle in R², a Fibonacci lattice in R³ and a seeded congruential
/// generator beyond that. The seed rotates the low-discrepancy sequences.
pub fn unit_sphere_points<T: Scalar>(dim: usize, count: usize, seed: u64) -> Vec<Vector<T>> {
    assert!(dim >= 1);
    let golden = 0.618_033_988_749_894_9_f64;
    let offset = (seed as f64 * golden).fract();
    match dim {
        1 => (0..count)
            .map(|i| Vector::new(vec![if i % 2 == 0 { T::one() } else { -T::one() }]))
            .collect(),
        2 => (0..count)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * ((i as f64 * golden + offset).fract());
                Vector::new(vec![cast(t.cos()), cast(t.sin())])
            })
            .collect(),
        3 => (0..count)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                let r = (1.0 - z * z).sqrt();
                let t = 2.0 * std::f64::consts::PI * ((i as f64 * golden + offset).fract());
                Vector::new(vec![cast(r * t.cos()), cast(r * t.sin()), cast(z)])
            })
            .collect(),
        _ => {
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(97);
            let mut next = move || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
            };
            (0..count)
                .map(|_| loop {
                    let coords: Vec<f64> = (0..dim).map(|_| next()).collect();
                    let n = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
                    if n > 1e-3 {
                        return Vector::new(coords.iter().map(|c| cast(*c / n)).collect());
                    }
                })
                .collect()
        }
    }
}

/// Samples the coderivative condition: every admissible tuple (x,y,z,z*,y*)
/// must satisfy q‖z−y‖^{q−1}·d(0, D*F(x,z)(y*)) ≥ τ.
pub fn check_coderivative_sufficiency<T: Scalar>(
    map: &SetValuedMap<T>,
    xbar: &Vector<T>,
    ybar: &Vector<T>,
    query: &CoderivativeConditionQuery<T>,
) -> Result<ConditionVerdict<T>> {
    let mut admissible = 0usize;
    let mut witness = None;
    let m = ybar.dim();
    let dirs = unit_sphere_points::<T>(m, query.direction_samples, query.seed);
    let perturb_dirs =
        unit_sphere_points::<T>(m, query.dual_perturbations.max(1), query.seed ^ 0x9e37);

    'outer: for (x, y, z) in admissible_triples(
        map,
        xbar,
        ybar,
        query.q,
        query.tau,
        query.delta,
        query.mu,
        query.spatial_resolution,
    )? {
        let gap = z.sub(&y);
        let gap_norm = gap.norm();
        if gap_norm <= cast(1e-12) {
            continue;
        }
        let factor = query.q * gap_norm.powf(query.q - T::one());
        let cone = normal_cone_polyhedral_graph(map, &x, &z)?;
        for zstar in &dirs {
            if zstar.dot(&gap) <= query.alpha * gap_norm {
                continue;
            }
            // Duals within the perturbation budget q‖z−y‖^{q−1}‖y*−z*‖ < η.
            let bound = query.eta / factor;
            let mut duals = vec![zstar.clone()];
            for w in &perturb_dirs {
                duals.push(zstar.add(&w.scale(bound * cast(0.45))));
                duals.push(zstar.add(&w.scale(bound * cast(0.9))));
            }
            for ystar in duals {
                if factor * ystar.sub(zstar).norm() >= query.eta {
                    continue;
                }
                admissible += 1;
                let dist = coderivative_distance_from_cone(&cone, &ystar)?;
                let lhs = match dist {
                    ExtReal::Finite(d) => factor * d,
                    ExtReal::PlusInf => continue, // empty image: nothing to violate
                };
                if lhs < query.tau {
                    witness = Some(ConditionWitness {
                        x: x.clone(),
                        y: y.clone(),
                        z: z.clone(),
                        ystar: Some(ystar),
                        observed: lhs,
                    });
                    break 'outer;
                }
            }
        }
    }
    finish_verdict(
        map,
        xbar,
        ybar,
        query.q,
        query.tau,
        query.delta,
        query.mu,
        query.spatial_resolution,
        admissible,
        witness,
    )
}

/// Local slope of a scalar function: per radius, the largest
/// (g(x) − g(u))_+ / d(x,u) over sampled u; `+∞` everywhere when g(x) = +∞.
pub fn numeric_slope<T: Scalar>(
    g: &dyn Fn(&Vector<T>) -> ExtReal<T>,
    x: &Vector<T>,
    radii: &[T],
    resolution: usize,
) -> Vec<(T, ExtReal<T>)> {
    let gx = match g(x) {
        ExtReal::Finite(v) => v,
        ExtReal::PlusInf => return radii.iter().map(|r| (*r, ExtReal::PlusInf)).collect(),
    };
    let mut out = Vec::with_capacity(radii.len());
    for &radius in radii {
        let mut best = T::zero();
        for u in ball_grid(x, radius, axis_budget(resolution, x.dim())) {
            let d = u.dist(x);
            if d <= cast(1e-15) {
                continue;
            }
            let gu = match g(&u) {
                ExtReal::Finite(v) => v,
                ExtReal::PlusInf => continue, // numerator (gx − ∞)_+ = 0
            };
            let quot = (gx - gu).max(T::zero()) / d;
            if quot.is_finite() && quot > best {
                best = quot;
            }
        }
        out.push((radius, ExtReal::finite(best)));
    }
    out
}

/// Outcome of the slope chain-rule check |∇g^q| = q·g^{q−1}·|∇g|.
#[derive(Clone, Debug)]
pub struct ChainRuleCheck<T> {
    /// Final-radius estimate of |∇(g^q)|(x).
    pub power_slope: T,
    /// q·g(x)^{q−1} times the final-radius estimate of |∇g|(x).
    pub predicted: T,
    pub residual: T,
    pub relative_residual: T,
    /// PASS at 5% relative.
    pub pass: bool,
}

/// Verifies the slope chain rule at a point with g(x) > 0.
pub fn slope_chain_rule_check<T: Scalar>(
    g: &dyn Fn(&Vector<T>) -> ExtReal<T>,
    x: &Vector<T>,
    q: T,
    radii: &[T],
    resolution: usize,
) -> Result<ChainRuleCheck<T>> {
    let gx = match g(x) {
        ExtReal::Finite(v) if v > T::zero() => v,
        _ => return Err(Error::Precondition("chain rule requires g(x) > 0".into())),
    };
    let powered = |u: &Vector<T>| g(u).powq(q);
    let lhs = numeric_slope(&powered, x, radii, resolution);
    let rhs = numeric_slope(g, x, radii, resolution);
    let (Some((_, ExtReal::Finite(power_slope))), Some((_, ExtReal::Finite(base_slope)))) =
        (lhs.last().copied(), rhs.last().copied())
    else {
        return Err(Error::Precondition("slope estimates did not stay finite".into()));
    };
    let predicted = q * gx.powf(q - T::one()) * base_slope;
    let residual = (power_slope - predicted).abs();
    let relative_residual = residual / predicted.abs().max(cast(1e-12));
    Ok(ChainRuleCheck {
        power_slope,
        predicted,
        residual,
        relative_residual,
        pass: relative_residual <= cast(0.05),
    })
}

/// Finite metric space instance for the Ekeland point construction.
#[derive(Clone, Debug)]
pub struct EkelandQuery<T> {
    dist: Matrix<T>,
    values: Vec<ExtReal<T>>,
    x0: usize,
    epsilon: T,
    lambda: T,
}

impl<T: Scalar> EkelandQuery<T> {
    /// Validates that `dist` is a metric on indices (symmetric, zero
    /// diagonal, triangle inequality) and that values[x0] < inf + ε.
    pub fn new(
        dist: Matrix<T>,
        values: Vec<ExtReal<T>>,
        x0: usize,
        epsilon: T,
        lambda: T,
    ) -> Result<Self> {
        let n = values.len();
        if dist.rows() != n || dist.cols() != n {
            return Err(Error::Precondition("distance matrix shape mismatch".into()));
        }
        if x0 >= n {
            return Err(Error::Precondition("base index out of range".into()));
        }
        if !(epsilon > T::zero() && lambda > T::zero()) {
            return Err(Error::Precondition("epsilon and lambda must be positive".into()));
        }
        let tol = cast::<T>(1e-9);
        for i in 0..n {
            if dist[(i, i)].abs() > tol {
                return Err(Error::Precondition("distance diagonal must be zero".into()));
            }
            for j in 0..n {
                if dist[(i, j)] < -tol || (dist[(i, j)] - dist[(j, i)]).abs() > tol {
                    return Err(Error::Precondition("distance must be symmetric nonnegative".into()));
                }
                for k in 0..n {
                    if dist[(i, j)] > dist[(i, k)] + dist[(k, j)] + tol {
                        return Err(Error::Precondition("triangle inequality violated".into()));
                    }
                }
            }
        }
        let inf = values
            .iter()
            .filter_map(ExtReal::value)
            .fold(None::<T>, |acc, v| Some(acc.map_or(v, |a| a.min(v))));
        let Some(inf) = inf else {
            return Err(Error::Precondition("all values are +inf".into()));
        };
        match values[x0] {
            ExtReal::Finite(v) if v < inf + epsilon => {}
            _ => {
                return Err(Error::Precondition(
                    "base value must be within epsilon of the infimum".into(),
                ))
            }
        }
        Ok(Self { dist, values, x0, epsilon, lambda })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn penalized(&self, u: usize, at: usize) -> ExtReal<T> {
        let rate = self.epsilon / self.lambda;
        self.values[u].add(ExtReal::finite(rate * self.dist[(u, at)]))
    }
}

/// The selected point with its descent path and exhaustively checked
/// certificate.
#[derive(Clone, Debug)]
pub struct EkelandPoint<T> {
    pub index: usize,
    pub path: Vec<usize>,
    pub certificate: EkelandCertificate<T>,
}

/// The three certificate clauses, checked over the whole finite space.
#[derive(Clone, Debug)]
pub struct EkelandCertificate<T> {
    /// d(x̂, x0) < λ.
    pub within_lambda: bool,
    /// f(x̂) ≤ f(x0).
    pub value_not_increased: bool,
    /// f(u) + (ε/λ)·d(u, x̂) ≥ f(x̂) for every u.
    pub variational: bool,
    pub distance_to_start: T,
}

impl<T> EkelandCertificate<T> {
    pub fn ok(&self) -> bool {
        self.within_lambda && self.value_not_increased && self.variational
    }
}

/// Exact Ekeland point on a finite space: iterate to the penalized argmin
/// while it strictly decreases the value, ties broken by lowest index.
pub fn ekeland_point<T: Scalar>(query: &EkelandQuery<T>) -> Result<EkelandPoint<T>> {
    let n = query.len();
    let mut current = query.x0;
    let mut path = vec![current];
    loop {
        let mut best = ExtReal::PlusInf;
        let mut best_idx = None;
        for u in 0..n {
            let p = query.penalized(u, current);
            if best_idx.is_none() || p < best {
                best = p;
                best_idx = Some(u);
            }
        }
        let strict_decrease = match (best, query.values[current]) {
            (ExtReal::Finite(b), ExtReal::Finite(c)) => b < c,
            (ExtReal::Finite(_), ExtReal::PlusInf) => true,
            _ => false,
        };
        if !strict_decrease {
            break;
        }
        current = best_idx.expect("nonempty space");
        path.push(current);
    }
    let certificate = verify_ekeland_certificate(query, current);
    Ok(EkelandPoint { index: current, path, certificate })
}

/// Exhaustive check of the three certificate clauses at `index`.
pub fn verify_ekeland_certificate<T: Scalar>(
    query: &EkelandQuery<T>,
    index: usize,
) -> EkelandCertificate<T> {
    let d0 = query.dist[(index, query.x0)];
    let within_lambda = d0 < query.lambda;
    let value_not_increased = query.values[index] <= query.values[query.x0];
    let variational = (0..query.len()).all(|u| query.penalized(u, index) >= query.values[index]);
    EkelandCertificate { within_lambda, value_not_increased, variational, distance_to_start: d0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mappings::{JacobianFn, VectorFn};
    use approx::assert_relative_eq;

    fn v(c: &[f64]) -> Vector<f64> {
        Vector::new(c.to_vec())
    }

    fn cube_map() -> SetValuedMap<f64> {
        SetValuedMap::smooth(
            VectorFn::new(1, 1, |x: &Vector<f64>| Vector::new(vec![x[0].powi(3)])),
            JacobianFn::new(1, 1, |x: &Vector<f64>| Matrix::new(1, 1, vec![3.0 * x[0] * x[0]])),
        )
    }

    fn equality_graph(a: &Matrix<f64>) -> SetValuedMap<f64> {
        // gph {y = Ax} as two opposite inequality blocks over (x, y).
        let (m, n) = (a.rows(), a.cols());
        let mut ga = Matrix::zeros(2 * m, n);
        let mut gb = Matrix::zeros(2 * m, m);
        for i in 0..m {
            for j in 0..n {
                ga[(i, j)] = a[(i, j)];
                ga[(m + i, j)] = -a[(i, j)];
            }
            gb[(i, i)] = -1.0;
            gb[(m + i, i)] = 1.0;
        }
        SetValuedMap::polyhedral_graph(ga, gb, vec![0.0; 2 * m])
    }

    #[test]
    fn psi_examples() {
        let id = SetValuedMap::identity(1);
        let p = psi_value(&id, &v(&[0.0]), 1.0, &v(&[0.5]), &v(&[0.5])).unwrap();
        assert_relative_eq!(p.value().unwrap(), 0.5);
        let off = psi_value(&id, &v(&[0.0]), 1.0, &v(&[0.5]), &v(&[0.7])).unwrap();
        assert!(off.is_inf());
        let cube = cube_map();
        let p = psi_value(&cube, &v(&[0.0]), 1.0 / 3.0, &v(&[0.5]), &v(&[0.125])).unwrap();
        assert_relative_eq!(p.value().unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn slope_psi_identity_toward_target() {
        let id = SetValuedMap::identity(1);
        let query = SlopeQuery::new(
            (v(&[0.5]), v(&[0.5])),
            v(&[0.0]),
            1.0,
            ParametricGamma::new(1.0),
            SlopeQuery::geometric_radii(0.2, 3),
            41,
        );
        let est = slope_psi(&id, &query).unwrap();
        let last = est.last().unwrap().1.unwrap();
        assert!((last - 1.0).abs() <= 0.05, "slope {last}");
    }

    #[test]
    fn slope_psi_zero_at_target() {
        let id = SetValuedMap::identity(1);
        let query = SlopeQuery::new(
            (v(&[0.5]), v(&[0.5])),
            v(&[0.5]),
            1.0,
            ParametricGamma::new(1.0),
            SlopeQuery::geometric_radii(0.2, 2),
            21,
        );
        let est = slope_psi(&id, &query).unwrap();
        assert_eq!(est.last().unwrap().1.unwrap(), 0.0);
    }

    #[test]
    fn slope_psi_cube_is_identity_slope() {
        // |u³|^{1/3} = |u| identically, so the slope of ψ_0 along the graph is 1.
        let cube = cube_map();
        let query = SlopeQuery::new(
            (v(&[0.2]), v(&[0.008])),
            v(&[0.0]),
            1.0 / 3.0,
            ParametricGamma::new(1.0),
            SlopeQuery::geometric_radii(0.1, 3),
            41,
        );
        let est = slope_psi(&cube, &query).unwrap();
        let last = est.last().unwrap().1.unwrap();
        assert!((last - 1.0).abs() <= 0.05, "slope {last}");
    }

    #[test]
    fn slope_psi_nondecreasing_in_resolution() {
        let cube = cube_map();
        let mk = |res: usize| {
            SlopeQuery::new(
                (v(&[0.3]), v(&[0.027])),
                v(&[0.1]),
                1.0 / 3.0,
                ParametricGamma::new(1.0),
                vec![0.1],
                res,
            )
        };
        let coarse = slope_psi(&cube, &mk(11)).unwrap()[0].1.unwrap();
        let fine = slope_psi(&cube, &mk(21)).unwrap()[0].1.unwrap();
        assert!(fine >= coarse, "coarse {coarse} fine {fine}");
    }

    // For the graph of a smooth scalar function with q = 1 and γ = 1, the
    // slope of ψ_y at (x, f(x)) reduces to |f'(x)| / max(1, |f'(x)|).
    #[test]
    fn slope_psi_matches_smooth_reduction() {
        for (x, fp) in [(0.6f64, 1.2f64), (0.2, 0.4)] {
            let square = SetValuedMap::smooth(
                VectorFn::new(1, 1, |u: &Vector<f64>| Vector::new(vec![u[0] * u[0]])),
                JacobianFn::new(1, 1, |u: &Vector<f64>| Matrix::new(1, 1, vec![2.0 * u[0]])),
            );
            assert!((2.0 * x - fp).abs() < 1e-12);
            let query = SlopeQuery::new(
                (v(&[x]), v(&[x * x])),
                v(&[x * x - 0.3]),
                1.0,
                ParametricGamma::new(1.0),
                SlopeQuery::geometric_radii(0.02, 3),
                41,
            );
            let est = slope_psi(&square, &query).unwrap().last().unwrap().1.unwrap();
            let analytic = fp.abs() / fp.abs().max(1.0);
            assert!(
                (est - analytic).abs() <= 0.1 * analytic,
                "x={x}: slope {est} vs analytic {analytic}"
            );
        }
    }

    // Necessity direction on convex graphs: a linear map with modulus τ*
    // shows slopes of at least 0.9·τ* with γ = 1/τ* on admissible triples.
    #[test]
    fn slope_necessity_direction_linear() {
        for (map, tau_star) in [
            (SetValuedMap::linear(Matrix::new(1, 1, vec![0.5])), 0.5f64),
            (SetValuedMap::identity(1), 1.0),
            (SetValuedMap::linear(Matrix::new(1, 1, vec![2.0])), 2.0),
        ] {
            let gamma = ParametricGamma::new(1.0 / tau_star);
            let window = (tau_star * 0.5f64).min(1.0);
            for xi in [-0.4, 0.1, 0.3] {
                let x = v(&[xi]);
                let z = v(&[tau_star * xi]);
                for dy in [0.3 * window, 0.8 * window] {
                    let y = v(&[tau_star * xi - dy]);
                    let query = SlopeQuery::new(
                        (x.clone(), z.clone()),
                        y,
                        1.0,
                        gamma,
                        SlopeQuery::geometric_radii(0.05, 3),
                        41,
                    );
                    let est = slope_psi(&map, &query).unwrap().last().unwrap().1.unwrap();
                    assert!(
                        est >= 0.9 * tau_star,
                        "map scale {tau_star}, x={xi}, dy={dy}: slope {est}"
                    );
                }
            }
        }
    }

    // Necessity direction for the coderivative on convex graphs: linear
    // instances keep q‖z−y‖^{q−1}·d(0,D*F(y*)) ≥ 0.9·τ*(1−η) on duals
    // within the perturbation budget.
    #[test]
    fn coderivative_necessity_direction_linear() {
        let a = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]);
        let tau_star = 1.0; // σ_min
        let eta = 0.2;
        let g = equality_graph(&a);
        let origin = v(&[0.0, 0.0]);
        for zstar in unit_sphere_points::<f64>(2, 16, 5) {
            for w in unit_sphere_points::<f64>(2, 4, 9) {
                let ystar = zstar.add(&w.scale(0.9 * eta));
                let d = coderivative_distance(&g, &origin, &origin, &ystar)
                    .unwrap()
                    .value()
                    .unwrap();
                assert!(
                    d >= 0.9 * tau_star * (1.0 - eta),
                    "ystar {:?}: distance {d}",
                    ystar.coords()
                );
            }
        }
    }

    #[test]
    fn slope_sufficiency_identity() {
        let id = SetValuedMap::identity(1);
        let gamma = ParametricGamma::new(1.0);
        let ok = check_slope_sufficiency(&id, &v(&[0.0]), &v(&[0.0]), 1.0, 0.9, 0.5, 0.5, gamma, 9)
            .unwrap();
        assert!(ok.holds_on_samples);
        assert!(ok.admissible_count > 0);
        assert_eq!(ok.cross_check_ok, Some(true));

        let bad = check_slope_sufficiency(&id, &v(&[0.0]), &v(&[0.0]), 1.0, 1.5, 0.5, 0.5, gamma, 9)
            .unwrap();
        assert!(!bad.holds_on_samples);
        assert!(bad.witness.is_some());
    }

    #[test]
    fn normal_cone_active_rows() {
        // Box graph {y ≥ x, y ≤ x+1} at (0,0): the lower face is active.
        let strip = SetValuedMap::polyhedral_graph(
            Matrix::from_rows(&[vec![1.0], vec![-1.0]]),
            Matrix::from_rows(&[vec![-1.0], vec![1.0]]),
            vec![0.0, 1.0],
        );
        let cone = normal_cone_polyhedral_graph(&strip, &v(&[0.0]), &v(&[0.0])).unwrap();
        assert_eq!(cone.generators.len(), 1);
        assert_eq!(cone.generators[0].0[0], 1.0);
        assert_eq!(cone.generators[0].1[0], -1.0);
        // Interior point of the strip: no active rows.
        let cone = normal_cone_polyhedral_graph(&strip, &v(&[0.0]), &v(&[0.5])).unwrap();
        assert!(cone.generators.is_empty());
        // Off-graph points are rejected.
        assert!(normal_cone_polyhedral_graph(&strip, &v(&[0.0]), &v(&[2.0])).is_err());
    }

    #[test]
    fn coderivative_linear_closed_form() {
        let a = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]);
        let g = equality_graph(&a);
        let d = coderivative_distance(&g, &v(&[0.0, 0.0]), &v(&[0.0, 0.0]), &v(&[0.0, 1.0]))
            .unwrap();
        assert_relative_eq!(d.value().unwrap(), 1.0, epsilon = 1e-8);
        let d = coderivative_distance(&g, &v(&[0.0, 0.0]), &v(&[0.0, 0.0]), &v(&[0.0, 0.0]))
            .unwrap();
        assert_eq!(d.value().unwrap(), 0.0);
    }

    #[test]
    fn coderivative_single_generator_face() {
        let strip = SetValuedMap::polyhedral_graph(
            Matrix::from_rows(&[vec![1.0], vec![-1.0]]),
            Matrix::from_rows(&[vec![-1.0], vec![1.0]]),
            vec![0.0, 1.0],
        );
        // Generator (1,−1): y* = 1 needs λ = 1, giving ‖u‖ = 1.
        let d = coderivative_distance(&strip, &v(&[0.0]), &v(&[0.0]), &v(&[1.0])).unwrap();
        assert_relative_eq!(d.value().unwrap(), 1.0, epsilon = 1e-10);
        // y* = −1 is infeasible from this face.
        let d = coderivative_distance(&strip, &v(&[0.0]), &v(&[0.0]), &v(&[-1.0])).unwrap();
        assert!(d.is_inf());
    }

    #[test]
    fn coderivative_sufficiency_linear() {
        let a = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]);
        let g = equality_graph(&a);
        let origin = v(&[0.0, 0.0]);
        let ok = check_coderivative_sufficiency(
            &g,
            &origin,
            &origin,
            &CoderivativeConditionQuery::new(1.0, 0.9, 0.5, 0.5, 0.05, 0.5).with_seed(7),
        )
        .unwrap();
        assert!(ok.holds_on_samples, "witness {:?}", ok.witness);
        assert!(ok.admissible_count > 0);
        let bad = check_coderivative_sufficiency(
            &g,
            &origin,
            &origin,
            &CoderivativeConditionQuery::new(1.0, 1.5, 0.5, 0.5, 0.05, 0.5).with_seed(7),
        )
        .unwrap();
        assert!(!bad.holds_on_samples);
        assert!(bad.witness.is_some());
    }

    #[test]
    fn numeric_slope_examples() {
        let absval = |u: &Vector<f64>| ExtReal::finite(u[0].abs());
        let radii = [1e-2, 1e-3];
        let s = numeric_slope(&absval, &v(&[1.0]), &radii, 41);
        assert_relative_eq!(s.last().unwrap().1.value().unwrap(), 1.0, epsilon = 1e-9);
        let s = numeric_slope(&absval, &v(&[0.0]), &radii, 41);
        assert_eq!(s.last().unwrap().1.value().unwrap(), 0.0);
        let square = |u: &Vector<f64>| ExtReal::finite(u[0] * u[0]);
        let s = numeric_slope(&square, &v(&[0.3]), &radii, 41);
        let last = s.last().unwrap().1.value().unwrap();
        assert!((last - 0.6).abs() <= 0.02, "slope {last}");
    }

    #[test]
    fn numeric_slope_infinite_value() {
        let g = |_: &Vector<f64>| ExtReal::PlusInf;
        let s = numeric_slope(&g, &v(&[0.0]), &[1e-2], 11);
        assert!(s[0].1.is_inf());
    }

    #[test]
    fn chain_rule_examples() {
        let radii = [1e-3, 1e-4];
        // g = u² + 1 at x = 1, q = 1/2: slope of √(u²+1) is 1/√2.
        let g = |u: &Vector<f64>| ExtReal::finite(u[0] * u[0] + 1.0);
        let check = slope_chain_rule_check(&g, &v(&[1.0]), 0.5, &radii, 41).unwrap();
        assert!(check.pass, "relative {}", check.relative_residual);
        assert!((check.power_slope - 1.0 / 2.0f64.sqrt()).abs() <= 0.01);
        // q = 1 degenerates.
        let check = slope_chain_rule_check(&g, &v(&[1.0]), 1.0, &radii, 41).unwrap();
        assert!(check.residual <= 1e-12);
        // Constant g: both sides zero.
        let c = |_: &Vector<f64>| ExtReal::finite(3.0);
        let check = slope_chain_rule_check(&c, &v(&[0.0]), 0.5, &radii, 11).unwrap();
        assert_eq!(check.power_slope, 0.0);
        assert_eq!(check.predicted, 0.0);
        // Nonpositive g rejected.
        let neg = |_: &Vector<f64>| ExtReal::finite(-1.0);
        assert!(slope_chain_rule_check(&neg, &v(&[0.0]), 0.5, &radii, 11).is_err());
    }

    #[test]
    fn ekeland_single_point() {
        let q = EkelandQuery::new(Matrix::zeros(1, 1), vec![ExtReal::finite(1.0f64)], 0, 1.0, 1.0)
            .unwrap();
        let p = ekeland_point(&q).unwrap();
        assert_eq!(p.index, 0);
        assert!(p.certificate.ok());
    }

    #[test]
    fn ekeland_two_point_tie_stays_put() {
        // values (0.5, 0), dist 1, ε = 1, λ = 2: candidate 1 scores
        // 0 + 0.5·1 = 0.5, no strict decrease, so x̂ = 0.
        let dist = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let q = EkelandQuery::new(
            dist,
            vec![ExtReal::finite(0.5f64), ExtReal::finite(0.0)],
            0,
            1.0,
            2.0,
        )
        .unwrap();
        let p = ekeland_point(&q).unwrap();
        assert_eq!(p.index, 0);
        assert!(p.certificate.ok());
    }

    #[test]
    fn ekeland_rejects_bad_base() {
        let dist = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let r = EkelandQuery::new(
            dist,
            vec![ExtReal::finite(5.0f64), ExtReal::finite(0.0)],
            0,
            1.0,
            2.0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn sphere_points_have_unit_norm() {
        for dim in 1..=4 {
            for p in unit_sphere_points::<f64>(dim, 16, 3) {
                assert_relative_eq!(p.norm(), 1.0, epsilon = 1e-9);
                assert_eq!(p.dim(), dim);
            }
        }
    }
}
