//! Grid-based estimators for the order-q regularity modulus rg^q F(x̄,ȳ) and
//! the Hölder continuity moduli lip^q, plus the inverse-duality consistency
//! check rg^q F = (lip^{1/q} F^{-1})^{-q}.
//!
//! Estimates are grid extremes, not certified moduli: rg estimates approach
//! the truth from above (min over a subset of pairs), lip estimates from
//! below (max over a subset). Each estimate carries its refinement trace so
//! tests can assert the convergence direction.

use crate::geometry::{Error, ExtReal, Result, Vector};
use crate::grid::{axis_budget, ball_grid, refine};
use crate::mappings::{
    graph_sample, image_distance, inverse, preimage_distance, preimage_root_set, EvalRegion,
    SetValuedMap, VectorFn,
};
use crate::scalar::{cap_value, cast, exclusion_band, membership_tol, Scalar};

/// Base point, order, neighborhood and sampling parameters of a modulus query.
#[derive(Clone, Debug)]
pub struct ModulusQuery<T> {
    pub q: T,
    pub xbar: Vector<T>,
    pub ybar: Vector<T>,
    pub delta: T,
    pub mu: T,
    pub residual_cap: Option<T>,
    pub resolution: usize,
    pub refinement_levels: usize,
}

impl<T: Scalar> ModulusQuery<T> {
    /// Query with μ = δ, no residual cap, resolution 21 and a single level.
    pub fn new(q: T, xbar: Vector<T>, ybar: Vector<T>, delta: T) -> Self {
        assert!(q.is_finite() && q > T::zero(), "order q must be positive");
        assert!(delta.is_finite() && delta > T::zero(), "delta must be positive");
        Self { q, xbar, ybar, delta, mu: delta, residual_cap: None, resolution: 21, refinement_levels: 1 }
    }

    pub fn with_resolution(mut self, resolution: usize) -> Self {
        assert!(resolution >= 5, "resolution must be at least 5");
        self.resolution = resolution;
        self
    }

    pub fn with_refinement_levels(mut self, levels: usize) -> Self {
        assert!(levels >= 1);
        self.refinement_levels = levels;
        self
    }

    pub fn with_mu(mut self, mu: T) -> Self {
        assert!(mu.is_finite() && mu > T::zero());
        self.mu = mu;
        self
    }

    pub fn with_residual_cap(mut self, cap: T) -> Self {
        assert!(cap.is_finite() && cap > T::zero());
        self.residual_cap = Some(cap);
        self
    }

    fn search_region(&self) -> EvalRegion<T> {
        let two = cast::<T>(2.0);
        EvalRegion::new(
            self.xbar.clone(),
            self.ybar.clone(),
            self.delta * two,
            self.delta * two,
            self.resolution.max(5),
        )
    }
}

/// An estimated modulus with its witness and refinement history.
#[derive(Clone, Debug)]
pub struct ModulusEstimate<T> {
    /// The grid extreme; equal to the cap value when `capped`.
    pub tau_hat: ExtReal<T>,
    /// Pair attaining the extreme at the finest level (rg: the (x,y) of the
    /// minimal ratio; lip: the (x,y) of the maximal one; the single-valued
    /// estimator stores the (x,x') pair instead).
    pub witness: Option<(Vector<T>, Vector<T>)>,
    pub admissible_pairs: usize,
    /// One `(nominal resolution, value)` entry per refinement level.
    pub trace: Vec<(usize, ExtReal<T>)>,
    /// True when no admissible pair existed and `tau_hat` is the cap value.
    pub capped: bool,
}

fn require_on_graph<T: Scalar>(map: &SetValuedMap<T>, x: &Vector<T>, y: &Vector<T>) -> Result<()> {
    match image_distance(map, x, y)? {
        ExtReal::Finite(r) if r <= membership_tol::<T>() => Ok(()),
        ExtReal::Finite(r) => Err(Error::BasePointOffGraph { residual: r.to_f64().unwrap_or(f64::NAN) }),
        ExtReal::PlusInf => Err(Error::BasePointOffGraph { residual: f64::INFINITY }),
    }
}

/// Estimates rg^q F(x̄,ȳ): the least ratio d^q(y,F(x)) / d(x,F^{-1}(y)) over
/// grid pairs of B_δ(x̄) × B_δ(ȳ), excluding pairs inside the 1e-6 band
/// around F^{-1}(y) and, when a residual cap is set, pairs with
/// d^q(y,F(x)) ≥ cap.
pub fn estimate_rg_q<T: Scalar>(
    map: &SetValuedMap<T>,
    query: &ModulusQuery<T>,
) -> Result<ModulusEstimate<T>> {
    require_on_graph(map, &query.xbar, &query.ybar)?;
    let n = query.xbar.dim();
    let m = query.ybar.dim();
    let band = exclusion_band::<T>();
    let search = query.search_region();

    // Per-y root caching is sound only for single-valued representations,
    // where the preimage is a set of isolated points; set-valued sums have
    // continuum preimages that must be probed near each query point.
    let needs_root_search =
        matches!(map, SetValuedMap::Smooth { .. } | SetValuedMap::SumWithFunction { .. })
            && map.single_value(&query.xbar, m).is_some();

    let mut trace = Vec::new();
    let mut final_level: Option<(Option<(Vector<T>, Vector<T>)>, usize, Option<T>)> = None;
    for level in 0..query.refinement_levels {
        let res_x = if n == 1 {
            refine(query.resolution, level)
        } else {
            axis_budget(query.resolution, n).min(5)
        };
        let res_y = refine(axis_budget(query.resolution, m), if m == 1 { level } else { level.min(2) });
        let xs = ball_grid(&query.xbar, query.delta, res_x);
        let ys = ball_grid(&query.ybar, query.delta, res_y);

        let mut best: Option<T> = None;
        let mut witness = None;
        let mut admissible = 0usize;
        for y in &ys {
            // The preimage of y does not depend on x; for root-search
            // representations resolve the root set once per y.
            let roots = if needs_root_search {
                Some(preimage_root_set(map, y, &search)?)
            } else {
                None
            };
            for x in &xs {
                let r = image_distance(map, x, y)?;
                let ExtReal::Finite(rv) = r else { continue };
                if rv <= membership_tol::<T>() {
                    // y ∈ F(x) puts x inside F^{-1}(y): excluded pair.
                    continue;
                }
                let rq = rv.powf(query.q);
                if let Some(cap) = query.residual_cap {
                    if rq >= cap {
                        continue;
                    }
                }
                let (dist, search_limited) = match &roots {
                    Some(rs) if rs.is_empty() => (ExtReal::PlusInf, true),
                    Some(rs) => {
                        let d = rs
                            .iter()
                            .map(|r| r.dist(x))
                            .fold(None::<T>, |acc, v| Some(acc.map_or(v, |a| a.min(v))));
                        (ExtReal::finite(d.unwrap()), false)
                    }
                    None => {
                        let p = preimage_distance(map, x, y, &search)?;
                        (p.distance, p.search_limited)
                    }
                };
                let ratio = match dist {
                    ExtReal::Finite(p) if p <= band => continue,
                    ExtReal::Finite(p) => rq / p,
                    ExtReal::PlusInf if search_limited => continue,
                    // True emptiness of F^{-1}(y): no positive modulus is valid.
                    ExtReal::PlusInf => T::zero(),
                };
                admissible += 1;
                if best.map_or(true, |b| ratio < b) {
                    best = Some(ratio);
                    witness = Some((x.clone(), y.clone()));
                }
            }
        }
        let value = best.map_or(ExtReal::Finite(cap_value::<T>()), ExtReal::finite);
        trace.push((refine(query.resolution, level), value));
        final_level = Some((witness, admissible, best));
    }

    let (witness, admissible, best) = final_level.expect("at least one refinement level");
    Ok(ModulusEstimate {
        tau_hat: best.map_or(ExtReal::Finite(cap_value::<T>()), ExtReal::finite),
        witness,
        admissible_pairs: admissible,
        trace,
        capped: best.is_none(),
    })
}

/// Estimates lip^q Φ(x̄,ȳ): the largest ratio d^q(y,Φ(x)) / d(x,x') over
/// sampled graph points (x', y) and sampled x, a lower estimate of the
/// Hölder continuity modulus.
pub fn estimate_lip_q<T: Scalar>(
    map: &SetValuedMap<T>,
    query: &ModulusQuery<T>,
) -> Result<ModulusEstimate<T>> {
    require_on_graph(map, &query.xbar, &query.ybar)?;
    let band = exclusion_band::<T>();

    let mut trace = Vec::new();
    let mut final_level: Option<(Option<(Vector<T>, Vector<T>)>, usize, Option<T>)> = None;
    for level in 0..query.refinement_levels {
        let region = EvalRegion::new(
            query.xbar.clone(),
            query.ybar.clone(),
            query.delta,
            query.delta,
            refine(query.resolution, level),
        );
        let pairs = graph_sample(map, &region)?;
        let mut xs: Vec<Vector<T>> = Vec::new();
        for (x, _) in &pairs {
            if xs.iter().all(|u| u.dist(x) > membership_tol::<T>()) {
                xs.push(x.clone());
            }
        }

        let mut best: Option<T> = None;
        let mut witness = None;
        let mut admissible = 0usize;
        for (xp, y) in &pairs {
            for x in &xs {
                let d = x.dist(xp);
                if d < band {
                    continue;
                }
                let r = image_distance(map, x, y)?;
                let ExtReal::Finite(rv) = r else { continue };
                let ratio = rv.powf(query.q) / d;
                admissible += 1;
                if best.map_or(true, |b| ratio > b) {
                    best = Some(ratio);
                    witness = Some((x.clone(), y.clone()));
                }
            }
        }
        let value = best.map_or(ExtReal::Finite(cap_value::<T>()), ExtReal::finite);
        trace.push((refine(query.resolution, level), value));
        final_level = Some((witness, admissible, best));
    }

    let (witness, admissible, best) = final_level.expect("at least one refinement level");
    Ok(ModulusEstimate {
        tau_hat: best.map_or(ExtReal::Finite(cap_value::<T>()), ExtReal::finite),
        witness,
        admissible_pairs: admissible,
        trace,
        capped: best.is_none(),
    })
}

/// Single-valued Hölder modulus estimate: the largest ‖f(x)−f(x')‖^q/‖x−x'‖
/// over grid pairs of B_δ(x̄). Orders q > 1 are legal here.
pub fn estimate_lip_q_function<T: Scalar>(
    f: &VectorFn<T>,
    xbar: &Vector<T>,
    q: T,
    delta: T,
    resolution: usize,
) -> ModulusEstimate<T> {
    assert!(q > T::zero() && delta > T::zero());
    let band = exclusion_band::<T>();
    let xs = ball_grid(xbar, delta, axis_budget(resolution, xbar.dim()));
    let values: Vec<Vector<T>> = xs.iter().map(|x| f.eval(x)).collect();
    let mut best: Option<T> = None;
    let mut witness = None;
    let mut admissible = 0usize;
    for i in 0..xs.len() {
        for j in (i + 1)..xs.len() {
            let d = xs[i].dist(&xs[j]);
            if d < band {
                continue;
            }
            let ratio = values[i].dist(&values[j]).powf(q) / d;
            admissible += 1;
            if best.map_or(true, |b| ratio > b) {
                best = Some(ratio);
                witness = Some((xs[i].clone(), xs[j].clone()));
            }
        }
    }
    ModulusEstimate {
        tau_hat: best.map_or(ExtReal::Finite(cap_value::<T>()), ExtReal::finite),
        witness,
        admissible_pairs: admissible,
        trace: vec![(resolution, best.map_or(ExtReal::Finite(cap_value::<T>()), ExtReal::finite))],
        capped: best.is_none(),
    }
}

/// Consistency report for rg^q F = (lip^{1/q} F^{-1})^{-q}.
#[derive(Clone, Debug)]
pub struct DualityReport<T> {
    pub rg: ModulusEstimate<T>,
    pub lip_inverse: ModulusEstimate<T>,
    pub residual: ExtReal<T>,
    pub pass: bool,
}

/// Estimates both sides of the inverse duality and reports the residual
/// |rg_hat − lip_hat^{−q}|; PASS at 5% of max(1, rg_hat).
pub fn check_inverse_duality<T: Scalar>(
    map: &SetValuedMap<T>,
    query: &ModulusQuery<T>,
) -> Result<DualityReport<T>> {
    let rg = estimate_rg_q(map, query)?;
    let inv = match inverse(map) {
        Ok(inv) => inv,
        Err(Error::NotInvertible) => {
            // Grid-representable fallback: sample the graph and swap pairs.
            let region = EvalRegion::new(
                query.xbar.clone(),
                query.ybar.clone(),
                query.delta,
                query.delta,
                refine(query.resolution, query.refinement_levels - 1),
            );
            let pairs = graph_sample(map, &region)?;
            if pairs.is_empty() {
                return Err(Error::Precondition("no graph points to invert".into()));
            }
            inverse(&SetValuedMap::sampled(pairs))?
        }
        Err(e) => return Err(e),
    };
    let inv_query = ModulusQuery {
        q: T::one() / query.q,
        xbar: query.ybar.clone(),
        ybar: query.xbar.clone(),
        delta: query.delta,
        mu: query.mu,
        residual_cap: None,
        resolution: query.resolution,
        refinement_levels: query.refinement_levels,
    };
    let lip_inverse = estimate_lip_q(&inv, &inv_query)?;
    let residual = match (rg.tau_hat, lip_inverse.tau_hat) {
        (ExtReal::Finite(a), ExtReal::Finite(b)) if b > T::zero() && !rg.capped && !lip_inverse.capped => {
            ExtReal::finite((a - b.powf(-query.q)).abs())
        }
        _ => ExtReal::PlusInf,
    };
    let pass = match (residual, rg.tau_hat) {
        (ExtReal::Finite(r), ExtReal::Finite(a)) => r <= cast::<T>(0.05) * T::one().max(a),
        _ => false,
    };
    Ok(DualityReport { rg, lip_inverse, residual, pass })
}
