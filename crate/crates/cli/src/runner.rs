//! Task dispatch: turns a parsed instance into core calls and a report row.

use std::path::Path;
use std::time::Instant;

use regulab_core::conditions::{
    check_coderivative_sufficiency, check_slope_sufficiency, CoderivativeConditionQuery,
};
use regulab_core::moduli::{
    check_inverse_duality, estimate_lip_q, estimate_rg_q, ModulusEstimate, ModulusQuery,
};
use regulab_core::newton::{josephy_newton, GeneralizedEquation, NewtonConfig, NewtonTrace};
use regulab_core::perturbation::{verify_lyusternik_graves, PerturbationInstance};
use regulab_core::{ExtReal, ParametricGamma};

use crate::instance::{ExperimentInstance, Task};
use crate::report::{emit_convergence_table, join_coords, ReportRow};

fn instance_seed(seed: u64, id: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^ seed
}

fn modulus_query(inst: &ExperimentInstance) -> ModulusQuery<f64> {
    let mut q = ModulusQuery::new(inst.q, inst.xbar(), inst.ybar(), inst.estimator.delta)
        .with_resolution(inst.estimator.resolution)
        .with_refinement_levels(inst.estimator.refinement_levels);
    if let Some(mu) = inst.estimator.mu {
        q = q.with_mu(mu);
    }
    if let Some(cap) = inst.estimator.residual_cap {
        q = q.with_residual_cap(cap);
    }
    q
}

fn record_estimate(row: &mut ReportRow, prefix: &str, est: &ModulusEstimate<f64>) {
    let key = |s: &str| if prefix.is_empty() { s.to_string() } else { format!("{prefix}{s}") };
    row.output(&key("tau_hat"), est.tau_hat.to_string());
    row.output(&key("capped"), est.capped);
    row.output(&key("admissible"), est.admissible_pairs);
    if let Some((wx, wy)) = &est.witness {
        row.output(&key("witness_x"), join_coords(wx.coords()));
        row.output(&key("witness_y"), join_coords(wy.coords()));
    }
    let trace: Vec<String> =
        est.trace.iter().map(|(res, v)| format!("{res}:{v}")).collect();
    row.output(&key("trace"), trace.join("|"));
}

fn expected_pass(inst: &ExperimentInstance, est: &ModulusEstimate<f64>) -> Option<bool> {
    let expect = inst.expect.as_ref()?;
    Some(match est.tau_hat {
        ExtReal::Finite(t) if !est.capped => (t - expect.value).abs() <= expect.tol,
        _ => false,
    })
}

/// Runs one instance, never panicking across the boundary: failures land in
/// the row's `error` output.
pub fn run_instance(inst: &ExperimentInstance, seed: u64, out_dir: Option<&Path>) -> ReportRow {
    let started = Instant::now();
    let mut row = ReportRow::new(&inst.id, inst.task.name());
    row.param("q", inst.q)
        .param("delta", inst.estimator.delta)
        .param("mu", inst.estimator.mu.unwrap_or(inst.estimator.delta))
        .param("resolution", inst.estimator.resolution);

    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        dispatch(inst, seed, out_dir, &mut row)
    }));
    match outcome {
        Ok(Ok(())) => {}
        Ok(Err(message)) => {
            row.output("error", message);
            row.pass = None;
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic in task".to_string());
            row.output("error", message);
            row.pass = None;
        }
    }
    row.wall_time_ms = started.elapsed().as_millis() as u64;
    row
}

fn dispatch(
    inst: &ExperimentInstance,
    seed: u64,
    out_dir: Option<&Path>,
    row: &mut ReportRow,
) -> Result<(), String> {
    let map = inst.mapping.build()?;
    let query = modulus_query(inst);
    match inst.task {
        Task::EstimateRg => {
            let est = estimate_rg_q(&map, &query).map_err(|e| e.to_string())?;
            record_estimate(row, "", &est);
            row.pass = expected_pass(inst, &est);
        }
        Task::EstimateLip => {
            let est = estimate_lip_q(&map, &query).map_err(|e| e.to_string())?;
            record_estimate(row, "", &est);
            row.pass = expected_pass(inst, &est);
        }
        Task::VerifyLg => {
            let f = inst.perturbation.as_ref().expect("validated");
            let pinst = PerturbationInstance::new(
                map,
                f.to_vector_fn(),
                Some(f.to_jacobian_fn()),
                inst.xbar(),
                inst.ybar(),
                inst.q,
            )
            .map_err(|e| e.to_string())?;
            let rep = verify_lyusternik_graves(&pinst, &query).map_err(|e| e.to_string())?;
            row.output("rg_f", rep.rg_f.tau_hat.to_string());
            row.output("lip_f", rep.lip_f.tau_hat.to_string());
            row.output("rg_fplusf", rep.rg_perturbed.tau_hat.to_string());
            row.output("margin", rep.margin.to_string());
            row.output("vacuous", rep.vacuous);
            if rep.rg_f.capped || rep.lip_f.capped || rep.rg_perturbed.capped {
                row.output(
                    "capped",
                    format!(
                        "rg_f={} lip_f={} rg_fplusf={}",
                        rep.rg_f.capped, rep.lip_f.capped, rep.rg_perturbed.capped
                    ),
                );
            }
            row.pass = Some(rep.pass);
        }
        Task::CheckSlope => {
            let slope = inst.slope.as_ref().expect("validated");
            let verdict = check_slope_sufficiency(
                &map,
                &inst.xbar(),
                &inst.ybar(),
                inst.q,
                slope.tau,
                inst.estimator.delta,
                inst.estimator.mu.unwrap_or(inst.estimator.delta),
                ParametricGamma::new(slope.gamma),
                inst.estimator.resolution,
            )
            .map_err(|e| e.to_string())?;
            row.param("tau", slope.tau);
            row.param("gamma", slope.gamma);
            record_verdict(row, verdict);
        }
        Task::CheckCoderivative => {
            let spec = inst.coderivative.as_ref().expect("validated");
            let mut cq = CoderivativeConditionQuery::new(
                inst.q,
                spec.tau,
                inst.estimator.delta,
                inst.estimator.mu.unwrap_or(inst.estimator.delta),
                spec.eta,
                spec.alpha,
            )
            .with_seed(instance_seed(seed, &inst.id))
            .with_resolution(inst.estimator.resolution);
            cq.direction_samples = spec.direction_samples;
            cq.dual_perturbations = spec.dual_perturbations;
            let verdict =
                check_coderivative_sufficiency(&map, &inst.xbar(), &inst.ybar(), &cq)
                    .map_err(|e| e.to_string())?;
            row.param("tau", spec.tau);
            row.param("eta", spec.eta);
            row.param("alpha", spec.alpha);
            row.param("seed", instance_seed(seed, &inst.id));
            record_verdict(row, verdict);
        }
        Task::Newton => {
            let f = inst.perturbation.as_ref().expect("validated");
            let ge = GeneralizedEquation::new(f.to_vector_fn(), f.to_jacobian_fn(), map)
                .map_err(|e| e.to_string())?;
            let spec = inst.newton.as_ref().expect("validated");
            let cfg = NewtonConfig::new(regulab_core::Vector64::new(spec.x0.clone()))
                .with_tol(spec.tol)
                .with_max_iter(spec.max_iter);
            let mut trace = josephy_newton(&ge, &cfg).map_err(|e| e.to_string())?;
            if let Some(reference) = &inst.reference_solution {
                trace = trace.with_reference(&regulab_core::Vector64::new(reference.clone()));
            }
            record_newton(row, &trace);
            if let Some(dir) = out_dir {
                let path = dir.join(format!("trace_{}.csv", inst.id));
                emit_convergence_table(&trace, &path).map_err(|e| e.to_string())?;
            }
            row.pass = Some(trace.converged && trace.failure.is_none());
        }
        Task::Duality => {
            let rep = check_inverse_duality(&map, &query).map_err(|e| e.to_string())?;
            row.output("tau_hat", rep.rg.tau_hat.to_string());
            row.output("lip_inverse", rep.lip_inverse.tau_hat.to_string());
            row.output("residual", rep.residual.to_string());
            row.pass = Some(rep.pass);
        }
    }
    Ok(())
}

fn record_verdict(row: &mut ReportRow, verdict: regulab_core::conditions::ConditionVerdict<f64>) {
    row.output(
        "verdict",
        if verdict.holds_on_samples { "holds_on_samples" } else { "violated" },
    );
    row.output("admissible", verdict.admissible_count);
    if let Some(w) = &verdict.witness {
        row.output("witness_x", join_coords(w.x.coords()));
        row.output("witness_y", join_coords(w.y.coords()));
        row.output("witness_z", join_coords(w.z.coords()));
        row.output("observed", w.observed);
        if let Some(ystar) = &w.ystar {
            row.output("witness_ystar", join_coords(ystar.coords()));
        }
    }
    if let Some(ok) = verdict.cross_check_ok {
        row.output("rg_cross_check_ok", ok);
    }
    row.pass = Some(verdict.holds_on_samples);
}

fn record_newton(row: &mut ReportRow, trace: &NewtonTrace<f64>) {
    row.output("iterations", trace.iterates.len() - 1);
    row.output("converged", trace.converged);
    if let Some(r) = trace.residuals.last() {
        row.output("residual", r.to_string());
    }
    if let Some(x) = trace.iterates.last() {
        row.output("solution", join_coords(x.coords()));
    }
    if let Some(rate) = &trace.rate {
        row.output("exponent_hat", rate.exponent);
        row.output("gamma_hat", rate.gamma);
    }
    if let Some((at, message)) = &trace.failure {
        row.output("failure", format!("iteration {at}: {message}"));
    }
}

/// Batch execution summary.
pub struct BatchSummary {
    pub rows: Vec<ReportRow>,
    pub failures: Vec<String>,
}

/// Runs a batch on a worker pool (size `parallelism`, 0 = default), keeping
/// rows in instance order; per-instance errors are recorded and the batch
/// continues.
pub fn run_batch(
    instances: &[ExperimentInstance],
    parallelism: usize,
    seed: u64,
    out_dir: &Path,
    verbose: bool,
) -> std::io::Result<BatchSummary> {
    std::fs::create_dir_all(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .expect("worker pool");
    let rows: Vec<ReportRow> = pool.install(|| {
        use rayon::prelude::*;
        instances
            .par_iter()
            .map(|inst| {
                if verbose {
                    eprintln!("[regulab] running {} ({})", inst.id, inst.task.name());
                }
                let row = run_instance(inst, seed, Some(out_dir));
                if verbose {
                    eprintln!(
                        "[regulab] finished {} in {} ms{}",
                        inst.id,
                        row.wall_time_ms,
                        row.outputs
                            .get("error")
                            .map(|e| format!(" (error: {e})"))
                            .unwrap_or_default()
                    );
                }
                row
            })
            .collect()
    });
    let failures: Vec<String> =
        rows.iter().filter(|r| r.is_error()).map(|r| r.instance_id.clone()).collect();
    crate::report::write_reports(&rows, out_dir)?;
    Ok(BatchSummary { rows, failures })
}
