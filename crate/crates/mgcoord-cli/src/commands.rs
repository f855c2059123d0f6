//! Subcommand implementations.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;

use mgcoord::coarsening::{self, run_multigrid, TransferKind};
use mgcoord::coordination::{
    self, certify, CoordinationState, GsEngine, GsRun, RunParams, WLayout,
};
use mgcoord::lifting::{self, LiftedProblem};
use mgcoord::ordering::OrderingSchedule;
use mgcoord::qp::{self, CoupledQP, KKTSolution};

use crate::config::{
    load_case, resolve_ordering, CliError, CliResult, LoadedCase, Resolved, VariantRun,
};
use crate::svg;
use crate::trace::{rows_to_csv, TraceRow};

fn write_output(path: Option<&Path>, content: &str) -> CliResult<()> {
    match path {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(content.as_bytes())
                .map_err(|e| CliError::Numerical(format!("cannot write to stdout: {e}")))
        }
    }
}

/// Centralized solve, tolerating the dense cap: oversized problems simply
/// run without an oracle reference.
fn try_oracle(problem: &CoupledQP) -> CliResult<Option<KKTSolution>> {
    match qp::solve_centralized(problem) {
        Ok(solution) => Ok(Some(solution)),
        Err(mgcoord::Error::DimensionCap { .. }) => Ok(None),
        Err(err) => Err(err.into()),
    }
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

pub fn cmd_solve(resolved: &Resolved, output: Option<&Path>) -> CliResult<()> {
    let case = load_case(resolved)?;
    let solution = qp::solve_centralized(&case.problem)?;
    let qz = qp::csr_matvec(&case.problem.q, &solution.primal);
    let objective = 0.5 * solution.primal.dot(&qz) - case.problem.c.dot(&solution.primal);
    let doc = serde_json::json!({
        "case": resolved.case.name(),
        "primal": solution.primal.iter().copied().collect::<Vec<f64>>(),
        "dual": solution.dual.iter().copied().collect::<Vec<f64>>(),
        "residual_norm": solution.residual_norm,
        "objective": objective,
    });
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| CliError::Numerical(format!("serialization failed: {e}")))?;
    write_output(output, &(text + "\n"))
}

// ---------------------------------------------------------------------------
// gs
// ---------------------------------------------------------------------------

struct TraceContext<'a> {
    engine: GsEngine<'a>,
    layout: WLayout,
    owned: Vec<usize>,
    order: OrderingSchedule,
    oracle_w: Option<DVector<f64>>,
}

fn trace_context<'a>(
    ordering_name: &str,
    case: &LoadedCase,
    lifted: &'a LiftedProblem,
    oracle: Option<&KKTSolution>,
) -> CliResult<TraceContext<'a>> {
    let engine = GsEngine::new(lifted)?;
    let layout = WLayout::of(lifted);
    let owned = layout.owned_indices(lifted);
    let order = resolve_ordering(ordering_name, lifted, case.metadata.as_ref())?;
    let oracle_w = match oracle {
        Some(sol) => Some(coordination::oracle_w(lifted, &sol.primal, &sol.dual)?),
        None => None,
    };
    Ok(TraceContext {
        engine,
        layout,
        owned,
        order,
        oracle_w,
    })
}

fn errors(w: &DVector<f64>, reference: &DVector<f64>, owned: &[usize]) -> (f64, f64) {
    let delta = w - reference;
    let owned_norm = owned
        .iter()
        .map(|&i| delta[i] * delta[i])
        .sum::<f64>()
        .sqrt();
    (delta.norm(), owned_norm)
}

/// Sweep loop mirroring the library run, producing harness trace rows with
/// optional wall-clock timing.
fn run_traced(
    ctx: &TraceContext<'_>,
    initial: CoordinationState,
    tol: f64,
    max_steps: usize,
    label: &str,
    timing: bool,
) -> CliResult<(Vec<TraceRow>, bool)> {
    let start = Instant::now();
    let clock = |timing: bool| {
        if timing {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        }
    };
    let mut rows = Vec::new();
    let mut state = initial;
    let mut w = ctx.layout.to_w(&state);
    if let Some(star) = &ctx.oracle_w {
        let (error_w, error_primal) = errors(&w, star, &ctx.owned);
        rows.push(TraceRow {
            experiment: label.to_string(),
            step: state.step,
            error_w,
            error_primal_owned: error_primal,
            wall_time_ms: clock(timing),
        });
    }
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_steps {
        let next = ctx.engine.sweep(&state, &ctx.order)?;
        let w_next = ctx.layout.to_w(&next);
        let diff = (&w_next - &w).amax();
        sweeps += 1;
        let (error_w, error_primal) = match &ctx.oracle_w {
            Some(star) => errors(&w_next, star, &ctx.owned),
            None => errors(&w_next, &w, &ctx.owned),
        };
        rows.push(TraceRow {
            experiment: label.to_string(),
            step: next.step,
            error_w,
            error_primal_owned: error_primal,
            wall_time_ms: clock(timing),
        });
        state = next;
        w = w_next;
        if diff <= tol {
            converged = true;
            break;
        }
    }
    Ok((rows, converged))
}

fn warm_initial(
    case: &LoadedCase,
    lifted: &LiftedProblem,
    level: usize,
) -> CliResult<CoordinationState> {
    let kind = transfer_kind(case)?;
    let transfer = kind.build(level)?;
    let coarse = coarsening::coarsen_problem(&case.problem, &transfer)?;
    let coarse_solution = qp::solve_centralized(&coarse)?;
    let (z_fine, duals_fine) = coarsening::prolong(&transfer, &coarse_solution)?;
    Ok(coordination::state_from_fine_solution(
        lifted,
        &z_fine,
        &duals_fine,
    )?)
}

fn transfer_kind(case: &LoadedCase) -> CliResult<TransferKind> {
    case.metadata
        .as_ref()
        .map(|m| m.transfer_kind)
        .ok_or_else(|| {
            CliError::Config("coarsening needs a structured case (temporal or spatial)".into())
        })
}

fn rows_from_run(run: &GsRun, label: &str) -> Vec<TraceRow> {
    run.trace
        .iter()
        .map(|point| TraceRow {
            experiment: label.to_string(),
            step: point.step,
            error_w: point.error_w,
            error_primal_owned: point.error_primal_owned,
            wall_time_ms: 0.0,
        })
        .collect()
}

pub fn cmd_gs(resolved: &Resolved, output: Option<&Path>, timing: bool) -> CliResult<()> {
    let case = load_case(resolved)?;
    let oracle = try_oracle(&case.problem)?;
    let lifted = lifting::lift_explicit(&case.problem, &case.partitioning)?;
    let ctx = trace_context(&resolved.ordering, &case, &lifted, oracle.as_ref())?;

    let (rows, converged, label) = if let Some(schedule) = &resolved.schedule {
        let kind = transfer_kind(&case)?;
        let label = format!("{}/{}/schedule", resolved.case.name(), resolved.ordering);
        let run = run_multigrid(
            &case.problem,
            &case.partitioning,
            &kind,
            schedule,
            &ctx.order,
            &RunParams {
                tol: resolved.tol,
                max_steps: resolved.max_steps,
                parallel: false,
            },
            oracle.as_ref(),
        )?;
        (rows_from_run(&run, &label), run.converged, label)
    } else {
        let (initial, tag) = match resolved.warm_start {
            Some(level) => (
                warm_initial(&case, &lifted, level)?,
                format!("warm-{level}"),
            ),
            None => (CoordinationState::zero(&lifted), "cold".to_string()),
        };
        let label = format!("{}/{}/{}", resolved.case.name(), resolved.ordering, tag);
        let (rows, converged) = run_traced(
            &ctx,
            initial,
            resolved.tol,
            resolved.max_steps,
            &label,
            timing,
        )?;
        (rows, converged, label)
    };

    let mut footers = vec![format!("seed={}", resolved.seed)];
    if !converged {
        footers.push(format!("not_converged experiment={label}"));
    }
    write_output(output, &rows_to_csv(&rows, &footers))
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

pub fn cmd_spectrum(resolved: &Resolved, output: Option<&Path>) -> CliResult<()> {
    let case = load_case(resolved)?;
    let lifted = lifting::lift_explicit(&case.problem, &case.partitioning)?;
    let engine = GsEngine::new(&lifted)?;
    let order = resolve_ordering(&resolved.ordering, &lifted, case.metadata.as_ref())?;
    let certificate = certify(&engine, &order, None)?;
    let text = certificate.to_json()?;
    write_output(output, &(text + "\n"))
}

// ---------------------------------------------------------------------------
// experiment
// ---------------------------------------------------------------------------

pub fn cmd_experiment(
    resolved: &Resolved,
    out_csv: &Path,
    out_svg: &Path,
    timing: bool,
) -> CliResult<()> {
    if resolved.variants.is_empty() {
        return Err(CliError::Config(
            "experiment needs a non-empty variants list".into(),
        ));
    }
    let case = load_case(resolved)?;
    let oracle = try_oracle(&case.problem)?;
    let lifted = lifting::lift_explicit(&case.problem, &case.partitioning)?;

    let mut all_rows: Vec<TraceRow> = Vec::new();
    let mut footers: Vec<String> = vec![format!("seed={}", resolved.seed)];
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();

    for variant in &resolved.variants {
        let (rows, converged) = match &variant.run {
            VariantRun::Ordering(name) => {
                let ctx = trace_context(name, &case, &lifted, oracle.as_ref())?;
                run_traced(
                    &ctx,
                    CoordinationState::zero(&lifted),
                    resolved.tol,
                    resolved.max_steps,
                    &variant.name,
                    timing,
                )?
            }
            VariantRun::Schedule(schedule) => {
                let kind = transfer_kind(&case)?;
                let order = resolve_ordering(&resolved.ordering, &lifted, case.metadata.as_ref())?;
                let run = run_multigrid(
                    &case.problem,
                    &case.partitioning,
                    &kind,
                    schedule,
                    &order,
                    &RunParams {
                        tol: resolved.tol,
                        max_steps: resolved.max_steps,
                        parallel: false,
                    },
                    oracle.as_ref(),
                )?;
                (rows_from_run(&run, &variant.name), run.converged)
            }
        };
        if !converged {
            footers.push(format!("not_converged experiment={}", variant.name));
        }
        series.push((
            variant.name.clone(),
            rows.iter().map(|r| (r.step as f64, r.error_w)).collect(),
        ));
        all_rows.extend(rows);
    }

    write_output(Some(out_csv), &rows_to_csv(&all_rows, &footers))?;
    let title = format!("{} case: error vs coordination step", resolved.case.name());
    let chart = svg::render_log_chart(&title, &series);
    write_output(Some(out_svg), &chart)
}
