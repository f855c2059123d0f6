//! Grid transfers between resolutions and the multi-level coordination
//! drivers built on them.
//!
//! A transfer pairs a piecewise-constant restriction `T` (one unit entry per
//! fine variable, replicating each coarse value over its cell) with a 0/1
//! constraint aggregation `U` that sums the fine constraint rows of each
//! cell. Coarsening a problem forms `T'QT`, `T'c`, `U'[A; Pi]T` and `U_A'B`;
//! prolongation maps a coarse primal-dual solution back as `z = T z~`,
//! `(nu, lambda) = U (nu~, lambda~)`. Aggregating the temporal dynamics this
//! way reproduces the coarse dynamics with step `(M/M_c) delta` and
//! cell-averaged disturbance.

use nalgebra::DVector;
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::coordination::{
    self, CoordinationState, GsEngine, GsRun, RunParams, TracePoint, WLayout,
};
use crate::error::{Error, Result};
use crate::lifting::{self, Partitioning};
use crate::ordering::OrderingSchedule;
use crate::qp::{self, CoupledQP, KKTSolution};

/// Which structured transfer family a case uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferKind {
    Temporal {
        partitions: usize,
        points_per_partition: usize,
    },
    Spatial {
        grid_partitions: usize,
        points_per_side: usize,
    },
}

impl TransferKind {
    /// Fine per-partition resolution (`M`).
    pub fn fine_resolution(&self) -> usize {
        match self {
            Self::Temporal {
                points_per_partition,
                ..
            } => *points_per_partition,
            Self::Spatial {
                points_per_side, ..
            } => *points_per_side,
        }
    }

    pub fn build(&self, coarse_resolution: usize) -> Result<GridTransfer> {
        match *self {
            Self::Temporal {
                partitions,
                points_per_partition,
            } => build_transfer_temporal(partitions, points_per_partition, coarse_resolution),
            Self::Spatial {
                grid_partitions,
                points_per_side,
            } => build_transfer_spatial(grid_partitions, points_per_side, coarse_resolution),
        }
    }
}

/// Restriction / aggregation pair linking a coarse level to a fine level.
#[derive(Debug, Clone)]
pub struct GridTransfer {
    /// Fine variables x coarse variables; full column rank.
    pub t: CsrMatrix<f64>,
    /// Fine stacked constraint rows x coarse stacked rows; full column rank,
    /// block diagonal over the `[A; Pi]` split.
    pub u: CsrMatrix<f64>,
    /// Per-partition resolution of the fine level (`M`).
    pub fine_level: usize,
    /// Per-partition resolution of the coarse level (`M_c`).
    pub coarse_level: usize,
    /// Number of `A` rows on the fine side (prefix of `u`'s rows).
    pub m_fine: usize,
    /// Number of `A` rows on the coarse side (prefix of `u`'s columns).
    pub m_coarse: usize,
}

impl GridTransfer {
    pub fn is_identity_level(&self) -> bool {
        self.fine_level == self.coarse_level
    }
}

fn check_divides(m: usize, m_c: usize) -> Result<usize> {
    if m_c == 0 || m_c > m || m % m_c != 0 {
        return Err(Error::NonDivisor {
            fine: m,
            coarse: m_c,
        });
    }
    Ok(m / m_c)
}

/// Transfer for the temporal chain: `partitions * m` fine time points with
/// `(x, u)` at each, collapsed to `m_c` coarse points per partition. `U` sums
/// the dynamics rows of each cell, which telescopes the state increments.
pub fn build_transfer_temporal(partitions: usize, m: usize, m_c: usize) -> Result<GridTransfer> {
    let cell = check_divides(m, m_c)?;
    let fine_points = partitions * m;
    let coarse_points = partitions * m_c;

    let mut t = CooMatrix::new(2 * fine_points, 2 * coarse_points);
    for i in 0..fine_points {
        let coarse = i / cell;
        t.push(2 * i, 2 * coarse, 1.0);
        t.push(2 * i + 1, 2 * coarse + 1, 1.0);
    }
    let mut u = CooMatrix::new(fine_points, coarse_points);
    for r in 0..fine_points {
        u.push(r, r / cell, 1.0);
    }
    Ok(GridTransfer {
        t: CsrMatrix::from(&t),
        u: CsrMatrix::from(&u),
        fine_level: m,
        coarse_level: m_c,
        m_fine: fine_points,
        m_coarse: coarse_points,
    })
}

/// Transfer for the 2-D mesh: `(p*m)^2` fine nodes with `(potential, source)`
/// at each, collapsed to `m_c x m_c` coarse points per partition. `U` sums the
/// `(m/m_c)^2` flow-balance rows of each coarse cell.
pub fn build_transfer_spatial(
    grid_partitions: usize,
    m: usize,
    m_c: usize,
) -> Result<GridTransfer> {
    let cell = check_divides(m, m_c)?;
    let g_fine = grid_partitions * m;
    let g_coarse = grid_partitions * m_c;
    let fine_nodes = g_fine * g_fine;
    let coarse_nodes = g_coarse * g_coarse;

    let coarse_of = |i: usize, j: usize| (i / cell) * g_coarse + j / cell;
    let mut t = CooMatrix::new(2 * fine_nodes, 2 * coarse_nodes);
    let mut u = CooMatrix::new(fine_nodes, coarse_nodes);
    for i in 0..g_fine {
        for j in 0..g_fine {
            let fine = i * g_fine + j;
            let coarse = coarse_of(i, j);
            t.push(2 * fine, 2 * coarse, 1.0);
            t.push(2 * fine + 1, 2 * coarse + 1, 1.0);
            u.push(fine, coarse, 1.0);
        }
    }
    Ok(GridTransfer {
        t: CsrMatrix::from(&t),
        u: CsrMatrix::from(&u),
        fine_level: m,
        coarse_level: m_c,
        m_fine: fine_nodes,
        m_coarse: coarse_nodes,
    })
}

/// Pose the coarse problem `min 1/2 z~' T'QT z~ - (T'c)' z~` subject to
/// `U'[A; Pi]T z~ + U_A'B d = 0`.
pub fn coarsen_problem(p: &CoupledQP, tr: &GridTransfer) -> Result<CoupledQP> {
    let n = p.n_vars();
    if tr.t.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "restriction has {} fine rows, problem has {} variables",
            tr.t.nrows(),
            n
        )));
    }
    let rows_fine = p.m() + p.p();
    if tr.u.nrows() != rows_fine || tr.m_fine != p.m() {
        return Err(Error::DimensionMismatch(format!(
            "aggregation covers {} rows ({} for A), problem has {} ({} for A)",
            tr.u.nrows(),
            tr.m_fine,
            rows_fine,
            p.m()
        )));
    }

    // Split U over the [A; Pi] block structure.
    let mut u_a = CooMatrix::new(p.m(), tr.m_coarse);
    let mut u_pi = CooMatrix::new(p.p(), tr.u.ncols() - tr.m_coarse);
    for (i, j, v) in tr.u.triplet_iter() {
        if *v == 0.0 {
            continue;
        }
        match (i < tr.m_fine, j < tr.m_coarse) {
            (true, true) => u_a.push(i, j, *v),
            (false, false) => u_pi.push(i - tr.m_fine, j - tr.m_coarse, *v),
            _ => {
                return Err(Error::InvalidProblem(
                    "aggregation mixes A rows with Pi rows".into(),
                ))
            }
        }
    }
    let u_a = CsrMatrix::from(&u_a);
    let u_pi = CsrMatrix::from(&u_pi);

    let q_coarse = &tr.t.transpose() * &(&p.q * &tr.t);
    let c_coarse = qp::csr_matvec(&tr.t.transpose(), &p.c);
    let a_coarse = &u_a.transpose() * &(&p.a * &tr.t);
    let b_coarse = &u_a.transpose() * &p.b;
    let pi_coarse = &u_pi.transpose() * &(&p.pi * &tr.t);

    // Feasibility of the aggregated constraints: the data term must lie in
    // the range of the coarse constraint matrix.
    let n_coarse = tr.t.ncols();
    let rows_coarse = a_coarse.nrows() + pi_coarse.nrows();
    if rows_coarse > 0 && n_coarse + rows_coarse <= qp::DENSE_SOLVE_CAP {
        let stacked = qp::csr_to_dense(&qp::csr_vstack(&a_coarse, &pi_coarse));
        let mut rhs = DVector::zeros(rows_coarse);
        let bd = qp::csr_matvec(&b_coarse, &p.d);
        for i in 0..b_coarse.nrows() {
            rhs[i] = -bd[i];
        }
        let mut augmented = stacked.clone().insert_column(n_coarse, 0.0);
        augmented.column_mut(n_coarse).copy_from(&rhs);
        if qp::dense_rank(&augmented) > qp::dense_rank(&stacked) {
            return Err(Error::InfeasibleCoarse);
        }
    }

    CoupledQP::new(
        q_coarse,
        c_coarse,
        a_coarse,
        b_coarse,
        pi_coarse,
        p.d.clone(),
    )
}

/// Map a coarse primal-dual solution to the fine space: `z = T z~` and
/// stacked duals `U (nu~, lambda~)`.
pub fn prolong(tr: &GridTransfer, coarse: &KKTSolution) -> Result<(DVector<f64>, DVector<f64>)> {
    if coarse.primal.len() != tr.t.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "coarse primal has length {}, restriction expects {}",
            coarse.primal.len(),
            tr.t.ncols()
        )));
    }
    if coarse.dual.len() != tr.u.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "coarse dual has length {}, aggregation expects {}",
            coarse.dual.len(),
            tr.u.ncols()
        )));
    }
    Ok((
        qp::csr_matvec(&tr.t, &coarse.primal),
        qp::csr_matvec(&tr.u, &coarse.dual),
    ))
}

// ---------------------------------------------------------------------------
// multi-level schedules
// ---------------------------------------------------------------------------

/// Ladder of coarse resolutions, ordered strictly toward fine, each dividing
/// the fine resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoarseningSchedule {
    pub levels: Vec<usize>,
    pub sweeps_per_level: usize,
}

impl CoarseningSchedule {
    pub fn new(levels: Vec<usize>, sweeps_per_level: usize) -> Self {
        Self {
            levels,
            sweeps_per_level,
        }
    }

    pub fn validate(&self, fine_resolution: usize) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::InvalidProblem("schedule has no levels".into()));
        }
        if self.sweeps_per_level == 0 {
            return Err(Error::InvalidProblem(
                "schedule needs at least one sweep per level".into(),
            ));
        }
        for window in self.levels.windows(2) {
            if window[0] >= window[1] {
                return Err(Error::InvalidProblem(format!(
                    "levels must strictly increase toward fine, got {} then {}",
                    window[0], window[1]
                )));
            }
        }
        for &level in &self.levels {
            check_divides(fine_resolution, level)?;
        }
        Ok(())
    }
}

/// Multi-level coordination: for every level below fine resolution, solve the
/// coarsened problem centrally, prolong its primal-dual solution into a fresh
/// warm start, and run `sweeps_per_level` fine-space sweeps from it; a level
/// equal to fine resolution just sweeps. After the schedule the plain
/// iteration continues until `params.tol` or `params.max_steps` total sweeps.
/// The trace concatenates per-level errors in the fine space, measured
/// against `oracle` when given.
pub fn run_multigrid(
    problem: &CoupledQP,
    partitioning: &Partitioning,
    kind: &TransferKind,
    schedule: &CoarseningSchedule,
    order: &OrderingSchedule,
    params: &RunParams,
    oracle: Option<&KKTSolution>,
) -> Result<GsRun> {
    schedule.validate(kind.fine_resolution())?;
    let lifted = lifting::lift_explicit(problem, partitioning)?;
    let engine = GsEngine::new(&lifted)?;
    order.validate(&lifted)?;
    let layout = WLayout::of(&lifted);
    let w_star = match oracle {
        Some(sol) => Some(coordination::oracle_w(&lifted, &sol.primal, &sol.dual)?),
        None => None,
    };
    let owned_sel = layout.owned_indices(&lifted);
    let error_point = |step: usize, w: &DVector<f64>, reference: &DVector<f64>| TracePoint {
        step,
        error_w: (w - reference).norm(),
        error_primal_owned: owned_sel
            .iter()
            .map(|&i| (w[i] - reference[i]) * (w[i] - reference[i]))
            .sum::<f64>()
            .sqrt(),
    };

    let mut state = CoordinationState::zero(&lifted);
    let mut w = layout.to_w(&state);
    let mut trace = Vec::new();
    if let Some(ref star) = w_star {
        trace.push(error_point(0, &w, star));
    }
    let mut sweeps = 0usize;
    let mut converged = false;

    let advance = |state: &mut CoordinationState,
                   w: &mut DVector<f64>,
                   trace: &mut Vec<TracePoint>,
                   sweeps: &mut usize|
     -> Result<bool> {
        let next = if params.parallel {
            engine.sweep_parallel(state, order)?
        } else {
            engine.sweep(state, order)?
        };
        let w_next = layout.to_w(&next);
        let diff = (&w_next - &*w).amax();
        *sweeps += 1;
        match &w_star {
            Some(star) => trace.push(error_point(next.step, &w_next, star)),
            None => trace.push(error_point(next.step, &w_next, w)),
        }
        *state = next;
        *w = w_next;
        Ok(diff <= params.tol)
    };

    'levels: for &level in &schedule.levels {
        if level != kind.fine_resolution() {
            let transfer = kind.build(level)?;
            let coarse = coarsen_problem(problem, &transfer)?;
            let coarse_solution = qp::solve_centralized(&coarse)?;
            let (z_fine, duals_fine) = prolong(&transfer, &coarse_solution)?;
            let step = state.step;
            state = coordination::state_from_fine_solution(&lifted, &z_fine, &duals_fine)?;
            state.step = step;
            w = layout.to_w(&state);
        }
        for _ in 0..schedule.sweeps_per_level {
            if sweeps >= params.max_steps {
                break 'levels;
            }
            if advance(&mut state, &mut w, &mut trace, &mut sweeps)? {
                converged = true;
                break 'levels;
            }
        }
    }
    while !converged && sweeps < params.max_steps {
        if advance(&mut state, &mut w, &mut trace, &mut sweeps)? {
            converged = true;
        }
    }

    Ok(GsRun {
        state,
        trace,
        converged,
        sweeps,
    })
}
