//! Decentralized Gauss-Seidel coordination over a lifted problem.
//!
//! One coordination step (sweep) solves every partition's KKT system
//!
//! ```text
//! [ Qbar_k  E_k'  Pi_kk' ] [z_k]      [ cbar_k - sum_{k'} Pi_k'k' lambda_k' ]
//! [ E_k     0     0      ] [nu_k]  =  [ f_k                                 ]
//! [ Pi_kk   0     0      ] [la_k]     [ -sum_{k'} Pi_kk' z_k'               ]
//! ```
//!
//! in the order given by a schedule, interface data coming from already
//! updated partitions where the schedule has passed and from the previous
//! step elsewhere. Stacking all partition states `x_k = (z_k, nu_k, la_k)`
//! into one vector `w` makes the sweep an affine map `w -> S w + r`; `S` is
//! recovered column by column by probing that map with basis vectors, and its
//! spectral radius certifies convergence: the iteration contracts exactly
//! when all eigenvalues of `S` lie strictly inside the unit circle, and the
//! error decays like `rho(S)^step`.
//!
//! Partition KKT matrices are factorized once per engine; sweeps only
//! re-solve against fresh right-hand sides.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifting::LiftedProblem;
use crate::ordering::OrderingSchedule;
use crate::qp;

/// Default cap on the stacked dimension for dense `S` assembly and dense
/// eigendecomposition. Override with the `MGCOORD_DENSE_CAP` environment
/// variable.
pub const DEFAULT_DENSE_CAP: usize = 5000;

/// Resolve the dense-operator cap from the environment.
pub fn dense_cap() -> usize {
    std::env::var("MGCOORD_DENSE_CAP")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_DENSE_CAP)
}

// ---------------------------------------------------------------------------
// state
// ---------------------------------------------------------------------------

/// Per-partition primal and dual iterates at one coordination step.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinationState {
    pub z: Vec<DVector<f64>>,
    pub nu: Vec<DVector<f64>>,
    pub lambda: Vec<DVector<f64>>,
    pub step: usize,
}

impl CoordinationState {
    pub fn zero(lifted: &LiftedProblem) -> Self {
        Self {
            z: lifted
                .partitions
                .iter()
                .map(|p| DVector::zeros(p.dim()))
                .collect(),
            nu: lifted
                .partitions
                .iter()
                .map(|p| DVector::zeros(p.n_local()))
                .collect(),
            lambda: lifted
                .partitions
                .iter()
                .map(|p| DVector::zeros(p.n_coupling()))
                .collect(),
            step: 0,
        }
    }

    pub fn matches(&self, lifted: &LiftedProblem) -> bool {
        self.z.len() == lifted.k()
            && lifted.partitions.iter().enumerate().all(|(k, p)| {
                self.z[k].len() == p.dim()
                    && self.nu[k].len() == p.n_local()
                    && self.lambda[k].len() == p.n_coupling()
            })
    }
}

/// Offsets of each partition's `(z, nu, lambda)` block inside the stacked
/// vector `w`.
#[derive(Debug, Clone)]
pub struct WLayout {
    pub z_off: Vec<usize>,
    pub nu_off: Vec<usize>,
    pub la_off: Vec<usize>,
    pub dims: Vec<(usize, usize, usize)>,
    pub total: usize,
}

impl WLayout {
    pub fn of(lifted: &LiftedProblem) -> Self {
        let k = lifted.k();
        let mut z_off = vec![0; k];
        let mut nu_off = vec![0; k];
        let mut la_off = vec![0; k];
        let mut dims = Vec::with_capacity(k);
        let mut cursor = 0;
        for (i, p) in lifted.partitions.iter().enumerate() {
            z_off[i] = cursor;
            cursor += p.dim();
            nu_off[i] = cursor;
            cursor += p.n_local();
            la_off[i] = cursor;
            cursor += p.n_coupling();
            dims.push((p.dim(), p.n_local(), p.n_coupling()));
        }
        Self {
            z_off,
            nu_off,
            la_off,
            dims,
            total: cursor,
        }
    }

    pub fn to_w(&self, state: &CoordinationState) -> DVector<f64> {
        let mut w = DVector::zeros(self.total);
        for k in 0..self.dims.len() {
            w.rows_mut(self.z_off[k], self.dims[k].0)
                .copy_from(&state.z[k]);
            w.rows_mut(self.nu_off[k], self.dims[k].1)
                .copy_from(&state.nu[k]);
            w.rows_mut(self.la_off[k], self.dims[k].2)
                .copy_from(&state.lambda[k]);
        }
        w
    }

    pub fn from_w(&self, w: &DVector<f64>, step: usize) -> CoordinationState {
        CoordinationState {
            z: (0..self.dims.len())
                .map(|k| w.rows(self.z_off[k], self.dims[k].0).into_owned())
                .collect(),
            nu: (0..self.dims.len())
                .map(|k| w.rows(self.nu_off[k], self.dims[k].1).into_owned())
                .collect(),
            lambda: (0..self.dims.len())
                .map(|k| w.rows(self.la_off[k], self.dims[k].2).into_owned())
                .collect(),
            step,
        }
    }

    /// Stacked indices of the owned primal coordinates.
    pub fn owned_indices(&self, lifted: &LiftedProblem) -> Vec<usize> {
        let mut sel = Vec::with_capacity(lifted.n_orig);
        for (k, part) in lifted.partitions.iter().enumerate() {
            for loc in 0..part.owned {
                sel.push(self.z_off[k] + loc);
            }
        }
        sel
    }
}

// ---------------------------------------------------------------------------
// engine
// ---------------------------------------------------------------------------

/// Gauss-Seidel engine over one lifted problem: per-partition KKT
/// factorizations plus the coupling adjacency, computed once.
pub struct GsEngine<'a> {
    lifted: &'a LiftedProblem,
    factors: Vec<LU<f64, Dyn, Dyn>>,
    /// For each partition `k`: list of `k'` whose coupling rows reference
    /// `k`'s variables (the dual terms entering `k`'s gradient).
    incoming: Vec<Vec<usize>>,
    layout: WLayout,
}

impl<'a> GsEngine<'a> {
    pub fn new(lifted: &'a LiftedProblem) -> Result<Self> {
        let mut factors = Vec::with_capacity(lifted.k());
        for (k, part) in lifted.partitions.iter().enumerate() {
            let d = part.dim();
            let r = part.n_local();
            let u = part.n_coupling();
            let dim = d + r + u;
            let mut a = DMatrix::zeros(dim, dim);
            a.view_mut((0, 0), (d, d)).copy_from(&part.qbar);
            if r > 0 {
                a.view_mut((d, 0), (r, d)).copy_from(&part.local_a);
                a.view_mut((0, d), (d, r))
                    .copy_from(&part.local_a.transpose());
            }
            if u > 0 {
                a.view_mut((d + r, 0), (u, d)).copy_from(&part.pi_self);
                a.view_mut((0, d + r), (d, u))
                    .copy_from(&part.pi_self.transpose());
            }
            let lu = a.lu();
            let upper = lu.u();
            let max_pivot = (0..dim).map(|i| upper[(i, i)].abs()).fold(0.0f64, f64::max);
            if dim > 0 && (0..dim).any(|i| upper[(i, i)].abs() <= qp::RANK_PIVOT_TOL * max_pivot) {
                return Err(Error::SingularPartition(k));
            }
            factors.push(lu);
        }
        let mut incoming = vec![Vec::new(); lifted.k()];
        for (k, part) in lifted.partitions.iter().enumerate() {
            for &other in part.pi_cross.keys() {
                incoming[other].push(k);
            }
        }
        Ok(Self {
            lifted,
            factors,
            incoming,
            layout: WLayout::of(lifted),
        })
    }

    pub fn lifted(&self) -> &LiftedProblem {
        self.lifted
    }

    pub fn layout(&self) -> &WLayout {
        &self.layout
    }

    /// Solve partition `k`'s KKT system against the interface values held in
    /// `state`. Pure function of its inputs: the caller stages which
    /// partitions are already updated.
    pub fn partition_solve(
        &self,
        state: &CoordinationState,
        k: usize,
    ) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        self.partition_solve_inner(state, k, true)
    }

    fn partition_solve_inner(
        &self,
        state: &CoordinationState,
        k: usize,
        use_b: bool,
    ) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let part = self
            .lifted
            .partitions
            .get(k)
            .ok_or(Error::UnknownPartition(k))?;
        let d = part.dim();
        let r = part.n_local();
        let u = part.n_coupling();
        let mut rhs = DVector::zeros(d + r + u);

        // gradient: cbar_k - sum_{k'} Pi_k'k^T lambda_k'
        if use_b {
            rhs.rows_mut(0, d).copy_from(&part.cbar);
        }
        for &other in &self.incoming[k] {
            let block = &self.lifted.partitions[other].pi_cross[&k];
            let lam = &state.lambda[other];
            if lam.len() > 0 {
                let mut g = rhs.rows_mut(0, d);
                g.gemv_tr(-1.0, block, lam, 1.0);
            }
        }
        // local rows
        if use_b && r > 0 {
            rhs.rows_mut(d, r).copy_from(&part.local_rhs);
        }
        // coupling rows: -sum_{k'} Pi_kk' z_k'
        if u > 0 {
            let mut h = rhs.rows_mut(d + r, u);
            for (&other, block) in &part.pi_cross {
                h.gemv(-1.0, block, &state.z[other], 1.0);
            }
        }

        let x = self.factors[k]
            .solve(&rhs)
            .ok_or(Error::SingularPartition(k))?;
        Ok((
            x.rows(0, d).into_owned(),
            x.rows(d, r).into_owned(),
            x.rows(d + r, u).into_owned(),
        ))
    }

    /// One coordination step: visit every group of the schedule in order,
    /// solving the group's partitions against pre-group state and committing
    /// the group atomically.
    pub fn sweep(
        &self,
        state: &CoordinationState,
        order: &OrderingSchedule,
    ) -> Result<CoordinationState> {
        self.sweep_inner(state, order, true, false)
    }

    /// Same as [`GsEngine::sweep`] but solving each group's partitions in
    /// parallel. Results are committed in partition order, so the outcome is
    /// bit-identical to the sequential sweep.
    pub fn sweep_parallel(
        &self,
        state: &CoordinationState,
        order: &OrderingSchedule,
    ) -> Result<CoordinationState> {
        self.sweep_inner(state, order, true, true)
    }

    fn sweep_inner(
        &self,
        state: &CoordinationState,
        order: &OrderingSchedule,
        use_b: bool,
        parallel: bool,
    ) -> Result<CoordinationState> {
        if !state.matches(self.lifted) {
            return Err(Error::DimensionMismatch(
                "state does not match the lifted problem".into(),
            ));
        }
        let mut current = state.clone();
        for group in &order.groups {
            let solves: Vec<(usize, (DVector<f64>, DVector<f64>, DVector<f64>))> =
                if parallel && group.len() > 1 {
                    group
                        .par_iter()
                        .map(|&k| Ok((k, self.partition_solve_inner(&current, k, use_b)?)))
                        .collect::<Result<Vec<_>>>()?
                } else {
                    group
                        .iter()
                        .map(|&k| Ok((k, self.partition_solve_inner(&current, k, use_b)?)))
                        .collect::<Result<Vec<_>>>()?
                };
            for (k, (z, nu, lambda)) in solves {
                current.z[k] = z;
                current.nu[k] = nu;
                current.lambda[k] = lambda;
            }
        }
        current.step = state.step + 1;
        Ok(current)
    }
}

// ---------------------------------------------------------------------------
// runs and traces
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct RunParams {
    /// Stop when the step-difference infinity norm drops to this value.
    pub tol: f64,
    pub max_steps: usize,
    /// Solve parallel groups with rayon.
    pub parallel: bool,
}

impl Default for RunParams {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_steps: 200,
            parallel: false,
        }
    }
}

/// One row of an error trace.
#[derive(Debug, Clone, Copy)]
pub struct TracePoint {
    pub step: usize,
    /// Euclidean error of the stacked state, against the oracle when one is
    /// supplied, else against the previous step.
    pub error_w: f64,
    /// Same measure restricted to owned primal coordinates.
    pub error_primal_owned: f64,
}

#[derive(Debug, Clone)]
pub struct GsRun {
    pub state: CoordinationState,
    pub trace: Vec<TracePoint>,
    pub converged: bool,
    pub sweeps: usize,
}

impl<'a> GsEngine<'a> {
    /// Iterate sweeps until the step difference drops below `params.tol` or
    /// `params.max_steps` is reached. When `oracle` (a stacked fixed-point
    /// vector) is given the trace holds true errors, starting at step 0;
    /// otherwise it holds step-difference norms from step 1 on. A run that
    /// exhausts `max_steps` comes back with `converged = false` rather than
    /// an error, so the trace stays available.
    pub fn run(
        &self,
        initial: CoordinationState,
        order: &OrderingSchedule,
        params: &RunParams,
        oracle: Option<&DVector<f64>>,
    ) -> Result<GsRun> {
        if !initial.matches(self.lifted) {
            return Err(Error::DimensionMismatch(
                "initial state does not match the lifted problem".into(),
            ));
        }
        if let Some(w_star) = oracle {
            if w_star.len() != self.layout.total {
                return Err(Error::DimensionMismatch(format!(
                    "oracle has length {}, stacked dimension is {}",
                    w_star.len(),
                    self.layout.total
                )));
            }
        }
        let owned_sel = self.owned_selector();
        let mut trace = Vec::new();
        let mut state = initial;
        let mut w = self.layout.to_w(&state);
        if let Some(w_star) = oracle {
            trace.push(self.error_point(state.step, &w, w_star, &owned_sel));
        }
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < params.max_steps {
            let next = if params.parallel {
                self.sweep_parallel(&state, order)?
            } else {
                self.sweep(&state, order)?
            };
            let w_next = self.layout.to_w(&next);
            let diff = (&w_next - &w).amax();
            sweeps += 1;
            match oracle {
                Some(w_star) => {
                    trace.push(self.error_point(next.step, &w_next, w_star, &owned_sel))
                }
                None => {
                    let delta = &w_next - &w;
                    trace.push(TracePoint {
                        step: next.step,
                        error_w: delta.norm(),
                        error_primal_owned: owned_sel
                            .iter()
                            .map(|&i| delta[i] * delta[i])
                            .sum::<f64>()
                            .sqrt(),
                    });
                }
            }
            state = next;
            w = w_next;
            if diff <= params.tol {
                converged = true;
                break;
            }
        }
        Ok(GsRun {
            state,
            trace,
            converged,
            sweeps,
        })
    }

    fn error_point(
        &self,
        step: usize,
        w: &DVector<f64>,
        w_star: &DVector<f64>,
        owned_sel: &[usize],
    ) -> TracePoint {
        let delta = w - w_star;
        TracePoint {
            step,
            error_w: delta.norm(),
            error_primal_owned: owned_sel
                .iter()
                .map(|&i| delta[i] * delta[i])
                .sum::<f64>()
                .sqrt(),
        }
    }

    fn owned_selector(&self) -> Vec<usize> {
        self.layout.owned_indices(self.lifted)
    }
}

// ---------------------------------------------------------------------------
// iteration operator and certification
// ---------------------------------------------------------------------------

/// The affine sweep map `w -> S w + r` in stacked coordinates.
#[derive(Debug, Clone)]
pub struct IterationOperator {
    pub s: DMatrix<f64>,
    pub r: DVector<f64>,
    pub ordering: OrderingSchedule,
}

impl<'a> GsEngine<'a> {
    /// Apply the linear part of the sweep map, `w -> S w`, without forming
    /// `S`: one sweep with the constant terms zeroed.
    pub fn apply_s(&self, w: &DVector<f64>, order: &OrderingSchedule) -> Result<DVector<f64>> {
        let state = self.layout.from_w(w, 0);
        let swept = self.sweep_inner(&state, order, false, false)?;
        Ok(self.layout.to_w(&swept))
    }

    /// The constant part of the sweep map, `r = sweep(0)`.
    pub fn sweep_offset(&self, order: &OrderingSchedule) -> Result<DVector<f64>> {
        let zero = CoordinationState::zero(self.lifted);
        let swept = self.sweep(&zero, order)?;
        Ok(self.layout.to_w(&swept))
    }
}

/// Assemble `S` and `r` explicitly by probing the sweep map with basis
/// vectors. Fails with [`Error::DimensionCap`] above `cap` (defaulting to
/// [`dense_cap`]); use [`certify`] for the matrix-free path.
pub fn build_iteration_operator(
    engine: &GsEngine<'_>,
    order: &OrderingSchedule,
    cap: Option<usize>,
) -> Result<IterationOperator> {
    order.validate(engine.lifted())?;
    let dim = engine.layout().total;
    let cap = cap.unwrap_or_else(dense_cap);
    if dim > cap {
        return Err(Error::DimensionCap { dim, cap });
    }
    let r = engine.sweep_offset(order)?;
    let mut s = DMatrix::zeros(dim, dim);
    let mut basis = DVector::zeros(dim);
    for j in 0..dim {
        basis[j] = 1.0;
        let col = engine.apply_s(&basis, order)?;
        s.column_mut(j).copy_from(&col);
        basis[j] = 0.0;
    }
    Ok(IterationOperator {
        s,
        r,
        ordering: order.clone(),
    })
}

/// Fixed point `(I - S)^{-1} r` of the sweep map.
pub fn fixed_point(op: &IterationOperator) -> Result<DVector<f64>> {
    let dim = op.s.nrows();
    let system = DMatrix::identity(dim, dim) - &op.s;
    system
        .lu()
        .solve(&op.r)
        .ok_or_else(|| Error::SingularSystem("I - S is singular".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    DenseEig,
    PowerIteration,
}

/// Convergence certificate for a (lifted problem, ordering) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceCertificate {
    pub spectral_radius: f64,
    pub converges: bool,
    pub eigen_method: EigenMethod,
}

impl ConvergenceCertificate {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidProblem(format!("serialization failed: {e}")))
    }
}

/// Certify convergence through the spectral radius of `S`: dense
/// eigendecomposition below the cap, 200-step power iteration on the
/// matrix-free sweep map above it.
pub fn certify(
    engine: &GsEngine<'_>,
    order: &OrderingSchedule,
    cap: Option<usize>,
) -> Result<ConvergenceCertificate> {
    let dim = engine.layout().total;
    let cap = cap.unwrap_or_else(dense_cap);
    let (rho, method) = if dim <= cap {
        let op = build_iteration_operator(engine, order, Some(cap))?;
        let eigen = op.s.complex_eigenvalues();
        let rho = eigen.iter().map(|e| e.norm()).fold(0.0f64, f64::max);
        (rho, EigenMethod::DenseEig)
    } else {
        order.validate(engine.lifted())?;
        (
            power_iteration_radius(engine, order)?,
            EigenMethod::PowerIteration,
        )
    };
    Ok(ConvergenceCertificate {
        spectral_radius: rho,
        converges: rho < 1.0 - 1e-12,
        eigen_method: method,
    })
}

const POWER_MAX_ITERS: usize = 200;
const POWER_WINDOW: usize = 50;
const POWER_SPREAD_TOL: f64 = 1e-6;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Spectral-radius estimate from at most 200 matrix-free applications of the
/// sweep's linear part, without deflation or restarts.
///
/// Plain normalized power iteration stalls on complex dominant pairs, so the
/// iterates are kept orthonormal (Arnoldi) and the estimate at step `j` is
/// the largest Ritz-value modulus of the `j x j` Hessenberg projection. A
/// Krylov breakdown means an exact invariant subspace, so the current
/// estimate is final. The run fails if the trailing estimates still spread
/// wider than [`POWER_SPREAD_TOL`] when the application budget is exhausted.
fn power_iteration_radius(engine: &GsEngine<'_>, order: &OrderingSchedule) -> Result<f64> {
    let dim = engine.layout().total;
    if dim == 0 {
        return Ok(0.0);
    }
    let mut seed = 0x6d67636f6f7264u64 ^ (dim as u64);
    let mut v = DVector::from_fn(dim, |_, _| {
        (splitmix64(&mut seed) as f64 / u64::MAX as f64) - 0.5
    });
    v /= v.norm();

    let max_m = POWER_MAX_ITERS.min(dim);
    let mut basis: Vec<DVector<f64>> = vec![v];
    let mut hess = DMatrix::zeros(max_m + 1, max_m);
    let mut estimates: Vec<f64> = Vec::with_capacity(max_m);
    for j in 0..max_m {
        let mut w = engine.apply_s(&basis[j], order)?;
        for (i, q) in basis.iter().enumerate() {
            let coeff = q.dot(&w);
            hess[(i, j)] = coeff;
            w -= q * coeff;
        }
        // second orthogonalization pass for stability
        for (i, q) in basis.iter().enumerate() {
            let coeff = q.dot(&w);
            hess[(i, j)] += coeff;
            w -= q * coeff;
        }
        let beta = w.norm();
        hess[(j + 1, j)] = beta;

        let block = hess.view((0, 0), (j + 1, j + 1)).into_owned();
        let estimate = block
            .complex_eigenvalues()
            .iter()
            .map(|e| e.norm())
            .fold(0.0f64, f64::max);
        estimates.push(estimate);

        if beta <= 1e-12 {
            // exact invariant subspace
            return Ok(estimate);
        }
        let window = estimates.len().min(POWER_WINDOW);
        if window >= 5 {
            let tail = &estimates[estimates.len() - window..];
            let spread = tail.iter().cloned().fold(f64::MIN, f64::max)
                - tail.iter().cloned().fold(f64::MAX, f64::min);
            if spread <= POWER_SPREAD_TOL {
                return Ok(*estimates.last().unwrap());
            }
        }
        basis.push(w / beta);
    }

    let window = estimates.len().min(POWER_WINDOW);
    let tail = &estimates[estimates.len() - window..];
    let spread = tail.iter().cloned().fold(f64::MIN, f64::max)
        - tail.iter().cloned().fold(f64::MAX, f64::min);
    if spread <= POWER_SPREAD_TOL {
        Ok(*estimates.last().unwrap())
    } else {
        Err(Error::PowerIterationStall {
            spread,
            iterations: POWER_MAX_ITERS,
        })
    }
}

// ---------------------------------------------------------------------------
// oracle construction
// ---------------------------------------------------------------------------

/// Route a fine-space primal/dual solution through the lifting maps into a
/// coordination state: owned coordinates and duplicates from the primal,
/// local-row duals from the stacked constraint duals, and coupling duals from
/// the stationarity identity
/// `lambda_k[r] = cbar[g] - (Qbar z)[g] - (E' nu)[g]` at each duplicate `g`.
pub fn state_from_fine_solution(
    lifted: &LiftedProblem,
    fine_primal: &DVector<f64>,
    fine_duals: &DVector<f64>,
) -> Result<CoordinationState> {
    if !lifted.elementary_coupling {
        return Err(Error::InvalidProblem(
            "fine-solution routing needs elementary coupling rows".into(),
        ));
    }
    if fine_primal.len() != lifted.n_orig {
        return Err(Error::DimensionMismatch(format!(
            "fine primal has length {}, expected {}",
            fine_primal.len(),
            lifted.n_orig
        )));
    }
    if fine_duals.len() != lifted.row_assignment.len() {
        return Err(Error::DimensionMismatch(format!(
            "fine duals have length {}, expected {}",
            fine_duals.len(),
            lifted.row_assignment.len()
        )));
    }
    let mut state = CoordinationState::zero(lifted);
    for (k, part) in lifted.partitions.iter().enumerate() {
        for (loc, &orig) in part.lifted_to_orig.iter().enumerate() {
            state.z[k][loc] = fine_primal[orig];
        }
    }
    for (row, &(k, local)) in lifted.row_assignment.iter().enumerate() {
        state.nu[k][local] = fine_duals[row];
    }
    for (k, part) in lifted.partitions.iter().enumerate() {
        if part.n_coupling() == 0 {
            continue;
        }
        let grad = &part.qbar * &state.z[k] + part.local_a.transpose() * &state.nu[k];
        for r in 0..part.n_coupling() {
            let g = part.owned + r;
            state.lambda[k][r] = part.cbar[g] - grad[g];
        }
    }
    Ok(state)
}

/// Stacked oracle vector `w*` for error traces, built from the fine-space
/// centralized solution.
pub fn oracle_w(
    lifted: &LiftedProblem,
    fine_primal: &DVector<f64>,
    fine_duals: &DVector<f64>,
) -> Result<DVector<f64>> {
    let state = state_from_fine_solution(lifted, fine_primal, fine_duals)?;
    Ok(WLayout::of(lifted).to_w(&state))
}

// ---------------------------------------------------------------------------
// trace export
// ---------------------------------------------------------------------------

/// Render a trace as CSV with columns `step,error_w,error_primal_owned,rho_bound`.
/// `rho_bound` is the reference decay curve `(rho + 0.05)^step * error_w[0]`
/// when a spectral radius is supplied, blank otherwise.
pub fn trace_to_csv(trace: &[TracePoint], rho: Option<f64>) -> String {
    let mut out = String::from("step,error_w,error_primal_owned,rho_bound\n");
    let base = trace.first().map(|t| (t.step, t.error_w));
    for point in trace {
        let bound = match (rho, base) {
            (Some(rho), Some((step0, err0))) => {
                let exponent = (point.step - step0) as f64;
                format!("{:e}", (rho + 0.05).powf(exponent) * err0)
            }
            _ => String::new(),
        };
        out.push_str(&format!(
            "{},{:e},{:e},{}\n",
            point.step, point.error_w, point.error_primal_owned, bound
        ));
    }
    out
}
