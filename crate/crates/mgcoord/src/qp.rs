//! Convex QP representation, saddle-point KKT solves, and null-space
//! reduction to unconstrained form.
//!
//! The coupled problem is
//!
//! ```text
//! min  1/2 z'Qz - c'z   s.t.  Az + Bd = 0  (nu),   Pi z = 0  (lambda)
//! ```
//!
//! with `Q` positive definite and `[A; Pi]` of full row rank. Matrices are
//! stored sparse so that the large structured case studies fit in memory;
//! the direct solvers densify and are capped at desk scale.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a factorization is declared rank
/// deficient.
pub const RANK_PIVOT_TOL: f64 = 1e-12;

/// Relative residual tolerance for saddle-point solves.
pub const SADDLE_TOL: f64 = 1e-10;

/// Largest dense KKT dimension the direct solvers accept.
pub const DENSE_SOLVE_CAP: usize = 8192;

/// Largest variable count at which constructors run factorization-based
/// validation. Above this, structural checks still run but definiteness and
/// rank are established lazily by the solvers themselves.
const VALIDATE_CAP: usize = 1200;

// ---------------------------------------------------------------------------
// sparse helpers
// ---------------------------------------------------------------------------

pub fn csr_zeros(nrows: usize, ncols: usize) -> CsrMatrix<f64> {
    CsrMatrix::from(&CooMatrix::new(nrows, ncols))
}

pub fn csr_identity(n: usize) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(n, n);
    for i in 0..n {
        coo.push(i, i, 1.0);
    }
    CsrMatrix::from(&coo)
}

pub fn csr_from_dense(m: &DMatrix<f64>) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if v != 0.0 {
                coo.push(i, j, v);
            }
        }
    }
    CsrMatrix::from(&coo)
}

pub fn csr_to_dense(m: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, j, v) in m.triplet_iter() {
        out[(i, j)] += *v;
    }
    out
}

pub fn csr_matvec(m: &CsrMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    debug_assert_eq!(m.ncols(), x.len());
    let mut out = DVector::zeros(m.nrows());
    for (i, j, v) in m.triplet_iter() {
        out[i] += v * x[j];
    }
    out
}

/// Stack two CSR matrices vertically.
pub fn csr_vstack(top: &CsrMatrix<f64>, bottom: &CsrMatrix<f64>) -> CsrMatrix<f64> {
    assert_eq!(top.ncols(), bottom.ncols());
    let mut coo = CooMatrix::new(top.nrows() + bottom.nrows(), top.ncols());
    for (i, j, v) in top.triplet_iter() {
        coo.push(i, j, *v);
    }
    for (i, j, v) in bottom.triplet_iter() {
        coo.push(top.nrows() + i, j, *v);
    }
    CsrMatrix::from(&coo)
}

fn dense_is_symmetric(m: &DMatrix<f64>) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return false;
            }
        }
    }
    true
}

/// Numerical rank from a fully pivoted LU, with pivots compared against the
/// largest pivot at the relative threshold [`RANK_PIVOT_TOL`].
pub fn dense_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let lu = m.clone().full_piv_lu();
    let u = lu.u();
    let k = u.nrows().min(u.ncols());
    let max_pivot = (0..k).map(|i| u[(i, i)].abs()).fold(0.0f64, f64::max);
    if max_pivot == 0.0 {
        return 0;
    }
    (0..k)
        .take_while(|&i| u[(i, i)].abs() > RANK_PIVOT_TOL * max_pivot)
        .count()
}

// ---------------------------------------------------------------------------
// problem types
// ---------------------------------------------------------------------------

/// Full-resolution convex QP with equality constraints and a data vector.
#[derive(Debug, Clone)]
pub struct CoupledQP {
    /// Cost curvature, `n x n`, symmetric positive definite.
    pub q: CsrMatrix<f64>,
    /// Linear cost, length `n`.
    pub c: DVector<f64>,
    /// Constraint matrix of the data-carrying rows, `m x n`.
    pub a: CsrMatrix<f64>,
    /// Data coupling of the constraint rows, `m x n_d`.
    pub b: CsrMatrix<f64>,
    /// Homogeneous coupling rows, `p x n`.
    pub pi: CsrMatrix<f64>,
    /// Exogenous data, length `n_d`.
    pub d: DVector<f64>,
}

impl CoupledQP {
    pub fn new(
        q: CsrMatrix<f64>,
        c: DVector<f64>,
        a: CsrMatrix<f64>,
        b: CsrMatrix<f64>,
        pi: CsrMatrix<f64>,
        d: DVector<f64>,
    ) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "Q must be square, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        if c.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "c has length {}, expected {}",
                c.len(),
                n
            )));
        }
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "A has {} columns, expected {}",
                a.ncols(),
                n
            )));
        }
        if pi.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "Pi has {} columns, expected {}",
                pi.ncols(),
                n
            )));
        }
        if b.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows, expected {} to match A",
                b.nrows(),
                a.nrows()
            )));
        }
        if d.len() != b.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "d has length {}, expected {} to match B",
                d.len(),
                b.ncols()
            )));
        }
        let problem = Self { q, c, a, b, pi, d };
        if n <= VALIDATE_CAP {
            problem.validate_factorizations()?;
        }
        Ok(problem)
    }

    pub fn from_dense(
        q: &DMatrix<f64>,
        c: DVector<f64>,
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        pi: &DMatrix<f64>,
        d: DVector<f64>,
    ) -> Result<Self> {
        Self::new(
            csr_from_dense(q),
            c,
            csr_from_dense(a),
            csr_from_dense(b),
            csr_from_dense(pi),
            d,
        )
    }

    /// An unconstrained problem promoted to the coupled form.
    pub fn from_unconstrained(q: &UnconstrainedQP) -> Self {
        let n = q.n();
        Self {
            q: q.q.clone(),
            c: q.c.clone(),
            a: csr_zeros(0, n),
            b: csr_zeros(0, 0),
            pi: csr_zeros(0, n),
            d: DVector::zeros(0),
        }
    }

    fn validate_factorizations(&self) -> Result<()> {
        let q = csr_to_dense(&self.q);
        if !dense_is_symmetric(&q) {
            return Err(Error::InvalidProblem("Q is not symmetric".into()));
        }
        if q.cholesky().is_none() {
            return Err(Error::InvalidProblem("Q is not positive definite".into()));
        }
        let m = self.m();
        let p = self.p();
        if m + p > 0 {
            let stacked = csr_to_dense(&self.stacked_constraints());
            if dense_rank(&stacked) < m + p {
                return Err(Error::RankDeficient(
                    "[A; Pi] does not have full row rank".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn n_vars(&self) -> usize {
        self.q.nrows()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.pi.nrows()
    }

    /// The stacked constraint matrix `[A; Pi]`.
    pub fn stacked_constraints(&self) -> CsrMatrix<f64> {
        csr_vstack(&self.a, &self.pi)
    }

    /// Right-hand side of the stacked constraints, `[-B d; 0]`.
    pub fn stacked_rhs(&self) -> DVector<f64> {
        let mut rhs = DVector::zeros(self.m() + self.p());
        let bd = csr_matvec(&self.b, &self.d);
        for i in 0..self.m() {
            rhs[i] = -bd[i];
        }
        rhs
    }
}

/// Unconstrained convex QP, `min 1/2 z'Qz - c'z`.
#[derive(Debug, Clone)]
pub struct UnconstrainedQP {
    pub q: CsrMatrix<f64>,
    pub c: DVector<f64>,
}

impl UnconstrainedQP {
    pub fn new(q: CsrMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "Q must be square, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        if c.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "c has length {}, expected {}",
                c.len(),
                n
            )));
        }
        if n <= VALIDATE_CAP {
            let dense = csr_to_dense(&q);
            if !dense_is_symmetric(&dense) {
                return Err(Error::InvalidProblem("Q is not symmetric".into()));
            }
            if dense.cholesky().is_none() {
                return Err(Error::InvalidProblem("Q is not positive definite".into()));
            }
        }
        Ok(Self { q, c })
    }

    pub fn from_dense(q: &DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        Self::new(csr_from_dense(q), c)
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    /// Unique minimizer `Q^{-1} c`.
    pub fn solve(&self) -> Result<DVector<f64>> {
        let sol = solve_saddle(
            &csr_to_dense(&self.q),
            &DMatrix::zeros(0, self.n()),
            &self.c,
            &DVector::zeros(0),
        )?;
        Ok(sol.primal)
    }
}

/// Primal-dual solution of a saddle-point system together with the recomputed
/// KKT residual.
#[derive(Debug, Clone, PartialEq)]
pub struct KKTSolution {
    pub primal: DVector<f64>,
    pub dual: DVector<f64>,
    /// Infinity norm of the KKT residual recomputed from the inputs.
    pub residual_norm: f64,
}

/// Affine change of variables `z = basis * z_tilde + offset`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub basis: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn apply(&self, reduced: &DVector<f64>) -> DVector<f64> {
        &self.basis * reduced + &self.offset
    }
}

// ---------------------------------------------------------------------------
// solvers
// ---------------------------------------------------------------------------

/// Solve the saddle-point system
///
/// ```text
/// [ H  J' ] [x]   [g]
/// [ J  0  ] [y] = [h]
/// ```
///
/// by direct LU factorization with one step of iterative refinement. `H` must
/// be positive definite on the null space of `J` and `J` must have full row
/// rank; violations surface as [`Error::SingularSystem`].
pub fn solve_saddle(
    h: &DMatrix<f64>,
    j: &DMatrix<f64>,
    g: &DVector<f64>,
    rhs: &DVector<f64>,
) -> Result<KKTSolution> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "H must be square, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let mj = j.nrows();
    if mj > 0 && j.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "J has {} columns, expected {}",
            j.ncols(),
            n
        )));
    }
    if g.len() != n || rhs.len() != mj {
        return Err(Error::DimensionMismatch(format!(
            "right-hand sides have lengths ({}, {}), expected ({}, {})",
            g.len(),
            rhs.len(),
            n,
            mj
        )));
    }
    let dim = n + mj;
    if dim > DENSE_SOLVE_CAP {
        return Err(Error::DimensionCap {
            dim,
            cap: DENSE_SOLVE_CAP,
        });
    }

    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(h);
    if mj > 0 {
        kkt.view_mut((n, 0), (mj, n)).copy_from(j);
        kkt.view_mut((0, n), (n, mj)).copy_from(&j.transpose());
    }
    let mut full_rhs = DVector::zeros(dim);
    full_rhs.rows_mut(0, n).copy_from(g);
    if mj > 0 {
        full_rhs.rows_mut(n, mj).copy_from(rhs);
    }

    let lu = kkt.clone().lu();
    let u = lu.u();
    let max_pivot = (0..dim).map(|i| u[(i, i)].abs()).fold(0.0f64, f64::max);
    if dim > 0 && (0..dim).any(|i| u[(i, i)].abs() <= RANK_PIVOT_TOL * max_pivot) {
        return Err(Error::SingularSystem(
            "KKT factorization produced a negligible pivot".into(),
        ));
    }
    let mut x = lu
        .solve(&full_rhs)
        .ok_or_else(|| Error::SingularSystem("KKT factorization failed".into()))?;

    let scale = 1.0 + full_rhs.amax();
    let mut residual = &full_rhs - &kkt * &x;
    if residual.amax() > SADDLE_TOL * scale {
        if let Some(correction) = lu.solve(&residual) {
            x += correction;
            residual = &full_rhs - &kkt * &x;
        }
    }
    let residual_norm = residual.amax();
    if residual_norm > SADDLE_TOL * scale {
        return Err(Error::SingularSystem(format!(
            "KKT residual {:.3e} exceeds tolerance",
            residual_norm
        )));
    }

    Ok(KKTSolution {
        primal: x.rows(0, n).into_owned(),
        dual: x.rows(n, mj).into_owned(),
        residual_norm,
    })
}

/// Solve the coupled QP directly through its KKT system. Serves as the
/// ground-truth oracle for every coordination scheme.
pub fn solve_centralized(p: &CoupledQP) -> Result<KKTSolution> {
    let n = p.n_vars();
    let mp = p.m() + p.p();
    if n + mp > DENSE_SOLVE_CAP {
        return Err(Error::DimensionCap {
            dim: n + mp,
            cap: DENSE_SOLVE_CAP,
        });
    }
    let h = csr_to_dense(&p.q);
    let j = csr_to_dense(&p.stacked_constraints());
    solve_saddle(&h, &j, &p.c, &p.stacked_rhs())
}

/// `true` iff a symmetric factorization with strictly positive pivots
/// succeeds.
pub fn spd_check(m: &DMatrix<f64>) -> bool {
    dense_is_symmetric(m) && m.clone().cholesky().is_some()
}

/// Eliminate the equality constraints of `p` through a null-space basis of
/// `[A; Pi]`, returning the reduced unconstrained QP and the affine map back
/// to the original variables.
///
/// The basis is built in elimination form from a fully pivoted LU: basic
/// variables are expressed in terms of the free ones, so for `z1 + z2 = 0`
/// the basis column is `(-1, 1)` and the reduced curvature of `Q = I` is 2.
pub fn reduce_to_unconstrained(p: &CoupledQP) -> Result<(UnconstrainedQP, AffineMap)> {
    let n = p.n_vars();
    let mp = p.m() + p.p();
    if mp == 0 {
        let map = AffineMap {
            basis: DMatrix::identity(n, n),
            offset: DVector::zeros(n),
        };
        return Ok((UnconstrainedQP::new(p.q.clone(), p.c.clone())?, map));
    }
    if n + mp > DENSE_SOLVE_CAP {
        return Err(Error::DimensionCap {
            dim: n + mp,
            cap: DENSE_SOLVE_CAP,
        });
    }

    let abar = csr_to_dense(&p.stacked_constraints());
    let rhs = p.stacked_rhs();
    let lu = abar.clone().full_piv_lu();
    let u = lu.u();
    let max_pivot = (0..mp.min(n))
        .map(|i| u[(i, i)].abs())
        .fold(0.0f64, f64::max);
    let rank = (0..mp.min(n))
        .take_while(|&i| u[(i, i)].abs() > RANK_PIVOT_TOL * max_pivot)
        .count();
    if rank < mp {
        return Err(Error::RankDeficient(format!(
            "[A; Pi] has rank {} but {} rows",
            rank, mp
        )));
    }

    // With P * Abar * Q = L * U and y = Q^{-1} z, the constraints read
    // U y = L^{-1} P rhs. Split U = [U1 U2] with U1 square upper triangular:
    // free variables y_F parameterize the null space via y_B = -U1^{-1} U2 y_F.
    let u1 = u.view((0, 0), (mp, mp)).into_owned();
    let u2 = u.view((0, mp), (mp, n - mp)).into_owned();
    let neg_u1_inv_u2 = u1
        .solve_upper_triangular(&(-&u2))
        .ok_or_else(|| Error::RankDeficient("upper-triangular solve failed".into()))?;

    let mut basis_y = DMatrix::zeros(n, n - mp);
    basis_y
        .view_mut((0, 0), (mp, n - mp))
        .copy_from(&neg_u1_inv_u2);
    basis_y
        .view_mut((mp, 0), (n - mp, n - mp))
        .copy_from(&DMatrix::identity(n - mp, n - mp));

    // Particular solution with the free variables at zero.
    let mut prhs = rhs.clone();
    lu.p().permute_rows(&mut prhs);
    let l = lu.l();
    let w = l
        .view((0, 0), (mp, mp))
        .into_owned()
        .solve_lower_triangular(&prhs)
        .ok_or_else(|| Error::RankDeficient("lower-triangular solve failed".into()))?;
    let yb = u1
        .solve_upper_triangular(&w)
        .ok_or_else(|| Error::RankDeficient("upper-triangular solve failed".into()))?;
    let mut part_y = DVector::zeros(n);
    part_y.rows_mut(0, mp).copy_from(&yb);

    // Map back through the column permutation.
    let mut basis = basis_y;
    let mut offset = part_y;
    lu.q().inv_permute_rows(&mut basis);
    lu.q().inv_permute_rows(&mut offset);

    let q_dense = csr_to_dense(&p.q);
    let reduced_q = basis.transpose() * &q_dense * &basis;
    let reduced_c = basis.transpose() * (&p.c - &q_dense * &offset);

    let reduced = UnconstrainedQP::new(csr_from_dense(&reduced_q), reduced_c)?;
    Ok((reduced, AffineMap { basis, offset }))
}

// ---------------------------------------------------------------------------
// JSON interchange
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ProblemDoc {
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    c: Vec<f64>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    a: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    b: Option<Vec<Vec<f64>>>,
    #[serde(rename = "Pi", default, skip_serializing_if = "Option::is_none")]
    pi: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<Vec<f64>>,
}

fn rows_to_dense(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let mut m = DMatrix::zeros(nrows, ncols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::DimensionMismatch(format!(
                "{} row {} has {} entries, expected {}",
                what,
                i,
                row.len(),
                ncols
            )));
        }
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

fn dense_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl CoupledQP {
    /// Serialize to the JSON interchange document. Row-major nested arrays;
    /// absent matrices mean zero rows.
    pub fn to_json(&self) -> Result<String> {
        let doc = ProblemDoc {
            q: dense_to_rows(&csr_to_dense(&self.q)),
            c: self.c.iter().copied().collect(),
            a: (self.m() > 0).then(|| dense_to_rows(&csr_to_dense(&self.a))),
            b: (self.m() > 0 && self.b.ncols() > 0).then(|| dense_to_rows(&csr_to_dense(&self.b))),
            pi: (self.p() > 0).then(|| dense_to_rows(&csr_to_dense(&self.pi))),
            d: (self.d.len() > 0).then(|| self.d.iter().copied().collect()),
        };
        serde_json::to_string_pretty(&doc)
            .map_err(|e| Error::InvalidProblem(format!("serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ProblemDoc = serde_json::from_str(text)
            .map_err(|e| Error::InvalidProblem(format!("bad problem document: {e}")))?;
        let n = doc.q.len();
        let q = rows_to_dense(&doc.q, n, "Q")?;
        let c = DVector::from_vec(doc.c);
        let d = DVector::from_vec(doc.d.unwrap_or_default());
        let a = match &doc.a {
            Some(rows) => rows_to_dense(rows, n, "A")?,
            None => DMatrix::zeros(0, n),
        };
        let b = match &doc.b {
            Some(rows) => rows_to_dense(rows, d.len(), "B")?,
            None => DMatrix::zeros(a.nrows(), d.len()),
        };
        let pi = match &doc.pi {
            Some(rows) => rows_to_dense(rows, n, "Pi")?,
            None => DMatrix::zeros(0, n),
        };
        Self::from_dense(&q, c, &a, &b, &pi, d)
    }
}
