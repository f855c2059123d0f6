//! Lifting: partition a coupled QP into per-partition quadratic blocks with
//! duplicated interface variables and coupling selector constraints.
//!
//! A variable owned by one partition but referenced by another is duplicated
//! into the referencing partition. Every coupling constraint produced here is
//! an elementary tie `dup - owner = 0`: the selector `Pi_kk` picks the
//! duplicate with a unit row and exactly one `Pi_kk'` carries the matching
//! `-1` on the owner. Cross terms `Q_ij` spanning two partitions are split
//! between the two lifted cost blocks (weight `w` to the lower-indexed
//! partition, `1 - w` to the other, `w = 1/2` by default), which reassembles
//! the original curvature exactly.
//!
//! Coordination machinery consumes the more general block form (arbitrary
//! `Pi_kk'`), so two-partition saddle instances with non-elementary coupling
//! can also be built directly through [`LiftedProblem::general`].

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qp::{self, CoupledQP, UnconstrainedQP};

/// Largest full lifted KKT dimension [`verify_lift`] accepts.
const VERIFY_CAP: usize = 2000;

// ---------------------------------------------------------------------------
// partitioning
// ---------------------------------------------------------------------------

/// Assignment of variable indices `0..n` to partitions `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partitioning {
    assignments: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl Partitioning {
    pub fn new(assignments: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidProblem("need at least one partition".into()));
        }
        let mut members = vec![Vec::new(); k];
        for (node, &part) in assignments.iter().enumerate() {
            if part >= k {
                return Err(Error::UnknownPartition(part));
            }
            members[part].push(node);
        }
        if let Some(empty) = members.iter().position(|m| m.is_empty()) {
            return Err(Error::InvalidProblem(format!(
                "partition {} is empty",
                empty
            )));
        }
        Ok(Self {
            assignments,
            members,
        })
    }

    /// Contiguous blocks, the first `n % k` of them one element longer.
    pub fn contiguous(n: usize, k: usize) -> Result<Self> {
        if k == 0 || n < k {
            return Err(Error::InvalidProblem(format!(
                "cannot split {} nodes into {} partitions",
                n, k
            )));
        }
        let base = n / k;
        let extra = n % k;
        let mut assignments = Vec::with_capacity(n);
        for part in 0..k {
            let len = base + usize::from(part < extra);
            assignments.extend(std::iter::repeat(part).take(len));
        }
        Self::new(assignments, k)
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    pub fn part_of(&self, node: usize) -> usize {
        self.assignments[node]
    }

    /// Member nodes of partition `k`, ascending.
    pub fn nodes(&self, k: usize) -> Result<&[usize]> {
        self.members
            .get(k)
            .map(|v| v.as_slice())
            .ok_or(Error::UnknownPartition(k))
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }
}

// ---------------------------------------------------------------------------
// lifted problem
// ---------------------------------------------------------------------------

/// One partition of a lifted problem.
///
/// Lifted variables are ordered owned-first (ascending original index), then
/// duplicates (ascending original index). `local_a z = local_rhs` carries the
/// partition-internal constraint rows; `pi_self z + sum_k' pi_cross[k'] z_k' = 0`
/// are the coupling rows with duals `lambda_k`.
#[derive(Debug, Clone)]
pub struct LiftedPartition {
    pub qbar: DMatrix<f64>,
    pub cbar: DVector<f64>,
    pub local_a: DMatrix<f64>,
    pub local_rhs: DVector<f64>,
    pub pi_self: DMatrix<f64>,
    pub pi_cross: BTreeMap<usize, DMatrix<f64>>,
    /// Lifted-local index -> original variable index.
    pub lifted_to_orig: Vec<usize>,
    /// Number of owned variables (prefix of `lifted_to_orig`).
    pub owned: usize,
}

impl LiftedPartition {
    pub fn dim(&self) -> usize {
        self.lifted_to_orig.len()
    }

    pub fn n_local(&self) -> usize {
        self.local_a.nrows()
    }

    pub fn n_coupling(&self) -> usize {
        self.pi_self.nrows()
    }

    pub fn duplicates(&self) -> &[usize] {
        &self.lifted_to_orig[self.owned..]
    }
}

#[derive(Debug, Clone)]
pub struct LiftedProblem {
    pub partitions: Vec<LiftedPartition>,
    /// Number of variables of the original problem.
    pub n_orig: usize,
    /// Original variable -> (owning partition, lifted-local index).
    pub owner: Vec<(usize, usize)>,
    /// Original stacked constraint row `[A; Pi]` -> (partition, local row).
    pub row_assignment: Vec<(usize, usize)>,
    /// All coupling rows are elementary duplicate ties.
    pub elementary_coupling: bool,
}

impl LiftedProblem {
    pub fn k(&self) -> usize {
        self.partitions.len()
    }

    /// Build from explicit blocks. Cross-coupling matrices may be arbitrary
    /// here; the elementary-tie flag is set by inspection.
    pub fn general(partitions: Vec<LiftedPartition>, n_orig: usize) -> Result<Self> {
        let k = partitions.len();
        let mut owner = vec![None; n_orig];
        for (ki, part) in partitions.iter().enumerate() {
            let dim = part.dim();
            if part.owned > dim {
                return Err(Error::InvalidProblem(format!(
                    "partition {} owns more variables than its dimension",
                    ki
                )));
            }
            if part.qbar.nrows() != dim || part.qbar.ncols() != dim || part.cbar.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "partition {} cost blocks do not match dimension {}",
                    ki, dim
                )));
            }
            if part.local_a.ncols() != dim && part.local_a.nrows() > 0 {
                return Err(Error::DimensionMismatch(format!(
                    "partition {} local rows have {} columns, expected {}",
                    ki,
                    part.local_a.ncols(),
                    dim
                )));
            }
            if part.local_rhs.len() != part.local_a.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "partition {} local right-hand side length mismatch",
                    ki
                )));
            }
            if part.pi_self.ncols() != dim && part.pi_self.nrows() > 0 {
                return Err(Error::DimensionMismatch(format!(
                    "partition {} selector has {} columns, expected {}",
                    ki,
                    part.pi_self.ncols(),
                    dim
                )));
            }
            for (&other, block) in &part.pi_cross {
                if other == ki || other >= k {
                    return Err(Error::UnknownPartition(other));
                }
                if block.nrows() != part.n_coupling() || block.ncols() != partitions[other].dim() {
                    return Err(Error::DimensionMismatch(format!(
                        "coupling block ({}, {}) has shape {}x{}",
                        ki,
                        other,
                        block.nrows(),
                        block.ncols()
                    )));
                }
            }
            for window in part.lifted_to_orig[..part.owned].windows(2) {
                if window[0] >= window[1] {
                    return Err(Error::InvalidProblem(format!(
                        "partition {} owned indices are not strictly ascending",
                        ki
                    )));
                }
            }
            for (loc, &orig) in part.lifted_to_orig[..part.owned].iter().enumerate() {
                if orig >= n_orig {
                    return Err(Error::InvalidProblem(format!(
                        "partition {} references variable {} outside 0..{}",
                        ki, orig, n_orig
                    )));
                }
                if owner[orig].is_some() {
                    return Err(Error::InvalidProblem(format!(
                        "variable {} is owned by two partitions",
                        orig
                    )));
                }
                owner[orig] = Some((ki, loc));
            }
        }
        let owner = owner
            .into_iter()
            .enumerate()
            .map(|(v, o)| o.ok_or(Error::InvalidProblem(format!("variable {} unowned", v))))
            .collect::<Result<Vec<_>>>()?;
        let elementary = partitions.iter().all(partition_has_elementary_coupling);
        Ok(Self {
            partitions,
            n_orig,
            owner,
            row_assignment: Vec::new(),
            elementary_coupling: elementary,
        })
    }

    /// Pairs of partitions linked by any coupling block, `(low, high)`.
    pub fn coupled_pairs(&self) -> BTreeSet<(usize, usize)> {
        let mut pairs = BTreeSet::new();
        for (k, part) in self.partitions.iter().enumerate() {
            for (&other, block) in &part.pi_cross {
                if block.amax() != 0.0 {
                    pairs.insert((k.min(other), k.max(other)));
                }
            }
        }
        pairs
    }

    /// Gather owned lifted coordinates back into original variable order.
    pub fn owned_primal(&self, zs: &[DVector<f64>]) -> Result<DVector<f64>> {
        if zs.len() != self.k() {
            return Err(Error::DimensionMismatch(format!(
                "{} primal blocks for {} partitions",
                zs.len(),
                self.k()
            )));
        }
        let mut out = DVector::zeros(self.n_orig);
        for (v, &(part, loc)) in self.owner.iter().enumerate() {
            out[v] = zs[part][loc];
        }
        Ok(out)
    }

    /// Total dimension of the stacked per-partition KKT states
    /// `(z_k, nu_k, lambda_k)`.
    pub fn total_state_dim(&self) -> usize {
        self.partitions
            .iter()
            .map(|p| p.dim() + p.n_local() + p.n_coupling())
            .sum()
    }
}

fn partition_has_elementary_coupling(part: &LiftedPartition) -> bool {
    let u = part.n_coupling();
    for r in 0..u {
        let mut self_hits = 0;
        for c in 0..part.dim() {
            let v = part.pi_self[(r, c)];
            if v != 0.0 {
                if v != 1.0 || c != part.owned + r {
                    return false;
                }
                self_hits += 1;
            }
        }
        if self_hits != 1 {
            return false;
        }
        let mut cross_hits = 0;
        for block in part.pi_cross.values() {
            for c in 0..block.ncols() {
                let v = block[(r, c)];
                if v != 0.0 {
                    if v != -1.0 {
                        return false;
                    }
                    cross_hits += 1;
                }
            }
        }
        if cross_hits != 1 {
            return false;
        }
    }
    true
}

// ---------------------------------------------------------------------------
// constructors
// ---------------------------------------------------------------------------

/// Variables outside partition `k` that couple to it through nonzero `Q`
/// entries, ascending.
pub fn coupled_neighbors(q: &UnconstrainedQP, part: &Partitioning, k: usize) -> Result<Vec<usize>> {
    if part.n() != q.n() {
        return Err(Error::DimensionMismatch(format!(
            "partitioning covers {} variables, problem has {}",
            part.n(),
            q.n()
        )));
    }
    let owned = part.nodes(k)?;
    let mut found = BTreeSet::new();
    for &i in owned {
        let row = q.q.row(i);
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            if v != 0.0 && part.part_of(j) != k {
                found.insert(j);
            }
        }
    }
    Ok(found.into_iter().collect())
}

/// Lift an implicitly coupled unconstrained QP with the default `1/2` cross
/// term split.
pub fn build_lifted(q: &UnconstrainedQP, part: &Partitioning) -> Result<LiftedProblem> {
    build_lifted_weighted(q, part, 0.5)
}

/// Lift with cross terms weighted `w` to the lower-indexed partition of each
/// pair and `1 - w` to the other.
pub fn build_lifted_weighted(
    q: &UnconstrainedQP,
    part: &Partitioning,
    w: f64,
) -> Result<LiftedProblem> {
    lift_explicit_weighted(&CoupledQP::from_unconstrained(q), part, w)
}

/// Lift a coupled QP, keeping constraint rows inside partitions.
///
/// Each row of `[A; Pi]` is attributed to the partition owning the strict
/// majority of its referenced variables; foreign references become duplicated
/// ghost variables tied back to their owners by coupling rows. A data-carrying
/// row of `A` with no majority owner is rejected as
/// [`Error::NonSeparableConstraint`]; homogeneous `Pi` rows break ties toward
/// the lowest partition index instead, since they carry no data term.
pub fn lift_explicit(p: &CoupledQP, part: &Partitioning) -> Result<LiftedProblem> {
    lift_explicit_weighted(p, part, 0.5)
}

pub fn lift_explicit_weighted(p: &CoupledQP, part: &Partitioning, w: f64) -> Result<LiftedProblem> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidProblem(format!(
            "cross-term weight {} outside [0, 1]",
            w
        )));
    }
    let n = p.n_vars();
    if part.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "partitioning covers {} variables, problem has {}",
            part.n(),
            n
        )));
    }
    let kparts = part.k();
    let m = p.m();
    let n_rows = m + p.p();

    // Attribute every constraint row to a partition.
    let stacked = p.stacked_constraints();
    let stacked_rhs = p.stacked_rhs();
    let mut row_owner = Vec::with_capacity(n_rows);
    for r in 0..n_rows {
        let row = stacked.row(r);
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            if v != 0.0 {
                *counts.entry(part.part_of(j)).or_insert(0) += 1;
            }
        }
        let best = counts.values().copied().max().unwrap_or(0);
        if best == 0 {
            return Err(Error::NonSeparableConstraint {
                row: r,
                detail: "row references no variables".into(),
            });
        }
        let mut leaders = counts.iter().filter(|(_, &c)| c == best).map(|(&k, _)| k);
        let leader = leaders.next().unwrap();
        if leaders.next().is_some() && r < m {
            return Err(Error::NonSeparableConstraint {
                row: r,
                detail: format!(
                    "A row touches {} partitions with no majority owner",
                    counts.len()
                ),
            });
        }
        row_owner.push(leader);
    }

    // Duplicate sets: Q-coupled foreigners plus foreigners referenced by
    // locally assigned rows.
    let mut dup_sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); kparts];
    for i in 0..n {
        let ki = part.part_of(i);
        let row = p.q.row(i);
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            if v != 0.0 && part.part_of(j) != ki {
                dup_sets[ki].insert(j);
            }
        }
    }
    for r in 0..n_rows {
        let k = row_owner[r];
        let row = stacked.row(r);
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            if v != 0.0 && part.part_of(j) != k {
                dup_sets[k].insert(j);
            }
        }
    }

    // Local index maps.
    let mut lifted_to_orig = Vec::with_capacity(kparts);
    let mut local_of: Vec<BTreeMap<usize, usize>> = Vec::with_capacity(kparts);
    for k in 0..kparts {
        let owned = part.nodes(k)?;
        let mut map = BTreeMap::new();
        let mut order: Vec<usize> = owned.to_vec();
        order.extend(dup_sets[k].iter().copied());
        for (loc, &orig) in order.iter().enumerate() {
            map.insert(orig, loc);
        }
        lifted_to_orig.push(order);
        local_of.push(map);
    }
    let owner: Vec<(usize, usize)> = (0..n)
        .map(|v| {
            let k = part.part_of(v);
            (k, local_of[k][&v])
        })
        .collect();

    // Rows per partition in ascending stacked order.
    let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); kparts];
    let mut row_assignment = vec![(0usize, 0usize); n_rows];
    for r in 0..n_rows {
        let k = row_owner[r];
        row_assignment[r] = (k, rows_of[k].len());
        rows_of[k].push(r);
    }

    let mut partitions = Vec::with_capacity(kparts);
    for k in 0..kparts {
        let order = &lifted_to_orig[k];
        let dim = order.len();
        let owned_count = part.nodes(k)?.len();
        let dups: Vec<usize> = order[owned_count..].to_vec();

        let mut qbar = DMatrix::zeros(dim, dim);
        let mut cbar = DVector::zeros(dim);
        for (loc, &i) in order[..owned_count].iter().enumerate() {
            cbar[loc] = p.c[i];
            let row = p.q.row(i);
            for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                if v == 0.0 {
                    continue;
                }
                let kj = part.part_of(j);
                if kj == k {
                    qbar[(loc, local_of[k][&j])] = v;
                } else {
                    let weight = if k < kj { w } else { 1.0 - w };
                    let jloc = local_of[k][&j];
                    qbar[(loc, jloc)] = weight * v;
                    qbar[(jloc, loc)] = weight * v;
                }
            }
        }

        let mut local_a = DMatrix::zeros(rows_of[k].len(), dim);
        let mut local_rhs = DVector::zeros(rows_of[k].len());
        for (lr, &r) in rows_of[k].iter().enumerate() {
            let row = stacked.row(r);
            for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                if v != 0.0 {
                    local_a[(lr, local_of[k][&j])] = v;
                }
            }
            local_rhs[lr] = stacked_rhs[r];
        }

        let mut pi_self = DMatrix::zeros(dups.len(), dim);
        let mut cross_entries: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for (r, &j) in dups.iter().enumerate() {
            pi_self[(r, owned_count + r)] = 1.0;
            let (ko, oloc) = owner[j];
            cross_entries.entry(ko).or_default().push((r, oloc));
        }
        let mut pi_cross = BTreeMap::new();
        for (ko, entries) in cross_entries {
            let mut block = DMatrix::zeros(dups.len(), lifted_to_orig[ko].len());
            for (r, oloc) in entries {
                block[(r, oloc)] = -1.0;
            }
            pi_cross.insert(ko, block);
        }

        partitions.push(LiftedPartition {
            qbar,
            cbar,
            local_a,
            local_rhs,
            pi_self,
            pi_cross,
            lifted_to_orig: order.clone(),
            owned: owned_count,
        });
    }

    Ok(LiftedProblem {
        partitions,
        n_orig: n,
        owner,
        row_assignment,
        elementary_coupling: true,
    })
}

// ---------------------------------------------------------------------------
// verification
// ---------------------------------------------------------------------------

pub enum OriginalProblem<'a> {
    Reduced(&'a UnconstrainedQP),
    Explicit(&'a CoupledQP),
}

/// Numerical verification that a lifted problem reproduces the original one.
#[derive(Debug, Clone, Serialize)]
pub struct LiftReport {
    /// Max |owned lifted primal - original primal| over original variables.
    pub max_primal_discrepancy: f64,
    /// Max |duplicate - owner value| over all duplicated variables.
    pub max_duplicate_mismatch: f64,
    pub threshold: f64,
    pub pass: bool,
    /// The full lifted KKT system factorized without a negligible pivot.
    pub kkt_nonsingular: bool,
}

/// Solve the original and the lifted problem centrally and compare. This is
/// the numerical stand-in for the uniqueness argument of the lifted form.
pub fn verify_lift(
    original: OriginalProblem<'_>,
    lifted: &LiftedProblem,
    threshold: f64,
) -> Result<LiftReport> {
    let reference = match original {
        OriginalProblem::Reduced(q) => q.solve()?,
        OriginalProblem::Explicit(p) => qp::solve_centralized(p)?.primal,
    };
    if reference.len() != lifted.n_orig {
        return Err(Error::DimensionMismatch(format!(
            "original problem has {} variables, lifted problem expects {}",
            reference.len(),
            lifted.n_orig
        )));
    }
    let solution = solve_lifted_central(lifted)?;

    let mut max_primal: f64 = 0.0;
    for (v, &(k, loc)) in lifted.owner.iter().enumerate() {
        max_primal = max_primal.max((solution.z[k][loc] - reference[v]).abs());
    }
    let mut max_dup: f64 = 0.0;
    for (k, part) in lifted.partitions.iter().enumerate() {
        for (r, &j) in part.duplicates().iter().enumerate() {
            let (ko, oloc) = lifted.owner[j];
            max_dup = max_dup.max((solution.z[k][part.owned + r] - solution.z[ko][oloc]).abs());
        }
    }

    Ok(LiftReport {
        max_primal_discrepancy: max_primal,
        max_duplicate_mismatch: max_dup,
        threshold,
        pass: max_primal <= threshold && max_dup <= threshold,
        kkt_nonsingular: solution.nonsingular,
    })
}

pub(crate) struct LiftedCentralSolution {
    pub z: Vec<DVector<f64>>,
    #[allow(dead_code)]
    pub nu: Vec<DVector<f64>>,
    #[allow(dead_code)]
    pub lambda: Vec<DVector<f64>>,
    pub nonsingular: bool,
}

/// Assemble and solve the full lifted KKT system in one shot.
pub(crate) fn solve_lifted_central(lifted: &LiftedProblem) -> Result<LiftedCentralSolution> {
    let dim = lifted.total_state_dim();
    if dim > VERIFY_CAP {
        return Err(Error::DimensionCap {
            dim,
            cap: VERIFY_CAP,
        });
    }

    // Offsets of (z_k, nu_k, lambda_k) inside the stacked system.
    let k = lifted.k();
    let mut z_off = vec![0usize; k];
    let mut nu_off = vec![0usize; k];
    let mut la_off = vec![0usize; k];
    let mut cursor = 0usize;
    for (i, part) in lifted.partitions.iter().enumerate() {
        z_off[i] = cursor;
        cursor += part.dim();
        nu_off[i] = cursor;
        cursor += part.n_local();
        la_off[i] = cursor;
        cursor += part.n_coupling();
    }

    let mut kkt = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for (i, part) in lifted.partitions.iter().enumerate() {
        let d = part.dim();
        kkt.view_mut((z_off[i], z_off[i]), (d, d))
            .copy_from(&part.qbar);
        rhs.rows_mut(z_off[i], d).copy_from(&part.cbar);
        if part.n_local() > 0 {
            kkt.view_mut((nu_off[i], z_off[i]), (part.n_local(), d))
                .copy_from(&part.local_a);
            kkt.view_mut((z_off[i], nu_off[i]), (d, part.n_local()))
                .copy_from(&part.local_a.transpose());
            rhs.rows_mut(nu_off[i], part.n_local())
                .copy_from(&part.local_rhs);
        }
        if part.n_coupling() > 0 {
            kkt.view_mut((la_off[i], z_off[i]), (part.n_coupling(), d))
                .copy_from(&part.pi_self);
            kkt.view_mut((z_off[i], la_off[i]), (d, part.n_coupling()))
                .copy_from(&part.pi_self.transpose());
            for (&other, block) in &part.pi_cross {
                let od = lifted.partitions[other].dim();
                kkt.view_mut((la_off[i], z_off[other]), (part.n_coupling(), od))
                    .copy_from(block);
                kkt.view_mut((z_off[other], la_off[i]), (od, part.n_coupling()))
                    .copy_from(&block.transpose());
            }
        }
    }

    let lu = kkt.clone().lu();
    let u = lu.u();
    let max_pivot = (0..dim).map(|i| u[(i, i)].abs()).fold(0.0f64, f64::max);
    let nonsingular =
        dim == 0 || (0..dim).all(|i| u[(i, i)].abs() > qp::RANK_PIVOT_TOL * max_pivot);
    if !nonsingular {
        return Err(Error::SingularSystem(
            "lifted KKT system is numerically singular".into(),
        ));
    }
    let mut x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("lifted KKT factorization failed".into()))?;
    let residual = &rhs - &kkt * &x;
    if residual.amax() > qp::SADDLE_TOL * (1.0 + rhs.amax()) {
        if let Some(correction) = lu.solve(&residual) {
            x += correction;
        }
    }

    let mut z = Vec::with_capacity(k);
    let mut nu = Vec::with_capacity(k);
    let mut lambda = Vec::with_capacity(k);
    for (i, part) in lifted.partitions.iter().enumerate() {
        z.push(x.rows(z_off[i], part.dim()).into_owned());
        nu.push(x.rows(nu_off[i], part.n_local()).into_owned());
        lambda.push(x.rows(la_off[i], part.n_coupling()).into_owned());
    }
    Ok(LiftedCentralSolution {
        z,
        nu,
        lambda,
        nonsingular,
    })
}

/// Max defect of the cross-term reassembly: embedding every lifted cost block
/// back into the original variable space (duplicates to their owners) must
/// reproduce `Q` entry for entry.
pub fn reassembly_defect(q: &UnconstrainedQP, lifted: &LiftedProblem) -> Result<f64> {
    let n = q.n();
    if lifted.n_orig != n {
        return Err(Error::DimensionMismatch(format!(
            "lifted problem covers {} variables, Q has {}",
            lifted.n_orig, n
        )));
    }
    let mut sum = DMatrix::zeros(n, n);
    for part in &lifted.partitions {
        for a in 0..part.dim() {
            for b in 0..part.dim() {
                let v = part.qbar[(a, b)];
                if v != 0.0 {
                    sum[(part.lifted_to_orig[a], part.lifted_to_orig[b])] += v;
                }
            }
        }
    }
    let dense_q = qp::csr_to_dense(&q.q);
    Ok((sum - dense_q).amax())
}

// ---------------------------------------------------------------------------
// JSON interchange
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct LiftedPartitionDoc {
    qbar: Vec<Vec<f64>>,
    cbar: Vec<f64>,
    local_a: Vec<Vec<f64>>,
    local_rhs: Vec<f64>,
    pi_self: Vec<Vec<f64>>,
    /// 1-based partner partition plus dense block.
    pi_cross: Vec<(usize, Vec<Vec<f64>>)>,
    /// 1-based original variable indices.
    lifted_to_orig: Vec<usize>,
    owned: usize,
}

#[derive(Serialize, Deserialize)]
struct LiftedProblemDoc {
    n_orig: usize,
    partitions: Vec<LiftedPartitionDoc>,
    /// 1-based (partition, local row) per original stacked constraint row.
    row_assignment: Vec<(usize, usize)>,
}

fn dense_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn rows_to_dense(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(rows.len(), ncols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::DimensionMismatch(format!(
                "row {} has {} entries, expected {}",
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

impl LiftedProblem {
    pub fn to_json(&self) -> Result<String> {
        let doc = LiftedProblemDoc {
            n_orig: self.n_orig,
            partitions: self
                .partitions
                .iter()
                .map(|p| LiftedPartitionDoc {
                    qbar: dense_to_rows(&p.qbar),
                    cbar: p.cbar.iter().copied().collect(),
                    local_a: dense_to_rows(&p.local_a),
                    local_rhs: p.local_rhs.iter().copied().collect(),
                    pi_self: dense_to_rows(&p.pi_self),
                    pi_cross: p
                        .pi_cross
                        .iter()
                        .map(|(k, b)| (k + 1, dense_to_rows(b)))
                        .collect(),
                    lifted_to_orig: p.lifted_to_orig.iter().map(|v| v + 1).collect(),
                    owned: p.owned,
                })
                .collect(),
            row_assignment: self
                .row_assignment
                .iter()
                .map(|&(k, r)| (k + 1, r + 1))
                .collect(),
        };
        serde_json::to_string_pretty(&doc)
            .map_err(|e| Error::InvalidProblem(format!("serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: LiftedProblemDoc = serde_json::from_str(text)
            .map_err(|e| Error::InvalidProblem(format!("bad lifted document: {e}")))?;
        let dims: Vec<usize> = doc
            .partitions
            .iter()
            .map(|p| p.lifted_to_orig.len())
            .collect();
        let partitions = doc
            .partitions
            .into_iter()
            .enumerate()
            .map(|(ki, p)| {
                let dim = dims[ki];
                let mut pi_cross = BTreeMap::new();
                for (partner, rows) in &p.pi_cross {
                    if *partner == 0 || *partner > dims.len() {
                        return Err(Error::UnknownPartition(*partner));
                    }
                    pi_cross.insert(*partner - 1, rows_to_dense(rows, dims[*partner - 1])?);
                }
                Ok(LiftedPartition {
                    qbar: rows_to_dense(&p.qbar, dim)?,
                    cbar: DVector::from_vec(p.cbar),
                    local_a: rows_to_dense(&p.local_a, dim)?,
                    local_rhs: DVector::from_vec(p.local_rhs),
                    pi_self: rows_to_dense(&p.pi_self, dim)?,
                    pi_cross,
                    lifted_to_orig: p
                        .lifted_to_orig
                        .iter()
                        .map(|v| {
                            v.checked_sub(1).ok_or_else(|| {
                                Error::InvalidProblem("variable indices are 1-based".into())
                            })
                        })
                        .collect::<Result<Vec<_>>>()?,
                    owned: p.owned,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let n_orig = doc.n_orig;
        let mut lifted = Self::general(partitions, n_orig)?;
        lifted.row_assignment = doc
            .row_assignment
            .iter()
            .map(|&(k, r)| (k - 1, r - 1))
            .collect();
        Ok(lifted)
    }
}
