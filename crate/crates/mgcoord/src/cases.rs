//! The two benchmark case studies: a temporal storage-control problem over a
//! long horizon and a spatial diffusion (network flow) problem over a 2-D
//! mesh. Both generate a [`CoupledQP`] plus the partitioning and the metadata
//! consumed by ordering and coarsening.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::coarsening::TransferKind;
use crate::error::{Error, Result};
use crate::lifting::Partitioning;
use crate::ordering::PartitionTopology;
use crate::qp::CoupledQP;

/// Everything downstream stages need to know about a generated case.
#[derive(Debug, Clone)]
pub struct CaseMetadata {
    pub name: String,
    /// Sum of |d| over each partition's nodes, for disturbance-based orders.
    pub partition_disturbance_l1: Vec<f64>,
    pub topology: PartitionTopology,
    pub transfer_kind: TransferKind,
}

// ---------------------------------------------------------------------------
// temporal storage control
// ---------------------------------------------------------------------------

/// Horizon of `partitions * points_per_partition` time points with state and
/// control at every point and a two-frequency disturbance:
///
/// ```text
/// min  sum_i x(i)^2 + u(i)^2
/// s.t. x(i+1) = x(i) + delta (u(i+1) + d(i+1)),  x(0) = 0
/// d(i) = a_low sin(2 pi c_low i / N) + a_high sin(2 pi c_high i / N)
/// ```
///
/// `x(0)` is fixed and substituted out; variables are ordered
/// `(x(1), u(1), x(2), u(2), ...)`.
#[derive(Debug, Clone)]
pub struct TemporalCaseSpec {
    pub partitions: usize,
    pub points_per_partition: usize,
    pub delta: f64,
    pub amplitudes: (f64, f64),
    /// Full cycles over the horizon for the low and high component.
    pub cycles: (f64, f64),
}

impl Default for TemporalCaseSpec {
    fn default() -> Self {
        Self {
            partitions: 10,
            points_per_partition: 100,
            delta: 0.1,
            amplitudes: (4.0, 1.0),
            cycles: (2.0, 12.0),
        }
    }
}

impl TemporalCaseSpec {
    pub fn n_points(&self) -> usize {
        self.partitions * self.points_per_partition
    }
}

/// Disturbance at time point `i` (1-based).
pub fn temporal_disturbance(spec: &TemporalCaseSpec, i: usize) -> f64 {
    let n = spec.n_points() as f64;
    let (a_low, a_high) = spec.amplitudes;
    let (c_low, c_high) = spec.cycles;
    let phase = i as f64 / n * std::f64::consts::TAU;
    a_low * (c_low * phase).sin() + a_high * (c_high * phase).sin()
}

pub fn build_temporal(spec: &TemporalCaseSpec) -> Result<(CoupledQP, Partitioning, CaseMetadata)> {
    let k = spec.partitions;
    let m = spec.points_per_partition;
    if k == 0 || m == 0 {
        return Err(Error::InvalidProblem(
            "temporal case needs at least one partition and one point".into(),
        ));
    }
    if spec.delta <= 0.0 {
        return Err(Error::InvalidProblem("mesh step must be positive".into()));
    }
    let n_points = k * m;
    let n_vars = 2 * n_points;
    let delta = spec.delta;

    let mut q = CooMatrix::new(n_vars, n_vars);
    for v in 0..n_vars {
        q.push(v, v, 2.0);
    }

    // Row r encodes x(r+1) - x(r) - delta u(r+1) = delta d(r+1); the r = 0
    // row drops the x(0) term.
    let x_col = |i: usize| 2 * (i - 1);
    let u_col = |i: usize| 2 * (i - 1) + 1;
    let mut a = CooMatrix::new(n_points, n_vars);
    let mut b = CooMatrix::new(n_points, n_points);
    let mut d = DVector::zeros(n_points);
    for r in 0..n_points {
        a.push(r, x_col(r + 1), 1.0);
        if r >= 1 {
            a.push(r, x_col(r), -1.0);
        }
        a.push(r, u_col(r + 1), -delta);
        b.push(r, r, -delta);
        d[r] = temporal_disturbance(spec, r + 1);
    }

    let problem = CoupledQP::new(
        CsrMatrix::from(&q),
        DVector::zeros(n_vars),
        CsrMatrix::from(&a),
        CsrMatrix::from(&b),
        CsrMatrix::from(&CooMatrix::new(0, n_vars)),
        d.clone(),
    )?;

    let assignments: Vec<usize> = (0..n_vars).map(|v| (v / 2) / m).collect();
    let partitioning = Partitioning::new(assignments, k)?;

    let mut l1 = vec![0.0; k];
    for r in 0..n_points {
        l1[r / m] += d[r].abs();
    }
    let metadata = CaseMetadata {
        name: "temporal".into(),
        partition_disturbance_l1: l1,
        topology: PartitionTopology::Chain { k },
        transfer_kind: TransferKind::Temporal {
            partitions: k,
            points_per_partition: m,
        },
    };
    Ok((problem, partitioning, metadata))
}

// ---------------------------------------------------------------------------
// spatial diffusion
// ---------------------------------------------------------------------------

/// Load field: a full-domain sinusoid plus an off-center Gaussian bump. The
/// exact shape is configuration, not a reproduction of any published field.
#[derive(Debug, Clone)]
pub struct LoadField {
    pub sin_amplitude: f64,
    pub gauss_amplitude: f64,
    /// Gaussian center as a fraction of the domain side.
    pub center: (f64, f64),
    /// Gaussian width as a fraction of the domain side.
    pub sigma_fraction: f64,
}

impl Default for LoadField {
    fn default() -> Self {
        Self {
            sin_amplitude: 2.0,
            gauss_amplitude: 3.0,
            center: (2.0 / 3.0, 2.0 / 3.0),
            sigma_fraction: 1.0 / 8.0,
        }
    }
}

/// `grid_partitions^2` partitions of `points_per_side^2` mesh nodes each,
/// diffusive flow balance at every node, zero potential on the boundary:
///
/// ```text
/// min  sum_ij p(i,j)^2 + u(i,j)^2
/// s.t. D (4 p(i,j) - p(i-1,j) - p(i+1,j) - p(i,j-1) - p(i,j+1)) = u(i,j) + d(i,j)
/// ```
///
/// Variables are ordered `(p, u)` per node, nodes row-major.
#[derive(Debug, Clone)]
pub struct SpatialCaseSpec {
    pub grid_partitions: usize,
    pub points_per_side: usize,
    pub diffusion: f64,
    pub load: LoadField,
}

impl Default for SpatialCaseSpec {
    fn default() -> Self {
        Self {
            grid_partitions: 10,
            points_per_side: 10,
            diffusion: 1.0,
            load: LoadField::default(),
        }
    }
}

impl SpatialCaseSpec {
    /// Mesh side length in nodes.
    pub fn side(&self) -> usize {
        self.grid_partitions * self.points_per_side
    }
}

/// Load at mesh node `(i, j)` (1-based, boundary excluded).
pub fn spatial_load(spec: &SpatialCaseSpec, i: usize, j: usize) -> f64 {
    let extent = (spec.side() + 1) as f64;
    let (x, y) = (i as f64, j as f64);
    let sin_part = spec.load.sin_amplitude
        * (std::f64::consts::TAU * x / extent).sin()
        * (std::f64::consts::TAU * y / extent).sin();
    let (cx, cy) = spec.load.center;
    let sigma = spec.load.sigma_fraction * extent;
    let dx = x - cx * extent;
    let dy = y - cy * extent;
    let gauss_part =
        spec.load.gauss_amplitude * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
    sin_part + gauss_part
}

pub fn build_spatial(spec: &SpatialCaseSpec) -> Result<(CoupledQP, Partitioning, CaseMetadata)> {
    let p = spec.grid_partitions;
    let m = spec.points_per_side;
    if p == 0 || m == 0 {
        return Err(Error::InvalidProblem(
            "spatial case needs at least one partition and one point per side".into(),
        ));
    }
    if spec.diffusion <= 0.0 {
        return Err(Error::InvalidProblem(
            "diffusion constant must be positive".into(),
        ));
    }
    let g = spec.side();
    let n_nodes = g * g;
    let n_vars = 2 * n_nodes;
    let diff = spec.diffusion;

    let node = |i: usize, j: usize| (i - 1) * g + (j - 1);
    let p_col = |i: usize, j: usize| 2 * node(i, j);
    let u_col = |i: usize, j: usize| 2 * node(i, j) + 1;

    let mut q = CooMatrix::new(n_vars, n_vars);
    for v in 0..n_vars {
        q.push(v, v, 2.0);
    }
    let mut a = CooMatrix::new(n_nodes, n_vars);
    let mut b = CooMatrix::new(n_nodes, n_nodes);
    let mut d = DVector::zeros(n_nodes);
    for i in 1..=g {
        for j in 1..=g {
            let r = node(i, j);
            a.push(r, p_col(i, j), 4.0 * diff);
            if i > 1 {
                a.push(r, p_col(i - 1, j), -diff);
            }
            if i < g {
                a.push(r, p_col(i + 1, j), -diff);
            }
            if j > 1 {
                a.push(r, p_col(i, j - 1), -diff);
            }
            if j < g {
                a.push(r, p_col(i, j + 1), -diff);
            }
            a.push(r, u_col(i, j), -1.0);
            b.push(r, r, -1.0);
            d[r] = spatial_load(spec, i, j);
        }
    }

    let problem = CoupledQP::new(
        CsrMatrix::from(&q),
        DVector::zeros(n_vars),
        CsrMatrix::from(&a),
        CsrMatrix::from(&b),
        CsrMatrix::from(&CooMatrix::new(0, n_vars)),
        d.clone(),
    )?;

    let assignments: Vec<usize> = (0..n_vars)
        .map(|v| {
            let nd = v / 2;
            let (i, j) = (nd / g + 1, nd % g + 1);
            ((i - 1) / m) * p + (j - 1) / m
        })
        .collect();
    let partitioning = Partitioning::new(assignments, p * p)?;

    let mut l1 = vec![0.0; p * p];
    for i in 1..=g {
        for j in 1..=g {
            l1[((i - 1) / m) * p + (j - 1) / m] += d[node(i, j)].abs();
        }
    }
    let metadata = CaseMetadata {
        name: "spatial".into(),
        partition_disturbance_l1: l1,
        topology: PartitionTopology::Mesh { rows: p, cols: p },
        transfer_kind: TransferKind::Spatial {
            grid_partitions: p,
            points_per_side: m,
        },
    };
    Ok((problem, partitioning, metadata))
}

/// Directed flows out of node `(i, j)` toward its four stencil neighbors,
/// in order east `(i, j+1)`, west `(i, j-1)`, south `(i+1, j)`, north
/// `(i-1, j)`. Off-mesh neighbors sit at zero potential.
pub fn flow_from_potentials(
    potentials: &DMatrix<f64>,
    i: usize,
    j: usize,
    diffusion: f64,
) -> [f64; 4] {
    let g = potentials.nrows();
    let at = |r: isize, c: isize| -> f64 {
        if r < 1 || c < 1 || r > g as isize || c > g as isize {
            0.0
        } else {
            potentials[(r as usize - 1, c as usize - 1)]
        }
    };
    let here = at(i as isize, j as isize);
    [
        diffusion * (here - at(i as isize, j as isize + 1)),
        diffusion * (here - at(i as isize, j as isize - 1)),
        diffusion * (here - at(i as isize + 1, j as isize)),
        diffusion * (here - at(i as isize - 1, j as isize)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordination::{self, CoordinationState, GsEngine, RunParams};
    use crate::lifting::{self, OriginalProblem};
    use crate::ordering;
    use crate::qp::{csr_to_dense, solve_centralized};

    fn toy_temporal(k: usize, m: usize) -> TemporalCaseSpec {
        TemporalCaseSpec {
            partitions: k,
            points_per_partition: m,
            ..TemporalCaseSpec::default()
        }
    }

    #[test]
    fn zero_disturbance_gives_zero_solution() {
        let spec = TemporalCaseSpec {
            amplitudes: (0.0, 0.0),
            ..toy_temporal(2, 3)
        };
        let (problem, _, _) = build_temporal(&spec).unwrap();
        let sol = solve_centralized(&problem).unwrap();
        assert!(sol.primal.amax() < 1e-12);
        assert!(sol.dual.amax() < 1e-12);
    }

    #[test]
    fn default_temporal_dimensions() {
        let spec = TemporalCaseSpec::default();
        let (problem, partitioning, meta) = build_temporal(&spec).unwrap();
        assert_eq!(problem.n_vars(), 2000);
        assert_eq!(problem.m(), 1000);
        assert_eq!(problem.p(), 0);
        assert_eq!(partitioning.k(), 10);
        assert_eq!(partitioning.nodes(0).unwrap().len(), 200);
        assert_eq!(meta.partition_disturbance_l1.len(), 10);
    }

    #[test]
    fn disturbance_formula_values() {
        let spec = TemporalCaseSpec::default();
        let n = spec.n_points();
        assert_eq!(temporal_disturbance(&spec, 0), 0.0);
        // 4 sin(pi/2) + sin(3 pi) = 4 at i = N/8
        assert!((temporal_disturbance(&spec, n / 8) - 4.0).abs() < 1e-12);
        // i = N gives sin(4 pi) + sin(24 pi) = 0
        assert!(temporal_disturbance(&spec, n).abs() < 1e-12);
    }

    #[test]
    fn temporal_dynamics_telescope() {
        let spec = toy_temporal(2, 4);
        let (problem, _, _) = build_temporal(&spec).unwrap();
        let sol = solve_centralized(&problem).unwrap();
        let n = spec.n_points();
        let x_last = sol.primal[2 * (n - 1)];
        let mut accumulated = 0.0;
        for i in 1..=n {
            accumulated += spec.delta * (sol.primal[2 * (i - 1) + 1] + problem.d[i - 1]);
        }
        assert!((x_last - accumulated).abs() < 1e-9);
    }

    #[test]
    fn temporal_interface_structure() {
        let spec = toy_temporal(3, 4);
        let (problem, partitioning, _) = build_temporal(&spec).unwrap();
        let lifted = lifting::lift_explicit(&problem, &partitioning).unwrap();
        // M dynamics rows per partition, one interface tie per later partition
        for (k, part) in lifted.partitions.iter().enumerate() {
            assert_eq!(part.n_local(), 4);
            let expected_ties = usize::from(k > 0);
            assert_eq!(part.n_coupling(), expected_ties);
            if k > 0 {
                // the duplicate is the previous partition's last state
                assert_eq!(part.duplicates(), &[2 * (k * 4 - 1)]);
            }
        }
        let report =
            lifting::verify_lift(OriginalProblem::Explicit(&problem), &lifted, 1e-8).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn temporal_gs_limit_matches_centralized() {
        let spec = toy_temporal(2, 3);
        let (problem, partitioning, _) = build_temporal(&spec).unwrap();
        let lifted = lifting::lift_explicit(&problem, &partitioning).unwrap();
        let engine = GsEngine::new(&lifted).unwrap();
        let order = ordering::lexicographic(2);
        let reference = solve_centralized(&problem).unwrap();
        let w_star = coordination::oracle_w(&lifted, &reference.primal, &reference.dual).unwrap();
        let run = engine
            .run(
                CoordinationState::zero(&lifted),
                &order,
                &RunParams {
                    tol: 1e-11,
                    max_steps: 500,
                    parallel: false,
                },
                Some(&w_star),
            )
            .unwrap();
        assert!(run.converged);
        let owned = lifted.owned_primal(&run.state.z).unwrap();
        assert!((owned - reference.primal).amax() < 1e-7);
    }

    #[test]
    fn zero_load_spatial_solution_is_zero() {
        let spec = SpatialCaseSpec {
            grid_partitions: 2,
            points_per_side: 2,
            load: LoadField {
                sin_amplitude: 0.0,
                gauss_amplitude: 0.0,
                ..LoadField::default()
            },
            ..SpatialCaseSpec::default()
        };
        let (problem, _, _) = build_spatial(&spec).unwrap();
        let sol = solve_centralized(&problem).unwrap();
        assert!(sol.primal.amax() < 1e-12);
    }

    #[test]
    fn default_spatial_dimensions() {
        let spec = SpatialCaseSpec::default();
        let (problem, partitioning, meta) = build_spatial(&spec).unwrap();
        assert_eq!(problem.n_vars(), 20_000);
        assert_eq!(problem.m(), 10_000);
        assert_eq!(partitioning.k(), 100);
        assert_eq!(partitioning.nodes(42).unwrap().len(), 200);
        assert_eq!(meta.partition_disturbance_l1.len(), 100);
    }

    #[test]
    fn spatial_flow_balance_at_solution() {
        let spec = SpatialCaseSpec {
            grid_partitions: 2,
            points_per_side: 3,
            ..SpatialCaseSpec::default()
        };
        let (problem, _, _) = build_spatial(&spec).unwrap();
        let sol = solve_centralized(&problem).unwrap();
        let g = spec.side();
        let potentials = DMatrix::from_fn(g, g, |r, c| sol.primal[2 * (r * g + c)]);
        for i in 1..=g {
            for j in 1..=g {
                let flows = flow_from_potentials(&potentials, i, j, spec.diffusion);
                let total: f64 = flows.iter().sum();
                let u = sol.primal[2 * ((i - 1) * g + (j - 1)) + 1];
                let load = spatial_load(&spec, i, j);
                assert!(
                    (total - u - load).abs() < 1e-9,
                    "imbalance at ({i},{j}): {total} vs {}",
                    u + load
                );
            }
        }
    }

    #[test]
    fn spatial_gs_limit_matches_centralized() {
        let spec = SpatialCaseSpec {
            grid_partitions: 2,
            points_per_side: 3,
            ..SpatialCaseSpec::default()
        };
        let (problem, partitioning, _) = build_spatial(&spec).unwrap();
        let lifted = lifting::lift_explicit(&problem, &partitioning).unwrap();
        let engine = GsEngine::new(&lifted).unwrap();
        let order = ordering::lexicographic(4);
        let reference = solve_centralized(&problem).unwrap();
        let w_star = coordination::oracle_w(&lifted, &reference.primal, &reference.dual).unwrap();
        let run = engine
            .run(
                CoordinationState::zero(&lifted),
                &order,
                &RunParams {
                    tol: 1e-11,
                    max_steps: 500,
                    parallel: false,
                },
                Some(&w_star),
            )
            .unwrap();
        assert!(run.converged);
        let owned = lifted.owned_primal(&run.state.z).unwrap();
        assert!((owned - reference.primal).amax() < 1e-7);
    }

    #[test]
    fn flows_of_flat_and_peaked_fields() {
        let flat = DMatrix::from_element(3, 3, 2.5);
        let inner = flow_from_potentials(&flat, 2, 2, 1.0);
        assert_eq!(inner, [0.0; 4]);

        let mut peak = DMatrix::zeros(3, 3);
        peak[(1, 1)] = 1.0;
        assert_eq!(flow_from_potentials(&peak, 2, 2, 1.0), [1.0; 4]);
    }

    #[test]
    fn gaussian_dominated_partition_ranks_first() {
        let spec = SpatialCaseSpec {
            grid_partitions: 3,
            points_per_side: 4,
            load: LoadField {
                sin_amplitude: 0.2,
                gauss_amplitude: 5.0,
                center: (0.5, 0.5),
                sigma_fraction: 0.08,
            },
            ..SpatialCaseSpec::default()
        };
        let (_, _, meta) = build_spatial(&spec).unwrap();
        let order = ordering::by_disturbance_magnitude(&meta.partition_disturbance_l1).unwrap();
        // center of a 3x3 partition grid is partition 4
        assert_eq!(order.sigma[0], 4);
    }

    #[test]
    fn spatial_q_is_twice_identity() {
        let spec = SpatialCaseSpec {
            grid_partitions: 2,
            points_per_side: 2,
            ..SpatialCaseSpec::default()
        };
        let (problem, _, _) = build_spatial(&spec).unwrap();
        let q = csr_to_dense(&problem.q);
        assert_eq!(q, DMatrix::identity(32, 32) * 2.0);
    }
}
