//! Shared generators for randomized integration tests. Everything is seeded,
//! so reruns are reproducible.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mgcoord::cases::{build_temporal, TemporalCaseSpec};
use mgcoord::lifting::Partitioning;
use mgcoord::qp::{CoupledQP, UnconstrainedQP};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Strictly diagonally dominant symmetric chain curvature: nearest-neighbor
/// coupling with random strengths.
pub fn random_chain_q(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(n, n);
    let offs: Vec<f64> = (0..n.saturating_sub(1))
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    for i in 0..n {
        let mut row_sum = 0.0;
        if i > 0 {
            row_sum += offs[i - 1].abs();
        }
        if i + 1 < n {
            row_sum += offs[i].abs();
        }
        q[(i, i)] = 2.0 * row_sum + 1.0 + rng.random_range(0.0..2.0);
        if i + 1 < n {
            q[(i, i + 1)] = offs[i];
            q[(i + 1, i)] = offs[i];
        }
    }
    q
}

/// Five-point-stencil curvature on a `side x side` mesh with random coupling.
pub fn random_mesh_q(rng: &mut ChaCha8Rng, side: usize) -> DMatrix<f64> {
    let n = side * side;
    let mut q = DMatrix::zeros(n, n);
    let idx = |r: usize, c: usize| r * side + c;
    for r in 0..side {
        for c in 0..side {
            if c + 1 < side {
                let v = rng.random_range(-0.9..0.9);
                q[(idx(r, c), idx(r, c + 1))] = v;
                q[(idx(r, c + 1), idx(r, c))] = v;
            }
            if r + 1 < side {
                let v = rng.random_range(-0.9..0.9);
                q[(idx(r, c), idx(r + 1, c))] = v;
                q[(idx(r + 1, c), idx(r, c))] = v;
            }
        }
    }
    for i in 0..n {
        let row_sum: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| f64::abs(q[(i, j)]))
            .sum();
        q[(i, i)] = 2.0 * row_sum + 0.5 + rng.random_range(0.0..1.5);
    }
    q
}

pub fn random_cost(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0))
}

/// Contiguous partitioning with random interior cut points.
pub fn random_partitioning(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Partitioning {
    assert!(n >= k);
    let mut cuts: Vec<usize> = Vec::new();
    while cuts.len() < k - 1 {
        let cut = rng.random_range(1..n);
        if !cuts.contains(&cut) {
            cuts.push(cut);
        }
    }
    cuts.sort_unstable();
    cuts.push(n);
    let mut assignments = Vec::with_capacity(n);
    let mut part = 0;
    for i in 0..n {
        if i >= cuts[part] {
            part += 1;
        }
        assignments.push(part);
    }
    Partitioning::new(assignments, k).unwrap()
}

pub struct RandomInstance {
    pub problem: CoupledQP,
    pub partitioning: Partitioning,
    /// For instances generated from an implicit (unconstrained) QP. Not every
    /// test binary touches this field.
    #[allow(dead_code)]
    pub unconstrained: Option<UnconstrainedQP>,
}

/// A randomized instance: implicit chain or mesh curvature, or a small
/// randomized temporal planning problem with explicit constraints.
pub fn random_instance(rng: &mut ChaCha8Rng, index: usize) -> RandomInstance {
    let k = [2usize, 3, 5][index % 3];
    match index % 4 {
        0 | 1 => {
            let n = rng.random_range((k.max(3) * 3)..=60);
            let q = random_chain_q(rng, n);
            let c = random_cost(rng, n);
            let unconstrained = UnconstrainedQP::from_dense(&q, c).unwrap();
            RandomInstance {
                problem: CoupledQP::from_unconstrained(&unconstrained),
                partitioning: random_partitioning(rng, n, k),
                unconstrained: Some(unconstrained),
            }
        }
        2 => {
            let side = rng.random_range(4..=7);
            let n = side * side;
            let q = random_mesh_q(rng, side);
            let c = random_cost(rng, n);
            let unconstrained = UnconstrainedQP::from_dense(&q, c).unwrap();
            RandomInstance {
                problem: CoupledQP::from_unconstrained(&unconstrained),
                partitioning: random_partitioning(rng, n, k),
                unconstrained: Some(unconstrained),
            }
        }
        _ => {
            let spec = TemporalCaseSpec {
                partitions: k,
                points_per_partition: rng.random_range(3..=12),
                delta: rng.random_range(0.05..0.5),
                amplitudes: (rng.random_range(0.5..5.0), rng.random_range(0.1..2.0)),
                cycles: (rng.random_range(1.0..3.0), rng.random_range(6.0..14.0)),
            };
            let (problem, partitioning, _) = build_temporal(&spec).unwrap();
            RandomInstance {
                problem,
                partitioning,
                unconstrained: None,
            }
        }
    }
}
