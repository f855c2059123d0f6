//! Coordination orders: which partition updates when, and which updates may
//! run in parallel.
//!
//! A schedule is a sequence of groups. Groups execute in order; partitions
//! inside one group read only state frozen before the group started, so they
//! may be solved concurrently when no coupling links them. For plain orders
//! every group is a singleton and the schedule is just a permutation. The
//! forward-backward order visits every partition twice per coordination step,
//! so its group sequence is longer than the permutation itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifting::LiftedProblem;

/// Shape of the partition coupling graph, used by structured orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionTopology {
    /// Partitions coupled along a line: `k` couples to `k - 1` and `k + 1`.
    Chain { k: usize },
    /// `rows x cols` grid of partitions coupled to the four grid neighbors.
    Mesh { rows: usize, cols: usize },
}

impl PartitionTopology {
    pub fn partition_count(&self) -> usize {
        match self {
            Self::Chain { k } => *k,
            Self::Mesh { rows, cols } => rows * cols,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderingSchedule {
    pub name: String,
    /// Bijection on `0..k`: the visit permutation underlying the schedule.
    pub sigma: Vec<usize>,
    /// Executed group sequence; concatenation visits every partition at
    /// least once and may repeat partitions (forward-backward).
    pub groups: Vec<Vec<usize>>,
}

impl OrderingSchedule {
    fn from_sequence(name: &str, sigma: Vec<usize>, groups: Vec<Vec<usize>>) -> Self {
        Self {
            name: name.to_string(),
            sigma,
            groups,
        }
    }

    pub fn k(&self) -> usize {
        self.sigma.len()
    }

    /// Partition visit order, groups flattened.
    pub fn visits(&self) -> impl Iterator<Item = usize> + '_ {
        self.groups.iter().flatten().copied()
    }

    /// Check the schedule against a lifted problem: `sigma` bijective, every
    /// partition visited, group members mutually uncoupled.
    pub fn validate(&self, lifted: &LiftedProblem) -> Result<()> {
        let k = lifted.k();
        if self.sigma.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "schedule covers {} partitions, problem has {}",
                self.sigma.len(),
                k
            )));
        }
        let mut seen = vec![false; k];
        for &s in &self.sigma {
            if s >= k || seen[s] {
                return Err(Error::InvalidProblem(format!(
                    "sigma is not a bijection on 0..{}",
                    k
                )));
            }
            seen[s] = true;
        }
        let mut visited = vec![false; k];
        for v in self.visits() {
            if v >= k {
                return Err(Error::UnknownPartition(v));
            }
            visited[v] = true;
        }
        if let Some(missing) = visited.iter().position(|&v| !v) {
            return Err(Error::InvalidProblem(format!(
                "partition {} is never visited",
                missing
            )));
        }
        let coupled = lifted.coupled_pairs();
        for group in &self.groups {
            for (i, &a) in group.iter().enumerate() {
                for &b in &group[i + 1..] {
                    let pair = (a.min(b), a.max(b));
                    if coupled.contains(&pair) {
                        return Err(Error::NotTwoColorable(format!(
                            "partitions {} and {} share a group but are coupled",
                            a, b
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Update order `0, 1, ..., K-1` with singleton groups.
pub fn lexicographic(k: usize) -> OrderingSchedule {
    let sigma: Vec<usize> = (0..k).collect();
    let groups = sigma.iter().map(|&i| vec![i]).collect();
    OrderingSchedule::from_sequence("lexicographic", sigma, groups)
}

/// Update order `K-1, ..., 1, 0` with singleton groups.
pub fn reverse_lexicographic(k: usize) -> OrderingSchedule {
    let sigma: Vec<usize> = (0..k).rev().collect();
    let groups = sigma.iter().map(|&i| vec![i]).collect();
    OrderingSchedule::from_sequence("reverse-lexicographic", sigma, groups)
}

/// Symmetric double sweep `0..K-1` then `K-1..0`, counted as one coordination
/// step. Every partition appears twice in the group sequence.
pub fn forward_backward(k: usize) -> OrderingSchedule {
    let sigma: Vec<usize> = (0..k).collect();
    let mut groups: Vec<Vec<usize>> = (0..k).map(|i| vec![i]).collect();
    groups.extend((0..k).rev().map(|i| vec![i]));
    OrderingSchedule::from_sequence("forward-backward", sigma, groups)
}

/// Two-color order with one parallel group per color.
///
/// On a chain with even `K` this reproduces `sigma(i) = 2i - 1` for the first
/// half and `sigma(i) = 2i - K` for the second (1-based); odd chains still
/// two-color as odds then evens. On a mesh the colors form a checkerboard.
/// The group invariant is checked against the actual coupling blocks.
pub fn red_black(lifted: &LiftedProblem, topology: PartitionTopology) -> Result<OrderingSchedule> {
    let k = lifted.k();
    if topology.partition_count() != k {
        return Err(Error::DimensionMismatch(format!(
            "topology describes {} partitions, problem has {}",
            topology.partition_count(),
            k
        )));
    }
    let (red, black): (Vec<usize>, Vec<usize>) = match topology {
        PartitionTopology::Chain { .. } => {
            ((0..k).step_by(2).collect(), (1..k).step_by(2).collect())
        }
        PartitionTopology::Mesh { rows, cols } => {
            let mut red = Vec::new();
            let mut black = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    if (r + c) % 2 == 0 {
                        red.push(r * cols + c);
                    } else {
                        black.push(r * cols + c);
                    }
                }
            }
            (red, black)
        }
    };
    let mut sigma = red.clone();
    sigma.extend(black.iter().copied());
    let groups: Vec<Vec<usize>> = if black.is_empty() {
        vec![red]
    } else {
        vec![red, black]
    };
    let schedule = OrderingSchedule::from_sequence("red-black", sigma, groups);
    schedule.validate(lifted).map_err(|e| match e {
        Error::NotTwoColorable(msg) => Error::NotTwoColorable(msg),
        other => other,
    })?;
    Ok(schedule)
}

/// Clockwise inward spiral over a `p x p` partition grid, starting at the
/// top-left corner. Partitions are identified row-major.
pub fn spiral(p: usize) -> OrderingSchedule {
    let mut sigma = Vec::with_capacity(p * p);
    let (mut top, mut bottom, mut left, mut right) =
        (0isize, p as isize - 1, 0isize, p as isize - 1);
    while top <= bottom && left <= right {
        for c in left..=right {
            sigma.push((top * p as isize + c) as usize);
        }
        top += 1;
        for r in top..=bottom {
            sigma.push((r * p as isize + right) as usize);
        }
        right -= 1;
        if top <= bottom {
            for c in (left..=right).rev() {
                sigma.push((bottom * p as isize + c) as usize);
            }
            bottom -= 1;
        }
        if left <= right {
            for r in (top..=bottom).rev() {
                sigma.push((r * p as isize + left) as usize);
            }
            left += 1;
        }
    }
    let groups = sigma.iter().map(|&i| vec![i]).collect();
    OrderingSchedule::from_sequence("spiral", sigma, groups)
}

/// Partitions sorted by descending L1 disturbance mass, ties broken by
/// ascending partition index.
pub fn by_disturbance_magnitude(per_partition_l1: &[f64]) -> Result<OrderingSchedule> {
    if per_partition_l1.is_empty() {
        return Err(Error::MissingMetadata(
            "per-partition disturbance magnitudes".into(),
        ));
    }
    let mut sigma: Vec<usize> = (0..per_partition_l1.len()).collect();
    sigma.sort_by(|&a, &b| {
        per_partition_l1[b]
            .partial_cmp(&per_partition_l1[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let groups = sigma.iter().map(|&i| vec![i]).collect();
    Ok(OrderingSchedule::from_sequence(
        "disturbance-magnitude",
        sigma,
        groups,
    ))
}

// ---------------------------------------------------------------------------
// JSON interchange
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ScheduleDoc {
    /// 1-based permutation.
    sigma: Vec<usize>,
    /// 1-based group members.
    groups: Vec<Vec<usize>>,
    #[serde(default)]
    name: String,
}

impl OrderingSchedule {
    pub fn to_json(&self) -> Result<String> {
        let doc = ScheduleDoc {
            sigma: self.sigma.iter().map(|s| s + 1).collect(),
            groups: self
                .groups
                .iter()
                .map(|g| g.iter().map(|s| s + 1).collect())
                .collect(),
            name: self.name.clone(),
        };
        serde_json::to_string_pretty(&doc)
            .map_err(|e| Error::InvalidProblem(format!("serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ScheduleDoc = serde_json::from_str(text)
            .map_err(|e| Error::InvalidProblem(format!("bad schedule document: {e}")))?;
        let dec = |v: usize| {
            v.checked_sub(1)
                .ok_or_else(|| Error::InvalidProblem("schedule indices are 1-based".into()))
        };
        Ok(Self {
            name: if doc.name.is_empty() {
                "custom".into()
            } else {
                doc.name
            },
            sigma: doc.sigma.into_iter().map(dec).collect::<Result<_>>()?,
            groups: doc
                .groups
                .into_iter()
                .map(|g| g.into_iter().map(dec).collect::<Result<_>>())
                .collect::<Result<_>>()?,
        })
    }
}
