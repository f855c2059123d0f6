//! Configuration loading and resolution: JSON document plus flag overrides.

use std::fmt;
use std::path::PathBuf;

use serde::Deserialize;

use mgcoord::cases::{
    build_spatial, build_temporal, CaseMetadata, LoadField, SpatialCaseSpec, TemporalCaseSpec,
};
use mgcoord::coarsening::CoarseningSchedule;
use mgcoord::lifting::{LiftedProblem, Partitioning};
use mgcoord::ordering::{self, OrderingSchedule, PartitionTopology};
use mgcoord::qp::CoupledQP;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl From<mgcoord::Error> for CliError {
    fn from(err: mgcoord::Error) -> Self {
        use mgcoord::Error::*;
        match err {
            DimensionMismatch(_)
            | UnknownPartition(_)
            | MissingMetadata(_)
            | InvalidProblem(_)
            | NonDivisor { .. }
            | NotTwoColorable(_)
            | NonSeparableConstraint { .. } => CliError::Config(err.to_string()),
            SingularSystem(_)
            | RankDeficient(_)
            | SingularPartition(_)
            | DimensionCap { .. }
            | PowerIterationStall { .. }
            | InfeasibleCoarse => CliError::Numerical(err.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

// ---------------------------------------------------------------------------
// config document
// ---------------------------------------------------------------------------

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    case: Option<String>,
    /// Problem JSON for the custom case.
    problem_file: Option<PathBuf>,
    /// Contiguous partition count for the custom case.
    partitions: Option<usize>,
    temporal: Option<TemporalDoc>,
    spatial: Option<SpatialDoc>,
    ordering: Option<String>,
    tol: Option<f64>,
    max_steps: Option<usize>,
    seed: Option<u64>,
    warm_start: Option<usize>,
    schedule: Option<ScheduleDoc>,
    variants: Option<Vec<VariantDoc>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TemporalDoc {
    partitions: Option<usize>,
    points_per_partition: Option<usize>,
    delta: Option<f64>,
    amplitudes: Option<(f64, f64)>,
    cycles: Option<(f64, f64)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpatialDoc {
    grid_partitions: Option<usize>,
    points_per_side: Option<usize>,
    diffusion: Option<f64>,
    load: Option<LoadDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadDoc {
    sin_amplitude: Option<f64>,
    gauss_amplitude: Option<f64>,
    center: Option<(f64, f64)>,
    sigma_fraction: Option<f64>,
}

#[derive(Deserialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct ScheduleDoc {
    pub levels: Vec<usize>,
    pub sweeps_per_level: Option<usize>,
}

#[derive(Deserialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct VariantDoc {
    pub name: String,
    pub ordering: Option<String>,
    pub schedule: Option<ScheduleDoc>,
}

// ---------------------------------------------------------------------------
// resolved configuration
// ---------------------------------------------------------------------------

#[derive(Clone)]
pub enum CaseChoice {
    Temporal(TemporalCaseSpec),
    Spatial(SpatialCaseSpec),
    Custom { file: PathBuf, partitions: usize },
}

impl CaseChoice {
    pub fn name(&self) -> &'static str {
        match self {
            CaseChoice::Temporal(_) => "temporal",
            CaseChoice::Spatial(_) => "spatial",
            CaseChoice::Custom { .. } => "custom",
        }
    }
}

#[derive(Clone)]
pub enum VariantRun {
    Ordering(String),
    Schedule(CoarseningSchedule),
}

#[derive(Clone)]
pub struct Variant {
    pub name: String,
    pub run: VariantRun,
}

pub struct Resolved {
    pub case: CaseChoice,
    pub ordering: String,
    pub tol: f64,
    pub max_steps: usize,
    pub seed: u64,
    pub warm_start: Option<usize>,
    pub schedule: Option<CoarseningSchedule>,
    pub variants: Vec<Variant>,
}

fn schedule_from_doc(doc: &ScheduleDoc) -> CoarseningSchedule {
    CoarseningSchedule::new(doc.levels.clone(), doc.sweeps_per_level.unwrap_or(1))
}

fn parse_schedule_flag(text: &str) -> CliResult<CoarseningSchedule> {
    let levels = text
        .split(',')
        .map(|item| {
            item.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Config(format!("bad schedule level '{item}'")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(CoarseningSchedule::new(levels, 1))
}

/// Merge the config file (if any) with command-line overrides.
pub fn resolve(
    args: &crate::CommonArgs,
    warm_start_flag: Option<usize>,
    schedule_flag: Option<&str>,
) -> CliResult<Resolved> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("bad config document: {e}")))?
        }
        None => FileConfig::default(),
    };

    let case_name = args
        .case
        .clone()
        .or(file.case.clone())
        .unwrap_or_else(|| "temporal".to_string());
    let case = match case_name.as_str() {
        "temporal" => {
            let defaults = TemporalCaseSpec::default();
            let doc = file.temporal.as_ref();
            CaseChoice::Temporal(TemporalCaseSpec {
                partitions: doc
                    .and_then(|d| d.partitions)
                    .unwrap_or(defaults.partitions),
                points_per_partition: doc
                    .and_then(|d| d.points_per_partition)
                    .unwrap_or(defaults.points_per_partition),
                delta: doc.and_then(|d| d.delta).unwrap_or(defaults.delta),
                amplitudes: doc
                    .and_then(|d| d.amplitudes)
                    .unwrap_or(defaults.amplitudes),
                cycles: doc.and_then(|d| d.cycles).unwrap_or(defaults.cycles),
            })
        }
        "spatial" => {
            let defaults = SpatialCaseSpec::default();
            let doc = file.spatial.as_ref();
            let load_defaults = LoadField::default();
            let load = doc.and_then(|d| d.load.as_ref());
            CaseChoice::Spatial(SpatialCaseSpec {
                grid_partitions: doc
                    .and_then(|d| d.grid_partitions)
                    .unwrap_or(defaults.grid_partitions),
                points_per_side: doc
                    .and_then(|d| d.points_per_side)
                    .unwrap_or(defaults.points_per_side),
                diffusion: doc.and_then(|d| d.diffusion).unwrap_or(defaults.diffusion),
                load: LoadField {
                    sin_amplitude: load
                        .and_then(|l| l.sin_amplitude)
                        .unwrap_or(load_defaults.sin_amplitude),
                    gauss_amplitude: load
                        .and_then(|l| l.gauss_amplitude)
                        .unwrap_or(load_defaults.gauss_amplitude),
                    center: load.and_then(|l| l.center).unwrap_or(load_defaults.center),
                    sigma_fraction: load
                        .and_then(|l| l.sigma_fraction)
                        .unwrap_or(load_defaults.sigma_fraction),
                },
            })
        }
        "custom" => {
            let fileref = file
                .problem_file
                .clone()
                .ok_or_else(|| CliError::Config("custom case needs a problem_file entry".into()))?;
            CaseChoice::Custom {
                file: fileref,
                partitions: file.partitions.unwrap_or(1),
            }
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown case '{other}' (expected temporal, spatial, or custom)"
            )))
        }
    };

    let schedule = match schedule_flag {
        Some(text) => Some(parse_schedule_flag(text)?),
        None => file.schedule.as_ref().map(schedule_from_doc),
    };
    let variants = file
        .variants
        .unwrap_or_default()
        .into_iter()
        .map(|doc| {
            let run = match (&doc.ordering, &doc.schedule) {
                (Some(name), None) => VariantRun::Ordering(name.clone()),
                (None, Some(sched)) => VariantRun::Schedule(schedule_from_doc(sched)),
                _ => {
                    return Err(CliError::Config(format!(
                        "variant '{}' must set exactly one of ordering or schedule",
                        doc.name
                    )))
                }
            };
            Ok(Variant {
                name: doc.name,
                run,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let tol = args.tol.or(file.tol).unwrap_or(1e-8);
    if tol <= 0.0 {
        return Err(CliError::Config("tol must be positive".into()));
    }
    Ok(Resolved {
        case,
        ordering: args
            .ordering
            .clone()
            .or(file.ordering)
            .unwrap_or_else(|| "lexicographic".to_string()),
        tol,
        max_steps: args.max_steps.or(file.max_steps).unwrap_or(200),
        seed: file.seed.unwrap_or(0),
        warm_start: warm_start_flag.or(file.warm_start),
        schedule,
        variants,
    })
}

// ---------------------------------------------------------------------------
// case loading and ordering resolution
// ---------------------------------------------------------------------------

pub struct LoadedCase {
    pub problem: CoupledQP,
    pub partitioning: Partitioning,
    pub metadata: Option<CaseMetadata>,
}

pub fn load_case(resolved: &Resolved) -> CliResult<LoadedCase> {
    match &resolved.case {
        CaseChoice::Temporal(spec) => {
            let (problem, partitioning, metadata) = build_temporal(spec)?;
            Ok(LoadedCase {
                problem,
                partitioning,
                metadata: Some(metadata),
            })
        }
        CaseChoice::Spatial(spec) => {
            let (problem, partitioning, metadata) = build_spatial(spec)?;
            Ok(LoadedCase {
                problem,
                partitioning,
                metadata: Some(metadata),
            })
        }
        CaseChoice::Custom { file, partitions } => {
            let text = std::fs::read_to_string(file)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", file.display())))?;
            let problem = CoupledQP::from_json(&text)?;
            let partitioning = Partitioning::contiguous(problem.n_vars(), *partitions)?;
            Ok(LoadedCase {
                problem,
                partitioning,
                metadata: None,
            })
        }
    }
}

pub fn resolve_ordering(
    name: &str,
    lifted: &LiftedProblem,
    metadata: Option<&CaseMetadata>,
) -> CliResult<OrderingSchedule> {
    let k = lifted.k();
    let schedule = match name {
        "lexicographic" => ordering::lexicographic(k),
        "reverse-lexicographic" | "reverse" => ordering::reverse_lexicographic(k),
        "forward-backward" => ordering::forward_backward(k),
        "red-black" => {
            let topology = metadata
                .map(|m| m.topology)
                .unwrap_or(PartitionTopology::Chain { k });
            ordering::red_black(lifted, topology)?
        }
        "spiral" => match metadata.map(|m| m.topology) {
            Some(PartitionTopology::Mesh { rows, cols }) if rows == cols => ordering::spiral(rows),
            _ => {
                return Err(CliError::Config(
                    "spiral ordering needs a square partition mesh".into(),
                ))
            }
        },
        "disturbance" | "disturbance-magnitude" => {
            let sums = metadata
                .map(|m| m.partition_disturbance_l1.as_slice())
                .unwrap_or(&[]);
            ordering::by_disturbance_magnitude(sums)?
        }
        other => return Err(CliError::Config(format!("unknown ordering '{other}'"))),
    };
    schedule.validate(lifted)?;
    Ok(schedule)
}
