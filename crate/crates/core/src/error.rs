use alloc::string::String;

use crate::geometry::TaskId;

/// Errors produced by the grouping, learning and evaluation routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty group")]
    EmptyGroup,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite component in semantic vector")]
    NonFinite,
    #[error("zero-norm vector cannot be normalized")]
    ZeroNorm,
    #[error("degenerate prompt: pooled prompt has zero norm")]
    DegeneratePrompt,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("label {0} is not in the dataset class set")]
    UnknownLabel(usize),
    #[error("task {0} is already assigned")]
    AlreadyAssigned(TaskId),
    #[error("task {0} is not assigned")]
    UnknownTask(TaskId),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("k = {k} out of range for {n} points")]
    KOutOfRange { k: usize, n: usize },
    #[error("oracle size bound exceeded: {0} > 8 items")]
    OracleSizeBound(usize),
    #[error("candidate partition does not cover the neighborhood exactly")]
    CoverageMismatch,
    #[error("candidate does not reduce the group count")]
    NotReduced,
    #[error("no repository entry for member set {0:?}")]
    MissingRepositoryEntry(alloc::vec::Vec<TaskId>),
    #[error("empty model set")]
    EmptyModels,
    #[error("no active groups")]
    NoActiveGroups,
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("separation certificate failed after {attempts} attempts")]
    SeparationCertificateFailed { attempts: usize },
    #[error("task {task}: {source}")]
    AtTask {
        task: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn at_task(self, task: usize) -> Error {
        match self {
            e @ Error::AtTask { .. } => e,
            e => Error::AtTask { task, source: alloc::boxed::Box::new(e) },
        }
    }
}
