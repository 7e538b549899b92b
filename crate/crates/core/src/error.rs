use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or invalid instance/allocation document. `path` is the
    /// offending field (`jobs[2].size`), or `$` for document-level errors.
    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("job {job} is assigned to machine {machine}, which is not in its eligible set")]
    Ineligible { job: usize, machine: usize },

    #[error("job {job} is assigned to machine {machine}, but the instance has {machines} machines")]
    MachineOutOfRange { job: usize, machine: usize, machines: usize },

    #[error("job index {job} out of range (instance has {jobs} jobs)")]
    JobOutOfRange { job: usize, jobs: usize },

    #[error("instance too large for the exact oracle: {machines}^{jobs} assignments exceed the budget of {budget}")]
    OracleTooLarge { machines: usize, jobs: usize, budget: u64 },

    #[error("clustering postcondition violated: {0}")]
    Clustering(String),

    #[error("existence contract violated: {0}")]
    ExistenceViolated(String),

    #[error("search budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("no feasible selection: {0}")]
    NoFeasibleSelection(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("stage `{stage}` failed its postcondition: {detail}")]
    Postcondition { stage: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), message: message.into() }
    }

    pub(crate) fn post(stage: &'static str, detail: impl Into<String>) -> Self {
        Error::Postcondition { stage, detail: detail.into() }
    }
}
