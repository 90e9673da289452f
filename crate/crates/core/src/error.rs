use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("config inconsistency: {0}")]
    Config(String),

    #[error("power flow did not converge after {iterations} iterations (max mismatch {mismatch:.3e} pu)")]
    PowerFlowDiverged { iterations: usize, mismatch: f64 },

    #[error("singular power-flow Jacobian at iteration {0}")]
    SingularJacobian(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("voltage magnitude {v:.3e} pu is below the floor {floor:.1e} pu")]
    VoltageFloor { v: f64, floor: f64 },

    #[error("infeasible operating point: {0}")]
    Infeasible(String),

    #[error("initialization residual {residual:.3e} exceeds tolerance at {component}")]
    InitResidual { residual: f64, component: String },

    #[error("unknown branch {0}")]
    UnknownBranch(String),

    #[error("branch {0} is not in service")]
    BranchOutOfService(String),

    #[error("branch {0} is already in service")]
    BranchInService(String),

    #[error("algebraic singularity: condition estimate of g_y is {condition:.3e}")]
    AlgebraicSingularity { condition: f64 },

    #[error("network solve failed: {0}")]
    NetworkSolve(String),

    #[error("eigensolver did not converge for a {0}x{0} matrix")]
    EigenSolver(usize),

    #[error("residual evaluation failed at a perturbed point: {0}")]
    Perturbation(Box<Error>),

    #[error("transient input not converged")]
    NotConverged,

    #[error("series too short: {0}")]
    SeriesTooShort(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable category used in sweep manifests.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse(_) => "parse",
            Error::Validation(_) => "validation",
            Error::Config(_) => "config",
            Error::PowerFlowDiverged { .. } | Error::SingularJacobian(_) => "power_flow",
            Error::Domain(_) | Error::Range(_) => "domain",
            Error::VoltageFloor { .. } => "voltage_floor",
            Error::Infeasible(_) | Error::InitResidual { .. } => "initialization",
            Error::UnknownBranch(_) | Error::BranchOutOfService(_) | Error::BranchInService(_) => {
                "event"
            }
            Error::AlgebraicSingularity { .. } => "algebraic_singularity",
            Error::NetworkSolve(_) => "network_solve",
            Error::EigenSolver(_) => "eigensolver",
            Error::Perturbation(_) => "jacobian",
            Error::NotConverged | Error::SeriesTooShort(_) => "transient",
            Error::EmptyInput(_) => "empty_input",
            Error::Io(_) => "io",
        }
    }
}
