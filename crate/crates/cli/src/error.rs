use std::fmt;

use rt_pmcmc::diagnostics::DiagnosticsError;
use rt_pmcmc::phylo::PhyloError;
use rt_pmcmc::pmmh::PmmhError;
use rt_pmcmc::simulate::SimError;
use rt_pmcmc::smc::SmcError;
use rt_pmcmc::tune::TuneError;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Io,
    Usage,
    Parse,
    Infeasible,
    DegenerateInit,
    TuningFailed,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Io => 1,
            Kind::Usage => 2,
            Kind::Parse => 3,
            Kind::Infeasible => 4,
            Kind::DegenerateInit => 5,
            Kind::TuningFailed => 6,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub error: anyhow::Error,
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn new(kind: Kind, error: impl Into<anyhow::Error>) -> Self {
        CliError { kind, error: error.into() }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        CliError::new(Kind::Usage, anyhow::anyhow!("{msg}"))
    }

    pub fn parse(msg: impl fmt::Display) -> Self {
        CliError::new(Kind::Parse, anyhow::anyhow!("{msg}"))
    }

    pub fn with_context(mut self, what: impl fmt::Display) -> Self {
        self.error = self.error.context(what.to_string());
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

/// Attach context to any error while keeping its class.
pub trait Context<T> {
    fn context_kind(self, kind: Kind, what: impl fmt::Display) -> Result<T>;
}

impl<T, E: Into<anyhow::Error>> Context<T> for std::result::Result<T, E> {
    fn context_kind(self, kind: Kind, what: impl fmt::Display) -> Result<T> {
        self.map_err(|e| CliError::new(kind, e.into().context(what.to_string())))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(Kind::Io, e)
    }
}

impl From<PhyloError> for CliError {
    fn from(e: PhyloError) -> Self {
        let kind = match e {
            PhyloError::Parse { .. } | PhyloError::UnsupportedTopology { .. } | PhyloError::InvalidTree(_) => Kind::Parse,
            _ => Kind::Usage,
        };
        CliError::new(kind, e)
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        let kind = match e {
            SimError::InvalidSpec(_) => Kind::Usage,
            SimError::InfeasibleSampling { .. } | SimError::ScenarioInfeasible { .. } => Kind::Infeasible,
        };
        CliError::new(kind, e)
    }
}

impl From<SmcError> for CliError {
    fn from(e: SmcError) -> Self {
        CliError::new(Kind::Usage, e)
    }
}

impl From<PmmhError> for CliError {
    fn from(e: PmmhError) -> Self {
        let kind = match e {
            PmmhError::DegenerateInitialization(_) => Kind::DegenerateInit,
            PmmhError::InvalidConfig(_) | PmmhError::Smc(_) => Kind::Usage,
        };
        CliError::new(kind, e)
    }
}

impl From<TuneError> for CliError {
    fn from(e: TuneError) -> Self {
        match e {
            TuneError::AllRepeatsDegenerate => CliError::new(Kind::TuningFailed, e),
            TuneError::InvalidSpec(_) => CliError::new(Kind::Usage, e),
            TuneError::Pmmh(inner) => {
                let mut err = CliError::from(inner);
                if err.kind == Kind::DegenerateInit {
                    err.kind = Kind::TuningFailed;
                }
                err
            }
        }
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        CliError::new(Kind::Usage, e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        let kind = if e.is_io_error() { Kind::Io } else { Kind::Parse };
        CliError::new(kind, e)
    }
}
