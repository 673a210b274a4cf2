use std::fmt;
use std::process::ExitCode;

use tiling_core::io::DocError;
use tiling_core::nn::NnError;
use tiling_core::solve::SolveError;
use tiling_core::tileset::TilesetError;
use tiling_core::train::TrainError;
use tiling_service::ServiceError;

/// Process exit status classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    /// Bad flags, unreadable or malformed input.
    Usage,
    /// A size cap was exceeded.
    Capacity,
    /// An internal invariant was violated.
    Internal,
}

impl Kind {
    pub fn code(self) -> u8 {
        match self {
            Kind::Usage => 1,
            Kind::Capacity => 2,
            Kind::Internal => 3,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> CliError {
        CliError { kind: Kind::Usage, message: message.into() }
    }

    fn new(kind: Kind, e: impl fmt::Display) -> CliError {
        CliError { kind, message: e.to_string() }
    }

    /// Prefixes the message with what was being done.
    pub fn context(mut self, what: impl fmt::Display) -> CliError {
        self.message = format!("{what}: {}", self.message);
        self
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind.code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn tileset_kind(e: &TilesetError) -> Kind {
    match e {
        TilesetError::SupersetTooLarge { .. } => Kind::Capacity,
        TilesetError::NoPrototiles | TilesetError::InvalidPrototile { .. } | TilesetError::InvalidSymmetry(_) => Kind::Usage,
        TilesetError::NotNeighbors | TilesetError::UnknownPose | TilesetError::NotClosedUnderSymmetry(_) => Kind::Internal,
    }
}

fn nn_kind(e: &NnError) -> Kind {
    match e {
        NnError::ConfigMismatch(_) | NnError::WeightFormat(_) | NnError::Io(_) => Kind::Usage,
        NnError::NoTape | NnError::ShapeMismatch(_) | NnError::EmptyGraph => Kind::Internal,
    }
}

impl From<TilesetError> for CliError {
    fn from(e: TilesetError) -> CliError {
        CliError::new(tileset_kind(&e), e)
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> CliError {
        CliError::new(nn_kind(&e), e)
    }
}

impl From<DocError> for CliError {
    fn from(e: DocError) -> CliError {
        let kind = match &e {
            DocError::Tileset(t) => tileset_kind(t),
            DocError::Nn(n) => nn_kind(n),
            DocError::Parse { .. } | DocError::Version { .. } | DocError::Io(_) => Kind::Usage,
        };
        CliError::new(kind, e)
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> CliError {
        let kind = match &e {
            SolveError::TooLargeForExact(..) => Kind::Capacity,
            SolveError::NoCandidates | SolveError::BadCropCount(_) | SolveError::NoRuns => Kind::Usage,
            SolveError::Nn(n) => nn_kind(n),
            SolveError::Graph(_) => Kind::Internal,
        };
        CliError::new(kind, e)
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> CliError {
        let kind = match &e {
            TrainError::Nn(n) => nn_kind(n),
            TrainError::Graph(_) => Kind::Internal,
            _ => Kind::Usage,
        };
        CliError::new(kind, e)
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> CliError {
        match e {
            ServiceError::Document { name, source } => CliError::from(source).context(format!("tile set '{name}'")),
            ServiceError::Tileset { name, source } => CliError::from(source).context(format!("tile set '{name}'")),
            other => CliError::new(Kind::Usage, other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::new(Kind::Usage, e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> CliError {
        CliError::new(Kind::Usage, e)
    }
}
