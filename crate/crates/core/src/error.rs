use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("block size {0} is not a power of two >= 4")]
    BlockSize(usize),

    #[error("refinement of block at level {level} exceeds the maximum level {max_level}")]
    MaxLevelExceeded { level: usize, max_level: usize },

    #[error("mesh structure: {0}")]
    Structure(String),

    #[error(
        "coarse grid solve did not converge: residual {residual:.3e} (initial {initial:.3e}) after {iterations} iterations"
    )]
    CoarseSolve {
        residual: f64,
        initial: f64,
        iterations: usize,
    },

    #[error("point at distance {distance} lies inside the sphere of radius {radius}")]
    OutsideDomainOfSolution { distance: f64, radius: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
